#include "hybwave/coupling.hpp"
#include "hybwave/diagnostics.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace hybwave;

namespace {

DomainLayout<2> closed2() {
  return build_layout<2>(Box<2>{{-1.0, -0.6}, {1.0, 0.6}}, Box<2>{{-0.6, -0.4}, {0.6, 0.4}}, 0.05);
}

// Gaussian bump at rest, pulse off; energy sampled every level.
std::vector<EnergySample> run_energy(const DomainLayout<2>& L, const CoefficientField& a, double tau, double T,
                                     const BoundarySpec& bc, bool allow = false) {
  InitialData<2> init;
  init.f0 = [](const Point<2>& x) { return std::exp(-40.0 * (x[0] * x[0] + x[1] * x[1])); };
  ForwardOptions<2> fo;
  fo.store_mesh_levels = false;
  fo.boundary = bc;
  fo.allow_cfl_violation = allow;
  std::vector<EnergySample> trace;
  fo.on_level = [&](const HybridSolver<2>& s, long, double t) {
    trace.push_back(hybrid_energy(L, s.operators().geometry, a, s.grid_curr(), s.grid_prev(), tau, t, &bc));
  };
  try {
    solve_forward(L, a, SourcePulse(40.0, false), tau, T, init, fo);
  } catch (const InstabilityError&) {
    trace.push_back(EnergySample{0.0, std::numeric_limits<double>::infinity(), 0.0, 0.0});
  }
  return trace;
}

CoefficientField bumpy(const DomainLayout<2>& L) {
  CoefficientField a(L.mesh.num_cells(), 1.0);
  for (std::size_t c = 0; c < a.size(); ++c)
    if (!L.overlap_element[c]) a[c] = 1.0 + 1.5 * (1.0 + std::sin(3.0 * double(c)));
  return a;
}

}  // namespace

TEST(Cfl, UnitCoefficient) { EXPECT_NEAR(cfl_max_timestep(0.1, 1.0), 0.1 / std::sqrt(3.0), 1e-15); }

TEST(Cfl, DefaultRunBound) {
  EXPECT_NEAR(cfl_max_timestep(0.1, 5.0), 0.1 / std::sqrt(15.0), 1e-12);
  EXPECT_NEAR(cfl_max_timestep<3>(Point<3>{0.1, 0.1, 0.1}, 5.0), 0.025819888974716, 1e-12);
  EXPECT_LT(0.006, cfl_max_timestep(0.1, 5.0));
}

TEST(Cfl, ReducedModeKeepsTwoTerms) {
  EXPECT_NEAR(cfl_max_timestep<2>(Point<2>{1.0, 1.0}, 1.0), 1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(cfl_max_timestep<2>(Point<2>{1.0, 1.0}, 1.0), cfl_max_timestep(1.0, 1.0, 2), 1e-15);
}

TEST(Cfl, RejectsNonPositiveInput) {
  EXPECT_THROW(cfl_max_timestep(0.0, 1.0), Error);
  EXPECT_THROW(cfl_max_timestep(0.1, 0.0), Error);
}

TEST(Energy, ZeroFieldIsZero) {
  StructuredGrid<2> g({0.0, 0.0}, {0.1, 0.1}, {6, 7});
  Eigen::VectorXd z = Eigen::VectorXd::Zero(g.size());
  auto e = grid_energy(g, z, z, 0.01);
  EXPECT_EQ(e.total(), 0.0);
}

TEST(Energy, StaticLinearFieldIsItsDirichletIntegral) {
  auto L = closed2();
  for (double av : {1.0, 2.5}) {
    CoefficientField a(L.mesh.num_cells(), av);
    auto ops = assemble_operators(L.mesh, a);
    Eigen::VectorXd u(L.mesh.num_vertices());
    for (std::size_t v = 0; v < L.mesh.num_vertices(); ++v) u[v] = L.mesh.vertices[v][0];
    auto e = fem_energy(ops, u, u, 0.01);
    EXPECT_EQ(e.kinetic, 0.0);
    EXPECT_NEAR(e.potential, av * 1.2 * 0.8, 1e-12);
  }
}

TEST(Energy, LosslessBoxConserves) {
  auto L = closed2();
  auto a = bumpy(L);
  const double tau = 0.4 * cfl_max_timestep<2>(L.grid.spacing(), a.max());
  auto trace = run_energy(L, a, tau, 1.5, BoundarySpec::uniform(2, FaceCondition::neumann));
  EXPECT_GT(trace.front().total(), 0.0);
  auto chk = energy_bound_check(trace, EnergyMode::lossless, 1e-8);
  EXPECT_TRUE(chk.pass) << "worst drift " << chk.worst << " at step " << chk.worst_step;
  for (const auto& e : trace) {
    EXPECT_GE(e.kinetic, 0.0);
    EXPECT_GE(e.potential, 0.0);
  }
}

TEST(Energy, AbsorbingBoxDoesNotGain) {
  auto L = closed2();
  auto a = bumpy(L);
  const double tau = 0.4 * cfl_max_timestep<2>(L.grid.spacing(), a.max());
  auto trace = run_energy(L, a, tau, 3.0, BoundarySpec::uniform(2, FaceCondition::absorbing));
  auto chk = energy_bound_check(trace, EnergyMode::lossy, 1e-12);
  EXPECT_TRUE(chk.pass) << "worst gain " << chk.worst << " at step " << chk.worst_step;
  EXPECT_LT(trace.back().total(), 0.2 * trace.front().total());
}

TEST(Energy, CflViolationBlowsUp) {
  auto L = closed2();
  CoefficientField a(L.mesh.num_cells(), 1.0);
  const double tau = 1.05 * cfl_max_timestep<2>(L.grid.spacing(), 1.0);
  auto trace = run_energy(L, a, tau, 200 * tau, BoundarySpec::uniform(2, FaceCondition::neumann), true);
  const long k = energy_blowup_step(trace);
  EXPECT_GE(k, 0);
  EXPECT_LE(k, 200);
  EXPECT_FALSE(energy_bound_check(trace, EnergyMode::lossless, 1e-8).pass);
}

TEST(Energy, BoundCheckModes) {
  std::vector<EnergySample> flat{{0.0, 1.0, 1.0, 0.0}, {0.1, 1.2, 0.8, 0.0}, {0.2, 0.5, 1.5, 0.0}};
  EXPECT_TRUE(energy_bound_check(flat, EnergyMode::lossless, 1e-12).pass);
  std::vector<EnergySample> up{{0.0, 1.0, 0.0, 0.0}, {0.1, 0.9, 0.0, 0.0}, {0.2, 0.95, 0.0, 0.0}};
  auto c = energy_bound_check(up, EnergyMode::lossy, 1e-3);
  EXPECT_FALSE(c.pass);
  EXPECT_EQ(c.worst_step, 2);
  EXPECT_NEAR(c.worst, 0.05, 1e-12);
  EXPECT_TRUE(energy_bound_check(up, EnergyMode::envelope, 1.0, {1.0, 1.0, 1.0}).pass);
  EXPECT_THROW(energy_bound_check(up, EnergyMode::envelope, 1.0, {1.0}), Error);
}

TEST(Energy, ZeroTraceBlowupNeverFires) {
  std::vector<EnergySample> z(5);
  EXPECT_TRUE(energy_bound_check(z, EnergyMode::lossless, 1e-8).pass);
  EXPECT_EQ(energy_blowup_step(z), -1);
}

TEST(Energy, AbsorbingTermOnlyOnAbsorbingFaces) {
  StructuredGrid<2> g({0.0, 0.0}, {0.1, 0.1}, {5, 5});
  Eigen::VectorXd u = Eigen::VectorXd::Zero(g.size()), p = u;
  u[g.index({0, 2})] = 1.0;  // front face, jump 1 to its inward neighbour
  const auto none = BoundarySpec::uniform(2, FaceCondition::neumann);
  EXPECT_EQ(absorbing_energy_term(g, none, u, p, 0.05, 0.0), 0.0);
  const auto all = BoundarySpec::uniform(2, FaceCondition::absorbing);
  // w = h^2 / h^2 = 1, rho = 0.5: -(0 + 0.125 * 1)
  EXPECT_NEAR(absorbing_energy_term(g, all, u, p, 0.05, 0.0), -0.125, 1e-15);
}
