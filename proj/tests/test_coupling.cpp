#include "hybwave/coupling.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace hybwave;

namespace {

Box<3> box3(double x, double y, double z) { return Box<3>{{-x, -y, -z}, {x, y, z}}; }

DomainLayout<3> small3() { return build_layout<3>(box3(1.2, 0.5, 0.5), box3(0.8, 0.3, 0.3), 0.1); }

DomainLayout<2> small2() {
  return build_layout<2>(Box<2>{{-1.0, -0.6}, {1.0, 0.6}}, Box<2>{{-0.6, -0.4}, {0.6, 0.4}}, 0.05);
}

}  // namespace

TEST(Hybrid, MatchesMonolithicForUnitCoefficient) {
  auto L = small3();
  CoefficientField a(L.mesh.num_cells(), 1.0);
  SourcePulse p(20.0);
  ForwardOptions<3> h, m;
  h.store_grid_levels = m.store_grid_levels = true;
  m.mode = SolverMode::monolithic;
  auto th = solve_forward(L, a, p, 0.01, 1.5, {}, h);
  auto tm = solve_forward(L, a, p, 0.01, 1.5, {}, m);
  ASSERT_EQ(th.grid_levels.size(), tm.grid_levels.size());
  double diff = 0.0, peak = 0.0;
  for (std::size_t k = 0; k < th.grid_levels.size(); ++k) {
    diff = std::max(diff, (th.grid_levels[k] - tm.grid_levels[k]).cwiseAbs().maxCoeff());
    peak = std::max(peak, tm.grid_levels[k].cwiseAbs().maxCoeff());
  }
  EXPECT_GT(peak, 1e-3);
  EXPECT_LE(diff, 1e-10);
}

TEST(Hybrid, ZeroDataStaysZero) {
  auto L = small3();
  CoefficientField a(L.mesh.num_cells(), 1.0);
  SourcePulse off(40.0, false);
  auto tr = solve_forward(L, a, off, 0.01, 0.5);
  EXPECT_EQ(tr.observations.cwiseAbs().maxCoeff(), 0.0);
  for (const auto& v : tr.mesh_levels) EXPECT_EQ(v.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Hybrid, ExchangeNodesAgreeAfterEveryStep) {
  auto L = small3();
  CoefficientField a(L.mesh.num_cells(), 1.0);
  for (std::size_t c = 0; c < a.size(); ++c)
    if (!L.overlap_element[c]) a[c] = 2.0 + std::sin(double(c));
  ForwardOptions<3> fo;
  int checked = 0;
  fo.on_level = [&](const HybridSolver<3>& s, long, double) {
    EXPECT_TRUE(s.exchange_consistent());
    ++checked;
  };
  solve_forward(L, a, SourcePulse(20.0), 0.01, 0.8, {}, fo);
  EXPECT_EQ(checked, 81);
}

TEST(Hybrid, DefaultRunLengthAndStability) {
  auto L = build_layout<3>(box3(3.4, 0.8, 0.8), box3(3.2, 0.6, 0.6), 0.1);
  CoefficientField a(L.mesh.num_cells(), 1.0);
  ForwardOptions<3> fo;
  fo.store_mesh_levels = false;
  auto tr = solve_forward(L, a, SourcePulse(40.0), 0.006, 3.0, {}, fo);
  EXPECT_EQ(tr.steps, 500);
  EXPECT_EQ(tr.observations.rows(), 501);
  EXPECT_TRUE(tr.observations.allFinite());
  EXPECT_GT(tr.observations.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Hybrid, CflViolationRefused) {
  auto L = small3();
  CoefficientField a(L.mesh.num_cells(), 1.0);
  EXPECT_THROW(solve_forward(L, a, SourcePulse(20.0), 0.06, 1.0), CflError);
}

TEST(Hybrid, GaussianInitialData) {
  auto d = gaussian_initial_data<3>();
  EXPECT_DOUBLE_EQ(d.f0({0.0, 0.0, 0.0}), 1.0);
  EXPECT_DOUBLE_EQ(d.f0({0.5, 0.0, -0.5}), std::exp(-0.5));
  auto lit = gaussian_initial_data<3>(true);
  EXPECT_DOUBLE_EQ(lit.f0({0.5, 0.0, -0.5}), std::exp(-(0.25 - 0.125)));
  EXPECT_FALSE(d.f1);
}

TEST(Adjoint, ZeroSourcesGiveZero) {
  auto L = small2();
  CoefficientField a(L.mesh.num_cells(), 1.0);
  Eigen::MatrixXd loads = Eigen::MatrixXd::Zero(51, L.observation_nodes.size());
  AdjointOptions<2> ao;
  ao.store_grid_levels = true;
  auto r = solve_adjoint(L, a, loads, 0.01, 0.3, ao);
  for (const auto& v : r.grid_levels) EXPECT_EQ(v.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Adjoint, TerminalLevelsVanish) {
  auto L = small2();
  CoefficientField a(L.mesh.num_cells(), 1.0);
  Eigen::MatrixXd loads = Eigen::MatrixXd::Ones(51, L.observation_nodes.size());
  loads.row(50).setZero();
  AdjointOptions<2> ao;
  ao.store_grid_levels = true;
  auto r = solve_adjoint(L, a, loads, 0.01, 0.3, ao);
  EXPECT_EQ(r.grid_levels[50].cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(r.grid_levels[49].cwiseAbs().maxCoeff(), 0.0);
  EXPECT_GT(r.grid_levels[48].cwiseAbs().maxCoeff(), 0.0);
}

TEST(Adjoint, BackwardLightCone) {
  auto L = small2();
  CoefficientField a(L.mesh.num_cells(), 1.0);
  const double tau = 0.02;
  const long N = 60, ks = 50;
  Eigen::MatrixXd loads = Eigen::MatrixXd::Zero(N + 1, L.observation_nodes.size());
  const std::size_t j = L.observation_nodes.size() / 2;
  loads(ks, j) = 1.0;
  AdjointOptions<2> ao;
  ao.store_grid_levels = true;
  auto r = solve_adjoint(L, a, loads, tau, 0.3, ao);
  // The load enters at the interior partner of the observation node at
  // level ks - 1; each explicit step widens the support by one stencil arm
  // and boundary copies add one more node.
  const auto src = L.grid.multi(L.grid.clamped_interior(L.grid.multi(L.observation_nodes[j])));
  long outside = 0, inside = 0;
  for (long k = 0; k <= N; ++k) {
    for (std::size_t i = 0; i < L.grid.size(); ++i) {
      if (r.grid_levels[k][i] == 0.0) continue;
      const auto m = L.grid.multi(i);
      long dist = 0;
      for (int d = 0; d < 2; ++d) dist += std::abs(long(m[d]) - long(src[d]));
      const long slack = L.grid.on_boundary(m) ? 1 : 0;  // corners copy a diagonal partner
      if (k >= ks || dist > ks - k + slack) {
        ++outside;
      } else {
        ++inside;
      }
    }
  }
  EXPECT_EQ(outside, 0);
  EXPECT_GT(inside, 0);
}

TEST(Adjoint, ObservationWeightsIntegrateTheFace) {
  auto L = build_layout<3>(box3(3.4, 0.8, 0.8), box3(3.2, 0.6, 0.6), 0.1);
  EXPECT_NEAR(observation_weights(L).sum(), 1.6 * 1.6, 1e-12);
  auto L1 = build_layout<1>(Box<1>{{0.0}, {10.0}}, Box<1>{{3.0}, {7.0}}, 1.0);
  EXPECT_EQ(observation_weights(L1).sum(), 1.0);
}
