#include "hybwave/inversion.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace hybwave;

namespace {

DomainLayout<2> coarse2() {
  return build_layout<2>(Box<2>{{-1.2, -0.6}, {1.2, 0.6}}, Box<2>{{-0.8, -0.4}, {0.8, 0.4}}, 0.1);
}

InverseProblem<2> problem(const DomainLayout<2>& L, const CoefficientField& truth, double gamma) {
  InverseProblem<2> P;
  P.layout = &L;
  P.pulse = SourcePulse(10.0);
  P.tau = 0.02;
  P.T = 2.0;
  P.cutoff = CutoffWeight(2.0, 0.2);
  P.gamma = gamma;
  P.data = solve_forward(L, truth, P.pulse, P.tau, P.T).observations;
  return P;
}

CoefficientField block(const DomainLayout<2>& L, double value) {
  CoefficientField a(L.mesh.num_cells(), 1.0);
  for (std::size_t c = 0; c < a.size(); ++c) {
    const auto x = L.mesh.centroid(c);
    if (std::abs(x[0]) < 0.25 && std::abs(x[1]) < 0.15) a[c] = value;
  }
  return a;
}

}  // namespace

TEST(Cutoff, PlateauRampAndTail) {
  CutoffWeight z(3.0, 0.3);
  EXPECT_EQ(z(0.0), 1.0);
  EXPECT_EQ(z(2.4), 1.0);
  EXPECT_NEAR(z(2.55), 0.5, 1e-14);
  EXPECT_EQ(z(2.7), 0.0);
  EXPECT_EQ(z(3.0), 0.0);
  double prev = 1.0;
  for (double t = 2.4; t <= 2.7; t += 0.01) {
    EXPECT_LE(z(t), prev + 1e-15);
    prev = z(t);
  }
  EXPECT_THROW(CutoffWeight(1.0, 0.6), Error);
  EXPECT_EQ(CutoffWeight(1.0, 0.0)(1.0), 1.0);
}

TEST(Tikhonov, ExactDataAtPriorIsZero) {
  auto L = coarse2();
  CoefficientField a(L.mesh.num_cells(), 1.0);
  Eigen::MatrixXd u = Eigen::MatrixXd::Random(11, L.observation_nodes.size());
  auto v = tikhonov(L, u, u, a, 1.0, 0.01, CutoffWeight(1.0, 0.1), 0.1);
  EXPECT_EQ(v.total(), 0.0);
}

TEST(Tikhonov, GammaZeroLeavesMisfitOnly) {
  auto L = coarse2();
  CoefficientField a(L.mesh.num_cells(), 3.0);
  const long n = static_cast<long>(L.observation_nodes.size());
  Eigen::MatrixXd u = Eigen::MatrixXd::Zero(3, n), d = Eigen::MatrixXd::Constant(3, n, 2.0);
  auto v0 = tikhonov(L, u, d, a, 1.0, 0.0, CutoffWeight(10.0, 0.0), 0.5);
  EXPECT_EQ(v0.regularization, 0.0);
  // 1/2 * (0.5 + 1 + 0.5) * 0.5 * 4 * |front face| with |front face| = 1.2
  EXPECT_NEAR(v0.misfit, 0.5 * 2.0 * 0.5 * 4.0 * 1.2, 1e-12);
  auto v1 = tikhonov(L, u, d, a, 1.0, 0.01, CutoffWeight(10.0, 0.0), 0.5);
  // gamma/2 * (3 - 1)^2 * |fem box| = 0.005 * 4 * 1.6 * 0.8
  EXPECT_NEAR(v1.regularization, 0.005 * 4.0 * 1.28, 1e-12);
  EXPECT_EQ(v1.misfit, v0.misfit);
}

TEST(Tikhonov, MisalignedTracesRejected) {
  auto L = coarse2();
  CoefficientField a(L.mesh.num_cells(), 1.0);
  Eigen::MatrixXd u = Eigen::MatrixXd::Zero(3, 2), d = Eigen::MatrixXd::Zero(4, 2);
  EXPECT_THROW(tikhonov(L, u, d, a, 1.0, 0.0, CutoffWeight(), 0.1), TraceMismatchError);
}

TEST(Gradient, RegularisationOnlyWhenLambdaVanishes) {
  auto L = coarse2();
  CoefficientField a(L.mesh.num_cells(), 1.0);
  for (std::size_t c = 0; c < a.size(); ++c) a[c] = 1.0 + 0.01 * double(c % 7);
  Eigen::VectorXd zero = Eigen::VectorXd::Zero(a.values.size());
  auto g = gradient(L, zero, a, 1.0, 0.01);
  for (std::size_t c = 0; c < a.size(); ++c) {
    if (L.overlap_element[c]) {
      EXPECT_EQ(g[c], 0.0);
    } else {
      EXPECT_NEAR(g[c], 0.01 * (a[c] - 1.0), 1e-16);
    }
  }
  CoefficientField prior(L.mesh.num_cells(), 1.0);
  EXPECT_EQ(gradient(L, zero, prior, 1.0, 0.01).cwiseAbs().maxCoeff(), 0.0);
}

// Central differences of the discrete functional against the adjoint
// gradient on randomly picked cells.
TEST(Gradient, AgreesWithFiniteDifferences) {
  auto L = coarse2();
  auto P = problem(L, block(L, 3.0), 0.01);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> U(0.0, 0.5);
  CoefficientField a(L.mesh.num_cells(), 1.0);
  std::vector<std::size_t> free;
  for (std::size_t c = 0; c < a.size(); ++c)
    if (!L.overlap_element[c]) {
      a[c] = 1.0 + U(rng);
      free.push_back(c);
    }
  const auto ev = evaluate(P, a, true);
  const auto vol = cell_volumes(L.mesh);
  for (int t = 0; t < 10; ++t) {
    const std::size_t c = free[rng() % free.size()];
    const double eps = 1e-4;
    auto ap = a, am = a;
    ap[c] += eps;
    am[c] -= eps;
    const double fd = (evaluate(P, ap, false).value.total() - evaluate(P, am, false).value.total()) / (2 * eps);
    const double ad = vol[c] * ev.gradient[c];
    EXPECT_NEAR(ad, fd, 1e-3 * std::abs(fd) + 1e-14) << "cell " << c;
  }
}

TEST(Cg, FirstDirectionIsSteepestDescent) {
  InverseState s;
  Eigen::VectorXd g(3), vol = Eigen::VectorXd::Ones(3);
  g << 1.0, -2.0, 0.5;
  cg_direction(s, g, vol);
  EXPECT_EQ(s.d, -g);
  EXPECT_EQ(s.beta, 0.0);
  EXPECT_FALSE(s.restarted);
}

TEST(Cg, EqualNormsGiveBetaOne) {
  InverseState s;
  Eigen::VectorXd g(2), vol = Eigen::VectorXd::Ones(2);
  g << 1.0, 0.0;
  cg_direction(s, g, vol);
  s.m = 1;
  Eigen::VectorXd g2(2);
  g2 << 0.0, 1.0;  // same norm, orthogonal, so -g2 + d stays a descent direction
  const Eigen::VectorXd d_old = s.d;
  cg_direction(s, g2, vol);
  EXPECT_DOUBLE_EQ(s.beta, 1.0);
  EXPECT_EQ(s.d, -g2 + d_old);
}

TEST(Cg, ZeroPreviousGradientRestarts) {
  InverseState s;
  s.m = 2;
  s.g = Eigen::VectorXd::Zero(2);
  s.d = Eigen::VectorXd::Ones(2);
  Eigen::VectorXd g(2), vol = Eigen::VectorXd::Ones(2);
  g << 0.3, 0.4;
  cg_direction(s, g, vol);
  EXPECT_TRUE(s.restarted);
  EXPECT_EQ(s.beta, 0.0);
  EXPECT_EQ(s.d, -g);
  EXPECT_NEAR(s.grad_norm, 0.5, 1e-15);
}

TEST(Projection, ClampsIntoBounds) {
  CoefficientField a(3, 1.0);
  a[0] = 6.0;
  a[1] = 0.5;
  a[2] = 3.2;
  auto p = project_admissible(a, {false, false, false});
  EXPECT_EQ(p[0], 5.0);
  EXPECT_EQ(p[1], 1.0);
  EXPECT_EQ(p[2], 3.2);
  a[2] = 4.0;
  EXPECT_EQ(project_admissible(a, {false, false, true})[2], 1.0);
}

TEST(Projection, InteriorValuesInBoundsUnchanged) {
  auto L = coarse2();
  CoefficientField a(L.mesh.num_cells(), 1.0);
  for (std::size_t c = 0; c < a.size(); ++c)
    if (!L.overlap_element[c]) a[c] = 1.0 + 4.0 * double(c % 11) / 10.0;
  EXPECT_EQ(project_admissible(L, a).values, a.values);
}

TEST(Stopping, Rules) {
  EXPECT_EQ(stopping_check({1e-7}, 1e-6), StopReason::gradient_small);
  EXPECT_EQ(stopping_check({1.0, 0.999, 0.9995, 0.9993}, 1e-6), StopReason::stabilized);
  std::vector<double> n{1.0};
  for (int i = 0; i < 10; ++i) {
    n.push_back(0.9 * n.back());
    EXPECT_EQ(stopping_check(n, 1e-6), StopReason::none);
  }
  EXPECT_EQ(stopping_check({}, 1e-6), StopReason::none);
}

TEST(Postprocess, ThresholdAtSixTenths) {
  CoefficientField a(3, 1.0);
  a[0] = 5.0;
  a[1] = 2.0;
  a[2] = 3.5;
  auto p = postprocess(a);
  EXPECT_EQ(p[0], 5.0);
  EXPECT_EQ(p[1], 1.0);
  EXPECT_EQ(p[2], 3.5);
  CoefficientField u(4, 2.5);
  EXPECT_EQ(postprocess(u).values, u.values);
  CoefficientField ones(4, 1.0);
  EXPECT_EQ(postprocess(ones).values, ones.values);
}

TEST(Reconstruct, ExactPriorDataStopsImmediately) {
  auto L = coarse2();
  CoefficientField a0(L.mesh.num_cells(), 1.0);
  auto P = problem(L, a0, 0.01);
  auto rep = reconstruct(P, a0);
  EXPECT_EQ(rep.iterations, 0);
  EXPECT_EQ(rep.reason, StopReason::gradient_small);
  EXPECT_EQ(rep.history.front().grad_norm, 0.0);
}

TEST(Reconstruct, HugeThetaStopsAtFirstIterate) {
  auto L = coarse2();
  auto P = problem(L, block(L, 3.0), 0.01);
  ReconstructOptions ro;
  ro.theta = 1e300;
  auto rep = reconstruct(P, CoefficientField(L.mesh.num_cells(), 1.0), ro);
  EXPECT_EQ(rep.iterations, 0);
  EXPECT_EQ(rep.reason, StopReason::gradient_small);
}

TEST(Reconstruct, ObjectiveDecreasesAndStaysAdmissible) {
  auto L = coarse2();
  auto P = problem(L, block(L, 3.0), 1e-5);
  ReconstructOptions ro;
  ro.max_iterations = 4;
  auto rep = reconstruct(P, CoefficientField(L.mesh.num_cells(), 1.0), ro);
  ASSERT_GE(rep.history.size(), 2u);
  for (std::size_t m = 1; m < rep.history.size(); ++m) {
    EXPECT_LT(rep.history[m].objective, rep.history[m - 1].objective);
    const auto& a = rep.history[m].a;
    EXPECT_GE(a.values.minCoeff(), 1.0);
    EXPECT_LE(a.max(), 5.0);
    for (std::size_t c = 0; c < a.size(); ++c)
      if (L.overlap_element[c]) {
        EXPECT_EQ(a[c], 1.0);
      }
  }
  EXPECT_GT(rep.final_a.max(), 1.0);
}
