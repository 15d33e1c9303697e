#include "hybwave/synthesis.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

using namespace hybwave;

namespace {

DomainLayout<2> small2(double h = 0.05) {
  return build_layout<2>(Box<2>{{-1.0, -0.6}, {1.0, 0.6}}, Box<2>{{-0.6, -0.4}, {0.6, 0.4}}, h);
}

ScattererSpec<2> one_ball(double r = 0.2) {
  ScattererSpec<2> s;
  s.inclusions.push_back(Inclusion<2>::ball({0.0, 0.0}, r));
  return s;
}

}  // namespace

TEST(Pulse, DefaultValues) {
  SourcePulse p(40.0);
  EXPECT_EQ(p(0.0), 0.0);
  EXPECT_NEAR(p(std::numbers::pi / 80.0), 1.0, 1e-15);
  EXPECT_EQ(p(0.2), 0.0);
  EXPECT_NEAR(p.duration(), 0.15707963267948966, 1e-15);
  EXPECT_EQ(SourcePulse(40.0, false)(std::numbers::pi / 80.0), 0.0);
  EXPECT_THROW(SourcePulse(0.0), Error);
}

TEST(Paint, EmptySpecIsBackground) {
  auto L = small2();
  auto a = paint_coefficient(L, ScattererSpec<2>{});
  EXPECT_EQ(a.values.minCoeff(), 1.0);
  EXPECT_EQ(a.max(), 1.0);
}

TEST(Paint, BallByCentroid) {
  auto L = small2();
  auto a = paint_coefficient(L, one_ball());
  std::size_t inside = 0;
  for (std::size_t c = 0; c < a.size(); ++c) {
    const auto x = L.mesh.centroid(c);
    const bool in = std::hypot(x[0], x[1]) < 0.2;
    EXPECT_EQ(a[c], in ? 4.0 : 1.0);
    inside += in;
  }
  // area pi r^2 = 0.1257 over triangles of area h^2 / 2
  EXPECT_NEAR(double(inside) * 0.05 * 0.05 / 2.0, std::numbers::pi * 0.04, 0.01);
}

TEST(Paint, InclusionInOverlapLayerRejected) {
  auto L = small2();
  ScattererSpec<2> s;
  s.inclusions.push_back(Inclusion<2>::ball({0.5, 0.0}, 0.1));
  EXPECT_THROW(paint_coefficient(L, s), GeometryError);
  ScattererSpec<2> b;
  b.inclusions.push_back(Inclusion<2>::make_box(Box<2>{{-0.2, -0.4}, {0.2, 0.0}}));
  EXPECT_THROW(paint_coefficient(L, b), GeometryError);
}

TEST(Paint, ValueOutsideBoundsRejected) {
  auto L = small2();
  auto s = one_ball();
  s.a_in = 6.0;
  EXPECT_THROW(paint_coefficient(L, s), GeometryError);
}

TEST(Paint, DefaultScatterersFitTheDefaultBox) {
  Box<3> fem{{-3.2, -0.6, -0.6}, {3.2, 0.6, 0.6}};
  auto s = default_scatterers<3>(fem);
  EXPECT_EQ(s.inclusions.size(), 8u);
  for (const auto& inc : s.inclusions) {
    const auto b = inc.bounds();
    EXPECT_TRUE(fem.shrunk(0.1).contains(b.lo) && fem.shrunk(0.1).contains(b.hi));
  }
}

TEST(MakeData, NoScatterersNoPulseGivesZero) {
  auto L = small2(0.1);
  auto d = make_data(L, ScattererSpec<2>{}, SourcePulse(20.0, false), 0.02, 1.0);
  EXPECT_EQ(d.values.rows(), 51);
  EXPECT_EQ(static_cast<std::size_t>(d.values.cols()), L.observation_nodes.size());
  EXPECT_EQ(d.values.cwiseAbs().maxCoeff(), 0.0);
}

TEST(MakeData, RefinedTracesConverge) {
  // Traces at r = 2 and r = 4 are closer to each other than r = 1 and r = 2.
  auto L = small2(0.1);
  auto s = one_ball();
  SynthesisOptions o1, o2, o4;
  o1.refinement = 1;
  o4.refinement = 4;
  auto d1 = make_data(L, s, SourcePulse(10.0), 0.02, 1.0, o1);
  auto d2 = make_data(L, s, SourcePulse(10.0), 0.02, 1.0, o2);
  auto d4 = make_data(L, s, SourcePulse(10.0), 0.02, 1.0, o4);
  EXPECT_LT((d4.values - d2.values).cwiseAbs().maxCoeff(), (d2.values - d1.values).cwiseAbs().maxCoeff());
}

TEST(MakeData, MirrorSymmetricScatterersGiveSymmetricTraces) {
  auto L = small2();
  ScattererSpec<2> s;
  s.inclusions.push_back(Inclusion<2>::ball({0.0, -0.15}, 0.1));
  s.inclusions.push_back(Inclusion<2>::ball({0.0, 0.15}, 0.1));
  auto d = make_data(L, s, SourcePulse(20.0), 0.01, 1.0);
  // pair each node with its mirror image in x2
  const double peak = d.values.cwiseAbs().maxCoeff();
  ASSERT_GT(peak, 0.0);
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < d.nodes.size(); ++i)
    for (std::size_t j = 0; j < d.nodes.size(); ++j)
      if (std::abs(d.nodes[i][0] - d.nodes[j][0]) < 1e-12 && std::abs(d.nodes[i][1] + d.nodes[j][1]) < 1e-12) {
        ++pairs;
        EXPECT_LE((d.values.col(i) - d.values.col(j)).cwiseAbs().maxCoeff(), 1e-8 * peak);
      }
  EXPECT_EQ(pairs, d.nodes.size());
}

TEST(MakeData, ModelProblemOneStartsFromTheGaussian) {
  auto L = small2(0.1);
  SynthesisOptions o;
  o.model = ModelProblem::mp1;
  auto d = make_data(L, ScattererSpec<2>{}, SourcePulse(20.0, false), 0.02, 0.2, o);
  // Boundary nodes at rest copy their nearest interior node on the refined grid.
  for (std::size_t j = 0; j < d.nodes.size(); ++j) {
    const double x = -0.95, y = std::clamp(d.nodes[j][1], -0.55, 0.55);
    EXPECT_NEAR(d.values(0, j), std::exp(-(x * x + y * y)), 1e-12);
  }
}

TEST(Noise, ZeroSigmaIsIdentity) {
  ObservationSet<2> s;
  s.values = Eigen::MatrixXd::Random(5, 4);
  EXPECT_EQ(add_noise(s, 0.0, 9).values, s.values);
  EXPECT_THROW(add_noise(s, -1.0, 9), ConfigError);
}

TEST(Noise, BoundedAndSeeded) {
  ObservationSet<2> s;
  s.values = Eigen::MatrixXd::Random(50, 8);
  const double peak = s.values.cwiseAbs().maxCoeff();
  auto n1 = add_noise(s, 10.0, 42), n2 = add_noise(s, 10.0, 42), n3 = add_noise(s, 10.0, 43);
  EXPECT_EQ(n1.values, n2.values);
  EXPECT_NE(n1.values, n3.values);
  const Eigen::MatrixXd e = n1.values - s.values;
  EXPECT_LE(e.cwiseAbs().maxCoeff(), 0.1 * peak * (1.0 + 1e-15));
  // uniform on [-0.1 peak, 0.1 peak]: mean near 0, second moment near (0.1 peak)^2 / 3
  EXPECT_NEAR(e.mean(), 0.0, 0.01 * peak);
  EXPECT_NEAR(e.array().square().mean(), 0.01 * peak * peak / 3.0, 0.001 * peak * peak);
}

TEST(Noise, UnitDrawsStayInRange) {
  std::mt19937_64 g(5);
  for (int i = 0; i < 10000; ++i) {
    const double u = symmetric_unit(g);
    EXPECT_GE(u, -1.0);
    EXPECT_LT(u, 1.0);
  }
}

TEST(Model, Names) {
  EXPECT_EQ(parse_model("mp1"), ModelProblem::mp1);
  EXPECT_EQ(parse_model("MP2"), ModelProblem::mp2);
  EXPECT_STREQ(to_string(ModelProblem::mp1), "mp1");
  EXPECT_THROW(parse_model("mp3"), ConfigError);
}
