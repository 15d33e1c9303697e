#pragma once

// Synthetic observations: painted scatterers, a refined forward solve
// restricted to the inversion lattice, and seeded additive noise.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hybwave/core.hpp"
#include "hybwave/coupling.hpp"
#include "hybwave/fem.hpp"
#include "hybwave/geometry.hpp"
#include "hybwave/pulse.hpp"

namespace hybwave {

enum class ModelProblem { mp1, mp2 };

inline const char* to_string(ModelProblem m) { return m == ModelProblem::mp1 ? "mp1" : "mp2"; }

inline ModelProblem parse_model(const std::string& s) {
  if (s == "mp1" || s == "MP1") return ModelProblem::mp1;
  if (s == "mp2" || s == "MP2") return ModelProblem::mp2;
  throw ConfigError("unknown model problem '" + s + "' (expected mp1 or mp2)");
}

template <int Dim>
struct Inclusion {
  enum class Shape { ball, box };
  Shape shape = Shape::ball;
  Point<Dim> center{};
  double radius = 0.0;
  Box<Dim> box{};

  static Inclusion ball(const Point<Dim>& c, double r) {
    Inclusion s;
    s.shape = Shape::ball;
    s.center = c;
    s.radius = r;
    return s;
  }

  static Inclusion make_box(const Box<Dim>& b) {
    Inclusion s;
    s.shape = Shape::box;
    s.box = b;
    return s;
  }

  bool contains(const Point<Dim>& x) const {
    return shape == Shape::ball ? distance<Dim>(x, center) < radius : box.contains(x);
  }

  /// Axis-aligned hull.
  Box<Dim> bounds() const {
    if (shape == Shape::box) return box;
    Box<Dim> b;
    for (int d = 0; d < Dim; ++d) {
      b.lo[d] = center[d] - radius;
      b.hi[d] = center[d] + radius;
    }
    return b;
  }
};

template <int Dim>
struct ScattererSpec {
  std::vector<Inclusion<Dim>> inclusions;
  double a_in = 4.0;
  double background = 1.0;
};

/// Eight balls in two rows mirrored about the x1 axis; only a stand-in for
/// the waveguide picture, positions scale with the FEM box.
template <int Dim>
ScattererSpec<Dim> default_scatterers(const Box<Dim>& fem_box, double a_in = 4.0) {
  ScattererSpec<Dim> s;
  s.a_in = a_in;
  Point<Dim> c{};
  for (int d = 0; d < Dim; ++d) c[d] = 0.5 * (fem_box.lo[d] + fem_box.hi[d]);
  const double w1 = fem_box.hi[0] - fem_box.lo[0];
  const double w2 = Dim > 1 ? fem_box.hi[1 % Dim] - fem_box.lo[1 % Dim] : w1;
  const double r = std::min(0.15, w2 / 8.0);
  const int rows = Dim > 1 ? 2 : 1;
  for (int row = 0; row < rows; ++row) {
    for (int i : {-3, -1, 1, 3}) {
      Point<Dim> p = c;
      p[0] += i * w1 / 16.0;
      if (Dim > 1) p[1 % Dim] += (row == 0 ? -0.25 : 0.25) * w2;
      s.inclusions.push_back(Inclusion<Dim>::ball(p, r));
    }
  }
  return s;
}

/// Element values by centroid membership. Inclusions must stay clear of the
/// outer cell layer of the FEM box, where a is pinned to 1.
template <int Dim>
CoefficientField paint_coefficient(const DomainLayout<Dim>& L, const ScattererSpec<Dim>& spec, double lower = 1.0,
                                   double upper = 5.0) {
  if (spec.a_in < lower || spec.a_in > upper)
    throw GeometryError("inclusion value " + std::to_string(spec.a_in) + " is outside the admissible bounds");
  const Box<Dim> inner = L.fem_box.shrunk(L.h);
  for (std::size_t i = 0; i < spec.inclusions.size(); ++i) {
    const auto b = spec.inclusions[i].bounds();
    if (!inner.contains(b.lo, 1e-12 * L.h) || !inner.contains(b.hi, 1e-12 * L.h))
      throw GeometryError("inclusion " + std::to_string(i) + " reaches into the overlap layer");
  }
  CoefficientField a(L.mesh.num_cells(), spec.background, lower, upper);
  for (std::size_t c = 0; c < L.mesh.num_cells(); ++c) {
    if (L.overlap_element[c]) continue;
    const auto x = L.mesh.centroid(c);
    for (const auto& inc : spec.inclusions)
      if (inc.contains(x)) {
        a[c] = spec.a_in;
        break;
      }
  }
  return a;
}

/// Observation traces on the front face: row k is time level k.
template <int Dim>
struct ObservationSet {
  std::vector<Point<Dim>> nodes;
  std::vector<double> times;
  Eigen::MatrixXd values;  // times x nodes
  double sigma = 0.0;
  std::uint64_t seed = 0;
};

template <int Dim>
ObservationSet<Dim> observation_frame(const DomainLayout<Dim>& L, double tau, long N) {
  ObservationSet<Dim> s;
  for (std::size_t g : L.observation_nodes) s.nodes.push_back(L.grid.coord(g));
  for (long k = 0; k <= N; ++k) s.times.push_back(k * tau);
  s.values = Eigen::MatrixXd::Zero(N + 1, static_cast<Eigen::Index>(s.nodes.size()));
  return s;
}

template <int Dim>
InitialData<Dim> model_initial_data(ModelProblem m, bool literal_cube = false) {
  return m == ModelProblem::mp1 ? gaussian_initial_data<Dim>(literal_cube) : InitialData<Dim>{};
}

struct SynthesisOptions {
  int refinement = 2;  // in space and in time
  ModelProblem model = ModelProblem::mp2;
  bool literal_cube = false;
};

/// Clean data for the coarse layout `L`: the forward problem is solved on
/// the same boxes at h / r with tau / r, then sampled at the coarse
/// observation nodes and interpolated linearly onto the coarse levels.
template <int Dim>
ObservationSet<Dim> make_data(const DomainLayout<Dim>& L, const ScattererSpec<Dim>& spec, const SourcePulse& pulse,
                              double tau, double T, const SynthesisOptions& opt = {}) {
  if (opt.refinement < 1) throw ConfigError("refinement ratio must be at least 1");
  const double hf = L.h / opt.refinement;
  const double tf = tau / opt.refinement;
  const auto fine = build_layout<Dim>(L.fdm_box, L.fem_box, hf);
  const auto a = paint_coefficient(fine, spec);
  ForwardOptions<Dim> fo;
  fo.store_mesh_levels = false;
  const auto tr = solve_forward(fine, a, pulse, tf, T, model_initial_data<Dim>(opt.model, opt.literal_cube), fo);

  const long N = step_count(T, tau);
  auto out = observation_frame(L, tau, N);
  std::vector<Eigen::Index> col(L.observation_nodes.size());
  std::vector<long> fine_col(fine.grid.size(), -1);
  for (std::size_t j = 0; j < fine.observation_nodes.size(); ++j) fine_col[fine.observation_nodes[j]] = static_cast<long>(j);
  for (std::size_t j = 0; j < col.size(); ++j) {
    const auto x = L.grid.coord(L.observation_nodes[j]);
    Index<Dim> m{};
    for (int d = 0; d < Dim; ++d) m[d] = static_cast<std::size_t>(std::lround((x[d] - fine.grid.origin()[d]) / hf));
    const std::size_t g = fine.grid.index(m);
    if (fine_col[g] < 0) throw UnmatchedOverlapNodeError("coarse observation node has no partner on the refined grid");
    col[j] = fine_col[g];
  }
  const long Nf = tr.steps;
  for (long k = 0; k <= N; ++k) {
    double s = std::clamp(k * tau / tf, 0.0, static_cast<double>(Nf));
    if (std::abs(s - std::round(s)) < 1e-9) s = std::round(s);
    const long k0 = std::min(static_cast<long>(std::floor(s)), Nf);
    const long k1 = std::min(k0 + 1, Nf);
    const double w = s - k0;
    for (std::size_t j = 0; j < col.size(); ++j)
      out.values(k, j) = (1.0 - w) * tr.observations(k0, col[j]) + w * tr.observations(k1, col[j]);
  }
  return out;
}

/// Uniform on [-1, 1] from the top 53 bits of a 64-bit draw; avoids the
/// implementation-defined distributions of <random>.
inline double symmetric_unit(std::mt19937_64& gen) {
  const double u = static_cast<double>(gen() >> 11) * 0x1.0p-53;
  return 2.0 * u - 1.0;
}

/// u + (sigma / 100) rho max|u| with rho i.i.d. uniform on [-1, 1], drawn in
/// row-major (time, node) order.
template <int Dim>
ObservationSet<Dim> add_noise(const ObservationSet<Dim>& clean, double sigma, std::uint64_t seed) {
  if (sigma < 0.0) throw ConfigError("noise level must be non-negative");
  ObservationSet<Dim> out = clean;
  out.sigma = sigma;
  out.seed = seed;
  if (sigma == 0.0 || clean.values.size() == 0) return out;
  const double amp = sigma / 100.0 * clean.values.cwiseAbs().maxCoeff();
  std::mt19937_64 gen(seed);
  for (Eigen::Index k = 0; k < out.values.rows(); ++k)
    for (Eigen::Index j = 0; j < out.values.cols(); ++j) out.values(k, j) += amp * symmetric_unit(gen);
  return out;
}

}  // namespace hybwave
