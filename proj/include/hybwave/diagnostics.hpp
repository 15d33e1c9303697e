#pragma once

// CFL bound and the discrete energy monitor.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "hybwave/core.hpp"
#include "hybwave/fdm.hpp"
#include "hybwave/fem.hpp"
#include "hybwave/geometry.hpp"

namespace hybwave {

/// tau_max = 1 / (sqrt(a_max) * sqrt(sum_d 1/dx_d^2)).
template <int Dim>
double cfl_max_timestep(const Point<Dim>& h, double a_max) {
  if (!(a_max > 0.0)) throw Error("a_max must be positive");
  double s = 0.0;
  for (int d = 0; d < Dim; ++d) {
    if (!(h[d] > 0.0)) throw Error("spacing must be positive");
    s += 1.0 / (h[d] * h[d]);
  }
  return 1.0 / (std::sqrt(a_max) * std::sqrt(s));
}

/// Uniform spacing in `dim` dimensions: h * sqrt(1 / (dim a_max)).
inline double cfl_max_timestep(double h, double a_max, int dim = 3) {
  if (!(h > 0.0) || !(a_max > 0.0)) throw Error("h and a_max must be positive");
  return h * std::sqrt(1.0 / (dim * a_max));
}

/// Leapfrog energy between two consecutive levels. With v the backward
/// difference quotient and ubar the level average,
///   kinetic   = v' M v - tau^2/4 v' S v,
///   potential = ubar' S ubar,
/// and kinetic + potential = v' M v + u_k' S u_{k-1} is the quantity the
/// scheme conserves. Both parts are non-negative under the CFL bound.
struct EnergySample {
  double t = 0.0;
  double kinetic = 0.0;
  double potential = 0.0;
  double boundary = 0.0;  // absorbing-face term, see absorbing_energy_term
  double total() const { return kinetic + potential + boundary; }
};

/// Boundary part of the energy that the first-order absorbing update does
/// not increase. With D = u_b - u_n across each absorbing face node that has
/// an interior neighbour, the interior energy changes per step by
/// w (u_b^{k+1} - u_b^{k-1}) D^k, and the update bounds this by the increment
/// of w [D^k D^{k-1} / 2 + (rho / 4)(D^k^2 - D^{k-1}^2)], rho = tau / dx,
/// w = h^d / dx^2. The term is that bracket with a minus sign.
template <int Dim>
double absorbing_energy_term(const StructuredGrid<Dim>& grid, const BoundarySpec& spec, const Eigen::VectorXd& curr,
                             const Eigen::VectorXd& prev, double tau, double t) {
  const FdmBoundary<Dim> fb(grid);
  double e = 0.0;
  for (int axis = 0; axis < Dim; ++axis) {
    for (int side = 0; side < 2; ++side) {
      const Face f{axis, side};
      if (spec.at(f, t) != FaceCondition::absorbing) continue;
      const double dx = grid.spacing()[axis];
      const double w = grid.cell_volume() / (dx * dx);
      const double rho = tau / dx;
      for (const auto& n : fb.face(f)) {
        const auto m = grid.multi(n.b);
        bool face_interior = true;
        for (int d = 0; d < Dim; ++d)
          if (d != axis && (m[d] == 0 || m[d] + 1 >= grid.dims()[d])) face_interior = false;
        if (!face_interior) continue;
        const double d1 = curr[n.b] - curr[n.normal];
        const double d0 = prev[n.b] - prev[n.normal];
        e -= w * (0.5 * d1 * d0 + 0.25 * rho * (d1 * d1 - d0 * d0));
      }
    }
  }
  return e;
}

/// Whole-grid energy with a = 1: mass h^d on interior nodes, stiffness as the
/// sum over axis edges with at least one interior end of h^{d-2} (jump)^2;
/// with `bc` the absorbing-face term is added.
template <int Dim>
EnergySample grid_energy(const StructuredGrid<Dim>& grid, const Eigen::VectorXd& curr, const Eigen::VectorXd& prev,
                         double tau, double t = 0.0, const BoundarySpec* bc = nullptr) {
  EnergySample e;
  e.t = t;
  if (bc) e.boundary = absorbing_energy_term(grid, *bc, curr, prev, tau, t);
  const double hd = grid.cell_volume();
  double mv = 0.0, sv = 0.0, su = 0.0;
  const auto& n = grid.dims();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto m = grid.multi(i);
    const bool interior = !grid.on_boundary(m);
    if (interior) {
      const double v = (curr[i] - prev[i]) / tau;
      mv += hd * v * v;
    }
    for (int d = 0; d < Dim; ++d) {
      if (m[d] + 1 >= n[d]) continue;
      const std::size_t j = i + grid.strides()[d];
      auto mj = m;
      ++mj[d];
      if (!interior && grid.on_boundary(mj)) continue;
      const double w = hd / (grid.spacing()[d] * grid.spacing()[d]);
      const double dv = ((curr[j] - prev[j]) - (curr[i] - prev[i])) / tau;
      const double du = 0.5 * ((curr[j] + prev[j]) - (curr[i] + prev[i]));
      sv += w * dv * dv;
      su += w * du * du;
    }
  }
  e.kinetic = mv - 0.25 * tau * tau * sv;
  e.potential = su;
  return e;
}

/// Pure FEM form with lumped mass and K(a) over all mesh vertices.
template <int Dim>
EnergySample fem_energy(const AssembledOperators<Dim>& ops, const Eigen::VectorXd& curr, const Eigen::VectorXd& prev,
                        double tau, double t = 0.0) {
  EnergySample e;
  e.t = t;
  Eigen::VectorXd v = (curr - prev) / tau;
  Eigen::VectorXd ub = 0.5 * (curr + prev);
  e.kinetic = v.cwiseProduct(ops.mass).dot(v) - 0.25 * tau * tau * v.dot(ops.K * v);
  e.potential = ub.dot(ops.K * ub);
  return e;
}

/// Hybrid energy on the whole-domain grid field: the a = 1 grid form plus
/// sum_K (a_K - 1) vol_K grad(.) . grad(.) over the FEM cells, which turns
/// the Kuhn stiffness of a = 1 into K(a).
template <int Dim>
EnergySample hybrid_energy(const DomainLayout<Dim>& L, const std::vector<ElementGeometry<Dim>>& geo,
                           const CoefficientField& a, const Eigen::VectorXd& curr, const Eigen::VectorXd& prev,
                           double tau, double t = 0.0, const BoundarySpec* bc = nullptr) {
  EnergySample e = grid_energy(L.grid, curr, prev, tau, t, bc);
  double sv = 0.0, su = 0.0;
  for (std::size_t c = 0; c < L.mesh.num_cells(); ++c) {
    const double da = a[c] - 1.0;
    if (da == 0.0) continue;
    Eigen::Matrix<double, Dim + 1, 1> v, ub;
    for (int k = 0; k <= Dim; ++k) {
      const auto g = static_cast<std::size_t>(L.classes.grid_of_mesh[L.mesh.cells[c][k]]);
      v[k] = (curr[g] - prev[g]) / tau;
      ub[k] = 0.5 * (curr[g] + prev[g]);
    }
    const auto gv = geo[c].grad.transpose() * v;
    const auto gu = geo[c].grad.transpose() * ub;
    sv += da * geo[c].volume * gv.squaredNorm();
    su += da * geo[c].volume * gu.squaredNorm();
  }
  e.kinetic -= 0.25 * tau * tau * sv;
  e.potential += su;
  return e;
}

enum class EnergyMode {
  lossless,  // closed box, no source: conserved
  lossy,     // absorbing faces, no source: non-increasing
  envelope   // bounded by factor * exp(t) * r(t)
};

struct EnergyCheck {
  bool pass = true;
  double worst = 0.0;     // worst drift (lossless/lossy) or ratio (envelope)
  long worst_step = -1;
};

/// lossless: |E_{k+1} - E_k| <= tol * E_0 for every step.
/// lossy:    E_{k+1} - E_k <= tol * E_0 for every step.
/// envelope: E_k <= tol * exp(t_k) * r_k, with r supplied per sample
///           (initial data terms plus accumulated source work).
inline EnergyCheck energy_bound_check(const std::vector<EnergySample>& trace, EnergyMode mode, double tol,
                                      const std::vector<double>& r = {}) {
  EnergyCheck out;
  if (trace.empty()) return out;
  if (mode == EnergyMode::envelope) {
    if (r.size() != trace.size()) throw Error("envelope check needs one bound term per sample");
    for (std::size_t k = 0; k < trace.size(); ++k) {
      const double f = trace[k].total();
      if (!std::isfinite(f)) return {false, std::numeric_limits<double>::infinity(), static_cast<long>(k)};
      const double bound = tol * std::exp(trace[k].t) * r[k];
      const double ratio = bound > 0.0 ? f / bound : (f > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
      if (ratio > out.worst) {
        out.worst = ratio;
        out.worst_step = static_cast<long>(k);
      }
    }
    out.pass = out.worst <= 1.0;
    return out;
  }
  const double scale = std::abs(trace.front().total());
  for (std::size_t k = 1; k < trace.size(); ++k) {
    const double prev = trace[k - 1].total(), cur = trace[k].total();
    if (!std::isfinite(cur)) return {false, std::numeric_limits<double>::infinity(), static_cast<long>(k)};
    double drift = mode == EnergyMode::lossless ? std::abs(cur - prev) : cur - prev;
    drift = scale > 0.0 ? drift / scale : (drift > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
    if (drift > out.worst) {
      out.worst = drift;
      out.worst_step = static_cast<long>(k);
    }
  }
  out.pass = out.worst <= tol;
  return out;
}

/// First sample index at which |E| exceeds `factor` times its initial value;
/// -1 when it never does.
inline long energy_blowup_step(const std::vector<EnergySample>& trace, double factor = 1e3) {
  if (trace.empty()) return -1;
  const double e0 = std::abs(trace.front().total());
  for (std::size_t k = 0; k < trace.size(); ++k) {
    const double e = std::abs(trace[k].total());
    if (!std::isfinite(e) || e > factor * e0) return static_cast<long>(k);
  }
  return -1;
}

}  // namespace hybwave
