#pragma once

// Overlapping FEM/FDM time loop. Each step both kernels advance from the
// values exchanged at the end of the previous step, then FEM values are
// copied onto the FDM hole boundary and FDM values onto the FEM boundary.

#include <cmath>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "hybwave/core.hpp"
#include "hybwave/diagnostics.hpp"
#include "hybwave/fdm.hpp"
#include "hybwave/fem.hpp"
#include "hybwave/geometry.hpp"
#include "hybwave/pulse.hpp"

namespace hybwave {

enum class SolverMode {
  hybrid,     // FDM outside, FEM inside, exchange across the overlap
  monolithic  // FDM on the whole box; reference for a = 1
};

template <int Dim>
class HybridSolver {
 public:
  HybridSolver(const DomainLayout<Dim>& layout, const CoefficientField& a, double tau,
               SolverMode mode = SolverMode::hybrid)
      : L_(&layout), tau_(tau), mode_(mode), boundary_(layout.grid) {
    ops_ = assemble_operators(layout.mesh, a);
    a_ = a;
    check_mode();
    const auto& nc = layout.classes;
    fdm_nodes_ = mode == SolverMode::hybrid ? nc.fdm_active : interior_nodes(layout.grid);
    for (std::size_t v : nc.mesh_star)
      if (nc.grid_of_mesh[v] >= 0) star_.emplace_back(v, static_cast<std::size_t>(nc.grid_of_mesh[v]));
    fdm_ = WaveState(static_cast<Eigen::Index>(layout.grid.size()));
    fem_ = WaveState(static_cast<Eigen::Index>(layout.mesh.num_vertices()));
  }

  void set_coefficient(const CoefficientField& a) {
    a_ = a;
    check_mode();
    ops_.set_coefficient(L_->mesh, a);
  }

  /// Sets levels 0 and -1 from whole-grid fields.
  void reset(const Eigen::VectorXd& u0, const Eigen::VectorXd& um1, long k0 = 0) {
    fdm_.curr = u0;
    fdm_.prev = um1;
    fdm_.next.setZero();
    fdm_.k = k0;
    scatter_to_mesh(fdm_.curr, fem_.curr);
    scatter_to_mesh(fdm_.prev, fem_.prev);
    fem_.next.setZero();
    fem_.k = k0;
  }

  void step_forward(const BoundarySpec& bc, double t_next, double p_next) {
    fdm_update(fdm_, L_->grid, tau_, fdm_nodes_);
    check_finite(fdm_.next, fdm_nodes_, fdm_.k + 1, "fdm forward step");
    if (mode_ == SolverMode::hybrid) fem_forward_step(fem_, ops_, tau_, L_->classes.fem_active);
    finish(bc, t_next, p_next, +1);
  }

  /// Current level as a whole-grid field (FEM interior already copied in).
  const Eigen::VectorXd& grid_curr() const { return fdm_.curr; }
  const Eigen::VectorXd& grid_prev() const { return fdm_.prev; }

  /// Current level on mesh vertices.
  Eigen::VectorXd mesh_curr() const {
    if (mode_ == SolverMode::hybrid) return fem_.curr;
    Eigen::VectorXd m(fem_.curr.size());
    scatter_to_mesh(fdm_.curr, m);
    return m;
  }

  const WaveState& fdm() const { return fdm_; }
  const WaveState& fem() const { return fem_; }
  long level() const { return fdm_.k; }
  double tau() const { return tau_; }
  const AssembledOperators<Dim>& operators() const { return ops_; }
  const CoefficientField& coefficient() const { return a_; }
  const DomainLayout<Dim>& layout() const { return *L_; }
  SolverMode mode() const { return mode_; }

  /// Bit-equality of both copies at the exchange nodes.
  bool exchange_consistent() const {
    if (mode_ != SolverMode::hybrid) return true;
    for (const auto& [g, m] : L_->classes.exchange_o)
      if (fdm_.curr[g] != fem_.curr[m]) return false;
    for (const auto& [m, g] : L_->classes.exchange_diamond)
      if (fdm_.curr[g] != fem_.curr[m]) return false;
    return true;
  }

 private:
  void check_mode() const {
    if (mode_ == SolverMode::monolithic && a_.size() > 0 &&
        (a_.values.array() != 1.0).any())
      throw Error("the monolithic reference solver requires a = 1");
  }

  bool on_fem_boundary(std::size_t v) const {
    const auto& nc = L_->classes;
    const long g = nc.grid_of_mesh[v];
    return g >= 0 && std::binary_search(nc.omega_o.begin(), nc.omega_o.end(), static_cast<std::size_t>(g));
  }

  void scatter_to_mesh(const Eigen::VectorXd& grid, Eigen::VectorXd& mesh) const {
    for (std::size_t v = 0; v < static_cast<std::size_t>(mesh.size()); ++v) {
      const long g = L_->classes.grid_of_mesh[v];
      mesh[v] = g >= 0 ? grid[g] : 0.0;
    }
  }

  void finish(const BoundarySpec& bc, double t_next, double p_next, long dir) {
    boundary_.apply(fdm_.next, fdm_.curr, bc, t_next, p_next, tau_);
    if (mode_ == SolverMode::hybrid) {
      for (const auto& [m, g] : L_->classes.exchange_diamond) fdm_.next[g] = fem_.next[m];
      for (const auto& [m, g] : star_) fdm_.next[g] = fem_.next[m];
      for (const auto& [g, m] : L_->classes.exchange_o) fem_.next[m] = fdm_.next[g];
      fem_.rotate(dir);
    }
    fdm_.rotate(dir);
  }

  const DomainLayout<Dim>* L_;
  double tau_;
  SolverMode mode_;
  FdmBoundary<Dim> boundary_;
  AssembledOperators<Dim> ops_;
  CoefficientField a_;
  std::vector<std::size_t> fdm_nodes_;
  std::vector<std::pair<std::size_t, std::size_t>> star_;
  WaveState fdm_, fem_;
};

/// Optional initial displacement and velocity; empty functions mean zero.
template <int Dim>
struct InitialData {
  std::function<double(const Point<Dim>&)> f0;
  std::function<double(const Point<Dim>&)> f1;
  bool zero() const { return !f0 && !f1; }
};

/// f0 = exp(-(x1^2 + x2^2 + x3^2)), f1 = 0. `literal_cube` replaces the
/// last term by x3^3.
template <int Dim>
InitialData<Dim> gaussian_initial_data(bool literal_cube = false) {
  InitialData<Dim> d;
  d.f0 = [literal_cube](const Point<Dim>& x) {
    double s = 0.0;
    for (int i = 0; i < Dim; ++i) s += (literal_cube && i == 2) ? x[i] * x[i] * x[i] : x[i] * x[i];
    return std::exp(-s);
  };
  return d;
}

template <int Dim>
struct ForwardOptions {
  SolverMode mode = SolverMode::hybrid;
  bool store_mesh_levels = true;
  bool store_grid_levels = false;
  /// Called at every level k = 0..N with the solver positioned at k.
  std::function<void(const HybridSolver<Dim>&, long, double)> on_level;
  /// Skip the CFL refusal (negative controls only).
  bool allow_cfl_violation = false;
  /// Outer boundary; defaults to the waveguide set-up of the pulse.
  std::optional<BoundarySpec> boundary;
};

template <int Dim>
struct Trajectory {
  std::vector<double> times;
  /// Row k: values at the observation nodes at level k.
  Eigen::MatrixXd observations;
  std::vector<Eigen::VectorXd> mesh_levels;
  std::vector<Eigen::VectorXd> grid_levels;
  long steps = 0;
};

inline long step_count(double T, double tau) {
  if (!(T > 0.0) || !(tau > 0.0)) throw Error("T and tau must be positive");
  return std::lround(T / tau);
}

template <int Dim>
void check_cfl(const DomainLayout<Dim>& L, const CoefficientField& a, double tau) {
  const double a_max = std::max(1.0, a.size() ? a.max() : 1.0);
  const double tmax = cfl_max_timestep<Dim>(L.grid.spacing(), a_max);
  if (tau > tmax * (1.0 + 1e-12))
    throw CflError("time step " + std::to_string(tau) + " exceeds the CFL bound " + std::to_string(tmax) +
                   " for a_max = " + std::to_string(a_max));
}

template <int Dim>
Trajectory<Dim> solve_forward(const DomainLayout<Dim>& L, const CoefficientField& a, const SourcePulse& pulse,
                              double tau, double T, const InitialData<Dim>& init = {},
                              const ForwardOptions<Dim>& opt = {}) {
  if (!opt.allow_cfl_violation) check_cfl(L, a, tau);
  const long N = step_count(T, tau);
  const auto bc = opt.boundary ? *opt.boundary : BoundarySpec::waveguide(Dim, pulse.duration());
  HybridSolver<Dim> solver(L, a, tau, opt.mode);

  Eigen::VectorXd u0 = Eigen::VectorXd::Zero(L.grid.size()), um1 = u0;
  if (!init.zero()) {
    for (std::size_t i = 0; i < L.grid.size(); ++i) {
      const auto x = L.grid.coord(i);
      const double f0 = init.f0 ? init.f0(x) : 0.0;
      const double f1 = init.f1 ? init.f1(x) : 0.0;
      u0[i] = f0;
      um1[i] = f0 - tau * f1;
    }
    // Boundary nodes of the initial levels copy their interior partner,
    // the relation every face satisfies for a field at rest.
    const FdmBoundary<Dim> fb(L.grid);
    const auto rest = BoundarySpec::uniform(Dim, FaceCondition::neumann);
    fb.apply(u0, u0, rest, 0.0, 0.0, tau);
    fb.apply(um1, um1, rest, -tau, 0.0, tau);
  }
  solver.reset(u0, um1);

  Trajectory<Dim> tr;
  tr.steps = N;
  tr.times.resize(N + 1);
  tr.observations.resize(N + 1, static_cast<Eigen::Index>(L.observation_nodes.size()));
  auto record = [&](long k) {
    const double t = k * tau;
    tr.times[k] = t;
    const auto& u = solver.grid_curr();
    for (std::size_t j = 0; j < L.observation_nodes.size(); ++j) tr.observations(k, j) = u[L.observation_nodes[j]];
    if (opt.store_mesh_levels) tr.mesh_levels.push_back(solver.mesh_curr());
    if (opt.store_grid_levels) tr.grid_levels.push_back(u);
    if (opt.on_level) opt.on_level(solver, k, t);
  };
  record(0);
  for (long k = 0; k < N; ++k) {
    const double t_next = (k + 1) * tau;
    solver.step_forward(bc, t_next, pulse(t_next));
    record(k + 1);
  }
  return tr;
}

/// Trapezoidal weights over levels 0..N.
inline double trapezoid_weight(long k, long N) { return (k == 0 || k == N) ? 0.5 : 1.0; }

template <int Dim>
struct AdjointOptions {
  SolverMode mode = SolverMode::hybrid;
  bool store_grid_levels = false;
  /// Forward mesh levels; when given, the misfit part of the gradient
  /// sum_k tau grad u . grad lambda is accumulated per cell.
  const std::vector<Eigen::VectorXd>* forward_levels = nullptr;
  std::optional<BoundarySpec> boundary;
};

template <int Dim>
struct AdjointResult {
  Eigen::VectorXd gradient;  // per cell, without the regularisation term
  std::vector<Eigen::VectorXd> grid_levels;  // index k holds level k
};

/// Discrete adjoint: the exact transpose of the forward march, run from
/// level N down to 0. Interior rows reproduce the leapfrog scheme backwards
/// with the same symmetric operator; boundary rows are the transposes of the
/// Neumann copies and of the absorbing update, so the gradient is the exact
/// derivative of the discrete functional. `loads(k, j)` is the weighted
/// residual at observation node j and level k (it enters times tau).
/// lambda^k = -tau * (sensitivity of level k+1) / mass, zero at k = N; the
/// misfit gradient is sum_k tau grad u^k . grad lambda^k per cell.
template <int Dim>
AdjointResult<Dim> solve_adjoint(const DomainLayout<Dim>& L, const CoefficientField& a, const Eigen::MatrixXd& loads,
                                 double tau, double source_duration, const AdjointOptions<Dim>& opt = {}) {
  check_cfl(L, a, tau);
  const long N = loads.rows() - 1;
  if (N < 1 || loads.cols() != static_cast<Eigen::Index>(L.observation_nodes.size()))
    throw TraceMismatchError("adjoint sources do not match the observation lattice");
  if (opt.forward_levels && static_cast<long>(opt.forward_levels->size()) != N + 1)
    throw TraceMismatchError("forward trajectory has a different number of levels");
  if (opt.mode == SolverMode::monolithic && a.size() > 0 && (a.values.array() != 1.0).any())
    throw Error("the monolithic reference solver requires a = 1");
  const auto bc = opt.boundary ? *opt.boundary : BoundarySpec::waveguide(Dim, source_duration);
  const auto& nc = L.classes;
  const auto& grid = L.grid;
  const FdmBoundary<Dim> boundary(grid);
  const auto ops = assemble_operators(L.mesh, a);
  const double hd = grid.cell_volume();
  const double t2 = tau * tau;

  // Rows owned by the stencil and rows owned by K(a).
  std::vector<std::size_t> fdm_rows;
  std::vector<std::size_t> fem_rows;
  if (opt.mode == SolverMode::hybrid) {
    std::merge(nc.omega_plus.begin(), nc.omega_plus.end(), nc.omega_o.begin(), nc.omega_o.end(),
               std::back_inserter(fdm_rows));
    fem_rows = nc.fem_active;
  } else {
    fdm_rows = interior_nodes(grid);
  }
  // Mesh vertices that carry lambda in the gradient (FEM boundary excluded).
  std::vector<char> grad_vertex(L.mesh.num_vertices(), 1);
  for (std::size_t v : nc.mesh_o) grad_vertex[v] = 0;

  AdjointResult<Dim> res;
  res.gradient = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(L.mesh.num_cells()));
  if (opt.store_grid_levels) res.grid_levels.assign(N + 1, Eigen::VectorXd::Zero(grid.size()));
  const auto& geo = ops.geometry;

  Eigen::VectorXd bar1 = Eigen::VectorXd::Zero(grid.size());  // d J / d u^{k+1}
  Eigen::VectorXd bar0 = bar1, barm = bar1;                     // levels k and k-1
  Eigen::VectorXd mu_mesh = Eigen::VectorXd::Zero(L.mesh.num_vertices());
  Eigen::VectorXd lam_mesh = mu_mesh;

  for (long k = N - 1; k >= 0; --k) {
    for (std::size_t j = 0; j < L.observation_nodes.size(); ++j) bar1[L.observation_nodes[j]] += tau * loads(k + 1, j);
    boundary.apply_transpose(bar1, bar0, bc, (k + 1) * tau, tau);
    check_finite(bar1, k, "adjoint step");

    // next = 2 curr - prev - tau^2 R(curr) / M on interior rows.
    for (std::size_t i : fdm_rows) {
      const double v = bar1[i];
      if (v == 0.0) continue;
      bar0[i] += 2.0 * v;
      barm[i] -= v;
      for (int d = 0; d < Dim; ++d) {
        const double c = t2 * v / (grid.spacing()[d] * grid.spacing()[d]);
        const std::size_t st = grid.strides()[d];
        bar0[i] -= 2.0 * c;
        bar0[i + st] += c;
        bar0[i - st] += c;
      }
    }
    mu_mesh.setZero();
    for (std::size_t v : fem_rows) {
      const auto g = static_cast<std::size_t>(nc.grid_of_mesh[v]);
      bar0[g] += 2.0 * bar1[g];
      barm[g] -= bar1[g];
      mu_mesh[v] = bar1[g] / ops.mass[v];
    }
    if (!fem_rows.empty()) {
      const Eigen::VectorXd y = ops.K * mu_mesh;
      for (std::size_t w = 0; w < L.mesh.num_vertices(); ++w)
        if (y[w] != 0.0) bar0[static_cast<std::size_t>(nc.grid_of_mesh[w])] -= t2 * y[w];
    }

    if (opt.store_grid_levels) res.grid_levels[k] = (-tau / hd) * bar1;
    if (opt.forward_levels) {
      bool any = false;
      for (std::size_t v = 0; v < L.mesh.num_vertices(); ++v) {
        const long g = nc.grid_of_mesh[v];
        lam_mesh[v] = (grad_vertex[v] && g >= 0) ? -tau * bar1[g] / ops.mass[v] : 0.0;
        any = any || lam_mesh[v] != 0.0;
      }
      if (any) {
        const Eigen::VectorXd& u = (*opt.forward_levels)[k];
        for (std::size_t c = 0; c < L.mesh.num_cells(); ++c) {
          Eigen::Matrix<double, Dim + 1, 1> uc, lc;
          for (int i = 0; i <= Dim; ++i) {
            uc[i] = u[L.mesh.cells[c][i]];
            lc[i] = lam_mesh[L.mesh.cells[c][i]];
          }
          res.gradient[c] += tau * (geo[c].grad.transpose() * uc).dot(geo[c].grad.transpose() * lc);
        }
      }
    }

    std::swap(bar1, bar0);
    std::swap(bar0, barm);
    barm.setZero();
  }
  return res;
}

/// Surface quadrature weight of every observation node: tensor trapezoid
/// over the front face (1 in the one-dimensional reduction).
template <int Dim>
Eigen::VectorXd observation_weights(const DomainLayout<Dim>& L) {
  Eigen::VectorXd w(static_cast<Eigen::Index>(L.observation_nodes.size()));
  for (std::size_t j = 0; j < L.observation_nodes.size(); ++j) {
    const auto m = L.grid.multi(L.observation_nodes[j]);
    double a = 1.0;
    for (int d = 1; d < Dim; ++d) {
      const double h = L.grid.spacing()[d];
      a *= (m[d] == 0 || m[d] + 1 == L.grid.dims()[d]) ? 0.5 * h : h;
    }
    w[j] = a;
  }
  return w;
}

}  // namespace hybwave
