#pragma once

// Tikhonov functional, adjoint gradient and the projected conjugate-gradient
// reconstruction of the conductivity.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hybwave/core.hpp"
#include "hybwave/coupling.hpp"
#include "hybwave/fem.hpp"
#include "hybwave/geometry.hpp"
#include "hybwave/pulse.hpp"

namespace hybwave {

/// z = 1 on [0, T - 2 delta], 0 on [T - delta, T], cubic smoothstep between.
struct CutoffWeight {
  double T = 3.0;
  double delta = 0.3;

  CutoffWeight() = default;
  CutoffWeight(double T_, double delta_) : T(T_), delta(delta_) {
    if (delta_ < 0.0 || 2.0 * delta_ > T_) throw Error("cut-off ramp must fit inside [0, T]");
  }

  double operator()(double t) const {
    if (delta == 0.0) return 1.0;
    const double t0 = T - 2.0 * delta;
    if (t <= t0) return 1.0;
    if (t >= T - delta) return 0.0;
    const double s = (t - t0) / delta;
    return 1.0 - s * s * (3.0 - 2.0 * s);
  }
};

/// Everything the functional and its gradient need besides the coefficient.
template <int Dim>
struct InverseProblem {
  const DomainLayout<Dim>* layout = nullptr;
  SourcePulse pulse;
  InitialData<Dim> initial;
  double tau = 0.006;
  double T = 3.0;
  Eigen::MatrixXd data;  // (N+1) x observation nodes
  CutoffWeight cutoff;
  double gamma = 0.01;
  double a0 = 1.0;
  double lower = 1.0;
  double upper = 5.0;
  std::optional<BoundarySpec> boundary;
};

struct TikhonovValue {
  double misfit = 0.0;
  double regularization = 0.0;
  double total() const { return misfit + regularization; }
};

/// 1/2 sum_k w_k tau sum_b A_b z(t_k) (u - data)^2 + gamma/2 sum_K vol_K (a_K - a0)^2,
/// trapezoidal in time and surface.
template <int Dim>
TikhonovValue tikhonov(const DomainLayout<Dim>& L, const Eigen::MatrixXd& u, const Eigen::MatrixXd& data,
                       const CoefficientField& a, double a0, double gamma, const CutoffWeight& z, double tau) {
  if (u.rows() != data.rows() || u.cols() != data.cols())
    throw TraceMismatchError("observation and data traces are not aligned");
  const Eigen::VectorXd A = observation_weights(L);
  const long N = u.rows() - 1;
  TikhonovValue v;
  for (long k = 0; k <= N; ++k) {
    const double zk = z(k * tau);
    if (zk == 0.0) continue;
    const double w = trapezoid_weight(k, N) * tau * zk;
    v.misfit += 0.5 * w * (u.row(k) - data.row(k)).array().square().matrix().dot(A);
  }
  for (std::size_t c = 0; c < L.mesh.num_cells(); ++c) {
    const double vol = L.mesh.signed_volume(c);
    v.regularization += 0.5 * gamma * vol * (a[c] - a0) * (a[c] - a0);
  }
  return v;
}

/// Adjoint sources w_k A_b z(t_k) (u - data) per level and observation node.
template <int Dim>
Eigen::MatrixXd residual_loads(const DomainLayout<Dim>& L, const Eigen::MatrixXd& u, const Eigen::MatrixXd& data,
                               const CutoffWeight& z, double tau) {
  if (u.rows() != data.rows() || u.cols() != data.cols())
    throw TraceMismatchError("observation and data traces are not aligned");
  const Eigen::VectorXd A = observation_weights(L);
  const long N = u.rows() - 1;
  Eigen::MatrixXd r(u.rows(), u.cols());
  for (long k = 0; k <= N; ++k) {
    const double w = trapezoid_weight(k, N) * z(k * tau);
    r.row(k) = w * (u.row(k) - data.row(k)).cwiseProduct(A.transpose());
  }
  return r;
}

template <int Dim>
Eigen::VectorXd cell_volumes(const SimplexMesh<Dim>& mesh) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(mesh.num_cells()));
  for (std::size_t c = 0; c < mesh.num_cells(); ++c) v[c] = mesh.signed_volume(c);
  return v;
}

/// Per-cell gradient density: misfit part plus gamma (a - a0). Cells of the
/// overlap layer are not unknowns and get 0.
template <int Dim>
Eigen::VectorXd gradient(const DomainLayout<Dim>& L, const Eigen::VectorXd& misfit_part, const CoefficientField& a,
                         double a0, double gamma) {
  Eigen::VectorXd g = misfit_part + gamma * (a.values.array() - a0).matrix();
  for (std::size_t c = 0; c < L.mesh.num_cells(); ++c)
    if (L.overlap_element[c]) g[c] = 0.0;
  return g;
}

/// Volume-weighted L2 norm over the FEM cells.
inline double weighted_norm(const Eigen::VectorXd& g, const Eigen::VectorXd& vol) {
  return std::sqrt(g.cwiseProduct(g).dot(vol));
}

struct Evaluation {
  TikhonovValue value;
  Eigen::VectorXd gradient;  // empty unless requested
  Eigen::MatrixXd observations;
};

/// Forward solve and functional; with `with_gradient` also the adjoint solve.
template <int Dim>
Evaluation evaluate(const InverseProblem<Dim>& P, const CoefficientField& a, bool with_gradient) {
  const auto& L = *P.layout;
  ForwardOptions<Dim> fo;
  fo.store_mesh_levels = with_gradient;
  fo.boundary = P.boundary;
  auto tr = solve_forward(L, a, P.pulse, P.tau, P.T, P.initial, fo);
  Evaluation e;
  e.value = tikhonov(L, tr.observations, P.data, a, P.a0, P.gamma, P.cutoff, P.tau);
  if (with_gradient) {
    AdjointOptions<Dim> ao;
    ao.forward_levels = &tr.mesh_levels;
    ao.boundary = P.boundary;
    auto adj = solve_adjoint(L, a, residual_loads(L, tr.observations, P.data, P.cutoff, P.tau), P.tau,
                             P.pulse.duration(), ao);
    e.gradient = gradient(L, adj.gradient, a, P.a0, P.gamma);
  }
  e.observations = std::move(tr.observations);
  return e;
}

/// Clamp into [lower, upper]; overlap-layer cells are reset to 1.
template <int Dim>
CoefficientField project_admissible(const DomainLayout<Dim>& L, CoefficientField a) {
  for (std::size_t c = 0; c < a.size(); ++c)
    a[c] = L.overlap_element[c] ? 1.0 : std::clamp(a[c], a.lower, a.upper);
  return a;
}

inline CoefficientField project_admissible(CoefficientField a, const std::vector<bool>& overlap) {
  for (std::size_t c = 0; c < a.size(); ++c)
    a[c] = (c < overlap.size() && overlap[c]) ? 1.0 : std::clamp(a[c], a.lower, a.upper);
  return a;
}

/// a if a > 0.6 max a, else 1.
inline CoefficientField postprocess(const CoefficientField& a, double fraction = 0.6) {
  if (a.size() == 0) throw Error("cannot post-process an empty field");
  CoefficientField out = a;
  const double thr = fraction * a.max();
  for (std::size_t c = 0; c < a.size(); ++c)
    if (!(a[c] > thr)) out[c] = 1.0;
  return out;
}

enum class StopReason { none, gradient_small, stabilized, max_iterations, line_search };

inline const char* to_string(StopReason r) {
  switch (r) {
    case StopReason::none: return "running";
    case StopReason::gradient_small: return "gradient_norm_below_tolerance";
    case StopReason::stabilized: return "gradient_norm_stabilized";
    case StopReason::max_iterations: return "iteration_limit";
    case StopReason::line_search: return "line_search_failed";
  }
  return "unknown";
}

/// Stop when the latest norm is at most theta, or when it moved by less than
/// `rel` relative to the norm three iterations earlier.
inline StopReason stopping_check(const std::vector<double>& norms, double theta, double rel = 1e-3,
                                 std::size_t window = 3) {
  if (norms.empty()) return StopReason::none;
  const double g = norms.back();
  if (g <= theta) return StopReason::gradient_small;
  if (norms.size() > window) {
    const double old = norms[norms.size() - 1 - window];
    if (old > 0.0 && std::abs(g - old) / old < rel) return StopReason::stabilized;
  }
  return StopReason::none;
}

/// One iterate of the conjugate-gradient loop.
struct InverseState {
  int m = 0;
  CoefficientField a;
  Eigen::VectorXd g;
  Eigen::VectorXd d;
  double beta = 0.0;
  double objective = 0.0;
  double misfit = 0.0;
  double grad_norm = 0.0;
  double alpha = 0.0;
  int backtracks = 0;
  bool restarted = false;
};

/// Fletcher-Reeves direction update. A zero previous norm or a direction
/// that is not a descent direction restarts with -g.
inline void cg_direction(InverseState& s, const Eigen::VectorXd& g_new, const Eigen::VectorXd& vol) {
  const double gn = weighted_norm(g_new, vol);
  const double go = s.g.size() ? weighted_norm(s.g, vol) : 0.0;
  s.restarted = false;
  if (s.m == 0 || s.d.size() == 0 || go == 0.0) {
    s.beta = 0.0;
    s.d = -g_new;
    s.restarted = s.m != 0;
  } else {
    s.beta = (gn * gn) / (go * go);
    s.d = -g_new + s.beta * s.d;
    if (s.d.cwiseProduct(g_new).dot(vol) >= 0.0) {
      s.beta = 0.0;
      s.d = -g_new;
      s.restarted = true;
    }
  }
  s.g = g_new;
  s.grad_norm = gn;
}

struct LineSearchOptions {
  double c1 = 1e-4;
  /// The first trial moves the largest cell by this much.
  double initial_step = 0.05;
  int max_backtracks = 12;
  /// Abort after this many consecutive trials that do not decrease the
  /// objective at all.
  int max_nondecreasing = 3;
};

struct ReconstructOptions {
  double theta = 1e-6;
  int max_iterations = 20;
  double stabilization = 1e-3;
  LineSearchOptions line_search;
};

struct ReconstructionReport {
  std::vector<InverseState> history;  // iterates 0..M
  CoefficientField final_a;
  CoefficientField postprocessed;
  StopReason reason = StopReason::none;
  int iterations = 0;
  std::string message;
};

/// Projected conjugate gradients from `a_init` with Armijo backtracking:
/// a_trial = P(a + alpha d), accepted when
/// J(a_trial) <= J(a) + c1 <g, a_trial - a>.
template <int Dim>
ReconstructionReport reconstruct(const InverseProblem<Dim>& P, const CoefficientField& a_init,
                                 const ReconstructOptions& opt = {},
                                 const std::function<void(const InverseState&)>& on_iterate = {}) {
  const auto& L = *P.layout;
  const Eigen::VectorXd vol = cell_volumes(L.mesh);
  ReconstructionReport rep;
  InverseState s;
  s.a = project_admissible(L, a_init);
  Evaluation ev = evaluate(P, s.a, true);
  s.objective = ev.value.total();
  s.misfit = ev.value.misfit;
  cg_direction(s, ev.gradient, vol);
  std::vector<double> norms{s.grad_norm};
  rep.history.push_back(s);
  if (on_iterate) on_iterate(s);

  const auto& ls = opt.line_search;
  while (true) {
    StopReason r = stopping_check(norms, opt.theta, opt.stabilization);
    if (r == StopReason::none && s.m >= opt.max_iterations) r = StopReason::max_iterations;
    if (r != StopReason::none) {
      rep.reason = r;
      break;
    }
    const double dmax = s.d.cwiseAbs().maxCoeff();
    if (dmax == 0.0) {
      rep.reason = StopReason::gradient_small;
      break;
    }
    double alpha = ls.initial_step / dmax;
    int nondecreasing = 0, tries = 0;
    bool accepted = false;
    CoefficientField trial;
    Evaluation tev;
    for (; tries <= ls.max_backtracks; ++tries, alpha *= 0.5) {
      trial = s.a;
      trial.values += alpha * s.d;
      trial = project_admissible(L, trial);
      const Eigen::VectorXd step = trial.values - s.a.values;
      if (step.cwiseAbs().maxCoeff() == 0.0) break;
      tev = evaluate(P, trial, false);
      const double jt = tev.value.total();
      if (jt <= s.objective + ls.c1 * s.g.cwiseProduct(step).dot(vol)) {
        accepted = true;
        break;
      }
      nondecreasing = jt >= s.objective ? nondecreasing + 1 : 0;
      if (nondecreasing >= ls.max_nondecreasing) break;
    }
    if (!accepted) {
      rep.reason = StopReason::line_search;
      std::ostringstream msg;
      msg << "objective did not decrease after " << tries + 1 << " trial steps at iteration " << s.m + 1
          << " (J = " << s.objective << ")";
      rep.message = msg.str();
      break;
    }
    InverseState n;
    n.m = s.m + 1;
    n.a = trial;
    n.alpha = alpha;
    n.backtracks = tries;
    n.d = s.d;
    n.g = s.g;
    ev = evaluate(P, n.a, true);
    n.objective = ev.value.total();
    n.misfit = ev.value.misfit;
    cg_direction(n, ev.gradient, vol);
    s = n;
    norms.push_back(s.grad_norm);
    rep.history.push_back(s);
    if (on_iterate) on_iterate(s);
  }
  rep.final_a = s.a;
  rep.postprocessed = postprocess(s.a);
  rep.iterations = s.m;
  return rep;
}

}  // namespace hybwave
