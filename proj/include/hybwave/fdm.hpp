#pragma once

// Explicit leapfrog updates on the structured grid: Laplacian stencil, forward
// and adjoint steps, first-order absorbing and Neumann/source boundaries.

#include <cmath>
#include <stdexcept>
#include <type_traits>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "hybwave/core.hpp"
#include "hybwave/geometry.hpp"

namespace hybwave {

/// Three consecutive time levels. `k` is the level held in `curr`; forward
/// runs increase it, adjoint runs decrease it.
struct WaveState {
  Eigen::VectorXd next, curr, prev;
  long k = 0;

  WaveState() = default;
  explicit WaveState(Eigen::Index n)
      : next(Eigen::VectorXd::Zero(n)), curr(Eigen::VectorXd::Zero(n)), prev(Eigen::VectorXd::Zero(n)) {}

  Eigen::Index size() const { return curr.size(); }

  /// prev <- curr <- next. The old prev buffer is recycled as next.
  void rotate(long direction = 1) {
    std::swap(prev, curr);
    std::swap(curr, next);
    k += direction;
  }
};

inline void check_finite(const Eigen::VectorXd& v, const std::vector<std::size_t>& nodes, long step,
                         const char* where) {
  for (std::size_t i : nodes)
    if (!std::isfinite(v[static_cast<Eigen::Index>(i)])) throw InstabilityError(i, step, where);
}

inline void check_finite(const Eigen::VectorXd& v, long step, const char* where) {
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (!std::isfinite(v[i])) throw InstabilityError(static_cast<std::size_t>(i), step, where);
}

enum class FaceCondition { neumann, source, absorbing };

/// One condition per outer face, indexed 2*axis + side. A `source` face
/// carries dn u = p(t) while t <= switch_time and is absorbing afterwards.
struct BoundarySpec {
  std::vector<FaceCondition> faces;
  double switch_time = 0.0;

  FaceCondition at(Face f, double t) const {
    FaceCondition c = faces.at(static_cast<std::size_t>(2 * f.axis + f.side));
    if (c == FaceCondition::source && t > switch_time) return FaceCondition::absorbing;
    return c;
  }

  /// Front face: source then absorbing; back face absorbing; lateral Neumann.
  static BoundarySpec waveguide(int dim, double t1) {
    BoundarySpec s;
    s.faces.assign(static_cast<std::size_t>(2 * dim), FaceCondition::neumann);
    s.faces[0] = FaceCondition::source;
    s.faces[1] = FaceCondition::absorbing;
    s.switch_time = t1;
    return s;
  }

  static BoundarySpec uniform(int dim, FaceCondition c) {
    BoundarySpec s;
    s.faces.assign(static_cast<std::size_t>(2 * dim), c);
    return s;
  }
};

/// Sum over axes of the centred second difference at an interior node.
template <int Dim>
double laplacian(const Eigen::VectorXd& u, const StructuredGrid<Dim>& grid, const std::type_identity_t<Index<Dim>>& m) {
  for (int d = 0; d < Dim; ++d)
    if (m[d] == 0 || m[d] + 1 >= grid.dims()[d])
      throw std::out_of_range("laplacian: node is not interior");
  const std::size_t i = grid.index(m);
  double s = 0.0;
  for (int d = 0; d < Dim; ++d) {
    const std::size_t st = grid.strides()[d];
    const double h = grid.spacing()[d];
    s += (u[i + st] - 2.0 * u[i] + u[i - st]) / (h * h);
  }
  return s;
}

template <int Dim>
inline double laplacian_unchecked(const Eigen::VectorXd& u, const StructuredGrid<Dim>& grid,
                                  std::size_t i) {
  double s = 0.0;
  for (int d = 0; d < Dim; ++d) {
    const std::size_t st = grid.strides()[d];
    const double h = grid.spacing()[d];
    s += (u[i + st] - 2.0 * u[i] + u[i - st]) / (h * h);
  }
  return s;
}

template <int Dim>
std::vector<std::size_t> interior_nodes(const StructuredGrid<Dim>& grid) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < grid.size(); ++i)
    if (!grid.on_boundary(grid.multi(i))) out.push_back(i);
  return out;
}

/// next = tau^2 Lap(curr) + 2 curr - prev on `nodes` (interior grid nodes).
template <int Dim>
void fdm_update(WaveState& s, const StructuredGrid<Dim>& grid, double tau,
                const std::vector<std::size_t>& nodes) {
  const double t2 = tau * tau;
  for (std::size_t i : nodes) s.next[i] = t2 * laplacian_unchecked(s.curr, grid, i) + 2.0 * s.curr[i] - s.prev[i];
}

/// Forward step on every interior node. Boundary values are left to
/// FdmBoundary::apply.
template <int Dim>
void forward_step(WaveState& s, const StructuredGrid<Dim>& grid, double tau) {
  const auto nodes = interior_nodes(grid);
  fdm_update(s, grid, tau, nodes);
  check_finite(s.next, nodes, s.k + 1, "fdm forward step");
}

/// Backward step: next holds level k-1, curr level k, prev level k+1.
/// `residual` lists (node, value) pairs already weighted by the cut-off.
template <int Dim>
void adjoint_update(WaveState& s, const StructuredGrid<Dim>& grid, double tau,
                    const std::vector<std::size_t>& nodes,
                    const std::vector<std::pair<std::size_t, double>>& residual) {
  fdm_update(s, grid, tau, nodes);
  const double t2 = tau * tau;
  for (const auto& [i, r] : residual) s.next[i] -= t2 * r;
}

template <int Dim>
void adjoint_step(WaveState& s, const StructuredGrid<Dim>& grid, double tau,
                  const std::vector<std::pair<std::size_t, double>>& residual) {
  const auto nodes = interior_nodes(grid);
  adjoint_update(s, grid, tau, nodes, residual);
  check_finite(s.next, nodes, s.k - 1, "fdm adjoint step");
}

/// First-order absorbing update for one boundary node b with inward
/// neighbour nb along the face normal:
///   u_b^{new} = u_nb^{old} + r (u_b^{old} - u_nb^{new}),  r = (dx - tau)/(dx + tau).
inline double absorbing_value(double nb_new, double nb_old, double b_old, double dx, double tau) {
  const double r = (dx - tau) / (dx + tau);
  return nb_old + b_old * r - nb_new * r;
}

/// One-sided Neumann data dn u = p with the outward normal: boundary value is
/// the interior partner plus dx * p.
inline double neumann_value(double nb, double p, double dx) { return nb + dx * p; }

/// Precomputed boundary node lists for a grid. Faces are processed with the
/// axis index descending so that the front/back faces (axis 0) are written
/// last and see already-filled lateral values at shared edges.
template <int Dim>
class FdmBoundary {
 public:
  struct Node {
    std::size_t b;        // boundary node
    std::size_t normal;   // inward neighbour along the face normal
    std::size_t clamped;  // nearest interior node (all coordinates clamped)
  };

  FdmBoundary() = default;

  explicit FdmBoundary(const StructuredGrid<Dim>& grid) : grid_(&grid) {
    for (int axis = Dim - 1; axis >= 0; --axis) {
      for (int side = 0; side < 2; ++side) {
        FaceList fl;
        fl.face = Face{axis, side};
        for (std::size_t b : grid.face_nodes(fl.face)) {
          Index<Dim> m = grid.multi(b);
          Index<Dim> nb = m;
          nb[axis] = side == 0 ? 1 : grid.dims()[axis] - 2;
          fl.nodes.push_back(Node{b, grid.index(nb), grid.clamped_interior(m)});
        }
        faces_.push_back(std::move(fl));
      }
    }
  }

  /// Fills boundary values of `next` (time t_next) from interior values of
  /// `next` and both levels at the boundary. Works for forward and backward
  /// marches alike: `curr` is always the level adjacent to `next`.
  void apply(Eigen::VectorXd& next, const Eigen::VectorXd& curr, const BoundarySpec& spec, double t_next,
             double p_value, double tau) const {
    for (const auto& fl : faces_) {
      const double dx = grid_->spacing()[fl.face.axis];
      switch (spec.at(fl.face, t_next)) {
        case FaceCondition::neumann:
          for (const auto& n : fl.nodes) next[n.b] = next[n.clamped];
          break;
        case FaceCondition::source:
          for (const auto& n : fl.nodes) next[n.b] = neumann_value(next[n.clamped], p_value, dx);
          break;
        case FaceCondition::absorbing:
          for (const auto& n : fl.nodes)
            next[n.b] = absorbing_value(next[n.normal], curr[n.normal], curr[n.b], dx, tau);
          break;
      }
    }
  }

  /// Transpose of `apply` with p = 0: sensitivities sitting on boundary
  /// nodes of `next_bar` are pushed back onto the entries the forward map
  /// read from, in reverse write order. Boundary entries of `next_bar` end
  /// up zero.
  void apply_transpose(Eigen::VectorXd& next_bar, Eigen::VectorXd& curr_bar, const BoundarySpec& spec,
                       double t_next, double tau) const {
    for (auto fl = faces_.rbegin(); fl != faces_.rend(); ++fl) {
      const double dx = grid_->spacing()[fl->face.axis];
      const double r = (dx - tau) / (dx + tau);
      const auto cond = spec.at(fl->face, t_next);
      for (auto n = fl->nodes.rbegin(); n != fl->nodes.rend(); ++n) {
        const double beta = next_bar[n->b];
        next_bar[n->b] = 0.0;
        if (beta == 0.0) continue;
        if (cond == FaceCondition::absorbing) {
          next_bar[n->normal] -= r * beta;
          curr_bar[n->normal] += beta;
          curr_bar[n->b] += r * beta;
        } else {
          next_bar[n->clamped] += beta;
        }
      }
    }
  }

  const std::vector<Node>& face(Face f) const {
    for (const auto& fl : faces_)
      if (fl.face.axis == f.axis && fl.face.side == f.side) return fl.nodes;
    throw std::out_of_range("no such face");
  }

 private:
  struct FaceList {
    Face face;
    std::vector<Node> nodes;
  };
  const StructuredGrid<Dim>* grid_ = nullptr;
  std::vector<FaceList> faces_;
};

/// Absorbing update of a single face; thin wrapper used by tests and tools.
template <int Dim>
void apply_absorbing(Face f, Eigen::VectorXd& next, const Eigen::VectorXd& curr, const StructuredGrid<Dim>& grid,
                     double tau) {
  FdmBoundary<Dim> fb(grid);
  const double dx = grid.spacing()[f.axis];
  for (const auto& n : fb.face(f)) next[n.b] = absorbing_value(next[n.normal], curr[n.normal], curr[n.b], dx, tau);
}

template <int Dim>
void apply_neumann_source(Face f, double p_value, Eigen::VectorXd& next, const StructuredGrid<Dim>& grid) {
  FdmBoundary<Dim> fb(grid);
  const double dx = grid.spacing()[f.axis];
  for (const auto& n : fb.face(f)) next[n.b] = neumann_value(next[n.clamped], p_value, dx);
}

}  // namespace hybwave
