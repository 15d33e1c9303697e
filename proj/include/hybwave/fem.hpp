#pragma once

// P1 assembly on simplices (lumped mass, stiffness with piecewise-constant
// conductivity, boundary flux matrix) and the explicit element updates.

#include <cmath>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "hybwave/core.hpp"
#include "hybwave/fdm.hpp"
#include "hybwave/geometry.hpp"

namespace hybwave {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Piecewise-constant conductivity, one value per cell.
struct CoefficientField {
  Eigen::VectorXd values;
  double lower = 1.0;
  double upper = 5.0;

  CoefficientField() = default;
  CoefficientField(std::size_t ncells, double value, double lo = 1.0, double hi = 5.0)
      : values(Eigen::VectorXd::Constant(static_cast<Eigen::Index>(ncells), value)), lower(lo), upper(hi) {}

  std::size_t size() const { return static_cast<std::size_t>(values.size()); }
  double max() const { return values.maxCoeff(); }
  double operator[](std::size_t c) const { return values[static_cast<Eigen::Index>(c)]; }
  double& operator[](std::size_t c) { return values[static_cast<Eigen::Index>(c)]; }
};

/// Volume and constant basis gradients of one P1 element. Row i of `grad`
/// is the gradient of the hat function of local vertex i.
template <int Dim>
struct ElementGeometry {
  double volume = 0.0;
  Eigen::Matrix<double, Dim + 1, Dim> grad;
};

template <int Dim>
ElementGeometry<Dim> element_geometry(const SimplexMesh<Dim>& mesh, std::size_t c) {
  const auto& cell = mesh.cells[c];
  Eigen::Matrix<double, Dim, Dim> jac;
  for (int k = 0; k < Dim; ++k)
    for (int d = 0; d < Dim; ++d) jac(d, k) = mesh.vertices[cell[k + 1]][d] - mesh.vertices[cell[0]][d];
  ElementGeometry<Dim> g;
  const double det = jac.determinant();
  g.volume = det / static_cast<double>(factorial(Dim));
  double scale = 1.0;
  for (int d = 0; d < Dim; ++d) scale *= jac.col(d).norm();
  if (!(det > 1e-14 * scale))
    throw DegenerateElementError("element " + std::to_string(c) + " has non-positive volume");
  // Barycentric coordinates 1..Dim are the rows of jac^{-1}.
  Eigen::Matrix<double, Dim, Dim> inv = jac.inverse();
  g.grad.row(0).setZero();
  for (int k = 0; k < Dim; ++k) {
    g.grad.row(k + 1) = inv.row(k);
    g.grad.row(0) -= inv.row(k);
  }
  return g;
}

template <int Dim>
std::vector<ElementGeometry<Dim>> element_geometries(const SimplexMesh<Dim>& mesh) {
  std::vector<ElementGeometry<Dim>> out;
  out.reserve(mesh.num_cells());
  for (std::size_t c = 0; c < mesh.num_cells(); ++c) out.push_back(element_geometry(mesh, c));
  return out;
}

/// Volume relative to a regular simplex with the same longest edge; 1 for a
/// regular simplex, tends to 0 for slivers.
template <int Dim>
double element_quality(const SimplexMesh<Dim>& mesh, std::size_t c) {
  const double L = mesh.diameter(c);
  const double regular = std::pow(L, Dim) / static_cast<double>(factorial(Dim)) *
                         std::sqrt(static_cast<double>(Dim + 1)) / std::pow(2.0, 0.5 * Dim);
  return mesh.signed_volume(c) / regular;
}

template <int Dim>
void check_mesh_quality(const SimplexMesh<Dim>& mesh, double min_quality = 0.1) {
  for (std::size_t c = 0; c < mesh.num_cells(); ++c) {
    if (mesh.signed_volume(c) <= 0.0)
      throw DegenerateElementError("element " + std::to_string(c) + " has non-positive volume");
    if (element_quality(mesh, c) < min_quality)
      throw DegenerateElementError("element " + std::to_string(c) + " violates the shape bound");
  }
}

/// Row-sum lumped P1 mass: each vertex receives vol/(Dim+1) from every cell.
template <int Dim>
Eigen::VectorXd assemble_mass_lumped(const SimplexMesh<Dim>& mesh) {
  Eigen::VectorXd m = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(mesh.num_vertices()));
  for (std::size_t c = 0; c < mesh.num_cells(); ++c) {
    const double v = element_geometry(mesh, c).volume;
    for (std::size_t i : mesh.cells[c]) m[i] += v / (Dim + 1);
  }
  return m;
}

/// Consistent P1 mass, used only to check the lumping identity.
template <int Dim>
SparseMatrix assemble_mass_consistent(const SimplexMesh<Dim>& mesh) {
  std::vector<Eigen::Triplet<double>> trip;
  const double diag = 2.0 / ((Dim + 1) * (Dim + 2));
  const double off = 1.0 / ((Dim + 1) * (Dim + 2));
  for (std::size_t c = 0; c < mesh.num_cells(); ++c) {
    const double v = element_geometry(mesh, c).volume;
    for (int i = 0; i <= Dim; ++i)
      for (int j = 0; j <= Dim; ++j)
        trip.emplace_back(mesh.cells[c][i], mesh.cells[c][j], v * (i == j ? diag : off));
  }
  SparseMatrix M(mesh.num_vertices(), mesh.num_vertices());
  M.setFromTriplets(trip.begin(), trip.end());
  return M;
}

template <int Dim>
SparseMatrix assemble_stiffness(const SimplexMesh<Dim>& mesh, const std::vector<ElementGeometry<Dim>>& geo,
                                const Eigen::VectorXd& a) {
  if (static_cast<std::size_t>(a.size()) != mesh.num_cells())
    throw Error("coefficient size does not match the number of cells");
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(mesh.num_cells() * (Dim + 1) * (Dim + 1));
  for (std::size_t c = 0; c < mesh.num_cells(); ++c) {
    const auto& g = geo[c];
    Eigen::Matrix<double, Dim + 1, Dim + 1> ke = (a[c] * g.volume) * (g.grad * g.grad.transpose());
    for (int i = 0; i <= Dim; ++i)
      for (int j = 0; j <= Dim; ++j) trip.emplace_back(mesh.cells[c][i], mesh.cells[c][j], ke(i, j));
  }
  SparseMatrix K(mesh.num_vertices(), mesh.num_vertices());
  K.setFromTriplets(trip.begin(), trip.end());
  return K;
}

template <int Dim>
SparseMatrix assemble_stiffness(const SimplexMesh<Dim>& mesh, const CoefficientField& a) {
  return assemble_stiffness(mesh, element_geometries(mesh), a.values);
}

/// G_ij = sum over boundary faces F of the owner cell: (grad phi_i . n_F) * int_F phi_j.
template <int Dim>
SparseMatrix assemble_boundary(const SimplexMesh<Dim>& mesh) {
  std::vector<Eigen::Triplet<double>> trip;
  for (std::size_t f = 0; f < mesh.boundary_faces.size(); ++f) {
    const auto& own = mesh.boundary_owners[f];
    const auto g = element_geometry(mesh, own.owner);
    // The opposite vertex's barycentric coordinate grows inwards.
    Eigen::Matrix<double, 1, Dim> go = g.grad.row(own.opposite_local);
    const double gn = go.norm();
    Eigen::Matrix<double, 1, Dim> n = -go / gn;
    const double area = Dim * g.volume * gn;
    const double face_weight = area / Dim;
    for (int i = 0; i <= Dim; ++i) {
      const double dn = g.grad.row(i).dot(n);
      for (std::size_t j : mesh.boundary_faces[f]) trip.emplace_back(mesh.cells[own.owner][i], j, dn * face_weight);
    }
  }
  SparseMatrix G(mesh.num_vertices(), mesh.num_vertices());
  G.setFromTriplets(trip.begin(), trip.end());
  return G;
}

/// Everything the element update needs for one coefficient field.
template <int Dim>
struct AssembledOperators {
  Eigen::VectorXd mass;  // lumped
  SparseMatrix K;
  SparseMatrix G;
  SparseMatrix Gt;  // flux load: (Gt u)_j = int dn u_h phi_j
  std::vector<ElementGeometry<Dim>> geometry;

  void set_coefficient(const SimplexMesh<Dim>& mesh, const CoefficientField& a) {
    K = assemble_stiffness(mesh, geometry, a.values);
  }
};

template <int Dim>
AssembledOperators<Dim> assemble_operators(const SimplexMesh<Dim>& mesh, const CoefficientField& a) {
  AssembledOperators<Dim> ops;
  ops.geometry = element_geometries(mesh);
  ops.mass = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(mesh.num_vertices()));
  for (std::size_t c = 0; c < mesh.num_cells(); ++c)
    for (std::size_t i : mesh.cells[c]) ops.mass[i] += ops.geometry[c].volume / (Dim + 1);
  ops.K = assemble_stiffness(mesh, ops.geometry, a.values);
  ops.G = assemble_boundary(mesh);
  ops.Gt = SparseMatrix(ops.G.transpose());
  return ops;
}

namespace detail {

inline double row_dot(const SparseMatrix& A, Eigen::Index row, const Eigen::VectorXd& x) {
  double s = 0.0;
  for (SparseMatrix::InnerIterator it(A, row); it; ++it) s += it.value() * x[it.col()];
  return s;
}

}  // namespace detail

/// next_i = 2 curr_i - prev_i - tau^2/M_i [(K curr)_i + (Gt curr)_i] on `rows`.
/// Rows outside the list (the exchange boundary) are left untouched.
template <int Dim>
void fem_update(WaveState& s, const AssembledOperators<Dim>& ops, double tau, const std::vector<std::size_t>& rows) {
  const double t2 = tau * tau;
  for (std::size_t r : rows) {
    const auto i = static_cast<Eigen::Index>(r);
    const double load = detail::row_dot(ops.K, i, s.curr) + detail::row_dot(ops.Gt, i, s.curr);
    s.next[i] = 2.0 * s.curr[i] - s.prev[i] - t2 * load / ops.mass[i];
  }
}

template <int Dim>
void fem_forward_step(WaveState& s, const AssembledOperators<Dim>& ops, double tau,
                      const std::vector<std::size_t>& rows) {
  fem_update(s, ops, tau, rows);
  check_finite(s.next, rows, s.k + 1, "fem forward step");
}

/// Backward element step; `residual` is a nodal load (node, value) already
/// weighted by the cut-off, divided by the lumped mass here.
template <int Dim>
void fem_adjoint_step(WaveState& s, const AssembledOperators<Dim>& ops, double tau,
                      const std::vector<std::size_t>& rows,
                      const std::vector<std::pair<std::size_t, double>>& residual = {}) {
  fem_update(s, ops, tau, rows);
  for (const auto& [i, r] : residual) s.next[i] -= tau * tau * r / ops.mass[i];
  check_finite(s.next, rows, s.k - 1, "fem adjoint step");
}

}  // namespace hybwave
