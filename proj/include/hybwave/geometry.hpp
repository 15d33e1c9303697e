#pragma once

// Structured grid, Kuhn-subdivided simplex mesh and the node classes of the
// overlapping FEM/FDM decomposition.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "hybwave/core.hpp"

namespace hybwave {

/// Outer faces of the structured box. Axis 0 carries the front (observation)
/// and back faces; every other face belongs to the lateral union.
enum class FaceTag { front, back, lateral };

struct Face {
  int axis = 0;
  int side = 0;  // 0: low end, 1: high end
};

template <int Dim>
class StructuredGrid {
 public:
  StructuredGrid() = default;

  StructuredGrid(const Point<Dim>& origin, const Point<Dim>& spacing, const Index<Dim>& dims)
      : origin_(origin), spacing_(spacing), dims_(dims) {
    std::size_t s = 1;
    for (int d = 0; d < Dim; ++d) {
      if (!(spacing[d] > 0.0)) throw GeometryError("grid spacing must be positive");
      if (dims[d] < 3) throw GeometryError("grid needs at least 3 nodes per axis");
      strides_[d] = s;
      s *= dims[d];
    }
    size_ = s;
  }

  const Point<Dim>& origin() const { return origin_; }
  const Point<Dim>& spacing() const { return spacing_; }
  const Index<Dim>& dims() const { return dims_; }
  const Index<Dim>& strides() const { return strides_; }
  std::size_t size() const { return size_; }

  std::size_t index(const Index<Dim>& m) const {
    std::size_t i = 0;
    for (int d = 0; d < Dim; ++d) i += m[d] * strides_[d];
    return i;
  }

  Index<Dim> multi(std::size_t i) const {
    Index<Dim> m{};
    for (int d = 0; d < Dim; ++d) {
      m[d] = i % dims_[d];
      i /= dims_[d];
    }
    return m;
  }

  Point<Dim> coord(const Index<Dim>& m) const {
    Point<Dim> p{};
    for (int d = 0; d < Dim; ++d) p[d] = origin_[d] + static_cast<double>(m[d]) * spacing_[d];
    return p;
  }

  Point<Dim> coord(std::size_t i) const { return coord(multi(i)); }

  bool on_boundary(const Index<Dim>& m) const {
    for (int d = 0; d < Dim; ++d)
      if (m[d] == 0 || m[d] + 1 == dims_[d]) return true;
    return false;
  }

  bool on_boundary(std::size_t i) const { return on_boundary(multi(i)); }

  bool on_face(const Index<Dim>& m, Face f) const {
    return m[f.axis] == (f.side == 0 ? 0 : dims_[f.axis] - 1);
  }

  /// Nodes of one outer face, in increasing index order.
  std::vector<std::size_t> face_nodes(Face f) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < size_; ++i)
      if (on_face(multi(i), f)) out.push_back(i);
    return out;
  }

  /// Interior node the boundary value at m is copied from: every coordinate
  /// clamped into [1, n-2].
  std::size_t clamped_interior(const Index<Dim>& m) const {
    Index<Dim> c = m;
    for (int d = 0; d < Dim; ++d) c[d] = std::clamp<std::size_t>(m[d], 1, dims_[d] - 2);
    return index(c);
  }

  FaceTag tag(const Index<Dim>& m) const {
    if (m[0] == 0) return FaceTag::front;
    if (m[0] + 1 == dims_[0]) return FaceTag::back;
    return FaceTag::lateral;
  }

  double cell_volume() const {
    double v = 1.0;
    for (int d = 0; d < Dim; ++d) v *= spacing_[d];
    return v;
  }

  Box<Dim> bounds() const {
    Box<Dim> b;
    for (int d = 0; d < Dim; ++d) {
      b.lo[d] = origin_[d];
      b.hi[d] = origin_[d] + static_cast<double>(dims_[d] - 1) * spacing_[d];
    }
    return b;
  }

 private:
  Point<Dim> origin_{};
  Point<Dim> spacing_{};
  Index<Dim> dims_{};
  Index<Dim> strides_{};
  std::size_t size_ = 0;
};

template <int Dim>
using Cell = std::array<std::size_t, Dim + 1>;

template <int Dim>
using Facet = std::array<std::size_t, Dim>;

struct BoundaryFace {
  std::size_t owner = 0;      // cell containing the face
  int opposite_local = 0;     // local index of the owner vertex not on the face
};

/// Conforming simplex mesh (segments, triangles or tetrahedra).
template <int Dim>
struct SimplexMesh {
  std::vector<Point<Dim>> vertices;
  std::vector<Cell<Dim>> cells;
  std::vector<Facet<Dim>> boundary_faces;
  std::vector<BoundaryFace> boundary_owners;

  std::size_t num_vertices() const { return vertices.size(); }
  std::size_t num_cells() const { return cells.size(); }

  Point<Dim> centroid(std::size_t c) const {
    Point<Dim> p{};
    for (std::size_t v : cells[c])
      for (int d = 0; d < Dim; ++d) p[d] += vertices[v][d];
    for (int d = 0; d < Dim; ++d) p[d] /= static_cast<double>(Dim + 1);
    return p;
  }

  /// Element diameter (longest edge).
  double diameter(std::size_t c) const {
    double h = 0.0;
    for (int i = 0; i <= Dim; ++i)
      for (int j = i + 1; j <= Dim; ++j)
        h = std::max(h, distance<Dim>(vertices[cells[c][i]], vertices[cells[c][j]]));
    return h;
  }

  double signed_volume(std::size_t c) const {
    Eigen::Matrix<double, Dim, Dim> jac;
    const auto& x0 = vertices[cells[c][0]];
    for (int k = 0; k < Dim; ++k)
      for (int d = 0; d < Dim; ++d) jac(d, k) = vertices[cells[c][k + 1]][d] - x0[d];
    return jac.determinant() / static_cast<double>(factorial(Dim));
  }

  /// Rebuilds boundary_faces from cell connectivity: facets owned by exactly
  /// one cell.
  void compute_boundary() {
    std::map<Facet<Dim>, std::pair<int, BoundaryFace>> count;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      for (int skip = 0; skip <= Dim; ++skip) {
        Facet<Dim> f{};
        int n = 0;
        for (int k = 0; k <= Dim; ++k)
          if (k != skip) f[n++] = cells[c][k];
        Facet<Dim> key = f;
        std::sort(key.begin(), key.end());
        auto& e = count[key];
        if (e.first == 0) e.second = BoundaryFace{c, skip};
        ++e.first;
      }
    }
    boundary_faces.clear();
    boundary_owners.clear();
    for (const auto& [key, e] : count) {
      if (e.first != 1) continue;
      Facet<Dim> f{};
      int n = 0;
      for (int k = 0; k <= Dim; ++k)
        if (k != e.second.opposite_local) f[n++] = cells[e.second.owner][k];
      boundary_faces.push_back(f);
      boundary_owners.push_back(e.second);
    }
  }

  /// Every facet is shared by at most two cells.
  bool conforming() const {
    std::map<Facet<Dim>, int> count;
    for (const auto& cell : cells) {
      for (int skip = 0; skip <= Dim; ++skip) {
        Facet<Dim> f{};
        int n = 0;
        for (int k = 0; k <= Dim; ++k)
          if (k != skip) f[n++] = cell[k];
        std::sort(f.begin(), f.end());
        if (++count[f] > 2) return false;
      }
    }
    return true;
  }

  std::vector<bool> boundary_vertex_mask() const {
    std::vector<bool> mask(vertices.size(), false);
    for (const auto& f : boundary_faces)
      for (std::size_t v : f) mask[v] = true;
    return mask;
  }
};

namespace detail {

template <int Dim>
std::vector<std::array<int, Dim + 1>> kuhn_template() {
  // Simplex for permutation p walks from corner 0 to corner 2^Dim-1 adding one
  // axis at a time; corners are bitmasks (bit d = +1 offset along axis d).
  std::array<int, Dim> perm{};
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<std::array<int, Dim + 1>> out;
  do {
    std::array<int, Dim + 1> s{};
    int corner = 0;
    s[0] = 0;
    for (int k = 0; k < Dim; ++k) {
      corner |= 1 << perm[k];
      s[k + 1] = corner;
    }
    Eigen::Matrix<double, Dim, Dim> jac;
    for (int k = 0; k < Dim; ++k)
      for (int d = 0; d < Dim; ++d) jac(d, k) = (s[k + 1] >> d) & 1;
    if (jac.determinant() < 0) std::swap(s[Dim - 1], s[Dim]);
    out.push_back(s);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return out;
}

}  // namespace detail

/// Splits a cube into Dim! positively oriented simplices sharing the main
/// diagonal. `corners[c]` is the vertex id of the corner with offset bitmask c.
/// Using the same diagonal in every cube makes the tiling conforming.
template <int Dim>
std::vector<Cell<Dim>> kuhn_subdivide(const std::array<std::size_t, (1 << Dim)>& corners) {
  static const auto tmpl = detail::kuhn_template<Dim>();
  std::vector<Cell<Dim>> out;
  out.reserve(tmpl.size());
  for (const auto& s : tmpl) {
    Cell<Dim> c{};
    for (int k = 0; k <= Dim; ++k) c[k] = corners[s[k]];
    out.push_back(c);
  }
  return out;
}

/// The four node classes of the overlap scheme plus exchange maps.
/// All grid-side sets hold grid indices; mesh-side sets hold vertex ids.
struct NodeClasses {
  std::vector<std::size_t> omega_o;        // on boundary of FEM, interior to FDM
  std::vector<std::size_t> omega_diamond;  // on boundary of the FDM hole, interior to FEM
  std::vector<std::size_t> omega_star;     // interior to FEM
  std::vector<std::size_t> omega_plus;     // interior to FDM
  std::vector<std::size_t> outer_boundary;

  std::vector<std::size_t> mesh_o;
  std::vector<std::size_t> mesh_diamond;
  std::vector<std::size_t> mesh_star;

  /// grid -> mesh at omega_o, mesh -> grid at omega_diamond.
  std::vector<std::pair<std::size_t, std::size_t>> exchange_o;
  std::vector<std::pair<std::size_t, std::size_t>> exchange_diamond;

  /// -1 where a grid node has no coincident mesh vertex.
  std::vector<long> mesh_of_grid;
  std::vector<long> grid_of_mesh;

  /// Grid nodes the FDM kernel updates: omega_plus, omega_o, omega_diamond.
  std::vector<std::size_t> fdm_active;
  /// Mesh vertices the FEM kernel updates: omega_star, omega_diamond.
  std::vector<std::size_t> fem_active;
};

template <int Dim>
NodeClasses classify_nodes(const StructuredGrid<Dim>& grid, const SimplexMesh<Dim>& mesh) {
  NodeClasses nc;
  const auto& h = grid.spacing();
  const auto& n = grid.dims();
  nc.mesh_of_grid.assign(grid.size(), -1);
  nc.grid_of_mesh.assign(mesh.num_vertices(), -1);

  auto boundary = mesh.boundary_vertex_mask();
  std::vector<bool> diamond(mesh.num_vertices(), false);
  for (const auto& cell : mesh.cells) {
    bool touches = false;
    for (std::size_t v : cell) touches = touches || boundary[v];
    if (!touches) continue;
    for (std::size_t v : cell)
      if (!boundary[v]) diamond[v] = true;
  }

  auto match = [&](std::size_t v, bool required) -> long {
    const auto& x = mesh.vertices[v];
    Index<Dim> m{};
    for (int d = 0; d < Dim; ++d) {
      double r = std::round((x[d] - grid.origin()[d]) / h[d]);
      if (r < 0 || r > static_cast<double>(n[d] - 1)) {
        if (required) break;
        return -1;
      }
      m[d] = static_cast<std::size_t>(r);
    }
    auto g = grid.coord(m);
    for (int d = 0; d < Dim; ++d) {
      if (std::abs(g[d] - x[d]) > 1e-12 * h[d]) {
        if (!required) return -1;
        std::ostringstream msg;
        msg << "mesh vertex " << v << " at (";
        for (int e = 0; e < Dim; ++e) msg << (e ? ", " : "") << x[e];
        msg << ") has no coincident grid node";
        throw UnmatchedOverlapNodeError(msg.str());
      }
    }
    return static_cast<long>(grid.index(m));
  };

  Box<Dim> bbox;
  bbox.lo.fill(std::numeric_limits<double>::max());
  bbox.hi.fill(std::numeric_limits<double>::lowest());
  for (std::size_t v = 0; v < mesh.num_vertices(); ++v) {
    for (int d = 0; d < Dim; ++d) {
      bbox.lo[d] = std::min(bbox.lo[d], mesh.vertices[v][d]);
      bbox.hi[d] = std::max(bbox.hi[d], mesh.vertices[v][d]);
    }
    bool overlap = boundary[v] || diamond[v];
    long g = match(v, overlap);
    if (g < 0) continue;
    if (nc.mesh_of_grid[g] >= 0)
      throw GeometryError("two mesh vertices coincide with grid node " + std::to_string(g));
    nc.mesh_of_grid[g] = static_cast<long>(v);
    nc.grid_of_mesh[v] = g;
  }

  for (std::size_t v = 0; v < mesh.num_vertices(); ++v) {
    if (boundary[v]) {
      nc.mesh_o.push_back(v);
    } else if (diamond[v]) {
      nc.mesh_diamond.push_back(v);
    } else {
      nc.mesh_star.push_back(v);
    }
  }

  for (std::size_t i = 0; i < grid.size(); ++i) {
    auto m = grid.multi(i);
    if (grid.on_boundary(m)) {
      nc.outer_boundary.push_back(i);
      continue;
    }
    long v = nc.mesh_of_grid[i];
    if (v >= 0) {
      if (boundary[v]) {
        if (grid.on_boundary(m)) throw GeometryError("FEM boundary touches the outer boundary");
        nc.omega_o.push_back(i);
        nc.exchange_o.emplace_back(i, static_cast<std::size_t>(v));
      } else if (diamond[v]) {
        nc.omega_diamond.push_back(i);
        nc.exchange_diamond.emplace_back(static_cast<std::size_t>(v), i);
      } else {
        nc.omega_star.push_back(i);
      }
    } else if (!bbox.contains(grid.coord(m), 1e-12 * h[0])) {
      nc.omega_plus.push_back(i);
    }
  }
  if (nc.omega_o.size() != nc.mesh_o.size())
    throw UnmatchedOverlapNodeError("FEM boundary vertex lies on the outer FDM boundary");

  std::merge(nc.omega_plus.begin(), nc.omega_plus.end(), nc.omega_o.begin(), nc.omega_o.end(),
             std::back_inserter(nc.fdm_active));
  std::vector<std::size_t> tmp;
  std::merge(nc.fdm_active.begin(), nc.fdm_active.end(), nc.omega_diamond.begin(),
             nc.omega_diamond.end(), std::back_inserter(tmp));
  nc.fdm_active = std::move(tmp);
  std::merge(nc.mesh_star.begin(), nc.mesh_star.end(), nc.mesh_diamond.begin(),
             nc.mesh_diamond.end(), std::back_inserter(nc.fem_active));
  return nc;
}

template <int Dim>
struct DomainLayout {
  StructuredGrid<Dim> grid;
  SimplexMesh<Dim> mesh;
  NodeClasses classes;
  Box<Dim> fdm_box;
  Box<Dim> fem_box;
  double h = 0.0;
  /// Per element: centroid lies in the outermost cell layer of the FEM box,
  /// where the coefficient is pinned to 1.
  std::vector<bool> overlap_element;
  /// Grid nodes on the front face, where observations are taken.
  std::vector<std::size_t> observation_nodes;
};

namespace detail {

inline long integer_ratio(double length, double h, const char* what) {
  double r = length / h;
  double k = std::round(r);
  if (std::abs(r - k) > 1e-9 * std::max(1.0, std::abs(k))) {
    std::ostringstream msg;
    msg << what << " " << length << " is not an integer multiple of h = " << h;
    throw NonDivisibleExtentError(msg.str());
  }
  return static_cast<long>(k);
}

}  // namespace detail

/// Builds the structured grid over fdm_box, a Kuhn-subdivided mesh over
/// fem_box and the node classes. The FEM box must sit at least two cells
/// inside the FDM box on every face.
template <int Dim>
DomainLayout<Dim> build_layout(const Box<Dim>& fdm_box, const Box<Dim>& fem_box, double h) {
  if (!(h > 0.0)) throw GeometryError("mesh size must be positive");
  Index<Dim> dims{};
  Index<Dim> off_lo{};
  Index<Dim> fem_nodes{};
  for (int d = 0; d < Dim; ++d) {
    long n = detail::integer_ratio(fdm_box.hi[d] - fdm_box.lo[d], h, "FDM extent");
    long nf = detail::integer_ratio(fem_box.hi[d] - fem_box.lo[d], h, "FEM extent");
    long lo = detail::integer_ratio(fem_box.lo[d] - fdm_box.lo[d], h, "FEM margin");
    long hi = detail::integer_ratio(fdm_box.hi[d] - fem_box.hi[d], h, "FEM margin");
    if (lo < 2 || hi < 2) {
      std::ostringstream msg;
      msg << "FEM box margin along axis " << d << " is (" << lo << ", " << hi
          << ") cells; at least 2 are required";
      throw MarginMismatchError(msg.str());
    }
    if (nf < 2) throw GeometryError("FEM box must span at least two cells per axis");
    dims[d] = static_cast<std::size_t>(n + 1);
    off_lo[d] = static_cast<std::size_t>(lo);
    fem_nodes[d] = static_cast<std::size_t>(nf + 1);
  }

  DomainLayout<Dim> L;
  L.fdm_box = fdm_box;
  L.fem_box = fem_box;
  L.h = h;
  Point<Dim> spacing{};
  spacing.fill(h);
  L.grid = StructuredGrid<Dim>(fdm_box.lo, spacing, dims);

  // Mesh vertices in FEM-local lexicographic order (axis 0 fastest).
  std::size_t nv = 1;
  Index<Dim> fstride{};
  for (int d = 0; d < Dim; ++d) {
    fstride[d] = nv;
    nv *= fem_nodes[d];
  }
  L.mesh.vertices.resize(nv);
  for (std::size_t v = 0; v < nv; ++v) {
    Index<Dim> m{};
    std::size_t r = v;
    for (int d = 0; d < Dim; ++d) {
      m[d] = r % fem_nodes[d] + off_lo[d];
      r /= fem_nodes[d];
    }
    L.mesh.vertices[v] = L.grid.coord(m);
  }
  std::size_t ncells = 1;
  for (int d = 0; d < Dim; ++d) ncells *= fem_nodes[d] - 1;
  L.mesh.cells.reserve(ncells * factorial(Dim));
  for (std::size_t c = 0; c < ncells; ++c) {
    Index<Dim> m{};
    std::size_t r = c;
    for (int d = 0; d < Dim; ++d) {
      m[d] = r % (fem_nodes[d] - 1);
      r /= fem_nodes[d] - 1;
    }
    std::array<std::size_t, (1 << Dim)> corners{};
    for (int k = 0; k < (1 << Dim); ++k) {
      std::size_t v = 0;
      for (int d = 0; d < Dim; ++d) v += (m[d] + ((k >> d) & 1)) * fstride[d];
      corners[k] = v;
    }
    for (const auto& cell : kuhn_subdivide<Dim>(corners)) L.mesh.cells.push_back(cell);
  }
  L.mesh.compute_boundary();
  L.classes = classify_nodes(L.grid, L.mesh);

  const Box<Dim> inner = fem_box.shrunk(h);
  L.overlap_element.resize(L.mesh.num_cells());
  for (std::size_t c = 0; c < L.mesh.num_cells(); ++c)
    L.overlap_element[c] = !inner.contains(L.mesh.centroid(c), -1e-9 * h);
  L.observation_nodes = L.grid.face_nodes(Face{0, 0});
  return L;
}

/// Plain-text layout summary: box extents, node counts, class sizes.
template <int Dim>
void write_layout_summary(std::ostream& os, const DomainLayout<Dim>& L) {
  auto box = [&](const Box<Dim>& b) {
    std::ostringstream s;
    for (int d = 0; d < Dim; ++d) s << (d ? " x " : "") << "(" << b.lo[d] << ", " << b.hi[d] << ")";
    return s.str();
  };
  os << "dimension        " << Dim << "\n";
  os << "h                " << L.h << "\n";
  os << "fdm_box          " << box(L.fdm_box) << "\n";
  os << "fem_box          " << box(L.fem_box) << "\n";
  os << "grid_dims        ";
  for (int d = 0; d < Dim; ++d) os << (d ? " x " : "") << L.grid.dims()[d];
  os << "\n";
  os << "grid_nodes       " << L.grid.size() << "\n";
  os << "mesh_vertices    " << L.mesh.num_vertices() << "\n";
  os << "mesh_cells       " << L.mesh.num_cells() << "\n";
  os << "boundary_faces   " << L.mesh.boundary_faces.size() << "\n";
  os << "omega_o          " << L.classes.omega_o.size() << "\n";
  os << "omega_diamond    " << L.classes.omega_diamond.size() << "\n";
  os << "omega_star       " << L.classes.omega_star.size() << "\n";
  os << "omega_plus       " << L.classes.omega_plus.size() << "\n";
  os << "outer_boundary   " << L.classes.outer_boundary.size() << "\n";
  os << "observation      " << L.observation_nodes.size() << "\n";
}

}  // namespace hybwave
