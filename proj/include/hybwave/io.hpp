#pragma once

// Text output: legacy VTK, CSV traces and logs, matrix-market dumps and run
// manifests. Floating-point values are written with %.17g so that reruns
// diff byte for byte.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "hybwave/core.hpp"
#include "hybwave/diagnostics.hpp"
#include "hybwave/fem.hpp"
#include "hybwave/geometry.hpp"
#include "hybwave/inversion.hpp"
#include "hybwave/synthesis.hpp"

namespace hybwave {

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Opens `path` for writing (parents created) and hands the stream over.
inline void write_file(const std::filesystem::path& path, const std::function<void(std::ostream&)>& body) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  body(os);
  if (!os) throw Error("write failed for " + path.string());
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

template <int Dim>
void write_vtk_grid(std::ostream& os, const StructuredGrid<Dim>& grid, const Eigen::VectorXd& field,
                    const std::string& name = "u") {
  if (static_cast<std::size_t>(field.size()) != grid.size()) throw Error("field does not match the grid");
  os << "# vtk DataFile Version 3.0\n" << name << "\nASCII\nDATASET STRUCTURED_POINTS\n";
  os << "DIMENSIONS";
  for (int d = 0; d < 3; ++d) os << ' ' << (d < Dim ? grid.dims()[d] : 1);
  os << "\nORIGIN";
  for (int d = 0; d < 3; ++d) os << ' ' << fmt17(d < Dim ? grid.origin()[d] : 0.0);
  os << "\nSPACING";
  for (int d = 0; d < 3; ++d) os << ' ' << fmt17(d < Dim ? grid.spacing()[d] : 1.0);
  os << "\nPOINT_DATA " << grid.size() << "\nSCALARS " << name << " double 1\nLOOKUP_TABLE default\n";
  for (Eigen::Index i = 0; i < field.size(); ++i) os << fmt17(field[i]) << '\n';
}

/// Simplex mesh with optional per-cell and per-vertex scalars.
template <int Dim>
void write_vtk_mesh(std::ostream& os, const SimplexMesh<Dim>& mesh, const Eigen::VectorXd* cell_field = nullptr,
                    const std::string& cell_name = "a", const Eigen::VectorXd* point_field = nullptr,
                    const std::string& point_name = "u") {
  static constexpr int vtk_type = Dim == 1 ? 3 : Dim == 2 ? 5 : 10;
  os << "# vtk DataFile Version 3.0\nmesh\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  os << "POINTS " << mesh.num_vertices() << " double\n";
  for (const auto& v : mesh.vertices) {
    for (int d = 0; d < 3; ++d) os << (d ? " " : "") << fmt17(d < Dim ? v[d] : 0.0);
    os << '\n';
  }
  os << "CELLS " << mesh.num_cells() << ' ' << mesh.num_cells() * (Dim + 2) << '\n';
  for (const auto& c : mesh.cells) {
    os << Dim + 1;
    for (auto v : c) os << ' ' << v;
    os << '\n';
  }
  os << "CELL_TYPES " << mesh.num_cells() << '\n';
  for (std::size_t c = 0; c < mesh.num_cells(); ++c) os << vtk_type << '\n';
  if (cell_field) {
    os << "CELL_DATA " << mesh.num_cells() << "\nSCALARS " << cell_name << " double 1\nLOOKUP_TABLE default\n";
    for (Eigen::Index i = 0; i < cell_field->size(); ++i) os << fmt17((*cell_field)[i]) << '\n';
  }
  if (point_field) {
    os << "POINT_DATA " << mesh.num_vertices() << "\nSCALARS " << point_name << " double 1\nLOOKUP_TABLE default\n";
    for (Eigen::Index i = 0; i < point_field->size(); ++i) os << fmt17((*point_field)[i]) << '\n';
  }
}

/// One row per (level, node): t, x1, x2, x3, value. Missing coordinates of
/// the reduced modes are written as 0.
template <int Dim>
void write_observations_csv(std::ostream& os, const ObservationSet<Dim>& s) {
  os << "t,x1,x2,x3,value\n";
  for (Eigen::Index k = 0; k < s.values.rows(); ++k) {
    const std::string t = fmt17(s.times[static_cast<std::size_t>(k)]);
    for (Eigen::Index j = 0; j < s.values.cols(); ++j) {
      os << t;
      for (int d = 0; d < 3; ++d) os << ',' << fmt17(d < Dim ? s.nodes[static_cast<std::size_t>(j)][d] : 0.0);
      os << ',' << fmt17(s.values(k, j)) << '\n';
    }
  }
}

/// Inverse of write_observations_csv. Rows must come level by level with
/// the same node order in every level.
template <int Dim>
ObservationSet<Dim> read_observations_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line.rfind("t,x1,x2,x3,value", 0) != 0)
    throw TraceMismatchError("observation file lacks the t,x1,x2,x3,value header");
  std::vector<std::array<double, 5>> rows;
  long lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::array<double, 5> r{};
    std::istringstream ls(line);
    std::string cell;
    for (int c = 0; c < 5; ++c) {
      if (!std::getline(ls, cell, ',')) throw TraceMismatchError("short row at line " + std::to_string(lineno));
      try {
        r[c] = std::stod(cell);
      } catch (const std::exception&) {
        throw TraceMismatchError("bad number '" + cell + "' at line " + std::to_string(lineno));
      }
    }
    rows.push_back(r);
  }
  ObservationSet<Dim> s;
  if (rows.empty()) return s;
  std::size_t nn = 0;
  while (nn < rows.size() && rows[nn][0] == rows[0][0]) ++nn;
  if (rows.size() % nn != 0) throw TraceMismatchError("observation rows do not form a (time x node) lattice");
  const std::size_t nt = rows.size() / nn;
  s.values.resize(static_cast<Eigen::Index>(nt), static_cast<Eigen::Index>(nn));
  for (std::size_t j = 0; j < nn; ++j) {
    Point<Dim> x{};
    for (int d = 0; d < Dim; ++d) x[d] = rows[j][1 + d];
    s.nodes.push_back(x);
  }
  for (std::size_t k = 0; k < nt; ++k) {
    s.times.push_back(rows[k * nn][0]);
    for (std::size_t j = 0; j < nn; ++j) {
      const auto& r = rows[k * nn + j];
      if (r[0] != s.times.back()) throw TraceMismatchError("time column is not constant within a level");
      for (int d = 0; d < Dim; ++d)
        if (r[1 + d] != s.nodes[j][d]) throw TraceMismatchError("node order differs between levels");
      s.values(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) = r[4];
    }
  }
  return s;
}

inline void write_energy_csv(std::ostream& os, const std::vector<EnergySample>& trace) {
  os << "t,kinetic,potential,total\n";
  for (const auto& e : trace)
    os << fmt17(e.t) << ',' << fmt17(e.kinetic) << ',' << fmt17(e.potential) << ',' << fmt17(e.total()) << '\n';
}

inline void write_iteration_log(std::ostream& os, const std::vector<InverseState>& history) {
  os << "m,objective,grad_norm,max_a,alpha,beta\n";
  for (const auto& s : history)
    os << s.m << ',' << fmt17(s.objective) << ',' << fmt17(s.grad_norm) << ',' << fmt17(s.a.max()) << ','
       << fmt17(s.alpha) << ',' << fmt17(s.beta) << '\n';
}

/// Coordinate format, one-based indices, general (not symmetric) storage.
inline void write_matrix_market(std::ostream& os, const SparseMatrix& A) {
  os << "%%MatrixMarket matrix coordinate real general\n";
  os << A.rows() << ' ' << A.cols() << ' ' << A.nonZeros() << '\n';
  for (int r = 0; r < A.outerSize(); ++r)
    for (SparseMatrix::InnerIterator it(A, r); it; ++it)
      os << it.row() + 1 << ' ' << it.col() + 1 << ' ' << fmt17(it.value()) << '\n';
}

/// key = value lines in the given order.
using Manifest = std::vector<std::pair<std::string, std::string>>;

inline void write_manifest(std::ostream& os, const Manifest& m) {
  for (const auto& [k, v] : m) os << k << " = " << v << '\n';
}

}  // namespace hybwave
