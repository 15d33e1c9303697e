#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>

namespace hybwave {

template <int Dim>
using Point = std::array<double, Dim>;

template <int Dim>
using Index = std::array<std::size_t, Dim>;

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class GeometryError : public Error {
 public:
  using Error::Error;
};

/// fem_box margin inside fdm_box is not an admissible multiple of h.
class MarginMismatchError : public GeometryError {
 public:
  using GeometryError::GeometryError;
};

class NonDivisibleExtentError : public GeometryError {
 public:
  using GeometryError::GeometryError;
};

class UnmatchedOverlapNodeError : public GeometryError {
 public:
  using GeometryError::GeometryError;
};

class DegenerateElementError : public GeometryError {
 public:
  using GeometryError::GeometryError;
};

/// Non-finite value produced by a time step.
class InstabilityError : public Error {
 public:
  InstabilityError(std::size_t node, long step, const std::string& where)
      : Error("non-finite value in " + where + " at node " + std::to_string(node) +
              ", time level " + std::to_string(step)),
        node_(node),
        step_(step) {}

  std::size_t node() const { return node_; }
  long step() const { return step_; }

 private:
  std::size_t node_;
  long step_;
};

class CflError : public Error {
 public:
  using Error::Error;
};

class TraceMismatchError : public Error {
 public:
  using Error::Error;
};

class LineSearchError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

template <int Dim>
inline double dot(const Point<Dim>& a, const Point<Dim>& b) {
  double s = 0.0;
  for (int d = 0; d < Dim; ++d) s += a[d] * b[d];
  return s;
}

template <int Dim>
inline double distance(const Point<Dim>& a, const Point<Dim>& b) {
  double s = 0.0;
  for (int d = 0; d < Dim; ++d) s += (a[d] - b[d]) * (a[d] - b[d]);
  return std::sqrt(s);
}

/// Axis-aligned box [lo, hi].
template <int Dim>
struct Box {
  Point<Dim> lo{};
  Point<Dim> hi{};

  bool contains(const Point<Dim>& p, double tol = 0.0) const {
    for (int d = 0; d < Dim; ++d)
      if (p[d] < lo[d] - tol || p[d] > hi[d] + tol) return false;
    return true;
  }

  double volume() const {
    double v = 1.0;
    for (int d = 0; d < Dim; ++d) v *= hi[d] - lo[d];
    return v;
  }

  Box shrunk(double by) const {
    Box b = *this;
    for (int d = 0; d < Dim; ++d) {
      b.lo[d] += by;
      b.hi[d] -= by;
    }
    return b;
  }
};

inline constexpr std::size_t factorial(int n) { return n <= 1 ? 1 : n * factorial(n - 1); }

}  // namespace hybwave
