#pragma once

#include <cmath>
#include <numbers>

#include "hybwave/core.hpp"

namespace hybwave {

/// One period of sin(omega t), switched off afterwards.
struct SourcePulse {
  double omega = 40.0;
  bool enabled = true;

  SourcePulse() = default;
  explicit SourcePulse(double w, bool on = true) : omega(w), enabled(on) {
    if (!(w > 0.0)) throw Error("pulse frequency must be positive");
  }

  double duration() const { return 2.0 * std::numbers::pi / omega; }

  double operator()(double t) const {
    if (!enabled || t <= 0.0 || t >= duration()) return 0.0;
    return std::sin(omega * t);
  }
};

inline double pulse_eval(const SourcePulse& p, double t) { return p(t); }

}  // namespace hybwave
