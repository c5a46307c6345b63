#ifndef MASKED_CONSENSUS_RK4_HPP
#define MASKED_CONSENSUS_RK4_HPP

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "masked_consensus/errors.hpp"

namespace mc {

// Real-axis bound used by the step-size guard: dt * rate must stay below
// this. RK4's stability interval on the negative real axis ends near 2.785.
inline constexpr double kRk4StabilityMargin = 2.5;

// Throws NumericalError unless dt < kRk4StabilityMargin / rate, where `rate`
// is the largest decay rate of the linear part (e.g. beta * lambda_max).
inline void check_step_size(double dt, double rate, const std::string& what) {
  if (!(dt > 0.0)) throw NumericalError("step size must be > 0");
  if (rate > 0.0 && !(dt < kRk4StabilityMargin / rate)) {
    throw NumericalError("step size " + std::to_string(dt) + " violates the RK4 stability guard for " + what +
                         " (need dt < " + std::to_string(kRk4StabilityMargin / rate) + ")");
  }
}

// Number of fixed steps covering [0, horizon].
inline std::size_t step_count(double dt, double horizon) {
  if (!(dt > 0.0) || !(horizon >= dt)) throw std::invalid_argument("need dt > 0 and horizon >= dt");
  return static_cast<std::size_t>(std::llround(horizon / dt));
}

// Classical fixed-step fourth-order Runge-Kutta with owned stage buffers.
// `rhs(t, y, dydt)` must not retain its spans.
class Rk4Stepper {
 public:
  explicit Rk4Stepper(std::size_t dim) : k1_(dim), k2_(dim), k3_(dim), k4_(dim), work_(dim) {}

  template <class Rhs>
  void step(Rhs&& rhs, double t, double dt, std::span<double> y) {
    const std::size_t n = y.size();
    const double half = 0.5 * dt;

    rhs(t, std::span<const double>(y), std::span<double>(k1_));
    for (std::size_t i = 0; i < n; ++i) work_[i] = y[i] + half * k1_[i];
    rhs(t + half, std::span<const double>(work_), std::span<double>(k2_));
    for (std::size_t i = 0; i < n; ++i) work_[i] = y[i] + half * k2_[i];
    rhs(t + half, std::span<const double>(work_), std::span<double>(k3_));
    for (std::size_t i = 0; i < n; ++i) work_[i] = y[i] + dt * k3_[i];
    rhs(t + dt, std::span<const double>(work_), std::span<double>(k4_));

    const double sixth = dt / 6.0;
    for (std::size_t i = 0; i < n; ++i) {
      y[i] += sixth * (k1_[i] + 2.0 * (k2_[i] + k3_[i]) + k4_[i]);
    }
  }

 private:
  std::vector<double> k1_, k2_, k3_, k4_, work_;
};

inline bool all_finite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace mc

#endif
