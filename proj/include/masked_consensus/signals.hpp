#ifndef MASKED_CONSENSUS_SIGNALS_HPP
#define MASKED_CONSENSUS_SIGNALS_HPP

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace mc {

struct SineTerm {
  double amplitude = 0.0;
  double frequency = 0.0;  // rad/s
  double phase = 0.0;      // rad
};

// offset + slope * t + sum_k A_k sin(w_k t + phi_k). Closed form, so the
// derivative fed into the estimators is exact at any stage time.
struct ReferenceSpec {
  double offset = 0.0;
  double slope = 0.0;
  std::vector<SineTerm> terms;

  static ReferenceSpec constant(double c) { return ReferenceSpec{c, 0.0, {}}; }

  double value(double t) const {
    double v = offset + slope * t;
    for (const SineTerm& s : terms) v += s.amplitude * std::sin(s.frequency * t + s.phase);
    return v;
  }

  double derivative(double t) const {
    double d = slope;
    for (const SineTerm& s : terms) d += s.amplitude * s.frequency * std::cos(s.frequency * t + s.phase);
    return d;
  }

  // |slope| + sum |A_k w_k|, a global bound on |derivative(t)|.
  double derivative_bound() const {
    double b = std::abs(slope);
    for (const SineTerm& s : terms) b += std::abs(s.amplitude * s.frequency);
    return b;
  }
};

// One reference per agent, in agent order.
using ReferenceBank = std::vector<ReferenceSpec>;

inline double network_average(const ReferenceBank& bank, double t) {
  double s = 0.0;
  for (const ReferenceSpec& r : bank) s += r.value(t);
  return s / static_cast<double>(bank.size());
}

inline void reference_values(const ReferenceBank& bank, double t, std::span<double> out) {
  for (std::size_t i = 0; i < bank.size(); ++i) out[i] = bank[i].value(t);
}

inline void reference_derivatives(const ReferenceBank& bank, double t, std::span<double> out) {
  for (std::size_t i = 0; i < bank.size(); ++i) out[i] = bank[i].derivative(t);
}

}  // namespace mc

#endif
