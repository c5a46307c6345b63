#ifndef MASKED_CONSENSUS_MASKING_HPP
#define MASKED_CONSENSUS_MASKING_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "masked_consensus/graph.hpp"
#include "masked_consensus/rng.hpp"

namespace mc {

// Frequency chosen by agent `from` for its neighbor `to`, 1-indexed.
struct DirectedFrequency {
  int from = 0;
  int to = 0;
  double omega = 0.0;
};

struct FrequencyRange {
  double lo = 1.0;
  double hi = 10.0;
};

// Parameters agreed during initialization: the common amplitude A_m and one
// frequency per directed edge. Pairwise signals are s_ij(t) = A_m sin(w_ij t).
class MaskBook {
 public:
  // `freqs(i, j)` must be positive exactly on the directed edges of `topo` and
  // zero elsewhere.
  MaskBook(const Topology& topo, double amplitude, DenseMatrix freqs)
      : amplitude_(amplitude), freqs_(std::move(freqs)) {
    const std::size_t n = topo.size();
    if (!(amplitude >= 0.0) || !std::isfinite(amplitude)) {
      throw std::invalid_argument("mask book: amplitude must be finite and >= 0");
    }
    if (freqs_.size() != n) throw std::invalid_argument("mask book: frequency matrix size mismatch");
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const bool edge = i != j && topo.weight(i, j) > 0.0;
        const double w = freqs_(i, j);
        const auto where = " for " + std::to_string(i + 1) + "->" + std::to_string(j + 1);
        if (edge && !(w > 0.0 && std::isfinite(w))) {
          throw std::invalid_argument("mask book: missing or nonpositive frequency" + where);
        }
        if (!edge && w != 0.0) {
          throw std::invalid_argument("mask book: frequency on a non-edge" + where);
        }
        if (edge) max_frequency_ = std::max(max_frequency_, w);
      }
    }
  }

  std::size_t size() const { return freqs_.size(); }
  double amplitude() const { return amplitude_; }
  double max_frequency() const { return max_frequency_; }
  const DenseMatrix& frequencies() const { return freqs_; }

  bool has_edge(std::size_t i, std::size_t j) const {
    return i < size() && j < size() && freqs_(i, j) > 0.0;
  }

  double frequency(std::size_t i, std::size_t j) const {
    if (!has_edge(i, j)) {
      throw std::out_of_range("mask book: unknown directed edge " + std::to_string(i + 1) + "->" +
                              std::to_string(j + 1));
    }
    return freqs_(i, j);
  }

  double pairwise_signal(std::size_t i, std::size_t j, double t) const {
    return amplitude_ * std::sin(frequency(i, j) * t);
  }

  double pairwise_derivative(std::size_t i, std::size_t j, double t) const {
    const double w = frequency(i, j);
    return amplitude_ * w * std::cos(w * t);
  }

  // Same frequencies, different amplitude (privacy sweeps).
  MaskBook with_amplitude(double amplitude) const {
    MaskBook copy = *this;
    if (!(amplitude >= 0.0) || !std::isfinite(amplitude)) {
      throw std::invalid_argument("mask book: amplitude must be finite and >= 0");
    }
    copy.amplitude_ = amplitude;
    return copy;
  }

 private:
  double amplitude_ = 0.0;
  double max_frequency_ = 0.0;
  DenseMatrix freqs_;
};

// One uniform draw from [lo, hi] per directed edge. Draw (i -> j) uses counter
// i * n + j of the seed's stream, independent of traversal order.
inline MaskBook generate_mask_book(const Topology& topo, double amplitude, FrequencyRange range,
                                   std::uint64_t seed) {
  if (!(range.lo > 0.0) || !(range.lo < range.hi) || !std::isfinite(range.hi)) {
    throw std::invalid_argument("mask book: frequency range must satisfy 0 < lo < hi");
  }
  const std::size_t n = topo.size();
  const CounterRng rng = CounterRng(seed).split(0x6d61736bULL);
  DenseMatrix freqs(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j : topo.neighbors(i)) {
      freqs(i, j) = rng.uniform(i * n + j, range.lo, range.hi);
    }
  }
  return MaskBook(topo, amplitude, std::move(freqs));
}

inline MaskBook mask_book_from_explicit(const Topology& topo, double amplitude,
                                        std::span<const DirectedFrequency> entries) {
  const std::size_t n = topo.size();
  DenseMatrix freqs(n);
  for (const DirectedFrequency& e : entries) {
    if (e.from < 1 || e.to < 1 || static_cast<std::size_t>(e.from) > n ||
        static_cast<std::size_t>(e.to) > n) {
      throw std::invalid_argument("mask book: explicit entry index out of range");
    }
    double& slot = freqs(static_cast<std::size_t>(e.from - 1), static_cast<std::size_t>(e.to - 1));
    if (slot != 0.0) throw std::invalid_argument("mask book: duplicate explicit entry");
    slot = e.omega;
  }
  return MaskBook(topo, amplitude, std::move(freqs));
}

// m_i(t) = sum_{j in N_i} (s_ji(t) - s_ij(t)).
inline double mask_value(const MaskBook& book, const Topology& topo, std::size_t i, double t) {
  double m = 0.0;
  for (std::size_t j : topo.neighbors(i)) m += book.pairwise_signal(j, i, t) - book.pairwise_signal(i, j, t);
  return m;
}

inline double mask_derivative(const MaskBook& book, const Topology& topo, std::size_t i, double t) {
  double d = 0.0;
  for (std::size_t j : topo.neighbors(i)) {
    d += book.pairwise_derivative(j, i, t) - book.pairwise_derivative(i, j, t);
  }
  return d;
}

inline void mask_vector(const MaskBook& book, const Topology& topo, double t, std::span<double> out) {
  for (std::size_t i = 0; i < topo.size(); ++i) out[i] = mask_value(book, topo, i, t);
}

inline void mask_derivative_vector(const MaskBook& book, const Topology& topo, double t,
                                   std::span<double> out) {
  for (std::size_t i = 0; i < topo.size(); ++i) out[i] = mask_derivative(book, topo, i, t);
}

inline std::vector<double> mask_vector(const MaskBook& book, const Topology& topo, double t) {
  std::vector<double> out(topo.size());
  mask_vector(book, topo, t, out);
  return out;
}

inline std::vector<double> mask_derivative_vector(const MaskBook& book, const Topology& topo, double t) {
  std::vector<double> out(topo.size());
  mask_derivative_vector(book, topo, t, out);
  return out;
}

}  // namespace mc

#endif
