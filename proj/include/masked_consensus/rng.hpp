#ifndef MASKED_CONSENSUS_RNG_HPP
#define MASKED_CONSENSUS_RNG_HPP

#include <cstdint>

namespace mc {

// Counter-based generator built on the SplitMix64 finalizer. Draw k of a
// stream is a pure function of (key, k), so values do not depend on draw
// order, thread count, or platform. Streams are split by hashing a stream id
// into the key.
class CounterRng {
 public:
  explicit constexpr CounterRng(std::uint64_t seed) : key_(mix(seed)) {}

  static constexpr std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  constexpr CounterRng split(std::uint64_t stream) const {
    CounterRng child(0);
    child.key_ = mix(key_ ^ mix(stream ^ 0x5851f42d4c957f2dULL));
    return child;
  }

  constexpr std::uint64_t bits(std::uint64_t counter) const {
    return mix(key_ + 0x9e3779b97f4a7c15ULL * (counter + 1));
  }

  // Uniform on [0, 1) with 53 random mantissa bits.
  constexpr double unit(std::uint64_t counter) const {
    return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53;
  }

  constexpr double uniform(std::uint64_t counter, double lo, double hi) const {
    return lo + (hi - lo) * unit(counter);
  }

 private:
  std::uint64_t key_;
};

}  // namespace mc

#endif
