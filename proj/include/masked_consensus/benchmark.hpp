#ifndef MASKED_CONSENSUS_BENCHMARK_HPP
#define MASKED_CONSENSUS_BENCHMARK_HPP

// The six-unit ring benchmark: battery data, gains, mask frequencies and the
// discharging power profile, plus a matching pure-consensus scenario.

#include <cstddef>
#include <vector>

#include "masked_consensus/bess.hpp"
#include "masked_consensus/experiments.hpp"
#include "masked_consensus/masking.hpp"

namespace mc::benchmark {

inline constexpr std::size_t kUnits = 6;
inline constexpr double kBeta = 400.0;
inline constexpr double kKappa = 300.0;
inline constexpr double kMaskAmplitude = 500.0;
inline constexpr double kVoltage = 50.0;

inline std::vector<double> capacities_Ah() { return {180, 190, 200, 210, 220, 230}; }
inline std::vector<double> initial_soc() { return {0.96, 0.89, 0.75, 0.80, 0.73, 0.88}; }

// Entry (i, j) is the frequency agent i picked for neighbor j.
inline std::vector<DirectedFrequency> mask_frequencies() {
  return {{1, 2, 1.11}, {1, 6, 3.37}, {2, 1, 6.12}, {2, 3, 2.46}, {3, 2, 4.03}, {3, 4, 3.80},
          {4, 3, 8.15}, {4, 5, 2.49}, {5, 4, 5.75}, {5, 6, 6.89}, {6, 1, 5.22}, {6, 5, 6.42}};
}

// p*(t) = 4200 sin(t) + 4200 W.
inline ReferenceSpec power_reference() { return ReferenceSpec{4200.0, 0.0, {{4200.0, 1.0, 0.0}}}; }

inline MaskBook mask_book(const Topology& ring, double amplitude = kMaskAmplitude) {
  const auto f = mask_frequencies();
  return mask_book_from_explicit(ring, amplitude, f);
}

// `capacity_scale` shrinks every capacity (desk-scale runs use 1/100).
inline FleetScenario fleet_scenario(double capacity_scale = 1.0, IntegrationOptions opt = {1e-3, 20.0, 1}) {
  Topology ring = Topology::ring(kUnits);
  FleetConfig fleet;
  const auto cap = capacities_Ah();
  const auto soc = initial_soc();
  for (std::size_t i = 0; i < kUnits; ++i) {
    fleet.units.push_back(BatteryUnit::from_amp_hours(cap[i] * capacity_scale, kVoltage, soc[i]));
  }
  fleet.mode = Mode::Discharging;
  fleet.access = {1, 0, 0, 0, 0, 0};
  fleet.kappa = kKappa;
  fleet.a1 = default_a1(fleet.units);
  MaskBook book = mask_book(ring);
  return FleetScenario{std::move(ring), std::move(fleet), std::move(book), power_reference(), DacParams{kBeta}, opt};
}

// Unit-amplitude sinusoids with frequencies evenly spaced on [lo, hi].
inline ReferenceBank sinusoid_bank(std::size_t n, double lo = 0.5, double hi = 2.0) {
  ReferenceBank bank(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double w = n > 1 ? lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1) : lo;
    bank[i].terms.push_back({1.0, w, 0.0});
  }
  return bank;
}

inline DacScenario dac_scenario(bool masked = true, IntegrationOptions opt = {1e-3, 20.0, 1}) {
  Topology ring = Topology::ring(kUnits);
  std::optional<MaskBook> book;
  if (masked) book = mask_book(ring);
  return DacScenario{std::move(ring), DacParams{kBeta}, sinusoid_bank(kUnits), std::move(book), opt};
}

}  // namespace mc::benchmark

#endif
