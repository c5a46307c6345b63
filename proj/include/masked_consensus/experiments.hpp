#ifndef MASKED_CONSENSUS_EXPERIMENTS_HPP
#define MASKED_CONSENSUS_EXPERIMENTS_HPP

// Experiment drivers. Unlike the attacker, these know the ground truth
// (references, masks) and use it to score the attack.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <future>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "masked_consensus/adversary.hpp"
#include "masked_consensus/bess.hpp"
#include "masked_consensus/dac.hpp"
#include "masked_consensus/graph.hpp"
#include "masked_consensus/masking.hpp"
#include "masked_consensus/signals.hpp"
#include "masked_consensus/trajectory.hpp"

namespace mc {

struct DacScenario {
  Topology topo;
  DacParams params;
  ReferenceBank refs;
  std::optional<MaskBook> book;
  IntegrationOptions opt;

  const MaskBook* mask() const { return book ? &*book : nullptr; }
  MaskedReferenceDrive drive() const { return MaskedReferenceDrive(topo, refs, mask()); }
};

struct FleetScenario {
  Topology topo;
  FleetConfig fleet;
  std::optional<MaskBook> book;
  ReferenceSpec power_ref;
  DacParams dac;
  IntegrationOptions opt;

  const MaskBook* mask() const { return book ? &*book : nullptr; }
};

inline Trajectory run(const DacScenario& s) { return integrate_dac(s.topo, s.params, s.drive(), s.opt); }

inline Trajectory run(const FleetScenario& s, FleetReport* report = nullptr) {
  return simulate_fleet(s.topo, s.fleet, s.mask(), s.power_ref, s.dac, s.opt, report);
}

// ---------------------------------------------------------------------------
// Indistinguishability: (z, m) and (z + delta, m - delta) feed the estimator
// the same input, so an observer of zhat cannot tell them apart.

// delta = c sin(nu t) (e_i - e_j), 0-indexed agents.
inline ReferenceBank antisymmetric_pair(std::size_t n, std::size_t i, std::size_t j, double amplitude,
                                        double frequency) {
  if (i >= n || j >= n || i == j) throw std::invalid_argument("antisymmetric_pair: bad agent pair");
  ReferenceBank delta(n);
  delta[i].terms.push_back({amplitude, frequency, 0.0});
  delta[j].terms.push_back({-amplitude, frequency, 0.0});
  return delta;
}

// Checks sum_i delta_i(t) = 0, sum_i delta_i'(t) = 0 on [0, horizon] and
// delta(0) = 0 (the sinusoidal mask cannot absorb a nonzero initial shift).
inline void validate_zero_sum_perturbation(const ReferenceBank& delta, std::size_t n, double horizon) {
  if (delta.size() != n) throw std::invalid_argument("perturbation: one entry per agent required");
  double scale = 1.0;
  for (const auto& d : delta) scale = std::max({scale, std::abs(d.offset), d.derivative_bound()});
  const double tol = 1e-9 * scale;
  for (std::size_t i = 0; i < n; ++i) {
    if (std::abs(delta[i].value(0.0)) > tol) throw std::invalid_argument("perturbation: delta(0) != 0");
  }
  constexpr int kSamples = 997;
  for (int k = 0; k <= kSamples; ++k) {
    const double t = horizon * static_cast<double>(k) / kSamples;
    double s = 0.0, sd = 0.0;
    for (const auto& d : delta) {
      s += d.value(t);
      sd += d.derivative(t);
    }
    if (std::abs(s) > tol || std::abs(sd) > tol) {
      throw std::invalid_argument("perturbation: violates the zero-sum constraint");
    }
  }
}

// Agent i holds z'_i = z_i + delta_i and m'_i = m_i - delta_i and transmits
// the estimator driven by z'_i + m'_i.
class ShiftedDrive {
 public:
  ShiftedDrive(const Topology& topo, const ReferenceBank& refs, const MaskBook& book, const ReferenceBank& delta)
      : topo_(&topo), refs_(&refs), book_(&book), delta_(&delta) {}

  std::size_t size() const { return topo_->size(); }

  void masked_value(double t, std::span<double> out) const {
    for (std::size_t i = 0; i < size(); ++i) {
      const double d = (*delta_)[i].value(t);
      const double z_shifted = (*refs_)[i].value(t) + d;
      const double m_shifted = mask_value(*book_, *topo_, i, t) - d;
      out[i] = z_shifted + m_shifted;
    }
  }

  void input_derivative(double t, std::span<double> out) const {
    for (std::size_t i = 0; i < size(); ++i) {
      const double d = (*delta_)[i].derivative(t);
      const double zdot_shifted = (*refs_)[i].derivative(t) + d;
      const double mdot_shifted = mask_derivative(*book_, *topo_, i, t) - d;
      out[i] = zdot_shifted + mdot_shifted;
    }
  }

  double true_average(double t) const {
    double s = 0.0;
    for (std::size_t i = 0; i < size(); ++i) s += (*refs_)[i].value(t) + (*delta_)[i].value(t);
    return s / static_cast<double>(size());
  }

 private:
  const Topology* topo_;
  const ReferenceBank* refs_;
  const MaskBook* book_;
  const ReferenceBank* delta_;
};

struct IndistinguishabilityResult {
  double max_deviation = 0.0;        // max_{k,i} |zhat_i - zhat'_i|
  double trajectory_scale = 0.0;     // max_{k,i} |zhat_i|
  double max_reconstruction_gap = 0.0;  // max |z_rec - z_rec'| between the runs
  // Per agent: max_k |(e_i - e'_i) - delta_i(t_k)| / max_k |delta_i(t_k)|, where
  // e = z_rec - z_true is the attack error in each run. Empty when delta_i = 0.
  std::vector<std::optional<double>> secret_shift_error;
};

inline IndistinguishabilityResult indistinguishability_check(const DacScenario& s, const ReferenceBank& delta) {
  if (!s.book) throw std::invalid_argument("indistinguishability_check: requires a mask book");
  const std::size_t n = s.topo.size();
  validate_zero_sum_perturbation(delta, n, s.opt.horizon);

  const Trajectory base = integrate_dac(s.topo, s.params, s.drive(), s.opt);
  const ShiftedDrive shifted_drive(s.topo, s.refs, *s.book, delta);
  const Trajectory shifted = integrate_dac(s.topo, s.params, shifted_drive, s.opt);

  IndistinguishabilityResult r;
  for (const auto& name : indexed_names("zhat_", n)) {
    const auto& a = base.series(name);
    const auto& b = shifted.series(name);
    for (std::size_t k = 0; k < a.size(); ++k) {
      r.max_deviation = std::max(r.max_deviation, std::abs(a[k] - b[k]));
      r.trajectory_scale = std::max(r.trajectory_scale, std::abs(a[k]));
    }
  }

  const auto rec_a = reconstruct_reference(EavesdropperView::intercept(base, s.topo, s.params.beta));
  const auto rec_b = reconstruct_reference(EavesdropperView::intercept(shifted, s.topo, s.params.beta));
  r.secret_shift_error.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double worst = 0.0, peak = 0.0;
    for (std::size_t k = 0; k < rec_a[i].size(); ++k) {
      const double t = base.time(k);
      const double z = s.refs[i].value(t);
      const double z_shifted = z + delta[i].value(t);
      const double err_a = rec_a[i][k] - z;
      const double err_b = rec_b[i][k] - z_shifted;
      r.max_reconstruction_gap = std::max(r.max_reconstruction_gap, std::abs(rec_a[i][k] - rec_b[i][k]));
      worst = std::max(worst, std::abs((err_a - err_b) - delta[i].value(t)));
      peak = std::max(peak, std::abs(delta[i].value(t)));
    }
    if (peak > 0.0) r.secret_shift_error[i] = worst / peak;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Attack scoring.

// Per-agent RMSE of the reconstructed input derivative against the true zdot,
// and the RMS of the true zdot over the same window.
struct DerivativeAttackScore {
  std::vector<double> rmse;
  std::vector<double> truth_rms;
};

inline DerivativeAttackScore score_derivative_attack(const DacScenario& s, const Trajectory& traj, double cutoff,
                                                     std::size_t decimation = 1) {
  const auto view = EavesdropperView::intercept(traj, s.topo, s.params.beta, "zhat_", decimation);
  const auto rec = reconstruct_input_derivative(view);
  DerivativeAttackScore out;
  for (std::size_t i = 0; i < s.topo.size(); ++i) {
    std::vector<double> truth(rec[i].size());
    for (std::size_t k = 0; k < truth.size(); ++k) {
      truth[k] = s.refs[i].derivative(view.t0() + static_cast<double>(k) * view.dt());
    }
    out.rmse.push_back(privacy_rmse(truth, rec[i], view.t0(), view.dt(), cutoff));
    out.truth_rms.push_back(rms_after(truth, view.t0(), view.dt(), cutoff));
  }
  return out;
}

// Attack on the fleet: from xhat the observer recovers xdot_i + mdot_i and
// reads p_i = mode_sign * xdot_i. Returns per-unit RMSE against the true p_i.
inline std::vector<double> attack_fleet_power(const Trajectory& traj, const Topology& topo, double beta, Mode mode,
                                              double cutoff, std::size_t decimation = 1) {
  const auto view = EavesdropperView::intercept(traj, topo, beta, "xhat_", decimation);
  const auto rec = reconstruct_input_derivative(view);
  const double sign = mode_sign(mode);
  std::vector<double> rmse;
  for (std::size_t i = 0; i < topo.size(); ++i) {
    const auto& p = traj.series("p_" + std::to_string(i + 1));
    std::vector<double> truth(rec[i].size()), guess(rec[i].size());
    for (std::size_t k = 0; k < truth.size(); ++k) {
      truth[k] = p[k * decimation];
      guess[k] = sign * rec[i][k];
    }
    rmse.push_back(privacy_rmse(truth, guess, view.t0(), view.dt(), cutoff));
  }
  return rmse;
}

struct SweepPoint {
  double amplitude = 0.0;
  double rmse_mean = 0.0;
  double rmse_max = 0.0;
  std::vector<double> rmse;
};

// One closed-loop run and attack per amplitude, same frequencies for all.
// Runs execute concurrently; each owns its trajectory.
inline std::vector<SweepPoint> privacy_sweep(const FleetScenario& s, std::span<const double> amplitudes,
                                             double cutoff, std::size_t decimation = 1) {
  if (!s.book) throw std::invalid_argument("privacy_sweep: scenario needs mask frequencies");
  for (std::size_t k = 0; k < amplitudes.size(); ++k) {
    if (!(amplitudes[k] >= 0.0)) throw std::invalid_argument("privacy_sweep: amplitudes must be >= 0");
    if (k > 0 && amplitudes[k] < amplitudes[k - 1]) {
      throw std::invalid_argument("privacy_sweep: amplitudes must be sorted");
    }
  }
  std::vector<std::future<SweepPoint>> jobs;
  for (double a : amplitudes) {
    jobs.push_back(std::async(std::launch::async, [&s, a, cutoff, decimation] {
      const MaskBook book = s.book->with_amplitude(a);
      const Trajectory traj = simulate_fleet(s.topo, s.fleet, &book, s.power_ref, s.dac, s.opt);
      SweepPoint pt;
      pt.amplitude = a;
      pt.rmse = attack_fleet_power(traj, s.topo, s.dac.beta, s.fleet.mode, cutoff, decimation);
      double sum = 0.0;
      for (double v : pt.rmse) {
        sum += v;
        pt.rmse_max = std::max(pt.rmse_max, v);
      }
      pt.rmse_mean = sum / static_cast<double>(pt.rmse.size());
      return pt;
    }));
  }
  std::vector<SweepPoint> out;
  for (auto& j : jobs) out.push_back(j.get());
  return out;
}

}  // namespace mc

#endif
