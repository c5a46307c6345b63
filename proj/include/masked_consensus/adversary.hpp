#ifndef MASKED_CONSENSUS_ADVERSARY_HPP
#define MASKED_CONSENSUS_ADVERSARY_HPP

// External eavesdropper. Everything here works from an EavesdropperView, which
// holds only the topology, the gain and the intercepted estimator states. This
// header deliberately includes neither masking.hpp nor signals.hpp.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "masked_consensus/graph.hpp"
#include "masked_consensus/trajectory.hpp"

namespace mc {

class EavesdropperView {
 public:
  // `estimates[i][k]` is agent i's transmitted state at t0 + k * dt.
  EavesdropperView(Topology topo, double beta, double t0, double dt,
                   std::vector<std::vector<double>> estimates)
      : topo_(std::move(topo)), beta_(beta), t0_(t0), dt_(dt), estimates_(std::move(estimates)) {
    if (estimates_.size() != topo_.size()) throw std::invalid_argument("view: one series per agent required");
    if (!(dt_ > 0.0)) throw std::invalid_argument("view: dt must be > 0");
    for (const auto& s : estimates_) {
      if (s.size() != estimates_.front().size()) throw std::invalid_argument("view: ragged series");
    }
  }

  // Taps the `<prefix>i` columns of a run, keeping every `decimation`-th sample.
  static EavesdropperView intercept(const Trajectory& traj, const Topology& topo, double beta,
                                    const std::string& prefix = "zhat_", std::size_t decimation = 1) {
    if (decimation < 1) throw std::invalid_argument("view: decimation must be >= 1");
    std::vector<std::vector<double>> est;
    for (const auto& name : indexed_names(prefix, topo.size())) {
      const auto& full = traj.series(name);
      std::vector<double> s;
      for (std::size_t k = 0; k < full.size(); k += decimation) s.push_back(full[k]);
      est.push_back(std::move(s));
    }
    return EavesdropperView(topo, beta, traj.t0(), traj.sample_dt() * static_cast<double>(decimation),
                            std::move(est));
  }

  const Topology& topology() const { return topo_; }
  double beta() const { return beta_; }
  double t0() const { return t0_; }
  double dt() const { return dt_; }
  std::size_t samples() const { return estimates_.front().size(); }
  const std::vector<double>& estimate(std::size_t i) const { return estimates_[i]; }

 private:
  Topology topo_;
  double beta_;
  double t0_;
  double dt_;
  std::vector<std::vector<double>> estimates_;
};

using AgentSeries = std::vector<std::vector<double>>;

// Causal inversion of the estimator update:
//   u_i(t_k) = (zhat_i(t_{k+1}) - zhat_i(t_k)) / dt + beta * (L zhat(t_k))_i.
// Against a masked run this recovers zdot_i + mdot_i, not zdot_i.
inline AgentSeries reconstruct_input_derivative(const EavesdropperView& view) {
  const std::size_t n = view.topology().size();
  const std::size_t m = view.samples();
  if (m < 2) throw std::invalid_argument("attack: need at least 2 samples");
  AgentSeries out(n, std::vector<double>(m - 1));
  std::vector<double> z(n), lz(n);
  for (std::size_t k = 0; k + 1 < m; ++k) {
    for (std::size_t i = 0; i < n; ++i) z[i] = view.estimate(i)[k];
    view.topology().apply_laplacian(z, lz);
    for (std::size_t i = 0; i < n; ++i) {
      out[i][k] = (view.estimate(i)[k + 1] - z[i]) / view.dt() + view.beta() * lz[i];
    }
  }
  return out;
}

// Trapezoidal integral of the reconstructed derivative, anchored at zhat_i(0)
// (= z_i(0), because every pairwise sinusoid vanishes at t = 0).
inline AgentSeries reconstruct_reference(const EavesdropperView& view, const AgentSeries& zdot_rec) {
  AgentSeries out(zdot_rec.size());
  for (std::size_t i = 0; i < zdot_rec.size(); ++i) {
    const auto& d = zdot_rec[i];
    auto& z = out[i];
    z.resize(d.size());
    if (d.empty()) continue;
    z[0] = view.estimate(i)[0];
    for (std::size_t k = 1; k < d.size(); ++k) z[k] = z[k - 1] + 0.5 * view.dt() * (d[k - 1] + d[k]);
  }
  return out;
}

inline AgentSeries reconstruct_reference(const EavesdropperView& view) {
  return reconstruct_reference(view, reconstruct_input_derivative(view));
}

struct AttackResult {
  AgentSeries zdot_rec;
  AgentSeries z_rec;
  std::vector<double> rmse;  // filled by the evaluator, which knows the truth
  double t0 = 0.0;
  double dt = 0.0;
};

inline AttackResult run_attack(const EavesdropperView& view) {
  AttackResult r;
  r.zdot_rec = reconstruct_input_derivative(view);
  r.z_rec = reconstruct_reference(view, r.zdot_rec);
  r.t0 = view.t0();
  r.dt = view.dt();
  return r;
}

// Default cutoff max(1 s, 10 / (beta * lambda2)).
inline double default_transient_cutoff(double beta, double lambda2) {
  return std::max(1.0, 10.0 / (beta * lambda2));
}

// RMS of (truth - rec) over samples with t0 + k * dt >= cutoff.
inline double privacy_rmse(std::span<const double> truth, std::span<const double> rec, double t0, double dt,
                           double cutoff) {
  if (truth.size() != rec.size()) throw std::invalid_argument("privacy_rmse: length mismatch");
  double s = 0.0;
  std::size_t count = 0;
  for (std::size_t k = 0; k < truth.size(); ++k) {
    if (t0 + static_cast<double>(k) * dt < cutoff) continue;
    const double d = truth[k] - rec[k];
    s += d * d;
    ++count;
  }
  if (count == 0) throw std::invalid_argument("privacy_rmse: no samples after the transient cutoff");
  return std::sqrt(s / static_cast<double>(count));
}

// RMS of a series over the same post-cutoff window.
inline double rms_after(std::span<const double> v, double t0, double dt, double cutoff) {
  std::vector<double> zero(v.size(), 0.0);
  return privacy_rmse(v, zero, t0, dt, cutoff);
}

}  // namespace mc

#endif
