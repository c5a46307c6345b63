#ifndef MASKED_CONSENSUS_DAC_HPP
#define MASKED_CONSENSUS_DAC_HPP

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "masked_consensus/errors.hpp"
#include "masked_consensus/graph.hpp"
#include "masked_consensus/masking.hpp"
#include "masked_consensus/rk4.hpp"
#include "masked_consensus/signals.hpp"
#include "masked_consensus/trajectory.hpp"

namespace mc {

struct DacParams {
  double beta = 400.0;

  void validate() const {
    if (!(beta > 0.0) || !std::isfinite(beta)) throw std::invalid_argument("dac: beta must be > 0");
  }
};

struct DacState {
  std::vector<double> zhat;
  double t = 0.0;
};

struct IntegrationOptions {
  double dt = 1e-3;
  double horizon = 20.0;
  std::size_t stride = 1;  // keep every stride-th step
};

// Steady state for bound checks starts at this many slowest-mode time
// constants 1/(beta * lambda2).
inline constexpr double kSteadyStateTimeConstants = 10.0;

inline double steady_state_start(const DacParams& params, double lambda2) {
  return kSteadyStateTimeConstants / (params.beta * lambda2);
}

// Like steady_state_start, but also waits until the initial disagreement
// ||(I - 11^T/n) zhat(0)||, decaying at rate beta * lambda2, is below
// `fraction * bound`. Matters when the estimates start far apart.
inline double settled_start(const DacParams& params, double lambda2, double initial_disagreement, double bound,
                            double fraction = 1e-3) {
  const double base = steady_state_start(params, lambda2);
  const double floor = fraction * bound;
  if (!(initial_disagreement > floor) || !(floor > 0.0)) return base;
  return std::max(base, std::log(initial_disagreement / floor) / (params.beta * lambda2));
}

// zdot_input - beta * L * zhat.
inline std::vector<double> dac_rhs(const Topology& topo, const DacParams& params,
                                   std::span<const double> zdot_input, const DacState& state) {
  const std::size_t n = topo.size();
  if (zdot_input.size() != n || state.zhat.size() != n) {
    throw std::invalid_argument("dac_rhs: dimension mismatch");
  }
  std::vector<double> out(n);
  topo.apply_laplacian(state.zhat, out);
  for (std::size_t i = 0; i < n; ++i) out[i] = zdot_input[i] - params.beta * out[i];
  return out;
}

// What drives the estimator: each agent's masked reference z_i + m_i and its
// derivative, plus the true network average used only for reporting.
template <class D>
concept DacDrive = requires(const D& d, double t, std::span<double> out) {
  { d.size() } -> std::convertible_to<std::size_t>;
  d.masked_value(t, out);
  d.input_derivative(t, out);
  { d.true_average(t) } -> std::convertible_to<double>;
};

// References plus an optional mask. Without a mask this is the conventional
// estimator.
class MaskedReferenceDrive {
 public:
  MaskedReferenceDrive(const Topology& topo, const ReferenceBank& refs, const MaskBook* book)
      : topo_(&topo), refs_(&refs), book_(book) {
    if (refs.size() != topo.size()) throw std::invalid_argument("dac: reference count != agent count");
    if (book != nullptr && book->size() != topo.size()) {
      throw std::invalid_argument("dac: mask book size != agent count");
    }
  }

  std::size_t size() const { return topo_->size(); }

  void masked_value(double t, std::span<double> out) const {
    reference_values(*refs_, t, out);
    if (book_ == nullptr) return;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += mask_value(*book_, *topo_, i, t);
  }

  void input_derivative(double t, std::span<double> out) const {
    reference_derivatives(*refs_, t, out);
    if (book_ == nullptr) return;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += mask_derivative(*book_, *topo_, i, t);
  }

  double true_average(double t) const { return network_average(*refs_, t); }

  const ReferenceBank& references() const { return *refs_; }

 private:
  const Topology* topo_;
  const ReferenceBank* refs_;
  const MaskBook* book_;
};

template <DacDrive Drive>
DacState init_state(const Drive& drive) {
  DacState s;
  s.zhat.assign(drive.size(), 0.0);
  drive.masked_value(0.0, s.zhat);
  s.t = 0.0;
  return s;
}

// zhat_i(0) = z_i(0) + m_i(0), or z_i(0) without a mask.
inline DacState init_state(const ReferenceBank& refs, const MaskBook* book, const Topology& topo) {
  return init_state(MaskedReferenceDrive(topo, refs, book));
}

// RK4 integration from an explicit initial state. Series: zhat_i,
// true_average, err_i (= zhat_i - true_average).
template <DacDrive Drive>
Trajectory integrate_dac_from(const Topology& topo, const DacParams& params, const Drive& drive,
                              DacState state, const IntegrationOptions& opt) {
  params.validate();
  const std::size_t n = topo.size();
  if (drive.size() != n || state.zhat.size() != n) throw std::invalid_argument("dac: dimension mismatch");
  if (opt.stride < 1) throw std::invalid_argument("dac: stride must be >= 1");
  check_step_size(opt.dt, params.beta * largest_laplacian_eigenvalue(topo), "beta * L");
  const std::size_t steps = step_count(opt.dt, opt.horizon);

  std::vector<std::string> names = indexed_names("zhat_", n);
  names.push_back("true_average");
  for (auto& e : indexed_names("err_", n)) names.push_back(std::move(e));
  Trajectory traj(state.t, opt.dt * static_cast<double>(opt.stride), std::move(names));
  traj.reserve(steps / opt.stride + 1);

  std::vector<double> row(2 * n + 1);
  auto record = [&](double t) {
    const double avg = drive.true_average(t);
    for (std::size_t i = 0; i < n; ++i) {
      row[i] = state.zhat[i];
      row[n + 1 + i] = state.zhat[i] - avg;
    }
    row[n] = avg;
    traj.append(row);
  };

  std::vector<double> lz(n);
  auto rhs = [&](double t, std::span<const double> y, std::span<double> dydt) {
    drive.input_derivative(t, dydt);
    topo.apply_laplacian(y, lz);
    for (std::size_t i = 0; i < n; ++i) dydt[i] -= params.beta * lz[i];
  };

  const double t0 = state.t;
  Rk4Stepper stepper(n);
  record(t0);
  for (std::size_t k = 0; k < steps; ++k) {
    const double t = t0 + static_cast<double>(k) * opt.dt;
    stepper.step(rhs, t, opt.dt, state.zhat);
    if (!all_finite(state.zhat)) {
      throw NumericalError("dac: non-finite estimate at t = " + std::to_string(t + opt.dt));
    }
    if ((k + 1) % opt.stride == 0) record(t0 + static_cast<double>(k + 1) * opt.dt);
  }
  state.t = t0 + static_cast<double>(steps) * opt.dt;
  return traj;
}

template <DacDrive Drive>
Trajectory integrate_dac(const Topology& topo, const DacParams& params, const Drive& drive,
                         const IntegrationOptions& opt) {
  return integrate_dac_from(topo, params, drive, init_state(drive), opt);
}

inline Trajectory integrate_dac(const Topology& topo, const DacParams& params, const ReferenceBank& refs,
                                const MaskBook* book, const IntegrationOptions& opt) {
  return integrate_dac(topo, params, MaskedReferenceDrive(topo, refs, book), opt);
}

// Steady-state tracking bound gamma / (beta * lambda2).
inline double error_bound(double gamma, const DacParams& params, double lambda2) {
  if (!(gamma >= 0.0) || !(params.beta > 0.0) || !(lambda2 > 0.0)) {
    throw std::invalid_argument("error_bound: need gamma >= 0, beta > 0, lambda2 > 0");
  }
  return gamma / (params.beta * lambda2);
}

// Euclidean norm of the disagreement component (I - 11^T/n) v.
inline double disagreement_norm(std::span<const double> v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return std::sqrt(s);
}

// Sampled sup over [0, horizon] of ||(I - 11^T/n)(zdot + mdot)||. Sampling from
// t = 0 rather than from the start of steady state can only enlarge the value.
template <DacDrive Drive>
double estimate_gamma(const Drive& drive, double horizon, double dt) {
  if (!(dt > 0.0) || !(horizon >= dt)) throw std::invalid_argument("estimate_gamma: need 0 < dt <= horizon");
  std::vector<double> u(drive.size());
  double gamma = 0.0;
  const std::size_t steps = step_count(dt, horizon);
  for (std::size_t k = 0; k <= steps; ++k) {
    drive.input_derivative(static_cast<double>(k) * dt, u);
    gamma = std::max(gamma, disagreement_norm(u));
  }
  return gamma;
}

// Period of the slowest tone in the references and active masks; 0 if none.
inline double slowest_period(const ReferenceBank& refs, const MaskBook* book, const Topology& topo) {
  double slowest = std::numeric_limits<double>::infinity();
  for (const auto& r : refs)
    for (const auto& s : r.terms)
      if (s.amplitude != 0.0 && s.frequency > 0.0) slowest = std::min(slowest, s.frequency);
  if (book != nullptr && book->amplitude() > 0.0) {
    for (std::size_t i = 0; i < topo.size(); ++i)
      for (std::size_t j : topo.neighbors(i)) slowest = std::min(slowest, book->frequency(i, j));
  }
  return std::isfinite(slowest) ? 2.0 * std::numbers::pi / slowest : 0.0;
}

// Requires the horizon to span one full period of the slowest tone present.
inline double estimate_gamma(const ReferenceBank& refs, const MaskBook* book, const Topology& topo,
                             double horizon, double dt) {
  if (horizon < slowest_period(refs, book, topo)) {
    throw std::invalid_argument("estimate_gamma: horizon shorter than the slowest period");
  }
  return estimate_gamma(MaskedReferenceDrive(topo, refs, book), horizon, dt);
}

// Per-row disagreement norm of the zhat_* columns.
inline std::vector<double> disagreement_series(const Trajectory& traj, std::size_t n,
                                               const std::string& prefix = "zhat_") {
  std::vector<const std::vector<double>*> cols;
  for (const auto& name : indexed_names(prefix, n)) cols.push_back(&traj.series(name));
  std::vector<double> out(traj.rows());
  std::vector<double> row(n);
  for (std::size_t k = 0; k < traj.rows(); ++k) {
    for (std::size_t i = 0; i < n; ++i) row[i] = (*cols[i])[k];
    out[k] = disagreement_norm(row);
  }
  return out;
}

// Exponential decay rate of the disagreement over [t0, t0 + window]: minus the
// least-squares slope of log ||(I - 11^T/n) zhat||.
inline double measure_decay_rate(const Trajectory& traj, std::size_t n, double window) {
  if (!(window > 0.0)) throw std::invalid_argument("measure_decay_rate: window must be > 0");
  const double last = traj.time(traj.rows() - 1);
  if (traj.rows() < 3 || traj.t0() + window > last + 1e-12 * std::max(1.0, std::abs(last))) {
    throw std::invalid_argument("measure_decay_rate: window exceeds trajectory");
  }
  const auto d = disagreement_series(traj, n);
  double scale = 0.0;
  for (const auto& name : indexed_names("zhat_", n))
    for (double v : traj.series(name)) scale = std::max(scale, std::abs(v));
  const double floor = 1e-12 * std::max(scale, 1.0);

  double st = 0.0, sy = 0.0, stt = 0.0, sty = 0.0;
  std::size_t m = 0;
  for (std::size_t k = 0; k < traj.rows() && traj.time(k) <= traj.t0() + window * (1.0 + 1e-12); ++k) {
    if (!(d[k] > floor)) {
      throw std::invalid_argument("measure_decay_rate: disagreement below numerical floor at t = " +
                                  std::to_string(traj.time(k)));
    }
    const double t = traj.time(k);
    const double y = std::log(d[k]);
    st += t;
    sy += y;
    stt += t * t;
    sty += t * y;
    ++m;
  }
  if (m < 3) throw std::invalid_argument("measure_decay_rate: fewer than 3 samples in window");
  const double mm = static_cast<double>(m);
  const double slope = (mm * sty - st * sy) / (mm * stt - st * st);
  return -slope;
}

// max over rows with t >= t_from and over agents of |err_i|.
inline double steady_state_error(const Trajectory& traj, std::size_t n, double t_from) {
  double worst = 0.0;
  for (const auto& name : indexed_names("err_", n)) {
    const auto& e = traj.series(name);
    for (std::size_t k = 0; k < e.size(); ++k)
      if (traj.time(k) >= t_from) worst = std::max(worst, std::abs(e[k]));
  }
  return worst;
}

// max_k |sum_i zhat_i(t_k) - n * average(t_k)|. Zero in exact arithmetic since
// 1^T L = 0 and 1^T m = 0.
inline double conservation_residual(const Trajectory& traj, std::size_t n) {
  const auto& avg = traj.series("true_average");
  std::vector<const std::vector<double>*> cols;
  for (const auto& name : indexed_names("zhat_", n)) cols.push_back(&traj.series(name));
  double worst = 0.0;
  for (std::size_t k = 0; k < traj.rows(); ++k) {
    double s = 0.0;
    for (const auto* c : cols) s += (*c)[k];
    worst = std::max(worst, std::abs(s - static_cast<double>(n) * avg[k]));
  }
  return worst;
}

}  // namespace mc

#endif
