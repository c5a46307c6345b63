#ifndef MASKED_CONSENSUS_BESS_HPP
#define MASKED_CONSENSUS_BESS_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "masked_consensus/dac.hpp"
#include "masked_consensus/errors.hpp"
#include "masked_consensus/graph.hpp"
#include "masked_consensus/masking.hpp"
#include "masked_consensus/rk4.hpp"
#include "masked_consensus/signals.hpp"
#include "masked_consensus/trajectory.hpp"

namespace mc {

inline constexpr double kSecondsPerHour = 3600.0;

enum class Mode { Discharging, Charging };

// dx_i/dt = mode_sign * p_i: discharging drains available energy, charging
// uses up remaining storable energy.
inline double mode_sign(Mode m) { return m == Mode::Discharging ? -1.0 : 1.0; }

struct BatteryUnit {
  double capacity_As = 0.0;  // coulombs
  double voltage = 0.0;      // volts
  double soc = 0.0;

  static BatteryUnit from_amp_hours(double capacity_Ah, double voltage, double soc) {
    return BatteryUnit{capacity_Ah * kSecondsPerHour, voltage, soc};
  }

  // C * V in joules.
  double energy_capacity() const { return capacity_As * voltage; }

  void validate() const {
    if (!(capacity_As > 0.0) || !(voltage > 0.0)) {
      throw std::invalid_argument("battery: capacity and voltage must be > 0");
    }
    if (!(soc >= 0.0 && soc <= 1.0)) throw std::invalid_argument("battery: soc must lie in [0, 1]");
  }
};

// Energy that can still be discharged (C V S) or stored (C V (1 - S)), joules.
inline double unit_state(double energy_capacity, double soc, Mode mode) {
  return mode == Mode::Discharging ? energy_capacity * soc : energy_capacity * (1.0 - soc);
}

inline double unit_state(const BatteryUnit& u, Mode mode) {
  return unit_state(u.energy_capacity(), u.soc, mode);
}

// dS/dt = -p / (C V); p > 0 discharges.
inline double soc_rhs(const BatteryUnit& u, double power) { return -power / u.energy_capacity(); }

struct FleetConfig {
  std::vector<BatteryUnit> units;
  Mode mode = Mode::Discharging;
  std::vector<int> access;  // b_i in {0, 1}
  double kappa = 300.0;
  double a1 = 0.0;  // unit-state lower bound, joules
  // Initial power estimates; empty means phat(0) = 0.
  std::vector<double> initial_phat;

  std::size_t size() const { return units.size(); }

  void validate(std::size_t n) const {
    if (units.size() != n || access.size() != n) throw std::invalid_argument("fleet: dimension mismatch");
    for (const auto& u : units) u.validate();
    bool any = false;
    for (int b : access) {
      if (b != 0 && b != 1) throw std::invalid_argument("fleet: access flags must be 0 or 1");
      any = any || b == 1;
    }
    if (!any) throw std::invalid_argument("fleet: at least one unit needs access to the power reference");
    if (!(kappa > 0.0)) throw std::invalid_argument("fleet: kappa must be > 0");
    if (!(a1 > 0.0)) throw std::invalid_argument("fleet: a1 must be > 0");
    if (!initial_phat.empty() && initial_phat.size() != n) {
      throw std::invalid_argument("fleet: initial_phat dimension mismatch");
    }
  }
};

// fraction * min_i C_i V_i.
inline double default_a1(std::span<const BatteryUnit> units, double fraction = 0.05) {
  if (units.empty()) throw std::invalid_argument("fleet: no units");
  double m = units.front().energy_capacity();
  for (const auto& u : units) m = std::min(m, u.energy_capacity());
  return fraction * m;
}

struct FleetState {
  std::vector<double> soc;
  std::vector<double> xhat;
  std::vector<double> phat;
  double t = 0.0;
};

// -kappa (sum_j a_ij (phat_i - phat_j) + b_i (phat_i - p_a)).
inline std::vector<double> power_estimator_rhs(const Topology& topo, const FleetConfig& cfg,
                                               std::span<const double> phat, double p_avg) {
  const std::size_t n = topo.size();
  if (phat.size() != n || cfg.access.size() != n) {
    throw std::invalid_argument("power_estimator_rhs: dimension mismatch");
  }
  std::vector<double> out(n);
  topo.apply_laplacian(phat, out);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = -cfg.kappa * (out[i] + (cfg.access[i] != 0 ? phat[i] - p_avg : 0.0));
  }
  return out;
}

// p_i = x_i / max(a1 / 2, xhat_i) * phat_i.
inline double allocate_power(double x, double xhat, double phat, double a1) {
  return x / std::max(0.5 * a1, xhat) * phat;
}

inline double soc_spread(std::span<const double> soc) {
  const auto [lo, hi] = std::minmax_element(soc.begin(), soc.end());
  return *hi - *lo;
}

inline double total_power(std::span<const double> p) {
  double s = 0.0;
  for (double v : p) s += v;
  return s;
}

// Largest eigenvalue of L + diag(b), the generator of the power estimator.
inline double pinned_laplacian_max_eigenvalue(const Topology& topo, std::span<const int> access) {
  DenseMatrix m = laplacian(topo);
  for (std::size_t i = 0; i < topo.size(); ++i) m(i, i) += access[i] != 0 ? 1.0 : 0.0;
  return symmetric_eigenvalues(std::move(m)).back();
}

// xhat(0) = x(0) + m(0), phat(0) = 0 unless overridden.
inline FleetState initial_fleet_state(const Topology& topo, const FleetConfig& cfg, const MaskBook* book) {
  const std::size_t n = topo.size();
  FleetState s;
  s.soc.resize(n);
  s.xhat.resize(n);
  s.phat = cfg.initial_phat.empty() ? std::vector<double>(n, 0.0) : cfg.initial_phat;
  for (std::size_t i = 0; i < n; ++i) {
    s.soc[i] = cfg.units[i].soc;
    s.xhat[i] = unit_state(cfg.units[i], cfg.mode) + (book ? mask_value(*book, topo, i, 0.0) : 0.0);
  }
  return s;
}

struct FleetReport {
  double max_conservation_residual = 0.0;  // max_k |sum xhat - sum x|, joules
  double max_unit_state_sum = 0.0;         // max_k sum x, joules
  FleetState final_state;
};

inline std::vector<std::string> fleet_series_names(std::size_t n) {
  std::vector<std::string> names;
  auto add = [&](std::vector<std::string> v) {
    for (auto& s : v) names.push_back(std::move(s));
  };
  add(indexed_names("soc_", n));
  add(indexed_names("p_", n));
  names.push_back("total_power");
  names.push_back("p_star");
  add(indexed_names("xhat_", n));
  add(indexed_names("phat_", n));
  names.push_back("soc_spread");
  return names;
}

// Closed loop: SoC dynamics, masked unit-state estimator and power estimator
// integrated together as one 3n-dimensional ODE. Within every RK4 stage the
// allocation uses that stage's estimates, so the estimators see the same
// p_i that drains the batteries. A SoC leaving [0, 1] aborts the run.
inline Trajectory simulate_fleet(const Topology& topo, const FleetConfig& cfg, const MaskBook* book,
                                 const ReferenceSpec& power_ref, const DacParams& dac,
                                 const IntegrationOptions& opt, FleetReport* report = nullptr) {
  const std::size_t n = topo.size();
  cfg.validate(n);
  dac.validate();
  if (book != nullptr && book->size() != n) throw std::invalid_argument("fleet: mask book size mismatch");
  if (opt.stride < 1) throw std::invalid_argument("fleet: stride must be >= 1");
  check_step_size(opt.dt, dac.beta * largest_laplacian_eigenvalue(topo), "beta * L");
  check_step_size(opt.dt, cfg.kappa * pinned_laplacian_max_eigenvalue(topo, cfg.access), "kappa * (L + B)");
  const std::size_t steps = step_count(opt.dt, opt.horizon);

  std::vector<double> cv(n);
  for (std::size_t i = 0; i < n; ++i) cv[i] = cfg.units[i].energy_capacity();
  const double sign = mode_sign(cfg.mode);
  const double nn = static_cast<double>(n);

  const FleetState init = initial_fleet_state(topo, cfg, book);
  std::vector<double> y(3 * n);
  std::copy(init.soc.begin(), init.soc.end(), y.begin());
  std::copy(init.xhat.begin(), init.xhat.end(), y.begin() + static_cast<std::ptrdiff_t>(n));
  std::copy(init.phat.begin(), init.phat.end(), y.begin() + static_cast<std::ptrdiff_t>(2 * n));

  std::vector<double> power(n), mdot(n), lap(n);
  auto allocate = [&](std::span<const double> state) {
    for (std::size_t i = 0; i < n; ++i) {
      const double x = unit_state(cv[i], state[i], cfg.mode);
      power[i] = allocate_power(x, state[n + i], state[2 * n + i], cfg.a1);
    }
  };

  auto rhs = [&](double t, std::span<const double> state, std::span<double> d) {
    allocate(state);
    if (book != nullptr) {
      mask_derivative_vector(*book, topo, t, mdot);
    }
    const auto xhat = state.subspan(n, n);
    const auto phat = state.subspan(2 * n, n);
    for (std::size_t i = 0; i < n; ++i) d[i] = -power[i] / cv[i];

    topo.apply_laplacian(xhat, lap);
    for (std::size_t i = 0; i < n; ++i) {
      d[n + i] = sign * power[i] + (book ? mdot[i] : 0.0) - dac.beta * lap[i];
    }

    const double p_avg = power_ref.value(t) / nn;
    topo.apply_laplacian(phat, lap);
    for (std::size_t i = 0; i < n; ++i) {
      d[2 * n + i] = -cfg.kappa * (lap[i] + (cfg.access[i] != 0 ? phat[i] - p_avg : 0.0));
    }
  };

  Trajectory traj(0.0, opt.dt * static_cast<double>(opt.stride), fleet_series_names(n));
  traj.reserve(steps / opt.stride + 1);
  std::vector<double> row(4 * n + 3);
  FleetReport local;

  auto observe = [&](double t, bool keep) {
    double sum_x = 0.0, sum_xhat = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      sum_x += unit_state(cv[i], y[i], cfg.mode);
      sum_xhat += y[n + i];
    }
    // 1^T m(t) = 0, so the masked sum equals the plain sum.
    local.max_conservation_residual = std::max(local.max_conservation_residual, std::abs(sum_xhat - sum_x));
    local.max_unit_state_sum = std::max(local.max_unit_state_sum, std::abs(sum_x));
    if (!keep) return;
    allocate(y);
    std::size_t c = 0;
    for (std::size_t i = 0; i < n; ++i) row[c++] = y[i];
    for (std::size_t i = 0; i < n; ++i) row[c++] = power[i];
    row[c++] = total_power(power);
    row[c++] = power_ref.value(t);
    for (std::size_t i = 0; i < n; ++i) row[c++] = y[n + i];
    for (std::size_t i = 0; i < n; ++i) row[c++] = y[2 * n + i];
    row[c++] = soc_spread(std::span<const double>(y).subspan(0, n));
    traj.append(row);
  };

  Rk4Stepper stepper(3 * n);
  observe(0.0, true);
  for (std::size_t k = 0; k < steps; ++k) {
    const double t = static_cast<double>(k) * opt.dt;
    stepper.step(rhs, t, opt.dt, y);
    const double t_next = static_cast<double>(k + 1) * opt.dt;
    if (!all_finite(y)) throw NumericalError("fleet: non-finite state at t = " + std::to_string(t_next));
    for (std::size_t i = 0; i < n; ++i) {
      if (!(y[i] >= 0.0 && y[i] <= 1.0)) {
        std::ostringstream msg;
        msg << "fleet: SoC of unit " << i + 1 << " left [0, 1] at t = " << t_next << " (S = " << y[i] << ")";
        throw NumericalError(msg.str());
      }
    }
    observe(t_next, (k + 1) % opt.stride == 0);
  }

  if (report != nullptr) {
    local.final_state.soc.assign(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(n));
    local.final_state.xhat.assign(y.begin() + static_cast<std::ptrdiff_t>(n),
                                  y.begin() + static_cast<std::ptrdiff_t>(2 * n));
    local.final_state.phat.assign(y.begin() + static_cast<std::ptrdiff_t>(2 * n), y.end());
    local.final_state.t = static_cast<double>(steps) * opt.dt;
    *report = std::move(local);
  }
  return traj;
}

}  // namespace mc

#endif
