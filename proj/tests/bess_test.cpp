#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "masked_consensus/benchmark.hpp"
#include "masked_consensus/bess.hpp"

namespace {

using mc::BatteryUnit;
using mc::FleetConfig;
using mc::Mode;
using mc::Topology;

double final_value(const mc::Trajectory& t, const std::string& name) { return t.series(name).back(); }

TEST(UnitState, Examples) {
  // 180 Ah * 3600 * 50 V * 0.96.
  const auto u = BatteryUnit::from_amp_hours(180.0, 50.0, 0.96);
  EXPECT_DOUBLE_EQ(u.capacity_As, 648000.0);
  EXPECT_NEAR(mc::unit_state(u, Mode::Discharging), 31104000.0, 1e-6);
  EXPECT_NEAR(mc::unit_state(u, Mode::Charging), 180.0 * 3600 * 50 * 0.04, 1e-6);
  EXPECT_EQ(mc::unit_state(1000.0, 0.0, Mode::Discharging), 0.0);
  EXPECT_EQ(mc::unit_state(1000.0, 1.0, Mode::Charging), 0.0);
}

TEST(SocRhs, Examples) {
  const auto u = BatteryUnit::from_amp_hours(1.0, 1.0, 0.5);
  EXPECT_EQ(mc::soc_rhs(u, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(mc::soc_rhs(u, 3600.0), -1.0);
  EXPECT_LT(mc::soc_rhs(u, 10.0), 0.0);
  EXPECT_GT(mc::soc_rhs(u, -10.0), 0.0);
}

TEST(BatteryUnit, Validation) {
  EXPECT_THROW((BatteryUnit{0.0, 50.0, 0.5}.validate()), std::invalid_argument);
  EXPECT_THROW((BatteryUnit{1.0, -1.0, 0.5}.validate()), std::invalid_argument);
  EXPECT_THROW((BatteryUnit{1.0, 1.0, 1.01}.validate()), std::invalid_argument);
  EXPECT_NO_THROW((BatteryUnit{1.0, 1.0, 0.0}.validate()));
}

TEST(FleetConfig, Validation) {
  auto s = mc::benchmark::fleet_scenario();
  EXPECT_NO_THROW(s.fleet.validate(6));
  auto c = s.fleet;
  c.access.assign(6, 0);
  EXPECT_THROW(c.validate(6), std::invalid_argument);
  c = s.fleet;
  c.access[2] = 2;
  EXPECT_THROW(c.validate(6), std::invalid_argument);
  c = s.fleet;
  c.kappa = 0.0;
  EXPECT_THROW(c.validate(6), std::invalid_argument);
  c = s.fleet;
  c.initial_phat = {1.0};
  EXPECT_THROW(c.validate(6), std::invalid_argument);
  EXPECT_THROW(s.fleet.validate(5), std::invalid_argument);
}

TEST(DefaultA1, FivePercentOfSmallestStore) {
  const auto s = mc::benchmark::fleet_scenario();
  EXPECT_NEAR(s.fleet.a1, 0.05 * 180.0 * 3600 * 50, 1e-6);
}

TEST(PowerEstimator, Examples) {
  const auto ring = Topology::ring(6);
  FleetConfig cfg;
  cfg.access = {1, 0, 0, 0, 0, 0};
  cfg.kappa = 300.0;
  const std::vector<double> exact(6, 700.0);
  for (double v : mc::power_estimator_rhs(ring, cfg, exact, 700.0)) EXPECT_EQ(v, 0.0);

  const std::vector<double> zero(6, 0.0);
  const auto d = mc::power_estimator_rhs(ring, cfg, zero, 700.0);
  EXPECT_DOUBLE_EQ(d[0], 300.0 * 700.0);
  for (std::size_t i = 1; i < 6; ++i) EXPECT_EQ(d[i], 0.0);

  // Single pinned agent: phat' = -kappa (phat - p_a).
  const auto solo = Topology::build(1, {});
  FleetConfig one;
  one.access = {1};
  one.kappa = 2.0;
  const std::vector<double> p{3.0};
  EXPECT_DOUBLE_EQ(mc::power_estimator_rhs(solo, one, p, 1.0)[0], -4.0);
}

TEST(AllocatePower, GuardClampsSmallEstimates) {
  EXPECT_DOUBLE_EQ(mc::allocate_power(10.0, 20.0, 6.0, 1.0), 3.0);
  // xhat below a1 / 2 is replaced by a1 / 2.
  EXPECT_DOUBLE_EQ(mc::allocate_power(10.0, 0.1, 6.0, 4.0), 30.0);
  EXPECT_DOUBLE_EQ(mc::allocate_power(10.0, -50.0, 6.0, 4.0), 30.0);
}

TEST(AllocatePower, EqualsPerturbedProportionalRule) {
  // With the guard inactive, p_i = k (1 + Delta_i) x_i where k = p_a / x_a and
  // 1 + Delta_i = (1 + e_p / p_a) / (1 + e_x / x_a).
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> xa(1e3, 1e6), pa(10, 1e4), rel(-0.4, 0.4), x(1e2, 1e6);
  for (int k = 0; k < 1000; ++k) {
    const double x_a = xa(rng), p_a = pa(rng), e_x = rel(rng) * x_a, e_p = rel(rng) * p_a, xi = x(rng);
    const double got = mc::allocate_power(xi, x_a + e_x, p_a + e_p, 1.0);
    const double delta = (1 + e_p / p_a) / (1 + e_x / x_a) - 1;
    const double want = p_a / x_a * (1 + delta) * xi;
    EXPECT_NEAR(got, want, 1e-12 * std::abs(want));
  }
}

TEST(SocSpread, Examples) {
  const std::vector<double> v{0.96, 0.89, 0.75, 0.80, 0.73, 0.88};
  EXPECT_NEAR(mc::soc_spread(v), 0.23, 1e-15);
  const std::vector<double> same(4, 0.5);
  EXPECT_EQ(mc::soc_spread(same), 0.0);
}

TEST(PinnedLaplacian, RingWithOneLeader) {
  // Largest eigenvalue of L + e1 e1^T lies in (4, 5].
  const std::vector<int> b{1, 0, 0, 0, 0, 0};
  const double v = mc::pinned_laplacian_max_eigenvalue(Topology::ring(6), b);
  EXPECT_GT(v, 4.0);
  EXPECT_LE(v, 5.0);
}

mc::FleetScenario homogeneous(double p, bool warm) {
  auto s = mc::benchmark::fleet_scenario(1.0, {1e-3, 5.0, 1});
  for (auto& u : s.fleet.units) u = BatteryUnit::from_amp_hours(200.0, 50.0, 0.8);
  s.fleet.a1 = mc::default_a1(s.fleet.units);
  s.book.reset();
  s.power_ref = mc::ReferenceSpec::constant(p);
  if (warm) s.fleet.initial_phat.assign(6, p / 6.0);
  return s;
}

TEST(SimulateFleet, HomogeneousWarmStartIsSymmetric) {
  const auto s = homogeneous(3000.0, true);
  const auto traj = mc::run(s);
  const auto& s1 = traj.series("soc_1");
  for (std::size_t i = 2; i <= 6; ++i) {
    const auto& si = traj.series("soc_" + std::to_string(i));
    for (std::size_t k = 0; k < s1.size(); ++k) EXPECT_NEAR(si[k], s1[k], 1e-14);
  }
  const auto& total = traj.series("total_power");
  for (double v : total) EXPECT_NEAR(v, 3000.0, 1e-9 * 3000.0);
  // Each unit drains at p / 6: dS/dt = -500 / (200 * 3600 * 50).
  EXPECT_NEAR(s1.back(), 0.8 - 5.0 * 500.0 / (200.0 * 3600 * 50), 1e-12);
}

TEST(SimulateFleet, ColdStartStillConvergesToDemand) {
  const auto traj = mc::run(homogeneous(3000.0, false));
  EXPECT_NEAR(final_value(traj, "total_power"), 3000.0, 1e-6 * 3000.0);
  EXPECT_EQ(traj.series("total_power").front(), 0.0);
}

TEST(SimulateFleet, ConservesUnitStateSum) {
  auto s = mc::benchmark::fleet_scenario(1.0, {1e-3, 20.0, 1});
  mc::FleetReport report;
  mc::run(s, &report);
  EXPECT_LE(report.max_conservation_residual, 1e-8 * 6 * report.max_unit_state_sum);
  EXPECT_DOUBLE_EQ(report.final_state.t, 20.0);
  EXPECT_EQ(report.final_state.soc.size(), 6u);
}

TEST(SimulateFleet, SeriesLayout) {
  const auto traj = mc::run(mc::benchmark::fleet_scenario(1.0, {1e-3, 0.01, 1}));
  ASSERT_EQ(traj.names().size(), 4u * 6 + 3);
  EXPECT_EQ(traj.names()[0], "soc_1");
  EXPECT_EQ(traj.names()[6], "p_1");
  EXPECT_EQ(traj.names()[12], "total_power");
  EXPECT_EQ(traj.names()[13], "p_star");
  EXPECT_EQ(traj.names()[14], "xhat_1");
  EXPECT_EQ(traj.names()[20], "phat_1");
  EXPECT_EQ(traj.names().back(), "soc_spread");
  EXPECT_EQ(traj.rows(), 11u);
}

// Relabels agents by `perm` (new index of old agent i is perm[i]).
mc::FleetScenario permuted(const mc::FleetScenario& s, const std::vector<int>& perm) {
  const std::size_t n = s.topo.size();
  std::vector<mc::Edge> edges;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j : s.topo.neighbors(i))
      if (i < j) edges.push_back({perm[i] + 1, perm[j] + 1, s.topo.weight(i, j)});
  auto out = s;
  out.topo = Topology::build(n, edges);
  std::vector<mc::DirectedFrequency> f;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j : s.topo.neighbors(i)) f.push_back({perm[i] + 1, perm[j] + 1, s.book->frequency(i, j)});
  out.book = mc::mask_book_from_explicit(out.topo, s.book->amplitude(), f);
  for (std::size_t i = 0; i < n; ++i) {
    out.fleet.units[perm[i]] = s.fleet.units[i];
    out.fleet.access[perm[i]] = s.fleet.access[i];
  }
  return out;
}

TEST(SimulateFleet, EquivariantUnderRelabeling) {
  const auto s = mc::benchmark::fleet_scenario(1.0, {1e-3, 3.0, 1});
  const std::vector<int> perm{3, 0, 5, 1, 4, 2};
  const auto a = mc::run(s);
  const auto b = mc::run(permuted(s, perm));
  for (std::size_t i = 0; i < 6; ++i) {
    for (const char* prefix : {"soc_", "p_", "xhat_", "phat_"}) {
      const auto& x = a.series(prefix + std::to_string(i + 1));
      const auto& y = b.series(prefix + std::to_string(perm[i] + 1));
      double scale = 1.0;
      for (double v : x) scale = std::max(scale, std::abs(v));
      for (std::size_t k = 0; k < x.size(); ++k) EXPECT_NEAR(x[k], y[k], 1e-9 * scale) << prefix << i;
    }
  }
}

// Delta_i(t) from the recorded estimates, using the guard-free allocation.
struct Perturbation {
  std::vector<double> lo, hi;  // min_i and max_i Delta_i per sample
};

Perturbation perturbations(const mc::Trajectory& traj, const mc::FleetScenario& s) {
  const std::size_t n = s.topo.size();
  Perturbation out;
  const auto& pstar = traj.series("p_star");
  for (std::size_t k = 0; k < traj.rows(); ++k) {
    double x_a = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      x_a += mc::unit_state(s.fleet.units[i].energy_capacity(), traj.series("soc_" + std::to_string(i + 1))[k],
                            s.fleet.mode);
    }
    x_a /= static_cast<double>(n);
    const double p_a = pstar[k] / static_cast<double>(n);
    double lo = 1e300, hi = -1e300;
    for (std::size_t i = 0; i < n; ++i) {
      const double xh = traj.series("xhat_" + std::to_string(i + 1))[k];
      const double ph = traj.series("phat_" + std::to_string(i + 1))[k];
      const double d = (ph / p_a) / (xh / x_a) - 1.0;
      lo = std::min(lo, d);
      hi = std::max(hi, d);
    }
    out.lo.push_back(lo);
    out.hi.push_back(hi);
  }
  return out;
}

TEST(SimulateFleet, TotalPowerStaysInsidePerturbationEnvelope) {
  const auto s = mc::benchmark::fleet_scenario(1.0, {1e-3, 20.0, 1});
  const auto traj = mc::run(s);
  const auto env = perturbations(traj, s);
  const auto& total = traj.series("total_power");
  const auto& pstar = traj.series("p_star");
  for (std::size_t k = 1; k < traj.rows(); ++k) {
    const double tol = 1e-9 * pstar[k] + 1e-9;
    EXPECT_GE(total[k], (1 + env.lo[k]) * pstar[k] - tol) << "t = " << traj.time(k);
    EXPECT_LE(total[k], (1 + env.hi[k]) * pstar[k] + tol) << "t = " << traj.time(k);
  }
}

TEST(SimulateFleet, SocRatioDriftBoundedByPerturbationSpread) {
  // d/dt log(S_i / S_j) = -k (Delta_i - Delta_j), |.| <= k (Delta+ - Delta-).
  const auto s = mc::benchmark::fleet_scenario(1.0, {1e-3, 20.0, 1});
  const auto traj = mc::run(s);
  const auto env = perturbations(traj, s);
  const auto& pstar = traj.series("p_star");
  const double dt = traj.sample_dt();
  for (std::size_t k = 1000; k + 1 < traj.rows(); ++k) {
    double x_a = 0.0;
    for (std::size_t i = 0; i < 6; ++i)
      x_a += s.fleet.units[i].energy_capacity() * traj.series("soc_" + std::to_string(i + 1))[k];
    const double kk = pstar[k] / x_a;  // p_a / x_a
    const double bound = 0.5 * dt * (kk * (env.hi[k] - env.lo[k]));
    const double bound_next = 0.5 * dt * (pstar[k + 1] / x_a * (env.hi[k + 1] - env.lo[k + 1]));
    for (std::size_t i = 1; i < 6; ++i) {
      const auto& si = traj.series("soc_" + std::to_string(i + 1));
      const auto& s1 = traj.series("soc_1");
      const double drift = std::abs(std::log(si[k + 1] / s1[k + 1]) - std::log(si[k] / s1[k]));
      EXPECT_LE(drift, 1.01 * (bound + bound_next) + 1e-13) << "t = " << traj.time(k);
    }
  }
}

double mean_state_error(const mc::Trajectory& traj, const mc::FleetScenario& s, double from) {
  double acc = 0.0;
  std::size_t count = 0;
  for (std::size_t k = 0; k < traj.rows(); ++k) {
    if (traj.time(k) < from) continue;
    double x_a = 0.0;
    for (std::size_t i = 0; i < 6; ++i)
      x_a += s.fleet.units[i].energy_capacity() * traj.series("soc_" + std::to_string(i + 1))[k];
    x_a /= 6.0;
    double worst = 0.0;
    for (std::size_t i = 0; i < 6; ++i)
      worst = std::max(worst, std::abs(traj.series("xhat_" + std::to_string(i + 1))[k] - x_a));
    acc += worst;
    ++count;
  }
  return acc / static_cast<double>(count);
}

double mean_power_error(const mc::Trajectory& traj, double from) {
  const auto& total = traj.series("total_power");
  const auto& pstar = traj.series("p_star");
  double acc = 0.0;
  std::size_t count = 0;
  for (std::size_t k = 0; k < traj.rows(); ++k) {
    if (traj.time(k) < from) continue;
    acc += std::abs(total[k] - pstar[k]);
    ++count;
  }
  return acc / static_cast<double>(count);
}

TEST(SimulateFleet, LargerBetaTightensStateEstimates) {
  auto s = mc::benchmark::fleet_scenario(1.0, {5e-4, 10.0, 1});
  const auto base = mc::run(s);
  s.dac.beta = 800.0;
  const auto fast = mc::run(s);
  EXPECT_LT(mean_state_error(fast, s, 7.5), mean_state_error(base, s, 7.5));
}

TEST(SimulateFleet, LargerKappaTightensPowerTracking) {
  auto s = mc::benchmark::fleet_scenario(1.0, {5e-4, 10.0, 1});
  const auto base = mc::run(s);
  s.fleet.kappa = 600.0;
  const auto fast = mc::run(s);
  EXPECT_LT(mean_power_error(fast, 7.5), mean_power_error(base, 7.5));
}

TEST(SimulateFleet, ChargingFleetBalances) {
  auto s = mc::benchmark::fleet_scenario(0.01, {1e-3, 200.0, 10});
  s.fleet.mode = Mode::Charging;
  s.fleet.units[0].soc = 0.2;
  s.fleet.units[3].soc = 0.5;
  s.power_ref = mc::ReferenceSpec::constant(-1000.0);
  const auto traj = mc::run(s);
  EXPECT_LT(final_value(traj, "soc_spread"), 0.8 * traj.series("soc_spread").front());
  EXPECT_NEAR(final_value(traj, "total_power"), -1000.0, 1.0);
  for (std::size_t i = 1; i <= 6; ++i) {
    const auto& soc = traj.series("soc_" + std::to_string(i));
    EXPECT_GT(soc.back(), soc.front());
  }
}

TEST(SimulateFleet, AbortsWhenSocLeavesUnitInterval) {
  // Positive demand on a charging fleet drains it further and further.
  auto s = mc::benchmark::fleet_scenario(0.001, {1e-3, 300.0, 100});
  s.fleet.mode = Mode::Charging;
  EXPECT_THROW(mc::run(s), mc::NumericalError);
}

TEST(SimulateFleet, RejectsUnstableSteps) {
  auto s = mc::benchmark::fleet_scenario(1.0, {1e-3, 1.0, 1});
  s.fleet.kappa = 1000.0;  // kappa * lambda_max(L + B) > 2500
  EXPECT_THROW(mc::run(s), mc::NumericalError);
  s = mc::benchmark::fleet_scenario(1.0, {1.6e-3, 1.0, 1});
  EXPECT_THROW(mc::run(s), mc::NumericalError);
}

}  // namespace
