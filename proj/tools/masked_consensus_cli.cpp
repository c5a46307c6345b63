// masked-consensus: scenario-driven runs of masked dynamic average consensus
// and the battery-fleet closed loop, with attack and bound reports.
//
//   masked-consensus <subcommand> --config <path> [--out-dir <dir>]
//                    [--seed <u64>] [--set key=value ...]
//
// Exit status: 0 success, 2 configuration error, 3 numerical failure.

#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "masked_consensus/adversary.hpp"
#include "masked_consensus/bess.hpp"
#include "masked_consensus/config.hpp"
#include "masked_consensus/dac.hpp"
#include "masked_consensus/errors.hpp"
#include "masked_consensus/experiments.hpp"
#include "masked_consensus/graph.hpp"

#ifndef MASKED_CONSENSUS_VERSION
#define MASKED_CONSENSUS_VERSION "unknown"
#endif

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

// Fleet runs report tracking only after this settling time, seconds.
constexpr double kFleetSettle = 5.0;

struct Invocation {
  std::string subcommand;
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
  std::vector<double> amplitudes{0.0, 100.0, 250.0, 500.0, 1000.0};
};

// Every file goes through here so the manifest can list it.
class OutputDir {
 public:
  explicit OutputDir(fs::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw mc::ConfigError("cannot create output directory " + dir_.string() + ": " + ec.message());
  }

  const fs::path& path() const { return dir_; }

  void write(const std::string& name, const std::string& content) {
    std::ofstream out(dir_ / name, std::ios::binary | std::ios::trunc);
    out << content;
    if (!out) throw std::runtime_error("cannot write " + (dir_ / name).string());
    files_.push_back({{"name", name}, {"bytes", content.size()}});
  }

  void write_json(const std::string& name, const json& j) { write(name, j.dump(2) + "\n"); }

  const json& files() const { return files_; }

 private:
  fs::path dir_;
  json files_ = json::array();
};

std::string csv_line(std::initializer_list<double> values) {
  std::string s;
  for (double v : values) {
    if (!s.empty()) s += ',';
    s += mc::format_double(v);
  }
  return s + '\n';
}

std::string trajectory_csv(const mc::Trajectory& traj, std::size_t stride = 1) {
  std::ostringstream os;
  traj.write_csv(os, stride);
  return os.str();
}

void print(const std::string& key, double value) { std::cout << key << " = " << mc::format_double(value) << '\n'; }

double transient_cutoff(const mc::config::Settings& s) {
  return s.adversary.cutoff.value_or(
      mc::default_transient_cutoff(s.beta(), mc::fiedler_value(s.topology())));
}

// x_i(t_k) for every unit, from the recorded SoC columns.
mc::AgentSeries unit_states(const mc::Trajectory& traj, const mc::FleetConfig& cfg) {
  mc::AgentSeries out;
  for (std::size_t i = 0; i < cfg.size(); ++i) {
    const auto& soc = traj.series("soc_" + std::to_string(i + 1));
    std::vector<double> x(soc.size());
    for (std::size_t k = 0; k < soc.size(); ++k) {
      x[k] = mc::unit_state(cfg.units[i].energy_capacity(), soc[k], cfg.mode);
    }
    out.push_back(std::move(x));
  }
  return out;
}

double max_tracking_error(const mc::Trajectory& traj, double t_from) {
  const auto& total = traj.series("total_power");
  const auto& pstar = traj.series("p_star");
  double worst = 0.0;
  for (std::size_t k = 0; k < traj.rows(); ++k) {
    if (traj.time(k) >= t_from) worst = std::max(worst, std::abs(total[k] - pstar[k]));
  }
  return worst;
}

// max over t >= t_from and units of |xhat_i - mean_j x_j|.
double fleet_estimate_error(const mc::Trajectory& traj, const mc::AgentSeries& x, double t_from) {
  const std::size_t n = x.size();
  double worst = 0.0;
  for (std::size_t k = 0; k < traj.rows(); ++k) {
    if (traj.time(k) < t_from) continue;
    double avg = 0.0;
    for (std::size_t i = 0; i < n; ++i) avg += x[i][k];
    avg /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      worst = std::max(worst, std::abs(traj.series("xhat_" + std::to_string(i + 1))[k] - avg));
    }
  }
  return worst;
}

// ---------------------------------------------------------------------------

// The sup runs over at least one slowest period so short runs still get a
// bound that covers every phase of the signals.
double gamma_over_run(const mc::DacScenario& d) {
  const double window = std::max(d.opt.horizon, mc::slowest_period(d.refs, d.mask(), d.topo));
  return mc::estimate_gamma(d.refs, d.mask(), d.topo, window, d.opt.dt);
}

int simulate_dac(const mc::config::Settings& s, OutputDir& out, json& report) {
  if (s.is_fleet()) throw mc::ConfigError("simulate-dac needs a [references] scenario, not [bess]");
  auto scenario = s.dac();
  scenario.opt.stride = s.output.decimate;
  const auto traj = mc::run(scenario);
  const std::size_t n = scenario.topo.size();
  const double lambda2 = mc::fiedler_value(scenario.topo);
  const double gamma = gamma_over_run(scenario);
  const double t_ss = mc::steady_state_start(scenario.params, lambda2);
  const double bound = mc::error_bound(gamma, scenario.params, lambda2);
  const double measured = mc::steady_state_error(traj, n, t_ss);

  out.write("dac.csv", trajectory_csv(traj));
  report = {{"lambda2", lambda2},
            {"gamma", gamma},
            {"bound", bound},
            {"steady_state_from", t_ss},
            {"steady_state_error", measured},
            {"bound_holds", measured <= bound},
            {"conservation_residual", mc::conservation_residual(traj, n)}};
  out.write_json("report.json", report);
  print("lambda2", lambda2);
  print("gamma", gamma);
  print("bound", bound);
  print("steady_state_error", measured);
  std::cout << "bound_holds = " << (measured <= bound ? "true" : "false") << '\n';
  return kExitOk;
}

int simulate_bess(const mc::config::Settings& s, OutputDir& out, json& report) {
  if (!s.is_fleet()) throw mc::ConfigError("simulate-bess needs a [bess] scenario");
  auto scenario = s.fleet();
  scenario.opt.stride = s.output.decimate;
  mc::FleetReport fr;
  const auto traj = mc::run(scenario, &fr);
  out.write("bess.csv", trajectory_csv(traj));
  const auto& spread = traj.series("soc_spread");
  report = {{"initial_soc_spread", spread.front()},
            {"final_soc_spread", spread.back()},
            {"settle_time", kFleetSettle},
            {"max_tracking_error_after_settle", max_tracking_error(traj, kFleetSettle)},
            {"max_conservation_residual", fr.max_conservation_residual},
            {"max_unit_state_sum", fr.max_unit_state_sum},
            {"final_soc", fr.final_state.soc}};
  out.write_json("report.json", report);
  print("initial_soc_spread", spread.front());
  print("final_soc_spread", spread.back());
  print("max_tracking_error_after_settle", max_tracking_error(traj, kFleetSettle));
  print("max_conservation_residual", fr.max_conservation_residual);
  return kExitOk;
}

// Writes attack_<i>.csv with t, the true signal, its reconstruction and the
// reconstructed derivative. Returns per-agent RMSE of z and zdot.
json write_attack_files(OutputDir& out, const mc::AttackResult& a, const mc::AgentSeries& truth,
                        const mc::AgentSeries& truth_dot, double cutoff, std::size_t stride) {
  json agents = json::array();
  for (std::size_t i = 0; i < a.z_rec.size(); ++i) {
    const std::string id = std::to_string(i + 1);
    const std::size_t m = a.z_rec[i].size();
    std::string csv = "t,ztrue_" + id + ",zrec_" + id + ",zdotrec_" + id + "\n";
    for (std::size_t k = 0; k < m; k += stride) {
      csv += csv_line({a.t0 + static_cast<double>(k) * a.dt, truth[i][k], a.z_rec[i][k], a.zdot_rec[i][k]});
    }
    out.write("attack_" + id + ".csv", csv);
    const std::vector<double> z(truth[i].begin(), truth[i].begin() + static_cast<std::ptrdiff_t>(m));
    const std::vector<double> zd(truth_dot[i].begin(), truth_dot[i].begin() + static_cast<std::ptrdiff_t>(m));
    agents.push_back({{"agent", i + 1},
                      {"rmse_z", mc::privacy_rmse(z, a.z_rec[i], a.t0, a.dt, cutoff)},
                      {"rmse_zdot", mc::privacy_rmse(zd, a.zdot_rec[i], a.t0, a.dt, cutoff)},
                      {"truth_rms_zdot", mc::rms_after(zd, a.t0, a.dt, cutoff)}});
  }
  return agents;
}

int attack(const mc::config::Settings& s, OutputDir& out, json& report) {
  if (!s.adversary.enabled) throw mc::ConfigError("adversary.enabled is false; nothing to attack");
  const double cutoff = transient_cutoff(s);
  const std::size_t dec = s.adversary.decimation;
  mc::AgentSeries truth, truth_dot;
  std::optional<mc::AttackResult> result;
  json extra = json::object();

  if (!s.is_fleet()) {
    auto scenario = s.dac();
    scenario.opt.stride = 1;
    const auto traj = mc::run(scenario);
    const auto view = mc::EavesdropperView::intercept(traj, scenario.topo, scenario.params.beta, "zhat_", dec);
    result = mc::run_attack(view);
    for (const auto& r : scenario.refs) {
      std::vector<double> z(view.samples()), zd(view.samples());
      for (std::size_t k = 0; k < z.size(); ++k) {
        const double t = view.t0() + static_cast<double>(k) * view.dt();
        z[k] = r.value(t);
        zd[k] = r.derivative(t);
      }
      truth.push_back(std::move(z));
      truth_dot.push_back(std::move(zd));
    }
  } else {
    auto scenario = s.fleet();
    scenario.opt.stride = 1;
    const auto traj = mc::run(scenario);
    const auto view = mc::EavesdropperView::intercept(traj, scenario.topo, scenario.dac.beta, "xhat_", dec);
    result = mc::run_attack(view);
    const auto x = unit_states(traj, scenario.fleet);
    const double sign = mc::mode_sign(scenario.fleet.mode);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const auto& p = traj.series("p_" + std::to_string(i + 1));
      std::vector<double> z, zd;
      for (std::size_t k = 0; k < traj.rows(); k += dec) {
        z.push_back(x[i][k]);
        zd.push_back(sign * p[k]);
      }
      truth.push_back(std::move(z));
      truth_dot.push_back(std::move(zd));
    }
    const auto p_rmse =
        mc::attack_fleet_power(traj, scenario.topo, scenario.dac.beta, scenario.fleet.mode, cutoff, dec);
    extra["rmse_power"] = p_rmse;
  }

  const json agents = write_attack_files(out, *result, truth, truth_dot, cutoff, s.output.decimate);
  report = {{"cutoff", cutoff}, {"decimation", dec}, {"agents", agents}};
  report.update(extra);
  out.write_json("attack.json", report);
  print("cutoff", cutoff);
  for (const auto& a : agents) {
    std::cout << "agent " << a["agent"].get<std::size_t>() << ": rmse_z = " << mc::format_double(a["rmse_z"])
              << ", rmse_zdot = " << mc::format_double(a["rmse_zdot"]) << '\n';
  }
  return kExitOk;
}

std::vector<mc::SweepPoint> dac_sweep(const mc::DacScenario& s, const std::vector<double>& amplitudes,
                                      double cutoff, std::size_t dec) {
  std::vector<std::future<mc::SweepPoint>> jobs;
  for (double a : amplitudes) {
    jobs.push_back(std::async(std::launch::async, [&s, a, cutoff, dec] {
      auto scenario = s;
      scenario.book = s.book->with_amplitude(a);
      scenario.opt.stride = 1;
      const auto traj = mc::run(scenario);
      mc::SweepPoint pt;
      pt.amplitude = a;
      pt.rmse = mc::score_derivative_attack(scenario, traj, cutoff, dec).rmse;
      double sum = 0.0;
      for (double v : pt.rmse) {
        sum += v;
        pt.rmse_max = std::max(pt.rmse_max, v);
      }
      pt.rmse_mean = sum / static_cast<double>(pt.rmse.size());
      return pt;
    }));
  }
  std::vector<mc::SweepPoint> out;
  for (auto& j : jobs) out.push_back(j.get());
  return out;
}

int privacy_sweep(const mc::config::Settings& s, const std::vector<double>& amplitudes, OutputDir& out,
                  json& report) {
  if (s.mask() == nullptr) throw mc::ConfigError("privacy-sweep needs a [masking] table for the frequencies");
  if (amplitudes.empty()) throw mc::ConfigError("--amplitudes: at least one value required");
  for (std::size_t k = 0; k < amplitudes.size(); ++k) {
    if (!(amplitudes[k] >= 0.0)) throw mc::ConfigError("--amplitudes: values must be >= 0");
    if (k > 0 && amplitudes[k] < amplitudes[k - 1]) throw mc::ConfigError("--amplitudes: values must be sorted");
  }
  const double cutoff = transient_cutoff(s);
  const std::size_t dec = s.adversary.decimation;
  std::vector<mc::SweepPoint> points;
  if (s.is_fleet()) {
    auto scenario = s.fleet();
    scenario.opt.stride = 1;
    points = mc::privacy_sweep(scenario, amplitudes, cutoff, dec);
  } else {
    points = dac_sweep(s.dac(), amplitudes, cutoff, dec);
  }

  std::string csv = "amplitude,rmse_mean,rmse_max\n";
  json rows = json::array();
  bool monotone = true;
  for (std::size_t k = 0; k < points.size(); ++k) {
    const auto& p = points[k];
    csv += csv_line({p.amplitude, p.rmse_mean, p.rmse_max});
    rows.push_back({{"amplitude", p.amplitude}, {"rmse_mean", p.rmse_mean}, {"rmse_max", p.rmse_max}, {"rmse", p.rmse}});
    if (k > 0 && p.rmse_mean < points[k - 1].rmse_mean) monotone = false;
    std::cout << "amplitude " << mc::format_double(p.amplitude) << ": rmse_mean = " << mc::format_double(p.rmse_mean)
              << ", rmse_max = " << mc::format_double(p.rmse_max) << '\n';
  }
  out.write("sweep.csv", csv);
  report = {{"cutoff", cutoff}, {"decimation", dec}, {"signal", s.is_fleet() ? "power" : "zdot"},
            {"points", rows}, {"monotone_nondecreasing", monotone}};
  out.write_json("sweep.json", report);
  return kExitOk;
}

int check_bounds(const mc::config::Settings& s, OutputDir& out, json& report) {
  const auto& topo = s.topology();
  const double lambda2 = mc::fiedler_value(topo);
  const double lambda_max = mc::largest_laplacian_eigenvalue(topo);
  const double beta = s.beta();
  print("lambda2", lambda2);
  print("lambda_max", lambda_max);
  print("beta", beta);
  print("dt_limit_beta", mc::kRk4StabilityMargin / (beta * lambda_max));
  report = {{"lambda2", lambda2}, {"lambda_max", lambda_max}, {"beta", beta},
            {"dt_limit_beta", mc::kRk4StabilityMargin / (beta * lambda_max)}};
  if (!(lambda2 > 1e-12)) {
    report["connected"] = false;
    out.write_json("bounds.json", report);
    std::cout << "connected = false (no bound)\n";
    return kExitOk;
  }
  const mc::DacParams params{beta};
  const std::size_t n = topo.size();
  double gamma = 0.0, initial = 0.0;
  std::optional<mc::Trajectory> traj;
  std::string prefix = "zhat_";

  if (!s.is_fleet()) {
    const auto& d = s.dac();
    gamma = gamma_over_run(d);
    traj = mc::run(d);
  } else {
    // The unit-state estimator is driven by xdot_i = mode_sign * p_i, known
    // only after the closed loop has run; gamma is sampled along the run.
    auto f = s.fleet();
    f.opt.stride = 1;
    const double pinned = mc::pinned_laplacian_max_eigenvalue(topo, f.fleet.access);
    report["dt_limit_kappa"] = mc::kRk4StabilityMargin / (f.fleet.kappa * pinned);
    print("dt_limit_kappa", mc::kRk4StabilityMargin / (f.fleet.kappa * pinned));
    traj = mc::run(f);
    prefix = "xhat_";
    const double sign = mc::mode_sign(f.fleet.mode);
    std::vector<double> u(n), md(n);
    for (std::size_t k = 0; k < traj->rows(); ++k) {
      const double t = traj->time(k);
      if (f.mask() != nullptr) mc::mask_derivative_vector(*f.mask(), topo, t, md);
      for (std::size_t i = 0; i < n; ++i) {
        u[i] = sign * traj->series("p_" + std::to_string(i + 1))[k] + (f.mask() ? md[i] : 0.0);
      }
      gamma = std::max(gamma, mc::disagreement_norm(u));
    }
  }
  std::vector<double> z0(n);
  for (std::size_t i = 0; i < n; ++i) z0[i] = traj->series(prefix + std::to_string(i + 1)).front();
  initial = mc::disagreement_norm(z0);

  const double bound = mc::error_bound(gamma, params, lambda2);
  const double t_ss = mc::settled_start(params, lambda2, initial, bound);
  const double measured = s.is_fleet() ? fleet_estimate_error(*traj, unit_states(*traj, s.fleet().fleet), t_ss)
                                       : mc::steady_state_error(*traj, n, t_ss);
  report.update({{"gamma", gamma},
                 {"bound", bound},
                 {"initial_disagreement", initial},
                 {"steady_state_from", t_ss},
                 {"steady_state_error", measured},
                 {"bound_holds", measured <= bound}});
  out.write_json("bounds.json", report);
  print("gamma", gamma);
  print("bound", bound);
  print("steady_state_error", measured);
  std::cout << "bound_holds = " << (measured <= bound ? "true" : "false") << '\n';
  return kExitOk;
}

int dispatch(const Invocation& inv) {
  auto doc = mc::config::parse_file(inv.config_path);
  for (const auto& o : inv.overrides) mc::config::apply_override(doc, o);
  mc::config::Settings settings = [&] {
    try {
      return mc::config::load(doc, inv.seed);
    } catch (const std::invalid_argument& e) {
      throw mc::ConfigError(e.what());
    }
  }();
  const fs::path dir = inv.out_dir.empty() ? fs::path(settings.output.dir) : fs::path(inv.out_dir);
  OutputDir out(dir);

  json report;
  int status = kExitOk;
  try {
    if (inv.subcommand == "simulate-dac") {
      status = simulate_dac(settings, out, report);
    } else if (inv.subcommand == "simulate-bess") {
      status = simulate_bess(settings, out, report);
    } else if (inv.subcommand == "attack") {
      status = attack(settings, out, report);
    } else if (inv.subcommand == "privacy-sweep") {
      status = privacy_sweep(settings, inv.amplitudes, out, report);
    } else {
      status = check_bounds(settings, out, report);
    }
  } catch (const std::invalid_argument& e) {
    // Library preconditions violated by the scenario (short horizon, ...).
    throw mc::ConfigError(e.what());
  }

  json manifest = {{"tool", "masked-consensus"},
                   {"version", MASKED_CONSENSUS_VERSION},
                   {"subcommand", inv.subcommand},
                   {"config_path", inv.config_path},
                   {"overrides", inv.overrides},
                   {"seed", settings.seed},
                   {"config", settings.effective},
                   {"files", out.files()}};
  if (inv.subcommand == "privacy-sweep") manifest["amplitudes"] = inv.amplitudes;
  std::ofstream(out.path() / "manifest.json", std::ios::binary | std::ios::trunc) << manifest.dump(2) << '\n';
  return status;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Masked dynamic average consensus: simulation, attack and bound checks"};
  app.set_version_flag("--version", MASKED_CONSENSUS_VERSION);
  app.require_subcommand(1);

  Invocation inv;
  const std::vector<std::pair<std::string, std::string>> commands{
      {"simulate-dac", "Run the (masked) consensus estimator and report the error bound"},
      {"simulate-bess", "Run the battery-fleet closed loop"},
      {"attack", "Reconstruct private signals from the transmitted estimates"},
      {"privacy-sweep", "Attack error as a function of mask amplitude"},
      {"check-bounds", "Print lambda2, gamma, the error bound and the measured error"}};
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", inv.config_path, "Scenario file (TOML)")->required();
    sub->add_option("--out-dir", inv.out_dir, "Output directory (default: output.dir)");
    sub->add_option("--seed", inv.seed, "Seed for generated mask frequencies (overrides masking.seed)");
    sub->add_option("--set", inv.overrides, "Override a config value: section.key=value");
    if (name == "privacy-sweep") {
      sub->add_option("--amplitudes", inv.amplitudes, "Comma-separated mask amplitudes")->delimiter(',');
    }
    sub->callback([&inv, name = name] { inv.subcommand = name; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    return dispatch(inv);
  } catch (const mc::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const mc::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
