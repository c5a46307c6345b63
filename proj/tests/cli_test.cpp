#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

const std::string kCli = MC_CLI_PATH;
const std::string kScenarios = MC_SCENARIO_DIR;

struct Result {
  int status = -1;
  std::string out;
};

Result run(const std::string& args) {
  const std::string cmd = kCli + " " + args + " 2>/dev/null";
  Result r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (pipe == nullptr) return r;
  char buf[4096];
  while (std::fgets(buf, sizeof(buf), pipe) != nullptr) r.out += buf;
  const int raw = pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string first_line(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  return line;
}

std::size_t line_count(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) ++n;
  return n;
}

double reported(const std::string& out, const std::string& key) {
  std::istringstream in(out);
  for (std::string line; std::getline(in, line);) {
    if (line.rfind(key + " = ", 0) == 0) return std::stod(line.substr(key.size() + 3));
  }
  ADD_FAILURE() << "no " << key << " in output:\n" << out;
  return 0.0;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / ("mc_cli_" + std::string(info->name()) + "_" + std::to_string(::getpid()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string out(const std::string& name) const { return (dir_ / name).string(); }
  std::string scenario(const std::string& name) const { return kScenarios + "/" + name; }

  fs::path dir_;
};

TEST_F(Cli, CheckBoundsReportsRingSpectrum) {
  const auto r = run("check-bounds --config " + scenario("ring6_dac.toml") + " --out-dir " + out("cb") +
                     " --set dac.horizon=10");
  ASSERT_EQ(r.status, 0) << r.out;
  EXPECT_NEAR(reported(r.out, "lambda2"), 1.0, 1e-12);
  EXPECT_NEAR(reported(r.out, "lambda_max"), 4.0, 1e-12);
  EXPECT_NE(r.out.find("bound_holds = true"), std::string::npos);
  const auto j = json::parse(slurp(dir_ / "cb" / "bounds.json"));
  EXPECT_NEAR(j["bound"].get<double>(), j["gamma"].get<double>() / 400.0, 1e-12 * j["bound"].get<double>());
  EXPECT_TRUE(j["bound_holds"].get<bool>());
}

TEST_F(Cli, SimulateDacReplaysByteForByte) {
  const std::string args = "simulate-dac --config " + scenario("ring6_dac.toml") + " --set dac.horizon=7";
  ASSERT_EQ(run(args + " --out-dir " + out("a")).status, 0);
  ASSERT_EQ(run(args + " --out-dir " + out("b")).status, 0);
  const auto csv = slurp(dir_ / "a" / "dac.csv");
  EXPECT_EQ(csv, slurp(dir_ / "b" / "dac.csv"));
  EXPECT_EQ(slurp(dir_ / "a" / "report.json"), slurp(dir_ / "b" / "report.json"));
  EXPECT_EQ(first_line(dir_ / "a" / "dac.csv"),
            "t,zhat_1,zhat_2,zhat_3,zhat_4,zhat_5,zhat_6,true_average,err_1,err_2,err_3,err_4,err_5,err_6");
  EXPECT_EQ(line_count(dir_ / "a" / "dac.csv"), 7002u);
}

TEST_F(Cli, ManifestDeclaresEveryFile) {
  ASSERT_EQ(run("simulate-dac --config " + scenario("ring6_dac.toml") +
                " --set dac.horizon=7 --set output.decimate=10 --out-dir " + out("m"))
                .status,
            0);
  const auto m = json::parse(slurp(dir_ / "m" / "manifest.json"));
  EXPECT_EQ(m["subcommand"], "simulate-dac");
  EXPECT_EQ(m["config"]["dac"]["horizon"], 7);
  EXPECT_EQ(m["config"]["output"]["decimate"], 10);
  EXPECT_EQ(m["overrides"].size(), 2u);
  EXPECT_FALSE(m["version"].get<std::string>().empty());
  std::size_t declared = 0;
  for (const auto& f : m["files"]) {
    const auto p = dir_ / "m" / f["name"].get<std::string>();
    ASSERT_TRUE(fs::exists(p)) << p;
    EXPECT_EQ(fs::file_size(p), f["bytes"].get<std::size_t>());
    ++declared;
  }
  std::size_t present = 0;
  for (const auto& e : fs::directory_iterator(dir_ / "m")) present += e.path().filename() != "manifest.json";
  EXPECT_EQ(declared, present);
  EXPECT_EQ(line_count(dir_ / "m" / "dac.csv"), 702u);
}

TEST_F(Cli, SeedControlsGeneratedMasks) {
  const std::string args = "simulate-dac --config " + scenario("random_masks.toml") + " --set dac.horizon=25";
  ASSERT_EQ(run(args + " --seed 5 --out-dir " + out("s5a")).status, 0);
  ASSERT_EQ(run(args + " --seed 5 --out-dir " + out("s5b")).status, 0);
  ASSERT_EQ(run(args + " --seed 6 --out-dir " + out("s6")).status, 0);
  EXPECT_EQ(slurp(dir_ / "s5a" / "dac.csv"), slurp(dir_ / "s5b" / "dac.csv"));
  EXPECT_NE(slurp(dir_ / "s5a" / "dac.csv"), slurp(dir_ / "s6" / "dac.csv"));
  const auto m = json::parse(slurp(dir_ / "s5a" / "manifest.json"));
  EXPECT_EQ(m["seed"], 5u);
  EXPECT_EQ(m["config"]["masking"]["seed"], 5u);
}

TEST_F(Cli, SimulateBessWritesFleetColumns) {
  const auto r = run("simulate-bess --config " + scenario("fleet6.toml") +
                     " --set dac.horizon=2 --set output.decimate=1 --out-dir " + out("b"));
  ASSERT_EQ(r.status, 0);
  EXPECT_EQ(first_line(dir_ / "b" / "bess.csv"),
            "t,soc_1,soc_2,soc_3,soc_4,soc_5,soc_6,p_1,p_2,p_3,p_4,p_5,p_6,total_power,p_star,"
            "xhat_1,xhat_2,xhat_3,xhat_4,xhat_5,xhat_6,phat_1,phat_2,phat_3,phat_4,phat_5,phat_6,soc_spread");
  EXPECT_EQ(line_count(dir_ / "b" / "bess.csv"), 2002u);
  EXPECT_NEAR(reported(r.out, "initial_soc_spread"), 0.23, 1e-12);
}

TEST_F(Cli, AttackWritesPerAgentFiles) {
  const auto r = run("attack --config " + scenario("ring6_dac.toml") + " --set dac.horizon=3 --out-dir " + out("a"));
  ASSERT_EQ(r.status, 0);
  for (int i = 1; i <= 6; ++i) {
    const std::string id = std::to_string(i);
    EXPECT_EQ(first_line(dir_ / "a" / ("attack_" + id + ".csv")), "t,ztrue_" + id + ",zrec_" + id + ",zdotrec_" + id);
  }
  const auto j = json::parse(slurp(dir_ / "a" / "attack.json"));
  EXPECT_EQ(j["agents"].size(), 6u);
  EXPECT_EQ(j["cutoff"], 1.0);
  // The mask hides zdot: the error dwarfs the signal.
  for (const auto& a : j["agents"]) EXPECT_GT(a["rmse_zdot"].get<double>(), 100 * a["truth_rms_zdot"].get<double>());

  const auto plain = run("attack --config " + scenario("ring6_dac.toml") +
                         " --set dac.horizon=3 --set masking.amplitude=0 --out-dir " + out("p"));
  ASSERT_EQ(plain.status, 0);
  const auto k = json::parse(slurp(dir_ / "p" / "attack.json"));
  for (const auto& a : k["agents"]) EXPECT_LT(a["rmse_zdot"].get<double>(), 0.01 * a["truth_rms_zdot"].get<double>());
}

TEST_F(Cli, PrivacySweepIsMonotone) {
  const auto r = run("privacy-sweep --config " + scenario("fleet6.toml") +
                     " --set dac.horizon=3 --amplitudes 0,100,500 --out-dir " + out("sw"));
  ASSERT_EQ(r.status, 0);
  EXPECT_EQ(first_line(dir_ / "sw" / "sweep.csv"), "amplitude,rmse_mean,rmse_max");
  EXPECT_EQ(line_count(dir_ / "sw" / "sweep.csv"), 4u);
  const auto j = json::parse(slurp(dir_ / "sw" / "sweep.json"));
  EXPECT_TRUE(j["monotone_nondecreasing"].get<bool>());
  EXPECT_EQ(j["signal"], "power");
  const auto m = json::parse(slurp(dir_ / "sw" / "manifest.json"));
  EXPECT_EQ(m["amplitudes"].size(), 3u);
}

TEST_F(Cli, ExitCodes) {
  EXPECT_EQ(run("check-bounds --config " + out("missing.toml")).status, 2);
  EXPECT_EQ(run("check-bounds").status, 2);
  EXPECT_EQ(run("").status, 2);
  EXPECT_EQ(run("simulate-dac --config " + scenario("ring6_dac.toml") + " --set dac.bogus=1 --out-dir " + out("x"))
                .status,
            2);
  EXPECT_EQ(run("simulate-dac --config " + scenario("fleet6.toml") + " --out-dir " + out("x")).status, 2);
  EXPECT_EQ(run("simulate-bess --config " + scenario("ring6_dac.toml") + " --out-dir " + out("x")).status, 2);
  EXPECT_EQ(run("privacy-sweep --config " + scenario("fleet6.toml") + " --amplitudes 5,1 --out-dir " + out("x"))
                .status,
            2);
  // Step size beyond the stability guard.
  EXPECT_EQ(run("simulate-dac --config " + scenario("ring6_dac.toml") + " --set dac.dt=2e-3 --out-dir " + out("x"))
                .status,
            3);
  // A charging fleet asked to discharge runs its SoC below zero.
  EXPECT_EQ(run("simulate-bess --config " + scenario("fleet6_scaled.toml") +
                " --set bess.mode=charge --set dac.horizon=600 --out-dir " + out("x"))
                .status,
            3);
  const std::string bad = out("bad.toml");
  std::ofstream(bad) << "[topology]\nn = 6\nkind = ring\n";
  EXPECT_EQ(run("check-bounds --config " + bad).status, 2);
}

TEST_F(Cli, ConfigErrorsPointAtTheFile) {
  const std::string bad = out("bad.toml");
  std::ofstream(bad) << "[topology]\nn = 6\nkind = ring\n";
  const std::string cmd = kCli + " check-bounds --config " + bad + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  ASSERT_NE(pipe, nullptr);
  std::string text;
  char buf[512];
  while (std::fgets(buf, sizeof(buf), pipe) != nullptr) text += buf;
  pclose(pipe);
  EXPECT_NE(text.find(bad + ":3:"), std::string::npos) << text;
}

}  // namespace
