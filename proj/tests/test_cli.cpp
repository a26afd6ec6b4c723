#include "experiment.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace rgem::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string config_error(const json& j) {
  try {
    parse_config(j);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("rgem_cli_") + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path write_config(const std::string& name, const json& j) const {
    const fs::path p = dir_ / name;
    std::ofstream(p) << j.dump(2);
    return p;
  }

  // Runs the CLI binary; returns its exit status.
  int cli(const std::string& args) const {
    const std::string cmd = std::string(RGEM_CLI_PATH) + " " + args + " >" + (dir_ / "stdout.txt").string() +
                            " 2>" + (dir_ / "stderr.txt").string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  static json small_run() {
    return json{{"problem", {{"family", "quadratic"}, {"m", 3}, {"n", 5}, {"cond", 20}, {"seed", 3}}},
                {"solver", {{"method", "rgem"}, {"init", "zero"}}},
                {"k", 30},
                {"seeds", {1, 2}},
                {"output", {{"cadence", 10}}}};
  }

  fs::path dir_;
};

TEST(CliConfig, UnknownKeysNameTheirPath) {
  EXPECT_NE(config_error({{"problem", {{"foo", 1}}}}).find("problem.foo: unknown key"), std::string::npos);
  EXPECT_NE(config_error({{"bogus", 1}}).find("bogus: unknown key"), std::string::npos);
  EXPECT_NE(config_error({{"solver", {{"nope", true}}}}).find("solver.nope"), std::string::npos);
}

TEST(CliConfig, TypeErrorsNameTheirPath) {
  EXPECT_NE(config_error({{"problem", {{"m", "four"}}}}).find("problem.m"), std::string::npos);
  EXPECT_NE(config_error({{"k", "many"}}).find("k"), std::string::npos);
  EXPECT_NE(config_error({{"output", {{"jsonl", 3}}}}).find("output.jsonl"), std::string::npos);
}

TEST(CliConfig, SemanticChecks) {
  EXPECT_FALSE(config_error({{"problem", {{"mu", 0.1}, {"cond", 10}}}}).empty());
  EXPECT_FALSE(config_error({{"solver", {{"init", "sideways"}}}}).empty());
  const ExperimentConfig c = parse_config({{"problem", {{"cond", 10}}}, {"k", 7}, {"seeds", {4, 5}}});
  EXPECT_EQ(c.k, 7u);
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{4, 5}));
  EXPECT_EQ(*c.problem.cond, 10.0);
}

TEST_F(CliTest, LoadConfigRejectsBadJson) {
  const fs::path p = dir_ / "broken.json";
  std::ofstream(p) << "{\"k\": ";
  EXPECT_THROW(load_config(p), ConfigError);
  EXPECT_THROW(load_config(dir_ / "missing.json"), ConfigError);
}

TEST_F(CliTest, OutDirResolution) {
  ExperimentConfig cfg;
  ::setenv(kOutDirEnv, (dir_ / "from_env").c_str(), 1);
  EXPECT_EQ(resolve_out_dir(cfg), dir_ / "from_env");
  cfg.output.dir = (dir_ / "from_config").string();
  EXPECT_EQ(resolve_out_dir(cfg), dir_ / "from_config");
  ::unsetenv(kOutDirEnv);
  cfg.output.dir.clear();
  EXPECT_EQ(resolve_out_dir(cfg), fs::path("rgem_out"));
}

TEST_F(CliTest, ValidateExitCodes) {
  EXPECT_EQ(cli("validate " + write_config("good.json", small_run()).string()), kOk);
  EXPECT_EQ(cli("validate " + write_config("bad.json", {{"problem", {{"foo", 1}}}}).string()), kConfigFailure);
  EXPECT_NE(slurp(dir_ / "stderr.txt").find("problem.foo"), std::string::npos);
  EXPECT_EQ(cli("validate " + (dir_ / "absent.json").string()), kConfigFailure);
  EXPECT_EQ(cli("frobnicate"), kConfigFailure);
}

TEST_F(CliTest, RunWritesVersionedReproducibleTraces) {
  const fs::path cfg = write_config("run.json", small_run());
  ASSERT_EQ(cli("run " + cfg.string() + " --out " + (dir_ / "a").string()), kOk);
  ASSERT_EQ(cli("run " + cfg.string() + " --out " + (dir_ / "b").string() + " --workers 1"), kOk);
  EXPECT_NE(slurp(dir_ / "stdout.txt").find("bound check psi: ok"), std::string::npos);
  for (const char* f : {"trace_seed1.csv", "trace_seed2.csv", "aggregate.csv", "bounds.csv"}) {
    const std::string a = slurp(dir_ / "a" / f);
    ASSERT_FALSE(a.empty()) << f;
    EXPECT_EQ(a, slurp(dir_ / "b" / f)) << f;
    EXPECT_EQ(a.rfind("#schema=rgem-trace/1\n", 0), 0u) << f;
  }
  const std::string bounds = slurp(dir_ / "a" / "bounds.csv");
  EXPECT_NE(bounds.find("\nbound,"), std::string::npos);
  EXPECT_NE(slurp(dir_ / "a" / "trace_seed1.csv").find("\ntrace,1,30,"), std::string::npos);
}

TEST_F(CliTest, RunHonorsOutDirEnvironment) {
  const fs::path cfg = write_config("run.json", small_run());
  const std::string env = std::string(kOutDirEnv) + "=" + (dir_ / "env_out").string() + " ";
  const std::string cmd = env + RGEM_CLI_PATH + " run " + cfg.string() + " --seeds 5 >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  ASSERT_TRUE(WIFEXITED(status));
  EXPECT_EQ(WEXITSTATUS(status), kOk);
  EXPECT_TRUE(fs::exists(dir_ / "env_out" / "trace_seed5.csv"));
}

TEST_F(CliTest, BoundCheckSkipsRowsBelowResolution) {
  json j = small_run();
  j["problem"] = {{"family", "logistic"}, {"m", 3}, {"n", 4}, {"mu", 0.05}, {"per_agent", 30}, {"seed", 2}};
  j["k"] = 1500;
  j["output"] = {{"cadence", 500}};
  ASSERT_EQ(cli("run " + write_config("l.json", j).string() + " --out " + (dir_ / "l").string()), kOk);
  const std::string out = slurp(dir_ / "stdout.txt");
  EXPECT_NE(out.find("bound check psi: ok"), std::string::npos) << out;
  EXPECT_NE(out.find("below numerical resolution skipped"), std::string::npos) << out;
}

TEST_F(CliTest, SimulatorOutputsAndLivelock) {
  json j = small_run();
  j["solver"] = {{"method", "simulate"}, {"init", "zero"}};
  j["output"] = {{"jsonl", true}, {"message_log", true}, {"cadence", 5}};
  ASSERT_EQ(cli("run " + write_config("sim.json", j).string() + " --out " + (dir_ / "sim").string()), kOk);
  std::ifstream log(dir_ / "sim" / "messages_seed1.jsonl");
  std::string line;
  int lines = 0;
  while (std::getline(log, line)) {
    const json m = json::parse(line);
    EXPECT_EQ(m.size(), 5u);
    ++lines;
  }
  EXPECT_GT(lines, 0);
  std::ifstream trace(dir_ / "sim" / "trace_seed1.jsonl");
  ASSERT_TRUE(std::getline(trace, line));
  EXPECT_EQ(json::parse(line).at("schema"), "rgem-trace/1");

  j["solver"] = {{"method", "simulate"}, {"responsiveness", {0.0}}, {"retry_cap", 1}};
  EXPECT_EQ(cli("run " + write_config("dead.json", j).string() + " --out " + (dir_ / "dead").string()),
            kRunFailure);
}

TEST_F(CliTest, BoundsAndSweep) {
  EXPECT_EQ(cli("bounds " + write_config("b.json", small_run()).string()), kOk);
  EXPECT_FALSE(slurp(dir_ / "stdout.txt").empty());

  json j = small_run();
  j["sweep"] = {{"m", {2}}, {"cond", {10}}, {"seeds", 2}, {"n", 4}, {"eps", 1e-3}};
  ASSERT_EQ(cli("sweep " + write_config("s.json", j).string() + " --out " + (dir_ / "sw").string()), kOk);
  const std::string csv = slurp(dir_ / "sw" / "sweep.csv");
  EXPECT_EQ(csv.rfind("#schema=rgem-sweep/1\n", 0), 0u);
  EXPECT_NE(csv.find("\n2,10"), std::string::npos);

  EXPECT_EQ(cli("sweep " + write_config("nosweep.json", small_run()).string()), kConfigFailure);
}

TEST(CliWriters, TraceAndBoundCsv) {
  RunTrace t;
  TraceRecord r;
  r.iteration = 3;
  r.psi_gap = 0.5;
  r.P_to_opt = 0.25;
  r.exact_grads = 12;
  r.wall_ns = 99;
  t.records.push_back(r);
  std::ostringstream a, b;
  write_trace_csv(a, "rgem", 4, t, false);
  const std::string s = a.str();
  EXPECT_EQ(s.rfind("#schema=rgem-trace/1\n", 0), 0u);
  EXPECT_NE(s.find("\nrgem,4,3,"), std::string::npos);
  EXPECT_EQ(s.find("99"), std::string::npos);

  write_bound_csv(b, {0, 2}, {4.0L, 2.0L, 1.0L}, {8.0L, 4.0L, 2.0L});
  const std::string bs = b.str();
  EXPECT_NE(bs.find("\nbound,,0,"), std::string::npos);
  EXPECT_NE(bs.find("\nbound,,2,"), std::string::npos);
}

}  // namespace
}  // namespace rgem::cli
