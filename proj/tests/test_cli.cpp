#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>

#include "opdyn/io.hpp"
#include "support.hpp"

using namespace opdyn;
using namespace opdyn::testing;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code = -1;
  std::string out;
};

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("opdyn_cli_") + info->name() + "_" + std::to_string(::getpid()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  CliResult run(const std::string& args) const {
    const fs::path log = dir_ / "log.txt";
    const std::string cmd = std::string(OPDYN_CLI) + " " + args + " > " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    CliResult r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = read_file(log.string());
    return r;
  }

  static std::string config(const std::string& name) { return std::string(OPDYN_CONFIG_DIR) + "/" + name; }

  fs::path write(const std::string& name, const std::string& text) const {
    const fs::path p = dir_ / name;
    std::ofstream(p, std::ios::binary) << text;
    return p;
  }

  static std::vector<CsvRow> csv(const fs::path& p, std::string* header = nullptr) {
    std::ifstream in(p, std::ios::binary);
    return read_csv(in, header);
  }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, CheckExitCodes) {
  const auto ok = run("check " + config("example1_r0.json"));
  EXPECT_EQ(ok.code, 0) << ok.out;
  EXPECT_NE(ok.out.find("verdict: unique_equilibrium"), std::string::npos);

  const auto crit = run("check " + config("example2_critical.json") + " --tol-critical 1e-4");
  EXPECT_EQ(crit.code, 2) << crit.out;
  EXPECT_NE(crit.out.find("none_at_T"), std::string::npos);
  // r = sqrt(0.184013893...) is reported with the critical horizon.
  EXPECT_NE(crit.out.find("r = 0.42896"), std::string::npos) << crit.out;

  EXPECT_EQ(run("check " + write("empty.json", "").string()).code, 1);
  EXPECT_EQ(run("check " + write("bad.json", "{\"horizon\": ").string()).code, 1);
  EXPECT_EQ(run("check " + (dir_ / "missing.json").string()).code, 1);
  EXPECT_EQ(run("frobnicate").code, 1);
}

TEST_F(Cli, SolveWritesTrajectory) {
  const auto out = dir_ / "solve";
  const auto r = run("solve " + config("example2.json") + " --grid 3 --out " + out.string());
  ASSERT_EQ(r.code, 0) << r.out;
  std::string header;
  const auto rows = csv(out / "trajectory.csv", &header);
  EXPECT_EQ(header, "stage,t,agent,issue,kind,value");
  ASSERT_EQ(rows.size(), 24u);
  // t = 0 states reproduce the config biases bit for bit.
  const auto g = game_from_json(parse_json_text(read_file(config("example2.json"))));
  for (const auto& row : rows) {
    if (row.cells[1] != "0" || row.cells[4] != "x") continue;
    const auto agent = std::stoul(row.cells[2]) - 1, issue = std::stoul(row.cells[3]) - 1;
    EXPECT_EQ(parse_number(row.cells[5]), g.biases[agent][static_cast<Eigen::Index>(issue)]);
  }
  const Json m = parse_json_text(read_file((out / "manifest.json").string()));
  EXPECT_EQ(m["command"], "solve");
  EXPECT_EQ(m["files"][0]["rows"], 24);
  EXPECT_EQ(m["config_digest"], digest_hex(read_file(config("example2.json"))));
}

TEST_F(Cli, SolveRefusesCriticalHorizon) {
  const auto r = run("solve " + config("example2_critical.json") + " --tol-critical 1e-4 --out " +
                     (dir_ / "x").string());
  EXPECT_EQ(r.code, 2) << r.out;
  EXPECT_NE(r.out.find("critical"), std::string::npos);
  EXPECT_FALSE(fs::exists(dir_ / "x" / "trajectory.csv"));
}

TEST_F(Cli, ExampleThreeDistancePeak) {
  const auto out = dir_ / "e3";
  ASSERT_EQ(run("solve " + config("example3.json") + " --grid 201 --out " + out.string()).code, 0);
  std::map<std::string, std::map<std::string, double>> issue1;  // t -> agent -> x
  std::vector<std::string> times;
  for (const auto& row : csv(out / "trajectory.csv")) {
    if (row.cells[3] != "1" || row.cells[4] != "x") continue;
    if (issue1.find(row.cells[1]) == issue1.end()) times.push_back(row.cells[1]);
    issue1[row.cells[1]][row.cells[2]] = parse_number(row.cells[5]);
  }
  double best = -1.0, best_t = 0.0, nearest = 0.0;
  for (const auto& t : times) {
    const double gap = std::abs(issue1[t]["1"] - issue1[t]["2"]);
    if (gap > best) best = gap, best_t = parse_number(t);
    if (std::abs(parse_number(t) - 0.36) < std::abs(nearest - 0.36)) nearest = parse_number(t);
  }
  EXPECT_EQ(best_t, nearest);
  EXPECT_GT(best_t, 0.0);
}

TEST_F(Cli, ScenarioPresets) {
  const auto parties = dir_ / "parties";
  auto r = run("scenario --preset parties --grid 3 --out " + parties.string());
  ASSERT_EQ(r.code, 0) << r.out;
  for (int k = 1; k <= 5; ++k) EXPECT_TRUE(fs::exists(parties / "seed_1" / ("stage_" + std::to_string(k) + ".csv")));
  EXPECT_FALSE(fs::exists(parties / "seed_1" / "stage_6.csv"));
  std::string header;
  const auto summary = csv(parties / "summary.csv", &header);
  EXPECT_EQ(header, "seed,stage,group,issue,mean,spread");
  EXPECT_EQ(summary.size(), 6u * 6u * 2u);  // stages 0..5, five groups plus "all", two issues
  EXPECT_EQ(csv(parties / "seed_1" / "stage_1.csv").size(), 3u * 102u * 2u * 2u);

  const auto het = dir_ / "het";
  r = run("scenario --preset heterogeneous-a --grid 2 --seed 5 --out " + het.string());
  ASSERT_EQ(r.code, 0) << r.out;
  for (int k = 1; k <= 10; ++k) EXPECT_TRUE(fs::exists(het / "seed_5" / ("stage_" + std::to_string(k) + ".csv")));

  const auto bad = run("scenario --preset nonsense --out " + (dir_ / "bad").string());
  EXPECT_EQ(bad.code, 1);
  EXPECT_NE(bad.out.find("parties, heterogeneous-a, heterogeneous-b"), std::string::npos) << bad.out;
  EXPECT_EQ(run("scenario --out " + (dir_ / "none").string()).code, 1);
}

TEST_F(Cli, ScenarioIsByteReproducible) {
  const auto cfg = config("heterogeneous-b.json");
  const auto a = dir_ / "a", b = dir_ / "b";
  ASSERT_EQ(run("scenario " + cfg + " --seeds 2 --grid 4 --out " + a.string()).code, 0);
  ASSERT_EQ(run("scenario " + cfg + " --seeds 2 --grid 4 --out " + b.string()).code, 0);
  std::size_t compared = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (e.path().extension() != ".csv") continue;
    const auto other = b / fs::relative(e.path(), a);
    EXPECT_EQ(read_file(e.path().string()), read_file(other.string())) << e.path();
    ++compared;
  }
  EXPECT_EQ(compared, 2u * 10u + 1u);
}

TEST_F(Cli, ScenarioRecordsNonExistencePerSeed) {
  const auto probe = critical_dyad_scenario(1.0, 1);
  const auto pop = instantiate(probe);
  const auto stage = build_stage(probe, pop, sample_network(resolve_rho(probe, pop, 1), probe.seed, 1),
                                 pop.initial_biases);
  const double critical = critical_time(std::sqrt(-*spectral(assemble(stage).q).min_real_negative), 0);
  const auto cfg = write("critical.json", scenario_to_json(critical_dyad_scenario(critical)).dump(2));
  const auto out = dir_ / "crit";
  const auto r = run("scenario " + cfg.string() + " --seeds 2 --out " + out.string());
  EXPECT_EQ(r.code, 2) << r.out;
  const Json m = parse_json_text(read_file((out / "manifest.json").string()));
  ASSERT_EQ(m["failures"].size(), 2u);
  EXPECT_EQ(m["failures"][0]["stage"], 1);
  EXPECT_EQ(m["failures"][1]["seed"], 2);
  // Both seeds ran; the summary still carries their stage-0 rows.
  EXPECT_EQ(csv(out / "summary.csv").size(), 2u * 3u * 2u);
}

TEST_F(Cli, OutputDirectoryFromEnvironment) {
  const auto target = dir_ / "env";
  const std::string cmd = "OPDYN_OUT_DIR=" + target.string() + " " + OPDYN_CLI + " solve " +
                          config("example1_r0.json") + " --grid 5 > /dev/null 2>&1";
  ASSERT_EQ(std::system(cmd.c_str()), 0);
  EXPECT_TRUE(fs::exists(target / "trajectory.csv"));
}
