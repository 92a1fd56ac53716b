// opdyn: check, solve and simulate open-loop Nash opinion games.
//
// Exit codes: 0 success, 1 config or input error, 2 no equilibrium at the
// requested horizon (for `scenario`: at least one seed aborted).

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "opdyn/io.hpp"

namespace fs = std::filesystem;
using namespace opdyn;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitNoEquilibrium = 2;

std::string default_out_dir() {
  const char* env = std::getenv("OPDYN_OUT_DIR");
  return (env && *env) ? env : "out";
}

std::string format_complex(const Complex& z) {
  if (z.imag() == 0.0) return format_number(z.real());
  return format_number(z.real()) + (z.imag() < 0 ? "-" : "+") + format_number(std::abs(z.imag())) + "i";
}

void print_verdict(std::ostream& os, const ExistenceVerdict& v, double horizon) {
  os << "horizon: " << format_number(horizon) << '\n';
  os << "verdict: " << (v.unique_equilibrium ? "unique_equilibrium" : "none_at_T") << '\n';
  os << "eigenvalues:";
  for (const auto& z : v.spectrum.eigenvalues) os << ' ' << format_complex(z);
  os << '\n';
  if (v.horizons.empty()) {
    os << "critical horizons: none (no real negative eigenvalue)\n";
  } else {
    os << "critical horizons up to " << format_number(2.0 * horizon) << ":\n";
    for (const auto& s : v.horizons.entries) {
      os << "  r = " << format_number(s.r) << " (eigenvalue " << format_number(-s.r * s.r) << "):";
      if (s.times.empty()) os << " none in range";
      for (double t : s.times) os << ' ' << format_number(t);
      os << '\n';
    }
  }
  for (const auto& h : v.hits)
    os << "critical: T_" << h.k << " = " << format_number(h.horizon) << " with r = " << format_number(h.r) << '\n';
  os << "f(QT) condition: " << format_number(v.f_condition) << '\n';
}

int cmd_check(const std::string& config, double tol) {
  const GameSpec spec = game_from_json(parse_json_text(read_file(config), config));
  const QAssembly a = assemble(spec);
  const ExistenceVerdict v = check_existence(a, spec.horizon, tol);
  print_verdict(std::cout, v, spec.horizon);
  return v.unique_equilibrium ? kExitOk : kExitNoEquilibrium;
}

int cmd_solve(const std::string& config, std::size_t grid, const std::string& out, double tol) {
  RunManifest m;
  m.command = "solve";
  m.version = OPDYN_VERSION;
  m.started = utc_timestamp();
  const std::string text = read_file(config);
  m.config_digest = digest_hex(text);
  const GameSpec spec = game_from_json(parse_json_text(text, config));
  const QAssembly a = assemble(spec);
  const ExistenceVerdict v = check_existence(a, spec.horizon, tol);
  if (!v.unique_equilibrium) {
    std::cerr << "error: no Nash equilibrium at this horizon\n";
    print_verdict(std::cerr, v, spec.horizon);
    return kExitNoEquilibrium;
  }
  const auto sol = NashSolution::solve(a, spec.horizon, tol);
  if (sol.near_critical())
    std::cerr << "warning: near-critical horizon, proximity estimate " << format_number(sol.critical_proximity())
              << '\n';
  const auto tr = sol.sample(grid);

  fs::create_directories(out);
  const fs::path csv = fs::path(out) / "trajectory.csv";
  std::ofstream f(csv, std::ios::binary);
  if (!f) throw ConfigError(csv.string() + ": cannot write");
  f << kTrajectoryHeader << '\n';
  const auto rows = write_trajectory_rows(f, tr, spec.n, spec.d, 0);
  f.close();
  m.files.push_back({"trajectory.csv", rows});
  m.finished = utc_timestamp();
  m.extra["near_critical"] = sol.near_critical();
  std::ofstream(fs::path(out) / "manifest.json") << m.to_json().dump(2) << '\n';
  std::cout << "wrote " << csv.string() << " (" << rows << " rows)\n";
  return kExitOk;
}

struct ScenarioOptions {
  std::optional<std::string> config;
  std::optional<std::string> preset;
  std::size_t seeds = 1;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> grid;
  std::string out;
};

int cmd_scenario(const ScenarioOptions& o) {
  if (o.config.has_value() == o.preset.has_value())
    throw ConfigError("scenario: give exactly one of a config file or --preset");
  if (o.seeds < 1) throw ConfigError("scenario: --seeds must be at least 1");
  ScenarioSpec base = o.preset ? preset_by_name(*o.preset)
                               : scenario_from_json(parse_json_text(read_file(*o.config), *o.config));
  if (o.seed) base.seed = *o.seed;
  if (o.grid) base.grid_points = *o.grid;
  validate(base);

  RunManifest m;
  m.command = "scenario";
  m.version = OPDYN_VERSION;
  m.started = utc_timestamp();
  m.config_digest = digest_hex(scenario_to_json(base).dump());
  fs::create_directories(o.out);
  std::ofstream(fs::path(o.out) / "config.json") << scenario_to_json(base).dump(2) << '\n';
  m.files.push_back({"config.json", 0});

  const fs::path summary_path = fs::path(o.out) / "summary.csv";
  std::ofstream summary(summary_path, std::ios::binary);
  if (!summary) throw ConfigError(summary_path.string() + ": cannot write");
  summary << kSummaryHeader << '\n';
  std::size_t summary_rows = 0;
  Json failures = Json::array();

  for (std::size_t k = 0; k < o.seeds; ++k) {
    ScenarioSpec s = base;
    s.seed = base.seed + k;
    m.seeds.push_back(s.seed);
    const Population pop = instantiate(s);
    std::vector<StageRecord> records;
    try {
      records = run_scenario(s, pop);
    } catch (const StageNonExistence& e) {
      std::cerr << "seed " << s.seed << ": " << e.what() << '\n';
      failures.push_back({{"seed", s.seed}, {"stage", e.stage()}, {"message", e.what()}});
      records = e.completed();
    }
    const fs::path dir = fs::path(o.out) / ("seed_" + std::to_string(s.seed));
    fs::create_directories(dir);
    for (const auto& r : records) {
      const std::string name = "stage_" + std::to_string(r.stage) + ".csv";
      std::ofstream f(dir / name, std::ios::binary);
      f << kTrajectoryHeader << '\n';
      const auto rows = write_trajectory_rows(f, r.trajectory, pop.size(), s.issues, r.stage);
      m.files.push_back({(fs::path("seed_" + std::to_string(s.seed)) / name).generic_string(), rows});
    }
    summary_rows += write_summary_rows(summary, s.seed, initial_statistics(s, pop));
    summary_rows += write_summary_rows(summary, s.seed, group_statistics(s, pop, records));
  }
  summary.close();
  m.files.push_back({"summary.csv", summary_rows});
  m.finished = utc_timestamp();
  m.extra["failures"] = failures;
  m.extra["scenario"] = base.name;
  std::ofstream(fs::path(o.out) / "manifest.json") << m.to_json().dump(2) << '\n';
  std::cout << "wrote " << o.seeds << " seed(s) to " << o.out << '\n';
  return failures.empty() ? kExitOk : kExitNoEquilibrium;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Open-loop Nash equilibria of multidimensional opinion games"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(OPDYN_VERSION));

  double tol = kCriticalTimeTol;
  std::string config;
  std::size_t grid = 201;
  std::string out = default_out_dir();

  auto* check = app.add_subcommand("check", "existence verdict, spectrum and critical horizons");
  check->add_option("config", config, "game config (JSON)")->required();
  check->add_option("--tol-critical", tol, "relative tolerance for critical horizons");

  auto* solve = app.add_subcommand("solve", "solve a game and write trajectory.csv");
  solve->add_option("config", config, "game config (JSON)")->required();
  solve->add_option("--grid", grid, "number of time points")->check(CLI::Range(2, 10000000));
  solve->add_option("--out", out, "output directory (default $OPDYN_OUT_DIR or ./out)");
  solve->add_option("--tol-critical", tol, "relative tolerance for critical horizons");

  ScenarioOptions so;
  std::string scenario_config, preset;
  std::uint64_t seed = 0;
  std::size_t scenario_grid = 0;
  auto* scenario = app.add_subcommand("scenario", "run a multi-stage scenario over one or more seeds");
  auto* sc_cfg = scenario->add_option("config", scenario_config, "scenario config (JSON)");
  auto* sc_preset = scenario->add_option("--preset", preset, "parties | heterogeneous-a | heterogeneous-b");
  scenario->add_option("--seeds", so.seeds, "number of consecutive seeds");
  auto* sc_seed = scenario->add_option("--seed", seed, "first seed");
  auto* sc_grid = scenario->add_option("--grid", scenario_grid, "time points per stage");
  scenario->add_option("--out", out, "output directory (default $OPDYN_OUT_DIR or ./out)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*check) return cmd_check(config, tol);
    if (*solve) return cmd_solve(config, grid, out, tol);
    if (*sc_cfg) so.config = scenario_config;
    if (*sc_preset) so.preset = preset;
    if (*sc_seed) so.seed = seed;
    if (*sc_grid) so.grid = scenario_grid;
    so.out = out;
    return cmd_scenario(so);
  } catch (const NoEquilibrium& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNoEquilibrium;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }
}
