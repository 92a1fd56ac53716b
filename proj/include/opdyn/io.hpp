#pragma once

// JSON configs, CSV output and run manifests for the command-line tool.
//
// Agent and issue indices are 1-based in every file format; they are
// 0-based in the C++ API.

#include <array>
#include <charconv>
#include <chrono>
#include <cstdint>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "json.hpp"
#include "opdyn/multistage.hpp"

namespace opdyn {

using Json = nlohmann::json;

/// Shortest decimal string that parses back to exactly `v`.
inline std::string format_number(double v) {
  if (!std::isfinite(v)) return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
  std::array<char, 32> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc()) throw Error("format_number: to_chars failed");
  return std::string(buf.data(), end);
}

inline double parse_number(std::string_view s) {
  double v = 0.0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size())
    throw ConfigError("not a number: '" + std::string(s) + "'");
  return v;
}

inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string digest_hex(std::string_view bytes) {
  std::ostringstream os;
  os << "fnv1a64:" << std::hex << std::setw(16) << std::setfill('0') << fnv1a64(bytes);
  return os.str();
}

// --- config reading ---------------------------------------------------------

namespace detail {

// Field access with a path in every diagnostic.
class Field {
 public:
  Field(const Json& j, std::string path) : j_(j), path_(std::move(path)) {}

  const Json& json() const { return j_; }
  const std::string& path() const { return path_; }

  [[noreturn]] void fail(const std::string& what) const { throw ConfigError(path_ + ": " + what); }

  bool has(const char* key) const { return j_.is_object() && j_.contains(key); }

  Field at(const char* key) const {
    if (!j_.is_object()) fail("expected an object");
    if (!j_.contains(key)) fail(std::string("missing field '") + key + "'");
    return Field(j_.at(key), path_ + "." + key);
  }

  Field at(std::size_t i) const { return Field(j_.at(i), path_ + "[" + std::to_string(i) + "]"); }

  std::size_t size() const {
    if (!j_.is_array()) fail("expected an array");
    return j_.size();
  }

  double number() const {
    if (!j_.is_number()) fail("expected a number");
    const double v = j_.get<double>();
    if (!std::isfinite(v)) fail("non-finite number");
    return v;
  }

  std::size_t count() const {
    if (!j_.is_number_integer() || j_.get<long long>() < 0) fail("expected a nonnegative integer");
    return j_.get<std::size_t>();
  }

  std::uint64_t u64() const {
    if (!j_.is_number_unsigned() && !(j_.is_number_integer() && j_.get<long long>() >= 0))
      fail("expected a nonnegative integer");
    return j_.get<std::uint64_t>();
  }

  bool boolean() const {
    if (!j_.is_boolean()) fail("expected true or false");
    return j_.get<bool>();
  }

  std::string string() const {
    if (!j_.is_string()) fail("expected a string");
    return j_.get<std::string>();
  }

  Vector vector(std::optional<std::size_t> expected = std::nullopt) const {
    const auto n = size();
    if (expected && n != *expected) fail("expected " + std::to_string(*expected) + " entries, got " + std::to_string(n));
    Vector v(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) v[static_cast<Eigen::Index>(i)] = at(i).number();
    return v;
  }

  Matrix matrix(std::size_t d) const {
    if (size() != d) fail("expected " + std::to_string(d) + " rows");
    Matrix m(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    for (std::size_t r = 0; r < d; ++r) m.row(static_cast<Eigen::Index>(r)) = at(r).vector(d).transpose();
    return m;
  }

  Interval interval() const {
    if (size() != 2) fail("expected [lo, hi]");
    Interval iv{at(std::size_t{0}).number(), at(std::size_t{1}).number()};
    if (iv.lo > iv.hi) fail("interval lower end exceeds upper end");
    return iv;
  }

 private:
  const Json& j_;
  std::string path_;
};

// Scenario groups may give epsilon as an interval; they read it themselves.
inline AgentProfile read_profile(const Field& f, std::size_t d, bool read_epsilon = true) {
  AgentProfile p;
  p.attributes = f.has("attributes") ? f.at("attributes").vector() : Vector::Zero(1);
  p.epsilon = read_epsilon ? f.at("epsilon").number() : 0.0;
  p.stubborn_diag = f.at("stubborn_diag").vector(d);
  p.correlations = f.has("correlations") ? f.at("correlations").matrix(d) : Matrix::Identity(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  p.c = f.has("c") ? f.at("c").number() : 1.0;
  try {
    validate_profile(p);
  } catch (const InvalidSpec& e) {
    f.fail(e.what());
  }
  return p;
}

inline std::size_t read_agent_index(const Field& f, std::size_t n);

inline GammaRule read_gamma(const Field& f, std::size_t n, std::size_t d) {
  if (f.has("constant")) return GammaRule::constant(f.at("constant").number());
  if (f.has("affine")) {
    const auto a = f.at("affine");
    const std::size_t attr = a.has("attribute") ? a.at("attribute").count() : 0;
    return GammaRule::affine_in_target_status(a.at("alpha").number(), a.at("beta").number(), attr);
  }
  if (f.has("table")) {
    const auto t = f.at("table");
    std::map<std::pair<std::size_t, std::size_t>, Vector> gains;
    for (std::size_t k = 0; k < t.size(); ++k) {
      const auto e = t.at(k);
      const auto i = read_agent_index(e.at("agent"), n);
      const auto j = read_agent_index(e.at("neighbor"), n);
      const Vector g = e.at("gains").vector(d);
      if ((g.array() < 0.0).any()) e.at("gains").fail("gains must be nonnegative");
      gains[{i, j}] = g;
    }
    return GammaRule::table(std::move(gains));
  }
  f.fail("expected {\"constant\": g}, {\"affine\": {\"alpha\", \"beta\", \"attribute\"}} or {\"table\": [...]}");
}

inline std::size_t read_agent_index(const Field& f, std::size_t n) {
  const auto k = f.count();
  if (k < 1 || k > n) f.fail("agent index must lie in 1.." + std::to_string(n));
  return k - 1;
}

}  // namespace detail

/// Parses JSON text; syntax errors report line and column.
inline Json parse_json_text(const std::string& text, const std::string& origin = "config") {
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) throw ConfigError(origin + ": empty document");
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    std::ostringstream os;
    os << origin << ":" << line << ":" << col << ": syntax error";
    throw ConfigError(os.str());
  }
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path + ": cannot open");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

/// Single game. Weights come either from explicit matrices ("raw") or from
/// agent profiles and an edge list ("profile").
inline GameSpec game_from_json(const Json& j) {
  const detail::Field root(j, "config");
  if (root.has("kind") && root.at("kind").string() != "game") root.fail("kind must be \"game\" here");
  GameSpec g;
  g.horizon = root.at("horizon").number();
  if (!(g.horizon > 0.0)) root.at("horizon").fail("must be positive");
  g.d = root.at("issues").count();
  if (g.d < 1) root.at("issues").fail("must be at least 1");
  const auto agents = root.at("agents");
  g.n = agents.size();
  if (g.n < 1) agents.fail("at least one agent required");
  const std::string source = root.has("weights") ? root.at("weights").string() : "raw";

  if (source == "raw") {
    for (std::size_t i = 0; i < g.n; ++i) {
      const auto a = agents.at(i);
      g.biases.push_back(a.at("bias").vector(g.d));
      g.stubbornness.push_back(a.at("stubbornness").matrix(g.d));
    }
    if (root.has("influence")) {
      const auto inf = root.at("influence");
      for (std::size_t k = 0; k < inf.size(); ++k) {
        const auto e = inf.at(k);
        const auto i = detail::read_agent_index(e.at("agent"), g.n);
        const auto j2 = detail::read_agent_index(e.at("neighbor"), g.n);
        if (i == j2) e.fail("an agent cannot be its own neighbor");
        g.set_influence(i, j2, e.at("weight").matrix(g.d));
      }
    }
  } else if (source == "profile") {
    std::vector<AgentProfile> profiles;
    for (std::size_t i = 0; i < g.n; ++i) {
      const auto a = agents.at(i);
      g.biases.push_back(a.at("bias").vector(g.d));
      profiles.push_back(detail::read_profile(a, g.d));
      try {
        g.stubbornness.push_back(build_stubbornness(profiles.back(), i));
      } catch (const Assumption1Violation& e) {
        a.fail(e.what());
      }
    }
    const GammaRule gamma = root.has("gamma") ? detail::read_gamma(root.at("gamma"), g.n, g.d) : GammaRule::constant(1.0);
    if (root.has("edges")) {
      const auto edges = root.at("edges");
      for (std::size_t k = 0; k < edges.size(); ++k) {
        const auto e = edges.at(k);
        if (e.size() != 2) e.fail("expected [agent, neighbor]");
        const auto i = detail::read_agent_index(e.at(std::size_t{0}), g.n);
        const auto j2 = detail::read_agent_index(e.at(std::size_t{1}), g.n);
        if (i == j2) e.fail("an agent cannot be its own neighbor");
        const Matrix v = build_influence_root(profiles[i], profiles[j2], g.biases[i], g.biases[j2], gamma, {i, j2});
        if (!v.isZero(0.0)) g.set_influence(i, j2, square_to_weight(v));
      }
    }
  } else {
    root.at("weights").fail("expected \"raw\" or \"profile\"");
  }
  try {
    check_structure(g);
  } catch (const InvalidSpec& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return g;
}

inline const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{"parties", "heterogeneous-a", "heterogeneous-b"};
  return names;
}

inline ScenarioSpec preset_by_name(const std::string& name, std::uint64_t seed = 1) {
  if (name == "parties") return preset_parties(seed);
  if (name == "heterogeneous-a") return preset_heterogeneous(CorrelationVariant::uniform_positive, seed);
  if (name == "heterogeneous-b") return preset_heterogeneous(CorrelationVariant::split, seed);
  std::string list;
  for (const auto& n : preset_names()) list += (list.empty() ? "" : ", ") + n;
  throw ConfigError("unknown preset '" + name + "'; valid presets: " + list);
}

/// Scenario: either {"preset": name} with optional "seed"/"stages"/"grid"
/// overrides, or a complete group-based description.
inline ScenarioSpec scenario_from_json(const Json& j) {
  const detail::Field root(j, "config");
  if (root.has("kind") && root.at("kind").string() != "scenario") root.fail("kind must be \"scenario\" here");
  ScenarioSpec s;
  if (root.has("preset")) {
    s = preset_by_name(root.at("preset").string());
  } else {
    s.issues = root.at("issues").count();
    const auto groups = root.at("groups");
    for (std::size_t k = 0; k < groups.size(); ++k) {
      const auto gf = groups.at(k);
      GroupSpec g;
      g.name = gf.at("name").string();
      g.count = gf.at("count").count();
      if (gf.has("bias")) {
        g.fixed_bias = gf.at("bias").vector(s.issues);
      } else {
        const auto bi = gf.at("bias_interval");
        if (bi.size() != s.issues) bi.fail("expected one interval per issue");
        for (std::size_t i = 0; i < s.issues; ++i) g.bias_interval.push_back(bi.at(i).interval());
      }
      const auto eps = gf.at("epsilon");
      if (eps.json().is_array()) {
        g.epsilon = eps.interval();
      } else {
        const double e = eps.number();
        g.epsilon = {e, e};
      }
      const AgentProfile p = detail::read_profile(gf, s.issues, false);
      g.attributes = p.attributes;
      g.stubborn_diag = p.stubborn_diag;
      g.correlations = p.correlations;
      g.c = p.c;
      s.groups.push_back(std::move(g));
    }
    s.stage_count = root.at("stages").count();
    s.stage_horizon = root.at("stage_horizon").number();
    const auto rho = root.at("rho");
    if (rho.json().is_number()) {
      s.rho = RhoRule::constant(rho.number());
    } else if (rho.has("interval")) {
      const auto iv = rho.at("interval").interval();
      s.rho = RhoRule::interval(iv.lo, iv.hi, rho.has("symmetric") && rho.at("symmetric").boolean(),
                                !rho.has("redraw") || rho.at("redraw").boolean());
    } else if (rho.has("matrix")) {
      std::size_t n = 0;
      for (const auto& g : s.groups) n += g.count;
      s.rho = RhoRule::matrix(rho.at("matrix").matrix(n));
    } else {
      rho.fail("expected a probability, {\"interval\": [lo, hi]} or {\"matrix\": [[...]]}");
    }
    if (root.has("overrides")) {
      const auto ov = root.at("overrides");
      for (std::size_t k = 0; k < ov.size(); ++k) {
        const auto o = ov.at(k);
        s.overrides.push_back({o.at("from").string(), o.at("to").string(), o.at("value").number(),
                               o.has("reciprocal") && o.at("reciprocal").boolean()});
      }
    }
    if (root.has("gamma")) s.gamma = detail::read_gamma(root.at("gamma"), s.agents(), s.issues);
  }
  if (root.has("name")) s.name = root.at("name").string();
  if (root.has("seed")) s.seed = root.at("seed").u64();
  if (root.has("stages")) s.stage_count = root.at("stages").count();
  if (root.has("grid")) s.grid_points = root.at("grid").count();
  try {
    validate(s);
  } catch (const InvalidSpec& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return s;
}

inline Json to_json(const Vector& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline Json to_json(const Matrix& m) {
  Json a = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) a.push_back(to_json(Vector(m.row(r).transpose())));
  return a;
}

/// Resolved scenario in the config schema; scenario_from_json reads it back.
inline Json scenario_to_json(const ScenarioSpec& s) {
  Json j;
  j["kind"] = "scenario";
  j["name"] = s.name;
  j["issues"] = s.issues;
  j["stages"] = s.stage_count;
  j["stage_horizon"] = s.stage_horizon;
  j["seed"] = s.seed;
  j["grid"] = s.grid_points;
  Json groups = Json::array();
  for (const auto& g : s.groups) {
    Json o;
    o["name"] = g.name;
    o["count"] = g.count;
    if (g.fixed_bias) {
      o["bias"] = to_json(*g.fixed_bias);
    } else {
      Json iv = Json::array();
      for (const auto& b : g.bias_interval) iv.push_back({b.lo, b.hi});
      o["bias_interval"] = iv;
    }
    if (g.epsilon.lo == g.epsilon.hi)
      o["epsilon"] = g.epsilon.lo;
    else
      o["epsilon"] = {g.epsilon.lo, g.epsilon.hi};
    o["attributes"] = to_json(g.attributes);
    o["stubborn_diag"] = to_json(g.stubborn_diag);
    o["correlations"] = to_json(g.correlations);
    o["c"] = g.c;
    groups.push_back(o);
  }
  j["groups"] = groups;
  switch (s.rho.kind) {
    case RhoRule::Kind::constant:
      j["rho"] = s.rho.value;
      break;
    case RhoRule::Kind::interval:
      j["rho"] = {{"interval", {s.rho.range.lo, s.rho.range.hi}},
                  {"symmetric", s.rho.symmetric},
                  {"redraw", s.rho.redraw}};
      break;
    case RhoRule::Kind::matrix:
      j["rho"] = {{"matrix", to_json(s.rho.values)}};
      break;
  }
  Json ov = Json::array();
  for (const auto& o : s.overrides)
    ov.push_back({{"from", o.from}, {"to", o.to}, {"value", o.value}, {"reciprocal", o.reciprocal}});
  j["overrides"] = ov;
  std::visit(
      [&](const auto& r) {
        using R = std::decay_t<decltype(r)>;
        if constexpr (std::is_same_v<R, GammaRule::Constant>) {
          j["gamma"] = {{"constant", r.value}};
        } else if constexpr (std::is_same_v<R, GammaRule::AffineInTargetStatus>) {
          j["gamma"] = {{"affine", {{"alpha", r.alpha}, {"beta", r.beta}, {"attribute", r.attribute}}}};
        } else {
          Json table = Json::array();
          for (const auto& [key, g] : r.gains)
            table.push_back({{"agent", key.first + 1}, {"neighbor", key.second + 1}, {"gains", to_json(g)}});
          j["gamma"] = {{"table", table}};
        }
      },
      s.gamma.rule());
  return j;
}

// --- CSV --------------------------------------------------------------------

inline constexpr const char* kTrajectoryHeader = "stage,t,agent,issue,kind,value";
inline constexpr const char* kSummaryHeader = "seed,stage,group,issue,mean,spread";

/// Rows in time, agent, issue, kind order; x before u. Returns data rows written.
inline std::size_t write_trajectory_rows(std::ostream& out, const TrajectorySample& tr, std::size_t n,
                                         std::size_t d, std::size_t stage) {
  std::size_t rows = 0;
  const std::string st = std::to_string(stage);
  for (std::size_t k = 0; k < tr.grid.size(); ++k) {
    const std::string t = format_number(tr.grid[k]);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        const auto idx = static_cast<Eigen::Index>(i * d + j);
        const std::string prefix = st + "," + t + "," + std::to_string(i + 1) + "," + std::to_string(j + 1);
        out << prefix << ",x," << format_number(tr.states[k][idx]) << '\n';
        out << prefix << ",u," << format_number(tr.controls[k][idx]) << '\n';
        rows += 2;
      }
  }
  return rows;
}

inline std::size_t write_summary_rows(std::ostream& out, std::uint64_t seed,
                                      const std::vector<GroupStatistic>& stats) {
  for (const auto& s : stats)
    out << seed << ',' << s.stage << ',' << s.group << ',' << s.issue + 1 << ',' << format_number(s.mean) << ','
        << format_number(s.spread) << '\n';
  return stats.size();
}

/// Group statistics of the stage-initial opinions, reported as stage 0.
inline std::vector<GroupStatistic> initial_statistics(const ScenarioSpec& s, const Population& pop) {
  StageRecord r;
  r.stage = 0;
  r.final_opinions.resize(static_cast<Eigen::Index>(pop.size() * s.issues));
  for (std::size_t a = 0; a < pop.size(); ++a)
    r.final_opinions.segment(static_cast<Eigen::Index>(a * s.issues), static_cast<Eigen::Index>(s.issues)) =
        pop.initial_biases[a];
  return group_statistics(s, pop, {r});
}

struct CsvRow {
  std::vector<std::string> cells;
};

/// Minimal reader for the CSVs written here (no quoting is ever produced).
inline std::vector<CsvRow> read_csv(std::istream& in, std::string* header = nullptr) {
  std::vector<CsvRow> rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (first) {
      if (header) *header = line;
      first = false;
      continue;
    }
    CsvRow r;
    std::size_t start = 0;
    for (;;) {
      const auto comma = line.find(',', start);
      r.cells.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

// --- manifest ---------------------------------------------------------------

inline std::string utc_timestamp(std::chrono::system_clock::time_point tp = std::chrono::system_clock::now()) {
  const std::time_t t = std::chrono::system_clock::to_time_t(tp);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

struct ManifestEntry {
  std::string path;
  std::size_t rows = 0;
};

struct RunManifest {
  std::string command;
  std::string config_digest;
  std::string version;
  std::vector<std::uint64_t> seeds;
  std::string started;
  std::string finished;
  std::vector<ManifestEntry> files;
  Json extra = Json::object();

  Json to_json() const {
    Json j;
    j["tool"] = "opdyn";
    j["version"] = version;
    j["command"] = command;
    j["config_digest"] = config_digest;
    j["seeds"] = seeds;
    j["started"] = started;
    j["finished"] = finished;
    Json f = Json::array();
    for (const auto& e : files) f.push_back({{"path", e.path}, {"rows", e.rows}});
    j["files"] = f;
    for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
    return j;
  }
};

}  // namespace opdyn
