#pragma once

// Multi-stage (hybrid) games: each stage samples a directed interaction
// network, builds weights from agent profiles gated on the stage-initial
// biases, solves the one-stage game, and hands the final opinions on as the
// next stage's biases.
//
// Randomness is counter based. Every draw is a pure function of
// (seed, stage, purpose, i, j) hashed with SplitMix64, so each stage and each
// ordered pair owns an independent substream and runs are bit-reproducible
// on any platform.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "opdyn/game.hpp"
#include "opdyn/weights.hpp"

namespace opdyn {

namespace rng {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

enum class Purpose : std::uint64_t { bias = 1, epsilon = 2, rho = 3, edge = 4 };

class Stream {
 public:
  Stream(std::uint64_t seed, std::uint64_t stage, Purpose purpose)
      : key_(splitmix64(splitmix64(splitmix64(seed) ^ (stage * 0xD1B54A32D192ED03ULL)) ^
                        static_cast<std::uint64_t>(purpose))) {}

  std::uint64_t bits(std::uint64_t i, std::uint64_t j) const {
    return splitmix64(key_ ^ splitmix64(i * 0x9E3779B97F4A7C15ULL + j + 1));
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform(std::uint64_t i, std::uint64_t j) const {
    return static_cast<double>(bits(i, j) >> 11) * 0x1.0p-53;
  }

 private:
  std::uint64_t key_;
};

}  // namespace rng

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  double at(double u) const { return lo + u * (hi - lo); }
};

struct GroupSpec {
  std::string name;
  std::size_t count = 1;
  std::optional<Vector> fixed_bias;
  std::vector<Interval> bias_interval;  ///< one per issue, used without fixed_bias
  Interval epsilon;                     ///< sampled per agent; lo == hi for a constant
  Vector attributes;
  Vector stubborn_diag;
  Matrix correlations;
  double c = 1.0;
};

struct RhoRule {
  enum class Kind { constant, matrix, interval };
  Kind kind = Kind::constant;
  double value = 0.0;
  Matrix values;
  Interval range;
  bool symmetric = false;  ///< interval draws shared by (i, j) and (j, i)
  bool redraw = true;      ///< interval draws renewed every stage

  static RhoRule constant(double p) {
    RhoRule r;
    r.value = p;
    return r;
  }
  static RhoRule interval(double lo, double hi, bool symmetric = false, bool redraw = true) {
    RhoRule r;
    r.kind = Kind::interval;
    r.range = {lo, hi};
    r.symmetric = symmetric;
    r.redraw = redraw;
    return r;
  }
  static RhoRule matrix(Matrix m) {
    RhoRule r;
    r.kind = Kind::matrix;
    r.values = std::move(m);
    return r;
  }
};

/// rho_ij = value for i in `from`, j in `to` (agent i listens to agent j).
struct RhoOverride {
  std::string from;
  std::string to;
  double value = 1.0;
  bool reciprocal = false;
};

struct ScenarioSpec {
  std::string name;
  std::size_t issues = 1;
  std::vector<GroupSpec> groups;
  std::size_t stage_count = 1;
  double stage_horizon = 1.0;
  RhoRule rho;
  std::vector<RhoOverride> overrides;
  GammaRule gamma = GammaRule::constant(1.0);
  std::uint64_t seed = 1;
  std::size_t grid_points = 51;

  std::size_t agents() const {
    std::size_t n = 0;
    for (const auto& g : groups) n += g.count;
    return n;
  }
};

inline void validate(const ScenarioSpec& s) {
  auto fail = [](const std::string& m) { throw InvalidSpec("scenario: " + m); };
  auto unit = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (s.stage_count < 1) fail("stage_count must be at least 1");
  if (!(s.stage_horizon > 0.0)) fail("stage horizon must be positive");
  if (s.issues < 1) fail("issue count must be at least 1");
  if (s.agents() < 1) fail("population is empty");
  if (s.grid_points < 2) fail("grid_points must be at least 2");
  const auto d = static_cast<Eigen::Index>(s.issues);
  for (const auto& g : s.groups) {
    if (g.fixed_bias && g.fixed_bias->size() != d) fail("group " + g.name + ": fixed bias needs d entries");
    if (!g.fixed_bias && g.bias_interval.size() != s.issues)
      fail("group " + g.name + ": bias interval needs d entries");
    for (const auto& iv : g.bias_interval)
      if (!(iv.lo <= iv.hi)) fail("group " + g.name + ": empty bias interval");
    if (!(g.epsilon.lo >= 0.0 && g.epsilon.lo <= g.epsilon.hi)) fail("group " + g.name + ": bad epsilon");
    if (g.stubborn_diag.size() != d) fail("group " + g.name + ": stubborn_diag needs d entries");
  }
  switch (s.rho.kind) {
    case RhoRule::Kind::constant:
      if (!unit(s.rho.value)) fail("probability outside [0, 1]");
      break;
    case RhoRule::Kind::interval:
      if (!unit(s.rho.range.lo) || !unit(s.rho.range.hi) || s.rho.range.lo > s.rho.range.hi)
        fail("probability interval must lie within [0, 1]");
      break;
    case RhoRule::Kind::matrix: {
      const auto n = static_cast<Eigen::Index>(s.agents());
      if (s.rho.values.rows() != n || s.rho.values.cols() != n) fail("probability matrix must be n x n");
      if ((s.rho.values.array() < 0.0).any() || (s.rho.values.array() > 1.0).any())
        fail("probability outside [0, 1]");
      break;
    }
  }
  for (const auto& o : s.overrides) {
    if (!unit(o.value)) fail("override probability outside [0, 1]");
    bool from = false, to = false;
    for (const auto& g : s.groups) {
      from = from || g.name == o.from;
      to = to || g.name == o.to;
    }
    if (!from || !to) fail("override names an unknown group");
  }
}

/// Agents instantiated from the groups, in group order.
struct Population {
  std::vector<AgentProfile> profiles;
  std::vector<std::size_t> group_of;
  std::vector<Vector> initial_biases;

  std::size_t size() const { return profiles.size(); }
};

inline Population instantiate(const ScenarioSpec& s) {
  validate(s);
  const rng::Stream bias_stream(s.seed, 0, rng::Purpose::bias);
  const rng::Stream eps_stream(s.seed, 0, rng::Purpose::epsilon);
  Population pop;
  std::size_t agent = 0;
  for (std::size_t gi = 0; gi < s.groups.size(); ++gi) {
    const auto& g = s.groups[gi];
    for (std::size_t k = 0; k < g.count; ++k, ++agent) {
      AgentProfile p;
      p.attributes = g.attributes;
      p.epsilon = g.epsilon.lo == g.epsilon.hi ? g.epsilon.lo : g.epsilon.at(eps_stream.uniform(agent, 0));
      p.correlations = g.correlations;
      p.c = g.c;
      p.stubborn_diag = g.stubborn_diag;
      validate_profile(p);
      Vector b(static_cast<Eigen::Index>(s.issues));
      if (g.fixed_bias) {
        b = *g.fixed_bias;
      } else {
        for (std::size_t issue = 0; issue < s.issues; ++issue)
          b[static_cast<Eigen::Index>(issue)] = g.bias_interval[issue].at(bias_stream.uniform(agent, issue));
      }
      pop.profiles.push_back(std::move(p));
      pop.group_of.push_back(gi);
      pop.initial_biases.push_back(std::move(b));
    }
  }
  return pop;
}

/// Interaction probabilities for one stage; zero diagonal.
inline Matrix resolve_rho(const ScenarioSpec& s, const Population& pop, std::size_t stage) {
  const auto n = static_cast<Eigen::Index>(pop.size());
  Matrix rho(n, n);
  switch (s.rho.kind) {
    case RhoRule::Kind::constant:
      rho.setConstant(s.rho.value);
      break;
    case RhoRule::Kind::matrix:
      rho = s.rho.values;
      break;
    case RhoRule::Kind::interval: {
      const rng::Stream stream(s.seed, s.rho.redraw ? stage : 0, rng::Purpose::rho);
      for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) {
          const auto a = static_cast<std::uint64_t>(s.rho.symmetric ? std::min(i, j) : i);
          const auto b = static_cast<std::uint64_t>(s.rho.symmetric ? std::max(i, j) : j);
          rho(i, j) = s.rho.range.at(stream.uniform(a, b));
        }
      break;
    }
  }
  for (const auto& o : s.overrides)
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) {
        const auto& gi = s.groups[pop.group_of[static_cast<std::size_t>(i)]].name;
        const auto& gj = s.groups[pop.group_of[static_cast<std::size_t>(j)]].name;
        if (gi == o.from && gj == o.to) {
          rho(i, j) = o.value;
          if (o.reciprocal) rho(j, i) = o.value;
        }
      }
  rho.diagonal().setZero();
  return rho;
}

/// Directed interaction network; edge (i, j) means agent i is influenced by j.
struct Network {
  std::size_t n = 0;
  std::vector<std::pair<std::size_t, std::size_t>> edges;
};

/// Include each ordered pair (i, j), i != j, independently with probability rho_ij.
inline Network sample_network(const Matrix& rho, const rng::Stream& stream) {
  if (rho.rows() != rho.cols()) throw InvalidSpec("sample_network: rho must be square");
  Network net;
  net.n = static_cast<std::size_t>(rho.rows());
  for (std::size_t i = 0; i < net.n; ++i)
    for (std::size_t j = 0; j < net.n; ++j) {
      if (i == j) continue;
      const double p = rho(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      if (!(p >= 0.0 && p <= 1.0)) throw InvalidSpec("sample_network: probability outside [0, 1]");
      if (stream.uniform(i, j) < p) net.edges.emplace_back(i, j);
    }
  return net;
}

inline Network sample_network(const Matrix& rho, std::uint64_t seed, std::uint64_t stage) {
  return sample_network(rho, rng::Stream(seed, stage, rng::Purpose::edge));
}

/// One-stage game on `network` with weights fixed by the stage-initial biases.
inline GameSpec build_stage(const ScenarioSpec& s, const Population& pop, const Network& network,
                            const std::vector<Vector>& biases) {
  if (biases.size() != pop.size() || network.n != pop.size())
    throw InvalidSpec("build_stage: network and biases must cover the population");
  GameSpec g;
  g.n = pop.size();
  g.d = s.issues;
  g.horizon = s.stage_horizon;
  g.biases = biases;
  g.stubbornness.reserve(g.n);
  for (std::size_t i = 0; i < g.n; ++i) g.stubbornness.push_back(build_stubbornness(pop.profiles[i], i));
  for (const auto& [i, j] : network.edges) {
    const Matrix v = build_influence_root(pop.profiles[i], pop.profiles[j], biases[i], biases[j], s.gamma, {i, j});
    if (!v.isZero(0.0)) g.set_influence(i, j, square_to_weight(v));
  }
  return g;
}

struct StageRecord {
  std::size_t stage = 0;  ///< one-based
  Network network;
  Vector initial_biases;
  Vector final_opinions;
  ExistenceVerdict existence;
  TrajectorySample trajectory;
};

class StageNonExistence : public Error {
 public:
  StageNonExistence(const std::string& what, std::size_t stage, std::vector<StageRecord> completed)
      : Error(what), stage_(stage), completed_(std::move(completed)) {}
  std::size_t stage() const noexcept { return stage_; }
  const std::vector<StageRecord>& completed() const noexcept { return completed_; }

 private:
  std::size_t stage_;
  std::vector<StageRecord> completed_;
};

inline std::vector<Vector> split_agents(const Vector& stacked, std::size_t n, std::size_t d) {
  std::vector<Vector> out(n);
  for (std::size_t i = 0; i < n; ++i)
    out[i] = stacked.segment(static_cast<Eigen::Index>(i * d), static_cast<Eigen::Index>(d));
  return out;
}

inline std::vector<StageRecord> run_scenario(const ScenarioSpec& s, const Population& pop) {
  std::vector<StageRecord> records;
  std::vector<Vector> biases = pop.initial_biases;
  for (std::size_t stage = 1; stage <= s.stage_count; ++stage) {
    const Matrix rho = resolve_rho(s, pop, stage);
    Network net = sample_network(rho, s.seed, stage);
    const GameSpec game = build_stage(s, pop, net, biases);
    QAssembly a = assemble(game);
    ExistenceVerdict verdict = check_existence(a, s.stage_horizon);
    if (!verdict.unique_equilibrium)
      throw StageNonExistence("stage " + std::to_string(stage) + ": " + describe_critical(verdict), stage,
                              std::move(records));
    const auto sol = NashSolution::solve(std::move(a), s.stage_horizon);
    StageRecord rec;
    rec.stage = stage;
    rec.network = std::move(net);
    rec.initial_biases = game.stacked_biases();
    rec.existence = std::move(verdict);
    rec.trajectory = sol.sample(s.grid_points);
    rec.final_opinions = rec.trajectory.states.back();
    biases = split_agents(rec.final_opinions, pop.size(), s.issues);
    records.push_back(std::move(rec));
  }
  return records;
}

inline std::vector<StageRecord> run_scenario(const ScenarioSpec& s) { return run_scenario(s, instantiate(s)); }

/// max_{i,j} ||x_i - x_j|| over the agents of a stacked opinion vector.
inline double opinion_spread(const Vector& stacked, std::size_t n, std::size_t d) {
  const auto agents = split_agents(stacked, n, d);
  double best = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) best = std::max(best, (agents[i] - agents[j]).norm());
  return best;
}

struct GroupStatistic {
  std::size_t stage = 0;
  std::string group;
  std::size_t issue = 0;  ///< zero-based
  double mean = 0.0;
  double spread = 0.0;    ///< max - min over the group's members
};

/// Per stage, group and issue: mean and range of the stage-final opinions.
/// A trailing pseudo-group "all" covers the whole population.
inline std::vector<GroupStatistic> group_statistics(const ScenarioSpec& s, const Population& pop,
                                                    const std::vector<StageRecord>& records) {
  std::vector<GroupStatistic> out;
  const std::size_t groups = s.groups.size();
  for (const auto& rec : records) {
    for (std::size_t gi = 0; gi <= groups; ++gi) {
      for (std::size_t issue = 0; issue < s.issues; ++issue) {
        double sum = 0.0, lo = 0.0, hi = 0.0;
        std::size_t count = 0;
        for (std::size_t a = 0; a < pop.size(); ++a) {
          if (gi < groups && pop.group_of[a] != gi) continue;
          const double x = rec.final_opinions[static_cast<Eigen::Index>(a * s.issues + issue)];
          lo = count ? std::min(lo, x) : x;
          hi = count ? std::max(hi, x) : x;
          sum += x;
          ++count;
        }
        if (count == 0) continue;
        out.push_back({rec.stage, gi < groups ? s.groups[gi].name : "all", issue,
                       sum / static_cast<double>(count), hi - lo});
      }
    }
  }
  return out;
}

/// Two parties with leaders, their supporters, and a neutral group exposed to
/// party-A propaganda.
inline ScenarioSpec preset_parties(std::uint64_t seed = 1) {
  ScenarioSpec s;
  s.name = "parties";
  s.issues = 2;
  s.stage_count = 5;
  s.stage_horizon = 5.0;
  s.seed = seed;
  s.rho = RhoRule::constant(0.2);
  s.gamma = GammaRule::affine_in_target_status(2.0, 0.5, 0);
  Matrix corr(2, 2);
  corr << 1.0, 0.5, 0.5, 1.0;
  auto group = [&](std::string name, std::size_t count, double status, double eps) {
    GroupSpec g;
    g.name = std::move(name);
    g.count = count;
    g.epsilon = {eps, eps};
    g.attributes = Vector::Constant(1, status);
    g.stubborn_diag = Vector::Constant(2, status + 0.1);
    g.correlations = corr;
    g.c = 1.0;
    return g;
  };
  auto leader_a = group("leader_A", 1, 1.0, 0.1);
  leader_a.fixed_bias = Vector::Constant(2, -1.0);
  auto leader_b = group("leader_B", 1, 1.0, 0.1);
  leader_b.fixed_bias = Vector::Constant(2, 1.0);
  auto pa = group("P_A", 25, 0.0, 0.5);
  pa.bias_interval = {{-1.5, -0.5}, {-1.5, -0.5}};
  auto pb = group("P_B", 25, 0.0, 0.5);
  pb.bias_interval = {{0.5, 1.5}, {0.5, 1.5}};
  auto pn = group("P_N", 50, 0.0, 0.5);
  // Open interval (-0.5, 0.5) realized as a closed one shrunk by 1e-9.
  pn.bias_interval = {{-0.5 + 1e-9, 0.5 - 1e-9}, {-0.5 + 1e-9, 0.5 - 1e-9}};
  s.groups = {leader_a, leader_b, pa, pb, pn};
  s.overrides = {{"P_N", "P_A", 1.0, false}};
  return s;
}

enum class CorrelationVariant { uniform_positive, split };

/// Heterogeneous bounded confidences with per-pair random interaction
/// probabilities. Variant `split` gives agents 26..50 negative correlation.
inline ScenarioSpec preset_heterogeneous(CorrelationVariant variant, std::uint64_t seed = 1) {
  ScenarioSpec s;
  s.name = variant == CorrelationVariant::uniform_positive ? "heterogeneous-a" : "heterogeneous-b";
  s.issues = 2;
  s.stage_count = 10;
  s.stage_horizon = 5.0;
  s.seed = seed;
  s.rho = RhoRule::interval(0.3, 0.7, false, true);
  s.gamma = GammaRule::constant(0.8);
  auto group = [](std::string name, std::size_t count, double r) {
    GroupSpec g;
    g.name = std::move(name);
    g.count = count;
    g.bias_interval = {{-1.0, 1.0}, {-1.0, 1.0}};
    g.epsilon = {0.0, 1.0};
    g.attributes = Vector::Zero(1);
    g.stubborn_diag = Vector::Constant(2, 0.1);
    g.correlations.resize(2, 2);
    g.correlations << 1.0, r, r, 1.0;
    g.c = 1.0;
    return g;
  };
  if (variant == CorrelationVariant::uniform_positive) {
    s.groups = {group("all_positive", 50, 1.0)};
  } else {
    s.groups = {group("positive", 25, 1.0), group("negative", 25, -1.0)};
  }
  return s;
}

}  // namespace opdyn
