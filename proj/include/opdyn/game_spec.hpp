#pragma once

#include <cstddef>
#include <map>
#include <sstream>
#include <utility>
#include <vector>

#include "opdyn/matfun.hpp"

namespace opdyn {

/// One-stage game: n agents, d issues, horizon T.
///
/// Agents are indexed from zero. `influence[{i, j}]` is W_ij, the weight agent
/// i puts on its divergence from agent j; a missing entry or an all-zero
/// matrix means j is not a neighbor of i.
struct GameSpec {
  std::size_t n = 0;
  std::size_t d = 0;
  double horizon = 1.0;
  std::vector<Matrix> stubbornness;
  std::map<std::pair<std::size_t, std::size_t>, Matrix> influence;
  std::vector<Vector> biases;

  void set_influence(std::size_t i, std::size_t j, Matrix w) { influence[{i, j}] = std::move(w); }

  /// W_ij if agent j is a neighbor of agent i, else nullptr.
  const Matrix* influence_of(std::size_t i, std::size_t j) const {
    auto it = influence.find({i, j});
    if (it == influence.end() || it->second.isZero(0.0)) return nullptr;
    return &it->second;
  }

  std::vector<std::size_t> neighbors(std::size_t i) const {
    std::vector<std::size_t> out;
    for (const auto& [key, w] : influence)
      if (key.first == i && key.second != i && !w.isZero(0.0)) out.push_back(key.second);
    return out;
  }

  Vector stacked_biases() const {
    Vector b(static_cast<Eigen::Index>(n * d));
    for (std::size_t i = 0; i < n; ++i)
      b.segment(static_cast<Eigen::Index>(i * d), static_cast<Eigen::Index>(d)) = biases[i];
    return b;
  }
};

/// Dimension and finiteness checks; Assumption 1 is checked separately.
inline void check_structure(const GameSpec& spec) {
  auto fail = [](const std::string& msg) { throw InvalidSpec("game spec: " + msg); };
  if (spec.n < 1) fail("agent count must be at least 1");
  if (spec.d < 1) fail("issue count must be at least 1");
  if (!std::isfinite(spec.horizon) || spec.horizon <= 0.0) fail("horizon must be positive");
  if (spec.stubbornness.size() != spec.n) fail("one stubbornness matrix per agent required");
  if (spec.biases.size() != spec.n) fail("biases must be present for every agent");
  const auto d = static_cast<Eigen::Index>(spec.d);
  for (std::size_t i = 0; i < spec.n; ++i) {
    std::ostringstream who;
    who << "agent " << i + 1;
    if (spec.stubbornness[i].rows() != d || spec.stubbornness[i].cols() != d)
      fail(who.str() + ": stubbornness must be d x d");
    if (!spec.stubbornness[i].allFinite()) fail(who.str() + ": non-finite stubbornness");
    if (spec.biases[i].size() != d) fail(who.str() + ": bias must have d entries");
    if (!spec.biases[i].allFinite()) fail(who.str() + ": non-finite bias");
  }
  for (const auto& [key, w] : spec.influence) {
    const auto [i, j] = key;
    std::ostringstream who;
    who << "influence (" << i + 1 << ", " << j + 1 << ")";
    if (i >= spec.n || j >= spec.n) fail(who.str() + ": agent index out of range");
    if (i == j) fail(who.str() + ": self-influence is the stubbornness matrix");
    if (w.rows() != d || w.cols() != d) fail(who.str() + ": must be d x d");
    if (!w.allFinite()) fail(who.str() + ": non-finite entries");
  }
}

}  // namespace opdyn
