#pragma once

// Random instance generators shared by the property tests and the
// acceptance binary. Everything is driven by an explicit mt19937_64 seed.

#include <initializer_list>
#include <random>

#include "opdyn/closedform.hpp"
#include "opdyn/game.hpp"
#include "opdyn/multistage.hpp"

namespace opdyn::testing {

struct Rng {
  explicit Rng(std::uint64_t seed) : eng(seed) {}
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(eng); }
  std::size_t index(std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(eng);
  }
  bool coin(double p) { return uniform(0.0, 1.0) < p; }
  Matrix matrix(Eigen::Index r, Eigen::Index c, double scale = 1.0) {
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
      for (Eigen::Index j = 0; j < c; ++j) m(i, j) = uniform(-scale, scale);
    return m;
  }
  Vector vector(Eigen::Index n, double scale = 1.0) { return matrix(n, 1, scale); }
  std::mt19937_64 eng;
};

/// Symmetric positive definite with eigenvalues in [floor, floor + scale].
inline Matrix random_spd(Rng& rng, Eigen::Index d, double floor, double scale) {
  const Matrix a = rng.matrix(d, d);
  Matrix s = a * a.transpose();
  s *= scale / std::max(1e-12, Eigen::SelfAdjointEigenSolver<Matrix>(s).eigenvalues().maxCoeff());
  return s + floor * Matrix::Identity(d, d);
}

/// Symmetric nonnegative definite, possibly rank deficient.
inline Matrix random_psd(Rng& rng, Eigen::Index d, double scale) {
  const Matrix a = rng.matrix(d, rng.index(1, static_cast<std::size_t>(d)));
  Matrix s = a * a.transpose();
  return s * (scale / std::max(1e-12, s.trace()));
}

struct RandomGameOptions {
  std::size_t max_order = 12;  ///< n * d bound
  double horizon_lo = 0.5;
  double horizon_hi = 2.0;
  double edge_probability = 0.7;
  bool symmetric_pairs = false;  ///< W_ij = W_ji
};

/// Random game with Assumption 1 weights; (n, d) drawn with n, d >= 1 and
/// n d <= max_order.
inline GameSpec random_game(Rng& rng, const RandomGameOptions& o = {}) {
  GameSpec g;
  do {
    g.n = rng.index(1, 4);
    g.d = rng.index(1, 3);
  } while (g.n * g.d > o.max_order);
  const auto d = static_cast<Eigen::Index>(g.d);
  g.horizon = rng.uniform(o.horizon_lo, o.horizon_hi);
  for (std::size_t i = 0; i < g.n; ++i) {
    g.stubbornness.push_back(random_spd(rng, d, 0.1, 1.0));
    g.biases.push_back(rng.vector(d));
  }
  const double share = 1.0 / static_cast<double>(std::max<std::size_t>(1, g.n - 1));
  for (std::size_t i = 0; i < g.n; ++i)
    for (std::size_t j = 0; j < g.n; ++j) {
      if (i == j) continue;
      if (o.symmetric_pairs && j < i) continue;
      if (!rng.coin(o.edge_probability)) continue;
      const Matrix w = random_psd(rng, d, rng.uniform(0.2, 2.0) * share);
      g.set_influence(i, j, w);
      if (o.symmetric_pairs) g.set_influence(j, i, w);
    }
  return g;
}

/// Random game with a unique equilibrium at its horizon.
inline GameSpec random_solvable_game(Rng& rng, const RandomGameOptions& o = {}) {
  for (;;) {
    GameSpec g = random_game(rng, o);
    if (check_existence(assemble(g), g.horizon).unique_equilibrium) return g;
  }
}

inline UniformSpec random_uniform(Rng& rng) {
  UniformSpec s;
  s.n = rng.index(2, 4);
  const auto d = static_cast<Eigen::Index>(rng.index(1, 3));
  s.f = random_spd(rng, d, 0.1, 1.0);
  s.g = random_psd(rng, d, rng.uniform(0.2, 1.5));
  s.horizon = rng.uniform(0.5, 3.0);
  for (std::size_t i = 0; i < s.n; ++i) s.biases.push_back(rng.vector(d));
  return s;
}

inline LeaderSpec random_leader(Rng& rng) {
  LeaderSpec s;
  s.n = rng.index(2, 4);
  const auto d = static_cast<Eigen::Index>(rng.index(1, 3));
  s.horizon = rng.uniform(0.5, 3.0);
  s.leader_stubbornness = random_spd(rng, d, 0.1, 1.0);
  s.leader_bias = rng.vector(d);
  for (std::size_t i = 1; i < s.n; ++i) {
    s.follower_stubbornness.push_back(random_spd(rng, d, 0.1, 1.0));
    s.follower_influence.push_back(random_psd(rng, d, rng.uniform(0.2, 1.5)));
    s.follower_biases.push_back(rng.vector(d));
  }
  return s;
}

inline Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index k = 0;
  for (double x : xs) v[k++] = x;
  return v;
}

inline Matrix mat2(double a, double b, double c, double d) { return (Matrix(2, 2) << a, b, c, d).finished(); }

/// Two-issue dyad: agent 1 follows agent 2; `r` is agent 1's issue correlation.
inline GameSpec example1(double r, double horizon = 5.0) {
  GameSpec g;
  g.n = 2;
  g.d = 2;
  g.horizon = horizon;
  const Matrix v11 = mat2(0.1, r, r, 0.1);
  const Matrix v12 = mat2(1.0, r, r, 1.0);
  g.stubbornness = {v11 * v11, Matrix::Identity(2, 2)};
  g.set_influence(0, 1, v12 * v12);
  g.biases = {vec({0.3, 0.3}), vec({0.5, -0.5})};
  return g;
}

/// Two agents influencing each other with non-matching weights.
inline GameSpec example2(double horizon) {
  GameSpec g;
  g.n = 2;
  g.d = 2;
  g.horizon = horizon;
  g.stubbornness = {mat2(0.5, -1, -1, 2.5), mat2(2, 2.5, 2.5, 3.25)};
  g.set_influence(0, 1, mat2(1.25, -1, -1, 1.25));
  g.set_influence(1, 0, mat2(2, 1.5, 1.5, 1.25));
  g.biases = {vec({-0.5, 0.5}), vec({1, 1})};
  return g;
}

inline UniformSpec example3(double horizon = 5.0) {
  UniformSpec s;
  s.n = 2;
  s.f = mat2(1.25, 1, 1, 1.25);
  s.g = s.f;
  s.horizon = horizon;
  s.biases = {vec({0.3, 0.3}), vec({0.5, -0.5})};
  return s;
}

/// Two single-agent groups, always connected, with profile-built weights
/// whose game matrix has the real negative eigenvalue -0.1556; the first
/// critical horizon is about 3.98.
inline ScenarioSpec critical_dyad_scenario(double stage_horizon, std::size_t stages = 2) {
  ScenarioSpec s;
  s.name = "critical-dyad";
  s.issues = 2;
  s.stage_count = stages;
  s.stage_horizon = stage_horizon;
  s.rho = RhoRule::constant(1.0);
  s.grid_points = 5;
  auto group = [](std::string name, Vector bias, Vector diag, double r) {
    GroupSpec g;
    g.name = std::move(name);
    g.fixed_bias = std::move(bias);
    g.epsilon = {10.0, 10.0};
    g.attributes = Vector::Zero(1);
    g.stubborn_diag = std::move(diag);
    g.correlations = mat2(1, r, r, 1);
    return g;
  };
  s.groups = {group("a", vec({-0.5, 0.5}), vec({0.33, 1.9}), 0.02),
              group("b", vec({1.0, 1.0}), vec({0.66, 0.88}), 0.9)};
  std::map<std::pair<std::size_t, std::size_t>, Vector> gains;
  gains[{0, 1}] = vec({2.48, 1.23});
  gains[{1, 0}] = vec({1.65, 0.08});
  s.gamma = GammaRule::table(gains);
  return s;
}

inline double max_abs(const Vector& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace opdyn::testing
