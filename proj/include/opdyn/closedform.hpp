#pragma once

// Closed-form equilibrium trajectories for two network classes:
//
//  * uniform weights (W_ii = F, W_ij = G for every pair), where
//      x_i(t) = avg + (F+nG)^-1 {F + C(t) nG} (b_i - avg),
//  * one leader (every follower i listens only to agent 1), where
//      x_i(t) = M_i^-1 {W_ii b_i + W_i1 b_1 + C_i(t) W_i1 (b_i - b_1)},
//    with M_i = W_ii + W_i1,
//
// and C(t) = cosh(H(T-t)) cosh(HT)^-1 for the symmetric positive definite
// root H of F + nG (resp. M_i). All work stays in d x d.

#include <unsupported/Eigen/KroneckerProduct>

#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "opdyn/game.hpp"

namespace opdyn {

namespace detail {

// Symmetric positive definite matrix A = U diag(mu) U^T with its root.
struct SpdRoot {
  Matrix vectors;
  Vector roots;  // sqrt(mu_k)

  explicit SpdRoot(const Matrix& a) {
    Eigen::SelfAdjointEigenSolver<Matrix> solver(0.5 * (a + a.transpose()));
    if (solver.info() != Eigen::Success) throw EigenSolverFailure("SpdRoot: eigensolver failed");
    if (!(solver.eigenvalues()[0] > 0.0)) throw InvalidSpec("SpdRoot: matrix is not positive definite");
    vectors = solver.eigenvectors();
    roots = solver.eigenvalues().cwiseSqrt();
  }

  Matrix root() const { return vectors * roots.asDiagonal() * vectors.transpose(); }

  // cosh(H(T-t)) cosh(HT)^-1, per channel as
  // exp(-s t) (1 + exp(-2s(T-t))) / (1 + exp(-2sT)) so that nothing overflows.
  Matrix cosh_ratio(double horizon, double t) const {
    Vector r(roots.size());
    for (Eigen::Index k = 0; k < r.size(); ++k) {
      const double s = roots[k];
      r[k] = std::exp(-s * t) * (1.0 + std::exp(-2.0 * s * (horizon - t))) /
             (1.0 + std::exp(-2.0 * s * horizon));
    }
    return vectors * r.asDiagonal() * vectors.transpose();
  }

  Matrix decay(double t) const {
    const Vector r = (-roots * t).array().exp();
    return vectors * r.asDiagonal() * vectors.transpose();
  }
};

inline void check_window(double horizon, double t) {
  if (!std::isfinite(t) || t < 0.0 || t > horizon) throw DomainError("time outside [0, T]");
}

}  // namespace detail

struct UniformSpec {
  std::size_t n = 0;
  Matrix f;  ///< stubbornness of every agent
  Matrix g;  ///< influence between every ordered pair
  double horizon = 1.0;
  std::vector<Vector> biases;

  std::size_t d() const { return static_cast<std::size_t>(f.rows()); }

  Vector average() const {
    Vector avg = Vector::Zero(f.rows());
    for (const auto& b : biases) avg += b;
    return avg / static_cast<double>(n);
  }

  Matrix combined() const { return f + static_cast<double>(n) * g; }

  GameSpec to_game_spec() const {
    GameSpec s;
    s.n = n;
    s.d = d();
    s.horizon = horizon;
    s.stubbornness.assign(n, f);
    s.biases = biases;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (i != j) s.set_influence(i, j, g);
    return s;
  }
};

inline void validate(const UniformSpec& s) {
  if (s.n < 1 || s.biases.size() != s.n) throw InvalidSpec("uniform spec: need n >= 1 and n biases");
  require_square(s.f, "uniform spec F");
  if (s.g.rows() != s.f.rows() || s.g.cols() != s.f.cols())
    throw InvalidSpec("uniform spec: F and G must have equal size");
  if (!(s.horizon > 0.0)) throw InvalidSpec("uniform spec: horizon must be positive");
  GameSpec probe;
  probe.n = 2;
  probe.d = s.d();
  probe.stubbornness = {s.f, s.f};
  probe.set_influence(0, 1, s.g);
  if (auto v = validate_assumption1(probe); !v.empty())
    throw Assumption1Violation("uniform spec: " + v.front().message, 0, v.front().value);
}

/// (F + nG)^(1/2), the symmetric positive definite root.
inline Matrix uniform_root(const UniformSpec& s) { return detail::SpdRoot(s.combined()).root(); }

inline Vector uniform_state(const UniformSpec& s, std::size_t i, double t) {
  validate(s);
  detail::check_window(s.horizon, t);
  const Matrix lambda = s.combined();
  const detail::SpdRoot root(lambda);
  const Vector avg = s.average();
  const Matrix braces = s.f + root.cosh_ratio(s.horizon, t) * (static_cast<double>(s.n) * s.g);
  return avg + lambda.llt().solve(braces * (s.biases.at(i) - avg));
}

/// T -> infinity limit of uniform_state.
inline Vector uniform_infinite_state(const UniformSpec& s, std::size_t i, double t) {
  validate(s);
  if (!std::isfinite(t) || t < 0.0) throw DomainError("uniform_infinite_state: t must be nonnegative");
  const Matrix lambda = s.combined();
  const detail::SpdRoot root(lambda);
  const Vector avg = s.average();
  const Matrix braces = s.f + root.decay(t) * (static_cast<double>(s.n) * s.g);
  return avg + lambda.llt().solve(braces * (s.biases.at(i) - avg));
}

/// (F + nG)^-1 (F b_i + G sum_j b_j), the convex-combination long-run opinion.
inline Vector uniform_long_run(const UniformSpec& s, std::size_t i) {
  validate(s);
  Vector sum = Vector::Zero(s.f.rows());
  for (const auto& b : s.biases) sum += b;
  return s.combined().llt().solve(s.f * s.biases.at(i) + s.g * sum);
}

inline Vector uniform_difference(const UniformSpec& s, std::size_t i, std::size_t j, double t) {
  if (i == j) throw DomainError("uniform_difference: agents must differ");
  validate(s);
  detail::check_window(s.horizon, t);
  const Matrix lambda = s.combined();
  const detail::SpdRoot root(lambda);
  const Matrix braces = s.f + root.cosh_ratio(s.horizon, t) * (static_cast<double>(s.n) * s.g);
  return lambda.llt().solve(braces * (s.biases.at(i) - s.biases.at(j)));
}

inline double scalar_uniform_state(double f, double g, const std::vector<double>& biases,
                                   std::size_t i, double horizon, double t) {
  if (!(f > 0.0) || !(g >= 0.0)) throw InvalidSpec("scalar_uniform_state: need f > 0, g >= 0");
  detail::check_window(horizon, t);
  const double n = static_cast<double>(biases.size());
  double avg = 0.0;
  for (double b : biases) avg += b;
  avg /= n;
  const double lambda = f + n * g;
  const double s = std::sqrt(lambda);
  const double ratio =
      std::exp(-s * t) * (1.0 + std::exp(-2.0 * s * (horizon - t))) / (1.0 + std::exp(-2.0 * s * horizon));
  return avg + (f + n * g * ratio) / lambda * (biases.at(i) - avg);
}

inline double scalar_uniform_long_run(double f, double g, const std::vector<double>& biases,
                                      std::size_t i) {
  double sum = 0.0;
  for (double b : biases) sum += b;
  return (f * biases.at(i) + g * sum) / (f + static_cast<double>(biases.size()) * g);
}

/// Network where every follower (agents 2..n) is influenced only by agent 1.
struct LeaderSpec {
  std::size_t n = 0;
  Matrix leader_stubbornness;                ///< W_11
  std::vector<Matrix> follower_stubbornness;  ///< W_ii, i = 2..n
  std::vector<Matrix> follower_influence;     ///< W_i1, i = 2..n
  double horizon = 1.0;
  Vector leader_bias;
  std::vector<Vector> follower_biases;

  std::size_t d() const { return static_cast<std::size_t>(leader_bias.size()); }

  GameSpec to_game_spec() const {
    GameSpec s;
    s.n = n;
    s.d = d();
    s.horizon = horizon;
    s.stubbornness.push_back(leader_stubbornness);
    s.biases.push_back(leader_bias);
    for (std::size_t k = 0; k + 1 < n; ++k) {
      s.stubbornness.push_back(follower_stubbornness[k]);
      s.biases.push_back(follower_biases[k]);
      s.set_influence(k + 1, 0, follower_influence[k]);
    }
    return s;
  }
};

inline void validate(const LeaderSpec& s) {
  if (s.n < 1 || s.follower_biases.size() + 1 != s.n || s.follower_stubbornness.size() + 1 != s.n ||
      s.follower_influence.size() + 1 != s.n)
    throw InvalidSpec("leader spec: follower arrays must have n - 1 entries");
  check_structure(s.to_game_spec());
  if (auto v = validate_assumption1(s.to_game_spec()); !v.empty())
    throw Assumption1Violation("leader spec: " + v.front().message, v.front().agent, v.front().value);
}

/// Followers (zero-based agent indices) whose W_ii + W_i1 shares an
/// eigenvalue with W_11. The closed form is still evaluated for them.
inline std::vector<std::size_t> leader_disjointness_violations(const LeaderSpec& s) {
  std::vector<std::size_t> out;
  const Vector lead = Eigen::SelfAdjointEigenSolver<Matrix>(s.leader_stubbornness, Eigen::EigenvaluesOnly)
                          .eigenvalues();
  for (std::size_t k = 0; k + 1 < s.n; ++k) {
    const Matrix m = s.follower_stubbornness[k] + s.follower_influence[k];
    const Vector mine = Eigen::SelfAdjointEigenSolver<Matrix>(m, Eigen::EigenvaluesOnly).eigenvalues();
    bool shared = false;
    for (double a : lead)
      for (double b : mine)
        if (std::abs(a - b) <= kRealEigenvalueTol * (1.0 + std::abs(a))) shared = true;
    if (shared) out.push_back(k + 1);
  }
  return out;
}

inline Vector leader_state(const LeaderSpec& s, std::size_t i, double t) {
  validate(s);
  detail::check_window(s.horizon, t);
  if (i == 0) return s.leader_bias;
  const std::size_t k = i - 1;
  const Matrix& wii = s.follower_stubbornness.at(k);
  const Matrix& wi1 = s.follower_influence.at(k);
  const Vector& bi = s.follower_biases.at(k);
  const Matrix m = wii + wi1;
  const detail::SpdRoot root(m);
  const Vector braces =
      wii * bi + wi1 * s.leader_bias + root.cosh_ratio(s.horizon, t) * (wi1 * (bi - s.leader_bias));
  return m.llt().solve(braces);
}

/// M_i^-1 (W_ii b_i + W_i1 b_1); the leader's own limit is b_1.
inline Vector leader_long_run(const LeaderSpec& s, std::size_t i) {
  validate(s);
  if (i == 0) return s.leader_bias;
  const std::size_t k = i - 1;
  const Matrix m = s.follower_stubbornness.at(k) + s.follower_influence.at(k);
  return m.llt().solve(s.follower_stubbornness[k] * s.follower_biases.at(k) +
                       s.follower_influence[k] * s.leader_bias);
}

inline double scalar_leader_state(double w_ii, double w_i1, double b_i, double b_1, double horizon,
                                  double t) {
  if (!(w_ii > 0.0) || !(w_i1 >= 0.0)) throw InvalidSpec("scalar_leader_state: need w_ii > 0, w_i1 >= 0");
  detail::check_window(horizon, t);
  const double lambda = w_ii + w_i1;
  const double s = std::sqrt(lambda);
  const double ratio =
      std::exp(-s * t) * (1.0 + std::exp(-2.0 * s * (horizon - t))) / (1.0 + std::exp(-2.0 * s * horizon));
  return (w_ii * b_i + w_i1 * b_1) / lambda + (w_i1 / lambda) * ratio * (b_i - b_1);
}

/// Solve X A - B X = C for X (rows of B by columns of A).
inline Matrix sylvester_solve(const Matrix& a, const Matrix& b, const Matrix& c) {
  require_square(a, "sylvester A");
  require_square(b, "sylvester B");
  if (c.rows() != b.rows() || c.cols() != a.rows())
    throw InvalidSpec("sylvester_solve: C must be rows(B) x cols(A)");
  require_finite(a, "sylvester A");
  require_finite(b, "sylvester B");
  require_finite(c, "sylvester C");
  const ComplexVector ea = a.eigenvalues();
  const ComplexVector eb = b.eigenvalues();
  for (Eigen::Index i = 0; i < ea.size(); ++i)
    for (Eigen::Index j = 0; j < eb.size(); ++j)
      if (std::abs(ea[i] - eb[j]) <= kRealEigenvalueTol * (1.0 + std::abs(ea[i])))
        throw SharedEigenvalue("sylvester_solve: A and B share an eigenvalue");
  const auto p = a.rows();
  const auto q = b.rows();
  const Matrix k = Eigen::kroneckerProduct(a.transpose(), Matrix::Identity(q, q)).eval() -
                   Eigen::kroneckerProduct(Matrix::Identity(p, p), b).eval();
  const Vector vec_c = Eigen::Map<const Vector>(c.data(), c.size());
  const Vector vec_x = k.fullPivLu().solve(vec_c);
  return Eigen::Map<const Matrix>(vec_x.data(), q, p);
}

/// Block-triangularizing similarity of the leader game matrix:
/// Q = R^-1 diag(W_11, M_2..M_n) R with R = [I 0; X I] and
/// X W_11 - diag(M_i) X = [W_21; ...; W_n1]. Returns the root
/// R^-1 diag(W_11^(1/2), M_i^(1/2)) R.
inline Matrix leader_root_via_sylvester(const LeaderSpec& s) {
  validate(s);
  const auto d = static_cast<Eigen::Index>(s.d());
  const auto f = static_cast<Eigen::Index>(s.n - 1) * d;
  Matrix w2 = Matrix::Zero(f, f);
  Matrix w3(f, d);
  Matrix root2 = Matrix::Zero(f, f);
  for (std::size_t k = 0; k + 1 < s.n; ++k) {
    const auto r = static_cast<Eigen::Index>(k) * d;
    const Matrix m = s.follower_stubbornness[k] + s.follower_influence[k];
    w2.block(r, r, d, d) = m;
    root2.block(r, r, d, d) = detail::SpdRoot(m).root();
    w3.block(r, 0, d, d) = s.follower_influence[k];
  }
  const Matrix x = sylvester_solve(s.leader_stubbornness, w2, w3);
  const auto m = d + f;
  Matrix r = Matrix::Identity(m, m);
  r.block(d, 0, f, d) = x;
  Matrix r_inv = Matrix::Identity(m, m);
  r_inv.block(d, 0, f, d) = -x;
  Matrix diag = Matrix::Zero(m, m);
  diag.block(0, 0, d, d) = detail::SpdRoot(s.leader_stubbornness).root();
  diag.block(d, d, f, f) = root2;
  return r_inv * diag * r;
}

struct Theorem1Verdict {
  bool pairwise_symmetric = false;
  bool positive_definite = false;
  double min_eigenvalue = std::numeric_limits<double>::quiet_NaN();
};

/// For W_ij = W_ji the game matrix is symmetric positive definite.
inline Theorem1Verdict theorem1_psd_check(const GameSpec& spec) {
  Theorem1Verdict v;
  for (const auto& [key, w] : spec.influence) {
    const Matrix* other = spec.influence_of(key.second, key.first);
    const bool zero = w.isZero(0.0);
    if ((zero && other) || (!zero && (!other || *other != w))) return v;
  }
  v.pairwise_symmetric = true;
  const QAssembly a = assemble(spec);
  v.min_eigenvalue = Eigen::SelfAdjointEigenSolver<Matrix>(a.q, Eigen::EigenvaluesOnly).eigenvalues()[0];
  v.positive_definite = v.min_eigenvalue > 0.0;
  return v;
}

}  // namespace opdyn
