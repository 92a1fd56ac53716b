#pragma once

// Weight matrices from agent attributes, bounded confidence and issue
// correlations. Influence roots V_ij are gated per issue by
// |b_i,k - b_j,k| <= eps_i; the weight is W_ij = V_ij^2, which makes it
// symmetric nonnegative definite whenever V_ij is symmetric.

#include <cstddef>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "opdyn/game_spec.hpp"

namespace opdyn {

struct AgentProfile {
  Vector attributes;      ///< e.g. social status in {0, 1}
  double epsilon = 0.0;   ///< bounded confidence threshold
  Matrix correlations;    ///< symmetric d x d, entries in [-1, 1]; diagonal unused
  double c = 1.0;         ///< proportionality constant for off-diagonal roots
  Vector stubborn_diag;   ///< v_ii,kk > 0

  std::size_t issues() const { return static_cast<std::size_t>(stubborn_diag.size()); }
};

inline void validate_profile(const AgentProfile& p) {
  auto fail = [](const std::string& m) { throw InvalidSpec("agent profile: " + m); };
  const auto d = p.stubborn_diag.size();
  if (d == 0) fail("stubborn_diag must be non-empty");
  if (p.correlations.rows() != d || p.correlations.cols() != d) fail("correlations must be d x d");
  if (!p.correlations.allFinite() || !p.stubborn_diag.allFinite() || !p.attributes.allFinite())
    fail("non-finite entries");
  if (!(p.epsilon >= 0.0)) fail("epsilon must be nonnegative");
  if (!(p.c >= 0.0) || !std::isfinite(p.c)) fail("c must be nonnegative");
  if ((p.stubborn_diag.array() <= 0.0).any()) fail("stubborn_diag must be strictly positive");
  for (Eigen::Index k = 0; k < d; ++k)
    for (Eigen::Index l = 0; l < d; ++l) {
      if (k == l) continue;
      const double r = p.correlations(k, l);
      if (r < -1.0 || r > 1.0) fail("correlations must lie in [-1, 1]");
      if (r != p.correlations(l, k)) fail("correlations must be symmetric");
    }
}

/// Diagonal gain gamma_ij,k(a_i, a_j) >= 0 of an open influence gate.
class GammaRule {
 public:
  struct Constant {
    double value;
  };
  struct AffineInTargetStatus {
    double alpha;
    double beta;
    std::size_t attribute;
  };
  /// Explicit per-issue gains for ordered agent pairs; missing pairs gain 0.
  struct Table {
    std::map<std::pair<std::size_t, std::size_t>, Vector> gains;
  };

  static GammaRule constant(double value) { return GammaRule(Constant{value}); }
  static GammaRule affine_in_target_status(double alpha, double beta, std::size_t attribute = 0) {
    return GammaRule(AffineInTargetStatus{alpha, beta, attribute});
  }
  static GammaRule table(std::map<std::pair<std::size_t, std::size_t>, Vector> gains) {
    return GammaRule(Table{std::move(gains)});
  }

  double gain(const AgentProfile& from, const AgentProfile& to, std::size_t issue,
              std::pair<std::size_t, std::size_t> pair = {0, 0}) const {
    const double g = std::visit(
        [&](const auto& r) -> double {
          using R = std::decay_t<decltype(r)>;
          if constexpr (std::is_same_v<R, Constant>) {
            return r.value;
          } else if constexpr (std::is_same_v<R, AffineInTargetStatus>) {
            if (static_cast<Eigen::Index>(r.attribute) >= to.attributes.size())
              throw InvalidSpec("gamma rule: attribute index out of range");
            return r.alpha * to.attributes[static_cast<Eigen::Index>(r.attribute)] + r.beta;
          } else {
            auto it = r.gains.find(pair);
            if (it == r.gains.end()) return 0.0;
            if (static_cast<Eigen::Index>(issue) >= it->second.size())
              throw InvalidSpec("gamma table: too few gains for pair");
            return it->second[static_cast<Eigen::Index>(issue)];
          }
        },
        rule_);
    (void)from;
    if (!(g >= 0.0) || !std::isfinite(g)) throw InvalidSpec("gamma rule produced a negative gain");
    return g;
  }

  const auto& rule() const { return rule_; }

 private:
  using Variant = std::variant<Constant, AffineInTargetStatus, Table>;
  explicit GammaRule(Variant r) : rule_(std::move(r)) {}
  Variant rule_;
};

/// V_ij for agent i looking at agent j, gated on the stage-initial biases.
inline Matrix build_influence_root(const AgentProfile& pi, const AgentProfile& pj,
                                   const Vector& bi, const Vector& bj, const GammaRule& rule,
                                   std::pair<std::size_t, std::size_t> pair = {0, 0}) {
  const auto d = pi.stubborn_diag.size();
  if (bi.size() != d || bj.size() != d) throw InvalidSpec("build_influence_root: bias size mismatch");
  if (!bi.allFinite() || !bj.allFinite()) throw NonFiniteInput("build_influence_root: non-finite bias");
  Matrix v = Matrix::Zero(d, d);
  for (Eigen::Index k = 0; k < d; ++k)
    if (std::abs(bi[k] - bj[k]) <= pi.epsilon)
      v(k, k) = rule.gain(pi, pj, static_cast<std::size_t>(k), pair);
  for (Eigen::Index k = 0; k < d; ++k)
    for (Eigen::Index l = 0; l < d; ++l)
      if (k != l && (v(k, k) != 0.0 || v(l, l) != 0.0)) v(k, l) = pi.c * pi.correlations(k, l);
  return v;
}

inline Matrix square_to_weight(const Matrix& v) {
  require_square(v, "square_to_weight");
  if (v != v.transpose()) throw InvalidSpec("square_to_weight: V must be symmetric");
  return v * v;
}

/// W_ii = V_ii^2 with diag(V_ii) = stubborn_diag and off-diagonals c r_kl.
inline Matrix build_stubbornness(const AgentProfile& p, std::size_t agent = 0) {
  validate_profile(p);
  const auto d = p.stubborn_diag.size();
  Matrix v(d, d);
  for (Eigen::Index k = 0; k < d; ++k)
    for (Eigen::Index l = 0; l < d; ++l)
      v(k, l) = (k == l) ? p.stubborn_diag[k] : p.c * p.correlations(k, l);
  const Matrix w = square_to_weight(v);
  const double min_eig = Eigen::SelfAdjointEigenSolver<Matrix>(w, Eigen::EigenvaluesOnly).eigenvalues()[0];
  if (!(min_eig > 1e-10)) {
    std::ostringstream os;
    os << "stubbornness of agent " << agent + 1
       << " is not positive definite (V_ii singular); min eigenvalue " << min_eig;
    throw Assumption1Violation(os.str(), agent, min_eig);
  }
  return w;
}

struct Violation {
  enum class Kind { asymmetric, not_positive_definite, not_nonnegative_definite };
  std::size_t agent = 0;  ///< zero-based
  std::size_t other = 0;  ///< equals `agent` for stubbornness matrices
  Kind kind = Kind::asymmetric;
  double value = 0.0;     ///< asymmetry magnitude or offending eigenvalue
  std::string message;
};

inline constexpr double kAssumptionTol = 1e-10;

/// Symmetric positive definite W_ii and symmetric nonnegative definite W_ij.
inline std::vector<Violation> validate_assumption1(const GameSpec& spec) {
  std::vector<Violation> out;
  auto check = [&](const Matrix& w, std::size_t i, std::size_t j) {
    const bool self = (i == j);
    std::ostringstream who;
    if (self)
      who << "W_" << i + 1 << i + 1 << " (agent " << i + 1 << ")";
    else
      who << "W_" << i + 1 << "," << j + 1 << " (agent " << i + 1 << ")";
    const double asym = (w - w.transpose()).cwiseAbs().maxCoeff();
    if (asym > kAssumptionTol) {
      out.push_back({i, j, Violation::Kind::asymmetric, asym, who.str() + " is not symmetric"});
      return;
    }
    const Matrix sym = 0.5 * (w + w.transpose());
    const double min_eig =
        Eigen::SelfAdjointEigenSolver<Matrix>(sym, Eigen::EigenvaluesOnly).eigenvalues()[0];
    if (self && !(min_eig > kAssumptionTol)) {
      std::ostringstream os;
      os << who.str() << " is not positive definite: min eigenvalue " << min_eig;
      out.push_back({i, j, Violation::Kind::not_positive_definite, min_eig, os.str()});
    } else if (!self && !(min_eig >= -kAssumptionTol)) {
      std::ostringstream os;
      os << who.str() << " is not nonnegative definite: min eigenvalue " << min_eig;
      out.push_back({i, j, Violation::Kind::not_nonnegative_definite, min_eig, os.str()});
    }
  };
  for (std::size_t i = 0; i < spec.stubbornness.size(); ++i) check(spec.stubbornness[i], i, i);
  for (const auto& [key, w] : spec.influence)
    if (key.first != key.second && w.rows() == w.cols()) check(w, key.first, key.second);
  return out;
}

}  // namespace opdyn
