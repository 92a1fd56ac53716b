#pragma once

// Open-loop Nash equilibrium of the opinion game.
//
// With Q the block game matrix, W = diag(W_11, ..., W_nn) and b the stacked
// biases, the state-costate system x' = -p, p' = -Q x + W b with x(0) = b,
// p(T) = 0 has the unique solution (whenever f(QT) is nonsingular)
//
//   x*(t) = b + [h(Qt) f(QT) - g(Qt) g(QT)] f(QT)^-1 (Q - W) b
//   u*(t) =     [g(Qt) f(QT) - f(Qt) g(QT)] f(QT)^-1 (Q - W) b
//
// and, for nonsingular Q with any square root H,
//
//   x*(t) = Q^-1 W b + cosh(H(T-t)) cosh(HT)^-1 (I - Q^-1 W) b.

#include <unsupported/Eigen/MatrixFunctions>

#include <cstddef>
#include <limits>
#include <optional>
#include <sstream>
#include <vector>

#include "opdyn/game_spec.hpp"
#include "opdyn/matfun.hpp"
#include "opdyn/weights.hpp"

namespace opdyn {

struct QAssembly {
  std::size_t n = 0;
  std::size_t d = 0;
  Matrix q;        ///< nd x nd game matrix
  Matrix w_block;  ///< block diagonal of the stubbornness matrices
  Vector b;        ///< stacked biases

  std::size_t order() const { return n * d; }
};

inline QAssembly assemble(const GameSpec& spec) {
  check_structure(spec);
  const auto violations = validate_assumption1(spec);
  if (!violations.empty()) {
    const auto& v = violations.front();
    throw Assumption1Violation("Assumption 1 violated: " + v.message, v.agent, v.value);
  }
  const auto d = static_cast<Eigen::Index>(spec.d);
  const auto m = static_cast<Eigen::Index>(spec.n) * d;
  QAssembly a;
  a.n = spec.n;
  a.d = spec.d;
  a.q = Matrix::Zero(m, m);
  a.w_block = Matrix::Zero(m, m);
  for (std::size_t i = 0; i < spec.n; ++i) {
    const auto r = static_cast<Eigen::Index>(i) * d;
    a.w_block.block(r, r, d, d) = spec.stubbornness[i];
    a.q.block(r, r, d, d) = spec.stubbornness[i];
  }
  for (const auto& [key, w] : spec.influence) {
    if (w.isZero(0.0)) continue;
    const auto r = static_cast<Eigen::Index>(key.first) * d;
    const auto c = static_cast<Eigen::Index>(key.second) * d;
    a.q.block(r, r, d, d) += w;
    a.q.block(r, c, d, d) = -w;
  }
  a.b = spec.stacked_biases();
  return a;
}

struct ExistenceVerdict {
  bool unique_equilibrium = false;
  std::vector<CriticalHit> hits;
  /// Critical horizons below 2T, for diagnostics.
  CriticalTimes horizons;
  double f_condition = 1.0;
  SpectralInfo spectrum;
};

inline ExistenceVerdict check_existence(const QAssembly& a, double horizon,
                                        double tol = kCriticalTimeTol) {
  auto s = f_singularity(a.q, horizon, tol, 2.0 * horizon);
  ExistenceVerdict v;
  v.unique_equilibrium = !s.critical;
  v.hits = std::move(s.hits);
  v.horizons = std::move(s.horizons);
  v.f_condition = s.f_condition;
  v.spectrum = std::move(s.spectrum);
  return v;
}

class NoEquilibrium : public Error {
 public:
  NoEquilibrium(const std::string& what, ExistenceVerdict verdict)
      : Error(what), verdict_(std::move(verdict)) {}
  const ExistenceVerdict& verdict() const noexcept { return verdict_; }

 private:
  ExistenceVerdict verdict_;
};

inline std::string describe_critical(const ExistenceVerdict& v) {
  std::ostringstream os;
  os.precision(10);
  for (const auto& h : v.hits)
    os << "critical horizon T_" << h.k << " = " << h.horizon << " (r = " << h.r
       << ", eigenvalue " << -h.r * h.r << ")";
  return os.str();
}

struct TrajectorySample {
  std::vector<double> grid;
  std::vector<Vector> states;
  std::vector<Vector> controls;
};

/// Condition estimate above which a solution is flagged near-critical.
///
/// The raw condition number of f(QT) grows like cosh(sqrt(lambda_max) T) on
/// perfectly benign games, so the spectral route measures the distance to a
/// singular f instead: cond(V) / min_i |f(lambda_i T)|. Without a usable
/// eigenbasis the raw SVD estimate is used.
inline constexpr double kNearCriticalCondition = 1e8;

/// How a solution evaluates its trajectory. `spectral` works per eigen-channel;
/// `principal_root` uses bounded decaying exponentials of H = Q^{1/2} and needs
/// Q free of eigenvalues on (-inf, 0]; `scaled_series` is the last resort and
/// loses accuracy once cosh(sqrt(lambda_max) T) is large.
enum class SolutionRoute { spectral, principal_root, scaled_series };

class NashSolution {
 public:
  /// `forced` pins the evaluation route (for cross-checks); an inapplicable
  /// route throws DomainError.
  static NashSolution solve(QAssembly assembly, double horizon, double tol = kCriticalTimeTol,
                            std::optional<SolutionRoute> forced = std::nullopt) {
    auto verdict = check_existence(assembly, horizon, tol);
    if (!verdict.unique_equilibrium)
      throw NoEquilibrium("no Nash equilibrium: " + describe_critical(verdict), std::move(verdict));
    return NashSolution(std::move(assembly), horizon, std::move(verdict), forced);
  }

  static NashSolution solve(const GameSpec& spec, double tol = kCriticalTimeTol) {
    return solve(assemble(spec), spec.horizon, tol);
  }

  const QAssembly& assembly() const { return assembly_; }
  double horizon() const { return horizon_; }
  const ExistenceVerdict& existence() const { return verdict_; }
  double f_condition() const { return verdict_.f_condition; }
  /// See kNearCriticalCondition.
  double critical_proximity() const { return proximity_; }
  bool near_critical() const { return proximity_ > kNearCriticalCondition; }
  const HyperbolicKernel& kernel() const { return kernel_; }
  SolutionRoute route() const { return route_; }

  Vector state_at(double t) const {
    check_time(t);
    if (kernel_.is_spectral()) {
      const auto& e = kernel_.eigen();
      ComplexVector coeff(r_hat_.size());
      for (Eigen::Index i = 0; i < coeff.size(); ++i)
        coeff[i] = channel_response(e.values[i], horizon_, t).state * r_hat_[i];
      return assembly_.b + e.from_eigen(coeff);
    }
    if (route_ == SolutionRoute::principal_root) {
      // a + E(t) (I + E(2(T-t))) y0
      const Vector v = y0_ + decay(2.0 * (horizon_ - t)) * y0_;
      return average_ + decay(t) * v;
    }
    const auto now = kernel_.all(t);
    return assembly_.b + now.h * fc_ - now.g * gc_;
  }

  Vector control_at(double t) const {
    check_time(t);
    if (kernel_.is_spectral()) {
      const auto& e = kernel_.eigen();
      ComplexVector coeff(r_hat_.size());
      for (Eigen::Index i = 0; i < coeff.size(); ++i)
        coeff[i] = channel_response(e.values[i], horizon_, t).control * r_hat_[i];
      return e.from_eigen(coeff);
    }
    if (route_ == SolutionRoute::principal_root) {
      // -H E(t) (I - E(2(T-t))) y0
      const Vector v = y0_ - decay(2.0 * (horizon_ - t)) * y0_;
      return -(root_ * (decay(t) * v));
    }
    const auto now = kernel_.all(t);
    return now.g * fc_ - now.f * gc_;
  }

  /// Cross-check of state_at through cosh(H(T-t)) cosh(HT)^-1 with the
  /// principal (possibly complex) square root H. Requires nonsingular Q.
  Vector state_at_cosh(double t) const {
    check_time(t);
    Eigen::FullPivLU<Matrix> lu(assembly_.q);
    if (!lu.isInvertible()) throw SingularMatrix("state_at_cosh: Q is singular");
    const Vector average = lu.solve(assembly_.w_block * assembly_.b);
    const Vector deviation = assembly_.b - average;
    const ComplexMatrix qc = assembly_.q.cast<Complex>();
    const ComplexMatrix root = qc.sqrt();
    const ComplexMatrix cosh_end = (root * horizon_).cosh();
    const ComplexMatrix cosh_now = (root * (horizon_ - t)).cosh();
    const ComplexVector y = cosh_end.partialPivLu().solve(deviation.cast<Complex>());
    return average + (cosh_now * y).real();
  }

  TrajectorySample sample(std::size_t grid_points) const {
    if (grid_points < 2) throw DomainError("sample: at least two grid points required");
    TrajectorySample s;
    s.grid.reserve(grid_points);
    for (std::size_t k = 0; k < grid_points; ++k) {
      const double t = (k + 1 == grid_points)
                           ? horizon_
                           : horizon_ * static_cast<double>(k) / static_cast<double>(grid_points - 1);
      s.grid.push_back(t);
      s.states.push_back(state_at(t));
      s.controls.push_back(control_at(t));
    }
    return s;
  }

 private:
  static SeriesMethod kernel_method(std::optional<SolutionRoute> forced) {
    if (!forced) return SeriesMethod::automatic;
    return *forced == SolutionRoute::spectral ? SeriesMethod::spectral : SeriesMethod::scaled_series;
  }

  NashSolution(QAssembly assembly, double horizon, ExistenceVerdict verdict,
               std::optional<SolutionRoute> forced)
      : assembly_(std::move(assembly)),
        horizon_(horizon),
        verdict_(std::move(verdict)),
        kernel_(assembly_.q, kernel_method(forced)) {
    const Vector rhs = (assembly_.q - assembly_.w_block) * assembly_.b;
    if (forced == SolutionRoute::principal_root && !root_route_applies())
      throw DomainError("principal-root route needs Q without eigenvalues on (-inf, 0]");
    if (kernel_.is_spectral()) {
      // Diagonal in the eigenbasis: f(QT) is divided out channel by channel.
      const auto& e = kernel_.eigen();
      r_hat_ = e.to_eigen(rhs);
      double smallest = std::numeric_limits<double>::infinity();
      for (const auto& lambda : e.values)
        smallest = std::min(smallest, std::abs(hyperbolic_triple(lambda, horizon_).f));
      proximity_ = std::max(1.0, e.conditioning) / smallest;
      return;
    }
    if (forced != SolutionRoute::scaled_series && root_route_applies()) {
      route_ = SolutionRoute::principal_root;
      root_ = assembly_.q.sqrt();
      average_ = Eigen::FullPivLU<Matrix>(assembly_.q).solve(assembly_.w_block * assembly_.b);
      const auto m = assembly_.q.rows();
      const Matrix denom = Matrix::Identity(m, m) + decay(2.0 * horizon_);
      Eigen::PartialPivLU<Matrix> lu(denom);
      y0_ = lu.solve(assembly_.b - average_);
      proximity_ = 1.0 / lu.rcond();
      return;
    }
    route_ = SolutionRoute::scaled_series;
    proximity_ = verdict_.f_condition;
    const auto end = kernel_.all(horizon_);
    // f(QT) is applied through a linear solve, never an explicit inverse.
    const Vector c = end.f.partialPivLu().solve(rhs);
    fc_ = end.f * c;
    gc_ = end.g * c;
  }

  bool root_route_applies() const {
    const double scale = std::max(1.0, assembly_.q.cwiseAbs().maxCoeff());
    for (const auto& lambda : verdict_.spectrum.eigenvalues) {
      if (std::abs(lambda) <= 1e-12 * scale) return false;
      if (is_real_eigenvalue(lambda) && lambda.real() < 0.0) return false;
    }
    return true;
  }

  Matrix decay(double tau) const { return (-root_ * tau).exp(); }

  void check_time(double t) const {
    if (!std::isfinite(t) || t < 0.0 || t > horizon_) {
      std::ostringstream os;
      os << "time " << t << " outside [0, " << horizon_ << "]";
      throw DomainError(os.str());
    }
  }

  QAssembly assembly_;
  double horizon_;
  ExistenceVerdict verdict_;
  HyperbolicKernel kernel_;
  SolutionRoute route_ = SolutionRoute::spectral;
  // Spectral route: (Q - W) b in the eigenbasis.
  ComplexVector r_hat_;
  // Principal-root route: H, Q^-1 W b and (I + E(2T))^-1 (b - Q^-1 W b).
  Matrix root_;
  Vector average_, y0_;
  double proximity_ = 1.0;
  // Scaled-series route: f(QT) c and g(QT) c.
  Vector fc_, gc_;
};

/// Q^-1 W b, the long-run weighted average (infinite horizon, t -> infinity).
inline Vector long_run_limit(const QAssembly& a) {
  Eigen::FullPivLU<Matrix> lu(a.q);
  if (!lu.isInvertible()) throw SingularMatrix("long_run_limit: Q is singular; limit undefined");
  return lu.solve(a.w_block * a.b);
}

/// [Q^-1 W + exp(-H_p t)(I - Q^-1 W)] b with H_p the right half-plane root.
inline Vector infinite_horizon_state(const QAssembly& a, double t) {
  require_finite(t, "infinite_horizon_state");
  if (t < 0.0) throw DomainError("infinite_horizon_state: t must be nonnegative");
  const Matrix root = sqrt_positive_real(a.q);
  const Vector average = long_run_limit(a);
  if (t == 0.0) return a.b;
  const Matrix decay = (-root * t).exp();
  return average + decay * (a.b - average);
}

}  // namespace opdyn
