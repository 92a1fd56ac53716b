#pragma once

// Dense matrix-function kernel for the even/odd hyperbolic series
//
//   f(Qt) = sum_k Q^k t^(2k)   / (2k)!     = cosh(Ht)
//   g(Qt) = sum_k Q^k t^(2k+1) / (2k+1)!   = H^-1 sinh(Ht)
//   h(Qt) = sum_k Q^k t^(2k+2) / (2k+2)!   = Q^-1 (cosh(Ht) - I)
//
// where H is any square root of Q. None of the three depends on the choice
// of H, and all three are defined for singular Q.
//
// Two evaluation routes are provided. The spectral route diagonalizes Q and
// applies the scalar functions eigenvalue-by-eigenvalue; it is used when the
// eigenvector basis is well conditioned. The scaled-series route sums the
// Taylor series at t / 2^j and recombines with the double-angle identities
//
//   f(2s) = 2 f(s)^2 - I,   g(2s) = 2 g(s) f(s),   h(2s) = 2 h(s) (f(s) + I).

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>
#include <vector>

#include "opdyn/error.hpp"

namespace opdyn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Complex = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;

/// |Im(lambda)| <= tol * (1 + |lambda|) classifies an eigenvalue as real.
inline constexpr double kRealEigenvalueTol = 1e-9;
/// Default relative tolerance |T - T_k| <= tol * T_k for critical horizons.
inline constexpr double kCriticalTimeTol = 1e-6;
/// Eigenvector conditioning above which the spectral route is abandoned.
inline constexpr double kMaxSpectralConditioning = 1e6;

inline void require_square(const Matrix& m, const char* what) {
  if (m.rows() != m.cols() || m.rows() == 0) {
    std::ostringstream os;
    os << what << ": expected a non-empty square matrix, got " << m.rows() << "x" << m.cols();
    throw InvalidSpec(os.str());
  }
}

inline void require_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) throw NonFiniteInput(std::string(what) + ": matrix has non-finite entries");
}

inline void require_finite(double t, const char* what) {
  if (!std::isfinite(t)) throw NonFiniteInput(std::string(what) + ": non-finite scalar");
}

inline bool is_real_eigenvalue(Complex z, double tol = kRealEigenvalueTol) {
  return std::abs(z.imag()) <= tol * (1.0 + std::abs(z));
}

inline bool is_symmetric(const Matrix& m, double rel_tol = 1e-13) {
  if (m.rows() != m.cols()) return false;
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= rel_tol * (1.0 + m.cwiseAbs().maxCoeff());
}

struct SpectralInfo {
  std::vector<Complex> eigenvalues;
  /// Most negative real eigenvalue -r^2, if Q has any real negative eigenvalue.
  std::optional<double> min_real_negative;
  /// ||V||_1 ||V^-1||_1 for the eigenvector matrix V (1 for symmetric Q).
  double conditioning = 1.0;

  std::vector<double> real_negative_eigenvalues() const {
    std::vector<double> out;
    for (const auto& z : eigenvalues)
      if (is_real_eigenvalue(z) && z.real() < 0.0) out.push_back(z.real());
    std::sort(out.begin(), out.end());
    return out;
  }

  bool has_real_negative() const { return min_real_negative.has_value(); }
};

namespace detail {

// Eigendecomposition Q = V diag(lambda) V^-1. Symmetric input uses the
// self-adjoint solver and an orthogonal V.
struct Eigendecomposition {
  bool symmetric = false;
  Matrix real_vectors;
  ComplexMatrix vectors;
  ComplexMatrix inverse_vectors;
  ComplexVector values;
  double conditioning = 1.0;

  static Eigendecomposition of(const Matrix& q) {
    Eigendecomposition e;
    if (is_symmetric(q)) {
      Eigen::SelfAdjointEigenSolver<Matrix> solver(q);
      if (solver.info() != Eigen::Success)
        throw EigenSolverFailure("self-adjoint eigensolver did not converge");
      e.symmetric = true;
      e.real_vectors = solver.eigenvectors();
      e.values = solver.eigenvalues().cast<Complex>();
      e.conditioning = 1.0;
      return e;
    }
    Eigen::EigenSolver<Matrix> solver(q, true);
    if (solver.info() != Eigen::Success)
      throw EigenSolverFailure("eigensolver did not converge");
    e.vectors = solver.eigenvectors();
    e.values = solver.eigenvalues();
    Eigen::PartialPivLU<ComplexMatrix> lu(e.vectors);
    e.inverse_vectors = lu.inverse();
    const double norm_v = e.vectors.cwiseAbs().colwise().sum().maxCoeff();
    const double norm_vi = e.inverse_vectors.cwiseAbs().colwise().sum().maxCoeff();
    e.conditioning = norm_v * norm_vi;
    if (!std::isfinite(e.conditioning)) e.conditioning = std::numeric_limits<double>::infinity();
    return e;
  }

  std::size_t order() const { return static_cast<std::size_t>(values.size()); }

  ComplexVector to_eigen(const Vector& v) const {
    if (symmetric) return (real_vectors.transpose() * v).cast<Complex>();
    return inverse_vectors * v.cast<Complex>();
  }

  Vector from_eigen(const ComplexVector& c) const {
    if (symmetric) return real_vectors * c.real();
    return (vectors * c).real();
  }

  Matrix from_diagonal(const ComplexVector& d) const {
    if (symmetric) return real_vectors * d.real().asDiagonal() * real_vectors.transpose();
    return (vectors * d.asDiagonal() * inverse_vectors).real();
  }
};

}  // namespace detail

/// Scalar values of f, g, h at eigenvalue lambda and time t.
struct HyperbolicTriple {
  Complex f, g, h;
};

inline HyperbolicTriple hyperbolic_triple(Complex lambda, double t) {
  const Complex z = lambda * (t * t);
  if (std::abs(z) <= 1.0) {
    // Power series in z; terms fall below 1e-18 within ~12 iterations.
    Complex f = 0.0, g = 0.0, h = 0.0;
    Complex tf = 1.0, tg = 1.0, th = 0.5;
    for (int k = 0; k < 40; ++k) {
      f += tf;
      g += tg;
      h += th;
      if (std::abs(tf) < 1e-18) break;
      const double kk = static_cast<double>(k);
      tf *= z / ((2 * kk + 1) * (2 * kk + 2));
      tg *= z / ((2 * kk + 2) * (2 * kk + 3));
      th *= z / ((2 * kk + 3) * (2 * kk + 4));
    }
    return {f, g * t, h * (t * t)};
  }
  const Complex s = std::sqrt(lambda);
  const Complex c = std::cosh(s * t);
  return {c, std::sinh(s * t) / s, (c - 1.0) / lambda};
}

/// Scalar equilibrium response on [0, T] for one eigenvalue:
///   state   = [h(t) f(T) - g(t) g(T)] / f(T)
///   control = [g(t) f(T) - f(t) g(T)] / f(T)
/// Outside the series regime these reduce to (cosh(s(T-t))/cosh(sT) - 1)/lambda
/// and -sinh(s(T-t))/(s cosh(sT)), evaluated with exponentials scaled by
/// exp(-sT). The product form cancels badly once cosh(sT) is large.
struct ChannelResponse {
  Complex state, control;
};

inline ChannelResponse channel_response(Complex lambda, double horizon, double t) {
  if (std::abs(lambda) * horizon * horizon <= 1.0) {
    const auto now = hyperbolic_triple(lambda, t);
    const auto end = hyperbolic_triple(lambda, horizon);
    return {(now.h * end.f - now.g * end.g) / end.f, (now.g * end.f - now.f * end.g) / end.f};
  }
  const Complex s = std::sqrt(lambda);  // principal root, Re s >= 0
  const Complex decay = std::exp(-s * t);
  const Complex tail = std::exp(-2.0 * s * (horizon - t));
  const Complex denom = 1.0 + std::exp(-2.0 * s * horizon);
  const Complex ratio = decay * (1.0 + tail) / denom;
  return {(ratio - 1.0) / lambda, -decay * (1.0 - tail) / (s * denom)};
}

enum class SeriesMethod { automatic, spectral, scaled_series };

/// Evaluator of f(Qt), g(Qt), h(Qt) for a fixed Q at arbitrary t >= 0.
class HyperbolicKernel {
 public:
  struct Triple {
    Matrix f, g, h;
  };

  explicit HyperbolicKernel(Matrix q, SeriesMethod method = SeriesMethod::automatic)
      : q_(std::move(q)) {
    require_square(q_, "HyperbolicKernel");
    require_finite(q_, "HyperbolicKernel");
    if (method == SeriesMethod::scaled_series) {
      method_ = SeriesMethod::scaled_series;
      return;
    }
    if (method == SeriesMethod::spectral) {
      eig_ = detail::Eigendecomposition::of(q_);
      method_ = SeriesMethod::spectral;
      return;
    }
    try {
      auto e = detail::Eigendecomposition::of(q_);
      if (e.conditioning < kMaxSpectralConditioning) {
        eig_ = std::move(e);
        method_ = SeriesMethod::spectral;
        return;
      }
    } catch (const EigenSolverFailure&) {
    }
    method_ = SeriesMethod::scaled_series;
  }

  SeriesMethod method() const { return method_; }
  bool is_spectral() const { return method_ == SeriesMethod::spectral; }
  const Matrix& q() const { return q_; }
  std::size_t order() const { return static_cast<std::size_t>(q_.rows()); }

  /// Only valid when is_spectral().
  const detail::Eigendecomposition& eigen() const { return *eig_; }

  Matrix f(double t) const { return all(t).f; }
  Matrix g(double t) const { return all(t).g; }
  Matrix h(double t) const { return all(t).h; }

  Triple all(double t) const {
    check_time(t);
    if (is_spectral()) {
      const auto n = eig_->values.size();
      ComplexVector df(n), dg(n), dh(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto tr = hyperbolic_triple(eig_->values[i], t);
        df[i] = tr.f;
        dg[i] = tr.g;
        dh[i] = tr.h;
      }
      return {eig_->from_diagonal(df), eig_->from_diagonal(dg), eig_->from_diagonal(dh)};
    }
    return scaled_series(t);
  }

 private:
  static void check_time(double t) {
    require_finite(t, "hyperbolic series");
    if (t < 0.0) throw DomainError("hyperbolic series: t must be nonnegative");
  }

  Triple scaled_series(double t) const {
    const auto m = q_.rows();
    const Matrix id = Matrix::Identity(m, m);
    if (t == 0.0) return {id, Matrix::Zero(m, m), Matrix::Zero(m, m)};

    const double norm = q_.cwiseAbs().colwise().sum().maxCoeff();
    int halvings = 0;
    double s = t;
    while (norm * s * s > 0.25) {
      s *= 0.5;
      ++halvings;
    }

    // Taylor sums at s, sharing the powers Q^k s^(2k).
    Matrix f = id, g = s * id, h = 0.5 * s * s * id;
    Matrix power = id;
    double ff = 1.0, fg = 1.0, fh = 2.0;  // (2k)!, (2k+1)!, (2k+2)!
    for (int k = 1; k < 40; ++k) {
      power = (power * q_) * (s * s);
      ff *= (2.0 * k - 1) * (2.0 * k);
      fg *= (2.0 * k) * (2.0 * k + 1);
      fh *= (2.0 * k + 1) * (2.0 * k + 2);
      const Matrix tf = power / ff;
      f += tf;
      g += power * (s / fg);
      h += power * (s * s / fh);
      if (tf.cwiseAbs().maxCoeff() <= 1e-18 * f.cwiseAbs().maxCoeff()) break;
    }

    for (int j = 0; j < halvings; ++j) {
      const Matrix f_old = f;
      h = 2.0 * h * (f_old + id);
      g = 2.0 * g * f_old;
      f = 2.0 * f_old * f_old - id;
    }
    return {f, g, h};
  }

  Matrix q_;
  SeriesMethod method_ = SeriesMethod::automatic;
  std::optional<detail::Eigendecomposition> eig_;
};

inline Matrix series_f(const Matrix& q, double t, SeriesMethod method = SeriesMethod::automatic) {
  return HyperbolicKernel(q, method).f(t);
}

inline Matrix series_g(const Matrix& q, double t, SeriesMethod method = SeriesMethod::automatic) {
  return HyperbolicKernel(q, method).g(t);
}

inline Matrix series_h(const Matrix& q, double t, SeriesMethod method = SeriesMethod::automatic) {
  return HyperbolicKernel(q, method).h(t);
}

inline SpectralInfo spectral(const Matrix& q) {
  require_square(q, "spectral");
  require_finite(q, "spectral");
  const auto e = detail::Eigendecomposition::of(q);
  SpectralInfo info;
  info.conditioning = std::max(1.0, e.conditioning);
  info.eigenvalues.reserve(e.order());
  for (Eigen::Index i = 0; i < e.values.size(); ++i) {
    Complex z = e.values[i];
    if (is_real_eigenvalue(z)) z = Complex(z.real(), 0.0);
    info.eigenvalues.push_back(z);
    if (z.imag() == 0.0 && z.real() < 0.0 &&
        (!info.min_real_negative || z.real() < *info.min_real_negative))
      info.min_real_negative = z.real();
  }
  return info;
}

/// Principal square root with every eigenvalue in the open right half-plane.
///
/// Built from the eigendecomposition; defective (ill-conditioned) inputs
/// fall back to the Denman-Beavers iteration.
inline Matrix sqrt_positive_real(const Matrix& q) {
  const SpectralInfo info = spectral(q);
  if (info.min_real_negative) {
    std::ostringstream os;
    os << "sqrt_positive_real: real negative eigenvalue " << *info.min_real_negative;
    throw RealNegativeEigenvalue(os.str(), *info.min_real_negative);
  }
  const double scale = std::max(1.0, q.cwiseAbs().maxCoeff());
  for (const auto& z : info.eigenvalues)
    if (std::abs(z) <= 1e-12 * scale) throw SingularMatrix("sqrt_positive_real: Q is singular");

  const auto e = detail::Eigendecomposition::of(q);
  if (e.conditioning < kMaxSpectralConditioning) {
    ComplexVector roots(e.values.size());
    for (Eigen::Index i = 0; i < roots.size(); ++i) roots[i] = std::sqrt(e.values[i]);
    return e.from_diagonal(roots);
  }

  // Denman-Beavers: Y -> Q^(1/2), Z -> Q^(-1/2).
  Matrix y = q;
  Matrix z = Matrix::Identity(q.rows(), q.cols());
  for (int it = 0; it < 100; ++it) {
    const Matrix y_inv = y.partialPivLu().inverse();
    const Matrix z_inv = z.partialPivLu().inverse();
    const Matrix y_next = 0.5 * (y + z_inv);
    z = 0.5 * (z + y_inv);
    const double change = (y_next - y).norm();
    y = y_next;
    if (change <= 1e-15 * y.norm()) break;
  }
  return y;
}

struct CriticalSeries {
  double r = 0.0;                 ///< Q has eigenvalue -r^2.
  std::vector<double> times;      ///< (2k+1) pi / (2r), ascending, up to a bound.
};

struct CriticalTimes {
  std::vector<CriticalSeries> entries;
  bool empty() const { return entries.empty(); }
};

inline double critical_time(double r, int k) {
  return (2.0 * k + 1.0) * std::numbers::pi / (2.0 * r);
}

/// Every critical horizon (2k+1) pi / (2r) <= bound for the real negative
/// eigenvalues of `info`.
inline CriticalTimes critical_times(const SpectralInfo& info, double bound) {
  CriticalTimes out;
  for (double lambda : info.real_negative_eigenvalues()) {
    CriticalSeries s;
    s.r = std::sqrt(-lambda);
    for (int k = 0;; ++k) {
      const double tk = critical_time(s.r, k);
      if (tk > bound) break;
      s.times.push_back(tk);
    }
    out.entries.push_back(std::move(s));
  }
  return out;
}

struct CriticalHit {
  double r = 0.0;
  int k = 0;
  double horizon = 0.0;
};

struct SingularityVerdict {
  bool critical = false;
  std::vector<CriticalHit> hits;
  /// All critical horizons up to the diagnostic bound.
  CriticalTimes horizons;
  /// 2-norm condition number of f(QT); infinite if numerically singular.
  double f_condition = 1.0;
  SpectralInfo spectrum;

  bool nonsingular() const { return !critical; }
};

inline double condition_number(const Matrix& m) {
  Eigen::BDCSVD<Matrix> svd(m);
  const auto& s = svd.singularValues();
  const double smin = s[s.size() - 1];
  if (smin == 0.0) return std::numeric_limits<double>::infinity();
  return s[0] / smin;
}

/// Decide whether f(QT) is singular: Q has eigenvalue -r^2 and T lies
/// within tol * T_k of some T_k = (2k+1) pi / (2r).
inline SingularityVerdict f_singularity(const Matrix& q, double horizon,
                                        double tol = kCriticalTimeTol,
                                        std::optional<double> bound = std::nullopt) {
  require_finite(horizon, "f_singularity");
  if (horizon <= 0.0) throw DomainError("f_singularity: horizon must be positive");
  SingularityVerdict v;
  v.spectrum = spectral(q);
  v.horizons = critical_times(v.spectrum, bound.value_or(2.0 * horizon));
  for (double lambda : v.spectrum.real_negative_eigenvalues()) {
    const double r = std::sqrt(-lambda);
    const double kreal = (horizon * 2.0 * r / std::numbers::pi - 1.0) / 2.0;
    const int k = std::max(0, static_cast<int>(std::lround(kreal)));
    const double tk = critical_time(r, k);
    if (std::abs(horizon - tk) <= tol * tk) v.hits.push_back({r, k, tk});
  }
  v.critical = !v.hits.empty();
  v.f_condition = condition_number(HyperbolicKernel(q).f(horizon));
  return v;
}

}  // namespace opdyn
