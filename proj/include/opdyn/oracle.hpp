#pragma once

// Independent checks of the closed-form equilibrium:
//  * direct quadrature of each agent's cost functional,
//  * unilateral-deviation (Nash) test with a fixed perturbation family,
//  * trapezoidal collocation of the state-costate boundary-value problem.

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "opdyn/game.hpp"

namespace opdyn {

struct CostReport {
  std::size_t agent = 0;
  double value = 0.0;
  double influence = 0.0;      ///< 1/2 int sum_j (x_i - x_j)' W_ij (x_i - x_j)
  double stubbornness = 0.0;   ///< 1/2 int (x_i - b_i)' W_ii (x_i - b_i)
  double control = 0.0;        ///< 1/2 int u_i' u_i
  bool converged = true;       ///< N vs N/2 Simpson agree to 1e-6 relative
};

namespace detail {

// Composite Simpson over a uniform grid with an even number of intervals.
inline double simpson(const std::vector<double>& y, double step, std::size_t stride = 1) {
  const std::size_t intervals = (y.size() - 1) / stride;
  double s = y.front() + y[intervals * stride];
  for (std::size_t k = 1; k < intervals; ++k) s += (k % 2 ? 4.0 : 2.0) * y[k * stride];
  return s * step * static_cast<double>(stride) / 3.0;
}

inline Eigen::Index block(std::size_t agent, std::size_t d) { return static_cast<Eigen::Index>(agent * d); }

}  // namespace detail

inline constexpr std::size_t kMinCostIntervals = 64;

inline CostReport cost_quadrature(const GameSpec& spec, const TrajectorySample& traj, std::size_t agent) {
  const std::size_t intervals = traj.grid.size() - 1;
  if (traj.grid.size() < 2 || intervals < kMinCostIntervals || intervals % 4 != 0)
    throw DomainError("cost_quadrature: need at least 64 uniform intervals, a multiple of 4");
  if (agent >= spec.n) throw DomainError("cost_quadrature: agent out of range");
  const auto d = static_cast<Eigen::Index>(spec.d);
  const double step = (traj.grid.back() - traj.grid.front()) / static_cast<double>(intervals);
  const auto ri = detail::block(agent, spec.d);
  const auto nbrs = spec.neighbors(agent);

  std::vector<double> infl(traj.grid.size()), stub(traj.grid.size()), ctrl(traj.grid.size());
  for (std::size_t k = 0; k < traj.grid.size(); ++k) {
    const Vector xi = traj.states[k].segment(ri, d);
    double acc = 0.0;
    for (std::size_t j : nbrs) {
      const Vector diff = xi - traj.states[k].segment(detail::block(j, spec.d), d);
      acc += diff.dot(*spec.influence_of(agent, j) * diff);
    }
    infl[k] = 0.5 * acc;
    const Vector dev = xi - spec.biases[agent];
    stub[k] = 0.5 * dev.dot(spec.stubbornness[agent] * dev);
    const Vector ui = traj.controls[k].segment(ri, d);
    ctrl[k] = 0.5 * ui.squaredNorm();
  }
  CostReport r;
  r.agent = agent;
  r.influence = detail::simpson(infl, step);
  r.stubbornness = detail::simpson(stub, step);
  r.control = detail::simpson(ctrl, step);
  r.value = r.influence + r.stubbornness + r.control;
  const double coarse =
      detail::simpson(infl, step, 2) + detail::simpson(stub, step, 2) + detail::simpson(ctrl, step, 2);
  r.converged = std::abs(coarse - r.value) <= 1e-6 * std::max(std::abs(r.value), 1e-300) ||
                std::abs(coarse - r.value) <= 1e-14;
  return r;
}

/// Scalar deviation profile phi(t) with its exact antiderivative from 0.
struct Perturbation {
  std::string name;
  std::function<double(double)> rate;      ///< phi(t)
  std::function<double(double)> integral;  ///< int_0^t phi
};

/// Gaussian bumps centred at mT/8 (m = 1..7), a constant, and a ramp t/T;
/// each has unit peak amplitude.
inline std::vector<Perturbation> standard_perturbations(double horizon) {
  std::vector<Perturbation> out;
  const double width = horizon / 16.0;
  for (int m = 1; m <= 7; ++m) {
    const double centre = horizon * m / 8.0;
    const double lower = std::erf(-centre / width);
    out.push_back({"bump@" + std::to_string(m) + "/8",
                   [=](double t) { return std::exp(-std::pow((t - centre) / width, 2)); },
                   [=](double t) {
                     return width * std::sqrt(std::numbers::pi) / 2.0 *
                            (std::erf((t - centre) / width) - lower);
                   }});
  }
  out.push_back({"constant", [](double) { return 1.0; }, [](double t) { return t; }});
  out.push_back({"ramp", [=](double t) { return t / horizon; },
                 [=](double t) { return t * t / (2.0 * horizon); }});
  return out;
}

struct PerturbationOutcome {
  std::string name;
  std::size_t issue = 0;
  double delta_cost = 0.0;  ///< J_i(u* + delta) - J_i(u*)
};

struct PerturbationReport {
  std::size_t agent = 0;
  double epsilon = 0.0;
  double base_cost = 0.0;
  double min_delta = 0.0;
  double tolerance = 0.0;
  bool pass = false;
  std::vector<PerturbationOutcome> outcomes;
};

inline constexpr std::size_t kPerturbationIntervals = 2048;

/// Replace agent i's control by u_i* + eps phi(t) e_k (others held at their
/// equilibrium open-loop paths) and record the change in J_i. At a Nash
/// equilibrium no deviation lowers the cost.
inline PerturbationReport nash_perturbation_test(const GameSpec& spec, const NashSolution& sol,
                                                 std::size_t agent, double epsilon,
                                                 std::size_t intervals = kPerturbationIntervals) {
  if (agent >= spec.n) throw DomainError("nash_perturbation_test: agent out of range");
  if (intervals % 2 != 0 || intervals < 2) throw DomainError("nash_perturbation_test: need even intervals");
  const auto d = static_cast<Eigen::Index>(spec.d);
  const double horizon = sol.horizon();
  const double step = horizon / static_cast<double>(intervals);
  const auto ri = detail::block(agent, spec.d);
  const auto nbrs = spec.neighbors(agent);

  std::vector<double> grid(intervals + 1);
  std::vector<Vector> pull(intervals + 1);  // sum_j W_ij (x_i - x_j) + W_ii (x_i - b_i)
  std::vector<Vector> ui(intervals + 1);
  std::vector<double> base(intervals + 1);
  Matrix curvature = spec.stubbornness[agent];
  for (std::size_t j : nbrs) curvature += *spec.influence_of(agent, j);

  for (std::size_t k = 0; k <= intervals; ++k) {
    const double t = (k == intervals) ? horizon : step * static_cast<double>(k);
    grid[k] = t;
    const Vector x = sol.state_at(t);
    const Vector xi = x.segment(ri, d);
    Vector p = spec.stubbornness[agent] * (xi - spec.biases[agent]);
    double value = (xi - spec.biases[agent]).dot(p);
    for (std::size_t j : nbrs) {
      const Vector diff = xi - x.segment(detail::block(j, spec.d), d);
      const Vector wd = *spec.influence_of(agent, j) * diff;
      p += wd;
      value += diff.dot(wd);
    }
    pull[k] = p;
    ui[k] = sol.control_at(t).segment(ri, d);
    base[k] = 0.5 * (value + ui[k].squaredNorm());
  }

  PerturbationReport rep;
  rep.agent = agent;
  rep.epsilon = epsilon;
  rep.base_cost = detail::simpson(base, step);
  rep.tolerance = 1e-8 * (1.0 + rep.base_cost);
  rep.min_delta = std::numeric_limits<double>::infinity();

  std::vector<double> integrand(intervals + 1);
  for (const auto& pert : standard_perturbations(horizon)) {
    for (Eigen::Index issue = 0; issue < d; ++issue) {
      // With dx = eps Phi(t) e_k and du = eps phi(t) e_k the cost change is
      // exactly  int [dx' pull + 1/2 dx' M dx + du' u + 1/2 du' du] dt.
      for (std::size_t k = 0; k <= intervals; ++k) {
        const double dx = epsilon * pert.integral(grid[k]);
        const double du = epsilon * pert.rate(grid[k]);
        integrand[k] = dx * pull[k][issue] + 0.5 * dx * dx * curvature(issue, issue) +
                       du * ui[k][issue] + 0.5 * du * du;
      }
      const double delta = detail::simpson(integrand, step);
      rep.outcomes.push_back({pert.name, static_cast<std::size_t>(issue), delta});
      rep.min_delta = std::min(rep.min_delta, delta);
    }
  }
  rep.pass = rep.min_delta >= -rep.tolerance;
  return rep;
}

struct BVPSolution {
  std::vector<double> grid;
  std::vector<Vector> x;
  std::vector<Vector> p;
};

/// Trapezoidal collocation of x' = -p, p' = -Q x + W b, x(0) = b, p(T) = 0
/// on N uniform intervals, solved as one sparse banded system.
inline BVPSolution bvp_solve(const QAssembly& a, double horizon, std::size_t intervals) {
  if (intervals < 1) throw DomainError("bvp_solve: need at least one interval");
  if (!(horizon > 0.0)) throw DomainError("bvp_solve: horizon must be positive");
  const auto m = static_cast<Eigen::Index>(a.order());
  const auto nodes = static_cast<Eigen::Index>(intervals) + 1;
  const Eigen::Index block = 2 * m;
  const Eigen::Index size = block * nodes;
  const double h = horizon / static_cast<double>(intervals);
  const Vector wb = a.w_block * a.b;

  // y = [x; p], y' = A y + c with A = [0 -I; -Q 0], c = [0; W b].
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(size) * static_cast<std::size_t>(2 * m + 4));
  Vector rhs = Vector::Zero(size);
  // Row layout: x(0) = b, then 2m rows per interval, then p(T) = 0.
  for (Eigen::Index r = 0; r < m; ++r) {
    trip.emplace_back(r, r, 1.0);
    rhs[r] = a.b[r];
  }
  for (Eigen::Index k = 0; k < nodes - 1; ++k) {
    const Eigen::Index row = m + k * block;
    const Eigen::Index left = k * block;
    const Eigen::Index right = (k + 1) * block;
    // x_{k+1} - x_k + h/2 (p_k + p_{k+1}) = 0
    for (Eigen::Index r = 0; r < m; ++r) {
      trip.emplace_back(row + r, right + r, 1.0);
      trip.emplace_back(row + r, left + r, -1.0);
      trip.emplace_back(row + r, left + m + r, 0.5 * h);
      trip.emplace_back(row + r, right + m + r, 0.5 * h);
    }
    // p_{k+1} - p_k + h/2 Q (x_k + x_{k+1}) = h W b
    for (Eigen::Index r = 0; r < m; ++r) {
      trip.emplace_back(row + m + r, right + m + r, 1.0);
      trip.emplace_back(row + m + r, left + m + r, -1.0);
      for (Eigen::Index c = 0; c < m; ++c) {
        const double q = a.q(r, c);
        if (q == 0.0) continue;
        trip.emplace_back(row + m + r, left + c, 0.5 * h * q);
        trip.emplace_back(row + m + r, right + c, 0.5 * h * q);
      }
      rhs[row + m + r] = h * wb[r];
    }
  }
  const Eigen::Index last = m + (nodes - 1) * block;
  for (Eigen::Index r = 0; r < m; ++r) trip.emplace_back(last + r, (nodes - 1) * block + m + r, 1.0);

  Eigen::SparseMatrix<double> sys(size, size);
  sys.setFromTriplets(trip.begin(), trip.end());
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(sys);
  if (lu.info() != Eigen::Success) {
    std::ostringstream os;
    os << "bvp_solve: singular collocation system (" << lu.lastErrorMessage()
       << "); cond f(QT) ~ " << condition_number(HyperbolicKernel(a.q).f(horizon));
    throw SingularMatrix(os.str());
  }
  const Vector y = lu.solve(rhs);
  if (lu.info() != Eigen::Success || !y.allFinite()) throw SingularMatrix("bvp_solve: solve failed");

  BVPSolution out;
  out.grid.resize(static_cast<std::size_t>(nodes));
  out.x.resize(static_cast<std::size_t>(nodes));
  out.p.resize(static_cast<std::size_t>(nodes));
  for (Eigen::Index k = 0; k < nodes; ++k) {
    const auto kk = static_cast<std::size_t>(k);
    out.grid[kk] = (k == nodes - 1) ? horizon : h * static_cast<double>(k);
    out.x[kk] = y.segment(k * block, m);
    out.p[kk] = y.segment(k * block + m, m);
  }
  return out;
}

inline BVPSolution bvp_solve(const GameSpec& spec, std::size_t intervals) {
  return bvp_solve(assemble(spec), spec.horizon, intervals);
}

}  // namespace opdyn
