#pragma once

// Sequential least-squares quadratic programming under box constraints.
//
// Each iteration linearises the residual vector r(x) and solves the
// bound-constrained quadratic subproblem
//
//     min_d  |r + J d|^2     s.t.  lower - x <= d <= upper - x
//
// with a primal active-set method, then backtracks along d until the Armijo
// condition holds. Every iterate is feasible, so the returned point satisfies
// the bounds exactly.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace dexretarget {

struct SolverSettings {
  double step_tolerance = 1e-6;
  double objective_tolerance = 1e-6;
  int max_iterations = 100;
};

struct BoxSqpResult {
  Eigen::VectorXd x;
  double cost = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Strictly convex QP  min 0.5 d'Hd + g'd  s.t. lo <= d <= hi, with lo <= 0 <= hi.
inline Eigen::VectorXd solve_box_qp(const Eigen::MatrixXd& hessian, const Eigen::VectorXd& g,
                                    const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  const Eigen::Index n = g.size();
  enum class State { free, at_lower, at_upper };
  std::vector<State> state(static_cast<std::size_t>(n), State::free);
  Eigen::VectorXd d = Eigen::VectorXd::Zero(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    if (lo[k] == hi[k]) state[static_cast<std::size_t>(k)] = State::at_lower;
  }

  const int max_passes = static_cast<int>(10 * n + 10);
  for (int pass = 0; pass < max_passes; ++pass) {
    std::vector<Eigen::Index> free_idx;
    for (Eigen::Index k = 0; k < n; ++k) {
      if (state[static_cast<std::size_t>(k)] == State::free) free_idx.push_back(k);
    }
    const auto nf = static_cast<Eigen::Index>(free_idx.size());

    Eigen::VectorXd candidate = d;
    if (nf > 0) {
      Eigen::MatrixXd h_ff(nf, nf);
      Eigen::VectorXd rhs(nf);
      for (Eigen::Index a = 0; a < nf; ++a) {
        double fixed_part = 0.0;
        for (Eigen::Index k = 0; k < n; ++k) {
          if (state[static_cast<std::size_t>(k)] != State::free) fixed_part += hessian(free_idx[a], k) * d[k];
        }
        rhs[a] = -(g[free_idx[a]] + fixed_part);
        for (Eigen::Index b = 0; b < nf; ++b) h_ff(a, b) = hessian(free_idx[a], free_idx[b]);
      }
      const Eigen::VectorXd sol = h_ff.ldlt().solve(rhs);
      for (Eigen::Index a = 0; a < nf; ++a) candidate[free_idx[a]] = sol[a];
    }

    // Longest feasible fraction of the move towards the free-space minimiser.
    double t = 1.0;
    Eigen::Index blocking = -1;
    for (Eigen::Index k : free_idx) {
      const double step = candidate[k] - d[k];
      if (step < 0.0 && candidate[k] < lo[k]) {
        const double tk = (lo[k] - d[k]) / step;
        if (tk < t) {
          t = tk;
          blocking = k;
        }
      } else if (step > 0.0 && candidate[k] > hi[k]) {
        const double tk = (hi[k] - d[k]) / step;
        if (tk < t) {
          t = tk;
          blocking = k;
        }
      }
    }

    if (blocking >= 0) {
      t = std::max(t, 0.0);
      for (Eigen::Index k : free_idx) d[k] += t * (candidate[k] - d[k]);
      const bool lower = candidate[blocking] < lo[blocking];
      d[blocking] = lower ? lo[blocking] : hi[blocking];
      state[static_cast<std::size_t>(blocking)] = lower ? State::at_lower : State::at_upper;
      continue;
    }

    d = candidate;
    // Multipliers of the active bounds; release the worst violator, if any.
    const Eigen::VectorXd grad = hessian * d + g;
    Eigen::Index release = -1;
    double worst = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) {
      const State s = state[static_cast<std::size_t>(k)];
      if (lo[k] == hi[k]) continue;
      double violation = 0.0;
      if (s == State::at_lower) violation = -grad[k];
      if (s == State::at_upper) violation = grad[k];
      if (violation > worst) {
        worst = violation;
        release = k;
      }
    }
    if (release < 0) break;
    state[static_cast<std::size_t>(release)] = State::free;
  }
  return d.cwiseMax(lo).cwiseMin(hi);
}

/// Minimises |r(x)|^2 over the box [lower, upper], starting from clamp(x0).
///
/// `residual(x, r, J)` fills the residual vector and its Jacobian (J may be
/// null when only r is needed).
template <typename ResidualFn>
BoxSqpResult minimize_box_least_squares(ResidualFn&& residual, const Eigen::VectorXd& x0,
                                        const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                                        const SolverSettings& settings = {}) {
  BoxSqpResult out;
  Eigen::VectorXd x = x0.cwiseMax(lower).cwiseMin(upper);
  Eigen::VectorXd r;
  Eigen::MatrixXd jac;
  residual(x, r, &jac);
  double f = r.squaredNorm();

  Eigen::VectorXd r_trial;
  for (int it = 1; it <= settings.max_iterations; ++it) {
    out.iterations = it;
    const Eigen::VectorXd g = jac.transpose() * r;
    Eigen::MatrixXd hessian = jac.transpose() * jac;
    const double diag_max = hessian.rows() > 0 ? hessian.diagonal().maxCoeff() : 0.0;
    const double reg = diag_max > 0.0 ? 1e-10 * diag_max : std::numeric_limits<double>::min();
    hessian.diagonal().array() += reg;

    const Eigen::VectorXd d = solve_box_qp(hessian, g, lower - x, upper - x);
    const double slope = g.dot(d);
    if (d.lpNorm<Eigen::Infinity>() == 0.0 || !(slope < 0.0)) {
      out.converged = true;
      break;
    }

    double alpha = 1.0;
    double f_trial = f;
    Eigen::VectorXd x_trial;
    bool accepted = false;
    while (alpha > 1e-12) {
      x_trial = (x + alpha * d).cwiseMax(lower).cwiseMin(upper);
      residual(x_trial, r_trial, nullptr);
      f_trial = r_trial.squaredNorm();
      if (f_trial <= f + 2e-4 * alpha * slope) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      // No descent left at machine precision along a descent direction.
      out.converged = true;
      break;
    }

    const double step = (x_trial - x).lpNorm<Eigen::Infinity>();
    const double decrease = f - f_trial;
    x = x_trial;
    f = f_trial;
    residual(x, r, &jac);
    if (step < settings.step_tolerance || decrease <= settings.objective_tolerance * f) {
      out.converged = true;
      break;
    }
  }
  out.x = x;
  out.cost = f;
  return out;
}

}  // namespace dexretarget
