#pragma once

#include <Eigen/Core>
#include <cmath>
#include <deque>
#include <limits>
#include <stdexcept>
#include <vector>

namespace tminfer {

template <typename Scalar>
struct LbfgsSettings {
  int max_iters = 500;
  /// Stop once |g|_inf <= grad_tol and the quasi-Newton decrement -g.d is
  /// below decrement_tol. The decrement bounds the remaining objective gap
  /// independently of how the parameters are scaled.
  Scalar grad_tol = Scalar(1e-6);
  Scalar decrement_tol = Scalar(1e-12);
  int memory = 10;
  Scalar armijo = Scalar(1e-4);
  int max_backtracks = 60;
};

enum class LbfgsStatus { converged, max_iterations, line_search_failed };

template <typename Scalar>
struct LbfgsReport {
  LbfgsStatus status = LbfgsStatus::max_iterations;
  int iterations = 0;
  int evaluations = 0;
  Scalar value = Scalar(0);
  Scalar grad_inf = Scalar(0);
  /// Objective after each accepted iteration, starting with the initial value.
  std::vector<Scalar> trace;
};

/// Limited-memory BFGS with backtracking (Armijo) line search.
///
/// `objective(x, grad)` returns the value and fills grad. A non-finite value
/// marks x as outside the domain; the line search then shrinks the step, so
/// an objective that returns +inf across a boundary acts as a barrier.
/// x is updated in place to the best point found.
template <typename Scalar, typename Objective>
LbfgsReport<Scalar> lbfgs_minimize(Objective&& objective, Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& x,
                                   const LbfgsSettings<Scalar>& settings, bool keep_trace = false) {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  LbfgsReport<Scalar> report;

  Vector g(x.size());
  Scalar f = objective(x, g);
  ++report.evaluations;
  if (!std::isfinite(f)) throw std::invalid_argument("lbfgs: initial point outside the domain");
  if (keep_trace) report.trace.push_back(f);

  std::deque<Vector> s_hist, y_hist;
  std::deque<Scalar> rho_hist;
  std::vector<Scalar> alpha;
  Vector d(x.size()), x_new(x.size()), g_new(x.size());
  const Scalar eps = std::numeric_limits<Scalar>::epsilon();

  auto direction = [&]() {
    d = -g;
    if (s_hist.empty()) {
      // no curvature yet: unit step moves at most one unit in any coordinate
      const Scalar gmax = g.template lpNorm<Eigen::Infinity>();
      if (gmax > Scalar(1)) d /= gmax;
      return;
    }
    const std::size_t m = s_hist.size();
    alpha.assign(m, Scalar(0));
    for (std::size_t i = m; i-- > 0;) {
      alpha[i] = rho_hist[i] * s_hist[i].dot(d);
      d.noalias() -= alpha[i] * y_hist[i];
    }
    d *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
    for (std::size_t i = 0; i < m; ++i) {
      const Scalar beta = rho_hist[i] * y_hist[i].dot(d);
      d.noalias() += (alpha[i] - beta) * s_hist[i];
    }
  };

  report.status = LbfgsStatus::max_iterations;
  for (int iter = 0;; ++iter) {
    direction();
    Scalar gd = g.dot(d);
    report.grad_inf = g.template lpNorm<Eigen::Infinity>();
    if (report.grad_inf <= settings.grad_tol && -gd <= settings.decrement_tol) {
      report.status = LbfgsStatus::converged;
      break;
    }
    if (iter >= settings.max_iters) break;
    if (!(gd < 0)) {
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      direction();
      gd = g.dot(d);
      if (!(gd < 0)) {
        report.status = LbfgsStatus::line_search_failed;
        break;
      }
    }

    bool accepted = false;
    for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
      Scalar step = Scalar(1);
      for (int bt = 0; bt < settings.max_backtracks; ++bt) {
        x_new = x + step * d;
        const Scalar f_new = objective(x_new, g_new);
        ++report.evaluations;
        if (std::isfinite(f_new)) {
          const bool armijo = f_new <= f + settings.armijo * step * gd;
          // predicted decrease below round-off: accept any non-increase
          const bool flat = -step * gd <= Scalar(16) * eps * std::abs(f) && f_new <= f;
          if (armijo || flat) {
            const Vector s = x_new - x;
            const Vector y = g_new - g;
            const Scalar sy = s.dot(y);
            if (sy > eps * y.squaredNorm() && sy > 0) {
              s_hist.push_back(s);
              y_hist.push_back(y);
              rho_hist.push_back(Scalar(1) / sy);
              if (int(s_hist.size()) > settings.memory) {
                s_hist.pop_front();
                y_hist.pop_front();
                rho_hist.pop_front();
              }
            }
            x.swap(x_new);
            g.swap(g_new);
            f = f_new;
            accepted = true;
            break;
          }
        }
        step *= Scalar(0.5);
      }
      if (!accepted) {
        if (s_hist.empty()) break;
        // stale curvature pairs: restart from steepest descent once
        s_hist.clear();
        y_hist.clear();
        rho_hist.clear();
        direction();
        gd = g.dot(d);
        if (!(gd < 0)) break;
      }
    }
    if (!accepted) {
      report.status = LbfgsStatus::line_search_failed;
      break;
    }
    ++report.iterations;
    if (keep_trace) report.trace.push_back(f);
  }
  report.value = f;
  report.grad_inf = g.template lpNorm<Eigen::Infinity>();
  return report;
}

}  // namespace tminfer
