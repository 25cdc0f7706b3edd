#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <limits>
#include <numeric>
#include <vector>

namespace regbn {

/// Tunables of the limited-memory BFGS minimizer. Defaults are the ones used for the
/// per-batch multiplier search (a scalar problem in log space).
struct LbfgsConfig {
  double learning_rate = 1.0;  // scale of the trial step
  int max_iterations = 25;
  // First-order optimality: stop when max |grad| <= tolerance. The multiplier search
  // minimizes a squared residual, so 1e-5 here would leave lambda ~1% off on flat batches.
  double tolerance = 1e-8;
  int memory = 10;
  double armijo_c = 1e-4;
  int max_backtracks = 20;
  double max_step = 2.0;  // cap on max |x_new - x| per iteration

  bool valid() const noexcept {
    return learning_rate > 0.0 && max_iterations >= 1 && tolerance > 0.0 && memory >= 1 &&
           armijo_c > 0.0 && armijo_c < 1.0 && max_backtracks >= 0 && max_step > 0.0;
  }
};

struct LbfgsResult {
  std::vector<double> x;
  double value = 0.0;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
};

/// Box constraints; an empty vector means unbounded on that side.
struct Bounds {
  std::vector<double> lower;
  std::vector<double> upper;
};

namespace detail {

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

inline double max_abs(const std::vector<double>& a) {
  double m = 0.0;
  for (double v : a) m = std::max(m, std::abs(v));
  return m;
}

inline void project(std::vector<double>& x, const Bounds& b) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!b.lower.empty()) x[i] = std::max(x[i], b.lower[i]);
    if (!b.upper.empty()) x[i] = std::min(x[i], b.upper[i]);
  }
}

// Gradient with components that point out of an active bound zeroed.
inline std::vector<double> projected_gradient(const std::vector<double>& x,
                                              const std::vector<double>& g, const Bounds& b) {
  std::vector<double> pg = g;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!b.lower.empty() && x[i] <= b.lower[i] && g[i] > 0.0) pg[i] = 0.0;
    if (!b.upper.empty() && x[i] >= b.upper[i] && g[i] < 0.0) pg[i] = 0.0;
  }
  return pg;
}

}  // namespace detail

/// Minimize `fn` starting from `x0`. `fn(x, grad)` returns the value and writes the gradient.
/// Uses the two-loop recursion with a backtracking Armijo line search; iterates are projected
/// onto `bounds` when given. Never throws on a bad step: the best point seen is returned.
template <class Fn>
LbfgsResult lbfgs_minimize(Fn&& fn, std::vector<double> x0, const LbfgsConfig& cfg,
                           const Bounds& bounds = {}) {
  const std::size_t n = x0.size();
  LbfgsResult res;
  detail::project(x0, bounds);
  std::vector<double> x = std::move(x0);
  std::vector<double> g(n);
  double fx = fn(x, g);
  res.evaluations = 1;

  std::deque<std::vector<double>> s_hist, y_hist;
  std::deque<double> rho_hist;
  std::vector<double> d(n), x_new(n), g_new(n), alpha(static_cast<std::size_t>(cfg.memory));

  for (int it = 0; it < cfg.max_iterations; ++it) {
    const std::vector<double> pg = detail::projected_gradient(x, g, bounds);
    if (!std::isfinite(fx) || detail::max_abs(pg) <= cfg.tolerance) {
      res.converged = std::isfinite(fx);
      break;
    }

    // Two-loop recursion: d = -H g.
    std::vector<double> q = pg;
    const std::size_t k = s_hist.size();
    for (std::size_t j = k; j-- > 0;) {
      alpha[j] = rho_hist[j] * detail::dot(s_hist[j], q);
      for (std::size_t i = 0; i < n; ++i) q[i] -= alpha[j] * y_hist[j][i];
    }
    double h0 = 1.0;
    if (k > 0) h0 = detail::dot(s_hist.back(), y_hist.back()) / detail::dot(y_hist.back(), y_hist.back());
    for (double& v : q) v *= h0;
    for (std::size_t j = 0; j < k; ++j) {
      const double beta = rho_hist[j] * detail::dot(y_hist[j], q);
      for (std::size_t i = 0; i < n; ++i) q[i] += s_hist[j][i] * (alpha[j] - beta);
    }
    for (std::size_t i = 0; i < n; ++i) d[i] = -q[i];

    double slope = detail::dot(pg, d);
    if (!(slope < 0.0)) {  // lost descent: restart from steepest descent
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      for (std::size_t i = 0; i < n; ++i) d[i] = -pg[i];
      slope = detail::dot(pg, d);
    }

    // Without curvature pairs the direction is the raw gradient; scale it to unit length.
    double step = cfg.learning_rate;
    if (s_hist.empty()) step /= detail::max_abs(d);
    step = std::min(step, cfg.max_step / detail::max_abs(d));

    bool accepted = false;
    double f_new = fx;
    for (int bt = 0; bt <= cfg.max_backtracks; ++bt) {
      for (std::size_t i = 0; i < n; ++i) x_new[i] = x[i] + step * d[i];
      detail::project(x_new, bounds);
      f_new = fn(x_new, g_new);
      ++res.evaluations;
      if (std::isfinite(f_new) && f_new <= fx + cfg.armijo_c * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    res.iterations = it + 1;
    if (!accepted) break;

    std::vector<double> s(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = x_new[i] - x[i];
      y[i] = g_new[i] - g[i];
    }
    const double sy = detail::dot(s, y);
    x = x_new;
    g = g_new;
    const double f_prev = fx;
    fx = f_new;
    if (sy > 1e-12 * std::sqrt(detail::dot(s, s) * detail::dot(y, y))) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      rho_hist.push_back(1.0 / sy);
      if (s_hist.size() > static_cast<std::size_t>(cfg.memory)) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
    if (fx == f_prev) break;  // stalled
  }
  if (!res.converged) {
    const std::vector<double> pg = detail::projected_gradient(x, g, bounds);
    res.converged = std::isfinite(fx) && detail::max_abs(pg) <= cfg.tolerance;
  }
  res.x = std::move(x);
  res.value = fx;
  return res;
}

}  // namespace regbn
