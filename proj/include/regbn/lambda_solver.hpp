#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "regbn/lbfgs.hpp"
#include "regbn/matrix.hpp"
#include "regbn/svd.hpp"

namespace regbn {

inline constexpr double kLambdaMin = 1e-8;
inline constexpr double kLambdaMax = 1e12;

/// Spectral summary of one batch from which the norm of the ridge weights can be evaluated
/// for any multiplier without touching the full matrices:
///   ||W(lambda)||_F^2 = sum_i (sigma_i / (sigma_i^2 + lambda))^2 * ||u_i^T f||^2
struct LambdaObjective {
  std::vector<double> sigma;
  std::vector<double> uf_norms;

  /// Build from the SVD of g and the features f (same row count as g).
  static LambdaObjective from(const SvdFactors& svd_g, const Matrix& f) {
    if (svd_g.u.rows() != f.rows())
      throw DimensionError("LambdaObjective: f has " + std::to_string(f.rows()) +
                           " rows, svd expects " + std::to_string(svd_g.u.rows()));
    LambdaObjective obj;
    obj.sigma = svd_g.sigma;
    const Matrix utf = matmul_tn(svd_g.u, f);  // r × n
    obj.uf_norms.resize(utf.rows());
    for (std::size_t i = 0; i < utf.rows(); ++i) {
      double s = 0.0;
      for (double v : utf.row(i)) s += v * v;
      obj.uf_norms[i] = std::sqrt(s);
    }
    return obj;
  }

  /// True when the norm is identically zero for every multiplier.
  bool degenerate() const noexcept {
    for (std::size_t i = 0; i < sigma.size(); ++i)
      if (sigma[i] > 0.0 && uf_norms[i] > 0.0) return false;
    return true;
  }
};

/// ||W(lambda)||_F, non-increasing in lambda.
inline double objective_norm(const LambdaObjective& obj, double lambda) {
  double s = 0.0;
  for (std::size_t i = 0; i < obj.sigma.size(); ++i) {
    const double sg = obj.sigma[i];
    if (sg == 0.0) continue;
    const double w = sg / (sg * sg + lambda) * obj.uf_norms[i];
    s += w * w;
  }
  return std::sqrt(s);
}

/// Solver loss (||W(lambda)||_F - 1)^2.
inline double objective_loss(const LambdaObjective& obj, double lambda) {
  const double r = objective_norm(obj, lambda) - 1.0;
  return r * r;
}

/// d/dlambda of the solver loss, analytic.
inline double objective_gradient(const LambdaObjective& obj, double lambda) {
  double sq = 0.0;
  double dsq = 0.0;  // d(norm^2)/dlambda
  for (std::size_t i = 0; i < obj.sigma.size(); ++i) {
    const double sg = obj.sigma[i];
    if (sg == 0.0) continue;
    const double s2 = sg * sg;
    const double c2 = obj.uf_norms[i] * obj.uf_norms[i];
    const double den = s2 + lambda;
    sq += s2 * c2 / (den * den);
    dsq += -2.0 * s2 * c2 / (den * den * den);
  }
  if (sq == 0.0) return 0.0;
  const double norm = std::sqrt(sq);
  return (norm - 1.0) * dsq / norm;
}

/// Fixed seed set plus the growing record of accepted multipliers.
class LambdaHistory {
 public:
  LambdaHistory() : LambdaHistory(std::vector<double>{1.0, 100.0, 1000.0}) {}
  explicit LambdaHistory(std::vector<double> seeds) : seeds_(std::move(seeds)) {
    if (seeds_.empty()) throw Error("LambdaHistory: seed set is empty");
    for (double s : seeds_)
      if (!(s > 0.0) || !std::isfinite(s))
        throw Error("LambdaHistory: seeds must be positive and finite");
  }

  const std::vector<double>& seeds() const noexcept { return seeds_; }
  const std::vector<double>& values() const noexcept { return values_; }
  std::size_t size() const noexcept { return values_.size(); }

  /// Median of accepted values; an even count averages the middle pair.
  std::optional<double> median() const {
    if (values_.empty()) return std::nullopt;
    std::vector<double> v = values_;
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    const double upper = v[mid];
    if (v.size() % 2 == 1) return upper;
    const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lower + upper);
  }

  /// Starting points for the next batch: the seeds, then the median when one exists.
  std::vector<double> candidates() const {
    std::vector<double> c = seeds_;
    if (auto m = median()) c.push_back(*m);
    return c;
  }

  void push(double lambda) {
    if (!(lambda > 0.0) || !std::isfinite(lambda))
      throw Error("LambdaHistory: multiplier must be positive and finite, got " +
                  std::to_string(lambda));
    values_.push_back(lambda);
  }

  friend bool operator==(const LambdaHistory&, const LambdaHistory&) = default;

 private:
  std::vector<double> seeds_;
  std::vector<double> values_;
};

inline LambdaHistory update_history(LambdaHistory history, double lambda_hat) {
  history.push(lambda_hat);
  return history;
}

struct LambdaSolution {
  double lambda = 1.0;
  double loss = 0.0;
  bool degenerate = false;  // norm identically zero; lambda is a placeholder
  bool bracketed = false;   // a root of ||W|| = 1 exists inside [kLambdaMin, kLambdaMax]
};

/// One descent from `seed`, optimizing theta = log(lambda) within the admissible range.
inline LambdaSolution descend_from_seed(const LambdaObjective& obj, double seed,
                                        const LbfgsConfig& cfg) {
  const double lo = std::log(kLambdaMin), hi = std::log(kLambdaMax);
  auto fn = [&](const std::vector<double>& theta, std::vector<double>& grad) {
    const double lambda = std::exp(theta[0]);
    grad[0] = objective_gradient(obj, lambda) * lambda;
    return objective_loss(obj, lambda);
  };
  const double start = std::clamp(std::log(seed), lo, hi);
  const LbfgsResult r = lbfgs_minimize(fn, {start}, cfg, Bounds{{lo}, {hi}});
  LambdaSolution s;
  s.lambda = std::clamp(std::exp(r.x[0]), kLambdaMin, kLambdaMax);
  s.loss = objective_loss(obj, s.lambda);
  s.bracketed = objective_norm(obj, kLambdaMin) > 1.0 && objective_norm(obj, kLambdaMax) < 1.0;
  return s;
}

/// Pick the multiplier for one batch: one descent per candidate seed, keep the lowest loss
/// (ties go to the smaller multiplier). When no root lies in range the loss is monotone
/// and the nearer end of the range is returned directly.
inline LambdaSolution solve_lambda(const LambdaObjective& obj, const LambdaHistory& history,
                                   const LbfgsConfig& cfg) {
  if (!cfg.valid()) throw Error("solve_lambda: invalid L-BFGS configuration");
  LambdaSolution best;
  if (obj.degenerate()) {
    best.lambda = history.median().value_or(1.0);
    best.loss = 1.0;
    best.degenerate = true;
    return best;
  }
  const double n_min = objective_norm(obj, kLambdaMin);
  if (n_min <= 1.0) {
    best.lambda = kLambdaMin;
    best.loss = (n_min - 1.0) * (n_min - 1.0);
    return best;
  }
  const double n_max = objective_norm(obj, kLambdaMax);
  if (n_max >= 1.0) {
    best.lambda = kLambdaMax;
    best.loss = (n_max - 1.0) * (n_max - 1.0);
    return best;
  }
  bool first = true;
  for (double seed : history.candidates()) {
    const LambdaSolution s = descend_from_seed(obj, seed, cfg);
    if (first || s.loss < best.loss || (s.loss == best.loss && s.lambda < best.lambda)) best = s;
    first = false;
  }
  best.bracketed = true;
  return best;
}

}  // namespace regbn
