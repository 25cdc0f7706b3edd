#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "regbn/lambda_solver.hpp"
#include "regbn/matrix.hpp"
#include "regbn/nn.hpp"
#include "regbn/projection.hpp"
#include "regbn/regbn_layer.hpp"
#include "regbn/rng.hpp"
#include "regbn/svd.hpp"

// Randomized oracle and property checks shared by the `verify` command and the
// acceptance suite. Each check reports its worst observed error.

namespace regbn::verify {

struct CheckResult {
  std::string name;
  bool passed = false;
  double worst = 0.0;     // worst error seen
  double tolerance = 0.0;
  std::size_t cases = 0;
  std::string detail;
};

inline Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c, double scale = 1.0) {
  Matrix m(r, c);
  for (double& v : m.values()) v = scale * rng.normal();
  return m;
}

inline std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(rng.below(hi - lo + 1));
}

inline double log_uniform(Rng& rng, double lo, double hi) {
  return std::exp(rng.uniform(std::log(lo), std::log(hi)));
}

/// Solves a·x = b (a square) by Gaussian elimination with partial pivoting.
inline Matrix dense_solve(Matrix a, Matrix b) {
  const std::size_t n = a.rows();
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t p = k;
    for (std::size_t i = k + 1; i < n; ++i)
      if (std::abs(a(i, k)) > std::abs(a(p, k))) p = i;
    if (a(p, k) == 0.0) throw NumericalError("dense_solve: singular system");
    if (p != k) {
      for (std::size_t j = 0; j < n; ++j) std::swap(a(k, j), a(p, j));
      for (std::size_t j = 0; j < b.cols(); ++j) std::swap(b(k, j), b(p, j));
    }
    for (std::size_t i = k + 1; i < n; ++i) {
      const double f = a(i, k) / a(k, k);
      if (f == 0.0) continue;
      for (std::size_t j = k; j < n; ++j) a(i, j) -= f * a(k, j);
      for (std::size_t j = 0; j < b.cols(); ++j) b(i, j) -= f * b(k, j);
    }
  }
  Matrix x(n, b.cols());
  for (std::size_t c = 0; c < b.cols(); ++c)
    for (std::size_t i = n; i-- > 0;) {
      double s = b(i, c);
      for (std::size_t j = i + 1; j < n; ++j) s -= a(i, j) * x(j, c);
      x(i, c) = s / a(i, i);
    }
  return x;
}

/// (gᵀg + λI)⁻¹ gᵀf by direct solve.
inline Matrix ridge_oracle(const Matrix& f, const Matrix& g, double lambda) {
  Matrix a = matmul_tn(g, g);
  for (std::size_t i = 0; i < a.rows(); ++i) a(i, i) += lambda;
  return dense_solve(std::move(a), matmul_tn(g, f));
}

/// Root of objective_norm(λ) = 1 by bisection in log λ over [kLambdaMin, kLambdaMax].
inline double bisect_unit_norm(const LambdaObjective& obj) {
  double lo = std::log(kLambdaMin), hi = std::log(kLambdaMax);
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (objective_norm(obj, std::exp(mid)) > 1.0) lo = mid;
    else hi = mid;
  }
  return std::exp(0.5 * (lo + hi));
}

inline CheckResult closed_form_equivalence(std::size_t instances, std::uint64_t seed) {
  CheckResult r{"closed-form equivalence (svd vs dense solve)", true, 0.0, 1e-8, instances, ""};
  Rng rng(derive_seed(seed, 1));
  for (std::size_t k = 0; k < instances; ++k) {
    const std::size_t b = pick(rng, 4, 64), m = pick(rng, 2, 32), n = pick(rng, 2, 32);
    const double lambda = log_uniform(rng, 1e-4, 1e4);
    const Matrix f = random_matrix(rng, b, n), g = random_matrix(rng, b, m);
    const Matrix w = project_svd(ProjectionInputs::make(f, g), lambda);
    const Matrix ref = ridge_oracle(f, g, lambda);
    const double err = frobenius_norm(w - ref) / std::max(frobenius_norm(ref), 1e-300);
    r.worst = std::max(r.worst, err);
  }
  r.passed = r.worst <= r.tolerance;
  return r;
}

/// Instances are scaled so the unconstrained norm exceeds one; both the residual norm and
/// the agreement with bisection are checked. `worst` reports the larger of the two.
inline CheckResult norm_attainment(std::size_t instances, std::uint64_t seed) {
  CheckResult r{"norm-constraint attainment", true, 0.0, 1e-3, 0, ""};
  Rng rng(derive_seed(seed, 2));
  double worst_norm = 0.0, worst_lambda = 0.0;
  while (r.cases < instances) {
    const std::size_t b = pick(rng, 4, 64), m = pick(rng, 2, 32), n = pick(rng, 2, 32);
    const Matrix g = random_matrix(rng, b, m);
    const Matrix f = random_matrix(rng, b, n, log_uniform(rng, 0.1, 100.0));
    const LambdaObjective obj = LambdaObjective::from(thin_svd(g), f);
    if (!(objective_norm(obj, kLambdaMin) > 1.0)) continue;
    ++r.cases;
    LambdaHistory hist;
    if (rng.coin()) hist.push(log_uniform(rng, 1e-3, 1e5));
    const LambdaSolution sol = solve_lambda(obj, hist, LbfgsConfig{});
    const double root = bisect_unit_norm(obj);
    worst_norm = std::max(worst_norm, std::abs(objective_norm(obj, sol.lambda) - 1.0));
    worst_lambda = std::max(worst_lambda, std::abs(sol.lambda - root) / root);
  }
  r.worst = std::max(worst_norm, worst_lambda);
  r.passed = worst_norm <= 1e-3 && worst_lambda <= 1e-3;
  r.detail = "max |norm-1| = " + std::to_string(worst_norm) +
             ", max rel lambda err = " + std::to_string(worst_lambda);
  return r;
}

/// gᵀ(f − g·w) accumulated in long double, so cancellation in the residual does not
/// swamp the comparison at small λ.
inline Matrix normal_residual_ld(const Matrix& f, const Matrix& g, const Matrix& w) {
  const std::size_t b = f.rows(), m = g.cols(), n = f.cols();
  std::vector<long double> res(b * n);
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      long double s = f(i, j);
      for (std::size_t k = 0; k < m; ++k) s -= static_cast<long double>(g(i, k)) * w(k, j);
      res[i * n + j] = s;
    }
  Matrix out(m, n);
  for (std::size_t k = 0; k < m; ++k)
    for (std::size_t j = 0; j < n; ++j) {
      long double s = 0.0L;
      for (std::size_t i = 0; i < b; ++i) s += static_cast<long double>(g(i, k)) * res[i * n + j];
      out(k, j) = static_cast<double>(s);
    }
  return out;
}

inline CheckResult ridge_identity(std::size_t instances, std::uint64_t seed) {
  CheckResult r{"ridge residual identity", true, 0.0, 1e-8, instances, ""};
  Rng rng(derive_seed(seed, 3));
  for (std::size_t k = 0; k < instances; ++k) {
    const std::size_t b = pick(rng, 4, 64), m = pick(rng, 2, 32), n = pick(rng, 2, 32);
    const double lambda = log_uniform(rng, 1e-4, 1e4);
    const Matrix f = random_matrix(rng, b, n), g = random_matrix(rng, b, m);
    const Matrix w = project_svd(ProjectionInputs::make(f, g), lambda);
    const Matrix lhs = normal_residual_ld(f, g, w);
    const Matrix rhs = lambda * w;
    r.worst = std::max(r.worst, frobenius_norm(lhs - rhs) / std::max(frobenius_norm(rhs), 1e-300));
  }
  r.passed = r.worst <= r.tolerance;
  return r;
}

inline CheckResult lambda_gradient(std::size_t instances, std::uint64_t seed) {
  CheckResult r{"lambda-objective gradient vs central differences", true, 0.0, 1e-5, instances * 3, ""};
  Rng rng(derive_seed(seed, 4));
  for (std::size_t k = 0; k < instances; ++k) {
    const std::size_t b = pick(rng, 4, 64), m = pick(rng, 2, 32), n = pick(rng, 2, 32);
    const Matrix g = random_matrix(rng, b, m);
    const Matrix f = random_matrix(rng, b, n, log_uniform(rng, 0.1, 10.0));
    const LambdaObjective obj = LambdaObjective::from(thin_svd(g), f);
    for (double lambda : {1e-3, 1.0, 1e3}) {
      const double h = 1e-6 * std::max(lambda, 1.0);
      const double fd = (objective_loss(obj, lambda + h) - objective_loss(obj, lambda - h)) / (2.0 * h);
      const double an = objective_gradient(obj, lambda);
      r.worst = std::max(r.worst, std::abs(an - fd) / std::max(std::abs(fd), 1e-300));
    }
  }
  r.passed = r.worst <= r.tolerance;
  return r;
}

/// Central-difference check of every parameter gradient on small random batches, for each
/// normalization slot. Ŵ is held fixed in the regbn slot, as in training.
inline CheckResult backprop(std::uint64_t seed, double h = 1e-5) {
  CheckResult r{"backprop vs finite differences", true, 0.0, 1e-4, 0, ""};
  const MlpShape shape{12, 9, 7};
  const std::size_t b = 8, meta_cols = 5;
  for (NormSlot slot : {NormSlot::none, NormSlot::bn, NormSlot::regbn}) {
    for (int standardize = 0; standardize < (slot == NormSlot::regbn ? 2 : 1); ++standardize) {
      Rng rng(derive_seed(seed, 5, static_cast<std::uint64_t>(slot) * 2 + standardize));
      MlpModel model = MlpModel::create(shape, slot, derive_seed(seed, 6));
      const Matrix x = random_matrix(rng, b, shape.input);
      const Matrix meta = random_matrix(rng, b, meta_cols);
      std::vector<double> labels(b);
      for (double& y : labels) y = rng.coin() ? 1.0 : 0.0;
      RegBnConfig cfg;
      cfg.standardize_inputs = standardize != 0;
      cfg.feature_scale = standardize ? 0.3 : 1.0;
      RegBnState state(cfg);
      const Matrix w = random_matrix(rng, meta_cols, shape.feature, 0.3);
      RegBnContext ctx{&state, &cfg, 1e-3, &w};

      auto loss_at = [&] { return bce_loss(forward(model, x, meta, Mode::train, ctx).logits, labels); };
      const ForwardCache c = forward(model, x, meta, Mode::train, ctx);
      MlpGrads grads = backward(model, c, labels);
      auto params = model.parameters();
      auto gviews = grads.views();
      for (std::size_t p = 0; p < params.size(); ++p)
        for (std::size_t i = 0; i < params[p].size(); ++i) {
          const double keep = params[p][i];
          params[p][i] = keep + h;
          const double up = loss_at();
          params[p][i] = keep - h;
          const double down = loss_at();
          params[p][i] = keep;
          const double fd = (up - down) / (2.0 * h);
          const double an = gviews[p][i];
          // Relative error with a floor well below any gradient that matters here.
          r.worst = std::max(r.worst, std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-6}));
          ++r.cases;
        }
    }
  }
  r.passed = r.worst <= r.tolerance;
  return r;
}

/// First batch passes Ŵ through unchanged, and a stream repeating one batch keeps
/// W_t within 1e-10 of that batch's Ŵ.
inline CheckResult ema_trivia(std::uint64_t seed) {
  CheckResult r{"EMA pass-through and stationary convergence", true, 0.0, 1e-10, 3, ""};
  Rng rng(derive_seed(seed, 7));
  const Matrix f = random_matrix(rng, 60, 10), g = random_matrix(rng, 60, 4);
  RegBnConfig cfg;
  RegBnState state(cfg);
  const RegBnTrainOutput first = forward_train(state, f, g, 1e-3, cfg);
  const bool pass_through = state.w == first.w_hat;
  double worst = 0.0;
  for (int rep = 0; rep < 2; ++rep) {
    const RegBnTrainOutput out = forward_train(state, f, g, 1e-3, cfg);
    worst = std::max(worst, frobenius_norm(state.w - out.w_hat));
  }
  r.worst = worst;
  r.passed = pass_through && worst <= r.tolerance;
  r.detail = pass_through ? "first batch W1 == W_hat" : "first batch W1 differs from W_hat";
  return r;
}

}  // namespace regbn::verify
