#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "regbn/binary_io.hpp"
#include "regbn/lambda_solver.hpp"
#include "regbn/matrix.hpp"
#include "regbn/projection.hpp"
#include "regbn/svd.hpp"

namespace regbn {

enum class LambdaMode { adaptive, fixed };

/// Batch sizes below this still run but are flagged.
inline constexpr std::size_t kRecommendedMinBatch = 50;

struct RegBnConfig {
  double beta1 = 0.9;
  double beta2 = 0.99;
  std::vector<double> seeds{1.0, 100.0, 1000.0};
  double epsilon = 1e-8;
  LbfgsConfig lbfgs{};
  // Per-column standardization of f and g before the regression (batch statistics while
  // training, running statistics at inference). The residual is then in standardized units.
  bool standardize_inputs = false;
  double standardize_momentum = 0.1;
  double standardize_eps = 1e-5;
  double feature_scale = 1.0;  // multiplies standardized f
  LambdaMode lambda_mode = LambdaMode::adaptive;
  double fixed_lambda = 1.0;

  void validate() const {
    if (!(beta1 > 0.0 && beta1 < 1.0)) throw Error("RegBnConfig: beta1 must lie in (0, 1)");
    if (!(beta2 > 0.0 && beta2 < 1.0)) throw Error("RegBnConfig: beta2 must lie in (0, 1)");
    if (!(epsilon > 0.0)) throw Error("RegBnConfig: epsilon must be positive");
    if (!lbfgs.valid()) throw Error("RegBnConfig: invalid L-BFGS settings");
    if (lambda_mode == LambdaMode::fixed && !(fixed_lambda > 0.0 && std::isfinite(fixed_lambda)))
      throw Error("RegBnConfig: fixed lambda must be positive");
    if (!(standardize_momentum > 0.0 && standardize_momentum <= 1.0))
      throw Error("RegBnConfig: standardize_momentum must lie in (0, 1]");
    if (!(standardize_eps > 0.0)) throw Error("RegBnConfig: standardize_eps must be positive");
    LambdaHistory check(seeds);  // throws on bad seeds
  }
};

/// Cross-batch state of one layer. Dimensions are locked by the first training batch.
struct RegBnState {
  Matrix w;                     // g_dim × f_dim persisted projection
  double first_moment = 0.0;    // m_t, before bias correction
  double second_moment = 0.0;   // v_t, before bias correction
  std::uint64_t t = 0;          // completed training batches
  LambdaHistory history;
  std::size_t f_dim = 0;
  std::size_t g_dim = 0;
  // Running standardization statistics (empty unless standardize_inputs).
  std::vector<double> f_mean, f_var, g_mean, g_var;

  RegBnState() = default;
  explicit RegBnState(const RegBnConfig& cfg) : history(cfg.seeds) {}

  bool initialized() const noexcept { return t >= 1; }

  friend bool operator==(const RegBnState&, const RegBnState&) = default;
};

/// Everything one training step produced besides the state update.
struct RegBnTrainOutput {
  Matrix residual;      // b × f_dim
  Matrix w_hat;         // this batch's closed-form projection
  double lambda = 0.0;
  double lambda_loss = 0.0;
  double delta_w = 0.0;
  double alpha = 0.0;   // weight kept on the previous projection
  bool degenerate = false;
  bool small_batch = false;
  // Inverse standard deviations used on f (empty unless standardizing); needed to
  // backpropagate through the standardization.
  std::vector<double> f_inv_std;
  Matrix f_hat;  // standardized f (empty unless standardizing)
};

namespace detail {

inline Matrix standardize(const Matrix& x, const std::vector<double>& mean,
                          const std::vector<double>& var, double eps,
                          std::vector<double>* inv_std_out = nullptr) {
  std::vector<double> inv(x.cols());
  for (std::size_t j = 0; j < x.cols(); ++j) inv[j] = 1.0 / std::sqrt(var[j] + eps);
  Matrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto src = x.row(i);
    auto dst = out.row(i);
    for (std::size_t j = 0; j < x.cols(); ++j) dst[j] = (src[j] - mean[j]) * inv[j];
  }
  if (inv_std_out) *inv_std_out = std::move(inv);
  return out;
}

inline void blend_running(std::vector<double>& running, const std::vector<double>& batch,
                          double momentum, bool first) {
  if (first) {
    running = batch;
    return;
  }
  for (std::size_t j = 0; j < running.size(); ++j)
    running[j] = (1.0 - momentum) * running[j] + momentum * batch[j];
}

inline void check_pair(const Matrix& f, const Matrix& g, const RegBnState& s) {
  if (f.rows() != g.rows())
    throw DimensionError("regbn: f has " + std::to_string(f.rows()) + " rows, g has " +
                         std::to_string(g.rows()));
  if (s.initialized() && (f.cols() != s.f_dim || g.cols() != s.g_dim))
    throw DimensionError("regbn: feature dims " + std::to_string(f.cols()) + "/" +
                         std::to_string(g.cols()) + " differ from locked " +
                         std::to_string(s.f_dim) + "/" + std::to_string(s.g_dim));
  require_finite(f, "regbn(f)");
  require_finite(g, "regbn(g)");
}

}  // namespace detail

/// Training path: solve lambda for this batch, build the closed-form projection, emit
/// f - g·W_hat, then fold W_hat into the persisted projection with the moment-scaled mix
///   W_t = (1 - a) W_hat + a W_{t-1},  a = clamp(gamma_t * m_t / sqrt(v_t + eps), 0, 1).
/// gamma_t is the host model's current learning rate.
inline RegBnTrainOutput forward_train(RegBnState& state, const Matrix& f, const Matrix& g,
                                      double gamma_t, const RegBnConfig& cfg) {
  cfg.validate();
  detail::check_pair(f, g, state);
  if (f.rows() < 2) throw DimensionError("regbn: batch size must be at least 2");
  if (!(gamma_t > 0.0) || !std::isfinite(gamma_t))
    throw Error("regbn: learning rate gamma_t must be positive");
  if (state.history.seeds() != cfg.seeds && state.t == 0) state.history = LambdaHistory(cfg.seeds);

  RegBnTrainOutput out;
  out.small_batch = f.rows() < kRecommendedMinBatch;

  Matrix fx, gx;
  ColumnStats fs, gs;
  if (cfg.standardize_inputs) {
    fs = column_stats(f);
    gs = column_stats(g);
    fx = detail::standardize(f, fs.mean, fs.var, cfg.standardize_eps, &out.f_inv_std);
    gx = detail::standardize(g, gs.mean, gs.var, cfg.standardize_eps);
    out.f_hat = fx;
    if (cfg.feature_scale != 1.0) {
      fx = cfg.feature_scale * fx;
      for (double& v : out.f_inv_std) v *= cfg.feature_scale;
    }
  } else {
    fx = f;
    gx = g;
  }

  const ProjectionInputs in = ProjectionInputs::make(std::move(fx), std::move(gx));
  if (cfg.lambda_mode == LambdaMode::adaptive) {
    const LambdaSolution sol = solve_lambda(LambdaObjective::from(in.svd_g, in.f), state.history, cfg.lbfgs);
    out.lambda = sol.lambda;
    out.lambda_loss = sol.loss;
    out.degenerate = sol.degenerate;
  } else {
    out.lambda = cfg.fixed_lambda;
    const double r = objective_norm(LambdaObjective::from(in.svd_g, in.f), out.lambda) - 1.0;
    out.lambda_loss = r * r;
  }
  out.w_hat = project_svd(in, out.lambda);
  out.residual = residual(in, out.w_hat);
  require_finite(out.residual, "regbn: residual");

  // Moment update. The first batch seeds W_0 with its own projection, so it passes through.
  const Matrix& w_prev = state.t == 0 ? out.w_hat : state.w;
  const std::uint64_t t = state.t + 1;
  out.delta_w = mean_abs_diff(out.w_hat, w_prev);
  const double td = static_cast<double>(t);
  // Moments are kept raw and bias-corrected when forming the mixing weight. Feeding the
  // corrected values back into the recursion inflates v_t by many orders of magnitude over
  // the first few hundred batches, which pins the weight at zero.
  const double m_t = cfg.beta1 * state.first_moment + (1.0 - cfg.beta1) * out.delta_w;
  const double v_t = cfg.beta2 * state.second_moment + (1.0 - cfg.beta2) * out.delta_w * out.delta_w;
  const double m_hat = m_t / (1.0 - std::pow(cfg.beta1, td));
  const double v_hat = v_t / (1.0 - std::pow(cfg.beta2, td));
  out.alpha = std::clamp(gamma_t * m_hat / std::sqrt(v_hat + cfg.epsilon), 0.0, 1.0);

  Matrix w_new = (1.0 - out.alpha) * out.w_hat;
  axpy(out.alpha, w_prev, w_new);
  require_finite(w_new, "regbn: projection update");

  if (cfg.standardize_inputs) {
    const bool first = state.t == 0;
    detail::blend_running(state.f_mean, fs.mean, cfg.standardize_momentum, first);
    detail::blend_running(state.f_var, fs.var, cfg.standardize_momentum, first);
    detail::blend_running(state.g_mean, gs.mean, cfg.standardize_momentum, first);
    detail::blend_running(state.g_var, gs.var, cfg.standardize_momentum, first);
  }
  state.w = std::move(w_new);
  state.first_moment = m_t;
  state.second_moment = v_t;
  state.t = t;
  state.history.push(out.lambda);
  state.f_dim = f.cols();
  state.g_dim = g.cols();
  return out;
}

/// Inference path: f - g·W_t with the persisted projection. No solve, no mutation.
inline Matrix forward_eval(const RegBnState& state, const Matrix& f, const Matrix& g,
                           const RegBnConfig& cfg = {}) {
  if (!state.initialized()) throw Error("regbn: forward_eval before any training batch");
  detail::check_pair(f, g, state);
  if (cfg.standardize_inputs && !state.f_mean.empty()) {
    const Matrix fx =
        cfg.feature_scale * detail::standardize(f, state.f_mean, state.f_var, cfg.standardize_eps);
    const Matrix gx = detail::standardize(g, state.g_mean, state.g_var, cfg.standardize_eps);
    return residual(fx, gx, state.w);
  }
  return residual(f, g, state.w);
}

inline constexpr std::string_view kSnapshotMagic = "RGBN";
inline constexpr std::uint16_t kSnapshotVersion = 1;

/// Binary snapshot: magic "RGBN", u16 version, u64 f_dim, u64 g_dim, u64 t,
/// f64 m_t, f64 v_t, seeds[], history[], w (rows, cols, data), then the four
/// standardization arrays. Arrays are u64-length-prefixed little-endian f64.
inline std::string snapshot(const RegBnState& s) {
  BinaryWriter w(kSnapshotMagic, kSnapshotVersion);
  w.u64(s.f_dim);
  w.u64(s.g_dim);
  w.u64(s.t);
  w.f64(s.first_moment);
  w.f64(s.second_moment);
  w.f64s(s.history.seeds());
  w.f64s(s.history.values());
  w.matrix(s.w);
  w.f64s(s.f_mean);
  w.f64s(s.f_var);
  w.f64s(s.g_mean);
  w.f64s(s.g_var);
  return w.take();
}

inline RegBnState restore(std::string_view bytes) {
  BinaryReader r(bytes, kSnapshotMagic);
  if (r.version() != kSnapshotVersion)
    throw FormatError("restore: unsupported snapshot version " + std::to_string(r.version()));
  RegBnState s;
  s.f_dim = r.u64();
  s.g_dim = r.u64();
  s.t = r.u64();
  s.first_moment = r.f64();
  s.second_moment = r.f64();
  std::vector<double> seeds = r.f64s();
  std::vector<double> values = r.f64s();
  try {
    s.history = LambdaHistory(std::move(seeds));
    for (double v : values) s.history.push(v);
  } catch (const FormatError&) {
    throw;
  } catch (const Error& e) {
    throw FormatError(std::string("restore: ") + e.what());
  }
  s.w = r.matrix();
  s.f_mean = r.f64s();
  s.f_var = r.f64s();
  s.g_mean = r.f64s();
  s.g_var = r.f64s();
  r.expect_end();
  if (s.history.size() != s.t) throw FormatError("restore: history length does not match t");
  if (s.t >= 1 && (s.w.rows() != s.g_dim || s.w.cols() != s.f_dim))
    throw FormatError("restore: projection shape does not match dims");
  return s;
}

}  // namespace regbn
