#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "regbn/batch_norm.hpp"
#include "regbn/binary_io.hpp"
#include "regbn/matrix.hpp"
#include "regbn/regbn_layer.hpp"
#include "regbn/rng.hpp"
#include "regbn/synthgen.hpp"

namespace regbn {

class DivergenceError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// What sits between the image encoder and the classifier head.
enum class NormSlot { none, bn, regbn };

inline std::string_view to_string(NormSlot s) {
  switch (s) {
    case NormSlot::none: return "none";
    case NormSlot::bn: return "bn";
    case NormSlot::regbn: return "regbn";
  }
  return "?";
}

struct MlpShape {
  std::size_t input = 4096;
  std::size_t hidden = 256;
  std::size_t feature = 128;
  friend bool operator==(const MlpShape&, const MlpShape&) = default;
};

/// flatten(input) -> FC(hidden, ReLU) -> FC(feature) -> [norm slot] -> FC(1) -> sigmoid
struct MlpModel {
  MlpShape shape;
  NormSlot slot = NormSlot::none;
  Matrix w1, b1;  // input×hidden, 1×hidden
  Matrix w2, b2;  // hidden×feature, 1×feature
  Matrix wh, bh;  // feature×1, 1×1
  BatchNormState bn;

  static MlpModel create(const MlpShape& shape, NormSlot slot, std::uint64_t seed) {
    MlpModel m;
    m.shape = shape;
    m.slot = slot;
    Rng rng(derive_seed(seed, 0x6d6c70));
    auto glorot = [&](std::size_t fan_in, std::size_t fan_out) {
      Matrix w(fan_in, fan_out);
      const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
      for (double& v : w.values()) v = rng.uniform(-a, a);
      return w;
    };
    m.w1 = glorot(shape.input, shape.hidden);
    m.b1 = Matrix(1, shape.hidden);
    m.w2 = glorot(shape.hidden, shape.feature);
    m.b2 = Matrix(1, shape.feature);
    m.wh = glorot(shape.feature, 1);
    m.bh = Matrix(1, 1);
    if (slot == NormSlot::bn) m.bn = BatchNormState(shape.feature);
    return m;
  }

  /// Trainable parameters in a fixed order (BN gain/bias last when present).
  std::vector<std::span<double>> parameters() {
    std::vector<std::span<double>> p{w1.values(), b1.values(), w2.values(),
                                     b2.values(), wh.values(), bh.values()};
    if (slot == NormSlot::bn) {
      p.emplace_back(bn.gain);
      p.emplace_back(bn.bias);
    }
    return p;
  }

  friend bool operator==(const MlpModel&, const MlpModel&) = default;
};

/// Gradients laid out like MlpModel::parameters().
struct MlpGrads {
  Matrix w1, b1, w2, b2, wh, bh;
  std::vector<double> bn_gain, bn_bias;

  std::vector<std::span<double>> views() {
    std::vector<std::span<double>> p{w1.values(), b1.values(), w2.values(),
                                     b2.values(), wh.values(), bh.values()};
    if (!bn_gain.empty()) {
      p.emplace_back(bn_gain);
      p.emplace_back(bn_bias);
    }
    return p;
  }
};

enum class Mode { train, eval };

/// Normalization context passed into forward(): which RegBN state to use and how.
struct RegBnContext {
  RegBnState* state = nullptr;
  const RegBnConfig* config = nullptr;
  double gamma = 1e-3;  // host learning rate handed to the layer
  // When set, the slot subtracts g·(*frozen_w) and nothing is solved or updated.
  const Matrix* frozen_w = nullptr;
};

struct ForwardCache {
  Mode mode = Mode::eval;
  Matrix x;   // input batch
  Matrix h1;  // post-ReLU hidden
  Matrix f;   // encoder features
  Matrix z;   // normalized features fed to the head
  std::vector<double> logits;
  std::vector<double> probs;
  BatchNormCache bn;
  std::vector<double> f_inv_std;  // RegBN input standardization, when enabled
  Matrix f_hat;
  std::optional<RegBnTrainOutput> regbn;  // training-step diagnostics
};

namespace detail {

inline void add_row_bias(Matrix& a, const Matrix& bias) {
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto r = a.row(i);
    for (std::size_t j = 0; j < a.cols(); ++j) r[j] += bias.data()[j];
  }
}

inline double sigmoid(double s) {
  if (s >= 0.0) return 1.0 / (1.0 + std::exp(-s));
  const double e = std::exp(s);
  return e / (1.0 + e);
}

// log(1 + e^s) without overflow.
inline double softplus(double s) { return s > 0.0 ? s + std::log1p(std::exp(-s)) : std::log1p(std::exp(s)); }

}  // namespace detail

/// Runs the network on a batch. In train mode the normalization slot uses batch statistics
/// (BN) or the RegBN training path, both of which update their state; eval mode uses
/// persisted statistics and mutates nothing.
inline ForwardCache forward(MlpModel& model, const Matrix& images, const Matrix& metadata,
                            Mode mode, const RegBnContext& ctx = {}) {
  if (images.cols() != model.shape.input)
    throw DimensionError("forward: expected " + std::to_string(model.shape.input) +
                         " inputs, got " + std::to_string(images.cols()));
  if (model.slot == NormSlot::regbn && metadata.rows() != images.rows())
    throw DimensionError("forward: metadata rows differ from image rows");

  ForwardCache c;
  c.mode = mode;
  c.x = images;
  c.h1 = matmul(images, model.w1);
  detail::add_row_bias(c.h1, model.b1);
  for (double& v : c.h1.values()) v = std::max(v, 0.0);
  c.f = matmul(c.h1, model.w2);
  detail::add_row_bias(c.f, model.b2);

  switch (model.slot) {
    case NormSlot::none:
      c.z = c.f;
      break;
    case NormSlot::bn:
      c.z = mode == Mode::train ? bn_forward_train(model.bn, c.f, &c.bn) : bn_forward_eval(model.bn, c.f);
      break;
    case NormSlot::regbn: {
      if (!ctx.state || !ctx.config) throw Error("forward: regbn slot needs a RegBN state and config");
      const RegBnConfig& cfg = *ctx.config;
      if (ctx.frozen_w) {
        if (cfg.standardize_inputs) {
          const ColumnStats fs = column_stats(c.f), gs = column_stats(metadata);
          c.f_hat = detail::standardize(c.f, fs.mean, fs.var, cfg.standardize_eps, &c.f_inv_std);
          const Matrix gx = detail::standardize(metadata, gs.mean, gs.var, cfg.standardize_eps);
          for (double& v : c.f_inv_std) v *= cfg.feature_scale;
          c.z = residual(cfg.feature_scale * c.f_hat, gx, *ctx.frozen_w);
        } else {
          c.z = residual(c.f, metadata, *ctx.frozen_w);
        }
      } else if (mode == Mode::train) {
        RegBnTrainOutput out = forward_train(*ctx.state, c.f, metadata, ctx.gamma, cfg);
        c.z = std::move(out.residual);
        c.f_inv_std = out.f_inv_std;
        c.f_hat = std::move(out.f_hat);
        out.residual = Matrix();
        out.f_hat = Matrix();
        c.regbn = std::move(out);
      } else {
        c.z = forward_eval(*ctx.state, c.f, metadata, cfg);
      }
      break;
    }
  }

  const Matrix s = matmul(c.z, model.wh);
  c.logits.resize(s.rows());
  c.probs.resize(s.rows());
  for (std::size_t i = 0; i < s.rows(); ++i) {
    c.logits[i] = s(i, 0) + model.bh(0, 0);
    c.probs[i] = detail::sigmoid(c.logits[i]);
  }
  return c;
}

/// Mean binary cross-entropy evaluated from logits.
inline double bce_loss(std::span<const double> logits, std::span<const double> labels) {
  double s = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i)
    s += detail::softplus(logits[i]) - labels[i] * logits[i];
  return s / static_cast<double>(logits.size());
}

/// Gradients of the mean BCE. The RegBN projection is a per-batch constant, so the slot
/// passes gradients straight through to the encoder (through the standardization when it
/// is enabled); metadata receives nothing.
inline MlpGrads backward(const MlpModel& model, const ForwardCache& c, std::span<const double> labels) {
  const std::size_t b = c.logits.size();
  MlpGrads g;
  Matrix ds(b, 1);
  for (std::size_t i = 0; i < b; ++i) ds(i, 0) = (c.probs[i] - labels[i]) / static_cast<double>(b);

  g.wh = matmul_tn(c.z, ds);
  g.bh = Matrix(1, 1, std::accumulate(ds.values().begin(), ds.values().end(), 0.0));
  Matrix dz = matmul_nt(ds, model.wh);  // b × feature

  Matrix df;
  switch (model.slot) {
    case NormSlot::none:
      df = std::move(dz);
      break;
    case NormSlot::bn: {
      BatchNormGrads bg = bn_backward(model.bn, c.bn, dz);
      df = std::move(bg.dx);
      g.bn_gain = std::move(bg.d_gain);
      g.bn_bias = std::move(bg.d_bias);
      break;
    }
    case NormSlot::regbn:
      df = c.f_inv_std.empty() ? std::move(dz) : standardize_backward(dz, c.f_hat, c.f_inv_std);
      break;
  }

  g.w2 = matmul_tn(c.h1, df);
  g.b2 = Matrix(1, df.cols());
  for (std::size_t i = 0; i < df.rows(); ++i)
    for (std::size_t j = 0; j < df.cols(); ++j) g.b2(0, j) += df(i, j);

  Matrix dh = matmul_nt(df, model.w2);
  for (std::size_t k = 0; k < dh.size(); ++k)
    if (c.h1.data()[k] <= 0.0) dh.data()[k] = 0.0;
  g.w1 = matmul_tn(c.x, dh);
  g.b1 = Matrix(1, dh.cols());
  for (std::size_t i = 0; i < dh.rows(); ++i)
    for (std::size_t j = 0; j < dh.cols(); ++j) g.b1(0, j) += dh(i, j);
  return g;
}

enum class OptimizerKind { sgd, adam };
enum class LrSchedule { exponential, cosine };

struct TrainConfig {
  std::size_t batch_size = 50;
  std::size_t epochs = 30;
  double learning_rate = 1e-3;
  LrSchedule schedule = LrSchedule::exponential;
  double lr_decay = 1.0;  // exponential schedule: multiplicative, applied after every epoch
  OptimizerKind optimizer = OptimizerKind::adam;
  std::uint64_t rng_seed = 0;

  void validate() const {
    if (batch_size < 2) throw Error("TrainConfig: batch_size must be at least 2");
    if (learning_rate < 0.0 || !std::isfinite(learning_rate))
      throw Error("TrainConfig: learning_rate must be finite and non-negative");
    if (!(lr_decay > 0.0)) throw Error("TrainConfig: lr_decay must be positive");
  }

  /// Learning rate for epoch e (0-based). Cosine: lr · ½(1 + cos(π e / epochs)).
  double lr_at(std::size_t e) const {
    if (schedule == LrSchedule::cosine) {
      if (epochs == 0) return learning_rate;
      const double x = static_cast<double>(e) / static_cast<double>(epochs);
      return learning_rate * 0.5 * (1.0 + std::cos(std::numbers::pi * x));
    }
    return learning_rate * std::pow(lr_decay, static_cast<double>(e));
  }
};

/// SGD or Adam over a flat list of parameter views.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, std::vector<std::span<double>> params) : kind_(kind) {
    if (kind_ == OptimizerKind::adam)
      for (auto p : params) {
        m_.emplace_back(p.size(), 0.0);
        v_.emplace_back(p.size(), 0.0);
      }
  }

  void step(std::vector<std::span<double>> params, std::vector<std::span<double>> grads, double lr) {
    if (params.size() != grads.size()) throw Error("Optimizer: parameter/gradient count mismatch");
    if (kind_ == OptimizerKind::sgd) {
      for (std::size_t k = 0; k < params.size(); ++k)
        for (std::size_t i = 0; i < params[k].size(); ++i) params[k][i] -= lr * grads[k][i];
      return;
    }
    ++t_;
    const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < params[k].size(); ++i) {
        const double gi = grads[k][i];
        m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * gi;
        v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * gi * gi;
        params[k][i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + kEps);
      }
    }
  }

 private:
  static constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  OptimizerKind kind_;
  std::uint64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

struct EpochTrace {
  std::vector<double> losses;   // one per batch
  std::vector<double> lambdas;  // RegBN slot only
  std::vector<double> delta_w;  // RegBN slot only
  bool small_batch = false;
};

/// One pass over `split` in a seeded random order. Throws DivergenceError on a non-finite
/// loss or parameter.
inline EpochTrace train_epoch(MlpModel& model, Optimizer& opt, const SynthSplit& split,
                              const TrainConfig& cfg, std::size_t epoch, double lr,
                              RegBnState* regbn_state = nullptr, const RegBnConfig* regbn_cfg = nullptr) {
  cfg.validate();
  std::vector<std::size_t> order(split.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(cfg.rng_seed, 0x65706f6368, epoch));
  rng.shuffle(order.begin(), order.end());

  EpochTrace trace;
  std::vector<double> labels;
  for (std::size_t start = 0; start + 2 <= order.size(); start += cfg.batch_size) {
    const std::size_t count = std::min(cfg.batch_size, order.size() - start);
    if (count < 2) break;
    const std::span<const std::size_t> idx(order.data() + start, count);
    const Matrix x = gather_rows(split.images, idx);
    const Matrix meta = gather_rows(split.metadata, idx);
    labels.resize(count);
    for (std::size_t i = 0; i < count; ++i) labels[i] = split.labels[idx[i]];

    // The layer takes the host learning rate; a zero rate (frozen run) still needs a
    // positive value there, and with lr == 0 nothing downstream changes anyway.
    RegBnContext ctx{regbn_state, regbn_cfg, lr > 0.0 ? lr : 1e-12, nullptr};
    ForwardCache c = forward(model, x, meta, Mode::train, ctx);
    const double loss = bce_loss(c.logits, labels);
    if (!std::isfinite(loss))
      throw DivergenceError("train_epoch: non-finite loss at epoch " + std::to_string(epoch) +
                            ", batch " + std::to_string(start / cfg.batch_size));
    trace.losses.push_back(loss);
    if (c.regbn) {
      trace.lambdas.push_back(c.regbn->lambda);
      trace.delta_w.push_back(c.regbn->delta_w);
      trace.small_batch = trace.small_batch || c.regbn->small_batch;
    }
    MlpGrads g = backward(model, c, labels);
    opt.step(model.parameters(), g.views(), lr);
  }
  for (auto p : model.parameters())
    for (double v : p)
      if (!std::isfinite(v)) throw DivergenceError("train_epoch: parameters became non-finite");
  return trace;
}

struct EvalMetrics {
  double accuracy = 0.0;
  double loss = 0.0;
};

/// Accuracy at the 0.5 threshold and mean BCE, in eval mode.
inline EvalMetrics evaluate(MlpModel& model, const SynthSplit& split, RegBnState* regbn_state = nullptr,
                            const RegBnConfig* regbn_cfg = nullptr, std::size_t chunk = 500) {
  EvalMetrics m;
  if (split.size() == 0) return m;
  std::size_t correct = 0;
  double loss_sum = 0.0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < split.size(); start += chunk) {
    const std::size_t count = std::min(chunk, split.size() - start);
    idx.resize(count);
    std::iota(idx.begin(), idx.end(), start);
    const Matrix x = gather_rows(split.images, idx);
    const Matrix meta = gather_rows(split.metadata, idx);
    const ForwardCache c = forward(model, x, meta, Mode::eval, RegBnContext{regbn_state, regbn_cfg});
    for (std::size_t i = 0; i < count; ++i) {
      const double y = split.labels[start + i];
      if ((c.probs[i] >= 0.5 ? 1.0 : 0.0) == y) ++correct;
      loss_sum += detail::softplus(c.logits[i]) - y * c.logits[i];
    }
  }
  m.accuracy = static_cast<double>(correct) / static_cast<double>(split.size());
  m.loss = loss_sum / static_cast<double>(split.size());
  return m;
}

/// Fraction of predictions (prob >= 0.5 -> 1) that match the labels.
inline double accuracy(std::span<const double> probs, std::span<const double> labels) {
  if (probs.empty()) return 0.0;
  std::size_t ok = 0;
  for (std::size_t i = 0; i < probs.size(); ++i)
    if ((probs[i] >= 0.5 ? 1.0 : 0.0) == labels[i]) ++ok;
  return static_cast<double>(ok) / static_cast<double>(probs.size());
}

inline constexpr std::string_view kModelMagic = "RGMD";
inline constexpr std::uint16_t kModelVersion = 1;

inline std::string encode_model(const MlpModel& m) {
  BinaryWriter w(kModelMagic, kModelVersion);
  w.u64(m.shape.input);
  w.u64(m.shape.hidden);
  w.u64(m.shape.feature);
  w.u8(static_cast<std::uint8_t>(m.slot));
  for (const Matrix* p : {&m.w1, &m.b1, &m.w2, &m.b2, &m.wh, &m.bh}) w.matrix(*p);
  w.f64s(m.bn.running_mean);
  w.f64s(m.bn.running_var);
  w.f64s(m.bn.gain);
  w.f64s(m.bn.bias);
  w.f64(m.bn.momentum);
  w.f64(m.bn.eps);
  w.u64(m.bn.batches);
  return w.take();
}

inline MlpModel decode_model(std::string_view bytes) {
  BinaryReader r(bytes, kModelMagic);
  if (r.version() != kModelVersion) throw FormatError("decode_model: unsupported version");
  MlpModel m;
  m.shape.input = r.u64();
  m.shape.hidden = r.u64();
  m.shape.feature = r.u64();
  const auto slot = r.u8();
  if (slot > static_cast<std::uint8_t>(NormSlot::regbn)) throw FormatError("decode_model: bad slot");
  m.slot = static_cast<NormSlot>(slot);
  for (Matrix* p : {&m.w1, &m.b1, &m.w2, &m.b2, &m.wh, &m.bh}) *p = r.matrix();
  m.bn.running_mean = r.f64s();
  m.bn.running_var = r.f64s();
  m.bn.gain = r.f64s();
  m.bn.bias = r.f64s();
  m.bn.momentum = r.f64();
  m.bn.eps = r.f64();
  m.bn.batches = r.u64();
  r.expect_end();
  const MlpShape& s = m.shape;
  if (m.w1.rows() != s.input || m.w1.cols() != s.hidden || m.w2.rows() != s.hidden ||
      m.w2.cols() != s.feature || m.wh.rows() != s.feature)
    throw FormatError("decode_model: parameter shapes do not match the header");
  return m;
}

}  // namespace regbn
