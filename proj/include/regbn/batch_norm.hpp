#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "regbn/matrix.hpp"

namespace regbn {

/// Conventional per-feature batch normalization with a learned gain and bias.
/// In-batch variance is biased (divide by b); running variance is updated with the
/// unbiased estimate.
struct BatchNormState {
  std::vector<double> running_mean;
  std::vector<double> running_var;
  std::vector<double> gain;
  std::vector<double> bias;
  double momentum = 0.1;
  double eps = 1e-5;
  std::uint64_t batches = 0;

  BatchNormState() = default;
  explicit BatchNormState(std::size_t features, double momentum_ = 0.1, double eps_ = 1e-5)
      : running_mean(features, 0.0),
        running_var(features, 1.0),
        gain(features, 1.0),
        bias(features, 0.0),
        momentum(momentum_),
        eps(eps_) {}

  std::size_t features() const noexcept { return gain.size(); }
  friend bool operator==(const BatchNormState&, const BatchNormState&) = default;
};

/// Values kept from the training forward pass for backpropagation.
struct BatchNormCache {
  Matrix x_hat;                 // standardized input, before the affine map
  std::vector<double> inv_std;  // 1 / sqrt(var + eps)
};

inline Matrix bn_forward_train(BatchNormState& st, const Matrix& x, BatchNormCache* cache = nullptr) {
  if (x.rows() < 2) throw DimensionError("bn_forward_train: need at least 2 rows");
  if (x.cols() != st.features())
    throw DimensionError("bn_forward_train: expected " + std::to_string(st.features()) +
                         " features, got " + std::to_string(x.cols()));
  const ColumnStats cs = column_stats(x);
  const std::size_t b = x.rows(), n = x.cols();
  BatchNormCache local;
  BatchNormCache& c = cache ? *cache : local;
  c.inv_std.resize(n);
  for (std::size_t j = 0; j < n; ++j) c.inv_std[j] = 1.0 / std::sqrt(cs.var[j] + st.eps);
  c.x_hat = Matrix(b, n);
  Matrix y(b, n);
  for (std::size_t i = 0; i < b; ++i) {
    auto xr = x.row(i);
    auto hr = c.x_hat.row(i);
    auto yr = y.row(i);
    for (std::size_t j = 0; j < n; ++j) {
      hr[j] = (xr[j] - cs.mean[j]) * c.inv_std[j];
      yr[j] = st.gain[j] * hr[j] + st.bias[j];
    }
  }
  const double unbias = static_cast<double>(b) / static_cast<double>(b - 1);
  for (std::size_t j = 0; j < n; ++j) {
    st.running_mean[j] = (1.0 - st.momentum) * st.running_mean[j] + st.momentum * cs.mean[j];
    st.running_var[j] = (1.0 - st.momentum) * st.running_var[j] + st.momentum * cs.var[j] * unbias;
  }
  ++st.batches;
  return y;
}

inline Matrix bn_forward_eval(const BatchNormState& st, const Matrix& x) {
  if (st.batches == 0) throw Error("bn_forward_eval: state has not seen a training batch");
  if (x.cols() != st.features()) throw DimensionError("bn_forward_eval: feature count mismatch");
  Matrix y(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto xr = x.row(i);
    auto yr = y.row(i);
    for (std::size_t j = 0; j < x.cols(); ++j)
      yr[j] = st.gain[j] * (xr[j] - st.running_mean[j]) / std::sqrt(st.running_var[j] + st.eps) +
              st.bias[j];
  }
  return y;
}

/// Gradient of the batch-standardization x -> x_hat, given dL/dx_hat.
inline Matrix standardize_backward(const Matrix& d_xhat, const Matrix& x_hat,
                                   const std::vector<double>& inv_std) {
  const std::size_t b = d_xhat.rows(), n = d_xhat.cols();
  std::vector<double> sum_d(n, 0.0), sum_dx(n, 0.0);
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      sum_d[j] += d_xhat(i, j);
      sum_dx[j] += d_xhat(i, j) * x_hat(i, j);
    }
  const double inv_b = 1.0 / static_cast<double>(b);
  Matrix dx(b, n);
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < n; ++j)
      dx(i, j) = inv_std[j] * (d_xhat(i, j) - inv_b * sum_d[j] - x_hat(i, j) * inv_b * sum_dx[j]);
  return dx;
}

struct BatchNormGrads {
  Matrix dx;
  std::vector<double> d_gain;
  std::vector<double> d_bias;
};

inline BatchNormGrads bn_backward(const BatchNormState& st, const BatchNormCache& c, const Matrix& dy) {
  const std::size_t b = dy.rows(), n = dy.cols();
  BatchNormGrads g{Matrix(), std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
  Matrix d_xhat(b, n);
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      g.d_bias[j] += dy(i, j);
      g.d_gain[j] += dy(i, j) * c.x_hat(i, j);
      d_xhat(i, j) = dy(i, j) * st.gain[j];
    }
  g.dx = standardize_backward(d_xhat, c.x_hat, c.inv_std);
  return g;
}

}  // namespace regbn
