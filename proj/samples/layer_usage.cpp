// Feeds a stream of batches whose features leak a metadata column through the layer,
// then compares how much of that column survives in the output.
#include <cmath>
#include <cstdio>

#include "regbn/regbn.hpp"

using namespace regbn;

namespace {

// |corr| between column j of a and column k of b.
double abs_corr(const Matrix& a, std::size_t j, const Matrix& b, std::size_t k) {
  const ColumnStats sa = column_stats(a), sb = column_stats(b);
  double cov = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) cov += (a(i, j) - sa.mean[j]) * (b(i, k) - sb.mean[k]);
  cov /= static_cast<double>(a.rows());
  return std::abs(cov) / std::sqrt(sa.var[j] * sb.var[k] + 1e-300);
}

}  // namespace

int main() {
  Rng rng(7);
  const std::size_t batch = 64, features = 8, meta = 3;
  RegBnConfig cfg;
  RegBnState state(cfg);

  auto make_batch = [&](Matrix& f, Matrix& g) {
    f = Matrix(batch, features);
    g = Matrix(batch, meta);
    for (std::size_t i = 0; i < batch; ++i) {
      for (std::size_t k = 0; k < meta; ++k) g(i, k) = rng.normal();
      for (std::size_t j = 0; j < features; ++j) f(i, j) = 0.8 * rng.normal() + 0.6 * g(i, 0);
    }
  };

  Matrix f, g;
  for (int step = 0; step < 200; ++step) {
    make_batch(f, g);
    const RegBnTrainOutput out = forward_train(state, f, g, 1e-3, cfg);
    if (step % 50 == 0)
      std::printf("step %3d  lambda %.4g  dW %.3g  alpha %.3g\n", step, out.lambda, out.delta_w,
                  out.alpha);
  }

  make_batch(f, g);
  const Matrix fr = forward_eval(state, f, g);
  std::printf("corr(feature 0, meta 0): before %.3f  after %.3f\n", abs_corr(f, 0, g, 0),
              abs_corr(fr, 0, g, 0));

  const RegBnState copy = restore(snapshot(state));
  std::printf("snapshot round trip: %s\n", copy == state ? "identical" : "DIFFERENT");
}
