#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "regbn/matrix.hpp"
#include "regbn/svd.hpp"

namespace regbn {

/// One batch of paired features: f (b×n) is regressed on g (b×m).
struct ProjectionInputs {
  Matrix f;
  Matrix g;
  SvdFactors svd_g;

  static ProjectionInputs make(Matrix f, Matrix g) {
    if (f.rows() != g.rows())
      throw DimensionError("ProjectionInputs: f has " + std::to_string(f.rows()) +
                           " rows but g has " + std::to_string(g.rows()));
    if (f.rows() < 2)
      throw DimensionError("ProjectionInputs: a batch needs at least 2 rows");
    if (f.cols() == 0 || g.cols() == 0) throw DimensionError("ProjectionInputs: empty feature set");
    require_finite(f, "ProjectionInputs(f)");
    require_finite(g, "ProjectionInputs(g)");
    SvdFactors svd = thin_svd(g);
    return ProjectionInputs{std::move(f), std::move(g), std::move(svd)};
  }

  std::size_t batch() const noexcept { return f.rows(); }
  std::size_t f_dim() const noexcept { return f.cols(); }
  std::size_t g_dim() const noexcept { return g.cols(); }
};

namespace detail {

inline void require_positive_lambda(double lambda, const char* what) {
  if (!(lambda > 0.0) || !std::isfinite(lambda))
    throw Error(std::string(what) + ": lambda must be positive and finite");
}

}  // namespace detail

/// Ridge weights W = (gᵀg + λI)⁻¹ gᵀ f (m×n) in matrix form: V · diag(σ/(σ²+λ)) · (Uᵀ f).
inline Matrix project_direct(const ProjectionInputs& in, double lambda) {
  detail::require_positive_lambda(lambda, "project_direct");
  const SvdFactors& s = in.svd_g;
  Matrix utf = matmul_tn(s.u, in.f);  // r × n
  for (std::size_t i = 0; i < utf.rows(); ++i) {
    const double sg = s.sigma[i];
    const double scale = sg == 0.0 ? 0.0 : sg / (sg * sg + lambda);
    for (double& v : utf.row(i)) v *= scale;
  }
  return matmul_tn(s.vt, utf);  // (r×m)ᵀ (r×n)
}

/// Same weights accumulated as a sum of rank-one terms
///   W = Σ_i σ_i/(σ_i²+λ) · v_i (u_iᵀ f),
/// skipping directions with σ_i = 0.
inline Matrix project_svd(const ProjectionInputs& in, double lambda) {
  detail::require_positive_lambda(lambda, "project_svd");
  const SvdFactors& s = in.svd_g;
  const std::size_t b = in.batch(), m = in.g_dim(), n = in.f_dim();
  Matrix w(m, n);
  std::vector<double> uf(n);
  for (std::size_t i = 0; i < s.sigma.size(); ++i) {
    const double sg = s.sigma[i];
    if (sg == 0.0) continue;
    const double coef = sg / (sg * sg + lambda);
    std::fill(uf.begin(), uf.end(), 0.0);
    for (std::size_t r = 0; r < b; ++r) {
      const double ur = s.u(r, i);
      auto fr = in.f.row(r);
      for (std::size_t c = 0; c < n; ++c) uf[c] += ur * fr[c];
    }
    auto vi = s.vt.row(i);
    for (std::size_t a = 0; a < m; ++a) {
      const double va = coef * vi[a];
      auto wa = w.row(a);
      for (std::size_t c = 0; c < n; ++c) wa[c] += va * uf[c];
    }
  }
  return w;
}

/// f - g·w, the part of f not explained linearly by g. Same shape as f.
inline Matrix residual(const Matrix& f, const Matrix& g, const Matrix& w) {
  if (w.rows() != g.cols() || w.cols() != f.cols())
    throw DimensionError("residual: weights are " + shape_string(w) + ", expected " +
                         std::to_string(g.cols()) + "x" + std::to_string(f.cols()));
  if (f.rows() != g.rows()) throw DimensionError("residual: f and g row counts differ");
  return f - matmul(g, w);
}

inline Matrix residual(const ProjectionInputs& in, const Matrix& w) {
  return residual(in.f, in.g, w);
}

}  // namespace regbn
