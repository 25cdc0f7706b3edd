#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "regbn/matrix.hpp"

namespace regbn {

class ConvergenceError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Thin SVD a = u · diag(sigma) · vt with r = min(rows, cols) triplets.
struct SvdFactors {
  Matrix u;                   // rows × r, orthonormal columns
  std::vector<double> sigma;  // r values, non-increasing, >= 0
  Matrix vt;                  // r × cols, orthonormal rows

  std::size_t rank_bound() const noexcept { return sigma.size(); }
};

struct SvdOptions {
  int max_sweeps = 60;
  // Relative off-diagonal threshold. Raised internally to sqrt(height)·eps, below which
  // rounding in the dot products would keep a sweep rotating forever.
  double tolerance = 1e-15;
};

namespace detail {

// One-sided Jacobi (Hestenes) on the columns of a tall matrix. Columns are stored as
// contiguous rows of `cols` (cols.rows() == number of columns, cols.cols() == height),
// `v` accumulates the right rotations and starts as the identity.
inline void hestenes_sweeps(Matrix& cols, Matrix& v, const SvdOptions& opt) {
  const std::size_t n = cols.rows();
  const std::size_t h = cols.cols();
  const double tol = std::max(opt.tolerance, std::sqrt(static_cast<double>(h)) *
                                                 std::numeric_limits<double>::epsilon());
  // Columns whose squared norm falls below this are rounding noise left by a rank
  // deficiency. They cannot be made orthogonal in relative terms, so they are not rotated.
  double total = 0.0;
  for (double x : cols.values()) total += x * x;
  const double negligible = total * std::pow(static_cast<double>(std::max(h, n)) *
                                                 std::numeric_limits<double>::epsilon(), 2);
  for (int sweep = 0; sweep < opt.max_sweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double* ap = cols.row(p).data();
        double* aq = cols.row(q).data();
        double alpha = 0.0, beta = 0.0, gamma = 0.0;
        for (std::size_t i = 0; i < h; ++i) {
          alpha += ap[i] * ap[i];
          beta += aq[i] * aq[i];
          gamma += ap[i] * aq[i];
        }
        if (gamma == 0.0 || std::abs(gamma) <= tol * std::sqrt(alpha * beta)) continue;
        if (std::min(alpha, beta) <= negligible) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::hypot(1.0, zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < h; ++i) {
          const double x = ap[i], y = aq[i];
          ap[i] = c * x - s * y;
          aq[i] = s * x + c * y;
        }
        double* vp = v.row(p).data();
        double* vq = v.row(q).data();
        for (std::size_t i = 0; i < n; ++i) {
          const double x = vp[i], y = vq[i];
          vp[i] = c * x - s * y;
          vq[i] = s * x + c * y;
        }
      }
    }
    if (!rotated) return;
  }
  throw ConvergenceError("thin_svd: no convergence after " + std::to_string(opt.max_sweeps) +
                         " sweeps");
}

// Fill the rows of `basis` flagged in `missing` with unit vectors orthogonal to every other
// row (Gram-Schmidt against the canonical basis).
inline void complete_orthonormal_rows(Matrix& basis, const std::vector<bool>& missing) {
  const std::size_t dim = basis.cols();
  std::vector<double> cand(dim);
  std::size_t next_axis = 0;
  for (std::size_t r = 0; r < basis.rows(); ++r) {
    if (!missing[r]) continue;
    bool placed = false;
    while (!placed && next_axis < dim) {
      std::fill(cand.begin(), cand.end(), 0.0);
      cand[next_axis++] = 1.0;
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t o = 0; o < basis.rows(); ++o) {
          if (o == r) continue;  // unfilled rows are still zero
          auto other = basis.row(o);
          const double d = std::inner_product(cand.begin(), cand.end(), other.begin(), 0.0);
          for (std::size_t i = 0; i < dim; ++i) cand[i] -= d * other[i];
        }
      }
      const double nrm = std::sqrt(std::inner_product(cand.begin(), cand.end(), cand.begin(), 0.0));
      if (nrm > 0.5) {
        auto dst = basis.row(r);
        for (std::size_t i = 0; i < dim; ++i) dst[i] = cand[i] / nrm;
        placed = true;
      }
    }
    if (!placed) throw NumericalError("thin_svd: could not complete orthonormal basis");
  }
}

// SVD of a tall (rows >= cols) matrix; returns factors with u: rows×cols.
inline SvdFactors tall_svd(const Matrix& a, const SvdOptions& opt) {
  const std::size_t h = a.rows();
  const std::size_t n = a.cols();
  Matrix cols = transpose(a);  // n × h
  Matrix v = Matrix::identity(n);
  hestenes_sweeps(cols, v, opt);

  std::vector<double> norms(n);
  for (std::size_t j = 0; j < n; ++j) {
    auto c = cols.row(j);
    norms[j] = std::sqrt(std::inner_product(c.begin(), c.end(), c.begin(), 0.0));
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return norms[x] > norms[y]; });

  // Same cut as the sweep's negligible-column test, so skipped columns become exact zeros.
  double total = 0.0;
  for (double s : norms) total += s * s;
  const double floor = std::sqrt(total) * static_cast<double>(std::max(h, n)) *
                       std::numeric_limits<double>::epsilon();

  SvdFactors out;
  out.sigma.resize(n);
  Matrix ut(n, h);  // rows are left singular vectors
  out.vt = Matrix(n, n);
  std::vector<bool> missing(n, false);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t j = order[k];
    const double s = norms[j];
    auto vsrc = v.row(j);
    std::copy(vsrc.begin(), vsrc.end(), out.vt.row(k).begin());
    if (s <= floor || s == 0.0) {
      out.sigma[k] = 0.0;
      missing[k] = true;
      continue;
    }
    out.sigma[k] = s;
    auto src = cols.row(j);
    auto dst = ut.row(k);
    for (std::size_t i = 0; i < h; ++i) dst[i] = src[i] / s;
  }
  complete_orthonormal_rows(ut, missing);

  // Sign convention: the largest-magnitude entry of each left vector is non-negative.
  for (std::size_t k = 0; k < n; ++k) {
    auto uk = ut.row(k);
    std::size_t arg = 0;
    for (std::size_t i = 1; i < h; ++i)
      if (std::abs(uk[i]) > std::abs(uk[arg])) arg = i;
    if (uk[arg] < 0.0) {
      for (double& x : uk) x = -x;
      for (double& x : out.vt.row(k)) x = -x;
    }
  }
  out.u = transpose(ut);
  return out;
}

}  // namespace detail

/// Thin SVD by one-sided Jacobi on the smaller dimension. Deterministic for a given input.
/// Throws ConvergenceError if the sweep cap is exhausted.
inline SvdFactors thin_svd(const Matrix& a, const SvdOptions& opt = {}) {
  if (a.rows() == 0 || a.cols() == 0) throw DimensionError("thin_svd: empty matrix");
  require_finite(a, "thin_svd");
  if (a.rows() >= a.cols()) return detail::tall_svd(a, opt);

  // Wide input: factor the transpose and swap roles, then re-apply the sign rule to u.
  SvdFactors t = detail::tall_svd(transpose(a), opt);
  SvdFactors out;
  out.sigma = std::move(t.sigma);
  out.u = transpose(t.vt);  // rows × r
  out.vt = transpose(t.u);  // r × cols
  const std::size_t r = out.sigma.size();
  for (std::size_t k = 0; k < r; ++k) {
    std::size_t arg = 0;
    for (std::size_t i = 1; i < out.u.rows(); ++i)
      if (std::abs(out.u(i, k)) > std::abs(out.u(arg, k))) arg = i;
    if (out.u(arg, k) < 0.0) {
      for (std::size_t i = 0; i < out.u.rows(); ++i) out.u(i, k) = -out.u(i, k);
      for (double& x : out.vt.row(k)) x = -x;
    }
  }
  return out;
}

/// u · diag(sigma) · vt
inline Matrix reconstruct(const SvdFactors& f) {
  Matrix us = f.u;
  for (std::size_t i = 0; i < us.rows(); ++i)
    for (std::size_t k = 0; k < f.sigma.size(); ++k) us(i, k) *= f.sigma[k];
  return matmul(us, f.vt);
}

}  // namespace regbn
