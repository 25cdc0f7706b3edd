#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "regbn/matrix.hpp"

// Reference implementations for the unit tests. Kept deliberately naive and independent of
// the library's kernels.
namespace testing_support {

using regbn::Matrix;

inline Matrix random_matrix(std::mt19937_64& gen, std::size_t r, std::size_t c, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  Matrix m(r, c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) m(i, j) = d(gen);
  return m;
}

inline std::size_t uniform_size(std::mt19937_64& gen, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(gen);
}

inline Matrix naive_matmul(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      long double s = 0.0L;
      for (std::size_t k = 0; k < a.cols(); ++k) s += static_cast<long double>(a(i, k)) * b(k, j);
      c(i, j) = static_cast<double>(s);
    }
  return c;
}

inline Matrix naive_transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) m = std::max(m, std::abs(a(i, j) - b(i, j)));
  return m;
}

inline double fro(const Matrix& a) {
  long double s = 0.0L;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) s += static_cast<long double>(a(i, j)) * a(i, j);
  return static_cast<double>(std::sqrt(s));
}

/// Gauss-Jordan solve of a·x = b in long double with full pivoting.
inline Matrix solve(const Matrix& a, const Matrix& b) {
  const std::size_t n = a.rows(), k = b.cols();
  std::vector<std::vector<long double>> m(n, std::vector<long double>(n + k));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) m[i][j] = a(i, j);
    for (std::size_t j = 0; j < k; ++j) m[i][n + j] = b(i, j);
  }
  std::vector<std::size_t> col(n);
  for (std::size_t i = 0; i < n; ++i) col[i] = i;
  for (std::size_t p = 0; p < n; ++p) {
    std::size_t br = p, bc = p;
    for (std::size_t i = p; i < n; ++i)
      for (std::size_t j = p; j < n; ++j)
        if (std::abs(m[i][j]) > std::abs(m[br][bc])) br = i, bc = j;
    std::swap(m[p], m[br]);
    if (bc != p) {
      for (auto& row : m) std::swap(row[p], row[bc]);
      std::swap(col[p], col[bc]);
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (i == p) continue;
      const long double f = m[i][p] / m[p][p];
      for (std::size_t j = p; j < n + k; ++j) m[i][j] -= f * m[p][j];
    }
  }
  Matrix x(n, k);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) x(col[i], j) = static_cast<double>(m[i][n + j] / m[i][i]);
  return x;
}

/// (gᵀg + λI)⁻¹ gᵀ f via the normal equations.
inline Matrix ridge(const Matrix& f, const Matrix& g, double lambda) {
  const Matrix gt = naive_transpose(g);
  Matrix a = naive_matmul(gt, g);
  for (std::size_t i = 0; i < a.rows(); ++i) a(i, i) += lambda;
  return solve(a, naive_matmul(gt, f));
}

/// Eigenvalues of a symmetric matrix by cyclic two-sided Jacobi, ascending.
inline std::vector<double> sym_eigenvalues(Matrix a) {
  const std::size_t n = a.rows();
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off < 1e-30) break;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        if (a(p, q) == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
      }
  }
  std::vector<double> ev(n);
  for (std::size_t i = 0; i < n; ++i) ev[i] = a(i, i);
  std::sort(ev.begin(), ev.end());
  return ev;
}

}  // namespace testing_support
