#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace esage {

// Dense row-major matrix of doubles. Kept deliberately small: the library
// only needs products, transposed products and elementwise pieces, and the
// left operand is often sparse (bag-of-words features), so the products skip
// zero entries of A.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  double* row(std::size_t i) { return data.data() + i * cols; }
  const double* row(std::size_t i) const { return data.data() + i * cols; }

  void fill(double v) { data.assign(data.size(), v); }

  bool operator==(const Matrix&) const = default;
};

// C = A * B, skipping zero entries of A.
inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows) throw std::invalid_argument("matmul: shape mismatch");
  Matrix c(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* ar = a.row(i);
    double* cr = c.row(i);
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double v = ar[k];
      if (v == 0.0) continue;
      const double* br = b.row(k);
      for (std::size_t j = 0; j < b.cols; ++j) cr[j] += v * br[j];
    }
  }
  return c;
}

// C = A^T * B, skipping zero entries of A.
inline Matrix matmul_at_b(const Matrix& a, const Matrix& b) {
  if (a.rows != b.rows) throw std::invalid_argument("matmul_at_b: shape mismatch");
  Matrix c(a.cols, b.cols);
  for (std::size_t k = 0; k < a.rows; ++k) {
    const double* ar = a.row(k);
    const double* br = b.row(k);
    for (std::size_t i = 0; i < a.cols; ++i) {
      const double v = ar[i];
      if (v == 0.0) continue;
      double* cr = c.row(i);
      for (std::size_t j = 0; j < b.cols; ++j) cr[j] += v * br[j];
    }
  }
  return c;
}

// C = A * B^T.
inline Matrix matmul_a_bt(const Matrix& a, const Matrix& b) {
  if (a.cols != b.cols) throw std::invalid_argument("matmul_a_bt: shape mismatch");
  Matrix c(a.rows, b.rows);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* ar = a.row(i);
    double* cr = c.row(i);
    for (std::size_t j = 0; j < b.rows; ++j) {
      const double* br = b.row(j);
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols; ++k) s += ar[k] * br[k];
      cr[j] = s;
    }
  }
  return c;
}

inline void axpy(Matrix& y, double alpha, const Matrix& x) {
  if (y.rows != x.rows || y.cols != x.cols)
    throw std::invalid_argument("axpy: shape mismatch");
  for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] += alpha * x.data[i];
}

inline double sum_squares(const Matrix& m) {
  double s = 0.0;
  for (double v : m.data) s += v * v;
  return s;
}

inline bool all_finite(const Matrix& m) {
  for (double v : m.data)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace esage
