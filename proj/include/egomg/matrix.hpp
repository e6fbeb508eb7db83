#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace egomg {

/// Dense row-major matrix of doubles. Row vectors are 1 x n.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  static Matrix identity(std::size_t n);
  static Matrix row_vector(std::span<const double> values);

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  std::size_t size() const { return data.size(); }
  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
  std::string shape_string() const;

  bool operator==(const Matrix&) const = default;
};

/// C = A * B.
Matrix matmul(const Matrix& a, const Matrix& b);
/// C = A^T * B.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
/// C = A * B^T.
Matrix matmul_nt(const Matrix& a, const Matrix& b);

bool all_finite(const Matrix& m);

/// Compressed sparse row matrix. Used for the (constant) normalized adjacency.
struct CsrMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> row_ptr{0};
  std::vector<std::size_t> col_idx;
  std::vector<double> values;

  Matrix to_dense() const;
  double at(std::size_t r, std::size_t c) const;
  /// Y = this * X
  Matrix multiply(const Matrix& x) const;
  /// Y = this^T * X
  Matrix multiply_transposed(const Matrix& x) const;
  /// Builds from a dense matrix, dropping exact zeros.
  static CsrMatrix from_dense(const Matrix& m);
};

}  // namespace egomg
