#include "egomg/matrix.hpp"

#include <Eigen/Core>
#include <cmath>
#include <stdexcept>

namespace egomg {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMajor> view(const Matrix& m) {
  return {m.data.data(), static_cast<Eigen::Index>(m.rows), static_cast<Eigen::Index>(m.cols)};
}

Eigen::Map<RowMajor> view(Matrix& m) {
  return {m.data.data(), static_cast<Eigen::Index>(m.rows), static_cast<Eigen::Index>(m.cols)};
}

void require(bool ok, const char* op, const Matrix& a, const Matrix& b) {
  if (!ok) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                                b.shape_string());
  }
}

}  // namespace

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::row_vector(std::span<const double> values) {
  Matrix m(1, values.size());
  std::copy(values.begin(), values.end(), m.data.begin());
  return m;
}

std::string Matrix::shape_string() const {
  return "[" + std::to_string(rows) + "x" + std::to_string(cols) + "]";
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  require(a.cols == b.rows, "matmul", a, b);
  Matrix c(a.rows, b.cols);
  if (c.size() == 0 || a.cols == 0) return c;
  view(c).noalias() = view(a) * view(b);
  return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  require(a.rows == b.rows, "matmul_tn", a, b);
  Matrix c(a.cols, b.cols);
  if (c.size() == 0 || a.rows == 0) return c;
  view(c).noalias() = view(a).transpose() * view(b);
  return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  require(a.cols == b.cols, "matmul_nt", a, b);
  Matrix c(a.rows, b.rows);
  if (c.size() == 0 || a.cols == 0) return c;
  view(c).noalias() = view(a) * view(b).transpose();
  return c;
}

bool all_finite(const Matrix& m) {
  for (double v : m.data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Matrix CsrMatrix::to_dense() const {
  Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k) m(r, col_idx[k]) = values[k];
  }
  return m;
}

double CsrMatrix::at(std::size_t r, std::size_t c) const {
  for (std::size_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k) {
    if (col_idx[k] == c) return values[k];
  }
  return 0.0;
}

Matrix CsrMatrix::multiply(const Matrix& x) const {
  if (x.rows != cols) {
    throw std::invalid_argument("sparse multiply: shape mismatch [" + std::to_string(rows) + "x" +
                                std::to_string(cols) + "] vs " + x.shape_string());
  }
  Matrix y(rows, x.cols);
  for (std::size_t r = 0; r < rows; ++r) {
    auto out = y.row(r);
    for (std::size_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k) {
      const double w = values[k];
      auto in = x.row(col_idx[k]);
      for (std::size_t j = 0; j < x.cols; ++j) out[j] += w * in[j];
    }
  }
  return y;
}

Matrix CsrMatrix::multiply_transposed(const Matrix& x) const {
  if (x.rows != rows) {
    throw std::invalid_argument("sparse multiply_transposed: shape mismatch [" +
                                std::to_string(rows) + "x" + std::to_string(cols) + "] vs " +
                                x.shape_string());
  }
  Matrix y(cols, x.cols);
  for (std::size_t r = 0; r < rows; ++r) {
    auto in = x.row(r);
    for (std::size_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k) {
      const double w = values[k];
      auto out = y.row(col_idx[k]);
      for (std::size_t j = 0; j < x.cols; ++j) out[j] += w * in[j];
    }
  }
  return y;
}

CsrMatrix CsrMatrix::from_dense(const Matrix& m) {
  CsrMatrix s;
  s.rows = m.rows;
  s.cols = m.cols;
  s.row_ptr.assign(1, 0);
  for (std::size_t r = 0; r < m.rows; ++r) {
    for (std::size_t c = 0; c < m.cols; ++c) {
      if (m(r, c) != 0.0) {
        s.col_idx.push_back(c);
        s.values.push_back(m(r, c));
      }
    }
    s.row_ptr.push_back(s.col_idx.size());
  }
  return s;
}

}  // namespace egomg
