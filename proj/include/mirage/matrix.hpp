#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <vector>

namespace mirage {

// Dense row-major matrix, 64-bit entries. All public operations keep entries
// finite; violations raise std::invalid_argument.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  double* row_ptr(std::size_t r) { return data_.data() + r * cols_; }
  const double* row_ptr(std::size_t r) const { return data_.data() + r * cols_; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool all_finite() const;
  void require_finite(const char* context) const;

  bool operator==(const Matrix& o) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Non-negative integer class ids; length is tied to the paired Matrix row
// count by the types that hold both (EmbeddingSet).
using LabelVector = std::vector<std::uint32_t>;

Matrix matmul(const Matrix& a, const Matrix& b);
double frobenius_norm(const Matrix& a);

// Subtracts each column's mean; output column means are 0 within 1e-10.
Matrix column_center(const Matrix& a);
std::vector<double> column_means(const Matrix& a);

// Rows of `a` selected by `idx`, in order.
Matrix take_rows(const Matrix& a, const std::vector<std::size_t>& idx);

// Dot product over sixteen fixed-order accumulators: deterministic, wide
// enough to vectorize, and deep enough to hide FMA latency.
inline double dot(const double* a, const double* b, std::size_t n) {
  double acc[16] = {0.0};
  std::size_t j = 0;
  for (; j + 16 <= n; j += 16)
    for (std::size_t k = 0; k < 16; ++k) acc[k] += a[j + k] * b[j + k];
  double tail = 0.0;
  for (; j < n; ++j) tail += a[j] * b[j];
  double s01 = (acc[0] + acc[1]) + (acc[2] + acc[3]);
  double s23 = (acc[4] + acc[5]) + (acc[6] + acc[7]);
  double s45 = (acc[8] + acc[9]) + (acc[10] + acc[11]);
  double s67 = (acc[12] + acc[13]) + (acc[14] + acc[15]);
  return ((s01 + s23) + (s45 + s67)) + tail;
}

}  // namespace mirage
