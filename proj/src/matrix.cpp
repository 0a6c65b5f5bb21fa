#include "mirage/matrix.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace mirage {

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m;
  m.rows_ = rows.size();
  m.cols_ = rows.size() ? rows.begin()->size() : 0;
  m.data_.reserve(m.rows_ * m.cols_);
  for (const auto& r : rows) {
    if (r.size() != m.cols_) throw std::invalid_argument("from_rows: ragged initializer");
    m.data_.insert(m.data_.end(), r.begin(), r.end());
  }
  m.require_finite("from_rows");
  return m;
}

bool Matrix::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

void Matrix::require_finite(const char* context) const {
  if (!all_finite())
    throw std::invalid_argument(std::string(context) + ": non-finite matrix entry");
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows())
    throw std::invalid_argument("matmul: dimension mismatch (" + std::to_string(a.cols()) +
                                " vs " + std::to_string(b.rows()) + ")");
  Matrix c(a.rows(), b.cols(), 0.0);
  // i-k-j order: the inner loop runs over contiguous rows of b and c.
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* arow = a.row_ptr(i);
    double* crow = c.row_ptr(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = arow[k];
      const double* brow = b.row_ptr(k);
      for (std::size_t j = 0; j < b.cols(); ++j) crow[j] += aik * brow[j];
    }
  }
  c.require_finite("matmul");
  return c;
}

double frobenius_norm(const Matrix& a) {
  double s = 0.0;
  for (double v : a.data()) s += v * v;
  const double n = std::sqrt(s);
  if (!std::isfinite(n)) throw std::invalid_argument("frobenius_norm: non-finite result");
  return n;
}

std::vector<double> column_means(const Matrix& a) {
  std::vector<double> mean(a.cols(), 0.0);
  if (a.rows() == 0) return mean;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* row = a.row_ptr(i);
    for (std::size_t j = 0; j < a.cols(); ++j) mean[j] += row[j];
  }
  for (double& m : mean) m /= static_cast<double>(a.rows());
  return mean;
}

Matrix column_center(const Matrix& a) {
  if (a.rows() < 1) throw std::invalid_argument("column_center: empty matrix");
  const std::vector<double> mean = column_means(a);
  Matrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* src = a.row_ptr(i);
    double* dst = out.row_ptr(i);
    for (std::size_t j = 0; j < a.cols(); ++j) dst[j] = src[j] - mean[j];
  }
  out.require_finite("column_center");
  return out;
}

Matrix take_rows(const Matrix& a, const std::vector<std::size_t>& idx) {
  Matrix out(idx.size(), a.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= a.rows()) throw std::invalid_argument("take_rows: index out of range");
    const double* src = a.row_ptr(idx[i]);
    double* dst = out.row_ptr(i);
    for (std::size_t j = 0; j < a.cols(); ++j) dst[j] = src[j];
  }
  return out;
}

}  // namespace mirage
