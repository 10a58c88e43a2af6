#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "clab/error.hpp"

namespace clab {

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      if (r.size() != cols_) {
        throw Error(ErrorCode::ShapeMismatch, "ragged initializer list");
      }
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  bool same_shape(const Matrix& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Sum of products with four interleaved partial sums combined in a fixed
/// order, so the result does not depend on the caller.
inline double dot(std::span<const double> a, std::span<const double> b) {
  const std::size_t n = a.size();
  double acc0 = 0.0, acc1 = 0.0, acc2 = 0.0, acc3 = 0.0;
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    acc0 += a[k] * b[k];
    acc1 += a[k + 1] * b[k + 1];
    acc2 += a[k + 2] * b[k + 2];
    acc3 += a[k + 3] * b[k + 3];
  }
  for (; k < n; ++k) acc0 += a[k] * b[k];
  return (acc0 + acc1) + (acc2 + acc3);
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline Matrix transpose(const Matrix& m) {
  Matrix t(m.cols(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) t(j, i) = m(i, j);
  return t;
}

/// Rescales every row to unit L2 norm. Throws ZeroRow naming the first
/// offending row.
inline Matrix normalize_rows(const Matrix& m) {
  Matrix out = m;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto r = out.row(i);
    const double n = norm(r);
    if (!(n > 0.0) || !std::isfinite(n)) {
      throw Error(ErrorCode::ZeroRow, "row " + std::to_string(i) + " has zero or non-finite norm", i);
    }
    for (double& v : r) v /= n;
  }
  return out;
}

/// In-place variant for a single row; used by the retraction step.
inline void normalize_in_place(std::span<double> r, std::size_t index = 0) {
  const double n = norm(r);
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw Error(ErrorCode::ZeroRow, "row " + std::to_string(index) + " has zero or non-finite norm", index);
  }
  for (double& v : r) v /= n;
}

/// Removes the component of `grad` along the unit vector `point`.
inline void project_tangent(std::span<double> grad, std::span<const double> point) {
  const double c = dot(grad, point);
  for (std::size_t k = 0; k < grad.size(); ++k) grad[k] -= c * point[k];
}

}  // namespace clab
