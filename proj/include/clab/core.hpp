#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "clab/error.hpp"
#include "clab/matrix.hpp"

namespace clab {

using Labels = std::vector<std::uint32_t>;

inline constexpr double kUnitNormTolerance = 1e-9;
inline constexpr double kSimilarityBoundSlack = 1e-9;

namespace detail {

inline void require_unit_rows(const Matrix& m, std::string_view what) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const double n = norm(m.row(i));
    if (!(std::abs(n - 1.0) <= kUnitNormTolerance)) {
      throw Error(ErrorCode::NotUnitNorm,
                  std::string(what) + " row " + std::to_string(i) + " has norm " + std::to_string(n), i);
    }
  }
}

}  // namespace detail

/// Two aligned views of the same N instances on the unit hypersphere.
/// Row i of `anchors` and row i of `keys` form the positive pair.
class FeatureBatch {
 public:
  FeatureBatch(Matrix anchors, Matrix keys, std::optional<Labels> labels = std::nullopt)
      : anchors_(std::move(anchors)), keys_(std::move(keys)), labels_(std::move(labels)) {
    if (!anchors_.same_shape(keys_)) {
      throw Error(ErrorCode::ShapeMismatch, "anchors and keys differ in shape");
    }
    if (anchors_.rows() < 2) {
      throw Error(ErrorCode::DegenerateBatch, "a batch needs at least two instances");
    }
    if (labels_ && labels_->size() != anchors_.rows()) {
      throw Error(ErrorCode::ShapeMismatch, "label count does not match batch size");
    }
    detail::require_unit_rows(anchors_, "anchor");
    detail::require_unit_rows(keys_, "key");
  }

  std::size_t size() const noexcept { return anchors_.rows(); }
  std::size_t dim() const noexcept { return anchors_.cols(); }
  const Matrix& anchors() const noexcept { return anchors_; }
  const Matrix& keys() const noexcept { return keys_; }
  const std::optional<Labels>& labels() const noexcept { return labels_; }

 private:
  Matrix anchors_;
  Matrix keys_;
  std::optional<Labels> labels_;
};

/// N x N matrix of anchor/key dot products; the diagonal holds positives.
class SimilarityMatrix {
 public:
  explicit SimilarityMatrix(Matrix values) : values_(std::move(values)) {
    if (values_.rows() != values_.cols()) {
      throw Error(ErrorCode::ShapeMismatch, "similarity matrix must be square");
    }
    if (values_.rows() < 2) {
      throw Error(ErrorCode::DegenerateBatch, "similarity matrix needs N >= 2");
    }
    for (double v : values_.values()) {
      if (!(std::abs(v) <= 1.0 + kSimilarityBoundSlack)) {
        throw Error(ErrorCode::InvalidConfig, "similarity " + std::to_string(v) + " outside [-1, 1]");
      }
    }
  }

  std::size_t size() const noexcept { return values_.rows(); }
  double operator()(std::size_t i, std::size_t j) const { return values_(i, j); }
  std::span<const double> row(std::size_t i) const { return values_.row(i); }
  const Matrix& values() const noexcept { return values_; }

 private:
  Matrix values_;
};

inline SimilarityMatrix similarity_matrix(const Matrix& anchors, const Matrix& keys) {
  if (!anchors.same_shape(keys)) {
    throw Error(ErrorCode::ShapeMismatch, "anchors and keys differ in shape");
  }
  const std::size_t n = anchors.rows();
  Matrix s(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) s(i, j) = dot(anchors.row(i), keys.row(j));
  return SimilarityMatrix(std::move(s));
}

inline SimilarityMatrix similarity_matrix(const FeatureBatch& batch) {
  return similarity_matrix(batch.anchors(), batch.keys());
}

enum class Variant { Contrastive, Simple, Hard, HardSimple, TripletLimit, TaylorLimit };

inline std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::Contrastive: return "contrastive";
    case Variant::Simple: return "simple";
    case Variant::Hard: return "hard";
    case Variant::HardSimple: return "hard-simple";
    case Variant::TripletLimit: return "triplet-limit";
    case Variant::TaylorLimit: return "taylor-limit";
  }
  return "unknown";
}

inline std::optional<Variant> parse_variant(std::string_view name) {
  for (Variant v : {Variant::Contrastive, Variant::Simple, Variant::Hard, Variant::HardSimple,
                    Variant::TripletLimit, Variant::TaylorLimit}) {
    if (name == to_string(v)) return v;
  }
  return std::nullopt;
}

inline bool uses_temperature(Variant v) {
  return v != Variant::Simple && v != Variant::HardSimple;
}

inline bool uses_alpha(Variant v) { return v == Variant::Hard || v == Variant::HardSimple; }

inline bool uses_lambda(Variant v) { return v == Variant::Simple || v == Variant::HardSimple; }

inline void check_temperature(double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw Error(ErrorCode::InvalidTemperature, "tau must be a positive finite number, got " + std::to_string(tau));
  }
}

inline void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) {
    throw Error(ErrorCode::InvalidAlpha, "alpha must lie in (0, 1], got " + std::to_string(alpha));
  }
}

inline void check_lambda(double lambda) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw Error(ErrorCode::InvalidLambda, "lambda must be non-negative, got " + std::to_string(lambda));
  }
}

struct LossConfig {
  Variant variant = Variant::Contrastive;
  double tau = 0.2;
  double alpha = 0.0819;
  /// Unset means 1 / (number of negatives in the sum), resolved per batch.
  std::optional<double> lambda;

  void validate() const {
    check_temperature(tau);
    check_alpha(alpha);
    if (lambda) check_lambda(*lambda);
  }
};

}  // namespace clab
