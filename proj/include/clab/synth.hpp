#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "clab/core.hpp"
#include "clab/random.hpp"

namespace clab {

inline constexpr int kMaxRejectionIterations = 1000;

/// Concentration meaning "no augmentation": views are exact copies.
inline constexpr double kNoAugmentation = std::numeric_limits<double>::infinity();

namespace detail {

inline void uniform_direction(Rng& rng, std::span<double> out) {
  for (;;) {
    for (double& v : out) v = rng.normal();
    const double n = norm(out);
    if (n > 1e-12) {
      for (double& v : out) v /= n;
      return;
    }
  }
}

/// Uniform unit vector orthogonal to the unit vector `mu`.
inline void orthogonal_direction(Rng& rng, std::span<const double> mu, std::span<double> out) {
  for (;;) {
    for (double& v : out) v = rng.normal();
    project_tangent(out, mu);
    const double n = norm(out);
    if (n > 1e-12) {
      for (double& v : out) v /= n;
      return;
    }
  }
}

/// Draws the cosine w = mu . x for a vMF sample (Wood's rejection scheme).
/// Returns w together with 1 - w, which is computed without cancellation.
inline std::pair<double, double> sample_vmf_cosine(Rng& rng, double kappa, std::size_t dim) {
  const double m1 = static_cast<double>(dim) - 1.0;
  const double b = m1 / (2.0 * kappa + std::sqrt(4.0 * kappa * kappa + m1 * m1));
  const double x0 = (1.0 - b) / (1.0 + b);
  const double c = kappa * x0 + m1 * std::log(1.0 - x0 * x0);
  for (int iter = 0; iter < kMaxRejectionIterations; ++iter) {
    const double z = rng.beta(0.5 * m1, 0.5 * m1);
    const double denom = 1.0 - (1.0 - b) * z;
    const double w = (1.0 - (1.0 + b) * z) / denom;
    const double one_minus_w = 2.0 * b * z / denom;
    const double u = rng.uniform_open();
    if (kappa * w + m1 * std::log(1.0 - x0 * w) - c >= std::log(u)) return {w, one_minus_w};
  }
  throw Error(ErrorCode::SamplerStall, "vMF rejection sampler exceeded iteration cap");
}

inline void sample_vmf_into(Rng& rng, std::span<const double> mu, double kappa, std::span<double> out) {
  if (kappa == kNoAugmentation) {
    std::copy(mu.begin(), mu.end(), out.begin());
    return;
  }
  if (kappa == 0.0) {
    uniform_direction(rng, out);
    return;
  }
  const auto [w, one_minus_w] = sample_vmf_cosine(rng, kappa, mu.size());
  orthogonal_direction(rng, mu, out);
  const double radial = std::sqrt(std::max(0.0, one_minus_w * (1.0 + w)));
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = w * mu[k] + radial * out[k];
  normalize_in_place(out);
}

inline void check_kappa(double kappa) {
  if (!(kappa >= 0.0)) {
    throw Error(ErrorCode::InvalidConfig, "concentration must be non-negative, got " + std::to_string(kappa));
  }
}

}  // namespace detail

/// n draws from the von Mises-Fisher distribution vMF(mu, kappa).
/// kappa = 0 is the uniform distribution; kappa = +inf returns copies of mu.
inline Matrix sample_vmf(std::span<const double> mu, double kappa, std::size_t n, std::uint64_t seed) {
  if (mu.size() < 2 || !(std::abs(norm(mu) - 1.0) <= kUnitNormTolerance)) {
    throw Error(ErrorCode::InvalidDirection, "mean direction must be a unit vector of dimension >= 2");
  }
  detail::check_kappa(kappa);
  Rng rng(seed);
  Matrix out(n, mu.size());
  for (std::size_t i = 0; i < n; ++i) detail::sample_vmf_into(rng, mu, kappa, out.row(i));
  return out;
}

struct SynthConfig {
  std::size_t dim = 32;
  std::size_t num_classes = 10;
  std::size_t points_per_class = 500;
  double kappa_class = 20.0;
  double kappa_aug = 40.0;
  std::uint64_t seed = 0;

  std::size_t total() const noexcept { return num_classes * points_per_class; }

  void validate() const {
    if (dim < 2) throw Error(ErrorCode::InvalidConfig, "dim must be >= 2");
    if (num_classes == 0 || points_per_class == 0 || total() < 2) {
      throw Error(ErrorCode::InvalidConfig, "dataset needs at least two points");
    }
    detail::check_kappa(kappa_class);
    detail::check_kappa(kappa_aug);
  }
};

struct Dataset {
  Matrix directions;
  Labels labels;
};

/// Class centers uniform on the sphere, instances vMF around their center,
/// stored class by class.
inline Dataset make_dataset(const SynthConfig& config) {
  config.validate();
  Rng center_rng(derive_seed(config.seed, Stream::Centers));
  Matrix centers(config.num_classes, config.dim);
  for (std::size_t c = 0; c < config.num_classes; ++c) detail::uniform_direction(center_rng, centers.row(c));

  Dataset out{Matrix(config.total(), config.dim), Labels(config.total())};
  for (std::size_t c = 0; c < config.num_classes; ++c) {
    Rng rng(derive_seed(config.seed, Stream::Instances, c));
    for (std::size_t p = 0; p < config.points_per_class; ++p) {
      const std::size_t i = c * config.points_per_class + p;
      detail::sample_vmf_into(rng, centers.row(c), config.kappa_class, out.directions.row(i));
      out.labels[i] = static_cast<std::uint32_t>(c);
    }
  }
  return out;
}

/// Two independent vMF(row, kappa_aug) views of every row. The stream is keyed
/// by (seed, step) so each training step sees fresh, reproducible views.
inline FeatureBatch augment(const Matrix& rows, double kappa_aug, std::uint64_t seed, std::uint64_t step) {
  detail::check_kappa(kappa_aug);
  Rng rng(derive_seed(seed, Stream::Augment, step));
  Matrix anchors(rows.rows(), rows.cols());
  Matrix keys(rows.rows(), rows.cols());
  for (std::size_t i = 0; i < rows.rows(); ++i) {
    detail::sample_vmf_into(rng, rows.row(i), kappa_aug, anchors.row(i));
    detail::sample_vmf_into(rng, rows.row(i), kappa_aug, keys.row(i));
  }
  return FeatureBatch(std::move(anchors), std::move(keys));
}

}  // namespace clab
