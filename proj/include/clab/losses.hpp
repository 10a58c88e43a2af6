#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "clab/core.hpp"

namespace clab {

struct LossResult {
  std::vector<double> per_anchor;
  double mean = 0.0;

  static LossResult from_per_anchor(std::vector<double> values) {
    double acc = 0.0;
    for (double v : values) acc += v;
    LossResult r;
    r.mean = values.empty() ? 0.0 : acc / static_cast<double>(values.size());
    r.per_anchor = std::move(values);
    return r;
  }
};

/// dL_dS(i, j) = dL(x_i) / ds_{i,j}.
struct GradientMatrix {
  Matrix dL_dS;
};

struct FeatureGradients {
  Matrix anchors;
  Matrix keys;
};

/// Number of hard negatives kept out of `negatives`: ceil(alpha * negatives),
/// at least one.
inline std::size_t hard_negative_count(std::size_t negatives, double alpha) {
  check_alpha(alpha);
  if (negatives == 0) throw Error(ErrorCode::EmptyNegatives, "row has no negatives");
  double raw = alpha * static_cast<double>(negatives);
  // 0.1 * 30 must count as 3, not 3.0000000000000004.
  const double nearest = std::round(raw);
  if (std::abs(raw - nearest) <= 1e-9 * std::max(1.0, raw)) raw = nearest;
  const auto k = static_cast<std::size_t>(std::ceil(raw));
  return std::clamp<std::size_t>(k, 1, negatives);
}

/// Upper-alpha quantile of one anchor's negative similarities: the K-th
/// largest value with K = ceil(alpha * M). Every negative >= the threshold is
/// treated as hard, so ties at the threshold are all kept.
inline double hard_quantile_threshold(std::span<const double> negatives, double alpha) {
  const std::size_t k = hard_negative_count(negatives.size(), alpha);
  std::vector<double> sorted(negatives.begin(), negatives.end());
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k - 1), sorted.end(),
                   std::greater<>());
  return sorted[k - 1];
}

namespace detail {

inline void require_rows(const SimilarityMatrix& s) {
  if (s.size() < 2) throw Error(ErrorCode::DegenerateBatch, "need N >= 2");
}

/// Columns that take part in the denominator of anchor i: the positive plus
/// every negative at or above the row's hard threshold.
inline std::vector<char> hard_mask(std::span<const double> row, std::size_t i, double alpha) {
  const std::size_t n = row.size();
  std::vector<double> negatives;
  negatives.reserve(n - 1);
  for (std::size_t k = 0; k < n; ++k)
    if (k != i) negatives.push_back(row[k]);
  const double threshold = hard_quantile_threshold(negatives, alpha);
  std::vector<char> mask(n, 0);
  for (std::size_t k = 0; k < n; ++k) mask[k] = (k == i || row[k] >= threshold) ? 1 : 0;
  return mask;
}

inline std::vector<char> full_mask(std::size_t n) { return std::vector<char>(n, 1); }

/// -log softmax of the positive over the masked columns, max-shifted.
/// Columns are visited in ascending order.
inline double masked_softmax_loss(std::span<const double> row, std::size_t i, double tau,
                                  const std::vector<char>& mask) {
  double peak = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < row.size(); ++k)
    if (mask[k]) peak = std::max(peak, row[k] / tau);
  double sum = 0.0;
  for (std::size_t k = 0; k < row.size(); ++k)
    if (mask[k]) sum += std::exp(row[k] / tau - peak);
  return peak + std::log(sum) - row[i] / tau;
}

/// Masked recognition probabilities; entries outside the mask are zero.
inline std::vector<double> masked_probabilities(std::span<const double> row, double tau,
                                                const std::vector<char>& mask) {
  double peak = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < row.size(); ++k)
    if (mask[k]) peak = std::max(peak, row[k] / tau);
  std::vector<double> p(row.size(), 0.0);
  double sum = 0.0;
  for (std::size_t k = 0; k < row.size(); ++k) {
    if (!mask[k]) continue;
    p[k] = std::exp(row[k] / tau - peak);
    sum += p[k];
  }
  for (double& v : p) v /= sum;
  return p;
}

inline void softmax_gradient_row(Matrix& g, std::size_t i, std::span<const double> row, double tau,
                                 const std::vector<char>& mask) {
  const auto p = masked_probabilities(row, tau, mask);
  double negative_mass = 0.0;
  for (std::size_t k = 0; k < row.size(); ++k) {
    if (k == i) continue;
    g(i, k) = p[k] / tau;
    negative_mass += p[k];
  }
  g(i, i) = -negative_mass / tau;
}

inline double resolve_lambda(const LossConfig& config, std::size_t negatives_in_sum) {
  if (config.lambda) return *config.lambda;
  return 1.0 / static_cast<double>(negatives_in_sum);
}

}  // namespace detail

inline LossResult contrastive_loss(const SimilarityMatrix& s, double tau) {
  check_temperature(tau);
  detail::require_rows(s);
  const auto mask = detail::full_mask(s.size());
  std::vector<double> out(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) out[i] = detail::masked_softmax_loss(s.row(i), i, tau, mask);
  return LossResult::from_per_anchor(std::move(out));
}

/// P(i, j): probability of x_i being recognized as x_j. Rows sum to one.
inline Matrix recognition_probabilities(const SimilarityMatrix& s, double tau) {
  check_temperature(tau);
  detail::require_rows(s);
  const std::size_t n = s.size();
  const auto mask = detail::full_mask(n);
  Matrix p(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = detail::masked_probabilities(s.row(i), tau, mask);
    std::copy(r.begin(), r.end(), p.row(i).begin());
  }
  return p;
}

inline LossResult simple_loss(const SimilarityMatrix& s, double lambda) {
  check_lambda(lambda);
  detail::require_rows(s);
  const std::size_t n = s.size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double negatives = 0.0;
    for (std::size_t k = 0; k < n; ++k)
      if (k != i) negatives += s(i, k);
    out[i] = -s(i, i) + lambda * negatives;
  }
  return LossResult::from_per_anchor(std::move(out));
}

inline LossResult hard_contrastive_loss(const SimilarityMatrix& s, double tau, double alpha) {
  check_temperature(tau);
  check_alpha(alpha);
  detail::require_rows(s);
  std::vector<double> out(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto mask = detail::hard_mask(s.row(i), i, alpha);
    out[i] = detail::masked_softmax_loss(s.row(i), i, tau, mask);
  }
  return LossResult::from_per_anchor(std::move(out));
}

/// Simple loss restricted to each anchor's K nearest negatives.
inline LossResult hard_simple_loss(const SimilarityMatrix& s, double alpha, double lambda) {
  check_alpha(alpha);
  check_lambda(lambda);
  detail::require_rows(s);
  const std::size_t n = s.size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto mask = detail::hard_mask(s.row(i), i, alpha);
    double negatives = 0.0;
    for (std::size_t k = 0; k < n; ++k)
      if (k != i && mask[k]) negatives += s(i, k);
    out[i] = -s(i, i) + lambda * negatives;
  }
  return LossResult::from_per_anchor(std::move(out));
}

/// Small-temperature limit: (1/tau) * max(s_max - s_ii, 0).
inline LossResult limit_triplet(const SimilarityMatrix& s, double tau) {
  check_temperature(tau);
  detail::require_rows(s);
  const std::size_t n = s.size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s_max = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < n; ++k)
      if (k != i) s_max = std::max(s_max, s(i, k));
    out[i] = std::max(s_max - s(i, i), 0.0) / tau;
  }
  return LossResult::from_per_anchor(std::move(out));
}

/// First-order large-temperature expansion of the contrastive loss.
inline LossResult limit_taylor(const SimilarityMatrix& s, double tau) {
  check_temperature(tau);
  detail::require_rows(s);
  const std::size_t n = s.size();
  const double nn = static_cast<double>(n);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double negatives = 0.0;
    for (std::size_t k = 0; k < n; ++k)
      if (k != i) negatives += s(i, k);
    out[i] = -((nn - 1.0) / (nn * tau)) * s(i, i) + negatives / (nn * tau) + std::log(nn);
  }
  return LossResult::from_per_anchor(std::move(out));
}

/// Lambda actually used by the simple variants for a batch of size n.
inline double effective_lambda(const LossConfig& config, std::size_t n) {
  if (config.variant == Variant::HardSimple) {
    return detail::resolve_lambda(config, hard_negative_count(n - 1, config.alpha));
  }
  return detail::resolve_lambda(config, n - 1);
}

/// Loss of anchor i computed from its similarity row alone. Matches the
/// corresponding entry of compute_loss bit for bit.
inline double anchor_loss(std::span<const double> row, std::size_t i, const LossConfig& config) {
  config.validate();
  const std::size_t n = row.size();
  if (n < 2 || i >= n) throw Error(ErrorCode::DegenerateBatch, "need N >= 2 and a valid anchor index");
  const double tau = config.tau;
  switch (config.variant) {
    case Variant::Contrastive: return detail::masked_softmax_loss(row, i, tau, detail::full_mask(n));
    case Variant::Hard: return detail::masked_softmax_loss(row, i, tau, detail::hard_mask(row, i, config.alpha));
    case Variant::Simple:
    case Variant::HardSimple: {
      const double lambda = effective_lambda(config, n);
      const auto mask = config.variant == Variant::HardSimple ? detail::hard_mask(row, i, config.alpha)
                                                              : detail::full_mask(n);
      double negatives = 0.0;
      for (std::size_t k = 0; k < n; ++k)
        if (k != i && mask[k]) negatives += row[k];
      return -row[i] + lambda * negatives;
    }
    case Variant::TripletLimit: {
      double s_max = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < n; ++k)
        if (k != i) s_max = std::max(s_max, row[k]);
      return std::max(s_max - row[i], 0.0) / tau;
    }
    case Variant::TaylorLimit: {
      const double nn = static_cast<double>(n);
      double negatives = 0.0;
      for (std::size_t k = 0; k < n; ++k)
        if (k != i) negatives += row[k];
      return -((nn - 1.0) / (nn * tau)) * row[i] + negatives / (nn * tau) + std::log(nn);
    }
  }
  throw Error(ErrorCode::InvalidConfig, "unknown loss variant");
}

inline LossResult compute_loss(const SimilarityMatrix& s, const LossConfig& config) {
  config.validate();
  switch (config.variant) {
    case Variant::Contrastive: return contrastive_loss(s, config.tau);
    case Variant::Simple: return simple_loss(s, effective_lambda(config, s.size()));
    case Variant::Hard: return hard_contrastive_loss(s, config.tau, config.alpha);
    case Variant::HardSimple: return hard_simple_loss(s, config.alpha, effective_lambda(config, s.size()));
    case Variant::TripletLimit: return limit_triplet(s, config.tau);
    case Variant::TaylorLimit: return limit_taylor(s, config.tau);
  }
  throw Error(ErrorCode::InvalidConfig, "unknown loss variant");
}

/// Closed-form gradients of each anchor's loss with respect to its row of
/// similarities. Columns outside an anchor's denominator are exactly zero.
inline GradientMatrix loss_gradients(const SimilarityMatrix& s, const LossConfig& config) {
  config.validate();
  detail::require_rows(s);
  const std::size_t n = s.size();
  const double nn = static_cast<double>(n);
  const double tau = config.tau;
  Matrix g(n, n, 0.0);
  switch (config.variant) {
    case Variant::Contrastive: {
      const auto mask = detail::full_mask(n);
      for (std::size_t i = 0; i < n; ++i) detail::softmax_gradient_row(g, i, s.row(i), tau, mask);
      break;
    }
    case Variant::Hard: {
      for (std::size_t i = 0; i < n; ++i)
        detail::softmax_gradient_row(g, i, s.row(i), tau, detail::hard_mask(s.row(i), i, config.alpha));
      break;
    }
    case Variant::Simple: {
      const double lambda = effective_lambda(config, n);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < n; ++k) g(i, k) = (k == i) ? -1.0 : lambda;
      break;
    }
    case Variant::HardSimple: {
      const double lambda = effective_lambda(config, n);
      for (std::size_t i = 0; i < n; ++i) {
        const auto mask = detail::hard_mask(s.row(i), i, config.alpha);
        for (std::size_t k = 0; k < n; ++k) {
          if (k == i) g(i, k) = -1.0;
          else if (mask[k]) g(i, k) = lambda;
        }
      }
      break;
    }
    case Variant::TripletLimit: {
      for (std::size_t i = 0; i < n; ++i) {
        std::size_t arg = i == 0 ? 1 : 0;
        for (std::size_t k = 0; k < n; ++k)
          if (k != i && s(i, k) > s(i, arg)) arg = k;
        if (s(i, arg) - s(i, i) > 0.0) {
          g(i, i) = -1.0 / tau;
          g(i, arg) = 1.0 / tau;
        }
      }
      break;
    }
    case Variant::TaylorLimit: {
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < n; ++k)
          g(i, k) = (k == i) ? -(nn - 1.0) / (nn * tau) : 1.0 / (nn * tau);
      break;
    }
  }
  return GradientMatrix{std::move(g)};
}

/// Chains similarity gradients through s_ij = a_i . k_j and projects each row
/// onto the tangent space of the sphere at the corresponding feature.
inline FeatureGradients feature_gradients(const FeatureBatch& batch, const GradientMatrix& grad) {
  const std::size_t n = batch.size();
  const std::size_t d = batch.dim();
  const Matrix& g = grad.dL_dS;
  if (g.rows() != n || g.cols() != n) throw Error(ErrorCode::ShapeMismatch, "gradient/batch size mismatch");
  FeatureGradients out{Matrix(n, d, 0.0), Matrix(n, d, 0.0)};
  for (std::size_t i = 0; i < n; ++i) {
    auto ra = out.anchors.row(i);
    for (std::size_t j = 0; j < n; ++j) {
      const double gij = g(i, j);
      if (gij == 0.0) continue;
      const auto key = batch.keys().row(j);
      auto rk = out.keys.row(j);
      const auto anchor = batch.anchors().row(i);
      for (std::size_t c = 0; c < d; ++c) {
        ra[c] += gij * key[c];
        rk[c] += gij * anchor[c];
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    project_tangent(out.anchors.row(i), batch.anchors().row(i));
    project_tangent(out.keys.row(i), batch.keys().row(i));
  }
  return out;
}

inline FeatureGradients feature_gradients(const FeatureBatch& batch, const LossConfig& config) {
  return feature_gradients(batch, loss_gradients(similarity_matrix(batch), config));
}

}  // namespace clab
