#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "clab/core.hpp"
#include "clab/random.hpp"

namespace clab {

/// Relative penalty an anchor spreads over its negatives, and its entropy.
struct PenaltyDistribution {
  std::vector<double> r;
  double entropy = 0.0;
};

struct LocalSeparationStats {
  double mean_positive = 0.0;
  /// Entry j averages every anchor's (j+1)-th largest negative similarity.
  std::vector<double> mean_top_negatives;
};

enum class ToleranceForm {
  /// Mean similarity over same-label pairs.
  SameClassMean,
  /// Mean over all pairs of similarity times the same-label indicator.
  MaskedMeanAllPairs,
};

inline PenaltyDistribution penalty_distribution(std::span<const double> negatives, double tau) {
  check_temperature(tau);
  if (negatives.empty()) throw Error(ErrorCode::EmptyNegatives, "penalty distribution needs M >= 1");
  const std::size_t m = negatives.size();
  std::size_t top = 0;
  for (std::size_t j = 1; j < m; ++j)
    if (negatives[j] > negatives[top]) top = j;
  const double peak = negatives[top] / tau;
  double rest = 0.0;
  for (std::size_t j = 0; j < m; ++j)
    if (j != top) rest += std::exp(negatives[j] / tau - peak);
  // log1p keeps log r of the dominant entry exact when the others underflow.
  const double log_norm = peak + std::log1p(rest);

  PenaltyDistribution out;
  out.r.resize(m);
  double entropy = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    const double log_r = negatives[j] / tau - log_norm;
    out.r[j] = std::exp(log_r);
    entropy -= out.r[j] * log_r;
  }
  out.entropy = entropy;
  return out;
}

inline std::vector<double> entropy_vs_tau(std::span<const double> negatives, std::span<const double> taus) {
  for (std::size_t t = 1; t < taus.size(); ++t) {
    if (!(taus[t] > taus[t - 1])) throw Error(ErrorCode::NonAscendingGrid, "taus must be strictly ascending", t);
  }
  std::vector<double> out;
  out.reserve(taus.size());
  for (double tau : taus) out.push_back(penalty_distribution(negatives, tau).entropy);
  return out;
}

/// log of the mean Gaussian potential exp(-t |x - y|^2) over distinct pairs.
/// Without a budget every pair is visited; with one, `*pair_budget` ordered
/// pairs are drawn uniformly from a stream seeded by `seed`.
inline double uniformity(const Matrix& features, double t = 2.0,
                         std::optional<std::size_t> pair_budget = std::nullopt, std::uint64_t seed = 0) {
  const std::size_t n = features.rows();
  if (n < 2) throw Error(ErrorCode::DegenerateBatch, "uniformity needs N >= 2");
  auto potential = [&](std::size_t a, std::size_t b) {
    const auto x = features.row(a);
    const auto y = features.row(b);
    double d2 = 0.0;
    for (std::size_t c = 0; c < x.size(); ++c) {
      const double diff = x[c] - y[c];
      d2 += diff * diff;
    }
    return std::exp(-t * d2);
  };

  if (!pair_budget) {
    // Ordered pairs come in symmetric twins, so the unordered mean is equal.
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double row_sum = 0.0;
      for (std::size_t j = i + 1; j < n; ++j) row_sum += potential(i, j);
      sum += row_sum;
    }
    const double pairs = 0.5 * static_cast<double>(n) * static_cast<double>(n - 1);
    return std::log(sum / pairs);
  }

  if (*pair_budget == 0) throw Error(ErrorCode::InvalidConfig, "pair budget must be positive");
  Rng rng(derive_seed(seed, Stream::PairSample));
  double sum = 0.0;
  for (std::size_t p = 0; p < *pair_budget; ++p) {
    const std::size_t x = rng.below(n);
    std::size_t y = rng.below(n - 1);
    if (y >= x) ++y;
    sum += potential(x, y);
  }
  return std::log(sum / static_cast<double>(*pair_budget));
}

inline double tolerance(const Matrix& features, const Labels& labels,
                        ToleranceForm form = ToleranceForm::SameClassMean) {
  const std::size_t n = features.rows();
  if (labels.size() != n) throw Error(ErrorCode::ShapeMismatch, "label count does not match feature rows");
  double sum = 0.0;
  std::size_t same = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double row_sum = 0.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      if (labels[i] != labels[j]) continue;
      row_sum += dot(features.row(i), features.row(j));
      ++same;
    }
    sum += row_sum;
  }
  if (same == 0) throw Error(ErrorCode::NoPositivePairs, "no two samples share a label");
  if (form == ToleranceForm::SameClassMean) return sum / static_cast<double>(same);
  return sum / (0.5 * static_cast<double>(n) * static_cast<double>(n - 1));
}

namespace detail {

template <class RowFn>
LocalSeparationStats local_separation_rows(std::size_t n, std::size_t k, RowFn&& row_of) {
  if (k == 0 || k > n - 1) {
    throw Error(ErrorCode::KTooLarge, "k must lie in [1, N-1]", k);
  }
  LocalSeparationStats out;
  out.mean_top_negatives.assign(k, 0.0);
  std::vector<double> row(n);
  std::vector<double> top;
  top.reserve(k);
  double positive_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    row_of(i, row);
    positive_sum += row[i];
    top.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double v = row[j];
      if (top.size() == k && !(v > top.back())) continue;
      if (top.size() == k) top.pop_back();
      top.insert(std::upper_bound(top.begin(), top.end(), v, std::greater<>()), v);
    }
    for (std::size_t j = 0; j < k; ++j) out.mean_top_negatives[j] += top[j];
  }
  const double nn = static_cast<double>(n);
  out.mean_positive = positive_sum / nn;
  for (double& v : out.mean_top_negatives) v /= nn;
  return out;
}

}  // namespace detail

/// Average positive similarity and the average of each anchor's k largest
/// negative similarities, rank by rank.
inline LocalSeparationStats local_separation(const SimilarityMatrix& s, std::size_t k) {
  return detail::local_separation_rows(s.size(), k, [&](std::size_t i, std::vector<double>& row) {
    const auto r = s.row(i);
    std::copy(r.begin(), r.end(), row.begin());
  });
}

/// Same statistics computed row by row from the two views, without storing
/// the N x N similarity matrix.
inline LocalSeparationStats local_separation(const Matrix& anchors, const Matrix& keys, std::size_t k) {
  if (!anchors.same_shape(keys)) throw Error(ErrorCode::ShapeMismatch, "anchors and keys differ in shape");
  if (anchors.rows() < 2) throw Error(ErrorCode::DegenerateBatch, "need N >= 2");
  return detail::local_separation_rows(anchors.rows(), k, [&](std::size_t i, std::vector<double>& row) {
    for (std::size_t j = 0; j < keys.rows(); ++j) row[j] = dot(anchors.row(i), keys.row(j));
  });
}

/// Fraction of points whose k-nearest-neighbour majority label (cosine
/// similarity, self excluded) equals their own. Equal similarities rank the
/// lower index first; vote ties go to the smallest label.
inline double knn_purity(const Matrix& features, const Labels& labels, std::size_t k) {
  const std::size_t n = features.rows();
  if (labels.size() != n) throw Error(ErrorCode::ShapeMismatch, "label count does not match feature rows");
  if (k == 0 || k >= n) throw Error(ErrorCode::KTooLarge, "k must lie in [1, N-1]", k);
  // Neighbours ranked by (similarity desc, index asc); j ascending means an
  // equal similarity never displaces an earlier index.
  std::vector<std::pair<double, std::size_t>> top;
  top.reserve(k);
  auto before = [](const std::pair<double, std::size_t>& a, const std::pair<double, std::size_t>& b) {
    return a.first > b.first || (a.first == b.first && a.second < b.second);
  };
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n; ++i) {
    top.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const std::pair<double, std::size_t> cand{dot(features.row(i), features.row(j)), j};
      if (top.size() == k && !before(cand, top.back())) continue;
      if (top.size() == k) top.pop_back();
      top.insert(std::upper_bound(top.begin(), top.end(), cand, before), cand);
    }
    std::map<std::uint32_t, std::size_t> votes;
    for (const auto& [sim, j] : top) ++votes[labels[j]];
    std::uint32_t winner = votes.begin()->first;
    std::size_t best = 0;
    for (const auto& [label, count] : votes) {
      if (count > best) {
        best = count;
        winner = label;
      }
    }
    if (winner == labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

}  // namespace clab
