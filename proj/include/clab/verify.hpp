#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "clab/analysis.hpp"
#include "clab/losses.hpp"
#include "clab/random.hpp"

namespace clab {

/// Outcome of one self-check: the worst measured value against its bound.
struct CheckResult {
  std::string name;
  double measured = 0.0;
  double tolerance = 0.0;
  bool passed = false;
  std::string relation;  // how measured is compared with tolerance
};

struct LimitCheckOptions {
  std::uint64_t seed = 0;
  double tau_small = 1e-3;
  double tau_large = 100.0;
  std::size_t instances = 200;
  /// Test-only fault injection: added to every analytic gradient entry.
  double perturb_gradients = 0.0;
  double fd_step = 1e-6;
};

inline const std::vector<double>& gradient_check_taus() {
  static const std::vector<double> taus = {0.05, 0.07, 0.2, 0.5, 1.0};
  return taus;
}

inline const std::vector<double>& entropy_check_taus() {
  static const std::vector<double> taus = {0.05, 0.07, 0.1, 0.2, 0.3, 0.5, 0.7, 1.0};
  return taus;
}

namespace detail {

inline constexpr double kCheckHardAlpha = 0.25;
inline constexpr double kKinkMargin = 1e-4;

inline Matrix random_similarities(Rng& rng, std::size_t n) {
  Matrix s(n, n);
  for (double& v : s.values()) v = 2.0 * rng.uniform() - 1.0;
  return s;
}

/// True when the hard threshold of every row is separated from the next
/// value by more than kKinkMargin, so central differences never cross it.
inline bool hard_threshold_is_smooth(const Matrix& s, double alpha) {
  const std::size_t n = s.rows();
  const std::size_t k = hard_negative_count(n - 1, alpha);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> neg;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) neg.push_back(s(i, j));
    std::sort(neg.begin(), neg.end(), std::greater<>());
    if (k < neg.size() && neg[k - 1] - neg[k] <= kKinkMargin) return false;
  }
  return true;
}

/// Random similarity matrices with N in [4, 64], smooth for the hard loss.
inline std::vector<Matrix> gradient_instances(std::uint64_t seed, std::size_t count) {
  Rng rng(seed);
  std::vector<Matrix> out;
  while (out.size() < count) {
    const std::size_t n = 4 + static_cast<std::size_t>(rng.below(61));
    Matrix s = random_similarities(rng, n);
    if (hard_threshold_is_smooth(s, kCheckHardAlpha)) out.push_back(std::move(s));
  }
  return out;
}

/// Entry-wise error scaled by max(1, |analytic|, |numeric|): relative for
/// large gradients, absolute below one.
inline double scaled_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({1.0, std::abs(analytic), std::abs(numeric)});
}

}  // namespace detail

/// Central finite differences of each anchor loss against loss_gradients.
/// Returns the worst scaled error over all entries.
inline double max_gradient_error(const Matrix& s, const LossConfig& config, double step, double perturb = 0.0) {
  const SimilarityMatrix sim(s);
  const GradientMatrix g = loss_gradients(sim, config);
  const std::size_t n = s.rows();
  double worst = 0.0;
  std::vector<double> row(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto base = s.row(i);
    for (std::size_t j = 0; j < n; ++j) {
      std::copy(base.begin(), base.end(), row.begin());
      row[j] = base[j] + step;
      const double up = anchor_loss(row, i, config);
      row[j] = base[j] - step;
      const double down = anchor_loss(row, i, config);
      const double numeric = (up - down) / (2.0 * step);
      worst = std::max(worst, detail::scaled_error(g.dL_dS(i, j) + perturb, numeric));
    }
  }
  return worst;
}

/// Largest | |dL/ds_ii| - sum_{j != i} dL/ds_ij | over all rows.
inline double max_ratio_identity_gap(const GradientMatrix& g) {
  const Matrix& m = g.dL_dS;
  double worst = 0.0;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double off = 0.0;
    for (std::size_t j = 0; j < m.cols(); ++j)
      if (j != i) off += m(i, j);
    worst = std::max(worst, std::abs(std::abs(m(i, i)) - off));
  }
  return worst;
}

inline std::vector<CheckResult> run_limit_checks(const LimitCheckOptions& options) {
  std::vector<CheckResult> results;
  auto record = [&](std::string name, double measured, double tol, bool passed, std::string relation) {
    results.push_back({std::move(name), measured, tol, passed, std::move(relation)});
  };

  // Gradients and the gradient-ratio identity.
  const auto instances = detail::gradient_instances(derive_seed(options.seed, Stream::PairSample, 1), options.instances);
  double fd_worst = 0.0;
  double ratio_worst = 0.0;
  for (const Matrix& s : instances) {
    for (double tau : gradient_check_taus()) {
      for (Variant v : {Variant::Contrastive, Variant::Simple, Variant::Hard, Variant::TaylorLimit}) {
        LossConfig c{v, tau, detail::kCheckHardAlpha, std::nullopt};
        fd_worst = std::max(fd_worst, max_gradient_error(s, c, options.fd_step, options.perturb_gradients));
        if (v == Variant::Contrastive || v == Variant::Hard) {
          ratio_worst = std::max(ratio_worst, max_ratio_identity_gap(loss_gradients(SimilarityMatrix(s), c)));
        }
      }
    }
  }
  record("gradient_finite_difference", fd_worst, 1e-6, fd_worst < 1e-6, "<");
  record("gradient_ratio_identity", ratio_worst, 1e-10, ratio_worst <= 1e-10, "<=");

  // Entropy of the relative penalty grows strictly with tau.
  {
    Rng rng(derive_seed(options.seed, Stream::PairSample, 2));
    const auto& taus = entropy_check_taus();
    double min_step = std::numeric_limits<double>::infinity();
    double equal_gap = 0.0;
    for (int r = 0; r < 1000; ++r) {
      const std::size_t m = 2 + static_cast<std::size_t>(rng.below(63));
      std::vector<double> neg(m);
      for (double& v : neg) v = 2.0 * rng.uniform() - 1.0;
      const auto h = entropy_vs_tau(neg, taus);
      for (std::size_t t = 1; t < h.size(); ++t) min_step = std::min(min_step, h[t] - h[t - 1]);
      const std::vector<double> flat(m, neg[0]);
      for (double e : entropy_vs_tau(flat, taus))
        equal_gap = std::max(equal_gap, std::abs(e - std::log(static_cast<double>(m))));
    }
    record("entropy_strictly_increasing", min_step, 0.0, min_step > 0.0, ">");
    record("entropy_equal_negatives_log_m", equal_gap, 1e-12, equal_gap <= 1e-12, "<=");
  }

  // Small-temperature limit on rows with a unique, well separated maximum.
  {
    Rng rng(derive_seed(options.seed, Stream::PairSample, 3));
    const double tau = options.tau_small;
    double worst = 0.0;
    std::size_t made = 0;
    while (made < options.instances) {
      const std::size_t n = 4 + static_cast<std::size_t>(rng.below(61));
      Matrix s = detail::random_similarities(rng, n);
      bool separated = true;
      for (std::size_t i = 0; i < n && separated; ++i) {
        std::vector<double> row(s.row(i).begin(), s.row(i).end());
        std::sort(row.begin(), row.end(), std::greater<>());
        separated = row[0] - row[1] >= 0.05;
      }
      if (!separated) continue;
      ++made;
      const SimilarityMatrix sim(std::move(s));
      const auto full = contrastive_loss(sim, tau);
      const auto limit = limit_triplet(sim, tau);
      for (std::size_t i = 0; i < n; ++i)
        worst = std::max(worst, std::abs(tau * full.per_anchor[i] - tau * limit.per_anchor[i]));
    }
    record("triplet_limit_small_tau", worst, 1e-4, worst < 1e-4, "<");
  }

  // Large-temperature limit: error decays like 1/tau^2.
  {
    Rng rng(derive_seed(options.seed, Stream::PairSample, 4));
    const double tau = options.tau_large;
    double worst_abs = 0.0;
    double worst_ratio = 0.0;  // err(2 tau) / err(tau), must stay <= 1/3
    for (std::size_t r = 0; r < options.instances; ++r) {
      const std::size_t n = 4 + static_cast<std::size_t>(rng.below(61));
      const SimilarityMatrix sim(detail::random_similarities(rng, n));
      auto error_at = [&](double t) {
        const auto full = contrastive_loss(sim, t);
        const auto approx = limit_taylor(sim, t);
        double e = 0.0;
        for (std::size_t i = 0; i < n; ++i) e = std::max(e, std::abs(full.per_anchor[i] - approx.per_anchor[i]));
        return e;
      };
      const double e1 = error_at(tau);
      const double e2 = error_at(2.0 * tau);
      worst_abs = std::max(worst_abs, e1);
      if (e1 > 0.0) worst_ratio = std::max(worst_ratio, e2 / e1);
      else if (e2 > 0.0) worst_ratio = std::numeric_limits<double>::infinity();
    }
    record("taylor_limit_abs_error", worst_abs, 1e-3, worst_abs < 1e-3, "<");
    record("taylor_limit_decay_ratio", worst_ratio, 1.0 / 3.0, worst_ratio <= 1.0 / 3.0, "<=");
  }

  // Hard loss with alpha = 1 is the ordinary loss.
  {
    Rng rng(derive_seed(options.seed, Stream::PairSample, 5));
    double worst = 0.0;
    for (int r = 0; r < 100; ++r) {
      const std::size_t n = 4 + static_cast<std::size_t>(rng.below(61));
      const SimilarityMatrix sim(detail::random_similarities(rng, n));
      for (double tau : gradient_check_taus()) {
        const auto a = hard_contrastive_loss(sim, tau, 1.0);
        const auto b = contrastive_loss(sim, tau);
        for (std::size_t i = 0; i < n; ++i) worst = std::max(worst, std::abs(a.per_anchor[i] - b.per_anchor[i]));
      }
    }
    record("hard_alpha_one_degeneracy", worst, 1e-12, worst <= 1e-12, "<=");
  }
  return results;
}

}  // namespace clab
