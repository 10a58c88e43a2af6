#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "clab/analysis.hpp"
#include "clab/losses.hpp"
#include "clab/synth.hpp"

namespace clab {

inline constexpr std::size_t kTopNegatives = 10;

/// Where the positive key of an anchor comes from when a memory bank exists.
enum class PositiveSource { Bank, FreshView };

struct TrainConfig {
  LossConfig loss;
  std::size_t steps = 2000;
  std::size_t batch_size = 128;
  double learning_rate = 0.02;
  /// (step, multiplier): from `step` on, the rate is multiplied by `multiplier`.
  std::vector<std::pair<std::size_t, double>> lr_schedule;
  /// EMA momentum of the key memory bank; unset disables the bank.
  std::optional<double> memory_bank_momentum = 0.9;
  PositiveSource positive_source = PositiveSource::Bank;
  double kappa_aug = 40.0;
  std::size_t metric_every = 100;
  std::uint64_t seed = 0;
  std::size_t knn_k = 10;
  double uniformity_t = 2.0;
  ToleranceForm tolerance_form = ToleranceForm::SameClassMean;

  void validate(std::size_t n) const {
    loss.validate();
    if (steps == 0) throw Error(ErrorCode::InvalidConfig, "steps must be positive");
    if (batch_size < 2 || batch_size > n) throw Error(ErrorCode::InvalidConfig, "batch_size must lie in [2, N]");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
      throw Error(ErrorCode::InvalidConfig, "learning_rate must be non-negative");
    }
    for (std::size_t i = 0; i < lr_schedule.size(); ++i) {
      if (i > 0 && lr_schedule[i].first <= lr_schedule[i - 1].first) {
        throw Error(ErrorCode::InvalidConfig, "lr_schedule steps must be strictly ascending");
      }
      if (!(lr_schedule[i].second >= 0.0)) throw Error(ErrorCode::InvalidConfig, "lr multipliers must be >= 0");
    }
    if (memory_bank_momentum && !(*memory_bank_momentum >= 0.0 && *memory_bank_momentum < 1.0)) {
      throw Error(ErrorCode::InvalidConfig, "memory bank momentum must lie in [0, 1)");
    }
    if (!(kappa_aug >= 0.0)) throw Error(ErrorCode::InvalidConfig, "kappa_aug must be non-negative");
    if (metric_every == 0) throw Error(ErrorCode::InvalidConfig, "metric_every must be positive");
    if (knn_k == 0 || knn_k >= n) throw Error(ErrorCode::InvalidConfig, "knn_k must lie in [1, N-1]");
    if (n - 1 < kTopNegatives) throw Error(ErrorCode::InvalidConfig, "need more than 10 instances");
    if (!(uniformity_t > 0.0)) throw Error(ErrorCode::InvalidConfig, "uniformity t must be positive");
  }

  double rate_at(std::size_t step) const {
    double lr = learning_rate;
    for (const auto& [at, multiplier] : lr_schedule)
      if (step >= at) lr *= multiplier;
    return lr;
  }
};

struct Snapshot {
  std::size_t step = 0;
  double mean_loss = 0.0;
  double uniformity = 0.0;
  double tolerance = 0.0;
  double knn_purity = 0.0;
  double mean_positive_similarity = 0.0;
  std::vector<double> top_negatives;  // kTopNegatives entries
};

struct Trajectory {
  std::vector<Snapshot> snapshots;
};

struct TrainResult {
  Matrix embeddings;
  std::optional<Matrix> bank;
  Trajectory trajectory;
};

/// Settings that fully determine the evaluation of an embedding table.
struct EvalSettings {
  double kappa_aug = 40.0;
  std::uint64_t seed = 0;
  std::size_t knn_k = 10;
  double uniformity_t = 2.0;
  /// Monte Carlo pair count for uniformity; unset means all pairs.
  std::optional<std::size_t> pair_budget;
};

struct EmbeddingMetrics {
  double uniformity = 0.0;
  std::optional<double> tolerance;
  std::optional<double> tolerance_all_pairs;
  std::optional<double> knn_purity;
  LocalSeparationStats local;
};

/// Metrics of an embedding table. Uniformity, tolerance and purity look at the
/// table itself; local separation compares a fixed augmented view of every
/// row against `keys` (the memory bank) or, without one, a second view.
inline EmbeddingMetrics embedding_metrics(const Matrix& table, const Labels* labels, const Matrix* keys,
                                          const EvalSettings& eval) {
  EmbeddingMetrics out;
  out.uniformity = uniformity(table, eval.uniformity_t, eval.pair_budget, eval.seed);
  if (labels) {
    out.tolerance = tolerance(table, *labels, ToleranceForm::SameClassMean);
    out.tolerance_all_pairs = tolerance(table, *labels, ToleranceForm::MaskedMeanAllPairs);
    out.knn_purity = knn_purity(table, *labels, eval.knn_k);
  }
  const FeatureBatch views = augment(table, eval.kappa_aug, derive_seed(eval.seed, Stream::EvalViews), 0);
  out.local = local_separation(views.anchors(), keys ? *keys : views.keys(), std::min(kTopNegatives, table.rows() - 1));
  return out;
}

namespace detail {

/// First `count` entries of a seeded Fisher-Yates shuffle of [0, n).
inline std::vector<std::size_t> draw_indices(std::size_t n, std::size_t count, std::uint64_t seed) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(perm[i], perm[j]);
  }
  perm.resize(count);
  return perm;
}

inline Matrix gather(const Matrix& m, const std::vector<std::size_t>& rows) {
  Matrix out(rows.size(), m.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto src = m.row(rows[r]);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

/// Loss on a fixed minibatch with fixed views; depends only on the table.
inline double evaluation_loss(const Matrix& table, const TrainConfig& config) {
  const auto idx = draw_indices(table.rows(), config.batch_size, derive_seed(config.seed, Stream::EvalBatch));
  const FeatureBatch views =
      augment(gather(table, idx), config.kappa_aug, derive_seed(config.seed, Stream::EvalViews), 1);
  return compute_loss(similarity_matrix(views), config.loss).mean;
}

inline Snapshot take_snapshot(std::size_t step, const Matrix& table, const std::optional<Matrix>& bank,
                              const Labels& labels, const TrainConfig& config) {
  const EvalSettings eval{config.kappa_aug, config.seed, config.knn_k, config.uniformity_t, std::nullopt};
  const auto m = embedding_metrics(table, &labels, bank ? &*bank : nullptr, eval);
  Snapshot s;
  s.step = step;
  s.mean_loss = evaluation_loss(table, config);
  s.uniformity = m.uniformity;
  s.tolerance = config.tolerance_form == ToleranceForm::SameClassMean ? *m.tolerance : *m.tolerance_all_pairs;
  s.knn_purity = *m.knn_purity;
  s.mean_positive_similarity = m.local.mean_positive;
  s.top_negatives = m.local.mean_top_negatives;
  return s;
}

}  // namespace detail

/// Projected SGD directly on the rows of an embedding table initialised from
/// the dataset. Each step draws a minibatch, augments the current rows into
/// anchor/key views, and moves every sampled row against the tangent part of
/// its own loss gradient before retracting it to the sphere.
inline TrainResult train(const Dataset& dataset, const TrainConfig& config) {
  const std::size_t n = dataset.directions.rows();
  const std::size_t d = dataset.directions.cols();
  if (dataset.labels.size() != n) throw Error(ErrorCode::ShapeMismatch, "dataset labels do not match rows");
  config.validate(n);

  Matrix table = normalize_rows(dataset.directions);
  std::optional<Matrix> bank;
  if (config.memory_bank_momentum) bank = table;

  TrainResult result;
  result.trajectory.snapshots.push_back(detail::take_snapshot(0, table, bank, dataset.labels, config));

  const std::size_t b = config.batch_size;
  std::vector<double> update(d);
  for (std::size_t step = 0; step < config.steps; ++step) {
    const auto idx = detail::draw_indices(n, b, derive_seed(config.seed, Stream::Batch, step));
    const FeatureBatch views = augment(detail::gather(table, idx), config.kappa_aug, config.seed, step);
    const Matrix& anchors = views.anchors();

    Matrix anchor_grad;
    Matrix key_grad;
    if (bank) {
      const Matrix negatives = detail::gather(*bank, idx);
      const Matrix& positives = config.positive_source == PositiveSource::Bank ? negatives : views.keys();
      Matrix s(b, b);
      for (std::size_t i = 0; i < b; ++i)
        for (std::size_t j = 0; j < b; ++j)
          s(i, j) = dot(anchors.row(i), (i == j ? positives : negatives).row(j));
      const SimilarityMatrix sim(std::move(s));
      const double loss = compute_loss(sim, config.loss).mean;
      if (!std::isfinite(loss)) throw Error(ErrorCode::NonFiniteLoss, "loss diverged", step);
      const GradientMatrix g = loss_gradients(sim, config.loss);
      anchor_grad = Matrix(b, d, 0.0);
      for (std::size_t i = 0; i < b; ++i) {
        auto out = anchor_grad.row(i);
        for (std::size_t j = 0; j < b; ++j) {
          const double gij = g.dL_dS(i, j);
          if (gij == 0.0) continue;
          const auto key = (i == j ? positives : negatives).row(j);
          for (std::size_t c = 0; c < d; ++c) out[c] += gij * key[c];
        }
        project_tangent(out, anchors.row(i));
      }
    } else {
      const SimilarityMatrix sim = similarity_matrix(views);
      const double loss = compute_loss(sim, config.loss).mean;
      if (!std::isfinite(loss)) throw Error(ErrorCode::NonFiniteLoss, "loss diverged", step);
      auto grads = feature_gradients(views, loss_gradients(sim, config.loss));
      anchor_grad = std::move(grads.anchors);
      key_grad = std::move(grads.keys);
    }

    const double lr = config.rate_at(step);
    for (std::size_t i = 0; i < b && lr != 0.0; ++i) {
      auto row = table.row(idx[i]);
      const auto ga = anchor_grad.row(i);
      for (std::size_t c = 0; c < d; ++c) update[c] = ga[c];
      if (!bank) {
        const auto gk = key_grad.row(i);
        for (std::size_t c = 0; c < d; ++c) update[c] += gk[c];
      }
      // The gradient lives at the view; move it to the row's tangent space.
      project_tangent(update, row);
      for (std::size_t c = 0; c < d; ++c) row[c] -= lr * update[c];
      normalize_in_place(row, idx[i]);
    }

    if (bank) {
      const double m = *config.memory_bank_momentum;
      for (std::size_t i = 0; i < b; ++i) {
        auto slot = bank->row(idx[i]);
        const auto fresh = views.keys().row(i);
        if (m == 0.0) {
          std::copy(fresh.begin(), fresh.end(), slot.begin());
          continue;
        }
        for (std::size_t c = 0; c < d; ++c) slot[c] = m * slot[c] + (1.0 - m) * fresh[c];
        normalize_in_place(slot, idx[i]);
      }
    }

    const std::size_t done = step + 1;
    if (done % config.metric_every == 0 || done == config.steps) {
      result.trajectory.snapshots.push_back(detail::take_snapshot(done, table, bank, dataset.labels, config));
    }
  }
  result.embeddings = std::move(table);
  result.bank = std::move(bank);
  return result;
}

struct SweepPoint {
  double tau = 0.0;
  Snapshot snapshot;
};

struct SweepReport {
  Variant variant = Variant::Contrastive;
  double alpha = 1.0;
  std::vector<SweepPoint> points;
};

/// One full training run per temperature on the same data and seeds. Points
/// may run on `jobs` threads; the report is always ordered like `taus`.
inline SweepReport sweep_tau(const Dataset& dataset, const TrainConfig& base, const std::vector<double>& taus,
                             std::size_t jobs = 1) {
  if (taus.empty()) throw Error(ErrorCode::InvalidConfig, "sweep needs at least one temperature");
  for (double tau : taus) check_temperature(tau);
  SweepReport report{base.loss.variant, base.loss.alpha, std::vector<SweepPoint>(taus.size())};

  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(taus.size());
  auto worker = [&] {
    for (std::size_t i = next++; i < taus.size(); i = next++) {
      try {
        TrainConfig config = base;
        config.loss.tau = taus[i];
        auto result = train(dataset, config);
        report.points[i] = SweepPoint{taus[i], std::move(result.trajectory.snapshots.back())};
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::max<std::size_t>(1, std::min(jobs, taus.size()));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return report;
}

}  // namespace clab
