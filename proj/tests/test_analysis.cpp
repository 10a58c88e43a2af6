#include <gtest/gtest.h>

#include <cmath>

#include "clab/analysis.hpp"
#include "clab/synth.hpp"
#include "oracles.hpp"

using clab::Matrix;

TEST(Penalty, SymmetricPair) {
  const std::vector<double> neg = {0.3, 0.3};
  for (double tau : {0.01, 0.5, 9.0}) {
    const auto p = clab::penalty_distribution(neg, tau);
    EXPECT_NEAR(p.r[0], 0.5, 1e-15);
    EXPECT_NEAR(p.r[1], 0.5, 1e-15);
    EXPECT_NEAR(p.entropy, std::log(2.0), 1e-15);
  }
}

TEST(Penalty, ScalarSoftmax) {
  const std::vector<double> neg = {0.9, 0.1};
  const auto p = clab::penalty_distribution(neg, 0.1);
  EXPECT_NEAR(p.r[0], 1.0 / (1.0 + std::exp(-8.0)), 1e-15);
  EXPECT_NEAR(p.r[0], 0.999665, 1e-6);
  EXPECT_NEAR(p.r[1], 0.000335, 1e-6);
  const auto flat = clab::penalty_distribution(neg, 100.0);
  EXPECT_NEAR(flat.r[0], 1.0 / (1.0 + std::exp(-0.008)), 1e-15);
  EXPECT_NEAR(flat.r[0] - flat.r[1], std::tanh(0.004), 1e-15);
}

TEST(Penalty, ConcentratesOnTheHardestNegative) {
  const std::vector<double> neg = {0.2, 0.5, 0.45, -0.1};
  const auto p = clab::penalty_distribution(neg, 0.001);
  EXPECT_NEAR(p.r[1], 1.0, 1e-20);
  EXPECT_NEAR(p.r[2], std::exp(-50.0), 1e-30);
}

TEST(Penalty, EntropyMatchesDirectSum) {
  const Matrix s = oracle::random_similarities(1, 3);
  std::vector<double> neg(s.values().begin(), s.values().end());
  const auto p = clab::penalty_distribution(neg, 0.3);
  long double z = 0, h = 0;
  for (double v : neg) z += std::exp(static_cast<long double>(v) / 0.3);
  for (double v : neg) {
    const long double r = std::exp(static_cast<long double>(v) / 0.3) / z;
    h -= r * std::log(r);
  }
  EXPECT_NEAR(p.entropy, static_cast<double>(h), 1e-14);
}

TEST(Entropy, EqualNegativesGiveLogM) {
  const std::vector<double> neg = {0.5, 0.5, 0.5};
  const std::vector<double> taus = {0.05, 0.3, 2.0};
  for (double h : clab::entropy_vs_tau(neg, taus)) EXPECT_NEAR(h, std::log(3.0), 1e-15);
}

TEST(Entropy, IncreasesWithTemperature) {
  const std::vector<double> neg = {0.7, 0.1, -0.4, 0.35, 0.2};
  const std::vector<double> taus = {0.05, 0.1, 0.2, 0.5, 1.0};
  const auto h = clab::entropy_vs_tau(neg, taus);
  for (std::size_t i = 1; i < h.size(); ++i) EXPECT_GT(h[i], h[i - 1]);
  const std::vector<double> bad = {0.1, 0.05};
  EXPECT_THROW(clab::entropy_vs_tau(neg, bad), clab::Error);
}

TEST(Uniformity, ClosedForms) {
  EXPECT_DOUBLE_EQ(clab::uniformity(Matrix{{0.0, 1.0}, {0.0, 1.0}, {0.0, 1.0}}), 0.0);
  EXPECT_NEAR(clab::uniformity(Matrix{{1.0, 0.0}, {-1.0, 0.0}}, 2.0), -8.0, 1e-15);
  EXPECT_THROW(clab::uniformity(Matrix{{1.0, 0.0}}), clab::Error);
}

TEST(Uniformity, MatchesPairLoop) {
  const Matrix x = oracle::random_unit_rows(40, 6, 8);
  EXPECT_NEAR(clab::uniformity(x, 2.0), oracle::uniformity(x, 2.0), 1e-12);
  EXPECT_NEAR(clab::uniformity(x, 0.5), oracle::uniformity(x, 0.5), 1e-12);
}

TEST(Uniformity, MonteCarloAgreesWithFullEnumeration) {
  const Matrix x = oracle::random_unit_rows(4096, 128, 10);
  const double full = clab::uniformity(x, 2.0);
  const double mc = clab::uniformity(x, 2.0, std::size_t{1000000}, 3);
  EXPECT_NEAR(full, mc, 0.01);
  EXPECT_EQ(mc, clab::uniformity(x, 2.0, std::size_t{1000000}, 3));
}

TEST(Tolerance, SmallCases) {
  const double c = std::sqrt(0.75);
  const Matrix two{{1.0, 0.0}, {0.5, c}};
  EXPECT_NEAR(clab::tolerance(two, {4, 4}), 0.5, 1e-15);
  const Matrix same{{0.6, 0.8}, {0.6, 0.8}, {0.6, 0.8}};
  EXPECT_NEAR(clab::tolerance(same, {1, 2, 1}), 1.0, 1e-15);
  EXPECT_THROW(clab::tolerance(same, {0, 1, 2}), clab::Error);
  EXPECT_THROW(clab::tolerance(same, {0, 1}), clab::Error);
}

TEST(Tolerance, MatchesMaskedLoops) {
  const Matrix x = oracle::random_unit_rows(50, 5, 12);
  clab::Labels labels(50);
  clab::Rng r(1);
  for (auto& l : labels) l = static_cast<std::uint32_t>(r.below(4));
  EXPECT_NEAR(clab::tolerance(x, labels), oracle::tolerance_same_class(x, labels), 1e-12);
  EXPECT_NEAR(clab::tolerance(x, labels, clab::ToleranceForm::MaskedMeanAllPairs),
              oracle::tolerance_all_pairs(x, labels), 1e-12);
}

TEST(LocalSeparation, SmallCaseAndOracle) {
  const Matrix s{{1.0, 0.2, 0.8}, {0.8, 1.0, 0.2}, {0.2, 0.8, 1.0}};
  const auto st = clab::local_separation(clab::SimilarityMatrix(s), 2);
  EXPECT_DOUBLE_EQ(st.mean_positive, 1.0);
  EXPECT_NEAR(st.mean_top_negatives[0], 0.8, 1e-15);
  EXPECT_NEAR(st.mean_top_negatives[1], 0.2, 1e-15);

  const Matrix r = oracle::random_similarities(64, 2);
  const auto got = clab::local_separation(clab::SimilarityMatrix(r), 10);
  const auto [pos, top] = oracle::local_separation(r, 10);
  EXPECT_NEAR(got.mean_positive, pos, 1e-14);
  for (std::size_t k = 0; k < 10; ++k) {
    EXPECT_NEAR(got.mean_top_negatives[k], top[k], 1e-14);
    if (k > 0) {
      EXPECT_LE(got.mean_top_negatives[k], got.mean_top_negatives[k - 1]);
    }
  }
  EXPECT_THROW(clab::local_separation(clab::SimilarityMatrix(r), 64), clab::Error);
  EXPECT_THROW(clab::local_separation(clab::SimilarityMatrix(r), 0), clab::Error);
}

TEST(LocalSeparation, FeatureFormMatchesMatrixForm) {
  const Matrix a = oracle::random_unit_rows(30, 7, 1);
  const Matrix k = oracle::random_unit_rows(30, 7, 2);
  const auto x = clab::local_separation(a, k, 5);
  const auto y = clab::local_separation(clab::similarity_matrix(a, k), 5);
  EXPECT_NEAR(x.mean_positive, y.mean_positive, 1e-15);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(x.mean_top_negatives[i], y.mean_top_negatives[i], 1e-15);
  const Matrix same(4, 3, 1.0 / std::sqrt(3.0));
  const auto c = clab::local_separation(same, same, 3);
  EXPECT_EQ(c.mean_top_negatives[0], c.mean_top_negatives[2]);
}

TEST(KnnPurity, SeparatedClustersArePure) {
  Matrix x(8, 2);
  clab::Labels labels(8);
  for (std::size_t i = 0; i < 8; ++i) {
    const double a = (i < 4 ? 0.0 : M_PI) + 0.01 * i;
    x(i, 0) = std::cos(a);
    x(i, 1) = std::sin(a);
    labels[i] = i < 4 ? 0 : 1;
  }
  EXPECT_DOUBLE_EQ(clab::knn_purity(x, labels, 3), 1.0);
}

TEST(KnnPurity, MatchesSortOracleIncludingTies) {
  const Matrix x = oracle::random_unit_rows(120, 3, 4);
  clab::Labels labels(120);
  clab::Rng r(2);
  for (auto& l : labels) l = static_cast<std::uint32_t>(r.below(3));
  for (std::size_t k : {1u, 4u, 10u}) EXPECT_DOUBLE_EQ(clab::knn_purity(x, labels, k), oracle::knn_purity(x, labels, k));
  Matrix same(6, 2, std::sqrt(0.5));
  const clab::Labels l2 = {0, 1, 1, 0, 2, 2};
  EXPECT_DOUBLE_EQ(clab::knn_purity(same, l2, 2), oracle::knn_purity(same, l2, 2));
  EXPECT_DOUBLE_EQ(clab::knn_purity(same, l2, 2), clab::knn_purity(same, l2, 2));
  EXPECT_THROW(clab::knn_purity(same, l2, 6), clab::Error);
}

TEST(KnnPurity, RandomLabelsGiveChance) {
  const Matrix x = oracle::random_unit_rows(3000, 8, 5);
  clab::Labels labels(3000);
  clab::Rng r(3);
  for (auto& l : labels) l = static_cast<std::uint32_t>(r.below(5));
  const double sigma = std::sqrt(0.2 * 0.8 / 3000);
  EXPECT_NEAR(clab::knn_purity(x, labels, 1), 0.2, 3 * sigma);
}
