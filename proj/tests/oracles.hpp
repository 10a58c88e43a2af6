#pragma once

// Brute-force reference implementations used only by the tests. They favour
// the most literal formula over speed or stability.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <vector>

#include "clab/matrix.hpp"
#include "clab/random.hpp"

namespace oracle {

using clab::Matrix;

inline Matrix random_unit_rows(std::size_t n, std::size_t d, std::uint64_t seed) {
  clab::Rng rng(seed);
  Matrix m(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    long double s = 0;
    for (std::size_t j = 0; j < d; ++j) {
      m(i, j) = rng.normal();
      s += static_cast<long double>(m(i, j)) * m(i, j);
    }
    const double inv = static_cast<double>(1.0L / std::sqrt(s));
    for (std::size_t j = 0; j < d; ++j) m(i, j) *= inv;
  }
  return m;
}

inline Matrix random_similarities(std::size_t n, std::uint64_t seed) {
  clab::Rng rng(seed);
  Matrix s(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) s(i, j) = 2.0 * rng.uniform() - 1.0;
  return s;
}

inline long double dot(const Matrix& a, std::size_t i, const Matrix& b, std::size_t j) {
  long double s = 0;
  for (std::size_t k = 0; k < a.cols(); ++k) s += static_cast<long double>(a(i, k)) * b(j, k);
  return s;
}

/// Direct formula without max shift.
inline std::vector<double> contrastive(const Matrix& s, double tau) {
  std::vector<double> out;
  for (std::size_t i = 0; i < s.rows(); ++i) {
    long double den = 0;
    for (std::size_t k = 0; k < s.cols(); ++k) den += std::exp(static_cast<long double>(s(i, k)) / tau);
    out.push_back(static_cast<double>(-std::log(std::exp(static_cast<long double>(s(i, i)) / tau) / den)));
  }
  return out;
}

inline Matrix probabilities(const Matrix& s, double tau) {
  Matrix p(s.rows(), s.cols());
  for (std::size_t i = 0; i < s.rows(); ++i) {
    long double den = 0;
    for (std::size_t k = 0; k < s.cols(); ++k) den += std::exp(static_cast<long double>(s(i, k)) / tau);
    for (std::size_t k = 0; k < s.cols(); ++k)
      p(i, k) = static_cast<double>(std::exp(static_cast<long double>(s(i, k)) / tau) / den);
  }
  return p;
}

/// Negatives of row i that survive the upper-alpha cut: the K largest by a
/// full descending sort, plus anything tied with the K-th.
inline std::vector<std::size_t> hard_columns(const Matrix& s, std::size_t i, double alpha) {
  std::vector<double> neg;
  for (std::size_t k = 0; k < s.cols(); ++k)
    if (k != i) neg.push_back(s(i, k));
  std::sort(neg.rbegin(), neg.rend());
  std::size_t keep = 1;
  while (static_cast<long double>(keep) < static_cast<long double>(alpha) * neg.size() - 1e-9L) ++keep;
  const double cut = neg[keep - 1];
  std::vector<std::size_t> cols;
  for (std::size_t k = 0; k < s.cols(); ++k)
    if (k != i && s(i, k) >= cut) cols.push_back(k);
  return cols;
}

inline std::vector<double> hard_contrastive(const Matrix& s, double tau, double alpha) {
  std::vector<double> out;
  for (std::size_t i = 0; i < s.rows(); ++i) {
    long double den = std::exp(static_cast<long double>(s(i, i)) / tau);
    for (std::size_t k : hard_columns(s, i, alpha)) den += std::exp(static_cast<long double>(s(i, k)) / tau);
    out.push_back(static_cast<double>(std::log(den) - static_cast<long double>(s(i, i)) / tau));
  }
  return out;
}

inline std::vector<double> hard_simple(const Matrix& s, double alpha, double lambda) {
  std::vector<double> out;
  for (std::size_t i = 0; i < s.rows(); ++i) {
    long double neg = 0;
    for (std::size_t k : hard_columns(s, i, alpha)) neg += s(i, k);
    out.push_back(static_cast<double>(-static_cast<long double>(s(i, i)) + lambda * neg));
  }
  return out;
}

/// dL_i/ds_ij = (P_ij - [i == j]) / tau.
inline Matrix contrastive_gradient(const Matrix& s, double tau) {
  Matrix g = probabilities(s, tau);
  for (std::size_t i = 0; i < s.rows(); ++i) {
    for (std::size_t j = 0; j < s.cols(); ++j) g(i, j) /= tau;
    g(i, i) -= 1.0 / tau;
  }
  return g;
}

inline double uniformity(const Matrix& x, double t) {
  long double sum = 0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.rows(); ++j) {
      if (i == j) continue;
      long double d2 = 0;
      for (std::size_t k = 0; k < x.cols(); ++k) {
        const long double diff = static_cast<long double>(x(i, k)) - x(j, k);
        d2 += diff * diff;
      }
      sum += std::exp(-t * d2);
      ++pairs;
    }
  return static_cast<double>(std::log(sum / pairs));
}

inline double tolerance_same_class(const Matrix& x, const std::vector<std::uint32_t>& labels) {
  long double sum = 0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.rows(); ++j)
      if (i != j && labels[i] == labels[j]) {
        sum += dot(x, i, x, j);
        ++pairs;
      }
  return static_cast<double>(sum / pairs);
}

inline double tolerance_all_pairs(const Matrix& x, const std::vector<std::uint32_t>& labels) {
  long double sum = 0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.rows(); ++j)
      if (i != j) {
        if (labels[i] == labels[j]) sum += dot(x, i, x, j);
        ++pairs;
      }
  return static_cast<double>(sum / pairs);
}

inline double knn_purity(const Matrix& x, const std::vector<std::uint32_t>& labels, std::size_t k) {
  const std::size_t n = x.rows();
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::size_t> order;
    std::vector<double> sim(n);
    for (std::size_t j = 0; j < n; ++j) {
      sim[j] = static_cast<double>(dot(x, i, x, j));
      if (j != i) order.push_back(j);
    }
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sim[a] > sim[b]; });
    std::map<std::uint32_t, std::size_t> votes;
    for (std::size_t r = 0; r < k; ++r) ++votes[labels[order[r]]];
    std::uint32_t best = 0;
    std::size_t best_votes = 0;
    for (const auto& [label, count] : votes)
      if (count > best_votes) best = label, best_votes = count;
    hits += best == labels[i];
  }
  return static_cast<double>(hits) / n;
}

/// Mean positive similarity and the mean of the r-th largest negative over rows.
inline std::pair<double, std::vector<double>> local_separation(const Matrix& s, std::size_t k) {
  const std::size_t n = s.rows();
  long double pos = 0;
  std::vector<long double> top(k, 0);
  for (std::size_t i = 0; i < n; ++i) {
    pos += s(i, i);
    std::vector<double> neg;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) neg.push_back(s(i, j));
    std::sort(neg.rbegin(), neg.rend());
    for (std::size_t r = 0; r < k; ++r) top[r] += neg[r];
  }
  std::vector<double> out;
  for (auto v : top) out.push_back(static_cast<double>(v / n));
  return {static_cast<double>(pos / n), out};
}

}  // namespace oracle
