#pragma once

// Nonparametric model comparison: Friedman chi-squared test on within-subject
// ranks (average ranks for ties, tie-corrected statistic) and Dunn's post-hoc
// pairwise test with Bonferroni adjustment.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "csrecon/common.hpp"

namespace csrecon {

struct StatTestResult {
  std::string test_name;
  double statistic = 0.0;
  double p_value = 1.0;
  double alpha = 0.05;
  // pairwise adjusted p-values, [models x models], 1.0 on the diagonal
  std::vector<std::vector<double>> pairwise_adjusted;
  std::vector<std::vector<double>> pairwise_raw;
};

namespace detail {

// Regularized incomplete gamma functions (series / continued fraction).
inline double gamma_p(double a, double x) {
  if (x < 0.0 || a <= 0.0) throw ParamError("gamma_p: bad arguments");
  if (x == 0.0) return 0.0;
  const double gln = std::lgamma(a);
  if (x < a + 1.0) {  // series
    double ap = a, sum = 1.0 / a, del = sum;
    for (int i = 0; i < 500; ++i) {
      ap += 1.0;
      del *= x / ap;
      sum += del;
      if (std::abs(del) < std::abs(sum) * 1e-15) break;
    }
    return sum * std::exp(-x + a * std::log(x) - gln);
  }
  // continued fraction for Q, then P = 1 - Q
  double b = x + 1.0 - a, c = 1e300, d = 1.0 / b, h = d;
  for (int i = 1; i <= 500; ++i) {
    const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < 1e-300) d = 1e-300;
    c = b + an / c;
    if (std::abs(c) < 1e-300) c = 1e-300;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-15) break;
  }
  return 1.0 - std::exp(-x + a * std::log(x) - gln) * h;
}

inline double chi2_sf(double x, double dof) {
  if (x <= 0.0) return 1.0;
  return 1.0 - gamma_p(dof / 2.0, x / 2.0);
}

inline double normal_sf(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

// Within-row average ranks (1-based), ties share the mean rank.
inline std::vector<double> row_ranks(const std::vector<double>& row) {
  const std::size_t k = row.size();
  std::vector<std::size_t> idx(k);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return row[a] < row[b]; });
  std::vector<double> ranks(k, 0.0);
  std::size_t i = 0;
  while (i < k) {
    std::size_t j = i;
    while (j + 1 < k && row[idx[j + 1]] == row[idx[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[idx[t]] = avg;
    i = j + 1;
  }
  return ranks;
}

}  // namespace detail

// scores: [subjects x models]. Tie-corrected Friedman chi-squared.
inline StatTestResult friedman_test(const std::vector<std::vector<double>>& scores) {
  const std::size_t n = scores.size();
  if (n < 2) throw ParamError("friedman_test: need >= 2 subjects");
  const std::size_t k = scores[0].size();
  if (k < 2) throw ParamError("friedman_test: need >= 2 models");
  for (const auto& row : scores)
    if (row.size() != k) throw ParamError("friedman_test: ragged score matrix");

  std::vector<double> rank_sums(k, 0.0);
  double sum_sq_ranks = 0.0;
  for (const auto& row : scores) {
    const auto ranks = detail::row_ranks(row);
    for (std::size_t j = 0; j < k; ++j) {
      rank_sums[j] += ranks[j];
      sum_sq_ranks += ranks[j] * ranks[j];
    }
  }
  const double nd = static_cast<double>(n), kd = static_cast<double>(k);
  double sum_rj2 = 0.0;
  for (double rj : rank_sums) sum_rj2 += rj * rj;
  const double numer = (kd - 1.0) * (sum_rj2 - nd * nd * kd * (kd + 1.0) * (kd + 1.0) / 4.0);
  const double denom = sum_sq_ranks - nd * kd * (kd + 1.0) * (kd + 1.0) / 4.0;

  StatTestResult res;
  res.test_name = "friedman";
  if (denom == 0.0) {  // all models tie on every subject
    res.statistic = 0.0;
    res.p_value = 1.0;
  } else {
    res.statistic = numer / denom;
    res.p_value = detail::chi2_sf(res.statistic, kd - 1.0);
  }
  return res;
}

// Dunn's pairwise z-tests on Friedman mean ranks, Bonferroni-adjusted.
inline StatTestResult dunn_posthoc(const std::vector<std::vector<double>>& scores,
                                   double alpha = 0.05) {
  const std::size_t n = scores.size();
  if (n < 2) throw ParamError("dunn_posthoc: need >= 2 subjects");
  const std::size_t k = scores[0].size();
  if (k < 2) throw ParamError("dunn_posthoc: need >= 2 models");

  std::vector<double> mean_ranks(k, 0.0);
  for (const auto& row : scores) {
    if (row.size() != k) throw ParamError("dunn_posthoc: ragged score matrix");
    const auto ranks = detail::row_ranks(row);
    for (std::size_t j = 0; j < k; ++j) mean_ranks[j] += ranks[j];
  }
  const double nd = static_cast<double>(n), kd = static_cast<double>(k);
  for (double& r : mean_ranks) r /= nd;

  const double se = std::sqrt(kd * (kd + 1.0) / (6.0 * nd));
  const double m_comparisons = kd * (kd - 1.0) / 2.0;

  StatTestResult res;
  res.test_name = "dunn-bonferroni";
  res.alpha = alpha;
  res.pairwise_raw.assign(k, std::vector<double>(k, 1.0));
  res.pairwise_adjusted.assign(k, std::vector<double>(k, 1.0));
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = a + 1; b < k; ++b) {
      const double z = std::abs(mean_ranks[a] - mean_ranks[b]) / se;
      const double raw = std::min(1.0, 2.0 * detail::normal_sf(z));
      const double adj = std::min(1.0, raw * m_comparisons);
      res.pairwise_raw[a][b] = res.pairwise_raw[b][a] = raw;
      res.pairwise_adjusted[a][b] = res.pairwise_adjusted[b][a] = adj;
    }
  return res;
}

}  // namespace csrecon
