#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "probe3d/error.hpp"

namespace probe3d {

/// ROC AUC as the Mann-Whitney statistic: the fraction of (positive,
/// negative) pairs where the positive scores higher, ties counting one half.
///
/// Computed from rank sums in a single sort. Ranks are kept doubled (a tie
/// group spanning sorted positions [lo, hi) gets doubled average rank
/// lo + hi + 1) so the count stays an exact integer; the final value is
/// 2U / (2 n_pos n_neg).
inline double roc_auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size())
    throw MetricError("scores and labels differ in length");
  const std::size_t n = scores.size();
  std::uint64_t n_pos = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (std::isnan(scores[i])) throw MetricError("score " + std::to_string(i) + " is NaN");
    if (labels[i] > 1) throw MetricError("labels must be 0 or 1");
    n_pos += labels[i];
  }
  const std::uint64_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw MetricError("AUC needs both positive and negative samples");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  std::uint64_t rank_sum_x2 = 0;
  for (std::size_t lo = 0; lo < n;) {
    std::size_t hi = lo + 1;
    while (hi < n && scores[order[hi]] == scores[order[lo]]) ++hi;
    std::uint64_t pos_in_group = 0;
    for (std::size_t k = lo; k < hi; ++k) pos_in_group += labels[order[k]];
    rank_sum_x2 += pos_in_group * (lo + hi + 1);
    lo = hi;
  }
  const std::uint64_t u_x2 = rank_sum_x2 - n_pos * (n_pos + 1);
  return static_cast<double>(u_x2) / (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

struct ScoredSet {
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;  // 1 = positive
};

inline double roc_auc(const ScoredSet& s) { return roc_auc(s.scores, s.labels); }

}  // namespace probe3d
