#pragma once

// Slow reference implementations used to cross-check the metric code.

#include <algorithm>
#include <cstddef>
#include <set>
#include <vector>

#include "vacscreen/util/random.hpp"

namespace oracle {

// Recomputes TP/FP/FN by a full rescan at every distinct score.
inline double average_precision(const std::vector<double>& s, const std::vector<bool>& y) {
  std::set<double, std::greater<>> thresholds(s.begin(), s.end());
  double ap = 0.0, prev_recall = 0.0;
  for (double t : thresholds) {
    long tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] >= t) (y[i] ? tp : fp)++;
      else if (y[i]) ++fn;
    }
    double recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
    double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return ap;
}

// Counts every positive/negative pair.
inline double auc(const std::vector<double>& s, const std::vector<bool>& y) {
  double concordant = 0.0;
  long pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!y[i]) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j]) continue;
      ++pairs;
      if (s[i] > s[j]) concordant += 1.0;
      else if (s[i] == s[j]) concordant += 0.5;
    }
  }
  return concordant / static_cast<double>(pairs);
}

struct Instance {
  std::vector<double> scores;
  std::vector<bool> labels;
};

// Size 2..200, scores on a coarse grid so ties are common, both classes present.
inline Instance random_instance(vacscreen::Rng& rng) {
  Instance inst;
  std::size_t n = 2 + rng.below(199);
  std::uint64_t levels = 1 + rng.below(std::max<std::uint64_t>(2, n / 2));
  double rate = 0.05 + 0.9 * rng.uniform();
  for (std::size_t i = 0; i < n; ++i) {
    inst.scores.push_back(static_cast<double>(rng.below(levels)) / static_cast<double>(levels));
    inst.labels.push_back(rng.uniform() < rate);
  }
  inst.labels[0] = true;
  inst.labels[1] = false;
  return inst;
}

}  // namespace oracle
