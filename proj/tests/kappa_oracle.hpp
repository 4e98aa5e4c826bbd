#pragma once

// Test-only Fleiss' kappa computed straight from raw rating records by
// enumerating rater pairs, independent of the count-table implementation.

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vacscreen/annotate.hpp"
#include "vacscreen/util/random.hpp"

namespace oracle {

using vacscreen::annotate::AnnotationRecord;
using vacscreen::annotate::kLabels;

inline std::vector<AnnotationRecord> random_records(vacscreen::Rng& rng, std::size_t subjects, std::size_t raters) {
  std::vector<AnnotationRecord> out;
  // Skewed label distribution so that some tables leave a category unused.
  std::array<std::uint64_t, 3> weight = {1 + rng.below(10), 1 + rng.below(10), rng.below(4)};
  std::uint64_t total = weight[0] + weight[1] + weight[2];
  for (std::size_t i = 0; i < subjects; ++i) {
    for (std::size_t a = 0; a < raters; ++a) {
      std::uint64_t x = rng.below(total);
      std::size_t j = x < weight[0] ? 0 : (x < weight[0] + weight[1] ? 1 : 2);
      out.push_back({"subj" + std::to_string(i), "r" + std::to_string(a), kLabels[j], ""});
    }
  }
  return out;
}

struct PairwiseKappa {
  bool defined = false;
  double kappa = 0, observed = 0, expected = 0;
  std::array<std::optional<double>, 3> per_category;
};

inline PairwiseKappa pairwise_kappa(const std::vector<AnnotationRecord>& recs) {
  std::map<std::string, std::vector<std::size_t>> by_subject;
  for (const auto& r : recs) by_subject[r.sentence_id].push_back(static_cast<std::size_t>(r.label));
  const double N = static_cast<double>(by_subject.size());
  const std::size_t n = by_subject.begin()->second.size();
  std::array<double, 3> share{};
  double sum_pi = 0;
  std::array<double, 3> cross{};  // ordered pairs with exactly the first rater in j
  for (const auto& [id, labels] : by_subject) {
    double agree = 0;
    for (std::size_t a = 0; a < n; ++a) {
      share[labels[a]] += 1.0;
      for (std::size_t b = 0; b < n; ++b) {
        if (a == b) continue;
        if (labels[a] == labels[b]) agree += 1.0;
        else cross[labels[a]] += 1.0;
      }
    }
    sum_pi += agree / static_cast<double>(n * (n - 1));
  }
  PairwiseKappa out;
  out.observed = sum_pi / N;
  double pe = 0;
  for (auto& s : share) {
    s /= N * static_cast<double>(n);
    pe += s * s;
  }
  out.expected = pe;
  if (pe < 1.0) {
    out.defined = true;
    out.kappa = (out.observed - pe) / (1.0 - pe);
  }
  for (std::size_t j = 0; j < 3; ++j) {
    double pq = share[j] * (1.0 - share[j]);
    if (pq > 0) out.per_category[j] = 1.0 - cross[j] / (N * static_cast<double>(n * (n - 1)) * pq);
  }
  return out;
}

}  // namespace oracle
