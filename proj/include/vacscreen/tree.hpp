#pragma once

// Binary decision trees over a FeatureMatrix and the exact greedy split search
// shared by boosting and the random forest. Absent sparse entries read as 0;
// a row goes left when its value is <= the threshold.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include <json.hpp>

#include "vacscreen/error.hpp"
#include "vacscreen/matrix.hpp"

namespace vacscreen::tree {

struct Tree {
  std::vector<std::int32_t> feature;  // -1 marks a leaf
  std::vector<double> threshold;
  std::vector<std::int32_t> left;
  std::vector<std::int32_t> right;
  std::vector<double> value;

  std::size_t size() const { return feature.size(); }

  std::int32_t add_leaf(double v) {
    feature.push_back(-1);
    threshold.push_back(0.0);
    left.push_back(-1);
    right.push_back(-1);
    value.push_back(v);
    return static_cast<std::int32_t>(feature.size() - 1);
  }

  std::size_t leaf_of(const FeatureMatrix& X, std::size_t r) const {
    std::size_t n = 0;
    while (feature[n] >= 0)
      n = static_cast<std::size_t>(X.at(r, static_cast<std::uint32_t>(feature[n])) <= threshold[n] ? left[n] : right[n]);
    return n;
  }

  double predict(const FeatureMatrix& X, std::size_t r) const { return value[leaf_of(X, r)]; }

  std::size_t depth() const {
    std::function<std::size_t(std::size_t)> rec = [&](std::size_t n) -> std::size_t {
      if (feature[n] < 0) return 0;
      return 1 + std::max(rec(static_cast<std::size_t>(left[n])), rec(static_cast<std::size_t>(right[n])));
    };
    return size() ? rec(0) : 0;
  }
};

inline nlohmann::json to_json(const Tree& t) {
  return nlohmann::json{{"feature", t.feature}, {"threshold", t.threshold}, {"left", t.left},
                        {"right", t.right},     {"value", t.value}};
}

inline Tree tree_from_json(const nlohmann::json& j) {
  Tree t;
  t.feature = j.at("feature").get<std::vector<std::int32_t>>();
  t.threshold = j.at("threshold").get<std::vector<double>>();
  t.left = j.at("left").get<std::vector<std::int32_t>>();
  t.right = j.at("right").get<std::vector<std::int32_t>>();
  t.value = j.at("value").get<std::vector<double>>();
  std::size_t n = t.feature.size();
  if (n == 0 || t.threshold.size() != n || t.left.size() != n || t.right.size() != n || t.value.size() != n)
    throw ParseError("classify", "malformed tree");
  for (std::size_t i = 0; i < n; ++i)
    if (t.feature[i] >= 0 && (t.left[i] <= static_cast<std::int32_t>(i) || t.right[i] <= static_cast<std::int32_t>(i) ||
                              t.left[i] >= static_cast<std::int32_t>(n) || t.right[i] >= static_cast<std::int32_t>(n)))
      throw ParseError("classify", "malformed tree: child index out of range");
  return t;
}

struct Split {
  bool found = false;
  std::uint32_t feature = 0;
  double threshold = 0.0;
  double gain = -std::numeric_limits<double>::infinity();
};

inline double midpoint(double a, double b) {
  double m = a + (b - a) / 2;
  return m >= b ? a : m;
}

// Exact greedy search over every distinct value of every feature within the
// node. `stat_of(row)` gives a row's additive statistics; `select` may narrow
// the list of non-constant features (ascending) before evaluation; `score`
// returns the gain of a (left, right) partition or nullopt when invalid. The
// first candidate with the strictly largest gain wins, scanning features and
// thresholds in ascending order.
template <class Stats, class StatOf, class Select, class Score>
Split best_split(const FeatureMatrix& X, const std::vector<std::size_t>& rows, StatOf stat_of, Select select,
                 Score score) {
  struct Entry {
    std::uint32_t feature;
    double value;
    std::uint32_t pos;
  };
  std::vector<Stats> stats(rows.size());
  Stats total{};
  std::vector<Entry> entries;
  for (std::size_t p = 0; p < rows.size(); ++p) {
    stats[p] = stat_of(rows[p]);
    total += stats[p];
    auto idx = X.row_indices(rows[p]);
    auto val = X.row_values(rows[p]);
    for (std::size_t k = 0; k < idx.size(); ++k) entries.push_back({idx[k], val[k], static_cast<std::uint32_t>(p)});
  }
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    if (a.feature != b.feature) return a.feature < b.feature;
    if (a.value != b.value) return a.value < b.value;
    return a.pos < b.pos;
  });

  struct Group {
    std::uint32_t feature;
    std::size_t begin, end;
  };
  std::vector<Group> nonconstant;
  for (std::size_t b = 0; b < entries.size();) {
    std::size_t e = b;
    while (e < entries.size() && entries[e].feature == entries[b].feature) ++e;
    bool has_zero_block = e - b < rows.size();
    bool varies = entries[b].value != entries[e - 1].value ||
                  (has_zero_block && (entries[b].value != 0.0 || entries[e - 1].value != 0.0));
    if (varies) nonconstant.push_back({entries[b].feature, b, e});
    b = e;
  }
  std::vector<std::uint32_t> features;
  features.reserve(nonconstant.size());
  for (const auto& g : nonconstant) features.push_back(g.feature);
  select(features);

  Split best;
  std::size_t gi = 0;
  for (auto f : features) {
    while (gi < nonconstant.size() && nonconstant[gi].feature < f) ++gi;
    if (gi == nonconstant.size() || nonconstant[gi].feature != f) continue;
    const auto& g = nonconstant[gi];
    Stats stored{};
    for (std::size_t k = g.begin; k < g.end; ++k) stored += stats[entries[k].pos];
    Stats zero = total - stored;
    bool zero_pending = g.end - g.begin < rows.size();
    Stats left{};
    std::optional<double> last;
    auto push = [&](double v, const Stats& s) {
      if (last && v > *last) {
        if (auto gain = score(left, total - left); gain && *gain > best.gain) {
          best.found = true;
          best.feature = f;
          best.threshold = midpoint(*last, v);
          best.gain = *gain;
        }
      }
      left += s;
      last = v;
    };
    for (std::size_t k = g.begin; k < g.end; ++k) {
      if (zero_pending && entries[k].value >= 0.0) {
        push(0.0, zero);
        zero_pending = false;
      }
      push(entries[k].value, stats[entries[k].pos]);
    }
    if (zero_pending) push(0.0, zero);
  }
  return best;
}

inline void partition(const FeatureMatrix& X, const std::vector<std::size_t>& rows, std::uint32_t feature,
                      double threshold, std::vector<std::size_t>& left, std::vector<std::size_t>& right) {
  for (auto r : rows) (X.at(r, feature) <= threshold ? left : right).push_back(r);
}

}  // namespace vacscreen::tree
