#pragma once

// Experimental machinery: precision-recall metrics, stratified splits and
// folds, grid search, learning curves, leave-one-term-out and discovery of
// unflagged high-scoring sentences.

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vacscreen/classify.hpp"
#include "vacscreen/corpus.hpp"
#include "vacscreen/dataset.hpp"
#include "vacscreen/error.hpp"
#include "vacscreen/features.hpp"
#include "vacscreen/terms.hpp"
#include "vacscreen/util/random.hpp"

namespace vacscreen {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Metrics

struct PRPoint {
  double threshold = 0.0;
  std::size_t true_positive = 0;
  std::size_t false_positive = 0;
  std::size_t false_negative = 0;
  double precision = 0.0;
  double recall = 0.0;
};

namespace detail {

inline void check_scores(const std::vector<double>& scores, const std::vector<bool>& labels) {
  if (scores.size() != labels.size())
    throw InputError("evaluate", std::to_string(scores.size()) + " scores for " + std::to_string(labels.size()) +
                                     " labels");
  if (scores.empty()) throw InputError("evaluate", "no scores");
  for (double s : scores)
    if (std::isnan(s)) throw InputError("evaluate", "NaN score");
}

}  // namespace detail

// One point per distinct score, descending; a threshold t predicts positive
// for every score >= t.
inline std::vector<PRPoint> pr_curve(const std::vector<double>& scores, const std::vector<bool>& labels) {
  detail::check_scores(scores, labels);
  std::size_t positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), true));
  if (positives == 0) throw UndefinedMetricError("evaluate", "precision-recall undefined without positives");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<PRPoint> curve;
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    double t = scores[order[i]];
    while (i < order.size() && scores[order[i]] == t) (labels[order[i++]] ? tp : fp)++;
    PRPoint p;
    p.threshold = t;
    p.true_positive = tp;
    p.false_positive = fp;
    p.false_negative = positives - tp;
    p.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    p.recall = static_cast<double>(tp) / static_cast<double>(positives);
    curve.push_back(p);
  }
  return curve;
}

// sum_i (R_i - R_{i-1}) P_i with R_0 = 0.
inline double average_precision(const std::vector<PRPoint>& curve) {
  double ap = 0.0, prev = 0.0;
  for (const auto& p : curve) {
    ap += (p.recall - prev) * p.precision;
    prev = p.recall;
  }
  return ap;
}

inline double average_precision(const std::vector<double>& scores, const std::vector<bool>& labels) {
  return average_precision(pr_curve(scores, labels));
}

// Probability that a random positive outscores a random negative, ties
// counting one half.
inline double auc_roc(const std::vector<double>& scores, const std::vector<bool>& labels) {
  detail::check_scores(scores, labels);
  std::uint64_t positives = static_cast<std::uint64_t>(std::count(labels.begin(), labels.end(), true));
  std::uint64_t negatives = labels.size() - positives;
  if (positives == 0 || negatives == 0) throw UndefinedMetricError("evaluate", "AUC undefined with a single class");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::uint64_t twice = 0, neg_below = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::uint64_t pos_tie = 0, neg_tie = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) (labels[order[j++]] ? pos_tie : neg_tie)++;
    twice += pos_tie * (2 * neg_below + neg_tie);
    neg_below += neg_tie;
    i = j;
  }
  return static_cast<double>(twice) / (2.0 * static_cast<double>(positives) * static_cast<double>(negatives));
}

inline std::optional<double> try_metric(double (*metric)(const std::vector<double>&, const std::vector<bool>&),
                                        const std::vector<double>& scores, const std::vector<bool>& labels) {
  try {
    return metric(scores, labels);
  } catch (const UndefinedMetricError&) {
    return std::nullopt;
  }
}

inline json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

// ---------------------------------------------------------------------------
// Provenance and method specs

struct Provenance {
  std::uint64_t seed = 0;
  std::string dataset_hash;
  std::string catalog_version;
  json method = nullptr;
};

inline json to_json(const Provenance& p) {
  return {{"seed", p.seed}, {"dataset_hash", p.dataset_hash}, {"catalog_version", p.catalog_version},
          {"method", p.method}};
}

struct MethodSpec {
  FeatureConfig features;
  ModelParams params = LogisticParams{};

  std::string name() const { return to_string(features.kind) + "+" + to_string(kind_of(params)); }
};

inline json to_json(const MethodSpec& m) {
  return {{"name", m.name()},
          {"features", to_json(m.features)},
          {"model", to_string(kind_of(m.params))},
          {"hyperparameters", to_json(m.params)}};
}

inline MethodSpec method_from_json(const json& j, const std::filesystem::path& base = {}) {
  MethodSpec m;
  try {
    if (j.contains("features")) m.features = feature_config_from_json(j.at("features"), base);
    auto kind = parse_model_kind(j.value("model", std::string("logistic")));
    m.params = params_from_json(kind, j.value("hyperparameters", json::object()));
  } catch (const json::exception& e) {
    throw ConfigError("evaluate", std::string("malformed method spec: ") + e.what());
  }
  return m;
}

// ---------------------------------------------------------------------------
// Splits and folds

struct StratumKey {
  bool label;
  std::string group;
  auto operator<=>(const StratumKey&) const = default;
};

inline std::string to_string(const StratumKey& k) { return std::string(k.label ? "hsd" : "non-hsd") + "/" + (k.group.empty() ? "(none)" : k.group); }

inline std::map<StratumKey, std::vector<std::size_t>> strata_of(const LabeledDataset& d) {
  std::map<StratumKey, std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < d.size(); ++i) out[{d.entries[i].hsd, d.entries[i].term_group}].push_back(i);
  return out;
}

struct TrainTestSplit {
  std::vector<std::size_t> train;  // ascending
  std::vector<std::size_t> test;   // ascending
  double test_fraction = 0.3;
  std::uint64_t seed = 0;
};

// Each stratum contributes ceil(n * f - 0.5) items to the test side (halves
// round toward train), chosen by a seeded shuffle keyed on the stratum.
inline TrainTestSplit stratified_split(const LabeledDataset& d, double test_fraction = 0.3, std::uint64_t seed = 0) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw ConfigError("evaluate", "test_fraction must lie strictly between 0 and 1");
  if (d.size() == 0) throw InputError("evaluate", "cannot split an empty dataset");
  TrainTestSplit s;
  s.test_fraction = test_fraction;
  s.seed = seed;
  for (auto& [key, rows] : strata_of(d)) {
    if (rows.empty()) throw InputError("evaluate", "empty stratum " + to_string(key));
    Rng rng(derive_seed(seed, "split/" + to_string(key)));
    rng.shuffle(rows);
    auto n_test = static_cast<std::size_t>(std::ceil(static_cast<double>(rows.size()) * test_fraction - 0.5));
    s.test.insert(s.test.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(n_test));
    s.train.insert(s.train.end(), rows.begin() + static_cast<std::ptrdiff_t>(n_test), rows.end());
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

struct FoldPlan {
  std::size_t k = 0;
  std::uint64_t seed = 0;
  std::vector<std::vector<std::size_t>> folds;  // test rows per fold, ascending
  std::vector<std::string> warnings;

  std::vector<std::size_t> train_rows(std::size_t f) const {
    std::vector<std::size_t> out;
    for (std::size_t g = 0; g < folds.size(); ++g)
      if (g != f) out.insert(out.end(), folds[g].begin(), folds[g].end());
    std::sort(out.begin(), out.end());
    return out;
  }
};

// Strata are visited label by label, large strata (by group) first and strata
// smaller than k pooled after them; items are dealt round-robin with one
// counter shared across all strata.
inline FoldPlan kfold(const std::vector<bool>& labels, const std::vector<std::string>& groups, std::size_t k,
                      std::uint64_t seed) {
  if (k < 2) throw ConfigError("evaluate", "k must be at least 2");
  if (k > labels.size())
    throw InputError("evaluate", "k=" + std::to_string(k) + " exceeds dataset size " + std::to_string(labels.size()));
  if (groups.size() != labels.size()) throw InputError("evaluate", "groups and labels differ in length");
  std::map<StratumKey, std::vector<std::size_t>> strata;
  for (std::size_t i = 0; i < labels.size(); ++i) strata[{labels[i], groups[i]}].push_back(i);
  FoldPlan plan;
  plan.k = k;
  plan.seed = seed;
  plan.folds.resize(k);
  std::size_t counter = 0;
  for (bool label : {false, true}) {
    std::vector<std::vector<std::size_t>> large, pooled;
    std::vector<std::string> pooled_names;
    for (auto& [key, rows] : strata) {
      if (key.label != label) continue;
      Rng rng(derive_seed(seed, "fold/" + to_string(key)));
      rng.shuffle(rows);
      if (rows.size() < k) {
        pooled.push_back(rows);
        pooled_names.push_back(to_string(key));
      } else {
        large.push_back(rows);
      }
    }
    if (!pooled_names.empty()) {
      std::string msg = "strata smaller than k=" + std::to_string(k) + " pooled per label:";
      for (const auto& n : pooled_names) msg += " " + n;
      plan.warnings.push_back(msg);
    }
    for (const auto* list : {&large, &pooled})
      for (const auto& rows : *list)
        for (auto r : rows) plan.folds[counter++ % k].push_back(r);
  }
  for (auto& f : plan.folds) std::sort(f.begin(), f.end());
  return plan;
}

inline FoldPlan kfold(const LabeledDataset& d, std::size_t k, std::uint64_t seed) {
  std::vector<std::string> groups;
  for (const auto& e : d.entries) groups.push_back(e.term_group);
  return kfold(d.labels(), groups, k, seed);
}

inline json to_json(const TrainTestSplit& s, const LabeledDataset& d) {
  json train = json::array(), test = json::array();
  for (auto r : s.train) train.push_back(d.entries[r].sentence_id);
  for (auto r : s.test) test.push_back(d.entries[r].sentence_id);
  return {{"test_fraction", s.test_fraction}, {"seed", s.seed}, {"train", train}, {"test", test}};
}

// ---------------------------------------------------------------------------
// Fit-and-score

struct ScoredFold {
  std::vector<double> scores;
  std::vector<bool> labels;
  std::optional<double> ap;
  std::optional<double> auc;
};

inline std::vector<LabeledEntry> select_entries(const LabeledDataset& d, const std::vector<std::size_t>& rows) {
  std::vector<LabeledEntry> out;
  out.reserve(rows.size());
  for (auto r : rows) out.push_back(d.entries.at(r));
  return out;
}

inline std::vector<bool> select_labels(const LabeledDataset& d, const std::vector<std::size_t>& rows) {
  std::vector<bool> out;
  out.reserve(rows.size());
  for (auto r : rows) out.push_back(d.entries.at(r).hsd);
  return out;
}

inline ScoredFold score_fold(const TrainedModel& model, const FeatureMatrix& X_test, std::vector<bool> y_test) {
  ScoredFold out;
  out.scores = predict(model, X_test);
  out.labels = std::move(y_test);
  out.ap = try_metric(static_cast<double (*)(const std::vector<double>&, const std::vector<bool>&)>(average_precision),
                      out.scores, out.labels);
  out.auc = try_metric(auc_roc, out.scores, out.labels);
  return out;
}

// Features are fitted on the training rows only.
inline ScoredFold fit_and_score(const MethodSpec& method, const LabeledDataset& d, const std::vector<std::size_t>& train,
                                const std::vector<std::size_t>& test, std::uint64_t model_seed) {
  auto train_entries = select_entries(d, train);
  auto featurizer = Featurizer::fit(method.features, train_entries);
  auto X_train = featurizer.transform(train_entries);
  auto model = vacscreen::train(method.params, X_train, select_labels(d, train), model_seed, featurizer.descriptor());
  return score_fold(model, featurizer.transform(select_entries(d, test)), select_labels(d, test));
}

inline std::uint64_t fold_model_seed(std::uint64_t seed, std::size_t fold) { return derive_seed(seed, "fold-model", fold); }
inline std::uint64_t fold_plan_seed(std::uint64_t seed) { return derive_seed(seed, "folds"); }

struct CrossValidation {
  FoldPlan plan;
  std::vector<ScoredFold> folds;
};

inline CrossValidation cross_validate(const MethodSpec& method, const LabeledDataset& d, std::size_t k,
                                      std::uint64_t seed) {
  CrossValidation cv;
  cv.plan = kfold(d, k, fold_plan_seed(seed));
  for (std::size_t f = 0; f < k; ++f)
    cv.folds.push_back(fit_and_score(method, d, cv.plan.train_rows(f), cv.plan.folds[f], fold_model_seed(seed, f)));
  return cv;
}

// ---------------------------------------------------------------------------
// Evaluation report

struct EvalReport {
  Provenance provenance;
  std::size_t n = 0;
  std::size_t positives = 0;
  std::optional<double> ap;
  std::optional<double> auc;
  std::vector<PRPoint> pr_curve;
};

inline EvalReport evaluate_scores(const std::vector<double>& scores, const std::vector<bool>& labels,
                                  Provenance provenance = {}) {
  detail::check_scores(scores, labels);
  EvalReport r;
  r.provenance = std::move(provenance);
  r.n = labels.size();
  r.positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), true));
  if (r.positives > 0) {
    r.pr_curve = pr_curve(scores, labels);
    r.ap = average_precision(r.pr_curve);
  }
  r.auc = try_metric(auc_roc, scores, labels);
  return r;
}

inline json to_json(const PRPoint& p) {
  return {{"threshold", p.threshold},           {"true_positive", p.true_positive},
          {"false_positive", p.false_positive}, {"false_negative", p.false_negative},
          {"precision", p.precision},           {"recall", p.recall}};
}

inline json to_json(const EvalReport& r) {
  json curve = json::array();
  for (const auto& p : r.pr_curve) curve.push_back(to_json(p));
  return {{"kind", "evaluation"},
          {"provenance", to_json(r.provenance)},
          {"n", r.n},
          {"positives", r.positives},
          {"ap", opt_json(r.ap)},
          {"auc", opt_json(r.auc)},
          {"n_thresholds", r.pr_curve.size()},
          {"pr_curve", curve}};
}

inline std::string format_double(double v) {
  std::ostringstream ss;
  ss.precision(17);
  ss << v;
  return ss.str();
}

inline std::string pr_curve_csv(const std::vector<PRPoint>& curve) {
  std::string out = "threshold,true_positive,false_positive,false_negative,precision,recall\n";
  for (const auto& p : curve)
    out += format_double(p.threshold) + "," + std::to_string(p.true_positive) + "," + std::to_string(p.false_positive) +
           "," + std::to_string(p.false_negative) + "," + format_double(p.precision) + "," + format_double(p.recall) +
           "\n";
  return out;
}

// Precision and recall of flagging every sentence with an unsuppressed
// catalog match.
struct BaselineReport {
  std::size_t flagged = 0;
  std::size_t flagged_positive = 0;
  std::size_t positives = 0;
  std::optional<double> precision;
  std::optional<double> recall;
};

inline BaselineReport evaluate_baseline(const LabeledDataset& d, const terms::TermCatalog& catalog) {
  BaselineReport r;
  for (const auto& e : d.entries) {
    bool f = terms::baseline_flag_text(e.text, catalog);
    r.flagged += f;
    r.flagged_positive += f && e.hsd;
    r.positives += e.hsd;
  }
  if (r.flagged) r.precision = static_cast<double>(r.flagged_positive) / static_cast<double>(r.flagged);
  if (r.positives) r.recall = static_cast<double>(r.flagged_positive) / static_cast<double>(r.positives);
  return r;
}

inline json to_json(const BaselineReport& r) {
  return {{"flagged", r.flagged},
          {"flagged_positive", r.flagged_positive},
          {"positives", r.positives},
          {"precision", opt_json(r.precision)},
          {"recall", opt_json(r.recall)}};
}

// ---------------------------------------------------------------------------
// Grid search

enum class Metric { ap, auc };

inline std::string to_string(Metric m) { return m == Metric::ap ? "ap" : "auc"; }

inline Metric parse_metric(std::string_view s) {
  if (s == "ap") return Metric::ap;
  if (s == "auc") return Metric::auc;
  throw ConfigError("evaluate", "unknown metric '" + std::string(s) + "' (expected ap or auc)");
}

struct GridRow {
  ModelParams params;
  std::vector<std::optional<double>> fold_ap, fold_auc;
  std::optional<double> mean_ap, mean_auc;
  std::optional<std::string> error;
};

struct GridSearchResult {
  Provenance provenance;
  Metric metric = Metric::ap;
  std::size_t k = 4;
  std::vector<GridRow> rows;
  std::optional<std::size_t> best_by_ap, best_by_auc;
  std::vector<std::string> warnings;

  std::optional<std::size_t> selected() const { return metric == Metric::ap ? best_by_ap : best_by_auc; }
};

namespace detail {

inline std::optional<double> mean_of(const std::vector<std::optional<double>>& v) {
  if (v.empty()) return std::nullopt;
  double s = 0.0;
  for (const auto& x : v) {
    if (!x) return std::nullopt;
    s += *x;
  }
  return s / static_cast<double>(v.size());
}

inline std::optional<std::size_t> argmax(const std::vector<GridRow>& rows, bool by_ap) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& v = by_ap ? rows[i].mean_ap : rows[i].mean_auc;
    if (!v) continue;
    if (!best || *v > *(by_ap ? rows[*best].mean_ap : rows[*best].mean_auc)) best = i;
  }
  return best;
}

}  // namespace detail

// Every grid point is scored by its mean metric over k stratified folds.
// Ties go to the earliest point in grid order. Points whose training fails
// are recorded with their error and skipped.
inline GridSearchResult grid_search(const FeatureConfig& features, const HyperparameterGrid& grid,
                                    const LabeledDataset& train, std::size_t k = 4, Metric metric = Metric::ap,
                                    std::uint64_t seed = 0) {
  auto points = grid.expand();
  if (points.empty()) throw ConfigError("evaluate", "empty hyperparameter grid");
  GridSearchResult res;
  res.metric = metric;
  res.k = k;
  res.provenance.seed = seed;
  res.provenance.dataset_hash = dataset_hash(train);
  res.provenance.method = {{"features", to_json(features)}, {"grid", to_json(grid)}};
  auto plan = kfold(train, k, fold_plan_seed(seed));
  res.warnings = plan.warnings;
  res.rows.resize(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) res.rows[i].params = points[i];
  for (std::size_t f = 0; f < k; ++f) {
    auto train_entries = select_entries(train, plan.train_rows(f));
    auto featurizer = Featurizer::fit(features, train_entries);
    auto X_train = featurizer.transform(train_entries);
    auto y_train = select_labels(train, plan.train_rows(f));
    auto X_test = featurizer.transform(select_entries(train, plan.folds[f]));
    auto y_test = select_labels(train, plan.folds[f]);
    for (std::size_t i = 0; i < points.size(); ++i) {
      auto& row = res.rows[i];
      if (row.error) continue;
      try {
        auto model = vacscreen::train(points[i], X_train, y_train, fold_model_seed(seed, f), featurizer.descriptor());
        auto scored = score_fold(model, X_test, y_test);
        row.fold_ap.push_back(scored.ap);
        row.fold_auc.push_back(scored.auc);
      } catch (const Error& e) {
        row.error = e.what();
        res.warnings.push_back("grid point " + std::to_string(i) + " skipped: " + e.what());
      }
    }
  }
  for (auto& row : res.rows) {
    if (row.error) continue;
    row.mean_ap = detail::mean_of(row.fold_ap);
    row.mean_auc = detail::mean_of(row.fold_auc);
  }
  res.best_by_ap = detail::argmax(res.rows, true);
  res.best_by_auc = detail::argmax(res.rows, false);
  return res;
}

inline json to_json(const GridSearchResult& r) {
  json rows = json::array();
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    const auto& row = r.rows[i];
    json fa = json::array(), fu = json::array();
    for (const auto& v : row.fold_ap) fa.push_back(opt_json(v));
    for (const auto& v : row.fold_auc) fu.push_back(opt_json(v));
    rows.push_back({{"index", i},
                    {"hyperparameters", to_json(row.params)},
                    {"fold_ap", fa},
                    {"fold_auc", fu},
                    {"mean_ap", opt_json(row.mean_ap)},
                    {"mean_auc", opt_json(row.mean_auc)},
                    {"error", row.error ? json(*row.error) : json(nullptr)}});
  }
  auto idx = [](const std::optional<std::size_t>& v) { return v ? json(*v) : json(nullptr); };
  auto sel = r.selected();
  return {{"kind", "gridsearch"},
          {"provenance", to_json(r.provenance)},
          {"metric", to_string(r.metric)},
          {"k", r.k},
          {"rows", rows},
          {"best_by_ap", idx(r.best_by_ap)},
          {"best_by_auc", idx(r.best_by_auc)},
          {"selected", idx(sel)},
          {"selected_hyperparameters", sel ? to_json(r.rows[*sel].params) : json(nullptr)},
          {"warnings", r.warnings}};
}

// ---------------------------------------------------------------------------
// Learning curve

inline std::vector<double> log_fractions(std::size_t n = 20, double lo = 0.01) {
  std::vector<double> out(n);
  for (std::size_t j = 0; j < n; ++j)
    out[j] = lo * std::pow(1.0 / lo, static_cast<double>(j) / static_cast<double>(n - 1));
  out.back() = 1.0;
  return out;
}

// Label-stratified nested subsample of `train` (ascending): per label the
// first ceil(f * n_c - 0.5) rows of one seeded permutation, so every smaller
// fraction's rows are a subset of every larger one's. Returns nullopt when a
// class would be empty.
inline std::optional<std::vector<std::size_t>> nested_subsample(const LabeledDataset& d,
                                                                const std::vector<std::size_t>& train, double fraction,
                                                                std::uint64_t seed) {
  std::vector<std::size_t> out;
  for (bool label : {false, true}) {
    std::vector<std::size_t> rows;
    for (auto r : train)
      if (d.entries[r].hsd == label) rows.push_back(r);
    Rng rng(derive_seed(seed, label ? "subsample/hsd" : "subsample/non-hsd"));
    rng.shuffle(rows);
    auto m = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(rows.size()) - 0.5));
    if (m == 0) return std::nullopt;
    out.insert(out.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(std::min(m, rows.size())));
  }
  std::sort(out.begin(), out.end());
  return out;
}

struct LearningCurve {
  Provenance provenance;
  std::vector<double> fractions;
  std::vector<std::vector<std::optional<double>>> ap;  // [fold][fraction]
  std::vector<std::vector<std::size_t>> train_sizes;   // [fold][fraction]
  std::vector<std::optional<double>> mean, stddev;     // per fraction
  std::vector<std::string> warnings;
};

inline std::uint64_t subsample_seed(std::uint64_t seed, std::size_t fold) { return derive_seed(seed, "subsample", fold); }

// 10-fold plan; per fold, nested subsamples of the training folds at 20
// log-spaced fractions, each scored by AP on the held-out fold.
inline LearningCurve learning_curve(const MethodSpec& method, const LabeledDataset& d, std::uint64_t seed,
                                    std::size_t n_folds = 10, std::size_t n_fractions = 20, double min_fraction = 0.01) {
  LearningCurve lc;
  lc.provenance.seed = seed;
  lc.provenance.dataset_hash = dataset_hash(d);
  lc.provenance.method = to_json(method);
  lc.fractions = log_fractions(n_fractions, min_fraction);
  auto plan = kfold(d, n_folds, fold_plan_seed(seed));
  lc.warnings = plan.warnings;
  lc.ap.assign(n_folds, std::vector<std::optional<double>>(n_fractions));
  lc.train_sizes.assign(n_folds, std::vector<std::size_t>(n_fractions, 0));
  for (std::size_t f = 0; f < n_folds; ++f) {
    auto train = plan.train_rows(f);
    for (std::size_t j = 0; j < n_fractions; ++j) {
      auto rows = nested_subsample(d, train, lc.fractions[j], subsample_seed(seed, f));
      if (!rows) {
        lc.warnings.push_back("fold " + std::to_string(f) + " fraction " + format_double(lc.fractions[j]) +
                              " skipped: subsample lacks a class");
        continue;
      }
      lc.train_sizes[f][j] = rows->size();
      try {
        lc.ap[f][j] = fit_and_score(method, d, *rows, plan.folds[f], fold_model_seed(seed, f)).ap;
      } catch (const Error& e) {
        lc.warnings.push_back("fold " + std::to_string(f) + " fraction " + format_double(lc.fractions[j]) +
                              " skipped: " + e.what());
      }
    }
  }
  for (std::size_t j = 0; j < n_fractions; ++j) {
    std::vector<double> vals;
    for (std::size_t f = 0; f < n_folds; ++f)
      if (lc.ap[f][j]) vals.push_back(*lc.ap[f][j]);
    if (vals.empty()) {
      lc.mean.push_back(std::nullopt);
      lc.stddev.push_back(std::nullopt);
      continue;
    }
    double m = std::accumulate(vals.begin(), vals.end(), 0.0) / static_cast<double>(vals.size());
    lc.mean.push_back(m);
    if (vals.size() < 2) {
      lc.stddev.push_back(std::nullopt);
      continue;
    }
    double ss = 0.0;
    for (double v : vals) ss += (v - m) * (v - m);
    lc.stddev.push_back(std::sqrt(ss / static_cast<double>(vals.size() - 1)));
  }
  return lc;
}

inline json to_json(const LearningCurve& lc) {
  json ap = json::array();
  for (const auto& fold : lc.ap) {
    json row = json::array();
    for (const auto& v : fold) row.push_back(opt_json(v));
    ap.push_back(row);
  }
  json mean = json::array(), sd = json::array();
  for (const auto& v : lc.mean) mean.push_back(opt_json(v));
  for (const auto& v : lc.stddev) sd.push_back(opt_json(v));
  return {{"kind", "learning-curve"},
          {"provenance", to_json(lc.provenance)},
          {"fractions", lc.fractions},
          {"ap", ap},
          {"train_sizes", lc.train_sizes},
          {"mean_ap", mean},
          {"std_ap", sd},
          {"warnings", lc.warnings}};
}

inline std::string learning_curve_csv(const LearningCurve& lc) {
  std::string out = "fraction,mean_ap,std_ap";
  for (std::size_t f = 0; f < lc.ap.size(); ++f) out += ",fold_" + std::to_string(f);
  out += "\n";
  auto cell = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
  for (std::size_t j = 0; j < lc.fractions.size(); ++j) {
    out += format_double(lc.fractions[j]) + "," + cell(lc.mean[j]) + "," + cell(lc.stddev[j]);
    for (const auto& fold : lc.ap) out += "," + cell(fold[j]);
    out += "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Leave one term out

struct LotoRun {
  std::string group;
  std::string method;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
  std::size_t test_positives = 0;
  std::optional<double> ap;
  std::optional<double> auc;
  std::optional<std::string> note;
};

struct LotoReport {
  Provenance provenance;
  std::vector<std::string> groups;
  std::vector<LotoRun> runs;
};

// Every named term group is held out in turn; sentences without a group always
// stay in training. `groups` fixes the order (defaults to first appearance).
inline LotoReport leave_one_term_out(const std::vector<MethodSpec>& methods, const LabeledDataset& d,
                                     std::uint64_t seed, std::vector<std::string> groups = {}) {
  if (groups.empty()) {
    for (const auto& e : d.entries)
      if (!e.term_group.empty() && std::find(groups.begin(), groups.end(), e.term_group) == groups.end())
        groups.push_back(e.term_group);
  }
  if (groups.size() < 2) throw InputError("evaluate", "leave-one-term-out needs at least two term groups");
  LotoReport rep;
  rep.groups = groups;
  rep.provenance.seed = seed;
  rep.provenance.dataset_hash = dataset_hash(d);
  rep.provenance.method = json::array();
  for (const auto& m : methods) rep.provenance.method.push_back(to_json(m));
  for (std::size_t g = 0; g < groups.size(); ++g) {
    std::vector<std::size_t> train, test;
    for (std::size_t i = 0; i < d.size(); ++i) (d.entries[i].term_group == groups[g] ? test : train).push_back(i);
    std::set<std::string> train_ids;
    for (auto r : train) train_ids.insert(d.entries[r].sentence_id);
    for (auto r : test)
      if (train_ids.count(d.entries[r].sentence_id))
        throw InputError("evaluate", "sentence '" + d.entries[r].sentence_id + "' of held-out group '" + groups[g] +
                                         "' also appears in training");
    for (std::size_t m = 0; m < methods.size(); ++m) {
      LotoRun run;
      run.group = groups[g];
      run.method = methods[m].name();
      run.train_size = train.size();
      run.test_size = test.size();
      for (auto r : test) run.test_positives += d.entries[r].hsd;
      if (test.empty()) {
        run.note = "no sentences in group";
      } else {
        try {
          auto scored = fit_and_score(methods[m], d, train, test, derive_seed(seed, "loto/" + groups[g], m));
          run.ap = scored.ap;
          run.auc = scored.auc;
          if (!run.ap) run.note = "AP undefined: held-out group has no HSD sentences";
          else if (!run.auc) run.note = "AUC undefined: held-out group has a single class";
        } catch (const Error& e) {
          run.note = e.what();
        }
      }
      rep.runs.push_back(std::move(run));
    }
  }
  return rep;
}

inline json to_json(const LotoReport& r) {
  json runs = json::array();
  for (const auto& run : r.runs)
    runs.push_back({{"group", run.group},
                    {"method", run.method},
                    {"train_size", run.train_size},
                    {"test_size", run.test_size},
                    {"test_positives", run.test_positives},
                    {"ap", opt_json(run.ap)},
                    {"auc", opt_json(run.auc)},
                    {"note", run.note ? json(*run.note) : json(nullptr)}});
  return {{"kind", "loto"}, {"provenance", to_json(r.provenance)}, {"groups", r.groups}, {"runs", runs}};
}

// ---------------------------------------------------------------------------
// Discovery of unflagged high-scoring sentences

struct DiscoveryItem {
  std::string sentence_id;
  std::string text;
  double score = 0.0;
  std::vector<std::string> suggested_tags;
  std::optional<std::string> verdict;  // filled in by a reviewer
};

struct DiscoveryReport {
  Provenance provenance;
  std::size_t k = 100;
  std::size_t candidates = 0;
  std::vector<DiscoveryItem> items;
  std::optional<std::string> note;
};

// Heuristic hints for reviewers: Dutch occupation nouns ending in "man"
// (vakman, timmerman) or in a female-only suffix (-ster, -trice, -euse).
inline std::vector<std::string> suggest_tags(std::string_view sentence) {
  std::set<std::string> tags;
  auto ends = [](const std::string& w, std::string_view suf) {
    return w.size() > suf.size() + 2 && w.compare(w.size() - suf.size(), suf.size(), suf) == 0;
  };
  for (const auto& tok : text::tokenize(sentence)) {
    if (ends(tok, "man")) tags.insert("male-suffixed occupation");
    if (ends(tok, "ster") || ends(tok, "trice") || ends(tok, "euse")) tags.insert("female-only occupation form");
  }
  return {tags.begin(), tags.end()};
}

inline DiscoveryReport discover_unknown(const TrainedModel& model, const Featurizer& featurizer,
                                        const std::vector<corpus::Sentence>& sentences,
                                        const terms::TermCatalog& catalog, std::size_t k = 100) {
  if (k == 0) throw ConfigError("evaluate", "K must be positive");
  DiscoveryReport rep;
  rep.k = k;
  rep.provenance.catalog_version = catalog.version();
  std::vector<LabeledEntry> candidates;
  for (const auto& s : sentences)
    if (!terms::baseline_flag(s, catalog)) candidates.push_back({s.id, s.text, "", false});
  rep.candidates = candidates.size();
  if (candidates.empty()) {
    rep.note = "no unflagged sentences: every sentence matches the catalog";
    return rep;
  }
  auto scores = predict(model, featurizer.transform(candidates), featurizer.descriptor());
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  if (candidates.size() < k)
    rep.note = "only " + std::to_string(candidates.size()) + " unflagged sentences, fewer than K=" + std::to_string(k);
  for (std::size_t i = 0; i < std::min(k, order.size()); ++i) {
    const auto& c = candidates[order[i]];
    rep.items.push_back({c.sentence_id, c.text, scores[order[i]], suggest_tags(c.text), std::nullopt});
  }
  return rep;
}

inline json to_json(const DiscoveryReport& r) {
  json items = json::array();
  for (std::size_t i = 0; i < r.items.size(); ++i) {
    const auto& it = r.items[i];
    items.push_back({{"rank", i + 1},
                     {"sentence_id", it.sentence_id},
                     {"text", it.text},
                     {"score", it.score},
                     {"suggested_tags", it.suggested_tags},
                     {"verdict", it.verdict ? json(*it.verdict) : json(nullptr)}});
  }
  return {{"kind", "discovery"},
          {"provenance", to_json(r.provenance)},
          {"k", r.k},
          {"candidates", r.candidates},
          {"items", items},
          {"note", r.note ? json(*r.note) : json(nullptr)}};
}

// ---------------------------------------------------------------------------
// Synthetic corpus as a labeled dataset

inline LabeledDataset to_dataset(const corpus::SyntheticCorpus& c) {
  LabeledDataset d;
  for (std::size_t i = 0; i < c.sentences.size(); ++i)
    d.entries.push_back({c.sentences[i].id, c.sentences[i].text, c.groups[i], c.labels[i]});
  return d;
}

}  // namespace vacscreen
