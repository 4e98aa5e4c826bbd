#pragma once

// Annotation methodology: stratified assignment with a shared overlap subset,
// three-way labels, Fleiss' kappa and majority-vote pooling.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "vacscreen/dataset.hpp"
#include "vacscreen/error.hpp"
#include "vacscreen/util/apportion.hpp"
#include "vacscreen/util/jsonl.hpp"
#include "vacscreen/util/random.hpp"

namespace vacscreen::annotate {

using nlohmann::json;

enum class Label { yes = 0, no = 1, unknown = 2 };
inline constexpr std::size_t kCategoryCount = 3;
inline constexpr std::array<Label, kCategoryCount> kLabels = {Label::yes, Label::no, Label::unknown};

inline std::string to_string(Label l) {
  switch (l) {
    case Label::yes: return "yes";
    case Label::no: return "no";
    case Label::unknown: return "?";
  }
  return "?";
}

inline Label parse_label(std::string_view s) {
  if (s == "yes") return Label::yes;
  if (s == "no") return Label::no;
  if (s == "?") return Label::unknown;
  throw InputError("annotate", "label must be one of yes, no, ? (got \"" + std::string(s) + "\")");
}

struct AnnotationRecord {
  std::string sentence_id;
  std::string annotator_id;
  Label label = Label::unknown;
  std::string timestamp;
};

inline json to_json(const AnnotationRecord& r) {
  return json{{"sentence_id", r.sentence_id},
              {"annotator_id", r.annotator_id},
              {"label", to_string(r.label)},
              {"timestamp", r.timestamp}};
}

inline AnnotationRecord record_from_json(const json& j) {
  auto str = [&](const char* key) {
    if (!j.is_object() || !j.contains(key) || !j[key].is_string())
      throw InputError("annotate", std::string("annotation record lacks string field \"") + key + "\"");
    return j[key].get<std::string>();
  };
  AnnotationRecord r;
  r.sentence_id = str("sentence_id");
  r.annotator_id = str("annotator_id");
  r.label = parse_label(str("label"));
  r.timestamp = j.contains("timestamp") && j["timestamp"].is_string() ? j["timestamp"].get<std::string>() : "";
  return r;
}

inline std::vector<AnnotationRecord> load_records(const std::filesystem::path& path) {
  std::vector<AnnotationRecord> out;
  for (const auto& rec : io::read_jsonl(path, "annotate")) {
    try {
      out.push_back(record_from_json(rec.value));
    } catch (const InputError& e) {
      throw ParseError("annotate", path.filename().string() + ":" + std::to_string(rec.line) + ": " + e.what());
    }
  }
  return out;
}

// Keeps the last record per (sentence, annotator), in order of first
// appearance.
inline std::vector<AnnotationRecord> resolve_latest(const std::vector<AnnotationRecord>& records) {
  std::map<std::pair<std::string, std::string>, std::size_t> slot;
  std::vector<AnnotationRecord> out;
  for (const auto& r : records) {
    auto key = std::make_pair(r.sentence_id, r.annotator_id);
    auto it = slot.find(key);
    if (it == slot.end()) {
      slot.emplace(key, out.size());
      out.push_back(r);
    } else {
      out[it->second] = r;
    }
  }
  return out;
}

// --- assignment -------------------------------------------------------------

struct StratifiedItem {
  std::string id;
  std::string group;
};

struct AssignmentPlan {
  std::uint64_t seed = 0;
  std::vector<std::string> roster;
  std::vector<std::string> overlap;                              // queue order
  std::map<std::string, std::vector<std::string>> exclusive;     // annotator -> queue order
  std::map<std::string, std::string> strata;                     // sentence -> group

  // Plan order for one annotator: the shared subset first, then their own.
  std::vector<std::string> queue_for(const std::string& annotator) const {
    std::vector<std::string> out = overlap;
    if (auto it = exclusive.find(annotator); it != exclusive.end())
      out.insert(out.end(), it->second.begin(), it->second.end());
    return out;
  }

  bool in_overlap(const std::string& id) const {
    return std::find(overlap.begin(), overlap.end(), id) != overlap.end();
  }
};

inline json to_json(const AssignmentPlan& p) {
  json ex = json::object();
  for (const auto& [a, ids] : p.exclusive) ex[a] = ids;
  return json{{"seed", p.seed}, {"roster", p.roster}, {"overlap", p.overlap}, {"exclusive", ex}, {"strata", p.strata}};
}

inline AssignmentPlan plan_from_json(const json& j) {
  AssignmentPlan p;
  try {
    p.seed = j.value("seed", std::uint64_t{0});
    p.roster = j.at("roster").get<std::vector<std::string>>();
    p.overlap = j.at("overlap").get<std::vector<std::string>>();
    for (const auto& [a, ids] : j.at("exclusive").items()) p.exclusive[a] = ids.get<std::vector<std::string>>();
    p.strata = j.at("strata").get<std::map<std::string, std::string>>();
  } catch (const json::exception& e) {
    throw ParseError("annotate", std::string("malformed assignment plan: ") + e.what());
  }
  return p;
}

// The overlap subset is drawn per group by largest remainder, so each group's
// share of the overlap is within one sentence of its share of the input; the
// remainder is dealt round-robin over the roster, group by group, so every
// annotator's load differs by at most one overall and per group.
inline AssignmentPlan plan_assignment(const std::vector<StratifiedItem>& items,
                                      const std::vector<std::string>& roster, std::size_t overlap_size,
                                      std::uint64_t seed) {
  if (roster.empty()) throw ConfigError("annotate", "annotator roster is empty");
  if (std::set<std::string>(roster.begin(), roster.end()).size() != roster.size())
    throw ConfigError("annotate", "annotator roster has duplicates");
  if (overlap_size > items.size())
    throw InputError("annotate", "overlap size " + std::to_string(overlap_size) + " exceeds " +
                                     std::to_string(items.size()) + " sentences");

  AssignmentPlan plan;
  plan.seed = seed;
  plan.roster = roster;
  std::map<std::string, std::vector<std::string>> by_group;
  for (const auto& it : items) {
    if (!plan.strata.emplace(it.id, it.group).second)
      throw InputError("annotate", "duplicate sentence id '" + it.id + "'");
    by_group[it.group].push_back(it.id);
  }

  std::vector<double> weights;
  std::vector<std::size_t> caps;
  for (const auto& [g, ids] : by_group) {
    weights.push_back(static_cast<double>(ids.size()));
    caps.push_back(ids.size());
  }
  auto quotas = apportion(overlap_size, weights, caps);

  std::vector<std::string> deal;
  std::size_t gi = 0;
  for (auto& [g, ids] : by_group) {
    Rng rng(derive_seed(seed, "assign:" + g));
    rng.shuffle(ids);
    plan.overlap.insert(plan.overlap.end(), ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(quotas[gi]));
    deal.insert(deal.end(), ids.begin() + static_cast<std::ptrdiff_t>(quotas[gi]), ids.end());
    ++gi;
  }
  for (const auto& a : roster) plan.exclusive[a];
  for (std::size_t i = 0; i < deal.size(); ++i) plan.exclusive[roster[i % roster.size()]].push_back(deal[i]);

  Rng order(derive_seed(seed, "assign:order"));
  order.shuffle(plan.overlap);
  for (const auto& a : roster) {
    Rng r(derive_seed(seed, "assign:order:" + a));
    r.shuffle(plan.exclusive[a]);
  }
  return plan;
}

// --- agreement --------------------------------------------------------------

struct CategoryAgreement {
  std::optional<double> kappa;  // undefined when no rater used the category (or all did)
  double proportion = 0.0;      // p_j
  std::optional<double> standard_error;
  std::optional<double> z;
  std::optional<double> p_value;
};

struct AgreementReport {
  double kappa_overall = 0.0;
  std::array<CategoryAgreement, kCategoryCount> per_category{};
  std::size_t subject_count = 0;
  std::size_t rater_count = 0;
  std::size_t category_count = kCategoryCount;
  double observed_agreement = 0.0;  // P-bar
  double expected_agreement = 0.0;  // P-bar_e
  std::optional<double> standard_error;
  std::optional<double> z;
  std::optional<double> p_value;  // two-sided, normal approximation
};

// Subject-by-category count table; rows are subjects in id order.
struct RatingTable {
  std::vector<std::string> subjects;
  std::vector<std::array<std::int64_t, kCategoryCount>> counts;
  std::int64_t raters = 0;
};

inline RatingTable rating_table(const std::vector<AnnotationRecord>& records) {
  std::map<std::string, std::array<std::int64_t, kCategoryCount>> counts;
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& r : records) {
    if (!seen.emplace(r.sentence_id, r.annotator_id).second)
      throw InputError("annotate", "duplicate record for sentence '" + r.sentence_id + "' by annotator '" +
                                       r.annotator_id + "'");
    counts[r.sentence_id][static_cast<std::size_t>(r.label)] += 1;
  }
  if (counts.empty()) throw InputError("annotate", "no annotation records");

  std::map<std::int64_t, std::size_t> freq;
  for (const auto& [id, c] : counts) ++freq[c[0] + c[1] + c[2]];
  std::int64_t modal = 0;
  std::size_t best = 0;
  for (const auto& [n, f] : freq)
    if (f > best) {
      best = f;
      modal = n;
    }
  std::vector<std::string> offending;
  for (const auto& [id, c] : counts) {
    std::int64_t n = c[0] + c[1] + c[2];
    if (n != modal || n < 2) offending.push_back(id + " (" + std::to_string(n) + " raters)");
  }
  if (!offending.empty()) {
    std::string list;
    for (const auto& o : offending) list += (list.empty() ? "" : ", ") + o;
    throw InputError("annotate", "every subject needs the same number (>= 2) of raters; offending subjects: " + list);
  }
  RatingTable t;
  t.raters = modal;
  for (const auto& [id, c] : counts) {
    t.subjects.push_back(id);
    t.counts.push_back(c);
  }
  return t;
}

namespace detail {

inline double two_sided_p(double z) { return std::erfc(std::fabs(z) / std::sqrt(2.0)); }

}  // namespace detail

// All sums are carried in integers so the statistics are exact functions of
// the count table and invariant under relabeling of categories. Standard
// errors use the large-sample null variance of Fleiss, Nee and Landis (1979).
inline AgreementReport fleiss_kappa(const RatingTable& table) {
  using i128 = __int128;
  const auto N = static_cast<std::int64_t>(table.counts.size());
  const std::int64_t n = table.raters;
  const std::int64_t M = N * n;  // total ratings
  const std::int64_t pairs = N * n * (n - 1);

  std::array<std::int64_t, kCategoryCount> totals{};
  std::array<std::int64_t, kCategoryCount> disagreement{};  // sum_i x_ij (n - x_ij)
  std::int64_t agreeing = 0;                                  // sum_i sum_j x_ij (x_ij - 1)
  for (const auto& row : table.counts) {
    for (std::size_t j = 0; j < kCategoryCount; ++j) {
      totals[j] += row[j];
      agreeing += row[j] * (row[j] - 1);
      disagreement[j] += row[j] * (n - row[j]);
    }
  }
  i128 sq = 0;        // sum_j c_j^2
  i128 pq = 0;        // sum_j c_j (M - c_j)            = M^2 sum p_j q_j
  i128 pq_skew = 0;   // sum_j c_j (M - c_j)(M - 2c_j)  = M^3 sum p_j q_j (q_j - p_j)
  for (auto c : totals) {
    sq += static_cast<i128>(c) * c;
    pq += static_cast<i128>(c) * (M - c);
    pq_skew += static_cast<i128>(c) * (M - c) * (M - 2 * c);
  }

  AgreementReport r;
  r.subject_count = static_cast<std::size_t>(N);
  r.rater_count = static_cast<std::size_t>(n);
  const double Md = static_cast<double>(M);
  r.observed_agreement = static_cast<double>(agreeing) / static_cast<double>(pairs);
  r.expected_agreement = static_cast<double>(sq) / (Md * Md);
  if (sq == static_cast<i128>(M) * M) {
    // Every rating in one category: agreement is perfect by construction.
    r.kappa_overall = 1.0;
  } else {
    // (P - Pe) / (1 - Pe) with P = a / pairs and Pe = sq / M^2.
    const double num = static_cast<double>(static_cast<i128>(agreeing) * M * M - sq * pairs);
    const double den = static_cast<double>((static_cast<i128>(M) * M - sq) * pairs);
    r.kappa_overall = num / den;
    const double s1 = static_cast<double>(pq) / (Md * Md);
    const double s2 = static_cast<double>(pq_skew) / (Md * Md * Md);
    const double var_core = s1 * s1 - s2;
    if (var_core > 0) {
      r.standard_error = std::sqrt(2.0) / (s1 * std::sqrt(static_cast<double>(pairs))) * std::sqrt(var_core);
      r.z = r.kappa_overall / *r.standard_error;
      r.p_value = detail::two_sided_p(*r.z);
    }
  }

  const double se_cat = std::sqrt(2.0 / static_cast<double>(pairs));
  for (std::size_t j = 0; j < kCategoryCount; ++j) {
    auto& cat = r.per_category[j];
    const std::int64_t c = totals[j];
    cat.proportion = static_cast<double>(c) / Md;
    if (c == 0 || c == M) continue;
    // 1 - sum_i x_ij (n - x_ij) / (N n (n-1) p_j q_j)
    const double ratio = static_cast<double>(static_cast<i128>(disagreement[j]) * M) /
                         static_cast<double>(static_cast<i128>(n - 1) * c * (M - c));
    cat.kappa = 1.0 - ratio;
    cat.standard_error = se_cat;
    cat.z = *cat.kappa / se_cat;
    cat.p_value = detail::two_sided_p(*cat.z);
  }
  return r;
}

inline AgreementReport fleiss_kappa(const std::vector<AnnotationRecord>& records) {
  return fleiss_kappa(rating_table(records));
}

inline json to_json(const AgreementReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  json cats = json::object();
  for (std::size_t j = 0; j < kCategoryCount; ++j) {
    const auto& c = r.per_category[j];
    cats[to_string(kLabels[j])] = {{"kappa", opt(c.kappa)}, {"proportion", c.proportion},
                                   {"standard_error", opt(c.standard_error)}, {"z", opt(c.z)},
                                   {"p_value_approximate", opt(c.p_value)}};
  }
  return json{{"kappa_overall", r.kappa_overall},
              {"kappa_per_category", cats},
              {"subject_count", r.subject_count},
              {"rater_count", r.rater_count},
              {"category_count", r.category_count},
              {"observed_agreement", r.observed_agreement},
              {"expected_agreement", r.expected_agreement},
              {"standard_error", opt(r.standard_error)},
              {"z", opt(r.z)},
              {"p_value_approximate", opt(r.p_value)}};
}

// --- pooling ----------------------------------------------------------------

// Strict majority over the three labels; anything else pools to "?".
inline Label majority(const std::vector<Label>& votes) {
  std::array<std::size_t, kCategoryCount> c{};
  for (auto v : votes) ++c[static_cast<std::size_t>(v)];
  for (std::size_t j = 0; j < kCategoryCount; ++j)
    if (2 * c[j] > votes.size()) return kLabels[j];
  return Label::unknown;
}

struct SentenceRef {
  std::string id;
  std::string text;
};

// Overlap sentences take the strict-majority label over all roster raters;
// exclusive sentences take their assigned annotator's label. Sentences that
// end up "?" are listed in `dropped`. Entries follow the order of `sentences`.
inline LabeledDataset pool_labels(const std::vector<AnnotationRecord>& records, const AssignmentPlan& plan,
                                  const std::vector<SentenceRef>& sentences) {
  std::map<std::pair<std::string, std::string>, Label> by_pair;
  for (const auto& r : records)
    if (!by_pair.emplace(std::make_pair(r.sentence_id, r.annotator_id), r.label).second)
      throw InputError("annotate", "duplicate record for sentence '" + r.sentence_id + "' by annotator '" +
                                       r.annotator_id + "'");

  std::map<std::string, std::string> owner;
  for (const auto& [a, ids] : plan.exclusive)
    for (const auto& id : ids) owner[id] = a;
  std::set<std::string> overlap(plan.overlap.begin(), plan.overlap.end());

  std::set<std::string> known;
  for (const auto& s : sentences) known.insert(s.id);
  for (const auto& [id, g] : plan.strata)
    if (!known.contains(id)) throw InputError("annotate", "planned sentence '" + id + "' has no text");

  std::vector<std::string> missing;
  LabeledDataset out;
  for (const auto& s : sentences) {
    auto stratum = plan.strata.find(s.id);
    if (stratum == plan.strata.end()) continue;
    Label label = Label::unknown;
    if (overlap.contains(s.id)) {
      std::vector<Label> votes;
      for (const auto& a : plan.roster) {
        auto it = by_pair.find({s.id, a});
        if (it == by_pair.end()) {
          missing.push_back(s.id + " by " + a);
          continue;
        }
        votes.push_back(it->second);
      }
      label = majority(votes);
    } else {
      const auto& a = owner.at(s.id);
      auto it = by_pair.find({s.id, a});
      if (it == by_pair.end()) {
        missing.push_back(s.id + " by " + a);
        continue;
      }
      label = it->second;
    }
    if (label == Label::unknown) {
      out.dropped.push_back(s.id);
    } else {
      out.entries.push_back({s.id, s.text, stratum->second, label == Label::yes});
    }
  }
  if (!missing.empty()) {
    std::string list;
    for (std::size_t i = 0; i < missing.size() && i < 20; ++i) list += (i ? ", " : "") + missing[i];
    if (missing.size() > 20) list += ", ...";
    throw InputError("annotate", std::to_string(missing.size()) + " missing annotation record(s): " + list);
  }
  return out;
}

// Records restricted to the overlap subset, the fully crossed part of a plan.
inline std::vector<AnnotationRecord> overlap_records(const std::vector<AnnotationRecord>& records,
                                                     const AssignmentPlan& plan) {
  std::set<std::string> overlap(plan.overlap.begin(), plan.overlap.end());
  std::set<std::string> roster(plan.roster.begin(), plan.roster.end());
  std::vector<AnnotationRecord> out;
  for (const auto& r : records)
    if (overlap.contains(r.sentence_id) && roster.contains(r.annotator_id)) out.push_back(r);
  return out;
}

}  // namespace vacscreen::annotate
