#pragma once

// Search-term catalog: regular-expression terms with per-term exception
// patterns, and the baseline scanner that flags sentences.

#include <unicode/regex.h>

#include <algorithm>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "vacscreen/corpus.hpp"
#include "vacscreen/error.hpp"
#include "vacscreen/util/jsonl.hpp"
#include "vacscreen/util/text.hpp"

namespace vacscreen::terms {

using nlohmann::json;

struct SearchTerm {
  std::string id;
  std::string label;
  std::string pattern;
  std::vector<std::string> exceptions;
  std::string group;
  std::optional<std::string> translation;
};

struct TermMatch {
  std::string sentence_id;
  std::string term_id;
  corpus::Span span;
  bool suppressed = false;
};

class CompiledPattern {
 public:
  CompiledPattern() = default;
  CompiledPattern(const std::string& source, const std::string& term_id, std::string_view role) {
    UParseError perr{};
    UErrorCode status = U_ZERO_ERROR;
    icu::UnicodeString anchored = icu::UnicodeString::fromUTF8(anchor(source));
    pattern_.reset(icu::RegexPattern::compile(anchored, UREGEX_CASE_INSENSITIVE, perr, status));
    if (U_FAILURE(status)) {
      // The compiled text carries a "\b(?:" prefix; report the offset in the
      // user's pattern.
      long offset = static_cast<long>(perr.offset) - static_cast<long>(prefix_length(source));
      if (offset < 0) offset = 0;
      throw ConfigError("terms", "term '" + term_id + "': invalid " + std::string(role) +
                                     " pattern \"" + source + "\" at position " +
                                     std::to_string(offset) + " (" + u_errorName(status) + ")");
    }
  }

  // Non-overlapping matches, left to right, as code-point spans.
  std::vector<corpus::Span> find_all(const icu::UnicodeString& input) const {
    std::vector<corpus::Span> out;
    UErrorCode status = U_ZERO_ERROR;
    std::unique_ptr<icu::RegexMatcher> m(pattern_->matcher(input, status));
    if (U_FAILURE(status)) throw Error("terms", "regex matcher creation failed");
    while (m->find(status) && U_SUCCESS(status)) {
      int32_t s = m->start(status);
      int32_t e = m->end(status);
      if (e == s) continue;
      auto cs = static_cast<std::size_t>(input.countChar32(0, s));
      auto ce = cs + static_cast<std::size_t>(input.countChar32(s, e - s));
      out.push_back({cs, ce});
    }
    return out;
  }

  bool search(const icu::UnicodeString& input) const {
    UErrorCode status = U_ZERO_ERROR;
    std::unique_ptr<icu::RegexMatcher> m(pattern_->matcher(input, status));
    if (U_FAILURE(status)) throw Error("terms", "regex matcher creation failed");
    return m->find(status) && U_SUCCESS(status);
  }

  // Wraps the pattern in word boundaries unless it is already anchored.
  static std::string anchor(const std::string& source) {
    return std::string(leading_anchor(source) ? "(?:" : "\\b(?:") + source +
           (trailing_anchor(source) ? ")" : ")\\b");
  }

 private:
  static bool leading_anchor(const std::string& s) {
    return s.starts_with("^") || s.starts_with("\\b") || s.starts_with("\\A");
  }
  static bool trailing_anchor(const std::string& s) {
    if (s.ends_with("\\$")) return false;
    return s.ends_with("$") || s.ends_with("\\b") || s.ends_with("\\z") || s.ends_with("\\Z");
  }
  static std::size_t prefix_length(const std::string& s) { return leading_anchor(s) ? 3 : 5; }

  std::shared_ptr<const icu::RegexPattern> pattern_;
};

struct CompiledTerm {
  SearchTerm term;
  CompiledPattern pattern;
  std::vector<CompiledPattern> exceptions;
};

// Immutable once compiled; terms are held in id order so scan results do not
// depend on the order of the catalog file.
class TermCatalog {
 public:
  TermCatalog() = default;

  TermCatalog(std::vector<SearchTerm> terms, std::string version) : version_(std::move(version)) {
    if (terms.empty()) throw ConfigError("terms", "catalog has no terms");
    for (const auto& t : terms)
      if (std::find(groups_.begin(), groups_.end(), t.group) == groups_.end()) groups_.push_back(t.group);
    std::sort(terms.begin(), terms.end(),
              [](const SearchTerm& a, const SearchTerm& b) { return a.id < b.id; });
    for (std::size_t i = 0; i < terms.size(); ++i) {
      const auto& t = terms[i];
      if (t.id.empty()) throw ConfigError("terms", "term with empty id");
      if (i > 0 && terms[i - 1].id == t.id) throw ConfigError("terms", "duplicate term id '" + t.id + "'");
      CompiledTerm ct{t, CompiledPattern(text::nfc(t.pattern), t.id, "term"), {}};
      for (const auto& ex : t.exceptions) ct.exceptions.emplace_back(text::nfc(ex), t.id, "exception");
      compiled_.push_back(std::move(ct));
    }
  }

  const std::string& version() const { return version_; }
  const std::vector<CompiledTerm>& terms() const { return compiled_; }
  // Groups in order of first appearance in the source catalog.
  const std::vector<std::string>& groups() const { return groups_; }

  const CompiledTerm* find(std::string_view id) const {
    for (const auto& t : compiled_)
      if (t.term.id == id) return &t;
    return nullptr;
  }

 private:
  std::string version_;
  std::vector<CompiledTerm> compiled_;
  std::vector<std::string> groups_;
};

inline TermCatalog parse_catalog(std::string_view content, std::string_view name = "catalog") {
  json doc;
  try {
    doc = json::parse(content);
  } catch (const json::parse_error& e) {
    throw ConfigError("terms", std::string(name) + ": malformed catalog JSON (" + e.what() + ")");
  }
  if (!doc.is_object() || !doc.contains("terms") || !doc["terms"].is_array())
    throw ConfigError("terms", std::string(name) + ": catalog must be an object with a \"terms\" array");
  std::vector<SearchTerm> terms;
  std::size_t pos = 0;
  for (const auto& t : doc["terms"]) {
    auto field = [&](const char* key) -> std::string {
      if (!t.is_object() || !t.contains(key) || !t[key].is_string())
        throw ConfigError("terms", std::string(name) + ": term #" + std::to_string(pos) +
                                       " lacks string field \"" + key + "\"");
      return t[key].get<std::string>();
    };
    SearchTerm st;
    st.id = field("id");
    st.label = t.contains("label") && t["label"].is_string() ? t["label"].get<std::string>() : st.id;
    st.pattern = field("pattern");
    st.group = field("group");
    if (t.contains("exceptions")) {
      if (!t["exceptions"].is_array())
        throw ConfigError("terms", "term '" + st.id + "': \"exceptions\" must be an array");
      for (const auto& ex : t["exceptions"]) st.exceptions.push_back(ex.get<std::string>());
    }
    if (t.contains("translation") && t["translation"].is_string())
      st.translation = t["translation"].get<std::string>();
    terms.push_back(std::move(st));
    ++pos;
  }
  std::string version = doc.value("version", std::string("unversioned"));
  return TermCatalog(std::move(terms), std::move(version));
}

inline TermCatalog compile_catalog(const std::filesystem::path& path) {
  return parse_catalog(io::read_file(path, "terms"), path.filename().string());
}

inline json to_json(const SearchTerm& t) {
  json j{{"id", t.id}, {"label", t.label}, {"pattern", t.pattern}, {"exceptions", t.exceptions}, {"group", t.group}};
  if (t.translation) j["translation"] = *t.translation;
  return j;
}

// Matches ordered by start, then longer first, then term id. A term's
// matches are all suppressed when any of its exceptions occurs anywhere in
// the sentence.
inline std::vector<TermMatch> scan_text(std::string_view sentence_id, std::string_view sentence_text,
                                        const TermCatalog& catalog) {
  icu::UnicodeString input = icu::UnicodeString::fromUTF8(
      icu::StringPiece(sentence_text.data(), static_cast<int32_t>(sentence_text.size())));
  std::vector<TermMatch> out;
  for (const auto& ct : catalog.terms()) {
    auto spans = ct.pattern.find_all(input);
    if (spans.empty()) continue;
    bool suppressed = std::any_of(ct.exceptions.begin(), ct.exceptions.end(),
                                  [&](const CompiledPattern& ex) { return ex.search(input); });
    for (const auto& sp : spans)
      out.push_back({std::string(sentence_id), ct.term.id, sp, suppressed});
  }
  std::sort(out.begin(), out.end(), [](const TermMatch& a, const TermMatch& b) {
    if (a.span.start != b.span.start) return a.span.start < b.span.start;
    auto la = a.span.end - a.span.start, lb = b.span.end - b.span.start;
    if (la != lb) return la > lb;
    return a.term_id < b.term_id;
  });
  return out;
}

inline std::vector<TermMatch> scan_sentence(const corpus::Sentence& sentence, const TermCatalog& catalog) {
  return scan_text(sentence.id, sentence.text, catalog);
}

inline bool flagged(const std::vector<TermMatch>& matches) {
  return std::any_of(matches.begin(), matches.end(), [](const TermMatch& m) { return !m.suppressed; });
}

inline bool baseline_flag(const corpus::Sentence& sentence, const TermCatalog& catalog) {
  return flagged(scan_sentence(sentence, catalog));
}

inline bool baseline_flag_text(std::string_view text, const TermCatalog& catalog) {
  return flagged(scan_text("", text, catalog));
}

// The group of the longest unsuppressed match (then leftmost, then term id).
inline std::optional<std::string> primary_group(const std::vector<TermMatch>& matches,
                                                const TermCatalog& catalog) {
  const TermMatch* best = nullptr;
  for (const auto& m : matches) {
    if (m.suppressed) continue;
    if (!best) {
      best = &m;
      continue;
    }
    auto lm = m.span.end - m.span.start, lb = best->span.end - best->span.start;
    if (lm > lb || (lm == lb && (m.span.start < best->span.start ||
                                 (m.span.start == best->span.start && m.term_id < best->term_id))))
      best = &m;
  }
  if (!best) return std::nullopt;
  return catalog.find(best->term_id)->term.group;
}

inline json to_json(const TermMatch& m) {
  return json{{"sentence_id", m.sentence_id},
              {"term_id", m.term_id},
              {"span", json::array({m.span.start, m.span.end})},
              {"suppressed", m.suppressed}};
}

struct FrequencyRow {
  std::string group;
  std::size_t frequency = 0;
  std::size_t hsd = 0;
  double hsd_fraction() const { return frequency ? static_cast<double>(hsd) / static_cast<double>(frequency) : 0.0; }
};

struct FrequencyReport {
  std::vector<FrequencyRow> rows;  // catalog group order
  FrequencyRow total{"Total"};
};

// Flagged sentences per term group and the share labeled HSD.
inline FrequencyReport term_frequency_report(const std::vector<corpus::Sentence>& sentences,
                                             const std::vector<bool>& labels, const TermCatalog& catalog) {
  if (sentences.size() != labels.size())
    throw InputError("terms", "labels (" + std::to_string(labels.size()) + ") not aligned with sentences (" +
                                  std::to_string(sentences.size()) + ")");
  FrequencyReport report;
  for (const auto& g : catalog.groups()) report.rows.push_back({g});
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    auto group = primary_group(scan_sentence(sentences[i], catalog), catalog);
    if (!group) continue;
    for (auto& row : report.rows) {
      if (row.group != *group) continue;
      ++row.frequency;
      if (labels[i]) ++row.hsd;
    }
    ++report.total.frequency;
    if (labels[i]) ++report.total.hsd;
  }
  return report;
}

inline json to_json(const FrequencyReport& r) {
  json rows = json::array();
  auto row_json = [](const FrequencyRow& row) {
    return json{{"group", row.group}, {"frequency", row.frequency}, {"hsd", row.hsd},
                {"hsd_fraction", row.hsd_fraction()}};
  };
  for (const auto& row : r.rows) rows.push_back(row_json(row));
  return json{{"rows", rows}, {"total", row_json(r.total)}};
}

// Eight groups: six single terms plus the aggregate "other" and "informal"
// groups. Exceptions pair each gendered term with its counterpart.
inline constexpr std::string_view kDefaultCatalogJson = R"json({
  "version": "nl-gender-1",
  "terms": [
    {"id": "jongen", "label": "jongen(s)", "pattern": "jongens?", "exceptions": ["meisjes?", "meiden"], "group": "jongen(s)", "translation": "boy(s)"},
    {"id": "man", "label": "man(nen)", "pattern": "man(nen)?", "exceptions": ["vrouw(en)?"], "group": "man(nen)", "translation": "man/men"},
    {"id": "mannelijk", "label": "mannelijk(e)", "pattern": "mannelijke?", "exceptions": ["vrouwelijke?"], "group": "mannelijk(e)", "translation": "male"},
    {"id": "dame", "label": "dame(s)", "pattern": "dames?", "exceptions": ["heren", "heer"], "group": "dame(s)", "translation": "lady/ladies"},
    {"id": "vrouw", "label": "vrouw(en)", "pattern": "vrouw(en)?", "exceptions": ["man(nen)?"], "group": "vrouw(en)", "translation": "woman/women"},
    {"id": "vrouwelijk", "label": "vrouwelijk(e)", "pattern": "vrouwelijke?", "exceptions": ["mannelijke?"], "group": "vrouwelijk(e)", "translation": "female"},
    {"id": "other-onze-man", "label": "ben jij onze man", "pattern": "ben jij onze man", "exceptions": [], "group": "other", "translation": "you are our guy"},
    {"id": "other-met-ballen", "label": "met ballen", "pattern": "met ballen", "exceptions": [], "group": "other", "translation": "with grit"},
    {"id": "other-enthousiaste-jongen", "label": "enthousiaste jongen(s)", "pattern": "enthousiaste jongens?", "exceptions": [], "group": "other", "translation": "enthusiastic boy(s)"},
    {"id": "other-enthousiaste-meid", "label": "enthousiaste meid(en)/meisje(s)", "pattern": "enthousiaste (meid(en)?|meisjes?)", "exceptions": [], "group": "other", "translation": "enthusiastic girl(s)"},
    {"id": "other-jonge-god", "label": "jonge god(in)", "pattern": "jonge god(in)?", "exceptions": [], "group": "other", "translation": "young god(dess)"},
    {"id": "informal-kerel", "label": "kerel", "pattern": "kerels?", "exceptions": [], "group": "informal", "translation": "dude"},
    {"id": "informal-griet", "label": "griet", "pattern": "griet(en)?", "exceptions": [], "group": "informal", "translation": "gal"},
    {"id": "informal-vent", "label": "vent", "pattern": "vent(en)?", "exceptions": [], "group": "informal", "translation": "guy"},
    {"id": "informal-gozer", "label": "gozer", "pattern": "gozers?", "exceptions": [], "group": "informal", "translation": "dude"}
  ]
})json";

inline TermCatalog default_catalog() { return parse_catalog(kDefaultCatalogJson, "default catalog"); }

}  // namespace vacscreen::terms
