#pragma once

// Sentence representations: 1-2-gram bag-of-words counts, averaged word
// embeddings, and precomputed contextual sentence vectors.

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "vacscreen/dataset.hpp"
#include "vacscreen/error.hpp"
#include "vacscreen/matrix.hpp"
#include "vacscreen/util/jsonl.hpp"
#include "vacscreen/util/random.hpp"
#include "vacscreen/util/text.hpp"

namespace vacscreen {

using text::TokenizerConfig;

inline constexpr std::size_t kDefaultMaxFeatures = 50000;

// ---------------------------------------------------------------------------
// Bag of words

struct Vocabulary {
  std::map<std::string, std::uint32_t> entries;
  int ngram_min = 1;
  int ngram_max = 2;
  std::optional<std::size_t> max_features;
  TokenizerConfig tokenizer;

  std::size_t size() const { return entries.size(); }

  std::string hash() const {
    std::uint64_t h = fnv1a64("");
    for (const auto& [gram, idx] : entries) {
      h = fnv1a64(gram, h);
      h = fnv1a64("\x1f" + std::to_string(idx) + "\n", h);
    }
    h = fnv1a64(std::to_string(ngram_min) + "," + std::to_string(ngram_max) + "," +
                    (tokenizer.lowercase ? "l" : "-") + (tokenizer.strip_punctuation ? "s" : "-"),
                h);
    return hex64(h);
  }
};

// n-grams joined by a single space, in sentence order.
inline std::vector<std::string> ngrams(const std::vector<std::string>& tokens, int nmin, int nmax) {
  std::vector<std::string> out;
  for (int n = nmin; n <= nmax; ++n) {
    if (tokens.size() < static_cast<std::size_t>(n)) break;
    for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= tokens.size(); ++i) {
      std::string g = tokens[i];
      for (int k = 1; k < n; ++k) {
        g += ' ';
        g += tokens[i + static_cast<std::size_t>(k)];
      }
      out.push_back(std::move(g));
    }
  }
  return out;
}

// Columns are assigned in lexicographic n-gram order. With a cap, the kept
// n-grams are the most frequent (total count) with ties broken
// lexicographically.
inline Vocabulary fit_vocabulary(const std::vector<std::string>& train_sentences, int ngram_min = 1,
                                 int ngram_max = 2,
                                 std::optional<std::size_t> max_features = kDefaultMaxFeatures,
                                 const TokenizerConfig& tokenizer = {}) {
  if (train_sentences.empty()) throw InputError("features", "cannot fit a vocabulary on an empty training set");
  if (ngram_min < 1 || ngram_max < ngram_min)
    throw ConfigError("features", "invalid ngram range [" + std::to_string(ngram_min) + "," +
                                      std::to_string(ngram_max) + "]");
  if (max_features && *max_features == 0) throw ConfigError("features", "max_features must be positive");
  std::map<std::string, std::size_t> counts;
  for (const auto& s : train_sentences)
    for (auto& g : ngrams(text::tokenize(s, tokenizer), ngram_min, ngram_max)) ++counts[std::move(g)];

  std::vector<std::string> kept;
  kept.reserve(counts.size());
  if (max_features && counts.size() > *max_features) {
    std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    ranked.resize(*max_features);
    for (auto& [g, c] : ranked) kept.push_back(std::move(g));
    std::sort(kept.begin(), kept.end());
  } else {
    for (const auto& [g, c] : counts) kept.push_back(g);
  }
  Vocabulary v;
  v.ngram_min = ngram_min;
  v.ngram_max = ngram_max;
  v.max_features = max_features;
  v.tokenizer = tokenizer;
  for (std::size_t i = 0; i < kept.size(); ++i) v.entries.emplace(kept[i], static_cast<std::uint32_t>(i));
  return v;
}

inline SparseVector transform_bow(std::string_view sentence, const Vocabulary& vocab) {
  std::map<std::uint32_t, double> counts;
  for (const auto& g : ngrams(text::tokenize(sentence, vocab.tokenizer), vocab.ngram_min, vocab.ngram_max)) {
    auto it = vocab.entries.find(g);
    if (it != vocab.entries.end()) counts[it->second] += 1.0;
  }
  SparseVector out;
  for (const auto& [idx, c] : counts) {
    out.indices.push_back(idx);
    out.values.push_back(c);
  }
  return out;
}

inline nlohmann::json to_json(const Vocabulary& v) {
  std::vector<std::string> grams(v.size());
  for (const auto& [g, i] : v.entries) grams[i] = g;
  nlohmann::json j{{"ngram_range", {v.ngram_min, v.ngram_max}},
                   {"lowercase", v.tokenizer.lowercase},
                   {"strip_punctuation", v.tokenizer.strip_punctuation},
                   {"entries", grams}};
  j["max_features"] = v.max_features ? nlohmann::json(*v.max_features) : nlohmann::json(nullptr);
  return j;
}

inline Vocabulary vocabulary_from_json(const nlohmann::json& j) {
  try {
    Vocabulary v;
    v.ngram_min = j.at("ngram_range").at(0).get<int>();
    v.ngram_max = j.at("ngram_range").at(1).get<int>();
    v.tokenizer.lowercase = j.at("lowercase").get<bool>();
    v.tokenizer.strip_punctuation = j.at("strip_punctuation").get<bool>();
    if (!j.at("max_features").is_null()) v.max_features = j.at("max_features").get<std::size_t>();
    const auto& grams = j.at("entries");
    for (std::size_t i = 0; i < grams.size(); ++i)
      if (!v.entries.emplace(grams[i].get<std::string>(), static_cast<std::uint32_t>(i)).second)
        throw ParseError("features", "duplicate vocabulary entry '" + grams[i].get<std::string>() + "'");
    return v;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("features", std::string("malformed vocabulary: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Word embeddings

struct EmbeddingTable {
  std::size_t dimension = 0;
  std::unordered_map<std::string, std::vector<double>> vectors;
  std::vector<std::string> warnings;
  std::string content_hash;

  std::size_t size() const { return vectors.size(); }

  const std::vector<double>* find(const std::string& token) const {
    auto it = vectors.find(token);
    return it == vectors.end() ? nullptr : &it->second;
  }
};

namespace detail {

inline std::vector<std::string_view> split_spaces(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

template <class T>
bool parse_number(std::string_view s, T& out) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

}  // namespace detail

// Text format: a header line "<count> <dimension>", then one
// "<token> v1 ... v_dim" line per token. Duplicate tokens keep the last vector
// and record a warning.
inline EmbeddingTable parse_embeddings(std::string_view content, std::string_view name) {
  EmbeddingTable t;
  t.content_hash = hex64(fnv1a64(content));
  std::size_t declared = 0;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  bool header = false;
  std::size_t rows = 0;
  auto where = [&] { return std::string(name) + ":" + std::to_string(line_no) + ": "; };
  while (pos < content.size()) {
    std::size_t nl = content.find('\n', pos);
    if (nl == std::string_view::npos) nl = content.size();
    std::string_view line = content.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    auto fields = detail::split_spaces(line);
    if (fields.empty()) continue;
    if (!header) {
      if (fields.size() != 2 || !detail::parse_number(fields[0], declared) ||
          !detail::parse_number(fields[1], t.dimension) || t.dimension == 0)
        throw ParseError("features", where() + "expected header \"<count> <dimension>\"");
      header = true;
      continue;
    }
    if (fields.size() != t.dimension + 1)
      throw ParseError("features", where() + "token '" + std::string(fields[0]) + "' has " +
                                       std::to_string(fields.size() - 1) + " values, header declares dimension " +
                                       std::to_string(t.dimension));
    std::vector<double> v(t.dimension);
    for (std::size_t k = 0; k < t.dimension; ++k)
      if (!detail::parse_number(fields[k + 1], v[k]) || !std::isfinite(v[k]))
        throw ParseError("features", where() + "invalid value '" + std::string(fields[k + 1]) + "'");
    std::string token = text::nfc(fields[0]);
    ++rows;
    auto [it, inserted] = t.vectors.insert_or_assign(std::move(token), std::move(v));
    if (!inserted)
      t.warnings.push_back(where() + "duplicate token '" + it->first + "', keeping the last occurrence");
  }
  if (!header) throw ParseError("features", std::string(name) + ": empty embedding file");
  if (rows != declared)
    t.warnings.push_back(std::string(name) + ": header declares " + std::to_string(declared) + " vectors, found " +
                         std::to_string(rows));
  return t;
}

inline EmbeddingTable load_embeddings(const std::filesystem::path& path) {
  return parse_embeddings(io::read_file(path, "features"), path.filename().string());
}

// Mean over in-vocabulary tokens; a sentence with none yields the zero vector
// and the all_oov flag.
inline DenseVector embed_average(std::string_view sentence, const EmbeddingTable& table,
                                 const TokenizerConfig& tokenizer = {}) {
  DenseVector out;
  out.values.assign(table.dimension, 0.0);
  std::size_t known = 0;
  for (const auto& tok : text::tokenize(sentence, tokenizer)) {
    const auto* v = table.find(tok);
    if (!v) continue;
    ++known;
    for (std::size_t k = 0; k < table.dimension; ++k) out.values[k] += (*v)[k];
  }
  if (known == 0) {
    out.all_oov = true;
    return out;
  }
  for (auto& x : out.values) x /= static_cast<double>(known);
  return out;
}

// ---------------------------------------------------------------------------
// Contextual sentence embeddings

struct ContextualEmbeddingSource {
  std::size_t dimension = 0;
  std::string provenance;
  std::unordered_map<std::string, std::vector<double>> vectors;
  std::string content_hash;

  bool contains(const std::string& sentence_id) const { return vectors.count(sentence_id) > 0; }
};

// JSONL: a header record {"dimension": d, "provenance": "..."} followed by
// {"sentence_id": ..., "vector": [...]} records.
inline ContextualEmbeddingSource parse_contextual(std::string_view content, std::string_view name) {
  ContextualEmbeddingSource src;
  src.content_hash = hex64(fnv1a64(content));
  auto records = io::parse_jsonl(content, name, "features");
  if (records.empty()) throw ParseError("features", std::string(name) + ": empty contextual embedding file");
  auto where = [&](std::size_t line) { return std::string(name) + ":" + std::to_string(line) + ": "; };
  const auto& head = records.front();
  auto dim = head.value.is_object() ? head.value.find("dimension") : head.value.end();
  if (!head.value.is_object() || dim == head.value.end() || !dim->is_number_unsigned() || dim->get<std::size_t>() == 0)
    throw ParseError("features", where(head.line) + "expected header record {\"dimension\": d}");
  src.dimension = dim->get<std::size_t>();
  if (auto p = head.value.find("provenance"); p != head.value.end() && p->is_string()) src.provenance = p->get<std::string>();
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    std::string id = io::require_string(rec, "sentence_id", name, "features");
    auto vec = rec.value.find("vector");
    if (vec == rec.value.end() || !vec->is_array())
      throw ParseError("features", where(rec.line) + "missing array field \"vector\"");
    if (vec->size() != src.dimension)
      throw ParseError("features", where(rec.line) + "vector of dimension " + std::to_string(vec->size()) +
                                       ", header declares " + std::to_string(src.dimension));
    std::vector<double> v;
    v.reserve(src.dimension);
    for (const auto& x : *vec) {
      if (!x.is_number() || !std::isfinite(x.get<double>()))
        throw ParseError("features", where(rec.line) + "non-numeric vector component");
      v.push_back(x.get<double>());
    }
    if (!src.vectors.emplace(id, std::move(v)).second)
      throw ParseError("features", where(rec.line) + "duplicate sentence_id '" + id + "'");
  }
  return src;
}

inline ContextualEmbeddingSource load_contextual(const std::filesystem::path& path) {
  return parse_contextual(io::read_file(path, "features"), path.filename().string());
}

inline DenseVector lookup_contextual(const std::string& sentence_id, const ContextualEmbeddingSource& source) {
  auto it = source.vectors.find(sentence_id);
  if (it == source.vectors.end())
    throw MissError("features", "no contextual vector for sentence '" + sentence_id + "'");
  return DenseVector{it->second, false};
}

// ---------------------------------------------------------------------------
// Featurizer: a fitted representation that maps dataset entries to a
// FeatureMatrix and names its feature space.

enum class FeatureKind { bow, w2v, contextual };

inline std::string to_string(FeatureKind k) {
  switch (k) {
    case FeatureKind::bow: return "bow";
    case FeatureKind::w2v: return "w2v";
    case FeatureKind::contextual: return "contextual";
  }
  return "";
}

inline FeatureKind parse_feature_kind(std::string_view s) {
  if (s == "bow") return FeatureKind::bow;
  if (s == "w2v") return FeatureKind::w2v;
  if (s == "contextual") return FeatureKind::contextual;
  throw ConfigError("features", "unknown feature kind '" + std::string(s) + "' (expected bow, w2v or contextual)");
}

enum class MissPolicy { abort, zero };

struct FeatureConfig {
  FeatureKind kind = FeatureKind::bow;
  TokenizerConfig tokenizer;
  int ngram_min = 1;
  int ngram_max = 2;
  std::optional<std::size_t> max_features = kDefaultMaxFeatures;
  std::filesystem::path embeddings;  // w2v table
  std::filesystem::path contextual;  // contextual JSONL
  MissPolicy on_missing = MissPolicy::abort;
};

inline nlohmann::json to_json(const FeatureConfig& c) {
  nlohmann::json j{{"kind", to_string(c.kind)},
                   {"lowercase", c.tokenizer.lowercase},
                   {"strip_punctuation", c.tokenizer.strip_punctuation}};
  switch (c.kind) {
    case FeatureKind::bow:
      j["ngram_range"] = {c.ngram_min, c.ngram_max};
      j["max_features"] = c.max_features ? nlohmann::json(*c.max_features) : nlohmann::json(nullptr);
      break;
    case FeatureKind::w2v: j["embeddings"] = c.embeddings.string(); break;
    case FeatureKind::contextual:
      j["contextual"] = c.contextual.string();
      j["on_missing"] = c.on_missing == MissPolicy::zero ? "zero" : "abort";
      break;
  }
  return j;
}

// Missing keys keep their defaults; relative paths resolve against `base`.
inline FeatureConfig feature_config_from_json(const nlohmann::json& j, const std::filesystem::path& base = {}) {
  FeatureConfig c;
  try {
    if (j.is_string()) {
      c.kind = parse_feature_kind(j.get<std::string>());
      return c;
    }
    c.kind = parse_feature_kind(j.value("kind", std::string("bow")));
    c.tokenizer.lowercase = j.value("lowercase", c.tokenizer.lowercase);
    c.tokenizer.strip_punctuation = j.value("strip_punctuation", c.tokenizer.strip_punctuation);
    if (j.contains("ngram_range")) {
      c.ngram_min = j.at("ngram_range").at(0).get<int>();
      c.ngram_max = j.at("ngram_range").at(1).get<int>();
    }
    if (j.contains("max_features"))
      c.max_features = j.at("max_features").is_null() ? std::nullopt
                                                      : std::optional<std::size_t>(j.at("max_features").get<std::size_t>());
    auto path = [&](const char* key) {
      std::filesystem::path p = j.at(key).get<std::string>();
      return p.is_relative() && !base.empty() ? base / p : p;
    };
    if (j.contains("embeddings")) c.embeddings = path("embeddings");
    if (j.contains("contextual")) c.contextual = path("contextual");
    if (j.contains("on_missing")) {
      auto m = j.at("on_missing").get<std::string>();
      if (m != "zero" && m != "abort") throw ConfigError("features", "on_missing must be abort or zero");
      c.on_missing = m == "zero" ? MissPolicy::zero : MissPolicy::abort;
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("features", std::string("malformed feature config: ") + e.what());
  }
  if (c.kind == FeatureKind::w2v && c.embeddings.empty())
    throw ConfigError("features", "w2v features need an \"embeddings\" path");
  if (c.kind == FeatureKind::contextual && c.contextual.empty())
    throw ConfigError("features", "contextual features need a \"contextual\" path");
  return c;
}

class Featurizer {
 public:
  Featurizer() = default;

  static Featurizer fit(const FeatureConfig& config, const std::vector<LabeledEntry>& train) {
    Featurizer f;
    f.config_ = config;
    switch (config.kind) {
      case FeatureKind::bow: {
        std::vector<std::string> texts;
        texts.reserve(train.size());
        for (const auto& e : train) texts.push_back(e.text);
        f.vocab_ = fit_vocabulary(texts, config.ngram_min, config.ngram_max, config.max_features, config.tokenizer);
        break;
      }
      case FeatureKind::w2v:
        f.table_ = std::make_shared<const EmbeddingTable>(load_embeddings(config.embeddings));
        break;
      case FeatureKind::contextual:
        f.context_ = std::make_shared<const ContextualEmbeddingSource>(load_contextual(config.contextual));
        break;
    }
    return f;
  }

  static Featurizer from_vocabulary(Vocabulary v) {
    Featurizer f;
    f.config_.kind = FeatureKind::bow;
    f.config_.tokenizer = v.tokenizer;
    f.config_.ngram_min = v.ngram_min;
    f.config_.ngram_max = v.ngram_max;
    f.config_.max_features = v.max_features;
    f.vocab_ = std::move(v);
    return f;
  }

  static Featurizer from_table(EmbeddingTable t, const TokenizerConfig& tokenizer = {}) {
    Featurizer f;
    f.config_.kind = FeatureKind::w2v;
    f.config_.tokenizer = tokenizer;
    f.table_ = std::make_shared<const EmbeddingTable>(std::move(t));
    return f;
  }

  static Featurizer from_source(ContextualEmbeddingSource s, MissPolicy on_missing = MissPolicy::abort) {
    Featurizer f;
    f.config_.kind = FeatureKind::contextual;
    f.config_.on_missing = on_missing;
    f.context_ = std::make_shared<const ContextualEmbeddingSource>(std::move(s));
    return f;
  }

  FeatureKind kind() const { return config_.kind; }
  const FeatureConfig& config() const { return config_; }
  const Vocabulary& vocabulary() const { return *vocab_; }

  std::vector<std::string> warnings() const { return table_ ? table_->warnings : std::vector<std::string>{}; }

  std::size_t dimension() const {
    switch (config_.kind) {
      case FeatureKind::bow: return vocab_->size();
      case FeatureKind::w2v: return table_->dimension;
      case FeatureKind::contextual: return context_->dimension;
    }
    return 0;
  }

  // Identifies the feature space; models refuse to score features whose
  // descriptor differs from the one they were trained on.
  std::string descriptor() const {
    switch (config_.kind) {
      case FeatureKind::bow: return "bow:" + std::to_string(vocab_->size()) + ":" + vocab_->hash();
      case FeatureKind::w2v: return "w2v:" + std::to_string(table_->dimension) + ":" + table_->content_hash;
      case FeatureKind::contextual: return "contextual:" + std::to_string(context_->dimension) + ":" + context_->content_hash;
    }
    return "";
  }

  // Rows whose contextual vector is missing are zero-filled under
  // MissPolicy::zero and listed in `missing`.
  FeatureMatrix transform(const std::vector<LabeledEntry>& entries, std::vector<std::size_t>* missing = nullptr) const {
    FeatureMatrix m(dimension());
    for (std::size_t r = 0; r < entries.size(); ++r) {
      const auto& e = entries[r];
      switch (config_.kind) {
        case FeatureKind::bow: m.add_row(transform_bow(e.text, *vocab_)); break;
        case FeatureKind::w2v: m.add_dense_row(embed_average(e.text, *table_, config_.tokenizer).values); break;
        case FeatureKind::contextual: {
          if (!context_->contains(e.sentence_id) && config_.on_missing == MissPolicy::zero) {
            if (missing) missing->push_back(r);
            m.add_dense_row(std::vector<double>(context_->dimension, 0.0));
            break;
          }
          m.add_dense_row(lookup_contextual(e.sentence_id, *context_).values);
          break;
        }
      }
    }
    return m;
  }

  FeatureMatrix transform(const LabeledDataset& d, std::vector<std::size_t>* missing = nullptr) const {
    return transform(d.entries, missing);
  }

  nlohmann::json to_json() const {
    nlohmann::json j{{"kind", to_string(config_.kind)}, {"descriptor", descriptor()}};
    switch (config_.kind) {
      case FeatureKind::bow: j["vocabulary"] = vacscreen::to_json(*vocab_); break;
      case FeatureKind::w2v:
        j["embeddings"] = config_.embeddings.string();
        j["lowercase"] = config_.tokenizer.lowercase;
        j["strip_punctuation"] = config_.tokenizer.strip_punctuation;
        break;
      case FeatureKind::contextual:
        j["contextual"] = config_.contextual.string();
        j["on_missing"] = config_.on_missing == MissPolicy::zero ? "zero" : "abort";
        break;
    }
    return j;
  }

  // Embedding-backed featurizers reload their source file and check that it
  // still matches the stored descriptor.
  static Featurizer from_json(const nlohmann::json& j) {
    Featurizer f;
    try {
      FeatureConfig c;
      c.kind = parse_feature_kind(j.at("kind").get<std::string>());
      switch (c.kind) {
        case FeatureKind::bow: f = from_vocabulary(vocabulary_from_json(j.at("vocabulary"))); break;
        case FeatureKind::w2v:
          c.embeddings = j.at("embeddings").get<std::string>();
          c.tokenizer.lowercase = j.at("lowercase").get<bool>();
          c.tokenizer.strip_punctuation = j.at("strip_punctuation").get<bool>();
          f = fit(c, {});
          break;
        case FeatureKind::contextual:
          c.contextual = j.at("contextual").get<std::string>();
          c.on_missing = j.at("on_missing").get<std::string>() == "zero" ? MissPolicy::zero : MissPolicy::abort;
          f = fit(c, {});
          break;
      }
      if (f.descriptor() != j.at("descriptor").get<std::string>())
        throw ParseError("features", "feature space changed since fitting: stored " +
                                         j.at("descriptor").get<std::string>() + ", found " + f.descriptor());
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("features", std::string("malformed featurizer: ") + e.what());
    }
    return f;
  }

 private:
  FeatureConfig config_;
  std::optional<Vocabulary> vocab_;
  std::shared_ptr<const EmbeddingTable> table_;
  std::shared_ptr<const ContextualEmbeddingSource> context_;
};

}  // namespace vacscreen
