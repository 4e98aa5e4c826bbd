#pragma once

// The pooled binary HSD dataset that feeds feature extraction and the
// experiments.

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "vacscreen/error.hpp"
#include "vacscreen/util/jsonl.hpp"
#include "vacscreen/util/random.hpp"
#include "vacscreen/util/text.hpp"

namespace vacscreen {

struct LabeledEntry {
  std::string sentence_id;
  std::string text;
  std::string term_group;
  bool hsd = false;
};

struct LabeledDataset {
  std::vector<LabeledEntry> entries;
  std::vector<std::string> dropped;  // sentence ids pooled to "?"

  std::size_t size() const { return entries.size(); }

  std::vector<bool> labels() const {
    std::vector<bool> out;
    out.reserve(entries.size());
    for (const auto& e : entries) out.push_back(e.hsd);
    return out;
  }

  LabeledDataset subset(const std::vector<std::size_t>& rows) const {
    LabeledDataset out;
    out.entries.reserve(rows.size());
    for (auto r : rows) out.entries.push_back(entries.at(r));
    return out;
  }
};

inline nlohmann::json to_json(const LabeledEntry& e) {
  return nlohmann::json{{"sentence_id", e.sentence_id}, {"text", e.text}, {"term_group", e.term_group}, {"hsd", e.hsd}};
}

// FNV-1a over the canonical JSONL serialization of the entries.
inline std::string dataset_hash(const LabeledDataset& d) {
  std::uint64_t h = fnv1a64("");
  for (const auto& e : d.entries) {
    h = fnv1a64(to_json(e).dump(), h);
    h = fnv1a64("\n", h);
  }
  return hex64(h);
}

inline std::string to_jsonl(const LabeledDataset& d) {
  std::string out;
  for (const auto& e : d.entries) {
    out += to_json(e).dump();
    out += '\n';
  }
  return out;
}

inline LabeledDataset parse_dataset(std::string_view content, std::string_view name) {
  LabeledDataset d;
  std::set<std::string> seen;
  for (const auto& rec : io::parse_jsonl(content, name, "dataset")) {
    LabeledEntry e;
    e.sentence_id = io::require_string(rec, "sentence_id", name, "dataset");
    e.text = text::nfc(io::require_string(rec, "text", name, "dataset"));
    if (auto it = rec.value.find("term_group"); it != rec.value.end() && it->is_string())
      e.term_group = it->get<std::string>();
    auto it = rec.value.find("hsd");
    if (it == rec.value.end() || !it->is_boolean())
      throw ParseError("dataset", std::string(name) + ":" + std::to_string(rec.line) + ": missing boolean \"hsd\"");
    e.hsd = it->get<bool>();
    if (!seen.insert(e.sentence_id).second)
      throw ParseError("dataset", std::string(name) + ":" + std::to_string(rec.line) + ": duplicate sentence_id '" +
                                      e.sentence_id + "'");
    d.entries.push_back(std::move(e));
  }
  return d;
}

inline LabeledDataset load_dataset(const std::filesystem::path& path) {
  return parse_dataset(io::read_file(path, "dataset"), path.filename().string());
}

}  // namespace vacscreen
