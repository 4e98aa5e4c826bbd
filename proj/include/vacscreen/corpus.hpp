#pragma once

// Vacancy ingestion, sentence segmentation and synthetic corpora.

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vacscreen/error.hpp"
#include "vacscreen/util/apportion.hpp"
#include "vacscreen/util/jsonl.hpp"
#include "vacscreen/util/random.hpp"
#include "vacscreen/util/text.hpp"

namespace vacscreen::corpus {

using nlohmann::json;

struct Vacancy {
  std::string id;
  std::string body;
  std::string source;
  std::optional<std::string> posted_date;
};

struct Span {
  std::size_t start = 0;
  std::size_t end = 0;  // exclusive, code points
  bool operator==(const Span&) const = default;
};

struct Sentence {
  std::string id;
  std::string vacancy_id;
  std::size_t index = 0;
  std::string text;
  Span span;
};

inline std::string sentence_id(std::string_view vacancy_id, std::size_t index) {
  return std::string(vacancy_id) + "#" + std::to_string(index);
}

namespace detail {

inline bool is_closer(char32_t c) {
  return c == U'"' || c == U'\'' || c == U')' || c == U']' || c == U'»' ||
         c == U'”' || c == U'’';
}

inline bool is_terminator(char32_t c) { return c == U'.' || c == U'!' || c == U'?'; }

// Lower-cased whitespace-delimited token that ends at `last` (inclusive),
// with leading brackets removed.
inline std::u32string token_ending_at(const std::u32string& cps, std::size_t last) {
  std::size_t begin = last + 1;
  while (begin > 0 && !text::is_space(cps[begin - 1])) --begin;
  while (begin <= last && (cps[begin] == U'(' || cps[begin] == U'[')) ++begin;
  std::u32string tok = cps.substr(begin, last + 1 - begin);
  for (char32_t& c : tok) c = static_cast<char32_t>(u_tolower(static_cast<UChar32>(c)));
  return tok;
}

inline bool is_abbreviation(const std::u32string& token) {
  static const std::array<std::u32string_view, 4> kAbbrev = {U"o.a.", U"bijv.", U"m/v.",
                                                             U"m/v)."};
  return std::find(kAbbrev.begin(), kAbbrev.end(), token) != kAbbrev.end();
}

}  // namespace detail

// Boundaries: '.', '!' or '?' (optionally followed by closing quotes or
// brackets) followed by whitespace or end of text, and blank lines. A period
// closing "o.a.", "bijv." or "m/v" does not end a sentence. Sentence spans are
// trimmed of surrounding whitespace.
inline std::vector<Sentence> segment_sentences(const Vacancy& vacancy) {
  if (vacancy.body.empty()) throw InputError("corpus", "vacancy '" + vacancy.id + "' has an empty body");
  const std::u32string cps = text::to_u32(vacancy.body);
  const std::size_t n = cps.size();

  std::vector<std::size_t> cuts;  // exclusive end of each raw segment
  for (std::size_t i = 0; i < n; ++i) {
    char32_t c = cps[i];
    if (detail::is_terminator(c)) {
      std::size_t j = i + 1;
      while (j < n && detail::is_closer(cps[j])) ++j;
      if (j < n && !text::is_space(cps[j])) continue;
      if (c == U'.' && detail::is_abbreviation(detail::token_ending_at(cps, i))) continue;
      cuts.push_back(j);
      i = j - 1;
    } else if (c == U'\n') {
      std::size_t j = i + 1;
      while (j < n && (cps[j] == U' ' || cps[j] == U'\t' || cps[j] == U'\r')) ++j;
      if (j < n && cps[j] == U'\n') {
        cuts.push_back(i);
        i = j - 1;
      }
    }
  }
  cuts.push_back(n);

  std::vector<Sentence> out;
  std::size_t begin = 0;
  for (std::size_t cut : cuts) {
    if (cut < begin) continue;
    std::size_t s = begin, e = cut;
    while (s < e && text::is_space(cps[s])) ++s;
    while (e > s && text::is_space(cps[e - 1])) --e;
    if (e > s) {
      Sentence sent;
      sent.vacancy_id = vacancy.id;
      sent.index = out.size();
      sent.id = sentence_id(vacancy.id, sent.index);
      sent.text = text::to_utf8(std::u32string_view(cps).substr(s, e - s));
      sent.span = {s, e};
      out.push_back(std::move(sent));
    }
    begin = cut;
  }
  return out;
}

// Fragments shorter than two tokens stay in the corpus but are not queued
// for annotation or classification.
inline bool is_annotatable(const Sentence& s) { return text::tokenize(s.text).size() >= 2; }

enum class Format { jsonl, csv };

inline Format format_from_path(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
  if (ext == ".csv") return Format::csv;
  return Format::jsonl;
}

namespace detail {

struct CsvRecord {
  std::size_t line;
  std::vector<std::string> fields;
};

// RFC 4180: comma separated, double-quote quoting with "" escapes, quoted
// fields may span lines; CRLF or LF record separators.
inline std::vector<CsvRecord> parse_csv(std::string_view content, std::string_view name) {
  std::vector<CsvRecord> records;
  std::size_t line = 1;
  std::size_t i = 0;
  const std::size_t n = content.size();
  while (i < n) {
    CsvRecord rec{line, {}};
    std::string field;
    bool end_of_record = false;
    while (!end_of_record) {
      field.clear();
      if (i < n && content[i] == '"') {
        ++i;
        bool closed = false;
        while (i < n) {
          char c = content[i];
          if (c == '"') {
            if (i + 1 < n && content[i + 1] == '"') {
              field.push_back('"');
              i += 2;
              continue;
            }
            ++i;
            closed = true;
            break;
          }
          if (c == '\n') ++line;
          field.push_back(c);
          ++i;
        }
        if (!closed)
          throw ParseError("corpus", std::string(name) + ":" + std::to_string(rec.line) +
                                         ": unterminated quoted field");
        if (i < n && content[i] != ',' && content[i] != '\n' && content[i] != '\r')
          throw ParseError("corpus", std::string(name) + ":" + std::to_string(line) +
                                         ": unexpected character after closing quote");
      } else {
        while (i < n && content[i] != ',' && content[i] != '\n' && content[i] != '\r') {
          if (content[i] == '"')
            throw ParseError("corpus", std::string(name) + ":" + std::to_string(line) +
                                           ": quote inside unquoted field");
          field.push_back(content[i++]);
        }
      }
      rec.fields.push_back(field);
      if (i >= n) {
        end_of_record = true;
      } else if (content[i] == ',') {
        ++i;
      } else {
        if (content[i] == '\r') ++i;
        if (i < n && content[i] == '\n') ++i;
        ++line;
        end_of_record = true;
      }
    }
    bool blank = rec.fields.size() == 1 && rec.fields[0].empty();
    if (!blank) records.push_back(std::move(rec));
  }
  return records;
}

inline void add_vacancy(std::vector<Vacancy>& out, std::map<std::string, std::size_t>& seen_at,
                        Vacancy v, std::size_t line, std::string_view name) {
  if (v.body.empty())
    throw ParseError("corpus", std::string(name) + ":" + std::to_string(line) + ": empty body");
  if (v.id.empty()) v.id = std::string(name) + ":" + std::to_string(line);
  auto [it, inserted] = seen_at.emplace(v.id, line);
  if (!inserted)
    throw ParseError("corpus", std::string(name) + ": duplicate id '" + v.id + "' on lines " +
                                   std::to_string(it->second) + " and " + std::to_string(line));
  v.body = text::nfc(v.body);
  out.push_back(std::move(v));
}

}  // namespace detail

inline std::vector<Vacancy> parse_vacancies(std::string_view content, Format format,
                                            std::string_view name) {
  std::vector<Vacancy> out;
  std::map<std::string, std::size_t> seen_at;
  if (format == Format::jsonl) {
    for (const auto& rec : io::parse_jsonl(content, name, "corpus")) {
      if (!rec.value.is_object())
        throw ParseError("corpus", std::string(name) + ":" + std::to_string(rec.line) +
                                       ": record is not an object");
      Vacancy v;
      if (rec.value.contains("id")) v.id = io::require_string(rec, "id", name, "corpus");
      v.body = io::require_string(rec, "body", name, "corpus");
      if (auto it = rec.value.find("source"); it != rec.value.end() && it->is_string())
        v.source = it->get<std::string>();
      if (auto it = rec.value.find("posted_date"); it != rec.value.end() && it->is_string())
        v.posted_date = it->get<std::string>();
      detail::add_vacancy(out, seen_at, std::move(v), rec.line, name);
    }
    return out;
  }

  auto records = detail::parse_csv(content, name);
  if (records.empty()) throw ParseError("corpus", std::string(name) + ": missing CSV header row");
  const auto& header = records.front().fields;
  auto column = [&](std::string_view col) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == col) return i;
    return std::nullopt;
  };
  auto id_col = column("id");
  auto body_col = column("body");
  if (!id_col) throw ParseError("corpus", std::string(name) + ": schema error, missing column \"id\"");
  if (!body_col) throw ParseError("corpus", std::string(name) + ": schema error, missing column \"body\"");
  auto source_col = column("source");
  auto date_col = column("posted_date");
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    if (rec.fields.size() != header.size())
      throw ParseError("corpus", std::string(name) + ":" + std::to_string(rec.line) + ": expected " +
                                     std::to_string(header.size()) + " fields, found " +
                                     std::to_string(rec.fields.size()));
    Vacancy v;
    v.id = rec.fields[*id_col];
    v.body = rec.fields[*body_col];
    if (source_col) v.source = rec.fields[*source_col];
    if (date_col && !rec.fields[*date_col].empty()) v.posted_date = rec.fields[*date_col];
    detail::add_vacancy(out, seen_at, std::move(v), rec.line, name);
  }
  return out;
}

inline std::vector<Vacancy> ingest(const std::filesystem::path& path, Format format) {
  return parse_vacancies(io::read_file(path, "corpus"), format, path.filename().string());
}

inline std::vector<Vacancy> ingest(const std::filesystem::path& path) {
  return ingest(path, format_from_path(path));
}

inline json to_json(const Sentence& s) {
  return json{{"id", s.id},
              {"vacancy_id", s.vacancy_id},
              {"index", s.index},
              {"text", s.text},
              {"span", json::array({s.span.start, s.span.end})}};
}

inline Sentence sentence_from_json(const io::JsonLine& rec, std::string_view name) {
  Sentence s;
  s.id = io::require_string(rec, "id", name, "corpus");
  s.text = text::nfc(io::require_string(rec, "text", name, "corpus"));
  if (auto it = rec.value.find("vacancy_id"); it != rec.value.end() && it->is_string())
    s.vacancy_id = it->get<std::string>();
  if (auto it = rec.value.find("index"); it != rec.value.end() && it->is_number_unsigned())
    s.index = it->get<std::size_t>();
  if (auto it = rec.value.find("span"); it != rec.value.end() && it->is_array() && it->size() == 2)
    s.span = {(*it)[0].get<std::size_t>(), (*it)[1].get<std::size_t>()};
  else
    s.span = {0, text::length(s.text)};
  return s;
}

inline std::vector<Sentence> segment_all(const std::vector<Vacancy>& vacancies) {
  std::vector<Sentence> out;
  for (const auto& v : vacancies) {
    auto part = segment_sentences(v);
    out.insert(out.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  return out;
}

inline std::vector<Sentence> parse_sentences(std::string_view content, std::string_view name) {
  std::vector<Sentence> out;
  for (const auto& rec : io::parse_jsonl(content, name, "corpus")) out.push_back(sentence_from_json(rec, name));
  return out;
}

// Sentence JSONL as written by `segment`: {id, vacancy_id, index, text, span}.
inline std::vector<Sentence> load_sentences(const std::filesystem::path& path) {
  return parse_sentences(io::read_file(path, "corpus"), path.filename().string());
}

inline std::string sentences_hash(const std::vector<Sentence>& sentences) {
  std::uint64_t h = fnv1a64("");
  for (const auto& s : sentences) {
    h = fnv1a64(to_json(s).dump(), h);
    h = fnv1a64("\n", h);
  }
  return hex64(h);
}

// --- synthetic corpora ------------------------------------------------------

struct TermFiller {
  std::string surface;  // text substituted for "{term}"
  std::string group;
};

struct GroupShape {
  std::string group;
  double weight = 1.0;                 // relative sentence count
  std::optional<double> hsd_rate;      // relative positive rate inside the group
};

struct SyntheticSpec {
  std::size_t n_sentences = 1000;
  double planted_hsd_rate = 0.288;
  std::uint64_t seed = 0;
  std::vector<std::string> positive_templates;
  std::vector<std::string> negative_templates;
  std::vector<TermFiller> fillers;
  std::vector<GroupShape> groups;
  std::vector<std::string> padding;  // neutral clauses appended at random
};

struct SyntheticCorpus {
  std::vector<Sentence> sentences;
  std::vector<bool> labels;
  std::vector<std::string> groups;
  std::map<std::string, std::pair<std::size_t, std::size_t>> group_counts;  // group -> (n, positives)
};

namespace detail {

inline std::string fill(std::string_view tmpl, std::string_view term) {
  std::string out(tmpl);
  auto pos = out.find("{term}");
  if (pos == std::string::npos) throw ConfigError("corpus", "template without {term} slot: " + out);
  out.replace(pos, 6, term);
  if (!out.empty() && pos == 0) {
    auto cps = text::to_u32(out);
    cps[0] = static_cast<char32_t>(u_toupper(static_cast<UChar32>(cps[0])));
    out = text::to_utf8(cps);
  }
  return out;
}

}  // namespace detail

// Exactly round(n * rate) sentences are positive. Group sizes follow the
// group weights and positives are apportioned by weight * group rate.
inline SyntheticCorpus generate_synthetic(const SyntheticSpec& spec) {
  if (spec.positive_templates.empty() || spec.negative_templates.empty())
    throw ConfigError("corpus", "synthetic spec needs templates for both classes");
  if (spec.fillers.empty()) throw ConfigError("corpus", "synthetic spec needs term fillers");
  if (!(spec.planted_hsd_rate >= 0.0 && spec.planted_hsd_rate <= 1.0))
    throw ConfigError("corpus", "planted_hsd_rate must lie in [0,1]");

  std::vector<GroupShape> groups = spec.groups;
  if (groups.empty()) {
    for (const auto& f : spec.fillers)
      if (std::none_of(groups.begin(), groups.end(), [&](const GroupShape& g) { return g.group == f.group; }))
        groups.push_back({f.group, 1.0, std::nullopt});
  }
  std::map<std::string, std::vector<std::size_t>> fillers_by_group;
  for (std::size_t i = 0; i < spec.fillers.size(); ++i) fillers_by_group[spec.fillers[i].group].push_back(i);
  for (const auto& g : groups)
    if (!fillers_by_group.contains(g.group))
      throw ConfigError("corpus", "no filler for synthetic group '" + g.group + "'");

  const std::size_t n = spec.n_sentences;
  const auto n_pos = static_cast<std::size_t>(std::llround(static_cast<double>(n) * spec.planted_hsd_rate));

  std::vector<double> weights;
  for (const auto& g : groups) weights.push_back(g.weight);
  auto sizes = apportion(n, weights, std::vector<std::size_t>(groups.size(), n));
  std::vector<double> pos_weights;
  for (std::size_t i = 0; i < groups.size(); ++i)
    pos_weights.push_back(static_cast<double>(sizes[i]) * groups[i].hsd_rate.value_or(1.0));
  auto positives = apportion(n_pos, pos_weights, sizes);
  std::size_t placed = 0;
  for (auto p : positives) placed += p;
  if (placed < n_pos) {
    // Rates of zero left some positives unplaced; spread them by size.
    std::vector<std::size_t> room;
    for (std::size_t i = 0; i < groups.size(); ++i) room.push_back(sizes[i] - positives[i]);
    auto extra = apportion(n_pos - placed, std::vector<double>(sizes.begin(), sizes.end()), room);
    for (std::size_t i = 0; i < groups.size(); ++i) positives[i] += extra[i];
  }

  Rng rng(derive_seed(spec.seed, "synthetic"));
  struct Slot {
    std::size_t group;
    bool positive;
  };
  std::vector<Slot> slots;
  slots.reserve(n);
  for (std::size_t g = 0; g < groups.size(); ++g)
    for (std::size_t i = 0; i < sizes[g]; ++i) slots.push_back({g, i < positives[g]});
  rng.shuffle(slots);

  SyntheticCorpus out;
  const int width = 6;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const auto& slot = slots[i];
    const auto& candidates = fillers_by_group[groups[slot.group].group];
    const auto& filler = spec.fillers[candidates[rng.below(candidates.size())]];
    const auto& templates = slot.positive ? spec.positive_templates : spec.negative_templates;
    std::string body = detail::fill(templates[rng.below(templates.size())], filler.surface);
    if (!spec.padding.empty() && rng.below(2) == 1) {
      if (!body.empty() && body.back() == '.') body.pop_back();
      body += ", " + spec.padding[rng.below(spec.padding.size())] + ".";
    }
    std::string num = std::to_string(i);
    num.insert(0, static_cast<std::size_t>(std::max(0, width - static_cast<int>(num.size()))), '0');
    Sentence s;
    s.vacancy_id = "synth-" + num;
    s.index = 0;
    s.id = sentence_id(s.vacancy_id, 0);
    s.text = text::nfc(body);
    s.span = {0, text::length(s.text)};
    out.sentences.push_back(std::move(s));
    out.labels.push_back(slot.positive);
    out.groups.push_back(groups[slot.group].group);
    auto& counts = out.group_counts[groups[slot.group].group];
    ++counts.first;
    if (slot.positive) ++counts.second;
  }
  return out;
}

// Table-1-shaped Dutch default: eight term groups weighted by their published
// sentence counts and HSD rates.
inline SyntheticSpec default_synthetic_spec(std::size_t n, double rate, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.n_sentences = n;
  spec.planted_hsd_rate = rate;
  spec.seed = seed;
  spec.positive_templates = {
      "Wij zoeken een {term} voor de functie van verkoper.",
      "Voor deze vacature zijn wij op zoek naar een {term} met rijbewijs.",
      "Ben jij de {term} die ons magazijn komt versterken?",
      "Alleen {term} worden uitgenodigd om te solliciteren.",
      "De ideale kandidaat is een {term} tussen de twintig en dertig.",
      "Wij willen graag een {term} aannemen voor de receptie.",
      "Solliciteer nu als je een {term} bent die van aanpakken houdt.",
      "Onze klant wil uitsluitend een {term} in het team.",
  };
  spec.negative_templates = {
      "Je werkt in een team waarin veel {term} actief zijn.",
      "Onze winkel verkoopt kleding voor {term} en kinderen.",
      "Je geeft deskundig advies aan {term} over onze producten.",
      "In de kliniek behandel je vooral {term} met rugklachten.",
      "Het tijdschrift richt zich op {term} die graag reizen.",
      "De sportclub organiseert trainingen voor {term} op zaterdag.",
      "Als begeleider ondersteun je {term} in hun dagelijkse leven.",
      "Wij ontwerpen schoenen voor {term} van alle leeftijden.",
  };
  spec.fillers = {
      {"jongen", "jongen(s)"},        {"jongens", "jongen(s)"},
      {"man", "man(nen)"},            {"mannen", "man(nen)"},
      {"mannelijke", "mannelijk(e)"}, {"mannelijk", "mannelijk(e)"},
      {"dame", "dame(s)"},            {"dames", "dame(s)"},
      {"vrouw", "vrouw(en)"},         {"vrouwen", "vrouw(en)"},
      {"vrouwelijke", "vrouwelijk(e)"}, {"vrouwelijk", "vrouwelijk(e)"},
      {"enthousiaste jongens", "other"}, {"enthousiaste meiden", "other"},
      {"jonge god", "other"},         {"jonge godin", "other"},
      {"kerel", "informal"},          {"griet", "informal"},
      {"vent", "informal"},           {"gozer", "informal"},
  };
  spec.groups = {
      {"jongen(s)", 997, 0.109},     {"man(nen)", 997, 0.256},     {"mannelijk(e)", 505, 0.471},
      {"dame(s)", 985, 0.181},       {"vrouw(en)", 993, 0.200},    {"vrouwelijk(e)", 1059, 0.607},
      {"other", 191, 0.283},         {"informal", 220, 0.177},
  };
  spec.padding = {
      "fulltime of parttime",          "in de regio Utrecht",
      "met goede doorgroeimogelijkheden", "binnen een informele werksfeer",
      "vanaf volgende maand",          "in een internationaal bedrijf",
      "met een vast contract",          "op basis van ervaring",
  };
  return spec;
}

}  // namespace vacscreen::corpus
