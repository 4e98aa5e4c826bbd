#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "vacscreen/terms.hpp"
#include "vacscreen/util/random.hpp"

using namespace vacscreen;
using namespace vacscreen::terms;

namespace {

corpus::Sentence sent(std::string text, std::string id = "s") {
  corpus::Sentence s;
  s.id = std::move(id);
  s.text = std::move(text);
  s.span = {0, text::length(s.text)};
  return s;
}

const TermCatalog& catalog() {
  static const TermCatalog c = default_catalog();
  return c;
}

}  // namespace

TEST(Catalog, DefaultHasEightGroups) {
  const auto& c = catalog();
  EXPECT_EQ(c.version(), "nl-gender-1");
  std::vector<std::string> expected = {"jongen(s)", "man(nen)", "mannelijk(e)", "dame(s)",
                                       "vrouw(en)", "vrouwelijk(e)", "other", "informal"};
  EXPECT_EQ(c.groups(), expected);
}

TEST(Catalog, ShippedFileMatchesBuiltin) {
  auto file = compile_catalog(std::filesystem::path(VACSCREEN_SOURCE_DIR) / "data" / "catalog_nl.json");
  ASSERT_EQ(file.terms().size(), catalog().terms().size());
  for (std::size_t i = 0; i < file.terms().size(); ++i)
    EXPECT_EQ(to_json(file.terms()[i].term), to_json(catalog().terms()[i].term));
}

TEST(Catalog, EmptyCatalogIsConfigError) {
  EXPECT_THROW(parse_catalog(R"({"version":"x","terms":[]})"), ConfigError);
  EXPECT_THROW(parse_catalog(""), ConfigError);
}

TEST(Catalog, UnbalancedPatternNamesTermAndPattern) {
  try {
    parse_catalog(R"({"version":"x","terms":[{"id":"men","pattern":"man(nen","group":"g","exceptions":[]}]})");
    FAIL();
  } catch (const ConfigError& e) {
    std::string msg = e.what();
    EXPECT_NE(msg.find("man(nen"), std::string::npos) << msg;
    EXPECT_NE(msg.find("'men'"), std::string::npos) << msg;
    EXPECT_NE(msg.find("position"), std::string::npos) << msg;
  }
}

TEST(Catalog, BadExceptionAndDuplicateId) {
  EXPECT_THROW(parse_catalog(R"({"terms":[{"id":"a","pattern":"a","group":"g","exceptions":["(["]}]})"),
               ConfigError);
  EXPECT_THROW(parse_catalog(R"({"terms":[{"id":"a","pattern":"a","group":"g"},{"id":"a","pattern":"b","group":"g"}]})"),
               ConfigError);
}

TEST(Scan, MaleCandidate) {
  auto m = scan_sentence(sent("Wij zoeken een mannelijke kandidaat"), catalog());
  ASSERT_EQ(m.size(), 1u);
  EXPECT_EQ(m[0].term_id, "mannelijk");
  EXPECT_EQ(catalog().find(m[0].term_id)->term.label, "mannelijk(e)");
  EXPECT_EQ(m[0].span, (corpus::Span{15, 25}));
  EXPECT_FALSE(m[0].suppressed);
  EXPECT_TRUE(baseline_flag(sent("Wij zoeken een mannelijke kandidaat"), catalog()));
}

TEST(Scan, InclusivePhrasingIsSuppressed) {
  auto s = sent("mannelijke of vrouwelijke kandidaten welkom");
  auto m = scan_sentence(s, catalog());
  ASSERT_EQ(m.size(), 2u);
  EXPECT_TRUE(m[0].suppressed);
  EXPECT_TRUE(m[1].suppressed);
  EXPECT_FALSE(baseline_flag(s, catalog()));
}

TEST(Scan, NoTermNoMatches) {
  EXPECT_TRUE(scan_sentence(sent("Wij zoeken een ervaren collega"), catalog()).empty());
}

TEST(Scan, WordBoundaries) {
  EXPECT_TRUE(scan_sentence(sent("Onze manager zoekt een evenement"), catalog()).empty());
  EXPECT_TRUE(scan_sentence(sent("Ventilatie en mannequins"), catalog()).empty());
  auto m = scan_sentence(sent("Mannen gezocht"), catalog());
  ASSERT_EQ(m.size(), 1u);
  EXPECT_EQ(m[0].span, (corpus::Span{0, 6}));
  // Accented letters count as word characters.
  EXPECT_TRUE(scan_sentence(sent("mané"), catalog()).empty());
}

TEST(Scan, OverlappingTermsOrderedLongestFirst) {
  auto m = scan_sentence(sent("Ben jij onze man?"), catalog());
  ASSERT_EQ(m.size(), 2u);
  EXPECT_EQ(m[0].term_id, "other-onze-man");
  EXPECT_EQ(m[0].span, (corpus::Span{0, 16}));
  EXPECT_EQ(m[1].term_id, "man");
  EXPECT_EQ(primary_group(m, catalog()), "other");
}

TEST(Scan, SpansNonOverlappingPerTerm) {
  auto m = scan_sentence(sent("man man mannen, man"), catalog());
  ASSERT_EQ(m.size(), 4u);
  for (std::size_t i = 1; i < m.size(); ++i) EXPECT_LE(m[i - 1].span.end, m[i].span.start);
}

TEST(Scan, AnchoredPatternsNotRewrapped) {
  EXPECT_EQ(CompiledPattern::anchor("^man"), "(?:^man)\\b");
  EXPECT_EQ(CompiledPattern::anchor("man$"), "\\b(?:man$)");
  EXPECT_EQ(CompiledPattern::anchor("\\bman\\b"), "(?:\\bman\\b)");
}

TEST(Scan, PropertiesOnRandomSentences) {
  const std::vector<std::string> words = {"wij", "zoeken", "een", "man", "mannelijke", "vrouw", "vrouwelijke",
                                          "dames", "heren", "kerel", "manager", "enthousiaste", "jongens",
                                          "meisjes", "of", "en", "Jonge", "god", "VENT", "Mannen"};
  Rng rng(3);
  // Catalog built from a permuted term list.
  auto doc = nlohmann::json::parse(kDefaultCatalogJson);
  auto& arr = doc["terms"];
  std::vector<nlohmann::json> items(arr.begin(), arr.end());
  rng.shuffle(items);
  doc["terms"] = items;
  auto permuted = parse_catalog(doc.dump());

  for (int trial = 0; trial < 400; ++trial) {
    std::string text;
    auto len = 1 + rng.below(10);
    for (std::size_t i = 0; i < len; ++i) text += (i ? " " : "") + words[rng.below(words.size())];
    auto s = sent(text);
    auto matches = scan_sentence(s, catalog());
    bool any_unsuppressed = false;
    for (const auto& m : matches) any_unsuppressed = any_unsuppressed || !m.suppressed;
    EXPECT_EQ(baseline_flag(s, catalog()), any_unsuppressed);
    EXPECT_EQ(baseline_flag(s, catalog()), baseline_flag(sent(text::to_upper(text)), catalog())) << text;
    for (std::size_t i = 0; i < matches.size(); ++i)
      for (std::size_t j = i + 1; j < matches.size(); ++j)
        if (matches[i].term_id == matches[j].term_id) {
          EXPECT_TRUE(matches[i].span.end <= matches[j].span.start || matches[j].span.end <= matches[i].span.start);
        }
    auto other = scan_sentence(s, permuted);
    ASSERT_EQ(other.size(), matches.size());
    for (std::size_t i = 0; i < matches.size(); ++i) EXPECT_EQ(to_json(other[i]), to_json(matches[i]));
  }
}

TEST(FrequencyReport, CountsPerGroupAndTotals) {
  std::vector<corpus::Sentence> s = {sent("Wij zoeken een vrouwelijke kandidaat", "a"),
                                     sent("Vrouwelijke klanten", "b"),
                                     sent("Geen term hier", "c"),
                                     sent("Stoere kerel gezocht", "d")};
  std::vector<bool> labels = {true, false, true, true};
  auto r = term_frequency_report(s, labels, catalog());
  ASSERT_EQ(r.rows.size(), 8u);
  EXPECT_EQ(r.rows[5].group, "vrouwelijk(e)");
  EXPECT_EQ(r.rows[5].frequency, 2u);
  EXPECT_DOUBLE_EQ(r.rows[5].hsd_fraction(), 0.5);
  EXPECT_EQ(r.rows[7].frequency, 1u);
  EXPECT_EQ(r.total.frequency, 3u);
  EXPECT_EQ(r.total.hsd, 2u);

  auto none = term_frequency_report(s, {false, false, false, false}, catalog());
  for (const auto& row : none.rows) EXPECT_EQ(row.hsd_fraction(), 0.0);
  EXPECT_THROW(term_frequency_report(s, {true}, catalog()), InputError);
}

TEST(FrequencyReport, SyntheticCountsMatchConstruction) {
  auto c = corpus::generate_synthetic(corpus::default_synthetic_spec(2000, 0.288, 9));
  auto r = term_frequency_report(c.sentences, c.labels, catalog());
  for (const auto& row : r.rows) {
    auto it = c.group_counts.find(row.group);
    ASSERT_NE(it, c.group_counts.end()) << row.group;
    EXPECT_EQ(row.frequency, it->second.first) << row.group;
    EXPECT_EQ(row.hsd, it->second.second) << row.group;
  }
  EXPECT_EQ(r.total.frequency, 2000u);
}
