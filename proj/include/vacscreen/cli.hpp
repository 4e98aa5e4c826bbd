#pragma once

// Command-line front end. Every option may also come from a JSON config file
// (--config): top-level keys apply to all subcommands, a key named after the
// subcommand holds an object of overrides, and flags given on the command
// line win over both. Relative paths in the config resolve against the config
// file's directory.

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "vacscreen/annotate.hpp"
#include "vacscreen/classify.hpp"
#include "vacscreen/corpus.hpp"
#include "vacscreen/dataset.hpp"
#include "vacscreen/error.hpp"
#include "vacscreen/evaluate.hpp"
#include "vacscreen/features.hpp"
#include "vacscreen/service.hpp"
#include "vacscreen/terms.hpp"
#include "vacscreen/util/jsonl.hpp"

namespace vacscreen::cli {

using nlohmann::json;
namespace fs = std::filesystem;

class Settings {
 public:
  void load_config(const fs::path& file, const std::string& subcommand) {
    json j;
    try {
      j = json::parse(io::read_file(file, "cli"));
    } catch (const json::parse_error& e) {
      throw ConfigError("cli", "config " + file.string() + " is not valid JSON: " + e.what());
    }
    if (!j.is_object()) throw ConfigError("cli", "config " + file.string() + " must be a JSON object");
    auto base = file.parent_path();
    for (const auto& [k, v] : j.items())
      if (!is_subcommand_section(k, v)) values_[k] = {v, base};
    if (j.contains(subcommand) && j[subcommand].is_object())
      for (const auto& [k, v] : j[subcommand].items()) values_[k] = {v, base};
  }

  void set_flag(const std::string& key, const std::string& value) { values_[key] = {json(value), {}, true}; }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  const json& raw(const std::string& key) const { return entry(key).value; }

  fs::path base(const std::string& key) const { return entry(key).base; }

  bool from_flag(const std::string& key) const { return entry(key).flag; }

  std::string str(const std::string& key) const {
    const auto& v = raw(key);
    if (!v.is_string()) throw ConfigError("cli", "option '" + key + "' must be a string");
    return v.get<std::string>();
  }

  std::string str(const std::string& key, const std::string& def) const { return has(key) ? str(key) : def; }

  fs::path path(const std::string& key) const {
    fs::path p = str(key);
    return p.is_relative() && !base(key).empty() ? base(key) / p : p;
  }

  std::optional<fs::path> opt_path(const std::string& key) const {
    if (!has(key)) return std::nullopt;
    return path(key);
  }

  double number(const std::string& key, double def) const {
    if (!has(key)) return def;
    const auto& v = raw(key);
    if (v.is_number()) return v.get<double>();
    if (v.is_string()) {
      try {
        std::size_t pos = 0;
        double d = std::stod(v.get<std::string>(), &pos);
        if (pos == v.get<std::string>().size()) return d;
      } catch (const std::exception&) {
      }
    }
    throw ConfigError("cli", "option '" + key + "' must be a number");
  }

  std::uint64_t unsigned_int(const std::string& key, std::uint64_t def) const {
    if (!has(key)) return def;
    const auto& v = raw(key);
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_string()) {
      const auto& s = v.get<std::string>();
      if (!s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; })) {
        try {
          return std::stoull(s);
        } catch (const std::exception&) {
        }
      }
    }
    throw ConfigError("cli", "option '" + key + "' must be a non-negative integer");
  }

  // Inline JSON, a path to a JSON file, or a JSON value from the config.
  json json_value(const std::string& key) const {
    const auto& v = raw(key);
    if (!v.is_string()) return v;
    const auto& s = v.get<std::string>();
    auto first = s.find_first_not_of(" \t\n");
    if (first != std::string::npos && (s[first] == '{' || s[first] == '[')) {
      try {
        return json::parse(s);
      } catch (const json::parse_error& e) {
        throw ConfigError("cli", "option '" + key + "' is not valid JSON: " + e.what());
      }
    }
    auto p = path(key);
    try {
      return json::parse(io::read_file(p, "cli"));
    } catch (const json::parse_error& e) {
      throw ConfigError("cli", p.string() + " is not valid JSON: " + e.what());
    }
  }

  // Directory against which relative paths inside a JSON value resolve.
  fs::path json_base(const std::string& key) const {
    const auto& v = raw(key);
    if (v.is_string()) {
      const auto& s = v.get<std::string>();
      auto first = s.find_first_not_of(" \t\n");
      if (first == std::string::npos || (s[first] != '{' && s[first] != '[')) return path(key).parent_path();
    }
    return base(key);
  }

 private:
  struct Entry {
    json value;
    fs::path base;
    bool flag = false;
  };

  static bool is_subcommand_section(const std::string& key, const json& v) {
    static const std::vector<std::string> names = {
        "scan",  "assign",   "agreement",      "pool", "fit-features", "train",   "gridsearch", "evaluate",
        "learning-curve", "loto", "discover", "serve", "split",     "synth",   "segment"};
    return v.is_object() && std::find(names.begin(), names.end(), key) != names.end();
  }

  const Entry& entry(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("cli", "missing required option --" + key);
    return it->second;
  }

  std::map<std::string, Entry> values_;
};

namespace detail {

inline void emit(const Settings& s, std::ostream& out, const std::string& content, const std::string& key = "output") {
  if (s.has(key)) io::write_file(s.path(key), content, "cli");
  else out << content;
}

inline std::string pretty(const json& j) { return j.dump(2) + "\n"; }

inline terms::TermCatalog catalog(const Settings& s) {
  if (auto p = s.opt_path("catalog")) return terms::compile_catalog(*p);
  return terms::default_catalog();
}

inline FeatureConfig feature_config(const Settings& s) {
  FeatureConfig c;
  if (s.has("features")) {
    const auto& raw = s.raw("features");
    if (raw.is_string()) {
      auto str = raw.get<std::string>();
      if (str == "bow" || str == "w2v" || str == "contextual") c.kind = parse_feature_kind(str);
      else c = feature_config_from_json(s.json_value("features"), s.json_base("features"));
    } else {
      c = feature_config_from_json(raw, s.base("features"));
    }
  }
  if (s.has("embeddings")) c.embeddings = s.path("embeddings");
  if (s.has("contextual")) c.contextual = s.path("contextual");
  if (s.has("max-features")) c.max_features = s.unsigned_int("max-features", 0);
  if (c.kind == FeatureKind::w2v && c.embeddings.empty())
    throw ConfigError("cli", "w2v features need --embeddings");
  if (c.kind == FeatureKind::contextual && c.contextual.empty())
    throw ConfigError("cli", "contextual features need --contextual");
  return c;
}

inline ModelParams model_params(const Settings& s) {
  auto kind = parse_model_kind(s.str("model", "logistic"));
  json hp = s.has("hyperparameters") ? s.json_value("hyperparameters") : json::object();
  return params_from_json(kind, hp);
}

inline MethodSpec method(const Settings& s) { return {feature_config(s), model_params(s)}; }

inline void print_warnings(const std::vector<std::string>& warnings, std::ostream& err) {
  for (const auto& w : warnings) err << "warning: " << w << "\n";
}

inline Featurizer load_featurizer(const fs::path& p) {
  try {
    return Featurizer::from_json(json::parse(io::read_file(p, "cli")));
  } catch (const json::parse_error& e) {
    throw ParseError("features", p.string() + " is not valid JSON: " + e.what());
  }
}

inline json load_json(const fs::path& p) {
  try {
    return json::parse(io::read_file(p, "cli"));
  } catch (const json::parse_error& e) {
    throw ParseError("cli", p.string() + " is not valid JSON: " + e.what());
  }
}

inline std::vector<std::string> string_list(const Settings& s, const std::string& key) {
  const auto& raw = s.raw(key);
  std::vector<std::string> out;
  if (raw.is_array()) {
    for (const auto& v : raw) out.push_back(v.get<std::string>());
    return out;
  }
  std::stringstream ss(s.str(key));
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

inline std::vector<annotate::SentenceRef> sentence_refs(const std::vector<corpus::Sentence>& sentences) {
  std::vector<annotate::SentenceRef> out;
  for (const auto& s : sentences) out.push_back({s.id, s.text});
  return out;
}

}  // namespace detail

// --- subcommands ------------------------------------------------------------

inline int cmd_segment(const Settings& s, std::ostream& out, std::ostream&) {
  auto input = s.path("input");
  auto vacancies = s.has("format") ? corpus::ingest(input, s.str("format") == "csv" ? corpus::Format::csv
                                                                                     : corpus::Format::jsonl)
                                   : corpus::ingest(input);
  std::string content;
  for (const auto& sentence : corpus::segment_all(vacancies)) content += corpus::to_json(sentence).dump() + "\n";
  detail::emit(s, out, content);
  return 0;
}

inline int cmd_synth(const Settings& s, std::ostream& out, std::ostream&) {
  auto spec = corpus::default_synthetic_spec(s.unsigned_int("n", 1000), s.number("rate", 0.288),
                                             s.unsigned_int("seed", 0));
  auto c = corpus::generate_synthetic(spec);
  if (s.has("sentences")) {
    std::string content;
    for (const auto& sentence : c.sentences) content += corpus::to_json(sentence).dump() + "\n";
    io::write_file(s.path("sentences"), content, "cli");
  }
  detail::emit(s, out, to_jsonl(to_dataset(c)));
  return 0;
}

inline int cmd_scan(const Settings& s, std::ostream& out, std::ostream&) {
  auto catalog = detail::catalog(s);
  std::string content;
  for (const auto& sentence : corpus::load_sentences(s.path("sentences")))
    for (const auto& m : terms::scan_sentence(sentence, catalog)) content += terms::to_json(m).dump() + "\n";
  detail::emit(s, out, content);
  return 0;
}

inline int cmd_assign(const Settings& s, std::ostream& out, std::ostream& err) {
  auto catalog = detail::catalog(s);
  std::vector<annotate::StratifiedItem> items;
  std::size_t skipped = 0;
  for (const auto& sentence : corpus::load_sentences(s.path("sentences"))) {
    if (!corpus::is_annotatable(sentence)) {
      ++skipped;
      continue;
    }
    auto group = terms::primary_group(terms::scan_sentence(sentence, catalog), catalog);
    items.push_back({sentence.id, group.value_or("")});
  }
  if (skipped) err << "warning: " << skipped << " sentence(s) shorter than 2 tokens left out of the plan\n";
  auto plan = annotate::plan_assignment(items, detail::string_list(s, "roster"), s.unsigned_int("overlap", 0),
                                        s.unsigned_int("seed", 0));
  detail::emit(s, out, detail::pretty(annotate::to_json(plan)));
  return 0;
}

inline int cmd_agreement(const Settings& s, std::ostream& out, std::ostream&) {
  auto records = annotate::resolve_latest(annotate::load_records(s.path("labels")));
  if (s.has("plan")) records = annotate::overlap_records(records, annotate::plan_from_json(detail::load_json(s.path("plan"))));
  detail::emit(s, out, detail::pretty(annotate::to_json(annotate::fleiss_kappa(records))));
  return 0;
}

inline int cmd_pool(const Settings& s, std::ostream& out, std::ostream& err) {
  auto records = annotate::resolve_latest(annotate::load_records(s.path("labels")));
  auto plan = annotate::plan_from_json(detail::load_json(s.path("plan")));
  auto sentences = corpus::load_sentences(s.path("sentences"));
  std::set<std::string> planned(plan.overlap.begin(), plan.overlap.end());
  for (const auto& [a, ids] : plan.exclusive) planned.insert(ids.begin(), ids.end());
  std::vector<corpus::Sentence> in_plan;
  for (auto& sentence : sentences)
    if (planned.count(sentence.id)) in_plan.push_back(std::move(sentence));
  auto d = annotate::pool_labels(records, plan, detail::sentence_refs(in_plan));
  if (!d.dropped.empty()) err << "warning: " << d.dropped.size() << " sentence(s) pooled to \"?\" and dropped\n";
  detail::emit(s, out, to_jsonl(d));
  return 0;
}

inline int cmd_split(const Settings& s, std::ostream& out, std::ostream&) {
  auto d = load_dataset(s.path("dataset"));
  auto split = stratified_split(d, s.number("test-fraction", 0.3), s.unsigned_int("seed", 0));
  if (s.has("train")) io::write_file(s.path("train"), to_jsonl(d.subset(split.train)), "cli");
  if (s.has("test")) io::write_file(s.path("test"), to_jsonl(d.subset(split.test)), "cli");
  json report = to_json(split, d);
  report["kind"] = "split";
  report["dataset_hash"] = dataset_hash(d);
  detail::emit(s, out, detail::pretty(report));
  return 0;
}

inline int cmd_fit_features(const Settings& s, std::ostream& out, std::ostream& err) {
  auto d = load_dataset(s.path("dataset"));
  auto f = Featurizer::fit(detail::feature_config(s), d.entries);
  detail::print_warnings(f.warnings(), err);
  detail::emit(s, out, detail::pretty(f.to_json()));
  return 0;
}

inline int cmd_train(const Settings& s, std::ostream& out, std::ostream& err) {
  auto d = load_dataset(s.path("dataset"));
  auto m = detail::method(s);
  auto f = Featurizer::fit(m.features, d.entries);
  detail::print_warnings(f.warnings(), err);
  std::vector<std::size_t> missing;
  auto X = f.transform(d, &missing);
  if (!missing.empty()) err << "warning: " << missing.size() << " sentence(s) lack contextual vectors, zero-filled\n";
  auto model = train(m.params, X, d.labels(), s.unsigned_int("seed", 0), f.descriptor());
  if (s.has("featurizer")) io::write_file(s.path("featurizer"), detail::pretty(f.to_json()), "cli");
  detail::emit(s, out, detail::pretty(to_json(model)));
  return 0;
}

inline int cmd_evaluate(const Settings& s, std::ostream& out, std::ostream& err) {
  auto model = load_model(s.path("model"));
  auto f = detail::load_featurizer(s.path("featurizer"));
  detail::print_warnings(f.warnings(), err);
  auto d = load_dataset(s.path("dataset"));
  auto scores = predict(model, f.transform(d), f.descriptor());
  Provenance p;
  p.seed = model.seed;
  p.dataset_hash = dataset_hash(d);
  p.catalog_version = detail::catalog(s).version();
  p.method = {{"model", to_string(model.kind)},
              {"hyperparameters", to_json(model.params)},
              {"feature_space", model.feature_space}};
  auto report = evaluate_scores(scores, d.labels(), p);
  if (s.has("csv")) io::write_file(s.path("csv"), pr_curve_csv(report.pr_curve), "cli");
  detail::emit(s, out, detail::pretty(to_json(report)));
  return 0;
}

inline int cmd_gridsearch(const Settings& s, std::ostream& out, std::ostream& err) {
  auto d = load_dataset(s.path("dataset"));
  auto features = detail::feature_config(s);
  auto kind = parse_model_kind(s.str("model", "logistic"));
  auto grid = s.has("grid") ? grid_from_json(s.json_value("grid")) : default_grid(kind);
  if (grid.kind != kind && s.has("model"))
    throw ConfigError("cli", "grid is for " + to_string(grid.kind) + " but --model is " + to_string(kind));
  auto r = grid_search(features, grid, d, s.unsigned_int("k", 4), parse_metric(s.str("metric", "ap")),
                       s.unsigned_int("seed", 0));
  r.provenance.catalog_version = detail::catalog(s).version();
  detail::print_warnings(r.warnings, err);
  detail::emit(s, out, detail::pretty(to_json(r)));
  return 0;
}

inline int cmd_learning_curve(const Settings& s, std::ostream& out, std::ostream& err) {
  auto d = load_dataset(s.path("dataset"));
  auto lc = learning_curve(detail::method(s), d, s.unsigned_int("seed", 0), s.unsigned_int("folds", 10),
                           s.unsigned_int("fractions", 20), s.number("min-fraction", 0.01));
  lc.provenance.catalog_version = detail::catalog(s).version();
  detail::print_warnings(lc.warnings, err);
  if (s.has("csv")) io::write_file(s.path("csv"), learning_curve_csv(lc), "cli");
  detail::emit(s, out, detail::pretty(to_json(lc)));
  return 0;
}

inline int cmd_loto(const Settings& s, std::ostream& out, std::ostream&) {
  auto d = load_dataset(s.path("dataset"));
  std::vector<MethodSpec> methods;
  if (s.has("methods")) {
    auto j = s.json_value("methods");
    if (!j.is_array() || j.empty()) throw ConfigError("cli", "methods must be a non-empty array");
    for (const auto& m : j) methods.push_back(method_from_json(m, s.json_base("methods")));
  } else {
    methods.push_back(detail::method(s));
  }
  std::vector<std::string> groups;
  if (s.has("groups")) groups = detail::string_list(s, "groups");
  auto r = leave_one_term_out(methods, d, s.unsigned_int("seed", 0), groups);
  r.provenance.catalog_version = detail::catalog(s).version();
  detail::emit(s, out, detail::pretty(to_json(r)));
  return 0;
}

inline int cmd_discover(const Settings& s, std::ostream& out, std::ostream& err) {
  auto model = load_model(s.path("model"));
  auto f = detail::load_featurizer(s.path("featurizer"));
  detail::print_warnings(f.warnings(), err);
  std::vector<corpus::Sentence> sentences;
  for (auto& sentence : corpus::load_sentences(s.path("sentences")))
    if (corpus::is_annotatable(sentence)) sentences.push_back(std::move(sentence));
  auto r = discover_unknown(model, f, sentences, detail::catalog(s), s.unsigned_int("k", 100));
  r.provenance.seed = model.seed;
  r.provenance.dataset_hash = corpus::sentences_hash(sentences);
  r.provenance.method = {{"model", to_string(model.kind)}, {"feature_space", model.feature_space}};
  if (r.note) err << "note: " << *r.note << "\n";
  detail::emit(s, out, detail::pretty(to_json(r)));
  return 0;
}

inline std::vector<service::RosterEntry> load_roster(const Settings& s) {
  json j = s.json_value("roster");
  std::vector<service::RosterEntry> out;
  try {
    if (j.is_object()) {
      for (const auto& [token, id] : j.items()) out.push_back({token, id.get<std::string>()});
    } else if (j.is_array()) {
      for (const auto& e : j) out.push_back({e.at("token").get<std::string>(), e.at("annotator_id").get<std::string>()});
    } else {
      throw ConfigError("cli", "roster must map tokens to annotator ids");
    }
  } catch (const json::exception& e) {
    throw ConfigError("cli", std::string("malformed roster: ") + e.what());
  }
  return out;
}

inline int cmd_serve(const Settings& s, std::ostream& out, std::ostream& err) {
  service::ServiceOptions opts;
  opts.data_dir = s.path("data-dir");
  if (s.has("reports-dir")) opts.reports_dir = s.path("reports-dir");
  opts.roster = load_roster(s);
  opts.snapshot_every = s.unsigned_int("snapshot-every", 100);
  service::ServiceData data;
  data.sentences = corpus::load_sentences(s.path("sentences"));
  data.catalog = detail::catalog(s);
  if (s.has("plan")) data.plan = annotate::plan_from_json(detail::load_json(s.path("plan")));
  if (s.has("model") != s.has("featurizer")) throw ConfigError("cli", "--model and --featurizer go together");
  if (s.has("model")) {
    auto f = detail::load_featurizer(s.path("featurizer"));
    detail::print_warnings(f.warnings(), err);
    std::vector<corpus::Sentence> scored;
    for (const auto& sentence : data.sentences)
      if (corpus::is_annotatable(sentence)) scored.push_back(sentence);
    data.scores = service::score_sentences(load_model(s.path("model")), f, scored);
  }
  service::Service svc(opts, std::move(data));
  detail::print_warnings(svc.store().warnings(), err);
  auto host = s.str("host", "127.0.0.1");
  int port = static_cast<int>(s.unsigned_int("port", 8080));
  int bound = svc.start(host, port);
  out << "listening on " << host << ":" << bound << std::endl;
  svc.wait();
  return 0;
}

// --- entry point ------------------------------------------------------------

struct Subcommand {
  const char* name;
  const char* help;
  std::vector<std::pair<const char*, const char*>> options;
  int (*run)(const Settings&, std::ostream&, std::ostream&);
};

inline const std::vector<Subcommand>& subcommands() {
  static const std::vector<Subcommand> list = {
      {"segment", "split vacancies (CSV or JSONL) into sentence JSONL",
       {{"input", "vacancy file"}, {"format", "csv or jsonl (default: by extension)"}, {"output", "sentence JSONL"}},
       cmd_segment},
      {"synth", "generate a synthetic labeled corpus",
       {{"n", "number of sentences"}, {"rate", "planted HSD rate"}, {"seed", "root seed"},
        {"sentences", "also write sentence JSONL here"}, {"output", "labeled dataset JSONL"}},
       cmd_synth},
      {"scan", "match the term catalog against sentences",
       {{"sentences", "sentence JSONL"}, {"catalog", "catalog JSON (default: built-in)"}, {"output", "match JSONL"}},
       cmd_scan},
      {"assign", "plan the annotation assignment",
       {{"sentences", "sentence JSONL"}, {"catalog", "catalog JSON"}, {"roster", "comma-separated annotator ids"},
        {"overlap", "size of the shared subset"}, {"seed", "root seed"}, {"output", "plan JSON"}},
       cmd_assign},
      {"agreement", "Fleiss' kappa over annotation records",
       {{"labels", "annotation JSONL"}, {"plan", "restrict to the plan's overlap subset"}, {"output", "report JSON"}},
       cmd_agreement},
      {"pool", "majority-pool annotations into a labeled dataset",
       {{"labels", "annotation JSONL"}, {"plan", "plan JSON"}, {"sentences", "sentence JSONL"},
        {"output", "dataset JSONL"}},
       cmd_pool},
      {"split", "stratified train/test split",
       {{"dataset", "dataset JSONL"}, {"test-fraction", "default 0.3"}, {"seed", "root seed"},
        {"train", "train dataset output"}, {"test", "test dataset output"}, {"output", "split report JSON"}},
       cmd_split},
      {"fit-features", "fit a featurizer on a dataset",
       {{"dataset", "dataset JSONL"}, {"features", "bow, w2v, contextual or a feature config"},
        {"embeddings", "word embedding table"}, {"contextual", "contextual vectors JSONL"},
        {"max-features", "vocabulary cap"}, {"output", "featurizer JSON"}},
       cmd_fit_features},
      {"train", "fit features and a classifier",
       {{"dataset", "dataset JSONL"}, {"features", "bow, w2v, contextual or a feature config"},
        {"embeddings", "word embedding table"}, {"contextual", "contextual vectors JSONL"},
        {"max-features", "vocabulary cap"}, {"model", "logistic, gbt or forest"},
        {"hyperparameters", "JSON object or file"}, {"seed", "root seed"}, {"featurizer", "featurizer output"},
        {"output", "model JSON"}},
       cmd_train},
      {"evaluate", "score a dataset with a saved model",
       {{"model", "model JSON"}, {"featurizer", "featurizer JSON"}, {"dataset", "dataset JSONL"},
        {"catalog", "catalog JSON"}, {"csv", "PR curve CSV output"}, {"output", "report JSON"}},
       cmd_evaluate},
      {"gridsearch", "k-fold grid search",
       {{"dataset", "dataset JSONL"}, {"features", "feature kind or config"}, {"embeddings", "word embedding table"},
        {"contextual", "contextual vectors JSONL"}, {"max-features", "vocabulary cap"},
        {"model", "logistic, gbt or forest"}, {"grid", "grid JSON (default: built-in grid)"}, {"k", "folds"},
        {"metric", "ap or auc"}, {"seed", "root seed"}, {"catalog", "catalog JSON"}, {"output", "report JSON"}},
       cmd_gridsearch},
      {"learning-curve", "AP against training-set size",
       {{"dataset", "dataset JSONL"}, {"features", "feature kind or config"}, {"embeddings", "word embedding table"},
        {"contextual", "contextual vectors JSONL"}, {"max-features", "vocabulary cap"},
        {"model", "logistic, gbt or forest"}, {"hyperparameters", "JSON object or file"}, {"folds", "default 10"},
        {"fractions", "default 20"}, {"min-fraction", "default 0.01"}, {"seed", "root seed"},
        {"catalog", "catalog JSON"}, {"csv", "CSV output"}, {"output", "report JSON"}},
       cmd_learning_curve},
      {"loto", "leave one term group out",
       {{"dataset", "dataset JSONL"}, {"methods", "JSON array of method specs"},
        {"features", "feature kind or config"}, {"embeddings", "word embedding table"},
        {"contextual", "contextual vectors JSONL"}, {"max-features", "vocabulary cap"},
        {"model", "logistic, gbt or forest"}, {"hyperparameters", "JSON object or file"},
        {"groups", "comma-separated group order"}, {"seed", "root seed"}, {"catalog", "catalog JSON"},
        {"output", "report JSON"}},
       cmd_loto},
      {"discover", "top-scored sentences without catalog matches",
       {{"model", "model JSON"}, {"featurizer", "featurizer JSON"}, {"sentences", "sentence JSONL"},
        {"catalog", "catalog JSON"}, {"k", "default 100"}, {"output", "report JSON"}},
       cmd_discover},
      {"serve", "run the annotation and triage HTTP service",
       {{"sentences", "sentence JSONL"}, {"catalog", "catalog JSON"}, {"plan", "plan JSON"}, {"model", "model JSON"},
        {"featurizer", "featurizer JSON"}, {"data-dir", "label log directory"}, {"reports-dir", "report JSON directory"},
        {"roster", "token map JSON object or file"}, {"host", "default 127.0.0.1"}, {"port", "default 8080"},
        {"snapshot-every", "appends between snapshots"}},
       cmd_serve},
  };
  return list;
}

// Exit status: 0 success, 1 runtime error, 2 usage error.
inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"vacscreen: screening job vacancies for discriminatory language"};
  app.name("vacscreen");
  app.require_subcommand(1);
  std::string config;
  app.add_option("--config", config, "JSON config file")->check(CLI::ExistingFile);
  app.fallthrough();
  std::map<std::string, std::map<std::string, std::string>> values;
  std::map<std::string, CLI::App*> apps;
  for (const auto& sub : subcommands()) {
    auto* sc = app.add_subcommand(sub.name, sub.help);
    sc->fallthrough();
    apps[sub.name] = sc;
    for (const auto& [name, help] : sub.options) sc->add_option(std::string("--") + name, values[sub.name][name], help);
  }
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      ++i;
      continue;
    }
    if (args[i].rfind("-", 0) == 0) continue;
    if (!apps.count(args[i])) {
      err << "vacscreen: unknown subcommand '" << args[i] << "'\n" << app.help();
      return 2;
    }
    break;
  }
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "vacscreen: " << e.what() << "\n" << app.help();
    return 2;
  }
  for (const auto& sub : subcommands()) {
    auto* sc = apps[sub.name];
    if (!sc->parsed()) continue;
    try {
      Settings s;
      if (!config.empty()) s.load_config(config, sub.name);
      for (const auto& [name, help] : sub.options)
        if (sc->get_option(std::string("--") + name)->count() > 0) s.set_flag(name, values[sub.name][name]);
      return sub.run(s, out, err);
    } catch (const Error& e) {
      err << e.what() << "\n";
      return 1;
    } catch (const std::exception& e) {
      err << sub.name << ": " << e.what() << "\n";
      return 1;
    }
  }
  err << app.help();
  return 2;
}

}  // namespace vacscreen::cli
