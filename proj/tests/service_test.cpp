#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "vacscreen/service.hpp"

using namespace vacscreen;
using namespace vacscreen::service;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("vacscreen_service_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  return dir;
}

corpus::Sentence sentence(std::string id, std::string text) {
  corpus::Sentence s;
  s.id = std::move(id);
  s.text = std::move(text);
  s.span = {0, text::length(s.text)};
  return s;
}

ServiceData make_data() {
  ServiceData d;
  d.sentences = {sentence("s1", "Wij zoeken een man."), sentence("s2", "Kleding voor vrouwen."),
                 sentence("s3", "Een vakman gezocht."), sentence("s4", "Mannelijke of vrouwelijke kandidaten welkom."),
                 sentence("s5", "Wij zoeken een dame.")};
  d.catalog = terms::default_catalog();
  annotate::AssignmentPlan plan;
  plan.roster = {"a1", "a2"};
  plan.overlap = {"s1", "s2"};
  plan.exclusive = {{"a1", {"s3", "s5"}}, {"a2", {"s4"}}};
  plan.strata = {{"s1", "man(nen)"}, {"s2", "vrouw(en)"}, {"s3", ""}, {"s4", "mannelijk(e)"}, {"s5", "dame(s)"}};
  d.plan = plan;
  d.scores = {{"s1", 0.9}, {"s2", 0.1}, {"s3", 0.7}, {"s4", 0.7}, {"s5", 0.95}};
  return d;
}

ServiceOptions make_options(const fs::path& dir) {
  ServiceOptions o;
  o.data_dir = dir;
  o.roster = {{"tok1", "a1"}, {"tok2", "a2"}};
  return o;
}

Request get(std::string path, std::map<std::string, std::string> params = {}, std::string token = "tok1") {
  return {"GET", std::move(path), std::move(params), "Bearer " + token, ""};
}

Request post_label(const std::string& sentence_id, const std::string& label, std::string token = "tok1") {
  json body{{"sentence_id", sentence_id}, {"label", label}, {"timestamp", "2024-01-01T00:00:00Z"}};
  return {"POST", "/labels", {}, "Bearer " + token, body.dump()};
}

std::vector<std::string> ids(const json& items) {
  std::vector<std::string> out;
  for (const auto& it : items) out.push_back(it["sentence_id"]);
  return out;
}

}  // namespace

TEST(Service, RequiresBearerToken) {
  Service svc(make_options(fresh_dir("auth")), make_data());
  auto r = svc.handle({"GET", "/stats", {}, "", ""});
  EXPECT_EQ(r.status, 401);
  EXPECT_EQ(svc.handle(get("/stats", {}, "nope")).status, 401);
  EXPECT_EQ(svc.handle(get("/stats")).status, 200);
  EXPECT_EQ(svc.handle(get("/queue", {{"annotator", "a2"}})).status, 403);
}

TEST(Service, EveryResponseCarriesProvenance) {
  Service svc(make_options(fresh_dir("prov")), make_data());
  for (auto req : {get("/stats"), get("/queue"), get("/labels"), get("/sentences/s1"), get("/sentences/zz"),
                   get("/reports/missing"), get("/nowhere"), Request{"GET", "/stats", {}, "", ""}}) {
    auto r = svc.handle(req);
    EXPECT_EQ(r.body["dataset_hash"], svc.dataset_hash()) << req.path;
    EXPECT_EQ(r.body["catalog_version"], terms::default_catalog().version()) << req.path;
  }
}

TEST(Service, AnnotateQueueFollowsPlanAndSkipsLabeled) {
  Service svc(make_options(fresh_dir("annotate")), make_data());
  auto q = svc.handle(get("/queue", {{"kind", "annotate"}}));
  ASSERT_EQ(q.status, 200);
  EXPECT_EQ(ids(q.body["items"]), (std::vector<std::string>{"s1", "s2", "s3", "s5"}));
  EXPECT_TRUE(q.body["items"][0]["score"].is_null());
  EXPECT_EQ(q.body["metadata"]["timer_hint_seconds"], 30.0);
  EXPECT_EQ(q.body["metadata"]["timer_enforced"], false);
  EXPECT_EQ(q.body["items"][0]["spans"].size(), 1u);
  ASSERT_EQ(svc.handle(post_label("s2", "no")).status, 201);
  q = svc.handle(get("/queue", {{"kind", "annotate"}, {"limit", "2"}}));
  EXPECT_EQ(ids(q.body["items"]), (std::vector<std::string>{"s1", "s3"}));
  EXPECT_EQ(q.body["items"][1]["position"], 2);
  EXPECT_EQ(q.body["remaining"], 3);
  auto q2 = svc.handle(get("/queue", {{"kind", "annotate"}}, "tok2"));
  EXPECT_EQ(ids(q2.body["items"]), (std::vector<std::string>{"s1", "s2", "s4"}));
}

TEST(Service, TriageQueueByDescendingScoreExcludingVerdicts) {
  Service svc(make_options(fresh_dir("triage")), make_data());
  auto q = svc.handle(get("/queue", {{"kind", "triage"}}));
  ASSERT_EQ(q.status, 200);
  EXPECT_EQ(ids(q.body["items"]), (std::vector<std::string>{"s5", "s1", "s3", "s4", "s2"}));
  double prev = 2;
  for (const auto& it : q.body["items"]) {
    EXPECT_LE(it["score"].get<double>(), prev);
    prev = it["score"];
  }
  svc.handle(post_label("s1", "yes"));
  svc.handle(post_label("s3", "?"));
  q = svc.handle(get("/queue", {{"kind", "triage"}}));
  EXPECT_EQ(ids(q.body["items"]), (std::vector<std::string>{"s5", "s4", "s2"}));
  auto other = svc.handle(get("/queue", {{"kind", "triage"}}, "tok2"));
  EXPECT_EQ(other.body["items"].size(), 5u);
}

TEST(Service, QueueErrors) {
  auto data = make_data();
  data.plan.reset();
  data.scores.clear();
  Service svc(make_options(fresh_dir("qerr")), data);
  EXPECT_EQ(svc.handle(get("/queue", {{"kind", "annotate"}})).status, 409);
  EXPECT_EQ(svc.handle(get("/queue", {{"kind", "triage"}})).status, 409);
  EXPECT_EQ(svc.handle(get("/queue", {{"kind", "other"}})).status, 400);
  EXPECT_EQ(svc.handle(get("/queue", {{"limit", "0"}})).status, 400);
}

TEST(Service, LabelRoundTripAndSupersede) {
  Service svc(make_options(fresh_dir("labels")), make_data());
  auto r = svc.handle(post_label("s1", "yes"));
  ASSERT_EQ(r.status, 201);
  EXPECT_EQ(r.body["superseded"], false);
  auto got = svc.handle(get("/labels", {{"sentence_id", "s1"}}));
  ASSERT_EQ(got.body["labels"].size(), 1u);
  EXPECT_EQ(got.body["labels"][0]["label"], "yes");
  EXPECT_EQ(got.body["labels"][0]["annotator_id"], "a1");
  r = svc.handle(post_label("s1", "no"));
  EXPECT_EQ(r.body["superseded"], true);
  got = svc.handle(get("/labels", {{"sentence_id", "s1"}}));
  ASSERT_EQ(got.body["labels"].size(), 1u);
  EXPECT_EQ(got.body["labels"][0]["label"], "no");
  auto hist = svc.handle(get("/labels", {{"sentence_id", "s1"}, {"history", "true"}}));
  ASSERT_EQ(hist.body["labels"].size(), 2u);
  EXPECT_EQ(hist.body["labels"][0]["label"], "yes");
  EXPECT_EQ(hist.body["labels"][1]["label"], "no");
}

TEST(Service, LabelValidation) {
  Service svc(make_options(fresh_dir("validate")), make_data());
  EXPECT_EQ(svc.handle(post_label("s1", "maybe")).status, 400);
  EXPECT_EQ(svc.handle(post_label("nope", "yes")).status, 404);
  EXPECT_EQ(svc.handle({"POST", "/labels", {}, "Bearer tok1", "{not json"}).status, 400);
  json spoof{{"sentence_id", "s1"}, {"annotator_id", "a2"}, {"label", "yes"}};
  EXPECT_EQ(svc.handle({"POST", "/labels", {}, "Bearer tok1", spoof.dump()}).status, 403);
  EXPECT_EQ(svc.store().size(), 0u);
}

TEST(Service, SentenceEndpoint) {
  Service svc(make_options(fresh_dir("sentence")), make_data());
  svc.handle(post_label("s4", "no"));
  auto r = svc.handle(get("/sentences/s4"));
  ASSERT_EQ(r.status, 200);
  EXPECT_EQ(r.body["sentence"]["text"], "Mannelijke of vrouwelijke kandidaten welkom.");
  EXPECT_EQ(r.body["flagged"], false);
  EXPECT_EQ(r.body["score"], 0.7);
  EXPECT_EQ(r.body["labels"].size(), 1u);
  EXPECT_EQ(svc.handle(get("/sentences/none")).status, 404);
}

TEST(Service, ReportsAndStats) {
  auto dir = fresh_dir("reports");
  auto opts = make_options(dir / "labels");
  opts.reports_dir = dir / "reports";
  fs::create_directories(opts.reports_dir);
  std::ofstream(opts.reports_dir / "evaluation.json") << R"({"ap": 0.5})";
  Service svc(opts, make_data());
  auto r = svc.handle(get("/reports/evaluation"));
  ASSERT_EQ(r.status, 200);
  EXPECT_EQ(r.body["report"]["ap"], 0.5);
  EXPECT_EQ(svc.handle(get("/reports/missing")).status, 404);
  EXPECT_EQ(svc.handle(get("/reports/..")).status, 400);
  EXPECT_EQ(svc.handle(get("/reports/agreement")).status, 409);
  for (auto [tok, s, l] : std::vector<std::tuple<std::string, std::string, std::string>>{
           {"tok1", "s1", "yes"}, {"tok2", "s1", "yes"}, {"tok1", "s2", "no"}, {"tok2", "s2", "no"}})
    ASSERT_EQ(svc.handle(post_label(s, l, tok)).status, 201);
  auto agreement = svc.handle(get("/reports/agreement"));
  ASSERT_EQ(agreement.status, 200);
  EXPECT_EQ(agreement.body["report"]["kappa_overall"], 1.0);
  auto stats = svc.handle(get("/stats"));
  EXPECT_EQ(stats.body["labeled_sentences"], 2);
  EXPECT_EQ(stats.body["labels"]["yes"], 2);
  EXPECT_EQ(stats.body["terms"]["total"]["frequency"], 2);
  EXPECT_EQ(stats.body["terms"]["total"]["hsd"], 1);
}

TEST(Service, ConfigErrors) {
  auto opts = make_options(fresh_dir("config"));
  opts.roster.clear();
  EXPECT_THROW(Service(opts, make_data()), ConfigError);
  auto data = make_data();
  data.plan->overlap.push_back("ghost");
  EXPECT_THROW(Service(make_options(fresh_dir("config2")), data), InputError);
}

TEST(LabelStore, SurvivesRestartWithAndWithoutSnapshot) {
  auto dir = fresh_dir("store");
  {
    LabelStore store(dir, 3);
    for (int i = 0; i < 7; ++i) store.append({"s" + std::to_string(i % 4), "a1", annotate::Label::yes, ""});
    EXPECT_TRUE(fs::exists(store.snapshot_path()));
  }
  LabelStore reopened(dir, 3);
  EXPECT_EQ(reopened.size(), 7u);
  EXPECT_EQ(reopened.latest().size(), 4u);
  EXPECT_EQ(reopened.history().size(), 7u);
  EXPECT_EQ(reopened.latest("s2", "a1")->seq, 6u);
  fs::remove(reopened.snapshot_path());
  LabelStore replayed(dir, 0);
  EXPECT_EQ(replayed.size(), 7u);
  EXPECT_EQ(replayed.latest().size(), 4u);
  auto s = replayed.append({"s9", "a2", annotate::Label::no, ""});
  EXPECT_EQ(s.seq, 7u);
}

TEST(LabelStore, TornTrailingRecordDiscarded) {
  auto dir = fresh_dir("torn");
  {
    LabelStore store(dir, 0);
    store.append({"s1", "a1", annotate::Label::yes, ""});
  }
  std::ofstream(dir / LabelStore::kLogName, std::ios::app) << R"({"seq":1,"sentence_id":"s2")";
  LabelStore store(dir, 0);
  EXPECT_EQ(store.size(), 1u);
  EXPECT_EQ(store.warnings().size(), 1u);
  store.append({"s3", "a1", annotate::Label::no, ""});
  LabelStore again(dir, 0);
  EXPECT_EQ(again.size(), 2u);
  EXPECT_TRUE(again.warnings().empty());
}

TEST(LabelStore, CorruptLogRejected) {
  auto dir = fresh_dir("corrupt");
  fs::create_directories(dir);
  std::ofstream(dir / LabelStore::kLogName) << R"({"seq":0,"sentence_id":"s1","annotator_id":"a","label":"yes"})"
                                            << "\n"
                                            << R"({"seq":5,"sentence_id":"s1","annotator_id":"a","label":"no"})"
                                            << "\n";
  EXPECT_THROW(LabelStore(dir, 0), ParseError);
}

TEST(ServiceHttp, RoundTripOverLocalPortAndRestart) {
  auto dir = fresh_dir("http");
  {
    Service svc(make_options(dir), make_data());
    int port = svc.start();
    httplib::Client cli("127.0.0.1", port);
    httplib::Headers auth{{"Authorization", "Bearer tok1"}};
    json body{{"sentence_id", "s3"}, {"label", "yes"}, {"timestamp", "t"}};
    auto res = cli.Post("/labels", auth, body.dump(), "application/json");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 201);
    res = cli.Get("/labels?sentence_id=s3", auth);
    ASSERT_TRUE(res);
    auto j = json::parse(res->body);
    ASSERT_EQ(j["labels"].size(), 1u);
    EXPECT_EQ(j["labels"][0]["label"], "yes");
    res = cli.Get("/queue?kind=triage", auth);
    ASSERT_TRUE(res);
    EXPECT_EQ(ids(json::parse(res->body)["items"]), (std::vector<std::string>{"s5", "s1", "s4", "s2"}));
    res = cli.Get("/stats");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 401);
    EXPECT_THROW(
        {
          Service clash(make_options(fresh_dir("http2")), make_data());
          clash.start("127.0.0.1", port);
        },
        Error);
    svc.stop();
  }
  Service restarted(make_options(dir), make_data());
  int port = restarted.start();
  httplib::Client cli("127.0.0.1", port);
  auto res = cli.Get("/labels?sentence_id=s3", httplib::Headers{{"Authorization", "Bearer tok2"}});
  ASSERT_TRUE(res);
  EXPECT_EQ(json::parse(res->body)["labels"][0]["label"], "yes");
}
