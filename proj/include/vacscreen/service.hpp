#pragma once

// HTTP service for annotation and triage queues. Labels go to an append-only
// JSONL log that is fsynced before a submission is acknowledged; a periodic
// snapshot of the latest label per (sentence, annotator) speeds up restarts.

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <cstring>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "vacscreen/annotate.hpp"
#include "vacscreen/classify.hpp"
#include "vacscreen/corpus.hpp"
#include "vacscreen/error.hpp"
#include "vacscreen/features.hpp"
#include "vacscreen/terms.hpp"
#include "vacscreen/util/jsonl.hpp"

namespace vacscreen::service {

using nlohmann::json;
using annotate::AnnotationRecord;

struct StoredLabel {
  std::uint64_t seq = 0;
  AnnotationRecord record;
};

inline json to_json(const StoredLabel& s) {
  json j = annotate::to_json(s.record);
  j["seq"] = s.seq;
  return j;
}

inline StoredLabel stored_from_json(const json& j) {
  StoredLabel s;
  s.record = annotate::record_from_json(j);
  if (!j.contains("seq") || !j["seq"].is_number_unsigned())
    throw InputError("service", "label record lacks sequence number");
  s.seq = j["seq"].get<std::uint64_t>();
  return s;
}

namespace detail {

inline void fsync_path(const std::filesystem::path& p, bool directory) {
  int fd = ::open(p.c_str(), directory ? O_RDONLY | O_DIRECTORY : O_RDONLY);
  if (fd < 0) return;
  ::fsync(fd);
  ::close(fd);
}

inline void write_all(int fd, const std::string& data, const std::filesystem::path& path) {
  std::size_t done = 0;
  while (done < data.size()) {
    ssize_t n = ::write(fd, data.data() + done, data.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error("service", "write to " + path.string() + " failed: " + std::strerror(errno));
    }
    done += static_cast<std::size_t>(n);
  }
}

inline void atomic_write(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  if (fd < 0) throw Error("service", "cannot write " + tmp.string() + ": " + std::strerror(errno));
  try {
    write_all(fd, content, tmp);
  } catch (...) {
    ::close(fd);
    throw;
  }
  ::fsync(fd);
  ::close(fd);
  std::filesystem::rename(tmp, path);
  fsync_path(path.parent_path(), true);
}

}  // namespace detail

// Durable label storage. The log keeps every submission; resubmitting a
// (sentence, annotator) pair supersedes the earlier label without removing it.
class LabelStore {
 public:
  static constexpr const char* kLogName = "labels.jsonl";
  static constexpr const char* kSnapshotName = "labels.snapshot.json";

  explicit LabelStore(std::filesystem::path dir, std::size_t snapshot_every = 100)
      : dir_(std::move(dir)), snapshot_every_(snapshot_every) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) throw Error("service", "cannot create data directory " + dir_.string() + ": " + ec.message());
    recover();
    fd_ = ::open(log_path().c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
    if (fd_ < 0) throw Error("service", "cannot open " + log_path().string() + ": " + std::strerror(errno));
    detail::fsync_path(dir_, true);
  }

  ~LabelStore() {
    if (fd_ >= 0) ::close(fd_);
  }

  LabelStore(const LabelStore&) = delete;
  LabelStore& operator=(const LabelStore&) = delete;

  std::filesystem::path log_path() const { return dir_ / kLogName; }
  std::filesystem::path snapshot_path() const { return dir_ / kSnapshotName; }

  // Returns once the record is on disk. `superseded` reports whether an
  // earlier label of the same annotator for the same sentence was replaced.
  StoredLabel append(AnnotationRecord record, bool* superseded = nullptr) {
    std::lock_guard lock(mu_);
    StoredLabel s{next_seq_, std::move(record)};
    std::string line = to_json(s).dump() + "\n";
    detail::write_all(fd_, line, log_path());
    if (::fsync(fd_) != 0) throw Error("service", std::string("fsync failed: ") + std::strerror(errno));
    ++next_seq_;
    log_bytes_ += line.size();
    auto key = std::make_pair(s.record.sentence_id, s.record.annotator_id);
    bool replaced = latest_.count(key) > 0;
    if (superseded) *superseded = replaced;
    latest_[key] = s;
    if (snapshot_every_ && ++since_snapshot_ >= snapshot_every_) write_snapshot_locked();
    return s;
  }

  std::vector<StoredLabel> latest() const {
    std::lock_guard lock(mu_);
    std::vector<StoredLabel> out;
    out.reserve(latest_.size());
    for (const auto& [k, v] : latest_) out.push_back(v);
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.seq < b.seq; });
    return out;
  }

  std::optional<StoredLabel> latest(const std::string& sentence, const std::string& annotator) const {
    std::lock_guard lock(mu_);
    auto it = latest_.find({sentence, annotator});
    if (it == latest_.end()) return std::nullopt;
    return it->second;
  }

  // Full submission history, oldest first, read back from the log.
  std::vector<StoredLabel> history() const {
    std::string content;
    {
      std::lock_guard lock(mu_);
      content = io::read_file(log_path(), "service").substr(0, log_bytes_);
    }
    std::vector<StoredLabel> out;
    for (const auto& rec : io::parse_jsonl(content, kLogName, "service")) out.push_back(stored_from_json(rec.value));
    return out;
  }

  std::uint64_t size() const {
    std::lock_guard lock(mu_);
    return next_seq_;
  }

  const std::vector<std::string>& warnings() const { return warnings_; }

  void snapshot() {
    std::lock_guard lock(mu_);
    write_snapshot_locked();
  }

 private:
  void write_snapshot_locked() {
    json latest = json::array();
    for (const auto& [k, v] : latest_) latest.push_back(to_json(v));
    json snap{{"format", "vacscreen-label-snapshot"},
              {"version", 1},
              {"log_records", next_seq_},
              {"log_bytes", log_bytes_},
              {"latest", latest}};
    detail::atomic_write(snapshot_path(), snap.dump() + "\n");
    since_snapshot_ = 0;
  }

  void recover() {
    std::uint64_t start_bytes = 0;
    if (std::filesystem::exists(snapshot_path())) {
      try {
        auto snap = json::parse(io::read_file(snapshot_path(), "service"));
        if (snap.value("format", "") != "vacscreen-label-snapshot" || snap.value("version", 0) != 1)
          throw ParseError("service", "unsupported snapshot format");
        next_seq_ = snap.at("log_records").get<std::uint64_t>();
        start_bytes = snap.at("log_bytes").get<std::uint64_t>();
        for (const auto& j : snap.at("latest")) {
          auto s = stored_from_json(j);
          latest_[{s.record.sentence_id, s.record.annotator_id}] = s;
        }
      } catch (const json::exception& e) {
        throw ParseError("service", "corrupt snapshot " + snapshot_path().string() + ": " + e.what());
      }
    }
    std::string content;
    if (std::filesystem::exists(log_path())) content = io::read_file(log_path(), "service");
    if (content.size() < start_bytes)
      throw ParseError("service", "label log is shorter than its snapshot records; refusing to start");
    if (!content.empty() && content.back() != '\n') {
      auto keep = content.rfind('\n');
      keep = keep == std::string::npos ? 0 : keep + 1;
      warnings_.push_back("discarded an incomplete trailing log record of " + std::to_string(content.size() - keep) +
                          " bytes");
      content.resize(keep);
      std::filesystem::resize_file(log_path(), keep);
    }
    log_bytes_ = content.size();
    for (const auto& rec :
         io::parse_jsonl(std::string_view(content).substr(start_bytes), kLogName, "service")) {
      StoredLabel s;
      try {
        s = stored_from_json(rec.value);
      } catch (const InputError& e) {
        throw ParseError("service", std::string(kLogName) + ":" + std::to_string(rec.line) + ": " + e.what());
      }
      if (s.seq != next_seq_)
        throw ParseError("service", std::string(kLogName) + ": sequence gap at record " + std::to_string(s.seq));
      latest_[{s.record.sentence_id, s.record.annotator_id}] = s;
      ++next_seq_;
    }
  }

  std::filesystem::path dir_;
  std::size_t snapshot_every_;
  int fd_ = -1;
  mutable std::mutex mu_;
  std::map<std::pair<std::string, std::string>, StoredLabel> latest_;
  std::uint64_t next_seq_ = 0;
  std::uint64_t log_bytes_ = 0;
  std::size_t since_snapshot_ = 0;
  std::vector<std::string> warnings_;
};

struct RosterEntry {
  std::string token;
  std::string annotator_id;
};

struct ServiceOptions {
  std::filesystem::path data_dir;
  std::filesystem::path reports_dir;
  std::vector<RosterEntry> roster;
  std::size_t snapshot_every = 100;
  std::size_t default_queue_limit = 20;
  double timer_hint_seconds = 30.0;
};

// Everything the service serves besides labels. Sentence order is the
// corpus order; scores are optional and keyed by sentence id.
struct ServiceData {
  std::vector<corpus::Sentence> sentences;
  terms::TermCatalog catalog;
  std::optional<annotate::AssignmentPlan> plan;
  std::map<std::string, double> scores;
};

inline std::map<std::string, double> score_sentences(const TrainedModel& model, const Featurizer& featurizer,
                                                     const std::vector<corpus::Sentence>& sentences) {
  std::vector<LabeledEntry> entries;
  for (const auto& s : sentences) entries.push_back({s.id, s.text, "", false});
  auto scores = predict(model, featurizer.transform(entries), featurizer.descriptor());
  std::map<std::string, double> out;
  for (std::size_t i = 0; i < sentences.size(); ++i) out[sentences[i].id] = scores[i];
  return out;
}

struct Request {
  std::string method;
  std::string path;
  std::map<std::string, std::string> params;
  std::string authorization;
  std::string body;
};

struct Response {
  int status = 200;
  json body;
};

class Service {
 public:
  Service(ServiceOptions options, ServiceData data)
      : options_(std::move(options)), data_(std::move(data)), store_(options_.data_dir, options_.snapshot_every) {
    if (options_.roster.empty()) throw ConfigError("service", "roster is empty");
    for (const auto& r : options_.roster) {
      if (r.token.empty() || r.annotator_id.empty()) throw ConfigError("service", "roster entries need token and id");
      if (!tokens_.emplace(r.token, r.annotator_id).second) throw ConfigError("service", "duplicate roster token");
    }
    for (std::size_t i = 0; i < data_.sentences.size(); ++i)
      if (!index_.emplace(data_.sentences[i].id, i).second)
        throw InputError("service", "duplicate sentence id '" + data_.sentences[i].id + "'");
    if (data_.plan)
      for (const auto& id : all_plan_ids(*data_.plan))
        if (!index_.count(id)) throw InputError("service", "plan references unknown sentence '" + id + "'");
    dataset_hash_ = corpus::sentences_hash(data_.sentences);
  }

  ~Service() { stop(); }

  const std::string& dataset_hash() const { return dataset_hash_; }
  const LabelStore& store() const { return store_; }

  Response handle(const Request& req) {
    Response res;
    try {
      res = route(req);
    } catch (const InputError& e) {
      res = error(400, e.what());
    } catch (const Error& e) {
      res = error(500, e.what());
    } catch (const json::exception& e) {
      res = error(400, std::string("service: malformed JSON: ") + e.what());
    }
    res.body["dataset_hash"] = dataset_hash_;
    res.body["catalog_version"] = data_.catalog.version();
    return res;
  }

  // Binds and starts serving on a background thread; port 0 picks a free
  // port. Throws when the address cannot be bound.
  int start(const std::string& host = "127.0.0.1", int port = 0) {
    server_ = std::make_unique<httplib::Server>();
    server_->set_socket_options([](socket_t sock) {
      int yes = 1;
      ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
    });
    auto adapt = [this](const httplib::Request& hreq, httplib::Response& hres) {
      Request req;
      req.method = hreq.method;
      req.path = hreq.path;
      for (const auto& [k, v] : hreq.params) req.params[k] = v;
      req.authorization = hreq.get_header_value("Authorization");
      req.body = hreq.body;
      auto res = handle(req);
      hres.status = res.status;
      hres.set_content(res.body.dump(), "application/json");
    };
    server_->Get(".*", adapt);
    server_->Post(".*", adapt);
    server_->Put(".*", adapt);
    server_->Delete(".*", adapt);
    int bound = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw Error("service", "cannot bind " + host + ":" + std::to_string(port));
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
    return bound;
  }

  // Blocks until stop() is called from elsewhere.
  void serve_forever(const std::string& host, int port) {
    start(host, port);
    wait();
  }

  void wait() {
    if (thread_.joinable()) thread_.join();
  }

  void stop() {
    if (server_) server_->stop();
    if (thread_.joinable()) thread_.join();
    server_.reset();
  }

 private:
  static std::vector<std::string> all_plan_ids(const annotate::AssignmentPlan& p) {
    std::vector<std::string> out = p.overlap;
    for (const auto& [a, ids] : p.exclusive) out.insert(out.end(), ids.begin(), ids.end());
    return out;
  }

  static Response error(int status, const std::string& msg) { return {status, json{{"error", msg}}}; }

  std::optional<std::string> authenticate(const Request& req) const {
    const std::string prefix = "Bearer ";
    if (req.authorization.rfind(prefix, 0) != 0) return std::nullopt;
    auto it = tokens_.find(req.authorization.substr(prefix.size()));
    if (it == tokens_.end()) return std::nullopt;
    return it->second;
  }

  std::string param(const Request& req, const std::string& key, const std::string& def = "") const {
    auto it = req.params.find(key);
    return it == req.params.end() ? def : it->second;
  }

  std::size_t limit_param(const Request& req) const {
    auto s = param(req, "limit");
    if (s.empty()) return options_.default_queue_limit;
    try {
      std::size_t pos = 0;
      long v = std::stol(s, &pos);
      if (pos != s.size() || v < 1) throw std::invalid_argument(s);
      return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
      throw InputError("service", "limit must be a positive integer");
    }
  }

  Response route(const Request& req) {
    auto who = authenticate(req);
    if (!who) return error(401, "service: missing or unknown bearer token");
    const auto& p = req.path;
    if (p == "/queue" && req.method == "GET") return queue(req, *who);
    if (p == "/labels" && req.method == "POST") return post_label(req, *who);
    if (p == "/labels" && req.method == "GET") return get_labels(req);
    if (p.rfind("/sentences/", 0) == 0 && req.method == "GET") return sentence(p.substr(11));
    if (p.rfind("/reports/", 0) == 0 && req.method == "GET") return report(p.substr(9));
    if (p == "/stats" && req.method == "GET") return stats();
    if (p == "/queue" || p == "/labels" || p == "/stats" || p.rfind("/sentences/", 0) == 0 ||
        p.rfind("/reports/", 0) == 0)
      return error(405, "service: method not allowed");
    return error(404, "service: no such endpoint " + p);
  }

  json matches_json(const corpus::Sentence& s) const {
    json spans = json::array();
    for (const auto& m : terms::scan_sentence(s, data_.catalog))
      spans.push_back({{"term_id", m.term_id}, {"start", m.span.start}, {"end", m.span.end},
                       {"suppressed", m.suppressed}});
    return spans;
  }

  json score_json(const std::string& id) const {
    auto it = data_.scores.find(id);
    return it == data_.scores.end() ? json(nullptr) : json(it->second);
  }

  json item_json(const corpus::Sentence& s, const std::string& kind, std::size_t position) const {
    return {{"sentence_id", s.id}, {"text", s.text},      {"spans", matches_json(s)},
            {"score", kind == "triage" ? score_json(s.id) : json(nullptr)},
            {"queue_kind", kind},  {"position", position}};
  }

  Response queue(const Request& req, const std::string& who) {
    auto annotator = param(req, "annotator", who);
    if (annotator != who) return error(403, "service: token does not belong to annotator '" + annotator + "'");
    auto kind = param(req, "kind", "annotate");
    auto limit = limit_param(req);
    std::vector<std::string> order;
    if (kind == "annotate") {
      if (!data_.plan) return error(409, "service: no assignment plan loaded");
      order = data_.plan->queue_for(annotator);
    } else if (kind == "triage") {
      if (data_.scores.empty()) return error(409, "service: no model scores loaded");
      for (const auto& s : data_.sentences)
        if (data_.scores.count(s.id)) order.push_back(s.id);
      std::stable_sort(order.begin(), order.end(),
                       [&](const auto& a, const auto& b) { return data_.scores.at(a) > data_.scores.at(b); });
    } else {
      return error(400, "service: kind must be annotate or triage");
    }
    std::vector<std::size_t> positions;
    for (std::size_t i = 0; i < order.size(); ++i)
      if (!store_.latest(order[i], annotator)) positions.push_back(i);
    json items = json::array();
    for (std::size_t k = 0; k < positions.size() && k < limit; ++k)
      items.push_back(item_json(data_.sentences[index_.at(order[positions[k]])], kind, positions[k]));
    return {200,
            {{"kind", kind},
             {"annotator", annotator},
             {"remaining", positions.size()},
             {"total", order.size()},
             {"items", items},
             {"metadata", {{"timer_hint_seconds", options_.timer_hint_seconds}, {"timer_enforced", false}}}}};
  }

  Response post_label(const Request& req, const std::string& who) {
    auto body = json::parse(req.body);
    if (!body.is_object()) throw InputError("service", "label submission must be a JSON object");
    if (!body.contains("annotator_id")) body["annotator_id"] = who;
    auto record = annotate::record_from_json(body);
    if (record.annotator_id != who)
      return error(403, "service: token does not belong to annotator '" + record.annotator_id + "'");
    if (!index_.count(record.sentence_id))
      return error(404, "service: unknown sentence '" + record.sentence_id + "'");
    bool superseded = false;
    auto stored = store_.append(record, &superseded);
    return {201, {{"label", to_json(stored)}, {"superseded", superseded}}};
  }

  Response get_labels(const Request& req) {
    auto sentence = param(req, "sentence_id");
    auto annotator = param(req, "annotator_id");
    bool history = param(req, "history") == "true" || param(req, "history") == "1";
    json labels = json::array();
    auto keep = [&](const StoredLabel& s) {
      return (sentence.empty() || s.record.sentence_id == sentence) &&
             (annotator.empty() || s.record.annotator_id == annotator);
    };
    for (const auto& s : history ? store_.history() : store_.latest())
      if (keep(s)) labels.push_back(to_json(s));
    return {200, {{"history", history}, {"labels", labels}}};
  }

  Response sentence(const std::string& id) {
    auto it = index_.find(id);
    if (it == index_.end()) return error(404, "service: unknown sentence '" + id + "'");
    const auto& s = data_.sentences[it->second];
    json labels = json::array();
    for (const auto& l : store_.latest())
      if (l.record.sentence_id == id) labels.push_back(to_json(l));
    return {200,
            {{"sentence", corpus::to_json(s)},
             {"spans", matches_json(s)},
             {"flagged", terms::baseline_flag(s, data_.catalog)},
             {"score", score_json(id)},
             {"labels", labels}}};
  }

  std::vector<AnnotationRecord> latest_records() const {
    std::vector<AnnotationRecord> out;
    for (const auto& s : store_.latest()) out.push_back(s.record);
    return out;
  }

  Response report(const std::string& kind) {
    if (kind == "agreement") {
      if (!data_.plan) return error(409, "service: no assignment plan loaded");
      auto records = annotate::overlap_records(latest_records(), *data_.plan);
      if (records.empty()) return error(409, "service: no overlap labels yet");
      try {
        return {200, {{"kind", kind}, {"report", annotate::to_json(annotate::fleiss_kappa(records))}}};
      } catch (const InputError& e) {
        return error(409, e.what());
      }
    }
    bool safe = !kind.empty() && std::all_of(kind.begin(), kind.end(), [](char c) {
      return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_';
    });
    if (!safe) return error(400, "service: invalid report kind");
    if (options_.reports_dir.empty()) return error(404, "service: no report '" + kind + "'");
    auto path = options_.reports_dir / (kind + ".json");
    if (!std::filesystem::exists(path)) return error(404, "service: no report '" + kind + "'");
    try {
      return {200, {{"kind", kind}, {"report", json::parse(io::read_file(path, "service"))}}};
    } catch (const json::parse_error& e) {
      return error(500, "service: report '" + kind + "' is not valid JSON");
    }
  }

  // Table-1-shaped counts over labeled sentences: a sentence counts as HSD
  // when its latest labels have a strict "yes" majority.
  Response stats() {
    std::map<std::string, std::vector<annotate::Label>> votes;
    std::map<std::string, std::size_t> per_label;
    for (const auto& s : store_.latest()) {
      votes[s.record.sentence_id].push_back(s.record.label);
      ++per_label[annotate::to_string(s.record.label)];
    }
    std::vector<corpus::Sentence> labeled;
    std::vector<bool> hsd;
    for (const auto& [id, v] : votes) {
      labeled.push_back(data_.sentences[index_.at(id)]);
      hsd.push_back(annotate::majority(v) == annotate::Label::yes);
    }
    json labels{{"yes", per_label["yes"]}, {"no", per_label["no"]}, {"?", per_label["?"]}};
    return {200,
            {{"sentences", data_.sentences.size()},
             {"labeled_sentences", labeled.size()},
             {"label_records", store_.size()},
             {"labels", labels},
             {"terms", terms::to_json(terms::term_frequency_report(labeled, hsd, data_.catalog))}}};
  }

  ServiceOptions options_;
  ServiceData data_;
  LabelStore store_;
  std::map<std::string, std::string> tokens_;
  std::map<std::string, std::size_t> index_;
  std::string dataset_hash_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
};

}  // namespace vacscreen::service
