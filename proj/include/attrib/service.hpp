#pragma once

// Annotation HTTP service: serves tasks in a stable order, validates and
// appends labels, reports progress and live tallies.
//
//   GET  /api/tasks/next?annotator=ID&kind=Single|Group
//   GET  /api/tasks/{id}
//   POST /api/labels
//   GET  /api/progress?annotator=ID
//   GET  /api/results/summary?dataset=&method=&attribution_method=&kind=&cohort=
//   GET  /api/guidelines/{kind}

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "httplib.h"
#include "json.hpp"

#include "attrib/annotation.hpp"
#include "attrib/corpus.hpp"
#include "attrib/error.hpp"

namespace attrib {

struct Guideline {
  std::string version;
  std::string text;
};

struct ServiceOptions {
  std::string auth_token;  // empty: no auth on mutating endpoints
  std::map<TaskKind, Guideline> guidelines;
  TallyOptions tally{};
};

// Loads single.md and group.md from `dir`.
inline std::map<TaskKind, Guideline> load_guidelines(const std::filesystem::path& dir, const std::string& version) {
  std::map<TaskKind, Guideline> out;
  for (auto [kind, name] : {std::pair{TaskKind::Single, "single.md"}, std::pair{TaskKind::Group, "group.md"}}) {
    std::ifstream in(dir / name, std::ios::binary);
    if (!in) continue;
    std::ostringstream ss;
    ss << in.rdbuf();
    out[kind] = {version, ss.str()};
  }
  return out;
}

// Every payload sentence must resolve in the corpus with the same text.
// Returns one message per problem; empty means the task list is servable.
inline std::vector<std::string> check_referential_integrity(const std::vector<TaskItem>& tasks,
                                                            const std::vector<SegmentedTopic>& corpus) {
  std::vector<std::string> problems;
  std::map<std::string, const SegmentedTopic*> by_id;
  for (const auto& t : corpus) by_id[t.topic.topic_id] = &t;
  std::set<std::string> seen;
  for (const auto& t : tasks) {
    if (!seen.insert(t.task_id).second) problems.push_back("duplicate task id " + t.task_id);
    auto it = by_id.find(t.topic_id);
    if (it == by_id.end()) {
      problems.push_back("task " + t.task_id + " names unknown topic " + t.topic_id);
      continue;
    }
    if (t.kind == TaskKind::Single && !t.eval) problems.push_back("task " + t.task_id + " has no eval sentence");
    if (t.kind == TaskKind::Group && (t.candidates.empty() || t.candidates.size() > kGroupSize)) {
      problems.push_back("task " + t.task_id + " has " + std::to_string(t.candidates.size()) + " candidates");
    }
    auto check = [&](const TaskSentence& s) {
      const auto* found = it->second->find(s.ref);
      if (!found) {
        problems.push_back("task " + t.task_id + " references missing sentence " + to_string(s.ref));
      } else if (found->text != s.text) {
        problems.push_back("task " + t.task_id + " text differs from corpus at " + to_string(s.ref));
      }
    };
    for (const auto* s : {&t.prev, &t.eval, &t.next}) {
      if (*s) check(**s);
    }
    for (const auto& c : t.candidates) check(c);
  }
  return problems;
}

namespace detail {

inline void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

inline void send_error(httplib::Response& res, int status, const std::string& msg) { send_json(res, status, {{"error", msg}}); }

inline std::optional<Typology> typology_from_json(const json& j) {
  if (j.is_null()) return std::nullopt;
  Typology t;
  for (const auto& p : j.value("primary", json::array())) {
    const auto e = parse_enum<PrimaryCategory>(p.get<std::string>());
    if (!e) throw LabelRejected("unknown primary category " + p.get<std::string>(), 400);
    t.primary.insert(*e);
  }
  for (const auto& s : j.value("secondary", json::array())) {
    const auto e = parse_enum<SecondaryCode>(s.get<std::string>());
    if (!e) throw LabelRejected("unknown secondary code " + s.get<std::string>(), 400);
    t.secondary.insert(*e);
  }
  if (t.primary.empty() && t.secondary.empty()) return std::nullopt;
  return t;
}

}  // namespace detail

// Parses a POST /api/labels body. `refute` accepts a boolean or "yes"/"no";
// leaving it out means no.
inline LabelSubmission parse_submission(const json& j) {
  LabelSubmission s;
  try {
    s.task_id = j.at("task_id").get<std::string>();
    s.annotator_id = j.at("annotator_id").get<std::string>();
    s.label = j.at("label").get<std::string>();
    if (j.contains("refute") && !j.at("refute").is_null()) {
      const auto& r = j.at("refute");
      if (r.is_boolean()) {
        s.refute = r.get<bool>();
      } else if (r.is_string() && (r == "yes" || r == "no")) {
        s.refute = r == "yes";
      } else {
        throw LabelRejected("refute must be true/false or \"yes\"/\"no\"", 400);
      }
    }
    if (j.contains("typology")) s.typology = detail::typology_from_json(j.at("typology"));
    if (j.contains("duplicate_of") && !j.at("duplicate_of").is_null()) s.duplicate_of = j.at("duplicate_of").get<std::string>();
    s.comment = j.value("comment", "");
    s.amend = j.value("amend", false);
  } catch (const json::exception& e) {
    throw LabelRejected(std::string("malformed label: ") + e.what(), 400);
  }
  return s;
}

class AnnotationService {
 public:
  // Throws AnnotationError when a task fails the integrity check.
  AnnotationService(std::vector<TaskItem> tasks, const std::vector<SegmentedTopic>& corpus, LabelStore& store,
                    ServiceOptions opts = {})
      : tasks_(std::move(tasks)), store_(store), opts_(std::move(opts)) {
    const auto problems = check_referential_integrity(tasks_, corpus);
    if (!problems.empty()) {
      std::string msg = "refusing to serve: " + std::to_string(problems.size()) + " task problem(s); first: " + problems.front();
      throw AnnotationError(msg);
    }
    store_.register_tasks(tasks_);
    for (std::size_t i = 0; i < tasks_.size(); ++i) index_[tasks_[i].task_id] = i;
    routes();
  }

  httplib::Server& server() { return server_; }

  // Binds to `port` (0 picks a free one) and returns the bound port.
  int bind(const std::string& host, int port) {
    const int bound = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
    return bound;
  }

  // Blocks until stop() is called.
  bool listen_after_bind() { return server_.listen_after_bind(); }
  void stop() { server_.stop(); }
  void wait_until_ready() const { server_.wait_until_ready(); }

  const std::vector<TaskItem>& tasks() const { return tasks_; }

 private:
  bool authorized(const httplib::Request& req) const {
    if (opts_.auth_token.empty()) return true;
    return req.get_header_value("Authorization") == "Bearer " + opts_.auth_token;
  }

  std::set<std::string> labeled_by(const std::string& annotator) const {
    std::set<std::string> out;
    for (const auto& r : store_.snapshot().records) {
      if (r.annotator_id == annotator) out.insert(r.task_id);
    }
    return out;
  }

  void routes() {
    server_.Get("/api/tasks/next", [this](const httplib::Request& req, httplib::Response& res) {
      const auto annotator = req.get_param_value("annotator");
      if (annotator.empty()) return detail::send_error(res, 400, "annotator is required");
      std::optional<TaskKind> kind;
      if (req.has_param("kind")) {
        kind = parse_enum<TaskKind>(req.get_param_value("kind"));
        if (!kind) return detail::send_error(res, 400, "unknown kind");
      }
      const auto done = labeled_by(annotator);
      std::size_t remaining = 0;
      const TaskItem* next = nullptr;
      for (const auto& t : tasks_) {
        if ((kind && t.kind != *kind) || done.count(t.task_id)) continue;
        ++remaining;
        if (!next) next = &t;
      }
      detail::send_json(res, 200, {{"task", next ? json(*next) : json(nullptr)}, {"remaining", remaining}});
    });

    server_.Get(R"(/api/tasks/([0-9A-Za-z_-]+))", [this](const httplib::Request& req, httplib::Response& res) {
      auto it = index_.find(req.matches[1].str());
      if (it == index_.end()) return detail::send_error(res, 404, "unknown task");
      detail::send_json(res, 200, tasks_[it->second]);
    });

    server_.Post("/api/labels", [this](const httplib::Request& req, httplib::Response& res) {
      if (!authorized(req)) return detail::send_error(res, 401, "missing or invalid bearer token");
      try {
        const auto result = record_label(store_, parse_submission(json::parse(req.body)));
        detail::send_json(res, 201, {{"record", result.record}, {"warnings", result.warnings}});
      } catch (const LabelRejected& e) {
        detail::send_error(res, e.code(), e.what());
      } catch (const json::exception& e) {
        detail::send_error(res, 400, std::string("body is not JSON: ") + e.what());
      } catch (const std::exception& e) {
        detail::send_error(res, 500, e.what());
      }
    });

    server_.Get("/api/progress", [this](const httplib::Request& req, httplib::Response& res) {
      const auto annotator = req.get_param_value("annotator");
      if (annotator.empty()) return detail::send_error(res, 400, "annotator is required");
      const auto done = labeled_by(annotator);
      json per_kind = json::object();
      std::size_t labeled = 0;
      for (const auto& t : tasks_) {
        auto& k = per_kind[to_string(t.kind)];
        if (k.is_null()) k = {{"labeled", 0}, {"total", 0}};
        k["total"] = k["total"].get<std::size_t>() + 1;
        if (done.count(t.task_id)) {
          k["labeled"] = k["labeled"].get<std::size_t>() + 1;
          ++labeled;
        }
      }
      detail::send_json(res, 200, {{"annotator", annotator}, {"labeled", labeled}, {"total", tasks_.size()}, {"per_kind", per_kind}});
    });

    server_.Get("/api/results/summary", [this](const httplib::Request& req, httplib::Response& res) {
      ConditionFilter f;
      auto opt = [&]<typename E>(const char* key, std::optional<E>& out) {
        const auto v = req.get_param_value(key);
        if (v.empty()) return true;
        out = parse_enum<E>(v);
        return out.has_value();
      };
      if (!opt.template operator()<Dataset>("dataset", f.dataset) || !opt.template operator()<SummaryMethod>("method", f.summary_method) ||
          !opt.template operator()<AttributionMethod>("attribution_method", f.attribution_method) ||
          !opt.template operator()<TaskKind>("kind", f.kind)) {
        return detail::send_error(res, 400, "unknown filter value");
      }
      if (req.has_param("cohort")) f.cohort = req.get_param_value("cohort");
      detail::send_json(res, 200, tally(store_, f, opts_.tally));
    });

    server_.Get(R"(/api/guidelines/([A-Za-z]+))", [this](const httplib::Request& req, httplib::Response& res) {
      auto name = req.matches[1].str();
      if (!name.empty()) name[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(name[0])));
      const auto kind = parse_enum<TaskKind>(name);
      if (!kind) return detail::send_error(res, 404, "unknown task kind");
      auto it = opts_.guidelines.find(*kind);
      if (it == opts_.guidelines.end()) return detail::send_error(res, 404, "no guidelines loaded for this kind");
      res.set_header("X-Guideline-Version", it->second.version);
      res.set_content(it->second.text, "text/markdown; charset=utf-8");
    });
  }

  std::vector<TaskItem> tasks_;
  std::map<std::string, std::size_t> index_;
  LabelStore& store_;
  ServiceOptions opts_;
  httplib::Server server_;
};

}  // namespace attrib
