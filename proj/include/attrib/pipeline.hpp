#pragma once

// Run configuration, the staged pipeline (ingest -> summarize -> attribute
// -> reduce -> tasks) with content-hash reuse, and result reports.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "attrib/annotation.hpp"
#include "attrib/attribution.hpp"
#include "attrib/corpus.hpp"
#include "attrib/error.hpp"
#include "attrib/remote.hpp"
#include "attrib/summarize.hpp"

namespace attrib {

namespace fs = std::filesystem;

struct ProviderConfig {
  std::string kind = "mock-identity";  // mock-identity | replay | http
  std::string url;
  std::optional<fs::path> transcripts;
  RetryPolicy retry{};
};

struct ScorerConfig {
  bool builtin = true;
  std::string url;
  std::size_t pool = 1;
  std::size_t batch_size = 64;
};

struct ServiceConfig {
  std::string bind = "127.0.0.1";
  int port = 8080;
  std::string auth_token;
  std::optional<fs::path> label_store;
  std::optional<fs::path> guidelines_dir;
};

struct RunConfig {
  fs::path manifest;
  fs::path out_dir = "out";
  std::optional<FilterThresholds> filter;
  BudgetPolicy budget{};
  ProviderConfig provider{};
  ScorerConfig scorer{};
  std::vector<SummaryMethod> summary_methods{SummaryMethod::Human, SummaryMethod::Abstractive, SummaryMethod::Hybrid};
  std::vector<AttributionMethod> attribution_methods{AttributionMethod::Embedding, AttributionMethod::NLI};
  std::vector<TaskKind> task_kinds{TaskKind::Single, TaskKind::Group};
  std::size_t k = 3;
  bool reduction = true;
  ReductionOptions reduction_opts{};
  SegmenterOptions segmenter{};
  AbstractiveOptions abstractive{};
  std::string cohort;
  std::string guideline_version = "v1";
  ServiceConfig service{};

  // Throws ConfigError describing the first problem found.
  void validate() const {
    if (manifest.empty() || !fs::exists(manifest)) throw ConfigError("manifest not found: " + manifest.string());
    if (filter && !filter->valid()) throw ConfigError("invalid filter thresholds");
    if (budget.mode == BudgetMode::Fixed && (!budget.fixed_chars || *budget.fixed_chars == 0)) {
      throw ConfigError("fixed budget needs fixed_chars > 0");
    }
    if (provider.kind == "replay") {
      if (!provider.transcripts || !fs::exists(*provider.transcripts)) throw ConfigError("replay provider needs an existing transcripts file");
    } else if (provider.kind == "http") {
      if (provider.url.empty()) throw ConfigError("http provider needs a url");
    } else if (provider.kind != "mock-identity") {
      throw ConfigError("unknown provider '" + provider.kind + "'");
    }
    if (scorer.builtin == !scorer.url.empty()) throw ConfigError("select exactly one scorer source: builtin or url");
    if (k == 0) throw ConfigError("k must be at least 1");
    if (attribution_methods.empty()) throw ConfigError("no attribution method selected");
    if (reduction_opts.epsilon < 0) throw ConfigError("epsilon must be non-negative");
    for (auto m : summary_methods) {
      if (m == SummaryMethod::Extractive) throw ConfigError("Extractive is produced implicitly with Hybrid; do not list it");
    }
  }
};

// Parses a config object. Relative paths resolve against `base`.
inline RunConfig parse_config(const json& j, const fs::path& base = {}) {
  auto path = [&](const json& v) {
    fs::path p = v.get<std::string>();
    return p.is_relative() ? base / p : p;
  };
  RunConfig c;
  try {
    if (j.contains("manifest")) c.manifest = path(j.at("manifest"));
    if (j.contains("out_dir")) c.out_dir = path(j.at("out_dir"));
    if (j.contains("filter") && !j.at("filter").is_null()) {
      const auto& f = j.at("filter");
      FilterThresholds t;
      t.min_sum_len = f.value("min_sum_len", t.min_sum_len);
      t.max_sum_len = f.value("max_sum_len", t.max_sum_len);
      t.min_doc_len = f.value("min_doc_len", t.min_doc_len);
      c.filter = t;
    }
    if (j.contains("budget")) {
      const auto& b = j.at("budget");
      const auto mode = parse_enum<BudgetMode>(b.value("mode", "percentile75"));
      if (!mode) throw ConfigError("unknown budget mode");
      c.budget.mode = *mode;
      if (b.contains("fixed_chars") && !b.at("fixed_chars").is_null()) c.budget.fixed_chars = b.at("fixed_chars").get<std::size_t>();
    }
    if (j.contains("provider")) {
      const auto& p = j.at("provider");
      c.provider.kind = p.value("kind", c.provider.kind);
      c.provider.url = p.value("url", "");
      if (p.contains("transcripts") && !p.at("transcripts").is_null()) c.provider.transcripts = path(p.at("transcripts"));
      c.provider.retry.max_attempts = p.value("max_attempts", c.provider.retry.max_attempts);
      c.provider.retry.initial_backoff = std::chrono::milliseconds(p.value("backoff_ms", 200));
    }
    if (j.contains("scorer")) {
      const auto& s = j.at("scorer");
      c.scorer.url = s.value("url", "");
      c.scorer.builtin = s.value("builtin", c.scorer.url.empty());
      c.scorer.pool = s.value("pool", c.scorer.pool);
      c.scorer.batch_size = s.value("batch_size", c.scorer.batch_size);
    }
    auto enums = [&]<typename E>(const char* key, std::vector<E>& out) {
      if (!j.contains(key)) return;
      out.clear();
      for (const auto& v : j.at(key)) {
        const auto e = parse_enum<E>(v.get<std::string>());
        if (!e) throw ConfigError(std::string("unknown value in ") + key + ": " + v.get<std::string>());
        out.push_back(*e);
      }
    };
    enums.template operator()<SummaryMethod>("summary_methods", c.summary_methods);
    enums.template operator()<AttributionMethod>("attribution_methods", c.attribution_methods);
    enums.template operator()<TaskKind>("task_kinds", c.task_kinds);
    c.k = j.value("k", c.k);
    c.reduction_opts.epsilon = j.value("epsilon", c.reduction_opts.epsilon);
    if (j.contains("reduction")) {
      const auto& r = j.at("reduction");
      c.reduction = r.value("enabled", true);
      const auto order = r.value("order", "adaptive");
      if (order != "adaptive" && order != "frozen") throw ConfigError("reduction order must be adaptive or frozen");
      c.reduction_opts.order = order == "frozen" ? ReductionOrder::Frozen : ReductionOrder::Adaptive;
      const auto agg = parse_enum<NeutralityAggregator>(r.value("aggregator", "mean"));
      if (!agg) throw ConfigError("unknown neutrality aggregator");
      c.reduction_opts.aggregator = *agg;
    }
    if (j.contains("segmenter")) c.segmenter.max_sentence_chars = j.at("segmenter").value("max_sentence_chars", c.segmenter.max_sentence_chars);
    if (j.contains("abstractive")) {
      c.abstractive.token_budget = j.at("abstractive").value("token_budget", c.abstractive.token_budget);
      c.abstractive.max_prompt_tokens = j.at("abstractive").value("max_prompt_tokens", c.abstractive.max_prompt_tokens);
    }
    c.cohort = j.value("cohort", "");
    c.guideline_version = j.value("guideline_version", c.guideline_version);
    if (j.contains("service")) {
      const auto& s = j.at("service");
      c.service.bind = s.value("bind", c.service.bind);
      c.service.port = s.value("port", c.service.port);
      c.service.auth_token = s.value("auth_token", "");
      if (s.contains("label_store")) c.service.label_store = path(s.at("label_store"));
      if (s.contains("guidelines_dir")) c.service.guidelines_dir = path(s.at("guidelines_dir"));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config: ") + e.what());
  }
  c.scorer.batch_size = std::max<std::size_t>(1, c.scorer.batch_size);
  c.reduction_opts.scoring.batch_size = c.scorer.batch_size;
  return c;
}

inline RunConfig load_config(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open config " + file.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(file.string() + ": " + e.what());
  }
  return parse_config(j, file.parent_path());
}

// The parts of the config that determine pipeline outputs. Paths and service
// settings are left out so a moved run still reuses its stages.
inline json config_snapshot(const RunConfig& c) {
  json j = {{"budget", {{"mode", c.budget.mode}, {"fixed_chars", c.budget.fixed_chars ? json(*c.budget.fixed_chars) : json(nullptr)}}},
            {"provider", c.provider.kind},
            {"scorer", c.scorer.builtin ? "builtin" : c.scorer.url},
            {"summary_methods", c.summary_methods},
            {"attribution_methods", c.attribution_methods},
            {"task_kinds", c.task_kinds},
            {"k", c.k},
            {"reduction", c.reduction},
            {"reduction_order", c.reduction_opts.order == ReductionOrder::Frozen ? "frozen" : "adaptive"},
            {"aggregator", c.reduction_opts.aggregator},
            {"epsilon", c.reduction_opts.epsilon},
            {"max_sentence_chars", c.segmenter.max_sentence_chars},
            {"abstractive_token_budget", c.abstractive.token_budget},
            {"cohort", c.cohort},
            {"guideline_version", c.guideline_version}};
  if (c.filter) {
    j["filter"] = {{"min_sum_len", c.filter->min_sum_len}, {"max_sum_len", c.filter->max_sum_len}, {"min_doc_len", c.filter->min_doc_len}};
  }
  return j;
}

// ---------------------------------------------------------------------------
// run manifest

struct StageRecord {
  std::string name;
  std::string key;                                  // hash of inputs + config slice
  std::map<std::string, std::string> outputs;       // relative path -> sha256
  bool reused = false;                              // not part of any hash
  std::string finished_at;                          // not part of any hash
};

struct RunManifest {
  std::string run_id;
  json config;
  std::string input_hash;
  std::vector<StageRecord> stages;
  std::string started_at;
  std::string finished_at;

  // Hash over everything deterministic: config, inputs, stage keys and outputs.
  std::string content_hash() const {
    json j = {{"config", config}, {"input", input_hash}, {"stages", json::array()}};
    for (const auto& s : stages) j["stages"].push_back({{"name", s.name}, {"key", s.key}, {"outputs", s.outputs}});
    return text::sha256_hex(j.dump());
  }

  const StageRecord* stage(const std::string& name) const {
    for (const auto& s : stages) {
      if (s.name == name) return &s;
    }
    return nullptr;
  }
};

inline void to_json(json& j, const StageRecord& s) {
  j = json{{"name", s.name}, {"key", s.key}, {"outputs", s.outputs}, {"reused", s.reused}, {"finished_at", s.finished_at}};
}

inline void from_json(const json& j, StageRecord& s) {
  s.name = j.at("name").get<std::string>();
  s.key = j.at("key").get<std::string>();
  s.outputs = j.at("outputs").get<std::map<std::string, std::string>>();
  s.reused = j.value("reused", false);
  s.finished_at = j.value("finished_at", "");
}

inline void to_json(json& j, const RunManifest& m) {
  j = json{{"run_id", m.run_id},   {"config", m.config},         {"input_hash", m.input_hash}, {"stages", m.stages},
           {"started_at", m.started_at}, {"finished_at", m.finished_at}, {"content_hash", m.content_hash()}};
}

inline void from_json(const json& j, RunManifest& m) {
  m.run_id = j.value("run_id", "");
  m.config = j.value("config", json::object());
  m.input_hash = j.value("input_hash", "");
  m.stages = j.value("stages", std::vector<StageRecord>{});
  m.started_at = j.value("started_at", "");
  m.finished_at = j.value("finished_at", "");
}

namespace detail {

inline std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Writes via a temporary file and rename so a crash never leaves a torn
// artifact behind.
inline void write_atomic(const fs::path& p, const std::string& data) {
  fs::create_directories(p.parent_path());
  const auto tmp = p.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp);
    out << data;
    if (!out.flush()) throw Error("write failed: " + tmp);
  }
  fs::rename(tmp, p);
}

inline std::string safe_name(std::string s) {
  for (auto& ch : s) {
    if (ch == '/' || ch == '\\' || ch == ' ' || ch == ':') ch = '_';
  }
  return s;
}

}  // namespace detail

struct PipelineResult {
  RunManifest manifest;
  std::size_t stages_computed = 0;
  std::size_t provider_calls = 0;  // only counted for the identity mock
  std::vector<std::string> warnings;
};

inline std::unique_ptr<Scorer> make_scorer(const ScorerConfig& c) {
  if (c.builtin) return std::make_unique<LexicalScorer>();
  HttpScorerOptions o;
  o.pool_size = c.pool;
  return std::make_unique<HttpScorer>(make_endpoint(c.url), o);
}

// Artifact layout under out_dir:
//   corpus.json, summaries.json, matrices/<summary>__<method>.txt,
//   attributions.json, reductions.json, tasks.json, run_manifest.json
class Pipeline {
 public:
  explicit Pipeline(RunConfig cfg, std::unique_ptr<Scorer> scorer = nullptr,
                    std::shared_ptr<ParaphraseProvider> provider = nullptr)
      : cfg_(std::move(cfg)), scorer_(std::move(scorer)), provider_(std::move(provider)) {}

  // Stage names in execution order.
  static const std::vector<std::string>& stage_names() {
    static const std::vector<std::string> names{"ingest", "summarize", "attribute", "reduce", "tasks"};
    return names;
  }

  // The stages a CLI subcommand needs, including its prerequisites.
  static std::set<std::string> stages_for(const std::string& target) {
    if (target == "ingest") return {"ingest"};
    if (target == "summarize") return {"ingest", "summarize"};
    if (target == "attribute") return {"ingest", "summarize", "attribute"};
    if (target == "reduce") return {"ingest", "summarize", "reduce"};
    if (target == "tasks") return {"ingest", "summarize", "attribute", "tasks"};
    if (target == "all") return {stage_names().begin(), stage_names().end()};
    throw ConfigError("unknown stage '" + target + "'");
  }

  // Runs the selected stages (all when `only` is empty).
  PipelineResult run(const std::set<std::string>& only = {}) {
    only_ = only;
    cfg_.validate();
    fs::create_directories(cfg_.out_dir);
    previous_ = load_previous();

    PipelineResult res;
    auto& m = res.manifest;
    m.config = config_snapshot(cfg_);
    m.started_at = utc_timestamp();

    auto topics = ingest(cfg_.manifest);
    if (cfg_.filter) topics = filter_events(topics, *cfg_.filter);
    if (topics.empty()) throw CorpusError("no topics left after ingestion and filtering");
    m.input_hash = text::sha256_hex(json(topics).dump());
    m.run_id = text::sha256_hex(m.config.dump() + m.input_hash).substr(0, 16);

    std::vector<SegmentedTopic> seg;
    for (const auto& t : topics) seg.push_back(segment_topic(t, cfg_.segmenter));

    // ingest
    stage(res, "ingest", m.input_hash, [&] {
      json corpus = json::array();
      for (const auto& st : seg) corpus.push_back({{"topic", st.topic}, {"sentences", st.sentences}});
      return Outputs{{"corpus.json", corpus.dump(2)}};
    });

    // summarize
    std::vector<SummaryRecord> summaries;
    stage(res, "summarize", key_of(m, {"ingest"}), [&] {
      summaries = summarize_all(seg, res);
      return Outputs{{"summaries.json", json(summaries).dump(2)}};
    });
    if (enabled("summarize") && summaries.empty()) summaries = json::parse(read_output("summaries.json")).get<std::vector<SummaryRecord>>();

    // attribute
    std::vector<AttributionSet> attributions;
    stage(res, "attribute", key_of(m, {"summarize"}), [&] {
      Outputs out;
      for (const auto& s : summaries) {
        if (s.method == SummaryMethod::Extractive) continue;
        if (s.sentences.empty()) {
          res.warnings.push_back("summary " + s.summary_id + " has no sentences");
          continue;
        }
        const auto& st = topic_of(seg, s.topic_id);
        const auto pool = candidate_pool(s, st);
        for (auto method : cfg_.attribution_methods) {
          const auto mat = score_matrix(s, pool, scorer(), method, {cfg_.scorer.batch_size});
          out.emplace_back("matrices/" + detail::safe_name(s.summary_id) + "__" + to_string(method) + ".txt", write_matrix(mat));
          for (auto& a : attribution_sets(s, mat, cfg_.k)) attributions.push_back(std::move(a));
        }
      }
      out.emplace_back("attributions.json", json(attributions).dump(2));
      return out;
    });
    if (enabled("attribute") && attributions.empty()) {
      attributions = json::parse(read_output("attributions.json")).get<std::vector<AttributionSet>>();
    }

    // reduce: extractive summaries against their whole topic
    if (cfg_.reduction) {
      stage(res, "reduce", key_of(m, {"summarize"}), [&] {
        json out = json::array();
        for (const auto& s : summaries) {
          if (s.method != SummaryMethod::Extractive || s.sentences.empty()) continue;
          const auto pool = topic_of(seg, s.topic_id).all_sentences();
          auto t = reduction_experiment(pool, s.sentences, scorer(), cfg_.reduction_opts);
          if (t.failed) res.warnings.push_back("reduction for " + s.summary_id + " stopped early: " + t.failure);
          out.push_back({{"summary", s.summary_id}, {"pool_size", pool.size()}, {"trajectory", t}});
        }
        return Outputs{{"reductions.json", out.dump(2)}};
      });
    }

    // tasks
    stage(res, "tasks", key_of(m, {"ingest", "attribute"}), [&] {
      std::vector<TaskItem> tasks;
      for (auto kind : cfg_.task_kinds) {
        for (const auto& st : seg) {
          std::vector<AttributionSet> mine;
          for (const auto& a : attributions) {
            if (topic_of_summary(summaries, a.summary_id) == st.topic.topic_id) mine.push_back(a);
          }
          if (mine.empty()) continue;
          for (auto& t : build_tasks(mine, kind, st, {st.topic.dataset, cfg_.cohort, cfg_.guideline_version})) tasks.push_back(std::move(t));
        }
      }
      return Outputs{{"tasks.json", json(tasks).dump(2)}};
    });
    return finish(res);
  }

  const RunConfig& config() const { return cfg_; }

 private:
  using Outputs = std::vector<std::pair<std::string, std::string>>;

  bool enabled(const std::string& name) const { return only_.empty() || only_.count(name) > 0; }

  PipelineResult finish(PipelineResult& res) {
    res.manifest.finished_at = utc_timestamp();
    if (identity_) res.provider_calls = identity_->calls();
    write_manifest(res.manifest);
    return std::move(res);
  }

  Scorer& scorer() {
    if (!scorer_) scorer_ = make_scorer(cfg_.scorer);
    return *scorer_;
  }

  ParaphraseProvider& provider() {
    if (!provider_) {
      if (cfg_.provider.kind == "mock-identity") {
        auto p = std::make_shared<IdentityProvider>();
        identity_ = p.get();
        provider_ = p;
      } else if (cfg_.provider.kind == "replay") {
        provider_ = std::make_shared<ReplayProvider>(std::make_shared<TranscriptStore>(*cfg_.provider.transcripts));
      } else {
        provider_ = std::make_shared<HttpProvider>(make_endpoint(cfg_.provider.url));
      }
    } else if (!identity_) {
      identity_ = dynamic_cast<IdentityProvider*>(provider_.get());
    }
    return *provider_;
  }

  TranscriptStore* transcripts() {
    // The replay provider reads the log itself; other providers append to it.
    if (!cfg_.provider.transcripts || cfg_.provider.kind == "replay") return nullptr;
    if (!transcripts_) transcripts_ = std::make_unique<TranscriptStore>(*cfg_.provider.transcripts);
    return transcripts_.get();
  }

  static const SegmentedTopic& topic_of(const std::vector<SegmentedTopic>& seg, const std::string& id) {
    for (const auto& s : seg) {
      if (s.topic.topic_id == id) return s;
    }
    throw Error("unknown topic '" + id + "'");
  }

  static std::string topic_of_summary(const std::vector<SummaryRecord>& sums, const std::string& summary_id) {
    for (const auto& s : sums) {
      if (s.summary_id == summary_id) return s.topic_id;
    }
    return {};
  }

  std::vector<SummaryRecord> summarize_all(const std::vector<SegmentedTopic>& seg, PipelineResult& res) {
    auto want = [&](SummaryMethod m) {
      return std::find(cfg_.summary_methods.begin(), cfg_.summary_methods.end(), m) != cfg_.summary_methods.end();
    };
    GenerationContext ctx{provider(), transcripts(), cfg_.provider.retry, cfg_.segmenter};
    std::vector<SummaryRecord> out;
    std::vector<std::size_t> abstractive_lengths;
    std::vector<std::size_t> reference_lengths;
    for (const auto& st : seg) {
      if (want(SummaryMethod::Human)) {
        for (auto& h : human_summaries(st.topic, cfg_.segmenter)) out.push_back(std::move(h));
      }
      for (const auto& r : st.topic.reference_summaries) reference_lengths.push_back(text::char_count(r));
      const bool need_abstractive = want(SummaryMethod::Abstractive) || (want(SummaryMethod::Hybrid) && cfg_.budget.mode == BudgetMode::Percentile75);
      if (need_abstractive) {
        auto a = abstractive_summarize(st.topic, ctx, cfg_.abstractive);
        abstractive_lengths.push_back(text::char_count(a.text));
        if (want(SummaryMethod::Abstractive)) out.push_back(std::move(a));
      }
    }
    if (want(SummaryMethod::Hybrid)) {
      // one budget per dataset run, comparable with the abstractive lengths
      const auto budget = compute_budget(abstractive_lengths, cfg_.budget, reference_lengths);
      for (const auto& st : seg) {
        auto ex = extract_summary(st.topic.topic_id, st.all_sentences(), budget, GreedyCoverageExtractor{}, cfg_.segmenter);
        if (ex.empty_warning) {
          res.warnings.push_back("no sentence of topic " + st.topic.topic_id + " fits the budget");
          out.push_back(std::move(ex));
          continue;
        }
        out.push_back(std::move(ex));
        out.push_back(hybrid_summarize(st, budget, ctx));
      }
    }
    return out;
  }

  static std::string hash_outputs(const Outputs& outs) {
    json j = json::object();
    for (const auto& [name, data] : outs) j[name] = text::sha256_hex(data);
    return j.dump();
  }

  static std::string key_of(const RunManifest& m, std::initializer_list<const char*> deps) {
    json j = {{"config", m.config}, {"input", m.input_hash}, {"deps", json::object()}};
    for (const auto* d : deps) {
      if (const auto* s = m.stage(d)) j["deps"][d] = s->outputs;
    }
    return j.dump();
  }

  // Runs `fn` unless a previous run recorded the same key and every output it
  // listed is still on disk with the recorded hash. A stage left out of the
  // selection keeps its previous record only when that record is still valid.
  template <typename Fn>
  void stage(PipelineResult& res, const std::string& name, const std::string& key_material, Fn&& fn) {
    auto& m = res.manifest;
    StageRecord rec;
    rec.name = name;
    rec.key = text::sha256_hex(name + "\n" + key_material);
    const auto* prev = previous_ ? previous_->stage(name) : nullptr;
    const bool valid = prev && prev->key == rec.key && outputs_intact(*prev);
    if (!enabled(name)) {
      if (valid) m.stages.push_back(*prev);
      return;
    }
    if (valid) {
      rec.outputs = prev->outputs;
      rec.reused = true;
    } else {
      for (const auto& [rel, data] : fn()) {
        detail::write_atomic(cfg_.out_dir / rel, data);
        rec.outputs[rel] = text::sha256_hex(data);
      }
      ++res.stages_computed;
    }
    rec.finished_at = utc_timestamp();
    m.stages.push_back(std::move(rec));
    write_manifest(m);  // resumable after a failure in a later stage
  }

  bool outputs_intact(const StageRecord& s) const {
    for (const auto& [rel, hash] : s.outputs) {
      const auto p = cfg_.out_dir / rel;
      if (!fs::exists(p) || text::sha256_hex(detail::slurp(p)) != hash) return false;
    }
    return true;
  }

  std::string read_output(const std::string& rel) const { return detail::slurp(cfg_.out_dir / rel); }

  std::optional<RunManifest> load_previous() const {
    const auto p = cfg_.out_dir / "run_manifest.json";
    if (!fs::exists(p)) return std::nullopt;
    try {
      return json::parse(detail::slurp(p)).get<RunManifest>();
    } catch (const std::exception&) {
      return std::nullopt;  // unreadable manifest: recompute everything
    }
  }

  void write_manifest(const RunManifest& m) const { detail::write_atomic(cfg_.out_dir / "run_manifest.json", json(m).dump(2)); }

  RunConfig cfg_;
  std::unique_ptr<Scorer> scorer_;
  std::shared_ptr<ParaphraseProvider> provider_;
  IdentityProvider* identity_ = nullptr;
  std::unique_ptr<TranscriptStore> transcripts_;
  std::optional<RunManifest> previous_;
  std::set<std::string> only_;
};

inline PipelineResult cmd_pipeline(const RunConfig& cfg) { return Pipeline(cfg).run(); }

// ---------------------------------------------------------------------------
// results

namespace detail {

inline std::string fixed(double v, int prec) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

inline std::string condition_columns(const Condition& c) {
  return to_string(c.dataset) + '\t' + to_string(c.summary_method) + '\t' + to_string(c.attribution_method) + '\t' + to_string(c.kind) +
         '\t' + (c.cohort.empty() ? "-" : c.cohort);
}

inline constexpr const char* kConditionHeader = "dataset\tsummary_method\tattribution_method\tkind\tcohort";

}  // namespace detail

struct ResultsReport {
  std::vector<std::pair<Condition, ResultSummary>> rows;
  std::vector<std::string> files;
  std::vector<std::string> warnings;
};

// Writes one ResultSummary per condition plus chart-ready TSV files under
// `out_dir`. `reductions` is an optional reductions.json from a pipeline run.
inline ResultsReport cmd_results(const LabelStore& store, const fs::path& out_dir, const ConditionFilter& filter = {},
                                 const std::optional<fs::path>& reductions = std::nullopt, const TallyOptions& opts = {}) {
  ResultsReport rep;
  const auto snap = store.snapshot();
  if (snap.records.empty()) rep.warnings.push_back("label store is empty");
  for (const auto& c : conditions(snap)) {
    if (filter.matches(c)) rep.rows.emplace_back(c, tally(snap, ConditionFilter::exactly(c), opts));
  }

  std::ostringstream summary_json, fractions, refutations, typology, annotators;
  json all = json::array();
  fractions << detail::kConditionHeader << "\tlabel\tcount\tfraction\n";
  refutations << detail::kConditionHeader
              << "\trecords\ttotal_labels\trefutations\trefutation_pct\trefutation_chains\tdedup_refutation_pct\texcluded\n";
  typology << detail::kConditionHeader << "\tcategory\tcount\n";
  annotators << detail::kConditionHeader << "\tannotator\ttotal\tunique\n";
  for (const auto& [c, r] : rep.rows) {
    const auto cc = detail::condition_columns(c);
    all.push_back(r);
    for (const auto& [label, n] : r.label_counts) {
      fractions << cc << '\t' << label << '\t' << n << '\t' << detail::fixed(r.label_fractions.at(label), 6) << '\n';
    }
    refutations << cc << '\t' << r.records << '\t' << r.total_labels << '\t' << r.refutations << '\t' << detail::fixed(r.refutation_pct, 2)
                << '\t' << r.refutation_chains << '\t' << detail::fixed(r.dedup_refutation_pct, 2) << '\t' << r.excluded << '\n';
    for (const auto& [cat, n] : r.typology_counts) typology << cc << '\t' << cat << '\t' << n << '\n';
    for (const auto& [a, t] : r.per_annotator) annotators << cc << '\t' << a << '\t' << t.total << '\t' << t.unique << '\n';
  }

  auto emit = [&](const std::string& name, const std::string& data) {
    detail::write_atomic(out_dir / name, data);
    rep.files.push_back(name);
  };
  emit("summary.json", all.dump(2) + "\n");
  emit("label_fractions.tsv", fractions.str());
  emit("refutations.tsv", refutations.str());
  emit("typology.tsv", typology.str());
  emit("annotators.tsv", annotators.str());

  if (reductions) {
    std::ostringstream red;
    red << "summary\tstep\tremoved\tneutrality\tsummac_after\n";
    for (const auto& entry : json::parse(detail::slurp(*reductions))) {
      const auto id = entry.at("summary").get<std::string>();
      const auto& t = entry.at("trajectory");
      red << id << "\t0\t-\t-\t" << detail::fixed(t.at("initial_score").get<double>(), 6) << '\n';
      std::size_t i = 0;
      for (const auto& s : t.at("steps")) {
        red << id << '\t' << ++i << '\t' << to_string(s.at("removed").get<SentenceRef>()) << '\t'
            << detail::fixed(s.at("neutrality").get<double>(), 6) << '\t' << detail::fixed(s.at("summac_after").get<double>(), 6) << '\n';
      }
    }
    emit("reduction_trajectories.tsv", red.str());
  }
  return rep;
}

}  // namespace attrib
