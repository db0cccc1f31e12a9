#pragma once

// Annotation tasks, the append-only label store, and the aggregate tallies
// computed from it (label fractions, refutation percentages, per-annotator
// counts and duplicate-aware refutation typology counts).

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "attrib/attribution.hpp"
#include "attrib/corpus.hpp"
#include "attrib/error.hpp"
#include "attrib/summarize.hpp"
#include "attrib/text.hpp"

namespace attrib {

enum class TaskKind { Single, Group };

NLOHMANN_JSON_SERIALIZE_ENUM(TaskKind, {{TaskKind::Single, "Single"}, {TaskKind::Group, "Group"}})

inline std::string to_string(TaskKind k) { return json(k).get<std::string>(); }

enum class Label { Support, NoSupport, Unclear, FullSupport, PartialSupport };

NLOHMANN_JSON_SERIALIZE_ENUM(Label, {{Label::Support, "Support"},
                                     {Label::NoSupport, "NoSupport"},
                                     {Label::Unclear, "Unclear"},
                                     {Label::FullSupport, "FullSupport"},
                                     {Label::PartialSupport, "PartialSupport"}})

inline std::string to_string(Label l) { return json(l).get<std::string>(); }

inline const std::vector<Label>& labels_for(TaskKind k) {
  static const std::vector<Label> single{Label::Support, Label::NoSupport, Label::Unclear};
  static const std::vector<Label> group{Label::FullSupport, Label::PartialSupport, Label::NoSupport, Label::Unclear};
  return k == TaskKind::Single ? single : group;
}

inline bool label_allowed(TaskKind k, Label l) {
  const auto& allowed = labels_for(k);
  return std::find(allowed.begin(), allowed.end(), l) != allowed.end();
}

enum class PrimaryCategory { Semantic, Content, Additional };
enum class SecondaryCode { PredE, EntE, CircE, OutE, GramE, OthE, NE };

NLOHMANN_JSON_SERIALIZE_ENUM(PrimaryCategory, {{PrimaryCategory::Semantic, "Semantic"},
                                               {PrimaryCategory::Content, "Content"},
                                               {PrimaryCategory::Additional, "Additional"}})

NLOHMANN_JSON_SERIALIZE_ENUM(SecondaryCode, {{SecondaryCode::PredE, "PredE"},
                                             {SecondaryCode::EntE, "EntE"},
                                             {SecondaryCode::CircE, "CircE"},
                                             {SecondaryCode::OutE, "OutE"},
                                             {SecondaryCode::GramE, "GramE"},
                                             {SecondaryCode::OthE, "OthE"},
                                             {SecondaryCode::NE, "NE"}})

struct Typology {
  std::set<PrimaryCategory> primary;
  std::set<SecondaryCode> secondary;
  bool operator==(const Typology&) const = default;
};

// The grouping every tally is reported under. `cohort` separates annotator
// pools that labeled the same items (e.g. general analysts vs. domain
// experts); empty when there is only one pool.
struct Condition {
  Dataset dataset = Dataset::Custom;
  SummaryMethod summary_method = SummaryMethod::Human;
  AttributionMethod attribution_method = AttributionMethod::Embedding;
  TaskKind kind = TaskKind::Single;
  std::string cohort;

  auto operator<=>(const Condition&) const = default;
  bool operator==(const Condition&) const = default;
};

struct ConditionFilter {
  std::optional<Dataset> dataset;
  std::optional<SummaryMethod> summary_method;
  std::optional<AttributionMethod> attribution_method;
  std::optional<TaskKind> kind;
  std::optional<std::string> cohort;

  bool matches(const Condition& c) const {
    return (!dataset || *dataset == c.dataset) && (!summary_method || *summary_method == c.summary_method) &&
           (!attribution_method || *attribution_method == c.attribution_method) && (!kind || *kind == c.kind) &&
           (!cohort || *cohort == c.cohort);
  }

  static ConditionFilter exactly(const Condition& c) {
    return {c.dataset, c.summary_method, c.attribution_method, c.kind, c.cohort};
  }
};

// ---------------------------------------------------------------------------
// tasks

struct TaskSentence {
  SentenceRef ref;
  std::string text;
  std::size_t rank = 0;  // Group payloads only
  double score = 0;
};

struct TaskItem {
  std::string task_id;
  TaskKind kind = TaskKind::Single;
  std::string topic_id;
  Condition condition;
  std::string summary_id;
  SentenceRef statement_ref;
  std::string summary_statement;
  // Single: the evaluated sentence with optional neighbors.
  std::optional<TaskSentence> prev;
  std::optional<TaskSentence> eval;
  std::optional<TaskSentence> next;
  // Group: ranked candidates, 3 unless the pool was short.
  std::vector<TaskSentence> candidates;
  bool short_pool = false;
  std::string guideline_version;

  std::vector<SentenceRef> payload_refs() const {
    std::vector<SentenceRef> out;
    for (const auto* s : {&prev, &eval, &next}) {
      if (*s) out.push_back((*s)->ref);
    }
    for (const auto& c : candidates) out.push_back(c.ref);
    return out;
  }
};

struct TaskMeta {
  Dataset dataset = Dataset::Custom;
  std::string cohort;
  std::string guideline_version = "v1";
};

inline std::string compute_task_id(const TaskItem& t) {
  json key = {{"kind", t.kind},
              {"dataset", t.condition.dataset},
              {"summary_method", t.condition.summary_method},
              {"attribution_method", t.condition.attribution_method},
              {"statement", t.summary_statement},
              {"payload", t.payload_refs()}};
  return text::sha256_hex(key.dump()).substr(0, 16);
}

inline constexpr std::size_t kGroupSize = 3;

inline std::vector<TaskItem> build_tasks(const std::vector<AttributionSet>& attributions, TaskKind kind,
                                         const SegmentedTopic& corpus, const TaskMeta& meta = {}) {
  std::vector<TaskItem> out;
  auto sentence = [&](const SentenceRef& ref) {
    const auto* s = corpus.find(ref);
    if (!s) throw AnnotationError("attribution references missing sentence " + to_string(ref));
    return TaskSentence{ref, s->text, 0, 0};
  };
  for (const auto& a : attributions) {
    if (a.summary_method == SummaryMethod::Extractive) {
      throw AnnotationError("extractive summaries are not annotated");
    }
    if (a.candidates.empty()) throw AnnotationError("attribution for " + to_string(a.summary_sentence) + " has no candidates");
    TaskItem t;
    t.kind = kind;
    t.topic_id = corpus.topic.topic_id;
    t.condition = {meta.dataset, a.summary_method, a.method, kind, meta.cohort};
    t.summary_id = a.summary_id;
    t.statement_ref = a.summary_sentence;
    t.summary_statement = a.statement;
    t.guideline_version = meta.guideline_version;
    auto ranked = a.candidates;
    std::sort(ranked.begin(), ranked.end(), [](const auto& x, const auto& y) { return x.rank < y.rank; });
    if (kind == TaskKind::Single) {
      const auto w = context_window(ranked.front().ref, corpus);
      t.eval = sentence(w.eval);
      t.eval->rank = 1;
      t.eval->score = ranked.front().score;
      if (w.prev) t.prev = sentence(*w.prev);
      if (w.next) t.next = sentence(*w.next);
    } else {
      for (std::size_t i = 0; i < std::min(kGroupSize, ranked.size()); ++i) {
        auto s = sentence(ranked[i].ref);
        s.rank = i + 1;
        s.score = ranked[i].score;
        t.candidates.push_back(std::move(s));
      }
      t.short_pool = t.candidates.size() < kGroupSize;
    }
    t.task_id = compute_task_id(t);
    out.push_back(std::move(t));
  }
  return out;
}

// ---------------------------------------------------------------------------
// label records and the store

struct LabelRecord {
  std::string record_id;
  std::string task_id;
  std::string annotator_id;
  Condition condition;
  Label label = Label::Unclear;
  bool refute = false;
  std::optional<Typology> typology;
  std::optional<std::string> duplicate_of;
  std::string submitted_at;
  std::string comment;

  // "Not an error" review outcome: kept in the store and in label
  // percentages, left out of refutation error counts.
  bool excluded_from_counts() const { return typology && typology->secondary.count(SecondaryCode::NE) > 0; }
  bool operator==(const LabelRecord&) const = default;
};

// Denominator metadata for stores that only hold a subset of the labels
// (e.g. transcribed refutations): every annotator labeled every pairing.
struct DeclaredCondition {
  Condition condition;
  std::size_t pairings = 0;
  std::vector<std::string> annotators;
  bool operator==(const DeclaredCondition&) const = default;
};

namespace store_format {

inline constexpr std::string_view kHeader = "#labelstore v1";
inline constexpr std::string_view kFields =
    "#fields record_id task_id annotator dataset summary_method attribution_method kind cohort label refute primary "
    "secondary duplicate_of submitted_at comment";
inline constexpr std::size_t kFieldCount = 15;

inline std::string escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '\t': out += "\\t"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

inline std::string unescape(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '\\' || i + 1 == s.size()) {
      out.push_back(s[i]);
      continue;
    }
    switch (s[++i]) {
      case 't': out.push_back('\t'); break;
      case 'n': out.push_back('\n'); break;
      case 'r': out.push_back('\r'); break;
      default: out.push_back(s[i]);
    }
  }
  return out;
}

// "-" stands for an empty field.
inline std::string opt(std::string_view s) { return s.empty() ? "-" : escape(s); }
inline std::string unopt(std::string_view s) { return s == "-" ? std::string() : unescape(s); }

template <typename Enum>
std::string join_set(const std::set<Enum>& s) {
  if (s.empty()) return "-";
  std::string out;
  for (auto e : s) {
    if (!out.empty()) out.push_back('+');
    out += json(e).template get<std::string>();
  }
  return out;
}

template <typename Enum>
std::set<Enum> parse_set(std::string_view field) {
  std::set<Enum> out;
  if (field == "-") return out;
  for (const auto& name : text::split(field, '+')) {
    const auto e = parse_enum<Enum>(name);
    if (!e) throw AnnotationError("unknown typology code '" + name + "'");
    out.insert(*e);
  }
  return out;
}

inline std::string format_record(const LabelRecord& r) {
  const auto& c = r.condition;
  std::ostringstream out;
  out << escape(r.record_id) << '\t' << opt(r.task_id) << '\t' << escape(r.annotator_id) << '\t' << to_string(c.dataset) << '\t'
      << to_string(c.summary_method) << '\t' << to_string(c.attribution_method) << '\t' << to_string(c.kind) << '\t'
      << opt(c.cohort) << '\t' << to_string(r.label) << '\t' << (r.refute ? "yes" : "no") << '\t'
      << (r.typology ? join_set(r.typology->primary) : "-") << '\t' << (r.typology ? join_set(r.typology->secondary) : "-")
      << '\t' << opt(r.duplicate_of.value_or("")) << '\t' << opt(r.submitted_at) << '\t' << opt(r.comment);
  return out.str();
}

template <typename Enum>
Enum need_enum(const std::string& s, const char* what) {
  const auto e = parse_enum<Enum>(s);
  if (!e) throw AnnotationError(std::string("unknown ") + what + " '" + s + "'");
  return *e;
}

inline LabelRecord parse_record(std::string_view line) {
  const auto f = text::split(line, '\t');
  if (f.size() != kFieldCount) {
    throw AnnotationError("expected " + std::to_string(kFieldCount) + " fields, got " + std::to_string(f.size()));
  }
  LabelRecord r;
  r.record_id = unescape(f[0]);
  if (r.record_id.empty() || r.record_id == "-") throw AnnotationError("empty record_id");
  r.task_id = unopt(f[1]);
  r.annotator_id = unescape(f[2]);
  r.condition.dataset = need_enum<Dataset>(f[3], "dataset");
  r.condition.summary_method = need_enum<SummaryMethod>(f[4], "summary method");
  r.condition.attribution_method = need_enum<AttributionMethod>(f[5], "attribution method");
  r.condition.kind = need_enum<TaskKind>(f[6], "task kind");
  r.condition.cohort = unopt(f[7]);
  r.label = need_enum<Label>(f[8], "label");
  if (!label_allowed(r.condition.kind, r.label)) throw AnnotationError("label " + f[8] + " not valid for " + f[6] + " tasks");
  if (f[9] != "yes" && f[9] != "no") throw AnnotationError("refute must be yes or no");
  r.refute = f[9] == "yes";
  auto primary = parse_set<PrimaryCategory>(f[10]);
  auto secondary = parse_set<SecondaryCode>(f[11]);
  if (!primary.empty() || !secondary.empty()) {
    if (!r.refute) throw AnnotationError("typology given on a record without refutation");
    r.typology = Typology{std::move(primary), std::move(secondary)};
  }
  if (f[12] != "-") r.duplicate_of = unescape(f[12]);
  r.submitted_at = unopt(f[13]);
  r.comment = unopt(f[14]);
  return r;
}

inline std::string format_condition(const DeclaredCondition& d) {
  const auto& c = d.condition;
  return "#condition dataset=" + to_string(c.dataset) + " summary_method=" + to_string(c.summary_method) +
         " attribution_method=" + to_string(c.attribution_method) + " kind=" + to_string(c.kind) + " cohort=" + opt(c.cohort) +
         " pairings=" + std::to_string(d.pairings) + " annotators=" + text::join(d.annotators, ",");
}

inline DeclaredCondition parse_condition(std::string_view line) {
  std::map<std::string, std::string> kv;
  std::istringstream in{std::string(line.substr(std::string_view("#condition").size()))};
  std::string tok;
  while (in >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw AnnotationError("bad condition token '" + tok + "'");
    kv[tok.substr(0, eq)] = tok.substr(eq + 1);
  }
  auto need = [&](const char* k) {
    auto it = kv.find(k);
    if (it == kv.end()) throw AnnotationError(std::string("condition missing '") + k + "'");
    return it->second;
  };
  DeclaredCondition d;
  d.condition.dataset = need_enum<Dataset>(need("dataset"), "dataset");
  d.condition.summary_method = need_enum<SummaryMethod>(need("summary_method"), "summary method");
  d.condition.attribution_method = need_enum<AttributionMethod>(need("attribution_method"), "attribution method");
  d.condition.kind = need_enum<TaskKind>(need("kind"), "task kind");
  d.condition.cohort = unopt(kv.count("cohort") ? kv["cohort"] : "-");
  d.pairings = std::stoul(need("pairings"));
  for (auto& a : text::split(need("annotators"), ',')) {
    if (!a.empty()) d.annotators.push_back(std::move(a));
  }
  return d;
}

}  // namespace store_format

struct StoreSnapshot {
  std::vector<LabelRecord> records;
  std::vector<DeclaredCondition> declared;
};

// Append-only label store. Each accepted record is written as one line and
// flushed before the call returns; readers take immutable snapshots.
class LabelStore {
 public:
  LabelStore() = default;
  LabelStore(LabelStore&& o) noexcept {
    std::lock_guard lock(o.mu_);
    path_ = std::move(o.path_);
    records_ = std::move(o.records_);
    declared_ = std::move(o.declared_);
    tasks_ = std::move(o.tasks_);
  }
  LabelStore& operator=(LabelStore&&) = delete;

  // Opens (or creates) a store file.
  explicit LabelStore(std::filesystem::path path) : path_(std::move(path)) {
    if (std::filesystem::exists(*path_)) {
      std::ifstream in(*path_, std::ios::binary);
      std::ostringstream ss;
      ss << in.rdbuf();
      load(ss.str(), path_->string());
    } else {
      std::ofstream out(*path_, std::ios::binary);
      if (!out) throw AnnotationError("cannot create label store " + path_->string());
      out << store_format::kHeader << '\n' << store_format::kFields << '\n';
    }
  }

  static LabelStore parse(const std::string& data, const std::string& origin = "<memory>") {
    LabelStore s;
    s.load(data, origin);
    return s;
  }

  void declare(const DeclaredCondition& d) {
    std::lock_guard lock(mu_);
    if (path_) write_line(store_format::format_condition(d));
    declared_.push_back(d);
  }

  void register_tasks(const std::vector<TaskItem>& tasks) {
    std::lock_guard lock(mu_);
    for (const auto& t : tasks) tasks_[t.task_id] = t;
  }

  std::optional<TaskItem> task(const std::string& id) const {
    std::lock_guard lock(mu_);
    auto it = tasks_.find(id);
    if (it == tasks_.end()) return std::nullopt;
    return it->second;
  }

  bool has_tasks() const {
    std::lock_guard lock(mu_);
    return !tasks_.empty();
  }

  // Appends a fully formed record. Validation beyond the line schema is the
  // caller's job (see record_label).
  void append(const LabelRecord& r) {
    std::lock_guard lock(mu_);
    append_locked(r);
  }

  StoreSnapshot snapshot() const {
    std::lock_guard lock(mu_);
    return {records_, declared_};
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return records_.size();
  }

  // Canonical text form; identical to a file written by this store.
  std::string export_text() const {
    std::lock_guard lock(mu_);
    std::ostringstream out;
    out << store_format::kHeader << '\n' << store_format::kFields << '\n';
    for (const auto& d : declared_) out << store_format::format_condition(d) << '\n';
    for (const auto& r : records_) out << store_format::format_record(r) << '\n';
    return out.str();
  }

  const std::optional<std::filesystem::path>& path() const { return path_; }

  // Used by record_label under the store lock so validation and append are
  // one atomic step.
  template <typename Fn>
  auto with_lock(Fn&& fn) {
    std::lock_guard lock(mu_);
    return fn(records_, tasks_, [this](const LabelRecord& r) { append_locked(r); });
  }

 private:
  void load(const std::string& data, const std::string& origin) {
    std::istringstream in(data);
    std::string line;
    std::size_t lineno = 0;
    std::set<std::string> ids;
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      try {
        if (line.rfind("#condition", 0) == 0) {
          declared_.push_back(store_format::parse_condition(line));
        } else if (line[0] == '#') {
          if (lineno == 1 && line != store_format::kHeader) throw AnnotationError("unsupported store header '" + line + "'");
        } else {
          auto r = store_format::parse_record(line);
          if (!ids.insert(r.record_id).second) throw AnnotationError("duplicate record_id '" + r.record_id + "'");
          records_.push_back(std::move(r));
        }
      } catch (const std::exception& e) {
        throw AnnotationError(origin + ":" + std::to_string(lineno) + ": " + e.what());
      }
    }
    for (const auto& r : records_) {
      if (r.duplicate_of && !ids.count(*r.duplicate_of)) {
        throw AnnotationError(origin + ": record " + r.record_id + " duplicates unknown record " + *r.duplicate_of);
      }
    }
  }

  void write_line(const std::string& line) {
    std::ofstream out(*path_, std::ios::app | std::ios::binary);
    if (!out) throw AnnotationError("cannot append to " + path_->string());
    out << line << '\n';
    out.flush();
    if (!out) throw AnnotationError("write to " + path_->string() + " failed");
  }

  void append_locked(const LabelRecord& r) {
    if (path_) write_line(store_format::format_record(r));
    records_.push_back(r);
  }

  std::optional<std::filesystem::path> path_;
  mutable std::mutex mu_;
  std::vector<LabelRecord> records_;
  std::vector<DeclaredCondition> declared_;
  std::unordered_map<std::string, TaskItem> tasks_;
};

inline LabelStore import_fixture(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw AnnotationError("cannot open fixture " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return LabelStore::parse(ss.str(), path.string());
}

// ---------------------------------------------------------------------------
// recording labels

// Wire form of a label: optional fields take their documented defaults.
struct LabelSubmission {
  std::string task_id;
  std::string annotator_id;
  std::string label;
  std::optional<bool> refute;  // absent means "no"
  std::optional<Typology> typology;
  std::optional<std::string> duplicate_of;
  std::string comment;
  bool amend = false;
};

struct RecordResult {
  LabelRecord record;
  std::vector<std::string> warnings;
};

inline RecordResult record_label(LabelStore& store, const LabelSubmission& sub) {
  return store.with_lock([&](const std::vector<LabelRecord>& records, const auto& tasks, auto append) {
    auto it = tasks.find(sub.task_id);
    if (it == tasks.end()) throw LabelRejected("unknown task_id '" + sub.task_id + "'", 404);
    const TaskItem& task = it->second;
    if (sub.annotator_id.empty()) throw LabelRejected("annotator_id is required", 400);
    const auto label = parse_enum<Label>(sub.label);
    if (!label) throw LabelRejected("unknown label '" + sub.label + "'", 400);
    if (!label_allowed(task.kind, *label)) {
      throw LabelRejected("label " + sub.label + " is not valid for " + to_string(task.kind) + " tasks", 400);
    }
    const bool refute = sub.refute.value_or(false);
    if (sub.typology && !refute) throw LabelRejected("typology requires refute=yes", 400);

    RecordResult res;
    if (*label == Label::Unclear && refute) {
      res.warnings.push_back("refute=yes with an Unclear label; guidelines ask for refute=no when unclear");
    }
    const bool resubmission = std::any_of(records.begin(), records.end(), [&](const LabelRecord& r) {
      return r.task_id == sub.task_id && r.annotator_id == sub.annotator_id;
    });
    if (resubmission && !sub.amend) throw LabelRejected("annotator already labeled this task", 409);
    if (!resubmission && sub.amend) throw LabelRejected("nothing to amend", 409);
    if (sub.duplicate_of) {
      auto target = std::find_if(records.begin(), records.end(), [&](const auto& r) { return r.record_id == *sub.duplicate_of; });
      if (target == records.end()) throw LabelRejected("duplicate_of refers to unknown record", 400);
      if (target->condition.dataset != task.condition.dataset || target->task_id == sub.task_id) {
        throw LabelRejected("duplicate_of must link a different pairing of the same dataset", 409);
      }
    }

    std::size_t next_id = 1;
    for (const auto& r : records) {
      try {
        next_id = std::max<std::size_t>(next_id, std::stoull(r.record_id) + 1);
      } catch (const std::exception&) {
      }
    }
    res.record = LabelRecord{std::to_string(next_id), sub.task_id, sub.annotator_id, task.condition, *label, refute,
                             sub.typology, sub.duplicate_of, utc_timestamp(), sub.comment};
    append(res.record);
    return res;
  });
}

// ---------------------------------------------------------------------------
// tallies

enum class UniquePolicy {
  AnyDuplicate,    // unique = in no duplicate chain at all
  CrossAnnotator,  // unique = in no chain that includes another annotator
};

struct AnnotatorTally {
  std::size_t total = 0;   // refutations, excluding "not an error" records
  std::size_t unique = 0;
  bool operator==(const AnnotatorTally&) const = default;
};

struct ResultSummary {
  ConditionFilter condition;
  std::size_t records = 0;
  std::size_t total_labels = 0;  // denominator for percentages
  std::map<std::string, std::size_t> label_counts;
  std::map<std::string, double> label_fractions;
  std::size_t refutations = 0;
  double refutation_pct = 0;
  std::size_t refutation_chains = 0;  // distinct pairings with a counted refutation
  double dedup_refutation_pct = 0;
  std::size_t excluded = 0;
  std::map<std::string, AnnotatorTally> per_annotator;
  std::map<std::string, std::size_t> typology_counts;
  std::map<std::string, std::size_t> statements_by_summary_method;
};

namespace detail {

struct Chains {
  std::vector<std::size_t> parent;
  std::size_t find(std::size_t i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

// Latest record per (task_id, annotator_id); records without a task id are
// all kept. A duplicate_of link to a superseded record follows its
// replacement.
inline std::vector<LabelRecord> effective_records(const std::vector<LabelRecord>& all) {
  std::map<std::pair<std::string, std::string>, std::size_t> latest;
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (!all[i].task_id.empty()) latest[{all[i].task_id, all[i].annotator_id}] = i;
  }
  std::unordered_map<std::string, std::string> replaced_by;
  std::vector<LabelRecord> out;
  for (std::size_t i = 0; i < all.size(); ++i) {
    const auto& r = all[i];
    if (!r.task_id.empty()) {
      const auto keep = latest[{r.task_id, r.annotator_id}];
      if (keep != i) {
        replaced_by[r.record_id] = all[keep].record_id;
        continue;
      }
    }
    out.push_back(r);
  }
  for (auto& r : out) {
    if (r.duplicate_of) {
      if (auto it = replaced_by.find(*r.duplicate_of); it != replaced_by.end()) r.duplicate_of = it->second;
    }
  }
  return out;
}

}  // namespace detail

struct TallyOptions {
  UniquePolicy unique = UniquePolicy::AnyDuplicate;
};

inline ResultSummary tally(const StoreSnapshot& snap, const ConditionFilter& filter, const TallyOptions& opts = {}) {
  ResultSummary res;
  res.condition = filter;

  std::vector<LabelRecord> recs;
  for (auto& r : detail::effective_records(snap.records)) {
    if (filter.matches(r.condition)) recs.push_back(std::move(r));
  }
  res.records = recs.size();

  // denominators: declared conditions count pairings x annotators, anything
  // else counts the records present
  std::set<Condition> declared_conditions;
  for (const auto& d : snap.declared) {
    if (!filter.matches(d.condition)) continue;
    if (declared_conditions.insert(d.condition).second) res.total_labels += d.pairings * d.annotators.size();
    for (const auto& a : d.annotators) res.per_annotator.try_emplace(a);
  }
  for (const auto& r : recs) {
    if (!declared_conditions.count(r.condition)) ++res.total_labels;
  }

  for (const auto& r : recs) ++res.label_counts[to_string(r.label)];
  for (const auto& [l, c] : res.label_counts) {
    res.label_fractions[l] = static_cast<double>(c) / static_cast<double>(recs.size());
  }

  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < recs.size(); ++i) index[recs[i].record_id] = i;
  detail::Chains chains{std::vector<std::size_t>(recs.size())};
  std::iota(chains.parent.begin(), chains.parent.end(), 0);
  for (std::size_t i = 0; i < recs.size(); ++i) {
    if (!recs[i].duplicate_of) continue;
    if (auto it = index.find(*recs[i].duplicate_of); it != index.end()) chains.unite(i, it->second);
  }

  std::map<std::size_t, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < recs.size(); ++i) members[chains.find(i)].push_back(i);

  for (const auto& r : recs) {
    if (r.refute) ++res.refutations;
    if (r.refute && r.excluded_from_counts()) ++res.excluded;
  }

  for (std::size_t i = 0; i < recs.size(); ++i) {
    const auto& r = recs[i];
    auto& a = res.per_annotator[r.annotator_id];
    if (!r.refute || r.excluded_from_counts()) continue;
    ++a.total;
    const auto& chain = members[chains.find(i)];
    bool unique = chain.size() == 1;
    if (opts.unique == UniquePolicy::CrossAnnotator) {
      unique = std::none_of(chain.begin(), chain.end(), [&](std::size_t j) { return recs[j].annotator_id != r.annotator_id; });
    }
    if (unique) ++a.unique;
  }

  for (const auto& entry : members) {
    const auto& idx = entry.second;
    std::set<PrimaryCategory> primary;
    std::set<SecondaryCode> secondary;
    bool counted = false;
    for (auto i : idx) {
      const auto& r = recs[i];
      if (!r.refute || r.excluded_from_counts()) continue;
      counted = true;
      if (r.typology) {
        primary.insert(r.typology->primary.begin(), r.typology->primary.end());
        secondary.insert(r.typology->secondary.begin(), r.typology->secondary.end());
      }
    }
    if (!counted) continue;
    ++res.refutation_chains;
    // the chain's original (unlinked) record names the statement, whatever the input order
    auto rep = idx.front();
    auto rep_key = [&](std::size_t i) {
      const bool linked = recs[i].duplicate_of && index.count(*recs[i].duplicate_of);
      return std::make_pair(linked, std::cref(recs[i].record_id));
    };
    for (auto i : idx) {
      if (rep_key(i) < rep_key(rep)) rep = i;
    }
    ++res.statements_by_summary_method[to_string(recs[rep].condition.summary_method)];
    for (auto p : primary) ++res.typology_counts[json(p).get<std::string>()];
    for (auto s : secondary) ++res.typology_counts[json(s).get<std::string>()];
  }

  if (res.total_labels > 0) {
    res.refutation_pct = 100.0 * static_cast<double>(res.refutations) / static_cast<double>(res.total_labels);
    res.dedup_refutation_pct = 100.0 * static_cast<double>(res.refutation_chains) / static_cast<double>(res.total_labels);
  }
  return res;
}

inline ResultSummary tally(const LabelStore& store, const ConditionFilter& filter, const TallyOptions& opts = {}) {
  return tally(store.snapshot(), filter, opts);
}

// Deduplicated counts per primary category and secondary code.
inline std::map<std::string, std::size_t> typology_counts(const LabelStore& store, const ConditionFilter& filter) {
  return tally(store, filter).typology_counts;
}

// Every distinct condition present in the store, declared or recorded.
inline std::vector<Condition> conditions(const StoreSnapshot& snap) {
  std::set<Condition> out;
  for (const auto& d : snap.declared) out.insert(d.condition);
  for (const auto& r : snap.records) out.insert(r.condition);
  return {out.begin(), out.end()};
}

// ---------------------------------------------------------------------------
// json

inline void to_json(json& j, const Condition& c) {
  j = json{{"dataset", c.dataset}, {"summary_method", c.summary_method}, {"attribution_method", c.attribution_method},
           {"kind", c.kind}, {"cohort", c.cohort}};
}

inline void from_json(const json& j, Condition& c) {
  c.dataset = j.at("dataset").get<Dataset>();
  c.summary_method = j.at("summary_method").get<SummaryMethod>();
  c.attribution_method = j.at("attribution_method").get<AttributionMethod>();
  c.kind = j.at("kind").get<TaskKind>();
  c.cohort = j.value("cohort", "");
}

inline void to_json(json& j, const ConditionFilter& f) {
  j = json::object();
  if (f.dataset) j["dataset"] = *f.dataset;
  if (f.summary_method) j["summary_method"] = *f.summary_method;
  if (f.attribution_method) j["attribution_method"] = *f.attribution_method;
  if (f.kind) j["kind"] = *f.kind;
  if (f.cohort) j["cohort"] = *f.cohort;
}

inline void to_json(json& j, const TaskSentence& s) {
  j = json{{"ref", s.ref}, {"text", s.text}};
  if (s.rank) j["rank"] = s.rank;
  if (s.rank) j["score"] = s.score;
}

inline void from_json(const json& j, TaskSentence& s) {
  s.ref = j.at("ref").get<SentenceRef>();
  s.text = j.at("text").get<std::string>();
  s.rank = j.value("rank", std::size_t{0});
  s.score = j.value("score", 0.0);
}

inline void to_json(json& j, const TaskItem& t) {
  j = json{{"task_id", t.task_id},
           {"kind", t.kind},
           {"topic", t.topic_id},
           {"condition", t.condition},
           {"summary", t.summary_id},
           {"statement_ref", t.statement_ref},
           {"summary_statement", t.summary_statement},
           {"guideline_version", t.guideline_version},
           {"short_pool", t.short_pool}};
  if (t.kind == TaskKind::Single) {
    j["payload"] = json{{"prev", t.prev ? json(*t.prev) : json(nullptr)},
                        {"eval", t.eval ? json(*t.eval) : json(nullptr)},
                        {"next", t.next ? json(*t.next) : json(nullptr)}};
  } else {
    j["payload"] = json{{"candidates", t.candidates}};
  }
  j["labels"] = json::array();
  for (auto l : labels_for(t.kind)) j["labels"].push_back(l);
}

inline void from_json(const json& j, TaskItem& t) {
  t.task_id = j.at("task_id").get<std::string>();
  t.kind = j.at("kind").get<TaskKind>();
  t.topic_id = j.at("topic").get<std::string>();
  t.condition = j.at("condition").get<Condition>();
  t.summary_id = j.at("summary").get<std::string>();
  t.statement_ref = j.at("statement_ref").get<SentenceRef>();
  t.summary_statement = j.at("summary_statement").get<std::string>();
  t.guideline_version = j.value("guideline_version", "v1");
  t.short_pool = j.value("short_pool", false);
  const auto& p = j.at("payload");
  auto opt = [&](const char* k) -> std::optional<TaskSentence> {
    if (!p.contains(k) || p.at(k).is_null()) return std::nullopt;
    return p.at(k).get<TaskSentence>();
  };
  if (t.kind == TaskKind::Single) {
    t.prev = opt("prev");
    t.eval = opt("eval");
    t.next = opt("next");
  } else {
    t.candidates = p.at("candidates").get<std::vector<TaskSentence>>();
  }
}

inline void to_json(json& j, const Typology& t) {
  j = json{{"primary", json::array()}, {"secondary", json::array()}};
  for (auto p : t.primary) j["primary"].push_back(p);
  for (auto s : t.secondary) j["secondary"].push_back(s);
}

inline void to_json(json& j, const LabelRecord& r) {
  j = json{{"record_id", r.record_id}, {"task_id", r.task_id},     {"annotator_id", r.annotator_id},
           {"condition", r.condition}, {"label", r.label},          {"refute", r.refute},
           {"comment", r.comment},     {"submitted_at", r.submitted_at}};
  j["typology"] = r.typology ? json(*r.typology) : json(nullptr);
  j["duplicate_of"] = r.duplicate_of ? json(*r.duplicate_of) : json(nullptr);
  j["excluded_from_counts"] = r.excluded_from_counts();
}

inline void to_json(json& j, const AnnotatorTally& a) { j = json{{"total", a.total}, {"unique", a.unique}}; }

inline void to_json(json& j, const ResultSummary& r) {
  j = json{{"condition", r.condition},
           {"records", r.records},
           {"total_labels", r.total_labels},
           {"label_counts", r.label_counts},
           {"label_fractions", r.label_fractions},
           {"refutations", r.refutations},
           {"refutation_pct", r.refutation_pct},
           {"refutation_chains", r.refutation_chains},
           {"dedup_refutation_pct", r.dedup_refutation_pct},
           {"excluded", r.excluded},
           {"per_annotator", r.per_annotator},
           {"typology_counts", r.typology_counts},
           {"statements_by_summary_method", r.statements_by_summary_method}};
}

}  // namespace attrib
