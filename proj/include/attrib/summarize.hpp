#pragma once

// Abstractive, extractive and hybrid (extract-then-rewrite) summarization.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "attrib/corpus.hpp"
#include "attrib/error.hpp"
#include "attrib/text.hpp"

namespace attrib {

enum class SummaryMethod { Human, Abstractive, Extractive, Hybrid };

NLOHMANN_JSON_SERIALIZE_ENUM(SummaryMethod, {{SummaryMethod::Human, "Human"},
                                             {SummaryMethod::Abstractive, "Abstractive"},
                                             {SummaryMethod::Extractive, "Extractive"},
                                             {SummaryMethod::Hybrid, "Hybrid"}})

inline std::string to_string(SummaryMethod m) { return json(m).get<std::string>(); }

struct SummaryRecord {
  std::string summary_id;
  std::string topic_id;
  SummaryMethod method = SummaryMethod::Human;
  std::string text;
  std::vector<Sentence> sentences;  // segmentation of `text`, doc_id == summary_id
  std::optional<std::vector<SentenceRef>> extraction_provenance;
  bool empty_warning = false;  // extractor found nothing that fits the budget
};

inline std::string make_summary_id(const std::string& topic_id, SummaryMethod m, std::size_t n = 0) {
  auto id = topic_id + "/" + to_string(m);
  if (m == SummaryMethod::Human) id += "/" + std::to_string(n);
  return id;
}

inline SummaryRecord make_summary(std::string topic_id, SummaryMethod method, std::string text,
                                  const SegmenterOptions& seg = {}, std::size_t human_index = 0) {
  SummaryRecord r;
  r.summary_id = make_summary_id(topic_id, method, human_index);
  r.topic_id = std::move(topic_id);
  r.method = method;
  r.text = std::move(text);
  r.sentences = segment(Document::make(r.summary_id, Stream::Other, r.text), seg);
  return r;
}

// ---------------------------------------------------------------------------
// prompts

enum class TemplateId { AbstractiveV1, RewriteV1 };

struct PromptTemplate {
  TemplateId id;
  std::string_view body;  // exactly one "{text}" slot
};

inline constexpr std::string_view kTextSlot = "{text}";

inline constexpr PromptTemplate kAbstractiveV1{
    TemplateId::AbstractiveV1,
    "You are an abstractive summarizer that follows the output pattern:\n"
    "\n"
    "Text:\n"
    "{text}\n"
    "\n"
    "Summary:"};

inline constexpr PromptTemplate kRewriteV1{
    TemplateId::RewriteV1,
    "Please rewrite the following into a coherent and readable paragraph. Do not deviate from the facts "
    "of these sentences or add any new information. Follow the output pattern:\n"
    "\n"
    "Text:\n"
    "{text}\n"
    "\n"
    "Summary:"};

// SHA-256 of each template body; a change to either body is a behavior change.
inline constexpr std::string_view kAbstractiveV1Sha256 =
    "ef9496cb467a35e08411db53f3c0b2658be24fa5f77cba84e1e2bfc05d6c6b88";
inline constexpr std::string_view kRewriteV1Sha256 =
    "a5bf687db8f3137800ccd13d5502354eda42c6139b14652754bf3437ef4099ae";

inline std::string render(const PromptTemplate& t, std::string_view text) {
  if (text.empty()) throw SummarizeError("prompt text must be nonempty");
  const auto pos = t.body.find(kTextSlot);
  std::string out;
  out.reserve(t.body.size() + text.size());
  out.append(t.body.substr(0, pos));
  out.append(text);
  out.append(t.body.substr(pos + kTextSlot.size()));
  return out;
}

inline std::string render_abstractive_prompt(std::string_view text) { return render(kAbstractiveV1, text); }
inline std::string render_rewrite_prompt(std::string_view text) { return render(kRewriteV1, text); }

// Inverse of render: recovers the slot contents when `prompt` was produced
// from `t`, nullopt otherwise.
inline std::optional<std::string> strip_template(const PromptTemplate& t, std::string_view prompt) {
  const auto pos = t.body.find(kTextSlot);
  const auto head = t.body.substr(0, pos);
  const auto tail = t.body.substr(pos + kTextSlot.size());
  if (prompt.size() < head.size() + tail.size()) return std::nullopt;
  if (prompt.substr(0, head.size()) != head) return std::nullopt;
  if (prompt.substr(prompt.size() - tail.size()) != tail) return std::nullopt;
  return std::string(prompt.substr(head.size(), prompt.size() - head.size() - tail.size()));
}

// ---------------------------------------------------------------------------
// budgets

enum class BudgetMode { Percentile75, MedianReference, Fixed };

NLOHMANN_JSON_SERIALIZE_ENUM(BudgetMode, {{BudgetMode::Percentile75, "percentile75"},
                                          {BudgetMode::MedianReference, "median-reference"},
                                          {BudgetMode::Fixed, "fixed"}})

struct BudgetPolicy {
  BudgetMode mode = BudgetMode::Percentile75;
  std::optional<std::size_t> fixed_chars;
};

// Nearest-rank percentile: the ceil(p * n)-th smallest value (1-based).
inline std::size_t nearest_rank(std::vector<std::size_t> values, double p) {
  if (values.empty()) throw SummarizeError("nearest_rank of an empty list");
  std::sort(values.begin(), values.end());
  auto rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(values.size())));
  rank = std::clamp<std::size_t>(rank, 1, values.size());
  return values[rank - 1];
}

inline std::size_t compute_budget(const std::vector<std::size_t>& abstractive_lengths, const BudgetPolicy& policy,
                                  const std::optional<std::vector<std::size_t>>& reference_lengths = std::nullopt) {
  switch (policy.mode) {
    case BudgetMode::Percentile75:
      if (abstractive_lengths.empty()) throw SummarizeError("percentile budget needs abstractive lengths");
      return nearest_rank(abstractive_lengths, 0.75);
    case BudgetMode::MedianReference:
      if (!reference_lengths || reference_lengths->empty()) {
        throw SummarizeError("median-reference budget needs reference lengths");
      }
      return nearest_rank(*reference_lengths, 0.5);
    case BudgetMode::Fixed:
      if (!policy.fixed_chars || *policy.fixed_chars == 0) throw SummarizeError("fixed budget must be positive");
      return *policy.fixed_chars;
  }
  throw SummarizeError("unknown budget mode");
}

// ---------------------------------------------------------------------------
// extraction

// Weighted bigram coverage: each distinct word bigram is worth the number of
// distinct documents it occurs in.
class CoverageObjective {
 public:
  explicit CoverageObjective(std::span<const Sentence> sentences) {
    std::unordered_map<std::string, std::unordered_set<std::string>> docs_per_bigram;
    sentence_bigrams_.reserve(sentences.size());
    for (const auto& s : sentences) {
      auto grams = text::word_bigrams(s.text);
      std::sort(grams.begin(), grams.end());
      grams.erase(std::unique(grams.begin(), grams.end()), grams.end());
      std::vector<std::size_t> ids;
      for (auto& g : grams) {
        auto [it, inserted] = ids_.try_emplace(g, ids_.size());
        ids.push_back(it->second);
        docs_per_bigram[g].insert(s.doc_id);
      }
      sentence_bigrams_.push_back(std::move(ids));
    }
    weights_.resize(ids_.size());
    for (const auto& [g, id] : ids_) weights_[id] = static_cast<double>(docs_per_bigram[g].size());
  }

  double value(const std::vector<std::size_t>& selection) const {
    std::vector<char> covered(weights_.size(), 0);
    double v = 0;
    for (auto s : selection) {
      for (auto b : sentence_bigrams_[s]) {
        if (!covered[b]) {
          covered[b] = 1;
          v += weights_[b];
        }
      }
    }
    return v;
  }

  double gain(std::size_t s, const std::vector<char>& covered) const {
    double g = 0;
    for (auto b : sentence_bigrams_[s]) {
      if (!covered[b]) g += weights_[b];
    }
    return g;
  }

  void cover(std::size_t s, std::vector<char>& covered) const {
    for (auto b : sentence_bigrams_[s]) covered[b] = 1;
  }

  std::size_t bigram_count() const { return weights_.size(); }

 private:
  std::unordered_map<std::string, std::size_t> ids_;
  std::vector<std::vector<std::size_t>> sentence_bigrams_;
  std::vector<double> weights_;
};

struct Extraction {
  std::vector<std::size_t> selected;  // indices into the input, ascending
  double objective = 0;
  std::size_t length = 0;  // characters including single-space joins
};

inline std::size_t joined_length(std::span<const Sentence> sentences, const std::vector<std::size_t>& sel) {
  if (sel.empty()) return 0;
  std::size_t len = sel.size() - 1;
  for (auto i : sel) len += text::char_count(sentences[i].text);
  return len;
}

class Extractor {
 public:
  virtual ~Extractor() = default;
  virtual Extraction select(std::span<const Sentence> sentences, std::size_t budget_chars) const = 0;
};

// Budgeted maximum coverage by cost-scaled greedy selection, followed by a
// best-single-sentence check and 1-for-1 swap improvement. Never exceeds the
// budget.
class GreedyCoverageExtractor : public Extractor {
 public:
  explicit GreedyCoverageExtractor(std::size_t max_swap_passes = 4) : max_swap_passes_(max_swap_passes) {}

  Extraction select(std::span<const Sentence> sentences, std::size_t budget_chars) const override {
    if (budget_chars == 0) throw SummarizeError("budget_chars must be positive");
    const CoverageObjective obj(sentences);
    const auto n = sentences.size();
    std::vector<std::size_t> len(n);
    for (std::size_t i = 0; i < n; ++i) len[i] = text::char_count(sentences[i].text);

    std::vector<std::size_t> sel;
    std::vector<char> chosen(n, 0);
    std::vector<char> covered(obj.bigram_count(), 0);
    std::size_t used = 0;
    for (;;) {
      std::optional<std::size_t> best;
      double best_ratio = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (chosen[i] || len[i] == 0) continue;
        const auto extra = len[i] + (sel.empty() ? 0 : 1);
        if (used + extra > budget_chars) continue;
        const double ratio = obj.gain(i, covered) / static_cast<double>(len[i]);
        if (ratio > best_ratio) {
          best_ratio = ratio;
          best = i;
        }
      }
      if (!best) break;
      used += len[*best] + (sel.empty() ? 0 : 1);
      chosen[*best] = 1;
      obj.cover(*best, covered);
      sel.push_back(*best);
    }

    // A lone high-value sentence can beat the ratio-driven selection.
    double value = obj.value(sel);
    for (std::size_t i = 0; i < n; ++i) {
      if (len[i] == 0 || len[i] > budget_chars) continue;
      const double v = obj.value({i});
      if (v > value) {
        value = v;
        sel = {i};
      }
    }
    // A sentence of zero coverage value still fills an otherwise empty extract.
    if (sel.empty()) {
      for (std::size_t i = 0; i < n; ++i) {
        if (len[i] > 0 && len[i] <= budget_chars) {
          sel = {i};
          break;
        }
      }
    }

    improve_by_swaps(sentences, obj, budget_chars, sel, value);
    std::sort(sel.begin(), sel.end());
    return {sel, obj.value(sel), joined_length(sentences, sel)};
  }

 private:
  void improve_by_swaps(std::span<const Sentence> sentences, const CoverageObjective& obj, std::size_t budget,
                        std::vector<std::size_t>& sel, double& value) const {
    const auto n = sentences.size();
    for (std::size_t pass = 0; pass < max_swap_passes_; ++pass) {
      bool improved = false;
      for (std::size_t a = 0; a < sel.size(); ++a) {
        for (std::size_t t = 0; t < n; ++t) {
          if (std::find(sel.begin(), sel.end(), t) != sel.end()) continue;
          auto trial = sel;
          trial[a] = t;
          if (joined_length(sentences, trial) > budget) continue;
          const double v = obj.value(trial);
          if (v > value + 1e-12) {
            sel = std::move(trial);
            value = v;
            improved = true;
          }
        }
      }
      if (!improved) break;
    }
  }

  std::size_t max_swap_passes_;
};

inline SummaryRecord build_extractive_record(const std::string& topic_id, std::span<const Sentence> sentences,
                                             const Extraction& ex, const SegmenterOptions& seg = {}) {
  std::vector<std::string> parts;
  std::vector<SentenceRef> prov;
  for (auto i : ex.selected) {
    parts.push_back(sentences[i].text);
    prov.push_back(sentences[i].ref());
  }
  auto rec = make_summary(topic_id, SummaryMethod::Extractive, text::join(parts, " "), seg);
  rec.extraction_provenance = std::move(prov);
  rec.empty_warning = ex.selected.empty();
  return rec;
}

inline SummaryRecord extract_summary(const std::string& topic_id, std::span<const Sentence> sentences,
                                     std::size_t budget_chars, const Extractor& extractor = GreedyCoverageExtractor{},
                                     const SegmenterOptions& seg = {}) {
  return build_extractive_record(topic_id, sentences, extractor.select(sentences, budget_chars), seg);
}

// ---------------------------------------------------------------------------
// providers and transcripts

struct GenerationTranscript {
  std::string prompt_hash;
  std::string prompt;
  std::string completion;
  std::string provider_id;
  std::string recorded_at;  // ISO-8601 UTC
};

inline void to_json(json& j, const GenerationTranscript& t) {
  j = json{{"prompt_hash", t.prompt_hash}, {"prompt", t.prompt}, {"completion", t.completion},
           {"provider_id", t.provider_id}, {"recorded_at", t.recorded_at}};
}

inline void from_json(const json& j, GenerationTranscript& t) {
  t.prompt_hash = j.at("prompt_hash").get<std::string>();
  t.prompt = j.at("prompt").get<std::string>();
  t.completion = j.at("completion").get<std::string>();
  t.provider_id = j.at("provider_id").get<std::string>();
  t.recorded_at = j.at("recorded_at").get<std::string>();
}

inline std::string prompt_hash(std::string_view prompt) { return text::sha256_hex(prompt); }

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

class ParaphraseProvider {
 public:
  virtual ~ParaphraseProvider() = default;
  virtual std::string id() const = 0;
  // Throws on failure. Implementations are safe to call from several threads.
  virtual std::string generate(const std::string& prompt) = 0;
};

// Returns the slot contents of whichever known template the prompt was
// rendered from, so summaries equal their inputs.
class IdentityProvider : public ParaphraseProvider {
 public:
  std::string id() const override { return "mock-identity"; }
  std::string generate(const std::string& prompt) override {
    calls_.fetch_add(1);
    for (const auto* t : {&kAbstractiveV1, &kRewriteV1}) {
      if (auto s = strip_template(*t, prompt)) return *s;
    }
    return prompt;
  }
  std::size_t calls() const { return calls_.load(); }

 private:
  std::atomic<std::size_t> calls_{0};
};

// Append-only JSON-lines log of generations keyed by prompt hash. Writes are
// serialized; the first record for a hash wins on lookup.
class TranscriptStore {
 public:
  TranscriptStore() = default;
  explicit TranscriptStore(std::filesystem::path path) : path_(std::move(path)) {
    std::ifstream in(*path_);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      try {
        add(json::parse(line).get<GenerationTranscript>());
      } catch (const json::exception& e) {
        throw SummarizeError("transcripts " + path_->string() + ":" + std::to_string(lineno) + ": " + e.what());
      }
    }
  }

  std::optional<GenerationTranscript> find(const std::string& hash) const {
    std::lock_guard lock(mu_);
    auto it = by_hash_.find(hash);
    if (it == by_hash_.end()) return std::nullopt;
    return records_[it->second];
  }

  void append(const GenerationTranscript& t) {
    std::lock_guard lock(mu_);
    if (t.prompt_hash != prompt_hash(t.prompt)) throw SummarizeError("transcript hash does not match prompt");
    if (path_) {
      std::ofstream out(*path_, std::ios::app | std::ios::binary);
      if (!out) throw SummarizeError("cannot append to " + path_->string());
      out << json(t).dump() << '\n';
    }
    add_locked(t);
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return records_.size();
  }

 private:
  void add(GenerationTranscript t) {
    std::lock_guard lock(mu_);
    add_locked(std::move(t));
  }
  void add_locked(GenerationTranscript t) {
    by_hash_.try_emplace(t.prompt_hash, records_.size());
    records_.push_back(std::move(t));
  }

  std::optional<std::filesystem::path> path_;
  mutable std::mutex mu_;
  std::vector<GenerationTranscript> records_;
  std::unordered_map<std::string, std::size_t> by_hash_;
};

// Serves completions only from recorded transcripts.
class ReplayProvider : public ParaphraseProvider {
 public:
  explicit ReplayProvider(std::shared_ptr<const TranscriptStore> store) : store_(std::move(store)) {}
  std::string id() const override { return "replay"; }
  std::string generate(const std::string& prompt) override {
    const auto h = prompt_hash(prompt);
    if (auto t = store_->find(h)) return t->completion;
    throw ProviderError("no recorded transcript for prompt", h);
  }

 private:
  std::shared_ptr<const TranscriptStore> store_;
};

struct RetryPolicy {
  std::size_t max_attempts = 3;
  std::chrono::milliseconds initial_backoff{200};
  double multiplier = 2.0;
};

inline std::string generate_with_retry(ParaphraseProvider& provider, const std::string& prompt,
                                       const RetryPolicy& retry = {}) {
  auto backoff = retry.initial_backoff;
  std::string last_error;
  for (std::size_t attempt = 1; attempt <= std::max<std::size_t>(1, retry.max_attempts); ++attempt) {
    try {
      return provider.generate(prompt);
    } catch (const ProviderError&) {
      throw;  // already carries its own diagnosis, e.g. replay miss
    } catch (const std::exception& e) {
      last_error = e.what();
    }
    if (attempt < retry.max_attempts) {
      std::this_thread::sleep_for(backoff);
      backoff = std::chrono::milliseconds(static_cast<long long>(static_cast<double>(backoff.count()) * retry.multiplier));
    }
  }
  throw ProviderError(provider.id() + " failed: " + last_error, prompt_hash(prompt));
}

// Consults the transcript log first; on a miss calls the provider and records
// the result.
inline std::string cached_generate(ParaphraseProvider& provider, const std::string& prompt, TranscriptStore* store,
                                   const RetryPolicy& retry = {}) {
  const auto hash = prompt_hash(prompt);
  if (store) {
    if (auto t = store->find(hash)) return t->completion;
  }
  auto completion = generate_with_retry(provider, prompt, retry);
  if (store) store->append({hash, prompt, completion, provider.id(), utc_timestamp()});
  return completion;
}

// ---------------------------------------------------------------------------
// pipelines

struct GenerationContext {
  ParaphraseProvider& provider;
  TranscriptStore* transcripts = nullptr;
  RetryPolicy retry{};
  SegmenterOptions segmenter{};
};

inline SummaryRecord hybrid_summarize(const SegmentedTopic& topic, std::size_t budget_chars, GenerationContext ctx,
                                      const Extractor& extractor = GreedyCoverageExtractor{}) {
  const auto sentences = topic.all_sentences();
  const auto extract = extract_summary(topic.topic.topic_id, sentences, budget_chars, extractor, ctx.segmenter);
  if (extract.text.empty()) throw SummarizeError("extract for topic '" + topic.topic.topic_id + "' is empty");
  const auto completion = cached_generate(ctx.provider, render_rewrite_prompt(extract.text), ctx.transcripts, ctx.retry);
  auto rec = make_summary(topic.topic.topic_id, SummaryMethod::Hybrid, completion, ctx.segmenter);
  rec.extraction_provenance = extract.extraction_provenance;
  return rec;
}

struct AbstractiveOptions {
  std::size_t token_budget = 14000;       // whitespace tokens of selected documents
  std::size_t max_prompt_tokens = 16000;  // provider input limit
  std::string document_separator = "\n\n";
};

inline std::string abstractive_input(const Topic& topic, const AbstractiveOptions& opts = {}) {
  const auto docs = select_for_budgeted_input(topic.documents, opts.token_budget);
  std::vector<std::string> parts;
  for (const auto& d : docs) parts.push_back(d.text);
  return text::join(parts, opts.document_separator);
}

inline SummaryRecord abstractive_summarize(const Topic& topic, GenerationContext ctx, const AbstractiveOptions& opts = {}) {
  const auto input = abstractive_input(topic, opts);
  if (input.empty()) throw SummarizeError("no document of topic '" + topic.topic_id + "' fits the token budget");
  const auto prompt = render_abstractive_prompt(input);
  if (text::whitespace_token_count(prompt) > opts.max_prompt_tokens) {
    throw SummarizeError("prompt for topic '" + topic.topic_id + "' exceeds the provider input limit");
  }
  return make_summary(topic.topic_id, SummaryMethod::Abstractive, cached_generate(ctx.provider, prompt, ctx.transcripts, ctx.retry),
                      ctx.segmenter);
}

inline std::vector<SummaryRecord> human_summaries(const Topic& topic, const SegmenterOptions& seg = {}) {
  std::vector<SummaryRecord> out;
  for (std::size_t i = 0; i < topic.reference_summaries.size(); ++i) {
    out.push_back(make_summary(topic.topic_id, SummaryMethod::Human, topic.reference_summaries[i], seg, i));
  }
  return out;
}

// ---------------------------------------------------------------------------
// json

inline void to_json(json& j, const SummaryRecord& r) {
  j = json{{"id", r.summary_id}, {"topic", r.topic_id}, {"method", r.method}, {"text", r.text},
           {"sentences", r.sentences}, {"empty_warning", r.empty_warning}};
  j["provenance"] = r.extraction_provenance ? json(*r.extraction_provenance) : json(nullptr);
}

inline void from_json(const json& j, SummaryRecord& r) {
  r.summary_id = j.at("id").get<std::string>();
  r.topic_id = j.at("topic").get<std::string>();
  r.method = j.at("method").get<SummaryMethod>();
  r.text = j.at("text").get<std::string>();
  r.sentences = j.at("sentences").get<std::vector<Sentence>>();
  r.empty_warning = j.value("empty_warning", false);
  r.extraction_provenance.reset();
  if (j.contains("provenance") && !j.at("provenance").is_null()) {
    r.extraction_provenance = j.at("provenance").get<std::vector<SentenceRef>>();
  }
}

}  // namespace attrib
