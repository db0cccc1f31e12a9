#pragma once

// Sentence-level attribution: pairwise scoring of summary sentences against
// source sentences, top-k ranking, context windows, zero-shot SummaC scoring
// and the neutrality-ordered document reduction experiment.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "attrib/corpus.hpp"
#include "attrib/error.hpp"
#include "attrib/summarize.hpp"
#include "attrib/text.hpp"

namespace attrib {

enum class AttributionMethod { NLI, Embedding };

NLOHMANN_JSON_SERIALIZE_ENUM(AttributionMethod, {{AttributionMethod::NLI, "NLI"}, {AttributionMethod::Embedding, "Embedding"}})

inline std::string to_string(AttributionMethod m) { return json(m).get<std::string>(); }

struct EmbeddingVector {
  std::vector<double> values;
  std::size_t dim() const { return values.size(); }
};

struct NliProbs {
  double entail = 0;
  double neutral = 1;
  double contradict = 0;

  bool valid(double tol = 1e-6) const {
    auto in01 = [](double v) { return v >= 0.0 && v <= 1.0; };
    return in01(entail) && in01(neutral) && in01(contradict) && std::abs(entail + neutral + contradict - 1.0) <= tol;
  }
};

struct NliPair {
  std::string premise;     // document sentence
  std::string hypothesis;  // summary sentence
};

// Scales to unit L2 norm. A zero vector stays zero.
inline void normalize(EmbeddingVector& v) {
  double n2 = 0;
  for (double x : v.values) n2 += x * x;
  if (n2 <= 0) return;
  const double inv = 1.0 / std::sqrt(n2);
  for (double& x : v.values) x *= inv;
}

inline double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dim() != b.dim()) throw ScorerError("embedding dimension mismatch", false);
  double dot = 0;
  for (std::size_t i = 0; i < a.dim(); ++i) dot += a.values[i] * b.values[i];
  return std::clamp(dot, -1.0, 1.0);
}

class Scorer {
 public:
  virtual ~Scorer() = default;
  // Unit-norm embeddings, one per input, in input order.
  virtual std::vector<EmbeddingVector> embed(std::span<const std::string> texts) = 0;
  virtual std::vector<NliProbs> nli(std::span<const NliPair> pairs) = 0;
  virtual std::vector<std::string> model_ids() const = 0;
  // Whether embed/nli may be called from several threads at once.
  virtual bool concurrent() const { return false; }
};

// Deterministic offline scorer. Embeddings are hashed character-trigram
// counts; NLI entailment is the fraction of hypothesis bigrams contained in
// the premise.
class LexicalScorer : public Scorer {
 public:
  static constexpr std::size_t kDim = 512;
  static constexpr std::uint64_t kSeed = 0x9e3779b97f4a7c15ULL;

  std::vector<EmbeddingVector> embed(std::span<const std::string> texts) override {
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(embed_one(t));
    return out;
  }

  std::vector<NliProbs> nli(std::span<const NliPair> pairs) override {
    std::vector<NliProbs> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) out.push_back(nli_one(p.premise, p.hypothesis));
    return out;
  }

  std::vector<std::string> model_ids() const override { return {"lexical-nli-v1", "lexical-trigram-512-v1"}; }
  bool concurrent() const override { return true; }

  static EmbeddingVector embed_one(std::string_view s) {
    EmbeddingVector v{std::vector<double>(kDim, 0.0)};
    std::u32string u;
    for (char32_t c : text::decode_utf8(text::normalize_whitespace(s))) u.push_back(text::to_lower(c));
    if (u.empty()) return v;
    const std::size_t width = std::min<std::size_t>(3, u.size());
    for (std::size_t i = 0; i + width <= u.size(); ++i) {
      const auto gram = text::encode_utf8(u.substr(i, width));
      v.values[text::fnv1a64(gram, kSeed) % kDim] += 1.0;
    }
    normalize(v);
    return v;
  }

  static NliProbs nli_one(std::string_view premise, std::string_view hypothesis) {
    // single-token hypotheses fall back to token containment
    auto hyp_units = text::word_bigrams(hypothesis);
    const bool use_bigrams = !hyp_units.empty();
    if (!use_bigrams) hyp_units = text::word_tokens(hypothesis);
    const std::unordered_set<std::string> hyp(hyp_units.begin(), hyp_units.end());
    if (hyp.empty()) return {0.0, 1.0, 0.0};
    const auto prem_units = use_bigrams ? text::word_bigrams(premise) : text::word_tokens(premise);
    const std::unordered_set<std::string> prem(prem_units.begin(), prem_units.end());
    std::size_t hit = 0;
    for (const auto& g : hyp) hit += prem.count(g);
    const double entail = static_cast<double>(hit) / static_cast<double>(hyp.size());
    return {entail, 1.0 - entail, 0.0};
  }
};

// ---------------------------------------------------------------------------
// score matrix

struct ScoreMatrix {
  AttributionMethod method = AttributionMethod::Embedding;
  std::vector<SentenceRef> summary_sentences;  // rows
  std::vector<SentenceRef> doc_sentences;      // columns
  std::vector<double> cosine;                  // row-major, Embedding only
  std::vector<NliProbs> probs;                 // row-major, NLI only

  std::size_t rows() const { return summary_sentences.size(); }
  std::size_t cols() const { return doc_sentences.size(); }

  // Ranking key: cosine for embeddings, entailment for NLI.
  double key(std::size_t r, std::size_t c) const {
    return method == AttributionMethod::NLI ? probs[r * cols() + c].entail : cosine[r * cols() + c];
  }
  const NliProbs& nli_at(std::size_t r, std::size_t c) const { return probs[r * cols() + c]; }

  std::vector<double> row(std::size_t r) const {
    std::vector<double> out(cols());
    for (std::size_t c = 0; c < cols(); ++c) out[c] = key(r, c);
    return out;
  }

  std::vector<NliProbs> nli_column(std::size_t c) const {
    std::vector<NliProbs> out(rows());
    for (std::size_t r = 0; r < rows(); ++r) out[r] = nli_at(r, c);
    return out;
  }

  // Copy keeping only the listed columns, in the given order.
  ScoreMatrix select_columns(const std::vector<std::size_t>& keep) const {
    ScoreMatrix m{method, summary_sentences, {}, {}, {}};
    for (auto c : keep) m.doc_sentences.push_back(doc_sentences[c]);
    for (std::size_t r = 0; r < rows(); ++r) {
      for (auto c : keep) {
        if (method == AttributionMethod::NLI) {
          m.probs.push_back(nli_at(r, c));
        } else {
          m.cosine.push_back(cosine[r * cols() + c]);
        }
      }
    }
    return m;
  }
};

struct ScoringOptions {
  std::size_t batch_size = 64;
};

inline ScoreMatrix score_matrix(std::span<const Sentence> summary_sentences, std::span<const Sentence> pool,
                                Scorer& scorer, AttributionMethod method, const ScoringOptions& opts = {}) {
  if (pool.empty()) throw AttributionError("candidate pool is empty");
  const std::size_t batch = std::max<std::size_t>(1, opts.batch_size);
  ScoreMatrix m;
  m.method = method;
  for (const auto& s : summary_sentences) m.summary_sentences.push_back(s.ref());
  for (const auto& s : pool) m.doc_sentences.push_back(s.ref());

  if (method == AttributionMethod::Embedding) {
    std::vector<std::string> texts;
    for (const auto& s : summary_sentences) texts.push_back(s.text);
    for (const auto& s : pool) texts.push_back(s.text);
    std::vector<EmbeddingVector> vecs;
    for (std::size_t i = 0; i < texts.size(); i += batch) {
      const auto n = std::min(batch, texts.size() - i);
      auto part = scorer.embed(std::span<const std::string>(texts).subspan(i, n));
      if (part.size() != n) throw ScorerError("scorer returned a short embedding batch", true);
      for (auto& v : part) {
        if (!vecs.empty() && v.dim() != vecs.front().dim()) {
          throw ScorerError("embedding dimension mismatch between batches", false);
        }
        vecs.push_back(std::move(v));
      }
    }
    const auto rows = summary_sentences.size();
    m.cosine.reserve(rows * pool.size());
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < pool.size(); ++c) m.cosine.push_back(cosine(vecs[r], vecs[rows + c]));
    }
  } else {
    std::vector<NliPair> pairs;
    pairs.reserve(summary_sentences.size() * pool.size());
    for (const auto& s : summary_sentences) {
      for (const auto& d : pool) pairs.push_back({d.text, s.text});
    }
    m.probs.reserve(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); i += batch) {
      const auto n = std::min(batch, pairs.size() - i);
      auto part = scorer.nli(std::span<const NliPair>(pairs).subspan(i, n));
      if (part.size() != n) throw ScorerError("scorer returned a short NLI batch", true);
      m.probs.insert(m.probs.end(), part.begin(), part.end());
    }
  }
  return m;
}

inline ScoreMatrix score_matrix(const SummaryRecord& summary, std::span<const Sentence> pool, Scorer& scorer,
                                AttributionMethod method, const ScoringOptions& opts = {}) {
  return score_matrix(summary.sentences, pool, scorer, method, opts);
}

// ---------------------------------------------------------------------------
// ranking

struct Candidate {
  std::size_t column = 0;  // position in the candidate pool
  double score = 0;
  std::size_t rank = 0;  // 1-based
};

struct TopK {
  std::vector<Candidate> candidates;
  bool short_pool = false;  // fewer than k candidates were available
};

// Highest scores first; equal scores keep pool order (document order, then
// sentence index, because pools are built in that order). NaN ranks last.
inline TopK rank_topk(std::span<const double> row, std::size_t k) {
  if (k == 0) throw AttributionError("k must be at least 1");
  std::vector<std::size_t> idx(row.size());
  std::iota(idx.begin(), idx.end(), 0);
  auto score = [&](std::size_t i) { return std::isnan(row[i]) ? -std::numeric_limits<double>::infinity() : row[i]; };
  const auto take = std::min(k, row.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(take), idx.end(),
                    [&](std::size_t a, std::size_t b) {
                      const double sa = score(a), sb = score(b);
                      if (sa != sb) return sa > sb;
                      return a < b;
                    });
  TopK out;
  out.short_pool = k > row.size();
  for (std::size_t r = 0; r < take; ++r) out.candidates.push_back({idx[r], row[idx[r]], r + 1});
  return out;
}

// ---------------------------------------------------------------------------
// pools and context

struct ContextWindow {
  std::optional<SentenceRef> prev;
  SentenceRef eval;
  std::optional<SentenceRef> next;
};

inline ContextWindow context_window(const SentenceRef& s, const SegmentedTopic& corpus) {
  const auto* doc = corpus.document_sentences(s.doc_id);
  if (!doc || s.index >= doc->size()) throw AttributionError("dangling sentence ref " + to_string(s));
  ContextWindow w{std::nullopt, s, std::nullopt};
  if (s.index > 0) w.prev = SentenceRef{s.doc_id, s.index - 1};
  if (s.index + 1 < doc->size()) w.next = SentenceRef{s.doc_id, s.index + 1};
  return w;
}

// Summaries built from an extract attribute against the extract's own
// sentences; everything else attributes against the whole topic.
inline std::vector<Sentence> candidate_pool(const SummaryRecord& summary, const SegmentedTopic& topic) {
  if (summary.method == SummaryMethod::Hybrid || summary.method == SummaryMethod::Extractive) {
    if (!summary.extraction_provenance) {
      throw AttributionError("summary '" + summary.summary_id + "' has no extraction provenance");
    }
    std::vector<Sentence> pool;
    for (const auto& ref : *summary.extraction_provenance) {
      const auto* s = topic.find(ref);
      if (!s) throw AttributionError("provenance ref " + to_string(ref) + " does not resolve");
      pool.push_back(*s);
    }
    return pool;
  }
  return topic.all_sentences();
}

struct AttributionCandidate {
  SentenceRef ref;
  double score = 0;
  std::size_t rank = 0;
};

struct AttributionSet {
  std::string summary_id;
  SummaryMethod summary_method = SummaryMethod::Human;
  SentenceRef summary_sentence;
  std::string statement;
  AttributionMethod method = AttributionMethod::Embedding;
  std::vector<AttributionCandidate> candidates;
  bool short_pool = false;
};

inline std::vector<AttributionSet> attribution_sets(const SummaryRecord& summary, const ScoreMatrix& m, std::size_t k) {
  std::vector<AttributionSet> out;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto row = m.row(r);
    const auto top = rank_topk(row, k);
    AttributionSet set{summary.summary_id, summary.method, m.summary_sentences[r], summary.sentences[r].text, m.method, {},
                       top.short_pool};
    for (const auto& c : top.candidates) set.candidates.push_back({m.doc_sentences[c.column], c.score, c.rank});
    out.push_back(std::move(set));
  }
  return out;
}

inline std::vector<AttributionSet> attribute(const SummaryRecord& summary, const SegmentedTopic& topic, Scorer& scorer,
                                             AttributionMethod method, std::size_t k = 3,
                                             const ScoringOptions& opts = {}) {
  const auto pool = candidate_pool(summary, topic);
  return attribution_sets(summary, score_matrix(summary, pool, scorer, method, opts), k);
}

// ---------------------------------------------------------------------------
// SummaC and reduction

// Zero-shot SummaC: for each summary sentence the best entailment over the
// pool, averaged over summary sentences.
inline double summac_score(const ScoreMatrix& m) {
  if (m.method != AttributionMethod::NLI) throw AttributionError("summac_score needs an NLI matrix");
  if (m.rows() == 0 || m.cols() == 0) throw AttributionError("summac_score of an empty matrix");
  double total = 0;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    double best = 0;
    for (std::size_t c = 0; c < m.cols(); ++c) best = std::max(best, m.nli_at(r, c).entail);
    total += best;
  }
  return total / static_cast<double>(m.rows());
}

enum class NeutralityAggregator { Mean, Min, Max };

NLOHMANN_JSON_SERIALIZE_ENUM(NeutralityAggregator,
                             {{NeutralityAggregator::Mean, "mean"}, {NeutralityAggregator::Min, "min"}, {NeutralityAggregator::Max, "max"}})

inline double neutrality(std::span<const NliProbs> column, NeutralityAggregator agg = NeutralityAggregator::Mean) {
  if (column.empty()) throw AttributionError("neutrality of an empty column");
  switch (agg) {
    case NeutralityAggregator::Min: {
      double v = column[0].neutral;
      for (const auto& p : column) v = std::min(v, p.neutral);
      return v;
    }
    case NeutralityAggregator::Max: {
      double v = column[0].neutral;
      for (const auto& p : column) v = std::max(v, p.neutral);
      return v;
    }
    case NeutralityAggregator::Mean:
      break;
  }
  double sum = 0;
  for (const auto& p : column) sum += p.neutral;
  return sum / static_cast<double>(column.size());
}

enum class ReductionOrder { Adaptive, Frozen };

struct ReductionStep {
  SentenceRef removed;
  double neutrality = 0;
  double summac_after = 0;
};

struct ReductionTrajectory {
  double initial_score = 0;
  std::vector<ReductionStep> steps;
  // 1-based index of the first step whose score differs from the initial
  // score by more than epsilon; 0 when no step does.
  std::size_t influential_count = 0;
  bool failed = false;
  std::string failure;

  // Removals from the first score change to the end: the sentences that
  // carried the score.
  std::size_t trailing_influential() const {
    return influential_count == 0 ? 0 : steps.size() - influential_count + 1;
  }
};

struct ReductionOptions {
  double epsilon = 1e-4;
  ReductionOrder order = ReductionOrder::Adaptive;
  NeutralityAggregator aggregator = NeutralityAggregator::Mean;
  ScoringOptions scoring{};
};

namespace detail {

inline std::size_t most_neutral(const ScoreMatrix& m, NeutralityAggregator agg, double& value) {
  std::size_t best = 0;
  value = -1;
  for (std::size_t c = 0; c < m.cols(); ++c) {
    const auto col = m.nli_column(c);
    const double v = neutrality(col, agg);
    if (v > value) {
      value = v;
      best = c;
    }
  }
  return best;
}

inline void finish(ReductionTrajectory& t, double epsilon) {
  t.influential_count = 0;
  for (std::size_t i = 0; i < t.steps.size(); ++i) {
    if (std::abs(t.steps[i].summac_after - t.initial_score) > epsilon) {
      t.influential_count = i + 1;
      break;
    }
  }
}

}  // namespace detail

// Removes the most neutral remaining pool column one at a time from a fixed
// matrix. An empty pool scores 0.
inline ReductionTrajectory reduce_matrix(const ScoreMatrix& m, const ReductionOptions& opts = {}) {
  if (m.method != AttributionMethod::NLI) throw AttributionError("reduction needs an NLI matrix");
  if (m.cols() == 0) throw AttributionError("reduction needs at least one pool sentence");
  ReductionTrajectory t;
  t.initial_score = summac_score(m);
  std::vector<std::size_t> remaining(m.cols());
  std::iota(remaining.begin(), remaining.end(), 0);
  if (opts.order == ReductionOrder::Frozen) {
    std::vector<double> neut(m.cols());
    for (std::size_t c = 0; c < m.cols(); ++c) neut[c] = neutrality(m.nli_column(c), opts.aggregator);
    std::stable_sort(remaining.begin(), remaining.end(), [&](std::size_t a, std::size_t b) { return neut[a] > neut[b]; });
    for (std::size_t i = 0; i < remaining.size(); ++i) {
      std::vector<std::size_t> rest(remaining.begin() + static_cast<std::ptrdiff_t>(i) + 1, remaining.end());
      std::sort(rest.begin(), rest.end());
      const double after = rest.empty() ? 0.0 : summac_score(m.select_columns(rest));
      t.steps.push_back({m.doc_sentences[remaining[i]], neut[remaining[i]], after});
    }
  } else {
    auto cur = m;
    while (cur.cols() > 0) {
      double v = 0;
      const auto drop = detail::most_neutral(cur, opts.aggregator, v);
      const auto removed = cur.doc_sentences[drop];
      std::vector<std::size_t> keep;
      for (std::size_t c = 0; c < cur.cols(); ++c) {
        if (c != drop) keep.push_back(c);
      }
      cur = cur.select_columns(keep);
      t.steps.push_back({removed, v, cur.cols() ? summac_score(cur) : 0.0});
    }
  }
  detail::finish(t, opts.epsilon);
  return t;
}

// Scorer-driven reduction. In adaptive order the remaining pool is rescored
// after every removal and neutrality is recomputed from the fresh matrix. A
// scorer failure ends the run early with `failed` set.
inline ReductionTrajectory reduction_experiment(std::span<const Sentence> pool, std::span<const Sentence> summary_sentences,
                                                Scorer& scorer, const ReductionOptions& opts = {}) {
  if (pool.empty()) throw AttributionError("reduction needs at least one pool sentence");
  const auto initial = score_matrix(summary_sentences, pool, scorer, AttributionMethod::NLI, opts.scoring);
  if (opts.order == ReductionOrder::Frozen) return reduce_matrix(initial, opts);

  ReductionTrajectory t;
  t.initial_score = summac_score(initial);
  std::vector<Sentence> remaining(pool.begin(), pool.end());
  auto cur = initial;
  while (!remaining.empty()) {
    double v = 0;
    const auto drop = detail::most_neutral(cur, opts.aggregator, v);
    const auto removed = remaining[drop].ref();
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(drop));
    double after = 0;
    if (!remaining.empty()) {
      try {
        cur = score_matrix(summary_sentences, remaining, scorer, AttributionMethod::NLI, opts.scoring);
      } catch (const std::exception& e) {
        t.failed = true;
        t.failure = e.what();
        break;
      }
      after = summac_score(cur);
    }
    t.steps.push_back({removed, v, after});
  }
  detail::finish(t, opts.epsilon);
  return t;
}

// ---------------------------------------------------------------------------
// persistence
//
//   #scorematrix v1
//   method NLI|Embedding
//   rows R
//   cols C
//   row <doc_id>\t<index>        (R lines)
//   col <doc_id>\t<index>        (C lines)
//   values
//   R lines of C tab-separated cells; an NLI cell is "e n c"

namespace detail {

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

inline std::string write_matrix(const ScoreMatrix& m) {
  std::ostringstream out;
  out << "#scorematrix v1\nmethod " << to_string(m.method) << "\nrows " << m.rows() << "\ncols " << m.cols() << "\n";
  for (const auto& r : m.summary_sentences) out << "row " << r.doc_id << '\t' << r.index << '\n';
  for (const auto& r : m.doc_sentences) out << "col " << r.doc_id << '\t' << r.index << '\n';
  out << "values\n";
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      if (c) out << '\t';
      if (m.method == AttributionMethod::NLI) {
        const auto& p = m.nli_at(r, c);
        out << detail::fmt_double(p.entail) << ' ' << detail::fmt_double(p.neutral) << ' ' << detail::fmt_double(p.contradict);
      } else {
        out << detail::fmt_double(m.cosine[r * m.cols() + c]);
      }
    }
    out << '\n';
  }
  return out.str();
}

inline ScoreMatrix read_matrix(const std::string& data) {
  std::istringstream in(data);
  std::string line;
  auto fail = [](const std::string& why) -> ScoreMatrix { throw AttributionError("malformed score matrix: " + why); };
  if (!std::getline(in, line) || line != "#scorematrix v1") return fail("missing header");
  ScoreMatrix m;
  std::size_t rows = 0, cols = 0;
  auto expect = [&](const std::string& key) {
    if (!std::getline(in, line) || line.rfind(key + " ", 0) != 0) fail("expected '" + key + "'");
    return line.substr(key.size() + 1);
  };
  const auto method = parse_enum<AttributionMethod>(expect("method"));
  if (!method) return fail("unknown method");
  m.method = *method;
  rows = std::stoul(expect("rows"));
  cols = std::stoul(expect("cols"));
  auto ref = [&](const std::string& key) {
    const auto v = expect(key);
    const auto tab = v.rfind('\t');
    if (tab == std::string::npos) fail("bad ref line");
    return SentenceRef{v.substr(0, tab), std::stoul(v.substr(tab + 1))};
  };
  for (std::size_t r = 0; r < rows; ++r) m.summary_sentences.push_back(ref("row"));
  for (std::size_t c = 0; c < cols; ++c) m.doc_sentences.push_back(ref("col"));
  if (!std::getline(in, line) || line != "values") return fail("expected 'values'");
  for (std::size_t r = 0; r < rows; ++r) {
    if (!std::getline(in, line)) return fail("missing value row");
    const auto cells = text::split(line, '\t');
    if (cells.size() != cols) return fail("row " + std::to_string(r) + " has wrong width");
    for (const auto& cell : cells) {
      std::istringstream cs(cell);
      if (m.method == AttributionMethod::NLI) {
        NliProbs p;
        if (!(cs >> p.entail >> p.neutral >> p.contradict)) fail("bad NLI cell");
        m.probs.push_back(p);
      } else {
        double v = 0;
        if (!(cs >> v)) fail("bad cosine cell");
        m.cosine.push_back(v);
      }
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// json

inline void to_json(json& j, const AttributionSet& a) {
  j = json{{"summary", a.summary_id}, {"summary_method", a.summary_method}, {"sentence", a.summary_sentence},
           {"statement", a.statement}, {"method", a.method}, {"short_pool", a.short_pool}};
  j["candidates"] = json::array();
  for (const auto& c : a.candidates) j["candidates"].push_back({{"ref", c.ref}, {"score", c.score}, {"rank", c.rank}});
}

inline void from_json(const json& j, AttributionSet& a) {
  a.summary_id = j.at("summary").get<std::string>();
  a.summary_method = j.at("summary_method").get<SummaryMethod>();
  a.summary_sentence = j.at("sentence").get<SentenceRef>();
  a.statement = j.at("statement").get<std::string>();
  a.method = j.at("method").get<AttributionMethod>();
  a.short_pool = j.value("short_pool", false);
  a.candidates.clear();
  for (const auto& c : j.at("candidates")) {
    a.candidates.push_back({c.at("ref").get<SentenceRef>(), c.at("score").get<double>(), c.at("rank").get<std::size_t>()});
  }
}

inline void to_json(json& j, const ReductionTrajectory& t) {
  j = json{{"initial_score", t.initial_score}, {"influential_count", t.influential_count}, {"failed", t.failed}};
  if (t.failed) j["failure"] = t.failure;
  j["steps"] = json::array();
  for (const auto& s : t.steps) {
    j["steps"].push_back({{"removed", s.removed}, {"neutrality", s.neutrality}, {"summac_after", s.summac_after}});
  }
}

}  // namespace attrib
