#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "attrib/attribution.hpp"
#include "support.hpp"

using namespace attrib;
using testsupport::Gen;

namespace {

// Scorer answering from fixed tables; unknown pairs are fully neutral.
class TableScorer : public Scorer {
 public:
  std::map<std::string, std::vector<double>> embeddings;
  std::map<std::pair<std::string, std::string>, NliProbs> nli_table;  // (premise, hypothesis)
  std::size_t nli_calls = 0;
  std::size_t fail_after = static_cast<std::size_t>(-1);

  std::vector<EmbeddingVector> embed(std::span<const std::string> texts) override {
    std::vector<EmbeddingVector> out;
    for (const auto& t : texts) {
      EmbeddingVector v{embeddings.at(t)};
      normalize(v);
      out.push_back(v);
    }
    return out;
  }
  std::vector<NliProbs> nli(std::span<const NliPair> pairs) override {
    if (++nli_calls > fail_after) throw ScorerError("scorer unavailable", true);
    std::vector<NliProbs> out;
    for (const auto& p : pairs) {
      auto it = nli_table.find({p.premise, p.hypothesis});
      out.push_back(it == nli_table.end() ? NliProbs{0, 1, 0} : it->second);
    }
    return out;
  }
  std::vector<std::string> model_ids() const override { return {"table"}; }
};

SegmentedTopic synthetic_topic() {
  return segment_topic(ingest(testsupport::fixtures() / "corpus/synthetic/manifest.json").front());
}

ScoreMatrix random_nli_matrix(Gen& g, std::size_t rows, std::size_t cols) {
  ScoreMatrix m;
  m.method = AttributionMethod::NLI;
  for (std::size_t r = 0; r < rows; ++r) m.summary_sentences.push_back({"s", r});
  for (std::size_t c = 0; c < cols; ++c) m.doc_sentences.push_back({"d", c});
  for (std::size_t i = 0; i < rows * cols; ++i) {
    const double e = g.real(), n = g.real() * (1 - e);
    m.probs.push_back({e, n, 1 - e - n});
  }
  return m;
}

// Independent SummaC: per row the maximum entailment, averaged.
double summac_oracle(const ScoreMatrix& m) {
  double sum = 0;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    std::vector<double> es;
    for (std::size_t c = 0; c < m.cols(); ++c) es.push_back(m.probs[r * m.cols() + c].entail);
    sum += *std::max_element(es.begin(), es.end());
  }
  return sum / static_cast<double>(m.rows());
}

}  // namespace

TEST(Scoring, MockEmbeddingMatrixIsPinned) {
  TableScorer sc;
  sc.embeddings = {{"s1", {1, 0}}, {"s2", {0, 2}}, {"p1", {3, 0}}, {"p2", {0.6, 0.8}}, {"p3", {0, 1}}};
  const auto rows = testsupport::as_sentences({"s1", "s2"}, "sum");
  const auto pool = testsupport::as_sentences({"p1", "p2", "p3"});
  const auto m = score_matrix(rows, pool, sc, AttributionMethod::Embedding);
  const double want[2][3] = {{1.0, 0.6, 0.0}, {0.0, 0.8, 1.0}};
  ASSERT_EQ(m.rows(), 2u);
  ASSERT_EQ(m.cols(), 3u);
  for (std::size_t r = 0; r < 2; ++r) {
    for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(m.key(r, c), want[r][c], 1e-12);
  }
}

TEST(Scoring, BatchedEqualsPairwise) {
  const auto st = synthetic_topic();
  const auto pool = st.all_sentences();
  const std::vector<Sentence> rows(pool.begin(), pool.begin() + 4);
  LexicalScorer sc;
  for (auto method : {AttributionMethod::NLI, AttributionMethod::Embedding}) {
    const auto one = score_matrix(rows, pool, sc, method, {1});
    const auto seven = score_matrix(rows, pool, sc, method, {7});
    const auto big = score_matrix(rows, pool, sc, method, {4096});
    for (std::size_t r = 0; r < rows.size(); ++r) {
      for (std::size_t c = 0; c < pool.size(); ++c) {
        const double direct = method == AttributionMethod::NLI
                                  ? LexicalScorer::nli_one(pool[c].text, rows[r].text).entail
                                  : cosine(LexicalScorer::embed_one(rows[r].text), LexicalScorer::embed_one(pool[c].text));
        EXPECT_EQ(one.key(r, c), direct);
        EXPECT_EQ(seven.key(r, c), direct);
        EXPECT_EQ(big.key(r, c), direct);
      }
    }
  }
}

TEST(Scoring, SelfSimilarityIsRowMaximum) {
  const auto st = synthetic_topic();
  const auto pool = st.all_sentences();
  LexicalScorer sc;
  for (auto method : {AttributionMethod::NLI, AttributionMethod::Embedding}) {
    const auto m = score_matrix(pool, pool, sc, method);
    for (std::size_t r = 0; r < m.rows(); ++r) {
      const auto row = m.row(r);
      EXPECT_DOUBLE_EQ(*std::max_element(row.begin(), row.end()), row[r]) << r;
      EXPECT_NEAR(row[r], 1.0, 1e-9);
    }
  }
}

TEST(Scoring, EmptyPoolAndShortBatchesAreErrors) {
  LexicalScorer sc;
  const auto rows = testsupport::as_sentences({"a b"});
  EXPECT_THROW(score_matrix(rows, std::span<const Sentence>{}, sc, AttributionMethod::NLI), AttributionError);
  struct Short : LexicalScorer {
    std::vector<NliProbs> nli(std::span<const NliPair>) override { return {}; }
  } bad;
  EXPECT_THROW(score_matrix(rows, rows, bad, AttributionMethod::NLI), ScorerError);
}

TEST(Lexical, PinnedPairs) {
  const auto pairs = json::parse(testsupport::read(testsupport::fixtures() / "scorer/lexical_pairs.json"));
  ASSERT_FALSE(pairs.empty());
  for (const auto& p : pairs) {
    const auto prem = p.at("premise").get<std::string>();
    const auto hyp = p.at("hypothesis").get<std::string>();
    const auto probs = LexicalScorer::nli_one(prem, hyp);
    EXPECT_NEAR(probs.entail, p.at("entail").get<double>(), 1e-12) << hyp;
    EXPECT_NEAR(probs.neutral, p.at("neutral").get<double>(), 1e-12) << hyp;
    EXPECT_NEAR(probs.contradict, p.at("contradict").get<double>(), 1e-12) << hyp;
    EXPECT_NEAR(cosine(LexicalScorer::embed_one(prem), LexicalScorer::embed_one(hyp)), p.at("cosine").get<double>(), 1e-9)
        << hyp;
  }
}

TEST(Lexical, InvariantsOnRandomText) {
  Gen g(5);
  for (int i = 0; i < 300; ++i) {
    const auto a = g.sentence(1, 12, 24), b = g.sentence(1, 12, 24);
    const auto ea = LexicalScorer::embed_one(a), eb = LexicalScorer::embed_one(b);
    double n2 = 0;
    for (double x : ea.values) n2 += x * x;
    EXPECT_NEAR(n2, 1.0, 1e-9);
    EXPECT_EQ(ea.dim(), LexicalScorer::kDim);
    EXPECT_DOUBLE_EQ(cosine(ea, eb), cosine(eb, ea));
    EXPECT_NEAR(cosine(ea, ea), 1.0, 1e-9);
    const auto p = LexicalScorer::nli_one(a, b);
    EXPECT_TRUE(p.valid());
    EXPECT_DOUBLE_EQ(LexicalScorer::nli_one(a, a).entail, 1.0);
  }
  EXPECT_EQ(LexicalScorer::nli_one("nothing shared here", "totally different words").entail, 0.0);
  EXPECT_EQ(LexicalScorer::nli_one("", "").neutral, 1.0);
}

TEST(TopK, Examples) {
  const std::vector<double> row = {0.1, 0.9, 0.5, 0.9};
  const auto t = rank_topk(row, 3);
  ASSERT_EQ(t.candidates.size(), 3u);
  EXPECT_EQ(t.candidates[0].column, 1u);
  EXPECT_EQ(t.candidates[1].column, 3u);
  EXPECT_EQ(t.candidates[2].column, 2u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(t.candidates[i].rank, i + 1);
  EXPECT_FALSE(t.short_pool);

  const auto s = rank_topk(row, 5);
  EXPECT_EQ(s.candidates.size(), 4u);
  EXPECT_TRUE(s.short_pool);

  const std::vector<double> with_nan = {std::nan(""), 0.2, -0.5};
  const auto n = rank_topk(with_nan, 3);
  EXPECT_EQ(n.candidates[0].column, 1u);
  EXPECT_EQ(n.candidates[1].column, 2u);
  EXPECT_EQ(n.candidates[2].column, 0u);
  EXPECT_THROW(rank_topk(row, 0), AttributionError);
  EXPECT_TRUE(rank_topk(std::vector<double>{}, 1).candidates.empty());
}

TEST(TopK, MatchesStableSortOracle) {
  Gen g(17);
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<double> row(g.uniform(0, 30));
    for (auto& x : row) x = static_cast<double>(g.uniform(0, 6)) / 6.0;  // coarse values force ties
    const auto k = g.uniform(1, 35);
    std::vector<std::size_t> idx(row.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return row[a] > row[b]; });
    const auto t = rank_topk(row, k);
    ASSERT_EQ(t.candidates.size(), std::min(k, row.size()));
    EXPECT_EQ(t.short_pool, k > row.size());
    for (std::size_t i = 0; i < t.candidates.size(); ++i) {
      EXPECT_EQ(t.candidates[i].column, idx[i]);
      EXPECT_EQ(t.candidates[i].score, row[idx[i]]);
      EXPECT_EQ(t.candidates[i].rank, i + 1);
    }
  }
}

TEST(Context, WindowsAtDocumentBoundaries) {
  const auto st = synthetic_topic();
  for (const auto& doc : st.topic.documents) {
    const auto* sents = st.document_sentences(doc.doc_id);
    ASSERT_NE(sents, nullptr);
    for (std::size_t i = 0; i < sents->size(); ++i) {
      const auto w = context_window({doc.doc_id, i}, st);
      EXPECT_EQ(w.prev.has_value(), i > 0);
      EXPECT_EQ(w.next.has_value(), i + 1 < sents->size());
      if (w.prev) {
        EXPECT_EQ(*w.prev, (SentenceRef{doc.doc_id, i - 1}));
      }
      if (w.next) {
        EXPECT_EQ(*w.next, (SentenceRef{doc.doc_id, i + 1}));
      }
    }
  }
  EXPECT_THROW(context_window({"nope", 0}, st), AttributionError);
  EXPECT_THROW(context_window({st.topic.documents[0].doc_id, 999}, st), AttributionError);
}

TEST(Pool, ExtractBasedSummariesUseProvenanceOnly) {
  const auto st = synthetic_topic();
  const auto all = st.all_sentences();
  auto ex = extract_summary(st.topic.topic_id, all, 300);
  const auto pool = candidate_pool(ex, st);
  ASSERT_EQ(pool.size(), ex.extraction_provenance->size());
  for (std::size_t i = 0; i < pool.size(); ++i) EXPECT_EQ(pool[i].ref(), (*ex.extraction_provenance)[i]);

  auto human = make_summary(st.topic.topic_id, SummaryMethod::Human, "Some reference text.");
  EXPECT_EQ(candidate_pool(human, st).size(), all.size());

  auto hybrid = make_summary(st.topic.topic_id, SummaryMethod::Hybrid, "Rewritten.");
  EXPECT_THROW(candidate_pool(hybrid, st), AttributionError);
  hybrid.extraction_provenance = std::vector<SentenceRef>{{"d01", 999}};
  EXPECT_THROW(candidate_pool(hybrid, st), AttributionError);
}

TEST(Pool, AttributionCandidatesComeFromThePool) {
  const auto st = synthetic_topic();
  IdentityProvider p;
  const auto hybrid = hybrid_summarize(st, 400, {p});
  LexicalScorer sc;
  for (auto method : {AttributionMethod::NLI, AttributionMethod::Embedding}) {
    const auto sets = attribute(hybrid, st, sc, method, 3);
    ASSERT_EQ(sets.size(), hybrid.sentences.size());
    for (const auto& s : sets) {
      EXPECT_EQ(s.candidates.size(), std::min<std::size_t>(3, hybrid.extraction_provenance->size()));
      for (const auto& c : s.candidates) {
        EXPECT_NE(std::find(hybrid.extraction_provenance->begin(), hybrid.extraction_provenance->end(), c.ref),
                  hybrid.extraction_provenance->end());
      }
      EXPECT_EQ(json(s).get<AttributionSet>().candidates.size(), s.candidates.size());
    }
  }
}

TEST(SummaC, Examples) {
  ScoreMatrix full{AttributionMethod::NLI, {{"s", 0}, {"s", 1}}, {{"d", 0}, {"d", 1}}, {}, {}};
  full.probs = {{1, 0, 0}, {0, 1, 0}, {0, 1, 0}, {1, 0, 0}};
  EXPECT_DOUBLE_EQ(summac_score(full), 1.0);

  ScoreMatrix partial{AttributionMethod::NLI, {{"s", 0}, {"s", 1}}, {{"d", 0}, {"d", 1}}, {}, {}};
  partial.probs = {{0.9, 0.1, 0}, {0.2, 0.8, 0}, {0.1, 0.9, 0}, {0.5, 0.5, 0}};
  EXPECT_NEAR(summac_score(partial), 0.7, 1e-12);

  ScoreMatrix emb{AttributionMethod::Embedding, {{"s", 0}}, {{"d", 0}}, {0.5}, {}};
  EXPECT_THROW(summac_score(emb), AttributionError);
}

TEST(SummaC, OracleInvariancesAndMonotonicity) {
  Gen g(23);
  for (int trial = 0; trial < 500; ++trial) {
    auto m = random_nli_matrix(g, g.uniform(1, 6), g.uniform(1, 8));
    const double s = summac_score(m);
    EXPECT_NEAR(s, summac_oracle(m), 1e-12);
    EXPECT_GE(s, 0.0);
    EXPECT_LE(s, 1.0);

    std::vector<std::size_t> perm(m.cols());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), g.rng());
    EXPECT_NEAR(summac_score(m.select_columns(perm)), s, 1e-12);

    // raising one entailment never lowers the score
    const auto cell = g.uniform(0, m.probs.size() - 1);
    auto raised = m;
    raised.probs[cell].entail = std::min(1.0, raised.probs[cell].entail + g.real());
    EXPECT_GE(summac_score(raised), s - 1e-15);

    // appending a dominated column changes nothing
    auto dominated = m;
    dominated.doc_sentences.push_back({"d", 99});
    dominated.probs.clear();
    for (std::size_t r = 0; r < m.rows(); ++r) {
      for (std::size_t c = 0; c < m.cols(); ++c) dominated.probs.push_back(m.nli_at(r, c));
      dominated.probs.push_back({m.nli_at(r, 0).entail * g.real(), 0, 0});
    }
    EXPECT_NEAR(summac_score(dominated), s, 1e-12);
  }
}

TEST(Neutrality, AggregatorsAndErrors) {
  const std::vector<NliProbs> col = {{0.1, 0.6, 0.3}, {0.0, 0.9, 0.1}, {0.7, 0.3, 0.0}};
  EXPECT_NEAR(neutrality(col), 0.6, 1e-12);
  EXPECT_DOUBLE_EQ(neutrality(col, NeutralityAggregator::Min), 0.3);
  EXPECT_DOUBLE_EQ(neutrality(col, NeutralityAggregator::Max), 0.9);
  EXPECT_THROW(neutrality(std::vector<NliProbs>{}), AttributionError);
}

TEST(Reduction, FrozenOrderFollowsNeutralityArgsort) {
  Gen g(41);
  for (int trial = 0; trial < 200; ++trial) {
    const auto m = random_nli_matrix(g, g.uniform(1, 4), g.uniform(1, 9));
    ReductionOptions opts;
    opts.order = ReductionOrder::Frozen;
    const auto t = reduce_matrix(m, opts);
    std::vector<double> mean(m.cols(), 0);
    for (std::size_t c = 0; c < m.cols(); ++c) {
      for (std::size_t r = 0; r < m.rows(); ++r) mean[c] += m.probs[r * m.cols() + c].neutral / static_cast<double>(m.rows());
    }
    std::vector<std::size_t> order(m.cols());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return mean[a] > mean[b]; });
    ASSERT_EQ(t.steps.size(), m.cols());
    for (std::size_t i = 0; i < order.size(); ++i) EXPECT_EQ(t.steps[i].removed, m.doc_sentences[order[i]]);
  }
}

// Second, deliberately naive implementation of adaptive reduction on a fixed
// matrix: recompute every column mean from scratch at each step.
TEST(Reduction, AdaptiveMatchesNaiveLoop) {
  Gen g(42);
  for (int trial = 0; trial < 200; ++trial) {
    const auto m = random_nli_matrix(g, g.uniform(1, 4), g.uniform(1, 9));
    const auto t = reduce_matrix(m);
    ASSERT_EQ(t.steps.size(), m.cols());
    EXPECT_EQ(t.steps.back().summac_after, 0.0);
    EXPECT_NEAR(t.initial_score, summac_oracle(m), 1e-12);
    std::vector<std::size_t> alive(m.cols());
    std::iota(alive.begin(), alive.end(), 0);
    std::size_t first_change = 0;
    for (std::size_t step = 0; step < m.cols(); ++step) {
      std::size_t pick = 0;
      double best = -1;
      for (std::size_t i = 0; i < alive.size(); ++i) {
        double s = 0;
        for (std::size_t r = 0; r < m.rows(); ++r) s += m.probs[r * m.cols() + alive[i]].neutral;
        s /= static_cast<double>(m.rows());
        if (s > best) {
          best = s;
          pick = i;
        }
      }
      EXPECT_EQ(t.steps[step].removed, m.doc_sentences[alive[pick]]);
      alive.erase(alive.begin() + static_cast<std::ptrdiff_t>(pick));
      double after = 0;
      if (!alive.empty()) after = summac_score(m.select_columns(alive));
      EXPECT_NEAR(t.steps[step].summac_after, after, 1e-12);
      if (!first_change && std::abs(after - t.initial_score) > 1e-4) first_change = step + 1;
    }
    EXPECT_EQ(t.influential_count, first_change);
  }
}

TEST(Reduction, SingleSupportingSentenceIsRemovedLast) {
  for (std::size_t n : {1u, 2u, 5u, 12u}) {
    ScoreMatrix m{AttributionMethod::NLI, {{"sum", 0}}, {}, {}, {}};
    const std::size_t support = n / 2;
    for (std::size_t c = 0; c < n; ++c) {
      m.doc_sentences.push_back({"d", c});
      m.probs.push_back(c == support ? NliProbs{1, 0, 0} : NliProbs{0, 1, 0});
    }
    for (auto order : {ReductionOrder::Adaptive, ReductionOrder::Frozen}) {
      ReductionOptions opts;
      opts.order = order;
      const auto t = reduce_matrix(m, opts);
      EXPECT_DOUBLE_EQ(t.initial_score, 1.0);
      EXPECT_EQ(t.influential_count, n);
      EXPECT_EQ(t.trailing_influential(), 1u);
      EXPECT_EQ(t.steps.back().removed, (SentenceRef{"d", support}));
    }
  }
}

TEST(Reduction, SingleSupportThroughScorer) {
  TableScorer sc;
  const auto summary = testsupport::as_sentences({"the claim"}, "sum");
  std::vector<std::string> texts;
  for (int i = 0; i < 8; ++i) texts.push_back("filler " + std::to_string(i));
  texts[3] = "the support";
  sc.nli_table[{"the support", "the claim"}] = {0.95, 0.05, 0};
  const auto pool = testsupport::as_sentences(texts);
  const auto t = reduction_experiment(pool, summary, sc);
  EXPECT_FALSE(t.failed);
  ASSERT_EQ(t.steps.size(), 8u);
  EXPECT_EQ(t.influential_count, 8u);
  EXPECT_EQ(t.steps.back().removed, (SentenceRef{"d", 3}));
}

TEST(Reduction, ScorerFailureLeavesPartialTrajectory) {
  TableScorer sc;
  sc.fail_after = 3;
  const auto summary = testsupport::as_sentences({"claim"}, "sum");
  const auto pool = testsupport::as_sentences({"a", "b", "c", "d", "e", "f"});
  const auto t = reduction_experiment(pool, summary, sc);
  EXPECT_TRUE(t.failed);
  EXPECT_NE(t.failure.find("unavailable"), std::string::npos);
  EXPECT_EQ(t.steps.size(), 2u);
  EXPECT_FALSE(json(t).at("failure").get<std::string>().empty());
}

TEST(Reduction, ExtractOverItsOwnSources) {
  const auto st = synthetic_topic();
  const auto all = st.all_sentences();
  LexicalScorer sc;
  for (std::size_t budget : {200u, 400u, 600u}) {
    const auto ex = extract_summary(st.topic.topic_id, all, budget);
    const auto t = reduction_experiment(all, ex.sentences, sc);
    EXPECT_FALSE(t.failed);
    EXPECT_EQ(t.steps.size(), all.size());
    // re-segmenting the joined extract can merge or split sentences, so not exactly 1
    EXPECT_GT(t.initial_score, 0.9);
    EXPECT_EQ(t.steps.back().summac_after, 0.0);
    EXPECT_LE(t.trailing_influential(), ex.sentences.size() + 1) << budget;
  }
}

TEST(Persistence, MatrixRoundTrip) {
  Gen g(3);
  const auto nli = random_nli_matrix(g, 3, 5);
  const auto back = read_matrix(write_matrix(nli));
  EXPECT_EQ(back.summary_sentences, nli.summary_sentences);
  EXPECT_EQ(back.doc_sentences, nli.doc_sentences);
  for (std::size_t i = 0; i < nli.probs.size(); ++i) {
    EXPECT_EQ(back.probs[i].entail, nli.probs[i].entail);
    EXPECT_EQ(back.probs[i].neutral, nli.probs[i].neutral);
    EXPECT_EQ(back.probs[i].contradict, nli.probs[i].contradict);
  }
  EXPECT_EQ(write_matrix(back), write_matrix(nli));

  ScoreMatrix emb{AttributionMethod::Embedding, {{"a b", 0}}, {{"d", 0}, {"d", 1}}, {0.25, -1.0 / 3}, {}};
  EXPECT_EQ(read_matrix(write_matrix(emb)).cosine, emb.cosine);

  EXPECT_THROW(read_matrix("nonsense"), AttributionError);
  auto text = write_matrix(emb);
  text.pop_back();
  text += "\t9\n";
  EXPECT_THROW(read_matrix(text), AttributionError);
}
