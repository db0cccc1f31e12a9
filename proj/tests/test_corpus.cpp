#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "attrib/corpus.hpp"
#include "support.hpp"

using namespace attrib;
using testsupport::Gen;
using testsupport::ScratchDir;

namespace {

// Counts code points by skipping UTF-8 continuation bytes.
std::size_t count_code_points(const std::string& s) {
  std::size_t n = 0;
  for (unsigned char c : s) n += (c & 0xC0) != 0x80;
  return n;
}

Document doc(const std::string& id, std::size_t len, std::optional<double> imp = std::nullopt) {
  return Document::make(id, Stream::News, std::string(len, 'x'), imp);
}

Topic topic_with(const std::string& id, std::size_t ref_len, std::vector<std::size_t> doc_lens) {
  Topic t{id, Dataset::Custom, {}, {std::string(ref_len, 'r')}};
  for (std::size_t i = 0; i < doc_lens.size(); ++i) t.documents.push_back(doc(id + "-" + std::to_string(i), doc_lens[i]));
  return t;
}

}  // namespace

TEST(Ingest, EmptyManifestGivesNoTopics) {
  EXPECT_TRUE(ingest_manifest(json::parse(R"({"topics": []})"), ".").empty());
  EXPECT_TRUE(ingest_manifest(json::object(), ".").empty());
}

TEST(Ingest, KeepsDocumentOrder) {
  const auto m = json::parse(R"({"topics": [{"id": "t", "dataset": "Custom", "documents": [
      {"id": "b", "text": "second listed first"}, {"id": "a", "stream": "twitter", "text": "then this one"}]}]})");
  const auto topics = ingest_manifest(m, ".");
  ASSERT_EQ(topics.size(), 1u);
  ASSERT_EQ(topics[0].documents.size(), 2u);
  EXPECT_EQ(topics[0].documents[0].doc_id, "b");
  EXPECT_EQ(topics[0].documents[1].doc_id, "a");
  EXPECT_EQ(topics[0].documents[1].stream, Stream::Twitter);
}

TEST(Ingest, SyntheticSampleCorpus) {
  const auto topics = ingest(testsupport::fixtures() / "corpus/synthetic/manifest.json");
  ASSERT_EQ(topics.size(), 1u);
  const auto& t = topics[0];
  EXPECT_EQ(t.dataset, Dataset::TAC2011);
  ASSERT_EQ(t.documents.size(), 10u);
  for (std::size_t i = 0; i < 10; ++i) {
    const auto& d = t.documents[i];
    char id[8];
    std::snprintf(id, sizeof id, "d%02zu", i + 1);
    EXPECT_EQ(d.doc_id, id);
    const auto raw = testsupport::read(testsupport::fixtures() / "corpus/synthetic/docs" / (std::string(id) + ".txt"));
    EXPECT_EQ(d.text, raw);
    EXPECT_EQ(d.char_len, count_code_points(raw));
    EXPECT_GE(d.char_len, 100u);
  }
  ASSERT_EQ(t.reference_summaries.size(), 1u);
  EXPECT_GE(count_code_points(t.reference_summaries[0]), 200u);
}

TEST(Ingest, CharLenCountsCodePoints) {
  const auto d = Document::make("u", Stream::Other, "caf\xC3\xA9 \xF0\x9F\x98\x80");
  EXPECT_EQ(d.char_len, 6u);
}

TEST(Ingest, Errors) {
  EXPECT_THROW(ingest("/nonexistent/manifest.json"), CorpusError);
  ScratchDir dir("ingest");
  testsupport::write(dir / "bad.json", "{ not json");
  EXPECT_THROW(ingest(dir / "bad.json"), CorpusError);
  const auto dup = json::parse(R"({"topics": [{"id": "same", "dataset": "Custom"}, {"id": "same", "dataset": "Custom"}]})");
  try {
    ingest_manifest(dup, ".");
    FAIL() << "duplicate topic accepted";
  } catch (const CorpusError& e) {
    EXPECT_NE(std::string(e.what()).find("same"), std::string::npos);
  }
  EXPECT_THROW(ingest_manifest(json::parse(R"({"topics": [{"id": "t", "dataset": "Nope"}]})"), "."), CorpusError);
  EXPECT_THROW(ingest_manifest(json::parse(R"({"topics": [{"id": "t", "dataset": "TAC2011"}]})"), "."), CorpusError);
  EXPECT_THROW(ingest_manifest(json::parse(R"({"topics": [{"id": "t", "dataset": "Custom", "documents": [
      {"id": "a", "text": "x"}, {"id": "a", "text": "y"}]}]})"), "."),
               CorpusError);
}

TEST(Filter, ReferenceLengthBoundaries) {
  const FilterThresholds t{200, 5000, 100};
  EXPECT_TRUE(filter_events({topic_with("short", 199, {150})}, t).empty());
  const auto kept = filter_events({topic_with("edge", 200, {100, 300})}, t);
  ASSERT_EQ(kept.size(), 1u);
  EXPECT_EQ(kept[0].documents.size(), 2u);
  EXPECT_TRUE(filter_events({topic_with("long", 5001, {150})}, t).empty());
  EXPECT_EQ(filter_events({topic_with("top", 5000, {150})}, t).size(), 1u);
}

TEST(Filter, DropsShortDocumentsAndEmptiedTopics) {
  const FilterThresholds t{200, 5000, 100};
  const auto kept = filter_events({topic_with("a", 300, {99, 100, 20}), topic_with("b", 300, {10, 20})}, t);
  ASSERT_EQ(kept.size(), 1u);
  ASSERT_EQ(kept[0].documents.size(), 1u);
  EXPECT_EQ(kept[0].documents[0].doc_id, "a-1");
}

TEST(Filter, InvalidThresholdsRejected) {
  EXPECT_FALSE((FilterThresholds{0, 10, 1}.valid()));
  EXPECT_FALSE((FilterThresholds{10, 10, 1}.valid()));
  EXPECT_FALSE((FilterThresholds{1, 10, 0}.valid()));
  EXPECT_THROW(filter_events({}, FilterThresholds{10, 5, 1}), std::invalid_argument);
}

TEST(Filter, MatchesBruteForceOracle) {
  Gen g(11);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<Topic> topics;
    const auto n = g.uniform(0, 6);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<std::size_t> lens;
      for (std::size_t k = g.uniform(0, 5); k > 0; --k) lens.push_back(g.uniform(1, 200));
      Topic t = topic_with("t" + std::to_string(i), 0, lens);
      t.reference_summaries.clear();
      for (std::size_t k = g.uniform(0, 3); k > 0; --k) t.reference_summaries.push_back(std::string(g.uniform(0, 150), 'r'));
      topics.push_back(t);
    }
    const std::size_t lo = g.uniform(1, 200);
    const FilterThresholds th{lo, lo + g.uniform(1, 200), g.uniform(1, 150)};

    // independent restatement: survivors by id with their surviving doc ids
    std::vector<std::pair<std::string, std::vector<std::string>>> expect;
    for (const auto& t : topics) {
      std::size_t L = 0;
      for (const auto& r : t.reference_summaries) L += r.size();
      if (!(th.min_sum_len <= L && L <= th.max_sum_len)) continue;
      std::vector<std::string> ids;
      for (const auto& d : t.documents) {
        if (d.text.size() >= th.min_doc_len) ids.push_back(d.doc_id);
      }
      if (!ids.empty()) expect.emplace_back(t.topic_id, ids);
    }
    const auto got = filter_events(topics, th);
    ASSERT_EQ(got.size(), expect.size());
    std::size_t docs_in = 0, docs_out = 0;
    for (const auto& t : topics) docs_in += t.documents.size();
    for (std::size_t i = 0; i < got.size(); ++i) {
      EXPECT_EQ(got[i].topic_id, expect[i].first);
      std::vector<std::string> ids;
      for (const auto& d : got[i].documents) {
        ids.push_back(d.doc_id);
        EXPECT_GE(d.char_len, th.min_doc_len);
      }
      EXPECT_EQ(ids, expect[i].second);
      const auto L = reference_length(got[i]);
      EXPECT_TRUE(th.min_sum_len <= L && L <= th.max_sum_len);
      docs_out += ids.size();
    }
    EXPECT_LE(got.size(), topics.size());
    EXPECT_LE(docs_out, docs_in);
  }
}

TEST(BudgetedInput, DeduplicatesExactTexts) {
  const std::vector<Document> docs{Document::make("a", Stream::News, "same words here"),
                                   Document::make("b", Stream::News, "same  words\nhere"),
                                   Document::make("c", Stream::News, "different")};
  const auto out = select_for_budgeted_input(docs, 100);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].doc_id, "a");
  EXPECT_EQ(out[1].doc_id, "c");
}

TEST(BudgetedInput, ImportanceOrderWithBudgetForTwo) {
  const std::vector<Document> docs{Document::make("hi", Stream::News, "one two three", 0.9),
                                   Document::make("lo", Stream::News, "four five six", 0.1),
                                   Document::make("mid", Stream::News, "seven eight nine", 0.5)};
  const auto out = select_for_budgeted_input(docs, 6);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].doc_id, "hi");
  EXPECT_EQ(out[1].doc_id, "mid");
}

TEST(BudgetedInput, TinyBudgetSelectsNothing) {
  const std::vector<Document> docs{Document::make("a", Stream::News, "one two three"), Document::make("b", Stream::News, "four five")};
  EXPECT_TRUE(select_for_budgeted_input(docs, 1).empty());
  EXPECT_TRUE(select_for_budgeted_input({}, 10).empty());
}

TEST(BudgetedInput, MatchesSortedPrefixOracle) {
  Gen g(5);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<Document> docs;
    for (std::size_t i = g.uniform(0, 8); i > 0; --i) {
      std::optional<double> imp;
      if (g.coin(0.8)) imp = static_cast<double>(g.uniform(0, 4)) / 4.0;  // frequent ties
      docs.push_back(Document::make("d" + std::to_string(docs.size()), Stream::News, g.words(1, 6, 6), imp));
    }
    const std::size_t budget = g.uniform(1, 25);

    // oracle: first occurrences, ranked by (importance desc, position asc);
    // the answer is the longest ranked prefix within budget
    std::vector<std::size_t> firsts;
    for (std::size_t i = 0; i < docs.size(); ++i) {
      bool dup = false;
      for (auto j : firsts) dup |= text::normalize_whitespace(docs[j].text) == text::normalize_whitespace(docs[i].text);
      if (!dup) firsts.push_back(i);
    }
    auto key = [&](std::size_t i) { return docs[i].importance ? *docs[i].importance : -1e300; };
    std::vector<std::size_t> ranked = firsts;
    for (std::size_t a = 0; a < ranked.size(); ++a) {
      for (std::size_t b = a + 1; b < ranked.size(); ++b) {
        if (key(ranked[b]) > key(ranked[a]) || (key(ranked[b]) == key(ranked[a]) && ranked[b] < ranked[a])) std::swap(ranked[a], ranked[b]);
      }
    }
    std::vector<std::size_t> best;
    for (std::size_t len = 0; len <= ranked.size(); ++len) {
      std::size_t tokens = 0;
      for (std::size_t i = 0; i < len; ++i) tokens += text::whitespace_token_count(docs[ranked[i]].text);
      if (tokens <= budget) best.assign(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(len));
      else break;
    }
    std::sort(best.begin(), best.end());

    const auto out = select_for_budgeted_input(docs, budget);
    ASSERT_EQ(out.size(), best.size());
    std::size_t tokens = 0;
    std::set<std::string> texts;
    for (std::size_t i = 0; i < out.size(); ++i) {
      EXPECT_EQ(out[i].doc_id, docs[best[i]].doc_id);
      tokens += text::whitespace_token_count(out[i].text);
      EXPECT_TRUE(texts.insert(text::normalize_whitespace(out[i].text)).second);
    }
    EXPECT_LE(tokens, budget);
  }
}

TEST(Segment, TerminatorSplit) {
  const auto s = segment(Document::make("d", Stream::Other, "A. B? C!"));
  ASSERT_EQ(s.size(), 3u);
  EXPECT_EQ(s[0].text, "A.");
  EXPECT_EQ(s[1].text, "B?");
  EXPECT_EQ(s[2].text, "C!");
  EXPECT_EQ(s[2].index, 2u);
}

TEST(Segment, EmptyDocument) {
  EXPECT_TRUE(segment(Document::make("d", Stream::Other, "")).empty());
  EXPECT_TRUE(segment(Document::make("d", Stream::Other, " \n\t ")).empty());
}

TEST(Segment, AbbreviationsDoNotSplit) {
  const auto s = segment(Document::make("d", Stream::Other, "Dr. Smith met Mr. Jones at 5 p.m. today. Then they left."));
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[0].text, "Dr. Smith met Mr. Jones at 5 p.m. today.");
}

TEST(Segment, ForcedSplitBound) {
  SegmenterOptions opts;
  opts.max_sentence_chars = 40;
  Gen g(3);
  const auto text = g.words(60, 60);
  const auto s = segment(Document::make("d", Stream::Other, text), opts);
  ASSERT_GE(s.size(), 2u);
  for (const auto& x : s) EXPECT_LE(text::char_count(x.text), 40u);
  // a run with no whitespace at all is cut at the cap
  const auto s2 = segment(Document::make("d", Stream::Other, std::string(95, 'z')), opts);
  ASSERT_EQ(s2.size(), 3u);
  EXPECT_EQ(s2[2].text.size(), 15u);
}

TEST(Segment, MessySnippetGolden) {
  const auto raw = testsupport::read(testsupport::fixtures() / "segmentation/messy_tweets.txt");
  const auto golden = testsupport::read(testsupport::fixtures() / "segmentation/messy_tweets.golden.tsv");
  std::ostringstream got;
  for (const auto& s : segment(Document::make("t", Stream::Twitter, raw))) {
    got << s.index << '\t' << s.start << '\t' << s.end << '\t' << s.text << '\n';
  }
  EXPECT_EQ(got.str(), golden);
}

// Spans are ordered, within bounds, and each sentence is the normalized
// document slice; concatenation reconstructs the normalized document.
TEST(Segment, SpanAndReconstructionProperties) {
  Gen g(21);
  for (int trial = 0; trial < 500; ++trial) {
    std::string text;
    for (std::size_t i = g.uniform(0, 8); i > 0; --i) {
      text += g.coin(0.8) ? g.sentence() : g.words(1, 5);
      text += g.coin(0.2) ? "\n" : (g.coin(0.5) ? " " : "  ");
      if (g.coin(0.1)) text += "Dr. ";
      if (g.coin(0.05)) text += "\xE2\x80\xA6\xC3\xA9 ";
    }
    SegmenterOptions opts;
    opts.max_sentence_chars = g.uniform(16, 80);  // longer than any unbroken token
    const auto d = Document::make("d", Stream::Other, text);
    const auto s = segment(d, opts);
    const auto u = text::decode_utf8(text);
    std::size_t prev_end = 0;
    std::vector<std::string> parts;
    for (std::size_t i = 0; i < s.size(); ++i) {
      EXPECT_EQ(s[i].index, i);
      EXPECT_LT(s[i].start, s[i].end);
      EXPECT_LE(s[i].end, u.size());
      EXPECT_GE(s[i].start, prev_end);
      prev_end = s[i].end;
      EXPECT_EQ(s[i].text, text::normalize_whitespace(text::encode_utf8(u.substr(s[i].start, s[i].end - s[i].start))));
      EXPECT_LE(text::char_count(s[i].text), opts.max_sentence_chars);
      parts.push_back(s[i].text);
    }
    EXPECT_EQ(text::normalize_whitespace(text::join(parts, " ")), text::normalize_whitespace(text));
    // pure function
    EXPECT_EQ(segment(d, opts), s);
  }
}

TEST(Segment, SegmentTopicAddressing) {
  const auto topics = ingest(testsupport::fixtures() / "corpus/synthetic/manifest.json");
  const auto st = segment_topic(topics[0]);
  ASSERT_EQ(st.sentences.size(), 10u);
  for (const auto& s : st.all_sentences()) {
    const auto* found = st.find(s.ref());
    ASSERT_NE(found, nullptr);
    EXPECT_EQ(found->text, s.text);
  }
  EXPECT_EQ(st.find({"d01", 99}), nullptr);
  EXPECT_EQ(st.find({"nope", 0}), nullptr);
}

TEST(Json, TopicRoundTrip) {
  const auto topics = ingest(testsupport::fixtures() / "corpus/synthetic/manifest.json");
  const auto back = json(topics[0]).get<Topic>();
  EXPECT_EQ(json(back), json(topics[0]));
}
