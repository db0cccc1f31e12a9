#pragma once

// Topics, documents and sentences: manifest ingestion, event filtering,
// budgeted document selection and rule-based sentence segmentation.

#include <algorithm>
#include <compare>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "json.hpp"

#include "attrib/error.hpp"
#include "attrib/text.hpp"

namespace attrib {

using json = nlohmann::json;

enum class Stream { News, Twitter, Reddit, Report, Other };
enum class Dataset { TAC2011, Cyber, CrisisFACTS, Custom };

NLOHMANN_JSON_SERIALIZE_ENUM(Stream, {{Stream::News, "news"},
                                      {Stream::Twitter, "twitter"},
                                      {Stream::Reddit, "reddit"},
                                      {Stream::Report, "report"},
                                      {Stream::Other, "other"}})

NLOHMANN_JSON_SERIALIZE_ENUM(Dataset, {{Dataset::TAC2011, "TAC2011"},
                                       {Dataset::Cyber, "Cyber"},
                                       {Dataset::CrisisFACTS, "CrisisFACTS"},
                                       {Dataset::Custom, "Custom"}})

inline std::string to_string(Dataset d) { return json(d).get<std::string>(); }
inline std::string to_string(Stream s) { return json(s).get<std::string>(); }

template <typename Enum>
std::optional<Enum> parse_enum(std::string_view name) {
  // NLOHMANN_JSON_SERIALIZE_ENUM maps unknown strings to the first
  // enumerator, so check the round trip.
  const json j = std::string(name);
  const auto e = j.get<Enum>();
  if (json(e).get<std::string>() != name) return std::nullopt;
  return e;
}

struct Document {
  std::string doc_id;
  Stream stream = Stream::Other;
  std::string text;
  std::optional<double> importance;
  std::size_t char_len = 0;

  static Document make(std::string id, Stream stream, std::string text,
                       std::optional<double> importance = std::nullopt) {
    Document d{std::move(id), stream, std::move(text), importance, 0};
    d.char_len = text::char_count(d.text);
    return d;
  }
};

struct Topic {
  std::string topic_id;
  Dataset dataset = Dataset::Custom;
  std::vector<Document> documents;
  std::vector<std::string> reference_summaries;
};

struct SentenceRef {
  std::string doc_id;
  std::size_t index = 0;

  auto operator<=>(const SentenceRef&) const = default;
  bool operator==(const SentenceRef&) const = default;
};

inline std::string to_string(const SentenceRef& r) { return r.doc_id + "#" + std::to_string(r.index); }

// Offsets are in Unicode scalar values, matching Document::char_len.
struct Sentence {
  std::string doc_id;
  std::size_t index = 0;
  std::string text;
  std::size_t start = 0;
  std::size_t end = 0;

  SentenceRef ref() const { return {doc_id, index}; }
  bool operator==(const Sentence&) const = default;
};

struct FilterThresholds {
  std::size_t min_sum_len = 200;
  std::size_t max_sum_len = 5000;
  std::size_t min_doc_len = 100;

  bool valid() const { return 0 < min_sum_len && min_sum_len < max_sum_len && min_doc_len > 0; }
};

// ---------------------------------------------------------------------------
// ingestion

namespace detail {

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw CorpusError("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::string inline_or_path(const json& entry, const std::filesystem::path& base,
                                  const std::string& what) {
  if (entry.is_string()) return read_file(base / entry.get<std::string>());
  if (!entry.is_object()) throw CorpusError("malformed manifest: " + what + " must be a path or object");
  if (entry.contains("text")) return entry.at("text").get<std::string>();
  if (entry.contains("path")) return read_file(base / entry.at("path").get<std::string>());
  throw CorpusError("malformed manifest: " + what + " needs 'text' or 'path'");
}

}  // namespace detail

// Parses a dataset manifest (JSON). Relative paths resolve against the
// manifest's directory. No filtering is applied.
inline std::vector<Topic> ingest_manifest(const json& manifest, const std::filesystem::path& base) {
  std::vector<Topic> topics;
  if (!manifest.is_object()) throw CorpusError("malformed manifest: top level must be an object");
  if (!manifest.contains("topics")) return topics;
  const auto& entries = manifest.at("topics");
  if (!entries.is_array()) throw CorpusError("malformed manifest: 'topics' must be an array");

  std::set<std::string> seen_topics;
  for (const auto& t : entries) {
    try {
      Topic topic;
      topic.topic_id = t.at("id").get<std::string>();
      if (topic.topic_id.empty()) throw CorpusError("malformed manifest: empty topic id");
      if (!seen_topics.insert(topic.topic_id).second) {
        throw CorpusError("duplicate topic_id '" + topic.topic_id + "'");
      }
      const auto ds = parse_enum<Dataset>(t.at("dataset").get<std::string>());
      if (!ds) throw CorpusError("unknown dataset kind for topic '" + topic.topic_id + "'");
      topic.dataset = *ds;

      std::set<std::string> seen_docs;
      for (const auto& d : t.value("documents", json::array())) {
        const auto id = d.at("id").get<std::string>();
        if (id.empty()) throw CorpusError("empty doc_id in topic '" + topic.topic_id + "'");
        if (!seen_docs.insert(id).second) {
          throw CorpusError("duplicate doc_id '" + id + "' in topic '" + topic.topic_id + "'");
        }
        auto stream = Stream::Other;
        if (d.contains("stream")) {
          const auto s = parse_enum<Stream>(d.at("stream").get<std::string>());
          if (!s) throw CorpusError("unknown stream for doc '" + id + "'");
          stream = *s;
        }
        std::optional<double> importance;
        if (d.contains("importance") && !d.at("importance").is_null()) importance = d.at("importance").get<double>();
        topic.documents.push_back(Document::make(id, stream, detail::inline_or_path(d, base, "document " + id), importance));
      }
      for (const auto& r : t.value("references", json::array())) {
        topic.reference_summaries.push_back(detail::inline_or_path(r, base, "reference"));
      }
      if (topic.dataset == Dataset::TAC2011 && topic.reference_summaries.empty()) {
        throw CorpusError("TAC2011 topic '" + topic.topic_id + "' has no reference summary");
      }
      topics.push_back(std::move(topic));
    } catch (const json::exception& e) {
      throw CorpusError(std::string("malformed manifest: ") + e.what());
    }
  }
  return topics;
}

inline std::vector<Topic> ingest(const std::filesystem::path& manifest_path) {
  if (!std::filesystem::exists(manifest_path)) throw CorpusError("manifest not found: " + manifest_path.string());
  json manifest;
  try {
    manifest = json::parse(detail::read_file(manifest_path));
  } catch (const json::parse_error& e) {
    throw CorpusError(std::string("malformed manifest: ") + e.what());
  }
  return ingest_manifest(manifest, manifest_path.parent_path());
}

// ---------------------------------------------------------------------------
// filtering and selection

inline std::size_t reference_length(const Topic& t) {
  std::size_t total = 0;
  for (const auto& r : t.reference_summaries) total += text::char_count(r);
  return total;
}

// Reference length is measured on the raw reference list, before any
// document deduplication.
inline std::vector<Topic> filter_events(const std::vector<Topic>& topics, const FilterThresholds& t) {
  if (!t.valid()) throw std::invalid_argument("invalid filter thresholds");
  std::vector<Topic> out;
  for (const auto& topic : topics) {
    const auto len = reference_length(topic);
    if (len < t.min_sum_len || len > t.max_sum_len) continue;
    Topic kept = topic;
    std::erase_if(kept.documents, [&](const Document& d) { return d.char_len < t.min_doc_len; });
    if (kept.documents.empty()) continue;
    out.push_back(std::move(kept));
  }
  return out;
}

// Deduplicates by normalized text, ranks by importance (missing sorts last,
// ties keep input order) and takes the longest ranked prefix that fits the
// whitespace-token budget. Output keeps the input order.
inline std::vector<Document> select_for_budgeted_input(const std::vector<Document>& docs, std::size_t token_budget) {
  if (token_budget == 0) throw std::invalid_argument("token_budget must be positive");
  std::vector<std::size_t> order;
  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    if (seen.insert(text::normalize_whitespace(docs[i].text)).second) order.push_back(i);
  }
  constexpr double kMissing = -std::numeric_limits<double>::infinity();
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return docs[a].importance.value_or(kMissing) > docs[b].importance.value_or(kMissing);
  });
  std::vector<std::size_t> chosen;
  std::size_t used = 0;
  for (auto i : order) {
    const auto tokens = text::whitespace_token_count(docs[i].text);
    if (used + tokens > token_budget) break;
    used += tokens;
    chosen.push_back(i);
  }
  std::sort(chosen.begin(), chosen.end());
  std::vector<Document> out;
  out.reserve(chosen.size());
  for (auto i : chosen) out.push_back(docs[i]);
  return out;
}

// ---------------------------------------------------------------------------
// segmentation

struct SegmenterOptions {
  std::size_t max_sentence_chars = 2000;
  bool newline_boundaries = true;
  // Lowercased words (without the final period) that do not end a sentence.
  std::vector<std::string> abbreviations = {
      "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "mt", "vs", "no", "nos", "inc", "ltd", "co",
      "corp", "gen", "gov", "sen", "rep", "lt", "col", "sgt", "capt", "jan", "feb", "mar", "apr",
      "jun", "jul", "aug", "sep", "sept", "oct", "nov", "dec", "e.g", "i.e", "u.s", "u.k", "u.n",
      "a.m", "p.m", "approx", "est", "dept", "fig"};
};

namespace detail {

inline bool is_terminator(char32_t c) { return c == U'.' || c == U'!' || c == U'?'; }

inline bool is_closer(char32_t c) {
  return c == U'"' || c == U'\'' || c == U')' || c == U']' || c == 0x201D || c == 0x2019 || c == 0xBB;
}

inline bool is_newline(char32_t c) { return c == U'\n' || c == U'\r' || c == 0x2028 || c == 0x2029 || c == 0x85; }

// Word immediately before position `dot` (exclusive), lowercased, with
// leading opening punctuation stripped.
inline std::string word_before(const std::u32string& u, std::size_t dot) {
  std::size_t b = dot;
  while (b > 0 && !text::is_space(u[b - 1])) --b;
  while (b < dot && (u[b] == U'(' || u[b] == U'"' || u[b] == U'\'' || u[b] == U'[' || u[b] == 0x201C)) ++b;
  std::string w;
  for (std::size_t i = b; i < dot; ++i) text::append_utf8(w, text::to_lower(u[i]));
  return w;
}

}  // namespace detail

inline std::vector<Sentence> segment(const Document& doc, const SegmenterOptions& opts = {}) {
  if (opts.max_sentence_chars == 0) throw std::invalid_argument("max_sentence_chars must be positive");
  const auto u = text::decode_utf8(doc.text);
  const auto n = u.size();
  const std::set<std::string> abbrev(opts.abbreviations.begin(), opts.abbreviations.end());

  // raw [start, end) spans, untrimmed
  std::vector<std::pair<std::size_t, std::size_t>> raw;
  std::size_t start = 0;
  std::size_t i = 0;
  while (i < n) {
    if (opts.newline_boundaries && detail::is_newline(u[i])) {
      raw.emplace_back(start, i);
      start = ++i;
      continue;
    }
    if (detail::is_terminator(u[i])) {
      std::size_t j = i;
      while (j < n && detail::is_terminator(u[j])) ++j;
      const bool single_period = (j == i + 1 && u[i] == U'.');
      while (j < n && detail::is_closer(u[j])) ++j;
      if (j == n || text::is_space(u[j])) {
        if (!(single_period && abbrev.count(detail::word_before(u, i)))) {
          raw.emplace_back(start, j);
          start = j;
        }
      }
      i = j;
      continue;
    }
    ++i;
  }
  raw.emplace_back(start, n);

  const auto max = opts.max_sentence_chars;
  std::vector<Sentence> out;
  auto emit = [&](std::size_t s, std::size_t e) {
    while (s < e && text::is_space(u[s])) ++s;
    while (e > s && text::is_space(u[e - 1])) --e;
    if (s == e) return;
    out.push_back(Sentence{doc.doc_id, out.size(), text::normalize_whitespace(text::encode_utf8(u.substr(s, e - s))), s, e});
  };

  for (auto [s, e] : raw) {
    while (s < e && text::is_space(u[s])) ++s;
    while (e > s && text::is_space(u[e - 1])) --e;
    while (e - s > max) {
      // last whitespace at or before s + max keeps the left piece within the cap
      std::size_t cut = 0;
      for (std::size_t p = s + max; p > s; --p) {
        if (text::is_space(u[p])) {
          cut = p;
          break;
        }
      }
      if (cut == 0) {
        emit(s, s + max);
        s += max;
      } else {
        emit(s, cut);
        s = cut;
      }
      while (s < e && text::is_space(u[s])) ++s;
    }
    emit(s, e);
  }
  return out;
}

// A topic with its per-document segmentation. `sentences[i]` belongs to
// `topic.documents[i]`.
struct SegmentedTopic {
  Topic topic;
  std::vector<std::vector<Sentence>> sentences;

  std::vector<Sentence> all_sentences() const {
    std::vector<Sentence> out;
    for (const auto& doc : sentences) out.insert(out.end(), doc.begin(), doc.end());
    return out;
  }

  const std::vector<Sentence>* document_sentences(std::string_view doc_id) const {
    for (std::size_t i = 0; i < topic.documents.size(); ++i) {
      if (topic.documents[i].doc_id == doc_id) return &sentences[i];
    }
    return nullptr;
  }

  const Sentence* find(const SentenceRef& ref) const {
    const auto* doc = document_sentences(ref.doc_id);
    if (!doc || ref.index >= doc->size()) return nullptr;
    return &(*doc)[ref.index];
  }
};

inline SegmentedTopic segment_topic(const Topic& topic, const SegmenterOptions& opts = {}) {
  SegmentedTopic st{topic, {}};
  st.sentences.reserve(topic.documents.size());
  for (const auto& d : topic.documents) st.sentences.push_back(segment(d, opts));
  return st;
}

// ---------------------------------------------------------------------------
// json

inline void to_json(json& j, const Document& d) {
  j = json{{"id", d.doc_id}, {"stream", d.stream}, {"text", d.text}, {"char_len", d.char_len}};
  j["importance"] = d.importance ? json(*d.importance) : json(nullptr);
}

inline void from_json(const json& j, Document& d) {
  std::optional<double> imp;
  if (j.contains("importance") && !j.at("importance").is_null()) imp = j.at("importance").get<double>();
  d = Document::make(j.at("id").get<std::string>(), j.value("stream", Stream::Other), j.at("text").get<std::string>(), imp);
}

inline void to_json(json& j, const Topic& t) {
  j = json{{"id", t.topic_id}, {"dataset", t.dataset}, {"documents", t.documents}, {"references", t.reference_summaries}};
}

inline void from_json(const json& j, Topic& t) {
  t.topic_id = j.at("id").get<std::string>();
  t.dataset = j.at("dataset").get<Dataset>();
  t.documents = j.at("documents").get<std::vector<Document>>();
  t.reference_summaries.clear();
  for (const auto& r : j.value("references", json::array())) {
    t.reference_summaries.push_back(r.is_string() ? r.get<std::string>() : r.at("text").get<std::string>());
  }
}

inline void to_json(json& j, const SentenceRef& r) { j = json{{"doc", r.doc_id}, {"index", r.index}}; }
inline void from_json(const json& j, SentenceRef& r) {
  r.doc_id = j.at("doc").get<std::string>();
  r.index = j.at("index").get<std::size_t>();
}

inline void to_json(json& j, const Sentence& s) {
  j = json{{"doc", s.doc_id}, {"index", s.index}, {"text", s.text}, {"start", s.start}, {"end", s.end}};
}
inline void from_json(const json& j, Sentence& s) {
  s.doc_id = j.at("doc").get<std::string>();
  s.index = j.at("index").get<std::size_t>();
  s.text = j.at("text").get<std::string>();
  s.start = j.at("start").get<std::size_t>();
  s.end = j.at("end").get<std::size_t>();
}

}  // namespace attrib
