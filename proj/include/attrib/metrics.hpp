#pragma once

// Content agreement between a machine summary and human references:
// ROUGE-2 and a soft sentence-bigram SMART-2 approximation.

#include <algorithm>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "attrib/attribution.hpp"
#include "attrib/text.hpp"

namespace attrib::metrics {

enum class Aggregation { Max, Mean };

NLOHMANN_JSON_SERIALIZE_ENUM(Aggregation, {{Aggregation::Max, "max"}, {Aggregation::Mean, "mean"}})

struct PRF {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
};

inline double harmonic(double p, double r) { return (p + r) > 0 ? 2 * p * r / (p + r) : 0.0; }

inline PRF make_prf(double p, double r) { return {p, r, harmonic(p, r)}; }

// Max picks the reference with the best F1 (first on ties). Mean averages
// precision and recall and takes F1 of the averages.
inline PRF aggregate(const std::vector<PRF>& per_ref, Aggregation agg) {
  if (per_ref.empty()) return {};
  if (agg == Aggregation::Max) {
    return *std::max_element(per_ref.begin(), per_ref.end(), [](const PRF& a, const PRF& b) { return a.f1 < b.f1; });
  }
  double p = 0, r = 0;
  for (const auto& x : per_ref) {
    p += x.precision;
    r += x.recall;
  }
  const auto n = static_cast<double>(per_ref.size());
  return make_prf(p / n, r / n);
}

struct Rouge2 {
  PRF score;
  std::vector<PRF> per_reference;
};

inline std::map<std::string, std::size_t> bigram_counts(std::string_view s) {
  std::map<std::string, std::size_t> out;
  for (auto& g : text::word_bigrams(s)) ++out[g];
  return out;
}

inline PRF rouge2_single(const std::map<std::string, std::size_t>& cand, const std::map<std::string, std::size_t>& ref) {
  std::size_t overlap = 0, n_cand = 0, n_ref = 0;
  for (const auto& [g, c] : cand) n_cand += c;
  for (const auto& [g, c] : ref) {
    n_ref += c;
    if (auto it = cand.find(g); it != cand.end()) overlap += std::min(c, it->second);
  }
  const double p = n_cand ? static_cast<double>(overlap) / static_cast<double>(n_cand) : 0.0;
  const double r = n_ref ? static_cast<double>(overlap) / static_cast<double>(n_ref) : 0.0;
  return make_prf(p, r);
}

inline Rouge2 rouge2(std::string_view candidate, const std::vector<std::string>& references, Aggregation agg = Aggregation::Max) {
  if (references.empty()) throw std::invalid_argument("rouge2 needs at least one reference");
  const auto cand = bigram_counts(candidate);
  Rouge2 out;
  for (const auto& r : references) out.per_reference.push_back(rouge2_single(cand, bigram_counts(r)));
  out.score = aggregate(out.per_reference, agg);
  return out;
}

// Sentence similarity in [0, 1], symmetric.
using SentenceMatcher = std::function<double(const std::string&, const std::string&)>;

inline double exact_match(const std::string& a, const std::string& b) {
  return text::normalize_whitespace(a) == text::normalize_whitespace(b) ? 1.0 : 0.0;
}

inline double lexical_cosine_match(const std::string& a, const std::string& b) {
  return std::clamp(cosine(LexicalScorer::embed_one(a), LexicalScorer::embed_one(b)), 0.0, 1.0);
}

struct Smart2 {
  PRF score;
  std::vector<PRF> per_reference;
};

using SentencePair = std::pair<std::size_t, std::size_t>;

// Consecutive sentence pairs; a single sentence pairs with itself.
inline std::vector<SentencePair> sentence_bigrams(std::size_t n) {
  std::vector<SentencePair> out;
  if (n == 1) out.emplace_back(0, 0);
  for (std::size_t i = 0; i + 1 < n; ++i) out.emplace_back(i, i + 1);
  return out;
}

// Soft-match mass of a greedy one-to-one matching between candidate and
// reference sentence bigrams. Pair similarity is the mean of the two
// aligned sentence similarities.
inline double greedy_bigram_match(const std::vector<std::vector<double>>& sim, const std::vector<SentencePair>& cb,
                                  const std::vector<SentencePair>& rb) {
  struct Edge {
    double w;
    std::size_t i, j;
  };
  std::vector<Edge> edges;
  edges.reserve(cb.size() * rb.size());
  for (std::size_t i = 0; i < cb.size(); ++i) {
    for (std::size_t j = 0; j < rb.size(); ++j) {
      edges.push_back({0.5 * (sim[cb[i].first][rb[j].first] + sim[cb[i].second][rb[j].second]), i, j});
    }
  }
  std::stable_sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) { return a.w > b.w; });
  std::vector<char> used_c(cb.size(), 0), used_r(rb.size(), 0);
  double mass = 0;
  for (const auto& e : edges) {
    if (used_c[e.i] || used_r[e.j]) continue;
    used_c[e.i] = used_r[e.j] = 1;
    mass += e.w;
  }
  return mass;
}

inline PRF smart2_single(const std::vector<std::string>& cand, const std::vector<std::string>& ref, const SentenceMatcher& matcher) {
  if (cand.empty() || ref.empty()) return {};
  std::vector<std::vector<double>> sim(cand.size(), std::vector<double>(ref.size()));
  for (std::size_t i = 0; i < cand.size(); ++i) {
    for (std::size_t j = 0; j < ref.size(); ++j) sim[i][j] = std::clamp(matcher(cand[i], ref[j]), 0.0, 1.0);
  }
  const auto cb = sentence_bigrams(cand.size());
  const auto rb = sentence_bigrams(ref.size());
  const double mass = greedy_bigram_match(sim, cb, rb);
  return make_prf(mass / static_cast<double>(cb.size()), mass / static_cast<double>(rb.size()));
}

inline Smart2 smart2(const std::vector<std::string>& candidate, const std::vector<std::vector<std::string>>& references,
                     const SentenceMatcher& matcher = lexical_cosine_match, Aggregation agg = Aggregation::Max) {
  Smart2 out;
  for (const auto& r : references) out.per_reference.push_back(smart2_single(candidate, r, matcher));
  out.score = aggregate(out.per_reference, agg);
  return out;
}

struct MetricReport {
  PRF rouge2;
  double smart2 = 0;
  std::vector<PRF> rouge2_per_reference;
  std::vector<double> smart2_per_reference;
  Aggregation aggregation = Aggregation::Max;
};

inline MetricReport evaluate(const std::string& candidate, const std::vector<std::string>& references,
                             Aggregation agg = Aggregation::Max, const SegmenterOptions& seg = {},
                             const SentenceMatcher& matcher = lexical_cosine_match) {
  auto sentences_of = [&](const std::string& t) {
    std::vector<std::string> out;
    for (auto& s : segment(Document::make("m", Stream::Other, t), seg)) out.push_back(std::move(s.text));
    return out;
  };
  MetricReport rep;
  rep.aggregation = agg;
  const auto r2 = rouge2(candidate, references, agg);
  rep.rouge2 = r2.score;
  rep.rouge2_per_reference = r2.per_reference;
  std::vector<std::vector<std::string>> ref_sents;
  for (const auto& r : references) ref_sents.push_back(sentences_of(r));
  const auto s2 = smart2(sentences_of(candidate), ref_sents, matcher, agg);
  rep.smart2 = s2.score.f1;
  for (const auto& p : s2.per_reference) rep.smart2_per_reference.push_back(p.f1);
  return rep;
}

// key=value lines, one metric per line.
inline std::string format_report(const MetricReport& r, const std::vector<std::string>& reference_names = {}) {
  std::ostringstream out;
  auto num = [](double v) { return detail::fmt_double(v); };
  out << "aggregation=" << json(r.aggregation).get<std::string>() << '\n';
  out << "references=" << r.rouge2_per_reference.size() << '\n';
  out << "rouge2.precision=" << num(r.rouge2.precision) << '\n';
  out << "rouge2.recall=" << num(r.rouge2.recall) << '\n';
  out << "rouge2.f1=" << num(r.rouge2.f1) << '\n';
  out << "smart2=" << num(r.smart2) << '\n';
  for (std::size_t i = 0; i < r.rouge2_per_reference.size(); ++i) {
    const auto prefix = "reference." + std::to_string(i) + ".";
    if (i < reference_names.size()) out << prefix << "name=" << reference_names[i] << '\n';
    out << prefix << "rouge2.f1=" << num(r.rouge2_per_reference[i].f1) << '\n';
    out << prefix << "smart2=" << num(r.smart2_per_reference[i]) << '\n';
  }
  return out.str();
}

}  // namespace attrib::metrics
