#pragma once

// HTTP clients for the remote paraphrase provider (POST /generate) and the
// remote scorer (POST /embed, POST /nli, GET /health).

#include <atomic>
#include <chrono>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "httplib.h"
#include "json.hpp"

#include "attrib/attribution.hpp"
#include "attrib/error.hpp"
#include "attrib/summarize.hpp"

namespace attrib {

struct HttpEndpoint {
  std::string base_url;  // scheme://host:port
  std::chrono::milliseconds connect_timeout{5000};
  std::chrono::milliseconds read_timeout{120000};
  std::string bearer_token;
};

inline HttpEndpoint make_endpoint(std::string url) {
  HttpEndpoint ep;
  ep.base_url = std::move(url);
  return ep;
}

namespace detail {

inline std::unique_ptr<httplib::Client> make_client(const HttpEndpoint& ep) {
  if (ep.base_url.rfind("http://", 0) != 0 && ep.base_url.rfind("https://", 0) != 0) {
    throw ConfigError("endpoint url '" + ep.base_url + "' must start with http:// or https://");
  }
  auto c = std::make_unique<httplib::Client>(ep.base_url);
  if (!c->is_valid()) throw ConfigError("invalid endpoint url '" + ep.base_url + "'");
  const auto secs = [](std::chrono::milliseconds ms) {
    return std::pair<time_t, time_t>(ms.count() / 1000, (ms.count() % 1000) * 1000);
  };
  auto [cs, cu] = secs(ep.connect_timeout);
  auto [rs, ru] = secs(ep.read_timeout);
  c->set_connection_timeout(cs, cu);
  c->set_read_timeout(rs, ru);
  c->set_write_timeout(rs, ru);
  c->set_keep_alive(true);
  if (!ep.bearer_token.empty()) c->set_bearer_token_auth(ep.bearer_token);
  return c;
}

}  // namespace detail

// Remote generator. Transport errors and 5xx are thrown as plain runtime
// errors so generate_with_retry retries them; 4xx is final.
class HttpProvider : public ParaphraseProvider {
 public:
  explicit HttpProvider(HttpEndpoint ep, std::optional<int> max_tokens = std::nullopt, json provider_params = nullptr)
      : ep_(std::move(ep)), max_tokens_(max_tokens), params_(std::move(provider_params)) {}

  std::string id() const override { return "http:" + ep_.base_url; }

  std::string generate(const std::string& prompt) override {
    json req = {{"prompt", prompt}};
    if (max_tokens_) req["max_tokens"] = *max_tokens_;
    if (!params_.is_null()) req["provider_params"] = params_;
    // httplib clients are not safe for concurrent use; one per call keeps
    // the provider thread-safe.
    auto client = detail::make_client(ep_);
    auto res = client->Post("/generate", req.dump(), "application/json");
    if (!res) throw std::runtime_error("POST /generate: " + httplib::to_string(res.error()));
    if (res->status >= 500) throw std::runtime_error("POST /generate: HTTP " + std::to_string(res->status));
    if (res->status != 200) {
      throw ProviderError("POST /generate: HTTP " + std::to_string(res->status) + ": " + res->body, prompt_hash(prompt));
    }
    try {
      return json::parse(res->body).at("completion").get<std::string>();
    } catch (const json::exception& e) {
      throw ProviderError(std::string("malformed /generate response: ") + e.what(), prompt_hash(prompt));
    }
  }

 private:
  HttpEndpoint ep_;
  std::optional<int> max_tokens_;
  json params_;
};

struct HttpScorerOptions {
  std::size_t pool_size = 1;  // connections; each serves one request at a time
  std::size_t max_attempts = 3;
  std::chrono::milliseconds backoff{200};
  double norm_tolerance = 1e-3;
  double simplex_tolerance = 1e-5;
};

class HttpScorer : public Scorer {
 public:
  explicit HttpScorer(HttpEndpoint ep, HttpScorerOptions opts = {}) : ep_(std::move(ep)), opts_(opts) {
    for (std::size_t i = 0; i < std::max<std::size_t>(1, opts_.pool_size); ++i) {
      auto c = std::make_unique<Conn>();
      c->client = detail::make_client(ep_);
      conns_.push_back(std::move(c));
    }
  }

  std::vector<EmbeddingVector> embed(std::span<const std::string> texts) override {
    if (texts.empty()) return {};
    const json resp = call("/embed", json{{"texts", std::vector<std::string>(texts.begin(), texts.end())}});
    std::vector<EmbeddingVector> out;
    try {
      const auto& vecs = resp.at("vectors");
      const auto dim = resp.contains("dim") ? resp.at("dim").get<std::size_t>() : 0;
      if (vecs.size() != texts.size()) {
        throw ScorerError("/embed returned " + std::to_string(vecs.size()) + " vectors for " + std::to_string(texts.size()) + " texts",
                          false);
      }
      for (const auto& v : vecs) {
        EmbeddingVector e{v.get<std::vector<double>>()};
        if (dim && e.dim() != dim) throw ScorerError("/embed vector dimension disagrees with declared dim", false);
        if (!out.empty() && e.dim() != out.front().dim()) throw ScorerError("/embed vectors of mixed dimension", false);
        double n2 = 0;
        for (double x : e.values) n2 += x * x;
        if (std::abs(std::sqrt(n2) - 1.0) > opts_.norm_tolerance) throw ScorerError("/embed vector is not unit norm", false);
        normalize(e);
        out.push_back(std::move(e));
      }
    } catch (const json::exception& e) {
      throw ScorerError(std::string("malformed /embed response: ") + e.what(), false);
    }
    check_dim(out.front().dim());
    return out;
  }

  std::vector<NliProbs> nli(std::span<const NliPair> pairs) override {
    if (pairs.empty()) return {};
    json req = {{"pairs", json::array()}};
    for (const auto& p : pairs) req["pairs"].push_back({{"premise", p.premise}, {"hypothesis", p.hypothesis}});
    const json resp = call("/nli", req);
    std::vector<NliProbs> out;
    try {
      const auto& probs = resp.at("probs");
      if (probs.size() != pairs.size()) {
        throw ScorerError("/nli returned " + std::to_string(probs.size()) + " results for " + std::to_string(pairs.size()) + " pairs",
                          false);
      }
      for (const auto& p : probs) {
        NliProbs n{p.at("entail").get<double>(), p.at("neutral").get<double>(), p.at("contradict").get<double>()};
        if (!n.valid(opts_.simplex_tolerance)) throw ScorerError("/nli probabilities off the simplex", false);
        out.push_back(n);
      }
    } catch (const json::exception& e) {
      throw ScorerError(std::string("malformed /nli response: ") + e.what(), false);
    }
    return out;
  }

  std::vector<std::string> model_ids() const override {
    std::lock_guard lock(ids_mu_);
    if (!model_ids_) {
      auto client = detail::make_client(ep_);
      auto res = client->Get("/health");
      if (!res) throw ScorerError("GET /health: " + httplib::to_string(res.error()), true);
      if (res->status != 200) throw ScorerError("GET /health: HTTP " + std::to_string(res->status), res->status >= 500);
      try {
        model_ids_ = json::parse(res->body).at("model_ids").get<std::vector<std::string>>();
      } catch (const json::exception& e) {
        throw ScorerError(std::string("malformed /health response: ") + e.what(), false);
      }
    }
    return *model_ids_;
  }

  bool concurrent() const override { return true; }

 private:
  struct Conn {
    std::unique_ptr<httplib::Client> client;
    std::mutex mu;
  };

  json call(const char* path, const json& body) {
    const auto payload = body.dump();
    auto backoff = opts_.backoff;
    std::string last;
    for (std::size_t attempt = 1; attempt <= std::max<std::size_t>(1, opts_.max_attempts); ++attempt) {
      httplib::Result res;
      {
        auto& conn = *conns_[next_.fetch_add(1) % conns_.size()];
        std::lock_guard lock(conn.mu);
        res = conn.client->Post(path, payload, "application/json");
      }
      if (res && res->status == 200) {
        try {
          return json::parse(res->body);
        } catch (const json::exception& e) {
          throw ScorerError(std::string(path) + ": response is not JSON: " + e.what(), false);
        }
      }
      if (res && res->status < 500) {
        throw ScorerError(std::string(path) + ": HTTP " + std::to_string(res->status) + ": " + res->body, false);
      }
      last = res ? "HTTP " + std::to_string(res->status) : httplib::to_string(res.error());
      if (attempt < opts_.max_attempts) {
        std::this_thread::sleep_for(backoff);
        backoff *= 2;
      }
    }
    throw ScorerError(std::string(path) + ": " + last, true);
  }

  void check_dim(std::size_t d) {
    std::size_t expected = 0;
    if (!dim_.compare_exchange_strong(expected, d) && expected != d) {
      throw ScorerError("embedding dimension changed between batches (" + std::to_string(expected) + " vs " + std::to_string(d) + ")",
                        false);
    }
  }

  HttpEndpoint ep_;
  HttpScorerOptions opts_;
  std::vector<std::unique_ptr<Conn>> conns_;
  std::atomic<std::size_t> next_{0};
  std::atomic<std::size_t> dim_{0};
  mutable std::mutex ids_mu_;
  mutable std::optional<std::vector<std::string>> model_ids_;
};

}  // namespace attrib
