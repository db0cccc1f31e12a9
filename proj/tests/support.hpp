#pragma once

// Shared helpers for the test binaries: fixture paths, seeded generators
// and scratch directories.

#include <unistd.h>

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "attrib/corpus.hpp"

namespace testsupport {

namespace fs = std::filesystem;

inline fs::path fixtures() { return ATTRIB_FIXTURES_DIR; }

inline std::string read(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write(const fs::path& p, const std::string& data) {
  fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << data;
}

// Fresh directory under the system temp dir, removed on destruction.
class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag) {
    static std::atomic<unsigned> counter{0};
    path_ = fs::temp_directory_path() /
            ("attrib-test-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter.fetch_add(1)));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  fs::path path_;
};

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  std::size_t uniform(std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng_); }
  double real(double lo = 0.0, double hi = 1.0) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  bool coin(double p = 0.5) { return real() < p; }

  // Word drawn from a small vocabulary so texts share bigrams often.
  std::string word(std::size_t vocab = 12) {
    static const char* kWords[] = {"river", "flood", "levee", "town", "rain",  "crews", "bridge", "shelter",
                                   "power", "roads", "water", "north", "south", "Storm", "the",   "a",
                                   "of",    "near",  "was",   "closed", "open", "breach", "farm",  "sheep"};
    return kWords[uniform(0, std::min<std::size_t>(vocab, std::size(kWords)) - 1)];
  }

  std::string words(std::size_t lo, std::size_t hi, std::size_t vocab = 12) {
    std::string s;
    const auto n = uniform(lo, hi);
    for (std::size_t i = 0; i < n; ++i) {
      if (i) s += coin(0.1) ? ",  " : " ";
      s += word(vocab);
    }
    return s;
  }

  std::string sentence(std::size_t lo = 2, std::size_t hi = 12, std::size_t vocab = 12) {
    auto s = words(lo, hi, vocab);
    if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
    static const char* kEnd[] = {".", "!", "?", "..."};
    return s + kEnd[uniform(0, 3)];
  }

  std::mt19937_64& rng() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

inline std::vector<attrib::Sentence> as_sentences(const std::vector<std::string>& texts, const std::string& doc = "d") {
  std::vector<attrib::Sentence> out;
  for (std::size_t i = 0; i < texts.size(); ++i) out.push_back({doc, i, texts[i], 0, texts[i].size()});
  return out;
}

}  // namespace testsupport
