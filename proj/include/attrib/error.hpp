#pragma once

#include <stdexcept>
#include <string>

namespace attrib {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CorpusError : public Error {
 public:
  using Error::Error;
};

class SummarizeError : public Error {
 public:
  using Error::Error;
};

// Raised when a paraphrase provider fails. Carries the prompt hash so the
// caller can retry or look the prompt up in the transcript log.
class ProviderError : public SummarizeError {
 public:
  ProviderError(const std::string& what, std::string prompt_hash)
      : SummarizeError(what + " [prompt " + prompt_hash + "]"), prompt_hash_(std::move(prompt_hash)) {}
  const std::string& prompt_hash() const noexcept { return prompt_hash_; }

 private:
  std::string prompt_hash_;
};

class ScorerError : public Error {
 public:
  ScorerError(const std::string& what, bool retryable) : Error(what), retryable_(retryable) {}
  bool retryable() const noexcept { return retryable_; }

 private:
  bool retryable_;
};

class AttributionError : public Error {
 public:
  using Error::Error;
};

class AnnotationError : public Error {
 public:
  using Error::Error;
};

// Label submission rejected. `code` mirrors the HTTP status the service maps it to.
class LabelRejected : public AnnotationError {
 public:
  LabelRejected(const std::string& what, int code) : AnnotationError(what), code_(code) {}
  int code() const noexcept { return code_; }

 private:
  int code_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace attrib
