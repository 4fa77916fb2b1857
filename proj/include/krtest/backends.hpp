#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "krtest/teacher_client.hpp"

namespace krtest {

enum class BoundaryMethod { separate_scoring, char_offset_alignment };

// Per-token natural-log probabilities of a continuation given a context.
struct ScoredContinuation {
  std::vector<std::string> tokens;
  std::vector<double> logprobs;  // same length as tokens
  BoundaryMethod boundary_method = BoundaryMethod::separate_scoring;
  // A token straddled the context/continuation boundary and was excluded.
  bool straddle = false;
};

struct TokenSpan {
  std::string token;
  size_t char_start = 0;
};

struct Alignment {
  size_t first_index = 0;  // may equal tokens.size() when a straddler ate the tail
  bool straddle = false;
};

// Finds where the continuation starts in a tokenization of context+continuation.
// A token straddling the boundary is excluded from the continuation and flagged.
Alignment align_continuation_tokens(const std::vector<TokenSpan>& full_tokens,
                                    size_t context_char_len);

enum class BackendKind { http_logprob, mock };
enum class ScoringMode {
  separate,  // server scores prompt/continuation as distinct fields
  echo       // server echoes prompt logprobs; boundary found by char offset
};

struct BackendConfig {
  BackendKind kind = BackendKind::mock;
  std::string endpoint;  // required for http_logprob
  std::string model = "mock";
  std::string api_key;
  size_t max_in_flight = 4;
  ScoringMode mode = ScoringMode::separate;
  std::string table_path;  // mock kind: JSON table file
  double timeout_s = 120.0;
  RetryPolicy retry;
};

class ScoringBackend {
 public:
  virtual ~ScoringBackend() = default;
  virtual ScoredContinuation score(const std::string& context,
                                   const std::string& continuation) = 0;
  virtual std::string id() const = 0;
  virtual size_t max_in_flight() const { return 4; }
};

// Enforces preconditions, then delegates to backend.score.
ScoredContinuation score_continuation(ScoringBackend& backend, const std::string& context,
                                      const std::string& continuation);

// Mock table key delimiter: U+241E between context and continuation.
extern const char kMockKeySeparator[];
std::string mock_table_key(const std::string& context, const std::string& continuation);

// Deterministic mock backed by an immutable (context, continuation) table.
class MockTableBackend : public ScoringBackend {
 public:
  struct Entry {
    std::vector<std::string> tokens;
    std::vector<double> logprobs;
  };

  MockTableBackend(std::string model_id, std::unordered_map<std::string, Entry> table);
  static MockTableBackend from_file(const std::string& path, const std::string& model_id);

  ScoredContinuation score(const std::string& context, const std::string& continuation) override;
  std::string id() const override { return model_id_; }

 private:
  std::string model_id_;
  std::unordered_map<std::string, Entry> table_;
};

// HTTP backend against {endpoint}/completions. In separate mode the request
// carries {model, prompt, continuation, logprobs:1} and the response holds
// logprobs for the continuation only. In echo mode the request is the classic
// {model, prompt: context+continuation, max_tokens:0, echo:true, logprobs:1}
// and the continuation is sliced out by char-offset alignment.
class HttpLogprobBackend : public ScoringBackend {
 public:
  explicit HttpLogprobBackend(BackendConfig cfg, std::shared_ptr<RunLog> log = nullptr);

  ScoredContinuation score(const std::string& context, const std::string& continuation) override;
  std::string id() const override { return cfg_.model; }
  size_t max_in_flight() const override { return cfg_.max_in_flight; }

 private:
  BackendConfig cfg_;
  std::shared_ptr<RunLog> log_;
  std::unique_ptr<Semaphore> inflight_;
};

std::shared_ptr<ScoringBackend> make_backend(const BackendConfig& cfg,
                                             std::shared_ptr<RunLog> log = nullptr);

}  // namespace krtest
