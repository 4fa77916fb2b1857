#pragma once

#include <atomic>
#include <cstdint>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "krtest/parallel.hpp"

namespace krtest {

enum class Role { system, user, assistant };

std::string role_name(Role role);

struct ChatMessage {
  Role role = Role::user;
  std::string content;
};

struct DecodingParams {
  double temperature = 0.0;
  int max_output_tokens = 4096;
  std::optional<int64_t> seed;
};

struct RetryPolicy {
  int max_attempts = 3;
  double base_backoff_ms = 500.0;
  double backoff_multiplier = 2.0;
};

// Thread-safe newline-delimited JSON audit log. Assigns the monotonically
// increasing request ids; every outbound request and inbound response is
// recoverable from it.
class RunLog {
 public:
  RunLog() = default;
  explicit RunLog(const std::string& path);

  uint64_t next_request_id();

  // Adds a timestamp and appends; record must already carry its payload.
  void append(nlohmann::json record);

  std::vector<nlohmann::json> records() const;
  size_t size() const;

 private:
  mutable std::mutex m_;
  std::ofstream file_;
  std::vector<nlohmann::json> records_;
  std::atomic<uint64_t> next_id_{1};
};

struct TeacherConfig {
  std::string endpoint;  // e.g. http://127.0.0.1:8080/v1
  std::string model;
  std::string api_key;  // empty: no Authorization header
  DecodingParams decoding;
  RetryPolicy retry;
  double timeout_s = 120.0;
  size_t max_in_flight = 4;
  // The seed field is sent only when the server is known to accept it;
  // determinism is otherwise carried by temperature 0.
  bool supports_seed = false;
};

// Chat-completions client. Safe for concurrent use; issues at most
// max_in_flight requests at a time.
class TeacherClient {
 public:
  explicit TeacherClient(TeacherConfig cfg, std::shared_ptr<RunLog> log = nullptr);

  // POSTs {endpoint}/chat/completions and returns the first choice's message
  // content. 429/5xx retried per policy with exponential backoff; other 4xx
  // fail immediately with a body excerpt; transport failures after
  // max_attempts raise TransportError.
  std::string complete_chat(const std::vector<ChatMessage>& messages) const;
  std::string complete_chat(const std::vector<ChatMessage>& messages,
                            const DecodingParams& params) const;

  const TeacherConfig& config() const { return cfg_; }
  RunLog& log() const { return *log_; }
  std::shared_ptr<RunLog> log_ptr() const { return log_; }

 private:
  TeacherConfig cfg_;
  std::shared_ptr<RunLog> log_;
  mutable std::unique_ptr<Semaphore> inflight_;
};

// One-shot form of TeacherClient::complete_chat.
std::string complete_chat(const std::string& endpoint, const std::string& model,
                          const std::vector<ChatMessage>& messages, const DecodingParams& params,
                          const RetryPolicy& retry, std::shared_ptr<RunLog> log = nullptr);

struct ParsedPayload {
  nlohmann::json value;
  std::string matched;  // the exact substring that parsed
};

// Strips surrounding prose and code fences, then parses the outermost JSON
// value. Raises PayloadParseError carrying the raw text when nothing parses.
ParsedPayload parse_json_payload(const std::string& text);

}  // namespace krtest
