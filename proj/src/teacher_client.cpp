#include "krtest/teacher_client.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <thread>

#include <httplib.h>

#include "krtest/errors.hpp"
#include "krtest/text.hpp"

namespace krtest {

using nlohmann::json;

namespace {

std::string now_iso8601() {
  using namespace std::chrono;
  auto now = system_clock::now();
  auto ms = duration_cast<milliseconds>(now.time_since_epoch()) % 1000;
  std::time_t t = system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[80];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900,
                tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec,
                static_cast<int>(ms.count()));
  return buf;
}

std::string excerpt(const std::string& body, size_t limit = 200) {
  if (body.size() <= limit) return body;
  return body.substr(0, limit) + "...";
}

// Splits "http://host:port/prefix" into base and path prefix.
std::pair<std::string, std::string> split_endpoint(const std::string& endpoint) {
  auto scheme_end = endpoint.find("://");
  size_t path_start = scheme_end == std::string::npos
                          ? endpoint.find('/')
                          : endpoint.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {endpoint, ""};
  std::string prefix = endpoint.substr(path_start);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {endpoint.substr(0, path_start), prefix};
}

}  // namespace

std::string role_name(Role role) {
  switch (role) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
  }
  return "user";
}

RunLog::RunLog(const std::string& path) : file_(path, std::ios::binary | std::ios::app) {
  if (!file_) throw IoError("cannot open run log: " + path);
}

uint64_t RunLog::next_request_id() { return next_id_.fetch_add(1); }

void RunLog::append(json record) {
  record["timestamp"] = now_iso8601();
  std::lock_guard<std::mutex> lk(m_);
  if (file_.is_open()) file_ << record.dump() << "\n" << std::flush;
  records_.push_back(std::move(record));
}

std::vector<json> RunLog::records() const {
  std::lock_guard<std::mutex> lk(m_);
  return records_;
}

size_t RunLog::size() const {
  std::lock_guard<std::mutex> lk(m_);
  return records_.size();
}

TeacherClient::TeacherClient(TeacherConfig cfg, std::shared_ptr<RunLog> log)
    : cfg_(std::move(cfg)),
      log_(log ? std::move(log) : std::make_shared<RunLog>()),
      inflight_(std::make_unique<Semaphore>(cfg_.max_in_flight == 0 ? 1 : cfg_.max_in_flight)) {}

std::string TeacherClient::complete_chat(const std::vector<ChatMessage>& messages) const {
  return complete_chat(messages, cfg_.decoding);
}

std::string TeacherClient::complete_chat(const std::vector<ChatMessage>& messages,
                                         const DecodingParams& params) const {
  if (messages.empty()) throw PreconditionError("complete_chat: messages is empty");
  if (params.temperature < 0) throw PreconditionError("complete_chat: temperature < 0");
  if (params.max_output_tokens < 1)
    throw PreconditionError("complete_chat: max_output_tokens < 1");
  if (cfg_.retry.max_attempts < 1) throw PreconditionError("complete_chat: max_attempts < 1");

  json body;
  body["model"] = cfg_.model;
  json msgs = json::array();
  for (const auto& m : messages) msgs.push_back({{"role", role_name(m.role)}, {"content", m.content}});
  body["messages"] = std::move(msgs);
  body["temperature"] = params.temperature;
  body["max_tokens"] = params.max_output_tokens;
  if (cfg_.supports_seed && params.seed) body["seed"] = *params.seed;
  const std::string payload = body.dump();

  auto [base, prefix] = split_endpoint(cfg_.endpoint);
  const std::string path = prefix + "/chat/completions";

  SemaphoreGuard guard(*inflight_);
  httplib::Client cli(base);
  cli.set_connection_timeout(std::chrono::milliseconds(static_cast<int64_t>(cfg_.timeout_s * 1000)));
  cli.set_read_timeout(std::chrono::milliseconds(static_cast<int64_t>(cfg_.timeout_s * 1000)));
  httplib::Headers headers;
  if (!cfg_.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg_.api_key);

  const int max_attempts = cfg_.retry.max_attempts;
  std::string last_error;
  for (int attempt = 1; attempt <= max_attempts; ++attempt) {
    const uint64_t request_id = log_->next_request_id();
    json record;
    record["request_id"] = request_id;
    record["attempt"] = attempt;
    record["request"] = {{"url", base + path}, {"body", body}};

    auto res = cli.Post(path, headers, payload, "application/json");
    const bool retryable =
        !res || res->status == 429 || (res->status >= 500 && res->status < 600);

    if (res) {
      record["response"] = {{"status", res->status}, {"body", excerpt(res->body, 4096)}};
    } else {
      record["error"] = "transport: " + httplib::to_string(res.error());
    }

    if (res && res->status == 200) {
      log_->append(std::move(record));
      json doc = json::parse(res->body, nullptr, false);
      if (doc.is_discarded() || !doc.contains("choices") || !doc["choices"].is_array() ||
          doc["choices"].empty() || !doc["choices"][0].contains("message") ||
          !doc["choices"][0]["message"].contains("content"))
        throw ProtocolError("malformed chat completion response: " + excerpt(res->body));
      return doc["choices"][0]["message"]["content"].get<std::string>();
    }

    if (!retryable) {
      log_->append(std::move(record));
      throw ProtocolError("teacher endpoint returned HTTP " + std::to_string(res->status) +
                          ": " + excerpt(res->body));
    }

    last_error = res ? "HTTP " + std::to_string(res->status)
                     : "transport: " + httplib::to_string(res.error());
    if (attempt < max_attempts) {
      double wait_ms =
          cfg_.retry.base_backoff_ms * std::pow(cfg_.retry.backoff_multiplier, attempt - 1);
      record["backoff_ms"] = wait_ms;
      log_->append(std::move(record));
      std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(wait_ms));
    } else {
      log_->append(std::move(record));
    }
  }
  throw TransportError("delivery failed after " + std::to_string(max_attempts) +
                       " attempts (last: " + last_error + ")");
}

std::string complete_chat(const std::string& endpoint, const std::string& model,
                          const std::vector<ChatMessage>& messages, const DecodingParams& params,
                          const RetryPolicy& retry, std::shared_ptr<RunLog> log) {
  TeacherConfig cfg;
  cfg.endpoint = endpoint;
  cfg.model = model;
  cfg.decoding = params;
  cfg.retry = retry;
  TeacherClient client(std::move(cfg), std::move(log));
  return client.complete_chat(messages, params);
}

namespace {

// Scans a balanced JSON object/array starting at `from`; returns one past the
// closing bracket, or npos when unbalanced.
size_t scan_balanced(const std::string& text, size_t from) {
  int depth = 0;
  bool in_string = false;
  for (size_t i = from; i < text.size(); ++i) {
    char c = text[i];
    if (in_string) {
      if (c == '\\')
        ++i;
      else if (c == '"')
        in_string = false;
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{' || c == '[') {
      ++depth;
    } else if (c == '}' || c == ']') {
      --depth;
      if (depth == 0) return i + 1;
      if (depth < 0) return std::string::npos;
    }
  }
  return std::string::npos;
}

std::optional<ParsedPayload> try_parse(std::string_view candidate) {
  std::string_view t = trim_view(candidate);
  if (t.empty()) return std::nullopt;
  json v = json::parse(t, nullptr, false);
  if (v.is_discarded()) return std::nullopt;
  return ParsedPayload{std::move(v), std::string(t)};
}

}  // namespace

ParsedPayload parse_json_payload(const std::string& text) {
  // Whole text (bare values and clean replies).
  if (auto p = try_parse(text)) return *p;

  // Contents of each ```fenced``` block, language tag ignored.
  size_t pos = 0;
  while ((pos = text.find("```", pos)) != std::string::npos) {
    size_t content = text.find('\n', pos + 3);
    if (content == std::string::npos) break;
    size_t close = text.find("```", content);
    if (close == std::string::npos) break;
    if (auto p = try_parse(std::string_view(text).substr(content, close - content))) return *p;
    pos = close + 3;
  }

  // First balanced object/array embedded in prose.
  for (size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '{' && text[i] != '[') continue;
    size_t end = scan_balanced(text, i);
    if (end == std::string::npos) continue;
    if (auto p = try_parse(std::string_view(text).substr(i, end - i))) return *p;
  }

  throw PayloadParseError("no parsable JSON value in model reply", text);
}

}  // namespace krtest
