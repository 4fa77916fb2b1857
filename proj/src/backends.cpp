#include "krtest/backends.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <thread>

#include <httplib.h>

#include "krtest/errors.hpp"

namespace krtest {

using nlohmann::json;

const char kMockKeySeparator[] = "␞";

std::string mock_table_key(const std::string& context, const std::string& continuation) {
  return context + kMockKeySeparator + continuation;
}

Alignment align_continuation_tokens(const std::vector<TokenSpan>& full_tokens,
                                    size_t context_char_len) {
  if (full_tokens.empty()) throw AlignmentError("alignment over empty token list");
  size_t cursor = full_tokens.front().char_start;
  for (const auto& t : full_tokens) {
    if (t.char_start != cursor)
      throw AlignmentError("tokens are not contiguous at char offset " +
                           std::to_string(t.char_start));
    cursor += t.token.size();
  }
  const size_t total = cursor;
  if (context_char_len > total)
    throw AlignmentError("context length " + std::to_string(context_char_len) +
                         " beyond tokenized text of length " + std::to_string(total));

  for (size_t i = 0; i < full_tokens.size(); ++i) {
    size_t start = full_tokens[i].char_start;
    size_t end = start + full_tokens[i].token.size();
    if (start < context_char_len && context_char_len < end) return {i + 1, true};
  }
  for (size_t i = 0; i < full_tokens.size(); ++i)
    if (full_tokens[i].char_start >= context_char_len) return {i, false};
  throw AlignmentError("no token at or after the context boundary");
}

ScoredContinuation score_continuation(ScoringBackend& backend, const std::string& context,
                                      const std::string& continuation) {
  if (continuation.empty()) throw PreconditionError("score_continuation: empty continuation");
  return backend.score(context, continuation);
}

namespace {

void check_entry(const std::vector<std::string>& tokens, const std::vector<double>& logprobs,
                 const std::string& what) {
  if (tokens.size() != logprobs.size() || tokens.empty())
    throw InvariantError(what + ": tokens and logprobs must be same non-zero length");
  for (double lp : logprobs)
    if (lp > 0.0) throw InvariantError(what + ": logprob above 0: " + std::to_string(lp));
}

}  // namespace

MockTableBackend::MockTableBackend(std::string model_id,
                                   std::unordered_map<std::string, Entry> table)
    : model_id_(std::move(model_id)), table_(std::move(table)) {
  for (const auto& [key, e] : table_) check_entry(e.tokens, e.logprobs, "mock table entry");
}

MockTableBackend MockTableBackend::from_file(const std::string& path,
                                             const std::string& model_id) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open mock table: " + path);
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded() || !doc.is_object())
    throw SchemaError("mock table is not a JSON object: " + path);
  std::unordered_map<std::string, Entry> table;
  for (auto& [key, val] : doc.items()) {
    if (!val.contains("tokens") || !val.contains("logprobs"))
      throw SchemaError("mock table entry missing tokens/logprobs: " + key);
    Entry e;
    e.tokens = val["tokens"].get<std::vector<std::string>>();
    e.logprobs = val["logprobs"].get<std::vector<double>>();
    table.emplace(key, std::move(e));
  }
  return MockTableBackend(model_id, std::move(table));
}

ScoredContinuation MockTableBackend::score(const std::string& context,
                                           const std::string& continuation) {
  auto it = table_.find(mock_table_key(context, continuation));
  if (it == table_.end())
    throw LookupError("no mock table entry for context/continuation pair");
  ScoredContinuation out;
  out.tokens = it->second.tokens;
  out.logprobs = it->second.logprobs;
  out.boundary_method = BoundaryMethod::separate_scoring;
  return out;
}

HttpLogprobBackend::HttpLogprobBackend(BackendConfig cfg, std::shared_ptr<RunLog> log)
    : cfg_(std::move(cfg)),
      log_(log ? std::move(log) : std::make_shared<RunLog>()),
      inflight_(std::make_unique<Semaphore>(cfg_.max_in_flight == 0 ? 1 : cfg_.max_in_flight)) {
  if (cfg_.endpoint.empty())
    throw ConfigError("http_logprob backend requires an endpoint");
}

namespace {

std::string body_excerpt(const std::string& body, size_t limit = 200) {
  return body.size() <= limit ? body : body.substr(0, limit) + "...";
}

std::pair<std::string, std::string> split_endpoint(const std::string& endpoint) {
  auto scheme_end = endpoint.find("://");
  size_t path_start = scheme_end == std::string::npos ? endpoint.find('/')
                                                      : endpoint.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {endpoint, ""};
  std::string prefix = endpoint.substr(path_start);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {endpoint.substr(0, path_start), prefix};
}

// POST with teacher-style retry semantics: 429/5xx and transport errors retry
// with exponential backoff, other failures raise immediately.
json post_json_with_retry(const BackendConfig& cfg, RunLog& log, const std::string& path,
                          const json& body) {
  auto [base, prefix] = split_endpoint(cfg.endpoint);
  httplib::Client cli(base);
  cli.set_connection_timeout(std::chrono::milliseconds(static_cast<int64_t>(cfg.timeout_s * 1000)));
  cli.set_read_timeout(std::chrono::milliseconds(static_cast<int64_t>(cfg.timeout_s * 1000)));
  httplib::Headers headers;
  if (!cfg.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg.api_key);
  const std::string payload = body.dump();
  const int max_attempts = cfg.retry.max_attempts < 1 ? 1 : cfg.retry.max_attempts;
  std::string last_error;
  for (int attempt = 1; attempt <= max_attempts; ++attempt) {
    const uint64_t request_id = log.next_request_id();
    json record{{"request_id", request_id},
                {"attempt", attempt},
                {"request", {{"url", base + prefix + path}, {"body", body}}}};
    auto res = cli.Post(prefix + path, headers, payload, "application/json");
    if (res)
      record["response"] = {{"status", res->status}, {"body", body_excerpt(res->body, 4096)}};
    else
      record["error"] = "transport: " + httplib::to_string(res.error());

    if (res && res->status == 200) {
      log.append(std::move(record));
      json doc = json::parse(res->body, nullptr, false);
      if (doc.is_discarded())
        throw ProtocolError("backend returned unparsable body: " + body_excerpt(res->body));
      return doc;
    }
    const bool retryable = !res || res->status == 429 || (res->status >= 500 && res->status < 600);
    if (!retryable) {
      log.append(std::move(record));
      throw ProtocolError("backend returned HTTP " + std::to_string(res->status) + ": " +
                          body_excerpt(res->body));
    }
    last_error = res ? "HTTP " + std::to_string(res->status)
                     : "transport: " + httplib::to_string(res.error());
    if (attempt < max_attempts) {
      double wait_ms = cfg.retry.base_backoff_ms * std::pow(cfg.retry.backoff_multiplier, attempt - 1);
      record["backoff_ms"] = wait_ms;
      log.append(std::move(record));
      std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(wait_ms));
    } else {
      log.append(std::move(record));
    }
  }
  throw TransportError("backend delivery failed after " + std::to_string(max_attempts) +
                       " attempts (last: " + last_error + ")");
}

const json& logprob_block(const json& doc, const std::string& endpoint) {
  if (!doc.contains("choices") || !doc["choices"].is_array() || doc["choices"].empty() ||
      !doc["choices"][0].contains("logprobs") || doc["choices"][0]["logprobs"].is_null())
    throw CapabilityError("endpoint " + endpoint + " did not return token logprobs");
  return doc["choices"][0]["logprobs"];
}

double checked_logprob(const json& v, const std::string& endpoint) {
  if (v.is_null())
    throw CapabilityError("endpoint " + endpoint +
                          " returned a null logprob inside the continuation");
  double lp = v.get<double>();
  if (lp > 0.0)
    throw ProtocolError("backend returned positive logprob " + std::to_string(lp) +
                        "; natural-log probabilities expected");
  return lp;
}

}  // namespace

ScoredContinuation HttpLogprobBackend::score(const std::string& context,
                                             const std::string& continuation) {
  SemaphoreGuard guard(*inflight_);
  ScoredContinuation out;
  if (cfg_.mode == ScoringMode::separate) {
    json body{{"model", cfg_.model},
              {"prompt", context},
              {"continuation", continuation},
              {"logprobs", 1},
              {"max_tokens", 0}};
    json doc = post_json_with_retry(cfg_, *log_, "/completions", body);
    const json& lp = logprob_block(doc, cfg_.endpoint);
    if (!lp.contains("tokens") || !lp.contains("token_logprobs"))
      throw CapabilityError("endpoint " + cfg_.endpoint + " logprobs block lacks tokens");
    out.boundary_method = BoundaryMethod::separate_scoring;
    for (const auto& t : lp["tokens"]) out.tokens.push_back(t.get<std::string>());
    for (const auto& v : lp["token_logprobs"])
      out.logprobs.push_back(checked_logprob(v, cfg_.endpoint));
    if (out.tokens.size() != out.logprobs.size() || out.tokens.empty())
      throw ProtocolError("backend returned mismatched or empty token/logprob arrays");
    return out;
  }

  // echo mode
  json body{{"model", cfg_.model},
            {"prompt", context + continuation},
            {"max_tokens", 0},
            {"echo", true},
            {"logprobs", 1}};
  json doc = post_json_with_retry(cfg_, *log_, "/completions", body);
  const json& lp = logprob_block(doc, cfg_.endpoint);
  if (!lp.contains("tokens") || !lp.contains("token_logprobs") || !lp.contains("text_offset"))
    throw CapabilityError("endpoint " + cfg_.endpoint +
                          " echo response lacks tokens/text_offset");
  std::vector<TokenSpan> spans;
  const auto& toks = lp["tokens"];
  const auto& offs = lp["text_offset"];
  if (toks.size() != offs.size())
    throw ProtocolError("backend returned mismatched tokens/text_offset arrays");
  spans.reserve(toks.size());
  for (size_t i = 0; i < toks.size(); ++i)
    spans.push_back({toks[i].get<std::string>(), offs[i].get<size_t>()});

  Alignment a = align_continuation_tokens(spans, context.size());
  out.boundary_method = BoundaryMethod::char_offset_alignment;
  out.straddle = a.straddle;
  const auto& lps = lp["token_logprobs"];
  for (size_t i = a.first_index; i < spans.size(); ++i) {
    out.tokens.push_back(spans[i].token);
    out.logprobs.push_back(checked_logprob(lps[i], cfg_.endpoint));
  }
  return out;
}

std::shared_ptr<ScoringBackend> make_backend(const BackendConfig& cfg,
                                             std::shared_ptr<RunLog> log) {
  switch (cfg.kind) {
    case BackendKind::mock:
      if (cfg.table_path.empty())
        throw ConfigError("mock backend requires a table file path");
      return std::make_shared<MockTableBackend>(
          MockTableBackend::from_file(cfg.table_path, cfg.model));
    case BackendKind::http_logprob:
      return std::make_shared<HttpLogprobBackend>(cfg, std::move(log));
  }
  throw ConfigError("unknown backend kind");
}

}  // namespace krtest
