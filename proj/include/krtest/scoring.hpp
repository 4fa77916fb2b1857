#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "krtest/backends.hpp"
#include "krtest/generation.hpp"

namespace krtest {

enum class Outcome { correct, incorrect, tie };

std::string outcome_name(Outcome o);

// One likelihood comparison: cumulative logprobs of both continuations over
// the first T = min(|x+|, |x-|) tokens, correct on strict inequality.
struct KRDecision {
  std::string tuple_id;
  size_t T = 0;
  double lp_true = 0.0;
  double lp_false = 0.0;
  Outcome outcome = Outcome::tie;
  bool straddle = false;
  bool degenerate = false;  // a continuation had no scored tokens; excluded from accuracy
};

struct LocationStat {
  size_t n = 0;
  size_t n_correct = 0;
};

struct KRReport {
  double accuracy = 0.0;  // n_correct / n_total; ties count as incorrect
  size_t n_total = 0;     // decisions included in accuracy
  size_t n_correct = 0;
  size_t n_tie = 0;
  size_t n_degenerate = 0;
  size_t n_error = 0;
  std::map<int64_t, LocationStat> per_location;
  std::string backend_id;
  std::string dataset_fingerprint;
  std::vector<KRDecision> decisions;  // dataset order
  std::vector<std::pair<std::string, std::string>> errors;  // (tuple_id, message)
};

// Truncates both continuations to the shorter token count and compares the
// cumulative logprob sums; exact float comparison, ties reported as ties.
KRDecision kr_decide(const ScoredContinuation& scored_true,
                     const ScoredContinuation& scored_false);

// Exactly two score_continuation calls with identical context; straddle flags
// propagate; empty scored continuations yield a degenerate decision.
KRDecision evaluate_tuple(ScoringBackend& backend, const ContrastiveTuple& t);

struct EvalOptions {
  std::optional<size_t> sample_k;  // seeded random subset for cheap mid-training checks
  uint64_t seed = 0;
  bool fail_fast = false;  // default skips failed tuples, recording errors
};

// One decision per (sampled) tuple; aggregation is independent of evaluation
// order. Raises EvaluationError when no tuple produced a countable decision.
KRReport evaluate_dataset(ScoringBackend& backend, const Dataset& d,
                          const EvalOptions& opts = {});

struct ReportDelta {
  double overall_delta = 0.0;
  std::map<int64_t, double> per_location;  // locations with counts in both reports
};

// Refuses to compare reports from different dataset fingerprints.
ReportDelta compare_reports(const KRReport& a, const KRReport& b);

// Report file: the KRReport fields plus a decisions array.
std::string serialize_report(const KRReport& r);
void write_report(const KRReport& r, const std::string& path);
KRReport read_report(const std::string& path);

// Deterministic k-subset of [0, n), ascending. Exposed for tests.
std::vector<size_t> sample_indices(size_t n, size_t k, uint64_t seed);

}  // namespace krtest
