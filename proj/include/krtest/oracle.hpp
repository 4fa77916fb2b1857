#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "krtest/scoring.hpp"

namespace krtest {

enum class Choice { A, B };

std::string choice_name(Choice c);

struct OracleQuestion {
  int question_id = 0;  // 1..n within its batch
  std::string context;
  std::string option_a;
  std::string option_b;
  Choice truth_is = Choice::A;  // hidden grading key
  std::string tuple_id;
};

// One source paragraph plus all questions derived from it.
struct OracleBatch {
  int64_t location = 0;
  std::string paragraph;
  std::vector<OracleQuestion> questions;
  uint64_t permutation_seed = 0;
};

struct OracleAnswer {
  std::string tuple_id;
  int64_t location = 0;
  int question_id = 0;
  std::optional<Choice> given;  // unset: unparsed
  Choice truth = Choice::A;
};

struct BatchStat {
  size_t n = 0;  // answered
  size_t n_correct = 0;
};

struct OracleReport {
  double accuracy = 0.0;  // over answered questions
  std::map<int64_t, BatchStat> per_batch;
  size_t unparsed = 0;
  uint64_t permutation_seed = 0;
  std::vector<OracleAnswer> answers;  // every question, (location, id) order
  size_t n_questions = 0;
  std::vector<std::string> errors;
};

// Groups ordered by location, tuples in dataset order within each group.
std::vector<std::pair<int64_t, std::vector<ContrastiveTuple>>> batch_by_location(
    const Dataset& d, const CorpusIndex& index);

// Fair coin per question derived from (seed, tuple_id); adding or removing
// tuples never reshuffles other questions. Question ids run 1..n.
std::vector<OracleQuestion> randomize_options(const std::vector<ContrastiveTuple>& tuples,
                                              uint64_t seed);

// Appendix-style layout: reference paragraph header, then one block per
// question; system message demands a strict JSON id->choice mapping.
std::vector<ChatMessage> build_oracle_prompt(const OracleBatch& batch);

struct GradedBatch {
  size_t answered = 0;
  size_t correct = 0;
  size_t unparsed = 0;
};

// Grades a parsed id->choice mapping against the batch's recorded permutation.
// Unknown ids and values outside {A, B} leave their questions unparsed.
GradedBatch grade_answers(const OracleBatch& batch, const nlohmann::json& mapping,
                          std::vector<OracleAnswer>* answers_out = nullptr);

struct OracleOptions {
  size_t question_cap = 25;  // oversized batches split, paragraph repeated per split
  bool fail_fast = false;
};

// Full golden-standard run: batch, randomize, prompt, query, parse, grade.
OracleReport run_golden_standard(const TeacherClient& client, const Dataset& d,
                                 const CorpusIndex& index, uint64_t seed,
                                 const OracleOptions& opts = {});

struct PairedReport {
  KRReport blind;
  OracleReport oracle;
  double gap = 0.0;  // oracle accuracy - blind accuracy, never clamped
};

PairedReport blind_vs_oracle(ScoringBackend& backend, const TeacherClient& client,
                             const Dataset& d, const CorpusIndex& index, uint64_t seed,
                             const EvalOptions& eval_opts = {},
                             const OracleOptions& oracle_opts = {});

std::string serialize_oracle_report(const OracleReport& r);
void write_oracle_report(const OracleReport& r, const std::string& path);
OracleReport read_oracle_report(const std::string& path);

std::string serialize_paired_report(const PairedReport& r);
void write_paired_report(const PairedReport& r, const std::string& path);

}  // namespace krtest
