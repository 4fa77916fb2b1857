#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "krtest/corpus.hpp"
#include "krtest/teacher_client.hpp"

namespace krtest {

// One KR-Test instance: shared context, factually correct continuation,
// adversarially similar incorrect continuation, source passage key.
struct ContrastiveTuple {
  std::string context;
  std::string sentence_true;
  std::string sentence_false;
  int64_t location = 0;
};

// Content hash of (context, sentence_true, sentence_false, location); stable
// identity across re-runs, used for dedup and decision keying.
std::string tuple_id(const ContrastiveTuple& t);

struct Provenance {
  std::string teacher_model;
  std::string prompt_version;
  std::string corpus_fingerprint;
  int n_per_passage = 0;
};

struct Dataset {
  std::vector<ContrastiveTuple> tuples;
  Provenance provenance;
};

enum class Verdict { accept, reject, flag };

struct CheckResult {
  std::string name;
  bool passed = true;
  bool hard = true;
  std::string detail;
};

struct ValidationReport {
  std::string tuple_id;
  std::vector<CheckResult> checks;
  Verdict verdict = Verdict::accept;
};

struct ValidationOptions {
  // Hard: min(|x+|,|x-|)/max(|x+|,|x-|) over whitespace tokens.
  double min_length_ratio = 0.6;
  // Soft: fraction of x+ content tokens also present in the passage.
  double min_grounding_overlap = 0.3;
  // Soft: fraction of whitespace tokens in which x+ and x- may differ.
  double max_token_diff = 0.4;
};

inline constexpr const char* kGenerationPromptVersion = "kr-gen-v1";

// System+user pair instructing the teacher to emit exactly n tuples as a JSON
// array of {context, sentence_true, sentence_false} objects.
std::vector<ChatMessage> build_generation_prompt(
    const Passage& passage, int n, const std::string& prompt_version = kGenerationPromptVersion);

struct GenerationOutcome {
  std::vector<ContrastiveTuple> tuples;  // teacher order, locations set
  std::vector<std::string> warnings;
};

// One teacher call per passage; unparsable output is retried once with a
// repair instruction, then dropped with a warning. Never raises on schema
// problems; transport errors propagate.
GenerationOutcome generate_tuples(const TeacherClient& client, const Passage& passage, int n,
                                  const std::string& prompt_version = kGenerationPromptVersion);

// Hard checks reject, soft checks flag; every outcome is a report.
ValidationReport validate_tuple(const ContrastiveTuple& t, const Passage& passage,
                                const ValidationOptions& opts = {});

enum class FilterPolicy { strict, permissive };

struct FilterOutcome {
  Dataset dataset;
  std::vector<ValidationReport> reports;  // one per input tuple
  std::vector<std::string> warnings;      // duplicates dropped, etc.
};

// strict keeps accept; permissive keeps accept and flag. Tuples whose location
// does not resolve in the index are rejected, duplicates dropped.
FilterOutcome filter_dataset(const std::vector<ContrastiveTuple>& tuples,
                             const CorpusIndex& index, FilterPolicy policy,
                             const ValidationOptions& opts = {}, Provenance provenance = {});

struct GenerateDatasetOptions {
  int n_per_passage = 1;
  FilterPolicy policy = FilterPolicy::strict;
  ValidationOptions validation;
  std::string prompt_version = kGenerationPromptVersion;
};

struct GenerateDatasetOutcome {
  Dataset dataset;
  std::vector<ValidationReport> reports;
  std::vector<std::string> warnings;
};

// Full generation pass: every passage in the index, concurrent up to the
// client's in-flight bound, assembled in (passage order, teacher order).
GenerateDatasetOutcome generate_dataset(const TeacherClient& client, const CorpusIndex& index,
                                        const GenerateDatasetOptions& opts);

// Newline-delimited JSON: one provenance header record, then one record per
// tuple with exactly the keys context/location/sentence_false/sentence_true.
std::string serialize_dataset(const Dataset& d);
void write_dataset(const Dataset& d, const std::string& path);
Dataset read_dataset(const std::string& path);

std::string dataset_fingerprint(const Dataset& d);

// Strict single-object parse (exactly the four tuple keys).
ContrastiveTuple tuple_from_json(const nlohmann::json& record, size_t line = 0);

// Teacher-driven segmentation: prompt and proposal adapter for
// SegmentMode::teacher.
std::vector<ChatMessage> build_segmentation_prompt(const std::string& text);
SegmentProposalFn make_teacher_segmenter(std::shared_ptr<TeacherClient> client);

}  // namespace krtest
