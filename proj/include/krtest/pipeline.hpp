#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "krtest/oracle.hpp"

namespace krtest {

struct CheckpointSpec {
  std::string label;           // unique across the run
  std::string series = "kr";   // one polyline per series
  double axis_value = 0.0;     // step number or parameter count
  BackendConfig backend;
};

enum class SweepAxis { step, parameter_count };

struct RunConfig {
  std::string config_path;  // source file; fingerprinted into the manifest
  std::string corpus_path;
  CorpusFormat corpus_format = CorpusFormat::plain;
  SegmentMode segment_mode = SegmentMode::rule_based;
  size_t min_passage_chars = 200;
  std::string dataset_path;  // set: skip generation
  int n_per_passage = 3;
  FilterPolicy policy = FilterPolicy::strict;
  uint64_t seed = 0;
  std::string out_dir;
  std::optional<TeacherConfig> teacher;
  std::vector<CheckpointSpec> checkpoints;
  bool oracle_enabled = false;
  size_t oracle_question_cap = 25;
  SweepAxis axis = SweepAxis::step;
  std::optional<size_t> sample_k;
  ValidationOptions validation;
};

// Parses and validates a declarative run config. ${VAR} interpolation applies
// to credential fields only, so secrets never land in manifests.
RunConfig load_run_config(const std::string& path);

// Shared sub-parsers for standalone --backend / --teacher config files.
BackendConfig backend_config_from_json(const nlohmann::json& j);
TeacherConfig teacher_config_from_json(const nlohmann::json& j);
BackendConfig load_backend_config(const std::string& path);
TeacherConfig load_teacher_config(const std::string& path);

struct CurvePoint {
  std::string series;
  std::string label;
  double axis_value = 0.0;
  double accuracy = 0.0;
  size_t n_tie = 0;
  size_t n_total = 0;
};

struct SweepCurve {
  std::vector<CurvePoint> points;  // ordered by (series, axis_value)
  std::string metric = "kr_accuracy";
};

// Validates shared dataset fingerprints and accuracy ranges, orders points.
SweepCurve emit_curve(const std::vector<std::pair<CheckpointSpec, KRReport>>& reports);

// CSV columns: label, axis_value, accuracy, n_tie, n_total.
std::string curve_to_csv(const SweepCurve& curve);
// Self-contained SVG; every point carries data-* attributes with the CSV values.
std::string curve_to_svg(const SweepCurve& curve);

struct RunResult {
  std::string dir;
  nlohmann::json manifest;
  std::vector<KRReport> reports;  // one per checkpoint, config order
};

// generate (unless a dataset is supplied) -> evaluate each checkpoint ->
// oracle (optional) -> curve -> manifest. Stage failures halt later stages;
// finished artifacts stay on disk.
RunResult run_pipeline(const RunConfig& config, std::shared_ptr<RunLog> log = nullptr);

// Human-readable table over a run directory's report files.
std::string emit_summary(const std::string& run_dir);

// Exit codes for the CLI (and anything shelling out to it).
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitStage = 3;
inline constexpr int kExitInvariant = 4;

std::string format_double(double v);

}  // namespace krtest
