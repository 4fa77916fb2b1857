#include "krtest/pipeline.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "krtest/errors.hpp"
#include "krtest/hash.hpp"
#include "krtest/text.hpp"

namespace krtest {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write file: " + path);
  out << content;
  if (!out) throw IoError("write failure: " + path);
}

std::string file_fingerprint(const std::string& path) { return fingerprint(read_file(path)); }

// ${VAR} -> environment value; credential fields only, by construction of the
// call sites. Unset variables are a configuration error, not an empty secret.
std::string interpolate_env(const std::string& value) {
  std::string out;
  size_t i = 0;
  while (i < value.size()) {
    if (value[i] == '$' && i + 1 < value.size() && value[i + 1] == '{') {
      size_t close = value.find('}', i + 2);
      if (close == std::string::npos)
        throw ConfigError("unterminated ${ in credential field: " + value);
      std::string name = value.substr(i + 2, close - i - 2);
      const char* v = std::getenv(name.c_str());
      if (v == nullptr)
        throw ConfigError("environment variable " + name + " referenced by config is not set");
      out += v;
      i = close + 1;
    } else {
      out.push_back(value[i++]);
    }
  }
  return out;
}

std::string default_api_key() {
  const char* v = std::getenv("KR_TEST_API_KEY");
  return v == nullptr ? "" : v;
}

RetryPolicy retry_from_json(const json& j) {
  RetryPolicy r;
  r.max_attempts = j.value("max_attempts", r.max_attempts);
  r.base_backoff_ms = j.value("base_backoff_ms", r.base_backoff_ms);
  r.backoff_multiplier = j.value("backoff_multiplier", r.backoff_multiplier);
  if (r.max_attempts < 1) throw ConfigError("retry.max_attempts must be >= 1");
  if (r.backoff_multiplier <= 1.0)
    throw ConfigError("retry.backoff_multiplier must be > 1");
  return r;
}

json parse_json_file(const std::string& path) {
  json doc = json::parse(read_file(path), nullptr, false);
  if (doc.is_discarded()) throw ConfigError("config file is not valid JSON: " + path);
  return doc;
}

}  // namespace

TeacherConfig teacher_config_from_json(const json& j) {
  TeacherConfig cfg;
  if (!j.contains("endpoint") || !j.contains("model"))
    throw ConfigError("teacher config requires endpoint and model");
  cfg.endpoint = j["endpoint"].get<std::string>();
  cfg.model = j["model"].get<std::string>();
  cfg.api_key = j.contains("auth") ? interpolate_env(j["auth"].get<std::string>())
                                   : default_api_key();
  cfg.decoding.temperature = j.value("temperature", 0.0);
  cfg.decoding.max_output_tokens = j.value("max_output_tokens", 4096);
  if (j.contains("seed")) cfg.decoding.seed = j["seed"].get<int64_t>();
  cfg.supports_seed = j.value("supports_seed", false);
  cfg.timeout_s = j.value("timeout_s", 120.0);
  cfg.max_in_flight = j.value("max_in_flight", size_t{4});
  if (j.contains("retry")) cfg.retry = retry_from_json(j["retry"]);
  return cfg;
}

BackendConfig backend_config_from_json(const json& j) {
  BackendConfig cfg;
  std::string kind = j.value("kind", "mock");
  if (kind == "mock") {
    cfg.kind = BackendKind::mock;
    cfg.table_path = j.value("table", "");
    if (cfg.table_path.empty()) throw ConfigError("mock backend config requires a table path");
  } else if (kind == "http_logprob") {
    cfg.kind = BackendKind::http_logprob;
    if (!j.contains("endpoint")) throw ConfigError("http_logprob backend requires endpoint");
    cfg.endpoint = j["endpoint"].get<std::string>();
  } else {
    throw ConfigError("unknown backend kind: " + kind);
  }
  cfg.model = j.value("model", cfg.kind == BackendKind::mock ? "mock" : "");
  if (cfg.model.empty()) throw ConfigError("backend config requires a model identifier");
  cfg.api_key = j.contains("auth") ? interpolate_env(j["auth"].get<std::string>())
                                   : default_api_key();
  std::string mode = j.value("mode", "separate");
  if (mode == "separate")
    cfg.mode = ScoringMode::separate;
  else if (mode == "echo")
    cfg.mode = ScoringMode::echo;
  else
    throw ConfigError("unknown scoring mode: " + mode);
  cfg.max_in_flight = j.value("max_in_flight", size_t{4});
  cfg.timeout_s = j.value("timeout_s", 120.0);
  if (j.contains("retry")) cfg.retry = retry_from_json(j["retry"]);
  return cfg;
}

TeacherConfig load_teacher_config(const std::string& path) {
  return teacher_config_from_json(parse_json_file(path));
}

BackendConfig load_backend_config(const std::string& path) {
  return backend_config_from_json(parse_json_file(path));
}

RunConfig load_run_config(const std::string& path) {
  json j = parse_json_file(path);
  RunConfig cfg;
  cfg.config_path = path;
  cfg.corpus_path = j.value("corpus", "");
  std::string format = j.value("corpus_format", "plain");
  if (format == "plain")
    cfg.corpus_format = CorpusFormat::plain;
  else if (format == "wikitext")
    cfg.corpus_format = CorpusFormat::wikitext;
  else
    throw ConfigError("unknown corpus_format: " + format);
  std::string mode = j.value("segment_mode", "rule_based");
  if (mode == "rule_based")
    cfg.segment_mode = SegmentMode::rule_based;
  else if (mode == "teacher")
    cfg.segment_mode = SegmentMode::teacher;
  else
    throw ConfigError("unknown segment_mode: " + mode);
  cfg.min_passage_chars = j.value("min_passage_chars", size_t{200});
  cfg.dataset_path = j.value("dataset", "");
  cfg.n_per_passage = j.value("n_per_passage", 3);
  std::string policy = j.value("policy", "strict");
  if (policy == "strict")
    cfg.policy = FilterPolicy::strict;
  else if (policy == "permissive")
    cfg.policy = FilterPolicy::permissive;
  else
    throw ConfigError("unknown policy: " + policy);
  cfg.seed = j.value("seed", uint64_t{0});
  cfg.out_dir = j.value("out_dir", "");
  if (j.contains("teacher")) cfg.teacher = teacher_config_from_json(j["teacher"]);
  if (j.contains("checkpoints")) {
    for (const auto& jc : j["checkpoints"]) {
      CheckpointSpec spec;
      if (!jc.contains("label")) throw ConfigError("checkpoint entry requires a label");
      spec.label = jc["label"].get<std::string>();
      spec.series = jc.value("series", "kr");
      spec.axis_value = jc.value("axis_value", 0.0);
      if (!jc.contains("backend")) throw ConfigError("checkpoint entry requires a backend");
      spec.backend = backend_config_from_json(jc["backend"]);
      cfg.checkpoints.push_back(std::move(spec));
    }
  }
  cfg.oracle_enabled = j.value("oracle", json::object()).value("enabled", false);
  cfg.oracle_question_cap = j.value("oracle", json::object()).value("question_cap", size_t{25});
  std::string axis = j.value("axis", "step");
  if (axis == "step")
    cfg.axis = SweepAxis::step;
  else if (axis == "parameter_count")
    cfg.axis = SweepAxis::parameter_count;
  else
    throw ConfigError("unknown axis: " + axis);
  if (j.contains("sample_k")) cfg.sample_k = j["sample_k"].get<size_t>();
  if (j.contains("validation")) {
    const auto& v = j["validation"];
    cfg.validation.min_length_ratio = v.value("min_length_ratio", 0.6);
    cfg.validation.min_grounding_overlap = v.value("min_grounding_overlap", 0.3);
    cfg.validation.max_token_diff = v.value("max_token_diff", 0.4);
  }

  // Referenced paths must resolve at load time.
  if (!cfg.corpus_path.empty() && !fs::exists(cfg.corpus_path))
    throw ConfigError("corpus path does not resolve: " + cfg.corpus_path);
  if (!cfg.dataset_path.empty() && !fs::exists(cfg.dataset_path))
    throw ConfigError("dataset path does not resolve: " + cfg.dataset_path);
  for (const auto& c : cfg.checkpoints)
    if (c.backend.kind == BackendKind::mock && !fs::exists(c.backend.table_path))
      throw ConfigError("mock table path does not resolve: " + c.backend.table_path);
  std::set<std::string> labels;
  for (const auto& c : cfg.checkpoints)
    if (!labels.insert(c.label).second)
      throw ConfigError("duplicate checkpoint label: " + c.label);
  if (cfg.dataset_path.empty() && cfg.corpus_path.empty())
    throw ConfigError("config needs a corpus (to generate) or a dataset (to evaluate)");
  if (cfg.dataset_path.empty() && !cfg.teacher)
    throw ConfigError("generation requires a teacher config");
  if (cfg.oracle_enabled && (!cfg.teacher || cfg.corpus_path.empty()))
    throw ConfigError("oracle stage requires a teacher config and a corpus");
  return cfg;
}

SweepCurve emit_curve(const std::vector<std::pair<CheckpointSpec, KRReport>>& reports) {
  if (reports.empty()) throw PreconditionError("emit_curve: at least one report required");
  const std::string& fp = reports.front().second.dataset_fingerprint;
  SweepCurve curve;
  for (const auto& [spec, report] : reports) {
    if (report.dataset_fingerprint != fp)
      throw ComparisonError("mixed dataset fingerprints in curve input (" + fp + " vs " +
                            report.dataset_fingerprint + ")");
    if (report.accuracy < 0.0 || report.accuracy > 1.0)
      throw InvariantError("accuracy outside [0,1] for checkpoint " + spec.label);
    curve.points.push_back(
        {spec.series, spec.label, spec.axis_value, report.accuracy, report.n_tie,
         report.n_total});
  }
  std::stable_sort(curve.points.begin(), curve.points.end(),
                   [](const CurvePoint& a, const CurvePoint& b) {
                     if (a.series != b.series) return a.series < b.series;
                     return a.axis_value < b.axis_value;
                   });
  return curve;
}

std::string curve_to_csv(const SweepCurve& curve) {
  std::ostringstream os;
  os << "label,axis_value,accuracy,n_tie,n_total\n";
  for (const auto& p : curve.points)
    os << p.label << "," << format_double(p.axis_value) << "," << format_double(p.accuracy)
       << "," << p.n_tie << "," << p.n_total << "\n";
  return os.str();
}

namespace {

const char* kSeriesColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                               "#9467bd", "#8c564b"};

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

}  // namespace

std::string curve_to_svg(const SweepCurve& curve) {
  const double width = 720, height = 440;
  const double left = 64, right = 20, top = 28, bottom = 52;
  const double plot_w = width - left - right, plot_h = height - top - bottom;

  double x_min = curve.points.front().axis_value, x_max = x_min;
  for (const auto& p : curve.points) {
    x_min = std::min(x_min, p.axis_value);
    x_max = std::max(x_max, p.axis_value);
  }
  if (x_min == x_max) {
    x_min -= 1.0;
    x_max += 1.0;
  }
  auto sx = [&](double v) { return left + (v - x_min) / (x_max - x_min) * plot_w; };
  auto sy = [&](double acc) { return top + (1.0 - acc) * plot_h; };

  std::vector<std::string> series;
  for (const auto& p : curve.points)
    if (std::find(series.begin(), series.end(), p.series) == series.end())
      series.push_back(p.series);

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
     << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
  os << "  <rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
  // axes
  os << "  <line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\""
     << top + plot_h << "\" stroke=\"black\"/>\n";
  os << "  <line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\"" << left + plot_w
     << "\" y2=\"" << top + plot_h << "\" stroke=\"black\"/>\n";
  for (double tick : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    os << "  <line x1=\"" << left - 4 << "\" y1=\"" << sy(tick) << "\" x2=\"" << left
       << "\" y2=\"" << sy(tick) << "\" stroke=\"black\"/>\n";
    os << "  <text x=\"" << left - 8 << "\" y=\"" << sy(tick) + 4
       << "\" text-anchor=\"end\" font-size=\"11\" font-family=\"sans-serif\">"
       << format_double(tick) << "</text>\n";
  }
  for (double tick : {x_min, (x_min + x_max) / 2.0, x_max}) {
    os << "  <line x1=\"" << sx(tick) << "\" y1=\"" << top + plot_h << "\" x2=\"" << sx(tick)
       << "\" y2=\"" << top + plot_h + 4 << "\" stroke=\"black\"/>\n";
    os << "  <text x=\"" << sx(tick) << "\" y=\"" << top + plot_h + 18
       << "\" text-anchor=\"middle\" font-size=\"11\" font-family=\"sans-serif\">"
       << format_double(tick) << "</text>\n";
  }
  os << "  <text x=\"" << left + plot_w / 2 << "\" y=\"" << height - 12
     << "\" text-anchor=\"middle\" font-size=\"12\" font-family=\"sans-serif\">checkpoint"
     << "</text>\n";
  os << "  <text x=\"16\" y=\"" << top + plot_h / 2
     << "\" text-anchor=\"middle\" font-size=\"12\" font-family=\"sans-serif\" "
        "transform=\"rotate(-90 16 "
     << top + plot_h / 2 << ")\">" << xml_escape(curve.metric) << "</text>\n";

  for (size_t s = 0; s < series.size(); ++s) {
    const char* color = kSeriesColors[s % (sizeof(kSeriesColors) / sizeof(*kSeriesColors))];
    std::ostringstream pts;
    for (const auto& p : curve.points) {
      if (p.series != series[s]) continue;
      pts << sx(p.axis_value) << "," << sy(p.accuracy) << " ";
    }
    os << "  <polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\""
       << trim(pts.str()) << "\"/>\n";
    for (const auto& p : curve.points) {
      if (p.series != series[s]) continue;
      os << "  <circle cx=\"" << sx(p.axis_value) << "\" cy=\"" << sy(p.accuracy)
         << "\" r=\"3\" fill=\"" << color << "\" data-series=\"" << xml_escape(p.series)
         << "\" data-label=\"" << xml_escape(p.label) << "\" data-x=\""
         << format_double(p.axis_value) << "\" data-y=\"" << format_double(p.accuracy)
         << "\" data-n-tie=\"" << p.n_tie << "\" data-n-total=\"" << p.n_total << "\"/>\n";
    }
    os << "  <text x=\"" << left + 10 + 130 * static_cast<double>(s)
       << "\" y=\"16\" font-size=\"12\" font-family=\"sans-serif\" fill=\"" << color << "\">"
       << xml_escape(series[s]) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

namespace {

// One CLI instance per run directory.
class LockFile {
 public:
  explicit LockFile(const std::string& path) : path_(path) {
    fd_ = ::open(path.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd_ < 0)
      throw ConfigError("run directory is locked (remove " + path + " if stale)");
    std::string pid = std::to_string(::getpid()) + "\n";
    [[maybe_unused]] ssize_t n = ::write(fd_, pid.data(), pid.size());
  }
  ~LockFile() {
    if (fd_ >= 0) {
      ::close(fd_);
      ::unlink(path_.c_str());
    }
  }
  LockFile(const LockFile&) = delete;
  LockFile& operator=(const LockFile&) = delete;

 private:
  std::string path_;
  int fd_ = -1;
};

template <typename Fn>
auto run_stage(const std::string& name, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw StageError("stage " + name + ": " + e.what());
  }
}

}  // namespace

RunResult run_pipeline(const RunConfig& config, std::shared_ptr<RunLog> log) {
  if (config.out_dir.empty()) throw ConfigError("run config requires an output directory");
  if (config.dataset_path.empty() && config.corpus_path.empty())
    throw ConfigError("config needs a corpus (to generate) or a dataset (to evaluate)");
  if (config.dataset_path.empty() && !config.teacher)
    throw ConfigError("generation requires a teacher config");
  if (config.oracle_enabled && (!config.teacher || config.corpus_path.empty()))
    throw ConfigError("oracle stage requires a teacher config and a corpus");

  fs::create_directories(config.out_dir);
  LockFile lock((fs::path(config.out_dir) / ".lock").string());
  if (!log) log = std::make_shared<RunLog>((fs::path(config.out_dir) / "run.log").string());

  RunResult result;
  result.dir = config.out_dir;
  json inputs = json::object();
  json outputs = json::object();  // relative path -> content fingerprint
  auto emit = [&](const std::string& name, const std::string& content) {
    write_file((fs::path(config.out_dir) / name).string(), content);
    outputs[name] = fingerprint(content);
  };

  if (!config.config_path.empty())
    inputs["config"] = {{"path", config.config_path},
                        {"fingerprint", file_fingerprint(config.config_path)}};

  std::shared_ptr<TeacherClient> teacher;
  if (config.teacher) teacher = std::make_shared<TeacherClient>(*config.teacher, log);

  // Stage: corpus ingestion.
  std::optional<CorpusIndex> index;
  if (!config.corpus_path.empty()) {
    run_stage("corpus", [&] {
      IngestOptions opts;
      opts.format = config.corpus_format;
      opts.mode = config.segment_mode;
      opts.min_passage_chars = config.min_passage_chars;
      if (config.segment_mode == SegmentMode::teacher) {
        if (!teacher) throw ConfigError("teacher segmentation requires a teacher config");
        opts.teacher = make_teacher_segmenter(teacher);
      }
      index = ingest_corpus(config.corpus_path, opts);
      inputs["corpus"] = {{"path", config.corpus_path},
                          {"fingerprint", file_fingerprint(config.corpus_path)}};
      emit("corpus_index.json", serialize_index(*index));
      return 0;
    });
  }

  // Stage: dataset (read or generate).
  Dataset dataset;
  run_stage("dataset", [&] {
    if (!config.dataset_path.empty()) {
      dataset = read_dataset(config.dataset_path);
      inputs["dataset"] = {{"path", config.dataset_path},
                           {"fingerprint", file_fingerprint(config.dataset_path)}};
    } else {
      GenerateDatasetOptions opts;
      opts.n_per_passage = config.n_per_passage;
      opts.policy = config.policy;
      opts.validation = config.validation;
      auto generated = generate_dataset(*teacher, *index, opts);
      dataset = std::move(generated.dataset);
      json validation{{"warnings", generated.warnings}};
      json reports = json::array();
      for (const auto& r : generated.reports) {
        json checks = json::array();
        for (const auto& c : r.checks)
          checks.push_back({{"name", c.name}, {"passed", c.passed}, {"hard", c.hard},
                            {"detail", c.detail}});
        reports.push_back({{"tuple_id", r.tuple_id},
                           {"verdict", r.verdict == Verdict::accept     ? "accept"
                                       : r.verdict == Verdict::reject   ? "reject"
                                                                        : "flag"},
                           {"checks", std::move(checks)}});
      }
      validation["reports"] = std::move(reports);
      emit("validation_reports.json", validation.dump(2) + "\n");
      emit("dataset.ndjson", serialize_dataset(dataset));
    }
    if (dataset.tuples.empty()) throw Error("dataset is empty");
    return 0;
  });

  // Stage: evaluate each checkpoint.
  std::vector<std::pair<CheckpointSpec, KRReport>> labeled;
  for (const auto& spec : config.checkpoints) {
    run_stage("evaluate:" + spec.label, [&] {
      auto backend = make_backend(spec.backend, log);
      EvalOptions eval;
      eval.sample_k = config.sample_k;
      eval.seed = config.seed;
      KRReport report = evaluate_dataset(*backend, dataset, eval);
      emit("report_" + spec.label + ".json", serialize_report(report));
      labeled.emplace_back(spec, report);
      result.reports.push_back(std::move(report));
      return 0;
    });
  }

  // Stage: oracle (and the blind-vs-oracle pairing when a blind report exists).
  if (config.oracle_enabled) {
    run_stage("oracle", [&] {
      OracleOptions opts;
      opts.question_cap = config.oracle_question_cap;
      OracleReport oracle = run_golden_standard(*teacher, dataset, *index, config.seed, opts);
      emit("oracle_report.json", serialize_oracle_report(oracle));
      if (!labeled.empty()) {
        PairedReport paired;
        paired.blind = labeled.front().second;
        paired.oracle = oracle;
        paired.gap = paired.oracle.accuracy - paired.blind.accuracy;
        emit("blind_vs_oracle.json", serialize_paired_report(paired));
      }
      return 0;
    });
  }

  // Stage: sweep curve.
  if (!labeled.empty()) {
    run_stage("curve", [&] {
      SweepCurve curve = emit_curve(labeled);
      emit("curve.csv", curve_to_csv(curve));
      emit("curve.svg", curve_to_svg(curve));
      return 0;
    });
  }

  // Manifest: every artifact with a content hash. The run log and lock file
  // are diagnostics, not artifacts, and stay out so reruns stay byte-identical.
  json manifest;
  manifest["inputs"] = std::move(inputs);
  manifest["outputs"] = std::move(outputs);
  manifest["seed"] = config.seed;
  manifest["dataset_fingerprint"] = dataset_fingerprint(dataset);
  write_file((fs::path(config.out_dir) / "manifest.json").string(), manifest.dump(2) + "\n");
  result.manifest = std::move(manifest);
  return result;
}

namespace {

std::string pad(const std::string& s, size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

std::string accuracy_str(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

}  // namespace

std::string emit_summary(const std::string& run_dir) {
  if (!fs::is_directory(run_dir)) throw IoError("not a run directory: " + run_dir);

  std::vector<std::pair<std::string, KRReport>> reports;
  std::vector<std::string> report_files;
  for (const auto& entry : fs::directory_iterator(run_dir)) {
    std::string name = entry.path().filename().string();
    if (name.rfind("report_", 0) == 0 && name.size() > 12 &&
        name.substr(name.size() - 5) == ".json")
      report_files.push_back(name);
  }
  std::sort(report_files.begin(), report_files.end());
  for (const auto& name : report_files) {
    KRReport r = read_report((fs::path(run_dir) / name).string());
    reports.emplace_back(name.substr(7, name.size() - 12), std::move(r));
  }

  std::optional<OracleReport> oracle;
  if (fs::exists(fs::path(run_dir) / "oracle_report.json"))
    oracle = read_oracle_report((fs::path(run_dir) / "oracle_report.json").string());

  if (reports.empty() && !oracle) return "no reports found in " + run_dir + "\n";

  std::ostringstream os;
  os << "run directory: " << run_dir << "\n\n";
  if (!reports.empty()) {
    os << pad("label", 18) << pad("accuracy", 10) << pad("n_total", 9) << pad("n_tie", 7)
       << pad("n_degenerate", 14) << pad("n_error", 8) << "\n";
    for (const auto& [label, r] : reports) {
      os << pad(label, 18) << pad(accuracy_str(r.accuracy), 10)
         << pad(std::to_string(r.n_total), 9) << pad(std::to_string(r.n_tie), 7)
         << pad(std::to_string(r.n_degenerate), 14) << pad(std::to_string(r.n_error), 8)
         << "\n";
    }
    os << "\n";
  }
  if (oracle) {
    os << pad("oracle", 18) << pad(accuracy_str(oracle->accuracy), 10)
       << pad(std::to_string(oracle->n_questions), 9) << "unparsed " << oracle->unparsed
       << "\n";
  }
  if (oracle && !reports.empty()) {
    double gap = oracle->accuracy - reports.front().second.accuracy;
    os << "blind-vs-oracle gap: " << (gap >= 0 ? "+" : "") << accuracy_str(gap) << " (oracle "
       << accuracy_str(oracle->accuracy) << ", blind '" << reports.front().first << "' "
       << accuracy_str(reports.front().second.accuracy) << ")\n";
  }
  if (!reports.empty()) {
    const auto& first = reports.front().second;
    std::vector<std::pair<int64_t, LocationStat>> locs(first.per_location.begin(),
                                                       first.per_location.end());
    std::sort(locs.begin(), locs.end(), [](const auto& a, const auto& b) {
      double aa = a.second.n ? static_cast<double>(a.second.n_correct) / a.second.n : 0.0;
      double bb = b.second.n ? static_cast<double>(b.second.n_correct) / b.second.n : 0.0;
      if (aa != bb) return aa < bb;
      return a.first < b.first;
    });
    os << "\nhardest locations (report '" << reports.front().first << "'):\n";
    os << pad("  location", 12) << pad("n", 5) << "accuracy\n";
    for (size_t i = 0; i < locs.size() && i < 10; ++i) {
      double acc = locs[i].second.n
                       ? static_cast<double>(locs[i].second.n_correct) / locs[i].second.n
                       : 0.0;
      os << pad("  " + std::to_string(locs[i].first), 12)
         << pad(std::to_string(locs[i].second.n), 5) << accuracy_str(acc) << "\n";
    }
  }
  return os.str();
}

}  // namespace krtest
