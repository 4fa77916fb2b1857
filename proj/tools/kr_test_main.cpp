// kr-test: corpus-grounded knowledge-retention evaluation.
//
// Subcommands: generate, evaluate, oracle, blind-vs-oracle, sweep, report.

#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "krtest/errors.hpp"
#include "krtest/pipeline.hpp"

namespace fs = std::filesystem;
using namespace krtest;

namespace {

CorpusFormat parse_format(const std::string& s) {
  if (s == "plain") return CorpusFormat::plain;
  if (s == "wikitext") return CorpusFormat::wikitext;
  throw ConfigError("unknown corpus format: " + s);
}

std::shared_ptr<RunLog> make_log(const std::string& path) {
  return path.empty() ? std::make_shared<RunLog>() : std::make_shared<RunLog>(path);
}

CorpusIndex ingest_for_cli(const std::string& corpus, const std::string& format,
                           const std::string& segment_mode, size_t min_chars,
                           const std::shared_ptr<TeacherClient>& teacher) {
  IngestOptions opts;
  opts.format = parse_format(format);
  opts.min_passage_chars = min_chars;
  if (segment_mode == "teacher") {
    if (!teacher) throw ConfigError("teacher segmentation requires --teacher");
    opts.mode = SegmentMode::teacher;
    opts.teacher = make_teacher_segmenter(teacher);
  } else if (segment_mode != "rule_based") {
    throw ConfigError("unknown segment mode: " + segment_mode);
  }
  return ingest_corpus(corpus, opts);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kr-test: contrastive knowledge-retention evaluation harness"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("--verbose", verbose, "chatty progress output");

  // generate
  auto* generate = app.add_subcommand("generate", "derive a contrastive dataset from a corpus");
  std::string g_corpus, g_format = "plain", g_policy = "strict", g_out, g_teacher;
  std::string g_segment_mode = "rule_based", g_log;
  int g_n = 1;
  size_t g_min_chars = 200;
  generate->add_option("--corpus", g_corpus, "corpus text file")->required();
  generate->add_option("--format", g_format, "plain|wikitext");
  generate->add_option("--n-per-passage", g_n, "tuples per passage")->required();
  generate->add_option("--policy", g_policy, "strict|permissive");
  generate->add_option("--out", g_out, "dataset output path")->required();
  generate->add_option("--teacher", g_teacher, "teacher config JSON")->required();
  generate->add_option("--segment-mode", g_segment_mode, "rule_based|teacher");
  generate->add_option("--min-passage-chars", g_min_chars, "merge-forward threshold");
  generate->add_option("--log", g_log, "run log path (NDJSON)");

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "score a dataset with a backend");
  std::string e_dataset, e_backend, e_out, e_log;
  uint64_t e_seed = 0;
  size_t e_sample = 0;
  bool e_fail_fast = false;
  evaluate->add_option("--dataset", e_dataset, "dataset file")->required();
  evaluate->add_option("--backend", e_backend, "backend config JSON")->required();
  evaluate->add_option("--sample", e_sample, "evaluate a seeded random subset of k tuples");
  evaluate->add_option("--seed", e_seed, "sampling seed");
  evaluate->add_option("--out", e_out, "report output path")->required();
  evaluate->add_flag("--fail-fast", e_fail_fast, "abort on the first tuple error");
  evaluate->add_option("--log", e_log, "run log path (NDJSON)");

  // oracle
  auto* oracle_cmd = app.add_subcommand("oracle", "golden-standard oracle evaluation");
  std::string o_dataset, o_corpus, o_format = "plain", o_teacher, o_out, o_log;
  uint64_t o_seed = 0;
  size_t o_cap = 25;
  oracle_cmd->add_option("--dataset", o_dataset)->required();
  oracle_cmd->add_option("--corpus", o_corpus)->required();
  oracle_cmd->add_option("--format", o_format, "plain|wikitext");
  oracle_cmd->add_option("--teacher", o_teacher, "teacher config JSON")->required();
  oracle_cmd->add_option("--seed", o_seed, "option randomization seed")->required();
  oracle_cmd->add_option("--out", o_out)->required();
  oracle_cmd->add_option("--question-cap", o_cap, "max questions per prompt");
  oracle_cmd->add_option("--log", o_log, "run log path (NDJSON)");

  // blind-vs-oracle
  auto* bvo = app.add_subcommand("blind-vs-oracle", "paired blind and oracle runs");
  std::string b_dataset, b_corpus, b_format = "plain", b_teacher, b_backend, b_out, b_log;
  uint64_t b_seed = 0;
  bvo->add_option("--dataset", b_dataset)->required();
  bvo->add_option("--corpus", b_corpus)->required();
  bvo->add_option("--format", b_format, "plain|wikitext");
  bvo->add_option("--teacher", b_teacher, "teacher config JSON")->required();
  bvo->add_option("--backend", b_backend, "backend config JSON")->required();
  bvo->add_option("--seed", b_seed)->required();
  bvo->add_option("--out", b_out)->required();
  bvo->add_option("--log", b_log, "run log path (NDJSON)");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "full pipeline from a declarative run config");
  std::string s_config, s_out;
  sweep->add_option("--config", s_config, "run config JSON")->required();
  sweep->add_option("--out", s_out, "output directory (overrides config out_dir)");

  // report
  auto* report_cmd = app.add_subcommand("report", "summarize a run directory");
  std::string r_dir;
  report_cmd->add_option("--dir", r_dir, "run directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*generate) {
      auto log = make_log(g_log);
      auto teacher =
          std::make_shared<TeacherClient>(load_teacher_config(g_teacher), log);
      CorpusIndex index =
          ingest_for_cli(g_corpus, g_format, g_segment_mode, g_min_chars, teacher);
      if (verbose)
        std::cerr << "ingested " << index.passages().size() << " passages\n";
      GenerateDatasetOptions opts;
      opts.n_per_passage = g_n;
      opts.policy = g_policy == "permissive" ? FilterPolicy::permissive : FilterPolicy::strict;
      auto outcome = generate_dataset(*teacher, index, opts);
      for (const auto& w : outcome.warnings) std::cerr << "warning: " << w << "\n";
      write_dataset(outcome.dataset, g_out);
      std::cout << "wrote " << outcome.dataset.tuples.size() << " tuples to " << g_out << "\n";
    } else if (*evaluate) {
      auto log = make_log(e_log);
      Dataset dataset = read_dataset(e_dataset);
      auto backend = make_backend(load_backend_config(e_backend), log);
      EvalOptions opts;
      if (e_sample > 0) opts.sample_k = e_sample;
      opts.seed = e_seed;
      opts.fail_fast = e_fail_fast;
      KRReport report = evaluate_dataset(*backend, dataset, opts);
      write_report(report, e_out);
      std::cout << "accuracy " << report.accuracy << " over " << report.n_total << " tuples ("
                << report.n_tie << " ties) -> " << e_out << "\n";
    } else if (*oracle_cmd) {
      auto log = make_log(o_log);
      Dataset dataset = read_dataset(o_dataset);
      IngestOptions iopts;
      iopts.format = parse_format(o_format);
      CorpusIndex index = ingest_corpus(o_corpus, iopts);
      TeacherClient teacher(load_teacher_config(o_teacher), log);
      OracleOptions opts;
      opts.question_cap = o_cap;
      OracleReport report = run_golden_standard(teacher, dataset, index, o_seed, opts);
      write_oracle_report(report, o_out);
      std::cout << "oracle accuracy " << report.accuracy << " over " << report.n_questions
                << " questions (" << report.unparsed << " unparsed) -> " << o_out << "\n";
    } else if (*bvo) {
      auto log = make_log(b_log);
      Dataset dataset = read_dataset(b_dataset);
      IngestOptions iopts;
      iopts.format = parse_format(b_format);
      CorpusIndex index = ingest_corpus(b_corpus, iopts);
      TeacherClient teacher(load_teacher_config(b_teacher), log);
      auto backend = make_backend(load_backend_config(b_backend), log);
      PairedReport paired = blind_vs_oracle(*backend, teacher, dataset, index, b_seed);
      write_paired_report(paired, b_out);
      std::cout << "blind " << paired.blind.accuracy << ", oracle " << paired.oracle.accuracy
                << ", gap " << paired.gap << " -> " << b_out << "\n";
    } else if (*sweep) {
      RunConfig config = load_run_config(s_config);
      if (!s_out.empty()) config.out_dir = s_out;
      RunResult run = run_pipeline(config);
      std::cout << "run complete: " << run.dir << " (" << run.reports.size() << " reports)\n";
    } else if (*report_cmd) {
      std::cout << emit_summary(r_dir);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const InvariantError& e) {
    std::cerr << "invariant violation: " << e.what() << "\n";
    return kExitInvariant;
  } catch (const StageError& e) {
    std::cerr << "stage failure: " << e.what() << "\n";
    return kExitStage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitOk;
}
