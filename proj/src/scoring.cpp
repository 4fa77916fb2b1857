#include "krtest/scoring.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "krtest/errors.hpp"
#include "krtest/hash.hpp"
#include "krtest/parallel.hpp"
#include "krtest/rng.hpp"

namespace krtest {

using nlohmann::json;

std::string outcome_name(Outcome o) {
  switch (o) {
    case Outcome::correct: return "correct";
    case Outcome::incorrect: return "incorrect";
    case Outcome::tie: return "tie";
  }
  return "tie";
}

namespace {

Outcome outcome_from_name(const std::string& s, size_t line) {
  if (s == "correct") return Outcome::correct;
  if (s == "incorrect") return Outcome::incorrect;
  if (s == "tie") return Outcome::tie;
  throw SchemaError("unknown outcome '" + s + "'", line);
}

}  // namespace

KRDecision kr_decide(const ScoredContinuation& scored_true,
                     const ScoredContinuation& scored_false) {
  if (scored_true.logprobs.empty() || scored_false.logprobs.empty())
    throw PreconditionError("kr_decide: both continuations must carry scored tokens");
  KRDecision d;
  d.T = std::min(scored_true.logprobs.size(), scored_false.logprobs.size());
  d.lp_true = 0.0;
  d.lp_false = 0.0;
  for (size_t i = 0; i < d.T; ++i) {
    d.lp_true += scored_true.logprobs[i];
    d.lp_false += scored_false.logprobs[i];
  }
  if (d.lp_true > d.lp_false)
    d.outcome = Outcome::correct;
  else if (d.lp_true < d.lp_false)
    d.outcome = Outcome::incorrect;
  else
    d.outcome = Outcome::tie;
  d.straddle = scored_true.straddle || scored_false.straddle;
  return d;
}

KRDecision evaluate_tuple(ScoringBackend& backend, const ContrastiveTuple& t) {
  ScoredContinuation st = score_continuation(backend, t.context, t.sentence_true);
  ScoredContinuation sf = score_continuation(backend, t.context, t.sentence_false);
  if (st.logprobs.empty() || sf.logprobs.empty()) {
    // Straddle exclusion can empty a continuation; such tuples are flagged and
    // excluded from accuracy rather than decided either way.
    KRDecision d;
    d.tuple_id = tuple_id(t);
    d.degenerate = true;
    d.straddle = st.straddle || sf.straddle;
    return d;
  }
  KRDecision d = kr_decide(st, sf);
  d.tuple_id = tuple_id(t);
  return d;
}

std::vector<size_t> sample_indices(size_t n, size_t k, uint64_t seed) {
  std::vector<size_t> all(n);
  std::iota(all.begin(), all.end(), size_t{0});
  if (k >= n) return all;
  SplitMix64 rng(mix64(seed ^ 0x5ab3e1c9u));
  for (size_t i = 0; i < k; ++i) {
    size_t j = i + static_cast<size_t>(rng.next_below(n - i));
    std::swap(all[i], all[j]);
  }
  all.resize(k);
  std::sort(all.begin(), all.end());
  return all;
}

KRReport evaluate_dataset(ScoringBackend& backend, const Dataset& d, const EvalOptions& opts) {
  if (d.tuples.empty()) throw PreconditionError("evaluate_dataset: dataset is empty");

  std::vector<size_t> indices =
      opts.sample_k ? sample_indices(d.tuples.size(), *opts.sample_k, opts.seed)
                    : sample_indices(d.tuples.size(), d.tuples.size(), opts.seed);

  struct Slot {
    std::optional<KRDecision> decision;
    std::string error;
  };
  std::vector<Slot> slots(indices.size());
  std::vector<std::exception_ptr> fatal(indices.size());
  parallel_for(indices.size(), backend.max_in_flight(), [&](size_t i) {
    const ContrastiveTuple& t = d.tuples[indices[i]];
    try {
      slots[i].decision = evaluate_tuple(backend, t);
    } catch (const std::exception& e) {
      if (opts.fail_fast) {
        fatal[i] = std::current_exception();
      } else {
        slots[i].error = e.what();
      }
    }
  });
  for (auto& f : fatal)
    if (f) std::rethrow_exception(f);

  KRReport report;
  report.backend_id = backend.id();
  report.dataset_fingerprint = dataset_fingerprint(d);
  for (size_t i = 0; i < indices.size(); ++i) {
    const ContrastiveTuple& t = d.tuples[indices[i]];
    if (!slots[i].decision) {
      report.n_error += 1;
      report.errors.emplace_back(tuple_id(t), slots[i].error);
      continue;
    }
    KRDecision& dec = *slots[i].decision;
    report.decisions.push_back(dec);
    if (dec.degenerate) {
      report.n_degenerate += 1;
      continue;
    }
    report.n_total += 1;
    auto& loc = report.per_location[t.location];
    loc.n += 1;
    if (dec.outcome == Outcome::correct) {
      report.n_correct += 1;
      loc.n_correct += 1;
    } else if (dec.outcome == Outcome::tie) {
      report.n_tie += 1;
    }
  }
  if (report.n_total == 0)
    throw EvaluationError("no tuple produced a countable decision (" +
                          std::to_string(report.n_error) + " errors, " +
                          std::to_string(report.n_degenerate) + " degenerate)");
  report.accuracy =
      static_cast<double>(report.n_correct) / static_cast<double>(report.n_total);
  return report;
}

ReportDelta compare_reports(const KRReport& a, const KRReport& b) {
  if (a.dataset_fingerprint != b.dataset_fingerprint)
    throw ComparisonError("reports built from different datasets (" + a.dataset_fingerprint +
                          " vs " + b.dataset_fingerprint + ")");
  ReportDelta delta;
  delta.overall_delta = b.accuracy - a.accuracy;
  for (const auto& [loc, sa] : a.per_location) {
    auto it = b.per_location.find(loc);
    if (it == b.per_location.end() || sa.n == 0 || it->second.n == 0) continue;
    double acc_a = static_cast<double>(sa.n_correct) / static_cast<double>(sa.n);
    double acc_b =
        static_cast<double>(it->second.n_correct) / static_cast<double>(it->second.n);
    delta.per_location[loc] = acc_b - acc_a;
  }
  return delta;
}

namespace {

json decision_to_json(const KRDecision& d) {
  json flags = json::array();
  if (d.straddle) flags.push_back("straddle");
  if (d.degenerate) flags.push_back("degenerate");
  return json{{"tuple_id", d.tuple_id}, {"T", d.T},       {"lp_true", d.lp_true},
              {"lp_false", d.lp_false}, {"outcome", outcome_name(d.outcome)},
              {"flags", std::move(flags)}};
}

}  // namespace

std::string serialize_report(const KRReport& r) {
  json out;
  out["accuracy"] = r.accuracy;
  out["n_total"] = r.n_total;
  out["n_correct"] = r.n_correct;
  out["n_tie"] = r.n_tie;
  out["n_degenerate"] = r.n_degenerate;
  out["n_error"] = r.n_error;
  out["backend_id"] = r.backend_id;
  out["dataset_fingerprint"] = r.dataset_fingerprint;
  json per_location = json::object();
  for (const auto& [loc, stat] : r.per_location)
    per_location[std::to_string(loc)] = {{"n", stat.n}, {"n_correct", stat.n_correct}};
  out["per_location"] = std::move(per_location);
  json decisions = json::array();
  for (const auto& d : r.decisions) decisions.push_back(decision_to_json(d));
  out["decisions"] = std::move(decisions);
  json errors = json::array();
  for (const auto& [id, msg] : r.errors) errors.push_back({{"tuple_id", id}, {"message", msg}});
  out["errors"] = std::move(errors);
  return out.dump(2) + "\n";
}

void write_report(const KRReport& r, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write report: " + path);
  out << serialize_report(r);
  if (!out) throw IoError("write failure on report: " + path);
}

KRReport read_report(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open report: " + path);
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw SchemaError("report file is not valid JSON: " + path);
  KRReport r;
  try {
    r.accuracy = doc.at("accuracy").get<double>();
    r.n_total = doc.at("n_total").get<size_t>();
    r.n_correct = doc.at("n_correct").get<size_t>();
    r.n_tie = doc.at("n_tie").get<size_t>();
    r.n_degenerate = doc.value("n_degenerate", size_t{0});
    r.n_error = doc.value("n_error", size_t{0});
    r.backend_id = doc.at("backend_id").get<std::string>();
    r.dataset_fingerprint = doc.at("dataset_fingerprint").get<std::string>();
    for (const auto& [key, stat] : doc.at("per_location").items())
      r.per_location[std::stoll(key)] = {stat.at("n").get<size_t>(),
                                         stat.at("n_correct").get<size_t>()};
    size_t line = 0;
    for (const auto& jd : doc.at("decisions")) {
      ++line;
      KRDecision d;
      d.tuple_id = jd.at("tuple_id").get<std::string>();
      d.T = jd.at("T").get<size_t>();
      d.lp_true = jd.at("lp_true").get<double>();
      d.lp_false = jd.at("lp_false").get<double>();
      d.outcome = outcome_from_name(jd.at("outcome").get<std::string>(), line);
      for (const auto& f : jd.at("flags")) {
        if (f == "straddle") d.straddle = true;
        if (f == "degenerate") d.degenerate = true;
      }
      r.decisions.push_back(std::move(d));
    }
    if (doc.contains("errors"))
      for (const auto& je : doc["errors"])
        r.errors.emplace_back(je.at("tuple_id").get<std::string>(),
                              je.at("message").get<std::string>());
  } catch (const json::exception& e) {
    throw SchemaError(std::string("report file ") + path + ": " + e.what());
  }
  if (r.accuracy < 0.0 || r.accuracy > 1.0)
    throw InvariantError("report accuracy outside [0,1]: " + std::to_string(r.accuracy));
  if (r.n_total > 0) {
    size_t loc_sum = 0;
    for (const auto& [loc, stat] : r.per_location) loc_sum += stat.n;
    if (loc_sum != r.n_total)
      throw InvariantError("per-location counts do not sum to n_total in " + path);
  }
  return r;
}

}  // namespace krtest
