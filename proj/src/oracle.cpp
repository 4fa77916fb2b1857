#include "krtest/oracle.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "krtest/errors.hpp"
#include "krtest/parallel.hpp"
#include "krtest/rng.hpp"
#include "krtest/text.hpp"

namespace krtest {

using nlohmann::json;

std::string choice_name(Choice c) { return c == Choice::A ? "A" : "B"; }

std::vector<std::pair<int64_t, std::vector<ContrastiveTuple>>> batch_by_location(
    const Dataset& d, const CorpusIndex& index) {
  std::map<int64_t, std::vector<ContrastiveTuple>> groups;
  for (const auto& t : d.tuples) {
    if (!index.has_location(t.location))
      throw LookupError("tuple " + tuple_id(t) + " references unknown location " +
                        std::to_string(t.location));
    groups[t.location].push_back(t);
  }
  return {groups.begin(), groups.end()};
}

std::vector<OracleQuestion> randomize_options(const std::vector<ContrastiveTuple>& tuples,
                                              uint64_t seed) {
  std::vector<OracleQuestion> out;
  out.reserve(tuples.size());
  int next_id = 1;
  for (const auto& t : tuples) {
    OracleQuestion q;
    q.question_id = next_id++;
    q.context = t.context;
    q.tuple_id = tuple_id(t);
    const bool truth_on_a = derived_coin(seed, q.tuple_id);
    if (truth_on_a) {
      q.option_a = t.sentence_true;
      q.option_b = t.sentence_false;
      q.truth_is = Choice::A;
    } else {
      q.option_a = t.sentence_false;
      q.option_b = t.sentence_true;
      q.truth_is = Choice::B;
    }
    out.push_back(std::move(q));
  }
  return out;
}

std::vector<ChatMessage> build_oracle_prompt(const OracleBatch& batch) {
  if (batch.questions.empty()) throw PreconditionError("build_oracle_prompt: empty batch");
  std::ostringstream usr;
  usr << "*** Reference Paragraph ***\n" << batch.paragraph << "\n\n*** Questions ***\n";
  for (const auto& q : batch.questions) {
    usr << "\n[Question ID: " << q.question_id << "]\n"
        << "Context: " << q.context << "\n"
        << "Option A: " << q.option_a << "\n"
        << "Option B: " << q.option_b << "\n";
  }
  return {{Role::system,
           "Instruction: You are an expert reading comprehension system. You will be "
           "provided with one Reference Paragraph and a list of Questions related to it. "
           "For each Question ID, determine which Option (A or B) is FACTUALLY CONSISTENT "
           "with the Reference Paragraph. Output strictly in JSON format where keys are "
           "Question IDs and values are the choice strings 'A' or 'B'."},
          {Role::user, usr.str()}};
}

GradedBatch grade_answers(const OracleBatch& batch, const json& mapping,
                          std::vector<OracleAnswer>* answers_out) {
  GradedBatch graded;
  for (const auto& q : batch.questions) {
    OracleAnswer ans;
    ans.tuple_id = q.tuple_id;
    ans.location = batch.location;
    ans.question_id = q.question_id;
    ans.truth = q.truth_is;
    std::optional<Choice> given;
    if (mapping.is_object()) {
      auto it = mapping.find(std::to_string(q.question_id));
      if (it != mapping.end() && it->is_string()) {
        std::string v = trim(it->get<std::string>());
        if (v == "A") given = Choice::A;
        else if (v == "B") given = Choice::B;
      }
    }
    if (given) {
      graded.answered += 1;
      if (*given == q.truth_is) graded.correct += 1;
      ans.given = given;
    } else {
      graded.unparsed += 1;
    }
    if (answers_out) answers_out->push_back(std::move(ans));
  }
  return graded;
}

OracleReport run_golden_standard(const TeacherClient& client, const Dataset& d,
                                 const CorpusIndex& index, uint64_t seed,
                                 const OracleOptions& opts) {
  if (client.config().decoding.temperature != 0.0)
    throw PreconditionError("run_golden_standard: oracle must run at temperature 0");
  const size_t cap = opts.question_cap == 0 ? 25 : opts.question_cap;

  std::vector<OracleBatch> batches;
  for (const auto& [location, tuples] : batch_by_location(d, index)) {
    auto questions = randomize_options(tuples, seed);
    const std::string& paragraph = locate_passage(index, location).text;
    // One paragraph per prompt; oversized groups split at the question cap
    // with the paragraph repeated and ids renumbered 1..k per split.
    for (size_t from = 0; from < questions.size(); from += cap) {
      OracleBatch b;
      b.location = location;
      b.paragraph = paragraph;
      b.permutation_seed = seed;
      size_t to = std::min(from + cap, questions.size());
      for (size_t i = from; i < to; ++i) {
        OracleQuestion q = questions[i];
        q.question_id = static_cast<int>(i - from) + 1;
        b.questions.push_back(std::move(q));
      }
      batches.push_back(std::move(b));
    }
  }

  struct BatchOutcome {
    GradedBatch graded;
    std::vector<OracleAnswer> answers;
    std::string error;
  };
  std::vector<BatchOutcome> outcomes(batches.size());
  std::vector<std::exception_ptr> fatal(batches.size());
  parallel_for(batches.size(), client.config().max_in_flight, [&](size_t i) {
    try {
      std::string reply = client.complete_chat(build_oracle_prompt(batches[i]));
      json mapping;
      try {
        mapping = parse_json_payload(reply).value;
      } catch (const PayloadParseError&) {
        mapping = json();  // nothing answered; all questions unparsed
      }
      outcomes[i].graded = grade_answers(batches[i], mapping, &outcomes[i].answers);
    } catch (const std::exception& e) {
      if (opts.fail_fast) {
        fatal[i] = std::current_exception();
      } else {
        outcomes[i].error = e.what();
        outcomes[i].graded = grade_answers(batches[i], json(), &outcomes[i].answers);
      }
    }
  });
  for (auto& f : fatal)
    if (f) std::rethrow_exception(f);

  OracleReport report;
  report.permutation_seed = seed;
  size_t answered = 0, correct = 0;
  for (size_t i = 0; i < batches.size(); ++i) {
    const auto& o = outcomes[i];
    if (!o.error.empty())
      report.errors.push_back("batch at location " + std::to_string(batches[i].location) +
                              ": " + o.error);
    auto& stat = report.per_batch[batches[i].location];
    stat.n += o.graded.answered;
    stat.n_correct += o.graded.correct;
    answered += o.graded.answered;
    correct += o.graded.correct;
    report.unparsed += o.graded.unparsed;
    report.n_questions += batches[i].questions.size();
    report.answers.insert(report.answers.end(), o.answers.begin(), o.answers.end());
  }
  report.accuracy =
      answered == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(answered);
  return report;
}

PairedReport blind_vs_oracle(ScoringBackend& backend, const TeacherClient& client,
                             const Dataset& d, const CorpusIndex& index, uint64_t seed,
                             const EvalOptions& eval_opts, const OracleOptions& oracle_opts) {
  PairedReport out;
  EvalOptions eo = eval_opts;
  eo.seed = seed;
  out.blind = evaluate_dataset(backend, d, eo);
  out.oracle = run_golden_standard(client, d, index, seed, oracle_opts);
  out.gap = out.oracle.accuracy - out.blind.accuracy;
  return out;
}

std::string serialize_oracle_report(const OracleReport& r) {
  json out;
  out["accuracy"] = r.accuracy;
  out["unparsed"] = r.unparsed;
  out["n_questions"] = r.n_questions;
  out["permutation_seed"] = r.permutation_seed;
  json per_batch = json::object();
  for (const auto& [loc, stat] : r.per_batch)
    per_batch[std::to_string(loc)] = {{"n", stat.n}, {"n_correct", stat.n_correct}};
  out["per_batch"] = std::move(per_batch);
  json answers = json::array();
  for (const auto& a : r.answers) {
    answers.push_back({{"tuple_id", a.tuple_id},
                       {"question_id", a.question_id},
                       {"given", a.given ? json(choice_name(*a.given)) : json()},
                       {"truth", choice_name(a.truth)}});
  }
  out["answers"] = std::move(answers);
  json errors = json::array();
  for (const auto& e : r.errors) errors.push_back(e);
  out["errors"] = std::move(errors);
  return out.dump(2) + "\n";
}

void write_oracle_report(const OracleReport& r, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write oracle report: " + path);
  out << serialize_oracle_report(r);
  if (!out) throw IoError("write failure on oracle report: " + path);
}

OracleReport read_oracle_report(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open oracle report: " + path);
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw SchemaError("oracle report is not valid JSON: " + path);
  OracleReport r;
  try {
    r.accuracy = doc.at("accuracy").get<double>();
    r.unparsed = doc.at("unparsed").get<size_t>();
    r.n_questions = doc.value("n_questions", size_t{0});
    r.permutation_seed = doc.at("permutation_seed").get<uint64_t>();
    for (const auto& [key, stat] : doc.at("per_batch").items())
      r.per_batch[std::stoll(key)] = {stat.at("n").get<size_t>(),
                                      stat.at("n_correct").get<size_t>()};
    for (const auto& ja : doc.at("answers")) {
      OracleAnswer a;
      a.tuple_id = ja.at("tuple_id").get<std::string>();
      a.question_id = ja.at("question_id").get<int>();
      if (!ja.at("given").is_null())
        a.given = ja.at("given").get<std::string>() == "A" ? Choice::A : Choice::B;
      a.truth = ja.at("truth").get<std::string>() == "A" ? Choice::A : Choice::B;
      r.answers.push_back(std::move(a));
    }
    if (doc.contains("errors"))
      for (const auto& e : doc["errors"]) r.errors.push_back(e.get<std::string>());
  } catch (const json::exception& e) {
    throw SchemaError(std::string("oracle report ") + path + ": " + e.what());
  }
  if (r.accuracy < 0.0 || r.accuracy > 1.0)
    throw InvariantError("oracle accuracy outside [0,1]: " + std::to_string(r.accuracy));
  return r;
}

std::string serialize_paired_report(const PairedReport& r) {
  json out;
  out["blind"] = json::parse(serialize_report(r.blind));
  out["oracle"] = json::parse(serialize_oracle_report(r.oracle));
  out["gap"] = r.gap;
  return out.dump(2) + "\n";
}

void write_paired_report(const PairedReport& r, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write paired report: " + path);
  out << serialize_paired_report(r);
  if (!out) throw IoError("write failure on paired report: " + path);
}

}  // namespace krtest
