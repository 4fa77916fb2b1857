#include "krtest/generation.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include "krtest/errors.hpp"
#include "krtest/hash.hpp"
#include "krtest/parallel.hpp"
#include "krtest/text.hpp"

namespace krtest {

using nlohmann::json;

std::string tuple_id(const ContrastiveTuple& t) {
  uint64_t h = fnv1a64(t.context);
  h = fnv1a64("\x1f", h);
  h = fnv1a64(t.sentence_true, h);
  h = fnv1a64("\x1f", h);
  h = fnv1a64(t.sentence_false, h);
  h = fnv1a64("\x1f", h);
  h = fnv1a64(std::to_string(t.location), h);
  return to_hex64(h);
}

std::vector<ChatMessage> build_generation_prompt(const Passage& passage, int n,
                                                 const std::string& prompt_version) {
  if (n < 1) throw PreconditionError("build_generation_prompt: n must be >= 1");
  std::ostringstream sys;
  sys << "You are an expert benchmark writer. You turn a source passage into binary "
         "contrastive test items that probe factual knowledge. Each item is a context plus "
         "two candidate continuations, one factually correct and one plausible but "
         "incorrect. Output strictly a JSON array; no prose, no code fences. "
         "[template " << prompt_version << "]";
  std::ostringstream usr;
  usr << "Write exactly " << n << " contrastive test item" << (n == 1 ? "" : "s")
      << " from the source passage below.\n"
         "\n"
         "Rules:\n"
         "1. Correctness: the true continuation must be strictly grounded in the source "
         "passage.\n"
         "2. Adversarial similarity: the false continuation must have similar length, "
         "syntax, and style to the true continuation, and the two must differ only in "
         "factual content (an entity name, relation, or attribute).\n"
         "3. The context establishes the factual setting but does not contain any hints "
         "toward the correct continuation.\n"
         "\n"
         "Output a JSON array of exactly "
      << n
      << " objects, each with exactly these keys:\n"
         "  \"context\": string\n"
         "  \"sentence_true\": string\n"
         "  \"sentence_false\": string\n"
         "\n"
         "*** Source Passage ***\n"
      << passage.text;
  return {{Role::system, sys.str()}, {Role::user, usr.str()}};
}

namespace {

// Array of objects with the three generation keys, or an error string.
std::optional<std::vector<ContrastiveTuple>> extract_tuples(const std::string& reply,
                                                            int64_t location,
                                                            std::string& error) {
  json value;
  try {
    value = parse_json_payload(reply).value;
  } catch (const PayloadParseError& e) {
    error = e.what();
    return std::nullopt;
  }
  if (!value.is_array()) {
    error = "teacher reply is not a JSON array";
    return std::nullopt;
  }
  std::vector<ContrastiveTuple> out;
  for (const auto& item : value) {
    if (!item.is_object() || !item.contains("context") || !item.contains("sentence_true") ||
        !item.contains("sentence_false") || !item["context"].is_string() ||
        !item["sentence_true"].is_string() || !item["sentence_false"].is_string()) {
      error = "array item lacks string keys context/sentence_true/sentence_false";
      return std::nullopt;
    }
    ContrastiveTuple t;
    t.context = item["context"].get<std::string>();
    t.sentence_true = item["sentence_true"].get<std::string>();
    t.sentence_false = item["sentence_false"].get<std::string>();
    t.location = location;
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace

GenerationOutcome generate_tuples(const TeacherClient& client, const Passage& passage, int n,
                                  const std::string& prompt_version) {
  if (client.config().decoding.temperature != 0.0)
    throw PreconditionError("generate_tuples: teacher must run at temperature 0");
  GenerationOutcome out;
  auto messages = build_generation_prompt(passage, n, prompt_version);
  std::string reply = client.complete_chat(messages);
  std::string error;
  auto tuples = extract_tuples(reply, passage.location, error);
  if (!tuples) {
    auto repair = messages;
    repair.push_back({Role::assistant, reply});
    repair.push_back({Role::user,
                      "Your previous reply could not be used (" + error +
                          "). Reply again with only a JSON array of exactly " +
                          std::to_string(n) +
                          " objects with string keys \"context\", \"sentence_true\", "
                          "\"sentence_false\". No prose, no code fences."});
    std::string reply2 = client.complete_chat(repair);
    tuples = extract_tuples(reply2, passage.location, error);
    if (!tuples) {
      out.warnings.push_back("passage " + std::to_string(passage.location) +
                             ": teacher output dropped after repair attempt: " + error);
      return out;
    }
  }
  if (tuples->size() > static_cast<size_t>(n)) {
    out.warnings.push_back("passage " + std::to_string(passage.location) + ": teacher returned " +
                           std::to_string(tuples->size()) + " items, truncated to " +
                           std::to_string(n));
    tuples->resize(static_cast<size_t>(n));
  }
  out.tuples = std::move(*tuples);
  return out;
}

namespace {

std::string ratio_detail(size_t a, size_t b, double value) {
  std::ostringstream os;
  os << a << "/" << b << " tokens, value " << value;
  return os.str();
}

double token_difference(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  size_t common = std::min(a.size(), b.size());
  size_t diffs = std::max(a.size(), b.size()) - common;
  for (size_t i = 0; i < common; ++i)
    if (a[i] != b[i]) ++diffs;
  size_t denom = std::max(a.size(), b.size());
  return denom == 0 ? 0.0 : static_cast<double>(diffs) / static_cast<double>(denom);
}

double grounding_overlap(const std::string& sentence, const std::string& passage_text) {
  std::unordered_set<std::string> passage_vocab;
  for (const auto& tok : whitespace_tokens(passage_text)) {
    auto c = content_token(tok);
    if (!c.empty()) passage_vocab.insert(c);
  }
  size_t hits = 0, total = 0;
  for (const auto& tok : whitespace_tokens(sentence)) {
    auto c = content_token(tok);
    if (c.empty()) continue;
    ++total;
    if (passage_vocab.count(c)) ++hits;
  }
  return total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total);
}

}  // namespace

ValidationReport validate_tuple(const ContrastiveTuple& t, const Passage& passage,
                                const ValidationOptions& opts) {
  ValidationReport report;
  report.tuple_id = tuple_id(t);

  auto add = [&](std::string name, bool passed, bool hard, std::string detail) {
    report.checks.push_back({std::move(name), passed, hard, std::move(detail)});
  };

  const bool fields_ok = !trim_view(t.context).empty() && !trim_view(t.sentence_true).empty() &&
                         !trim_view(t.sentence_false).empty();
  add("non_empty_fields", fields_ok, true,
      fields_ok ? "" : "one or more of context/sentence_true/sentence_false is empty");

  const bool distinct = t.sentence_true != t.sentence_false;
  add("distinct_continuations", distinct, true,
      distinct ? "" : "sentence_true equals sentence_false");

  auto toks_true = whitespace_tokens(t.sentence_true);
  auto toks_false = whitespace_tokens(t.sentence_false);
  size_t lo = std::min(toks_true.size(), toks_false.size());
  size_t hi = std::max(toks_true.size(), toks_false.size());
  double ratio = hi == 0 ? 0.0 : static_cast<double>(lo) / static_cast<double>(hi);
  add("length_ratio", ratio >= opts.min_length_ratio, true, ratio_detail(lo, hi, ratio));

  const bool leaks = t.context.find(t.sentence_true) != std::string::npos ||
                     t.context.find(t.sentence_false) != std::string::npos;
  add("no_hint_leakage", !leaks, true,
      leaks ? "context embeds a continuation verbatim" : "");

  double overlap = grounding_overlap(t.sentence_true, passage.text);
  add("grounding_overlap", overlap >= opts.min_grounding_overlap, false,
      "overlap " + std::to_string(overlap));

  double diff = token_difference(toks_true, toks_false);
  add("token_difference", diff <= opts.max_token_diff, false,
      "difference " + std::to_string(diff));

  bool hard_fail = false, soft_fail = false;
  for (const auto& c : report.checks)
    (c.hard ? hard_fail : soft_fail) |= !c.passed;
  report.verdict = hard_fail ? Verdict::reject : (soft_fail ? Verdict::flag : Verdict::accept);
  return report;
}

FilterOutcome filter_dataset(const std::vector<ContrastiveTuple>& tuples,
                             const CorpusIndex& index, FilterPolicy policy,
                             const ValidationOptions& opts, Provenance provenance) {
  FilterOutcome out;
  out.dataset.provenance = std::move(provenance);
  std::unordered_set<std::string> seen;
  for (const auto& t : tuples) {
    const std::string id = tuple_id(t);
    const Passage* passage = index.find(t.location);
    ValidationReport report;
    if (passage == nullptr) {
      report.tuple_id = id;
      report.checks.push_back({"location_resolves", false, true,
                               "location " + std::to_string(t.location) + " not in index"});
      report.verdict = Verdict::reject;
    } else {
      report = validate_tuple(t, *passage, opts);
      report.checks.push_back({"location_resolves", true, true, ""});
    }
    if (!seen.insert(id).second) {
      out.warnings.push_back("duplicate tuple " + id + " dropped");
      report.checks.push_back({"duplicate_id", false, true, "tuple id seen earlier in input"});
      report.verdict = Verdict::reject;
    }
    const bool keep = report.verdict == Verdict::accept ||
                      (policy == FilterPolicy::permissive && report.verdict == Verdict::flag);
    out.reports.push_back(std::move(report));
    if (keep) out.dataset.tuples.push_back(t);
  }
  return out;
}

GenerateDatasetOutcome generate_dataset(const TeacherClient& client, const CorpusIndex& index,
                                        const GenerateDatasetOptions& opts) {
  if (opts.n_per_passage < 1)
    throw PreconditionError("generate_dataset: n_per_passage must be >= 1");
  const auto& passages = index.passages();
  std::vector<GenerationOutcome> per_passage(passages.size());
  std::vector<std::exception_ptr> failures(passages.size());
  parallel_for(passages.size(), client.config().max_in_flight, [&](size_t i) {
    try {
      per_passage[i] = generate_tuples(client, passages[i], opts.n_per_passage,
                                       opts.prompt_version);
    } catch (...) {
      failures[i] = std::current_exception();
    }
  });
  for (auto& f : failures)
    if (f) std::rethrow_exception(f);

  std::vector<ContrastiveTuple> raw;
  GenerateDatasetOutcome out;
  for (auto& g : per_passage) {
    std::move(g.tuples.begin(), g.tuples.end(), std::back_inserter(raw));
    std::move(g.warnings.begin(), g.warnings.end(), std::back_inserter(out.warnings));
  }
  Provenance prov;
  prov.teacher_model = client.config().model;
  prov.prompt_version = opts.prompt_version;
  prov.corpus_fingerprint = index.content_fingerprint();
  prov.n_per_passage = opts.n_per_passage;
  auto filtered = filter_dataset(raw, index, opts.policy, opts.validation, std::move(prov));
  out.dataset = std::move(filtered.dataset);
  out.reports = std::move(filtered.reports);
  std::move(filtered.warnings.begin(), filtered.warnings.end(),
            std::back_inserter(out.warnings));
  return out;
}

ContrastiveTuple tuple_from_json(const json& record, size_t line) {
  if (!record.is_object()) throw SchemaError("tuple record is not a JSON object", line);
  static const char* kKeys[] = {"context", "sentence_true", "sentence_false", "location"};
  for (const char* key : kKeys)
    if (!record.contains(key))
      throw SchemaError(std::string("tuple record missing key '") + key + "'", line);
  if (record.size() != 4)
    throw SchemaError("tuple record carries keys beyond the four tuple fields", line);
  if (!record["context"].is_string() || !record["sentence_true"].is_string() ||
      !record["sentence_false"].is_string() || !record["location"].is_number_integer())
    throw SchemaError("tuple record field has wrong type", line);
  ContrastiveTuple t;
  t.context = record["context"].get<std::string>();
  t.sentence_true = record["sentence_true"].get<std::string>();
  t.sentence_false = record["sentence_false"].get<std::string>();
  t.location = record["location"].get<int64_t>();
  return t;
}

std::string serialize_dataset(const Dataset& d) {
  std::ostringstream os;
  json header{{"format", "kr-test-dataset"},
              {"version", 1},
              {"provenance",
               {{"teacher_model", d.provenance.teacher_model},
                {"prompt_version", d.provenance.prompt_version},
                {"corpus_fingerprint", d.provenance.corpus_fingerprint},
                {"n_per_passage", d.provenance.n_per_passage}}}};
  os << header.dump() << "\n";
  for (const auto& t : d.tuples) {
    json record{{"context", t.context},
                {"sentence_true", t.sentence_true},
                {"sentence_false", t.sentence_false},
                {"location", t.location}};
    os << record.dump() << "\n";
  }
  return os.str();
}

void write_dataset(const Dataset& d, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write dataset: " + path);
  out << serialize_dataset(d);
  if (!out) throw IoError("write failure on dataset: " + path);
}

Dataset read_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset: " + path);
  Dataset d;
  std::string line;
  size_t line_no = 0;
  bool saw_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim_view(line).empty()) continue;
    json record = json::parse(line, nullptr, false);
    if (record.is_discarded())
      throw SchemaError("dataset line is not valid JSON", line_no);
    if (!saw_header) {
      if (!record.is_object() || !record.contains("provenance"))
        throw SchemaError("dataset must start with a provenance header record", line_no);
      const auto& prov = record["provenance"];
      d.provenance.teacher_model = prov.value("teacher_model", "");
      d.provenance.prompt_version = prov.value("prompt_version", "");
      d.provenance.corpus_fingerprint = prov.value("corpus_fingerprint", "");
      d.provenance.n_per_passage = prov.value("n_per_passage", 0);
      saw_header = true;
      continue;
    }
    d.tuples.push_back(tuple_from_json(record, line_no));
  }
  if (!saw_header) throw SchemaError("dataset file has no header record", 0);
  return d;
}

std::string dataset_fingerprint(const Dataset& d) { return fingerprint(serialize_dataset(d)); }

std::vector<ChatMessage> build_segmentation_prompt(const std::string& text) {
  std::ostringstream usr;
  usr << "Split the text below into self-contained passages. Each passage must encapsulate "
         "an atomic unit of information independent of the surrounding context. Output a "
         "JSON array of objects {\"start\": <char offset>, \"end\": <char offset>} covering "
         "the text in order, non-overlapping, offsets into the text exactly as given.\n"
         "\n"
         "*** Text ***\n"
      << text;
  return {{Role::system,
           "You segment raw corpora into discrete, disjoint passages. Output strictly JSON; "
           "no prose, no code fences."},
          {Role::user, usr.str()}};
}

SegmentProposalFn make_teacher_segmenter(std::shared_ptr<TeacherClient> client) {
  return [client](const std::string& text) -> std::vector<Span> {
    std::string reply = client->complete_chat(build_segmentation_prompt(text));
    std::vector<Span> spans;
    try {
      json value = parse_json_payload(reply).value;
      if (!value.is_array()) return spans;  // empty: caller falls back to rule_based
      for (const auto& item : value) {
        if (!item.is_object() || !item.contains("start") || !item.contains("end")) continue;
        spans.push_back({item["start"].get<size_t>(), item["end"].get<size_t>()});
      }
    } catch (const PayloadParseError&) {
      return {};
    }
    return spans;
  };
}

}  // namespace krtest
