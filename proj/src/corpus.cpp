#include "krtest/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "krtest/errors.hpp"
#include "krtest/hash.hpp"
#include "krtest/text.hpp"

namespace krtest {

using nlohmann::json;

namespace {

struct Line {
  size_t start;  // char offset of line start
  size_t end;    // char offset past the line content (excluding '\n')
};

std::vector<Line> split_lines(const std::string& text) {
  std::vector<Line> lines;
  size_t start = 0;
  for (size_t i = 0; i <= text.size(); ++i) {
    if (i == text.size() || text[i] == '\n') {
      lines.push_back({start, i});
      start = i + 1;
    }
  }
  return lines;
}

bool is_blank(const std::string& text, const Line& ln) {
  for (size_t i = ln.start; i < ln.end; ++i)
    if (!is_space(text[i])) return false;
  return true;
}

// WikiText heading: trimmed line starts and ends with '='.
bool is_wikitext_heading(const std::string& text, const Line& ln) {
  std::string_view v = trim_view(std::string_view(text).substr(ln.start, ln.end - ln.start));
  return v.size() >= 2 && v.front() == '=' && v.back() == '=';
}

std::string heading_title(const std::string& text, const Line& ln) {
  std::string_view v = trim_view(std::string_view(text).substr(ln.start, ln.end - ln.start));
  size_t b = 0, e = v.size();
  while (b < e && (v[b] == '=' || is_space(v[b]))) ++b;
  while (e > b && (v[e - 1] == '=' || is_space(v[e - 1]))) --e;
  return std::string(v.substr(b, e - b));
}

struct RawSegment {
  Span span;            // untrimmed extent in the normalized text
  std::string heading;  // wikitext heading attached to this segment
};

// Blank-line (and, for wikitext, heading-line) segmentation over [from, to).
std::vector<RawSegment> rule_based_segments(const std::string& text, size_t from, size_t to,
                                            CorpusFormat format) {
  std::vector<RawSegment> segs;
  std::string window = text.substr(from, to - from);
  auto lines = split_lines(window);
  std::string pending_heading;
  std::optional<size_t> seg_start;
  size_t seg_end = 0;
  auto flush = [&](bool consume_heading) {
    if (seg_start) {
      segs.push_back({{from + *seg_start, from + seg_end}, pending_heading});
      seg_start.reset();
      if (consume_heading) pending_heading.clear();
    }
  };
  for (const auto& ln : lines) {
    if (is_blank(window, ln)) {
      flush(false);
    } else if (format == CorpusFormat::wikitext && is_wikitext_heading(window, ln)) {
      flush(true);
      pending_heading = heading_title(window, ln);
    } else {
      if (!seg_start) seg_start = ln.start;
      seg_end = ln.end;
    }
  }
  flush(true);
  return segs;
}

// Positions a segmentation boundary may snap to: start of text, end of text,
// positions after sentence terminators, and paragraph starts.
std::vector<size_t> sentence_boundaries(const std::string& text) {
  std::vector<size_t> bounds;
  bounds.push_back(0);
  for (size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (c == '.' || c == '!' || c == '?') {
      size_t j = i + 1;
      while (j < text.size() && (text[j] == '"' || text[j] == '\'' || text[j] == ')')) ++j;
      if (j >= text.size() || is_space(text[j])) bounds.push_back(j);
    }
    if (c == '\n' && i + 1 < text.size() && text[i + 1] == '\n') {
      size_t j = i + 1;
      while (j < text.size() && text[j] == '\n') ++j;
      if (j < text.size()) bounds.push_back(j);
    }
  }
  bounds.push_back(text.size());
  std::sort(bounds.begin(), bounds.end());
  bounds.erase(std::unique(bounds.begin(), bounds.end()), bounds.end());
  return bounds;
}

size_t snap_to(const std::vector<size_t>& bounds, size_t pos) {
  auto it = std::lower_bound(bounds.begin(), bounds.end(), pos);
  if (it == bounds.end()) return bounds.back();
  if (it == bounds.begin()) return *it;
  size_t hi = *it, lo = *(it - 1);
  return (pos - lo <= hi - pos) ? lo : hi;  // ties snap left
}

std::vector<RawSegment> teacher_segments(const std::string& text, const SegmentOptions& opts,
                                         std::vector<std::string>& warnings) {
  std::vector<Span> proposals = opts.teacher(text);
  auto bounds = sentence_boundaries(text);
  std::vector<Span> kept;
  for (const auto& p : proposals) {
    if (p.start >= p.end || p.end > text.size()) {
      warnings.push_back("teacher boundary out of range [" + std::to_string(p.start) + "," +
                         std::to_string(p.end) + "); region falls back to rule_based");
      continue;
    }
    Span snapped{snap_to(bounds, p.start), snap_to(bounds, p.end)};
    if (snapped.start >= snapped.end) {
      warnings.push_back("teacher boundary collapsed after snapping at " +
                         std::to_string(p.start));
      continue;
    }
    if (!kept.empty() && snapped.start < kept.back().end) {
      warnings.push_back("teacher boundary overlaps previous passage at " +
                         std::to_string(snapped.start) + "; region falls back to rule_based");
      continue;
    }
    kept.push_back(snapped);
  }
  // Accepted spans become segments; uncovered regions are re-segmented with
  // the rule-based splitter.
  std::vector<RawSegment> segs;
  size_t cursor = 0;
  auto fill_gap = [&](size_t from, size_t to) {
    if (from >= to) return;
    if (trim_view(std::string_view(text).substr(from, to - from)).empty()) return;
    auto gap_segs = rule_based_segments(text, from, to, opts.format);
    segs.insert(segs.end(), gap_segs.begin(), gap_segs.end());
  };
  for (const auto& s : kept) {
    fill_gap(cursor, s.start);
    segs.push_back({s, ""});
    cursor = s.end;
  }
  fill_gap(cursor, text.size());
  std::sort(segs.begin(), segs.end(),
            [](const RawSegment& a, const RawSegment& b) { return a.span.start < b.span.start; });
  return segs;
}

// Trims a raw segment to its passage extent; nullopt when nothing remains.
std::optional<Span> trimmed_span(const std::string& text, Span s) {
  while (s.start < s.end && is_space(text[s.start])) ++s.start;
  while (s.end > s.start && is_space(text[s.end - 1])) --s.end;
  if (s.start >= s.end) return std::nullopt;
  return s;
}

std::string normalization_settings(const IngestOptions& opts) {
  std::ostringstream os;
  os << "newlines=unix;trim=passage;v=1"
     << ";format=" << (opts.format == CorpusFormat::wikitext ? "wikitext" : "plain")
     << ";mode=" << (opts.mode == SegmentMode::teacher ? "teacher" : "rule_based")
     << ";min_passage_chars=" << opts.min_passage_chars;
  return os.str();
}

}  // namespace

CorpusIndex::CorpusIndex(std::string source_path, std::string normalization_fingerprint,
                         std::vector<Passage> passages, std::vector<Span> separators,
                         size_t n_chars, std::vector<std::string> warnings)
    : source_path_(std::move(source_path)),
      normalization_fingerprint_(std::move(normalization_fingerprint)),
      passages_(std::move(passages)),
      separators_(std::move(separators)),
      n_chars_(n_chars),
      warnings_(std::move(warnings)) {
  for (size_t i = 0; i < passages_.size(); ++i) by_location_[passages_[i].location] = i;
}

bool CorpusIndex::has_location(int64_t location) const {
  return by_location_.count(location) > 0;
}

const Passage* CorpusIndex::find(int64_t location) const {
  auto it = by_location_.find(location);
  return it == by_location_.end() ? nullptr : &passages_[it->second];
}

std::string CorpusIndex::content_fingerprint() const { return fingerprint(serialize_index(*this)); }

SegmentResult segment_passages(const std::string& raw_text, const SegmentOptions& opts) {
  if (raw_text.empty()) throw PreconditionError("segment_passages: raw_text is empty");
  if (opts.mode == SegmentMode::teacher && !opts.teacher)
    throw PreconditionError("segment_passages: teacher mode requires a proposal function");

  SegmentResult result;
  std::vector<RawSegment> segs =
      opts.mode == SegmentMode::teacher
          ? teacher_segments(raw_text, opts, result.warnings)
          : rule_based_segments(raw_text, 0, raw_text.size(), opts.format);

  // Trim each segment down to its passage extent.
  struct Trimmed {
    Span span;
    std::string heading;
  };
  std::vector<Trimmed> trimmed;
  for (const auto& seg : segs)
    if (auto s = trimmed_span(raw_text, seg.span)) trimmed.push_back({*s, seg.heading});

  // Merge short passages forward (into the next passage). The final passage
  // has nowhere to merge and is kept as is.
  if (opts.min_passage_chars > 0) {
    std::vector<Trimmed> merged;
    for (size_t i = 0; i < trimmed.size(); ++i) {
      Trimmed cur = trimmed[i];
      while (cur.span.end - cur.span.start < opts.min_passage_chars && i + 1 < trimmed.size()) {
        ++i;
        cur.span.end = trimmed[i].span.end;
        if (cur.heading.empty()) cur.heading = trimmed[i].heading;
      }
      merged.push_back(cur);
    }
    trimmed = std::move(merged);
  }

  auto starts = line_starts(raw_text);
  int64_t next_location = 0;
  size_t cursor = 0;
  for (const auto& t : trimmed) {
    Passage p;
    p.location = next_location++;
    p.text = raw_text.substr(t.span.start, t.span.end - t.span.start);
    p.char_span = t.span;
    p.line_span = {line_of(starts, t.span.start), line_of(starts, t.span.end - 1) + 1};
    p.heading = t.heading;
    if (cursor < t.span.start) result.separators.push_back({cursor, t.span.start});
    cursor = t.span.end;
    result.passages.push_back(std::move(p));
  }
  if (cursor < raw_text.size()) result.separators.push_back({cursor, raw_text.size()});
  return result;
}

CorpusIndex ingest_text(const std::string& raw_text, const std::string& source_path,
                        const IngestOptions& opts) {
  if (auto bad = first_invalid_utf8(raw_text))
    throw DecodeError(source_path + ": invalid UTF-8 at byte offset " + std::to_string(*bad),
                      *bad);
  std::string text = normalize_newlines(raw_text);
  if (trim_view(text).empty()) throw Error(source_path + ": empty corpus");

  SegmentOptions seg;
  seg.mode = opts.mode;
  seg.format = opts.format;
  seg.min_passage_chars = opts.min_passage_chars;
  seg.teacher = opts.teacher;
  SegmentResult segmented = segment_passages(text, seg);

  return CorpusIndex(source_path, fingerprint(normalization_settings(opts)),
                     std::move(segmented.passages), std::move(segmented.separators), text.size(),
                     std::move(segmented.warnings));
}

CorpusIndex ingest_corpus(const std::string& path, const IngestOptions& opts) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open corpus file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw IoError("read failure on corpus file: " + path);
  return ingest_text(buf.str(), path, opts);
}

const Passage& locate_passage(const CorpusIndex& index, int64_t location) {
  if (const Passage* p = index.find(location)) return *p;
  throw LookupError("unknown passage location: " + std::to_string(location));
}

std::string serialize_index(const CorpusIndex& index) {
  json out;
  out["source_path"] = index.source_path();
  out["normalization_fingerprint"] = index.normalization_fingerprint();
  json passages = json::array();
  for (const auto& p : index.passages()) {
    passages.push_back({{"location", p.location},
                        {"text", p.text},
                        {"char_span", {p.char_span.start, p.char_span.end}},
                        {"line_span", {p.line_span.start, p.line_span.end}}});
  }
  out["passages"] = std::move(passages);
  return out.dump(2) + "\n";
}

void write_index(const CorpusIndex& index, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write index file: " + path);
  out << serialize_index(index);
  if (!out) throw IoError("write failure on index file: " + path);
}

CorpusIndex read_index(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open index file: " + path);
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw SchemaError("index file is not valid JSON: " + path);
  if (!doc.is_object() || !doc.contains("passages") || !doc["passages"].is_array())
    throw SchemaError("index file missing passages array: " + path);
  std::vector<Passage> passages;
  size_t n_chars = 0;
  std::vector<Span> separators;
  size_t cursor = 0;
  for (const auto& jp : doc["passages"]) {
    Passage p;
    if (!jp.contains("location") || !jp.contains("text") || !jp.contains("char_span") ||
        !jp.contains("line_span"))
      throw SchemaError("passage record missing required field in " + path);
    p.location = jp["location"].get<int64_t>();
    p.text = jp["text"].get<std::string>();
    p.char_span = {jp["char_span"][0].get<size_t>(), jp["char_span"][1].get<size_t>()};
    p.line_span = {jp["line_span"][0].get<size_t>(), jp["line_span"][1].get<size_t>()};
    if (cursor < p.char_span.start) separators.push_back({cursor, p.char_span.start});
    cursor = p.char_span.end;
    n_chars = std::max(n_chars, p.char_span.end);
    passages.push_back(std::move(p));
  }
  return CorpusIndex(doc.value("source_path", ""), doc.value("normalization_fingerprint", ""),
                     std::move(passages), std::move(separators), n_chars);
}

}  // namespace krtest
