#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace krtest {

// Half-open [start, end) character or line range.
struct Span {
  size_t start = 0;
  size_t end = 0;
  bool operator==(const Span&) const = default;
};

// A self-contained corpus segment. location is an opaque ordinal key assigned
// at segmentation time; char_span and line_span are both kept so datasets can
// be exported under either offset-based or line-based addressing.
struct Passage {
  int64_t location = 0;
  std::string text;        // trimmed; substring(char_span) of the normalized corpus
  Span char_span;          // into the normalized corpus text
  Span line_span;          // into the normalized corpus lines
  std::string heading;     // wikitext section heading, empty otherwise; not serialized
};

enum class CorpusFormat { plain, wikitext };
enum class SegmentMode { rule_based, teacher };

// Teacher-proposed character ranges for SegmentMode::teacher.
using SegmentProposalFn = std::function<std::vector<Span>(const std::string& raw_text)>;

struct SegmentOptions {
  SegmentMode mode = SegmentMode::rule_based;
  CorpusFormat format = CorpusFormat::plain;
  // Passages shorter than this many characters merge into the following
  // passage. The bare segmentation call defaults to no merging; ingest_corpus
  // applies its own default (200).
  size_t min_passage_chars = 0;
  SegmentProposalFn teacher;  // required for teacher mode
};

struct SegmentResult {
  std::vector<Passage> passages;
  std::vector<Span> separators;     // complement of passage spans
  std::vector<std::string> warnings;
};

struct IngestOptions {
  CorpusFormat format = CorpusFormat::plain;
  SegmentMode mode = SegmentMode::rule_based;
  size_t min_passage_chars = 200;
  SegmentProposalFn teacher;
};

class CorpusIndex {
 public:
  CorpusIndex() = default;
  CorpusIndex(std::string source_path, std::string normalization_fingerprint,
              std::vector<Passage> passages, std::vector<Span> separators, size_t n_chars,
              std::vector<std::string> warnings = {});

  const std::vector<Passage>& passages() const { return passages_; }
  const std::string& source_path() const { return source_path_; }
  const std::string& normalization_fingerprint() const { return normalization_fingerprint_; }
  const std::vector<Span>& separators() const { return separators_; }
  size_t n_chars() const { return n_chars_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

  bool has_location(int64_t location) const;
  const Passage* find(int64_t location) const;

  // Fingerprint of the serialized index; stable across identical ingests.
  std::string content_fingerprint() const;

 private:
  std::string source_path_;
  std::string normalization_fingerprint_;
  std::vector<Passage> passages_;
  std::vector<Span> separators_;
  size_t n_chars_ = 0;
  std::vector<std::string> warnings_;
  std::unordered_map<int64_t, size_t> by_location_;
};

// Splits normalized text into disjoint, ordered passages. Blank lines separate
// passages in rule_based mode; teacher mode snaps proposed boundaries to
// sentence boundaries and falls back to rule_based for invalid regions.
SegmentResult segment_passages(const std::string& raw_text, const SegmentOptions& opts = {});

// Reads, validates (UTF-8), normalizes, and segments a corpus file.
// Deterministic: identical bytes and options produce identical indexes.
CorpusIndex ingest_corpus(const std::string& path, const IngestOptions& opts = {});

// Same, for text already in memory (source_path recorded verbatim).
CorpusIndex ingest_text(const std::string& raw_text, const std::string& source_path,
                        const IngestOptions& opts = {});

// Unique passage for a location key; LookupError naming the key otherwise.
const Passage& locate_passage(const CorpusIndex& index, int64_t location);

// JSON serialization: {source_path, normalization_fingerprint, passages:[...]}.
std::string serialize_index(const CorpusIndex& index);
void write_index(const CorpusIndex& index, const std::string& path);
CorpusIndex read_index(const std::string& path);

}  // namespace krtest
