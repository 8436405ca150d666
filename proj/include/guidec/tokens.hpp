#pragma once

// Token sequences, multi-resolution segment construction, and corpus I/O.
//
// Corpus file format (UTF-8 text):
//   - first line:        #vocab=<V>
//   - each subsequent non-empty, non-comment line: one sequence of
//     space-separated decimal token ids
//   - lines beginning with '#' after the header are comments
//   - an empty sequence is written as a single-space line so that it survives
//     a round trip (a fully blank line is ignored on read)

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace guidec {

using TokenId = std::int32_t;

struct TokenSequence {
  std::int32_t vocab_size = 0;
  std::vector<TokenId> tokens;

  std::size_t size() const { return tokens.size(); }
};

// Throws ValidationError if any token id falls outside [0, vocab_size).
void validate_sequence(const TokenSequence& seq);

// A (length, stride) resolution configuration. `length` is the post-sampling
// token count; `stride` is the skip-sampling rate r (1 = native resolution).
struct SegmentSpec {
  std::int32_t length = 0;
  std::int32_t stride = 1;

  std::int32_t source_window() const { return length * stride; }
  bool operator==(const SegmentSpec&) const = default;
};

struct Segment {
  std::vector<TokenId> tokens;
  SegmentSpec spec;
  std::size_t source_offset = 0;
};

// Contiguous windows of length L at offsets 0, hop, 2*hop, ... for every
// offset o with o + L <= len(seq). Short inputs yield an empty list; the
// produced segments have stride 1.
std::vector<Segment> crop_segments(const TokenSequence& seq, std::int32_t length,
                                   std::int32_t hop);

// Every r-th element of the window (indices 0, r, 2r, ...). r=1 is identity.
std::vector<TokenId> skip_sample(std::span<const TokenId> window, std::int32_t r);

std::vector<TokenSequence> read_corpus(const std::string& path);
void write_corpus(const std::string& path, const std::vector<TokenSequence>& sequences);

// String-level codecs behind the file I/O; used directly by tests.
std::vector<TokenSequence> parse_corpus(const std::string& text);
std::string format_corpus(const std::vector<TokenSequence>& sequences);

}  // namespace guidec
