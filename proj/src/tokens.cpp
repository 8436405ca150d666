#include "guidec/tokens.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "guidec/errors.hpp"

namespace guidec {

void validate_sequence(const TokenSequence& seq) {
  if (seq.vocab_size <= 0) {
    throw ValidationError("vocab_size must be positive, got " +
                          std::to_string(seq.vocab_size));
  }
  for (TokenId t : seq.tokens) {
    if (t < 0 || t >= seq.vocab_size) {
      throw ValidationError("token id " + std::to_string(t) +
                            " outside vocabulary of size " +
                            std::to_string(seq.vocab_size));
    }
  }
}

std::vector<Segment> crop_segments(const TokenSequence& seq, std::int32_t length,
                                   std::int32_t hop) {
  if (length < 1) throw ValidationError("segment length must be >= 1");
  if (hop < 1) throw ValidationError("crop hop must be >= 1");

  std::vector<Segment> out;
  const std::size_t n = seq.tokens.size();
  for (std::size_t offset = 0; offset + static_cast<std::size_t>(length) <= n;
       offset += static_cast<std::size_t>(hop)) {
    Segment seg;
    seg.tokens.assign(seq.tokens.begin() + offset,
                      seq.tokens.begin() + offset + length);
    seg.spec = SegmentSpec{length, 1};
    seg.source_offset = offset;
    out.push_back(std::move(seg));
  }
  return out;
}

std::vector<TokenId> skip_sample(std::span<const TokenId> window, std::int32_t r) {
  if (r < 1) throw ValidationError("skip-sampling rate must be >= 1");
  std::vector<TokenId> out;
  out.reserve((window.size() + r - 1) / r);
  for (std::size_t i = 0; i < window.size(); i += static_cast<std::size_t>(r)) {
    out.push_back(window[i]);
  }
  return out;
}

namespace {

bool is_blank(const std::string& line) {
  return line.find_first_not_of(" \t\r") == std::string::npos;
}

std::vector<TokenId> parse_token_line(const std::string& line, std::size_t line_no,
                                      std::int32_t vocab_size) {
  std::vector<TokenId> tokens;
  const char* p = line.data();
  const char* end = p + line.size();
  while (p < end) {
    if (*p == ' ' || *p == '\t' || *p == '\r') {
      ++p;
      continue;
    }
    TokenId value = 0;
    auto [next, ec] = std::from_chars(p, end, value);
    if (ec != std::errc{} || (next < end && *next != ' ' && *next != '\t' && *next != '\r')) {
      throw ParseError("malformed token near '" +
                           std::string(p, std::min<std::size_t>(end - p, 12)) + "'",
                       line_no);
    }
    if (value < 0 || value >= vocab_size) {
      throw ValidationError("line " + std::to_string(line_no) + ": token id " +
                            std::to_string(value) + " outside vocabulary of size " +
                            std::to_string(vocab_size));
    }
    tokens.push_back(value);
    p = next;
  }
  return tokens;
}

}  // namespace

std::vector<TokenSequence> parse_corpus(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;

  if (!std::getline(in, line)) throw ParseError("empty corpus file", 1);
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  constexpr const char* kHeader = "#vocab=";
  if (line.rfind(kHeader, 0) != 0) {
    throw ParseError("expected header '#vocab=<V>'", line_no);
  }
  std::int32_t vocab_size = 0;
  const char* p = line.data() + 7;
  auto [next, ec] = std::from_chars(p, line.data() + line.size(), vocab_size);
  if (ec != std::errc{} || next != line.data() + line.size() || vocab_size <= 0) {
    throw ParseError("invalid vocabulary size in header", line_no);
  }

  std::vector<TokenSequence> sequences;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    if (is_blank(line)) {
      // Single-space line: an explicitly written empty sequence.
      sequences.push_back(TokenSequence{vocab_size, {}});
      continue;
    }
    sequences.push_back(
        TokenSequence{vocab_size, parse_token_line(line, line_no, vocab_size)});
  }
  return sequences;
}

std::string format_corpus(const std::vector<TokenSequence>& sequences) {
  if (sequences.empty()) throw ValidationError("cannot format an empty corpus");
  const std::int32_t vocab_size = sequences.front().vocab_size;
  std::string out = "#vocab=" + std::to_string(vocab_size) + "\n";
  for (const TokenSequence& seq : sequences) {
    if (seq.vocab_size != vocab_size) {
      throw ValidationError("corpus sequences must share one vocab_size");
    }
    validate_sequence(seq);
    if (seq.tokens.empty()) {
      out += " \n";
      continue;
    }
    for (std::size_t i = 0; i < seq.tokens.size(); ++i) {
      if (i) out += ' ';
      out += std::to_string(seq.tokens[i]);
    }
    out += '\n';
  }
  return out;
}

std::vector<TokenSequence> read_corpus(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open corpus file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_corpus(buf.str());
}

void write_corpus(const std::string& path, const std::vector<TokenSequence>& sequences) {
  std::string text = format_corpus(sequences);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open corpus file for writing: " + path);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("failed writing corpus file: " + path);
}

}  // namespace guidec
