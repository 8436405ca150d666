#pragma once

// Named decoding schemes binding the samplers and the hierarchical framework
// into corpus-level generation. Scheme names mirror the usual comparison
// rows: original (vanilla top-k), ras (windowed-penalty stand-in), eas, and
// their hierarchical variants.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "guidec/armodel.hpp"
#include "guidec/detector.hpp"
#include "guidec/hierdecode.hpp"
#include "guidec/sampling.hpp"

namespace guidec {

enum class Scheme { kOriginal, kRas, kEas, kHierRas, kHierEas };

struct OriginalParams {
  std::int32_t top_k = 50;
  double temperature = 1.0;
};

struct DecodeParams {
  OriginalParams original;
  RasParams ras;
  EasParams eas;
  HierParams hier;  // hier.eas is kept in sync by the config layer
};

Scheme parse_scheme(const std::string& name);
std::string scheme_name(Scheme scheme);
bool scheme_needs_bank(Scheme scheme);

struct DecodeOutput {
  TokenSequence sequence;
  std::vector<RoundLog> rounds;  // empty for non-hierarchical schemes
};

// One sequence of exactly n_tokens. `bank` must be non-null exactly for the
// hierarchical schemes.
DecodeOutput decode_sequence(const NextTokenModel& model, const DetectorBank* bank,
                             Scheme scheme, const DecodeParams& params,
                             std::span<const TokenId> prefix, std::int32_t n_tokens,
                             std::uint64_t seed);

// `count` sequences; sequence i runs on seed stream_seed(seed, i).
std::vector<TokenSequence> decode_corpus(const NextTokenModel& model,
                                         const DetectorBank* bank, Scheme scheme,
                                         const DecodeParams& params,
                                         std::int32_t count, std::int32_t n_tokens,
                                         std::uint64_t seed,
                                         std::vector<RoundLog>* first_rounds = nullptr);

}  // namespace guidec
