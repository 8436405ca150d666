#include "guidec/decoders.hpp"

#include "guidec/errors.hpp"

namespace guidec {

Scheme parse_scheme(const std::string& name) {
  if (name == "original") return Scheme::kOriginal;
  if (name == "ras") return Scheme::kRas;
  if (name == "eas") return Scheme::kEas;
  if (name == "hier-ras") return Scheme::kHierRas;
  if (name == "hier-eas") return Scheme::kHierEas;
  throw ValidationError("unknown decoding scheme: " + name +
                        " (expected original|ras|eas|hier-ras|hier-eas)");
}

std::string scheme_name(Scheme scheme) {
  switch (scheme) {
    case Scheme::kOriginal: return "original";
    case Scheme::kRas: return "ras";
    case Scheme::kEas: return "eas";
    case Scheme::kHierRas: return "hier-ras";
    case Scheme::kHierEas: return "hier-eas";
  }
  throw ValidationError("invalid scheme");
}

bool scheme_needs_bank(Scheme scheme) {
  return scheme == Scheme::kHierRas || scheme == Scheme::kHierEas;
}

DecodeOutput decode_sequence(const NextTokenModel& model, const DetectorBank* bank,
                             Scheme scheme, const DecodeParams& params,
                             std::span<const TokenId> prefix, std::int32_t n_tokens,
                             std::uint64_t seed) {
  if (scheme_needs_bank(scheme) && bank == nullptr) {
    throw ValidationError("scheme " + scheme_name(scheme) + " requires a detector bank");
  }
  if (!scheme_needs_bank(scheme) && bank != nullptr) {
    throw ValidationError("scheme " + scheme_name(scheme) +
                          " does not accept a detector bank");
  }
  if (n_tokens < 1) throw ValidationError("n_tokens must be >= 1");

  DecodeOutput out;
  out.sequence.vocab_size = model.vocab_size();

  switch (scheme) {
    case Scheme::kOriginal: {
      Rng rng(seed);
      out.sequence.tokens =
          baseline_topk_generate(model, prefix, n_tokens, params.original.top_k,
                                 params.original.temperature, rng);
      return out;
    }
    case Scheme::kRas: {
      Rng rng(seed);
      out.sequence.tokens =
          windowed_penalty_generate(model, prefix, n_tokens, params.ras, rng);
      return out;
    }
    case Scheme::kEas: {
      Rng rng(seed);
      out.sequence.tokens =
          eas_generate(model, prefix, n_tokens, params.eas, rng).tokens;
      return out;
    }
    case Scheme::kHierRas:
    case Scheme::kHierEas: {
      HierParams hp = params.hier;
      hp.max_len = n_tokens;
      HierGeneration gen =
          scheme == Scheme::kHierEas
              ? hier_generate(model, *bank, prefix, hp, seed)
              : hier_generate_with(model, *bank, prefix, hp, RasSampler(params.ras),
                                   seed);
      out.sequence = std::move(gen.sequence);
      out.rounds = std::move(gen.rounds);
      return out;
    }
  }
  throw ValidationError("invalid scheme");
}

std::vector<TokenSequence> decode_corpus(const NextTokenModel& model,
                                         const DetectorBank* bank, Scheme scheme,
                                         const DecodeParams& params,
                                         std::int32_t count, std::int32_t n_tokens,
                                         std::uint64_t seed,
                                         std::vector<RoundLog>* first_rounds) {
  if (count < 1) throw ValidationError("sequence count must be >= 1");

  std::vector<TokenSequence> corpus;
  corpus.reserve(count);
  for (std::int32_t i = 0; i < count; ++i) {
    DecodeOutput out = decode_sequence(model, bank, scheme, params, {}, n_tokens,
                                       stream_seed(seed, static_cast<std::uint64_t>(i)));
    if (i == 0 && first_rounds != nullptr) *first_rounds = std::move(out.rounds);
    corpus.push_back(std::move(out.sequence));
  }
  return corpus;
}

}  // namespace guidec
