#pragma once

// Distribution transforms, baseline samplers, and entropy-aware sampling.
//
// Entropy-aware sampling (EAS) keeps a decaying memory of recently
// competitive tokens. Each remembered token j is penalized by
//
//     pi(j) = min(gamma, sum over entries (j, r, a) of alpha * 1/(1+r) * beta^a)
//
// where r is the rank the token held when it entered the memory and a its
// age in steps. The penalty is subtracted from the (temperature- and
// top-k-filtered) next-token probabilities, the positive remainder is
// renormalized, and the token is drawn by nucleus sampling. Every sampler
// here consumes exactly one rng draw per emitted token, so samplers that
// share a transform pipeline can be replayed against each other.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "guidec/armodel.hpp"
#include "guidec/rng.hpp"
#include "guidec/tokens.hpp"

namespace guidec {

struct EasParams {
  double alpha = 0.2;        // penalty scale
  double beta = 0.7;         // temporal decay
  double gamma = 0.8;        // penalty cap
  std::int32_t cluster_k = 3;   // memory cluster size k_e
  std::int32_t window = 15;     // memory window W
  double top_p = 0.8;        // nucleus threshold v
  std::int32_t top_k = 50;
  double temperature = 1.0;

  void validate() const;
};

struct MemoryEntry {
  TokenId token = 0;
  std::int32_t rank = 1;  // 1 = most probable at insertion time
  std::int32_t age = 0;
};

struct EasState {
  std::vector<MemoryEntry> entries;
};

// p_i^(1/T), renormalized. T=1 returns the input unchanged (bit-exact).
std::vector<double> apply_temperature(std::vector<double> probs, double temperature);

// Keeps the k largest entries (ties broken by lower token id), zeroes the
// rest, renormalizes. k >= size returns the input unchanged (bit-exact).
std::vector<double> filter_top_k(std::vector<double> probs, std::int32_t k);

// Zeroes everything outside the nucleus (the smallest descending-probability
// prefix whose cumulative mass reaches v, ties by lower id) and renormalizes.
std::vector<double> nucleus_filter(std::vector<double> probs, double v);

// Draws one token from the renormalized nucleus. Consumes one rng draw.
TokenId nucleus_sample(std::span<const double> probs, double v, Rng& rng);

// Sparse penalty map: tokens absent from the memory (or with an exactly zero
// accumulated penalty) are omitted.
std::map<TokenId, double> eas_penalties(const EasState& state, const EasParams& params);

// One EAS step: returns the sampled token and updates `state` in place
// (aging, eviction, insertion of the new top-k_e cluster plus the sample).
TokenId eas_step(const NextTokenModel& model, std::span<const TokenId> prefix,
                 EasState& state, const EasParams& params, Rng& rng);

// Runs eas_step n_tokens times, threading the state. Starts from an empty
// memory when no state is given. If eos is set, generation stops once it is
// sampled (the eos token is included in the output).
struct EasGeneration {
  std::vector<TokenId> tokens;
  EasState state;
};
EasGeneration eas_generate(const NextTokenModel& model, std::span<const TokenId> prefix,
                           std::int32_t n_tokens, const EasParams& params, Rng& rng,
                           EasState state = {},
                           std::optional<TokenId> eos = std::nullopt);

// Vanilla ancestral sampling from the temperature- and top-k-filtered
// distribution (the "Original" scheme).
std::vector<TokenId> baseline_topk_generate(const NextTokenModel& model,
                                            std::span<const TokenId> prefix,
                                            std::int32_t n_tokens, std::int32_t k,
                                            double temperature, Rng& rng);

struct RasParams {
  std::int32_t top_k = 50;
  double top_p = 0.8;
  std::int32_t window = 25;   // lookback W_r over the sequence tail
  double penalty = 0.1;       // multiplicative penalty tau_r in (0, 1]

  void validate() const;
};

// Multiplies the probability of every token present in `window_tokens` by
// `penalty` and renormalizes. Exposed for tests.
std::vector<double> windowed_penalty_adjust(std::vector<double> probs,
                                            std::span<const TokenId> window_tokens,
                                            double penalty);

// RAS-style stand-in: penalty -> renormalize -> top-k -> nucleus sampling.
// The lookback window is the trailing W_r tokens of prefix + generated.
std::vector<TokenId> windowed_penalty_generate(const NextTokenModel& model,
                                               std::span<const TokenId> prefix,
                                               std::int32_t n_tokens,
                                               const RasParams& params, Rng& rng);

// A resumable per-stream sampling policy. Hierarchical decoding forks one of
// these per beam; clone() must produce an independent deep copy.
class StreamSampler {
 public:
  virtual ~StreamSampler() = default;
  virtual std::unique_ptr<StreamSampler> clone() const = 0;
  virtual TokenId step(const NextTokenModel& model, std::span<const TokenId> context,
                       Rng& rng) = 0;
};

class EasSampler final : public StreamSampler {
 public:
  explicit EasSampler(EasParams params, EasState state = {})
      : params_(params), state_(std::move(state)) {}

  std::unique_ptr<StreamSampler> clone() const override {
    return std::make_unique<EasSampler>(*this);
  }
  TokenId step(const NextTokenModel& model, std::span<const TokenId> context,
               Rng& rng) override {
    return eas_step(model, context, state_, params_, rng);
  }

  const EasState& state() const { return state_; }
  EasState& state() { return state_; }
  const EasParams& params() const { return params_; }

 private:
  EasParams params_;
  EasState state_;
};

// Stateless beyond the sequence itself: the penalty window is read from the
// context tail at every step.
class RasSampler final : public StreamSampler {
 public:
  explicit RasSampler(RasParams params) : params_(params) {}

  std::unique_ptr<StreamSampler> clone() const override {
    return std::make_unique<RasSampler>(*this);
  }
  TokenId step(const NextTokenModel& model, std::span<const TokenId> context,
               Rng& rng) override;

 private:
  RasParams params_;
};

}  // namespace guidec
