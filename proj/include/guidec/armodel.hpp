#pragma once

// Autoregressive next-token distribution providers.
//
// NGramModel is the stand-in for the frozen codec language model: additive
// smoothing with hard backoff to the longest observed context suffix. It is
// intentionally imperfect so that its generations are distinguishable from
// the HMM source that synthesizes "natural" corpora.

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "guidec/rng.hpp"
#include "guidec/tokens.hpp"

namespace guidec {

class NextTokenModel {
 public:
  virtual ~NextTokenModel() = default;
  virtual std::int32_t vocab_size() const = 0;
  // Probability vector of length vocab_size(); entries >= 0, sum 1 (+-1e-9).
  virtual std::vector<double> dist(std::span<const TokenId> prefix) const = 0;
};

class NGramModel final : public NextTokenModel {
 public:
  NGramModel(std::int32_t vocab_size, std::int32_t order, double lambda);

  std::int32_t vocab_size() const override { return vocab_size_; }
  std::int32_t order() const { return order_; }
  double lambda() const { return lambda_; }

  // Uses the longest context suffix (up to order-1 tokens) that was observed
  // in training; backs off to shorter suffixes and ultimately to the uniform
  // distribution when no level has counts.
  std::vector<double> dist(std::span<const TokenId> prefix) const override;

  std::string to_json() const;
  static NGramModel from_json(const std::string& text);

  void save(const std::string& path) const;
  static NGramModel load(const std::string& path);

 private:
  friend NGramModel ngram_train(const std::vector<TokenSequence>&, std::int32_t,
                                double, std::int32_t);

  struct ContextCounts {
    std::int64_t total = 0;
    std::unordered_map<TokenId, std::int64_t> per_token;
  };

  struct ContextHash {
    std::size_t operator()(const std::vector<TokenId>& ctx) const {
      std::uint64_t h = 0x9E3779B97F4A7C15ULL;
      for (TokenId t : ctx) h = splitmix64(h ^ (static_cast<std::uint64_t>(t) + 1));
      return static_cast<std::size_t>(h);
    }
  };

  void add_count(const std::vector<TokenId>& ctx, TokenId token, std::int64_t n);

  std::int32_t vocab_size_;
  std::int32_t order_;
  double lambda_;
  std::unordered_map<std::vector<TokenId>, ContextCounts, ContextHash> table_;
};

// Counts every context suffix of length 0..n-1 followed by a token, over all
// sequences. vocab_size is taken from the corpus unless overridden (needed for
// an empty corpus, which yields a uniform model).
NGramModel ngram_train(const std::vector<TokenSequence>& corpus, std::int32_t order,
                       double lambda, std::int32_t vocab_size_override = 0);

// Synthetic "natural" token source: a hidden Markov model with row-stochastic
// transition and emission matrices.
struct HmmSource {
  std::int32_t state_count = 0;
  std::int32_t vocab_size = 0;
  std::vector<double> initial;     // state_count
  std::vector<double> transition;  // state_count x state_count, row-major
  std::vector<double> emission;    // state_count x vocab_size, row-major

  // Throws ValidationError if any row is not a probability vector (1e-9).
  void validate() const;
};

// Standard forward generative process; deterministic under a fixed rng.
TokenSequence hmm_sample(const HmmSource& source, std::int32_t length, Rng& rng);

// Stationary distribution of the transition matrix by power iteration.
std::vector<double> hmm_stationary(const HmmSource& source);

}  // namespace guidec
