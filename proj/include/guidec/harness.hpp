#pragma once

// End-to-end synthetic benchmark: corpus synthesis from a structured HMM,
// n-gram model training, detector-bank training and evaluation, and a
// decoder comparison with token-space quality proxies.
//
// The HMM transition matrix is banded (strong self/neighbor transitions) and
// the emissions are overlapping token bands, so the smoothed n-gram model
// underfits it measurably and the real/fake gap the detectors need exists by
// construction. Stochastic cross-decoder comparisons are decided by majority
// over the configured eval seeds; single-seed results are logged, not
// asserted.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "guidec/armodel.hpp"
#include "guidec/decoders.hpp"
#include "guidec/detector.hpp"
#include "guidec/tokens.hpp"

namespace guidec {

struct BenchmarkConfig {
  std::int32_t vocab_size = 32;
  std::int32_t hmm_states = 8;
  std::uint64_t structure_seed = 7;

  std::int32_t real_sequences = 400;
  std::int32_t sequence_length = 250;
  std::int32_t fakes_per_real = 3;
  double holdout_fraction = 0.2;

  std::int32_t ngram_order = 4;
  double ngram_lambda = 2.0;

  std::int32_t detector_feature_dim = 4096;
  TrainConfig detector_train;

  DecodeParams decode;
  std::vector<std::string> decoders = {"original", "ras", "eas", "hier-ras",
                                       "hier-eas"};
  std::int32_t eval_sequences = 60;
  std::int32_t eval_length = 150;
  double kl_epsilon = 0.1;

  std::vector<std::uint64_t> eval_seeds = {1, 2, 3, 4, 5};
  std::string output_dir = "bench-out";

  void validate() const;
};

// Banded-transition HMM with overlapping emission bands; the seeded jitter
// keeps rows irregular without destroying the structure.
HmmSource make_banded_hmm(std::int32_t states, std::int32_t vocab_size,
                          std::uint64_t structure_seed);

// KL(reference bigram distribution || candidate bigram distribution) in nats
// with additive-epsilon smoothing on both sides.
double bigram_kl(const std::vector<TokenSequence>& candidate,
                 const std::vector<TokenSequence>& reference, std::int32_t vocab_size,
                 double epsilon);

struct RepetitionStats {
  std::int32_t max_run = 0;
  double mean_run = 0.0;
  double distinct_1 = 0.0;
  double distinct_2 = 0.0;  // 0 for length-1 sequences (no bigrams)
};

RepetitionStats repetition_stats(const TokenSequence& seq);

struct DetectorRow {
  std::string name;
  SegmentSpec spec;
  double auroc = 0.0;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double null_sigma = 0.0;     // permutation-null std of AUROC
  double train_loss = 0.0;
  std::size_t eval_real = 0;
  std::size_t eval_fake = 0;
};

struct DecoderReport {
  std::string name;
  double bigram_kl_nats = 0.0;
  double mean_run = 0.0;
  double max_run = 0.0;         // mean over sequences of per-sequence max
  double distinct_1 = 0.0;
  double distinct_2 = 0.0;
  std::map<std::string, double> mean_bank_scores;
  std::int32_t sequences = 0;
  std::int32_t length = 0;
  // Wall-clock; excluded from the deterministic report files.
  double seconds_per_token = 0.0;
};

struct SeedResult {
  std::uint64_t seed = 0;
  std::vector<DetectorRow> detector_rows;   // m10, m25, m50, m50_25, m50_10
  std::vector<DecoderReport> decoder_rows;  // config order
};

struct OrderingCheck {
  std::string name;
  std::int32_t passes = 0;
  std::int32_t total = 0;
  bool asserted = false;  // only when >= 3 seeds
  bool ok = true;
};

struct BenchmarkResult {
  std::vector<SeedResult> seeds;
  std::vector<OrderingCheck> checks;

  bool all_ok() const;
};

// Runs the full pipeline once per eval seed. When `output_dir` is set, writes
// detectors.jsonl, decoders.jsonl, summary.txt, per-decoder corpora and hier
// round logs for the first seed, and timings.jsonl (the only
// non-deterministic file).
BenchmarkResult synth_benchmark(const BenchmarkConfig& cfg,
                                const std::optional<std::string>& output_dir = {});

}  // namespace guidec
