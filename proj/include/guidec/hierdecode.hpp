#pragma once

// Hierarchical sampling with progressive discriminator pruning.
//
// Each round spawns B0 candidate continuations of length L1, prunes to B1 by
// the short-span detector, extends survivors to L2, prunes to B2 by the
// mid-span detector, extends to L3, and picks the winner by weighted
// multi-resolution rank aggregation (full chunk, skip-2 view, skip-5 view).
// The winning chunk is appended and its sampler state seeds the next round.
//
// Rng streams: stream 0 drives the warmup; the beam with spawn index i of
// round r runs on stream 1 + r*B0 + i. This makes a B0=B1=B2=1 run
// replayable by calling eas_generate directly on the same streams.

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "guidec/armodel.hpp"
#include "guidec/detector.hpp"
#include "guidec/rng.hpp"
#include "guidec/sampling.hpp"
#include "guidec/tokens.hpp"

namespace guidec {

struct HierParams {
  std::int32_t warmup_len = 20;               // L_w
  std::array<std::int32_t, 3> stage_lens = {10, 25, 50};  // (L1, L2, L3)
  std::array<std::int32_t, 3> beams = {8, 5, 3};          // (B0, B1, B2)
  std::int32_t max_len = 100;                 // L_max, generated tokens
  std::array<double, 3> rank_weights = {1.0, 1.0, 1.0};   // (w50, w25, w10)
  EasParams eas;
  std::optional<TokenId> eos;                 // off by default

  void validate() const;
};

// One in-flight decoding hypothesis. `context` holds prefix + accepted tokens
// + this round's chunk; the chunk is the suffix starting at `chunk_start`.
struct Beam {
  std::vector<TokenId> context;
  std::size_t chunk_start = 0;
  std::unique_ptr<StreamSampler> sampler;
  Rng rng = Rng(0);
  std::int32_t spawn_index = 0;
  double last_score = 0.0;
  bool done = false;  // hit eos; exempt from further extension

  std::span<const TokenId> chunk() const {
    return std::span<const TokenId>(context).subspan(chunk_start);
  }
  Beam fork() const;
};

struct StageLog {
  std::vector<double> scores;      // by beam order entering the stage
  std::vector<std::int32_t> ids;   // spawn indices, same order
  std::vector<std::int32_t> kept;  // spawn indices surviving, result order
  bool skipped = false;            // pass-through (length mismatch / eos mode)
};

struct RoundLog {
  std::int32_t round = 0;
  std::array<std::int32_t, 3> stage_lens = {0, 0, 0};  // clipped (l1, l2, l3)
  StageLog stage1;                 // scored by m10
  StageLog stage2;                 // scored by m25
  std::vector<std::int32_t> final_ids;  // spawn indices at final selection
  std::vector<double> s50, s25, s10;
  std::vector<double> r50, r25, r10;
  std::vector<double> aggregate;   // R[i]
  std::vector<std::string> final_members;  // bank members used, by weight slot
  std::int32_t winner_pos = -1;    // index into final_ids
  std::int32_t winner_spawn_index = -1;
  std::int32_t chosen_len = 0;
};

std::string round_log_to_json(const RoundLog& log);
void write_round_logs(const std::string& path, std::span<const RoundLog> logs);

// L_w tokens of EAS appended to the prefix; L_w = 0 is a no-op.
struct WarmupResult {
  std::vector<TokenId> tokens;  // prefix + warmup tokens
  EasState state;
};
WarmupResult warmup(const NextTokenModel& model, std::span<const TokenId> prefix,
                    const HierParams& params, Rng& rng);

// B0 independent beams, each cloning `prototype` (sampler state) and drawing
// from rng stream root_seed / (stream_base + index).
std::vector<Beam> spawn_candidates(const NextTokenModel& model,
                                   std::span<const TokenId> prefix,
                                   const StreamSampler& prototype, std::int32_t count,
                                   std::int32_t chunk_len, std::uint64_t root_seed,
                                   std::uint64_t stream_base = 0,
                                   std::optional<TokenId> eos = std::nullopt);

// EAS-flavored spawn matching the shared-state contract directly.
std::vector<Beam> spawn_candidates(const NextTokenModel& model,
                                   std::span<const TokenId> prefix,
                                   const EasState& shared_state, std::int32_t count,
                                   std::int32_t chunk_len, const EasParams& params,
                                   std::uint64_t root_seed);

// Scores each beam's chunk, keeps the keep_n best (descending score, ties by
// original order), and records scores in `log` when given.
std::vector<Beam> prune(std::vector<Beam> beams, const SegmentDetector& detector,
                        std::int32_t keep_n, StageLog* log = nullptr);

// Grows every live beam's chunk by delta tokens on its own sampler and
// stream.
void extend(std::vector<Beam>& beams, const NextTokenModel& model, std::int32_t delta,
            std::optional<TokenId> eos = std::nullopt);

struct RankAggregation {
  std::vector<double> r50, r25, r10;  // fractional ranks, 1 = best
  std::vector<double> aggregate;      // weighted rank sums R[i]
  std::int32_t best = -1;             // argmin R; ties by higher s50, lower index
};

// weights = (w50, w25, w10), not all zero.
RankAggregation aggregate_ranks(std::span<const double> s50, std::span<const double> s25,
                                std::span<const double> s10,
                                const std::array<double, 3>& weights);

struct FinalScores {
  std::vector<double> s50, s25, s10;
};

// s50 = m50(chunk); s25 = m50_25(skip_sample(chunk, 2)); s10 =
// m50_10(skip_sample(chunk, 5)). Chunks must be full-length (L3).
FinalScores final_stage_scores(std::span<const Beam> beams, const DetectorBank& bank);

struct HierGeneration {
  TokenSequence sequence;  // exactly max_len generated tokens (prefix excluded)
  std::vector<RoundLog> rounds;
};

// Alg-2-style decoding with EAS as the inner sampler.
HierGeneration hier_generate(const NextTokenModel& model, const DetectorBank& bank,
                             std::span<const TokenId> prefix, const HierParams& params,
                             std::uint64_t root_seed);

// Same machinery with an arbitrary inner sampler (e.g. the RAS stand-in).
// The prototype supplies initial per-beam state; warmup uses it too.
HierGeneration hier_generate_with(const NextTokenModel& model, const DetectorBank& bank,
                                  std::span<const TokenId> prefix,
                                  const HierParams& params,
                                  const StreamSampler& prototype,
                                  std::uint64_t root_seed);

}  // namespace guidec
