#include "guidec/hierdecode.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "json.hpp"

#include "guidec/errors.hpp"

namespace guidec {

void HierParams::validate() const {
  if (warmup_len < 0) throw ValidationError("warmup_len must be >= 0");
  if (stage_lens[0] < 1 || stage_lens[0] >= stage_lens[1] ||
      stage_lens[1] >= stage_lens[2]) {
    throw ValidationError("stage lengths must be strictly increasing positive");
  }
  if (beams[2] < 1 || beams[0] < beams[1] || beams[1] < beams[2]) {
    throw ValidationError("beam widths must satisfy B0 >= B1 >= B2 >= 1");
  }
  if (max_len < 1) throw ValidationError("max_len must be >= 1");
  if (max_len < warmup_len) throw ValidationError("max_len must be >= warmup_len");
  if (rank_weights[0] < 0.0 || rank_weights[1] < 0.0 || rank_weights[2] < 0.0 ||
      rank_weights[0] + rank_weights[1] + rank_weights[2] <= 0.0) {
    throw ValidationError("rank weights must be non-negative and not all zero");
  }
  eas.validate();
}

Beam Beam::fork() const {
  Beam b;
  b.context = context;
  b.chunk_start = chunk_start;
  b.sampler = sampler->clone();
  b.rng = rng;
  b.spawn_index = spawn_index;
  b.last_score = last_score;
  b.done = done;
  return b;
}

WarmupResult warmup(const NextTokenModel& model, std::span<const TokenId> prefix,
                    const HierParams& params, Rng& rng) {
  params.validate();
  WarmupResult out;
  out.tokens.assign(prefix.begin(), prefix.end());
  if (params.warmup_len == 0) return out;

  EasGeneration gen =
      eas_generate(model, prefix, params.warmup_len, params.eas, rng, {}, params.eos);
  out.tokens.insert(out.tokens.end(), gen.tokens.begin(), gen.tokens.end());
  out.state = std::move(gen.state);
  return out;
}

void extend(std::vector<Beam>& beams, const NextTokenModel& model, std::int32_t delta,
            std::optional<TokenId> eos) {
  if (delta < 0) throw ValidationError("extension delta must be >= 0");
  for (Beam& beam : beams) {
    if (beam.done) continue;
    for (std::int32_t t = 0; t < delta; ++t) {
      const TokenId tok = beam.sampler->step(model, beam.context, beam.rng);
      beam.context.push_back(tok);
      if (eos && tok == *eos) {
        beam.done = true;
        break;
      }
    }
  }
}

std::vector<Beam> spawn_candidates(const NextTokenModel& model,
                                   std::span<const TokenId> prefix,
                                   const StreamSampler& prototype, std::int32_t count,
                                   std::int32_t chunk_len, std::uint64_t root_seed,
                                   std::uint64_t stream_base,
                                   std::optional<TokenId> eos) {
  if (count < 1) throw ValidationError("candidate count must be >= 1");
  if (chunk_len < 1) throw ValidationError("chunk length must be >= 1");

  std::vector<Beam> beams;
  beams.reserve(count);
  for (std::int32_t i = 0; i < count; ++i) {
    Beam b{.context = std::vector<TokenId>(prefix.begin(), prefix.end()),
           .chunk_start = prefix.size(),
           .sampler = prototype.clone(),
           .rng = Rng::stream(root_seed, stream_base + static_cast<std::uint64_t>(i)),
           .spawn_index = i};
    beams.push_back(std::move(b));
  }
  extend(beams, model, chunk_len, eos);
  return beams;
}

std::vector<Beam> spawn_candidates(const NextTokenModel& model,
                                   std::span<const TokenId> prefix,
                                   const EasState& shared_state, std::int32_t count,
                                   std::int32_t chunk_len, const EasParams& params,
                                   std::uint64_t root_seed) {
  return spawn_candidates(model, prefix, EasSampler(params, shared_state), count,
                          chunk_len, root_seed, 0);
}

std::vector<Beam> prune(std::vector<Beam> beams, const SegmentDetector& detector,
                        std::int32_t keep_n, StageLog* log) {
  if (beams.empty()) throw ValidationError("cannot prune an empty beam set");
  if (keep_n < 1 || static_cast<std::size_t>(keep_n) > beams.size()) {
    throw ValidationError("keep_n must be in [1, |beams|]");
  }

  std::vector<double> scores(beams.size());
  for (std::size_t i = 0; i < beams.size(); ++i) {
    scores[i] = score_segment(detector, beams[i].chunk());
    beams[i].last_score = scores[i];
    if (log) {
      log->scores.push_back(scores[i]);
      log->ids.push_back(beams[i].spawn_index);
    }
  }

  std::vector<std::size_t> order(beams.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  std::vector<Beam> kept;
  kept.reserve(keep_n);
  for (std::int32_t i = 0; i < keep_n; ++i) {
    if (log) log->kept.push_back(beams[order[i]].spawn_index);
    kept.push_back(std::move(beams[order[i]]));
  }
  return kept;
}

namespace {

// Fractional ranks: 1 = highest score, tie groups get the mean of their
// covered positions.
std::vector<double> fractional_ranks(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  std::vector<double> ranks(scores.size(), 0.0);
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double mean_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = mean_rank;
    i = j;
  }
  return ranks;
}

struct GeneralAggregation {
  std::vector<std::vector<double>> ranks;  // one list per score list
  std::vector<double> aggregate;
  std::int32_t best = -1;
};

// Weighted rank aggregation over k parallel score lists. Ties in the
// aggregate are broken by the higher score in the first list, then by the
// lower candidate index.
GeneralAggregation aggregate_general(const std::vector<std::span<const double>>& lists,
                                     std::span<const double> weights) {
  if (lists.empty() || lists.size() != weights.size()) {
    throw ValidationError("score lists and weights must align");
  }
  const std::size_t n = lists.front().size();
  if (n == 0) throw ValidationError("score lists must be nonempty");
  for (const auto& l : lists) {
    if (l.size() != n) throw ValidationError("score lists must have equal length");
  }

  GeneralAggregation out;
  out.ranks.reserve(lists.size());
  for (const auto& l : lists) out.ranks.push_back(fractional_ranks(l));

  out.aggregate.assign(n, 0.0);
  for (std::size_t k = 0; k < lists.size(); ++k) {
    for (std::size_t i = 0; i < n; ++i) {
      out.aggregate[i] += weights[k] * out.ranks[k][i];
    }
  }

  std::int32_t best = 0;
  for (std::size_t i = 1; i < n; ++i) {
    if (out.aggregate[i] < out.aggregate[best] ||
        (out.aggregate[i] == out.aggregate[best] &&
         lists.front()[i] > lists.front()[best])) {
      best = static_cast<std::int32_t>(i);
    }
  }
  out.best = best;
  return out;
}

}  // namespace

RankAggregation aggregate_ranks(std::span<const double> s50, std::span<const double> s25,
                                std::span<const double> s10,
                                const std::array<double, 3>& weights) {
  if (weights[0] < 0.0 || weights[1] < 0.0 || weights[2] < 0.0 ||
      weights[0] + weights[1] + weights[2] <= 0.0) {
    throw ValidationError("rank weights must be non-negative and not all zero");
  }
  GeneralAggregation g = aggregate_general(
      {s50, s25, s10}, std::array<double, 3>{weights[0], weights[1], weights[2]});
  return RankAggregation{std::move(g.ranks[0]), std::move(g.ranks[1]),
                         std::move(g.ranks[2]), std::move(g.aggregate), g.best};
}

FinalScores final_stage_scores(std::span<const Beam> beams, const DetectorBank& bank) {
  bank.validate();
  FinalScores out;
  for (const Beam& beam : beams) {
    const auto chunk = beam.chunk();
    out.s50.push_back(score_segment(*bank.m50, chunk));
    out.s25.push_back(
        score_segment(*bank.m50_25, skip_sample(chunk, bank.m50_25->spec().stride)));
    out.s10.push_back(
        score_segment(*bank.m50_10, skip_sample(chunk, bank.m50_10->spec().stride)));
  }
  return out;
}

namespace {

// Drops eos-terminated beams whose chunk no longer matches `required_len`.
// Returns false (stage not scoreable) when nothing of the right length is
// left.
bool select_scoreable(std::vector<Beam>& beams, std::int32_t required_len) {
  std::vector<Beam> fit;
  fit.reserve(beams.size());
  for (Beam& b : beams) {
    if (b.chunk().size() == static_cast<std::size_t>(required_len)) {
      fit.push_back(std::move(b));
    }
  }
  if (fit.empty()) return false;
  beams = std::move(fit);
  return true;
}

}  // namespace

HierGeneration hier_generate_with(const NextTokenModel& model, const DetectorBank& bank,
                                  std::span<const TokenId> prefix,
                                  const HierParams& params,
                                  const StreamSampler& prototype,
                                  std::uint64_t root_seed) {
  params.validate();
  bank.validate();
  const auto& [l1_full, l2_full, l3_full] = params.stage_lens;
  if (bank.m10->spec().length != l1_full || bank.m25->spec().length != l2_full ||
      bank.m50->spec().length != l3_full) {
    throw ValidationError("bank contiguous specs must match the stage lengths");
  }
  auto strided_len = [&](const SegmentDetector& d) {
    return (l3_full + d.spec().stride - 1) / d.spec().stride;
  };
  if (strided_len(*bank.m50_25) != bank.m50_25->spec().length ||
      strided_len(*bank.m50_10) != bank.m50_10->spec().length) {
    throw ValidationError("strided bank specs must match skip-sampled stage-3 chunks");
  }

  HierGeneration out;
  out.sequence.vocab_size = model.vocab_size();

  // Warmup on stream 0.
  std::vector<TokenId> y(prefix.begin(), prefix.end());
  std::unique_ptr<StreamSampler> shared = prototype.clone();
  std::int32_t generated = 0;
  bool hit_eos = false;
  {
    Rng wrng = Rng::stream(root_seed, 0);
    for (std::int32_t t = 0; t < params.warmup_len; ++t) {
      const TokenId tok = shared->step(model, y, wrng);
      y.push_back(tok);
      ++generated;
      if (params.eos && tok == *params.eos) {
        hit_eos = true;
        break;
      }
    }
  }

  std::int32_t round = 0;
  while (!hit_eos && generated < params.max_len) {
    const std::int32_t remaining = params.max_len - generated;
    const std::int32_t l1 = std::min(l1_full, remaining);
    const std::int32_t l2 = std::min(l2_full, remaining);
    const std::int32_t l3 = std::min(l3_full, remaining);

    RoundLog log;
    log.round = round;
    log.stage_lens = {l1, l2, l3};

    std::vector<Beam> beams =
        spawn_candidates(model, y, *shared, params.beams[0], l1, root_seed,
                         1 + static_cast<std::uint64_t>(round) * params.beams[0],
                         params.eos);

    // Stage 1 prune by the short-span detector.
    if (l1 == bank.m10->spec().length && select_scoreable(beams, l1)) {
      const std::int32_t keep =
          std::min<std::int32_t>(params.beams[1], static_cast<std::int32_t>(beams.size()));
      beams = prune(std::move(beams), *bank.m10, keep, &log.stage1);
    } else {
      log.stage1.skipped = true;
    }

    extend(beams, model, l2 - l1, params.eos);

    // Stage 2 prune by the mid-span detector.
    if (l2 > l1 && l2 == bank.m25->spec().length && select_scoreable(beams, l2)) {
      const std::int32_t keep =
          std::min<std::int32_t>(params.beams[2], static_cast<std::int32_t>(beams.size()));
      beams = prune(std::move(beams), *bank.m25, keep, &log.stage2);
    } else {
      log.stage2.skipped = true;
    }

    extend(beams, model, l3 - l2, params.eos);

    // Final selection by multi-resolution rank aggregation. Short final
    // rounds fall back to whichever contiguous members fit a trailing crop.
    std::int32_t winner_pos = 0;
    std::vector<Beam> finalists;
    if (select_scoreable(beams, l3)) {
      finalists = std::move(beams);
      for (const Beam& b : finalists) log.final_ids.push_back(b.spawn_index);

      std::vector<std::vector<double>> lists;
      std::vector<double> weights;
      if (l3 == l3_full) {
        FinalScores fs = final_stage_scores(finalists, bank);
        log.s50 = fs.s50;
        log.s25 = fs.s25;
        log.s10 = fs.s10;
        lists = {fs.s50, fs.s25, fs.s10};
        weights = {params.rank_weights[0], params.rank_weights[1],
                   params.rank_weights[2]};
        log.final_members = {"m50", "m50_25", "m50_10"};
      } else {
        auto trailing_scores = [&](const SegmentDetector& d) {
          std::vector<double> scores;
          for (const Beam& b : finalists) {
            const auto chunk = b.chunk();
            scores.push_back(score_segment(
                d, chunk.subspan(chunk.size() - static_cast<std::size_t>(d.spec().length))));
          }
          return scores;
        };
        if (l3 >= bank.m25->spec().length) {
          log.s25 = trailing_scores(*bank.m25);
          lists.push_back(log.s25);
          weights.push_back(params.rank_weights[1]);
          log.final_members.push_back("m25");
        }
        if (l3 >= bank.m10->spec().length) {
          log.s10 = trailing_scores(*bank.m10);
          lists.push_back(log.s10);
          weights.push_back(params.rank_weights[2]);
          log.final_members.push_back("m10");
        }
      }

      if (!lists.empty()) {
        std::vector<std::span<const double>> views(lists.begin(), lists.end());
        GeneralAggregation agg = aggregate_general(views, weights);
        if (l3 == l3_full) {
          log.r50 = agg.ranks[0];
          log.r25 = agg.ranks[1];
          log.r10 = agg.ranks[2];
        }
        log.aggregate = agg.aggregate;
        winner_pos = agg.best;
      }
    } else {
      // No beam of the required length (eos everywhere): first beam wins.
      finalists = std::move(beams);
      for (const Beam& b : finalists) log.final_ids.push_back(b.spawn_index);
    }

    Beam& winner = finalists[winner_pos];
    log.winner_pos = winner_pos;
    log.winner_spawn_index = winner.spawn_index;
    log.chosen_len = static_cast<std::int32_t>(winner.chunk().size());

    generated += static_cast<std::int32_t>(winner.chunk().size());
    y = std::move(winner.context);
    shared = std::move(winner.sampler);
    hit_eos = winner.done;

    out.rounds.push_back(std::move(log));
    ++round;
  }

  // Exactly max_len generated tokens in fixed-length mode; eos mode may end
  // short.
  const std::size_t keep = std::min<std::size_t>(
      static_cast<std::size_t>(generated), static_cast<std::size_t>(params.max_len));
  out.sequence.tokens.assign(y.begin() + prefix.size(),
                             y.begin() + prefix.size() + keep);
  return out;
}

HierGeneration hier_generate(const NextTokenModel& model, const DetectorBank& bank,
                             std::span<const TokenId> prefix, const HierParams& params,
                             std::uint64_t root_seed) {
  return hier_generate_with(model, bank, prefix, params, EasSampler(params.eas),
                            root_seed);
}

std::string round_log_to_json(const RoundLog& log) {
  nlohmann::json j;
  j["round"] = log.round;
  j["stage_lens"] = log.stage_lens;
  auto stage = [](const StageLog& s) {
    return nlohmann::json{{"scores", s.scores},
                          {"ids", s.ids},
                          {"kept", s.kept},
                          {"skipped", s.skipped}};
  };
  j["stage1"] = stage(log.stage1);
  j["stage2"] = stage(log.stage2);
  j["final_ids"] = log.final_ids;
  j["s50"] = log.s50;
  j["s25"] = log.s25;
  j["s10"] = log.s10;
  j["r50"] = log.r50;
  j["r25"] = log.r25;
  j["r10"] = log.r10;
  j["aggregate"] = log.aggregate;
  j["final_members"] = log.final_members;
  j["winner_pos"] = log.winner_pos;
  j["winner_spawn_index"] = log.winner_spawn_index;
  j["chosen_len"] = log.chosen_len;
  return j.dump();
}

void write_round_logs(const std::string& path, std::span<const RoundLog> logs) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open round log for writing: " + path);
  for (const RoundLog& log : logs) {
    const std::string line = round_log_to_json(log);
    out.write(line.data(), static_cast<std::streamsize>(line.size()));
    out.put('\n');
  }
  if (!out) throw IoError("failed writing round log: " + path);
}

}  // namespace guidec
