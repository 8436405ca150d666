#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "guidec/errors.hpp"
#include "guidec/harness.hpp"
#include "guidec/hierdecode.hpp"
#include "support/oracle.hpp"

using namespace guidec;

namespace {

// A constant-score detector with a configurable spec.
class ConstDetector final : public SegmentDetector {
 public:
  ConstDetector(SegmentSpec spec, double value) : spec_(spec), value_(value) {}
  SegmentSpec spec() const override { return spec_; }
  double score(std::span<const TokenId>) const override { return value_; }

 private:
  SegmentSpec spec_;
  double value_;
};

// Scores by the first token of the segment, scaled into (0,1).
class FirstTokenDetector final : public SegmentDetector {
 public:
  explicit FirstTokenDetector(SegmentSpec spec, std::int32_t vocab)
      : spec_(spec), vocab_(vocab) {}
  SegmentSpec spec() const override { return spec_; }
  double score(std::span<const TokenId> seg) const override {
    return (static_cast<double>(seg.front()) + 0.5) / vocab_;
  }

 private:
  SegmentSpec spec_;
  std::int32_t vocab_;
};

NGramModel benchmark_model(std::uint64_t seed) {
  const HmmSource hmm = make_banded_hmm(5, 24, 11);
  std::vector<TokenSequence> corpus;
  for (int i = 0; i < 40; ++i) {
    Rng rng = Rng::stream(seed, i);
    corpus.push_back(hmm_sample(hmm, 150, rng));
  }
  return ngram_train(corpus, 3, 0.3);
}

std::vector<Beam> make_test_beams(const std::vector<TokenId>& firsts,
                                  std::int32_t chunk_len) {
  std::vector<Beam> beams;
  for (std::size_t i = 0; i < firsts.size(); ++i) {
    Beam b;
    b.context = std::vector<TokenId>(chunk_len, firsts[i]);
    b.chunk_start = 0;
    b.sampler = std::make_unique<EasSampler>(EasParams{});
    b.rng = Rng(0);
    b.spawn_index = static_cast<std::int32_t>(i);
    beams.push_back(std::move(b));
  }
  return beams;
}

}  // namespace

TEST_CASE("warmup") {
  const NGramModel model = benchmark_model(1);
  HierParams params;

  SUBCASE("L_w = 0 is a no-op") {
    params.warmup_len = 0;
    Rng rng(5);
    const std::vector<TokenId> prefix = {1, 2, 3};
    const WarmupResult out = warmup(model, prefix, params, rng);
    CHECK(out.tokens == prefix);
    CHECK(out.state.entries.empty());
  }

  SUBCASE("equals eas_generate with the same seed") {
    Rng r1(9), r2(9);
    const WarmupResult out = warmup(model, {}, params, r1);
    const EasGeneration gen = eas_generate(model, {}, params.warmup_len, params.eas, r2);
    CHECK(out.tokens == gen.tokens);
    REQUIRE(out.state.entries.size() == gen.state.entries.size());
  }

  SUBCASE("deterministic") {
    Rng r1(13), r2(13);
    CHECK(warmup(model, {}, params, r1).tokens == warmup(model, {}, params, r2).tokens);
  }
}

TEST_CASE("spawn_candidates") {
  const NGramModel model = benchmark_model(2);
  const EasParams eas;

  SUBCASE("B0 = 1 reduces to eas_generate on stream 0") {
    EasState shared;
    const auto beams = spawn_candidates(model, {}, shared, 1, 10, eas, 77);
    REQUIRE(beams.size() == 1);
    Rng rng = Rng::stream(77, 0);
    const EasGeneration gen = eas_generate(model, {}, 10, eas, rng);
    CHECK(std::vector<TokenId>(beams[0].chunk().begin(), beams[0].chunk().end()) ==
          gen.tokens);
  }

  SUBCASE("distinct streams give distinct chunks") {
    int distinct_trials = 0;
    for (int trial = 0; trial < 100; ++trial) {
      EasState shared;
      const auto beams = spawn_candidates(model, {}, shared, 8, 10, eas, 1000 + trial);
      std::set<std::vector<TokenId>> chunks;
      for (const Beam& b : beams) {
        chunks.insert(std::vector<TokenId>(b.chunk().begin(), b.chunk().end()));
      }
      distinct_trials += (chunks.size() >= 2);
    }
    CHECK(distinct_trials == 100);
  }

  SUBCASE("cloned states do not alias") {
    EasState shared;
    shared.entries.push_back(MemoryEntry{3, 1, 2});
    auto beams = spawn_candidates(model, {}, shared, 3, 5, eas, 4);
    const auto snapshot = [](const Beam& b) {
      return std::vector<TokenId>(b.chunk().begin(), b.chunk().end());
    };
    const auto before1 = snapshot(beams[1]);
    const auto before2 = snapshot(beams[2]);
    std::vector<Beam> just0;
    just0.push_back(beams[0].fork());
    extend(just0, model, 7);
    CHECK(snapshot(beams[1]) == before1);
    CHECK(snapshot(beams[2]) == before2);
    CHECK(shared.entries.size() == 1);  // shared state untouched
  }
}

TEST_CASE("prune") {
  SUBCASE("keeps the highest scores in score order") {
    auto beams = make_test_beams({2, 9, 5}, 5);
    const FirstTokenDetector det({5, 1}, 10);
    StageLog log;
    auto kept = prune(std::move(beams), det, 2, &log);
    REQUIRE(kept.size() == 2);
    CHECK(kept[0].spawn_index == 1);
    CHECK(kept[1].spawn_index == 2);
    CHECK(log.kept == std::vector<std::int32_t>{1, 2});
    CHECK(log.scores.size() == 3);
  }

  SUBCASE("keep_n = size is identity up to stable score order") {
    auto beams = make_test_beams({3, 7, 5}, 4);
    const FirstTokenDetector det({4, 1}, 10);
    auto kept = prune(std::move(beams), det, 3);
    REQUIRE(kept.size() == 3);
    CHECK(kept[0].spawn_index == 1);
    CHECK(kept[1].spawn_index == 2);
    CHECK(kept[2].spawn_index == 0);
  }

  SUBCASE("equal scores preserve original order") {
    auto beams = make_test_beams({4, 4, 4}, 4);
    const FirstTokenDetector det({4, 1}, 10);
    auto kept = prune(std::move(beams), det, 2);
    CHECK(kept[0].spawn_index == 0);
    CHECK(kept[1].spawn_index == 1);
  }

  SUBCASE("chunk length mismatch is an error") {
    auto beams = make_test_beams({1, 2}, 6);
    const FirstTokenDetector det({5, 1}, 10);
    CHECK_THROWS_AS(prune(std::move(beams), det, 1), ValidationError);
  }
}

TEST_CASE("extend") {
  const NGramModel model = benchmark_model(3);
  const EasParams eas;
  EasState shared;
  auto beams = spawn_candidates(model, {}, shared, 3, 10, eas, 55);

  SUBCASE("chunks reach the target length") {
    extend(beams, model, 15);
    for (const Beam& b : beams) CHECK(b.chunk().size() == 25);
  }

  SUBCASE("stepwise extension replays one-shot generation") {
    extend(beams, model, 15);
    Rng rng = Rng::stream(55, 0);
    const EasGeneration gen = eas_generate(model, {}, 25, eas, rng);
    CHECK(std::vector<TokenId>(beams[0].chunk().begin(), beams[0].chunk().end()) ==
          gen.tokens);
  }
}

TEST_CASE("aggregate_ranks") {
  SUBCASE("single candidate") {
    const std::vector<double> one = {0.7};
    const auto agg = aggregate_ranks(one, one, one, {0.4, 0.35, 0.25});
    CHECK(agg.r50 == std::vector<double>{1.0});
    CHECK(agg.aggregate[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(agg.best == 0);
  }

  SUBCASE("hand-ranked three-candidate case") {
    const std::vector<double> s50 = {0.9, 0.5, 0.7};
    const std::vector<double> s25 = {0.6, 0.8, 0.7};
    const std::vector<double> s10 = {0.4, 0.5, 0.9};
    const std::array<double, 3> w = {1.0 / 3, 1.0 / 3, 1.0 / 3};
    const auto agg = aggregate_ranks(s50, s25, s10, w);
    CHECK(agg.r50 == std::vector<double>{1, 3, 2});
    CHECK(agg.r25 == std::vector<double>{3, 1, 2});
    CHECK(agg.r10 == std::vector<double>{3, 2, 1});
    CHECK(agg.aggregate[0] == doctest::Approx(7.0 / 3).epsilon(1e-12));
    CHECK(agg.aggregate[1] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(agg.aggregate[2] == doctest::Approx(5.0 / 3).epsilon(1e-12));
    CHECK(agg.best == 2);
  }

  SUBCASE("invariant under strictly increasing transforms") {
    Rng rng(88);
    for (int trial = 0; trial < 100; ++trial) {
      const std::size_t n = 1 + rng.next_index(8);
      std::vector<double> s50(n), s25(n), s10(n);
      for (std::size_t i = 0; i < n; ++i) {
        s50[i] = static_cast<double>(rng.next_index(6)) / 6.0;
        s25[i] = static_cast<double>(rng.next_index(6)) / 6.0;
        s10[i] = static_cast<double>(rng.next_index(6)) / 6.0;
      }
      auto mapped = [](std::vector<double> v) {
        for (double& x : v) x = std::tanh(2.0 * x) * 5.0 + 1.0;
        return v;
      };
      const std::array<double, 3> w = {0.5, 0.3, 0.2};
      const auto a = aggregate_ranks(s50, s25, s10, w);
      const auto b = aggregate_ranks(mapped(s50), mapped(s25), mapped(s10), w);
      CHECK(a.r50 == b.r50);
      CHECK(a.r25 == b.r25);
      CHECK(a.r10 == b.r10);
      CHECK(a.best == b.best);
    }
  }

  SUBCASE("length mismatch is an error") {
    const std::vector<double> a = {0.1, 0.2};
    const std::vector<double> b = {0.1};
    CHECK_THROWS_AS(aggregate_ranks(a, b, a, {1, 1, 1}), ValidationError);
  }
}

TEST_CASE("final_stage_scores") {
  const HmmSource hmm = make_banded_hmm(4, 16, 3);
  const NGramModel model = benchmark_model(4);

  EasState shared;
  auto beams = spawn_candidates(model, {}, shared, 3, 50, EasParams{}, 12);

  SUBCASE("constant detectors tie and the first beam wins") {
    DetectorBank bank;
    bank.m10 = std::make_shared<ConstDetector>(SegmentSpec{10, 1}, 0.5);
    bank.m25 = std::make_shared<ConstDetector>(SegmentSpec{25, 1}, 0.5);
    bank.m50 = std::make_shared<ConstDetector>(SegmentSpec{50, 1}, 0.5);
    bank.m50_25 = std::make_shared<ConstDetector>(SegmentSpec{25, 2}, 0.5);
    bank.m50_10 = std::make_shared<ConstDetector>(SegmentSpec{10, 5}, 0.5);
    const FinalScores fs = final_stage_scores(beams, bank);
    const auto agg = aggregate_ranks(fs.s50, fs.s25, fs.s10, {1, 1, 1});
    CHECK(agg.best == 0);
  }

  SUBCASE("scores match manually strided manual calls") {
    const DetectorBank bank = testing::oracle_bank(hmm);
    const FinalScores fs = final_stage_scores(beams, bank);
    for (std::size_t i = 0; i < beams.size(); ++i) {
      const auto chunk = beams[i].chunk();
      CHECK(chunk.size() == 50);
      const auto s2 = skip_sample(chunk, 2);
      const auto s5 = skip_sample(chunk, 5);
      CHECK(s2.size() == 25);
      CHECK(s5.size() == 10);
      CHECK(fs.s50[i] == bank.m50->score(chunk));
      CHECK(fs.s25[i] == bank.m50_25->score(s2));
      CHECK(fs.s10[i] == bank.m50_10->score(s5));
    }
  }
}

TEST_CASE("hier_generate") {
  const HmmSource hmm = make_banded_hmm(5, 24, 11);
  const NGramModel model = benchmark_model(5);
  const DetectorBank bank = testing::oracle_bank(hmm);

  SUBCASE("L_max = L_w is warmup only") {
    HierParams params;
    params.max_len = params.warmup_len;
    const HierGeneration out = hier_generate(model, bank, {}, params, 17);
    CHECK(out.sequence.tokens.size() == static_cast<std::size_t>(params.warmup_len));
    CHECK(out.rounds.empty());
  }

  SUBCASE("output length is exactly max_len, including partial rounds") {
    for (std::int32_t max_len : {20, 37, 70, 100, 123}) {
      HierParams params;
      params.max_len = max_len;
      const HierGeneration out = hier_generate(model, bank, {}, params, 23);
      CHECK(out.sequence.tokens.size() == static_cast<std::size_t>(max_len));
    }
  }

  SUBCASE("beam trajectory is B0 -> B1 -> B2 on full rounds") {
    HierParams params;
    params.max_len = 120;  // warmup 20 + two full 50-rounds
    const HierGeneration out = hier_generate(model, bank, {}, params, 29);
    REQUIRE(out.rounds.size() == 2);
    for (const RoundLog& log : out.rounds) {
      CHECK(log.stage1.scores.size() == 8);
      CHECK(log.stage1.kept.size() == 5);
      CHECK(log.stage2.scores.size() == 5);
      CHECK(log.stage2.kept.size() == 3);
      CHECK(log.final_ids.size() == 3);
      CHECK_FALSE(log.stage1.skipped);
      CHECK_FALSE(log.stage2.skipped);
    }
  }

  SUBCASE("winner minimizes the aggregate under documented tie-breaks") {
    HierParams params;
    params.max_len = 120;
    const HierGeneration out = hier_generate(model, bank, {}, params, 31);
    for (const RoundLog& log : out.rounds) {
      REQUIRE(!log.aggregate.empty());
      std::int32_t best = 0;
      for (std::size_t i = 1; i < log.aggregate.size(); ++i) {
        if (log.aggregate[i] < log.aggregate[best] ||
            (log.aggregate[i] == log.aggregate[best] && log.s50[i] > log.s50[best])) {
          best = static_cast<std::int32_t>(i);
        }
      }
      CHECK(log.winner_pos == best);
      CHECK(log.winner_spawn_index == log.final_ids[best]);
    }
  }

  SUBCASE("winner survived each cut: stage scores at or above the kept cutoff") {
    HierParams params;
    params.max_len = 170;  // three full rounds
    const HierGeneration out = hier_generate(model, bank, {}, params, 37);
    REQUIRE(out.rounds.size() == 3);
    for (const RoundLog& log : out.rounds) {
      for (const StageLog* stage : {&log.stage1, &log.stage2}) {
        REQUIRE_FALSE(stage->skipped);
        std::vector<double> sorted = stage->scores;
        std::sort(sorted.begin(), sorted.end(), std::greater<>());
        const double cutoff = sorted[stage->kept.size() - 1];
        const auto it = std::find(stage->ids.begin(), stage->ids.end(),
                                  log.winner_spawn_index);
        REQUIRE(it != stage->ids.end());
        CHECK(stage->scores[it - stage->ids.begin()] >= cutoff);
      }
    }
  }

  SUBCASE("B0=B1=B2=1 replays warmup plus chunked eas_generate") {
    HierParams params;
    params.beams = {1, 1, 1};
    params.max_len = 100;
    const std::uint64_t root = 41;
    const HierGeneration out = hier_generate(model, bank, {}, params, root);

    // Stream 0: warmup; stream 1 + r: round r's single beam.
    std::vector<TokenId> replay;
    EasState state;
    {
      Rng rng = Rng::stream(root, 0);
      EasGeneration gen = eas_generate(model, {}, params.warmup_len, params.eas, rng);
      replay = gen.tokens;
      state = std::move(gen.state);
    }
    int round = 0;
    while (replay.size() < 100) {
      Rng rng = Rng::stream(root, 1 + static_cast<std::uint64_t>(round));
      const std::int32_t want =
          std::min<std::int32_t>(50, 100 - static_cast<std::int32_t>(replay.size()));
      EasGeneration gen =
          eas_generate(model, replay, want, params.eas, rng, std::move(state));
      replay.insert(replay.end(), gen.tokens.begin(), gen.tokens.end());
      state = std::move(gen.state);
      ++round;
    }
    CHECK(out.sequence.tokens == replay);
  }

  SUBCASE("selection improves the mean oracle score over spawned candidates") {
    HierParams params;
    params.max_len = 220;
    double winner_sum = 0.0, candidate_sum = 0.0;
    std::size_t rounds = 0, candidates = 0;
    for (std::uint64_t root = 100; root < 110; ++root) {
      const HierGeneration out = hier_generate(model, bank, {}, params, root);
      for (const RoundLog& log : out.rounds) {
        if (log.stage1.skipped) continue;
        for (double s : log.stage1.scores) {
          candidate_sum += s;
          ++candidates;
        }
        const auto it = std::find(log.stage1.ids.begin(), log.stage1.ids.end(),
                                  log.winner_spawn_index);
        REQUIRE(it != log.stage1.ids.end());
        winner_sum += log.stage1.scores[it - log.stage1.ids.begin()];
        ++rounds;
      }
    }
    REQUIRE(rounds >= 10);
    CHECK(winner_sum / rounds > candidate_sum / candidates);
  }

  SUBCASE("fixed root seed gives bit-identical output and logs") {
    HierParams params;
    params.max_len = 90;
    const HierGeneration a = hier_generate(model, bank, {}, params, 71);
    const HierGeneration b = hier_generate(model, bank, {}, params, 71);
    CHECK(a.sequence.tokens == b.sequence.tokens);
    REQUIRE(a.rounds.size() == b.rounds.size());
    for (std::size_t r = 0; r < a.rounds.size(); ++r) {
      CHECK(round_log_to_json(a.rounds[r]) == round_log_to_json(b.rounds[r]));
    }
  }

  SUBCASE("partial final round uses trailing-crop fallback members") {
    HierParams params;
    params.max_len = 50;  // warmup 20 + one 30-token partial round
    const HierGeneration out = hier_generate(model, bank, {}, params, 53);
    REQUIRE(out.rounds.size() == 1);
    const RoundLog& log = out.rounds[0];
    CHECK(log.stage_lens == std::array<std::int32_t, 3>{10, 25, 30});
    CHECK(log.final_members == std::vector<std::string>{"m25", "m10"});
    CHECK(out.sequence.tokens.size() == 50);
  }

  SUBCASE("prefix is excluded from the output") {
    HierParams params;
    params.max_len = 60;
    const std::vector<TokenId> prefix = {1, 2, 3, 4};
    const HierGeneration out = hier_generate(model, bank, prefix, params, 59);
    CHECK(out.sequence.tokens.size() == 60);
  }
}

TEST_CASE("hier_generate with the RAS inner sampler") {
  const HmmSource hmm = make_banded_hmm(5, 24, 11);
  const NGramModel model = benchmark_model(6);
  const DetectorBank bank = testing::oracle_bank(hmm);

  HierParams params;
  params.max_len = 100;
  RasParams ras;
  const HierGeneration a =
      hier_generate_with(model, bank, {}, params, RasSampler(ras), 61);
  const HierGeneration b =
      hier_generate_with(model, bank, {}, params, RasSampler(ras), 61);
  CHECK(a.sequence.tokens.size() == 100);
  CHECK(a.sequence.tokens == b.sequence.tokens);
  CHECK(!a.rounds.empty());
}

TEST_CASE("hier_generate eos mode") {
  const HmmSource hmm = make_banded_hmm(5, 24, 11);
  const NGramModel model = benchmark_model(7);
  const DetectorBank bank = testing::oracle_bank(hmm);

  HierParams params;
  params.max_len = 100;
  params.eos = 0;  // token 0 terminates
  const HierGeneration out = hier_generate(model, bank, {}, params, 67);
  // Output never exceeds max_len; eos can only be the final token.
  CHECK(out.sequence.tokens.size() <= 100);
  const auto& toks = out.sequence.tokens;
  for (std::size_t i = 0; i + 1 < toks.size(); ++i) CHECK(toks[i] != 0);
}

TEST_CASE("hier params validation") {
  HierParams params;
  params.beams = {3, 5, 8};
  CHECK_THROWS_AS(params.validate(), ValidationError);

  HierParams bad_stages;
  bad_stages.stage_lens = {25, 10, 50};
  CHECK_THROWS_AS(bad_stages.validate(), ValidationError);

  HierParams short_max;
  short_max.max_len = 5;
  short_max.warmup_len = 20;
  CHECK_THROWS_AS(short_max.validate(), ValidationError);

  HierParams zero_weights;
  zero_weights.rank_weights = {0.0, 0.0, 0.0};
  CHECK_THROWS_AS(zero_weights.validate(), ValidationError);
}
