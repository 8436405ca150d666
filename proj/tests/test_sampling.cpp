#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "guidec/armodel.hpp"
#include "guidec/errors.hpp"
#include "guidec/sampling.hpp"

using namespace guidec;

namespace {

// Emits a fixed distribution regardless of prefix.
class FixedModel final : public NextTokenModel {
 public:
  explicit FixedModel(std::vector<double> probs) : probs_(std::move(probs)) {}
  std::int32_t vocab_size() const override {
    return static_cast<std::int32_t>(probs_.size());
  }
  std::vector<double> dist(std::span<const TokenId>) const override { return probs_; }

 private:
  std::vector<double> probs_;
};

// Strong bias toward repeating the previous token.
class LoopProneModel final : public NextTokenModel {
 public:
  LoopProneModel(std::int32_t vocab, double repeat_prob)
      : vocab_(vocab), repeat_(repeat_prob) {}
  std::int32_t vocab_size() const override { return vocab_; }
  std::vector<double> dist(std::span<const TokenId> prefix) const override {
    if (prefix.empty()) return std::vector<double>(vocab_, 1.0 / vocab_);
    std::vector<double> p(vocab_, (1.0 - repeat_) / (vocab_ - 1));
    p[prefix.back()] = repeat_;
    return p;
  }

 private:
  std::int32_t vocab_;
  double repeat_;
};

double total_variation(std::span<const double> a, std::span<const double> b) {
  double tv = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) tv += std::abs(a[i] - b[i]);
  return tv / 2.0;
}

std::int32_t max_run(std::span<const TokenId> seq) {
  std::int32_t best = 0;
  std::size_t i = 0;
  while (i < seq.size()) {
    std::size_t j = i;
    while (j < seq.size() && seq[j] == seq[i]) ++j;
    best = std::max<std::int32_t>(best, static_cast<std::int32_t>(j - i));
    i = j;
  }
  return best;
}

}  // namespace

TEST_CASE("apply_temperature") {
  const std::vector<double> p = {0.3, 0.2, 0.5};
  CHECK(apply_temperature(p, 1.0) == p);

  const std::vector<double> sym = {0.5, 0.5};
  const auto out_sym = apply_temperature(sym, 0.37);
  CHECK(out_sym[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(out_sym[1] == doctest::Approx(0.5).epsilon(1e-12));

  // [0.8, 0.2] at T = 0.5: square and renormalize by 0.68.
  const auto out = apply_temperature({0.8, 0.2}, 0.5);
  CHECK(out[0] == doctest::Approx(0.64 / 0.68).epsilon(1e-12));
  CHECK(out[1] == doctest::Approx(0.04 / 0.68).epsilon(1e-12));
}

TEST_CASE("filter_top_k") {
  const auto out = filter_top_k({0.1, 0.2, 0.3, 0.4}, 2);
  CHECK(out[0] == 0.0);
  CHECK(out[1] == 0.0);
  CHECK(out[2] == doctest::Approx(3.0 / 7.0).epsilon(1e-12));
  CHECK(out[3] == doctest::Approx(4.0 / 7.0).epsilon(1e-12));

  const std::vector<double> p = {0.1, 0.2, 0.3, 0.4};
  CHECK(filter_top_k(p, 4) == p);
  CHECK(filter_top_k(p, 50) == p);

  // Ties broken by lower token id.
  const auto tied = filter_top_k({0.25, 0.25, 0.25, 0.25}, 2);
  CHECK(tied == std::vector<double>{0.5, 0.5, 0.0, 0.0});
}

TEST_CASE("nucleus_filter and nucleus_sample") {
  // Cumulative 0.5, 0.8 >= v=0.8: nucleus {0, 1} renormalized.
  const auto nuc = nucleus_filter({0.5, 0.3, 0.15, 0.05}, 0.8);
  CHECK(nuc[0] == doctest::Approx(0.625).epsilon(1e-12));
  CHECK(nuc[1] == doctest::Approx(0.375).epsilon(1e-12));
  CHECK(nuc[2] == 0.0);
  CHECK(nuc[3] == 0.0);

  // One-hot is forced at any v.
  Rng rng(5);
  for (double v : {0.1, 0.5, 1.0}) {
    CHECK(nucleus_sample(std::vector<double>{0.0, 1.0, 0.0}, v, rng) == 1);
  }

  // v = 1 keeps the full support.
  const std::vector<double> p = {0.4, 0.1, 0.2, 0.3};
  CHECK(nucleus_filter(p, 1.0) == p);

  CHECK_THROWS_WITH_AS(nucleus_filter({0.0, 0.0}, 0.9),
                       doctest::Contains("degenerate"), ValidationError);
  CHECK_THROWS_AS(nucleus_sample(std::vector<double>{0.0, 0.0}, 0.9, rng),
                  ValidationError);
}

TEST_CASE("nucleus_sample empirical frequencies match the renormalized nucleus") {
  const std::vector<double> probs = {0.5, 0.3, 0.15, 0.05};
  const auto expected = nucleus_filter(probs, 0.8);
  Rng rng(99);
  std::vector<double> counts(4, 0.0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) counts[nucleus_sample(probs, 0.8, rng)] += 1.0;
  for (double& c : counts) c /= n;
  CHECK(total_variation(counts, expected) < 0.02);
  CHECK(counts[2] == 0.0);
  CHECK(counts[3] == 0.0);
}

TEST_CASE("eas_penalties formula") {
  const EasParams defaults;

  SUBCASE("empty memory has no penalties") {
    CHECK(eas_penalties(EasState{}, defaults).empty());
  }

  SUBCASE("single entry") {
    EasState state{{MemoryEntry{3, 1, 2}}};
    const auto pi = eas_penalties(state, defaults);
    REQUIRE(pi.size() == 1);
    CHECK(pi.at(3) == doctest::Approx(0.2 * 0.5 * 0.49).epsilon(1e-12));
    CHECK(pi.at(3) == doctest::Approx(0.049).epsilon(1e-12));
  }

  SUBCASE("two entries accumulate below the cap") {
    EasState state{{MemoryEntry{5, 1, 0}, MemoryEntry{5, 2, 1}}};
    const auto pi = eas_penalties(state, defaults);
    const double expected = 0.2 * (1.0 / 2.0) * 1.0 + 0.2 * (1.0 / 3.0) * 0.7;
    CHECK(pi.at(5) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(pi.at(5) < defaults.gamma);
  }

  SUBCASE("many entries clip at gamma") {
    EasState state;
    for (int i = 0; i < 30; ++i) state.entries.push_back(MemoryEntry{2, 1, 0});
    const auto pi = eas_penalties(state, defaults);
    CHECK(pi.at(2) == doctest::Approx(0.8).epsilon(1e-12));
  }

  SUBCASE("alpha = 0 yields an empty sparse map") {
    EasParams p;
    p.alpha = 0.0;
    EasState state{{MemoryEntry{1, 1, 0}, MemoryEntry{2, 2, 3}}};
    CHECK(eas_penalties(state, p).empty());
  }
}

TEST_CASE("eas_step forced sample seeds the memory") {
  const FixedModel model({0.0, 0.0, 1.0, 0.0});
  EasParams params;
  EasState state;
  Rng rng(1);
  const TokenId tok = eas_step(model, {}, state, params, rng);
  CHECK(tok == 2);
  REQUIRE(state.entries.size() == 1);  // only one positive-mass candidate
  CHECK(state.entries[0].token == 2);
  CHECK(state.entries[0].rank == 1);
  CHECK(state.entries[0].age == 0);
}

TEST_CASE("eas_step is deterministic") {
  const FixedModel model({0.4, 0.3, 0.2, 0.1});
  EasParams params;
  EasState s1, s2;
  Rng r1(77), r2(77);
  for (int t = 0; t < 20; ++t) {
    CHECK(eas_step(model, {}, s1, params, r1) == eas_step(model, {}, s2, params, r2));
  }
  REQUIRE(s1.entries.size() == s2.entries.size());
  for (std::size_t i = 0; i < s1.entries.size(); ++i) {
    CHECK(s1.entries[i].token == s2.entries[i].token);
    CHECK(s1.entries[i].rank == s2.entries[i].rank);
    CHECK(s1.entries[i].age == s2.entries[i].age);
  }
}

TEST_CASE("eas_step penalized distribution sampled at the right frequencies") {
  // One memory entry worth exactly 0.2 on token 0: alpha=0.4, rank 1, age 0.
  const FixedModel model({0.4, 0.3, 0.2, 0.1});
  EasParams params;
  params.alpha = 0.4;

  // Independent oracle: adjusted scores, nucleus cut at 0.8, renormalize.
  // s' = [0.2,0.3,0.2,0.1]/0.8 = [0.25,0.375,0.25,0.125]; sorted 1,0,2,3;
  // cum 0.375,0.625,0.875 >= 0.8 -> nucleus {1,0,2} masses /0.875.
  const std::vector<double> expected = {0.25 / 0.875, 0.375 / 0.875, 0.25 / 0.875, 0.0};

  Rng rng(31337);
  std::vector<double> counts(4, 0.0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    EasState state{{MemoryEntry{0, 1, 0}}};
    counts[eas_step(model, {}, state, params, rng)] += 1.0;
  }
  for (double& c : counts) c /= n;
  CHECK(total_variation(counts, expected) < 0.02);
}

TEST_CASE("eas memory discipline over many steps") {
  const LoopProneModel model(6, 0.75);
  EasParams params;
  EasState state;
  Rng rng(11);
  std::vector<TokenId> context;
  for (int t = 0; t < 3000; ++t) {
    context.push_back(eas_step(model, context, state, params, rng));
    CHECK(state.entries.size() <=
          static_cast<std::size_t>((params.cluster_k + 1) * (params.window + 1)));
    for (const MemoryEntry& e : state.entries) {
      CHECK(e.age <= params.window);
      CHECK(e.rank >= 1);
    }
  }
}

TEST_CASE("eas_generate base case and concatenation") {
  const LoopProneModel model(8, 0.6);
  EasParams params;

  SUBCASE("n=1 equals a single step") {
    Rng r1(5), r2(5);
    EasState state;
    const TokenId direct = eas_step(model, {}, state, params, r1);
    const EasGeneration gen = eas_generate(model, {}, 1, params, r2);
    REQUIRE(gen.tokens.size() == 1);
    CHECK(gen.tokens[0] == direct);
  }

  SUBCASE("generate(5) then generate(3) from the carried state equals generate(8)") {
    Rng split(303);
    const EasGeneration first = eas_generate(model, {}, 5, params, split);
    std::vector<TokenId> prefix = first.tokens;
    const EasGeneration second =
        eas_generate(model, prefix, 3, params, split, first.state);

    Rng whole(303);
    const EasGeneration full = eas_generate(model, {}, 8, params, whole);
    std::vector<TokenId> joined = first.tokens;
    joined.insert(joined.end(), second.tokens.begin(), second.tokens.end());
    CHECK(joined == full.tokens);
  }
}

TEST_CASE("eas suppresses loops relative to plain top-k") {
  // Moderate repeat bias: the accumulated rank-1 penalty (up to ~alpha/(2
  // (1-beta))) overtakes the repeat probability and caps run lengths, which
  // plain top-k cannot do.
  const LoopProneModel model(32, 0.22);
  EasParams params;
  const int runs = 200, length = 100;

  double eas_sum = 0.0, topk_sum = 0.0;
  for (int r = 0; r < runs; ++r) {
    Rng rng_eas = Rng::stream(900, r);
    Rng rng_topk = Rng::stream(901, r);
    eas_sum += max_run(eas_generate(model, {}, length, params, rng_eas).tokens);
    topk_sum += max_run(baseline_topk_generate(model, {}, length, 50, 1.0, rng_topk));
  }
  CHECK(eas_sum / runs < topk_sum / runs);
}

TEST_CASE("alpha = 0 reduces EAS to top-k plus nucleus sampling exactly") {
  const LoopProneModel model(10, 0.5);
  EasParams params;
  params.alpha = 0.0;
  params.top_k = 6;
  params.temperature = 0.9;

  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    Rng rng_eas(seed), rng_plain(seed);
    const auto eas = eas_generate(model, {}, 64, params, rng_eas).tokens;

    std::vector<TokenId> plain;
    std::vector<TokenId> context;
    for (int t = 0; t < 64; ++t) {
      const auto probs = filter_top_k(
          apply_temperature(model.dist(context), params.temperature), params.top_k);
      const TokenId tok = nucleus_sample(probs, params.top_p, rng_plain);
      plain.push_back(tok);
      context.push_back(tok);
    }
    CHECK(eas == plain);
  }
}

TEST_CASE("baseline_topk_generate") {
  SUBCASE("one-hot model is forced") {
    const FixedModel model({0.0, 1.0, 0.0});
    Rng rng(4);
    const auto out = baseline_topk_generate(model, {}, 10, 50, 1.0, rng);
    CHECK(std::all_of(out.begin(), out.end(), [](TokenId t) { return t == 1; }));
  }

  SUBCASE("fixed seed determinism") {
    const LoopProneModel model(6, 0.5);
    Rng a(8), b(8);
    CHECK(baseline_topk_generate(model, {}, 50, 3, 0.8, a) ==
          baseline_topk_generate(model, {}, 50, 3, 0.8, b));
  }

  SUBCASE("frozen distribution sampled at the right frequencies") {
    const std::vector<double> probs = {0.45, 0.25, 0.2, 0.1};
    const FixedModel model(probs);
    Rng rng(777);
    std::vector<double> counts(4, 0.0);
    const int n = 100000;
    // length-1 generations keep every draw from the frozen distribution
    for (int i = 0; i < n; ++i) {
      counts[baseline_topk_generate(model, {}, 1, 50, 1.0, rng)[0]] += 1.0;
    }
    for (double& c : counts) c /= n;
    CHECK(total_variation(counts, probs) < 0.02);
  }
}

TEST_CASE("windowed_penalty_adjust applies tau exactly") {
  const std::vector<TokenId> window = {0};
  const auto out = windowed_penalty_adjust({0.5, 0.3, 0.2}, window, 0.1);
  const double z = 0.05 + 0.3 + 0.2;
  CHECK(out[0] == doctest::Approx(0.05 / z).epsilon(1e-12));
  CHECK(out[1] == doctest::Approx(0.3 / z).epsilon(1e-12));
  CHECK(out[2] == doctest::Approx(0.2 / z).epsilon(1e-12));

  // tau = 1 is a bit-exact no-op.
  const std::vector<double> p = {0.5, 0.3, 0.2};
  CHECK(windowed_penalty_adjust(p, window, 1.0) == p);
}

TEST_CASE("windowed_penalty_generate") {
  const LoopProneModel model(8, 0.55);

  SUBCASE("tau = 1 matches plain top-k + nucleus sampling") {
    RasParams params;
    params.penalty = 1.0;
    params.top_k = 5;
    Rng rng_ras(21), rng_plain(21);
    const auto ras = windowed_penalty_generate(model, {}, 40, params, rng_ras);

    std::vector<TokenId> plain, context;
    for (int t = 0; t < 40; ++t) {
      const auto probs = filter_top_k(model.dist(context), params.top_k);
      const TokenId tok = nucleus_sample(probs, params.top_p, rng_plain);
      plain.push_back(tok);
      context.push_back(tok);
    }
    CHECK(ras == plain);
  }

  SUBCASE("window size zero is rejected") {
    RasParams params;
    params.window = 0;
    Rng rng(2);
    CHECK_THROWS_AS(windowed_penalty_generate(model, {}, 5, params, rng),
                    ValidationError);
  }

  SUBCASE("determinism") {
    RasParams params;
    Rng a(15), b(15);
    CHECK(windowed_penalty_generate(model, {}, 60, params, a) ==
          windowed_penalty_generate(model, {}, 60, params, b));
  }
}

TEST_CASE("eas penalty cap holds for arbitrary states") {
  Rng rng(606);
  EasParams params;
  for (int trial = 0; trial < 200; ++trial) {
    EasState state;
    const std::size_t n = rng.next_index(40);
    for (std::size_t i = 0; i < n; ++i) {
      state.entries.push_back(
          MemoryEntry{static_cast<TokenId>(rng.next_index(6)),
                      static_cast<std::int32_t>(1 + rng.next_index(4)),
                      static_cast<std::int32_t>(rng.next_index(16))});
    }
    for (const auto& [token, pi] : eas_penalties(state, params)) {
      CHECK(pi <= params.gamma + 1e-15);
      CHECK(pi > 0.0);
    }
  }
}
