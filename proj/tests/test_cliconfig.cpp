#include "doctest.h"

#include "guidec/cliconfig.hpp"
#include "guidec/errors.hpp"

using namespace guidec;

TEST_CASE("cli config defaults are the reference hyperparameters") {
  const CliConfig cfg;
  CHECK(cfg.eas.alpha == 0.2);
  CHECK(cfg.eas.beta == 0.7);
  CHECK(cfg.eas.gamma == 0.8);
  CHECK(cfg.eas.cluster_k == 3);
  CHECK(cfg.eas.window == 15);
  CHECK(cfg.eas.top_p == 0.8);
  CHECK(cfg.eas.top_k == 50);
  CHECK(cfg.eas.temperature == 1.0);

  CHECK(cfg.ras.top_k == 50);
  CHECK(cfg.ras.top_p == 0.8);
  CHECK(cfg.ras.window == 25);
  CHECK(cfg.ras.penalty == 0.1);

  CHECK(cfg.original.top_k == 50);
  CHECK(cfg.original.temperature == 1.0);

  CHECK(cfg.hier.warmup_len == 20);
  CHECK(cfg.hier.stage_lens == std::array<std::int32_t, 3>{10, 25, 50});
  CHECK(cfg.hier.beams == std::array<std::int32_t, 3>{8, 5, 3});
  CHECK(cfg.hier.rank_weights == std::array<double, 3>{1.0, 1.0, 1.0});
  CHECK_FALSE(cfg.hier.eos.has_value());

  CHECK(cfg.train.learning_rate == 1e-4);
  CHECK(cfg.train.weight_decay == 1e-4);

  CHECK(cfg.benchmark.fakes_per_real == 3);
}

TEST_CASE("config file overrides defaults") {
  CliConfig cfg;
  merge_cli_config(cfg, R"({
    "eas": {"alpha": 0.5, "window": 11},
    "hier": {"beams": [6, 4, 2], "eos": 3},
    "train": {"epochs": 7},
    "benchmark": {"vocab_size": 24, "eval_seeds": [9, 10]}
  })");
  CHECK(cfg.eas.alpha == 0.5);
  CHECK(cfg.eas.window == 11);
  CHECK(cfg.eas.beta == 0.7);  // untouched fields keep defaults
  CHECK(cfg.hier.beams == std::array<std::int32_t, 3>{6, 4, 2});
  CHECK(cfg.hier.eos == TokenId{3});
  CHECK(cfg.train.epochs == 7);
  CHECK(cfg.benchmark.vocab_size == 24);
  CHECK(cfg.benchmark.eval_seeds == std::vector<std::uint64_t>{9, 10});
}

TEST_CASE("unknown keys are rejected with their path") {
  CliConfig cfg;
  CHECK_THROWS_WITH_AS(merge_cli_config(cfg, R"({"easy": {}})"),
                       doctest::Contains("easy"), ValidationError);
  CHECK_THROWS_WITH_AS(merge_cli_config(cfg, R"({"eas": {"alpa": 0.3}})"),
                       doctest::Contains("eas.alpa"), ValidationError);
  CHECK_THROWS_WITH_AS(merge_cli_config(cfg, R"({"benchmark": {"vocab": 8}})"),
                       doctest::Contains("benchmark.vocab"), ValidationError);
  // Generated length is a per-command argument, not a config key.
  CHECK_THROWS_AS(merge_cli_config(cfg, R"({"hier": {"max_len": 10}})"),
                  ValidationError);
}

TEST_CASE("benchmark output_dir flows from the config file") {
  CliConfig cfg;
  merge_cli_config(cfg, R"({"benchmark": {"output_dir": "runs/b1"}})");
  CHECK(cfg.benchmark.output_dir == "runs/b1");
}

TEST_CASE("ill-typed values are rejected") {
  CliConfig cfg;
  CHECK_THROWS_AS(merge_cli_config(cfg, R"({"eas": {"alpha": "big"}})"),
                  ValidationError);
  CHECK_THROWS_AS(merge_cli_config(cfg, R"({"hier": {"beams": [1, 2]}})"),
                  ValidationError);
  CHECK_THROWS_AS(merge_cli_config(cfg, "not json"), ValidationError);
}

TEST_CASE("decode_params mirrors the eas section into hier") {
  CliConfig cfg;
  merge_cli_config(cfg, R"({"eas": {"alpha": 0.9}})");
  const DecodeParams p = decode_params(cfg);
  CHECK(p.eas.alpha == 0.9);
  CHECK(p.hier.eas.alpha == 0.9);
}

TEST_CASE("benchmark_config wires decode and train sections through") {
  CliConfig cfg;
  merge_cli_config(cfg, R"({
    "train": {"epochs": 9},
    "original": {"top_k": 17},
    "benchmark": {"kl_epsilon": 0.25}
  })");
  const BenchmarkConfig b = benchmark_config(cfg);
  CHECK(b.detector_train.epochs == 9);
  CHECK(b.decode.original.top_k == 17);
  CHECK(b.kl_epsilon == 0.25);
}
