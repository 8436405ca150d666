#pragma once

// JSON configuration shared by the CLI commands. Defaults are the reference
// hyperparameters; a config file overrides defaults and command-line flags
// override the file (flag > file > default). Unknown keys anywhere in the
// document are rejected.

#include <string>

#include "guidec/decoders.hpp"
#include "guidec/detector.hpp"
#include "guidec/harness.hpp"

namespace guidec {

struct CliConfig {
  EasParams eas;
  RasParams ras;
  OriginalParams original;
  HierParams hier;
  TrainConfig train;
  BenchmarkConfig benchmark;
};

// Applies a JSON document on top of `cfg`. Throws ValidationError naming any
// unknown key or ill-typed value.
void merge_cli_config(CliConfig& cfg, const std::string& json_text);

// Convenience: defaults, then the file at `path` when nonempty.
CliConfig load_cli_config(const std::string& path);

// Assembled sampling parameters; hier.eas mirrors the top-level EAS section.
DecodeParams decode_params(const CliConfig& cfg);

// Benchmark config with decode params and detector training injected.
BenchmarkConfig benchmark_config(const CliConfig& cfg);

}  // namespace guidec
