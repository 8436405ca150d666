#include "guidec/cliconfig.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "guidec/errors.hpp"

namespace guidec {

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& j, const std::set<std::string>& allowed,
                         const std::string& where) {
  if (!j.is_object()) {
    throw ValidationError("config section '" + where + "' must be an object");
  }
  for (const auto& [key, value] : j.items()) {
    if (!allowed.contains(key)) {
      throw ValidationError("unknown config key '" + where + "." + key + "'");
    }
  }
}

template <typename T>
void take(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ValidationError("config key '" + where + "." + key + "' has the wrong type");
  }
}

template <typename T, std::size_t N>
void take_array(const json& j, const char* key, std::array<T, N>& out,
                const std::string& where) {
  if (!j.contains(key)) return;
  const json& arr = j.at(key);
  if (!arr.is_array() || arr.size() != N) {
    throw ValidationError("config key '" + where + "." + key + "' must be an array of " +
                          std::to_string(N));
  }
  try {
    for (std::size_t i = 0; i < N; ++i) out[i] = arr[i].get<T>();
  } catch (const json::exception&) {
    throw ValidationError("config key '" + where + "." + key + "' has the wrong type");
  }
}

void merge_eas(const json& j, EasParams& p) {
  reject_unknown_keys(j, {"alpha", "beta", "gamma", "cluster_k", "window", "top_p",
                          "top_k", "temperature"},
                      "eas");
  take(j, "alpha", p.alpha, "eas");
  take(j, "beta", p.beta, "eas");
  take(j, "gamma", p.gamma, "eas");
  take(j, "cluster_k", p.cluster_k, "eas");
  take(j, "window", p.window, "eas");
  take(j, "top_p", p.top_p, "eas");
  take(j, "top_k", p.top_k, "eas");
  take(j, "temperature", p.temperature, "eas");
}

void merge_ras(const json& j, RasParams& p) {
  reject_unknown_keys(j, {"top_k", "top_p", "window", "penalty"}, "ras");
  take(j, "top_k", p.top_k, "ras");
  take(j, "top_p", p.top_p, "ras");
  take(j, "window", p.window, "ras");
  take(j, "penalty", p.penalty, "ras");
}

void merge_original(const json& j, OriginalParams& p) {
  reject_unknown_keys(j, {"top_k", "temperature"}, "original");
  take(j, "top_k", p.top_k, "original");
  take(j, "temperature", p.temperature, "original");
}

// max_len is intentionally absent: the generated length is a per-command
// argument (-n / --eval-length), not a tunable hyperparameter.
void merge_hier(const json& j, HierParams& p) {
  reject_unknown_keys(j, {"warmup_len", "stage_lens", "beams", "rank_weights", "eos"},
                      "hier");
  take(j, "warmup_len", p.warmup_len, "hier");
  take_array(j, "stage_lens", p.stage_lens, "hier");
  take_array(j, "beams", p.beams, "hier");
  take_array(j, "rank_weights", p.rank_weights, "hier");
  if (j.contains("eos")) {
    TokenId eos = 0;
    take(j, "eos", eos, "hier");
    p.eos = eos;
  }
}

void merge_train(const json& j, TrainConfig& p) {
  reject_unknown_keys(j, {"learning_rate", "weight_decay", "epochs", "batch_size",
                          "seed"},
                      "train");
  take(j, "learning_rate", p.learning_rate, "train");
  take(j, "weight_decay", p.weight_decay, "train");
  take(j, "epochs", p.epochs, "train");
  take(j, "batch_size", p.batch_size, "train");
  take(j, "seed", p.seed, "train");
}

void merge_benchmark(const json& j, BenchmarkConfig& p) {
  reject_unknown_keys(j, {"vocab_size", "hmm_states", "structure_seed",
                          "real_sequences", "sequence_length", "fakes_per_real",
                          "holdout_fraction", "ngram_order", "ngram_lambda",
                          "detector_feature_dim", "decoders", "eval_sequences",
                          "eval_length", "kl_epsilon", "eval_seeds", "output_dir"},
                      "benchmark");
  take(j, "vocab_size", p.vocab_size, "benchmark");
  take(j, "hmm_states", p.hmm_states, "benchmark");
  take(j, "structure_seed", p.structure_seed, "benchmark");
  take(j, "real_sequences", p.real_sequences, "benchmark");
  take(j, "sequence_length", p.sequence_length, "benchmark");
  take(j, "fakes_per_real", p.fakes_per_real, "benchmark");
  take(j, "holdout_fraction", p.holdout_fraction, "benchmark");
  take(j, "ngram_order", p.ngram_order, "benchmark");
  take(j, "ngram_lambda", p.ngram_lambda, "benchmark");
  take(j, "detector_feature_dim", p.detector_feature_dim, "benchmark");
  take(j, "decoders", p.decoders, "benchmark");
  take(j, "eval_sequences", p.eval_sequences, "benchmark");
  take(j, "eval_length", p.eval_length, "benchmark");
  take(j, "kl_epsilon", p.kl_epsilon, "benchmark");
  take(j, "eval_seeds", p.eval_seeds, "benchmark");
  take(j, "output_dir", p.output_dir, "benchmark");
}

}  // namespace

void merge_cli_config(CliConfig& cfg, const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("invalid config JSON: ") + e.what());
  }
  reject_unknown_keys(j, {"eas", "ras", "original", "hier", "train", "benchmark"},
                      "<root>");
  if (j.contains("eas")) merge_eas(j.at("eas"), cfg.eas);
  if (j.contains("ras")) merge_ras(j.at("ras"), cfg.ras);
  if (j.contains("original")) merge_original(j.at("original"), cfg.original);
  if (j.contains("hier")) merge_hier(j.at("hier"), cfg.hier);
  if (j.contains("train")) merge_train(j.at("train"), cfg.train);
  if (j.contains("benchmark")) merge_benchmark(j.at("benchmark"), cfg.benchmark);
}

CliConfig load_cli_config(const std::string& path) {
  CliConfig cfg;
  if (path.empty()) return cfg;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  merge_cli_config(cfg, buf.str());
  return cfg;
}

DecodeParams decode_params(const CliConfig& cfg) {
  DecodeParams p;
  p.original = cfg.original;
  p.ras = cfg.ras;
  p.eas = cfg.eas;
  p.hier = cfg.hier;
  p.hier.eas = cfg.eas;
  return p;
}

BenchmarkConfig benchmark_config(const CliConfig& cfg) {
  BenchmarkConfig b = cfg.benchmark;
  b.detector_train = cfg.train;
  b.decode = decode_params(cfg);
  return b;
}

}  // namespace guidec
