// guidec: discriminator-guided decoding toolkit for discrete token sequences.
//
// Subcommands: gen-data, train-ar, train-detectors, eval-detectors, decode,
// benchmark. Every hyperparameter flag has a config-file equivalent
// (--config); precedence is flag > file > default.
//
// Exit codes: 0 success, 1 validation/usage error, 2 assertion failure
// (benchmark ordering checks), 3 I/O error.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "guidec/cliconfig.hpp"
#include "guidec/decoders.hpp"
#include "guidec/errors.hpp"
#include "guidec/harness.hpp"

namespace {

using namespace guidec;

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitAssertion = 2;
constexpr int kExitIo = 3;

// The config file must be merged before flag callbacks run, so --config is
// located with a plain scan instead of a CLI11 option.
std::string find_config_path(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--config" && i + 1 < argc) return argv[i + 1];
    if (arg.rfind("--config=", 0) == 0) return arg.substr(9);
  }
  return {};
}

template <typename T>
void bind(CLI::App* cmd, const std::string& flag, T& target, const std::string& desc) {
  cmd->add_option_function<T>(
         flag, [&target](const T& v) { target = v; }, desc)
      ->default_str([&] {
        if constexpr (std::is_floating_point_v<T>) {
          std::ostringstream os;
          os << target;
          return os.str();
        } else {
          return std::to_string(target);
        }
      }());
}

void bind_eas(CLI::App* cmd, EasParams& p) {
  bind(cmd, "--alpha", p.alpha, "EAS penalty scale alpha");
  bind(cmd, "--beta", p.beta, "EAS temporal decay beta");
  bind(cmd, "--gamma", p.gamma, "EAS penalty cap gamma");
  bind(cmd, "--cluster-k", p.cluster_k, "EAS cluster size k_e");
  bind(cmd, "--window", p.window, "EAS memory window W");
  bind(cmd, "--top-p", p.top_p, "nucleus threshold v");
  bind(cmd, "--top-k", p.top_k, "top-k filter width");
  bind(cmd, "--temperature", p.temperature, "sampling temperature");
}

void bind_ras(CLI::App* cmd, RasParams& p) {
  bind(cmd, "--ras-top-k", p.top_k, "RAS-style top-k");
  bind(cmd, "--ras-top-p", p.top_p, "RAS-style nucleus threshold");
  bind(cmd, "--ras-window", p.window, "RAS-style lookback window");
  bind(cmd, "--ras-penalty", p.penalty, "RAS-style repetition penalty tau_r");
}

void bind_original(CLI::App* cmd, OriginalParams& p) {
  bind(cmd, "--orig-top-k", p.top_k, "original-scheme top-k");
  bind(cmd, "--orig-temperature", p.temperature, "original-scheme temperature");
}

void bind_hier(CLI::App* cmd, HierParams& p) {
  bind(cmd, "--warmup-len", p.warmup_len, "hierarchical warmup length L_w");
  cmd->add_option_function<std::vector<std::int32_t>>(
         "--stage-lens",
         [&p](const std::vector<std::int32_t>& v) {
           if (v.size() != 3) throw CLI::ValidationError("--stage-lens needs 3 values");
           p.stage_lens = {v[0], v[1], v[2]};
         },
         "stage lengths L1 L2 L3")
      ->expected(3)
      ->default_str("10 25 50");
  cmd->add_option_function<std::vector<std::int32_t>>(
         "--beams",
         [&p](const std::vector<std::int32_t>& v) {
           if (v.size() != 3) throw CLI::ValidationError("--beams needs 3 values");
           p.beams = {v[0], v[1], v[2]};
         },
         "beam widths B0 B1 B2")
      ->expected(3)
      ->default_str("8 5 3");
  cmd->add_option_function<std::vector<double>>(
         "--rank-weights",
         [&p](const std::vector<double>& v) {
           if (v.size() != 3) throw CLI::ValidationError("--rank-weights needs 3 values");
           p.rank_weights = {v[0], v[1], v[2]};
         },
         "rank weights w50 w25 w10")
      ->expected(3)
      ->default_str("1 1 1");
  cmd->add_option_function<TokenId>(
      "--eos-id", [&p](TokenId v) { p.eos = v; },
      "reserved end-of-sequence token id (off by default)");
}

void bind_train(CLI::App* cmd, TrainConfig& p) {
  bind(cmd, "--lr", p.learning_rate, "detector learning rate");
  bind(cmd, "--weight-decay", p.weight_decay, "detector L2 weight decay");
  bind(cmd, "--epochs", p.epochs, "detector training epochs");
  bind(cmd, "--batch-size", p.batch_size, "detector mini-batch size");
  bind(cmd, "--train-seed", p.seed, "detector training seed");
}

void bind_benchmark(CLI::App* cmd, BenchmarkConfig& p) {
  bind(cmd, "--vocab-size", p.vocab_size, "token vocabulary size");
  bind(cmd, "--hmm-states", p.hmm_states, "HMM state count");
  bind(cmd, "--structure-seed", p.structure_seed, "HMM structure seed");
  bind(cmd, "--real-sequences", p.real_sequences, "real corpus size (sequences)");
  bind(cmd, "--sequence-length", p.sequence_length, "real corpus sequence length");
  bind(cmd, "--fakes-per-real", p.fakes_per_real, "synthetic counterparts per real");
  bind(cmd, "--holdout-fraction", p.holdout_fraction, "held-out sequence fraction");
  bind(cmd, "--ngram-order", p.ngram_order, "AR model n-gram order");
  bind(cmd, "--ngram-lambda", p.ngram_lambda, "AR model additive smoothing");
  bind(cmd, "--feature-dim", p.detector_feature_dim, "detector feature hash buckets");
  bind(cmd, "--eval-sequences", p.eval_sequences, "decoder eval corpus size");
  bind(cmd, "--eval-length", p.eval_length, "decoder eval sequence length");
  bind(cmd, "--kl-epsilon", p.kl_epsilon, "bigram KL smoothing epsilon");
  cmd->add_option_function<std::vector<std::string>>(
      "--decoders",
      [&p](const std::vector<std::string>& v) { p.decoders = v; },
      "decoder schemes to compare");
  cmd->add_option_function<std::vector<std::uint64_t>>(
      "--eval-seeds",
      [&p](const std::vector<std::uint64_t>& v) { p.eval_seeds = v; },
      "benchmark eval seeds");
}

std::vector<TokenId> parse_prefix(const std::string& text) {
  std::vector<TokenId> prefix;
  std::istringstream in(text);
  long long v = 0;
  while (in >> v) prefix.push_back(static_cast<TokenId>(v));
  if (!in.eof()) throw ValidationError("invalid --prefix: expected decimal token ids");
  return prefix;
}

int run(int argc, char** argv) {
  CliConfig cfg = load_cli_config(find_config_path(argc, argv));

  CLI::App app{"discriminator-guided decoding for discrete token sequences"};
  app.require_subcommand(1);
  std::string config_path_dummy;
  auto add_config_flag = [&config_path_dummy](CLI::App* cmd) {
    cmd->add_option("--config", config_path_dummy,
                    "JSON config file (flag > file > default)");
  };
  add_config_flag(&app);

  // gen-data
  auto* gen = app.add_subcommand("gen-data",
                                 "synthesize real (HMM) and fake (AR) corpora");
  add_config_flag(gen);
  std::string gen_out_dir = "data";
  std::uint64_t gen_seed = 1;
  gen->add_option("--out-dir", gen_out_dir, "output directory")->capture_default_str();
  gen->add_option("--seed", gen_seed, "sampling seed")->capture_default_str();
  bind_benchmark(gen, cfg.benchmark);
  bind_original(gen, cfg.original);

  // train-ar
  auto* tar = app.add_subcommand("train-ar", "train and serialize the n-gram model");
  add_config_flag(tar);
  std::string tar_corpus, tar_out = "ar.json";
  tar->add_option("--corpus", tar_corpus, "training corpus file")->required();
  tar->add_option("--out", tar_out, "output model file")->capture_default_str();
  bind(tar, "--ngram-order", cfg.benchmark.ngram_order, "n-gram order");
  bind(tar, "--ngram-lambda", cfg.benchmark.ngram_lambda, "additive smoothing lambda");

  // train-detectors
  auto* tdet = app.add_subcommand("train-detectors",
                                  "train and serialize the five-detector bank");
  add_config_flag(tdet);
  std::string tdet_real, tdet_fake, tdet_out = "bank";
  std::int32_t tdet_hop = 0;
  tdet->add_option("--real", tdet_real, "real corpus file")->required();
  tdet->add_option("--fake", tdet_fake, "fake corpus file")->required();
  tdet->add_option("--out-dir", tdet_out, "bank output directory")
      ->capture_default_str();
  tdet->add_option("--hop", tdet_hop,
                   "crop hop (default 0 = non-overlapping, hop = window)");
  bind_train(tdet, cfg.train);
  bind(tdet, "--feature-dim", cfg.benchmark.detector_feature_dim,
       "feature hash buckets");

  // eval-detectors
  auto* edet = app.add_subcommand(
      "eval-detectors", "print per-resolution AUROC/Acc/Macro-F1 for a bank");
  add_config_flag(edet);
  std::string edet_bank, edet_real, edet_fake;
  edet->add_option("--bank", edet_bank, "bank directory")->required();
  edet->add_option("--real", edet_real, "real corpus file")->required();
  edet->add_option("--fake", edet_fake, "fake corpus file")->required();

  // decode
  auto* dec = app.add_subcommand("decode", "generate sequences with a scheme");
  add_config_flag(dec);
  std::string dec_model, dec_bank, dec_scheme = "eas", dec_out = "decoded.txt";
  std::string dec_prefix;
  std::int32_t dec_count = 1, dec_len = 100;
  std::uint64_t dec_seed = 1;
  dec->add_option("--model", dec_model, "serialized n-gram model")->required();
  dec->add_option("--bank", dec_bank,
                  "detector bank directory (required for hier-* schemes)");
  dec->add_option("--scheme", dec_scheme,
                  "original|ras|eas|hier-ras|hier-eas (ras is the RAS-style "
                  "windowed-penalty stand-in)")
      ->capture_default_str();
  dec->add_option("--out", dec_out, "output corpus file")->capture_default_str();
  dec->add_option("--prefix", dec_prefix, "space-separated prompt token ids");
  dec->add_option("--count", dec_count, "number of sequences")->capture_default_str();
  dec->add_option("-n,--length", dec_len, "generated tokens per sequence")
      ->capture_default_str();
  dec->add_option("--seed", dec_seed, "root seed")->capture_default_str();
  std::string dec_roundlog;
  dec->add_option("--round-log", dec_roundlog,
                  "write hier round logs (JSON lines) to this file");
  bind_eas(dec, cfg.eas);
  bind_ras(dec, cfg.ras);
  bind_original(dec, cfg.original);
  bind_hier(dec, cfg.hier);

  // benchmark
  auto* bench = app.add_subcommand("benchmark", "run the synthetic benchmark");
  add_config_flag(bench);
  bench->add_option_function<std::string>(
      "--out-dir",
      [&cfg](const std::string& v) { cfg.benchmark.output_dir = v; },
      "report directory");
  bind_benchmark(bench, cfg.benchmark);
  bind_eas(bench, cfg.eas);
  bind_ras(bench, cfg.ras);
  bind_original(bench, cfg.original);
  bind_hier(bench, cfg.hier);
  bind_train(bench, cfg.train);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitValidation;
  }

  if (gen->parsed()) {
    BenchmarkConfig b = benchmark_config(cfg);
    b.validate();
    const HmmSource hmm = make_banded_hmm(b.hmm_states, b.vocab_size, b.structure_seed);
    std::vector<TokenSequence> real;
    for (std::int32_t i = 0; i < b.real_sequences; ++i) {
      Rng rng = Rng::stream(stream_seed(gen_seed, 1), static_cast<std::uint64_t>(i));
      real.push_back(hmm_sample(hmm, b.sequence_length, rng));
    }
    const NGramModel ar = ngram_train(real, b.ngram_order, b.ngram_lambda);
    std::vector<TokenSequence> fake;
    for (std::int32_t i = 0; i < b.real_sequences * b.fakes_per_real; ++i) {
      Rng rng = Rng::stream(stream_seed(gen_seed, 2), static_cast<std::uint64_t>(i));
      TokenSequence seq;
      seq.vocab_size = ar.vocab_size();
      seq.tokens = baseline_topk_generate(ar, {}, b.sequence_length,
                                          b.decode.original.top_k,
                                          b.decode.original.temperature, rng);
      fake.push_back(std::move(seq));
    }
    std::filesystem::create_directories(gen_out_dir);
    write_corpus((std::filesystem::path(gen_out_dir) / "real.txt").string(), real);
    write_corpus((std::filesystem::path(gen_out_dir) / "fake.txt").string(), fake);
    std::cout << "wrote " << real.size() << " real and " << fake.size()
              << " fake sequences to " << gen_out_dir << "\n";
    return kExitOk;
  }

  if (tar->parsed()) {
    const std::vector<TokenSequence> corpus = read_corpus(tar_corpus);
    const NGramModel model =
        ngram_train(corpus, cfg.benchmark.ngram_order, cfg.benchmark.ngram_lambda);
    model.save(tar_out);
    std::cout << "trained order-" << model.order() << " model on " << corpus.size()
              << " sequences -> " << tar_out << "\n";
    return kExitOk;
  }

  if (tdet->parsed()) {
    const std::vector<TokenSequence> real = read_corpus(tdet_real);
    const std::vector<TokenSequence> fake = read_corpus(tdet_fake);
    DetectorBank bank;
    std::array<std::shared_ptr<const SegmentDetector>*, 5> slots = {
        &bank.m10, &bank.m25, &bank.m50, &bank.m50_25, &bank.m50_10};
    for (std::size_t m = 0; m < 5; ++m) {
      const SegmentSpec spec = DetectorBank::default_specs()[m];
      const std::int32_t hop = tdet_hop > 0 ? tdet_hop : spec.source_window();
      TrainingSet set = build_training_set(real, fake, spec, hop,
                                           stream_seed(cfg.train.seed, m));
      TrainConfig tc = cfg.train;
      tc.seed = static_cast<std::int64_t>(stream_seed(cfg.train.seed, 100 + m));
      BceTrainResult trained =
          bce_train(set.examples, spec, cfg.benchmark.detector_feature_dim, tc);
      std::cout << DetectorBank::member_names()[m] << ": " << set.real_count
                << " real / " << set.fake_count
                << " fake segments, final loss " << trained.final_loss() << "\n";
      *slots[m] = std::make_shared<const FeatureLogisticDetector>(
          std::move(trained.detector));
    }
    save_bank(bank, tdet_out);
    std::cout << "bank -> " << tdet_out << "\n";
    return kExitOk;
  }

  if (edet->parsed()) {
    const DetectorBank bank = load_bank(edet_bank);
    const std::vector<TokenSequence> real = read_corpus(edet_real);
    const std::vector<TokenSequence> fake = read_corpus(edet_fake);
    std::printf("%-8s %-10s %8s %8s %8s\n", "model", "resolution", "auroc", "acc",
                "macro_f1");
    for (std::size_t m = 0; m < 5; ++m) {
      const SegmentSpec spec = DetectorBank::default_specs()[m];
      TrainingSet set =
          build_training_set(real, fake, spec, spec.source_window(), 0);
      std::vector<double> scores;
      std::vector<std::int32_t> labels;
      for (const LabeledSegment& ex : set.examples) {
        scores.push_back(score_segment(*bank.member(m), ex.segment.tokens));
        labels.push_back(ex.label);
      }
      const std::string resolution =
          spec.stride == 1 ? std::to_string(spec.length)
                           : std::to_string(spec.source_window()) + "->" +
                                 std::to_string(spec.length);
      std::printf("%-8s %-10s %8.4f %8.4f %8.4f\n",
                  DetectorBank::member_names()[m], resolution.c_str(),
                  auroc(scores, labels), accuracy_at(scores, labels),
                  macro_f1_at(scores, labels));
    }
    return kExitOk;
  }

  if (dec->parsed()) {
    const NGramModel model = NGramModel::load(dec_model);
    const Scheme scheme = parse_scheme(dec_scheme);
    std::optional<DetectorBank> bank;
    if (scheme_needs_bank(scheme)) {
      if (dec_bank.empty()) {
        throw ValidationError("scheme " + dec_scheme +
                              " requires --bank <directory>");
      }
      bank = load_bank(dec_bank);
    } else if (!dec_bank.empty()) {
      throw ValidationError("scheme " + dec_scheme + " does not accept --bank");
    }

    const std::vector<TokenId> prefix = parse_prefix(dec_prefix);
    const DecodeParams params = decode_params(cfg);
    std::vector<TokenSequence> corpus;
    std::vector<RoundLog> first_rounds;
    corpus.reserve(dec_count);
    for (std::int32_t i = 0; i < dec_count; ++i) {
      DecodeOutput out =
          decode_sequence(model, bank ? &*bank : nullptr, scheme, params, prefix,
                          dec_len, stream_seed(dec_seed, static_cast<std::uint64_t>(i)));
      if (i == 0) first_rounds = std::move(out.rounds);
      corpus.push_back(std::move(out.sequence));
    }
    write_corpus(dec_out, corpus);
    if (!dec_roundlog.empty()) write_round_logs(dec_roundlog, first_rounds);
    std::cout << "wrote " << corpus.size() << " sequences to " << dec_out << "\n";
    return kExitOk;
  }

  if (bench->parsed()) {
    const BenchmarkConfig b = benchmark_config(cfg);
    const BenchmarkResult result = synth_benchmark(b, b.output_dir);
    for (const OrderingCheck& check : result.checks) {
      std::cout << check.name << ": " << check.passes << "/" << check.total
                << (check.asserted ? (check.ok ? " PASS" : " FAIL") : " (logged)")
                << "\n";
    }
    std::cout << "reports -> " << b.output_dir << "\n";
    return result.all_ok() ? kExitOk : kExitAssertion;
  }

  return kExitValidation;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const guidec::IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const guidec::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
}
