#include "guidec/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"

#include "guidec/errors.hpp"

namespace guidec {

void BenchmarkConfig::validate() const {
  if (vocab_size < 4) throw ValidationError("benchmark vocab_size must be >= 4");
  if (hmm_states < 2) throw ValidationError("benchmark needs >= 2 HMM states");
  if (real_sequences < 10) throw ValidationError("need >= 10 real sequences");
  if (sequence_length < 50) {
    throw ValidationError("sequence_length must be >= 50 (longest detector window)");
  }
  if (fakes_per_real < 1) throw ValidationError("fakes_per_real must be >= 1");
  if (holdout_fraction <= 0.0 || holdout_fraction >= 1.0) {
    throw ValidationError("holdout_fraction must be in (0, 1)");
  }
  if (ngram_order < 1) throw ValidationError("ngram_order must be >= 1");
  if (ngram_lambda <= 0.0) throw ValidationError("ngram_lambda must be > 0");
  if (detector_feature_dim < 2) throw ValidationError("detector_feature_dim must be >= 2");
  detector_train.validate();
  if (decoders.empty()) throw ValidationError("decoder list must be nonempty");
  for (const std::string& d : decoders) parse_scheme(d);
  if (eval_sequences < 1) throw ValidationError("eval_sequences must be >= 1");
  if (eval_length < 50) throw ValidationError("eval_length must be >= 50");
  if (kl_epsilon <= 0.0) throw ValidationError("kl_epsilon must be > 0");
  if (eval_seeds.empty()) throw ValidationError("eval_seeds must be nonempty");
}

HmmSource make_banded_hmm(std::int32_t states, std::int32_t vocab_size,
                          std::uint64_t structure_seed) {
  if (states < 2) throw ValidationError("need >= 2 HMM states");
  if (vocab_size < states) throw ValidationError("vocab_size must be >= state count");

  Rng rng(stream_seed(structure_seed, 0xB4DE));
  HmmSource hmm;
  hmm.state_count = states;
  hmm.vocab_size = vocab_size;
  hmm.initial.assign(states, 1.0 / states);

  auto jitter = [&] { return 0.85 + 0.3 * rng.next_double(); };

  // Slow mixing: state dwell times span the stride-5 skip views, so coarse
  // resolutions still see state structure.
  hmm.transition.assign(std::size_t(states) * states, 0.0);
  for (std::int32_t s = 0; s < states; ++s) {
    double* row = hmm.transition.data() + std::size_t(s) * states;
    row[s] = 0.72 * jitter();
    row[(s + 1) % states] = 0.18 * jitter();
    row[(s + states - 1) % states] = 0.06 * jitter();
    const double rest = 0.04 / std::max(1, states - 3);
    for (std::int32_t t = 0; t < states; ++t) {
      if (row[t] == 0.0) row[t] = rest * jitter();
    }
    const double total = std::accumulate(row, row + states, 0.0);
    for (std::int32_t t = 0; t < states; ++t) row[t] /= total;
  }

  // Overlapping triangular emission bands, zero outside: some bigrams are
  // impossible under the source, which is exactly what a smoothed n-gram
  // model leaks.
  hmm.emission.assign(std::size_t(states) * vocab_size, 0.0);
  const double span = static_cast<double>(vocab_size) / states;
  const std::int32_t half_width =
      std::max<std::int32_t>(2, static_cast<std::int32_t>(std::ceil(span)));
  for (std::int32_t s = 0; s < states; ++s) {
    double* row = hmm.emission.data() + std::size_t(s) * vocab_size;
    const std::int32_t center = static_cast<std::int32_t>(span * (s + 0.5));
    for (std::int32_t d = -half_width; d <= half_width; ++d) {
      const std::int32_t v = center + d;
      if (v < 0 || v >= vocab_size) continue;
      row[v] = (1.0 + half_width - std::abs(d)) * jitter();
    }
    const double total = std::accumulate(row, row + vocab_size, 0.0);
    for (std::int32_t v = 0; v < vocab_size; ++v) row[v] /= total;
  }
  hmm.validate();
  return hmm;
}

namespace {

std::vector<double> bigram_distribution(const std::vector<TokenSequence>& corpus,
                                        std::int32_t vocab_size, double epsilon) {
  std::vector<double> cells(std::size_t(vocab_size) * vocab_size, epsilon);
  double total = epsilon * static_cast<double>(cells.size());
  for (const TokenSequence& seq : corpus) {
    for (std::size_t i = 0; i + 1 < seq.tokens.size(); ++i) {
      cells[std::size_t(seq.tokens[i]) * vocab_size + seq.tokens[i + 1]] += 1.0;
      total += 1.0;
    }
  }
  for (double& c : cells) c /= total;
  return cells;
}

}  // namespace

double bigram_kl(const std::vector<TokenSequence>& candidate,
                 const std::vector<TokenSequence>& reference, std::int32_t vocab_size,
                 double epsilon) {
  if (epsilon <= 0.0) throw ValidationError("epsilon must be > 0");
  if (candidate.empty() || reference.empty()) {
    throw ValidationError("corpora must be nonempty");
  }
  const std::vector<double> p = bigram_distribution(reference, vocab_size, epsilon);
  const std::vector<double> q = bigram_distribution(candidate, vocab_size, epsilon);
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) kl += p[i] * std::log(p[i] / q[i]);
  return std::max(kl, 0.0);
}

RepetitionStats repetition_stats(const TokenSequence& seq) {
  const auto& t = seq.tokens;
  if (t.empty()) throw ValidationError("repetition_stats requires a nonempty sequence");

  RepetitionStats stats;
  std::size_t runs = 0;
  std::size_t i = 0;
  while (i < t.size()) {
    std::size_t j = i;
    while (j < t.size() && t[j] == t[i]) ++j;
    stats.max_run = std::max<std::int32_t>(stats.max_run, static_cast<std::int32_t>(j - i));
    ++runs;
    i = j;
  }
  stats.mean_run = static_cast<double>(t.size()) / static_cast<double>(runs);

  std::set<TokenId> unigrams(t.begin(), t.end());
  stats.distinct_1 = static_cast<double>(unigrams.size()) / static_cast<double>(t.size());

  if (t.size() > 1) {
    std::set<std::pair<TokenId, TokenId>> bigrams;
    for (std::size_t k = 0; k + 1 < t.size(); ++k) bigrams.emplace(t[k], t[k + 1]);
    stats.distinct_2 =
        static_cast<double>(bigrams.size()) / static_cast<double>(t.size() - 1);
  }
  return stats;
}

bool BenchmarkResult::all_ok() const {
  return std::all_of(checks.begin(), checks.end(),
                     [](const OrderingCheck& c) { return c.ok; });
}

namespace {

struct SplitCorpus {
  std::vector<TokenSequence> train;
  std::vector<TokenSequence> holdout;
};

SplitCorpus split_corpus(std::vector<TokenSequence> corpus, double holdout_fraction,
                         std::uint64_t seed) {
  Rng rng(seed);
  for (std::size_t i = corpus.size(); i > 1; --i) {
    std::swap(corpus[i - 1], corpus[rng.next_index(i)]);
  }
  const std::size_t holdout_n = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(corpus.size() * holdout_fraction)));
  SplitCorpus out;
  out.holdout.assign(corpus.begin(), corpus.begin() + holdout_n);
  out.train.assign(corpus.begin() + holdout_n, corpus.end());
  return out;
}

std::vector<TokenSequence> sample_real_corpus(const HmmSource& hmm, std::int32_t count,
                                              std::int32_t length, std::uint64_t seed) {
  std::vector<TokenSequence> corpus;
  corpus.reserve(count);
  for (std::int32_t i = 0; i < count; ++i) {
    Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(i));
    corpus.push_back(hmm_sample(hmm, length, rng));
  }
  return corpus;
}

std::vector<TokenSequence> sample_fake_corpus(const NGramModel& model,
                                              const OriginalParams& original,
                                              std::int32_t count, std::int32_t length,
                                              std::uint64_t seed) {
  std::vector<TokenSequence> corpus;
  corpus.reserve(count);
  for (std::int32_t i = 0; i < count; ++i) {
    Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(i));
    TokenSequence seq;
    seq.vocab_size = model.vocab_size();
    seq.tokens = baseline_topk_generate(model, {}, length, original.top_k,
                                        original.temperature, rng);
    corpus.push_back(std::move(seq));
  }
  return corpus;
}

DetectorRow evaluate_detector(const FeatureLogisticDetector& det, const std::string& name,
                              const TrainingSet& holdout, double train_loss,
                              std::uint64_t null_seed) {
  std::vector<double> scores;
  std::vector<std::int32_t> labels;
  scores.reserve(holdout.examples.size());
  labels.reserve(holdout.examples.size());
  for (const LabeledSegment& ex : holdout.examples) {
    scores.push_back(score_segment(det, ex.segment.tokens));
    labels.push_back(ex.label);
  }
  DetectorRow row;
  row.name = name;
  row.spec = det.spec();
  row.auroc = auroc(scores, labels);
  row.accuracy = accuracy_at(scores, labels);
  row.macro_f1 = macro_f1_at(scores, labels);
  row.null_sigma = auroc_null_sigma(labels, 200, null_seed);
  row.train_loss = train_loss;
  row.eval_real = holdout.real_count;
  row.eval_fake = holdout.fake_count;
  return row;
}

std::map<std::string, double> mean_bank_scores(const DetectorBank& bank,
                                               const std::vector<TokenSequence>& corpus) {
  std::map<std::string, double> means;
  for (std::size_t m = 0; m < 5; ++m) {
    const auto det = bank.member(m);
    const SegmentSpec spec = det->spec();
    const std::int32_t window = spec.source_window();
    double sum = 0.0;
    std::size_t n = 0;
    for (const TokenSequence& seq : corpus) {
      for (const Segment& crop : crop_segments(seq, window, window)) {
        const std::vector<TokenId> view =
            spec.stride == 1 ? crop.tokens : skip_sample(crop.tokens, spec.stride);
        sum += score_segment(*det, view);
        ++n;
      }
    }
    means[DetectorBank::member_names()[m]] = n > 0 ? sum / static_cast<double>(n) : 0.0;
  }
  return means;
}

nlohmann::json detector_row_json(std::uint64_t seed, const DetectorRow& row) {
  return nlohmann::json{{"seed", seed},
                        {"detector", row.name},
                        {"length", row.spec.length},
                        {"stride", row.spec.stride},
                        {"auroc", row.auroc},
                        {"accuracy", row.accuracy},
                        {"macro_f1", row.macro_f1},
                        {"auroc_null_sigma", row.null_sigma},
                        {"train_loss", row.train_loss},
                        {"eval_real", row.eval_real},
                        {"eval_fake", row.eval_fake}};
}

nlohmann::json decoder_row_json(std::uint64_t seed, const DecoderReport& row) {
  return nlohmann::json{{"seed", seed},
                        {"decoder", row.name},
                        {"bigram_kl_nats", row.bigram_kl_nats},
                        {"mean_run", row.mean_run},
                        {"max_run", row.max_run},
                        {"distinct_1", row.distinct_1},
                        {"distinct_2", row.distinct_2},
                        {"mean_bank_scores", row.mean_bank_scores},
                        {"sequences", row.sequences},
                        {"length", row.length}};
}

}  // namespace

BenchmarkResult synth_benchmark(const BenchmarkConfig& cfg,
                                const std::optional<std::string>& output_dir) {
  cfg.validate();

  const HmmSource hmm = make_banded_hmm(cfg.hmm_states, cfg.vocab_size,
                                        cfg.structure_seed);
  BenchmarkResult result;

  std::optional<std::filesystem::path> out_path;
  if (output_dir) {
    out_path = std::filesystem::path(*output_dir);
    std::error_code ec;
    std::filesystem::create_directories(*out_path, ec);
    if (ec) throw IoError("cannot create output directory: " + *output_dir);
  }

  nlohmann::json timings = nlohmann::json::array();

  for (std::size_t seed_index = 0; seed_index < cfg.eval_seeds.size(); ++seed_index) {
    const std::uint64_t seed = cfg.eval_seeds[seed_index];
    SeedResult sr;
    sr.seed = seed;

    // 1. Real corpus from the HMM source, split by sequence.
    std::vector<TokenSequence> real = sample_real_corpus(
        hmm, cfg.real_sequences, cfg.sequence_length, stream_seed(seed, 1));
    SplitCorpus real_split =
        split_corpus(std::move(real), cfg.holdout_fraction, stream_seed(seed, 2));

    // 2. AR stand-in trained on the real training split.
    const NGramModel ar =
        ngram_train(real_split.train, cfg.ngram_order, cfg.ngram_lambda);

    // 3. Synthetic counterparts, fakes_per_real per real sequence.
    const auto fake_count = [&](const std::vector<TokenSequence>& split) {
      return static_cast<std::int32_t>(split.size()) * cfg.fakes_per_real;
    };
    std::vector<TokenSequence> fake_train =
        sample_fake_corpus(ar, cfg.decode.original, fake_count(real_split.train),
                           cfg.sequence_length, stream_seed(seed, 3));
    std::vector<TokenSequence> fake_holdout =
        sample_fake_corpus(ar, cfg.decode.original, fake_count(real_split.holdout),
                           cfg.sequence_length, stream_seed(seed, 4));

    // 4-5. Train and evaluate the five-detector bank.
    DetectorBank bank;
    std::array<std::shared_ptr<const SegmentDetector>*, 5> slots = {
        &bank.m10, &bank.m25, &bank.m50, &bank.m50_25, &bank.m50_10};
    for (std::size_t m = 0; m < 5; ++m) {
      const SegmentSpec spec = DetectorBank::default_specs()[m];
      const std::int32_t hop = spec.source_window();
      TrainingSet train_set = build_training_set(real_split.train, fake_train, spec, hop,
                                                 stream_seed(seed, 10 + m));
      TrainingSet holdout_set = build_training_set(
          real_split.holdout, fake_holdout, spec, hop, stream_seed(seed, 20 + m));

      TrainConfig tc = cfg.detector_train;
      tc.seed = static_cast<std::int64_t>(stream_seed(seed, 30 + m));
      BceTrainResult trained =
          bce_train(train_set.examples, spec, cfg.detector_feature_dim, tc);

      sr.detector_rows.push_back(evaluate_detector(
          trained.detector, DetectorBank::member_names()[m], holdout_set,
          trained.final_loss(), stream_seed(seed, 40 + m)));
      *slots[m] = std::make_shared<const FeatureLogisticDetector>(
          std::move(trained.detector));
    }
    bank.validate();

    // 6-7. Decoder comparison against the full real corpus.
    std::vector<TokenSequence> real_full = real_split.train;
    real_full.insert(real_full.end(), real_split.holdout.begin(),
                     real_split.holdout.end());

    for (std::size_t d = 0; d < cfg.decoders.size(); ++d) {
      const Scheme scheme = parse_scheme(cfg.decoders[d]);
      const DetectorBank* bank_ptr = scheme_needs_bank(scheme) ? &bank : nullptr;

      std::vector<RoundLog> rounds;
      const auto t0 = std::chrono::steady_clock::now();
      std::vector<TokenSequence> generated = decode_corpus(
          ar, bank_ptr, scheme, cfg.decode, cfg.eval_sequences, cfg.eval_length,
          stream_seed(seed, 100 + d), &rounds);
      const auto t1 = std::chrono::steady_clock::now();

      DecoderReport report;
      report.name = cfg.decoders[d];
      report.sequences = cfg.eval_sequences;
      report.length = cfg.eval_length;
      report.bigram_kl_nats =
          bigram_kl(generated, real_full, cfg.vocab_size, cfg.kl_epsilon);
      double mean_run_sum = 0.0, max_run_sum = 0.0, d1_sum = 0.0, d2_sum = 0.0;
      for (const TokenSequence& seq : generated) {
        const RepetitionStats stats = repetition_stats(seq);
        mean_run_sum += stats.mean_run;
        max_run_sum += stats.max_run;
        d1_sum += stats.distinct_1;
        d2_sum += stats.distinct_2;
      }
      const double n = static_cast<double>(generated.size());
      report.mean_run = mean_run_sum / n;
      report.max_run = max_run_sum / n;
      report.distinct_1 = d1_sum / n;
      report.distinct_2 = d2_sum / n;
      report.mean_bank_scores = mean_bank_scores(bank, generated);
      report.seconds_per_token =
          std::chrono::duration<double>(t1 - t0).count() /
          (static_cast<double>(cfg.eval_sequences) * cfg.eval_length);
      sr.decoder_rows.push_back(report);

      timings.push_back({{"seed", seed},
                         {"decoder", cfg.decoders[d]},
                         {"seconds_per_token", report.seconds_per_token}});

      if (out_path && seed_index == 0) {
        write_corpus((*out_path / ("corpus_" + cfg.decoders[d] + ".txt")).string(),
                     generated);
        if (!rounds.empty()) {
          write_round_logs(
              (*out_path / ("rounds_" + cfg.decoders[d] + ".jsonl")).string(), rounds);
        }
      }
    }
    result.seeds.push_back(std::move(sr));
  }

  // Cross-seed ordering checks; asserted only with enough seeds for a
  // majority to mean something.
  const bool assertable = cfg.eval_seeds.size() >= 3;
  {
    OrderingCheck check;
    check.name = "detector_auroc_ordering_m10<=m25<=m50";
    for (const SeedResult& sr : result.seeds) {
      const double a10 = sr.detector_rows[0].auroc;
      const double a25 = sr.detector_rows[1].auroc;
      const double a50 = sr.detector_rows[2].auroc;
      check.passes += (a10 <= a25 && a25 <= a50);
      ++check.total;
    }
    check.asserted = assertable;
    check.ok = !check.asserted || 2 * check.passes > check.total;
    result.checks.push_back(check);
  }
  const auto find_decoder = [&](const char* name) -> std::optional<std::size_t> {
    for (std::size_t d = 0; d < cfg.decoders.size(); ++d) {
      if (cfg.decoders[d] == name) return d;
    }
    return std::nullopt;
  };
  if (const auto hier = find_decoder("hier-eas"), orig = find_decoder("original");
      hier && orig) {
    OrderingCheck check;
    check.name = "bigram_kl_hier-eas<=original";
    for (const SeedResult& sr : result.seeds) {
      check.passes += (sr.decoder_rows[*hier].bigram_kl_nats <=
                       sr.decoder_rows[*orig].bigram_kl_nats);
      ++check.total;
    }
    check.asserted = assertable;
    check.ok = !check.asserted || 2 * check.passes > check.total;
    result.checks.push_back(check);
  }

  if (out_path) {
    {
      std::ofstream det_out(*out_path / "detectors.jsonl",
                            std::ios::binary | std::ios::trunc);
      std::ofstream dec_out(*out_path / "decoders.jsonl",
                            std::ios::binary | std::ios::trunc);
      if (!det_out || !dec_out) throw IoError("cannot write benchmark reports");
      for (const SeedResult& sr : result.seeds) {
        for (const DetectorRow& row : sr.detector_rows) {
          det_out << detector_row_json(sr.seed, row).dump() << '\n';
        }
        for (const DecoderReport& row : sr.decoder_rows) {
          dec_out << decoder_row_json(sr.seed, row).dump() << '\n';
        }
      }
    }
    {
      std::ofstream t_out(*out_path / "timings.jsonl",
                          std::ios::binary | std::ios::trunc);
      for (const auto& entry : timings) t_out << entry.dump() << '\n';
    }
    std::ostringstream summary;
    summary << "detector bank (held-out), per seed\n";
    for (const SeedResult& sr : result.seeds) {
      for (const DetectorRow& row : sr.detector_rows) {
        summary << "  seed " << sr.seed << "  " << row.name << "  auroc "
                << row.auroc << "  acc " << row.accuracy << "  macro_f1 "
                << row.macro_f1 << '\n';
      }
    }
    summary << "decoders, per seed\n";
    for (const SeedResult& sr : result.seeds) {
      for (const DecoderReport& row : sr.decoder_rows) {
        summary << "  seed " << sr.seed << "  " << row.name << "  bigram_kl "
                << row.bigram_kl_nats << "  mean_run " << row.mean_run
                << "  distinct_2 " << row.distinct_2 << '\n';
      }
    }
    summary << "ordering checks\n";
    for (const OrderingCheck& check : result.checks) {
      summary << "  " << check.name << "  " << check.passes << "/" << check.total
              << (check.asserted ? (check.ok ? "  PASS" : "  FAIL") : "  (logged)")
              << '\n';
    }
    std::ofstream s_out(*out_path / "summary.txt", std::ios::binary | std::ios::trunc);
    if (!s_out) throw IoError("cannot write benchmark summary");
    s_out << summary.str();
  }

  return result;
}

}  // namespace guidec
