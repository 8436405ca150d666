#include "guidec/detector.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "guidec/errors.hpp"

namespace guidec {

namespace {

constexpr std::uint64_t kKindUnigram = 0x755E'D1A6'0001ULL;
constexpr std::uint64_t kKindBigram = 0x755E'D1A6'0002ULL;

std::int32_t bucket(std::uint64_t h, std::int32_t dim) {
  return static_cast<std::int32_t>(h % static_cast<std::uint64_t>(dim));
}

double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

double score_segment(const SegmentDetector& detector, std::span<const TokenId> segment) {
  const SegmentSpec spec = detector.spec();
  if (segment.size() != static_cast<std::size_t>(spec.length)) {
    throw ValidationError("segment length mismatch: detector expects " +
                          std::to_string(spec.length) + " tokens, got " +
                          std::to_string(segment.size()));
  }
  return detector.score(segment);
}

SparseFeatures featurize(std::span<const TokenId> segment, std::int32_t feature_dim) {
  if (feature_dim < 2) throw ValidationError("feature_dim must be >= 2");

  std::map<std::int32_t, double> counts;
  for (std::size_t i = 0; i < segment.size(); ++i) {
    const std::uint64_t u = static_cast<std::uint64_t>(segment[i]) + 1;
    counts[bucket(splitmix64(splitmix64(kKindUnigram ^ u)), feature_dim)] += 1.0;
    if (i + 1 < segment.size()) {
      const std::uint64_t v = static_cast<std::uint64_t>(segment[i + 1]) + 1;
      counts[bucket(splitmix64(splitmix64(kKindBigram ^ u) ^ v), feature_dim)] += 1.0;
    }
  }
  SparseFeatures out;
  out.entries.assign(counts.begin(), counts.end());
  return out;
}

void TrainConfig::validate() const {
  if (learning_rate <= 0.0) throw ValidationError("learning_rate must be > 0");
  if (weight_decay < 0.0) throw ValidationError("weight_decay must be >= 0");
  if (epochs < 0) throw ValidationError("epochs must be >= 0");
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
}

FeatureLogisticDetector::FeatureLogisticDetector(SegmentSpec spec,
                                                 std::int32_t feature_dim)
    : spec_(spec), feature_dim_(feature_dim), weights_(feature_dim, 0.0) {
  if (spec.length < 1 || spec.stride < 1) {
    throw ValidationError("detector spec length and stride must be >= 1");
  }
  if (feature_dim < 2) throw ValidationError("feature_dim must be >= 2");
}

double FeatureLogisticDetector::score(std::span<const TokenId> segment) const {
  const SparseFeatures f = featurize(segment, feature_dim_);
  double z = bias_;
  for (const auto& [index, value] : f.entries) z += weights_[index] * value;
  return logistic(z);
}

struct BceTrainer {
  static BceTrainResult run(const std::vector<LabeledSegment>& examples,
                            SegmentSpec spec, std::int32_t feature_dim,
                            const TrainConfig& cfg) {
    cfg.validate();
    if (examples.empty()) throw ValidationError("empty training set");

    bool has_pos = false, has_neg = false;
    for (const LabeledSegment& ex : examples) {
      if (ex.segment.tokens.size() != static_cast<std::size_t>(spec.length)) {
        throw ValidationError("training segment length " +
                              std::to_string(ex.segment.tokens.size()) +
                              " does not match spec length " +
                              std::to_string(spec.length));
      }
      (ex.label != 0 ? has_pos : has_neg) = true;
    }
    if (!has_pos || !has_neg) throw ValidationError("degenerate labels");

    std::vector<SparseFeatures> features;
    features.reserve(examples.size());
    for (const LabeledSegment& ex : examples) {
      features.push_back(featurize(ex.segment.tokens, feature_dim));
    }

    FeatureLogisticDetector det(spec, feature_dim);
    BceTrainResult result{std::move(det), {}};
    result.epoch_losses.push_back(loss(result.detector, features, examples));

    std::vector<std::size_t> order(examples.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(static_cast<std::uint64_t>(cfg.seed));

    std::vector<double> grad(feature_dim, 0.0);
    for (std::int32_t epoch = 0; epoch < cfg.epochs; ++epoch) {
      // Fisher-Yates, seeded: deterministic batch order.
      for (std::size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[rng.next_index(i)]);
      }
      for (std::size_t start = 0; start < order.size();
           start += static_cast<std::size_t>(cfg.batch_size)) {
        const std::size_t stop =
            std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
        std::fill(grad.begin(), grad.end(), 0.0);
        double grad_bias = 0.0;
        for (std::size_t i = start; i < stop; ++i) {
          const std::size_t ex = order[i];
          double z = result.detector.bias_;
          for (const auto& [index, value] : features[ex].entries) {
            z += result.detector.weights_[index] * value;
          }
          const double err = logistic(z) - static_cast<double>(examples[ex].label);
          for (const auto& [index, value] : features[ex].entries) {
            grad[index] += err * value;
          }
          grad_bias += err;
        }
        const double inv_batch = 1.0 / static_cast<double>(stop - start);
        const double decay = 1.0 - cfg.learning_rate * cfg.weight_decay;
        for (std::int32_t d = 0; d < feature_dim; ++d) {
          result.detector.weights_[d] =
              result.detector.weights_[d] * decay -
              cfg.learning_rate * grad[d] * inv_batch;
        }
        result.detector.bias_ -= cfg.learning_rate * grad_bias * inv_batch;
      }
      result.epoch_losses.push_back(loss(result.detector, features, examples));
    }
    return result;
  }

  static double loss(const FeatureLogisticDetector& det,
                     const std::vector<SparseFeatures>& features,
                     const std::vector<LabeledSegment>& examples) {
    double total = 0.0;
    for (std::size_t i = 0; i < examples.size(); ++i) {
      double z = det.bias_;
      for (const auto& [index, value] : features[i].entries) {
        z += det.weights_[index] * value;
      }
      // Stable log-loss: log(1 + e^-|z|) + max(z*sign, 0) form.
      const double y = static_cast<double>(examples[i].label);
      total += std::log1p(std::exp(-std::abs(z))) + (y != 0.0 ? std::max(-z, 0.0)
                                                              : std::max(z, 0.0));
    }
    return total / static_cast<double>(examples.size());
  }
};

BceTrainResult bce_train(const std::vector<LabeledSegment>& examples, SegmentSpec spec,
                         std::int32_t feature_dim, const TrainConfig& cfg) {
  return BceTrainer::run(examples, spec, feature_dim, cfg);
}

double bce_loss(const FeatureLogisticDetector& detector,
                const std::vector<LabeledSegment>& examples) {
  if (examples.empty()) throw ValidationError("empty example set");
  std::vector<SparseFeatures> features;
  features.reserve(examples.size());
  for (const LabeledSegment& ex : examples) {
    features.push_back(featurize(ex.segment.tokens, detector.feature_dim()));
  }
  return BceTrainer::loss(detector, features, examples);
}

TrainingSet build_training_set(const std::vector<TokenSequence>& real_corpus,
                               const std::vector<TokenSequence>& fake_corpus,
                               SegmentSpec spec, std::int32_t hop,
                               std::uint64_t shuffle_seed, bool random_offset) {
  if (spec.length < 1 || spec.stride < 1) {
    throw ValidationError("spec length and stride must be >= 1");
  }

  TrainingSet set;
  Rng rng(shuffle_seed);
  auto add = [&](const std::vector<TokenSequence>& corpus, std::int32_t label) {
    std::size_t added = 0;
    for (const TokenSequence& seq : corpus) {
      const std::size_t start =
          random_offset ? rng.next_index(static_cast<std::size_t>(hop)) : 0;
      const std::size_t window_len = static_cast<std::size_t>(spec.source_window());
      for (std::size_t offset = start; offset + window_len <= seq.tokens.size();
           offset += static_cast<std::size_t>(hop)) {
        std::span<const TokenId> window(seq.tokens.data() + offset, window_len);
        Segment seg;
        seg.spec = spec;
        seg.source_offset = offset;
        seg.tokens = spec.stride == 1
                         ? std::vector<TokenId>(window.begin(), window.end())
                         : skip_sample(window, spec.stride);
        set.examples.push_back(LabeledSegment{std::move(seg), label});
        ++added;
      }
    }
    return added;
  };
  set.real_count = add(real_corpus, 1);
  set.fake_count = add(fake_corpus, 0);
  if (set.real_count == 0 || set.fake_count == 0) {
    throw ValidationError("no " + std::string(set.real_count == 0 ? "real" : "fake") +
                          " segments after cropping for spec (" +
                          std::to_string(spec.length) + ", " +
                          std::to_string(spec.stride) + ")");
  }

  for (std::size_t i = set.examples.size(); i > 1; --i) {
    std::swap(set.examples[i - 1], set.examples[rng.next_index(i)]);
  }
  return set;
}

namespace {

void require_both_classes(std::span<const std::int32_t> labels) {
  bool pos = false, neg = false;
  for (std::int32_t l : labels) (l != 0 ? pos : neg) = true;
  if (!pos || !neg) throw ValidationError("both classes must be present");
}

}  // namespace

double auroc(std::span<const double> scores, std::span<const std::int32_t> labels) {
  if (scores.size() != labels.size()) {
    throw ValidationError("scores and labels must have equal length");
  }
  require_both_classes(labels);

  // Rank-sum with mean ranks for ties; equals the pairwise definition.
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  double rank_sum_pos = 0.0;
  std::size_t positives = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double mean_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] != 0) rank_sum_pos += mean_rank;
    }
    i = j;
  }
  for (std::int32_t l : labels) positives += (l != 0);
  const std::size_t negatives = labels.size() - positives;
  const double u = rank_sum_pos - static_cast<double>(positives) *
                                      (static_cast<double>(positives) + 1.0) / 2.0;
  return u / (static_cast<double>(positives) * static_cast<double>(negatives));
}

double auroc_null_sigma(std::span<const std::int32_t> labels, std::int32_t permutations,
                        std::uint64_t seed) {
  if (permutations < 2) throw ValidationError("need at least 2 permutations");
  require_both_classes(labels);

  // Scores are irrelevant under the null; permuting labels against a fixed
  // arbitrary score vector samples the null AUROC distribution.
  std::vector<double> scores(labels.size());
  for (std::size_t i = 0; i < scores.size(); ++i) scores[i] = static_cast<double>(i);
  std::vector<std::int32_t> shuffled(labels.begin(), labels.end());

  Rng rng(seed);
  double sum = 0.0, sum_sq = 0.0;
  for (std::int32_t p = 0; p < permutations; ++p) {
    for (std::size_t i = shuffled.size(); i > 1; --i) {
      std::swap(shuffled[i - 1], shuffled[rng.next_index(i)]);
    }
    const double a = auroc(scores, shuffled);
    sum += a;
    sum_sq += a * a;
  }
  const double n = static_cast<double>(permutations);
  const double var = std::max(0.0, (sum_sq - sum * sum / n) / (n - 1.0));
  return std::sqrt(var);
}

double accuracy_at(std::span<const double> scores, std::span<const std::int32_t> labels,
                   double threshold) {
  if (scores.empty() || scores.size() != labels.size()) {
    throw ValidationError("scores and labels must be nonempty and equal length");
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const std::int32_t pred = scores[i] >= threshold ? 1 : 0;
    correct += (pred == (labels[i] != 0 ? 1 : 0));
  }
  return static_cast<double>(correct) / static_cast<double>(scores.size());
}

double macro_f1_at(std::span<const double> scores, std::span<const std::int32_t> labels,
                   double threshold) {
  if (scores.empty() || scores.size() != labels.size()) {
    throw ValidationError("scores and labels must be nonempty and equal length");
  }
  require_both_classes(labels);

  double f1_sum = 0.0;
  for (std::int32_t cls : {1, 0}) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      const std::int32_t pred = scores[i] >= threshold ? 1 : 0;
      const bool pred_cls = pred == cls;
      const bool is_cls = (labels[i] != 0 ? 1 : 0) == cls;
      tp += (pred_cls && is_cls);
      fp += (pred_cls && !is_cls);
      fn += (!pred_cls && is_cls);
    }
    const double denom = static_cast<double>(2 * tp + fp + fn);
    f1_sum += denom > 0.0 ? 2.0 * static_cast<double>(tp) / denom : 0.0;
  }
  return f1_sum / 2.0;
}

void DetectorBank::validate() const {
  const auto& specs = default_specs();
  const std::array<std::shared_ptr<const SegmentDetector>, 5> members = {m10, m25, m50,
                                                                         m50_25, m50_10};
  for (std::size_t i = 0; i < members.size(); ++i) {
    if (!members[i]) {
      throw ValidationError(std::string("detector bank member missing: ") +
                            member_names()[i]);
    }
    if (members[i]->spec() != specs[i]) {
      throw ValidationError(std::string("detector bank member ") + member_names()[i] +
                            " has spec (" + std::to_string(members[i]->spec().length) +
                            ", " + std::to_string(members[i]->spec().stride) +
                            "), expected (" + std::to_string(specs[i].length) + ", " +
                            std::to_string(specs[i].stride) + ")");
    }
  }
}

const std::array<SegmentSpec, 5>& DetectorBank::default_specs() {
  static const std::array<SegmentSpec, 5> specs = {
      SegmentSpec{10, 1}, SegmentSpec{25, 1}, SegmentSpec{50, 1},
      SegmentSpec{25, 2}, SegmentSpec{10, 5}};
  return specs;
}

const std::array<const char*, 5>& DetectorBank::member_names() {
  static const std::array<const char*, 5> names = {"m10", "m25", "m50", "m50_25",
                                                   "m50_10"};
  return names;
}

std::shared_ptr<const SegmentDetector> DetectorBank::member(std::size_t index) const {
  switch (index) {
    case 0: return m10;
    case 1: return m25;
    case 2: return m50;
    case 3: return m50_25;
    case 4: return m50_10;
    default: throw ValidationError("detector bank index out of range");
  }
}

std::string FeatureLogisticDetector::to_json() const {
  nlohmann::json j;
  j["format_version"] = 1;
  j["spec"] = {{"length", spec_.length}, {"stride", spec_.stride}};
  j["feature_dim"] = feature_dim_;
  j["weights"] = weights_;
  j["bias"] = bias_;
  j["hash_id"] = kFeatureHashId;
  return j.dump();
}

FeatureLogisticDetector FeatureLogisticDetector::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("invalid detector JSON: ") + e.what(), 1);
  }
  try {
    if (j.at("hash_id").get<std::string>() != kFeatureHashId) {
      throw ValidationError("detector uses unknown feature hash: " +
                            j.at("hash_id").get<std::string>());
    }
    SegmentSpec spec{j.at("spec").at("length").get<std::int32_t>(),
                     j.at("spec").at("stride").get<std::int32_t>()};
    FeatureLogisticDetector det(spec, j.at("feature_dim").get<std::int32_t>());
    det.weights_ = j.at("weights").get<std::vector<double>>();
    det.bias_ = j.at("bias").get<double>();
    if (det.weights_.size() != static_cast<std::size_t>(det.feature_dim_)) {
      throw ValidationError("detector weights length mismatch");
    }
    return det;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("invalid detector JSON: ") + e.what());
  }
}

void FeatureLogisticDetector::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open detector file for writing: " + path);
  const std::string text = to_json();
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.put('\n');
  if (!out) throw IoError("failed writing detector file: " + path);
}

FeatureLogisticDetector FeatureLogisticDetector::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open detector file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_json(buf.str());
}

void save_bank(const DetectorBank& bank, const std::string& dir) {
  bank.validate();
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  for (std::size_t i = 0; i < 5; ++i) {
    const auto* det =
        dynamic_cast<const FeatureLogisticDetector*>(bank.member(i).get());
    if (!det) {
      throw ValidationError("only feature-logistic detectors are serializable");
    }
    det->save((std::filesystem::path(dir) /
               (std::string(DetectorBank::member_names()[i]) + ".json"))
                  .string());
  }
}

DetectorBank load_bank(const std::string& dir) {
  auto load_member = [&](const char* name) {
    const auto path = (std::filesystem::path(dir) / (std::string(name) + ".json"));
    return std::make_shared<const FeatureLogisticDetector>(
        FeatureLogisticDetector::load(path.string()));
  };
  DetectorBank bank;
  bank.m10 = load_member("m10");
  bank.m25 = load_member("m25");
  bank.m50 = load_member("m50");
  bank.m50_25 = load_member("m50_25");
  bank.m50_10 = load_member("m50_10");
  bank.validate();
  return bank;
}

}  // namespace guidec
