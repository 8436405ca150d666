#pragma once

// Token-level spoof detectors at five resolutions, BCE training, and the
// detector evaluation metrics.
//
// The detector stand-in is logistic regression over hashed n-gram counts.
// Feature hashing ("fh64/v1"): a unigram t maps to bucket
// mix(mix(KIND_UNI ^ (t+1))) % D and a bigram (s, t) to
// mix(mix(KIND_BI ^ (s+1)) ^ (t+1)) % D, where mix is the splitmix64
// finalizer from rng.hpp. Features are occurrence counts, so serialized
// detectors are portable across platforms.

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "guidec/rng.hpp"
#include "guidec/tokens.hpp"

namespace guidec {

class SegmentDetector {
 public:
  virtual ~SegmentDetector() = default;
  virtual SegmentSpec spec() const = 0;
  // Probability that the segment is real (golden), in [0, 1].
  virtual double score(std::span<const TokenId> segment) const = 0;
};

// Validates the segment length against the detector spec before scoring.
double score_segment(const SegmentDetector& detector, std::span<const TokenId> segment);

inline constexpr std::int32_t kDefaultFeatureDim = 4096;
inline constexpr const char* kFeatureHashId = "fh64/v1";

// Sparse hashed unigram+bigram counts; indices are strictly increasing.
struct SparseFeatures {
  std::vector<std::pair<std::int32_t, double>> entries;
};

SparseFeatures featurize(std::span<const TokenId> segment, std::int32_t feature_dim);

struct TrainConfig {
  double learning_rate = 1e-4;  // reference defaults for lr and decay
  double weight_decay = 1e-4;
  std::int32_t epochs = 100;
  std::int32_t batch_size = 16;
  std::int64_t seed = 0;

  void validate() const;
};

class FeatureLogisticDetector final : public SegmentDetector {
 public:
  FeatureLogisticDetector(SegmentSpec spec, std::int32_t feature_dim);

  SegmentSpec spec() const override { return spec_; }
  double score(std::span<const TokenId> segment) const override;

  std::int32_t feature_dim() const { return feature_dim_; }
  const std::vector<double>& weights() const { return weights_; }
  double bias() const { return bias_; }

  std::string to_json() const;
  static FeatureLogisticDetector from_json(const std::string& text);
  void save(const std::string& path) const;
  static FeatureLogisticDetector load(const std::string& path);

 private:
  friend struct BceTrainer;

  SegmentSpec spec_;
  std::int32_t feature_dim_;
  std::vector<double> weights_;
  double bias_ = 0.0;
};

struct LabeledSegment {
  Segment segment;
  std::int32_t label = 0;  // 1 = real/golden, 0 = synthetic
};

struct BceTrainResult {
  FeatureLogisticDetector detector;
  // Mean training-set BCE after each epoch; front() is the pre-training loss.
  std::vector<double> epoch_losses;
  double final_loss() const { return epoch_losses.back(); }
};

// Mini-batch gradient descent on mean BCE with decoupled L2 weight decay
// (bias undecayed). Deterministic under cfg.seed. Weights start at zero, so
// an untrained detector scores 0.5 everywhere.
BceTrainResult bce_train(const std::vector<LabeledSegment>& examples, SegmentSpec spec,
                         std::int32_t feature_dim, const TrainConfig& cfg);

// Mean BCE of a detector over a labeled set.
double bce_loss(const FeatureLogisticDetector& detector,
                const std::vector<LabeledSegment>& examples);

struct TrainingSet {
  std::vector<LabeledSegment> examples;  // shuffled
  std::size_t real_count = 0;
  std::size_t fake_count = 0;
};

// Crops windows of spec.length * spec.stride at the given hop from both
// corpora, skip-samples strided specs, labels real=1 / fake=0, and shuffles
// with the given seed. With random_offset, each sequence's first crop starts
// at a seeded uniform offset in [0, hop) instead of 0. Throws if either class
// ends up empty.
TrainingSet build_training_set(const std::vector<TokenSequence>& real_corpus,
                               const std::vector<TokenSequence>& fake_corpus,
                               SegmentSpec spec, std::int32_t hop,
                               std::uint64_t shuffle_seed = 0,
                               bool random_offset = false);

// Probability that a random positive outranks a random negative, ties
// counting 1/2 (Mann-Whitney). Requires both classes present.
double auroc(std::span<const double> scores, std::span<const std::int32_t> labels);

// Standard deviation of auroc under random label permutations (the
// permutation null), estimated from `permutations` seeded shuffles.
double auroc_null_sigma(std::span<const std::int32_t> labels, std::int32_t permutations,
                        std::uint64_t seed);

// score >= threshold classifies as positive.
double accuracy_at(std::span<const double> scores, std::span<const std::int32_t> labels,
                   double threshold = 0.5);

// Unweighted mean of the per-class F1 scores; a class whose F1 denominator is
// zero (no true positives, no false positives, no false negatives)
// contributes 0 by convention.
double macro_f1_at(std::span<const double> scores, std::span<const std::int32_t> labels,
                   double threshold = 0.5);

// The five trained scorers: contiguous 10/25/50 plus the two skip-sampled
// views of a 50-token window.
struct DetectorBank {
  std::shared_ptr<const SegmentDetector> m10;     // spec (10, 1)
  std::shared_ptr<const SegmentDetector> m25;     // spec (25, 1)
  std::shared_ptr<const SegmentDetector> m50;     // spec (50, 1)
  std::shared_ptr<const SegmentDetector> m50_25;  // spec (25, 2)
  std::shared_ptr<const SegmentDetector> m50_10;  // spec (10, 5)

  void validate() const;

  static const std::array<SegmentSpec, 5>& default_specs();
  static const std::array<const char*, 5>& member_names();

  std::shared_ptr<const SegmentDetector> member(std::size_t index) const;
};

// Bank persistence: one JSON file per member (m10.json, m25.json, m50.json,
// m50_25.json, m50_10.json) inside `dir`.
void save_bank(const DetectorBank& bank, const std::string& dir);
DetectorBank load_bank(const std::string& dir);

}  // namespace guidec
