#include "guidec/armodel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "guidec/errors.hpp"

namespace guidec {

namespace {

void check_probability_row(std::span<const double> row, const char* what) {
  double sum = 0.0;
  for (double v : row) {
    if (v < 0.0) throw ValidationError(std::string(what) + ": negative entry");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw ValidationError(std::string(what) + ": row sums to " + std::to_string(sum));
  }
}

std::size_t sample_categorical(std::span<const double> probs, Rng& rng) {
  double u = rng.next_double();
  double acc = 0.0;
  std::size_t last_positive = 0;
  bool seen_positive = false;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] > 0.0) {
      last_positive = i;
      seen_positive = true;
    }
    acc += probs[i];
    if (u < acc) return i;
  }
  if (!seen_positive) throw ValidationError("degenerate distribution");
  return last_positive;
}

}  // namespace

NGramModel::NGramModel(std::int32_t vocab_size, std::int32_t order, double lambda)
    : vocab_size_(vocab_size), order_(order), lambda_(lambda) {
  if (vocab_size < 1) throw ValidationError("vocab_size must be >= 1");
  if (order < 1) throw ValidationError("n-gram order must be >= 1");
  if (lambda <= 0.0) throw ValidationError("smoothing lambda must be > 0");
}

void NGramModel::add_count(const std::vector<TokenId>& ctx, TokenId token,
                           std::int64_t n) {
  ContextCounts& cc = table_[ctx];
  cc.total += n;
  cc.per_token[token] += n;
}

std::vector<double> NGramModel::dist(std::span<const TokenId> prefix) const {
  const std::int32_t max_ctx = order_ - 1;
  const std::int32_t avail = static_cast<std::int32_t>(
      std::min<std::size_t>(prefix.size(), static_cast<std::size_t>(max_ctx)));

  for (std::int32_t k = avail; k >= 0; --k) {
    std::vector<TokenId> ctx(prefix.end() - k, prefix.end());
    auto it = table_.find(ctx);
    if (it == table_.end() || it->second.total <= 0) continue;

    const ContextCounts& cc = it->second;
    const double denom = static_cast<double>(cc.total) + lambda_ * vocab_size_;
    std::vector<double> probs(vocab_size_, lambda_ / denom);
    for (const auto& [token, count] : cc.per_token) {
      probs[token] = (static_cast<double>(count) + lambda_) / denom;
    }
    return probs;
  }
  return std::vector<double>(vocab_size_, 1.0 / vocab_size_);
}

NGramModel ngram_train(const std::vector<TokenSequence>& corpus, std::int32_t order,
                       double lambda, std::int32_t vocab_size_override) {
  std::int32_t vocab_size = vocab_size_override;
  if (vocab_size <= 0) {
    if (corpus.empty()) {
      throw ValidationError("empty corpus requires an explicit vocab_size");
    }
    vocab_size = corpus.front().vocab_size;
  }
  for (const TokenSequence& seq : corpus) {
    if (seq.vocab_size != vocab_size) {
      throw ValidationError("corpus sequences must share one vocab_size");
    }
    validate_sequence(seq);
  }

  NGramModel model(vocab_size, order, lambda);
  for (const TokenSequence& seq : corpus) {
    const auto& toks = seq.tokens;
    for (std::size_t t = 0; t < toks.size(); ++t) {
      const std::int32_t max_ctx =
          std::min<std::int32_t>(order - 1, static_cast<std::int32_t>(t));
      for (std::int32_t k = 0; k <= max_ctx; ++k) {
        std::vector<TokenId> ctx(toks.begin() + (t - k), toks.begin() + t);
        model.add_count(ctx, toks[t], 1);
      }
    }
  }
  return model;
}

std::string NGramModel::to_json() const {
  nlohmann::json j;
  j["format_version"] = 1;
  j["type"] = "ngram";
  j["vocab_size"] = vocab_size_;
  j["order"] = order_;
  j["lambda"] = lambda_;

  // Rows [context..., token, count] sorted for reproducible bytes.
  std::vector<std::vector<std::int64_t>> rows;
  for (const auto& [ctx, cc] : table_) {
    for (const auto& [token, count] : cc.per_token) {
      std::vector<std::int64_t> row;
      row.reserve(ctx.size() + 2);
      for (TokenId t : ctx) row.push_back(t);
      row.push_back(token);
      row.push_back(count);
      rows.push_back(std::move(row));
    }
  }
  std::sort(rows.begin(), rows.end(),
            [](const auto& a, const auto& b) {
              if (a.size() != b.size()) return a.size() < b.size();
              return a < b;
            });
  j["counts"] = rows;
  return j.dump();
}

NGramModel NGramModel::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("invalid model JSON: ") + e.what(), 1);
  }
  try {
    if (j.at("type").get<std::string>() != "ngram") {
      throw ValidationError("model file is not an n-gram model");
    }
    NGramModel model(j.at("vocab_size").get<std::int32_t>(),
                     j.at("order").get<std::int32_t>(),
                     j.at("lambda").get<double>());
    for (const auto& row : j.at("counts")) {
      if (row.size() < 2) throw ValidationError("counts row too short");
      std::vector<TokenId> ctx;
      for (std::size_t i = 0; i + 2 < row.size(); ++i) {
        ctx.push_back(row[i].get<TokenId>());
      }
      model.add_count(ctx, row[row.size() - 2].get<TokenId>(),
                      row[row.size() - 1].get<std::int64_t>());
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("invalid model JSON: ") + e.what());
  }
}

void NGramModel::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open model file for writing: " + path);
  std::string text = to_json();
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.put('\n');
  if (!out) throw IoError("failed writing model file: " + path);
}

NGramModel NGramModel::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open model file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_json(buf.str());
}

void HmmSource::validate() const {
  if (state_count < 1) throw ValidationError("HMM needs at least one state");
  if (vocab_size < 1) throw ValidationError("HMM vocab_size must be >= 1");
  if (initial.size() != static_cast<std::size_t>(state_count) ||
      transition.size() != static_cast<std::size_t>(state_count) * state_count ||
      emission.size() != static_cast<std::size_t>(state_count) * vocab_size) {
    throw ValidationError("HMM matrix shapes do not match state/vocab counts");
  }
  check_probability_row(initial, "HMM initial");
  for (std::int32_t s = 0; s < state_count; ++s) {
    check_probability_row(
        std::span<const double>(transition.data() + std::size_t(s) * state_count,
                                state_count),
        "HMM transition");
    check_probability_row(
        std::span<const double>(emission.data() + std::size_t(s) * vocab_size,
                                vocab_size),
        "HMM emission");
  }
}

TokenSequence hmm_sample(const HmmSource& source, std::int32_t length, Rng& rng) {
  if (length < 1) throw ValidationError("sequence length must be >= 1");
  source.validate();

  TokenSequence seq;
  seq.vocab_size = source.vocab_size;
  seq.tokens.reserve(length);

  std::size_t state = sample_categorical(source.initial, rng);
  for (std::int32_t t = 0; t < length; ++t) {
    std::span<const double> emit(source.emission.data() + state * source.vocab_size,
                                 source.vocab_size);
    seq.tokens.push_back(static_cast<TokenId>(sample_categorical(emit, rng)));
    std::span<const double> trans(source.transition.data() + state * source.state_count,
                                  source.state_count);
    state = sample_categorical(trans, rng);
  }
  return seq;
}

std::vector<double> hmm_stationary(const HmmSource& source) {
  source.validate();
  const std::int32_t n = source.state_count;
  std::vector<double> pi(n, 1.0 / n), next(n, 0.0);
  for (int iter = 0; iter < 10000; ++iter) {
    std::fill(next.begin(), next.end(), 0.0);
    for (std::int32_t s = 0; s < n; ++s) {
      for (std::int32_t t = 0; t < n; ++t) {
        next[t] += pi[s] * source.transition[std::size_t(s) * n + t];
      }
    }
    double delta = 0.0;
    for (std::int32_t s = 0; s < n; ++s) delta += std::abs(next[s] - pi[s]);
    pi.swap(next);
    if (delta < 1e-14) break;
  }
  return pi;
}

}  // namespace guidec
