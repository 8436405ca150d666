#include "guidec/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "guidec/errors.hpp"

namespace guidec {

void EasParams::validate() const {
  if (alpha < 0.0) throw ValidationError("alpha must be >= 0");
  if (beta <= 0.0 || beta > 1.0) throw ValidationError("beta must be in (0, 1]");
  if (gamma < 0.0) throw ValidationError("gamma must be >= 0");
  if (cluster_k < 1) throw ValidationError("cluster_k must be >= 1");
  if (window < 1) throw ValidationError("window must be >= 1");
  if (top_p <= 0.0 || top_p > 1.0) throw ValidationError("top_p must be in (0, 1]");
  if (top_k < 1) throw ValidationError("top_k must be >= 1");
  if (temperature <= 0.0) throw ValidationError("temperature must be > 0");
}

void RasParams::validate() const {
  if (top_k < 1) throw ValidationError("top_k must be >= 1");
  if (top_p <= 0.0 || top_p > 1.0) throw ValidationError("top_p must be in (0, 1]");
  if (window < 1) throw ValidationError("window must be >= 1");
  if (penalty <= 0.0 || penalty > 1.0) throw ValidationError("penalty must be in (0, 1]");
}

std::vector<double> apply_temperature(std::vector<double> probs, double temperature) {
  if (temperature <= 0.0) throw ValidationError("temperature must be > 0");
  if (temperature == 1.0) return probs;

  const double inv_t = 1.0 / temperature;
  double total = 0.0;
  for (double& p : probs) {
    p = p > 0.0 ? std::pow(p, inv_t) : 0.0;
    total += p;
  }
  if (total <= 0.0) throw ValidationError("degenerate distribution");
  for (double& p : probs) p /= total;
  return probs;
}

namespace {

// Indices sorted by descending probability, ties by lower token id.
std::vector<std::int32_t> sorted_by_prob(std::span<const double> probs) {
  std::vector<std::int32_t> idx(probs.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::int32_t a, std::int32_t b) {
    return probs[a] > probs[b];
  });
  return idx;
}

}  // namespace

std::vector<double> filter_top_k(std::vector<double> probs, std::int32_t k) {
  if (k < 1) throw ValidationError("top_k must be >= 1");
  if (static_cast<std::size_t>(k) >= probs.size()) return probs;

  std::vector<std::int32_t> idx = sorted_by_prob(probs);
  double kept = 0.0;
  for (std::int32_t i = 0; i < k; ++i) kept += probs[idx[i]];
  if (kept <= 0.0) throw ValidationError("degenerate distribution");

  std::vector<double> out(probs.size(), 0.0);
  for (std::int32_t i = 0; i < k; ++i) out[idx[i]] = probs[idx[i]] / kept;
  return out;
}

namespace {

// Number of leading tokens (in descending-probability order) whose
// cumulative mass reaches v.
std::size_t nucleus_cut(std::span<const double> probs,
                        const std::vector<std::int32_t>& order, double v) {
  double acc = 0.0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    acc += probs[order[i]];
    if (acc >= v) return i + 1;
  }
  // Total mass fell short of v through rounding: the nucleus is the support.
  return order.size();
}

}  // namespace

std::vector<double> nucleus_filter(std::vector<double> probs, double v) {
  if (v <= 0.0 || v > 1.0) throw ValidationError("top_p must be in (0, 1]");
  std::vector<std::int32_t> order = sorted_by_prob(probs);
  if (probs.empty() || probs[order[0]] <= 0.0) {
    throw ValidationError("degenerate distribution");
  }
  if (v == 1.0) return probs;  // threshold saturates: full support
  const std::size_t cut = nucleus_cut(probs, order, v);

  double kept = 0.0;
  for (std::size_t i = 0; i < cut; ++i) kept += probs[order[i]];
  std::vector<double> out(probs.size(), 0.0);
  for (std::size_t i = 0; i < cut; ++i) out[order[i]] = probs[order[i]] / kept;
  return out;
}

TokenId nucleus_sample(std::span<const double> probs, double v, Rng& rng) {
  if (v <= 0.0 || v > 1.0) throw ValidationError("top_p must be in (0, 1]");
  std::vector<std::int32_t> order = sorted_by_prob(probs);
  if (probs.empty() || probs[order[0]] <= 0.0) {
    throw ValidationError("degenerate distribution");
  }
  const std::size_t cut = nucleus_cut(probs, order, v);

  double mass = 0.0;
  for (std::size_t i = 0; i < cut; ++i) mass += probs[order[i]];
  const double u = rng.next_double() * mass;
  double acc = 0.0;
  for (std::size_t i = 0; i < cut; ++i) {
    acc += probs[order[i]];
    if (u < acc) return order[i];
  }
  return order[cut - 1];
}

std::map<TokenId, double> eas_penalties(const EasState& state, const EasParams& params) {
  std::map<TokenId, double> raw;
  for (const MemoryEntry& e : state.entries) {
    raw[e.token] += params.alpha * (1.0 / (1.0 + e.rank)) * std::pow(params.beta, e.age);
  }
  std::map<TokenId, double> out;
  for (const auto& [token, sum] : raw) {
    const double pi = std::min(params.gamma, sum);
    if (pi > 0.0) out.emplace(token, pi);
  }
  return out;
}

TokenId eas_step(const NextTokenModel& model, std::span<const TokenId> prefix,
                 EasState& state, const EasParams& params, Rng& rng) {
  params.validate();

  std::vector<double> scores =
      filter_top_k(apply_temperature(model.dist(prefix), params.temperature),
                   params.top_k);

  const std::map<TokenId, double> penalties = eas_penalties(state, params);
  if (!penalties.empty()) {
    std::vector<double> adjusted = scores;
    for (const auto& [token, pi] : penalties) {
      adjusted[token] = std::max(adjusted[token] - pi, 0.0);
    }
    const double total = std::accumulate(adjusted.begin(), adjusted.end(), 0.0);
    if (total > 0.0) {
      for (double& p : adjusted) p /= total;
      scores = std::move(adjusted);
    }
    // total == 0 means the penalties wiped the whole support; fall back to
    // the unpenalized scores so the step still yields a valid sample.
  }

  const TokenId sampled = nucleus_sample(scores, params.top_p, rng);

  // Age the memory, evicting entries past the window.
  std::vector<MemoryEntry> survivors;
  survivors.reserve(state.entries.size());
  for (MemoryEntry e : state.entries) {
    if (e.age + 1 <= params.window) {
      e.age += 1;
      survivors.push_back(e);
    }
  }
  state.entries = std::move(survivors);

  // Insert the new cluster: the k_e most probable surviving tokens of the
  // adjusted distribution (positive mass only), then the sample if absent.
  std::vector<std::int32_t> order = sorted_by_prob(scores);
  std::vector<TokenId> cluster;
  for (std::int32_t id : order) {
    if (scores[id] <= 0.0 || cluster.size() >= static_cast<std::size_t>(params.cluster_k))
      break;
    cluster.push_back(id);
  }
  if (std::find(cluster.begin(), cluster.end(), sampled) == cluster.end()) {
    cluster.push_back(sampled);
  }
  for (std::size_t r = 0; r < cluster.size(); ++r) {
    state.entries.push_back(
        MemoryEntry{cluster[r], static_cast<std::int32_t>(r + 1), 0});
  }
  return sampled;
}

EasGeneration eas_generate(const NextTokenModel& model, std::span<const TokenId> prefix,
                           std::int32_t n_tokens, const EasParams& params, Rng& rng,
                           EasState state, std::optional<TokenId> eos) {
  if (n_tokens < 1) throw ValidationError("n_tokens must be >= 1");

  std::vector<TokenId> context(prefix.begin(), prefix.end());
  EasGeneration out;
  out.tokens.reserve(n_tokens);
  out.state = std::move(state);
  for (std::int32_t t = 0; t < n_tokens; ++t) {
    const TokenId tok = eas_step(model, context, out.state, params, rng);
    out.tokens.push_back(tok);
    context.push_back(tok);
    if (eos && tok == *eos) break;
  }
  return out;
}

std::vector<TokenId> baseline_topk_generate(const NextTokenModel& model,
                                            std::span<const TokenId> prefix,
                                            std::int32_t n_tokens, std::int32_t k,
                                            double temperature, Rng& rng) {
  if (n_tokens < 1) throw ValidationError("n_tokens must be >= 1");

  std::vector<TokenId> context(prefix.begin(), prefix.end());
  std::vector<TokenId> out;
  out.reserve(n_tokens);
  for (std::int32_t t = 0; t < n_tokens; ++t) {
    std::vector<double> probs =
        filter_top_k(apply_temperature(model.dist(context), temperature), k);
    const double u = rng.next_double();
    double acc = 0.0;
    TokenId tok = -1;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      if (probs[i] <= 0.0) continue;
      tok = static_cast<TokenId>(i);
      acc += probs[i];
      if (u < acc) break;
    }
    if (tok < 0) throw ValidationError("degenerate distribution");
    out.push_back(tok);
    context.push_back(tok);
  }
  return out;
}

std::vector<double> windowed_penalty_adjust(std::vector<double> probs,
                                            std::span<const TokenId> window_tokens,
                                            double penalty) {
  if (penalty <= 0.0 || penalty > 1.0) throw ValidationError("penalty must be in (0, 1]");
  if (penalty == 1.0 || window_tokens.empty()) return probs;

  std::vector<bool> in_window(probs.size(), false);
  bool any = false;
  for (TokenId t : window_tokens) {
    if (t >= 0 && static_cast<std::size_t>(t) < probs.size() && !in_window[t]) {
      in_window[t] = true;
      any = true;
    }
  }
  if (!any) return probs;

  double total = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (in_window[i]) probs[i] *= penalty;
    total += probs[i];
  }
  if (total <= 0.0) throw ValidationError("degenerate distribution");
  for (double& p : probs) p /= total;
  return probs;
}

TokenId RasSampler::step(const NextTokenModel& model, std::span<const TokenId> context,
                         Rng& rng) {
  params_.validate();
  const std::size_t lookback =
      std::min<std::size_t>(context.size(), static_cast<std::size_t>(params_.window));
  std::span<const TokenId> window = context.subspan(context.size() - lookback);

  std::vector<double> probs =
      filter_top_k(windowed_penalty_adjust(model.dist(context), window, params_.penalty),
                   params_.top_k);
  return nucleus_sample(probs, params_.top_p, rng);
}

std::vector<TokenId> windowed_penalty_generate(const NextTokenModel& model,
                                               std::span<const TokenId> prefix,
                                               std::int32_t n_tokens,
                                               const RasParams& params, Rng& rng) {
  if (n_tokens < 1) throw ValidationError("n_tokens must be >= 1");
  params.validate();

  RasSampler sampler(params);
  std::vector<TokenId> context(prefix.begin(), prefix.end());
  std::vector<TokenId> out;
  out.reserve(n_tokens);
  for (std::int32_t t = 0; t < n_tokens; ++t) {
    const TokenId tok = sampler.step(model, context, rng);
    out.push_back(tok);
    context.push_back(tok);
  }
  return out;
}

}  // namespace guidec
