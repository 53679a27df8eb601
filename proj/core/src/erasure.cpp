#include "geoerasure/erasure.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "geoerasure/error.hpp"

namespace geoerasure {

bool ErasureSet::contains(std::size_t index) const {
  return std::binary_search(members.begin(), members.end(), index);
}

std::vector<std::string> ErasureSet::names(const CandidateSet& candidates) const {
  std::vector<std::string> out;
  out.reserve(members.size());
  for (const auto i : members) out.push_back(candidates.name(i));
  return out;
}

namespace {

/// p_true_i / p_i with the conventions shared by every metric: 0 when
/// p_true_i = 0, an error when only p_i is 0.
double checked_ratio(const ProbDist& p_true, const ProbDist& p, std::size_t i) {
  if (p_true[i] == 0.0) return 0.0;
  if (p[i] == 0.0) throw DivisionByZeroError(p.candidates().name(i));
  return p_true[i] / p[i];
}

double kl_term(const ProbDist& p_true, const ProbDist& p, std::size_t i) {
  if (p_true[i] == 0.0) return 0.0;
  return p_true[i] * std::log(checked_ratio(p_true, p, i));
}

void check_threshold(double r) {
  if (!(r >= 0.0) || std::isnan(r)) throw ContractError("threshold r must be >= 0");
}

}  // namespace

ErasureSet erasure_set(const ProbDist& p_true, const ProbDist& p, double r) {
  require_same_candidates(p_true, p, "erasure_set");
  if (!(r > 1.0)) throw ContractError("erasure set threshold r must exceed 1");
  ErasureSet set;
  set.threshold_r = r;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double q = checked_ratio(p_true, p, i);
    if (q > r) {
      set.members.push_back(i);
      set.ratios.push_back(q);
    }
  }
  return set;
}

double erasure(const ProbDist& p_true, const ProbDist& p, double r) {
  require_same_candidates(p_true, p, "erasure");
  check_threshold(r);
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (checked_ratio(p_true, p, i) > r) sum += kl_term(p_true, p, i);
  }
  return sum;
}

double erasure_complement(const ProbDist& p_true, const ProbDist& p, double r) {
  require_same_candidates(p_true, p, "erasure_complement");
  check_threshold(r);
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!(checked_ratio(p_true, p, i) > r)) sum += kl_term(p_true, p, i);
  }
  return sum;
}

double kl(const ProbDist& p_true, const ProbDist& p) {
  require_same_candidates(p_true, p, "kl");
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p_true[i] > 0.0 && p[i] == 0.0) {
      throw DomainError("KL undefined: zero predicted probability for '" +
                        p.candidates().name(i) + "'");
    }
    sum += kl_term(p_true, p, i);
  }
  return sum;
}

namespace {

void check_predictions(std::span<const PromptPrediction> predictions, std::string_view op) {
  if (predictions.empty()) throw ContractError(std::string(op) + ": no prompts");
  for (const auto& pred : predictions) require_same_candidates(predictions.front().dist, pred.dist, op);
}

}  // namespace

ProbDist aggregate_uniform(std::span<const PromptPrediction> predictions) {
  check_predictions(predictions, "aggregate_uniform");
  const auto m = predictions.front().dist.size();
  std::vector<double> mean(m, 0.0);
  for (const auto& pred : predictions) {
    for (std::size_t i = 0; i < m; ++i) mean[i] += pred.dist[i];
  }
  const auto n = static_cast<double>(predictions.size());
  for (auto& v : mean) v /= n;
  return ProbDist(predictions.front().dist.candidate_ptr(), std::move(mean));
}

std::vector<double> prompt_weights(std::span<const double> prompt_logprobs) {
  double top = -std::numeric_limits<double>::infinity();
  for (const double l : prompt_logprobs) {
    if (!std::isfinite(l)) throw ContractError("prompt log-probabilities must be finite");
    top = std::max(top, l);
  }
  std::vector<double> weights(prompt_logprobs.size());
  double total = 0.0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    weights[k] = std::exp(prompt_logprobs[k] - top);
    total += weights[k];
  }
  for (auto& w : weights) w /= total;
  return weights;
}

ProbDist aggregate_model(std::span<const PromptPrediction> predictions,
                         std::span<const double> prompt_logprobs) {
  check_predictions(predictions, "aggregate_model");
  if (prompt_logprobs.size() != predictions.size()) {
    throw ContractError("aggregate_model: one log-probability per prompt required");
  }
  const auto weights = prompt_weights(prompt_logprobs);
  const auto m = predictions.front().dist.size();
  std::vector<double> mixed(m, 0.0);
  for (std::size_t k = 0; k < predictions.size(); ++k) {
    for (std::size_t i = 0; i < m; ++i) mixed[i] += weights[k] * predictions[k].dist[i];
  }
  return ProbDist(predictions.front().dist.candidate_ptr(), std::move(mixed));
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw ContractError("quantile of empty sample");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

ChooseRResult choose_r(std::span<const PromptPrediction> predictions, const ProbDist& p_true,
                       int r_min, int r_max, ChooseRMode mode) {
  if (predictions.empty()) throw ContractError("choose_r: no prompts");
  if (r_min > r_max) throw ContractError("choose_r: empty range");
  if (r_min <= 1) throw ContractError("choose_r: candidate r must exceed 1");

  ChooseRResult result;
  double best = std::numeric_limits<double>::infinity();
  if (mode == ChooseRMode::er_of_aggregate) {
    const auto agg = aggregate_uniform(predictions);
    const double divergence = kl(p_true, agg);
    for (int r = r_min; r <= r_max; ++r) {
      const double er = erasure(p_true, agg, r);
      const double size = static_cast<double>(erasure_set(p_true, agg, r).size());
      result.table.push_back(RSweepRow{r, er, divergence, er, er, size});
    }
  } else {
    std::vector<double> kls;
    kls.reserve(predictions.size());
    for (const auto& pred : predictions) kls.push_back(kl(p_true, pred.dist));
    const double median_kl = quantile(kls, 0.5);
    for (int r = r_min; r <= r_max; ++r) {
      std::vector<double> ers;
      std::vector<double> sizes;
      for (const auto& pred : predictions) {
        ers.push_back(erasure(p_true, pred.dist, r));
        sizes.push_back(static_cast<double>(erasure_set(p_true, pred.dist, r).size()));
      }
      result.table.push_back(RSweepRow{r, quantile(ers, 0.5), median_kl, quantile(ers, 0.25),
                                       quantile(ers, 0.75), quantile(sizes, 0.5)});
    }
  }
  for (const auto& row : result.table) {
    const double gap = std::abs(row.er - row.kl);
    if (gap < best) {
      best = gap;
      result.r = row.r;
    }
  }
  return result;
}

}  // namespace geoerasure
