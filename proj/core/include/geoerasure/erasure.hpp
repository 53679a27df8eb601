#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "geoerasure/distributions.hpp"

namespace geoerasure {

// All logarithms are natural; ER and KL are in nats.

/// Countries whose ground-truth probability exceeds the predicted one by more
/// than `threshold_r`. Members are candidate indices in ascending order.
struct ErasureSet {
  double threshold_r = 0.0;
  std::vector<std::size_t> members;
  std::vector<double> ratios;  // parallel to members, each > threshold_r

  bool empty() const noexcept { return members.empty(); }
  std::size_t size() const noexcept { return members.size(); }
  bool contains(std::size_t index) const;
  std::vector<std::string> names(const CandidateSet& candidates) const;
};

/// Requires r > 1. Throws ContractError on mismatched candidate sets or r <= 1,
/// DivisionByZeroError when p is zero where p_true is positive.
ErasureSet erasure_set(const ProbDist& p_true, const ProbDist& p, double r);

/// Sum over the erasure set of p_true_i * ln(p_true_i / p_i). Accepts any
/// r >= 0 so the r -> 0 limit (KL) is reachable.
double erasure(const ProbDist& p_true, const ProbDist& p, double r);

/// KL(p_true || p). Terms with p_true_i = 0 contribute 0; throws DomainError
/// when p_i = 0 < p_true_i.
double kl(const ProbDist& p_true, const ProbDist& p);

/// The KL terms left out of the erasure set at threshold r. Together with
/// erasure() this partitions kl().
double erasure_complement(const ProbDist& p_true, const ProbDist& p, double r);

/// A prediction for one prompt.
struct PromptPrediction {
  std::string prompt;
  ProbDist dist;
};

/// Arithmetic mean of the per-prompt distributions.
ProbDist aggregate_uniform(std::span<const PromptPrediction> predictions);

/// Mean weighted by the model's prompt probabilities, normalized over the
/// prompt set (max-subtracted before exponentiation).
ProbDist aggregate_model(std::span<const PromptPrediction> predictions,
                         std::span<const double> prompt_logprobs);

/// Normalized exp(logprobs) with max-subtraction.
std::vector<double> prompt_weights(std::span<const double> prompt_logprobs);

enum class ChooseRMode { median_of_er, er_of_aggregate };

struct RSweepRow {
  int r = 0;
  double er = 0.0;         // median ER (or ER of the uniform aggregate)
  double kl = 0.0;         // median KL (or KL of the uniform aggregate)
  double er_p25 = 0.0;
  double er_p75 = 0.0;
  double median_set_size = 0.0;
};

struct ChooseRResult {
  int r = 0;
  std::vector<RSweepRow> table;
};

/// Smallest integer r in [r_min, r_max] minimizing |ER^r - KL| where both are
/// medians over prompts (default) or evaluated on the uniform aggregate.
ChooseRResult choose_r(std::span<const PromptPrediction> predictions, const ProbDist& p_true,
                       int r_min = 2, int r_max = 20,
                       ChooseRMode mode = ChooseRMode::median_of_er);

/// Linear-interpolated quantile (q in [0, 1]) of unsorted values.
double quantile(std::vector<double> values, double q);

}  // namespace geoerasure
