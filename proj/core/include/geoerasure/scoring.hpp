#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "geoerasure/distributions.hpp"

namespace geoerasure {

/// Log-probability (nats) of one token given everything before it.
struct TokenScore {
  std::string token_text;
  double logprob = 0.0;

  bool operator==(const TokenScore&) const = default;
};

/// Chain-rule score of `continuation` appended to `prompt`.
/// total_logprob is the sum of the token log-probabilities.
struct ContinuationScore {
  std::string prompt;
  std::string continuation;
  std::vector<TokenScore> token_scores;
  double total_logprob = 0.0;
};

enum class BackendKind { mock, wire_client };

std::string_view to_string(BackendKind kind);

struct BackendDescriptor {
  BackendKind backend_kind = BackendKind::mock;
  std::string model_label;
  bool supports_temperature = false;
  bool supports_full_logits = false;
  /// Free-form note on how the serving side conditions the first token
  /// (e.g. whether a BOS token is prepended). Recorded in reports.
  std::string bos_convention;
};

struct ScoreRequest {
  std::string prompt;
  std::string continuation;
  double temperature = 1.0;
};

/// Anything that maps (prompt, continuation, temperature) to per-token
/// log-probabilities. Implementations must be safe to call concurrently.
///
/// The public entry points validate preconditions and check the returned
/// scores; implementations only provide the raw scoring.
class ScoringBackend {
 public:
  virtual ~ScoringBackend() = default;

  virtual const BackendDescriptor& descriptor() const = 0;

  /// Throws ContractError on an empty continuation, DomainError on
  /// temperature <= 0 and CapabilityError when temperature != 1 is unsupported.
  ContinuationScore score(const ScoreRequest& request) const;

  /// Order-preserving batch scoring.
  std::vector<ContinuationScore> score_batch(std::span<const ScoreRequest> requests) const;

 protected:
  virtual ContinuationScore do_score(const ScoreRequest& request) const = 0;
  virtual std::vector<ContinuationScore> do_score_batch(std::span<const ScoreRequest> requests) const;

 private:
  void check_request(const ScoreRequest& request) const;
  static void check_result(const ScoreRequest& request, ContinuationScore& result);
};

ContinuationScore score_continuation(const ScoringBackend& backend, std::string_view prompt,
                                     std::string_view continuation, double temperature = 1.0);

/// Total log-probability of `text` with no preceding context.
double sequence_logprob(const ScoringBackend& backend, std::string_view text,
                        double temperature = 1.0);

/// Candidate separator placed between a prompt and a country name.
inline constexpr std::string_view kContinuationSeparator = " ";

/// Per-country log of the alias-summed mass sum_a p(prompt + " " + alias).
/// Conditioned on the prompt, so these are log p(alias | prompt) sums.
std::vector<double> country_log_masses(const ScoringBackend& backend, std::string_view prompt,
                                       const CandidateSet& candidates, double temperature = 1.0);

/// Distribution over `candidates` obtained by summing alias probabilities and
/// normalizing over the candidate set.
ProbDist country_distribution(const ScoringBackend& backend, std::string_view prompt,
                              const CandidateSetPtr& candidates, double temperature = 1.0);

/// exp(-(sum of token logprobs) / (token count)) over all texts.
double perplexity(const ScoringBackend& backend, std::span<const std::string> texts,
                  double temperature = 1.0);

/// Numerically stable log(sum(exp(values))). Returns -inf for an empty span.
double log_sum_exp(std::span<const double> values);

}  // namespace geoerasure
