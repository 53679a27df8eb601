#include "geoerasure/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "geoerasure/error.hpp"

namespace geoerasure {

std::string_view to_string(BackendKind kind) {
  return kind == BackendKind::mock ? "mock" : "wire_client";
}

double log_sum_exp(std::span<const double> values) {
  double top = -std::numeric_limits<double>::infinity();
  for (const double v : values) top = std::max(top, v);
  if (!std::isfinite(top)) return top;
  double sum = 0.0;
  for (const double v : values) sum += std::exp(v - top);
  return top + std::log(sum);
}

void ScoringBackend::check_request(const ScoreRequest& request) const {
  if (request.continuation.empty()) throw ContractError("continuation must not be empty");
  if (!(request.temperature > 0.0) || !std::isfinite(request.temperature)) {
    throw DomainError("temperature must be positive and finite");
  }
  if (request.temperature != 1.0 && !descriptor().supports_temperature) {
    throw CapabilityError("backend '" + descriptor().model_label +
                          "' does not support temperature != 1");
  }
}

void ScoringBackend::check_result(const ScoreRequest& request, ContinuationScore& result) {
  if (result.token_scores.empty()) {
    throw BackendError("backend returned no tokens for '" + request.continuation + "'");
  }
  double total = 0.0;
  for (const auto& token : result.token_scores) {
    if (!std::isfinite(token.logprob) || token.logprob > 0.0) {
      throw BackendError("invalid logprob for token '" + token.token_text + "'");
    }
    total += token.logprob;
  }
  result.total_logprob = total;
  result.prompt = request.prompt;
  result.continuation = request.continuation;
}

ContinuationScore ScoringBackend::score(const ScoreRequest& request) const {
  check_request(request);
  auto result = do_score(request);
  check_result(request, result);
  return result;
}

std::vector<ContinuationScore> ScoringBackend::score_batch(
    std::span<const ScoreRequest> requests) const {
  for (const auto& request : requests) check_request(request);
  auto results = do_score_batch(requests);
  if (results.size() != requests.size()) {
    throw BackendError("batch returned " + std::to_string(results.size()) + " results for " +
                       std::to_string(requests.size()) + " requests");
  }
  for (std::size_t i = 0; i < results.size(); ++i) check_result(requests[i], results[i]);
  return results;
}

std::vector<ContinuationScore> ScoringBackend::do_score_batch(
    std::span<const ScoreRequest> requests) const {
  std::vector<ContinuationScore> results;
  results.reserve(requests.size());
  for (const auto& request : requests) results.push_back(do_score(request));
  return results;
}

ContinuationScore score_continuation(const ScoringBackend& backend, std::string_view prompt,
                                     std::string_view continuation, double temperature) {
  return backend.score(ScoreRequest{std::string(prompt), std::string(continuation), temperature});
}

double sequence_logprob(const ScoringBackend& backend, std::string_view text, double temperature) {
  if (text.empty()) throw ContractError("text must not be empty");
  return score_continuation(backend, "", text, temperature).total_logprob;
}

std::vector<double> country_log_masses(const ScoringBackend& backend, std::string_view prompt,
                                       const CandidateSet& candidates, double temperature) {
  std::vector<ScoreRequest> requests;
  std::vector<std::size_t> owner;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    for (const auto& alias : candidates[i].aliases) {
      requests.push_back(ScoreRequest{std::string(prompt),
                                      std::string(kContinuationSeparator) + alias, temperature});
      owner.push_back(i);
    }
  }
  const auto scores = backend.score_batch(requests);

  std::vector<std::vector<double>> per_country(candidates.size());
  for (std::size_t k = 0; k < scores.size(); ++k) {
    per_country[owner[k]].push_back(scores[k].total_logprob);
  }
  std::vector<double> log_masses(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    // Sorting makes the sum independent of alias order.
    std::sort(per_country[i].begin(), per_country[i].end());
    log_masses[i] = log_sum_exp(per_country[i]);
  }
  return log_masses;
}

ProbDist country_distribution(const ScoringBackend& backend, std::string_view prompt,
                              const CandidateSetPtr& candidates, double temperature) {
  if (!candidates || candidates->size() == 0) throw ContractError("candidate set is empty");
  const auto log_masses = country_log_masses(backend, prompt, *candidates, temperature);
  return ProbDist::from_log_masses(candidates, log_masses);
}

double perplexity(const ScoringBackend& backend, std::span<const std::string> texts,
                  double temperature) {
  if (texts.empty()) throw ContractError("perplexity needs at least one text");
  double total = 0.0;
  std::size_t tokens = 0;
  for (const auto& text : texts) {
    if (text.empty()) continue;
    const auto scored = score_continuation(backend, "", text, temperature);
    total += scored.total_logprob;
    tokens += scored.token_scores.size();
  }
  if (tokens == 0) throw ContractError("perplexity needs at least one token");
  return std::exp(-total / static_cast<double>(tokens));
}

}  // namespace geoerasure
