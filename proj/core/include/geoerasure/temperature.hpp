#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "geoerasure/distributions.hpp"
#include "geoerasure/scoring.hpp"

namespace geoerasure {

/// p_i proportional to exp(log_masses[i] / tau), max-subtracted. Throws
/// DomainError for tau <= 0 or non-finite tau.
ProbDist rescale(const CandidateSetPtr& candidates, std::span<const double> log_masses, double tau);

/// Where tau is applied.
enum class TemperatureMode {
  aggregate_rescale,  // on the candidate log-masses
  exact,              // at every token softmax, by the backend
};

/// What is minimized.
enum class TemperatureObjective {
  mean_prompt_er,  // mean over prompts of ER(p_true, p_tau(.|c))
  aggregate_er,    // ER of the aggregate distribution
};

std::string_view to_string(TemperatureMode mode);
std::string_view to_string(TemperatureObjective objective);

struct TauCurve {
  std::vector<double> tau_values;  // increasing
  std::vector<double> er_values;
  std::optional<std::vector<double>> perplexity_values;
  std::string perplexity_note;  // why the trace is missing, if it is
  double tau_star = 1.0;
  double er_at_star = 0.0;
  double er_at_one = 0.0;
  double r = 3.0;
  TemperatureMode mode = TemperatureMode::aggregate_rescale;
  TemperatureObjective objective = TemperatureObjective::mean_prompt_er;
};

struct TauSearchOptions {
  double lower = 0.25;
  double upper = 4.0;
  double grid_step = 0.005;
  double tolerance = 1e-4;
  std::size_t workers = 1;  // grid points evaluated concurrently
};

/// Minimizes a 1-D objective: dense grid, then golden-section refinement
/// around the best grid cells. Ties go to the tau closest to 1, then the
/// smaller tau. tau = 1 is always evaluated when inside the interval, so the
/// result never exceeds objective(1). Only tau_values, er_values, tau_star,
/// er_at_star and er_at_one are filled.
TauCurve minimize_tau(const std::function<double(double)>& objective,
                      const TauSearchOptions& options = {});

/// Per-prompt candidate log-masses plus the prompt log-probabilities used
/// for the model-weighted aggregate (pass an empty span for uniform weights).
struct TemperatureInputs {
  std::span<const std::vector<double>> log_masses;
  std::span<const double> prompt_logprobs;
};

/// Temperature search in aggregate-rescale mode.
TauCurve optimize_tau(const TemperatureInputs& inputs, const ProbDist& p_true, double r,
                      const TauSearchOptions& options = {},
                      TemperatureObjective objective = TemperatureObjective::mean_prompt_er);

/// Temperature search with tau applied by the backend. Every objective
/// evaluation rescores all prompts. Throws CapabilityError when the backend
/// does not support temperature.
TauCurve optimize_tau_exact(const ScoringBackend& backend, std::span<const std::string> prompts,
                            const ProbDist& p_true, double r, const TauSearchOptions& options = {},
                            TemperatureObjective objective = TemperatureObjective::mean_prompt_er);

/// Perplexity of `texts` at each tau. Throws CapabilityError when the
/// backend does not support temperature.
std::vector<double> tau_perplexity_trace(const ScoringBackend& backend,
                                         std::span<const std::string> texts,
                                         std::span<const double> tau_values,
                                         std::size_t workers = 1);

/// Adds the perplexity trace to `curve`, or records why it is missing.
void attach_perplexity(TauCurve& curve, const ScoringBackend& backend,
                       std::span<const std::string> texts, std::size_t workers = 1);

void write_tau_curve(std::ostream& out, const TauCurve& curve);
/// `tau,er[,perplexity]` rows for plotting.
void write_tau_table(std::ostream& out, const TauCurve& curve);

}  // namespace geoerasure
