#include "geoerasure/temperature.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <numeric>
#include <ostream>

#include <nlohmann/json.hpp>

#include "geoerasure/detail/parallel.hpp"
#include "geoerasure/erasure.hpp"
#include "geoerasure/error.hpp"
#include "geoerasure/report.hpp"
#include "csv.hpp"

namespace geoerasure {

namespace {

void check_tau(double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw DomainError("temperature must be a positive number");
}

// a is preferred over b: lower value, then closer to 1, then smaller tau.
bool better(double a_tau, double a_value, double b_tau, double b_value) {
  if (a_value != b_value) return a_value < b_value;
  const double da = std::abs(a_tau - 1.0);
  const double db = std::abs(b_tau - 1.0);
  if (da != db) return da < db;
  return a_tau < b_tau;
}

std::vector<double> build_grid(const TauSearchOptions& options) {
  if (!(options.lower > 0.0) || !std::isfinite(options.upper) || !(options.upper > options.lower)) {
    throw ContractError("temperature search interval must satisfy 0 < lower < upper");
  }
  if (!(options.grid_step > 0.0) || !(options.tolerance > 0.0)) {
    throw ContractError("grid step and tolerance must be positive");
  }
  const double span = options.upper - options.lower;
  const auto steps = static_cast<std::size_t>(std::floor(span / options.grid_step + 1e-9));
  std::vector<double> grid;
  grid.reserve(steps + 3);
  for (std::size_t k = 0; k <= steps; ++k) {
    double tau = options.lower + static_cast<double>(k) * options.grid_step;
    if (std::abs(tau - 1.0) < options.grid_step * 1e-6) tau = 1.0;
    grid.push_back(tau);
  }
  if (options.upper - grid.back() > options.grid_step * 1e-6) grid.push_back(options.upper);
  if (options.lower <= 1.0 && 1.0 <= options.upper &&
      std::find(grid.begin(), grid.end(), 1.0) == grid.end()) {
    grid.insert(std::upper_bound(grid.begin(), grid.end(), 1.0), 1.0);
  }
  return grid;
}

constexpr std::size_t kRefinedCells = 3;

}  // namespace

ProbDist rescale(const CandidateSetPtr& candidates, std::span<const double> log_masses, double tau) {
  check_tau(tau);
  if (log_masses.size() != candidates->size()) {
    throw ContractError("rescale: one log-mass per candidate required");
  }
  std::vector<double> scaled(log_masses.size());
  for (std::size_t i = 0; i < scaled.size(); ++i) {
    if (!std::isfinite(log_masses[i])) throw DomainError("rescale: log-masses must be finite");
    scaled[i] = log_masses[i] / tau;
  }
  return ProbDist::from_log_masses(candidates, scaled);
}

std::string_view to_string(TemperatureMode mode) {
  return mode == TemperatureMode::exact ? "exact" : "aggregate_rescale";
}

std::string_view to_string(TemperatureObjective objective) {
  return objective == TemperatureObjective::aggregate_er ? "aggregate_er" : "mean_prompt_er";
}

TauCurve minimize_tau(const std::function<double(double)>& objective, const TauSearchOptions& options) {
  TauCurve curve;
  curve.tau_values = build_grid(options);
  curve.er_values.assign(curve.tau_values.size(), 0.0);
  detail::parallel_for(curve.tau_values.size(), options.workers, [&](std::size_t k) {
    curve.er_values[k] = objective(curve.tau_values[k]);
  });

  const auto& tau = curve.tau_values;
  const auto& value = curve.er_values;
  const std::size_t n = tau.size();
  std::size_t best = 0;
  for (std::size_t k = 1; k < n; ++k) {
    if (better(tau[k], value[k], tau[best], value[best])) best = k;
  }
  curve.tau_star = tau[best];
  curve.er_at_star = value[best];
  const auto one = std::find(tau.begin(), tau.end(), 1.0);
  curve.er_at_one = one != tau.end() ? value[one - tau.begin()] : objective(1.0);

  // The objective jumps where countries cross the threshold, so the best
  // grid cell is not always the one holding the minimum. Refine a few of
  // the lowest local minima.
  std::vector<std::size_t> minima;
  for (std::size_t k = 0; k < n; ++k) {
    const bool left = k == 0 || value[k] <= value[k - 1];
    const bool right = k + 1 == n || value[k] <= value[k + 1];
    if (left && right) minima.push_back(k);
  }
  std::sort(minima.begin(), minima.end(), [&](std::size_t a, std::size_t b) {
    return better(tau[a], value[a], tau[b], value[b]);
  });
  if (minima.size() > kRefinedCells) minima.resize(kRefinedCells);

  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  for (const auto k : minima) {
    double a = tau[k == 0 ? 0 : k - 1];
    double b = tau[k + 1 == n ? n - 1 : k + 1];
    double best_tau = tau[k];
    double best_value = value[k];
    auto probe = [&](double t) {
      const double v = objective(t);
      if (better(t, v, best_tau, best_value)) {
        best_tau = t;
        best_value = v;
      }
      return v;
    };
    double c = b - g * (b - a);
    double d = a + g * (b - a);
    double fc = probe(c);
    double fd = probe(d);
    while (b - a > options.tolerance) {
      if (fc <= fd) {
        b = d;
        d = c;
        fd = fc;
        c = b - g * (b - a);
        fc = probe(c);
      } else {
        a = c;
        c = d;
        fc = fd;
        d = a + g * (b - a);
        fd = probe(d);
      }
    }
    probe(0.5 * (a + b));
    if (better(best_tau, best_value, curve.tau_star, curve.er_at_star)) {
      curve.tau_star = best_tau;
      curve.er_at_star = best_value;
    }
  }

  // On a flat stretch (typically ER = 0) the preferred point is its edge
  // nearest 1, which usually falls between grid points. Bisect towards the
  // grid neighbour on the side of 1; every accepted point is no worse and
  // closer to 1.
  if (curve.tau_star != 1.0) {
    const bool above = curve.tau_star > 1.0;
    const auto it = above ? std::lower_bound(tau.begin(), tau.end(), curve.tau_star)
                          : std::upper_bound(tau.begin(), tau.end(), curve.tau_star);
    const bool has_neighbour = above ? it != tau.begin() : it != tau.end();
    if (has_neighbour) {
      double outside = above ? *std::prev(it) : *it;
      double inside = curve.tau_star;
      double inside_value = curve.er_at_star;
      if (objective(outside) > inside_value) {
        for (int step = 0; step < 60 && std::abs(inside - outside) > 1e-12; ++step) {
          const double mid = 0.5 * (inside + outside);
          const double v = objective(mid);
          if (v <= inside_value) {
            inside = mid;
            inside_value = v;
          } else {
            outside = mid;
          }
        }
        curve.tau_star = inside;
        curve.er_at_star = inside_value;
      }
    }
  }
  return curve;
}

namespace {

double objective_from(std::span<const PromptPrediction> predictions,
                      std::span<const double> prompt_logprobs, const ProbDist& p_true, double r,
                      TemperatureObjective objective) {
  if (objective == TemperatureObjective::aggregate_er) {
    const auto agg = prompt_logprobs.empty() ? aggregate_uniform(predictions)
                                             : aggregate_model(predictions, prompt_logprobs);
    return erasure(p_true, agg, r);
  }
  double sum = 0.0;
  for (const auto& pred : predictions) sum += erasure(p_true, pred.dist, r);
  return sum / static_cast<double>(predictions.size());
}

}  // namespace

TauCurve optimize_tau(const TemperatureInputs& inputs, const ProbDist& p_true, double r,
                      const TauSearchOptions& options, TemperatureObjective objective) {
  if (inputs.log_masses.empty()) throw ContractError("optimize_tau: no prompts");
  if (!inputs.prompt_logprobs.empty() && inputs.prompt_logprobs.size() != inputs.log_masses.size()) {
    throw ContractError("optimize_tau: one prompt log-probability per prompt required");
  }
  const auto& candidates = p_true.candidate_ptr();
  auto f = [&](double tau) {
    std::vector<PromptPrediction> preds;
    preds.reserve(inputs.log_masses.size());
    for (const auto& lm : inputs.log_masses) preds.push_back({{}, rescale(candidates, lm, tau)});
    return objective_from(preds, inputs.prompt_logprobs, p_true, r, objective);
  };
  auto curve = minimize_tau(f, options);
  curve.r = r;
  curve.mode = TemperatureMode::aggregate_rescale;
  curve.objective = objective;
  return curve;
}

TauCurve optimize_tau_exact(const ScoringBackend& backend, std::span<const std::string> prompts,
                            const ProbDist& p_true, double r, const TauSearchOptions& options,
                            TemperatureObjective objective) {
  if (prompts.empty()) throw ContractError("optimize_tau: no prompts");
  if (!backend.descriptor().supports_temperature) {
    throw CapabilityError("backend '" + backend.descriptor().model_label +
                          "' does not support temperature");
  }
  const auto& candidates = p_true.candidate_ptr();
  auto f = [&](double tau) {
    std::vector<PromptPrediction> preds;
    std::vector<double> logprobs;
    preds.reserve(prompts.size());
    for (const auto& prompt : prompts) {
      preds.push_back({prompt, country_distribution(backend, prompt, candidates, tau)});
      if (objective == TemperatureObjective::aggregate_er) {
        logprobs.push_back(sequence_logprob(backend, prompt, tau));
      }
    }
    return objective_from(preds, logprobs, p_true, r, objective);
  };
  auto curve = minimize_tau(f, options);
  curve.r = r;
  curve.mode = TemperatureMode::exact;
  curve.objective = objective;
  return curve;
}

std::vector<double> tau_perplexity_trace(const ScoringBackend& backend,
                                         std::span<const std::string> texts,
                                         std::span<const double> tau_values, std::size_t workers) {
  if (!backend.descriptor().supports_temperature) {
    throw CapabilityError("backend '" + backend.descriptor().model_label +
                          "' does not support temperature");
  }
  for (const double tau : tau_values) check_tau(tau);
  std::vector<double> out(tau_values.size());
  detail::parallel_for(tau_values.size(), workers,
                       [&](std::size_t k) { out[k] = perplexity(backend, texts, tau_values[k]); });
  return out;
}

void attach_perplexity(TauCurve& curve, const ScoringBackend& backend,
                       std::span<const std::string> texts, std::size_t workers) {
  try {
    curve.perplexity_values = tau_perplexity_trace(backend, texts, curve.tau_values, workers);
    curve.perplexity_note.clear();
  } catch (const CapabilityError& e) {
    curve.perplexity_values.reset();
    curve.perplexity_note = e.what();
  }
}

void write_tau_curve(std::ostream& out, const TauCurve& curve) {
  using nlohmann::ordered_json;
  auto rounded = [](std::span<const double> values) {
    ordered_json arr = ordered_json::array();
    for (const double v : values) arr.push_back(stable_round(v));
    return arr;
  };
  ordered_json doc;
  doc["schema"] = "geoerasure.tau_curve/1";
  doc["mode"] = to_string(curve.mode);
  doc["objective"] = to_string(curve.objective);
  doc["r"] = curve.r;
  doc["tau_star"] = stable_round(curve.tau_star);
  doc["er_at_star"] = stable_round(curve.er_at_star);
  doc["er_at_one"] = stable_round(curve.er_at_one);
  doc["tau_values"] = rounded(curve.tau_values);
  doc["er_values"] = rounded(curve.er_values);
  if (curve.perplexity_values) {
    doc["perplexity_values"] = rounded(*curve.perplexity_values);
  } else {
    doc["perplexity_values"] = nullptr;
    doc["perplexity_note"] = curve.perplexity_note;
  }
  out << doc.dump(2) << '\n';
}

void write_tau_table(std::ostream& out, const TauCurve& curve) {
  auto num = [](double v) { return detail::csv_number(v); };
  const bool ppl = curve.perplexity_values.has_value();
  out << (ppl ? "tau,er,perplexity\n" : "tau,er\n");
  for (std::size_t k = 0; k < curve.tau_values.size(); ++k) {
    out << num(curve.tau_values[k]) << ',' << num(curve.er_values[k]);
    if (ppl) out << ',' << num((*curve.perplexity_values)[k]);
    out << '\n';
  }
}

}  // namespace geoerasure
