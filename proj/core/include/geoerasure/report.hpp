#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "geoerasure/distributions.hpp"
#include "geoerasure/erasure.hpp"
#include "geoerasure/prompts.hpp"
#include "geoerasure/scoring.hpp"

namespace geoerasure {

/// Raw scores collected for one prompt; everything in a report is computed
/// from these.
struct ScoredPrompt {
  std::string prompt;
  double prompt_logprob = 0.0;
  std::vector<double> log_masses;  // per candidate, log sum over aliases
};

struct PromptResult {
  std::string prompt;
  double prompt_logprob = 0.0;
  std::vector<double> log_masses;
  ProbDist dist;
  double er = 0.0;
  ErasureSet erasure_set;
};

/// Five-number summary of per-prompt ER.
struct BoxplotStats {
  double min = 0.0;
  double p25 = 0.0;
  double median = 0.0;
  double p75 = 0.0;
  double max = 0.0;
};

struct BootstrapInterval {
  double lower = 0.0;
  double upper = 0.0;
  double confidence = 0.95;
  std::size_t resamples = 0;
  std::uint64_t seed = 0;
  bool significant = false;  // lower bound > 0
};

struct ReportMetadata {
  BackendDescriptor backend;
  std::string ground_truth_label;
  std::uint64_t seed = 0;
  double temperature = 1.0;
  /// Input name -> provenance string (file name and content hash). Filled by
  /// the CLI; empty for programmatic reports.
  std::vector<std::pair<std::string, std::string>> inputs;
};

struct ErasureReport {
  double r = 3.0;
  ProbDist ground_truth;
  std::vector<PromptResult> prompts;
  ProbDist aggregate_uniform;
  ProbDist aggregate_model;
  double average_er = 0.0;
  double aggregate_uniform_er = 0.0;
  double aggregate_model_er = 0.0;
  ErasureSet aggregate_uniform_set;
  ErasureSet aggregate_model_set;
  BoxplotStats dispersion;
  std::vector<double> per_country_ratios;  // p_true / p_agg_model, candidate order
  BootstrapInterval average_er_ci;
  ReportMetadata metadata;

  const CandidateSet& candidates() const { return ground_truth.candidates(); }
  std::vector<PromptPrediction> predictions() const;
  std::vector<double> prompt_logprobs() const;
};

struct ReportOptions {
  std::uint64_t seed = 0;
  std::size_t bootstrap_resamples = 10000;
  double confidence = 0.95;
  std::size_t workers = 1;
};

/// Prompt log-probability and candidate log-masses for every prompt, scored
/// in parallel. Throws ReportError listing every prompt that failed.
std::vector<ScoredPrompt> score_prompts(const ScoringBackend& backend, const PromptSet& prompts,
                                        const CandidateSet& candidates, std::size_t workers = 1);

/// Scores every prompt (in parallel across `options.workers`) and assembles
/// the report. Throws ReportError listing every prompt that failed.
ErasureReport build_report(const ScoringBackend& backend, const PromptSet& prompts,
                           const CandidateSetPtr& candidates, const GroundTruth& ground_truth,
                           double r, const ReportOptions& options = {});

/// Deterministic report assembly from an already collected score matrix.
ErasureReport assemble_report(std::span<const ScoredPrompt> scored, const ProbDist& ground_truth,
                              double r, const ReportOptions& options = {},
                              ReportMetadata metadata = {});

/// Percentile bootstrap interval for the mean of `values`.
BootstrapInterval bootstrap_mean_ci(std::span<const double> values, std::size_t resamples,
                                    std::uint64_t seed, double confidence = 0.95);

/// For each candidate, the number of reports whose model-aggregate erasure
/// set contains it. Reports must share r and candidate set.
std::vector<std::size_t> cross_model_erasure(std::span<const ErasureReport> reports);

/// One row of the cross-model comparison table.
struct ComparisonRow {
  std::string country;
  std::optional<double> gdp_per_capita;
  std::size_t model_count = 0;
};

/// Countries erased by at least one report, sorted by GDP per capita
/// descending (countries without GDP last, then by name).
std::vector<ComparisonRow> compare_reports(std::span<const ErasureReport> reports,
                                           const std::map<std::string, double>& gdp);

void write_report(std::ostream& out, const ErasureReport& report);
ErasureReport read_report(std::istream& in);
ErasureReport read_report(const std::filesystem::path& path);

/// `country,ratio,erased_at_r` against the model aggregate.
void write_ratio_table(std::ostream& out, const ErasureReport& report);
/// `country,ratio,erased` for choropleth tools.
void write_map_table(std::ostream& out, const ErasureReport& report);
/// `statistic,value` rows: min, p25, median, p75, max.
void write_boxplot_table(std::ostream& out, const ErasureReport& report);
void write_comparison_table(std::ostream& out, std::span<const ComparisonRow> rows);

/// Rounds to 12 significant digits so serialized reports do not depend on
/// last-ulp differences between math libraries.
double stable_round(double value);

}  // namespace geoerasure
