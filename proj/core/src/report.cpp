#include "geoerasure/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

#include "csv.hpp"
#include "geoerasure/detail/parallel.hpp"
#include "geoerasure/detail/random.hpp"
#include "geoerasure/error.hpp"

namespace geoerasure {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {
constexpr std::string_view kReportSchema = "geoerasure.report/1";
}

double stable_round(double value) {
  if (!std::isfinite(value) || value == 0.0) return value == 0.0 ? 0.0 : value;
  char buffer[32];
  std::snprintf(buffer, sizeof buffer, "%.12g", value);
  return std::strtod(buffer, nullptr);
}

std::vector<PromptPrediction> ErasureReport::predictions() const {
  std::vector<PromptPrediction> out;
  out.reserve(prompts.size());
  for (const auto& p : prompts) out.push_back(PromptPrediction{p.prompt, p.dist});
  return out;
}

std::vector<double> ErasureReport::prompt_logprobs() const {
  std::vector<double> out;
  out.reserve(prompts.size());
  for (const auto& p : prompts) out.push_back(p.prompt_logprob);
  return out;
}

BootstrapInterval bootstrap_mean_ci(std::span<const double> values, std::size_t resamples,
                                    std::uint64_t seed, double confidence) {
  if (values.empty()) throw ContractError("bootstrap of empty sample");
  if (resamples == 0) throw ContractError("bootstrap needs at least one resample");
  if (!(confidence > 0.0 && confidence < 1.0)) throw ContractError("confidence must lie in (0, 1)");
  std::mt19937_64 rng(seed);
  std::vector<double> means(resamples);
  const auto n = values.size();
  for (auto& mean : means) {
    double sum = 0.0;
    for (std::size_t k = 0; k < n; ++k) sum += values[detail::uniform_index(rng, n)];
    mean = sum / static_cast<double>(n);
  }
  const double tail = (1.0 - confidence) / 2.0;
  BootstrapInterval ci;
  ci.lower = quantile(means, tail);
  ci.upper = quantile(std::move(means), 1.0 - tail);
  ci.confidence = confidence;
  ci.resamples = resamples;
  ci.seed = seed;
  ci.significant = ci.lower > 0.0;
  return ci;
}

ErasureReport assemble_report(std::span<const ScoredPrompt> scored, const ProbDist& ground_truth,
                              double r, const ReportOptions& options, ReportMetadata metadata) {
  if (scored.empty()) throw ContractError("report needs at least one prompt");
  if (!(r > 1.0)) throw ContractError("auditing requires r > 1");
  const auto& candidates = ground_truth.candidate_ptr();

  std::vector<PromptResult> prompts;
  prompts.reserve(scored.size());
  std::vector<PromptPrediction> predictions;
  std::vector<double> logprobs;
  std::vector<double> per_prompt_er;
  for (const auto& s : scored) {
    if (s.log_masses.size() != candidates->size()) {
      throw ContractError("prompt '" + s.prompt + "' has scores for a different candidate set");
    }
    auto dist = ProbDist::from_log_masses(candidates, s.log_masses);
    const double er = erasure(ground_truth, dist, r);
    auto set = erasure_set(ground_truth, dist, r);
    predictions.push_back(PromptPrediction{s.prompt, dist});
    logprobs.push_back(s.prompt_logprob);
    per_prompt_er.push_back(er);
    prompts.push_back(
        PromptResult{s.prompt, s.prompt_logprob, s.log_masses, std::move(dist), er, std::move(set)});
  }

  auto agg_uniform = aggregate_uniform(predictions);
  auto agg_model = aggregate_model(predictions, logprobs);
  std::vector<double> ratios(candidates->size());
  for (std::size_t i = 0; i < ratios.size(); ++i) ratios[i] = ratio(ground_truth, agg_model, i);

  const double average =
      std::accumulate(per_prompt_er.begin(), per_prompt_er.end(), 0.0) /
      static_cast<double>(per_prompt_er.size());
  const BoxplotStats box{*std::min_element(per_prompt_er.begin(), per_prompt_er.end()),
                         quantile(per_prompt_er, 0.25), quantile(per_prompt_er, 0.5),
                         quantile(per_prompt_er, 0.75),
                         *std::max_element(per_prompt_er.begin(), per_prompt_er.end())};
  auto ci = bootstrap_mean_ci(per_prompt_er, options.bootstrap_resamples, options.seed,
                              options.confidence);
  metadata.ground_truth_label = metadata.ground_truth_label.empty() ? "unlabelled"
                                                                    : metadata.ground_truth_label;
  metadata.seed = options.seed;

  const double uniform_er = erasure(ground_truth, agg_uniform, r);
  const double model_er = erasure(ground_truth, agg_model, r);
  auto uniform_set = erasure_set(ground_truth, agg_uniform, r);
  auto model_set = erasure_set(ground_truth, agg_model, r);
  return ErasureReport{r,
                       ground_truth,
                       std::move(prompts),
                       std::move(agg_uniform),
                       std::move(agg_model),
                       average,
                       uniform_er,
                       model_er,
                       std::move(uniform_set),
                       std::move(model_set),
                       box,
                       std::move(ratios),
                       ci,
                       std::move(metadata)};
}

std::vector<ScoredPrompt> score_prompts(const ScoringBackend& backend, const PromptSet& prompts,
                                        const CandidateSet& candidates, std::size_t workers) {
  std::vector<ScoredPrompt> scored(prompts.size());
  std::vector<std::string> errors(prompts.size());
  detail::parallel_for(prompts.size(), workers, [&](std::size_t k) {
    const auto& text = prompts[k].text;
    try {
      scored[k] = ScoredPrompt{text, sequence_logprob(backend, text),
                               country_log_masses(backend, text, candidates)};
    } catch (const Error& e) {
      errors[k] = e.what();
    }
  });

  std::vector<std::string> failed;
  std::string first_error;
  for (std::size_t k = 0; k < prompts.size(); ++k) {
    if (errors[k].empty()) continue;
    if (first_error.empty()) first_error = errors[k];
    failed.push_back(prompts[k].text);
  }
  if (!failed.empty()) {
    throw ReportError(std::to_string(failed.size()) + " of " + std::to_string(prompts.size()) +
                          " prompts failed (first error: " + first_error + ")",
                      std::move(failed));
  }
  return scored;
}

ErasureReport build_report(const ScoringBackend& backend, const PromptSet& prompts,
                           const CandidateSetPtr& candidates, const GroundTruth& ground_truth,
                           double r, const ReportOptions& options) {
  if (!(r > 1.0)) throw ContractError("auditing requires r > 1");
  if (prompts.empty()) throw ContractError("report needs at least one prompt");
  if (!candidates || !(*candidates == ground_truth.dist.candidates())) {
    throw ContractError("ground truth and candidate set differ");
  }
  const auto scored = score_prompts(backend, prompts, *candidates, options.workers);
  ReportMetadata metadata;
  metadata.backend = backend.descriptor();
  metadata.ground_truth_label = ground_truth.source_label;
  return assemble_report(scored, ground_truth.dist, r, options, std::move(metadata));
}

std::vector<std::size_t> cross_model_erasure(std::span<const ErasureReport> reports) {
  if (reports.empty()) throw ContractError("no reports to compare");
  const auto& first = reports.front();
  for (const auto& report : reports) {
    if (report.r != first.r) throw ContractError("reports use different thresholds r");
    if (!(report.candidates() == first.candidates())) {
      throw ContractError("reports use different candidate sets");
    }
  }
  std::vector<std::size_t> counts(first.candidates().size(), 0);
  for (const auto& report : reports) {
    for (const auto i : report.aggregate_model_set.members) ++counts[i];
  }
  return counts;
}

std::vector<ComparisonRow> compare_reports(std::span<const ErasureReport> reports,
                                           const std::map<std::string, double>& gdp) {
  const auto counts = cross_model_erasure(reports);
  const auto& candidates = reports.front().candidates();
  std::vector<ComparisonRow> rows;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (counts[i] == 0) continue;
    ComparisonRow row{candidates.name(i), std::nullopt, counts[i]};
    if (const auto it = gdp.find(row.country); it != gdp.end()) row.gdp_per_capita = it->second;
    rows.push_back(std::move(row));
  }
  std::sort(rows.begin(), rows.end(), [](const ComparisonRow& a, const ComparisonRow& b) {
    if (a.gdp_per_capita.has_value() != b.gdp_per_capita.has_value()) {
      return a.gdp_per_capita.has_value();
    }
    if (a.gdp_per_capita && *a.gdp_per_capita != *b.gdp_per_capita) {
      return *a.gdp_per_capita > *b.gdp_per_capita;
    }
    return a.country < b.country;
  });
  return rows;
}

namespace {

ordered_json rounded(std::span<const double> values) {
  ordered_json out = ordered_json::array();
  for (const double v : values) out.push_back(stable_round(v));
  return out;
}

ordered_json set_to_json(const ErasureSet& set, const CandidateSet& candidates) {
  ordered_json out = ordered_json::array();
  for (std::size_t k = 0; k < set.members.size(); ++k) {
    ordered_json entry;
    entry["country"] = candidates.name(set.members[k]);
    entry["ratio"] = stable_round(set.ratios[k]);
    out.push_back(std::move(entry));
  }
  return out;
}

ErasureSet set_from_json(const json& j, const CandidateSet& candidates, double r) {
  ErasureSet set;
  set.threshold_r = r;
  std::vector<std::pair<std::size_t, double>> entries;
  for (const auto& entry : j) {
    const auto name = entry.at("country").get<std::string>();
    const auto index = candidates.index_of(name);
    if (!index) throw SchemaError("report erasure set names unknown country '" + name + "'");
    entries.emplace_back(*index, entry.at("ratio").get<double>());
  }
  std::sort(entries.begin(), entries.end());
  for (const auto& [index, q] : entries) {
    set.members.push_back(index);
    set.ratios.push_back(q);
  }
  return set;
}

ordered_json backend_to_json(const BackendDescriptor& d) {
  ordered_json out;
  out["kind"] = std::string(to_string(d.backend_kind));
  out["model_label"] = d.model_label;
  out["supports_temperature"] = d.supports_temperature;
  out["supports_full_logits"] = d.supports_full_logits;
  out["bos_convention"] = d.bos_convention;
  return out;
}

BackendDescriptor backend_from_json(const json& j) {
  BackendDescriptor d;
  d.backend_kind = j.at("kind").get<std::string>() == "mock" ? BackendKind::mock
                                                            : BackendKind::wire_client;
  d.model_label = j.at("model_label").get<std::string>();
  d.supports_temperature = j.at("supports_temperature").get<bool>();
  d.supports_full_logits = j.at("supports_full_logits").get<bool>();
  d.bos_convention = j.value("bos_convention", "");
  return d;
}

ProbDist dist_from_json(const CandidateSetPtr& candidates, const json& j) {
  return ProbDist(candidates, j.get<std::vector<double>>());
}

}  // namespace

void write_report(std::ostream& out, const ErasureReport& report) {
  const auto& candidates = report.candidates();
  ordered_json doc;
  doc["schema"] = kReportSchema;
  doc["r"] = report.r;

  ordered_json meta;
  meta["backend"] = backend_to_json(report.metadata.backend);
  meta["ground_truth_label"] = report.metadata.ground_truth_label;
  meta["seed"] = report.metadata.seed;
  meta["temperature"] = report.metadata.temperature;
  meta["inputs"] = ordered_json::object();
  for (const auto& [name, provenance] : report.metadata.inputs) meta["inputs"][name] = provenance;
  doc["metadata"] = std::move(meta);

  doc["candidates"] = ordered_json::array();
  for (const auto& country : candidates.countries()) {
    ordered_json c;
    c["name"] = country.canonical_name;
    c["aliases"] = country.aliases;
    doc["candidates"].push_back(std::move(c));
  }
  doc["ground_truth"] = rounded(report.ground_truth.probs());

  ordered_json summary;
  summary["average_er"] = stable_round(report.average_er);
  summary["aggregate_uniform_er"] = stable_round(report.aggregate_uniform_er);
  summary["aggregate_model_er"] = stable_round(report.aggregate_model_er);
  ordered_json ci;
  ci["lower"] = stable_round(report.average_er_ci.lower);
  ci["upper"] = stable_round(report.average_er_ci.upper);
  ci["confidence"] = report.average_er_ci.confidence;
  ci["resamples"] = report.average_er_ci.resamples;
  ci["seed"] = report.average_er_ci.seed;
  ci["significant"] = report.average_er_ci.significant;
  summary["average_er_ci"] = std::move(ci);
  ordered_json box;
  box["min"] = stable_round(report.dispersion.min);
  box["p25"] = stable_round(report.dispersion.p25);
  box["median"] = stable_round(report.dispersion.median);
  box["p75"] = stable_round(report.dispersion.p75);
  box["max"] = stable_round(report.dispersion.max);
  summary["dispersion"] = std::move(box);
  doc["summary"] = std::move(summary);

  ordered_json uni;
  uni["probs"] = rounded(report.aggregate_uniform.probs());
  uni["erasure_set"] = set_to_json(report.aggregate_uniform_set, candidates);
  doc["aggregate_uniform"] = std::move(uni);
  ordered_json model;
  model["probs"] = rounded(report.aggregate_model.probs());
  model["erasure_set"] = set_to_json(report.aggregate_model_set, candidates);
  doc["aggregate_model"] = std::move(model);
  doc["per_country_ratios"] = rounded(report.per_country_ratios);

  doc["prompts"] = ordered_json::array();
  for (const auto& p : report.prompts) {
    ordered_json entry;
    entry["prompt"] = p.prompt;
    entry["logprob"] = stable_round(p.prompt_logprob);
    entry["er"] = stable_round(p.er);
    entry["erasure_set"] = set_to_json(p.erasure_set, candidates);
    entry["probs"] = rounded(p.dist.probs());
    entry["log_masses"] = rounded(p.log_masses);
    doc["prompts"].push_back(std::move(entry));
  }
  out << doc.dump(2) << '\n';
}

ErasureReport read_report(std::istream& in) {
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw SchemaError(std::string("report: ") + e.what());
  }
  try {
    if (doc.at("schema").get<std::string>() != kReportSchema) {
      throw SchemaError("unsupported report schema");
    }
    std::vector<Country> countries;
    for (const auto& c : doc.at("candidates")) {
      countries.push_back(make_country(c.at("name").get<std::string>(),
                                       c.at("aliases").get<std::vector<std::string>>()));
    }
    const auto candidates = make_candidate_set(std::move(countries));
    const double r = doc.at("r").get<double>();

    ReportMetadata meta;
    const auto& m = doc.at("metadata");
    meta.backend = backend_from_json(m.at("backend"));
    meta.ground_truth_label = m.at("ground_truth_label").get<std::string>();
    meta.seed = m.at("seed").get<std::uint64_t>();
    meta.temperature = m.value("temperature", 1.0);
    for (const auto& [name, value] : m.at("inputs").items()) {
      meta.inputs.emplace_back(name, value.get<std::string>());
    }

    std::vector<PromptResult> prompts;
    for (const auto& p : doc.at("prompts")) {
      prompts.push_back(PromptResult{p.at("prompt").get<std::string>(),
                                     p.at("logprob").get<double>(),
                                     p.at("log_masses").get<std::vector<double>>(),
                                     dist_from_json(candidates, p.at("probs")),
                                     p.at("er").get<double>(),
                                     set_from_json(p.at("erasure_set"), *candidates, r)});
    }
    const auto& s = doc.at("summary");
    const auto& ci_json = s.at("average_er_ci");
    BootstrapInterval ci{ci_json.at("lower").get<double>(),  ci_json.at("upper").get<double>(),
                         ci_json.at("confidence").get<double>(),
                         ci_json.at("resamples").get<std::size_t>(),
                         ci_json.at("seed").get<std::uint64_t>(),
                         ci_json.at("significant").get<bool>()};
    const auto& b = s.at("dispersion");
    BoxplotStats box{b.at("min").get<double>(), b.at("p25").get<double>(),
                     b.at("median").get<double>(), b.at("p75").get<double>(),
                     b.at("max").get<double>()};
    return ErasureReport{r,
                         dist_from_json(candidates, doc.at("ground_truth")),
                         std::move(prompts),
                         dist_from_json(candidates, doc.at("aggregate_uniform").at("probs")),
                         dist_from_json(candidates, doc.at("aggregate_model").at("probs")),
                         s.at("average_er").get<double>(),
                         s.at("aggregate_uniform_er").get<double>(),
                         s.at("aggregate_model_er").get<double>(),
                         set_from_json(doc.at("aggregate_uniform").at("erasure_set"), *candidates, r),
                         set_from_json(doc.at("aggregate_model").at("erasure_set"), *candidates, r),
                         box,
                         doc.at("per_country_ratios").get<std::vector<double>>(),
                         ci,
                         std::move(meta)};
  } catch (const json::exception& e) {
    throw SchemaError(std::string("report: ") + e.what());
  }
}

ErasureReport read_report(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError("cannot open report '" + path.string() + "'");
  return read_report(in);
}

namespace {

std::string format_number(double value) { return detail::csv_number(value); }

}  // namespace

void write_ratio_table(std::ostream& out, const ErasureReport& report) {
  out << "country,ratio,erased_at_r\n";
  const auto& candidates = report.candidates();
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    out << detail::csv_escape(candidates.name(i)) << ',' << format_number(report.per_country_ratios[i])
        << ',' << (report.aggregate_model_set.contains(i) ? 1 : 0) << '\n';
  }
}

void write_map_table(std::ostream& out, const ErasureReport& report) {
  out << "country,ratio,erased\n";
  const auto& candidates = report.candidates();
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    out << detail::csv_escape(candidates.name(i)) << ',' << format_number(report.per_country_ratios[i])
        << ',' << (report.aggregate_model_set.contains(i) ? 1 : 0) << '\n';
  }
}

void write_boxplot_table(std::ostream& out, const ErasureReport& report) {
  const auto& d = report.dispersion;
  out << "statistic,value\n";
  out << "min," << format_number(d.min) << '\n';
  out << "p25," << format_number(d.p25) << '\n';
  out << "median," << format_number(d.median) << '\n';
  out << "p75," << format_number(d.p75) << '\n';
  out << "max," << format_number(d.max) << '\n';
}

void write_comparison_table(std::ostream& out, std::span<const ComparisonRow> rows) {
  out << "country,gdp_per_capita,model_count\n";
  for (const auto& row : rows) {
    out << detail::csv_escape(row.country) << ','
        << (row.gdp_per_capita ? format_number(*row.gdp_per_capita) : std::string()) << ','
        << row.model_count << '\n';
  }
}

}  // namespace geoerasure
