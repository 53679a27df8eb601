#include "app.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"

#include "config.hpp"
#include "geoerasure/corpus.hpp"
#include "geoerasure/detail/parallel.hpp"
#include "geoerasure/error.hpp"
#include "geoerasure/mock_backend.hpp"
#include "geoerasure/prompts.hpp"
#include "geoerasure/report.hpp"
#include "geoerasure/temperature.hpp"
#include "geoerasure/wire_backend.hpp"

namespace geoerasure::app {

namespace fs = std::filesystem;

namespace {

// Flags shared across commands. Only one command runs per invocation, so a
// single instance holds whatever the active command parsed.
struct Flags {
  std::string config;
  std::string backend_url;
  std::string mock_table;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::optional<std::size_t> workers;

  std::string templates;
  std::string subjects;
  std::string prompts;
  std::string population;
  std::string aliases;
  std::string gdp;
  std::optional<double> r;
  std::string out;
  std::string report_in;
};

AuditConfig effective_config(const Flags& f) {
  AuditConfig c = f.config.empty() ? AuditConfig{} : load_config(f.config);
  if (!f.backend_url.empty()) {
    c.backend.kind = "wire";
    c.backend.url = f.backend_url;
  } else if (!f.mock_table.empty()) {
    c.backend.kind = "mock";
    c.backend.mock_table = f.mock_table;
  }
  if (f.seed) c.seed = *f.seed;
  if (!f.out_dir.empty()) c.out_dir = f.out_dir;
  if (f.workers) c.workers = *f.workers;
  if (c.workers == 0) c.workers = detail::default_workers();
  for (auto [flag, field] : {std::pair{&f.templates, &c.templates},
                             std::pair{&f.subjects, &c.subjects},
                             std::pair{&f.prompts, &c.prompts},
                             std::pair{&f.population, &c.population},
                             std::pair{&f.aliases, &c.aliases}, std::pair{&f.gdp, &c.gdp}}) {
    if (!flag->empty()) *field = *flag;
  }
  if (f.r) c.r = *f.r;
  return c;
}

bool backend_configured(const AuditConfig& c) {
  if (!c.backend.kind.empty()) return true;
  const char* env = std::getenv(kBackendUrlEnv);
  return env && *env;
}

fs::path require_file(const fs::path& path, const std::string& what) {
  if (path.empty()) throw ConfigError("no " + what + " file configured");
  if (!fs::is_regular_file(path)) {
    throw ConfigError(what + " file not found: '" + path.string() + "'");
  }
  return path;
}

void require_audit_r(double r) {
  if (!(r > 1.0)) throw ConfigError("r must be greater than 1 for auditing (got " + std::to_string(r) + ")");
}

fs::path output_path(const AuditConfig& c, const std::string& explicit_path, const std::string& name) {
  fs::path p = explicit_path.empty() ? c.out_dir / name : fs::path(explicit_path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  return p;
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  return out;
}

using Inputs = std::vector<std::pair<std::string, std::string>>;

CandidateSetPtr load_candidates(const AuditConfig& c, Inputs& inputs) {
  inputs.emplace_back("aliases", describe_input(require_file(c.aliases, "aliases")));
  return load_aliases(c.aliases);
}

GroundTruth load_truth(const AuditConfig& c, const CandidateSetPtr& candidates, Inputs& inputs) {
  inputs.emplace_back("population", describe_input(require_file(c.population, "population")));
  return load_ground_truth(c.population, candidates);
}

PromptSet load_prompts(const AuditConfig& c, Inputs& inputs) {
  PromptSet prompts;
  if (!c.prompts.empty()) {
    inputs.emplace_back("prompts", describe_input(require_file(c.prompts, "prompts")));
    prompts = read_prompt_set(c.prompts);
  } else {
    inputs.emplace_back("templates", describe_input(require_file(c.templates, "templates")));
    inputs.emplace_back("subjects", describe_input(require_file(c.subjects, "subjects")));
    const auto templates = load_templates(c.templates);
    prompts = expand(templates, load_subject_config(c.subjects));
  }
  if (prompts.empty()) throw ConfigError("prompt set is empty");
  return prompts;
}

std::unique_ptr<ScoringBackend> open_backend(const AuditConfig& c, Inputs& inputs) {
  if (c.backend.kind == "mock" && !c.backend.mock_table.empty() &&
      fs::is_regular_file(c.backend.mock_table)) {
    inputs.emplace_back("mock_table", describe_input(c.backend.mock_table));
  }
  return make_backend(c);
}

std::string num(double v) {
  std::ostringstream s;
  s.precision(12);
  s << stable_round(v);
  return s.str();
}

// ---- commands -------------------------------------------------------------

int cmd_expand(const Flags& f, std::ostream& out) {
  const auto c = effective_config(f);
  const auto templates = load_templates(require_file(c.templates, "templates"));
  const auto subjects = load_subject_config(require_file(c.subjects, "subjects"));
  const auto prompts = expand(templates, subjects);
  const auto path = output_path(c, f.out, "prompts.json");
  auto file = open_output(path);
  write_prompt_set(file, prompts);
  out << "expanded " << templates.size() << " templates into " << prompts.size() << " prompts -> "
      << path.string() << '\n';
  return kOk;
}

struct SplitFlags {
  std::string strategy = "random";
  std::optional<std::uint64_t> fold_seed;
  std::vector<std::string> test_groups;
  double train_fraction = 0.75;
};

int cmd_split(const Flags& f, const SplitFlags& s, std::ostream& out) {
  const auto c = effective_config(f);
  const auto prompts = read_prompt_set(require_file(c.prompts, "prompts"));
  if (prompts.empty()) throw ConfigError("prompt set is empty");
  SplitStrategy strategy;
  try {
    strategy = parse_split_strategy(s.strategy);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  const auto seed = s.fold_seed.value_or(c.seed);
  const auto result = split(prompts, strategy, seed, SplitOptions{s.test_groups, s.train_fraction});
  const auto path = output_path(
      c, f.out, "split_" + std::string(to_string(strategy)) + "_" + std::to_string(seed) + ".json");
  auto file = open_output(path);
  write_split_manifest(file, result);
  out << "split " << prompts.size() << " prompts (" << to_string(strategy) << ", seed " << seed
      << "): " << result.train.size() << " train, " << result.test.size() << " test -> "
      << path.string() << '\n';
  return kOk;
}

int cmd_audit(const Flags& f, std::ostream& out) {
  const auto c = effective_config(f);
  require_audit_r(c.r);
  Inputs inputs;
  const auto candidates = load_candidates(c, inputs);
  const auto truth = load_truth(c, candidates, inputs);
  const auto prompts = load_prompts(c, inputs);
  const auto backend = open_backend(c, inputs);

  ReportOptions options;
  options.seed = c.seed;
  options.bootstrap_resamples = c.bootstrap_resamples;
  options.workers = c.workers;
  auto report = build_report(*backend, prompts, truth.dist.candidate_ptr(), truth, c.r, options);
  std::sort(inputs.begin(), inputs.end());
  report.metadata.inputs = std::move(inputs);

  fs::create_directories(c.out_dir);
  {
    auto file = open_output(c.out_dir / "report.json");
    write_report(file, report);
  }
  {
    auto file = open_output(c.out_dir / "ratios.csv");
    write_ratio_table(file, report);
  }
  {
    auto file = open_output(c.out_dir / "boxplot.csv");
    write_boxplot_table(file, report);
  }
  out << "prompts: " << report.prompts.size() << ", countries: " << report.candidates().size()
      << ", r = " << num(report.r) << '\n';
  out << "average ER: " << num(report.average_er) << " (" << num(report.average_er_ci.confidence * 100)
      << "% CI " << num(report.average_er_ci.lower) << " .. " << num(report.average_er_ci.upper)
      << ")\n";
  out << "aggregate ER: uniform " << num(report.aggregate_uniform_er) << ", model "
      << num(report.aggregate_model_er) << '\n';
  out << "erased (model aggregate):";
  for (const auto& name : report.aggregate_model_set.names(report.candidates())) out << ' ' << name << ';';
  out << '\n' << "wrote " << (c.out_dir / "report.json").string() << '\n';
  return kOk;
}

struct ChooseRFlags {
  std::optional<int> r_min;
  std::optional<int> r_max;
  std::string mode;
};

int cmd_choose_r(const Flags& f, const ChooseRFlags& s, std::ostream& out) {
  auto c = effective_config(f);
  if (s.r_min) c.r_min = *s.r_min;
  if (s.r_max) c.r_max = *s.r_max;
  if (!s.mode.empty()) c.choose_r_mode = parse_choose_r_mode(s.mode);
  if (c.r_min <= 1) throw ConfigError("r range must start above 1");
  if (c.r_min > c.r_max) throw ConfigError("r range is empty");

  std::vector<PromptPrediction> predictions;
  std::optional<ProbDist> truth;
  if (!f.report_in.empty()) {
    const auto report = read_report(require_file(f.report_in, "report"));
    predictions = report.predictions();
    truth = report.ground_truth;
  } else {
    Inputs inputs;
    const auto candidates = load_candidates(c, inputs);
    const auto gt = load_truth(c, candidates, inputs);
    const auto prompts = load_prompts(c, inputs);
    const auto backend = open_backend(c, inputs);
    const auto& kept = gt.dist.candidate_ptr();
    for (const auto& s : score_prompts(*backend, prompts, *kept, c.workers)) {
      predictions.push_back({s.prompt, ProbDist::from_log_masses(kept, s.log_masses)});
    }
    truth = gt.dist;
  }
  if (predictions.empty()) throw ConfigError("prompt set is empty");
  const auto result = choose_r(predictions, *truth, c.r_min, c.r_max, c.choose_r_mode);

  const auto path = output_path(c, f.out, "choose_r.csv");
  auto file = open_output(path);
  file << "r,er,kl,er_p25,er_p75,set_size\n";
  for (const auto& row : result.table) {
    file << row.r << ',' << num(row.er) << ',' << num(row.kl) << ',' << num(row.er_p25) << ','
         << num(row.er_p75) << ',' << num(row.median_set_size) << '\n';
  }
  out << "r = " << result.r << '\n';
  return kOk;
}

struct ProfileFlags {
  std::string manifest;
  std::optional<double> floor;
  bool case_insensitive = false;
};

int cmd_corpus_profile(const Flags& f, const ProfileFlags& s, std::ostream& out) {
  const auto c = effective_config(f);
  const auto datasets = load_manifest(require_file(s.manifest, "manifest"));
  Inputs inputs;
  auto candidates = load_candidates(c, inputs);
  std::optional<ProbDist> truth;
  if (!c.population.empty()) {
    const auto gt = load_truth(c, candidates, inputs);
    candidates = gt.dist.candidate_ptr();
    truth = gt.dist;
  }
  std::optional<ErasureReport> report;
  if (!f.report_in.empty()) {
    report = read_report(require_file(f.report_in, "report"));
    if (!(report->candidates() == *candidates)) {
      throw ConfigError("report candidates differ from the profiled candidate set");
    }
    if (!truth) truth = report->ground_truth;
  }

  ProfileOptions options;
  options.workers = c.workers;
  if (s.floor) options.floor = *s.floor;
  options.match.case_insensitive = s.case_insensitive || c.case_insensitive;
  const auto prof = profile(datasets, candidates, options);

  std::optional<DataBias> bias;
  const double r = f.r.value_or(report ? report->r : c.r);
  if (truth && report) {
    require_audit_r(r);
    bias = data_bias(*truth, prof, report->aggregate_model, r);
  }
  const auto path = output_path(c, f.out, "train_profile.json");
  {
    auto file = open_output(path);
    write_profile(file, prof, bias ? &*bias : nullptr, r);
  }
  {
    auto file = open_output(path.parent_path() / "train_counts.csv");
    write_counts_table(file, prof);
  }
  out << "documents: " << prof.counts.total_documents << ", bytes: " << prof.counts.total_bytes
      << ", invalid UTF-8 sequences: " << prof.counts.invalid_utf8_sequences << '\n';
  if (!prof.floored_countries.empty()) {
    out << "floored (no mentions): " << prof.floored_countries.size() << " countries\n";
  }
  if (bias) {
    out << "ER(truth, train) = " << num(bias->truth_vs_train) << ", ER(train, model) = "
        << num(bias->train_vs_model) << ", ER(truth, model) = " << num(bias->truth_vs_model) << '\n';
  }
  out << "wrote " << path.string() << '\n';
  return kOk;
}

struct TempFlags {
  std::string interval = "0.25:4.0";
  double step = 0.005;
  std::string objective = "mean";
  std::string mode = "auto";
  std::string perplexity_texts;
  std::string table;
};

std::pair<double, double> parse_interval(const std::string& text) {
  const auto colon = text.find(':');
  auto parse = [&](std::string_view part, double& value) {
    const auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), value);
    return !part.empty() && ec == std::errc() && ptr == part.data() + part.size();
  };
  double lo = 0.0, hi = 0.0;
  if (colon == std::string::npos || !parse(std::string_view(text).substr(0, colon), lo) ||
      !parse(std::string_view(text).substr(colon + 1), hi)) {
    throw ConfigError("interval must look like 0.25:4.0 (got '" + text + "')");
  }
  if (!(lo > 0.0) || !(hi > lo)) throw ConfigError("interval must satisfy 0 < lower < upper");
  return {lo, hi};
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(require_file(path, "perplexity texts"), std::ios::binary);
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  if (lines.empty()) throw ConfigError("perplexity texts file is empty");
  return lines;
}

int cmd_mitigate_temp(const Flags& f, const TempFlags& s, std::ostream& out) {
  const auto c = effective_config(f);
  const auto report = read_report(require_file(f.report_in, "report"));
  const double r = f.r.value_or(report.r);
  require_audit_r(r);
  const auto [lo, hi] = parse_interval(s.interval);
  TauSearchOptions options{lo, hi, s.step, 1e-4, c.workers};
  if (!(s.step > 0.0)) throw ConfigError("grid step must be positive");

  TemperatureObjective objective;
  if (s.objective == "mean" || s.objective == "mean_prompt_er") {
    objective = TemperatureObjective::mean_prompt_er;
  } else if (s.objective == "aggregate" || s.objective == "aggregate_er") {
    objective = TemperatureObjective::aggregate_er;
  } else {
    throw ConfigError("objective must be 'mean' or 'aggregate'");
  }
  if (s.mode != "auto" && s.mode != "rescale" && s.mode != "exact") {
    throw ConfigError("mode must be 'auto', 'rescale' or 'exact'");
  }

  std::unique_ptr<ScoringBackend> backend;
  Inputs unused;
  const bool want_backend =
      s.mode == "exact" || !s.perplexity_texts.empty() || (s.mode == "auto" && backend_configured(c));
  if (want_backend) backend = open_backend(c, unused);
  const bool exact =
      s.mode == "exact" || (s.mode == "auto" && backend && backend->descriptor().supports_temperature);

  TauCurve curve;
  if (exact) {
    if (!backend) throw ConfigError("exact mode needs a backend");
    std::vector<std::string> prompts;
    for (const auto& p : report.prompts) prompts.push_back(p.prompt);
    curve = optimize_tau_exact(*backend, prompts, report.ground_truth, r, options, objective);
  } else {
    std::vector<std::vector<double>> log_masses;
    for (const auto& p : report.prompts) log_masses.push_back(p.log_masses);
    const auto logprobs = report.prompt_logprobs();
    TemperatureInputs in{log_masses, logprobs};
    curve = optimize_tau(in, report.ground_truth, r, options, objective);
  }
  if (!s.perplexity_texts.empty()) {
    attach_perplexity(curve, *backend, read_lines(s.perplexity_texts), c.workers);
  } else {
    curve.perplexity_note = "no perplexity texts given";
  }

  const auto path = output_path(c, f.out, "tau_curve.json");
  {
    auto file = open_output(path);
    write_tau_curve(file, curve);
  }
  fs::path table = s.table.empty() ? fs::path(path).replace_extension(".csv") : fs::path(s.table);
  {
    auto file = open_output(table);
    write_tau_table(file, curve);
  }
  out << "mode: " << to_string(curve.mode) << ", objective: " << to_string(curve.objective) << '\n';
  out << "tau* = " << num(curve.tau_star) << ", ER at tau* = " << num(curve.er_at_star)
      << ", ER at tau=1 = " << num(curve.er_at_one) << '\n';
  if (!curve.perplexity_values) out << "perplexity trace omitted: " << curve.perplexity_note << '\n';
  out << "wrote " << path.string() << " and " << table.string() << '\n';
  return kOk;
}

std::vector<ErasureReport> read_reports(const std::vector<std::string>& paths) {
  std::vector<ErasureReport> reports;
  for (const auto& p : paths) reports.push_back(read_report(require_file(p, "report")));
  if (reports.empty()) throw ConfigError("compare needs at least one report");
  for (const auto& rep : reports) {
    if (rep.r != reports.front().r) throw ConfigError("reports use different r values");
    if (!(rep.candidates() == reports.front().candidates())) {
      throw ConfigError("reports use different candidate sets");
    }
  }
  return reports;
}

int cmd_compare(const Flags& f, const std::vector<std::string>& report_paths, std::ostream& out) {
  const auto c = effective_config(f);
  const auto reports = read_reports(report_paths);
  const auto gdp = load_gdp(require_file(c.gdp, "gdp"));
  const auto rows = compare_reports(reports, gdp);
  const auto path = output_path(c, f.out, "comparison.csv");
  auto file = open_output(path);
  write_comparison_table(file, rows);
  out << rows.size() << " countries erased by at least one of " << reports.size()
      << " reports -> " << path.string() << '\n';
  return kOk;
}

int cmd_export_map(const Flags& f, std::ostream& out) {
  const auto c = effective_config(f);
  const auto report = read_report(require_file(f.report_in, "report"));
  const auto path = output_path(c, f.out, "map.csv");
  auto file = open_output(path);
  write_map_table(file, report);
  out << "wrote " << path.string() << '\n';
  return kOk;
}

struct ServeFlags {
  std::string host = "127.0.0.1";
  int port = 8080;
};

int cmd_serve_mock(const Flags& f, const ServeFlags& s, std::ostream& out) {
  auto c = effective_config(f);
  if (c.backend.kind != "mock") throw ConfigError("serve-mock needs --mock-table or a mock backend config");
  const auto backend = make_backend(c);
  WireServer server(*backend);
  out << "serving " << backend->descriptor().model_label << " on http://" << s.host << ':' << s.port
      << std::endl;
  server.listen(s.host, s.port);
  return kOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Geographical erasure audits for language models"};
  app.require_subcommand(1);
  app.fallthrough();
  Flags f;
  app.add_option("--config", f.config, "JSON config file");
  app.add_option("--backend-url", f.backend_url,
                 std::string("Wire backend URL (fallback: ") + kBackendUrlEnv + ")");
  app.add_option("--mock-table", f.mock_table, "Use the mock backend with this table");
  app.add_option("--seed", f.seed, "Seed for bootstrap and splits");
  app.add_option("--out-dir", f.out_dir, "Output directory");
  app.add_option("--workers", f.workers, "Scoring workers (default: available parallelism)");

  auto data_flags = [&f](CLI::App* sub, bool with_prompts) {
    sub->add_option("--aliases", f.aliases, "Country alias file (JSON)");
    sub->add_option("--population", f.population, "Population file (country,english_speakers)");
    if (with_prompts) {
      sub->add_option("--prompts", f.prompts, "Expanded prompt set (JSON)");
      sub->add_option("--templates", f.templates, "Template file (JSON)");
      sub->add_option("--subjects", f.subjects, "Subject config (JSON)");
    }
  };

  std::function<int()> action;

  auto* expand_cmd = app.add_subcommand("expand-prompts", "Expand templates into a prompt set");
  expand_cmd->add_option("--templates", f.templates, "Template file (JSON)");
  expand_cmd->add_option("--subjects", f.subjects, "Subject config (JSON)");
  expand_cmd->add_option("--out", f.out, "Output prompt set");
  expand_cmd->callback([&] { action = [&] { return cmd_expand(f, out); }; });

  SplitFlags split_flags;
  auto* split_cmd = app.add_subcommand("split-prompts", "Write a train/test split manifest");
  split_cmd->add_option("--prompts", f.prompts, "Prompt set (JSON)");
  split_cmd->add_option("--strategy", split_flags.strategy, "random, pronoun or verb");
  split_cmd->add_option("--fold-seed", split_flags.fold_seed, "Split seed (default: --seed)");
  split_cmd->add_option("--test-groups", split_flags.test_groups, "Groups forced onto the test side")
      ->delimiter(',');
  split_cmd->add_option("--train-fraction", split_flags.train_fraction, "Random split train share");
  split_cmd->add_option("--out", f.out, "Output manifest");
  split_cmd->callback([&] { action = [&] { return cmd_split(f, split_flags, out); }; });

  auto* audit_cmd = app.add_subcommand("audit", "Score prompts and write an erasure report");
  data_flags(audit_cmd, true);
  audit_cmd->add_option("--r", f.r, "Erasure threshold (> 1)");
  audit_cmd->callback([&] { action = [&] { return cmd_audit(f, out); }; });

  ChooseRFlags choose_flags;
  auto* choose_cmd = app.add_subcommand("choose-r", "Pick r where median ER is closest to median KL");
  data_flags(choose_cmd, true);
  choose_cmd->add_option("--report-in", f.report_in, "Reuse the scores of an audit report");
  choose_cmd->add_option("--r-min", choose_flags.r_min, "Smallest candidate r (default 2)");
  choose_cmd->add_option("--r-max", choose_flags.r_max, "Largest candidate r (default 20)");
  choose_cmd->add_option("--mode", choose_flags.mode, "median_of_er or er_of_aggregate");
  choose_cmd->add_option("--out", f.out, "Output table (r,er,kl,...)");
  choose_cmd->callback([&] { action = [&] { return cmd_choose_r(f, choose_flags, out); }; });

  ProfileFlags profile_flags;
  auto* profile_cmd = app.add_subcommand("corpus-profile", "Count country mentions in a corpus");
  data_flags(profile_cmd, false);
  profile_cmd->add_option("--manifest", profile_flags.manifest, "Dataset manifest (CSV)")->required();
  profile_cmd->add_option("--report-in", f.report_in, "Audit report for the data-bias breakdown");
  profile_cmd->add_option("--r", f.r, "Threshold for the data-bias breakdown");
  profile_cmd->add_option("--floor", profile_flags.floor, "Mass given to unmentioned countries");
  profile_cmd->add_flag("--case-insensitive", profile_flags.case_insensitive, "Fold ASCII case");
  profile_cmd->add_option("--out", f.out, "Output profile (JSON)");
  profile_cmd->callback([&] { action = [&] { return cmd_corpus_profile(f, profile_flags, out); }; });

  TempFlags temp_flags;
  auto* temp_cmd = app.add_subcommand("mitigate-temp", "Search the softmax temperature minimizing ER");
  temp_cmd->add_option("--report-in", f.report_in, "Audit report")->required();
  temp_cmd->add_option("--r", f.r, "Erasure threshold (default: the report's)");
  temp_cmd->add_option("--interval", temp_flags.interval, "Search interval lower:upper");
  temp_cmd->add_option("--step", temp_flags.step, "Grid step");
  temp_cmd->add_option("--objective", temp_flags.objective, "mean or aggregate");
  temp_cmd->add_option("--mode", temp_flags.mode, "auto, rescale or exact");
  temp_cmd->add_option("--perplexity-texts", temp_flags.perplexity_texts, "One text per line");
  temp_cmd->add_option("--out", f.out, "Output curve (JSON)");
  temp_cmd->add_option("--table", temp_flags.table, "Output curve table (default: <out>.csv)");
  temp_cmd->callback([&] { action = [&] { return cmd_mitigate_temp(f, temp_flags, out); }; });

  std::vector<std::string> report_paths;
  auto* compare_cmd = app.add_subcommand("compare", "Count erased countries across reports");
  compare_cmd->add_option("--reports", report_paths, "Report files")->required();
  compare_cmd->add_option("--gdp", f.gdp, "GDP per capita file (country,gdp_per_capita_usd)");
  compare_cmd->add_option("--out", f.out, "Output table");
  compare_cmd->callback([&] { action = [&] { return cmd_compare(f, report_paths, out); }; });

  auto* map_cmd = app.add_subcommand("export-map", "Write country,ratio,erased for map plots");
  map_cmd->add_option("--report-in", f.report_in, "Audit report")->required();
  map_cmd->add_option("--out", f.out, "Output table");
  map_cmd->callback([&] { action = [&] { return cmd_export_map(f, out); }; });

  ServeFlags serve_flags;
  auto* serve_cmd = app.add_subcommand("serve-mock", "Serve a mock table over the wire protocol");
  serve_cmd->add_option("--host", serve_flags.host, "Bind address");
  serve_cmd->add_option("--port", serve_flags.port, "Port");
  serve_cmd->callback([&] { action = [&] { return cmd_serve_mock(f, serve_flags, out); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    return action();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const ReportError& e) {
    err << "backend failure: " << e.what() << '\n';
    for (const auto& p : e.failed_prompts()) err << "  failed: " << p << '\n';
    return kBackendFailure;
  } catch (const TransportError& e) {
    err << "backend failure: " << e.what() << '\n';
    return kBackendFailure;
  } catch (const BackendError& e) {
    err << "backend failure: " << e.what() << '\n';
    return kBackendFailure;
  } catch (const CapabilityError& e) {
    err << "backend failure: " << e.what() << '\n';
    return kBackendFailure;
  } catch (const SchemaError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const ValidationError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const TemplateError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const SplitError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
}

}  // namespace geoerasure::app
