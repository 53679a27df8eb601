#include "geoerasure/distributions.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>

#include <nlohmann/json.hpp>

#include "csv.hpp"
#include "geoerasure/error.hpp"

namespace geoerasure {

Country make_country(std::string canonical_name, std::vector<std::string> aliases) {
  if (canonical_name.empty()) throw ValidationError("country with empty canonical name");
  if (std::find(aliases.begin(), aliases.end(), canonical_name) == aliases.end()) {
    aliases.insert(aliases.begin(), canonical_name);
  }
  std::set<std::string_view> seen;
  for (const auto& alias : aliases) {
    if (alias.empty()) throw ValidationError("empty alias for '" + canonical_name + "'");
    if (!seen.insert(alias).second) {
      throw ValidationError("duplicate alias '" + alias + "' for '" + canonical_name + "'");
    }
  }
  return Country{std::move(canonical_name), std::move(aliases)};
}

CandidateSet::CandidateSet(std::vector<Country> countries) : countries_(std::move(countries)) {
  if (countries_.empty()) throw ValidationError("candidate set is empty");
  for (std::size_t i = 0; i < countries_.size(); ++i) {
    // Re-run the per-country invariants in case the struct was built by hand.
    countries_[i] = make_country(countries_[i].canonical_name, countries_[i].aliases);
    const auto& country = countries_[i];
    if (!by_name_.emplace(country.canonical_name, i).second) {
      throw ValidationError("duplicate country '" + country.canonical_name + "'");
    }
    for (const auto& alias : country.aliases) {
      const auto [it, inserted] = by_alias_.emplace(alias, i);
      if (!inserted) {
        throw ValidationError("alias '" + alias + "' maps to both '" +
                              countries_[it->second].canonical_name + "' and '" +
                              country.canonical_name + "'");
      }
    }
  }
}

std::optional<std::size_t> CandidateSet::index_of(std::string_view canonical_name) const {
  const auto it = by_name_.find(std::string(canonical_name));
  if (it == by_name_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::size_t> CandidateSet::index_of_alias(std::string_view alias) const {
  const auto it = by_alias_.find(std::string(alias));
  if (it == by_alias_.end()) return std::nullopt;
  return it->second;
}

CandidateSet CandidateSet::restricted_to(std::span<const std::string> canonical_names) const {
  std::set<std::string_view> keep(canonical_names.begin(), canonical_names.end());
  std::vector<Country> kept;
  for (const auto& country : countries_) {
    if (keep.contains(country.canonical_name)) kept.push_back(country);
  }
  return CandidateSet(std::move(kept));
}

CandidateSetPtr make_candidate_set(std::vector<std::string> canonical_names) {
  std::vector<Country> countries;
  countries.reserve(canonical_names.size());
  for (auto& name : canonical_names) countries.push_back(make_country(std::move(name)));
  return std::make_shared<const CandidateSet>(std::move(countries));
}

CandidateSetPtr make_candidate_set(std::vector<Country> countries) {
  return std::make_shared<const CandidateSet>(std::move(countries));
}

ProbDist::ProbDist(CandidateSetPtr candidates, std::vector<double> probs)
    : candidates_(std::move(candidates)), probs_(std::move(probs)) {
  if (!candidates_) throw ContractError("distribution without candidate set");
  if (probs_.size() != candidates_->size()) {
    throw ContractError("distribution has " + std::to_string(probs_.size()) +
                        " entries for " + std::to_string(candidates_->size()) + " countries");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < probs_.size(); ++i) {
    if (!std::isfinite(probs_[i]) || probs_[i] < 0.0) {
      throw ValidationError("invalid probability for '" + candidates_->name(i) + "'");
    }
    sum += probs_[i];
  }
  if (std::abs(sum - 1.0) > kNormalizationTolerance) {
    throw NormalizationError("probabilities sum to " + std::to_string(sum));
  }
}

ProbDist ProbDist::from_masses(CandidateSetPtr candidates, std::span<const double> masses) {
  double total = 0.0;
  for (const double m : masses) {
    if (!std::isfinite(m) || m < 0.0) throw NormalizationError("invalid mass in normalization");
    total += m;
  }
  if (!(total > 0.0)) throw NormalizationError("all masses are zero");
  std::vector<double> probs(masses.begin(), masses.end());
  for (auto& p : probs) p /= total;
  return ProbDist(std::move(candidates), std::move(probs));
}

ProbDist ProbDist::from_log_masses(CandidateSetPtr candidates, std::span<const double> log_masses) {
  double top = -std::numeric_limits<double>::infinity();
  for (const double l : log_masses) {
    if (std::isnan(l) || l == std::numeric_limits<double>::infinity()) {
      throw NormalizationError("invalid log-mass in normalization");
    }
    top = std::max(top, l);
  }
  if (!std::isfinite(top)) throw NormalizationError("all masses are zero");
  std::vector<double> masses(log_masses.size());
  std::transform(log_masses.begin(), log_masses.end(), masses.begin(),
                 [top](double l) { return std::exp(l - top); });
  return from_masses(std::move(candidates), masses);
}

double ProbDist::at(std::string_view canonical_name) const {
  const auto index = candidates_->index_of(canonical_name);
  if (!index) throw ContractError("unknown country '" + std::string(canonical_name) + "'");
  return probs_[*index];
}

bool same_candidates(const ProbDist& a, const ProbDist& b) {
  return a.candidate_ptr() == b.candidate_ptr() || a.candidates() == b.candidates();
}

void require_same_candidates(const ProbDist& a, const ProbDist& b, std::string_view operation) {
  if (!same_candidates(a, b)) {
    throw ContractError(std::string(operation) + ": distributions use different candidate sets");
  }
}

double ratio(const ProbDist& p_true, const ProbDist& p, std::size_t index) {
  require_same_candidates(p_true, p, "ratio");
  if (p[index] == 0.0) throw DivisionByZeroError(p.candidates().name(index));
  return p_true[index] / p[index];
}

double ratio(const ProbDist& p_true, const ProbDist& p, const Country& country) {
  const auto index = p.candidates().index_of(country.canonical_name);
  if (!index) throw ContractError("unknown country '" + country.canonical_name + "'");
  return ratio(p_true, p, *index);
}

namespace {

std::ifstream open_or_throw(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError("cannot open '" + path.string() + "'");
  return in;
}

std::uint64_t parse_count(const std::string& text, std::size_t line) {
  std::uint64_t value = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (text.empty() || ec != std::errc() || ptr != end) {
    throw ValidationError("line " + std::to_string(line) + ": count '" + text +
                          "' is not a positive integer");
  }
  if (value == 0) {
    throw ValidationError("line " + std::to_string(line) + ": count must be positive");
  }
  return value;
}

}  // namespace

GroundTruth load_ground_truth(std::istream& in, const CandidateSetPtr& candidates,
                              std::string default_label) {
  const auto table = detail::read_csv(in);
  if (table.header != std::vector<std::string>{"country", "english_speakers"}) {
    throw SchemaError("population file header must be 'country,english_speakers'");
  }
  std::string label = std::move(default_label);
  for (const auto& [key, value] : table.directives) {
    if (key == "source") label = value;
  }

  std::map<std::size_t, std::uint64_t> by_index;
  for (const auto& row : table.rows) {
    if (row.fields.size() != 2) {
      throw SchemaError("line " + std::to_string(row.line) + ": expected 2 fields");
    }
    const auto& name = row.fields[0];
    const auto index = candidates->index_of(name);
    if (!index) {
      throw SchemaError("line " + std::to_string(row.line) + ": unknown country '" + name + "'");
    }
    const auto count = parse_count(row.fields[1], row.line);
    if (!by_index.emplace(*index, count).second) {
      throw ValidationError("line " + std::to_string(row.line) + ": duplicate country '" + name +
                            "'");
    }
  }
  if (by_index.empty()) throw ValidationError("population file has no rows");

  CandidateSetPtr kept = candidates;
  if (by_index.size() != candidates->size()) {
    std::vector<std::string> names;
    for (const auto& [index, count] : by_index) names.push_back(candidates->name(index));
    kept = std::make_shared<const CandidateSet>(candidates->restricted_to(names));
  }

  // by_index iterates in candidate order, which is also `kept` order.
  std::vector<std::uint64_t> counts;
  counts.reserve(by_index.size());
  for (const auto& [index, count] : by_index) counts.push_back(count);
  // Integer total keeps the normalization independent of row order.
  long double total = 0;
  for (const auto c : counts) total += static_cast<long double>(c);
  std::vector<double> probs;
  probs.reserve(counts.size());
  for (const auto c : counts) probs.push_back(static_cast<double>(c / total));
  return GroundTruth{ProbDist(kept, std::move(probs)), std::move(counts), std::move(label)};
}

GroundTruth load_ground_truth(const std::filesystem::path& path, const CandidateSetPtr& candidates) {
  auto in = open_or_throw(path);
  return load_ground_truth(in, candidates, path.filename().string());
}

CandidateSetPtr load_aliases(std::istream& in) {
  nlohmann::ordered_json doc;
  try {
    doc = nlohmann::ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("aliases file: ") + e.what());
  }
  if (!doc.is_object()) throw SchemaError("aliases file must be a JSON object");
  std::vector<Country> countries;
  for (const auto& [name, list] : doc.items()) {
    if (!list.is_array()) throw SchemaError("aliases for '" + name + "' must be a list");
    std::vector<std::string> aliases;
    for (const auto& alias : list) {
      if (!alias.is_string()) throw SchemaError("alias for '" + name + "' must be a string");
      aliases.push_back(alias.get<std::string>());
    }
    countries.push_back(make_country(name, std::move(aliases)));
  }
  return std::make_shared<const CandidateSet>(std::move(countries));
}

CandidateSetPtr load_aliases(const std::filesystem::path& path) {
  auto in = open_or_throw(path);
  return load_aliases(in);
}

std::map<std::string, double> load_gdp(std::istream& in) {
  const auto table = detail::read_csv(in);
  if (table.header != std::vector<std::string>{"country", "gdp_per_capita_usd"}) {
    throw SchemaError("gdp file header must be 'country,gdp_per_capita_usd'");
  }
  std::map<std::string, double> gdp;
  for (const auto& row : table.rows) {
    if (row.fields.size() != 2) {
      throw SchemaError("line " + std::to_string(row.line) + ": expected 2 fields");
    }
    double value = 0.0;
    const auto& text = row.fields[1];
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (text.empty() || ec != std::errc() || ptr != text.data() + text.size() ||
        !std::isfinite(value)) {
      throw ValidationError("line " + std::to_string(row.line) + ": bad gdp value '" + text + "'");
    }
    if (!gdp.emplace(row.fields[0], value).second) {
      throw ValidationError("line " + std::to_string(row.line) + ": duplicate country");
    }
  }
  return gdp;
}

std::map<std::string, double> load_gdp(const std::filesystem::path& path) {
  auto in = open_or_throw(path);
  return load_gdp(in);
}

}  // namespace geoerasure
