#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace geoerasure {

/// Absolute tolerance on the sum of a probability vector.
inline constexpr double kNormalizationTolerance = 1e-9;

/// Floor applied to zero counts when a count-derived distribution is used as
/// the second argument of a divergence.
inline constexpr double kDefaultCountFloor = 1e-12;

/// A country and every name that refers to it. `aliases` always contains
/// `canonical_name` exactly once.
struct Country {
  std::string canonical_name;
  std::vector<std::string> aliases;

  bool operator==(const Country&) const = default;
};

/// Builds a Country, inserting the canonical name into the alias list when
/// missing. Throws ValidationError on empty or duplicate names.
Country make_country(std::string canonical_name, std::vector<std::string> aliases = {});

/// The ordered list of countries every distribution is normalized over.
/// Canonical names are distinct and alias sets are pairwise disjoint.
class CandidateSet {
 public:
  explicit CandidateSet(std::vector<Country> countries);

  std::size_t size() const noexcept { return countries_.size(); }
  const std::vector<Country>& countries() const noexcept { return countries_; }
  const Country& operator[](std::size_t i) const { return countries_[i]; }
  const std::string& name(std::size_t i) const { return countries_[i].canonical_name; }

  std::optional<std::size_t> index_of(std::string_view canonical_name) const;
  std::optional<std::size_t> index_of_alias(std::string_view alias) const;

  /// Countries whose canonical names are listed, in this set's order.
  CandidateSet restricted_to(std::span<const std::string> canonical_names) const;

  bool operator==(const CandidateSet& other) const { return countries_ == other.countries_; }

 private:
  std::vector<Country> countries_;
  std::unordered_map<std::string, std::size_t> by_name_;
  std::unordered_map<std::string, std::size_t> by_alias_;
};

using CandidateSetPtr = std::shared_ptr<const CandidateSet>;

/// Convenience for tests and small tools: countries without extra aliases.
CandidateSetPtr make_candidate_set(std::vector<std::string> canonical_names);
CandidateSetPtr make_candidate_set(std::vector<Country> countries);
inline CandidateSetPtr make_candidate_set(std::initializer_list<std::string> canonical_names) {
  return make_candidate_set(std::vector<std::string>(canonical_names));
}

/// A normalized probability vector over a CandidateSet. Immutable.
class ProbDist {
 public:
  /// Validates non-negativity, finiteness and |sum - 1| <= 1e-9. Does not renormalize.
  ProbDist(CandidateSetPtr candidates, std::vector<double> probs);

  /// Normalizes non-negative masses. Throws NormalizationError when they sum to zero.
  static ProbDist from_masses(CandidateSetPtr candidates, std::span<const double> masses);

  /// Normalizes exp(log_masses) after max-subtraction. -inf entries map to zero.
  static ProbDist from_log_masses(CandidateSetPtr candidates, std::span<const double> log_masses);

  const CandidateSet& candidates() const noexcept { return *candidates_; }
  const CandidateSetPtr& candidate_ptr() const noexcept { return candidates_; }
  std::span<const double> probs() const noexcept { return probs_; }
  std::size_t size() const noexcept { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }
  double at(std::string_view canonical_name) const;

 private:
  CandidateSetPtr candidates_;
  std::vector<double> probs_;
};

bool same_candidates(const ProbDist& a, const ProbDist& b);

/// Throws ContractError naming `operation` when the two distributions are
/// defined over different candidate sets.
void require_same_candidates(const ProbDist& a, const ProbDist& b, std::string_view operation);

/// p_true[i] / p[i]. Throws DivisionByZeroError when p[i] == 0.
double ratio(const ProbDist& p_true, const ProbDist& p, std::size_t index);
double ratio(const ProbDist& p_true, const ProbDist& p, const Country& country);

/// Population-derived ground truth over the countries that have data.
struct GroundTruth {
  ProbDist dist;
  std::vector<std::uint64_t> raw_counts;
  std::string source_label;
};

/// Reads `country,english_speakers` rows. The returned distribution is defined
/// over the subset of `candidates` present in the file (candidate order kept);
/// countries absent from the file are excluded rather than zero-filled.
/// A leading `# source: <label>` comment sets the source label.
GroundTruth load_ground_truth(std::istream& in, const CandidateSetPtr& candidates,
                              std::string default_label = "unlabelled");
GroundTruth load_ground_truth(const std::filesystem::path& path, const CandidateSetPtr& candidates);

/// Reads a JSON object mapping canonical name to alias list. Object order
/// defines candidate order.
CandidateSetPtr load_aliases(std::istream& in);
CandidateSetPtr load_aliases(const std::filesystem::path& path);

/// Reads `country,gdp_per_capita_usd` rows.
std::map<std::string, double> load_gdp(std::istream& in);
std::map<std::string, double> load_gdp(const std::filesystem::path& path);

}  // namespace geoerasure
