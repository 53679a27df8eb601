#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "geoerasure/distributions.hpp"

namespace geoerasure {

/// Per-country mention counts, weighted by dataset epochs once merged into a
/// profile. Additive across shards.
struct MentionCounts {
  std::vector<double> counts;
  std::uint64_t total_documents = 0;
  std::uint64_t total_bytes = 0;
  std::uint64_t invalid_utf8_sequences = 0;

  MentionCounts() = default;
  explicit MentionCounts(std::size_t countries) : counts(countries, 0.0) {}

  /// Associative, commutative merge.
  MentionCounts& merge(const MentionCounts& other);
};

struct MatchOptions {
  bool case_insensitive = false;
};

/// Multi-pattern matcher over every alias of every country.
///
/// Matches must sit on word boundaries at both ends, where a boundary is any
/// position that does not separate two word bytes (ASCII letters and digits,
/// plus every non-ASCII byte so UTF-8 letters stay inside words). Overlaps are
/// resolved leftmost-longest, non-overlapping.
class AliasMatcher {
 public:
  explicit AliasMatcher(const CandidateSet& candidates, MatchOptions options = {});

  struct Match {
    std::size_t begin = 0;
    std::size_t end = 0;
    std::size_t country = 0;

    bool operator==(const Match&) const = default;
  };

  std::vector<Match> find(std::string_view text) const;

  /// Adds one to `counts[country]` per match.
  void count(std::string_view text, std::span<std::uint64_t> counts) const;

  std::size_t country_count() const noexcept { return countries_; }
  std::size_t state_count() const noexcept { return transitions_.size(); }

 private:
  struct Pattern {
    std::size_t length;
    std::size_t country;
  };

  void scan(std::string_view text, const std::function<void(const Match&)>& emit) const;

  MatchOptions options_;
  std::size_t countries_ = 0;
  std::vector<std::array<std::int32_t, 256>> transitions_;
  std::vector<std::int32_t> pattern_at_;   // pattern ending at this state, or -1
  std::vector<std::int32_t> output_link_;  // nearest proper suffix state with a pattern, or -1
  std::vector<Pattern> patterns_;
};

/// Replaces ill-formed UTF-8 with U+FFFD. Returns the number of replacements.
std::size_t sanitize_utf8(std::string& text);

/// Alias mentions in one document. Invalid UTF-8 is replaced before matching.
MentionCounts count_mentions(std::string_view document, const CandidateSet& candidates,
                             MatchOptions options = {});

enum class RecordFormat { lines, length_prefixed };

/// A file of documents: one per line, or `<byte length>\n<bytes>` records
/// (an optional newline may follow each record).
struct FileShard {
  std::filesystem::path path;
  RecordFormat format = RecordFormat::lines;
};

struct MemoryShard {
  std::vector<std::string> documents;
};

using Shard = std::variant<MemoryShard, FileShard>;

struct CorpusDataset {
  std::string name;
  double weight = 1.0;  // epochs of inclusion
  std::vector<Shard> shards;
};

/// Streams every document of a shard to `sink`.
void for_each_document(const Shard& shard, const std::function<void(std::string&)>& sink);

struct ProfileOptions {
  double floor = kDefaultCountFloor;
  std::size_t workers = 1;
  MatchOptions match;
};

struct TrainProfile {
  ProbDist dist;
  MentionCounts counts;  // weighted
  std::vector<std::string> floored_countries;
  std::vector<std::string> dataset_names;
  std::vector<double> dataset_weights;
  std::vector<std::vector<std::uint64_t>> raw_counts;  // per dataset, unweighted
};

/// Weighted mention distribution. Shards are counted in parallel and reduced
/// in an order-independent way, so the result does not depend on worker
/// count or shard order. Zero counts are raised to `floor`; throws
/// NormalizationError when everything is zero and floor is 0.
TrainProfile profile(std::span<const CorpusDataset> datasets, const CandidateSetPtr& candidates,
                     const ProfileOptions& options = {});

/// Reads `name,weight,path_glob[,format]` rows; globs are relative to the
/// manifest's directory. format is `lines` (default) or `length`.
std::vector<CorpusDataset> load_manifest(const std::filesystem::path& path);

struct DataBias {
  double truth_vs_train = 0.0;  // ER(p_true, p_train)
  double train_vs_model = 0.0;  // ER(p_train, p_model)
  double truth_vs_model = 0.0;  // ER(p_true, p_model)
};

DataBias data_bias(const ProbDist& p_true, const TrainProfile& train, const ProbDist& predictions,
                   double r);

void write_profile(std::ostream& out, const TrainProfile& profile, const DataBias* bias = nullptr,
                   double r = 0.0);
/// `country,weighted_count,probability,floored`.
void write_counts_table(std::ostream& out, const TrainProfile& profile);

}  // namespace geoerasure
