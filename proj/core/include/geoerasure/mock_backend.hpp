#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <functional>
#include <map>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "geoerasure/scoring.hpp"

namespace geoerasure {

/// Deterministic table-driven backend.
///
/// The table lists conditional next-token probabilities per context. In a
/// listed context the unlisted remainder 1 - sum(listed) is spread over
/// `fallback_vocab_size` fallback tokens; an unlisted context is uniform over
/// the fallback vocabulary. Text is tokenized greedily: at each position the
/// longest token that appears anywhere in the table wins, otherwise the next
/// whitespace-delimited chunk (leading spaces included) is one token.
///
/// Temperature is exact: each context's full distribution (listed tokens plus
/// fallback tokens) is raised to 1/tau and renormalized.
///
/// File format, one row per line:
///   context<TAB>next_token<TAB>probability
/// plus optional directives `#fallback_vocab<TAB>N` and `#model<TAB>label`.
/// Other lines starting with `#` are comments. An empty context field is the
/// start of text.
class MockBackend final : public ScoringBackend {
 public:
  static constexpr std::size_t kDefaultFallbackVocab = 50257;

  MockBackend() : MockBackend(kDefaultFallbackVocab) {}
  explicit MockBackend(std::size_t fallback_vocab_size, std::string model_label = "mock");

  static MockBackend from_table(std::istream& in);
  static MockBackend from_file(const std::filesystem::path& path);

  /// Adds P(token | context). Throws ValidationError on duplicates, on
  /// probabilities outside (0, 1] and when a context's mass exceeds 1.
  MockBackend& add(const std::string& context, const std::string& token, double probability);

  const BackendDescriptor& descriptor() const override { return descriptor_; }

  std::vector<std::string> tokenize(std::string_view text) const;

  /// log P_tau(token | context).
  double token_logprob(const std::string& context, const std::string& token,
                       double temperature = 1.0) const;

 protected:
  ContinuationScore do_score(const ScoreRequest& request) const override;

 private:
  struct Context {
    std::map<std::string, double> next;
    double listed_mass = 0.0;
  };

  std::size_t fallback_vocab_size_;
  BackendDescriptor descriptor_;
  std::unordered_map<std::string, Context> table_;
  std::map<std::size_t, std::unordered_set<std::string>, std::greater<>> vocab_by_length_;
};

}  // namespace geoerasure
