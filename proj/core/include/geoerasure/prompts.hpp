#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace geoerasure {

enum class TemplateStyle { verb_form, possessive_form };

/// Grammatical person a subject takes; indexes a conjugation row.
enum class Person { first_singular = 0, second = 1, third_singular = 2, plural = 3 };

/// A base formulation. Slots are written `{subject}`, `{verb}` and
/// `{possessive}`: verb_form patterns have exactly one subject and one verb
/// slot, possessive_form patterns exactly one possessive slot.
struct PromptTemplate {
  int template_id = 0;
  std::string text_pattern;
  std::string verb_lemma;
  TemplateStyle style = TemplateStyle::verb_form;
  std::string verb_group;
};

struct Pronoun {
  std::string text;           // "She"
  std::string pronoun_class;  // "she"
  Person person = Person::third_singular;
};

struct Possessive {
  std::string text;           // "Her"
  std::string pronoun_class;  // "she"
};

/// Subjects substituted into templates plus the verb conjugation table.
/// Conjugations are indexed by Person.
struct SubjectConfig {
  std::vector<Pronoun> pronouns;
  std::vector<Possessive> possessives;
  std::vector<std::string> relatives;
  std::map<std::string, std::array<std::string, 4>> conjugations;
};

struct Prompt {
  std::string text;
  int template_id = 0;
  std::string subject_tag;    // "She", "Her", "Her uncle"
  std::string pronoun_class;  // split key for the pronoun strategy
  std::string verb_group;     // split key for the verb strategy

  bool operator==(const Prompt&) const = default;
};

/// Expanded prompt corpus with optional prior weights.
class PromptSet {
 public:
  PromptSet() = default;
  explicit PromptSet(std::vector<Prompt> prompts,
                     std::optional<std::vector<double>> priors = std::nullopt);

  const std::vector<Prompt>& prompts() const noexcept { return prompts_; }
  const std::optional<std::vector<double>>& priors() const noexcept { return priors_; }
  std::size_t size() const noexcept { return prompts_.size(); }
  bool empty() const noexcept { return prompts_.empty(); }
  const Prompt& operator[](std::size_t i) const { return prompts_[i]; }

 private:
  std::vector<Prompt> prompts_;
  std::optional<std::vector<double>> priors_;
};

/// Expands every template with every applicable subject, template-major and
/// subject-minor. Verb-form subjects are the pronouns followed by
/// possessive x relative phrases; possessive-form subjects are the bare
/// possessives followed by "<possessive> <relative>'s".
PromptSet expand(std::span<const PromptTemplate> templates, const SubjectConfig& subjects);

/// Throws TemplateError when slots are missing, repeated or unknown.
void validate_template(const PromptTemplate& tmpl, const SubjectConfig& subjects);

enum class SplitStrategy { random, pronoun, verb };

std::string_view to_string(SplitStrategy strategy);
SplitStrategy parse_split_strategy(std::string_view text);

struct SplitOptions {
  /// Groups forced onto the test side (pronoun or verb strategy). When empty,
  /// a seeded quarter of the groups is chosen.
  std::vector<std::string> test_groups;
  double train_fraction = 0.75;
};

struct PromptSplit {
  PromptSet train;
  PromptSet test;
  SplitStrategy strategy = SplitStrategy::random;
  std::uint64_t fold_seed = 0;
  std::vector<std::string> test_groups;
};

/// Partitions prompts into disjoint train/test sets. Relative order is kept
/// on each side. Throws SplitError when the strategy cannot produce two
/// non-empty sides.
PromptSplit split(const PromptSet& prompts, SplitStrategy strategy, std::uint64_t fold_seed,
                  const SplitOptions& options = {});

std::vector<PromptTemplate> load_templates(std::istream& in);
std::vector<PromptTemplate> load_templates(const std::filesystem::path& path);
SubjectConfig load_subject_config(std::istream& in);
SubjectConfig load_subject_config(const std::filesystem::path& path);

void write_prompt_set(std::ostream& out, const PromptSet& prompts);
PromptSet read_prompt_set(std::istream& in);
PromptSet read_prompt_set(const std::filesystem::path& path);

void write_split_manifest(std::ostream& out, const PromptSplit& split);

}  // namespace geoerasure
