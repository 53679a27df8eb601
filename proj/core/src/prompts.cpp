#include "geoerasure/prompts.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "geoerasure/detail/random.hpp"
#include "geoerasure/distributions.hpp"
#include "geoerasure/error.hpp"

namespace geoerasure {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr std::string_view kSubjectSlot = "{subject}";
constexpr std::string_view kVerbSlot = "{verb}";
constexpr std::string_view kPossessiveSlot = "{possessive}";

std::size_t count_occurrences(std::string_view text, std::string_view needle) {
  std::size_t count = 0;
  for (auto pos = text.find(needle); pos != std::string_view::npos;
       pos = text.find(needle, pos + needle.size())) {
    ++count;
  }
  return count;
}

void replace_once(std::string& text, std::string_view slot, std::string_view value) {
  const auto pos = text.find(slot);
  text.replace(pos, slot.size(), value);
}

std::string template_label(const PromptTemplate& tmpl) {
  return "template " + std::to_string(tmpl.template_id) + " ('" + tmpl.text_pattern + "')";
}

bool ends_with_space(std::string_view text) {
  return !text.empty() && std::isspace(static_cast<unsigned char>(text.back()));
}

}  // namespace

PromptSet::PromptSet(std::vector<Prompt> prompts, std::optional<std::vector<double>> priors)
    : prompts_(std::move(prompts)), priors_(std::move(priors)) {
  std::unordered_set<std::string_view> texts;
  std::set<std::pair<int, std::string_view>> tags;
  for (const auto& prompt : prompts_) {
    if (prompt.text.empty() || ends_with_space(prompt.text)) {
      throw ValidationError("prompt '" + prompt.text + "' is empty or ends in whitespace");
    }
    if (!texts.insert(prompt.text).second) {
      throw ValidationError("duplicate prompt '" + prompt.text + "'");
    }
    if (!prompt.subject_tag.empty() &&
        !tags.emplace(prompt.template_id, prompt.subject_tag).second) {
      throw ValidationError("duplicate (template, subject) pair for '" + prompt.text + "'");
    }
  }
  if (priors_) {
    if (priors_->size() != prompts_.size()) {
      throw ValidationError("prior count does not match prompt count");
    }
    double sum = 0.0;
    for (const double w : *priors_) {
      if (!(w > 0.0) || !std::isfinite(w)) throw ValidationError("priors must be positive");
      sum += w;
    }
    if (std::abs(sum - 1.0) > kNormalizationTolerance) {
      throw ValidationError("priors must sum to 1");
    }
  }
}

void validate_template(const PromptTemplate& tmpl, const SubjectConfig& subjects) {
  const auto& pattern = tmpl.text_pattern;
  const auto n_subject = count_occurrences(pattern, kSubjectSlot);
  const auto n_verb = count_occurrences(pattern, kVerbSlot);
  const auto n_possessive = count_occurrences(pattern, kPossessiveSlot);
  if (tmpl.style == TemplateStyle::verb_form) {
    if (n_subject != 1 || n_verb != 1 || n_possessive != 0) {
      throw TemplateError(template_label(tmpl) +
                          ": verb_form needs exactly one {subject} and one {verb} slot");
    }
    if (!subjects.conjugations.contains(tmpl.verb_lemma)) {
      throw TemplateError(template_label(tmpl) + ": no conjugation for verb '" +
                          tmpl.verb_lemma + "'");
    }
  } else if (n_possessive != 1 || n_subject != 0 || n_verb != 0) {
    throw TemplateError(template_label(tmpl) +
                        ": possessive_form needs exactly one {possessive} slot");
  }
  std::string rest = pattern;
  for (const auto slot : {kSubjectSlot, kVerbSlot, kPossessiveSlot}) {
    for (auto pos = rest.find(slot); pos != std::string::npos; pos = rest.find(slot)) {
      rest.erase(pos, slot.size());
    }
  }
  if (rest.find_first_of("{}") != std::string::npos) {
    throw TemplateError(template_label(tmpl) + ": unknown placeholder");
  }
  if (ends_with_space(pattern)) throw TemplateError(template_label(tmpl) + ": trailing whitespace");
}

PromptSet expand(std::span<const PromptTemplate> templates, const SubjectConfig& subjects) {
  if (templates.empty()) throw TemplateError("no templates to expand");
  for (const auto& [lemma, forms] : subjects.conjugations) {
    if (std::any_of(forms.begin(), forms.end(), [](const auto& f) { return f.empty(); })) {
      throw TemplateError("conjugation of '" + lemma + "' is incomplete");
    }
  }

  std::vector<Prompt> prompts;
  std::unordered_set<std::string> seen;
  auto emit = [&](const PromptTemplate& tmpl, std::string text, std::string tag,
                  std::string pronoun_class) {
    if (!seen.insert(text).second) return;
    prompts.push_back(Prompt{std::move(text), tmpl.template_id, std::move(tag),
                             std::move(pronoun_class), tmpl.verb_group});
  };

  for (const auto& tmpl : templates) {
    validate_template(tmpl, subjects);
    if (tmpl.style == TemplateStyle::verb_form) {
      const auto& forms = subjects.conjugations.at(tmpl.verb_lemma);
      auto fill = [&](const std::string& subject, Person person) {
        std::string text = tmpl.text_pattern;
        replace_once(text, kSubjectSlot, subject);
        replace_once(text, kVerbSlot, forms[static_cast<std::size_t>(person)]);
        return text;
      };
      for (const auto& pronoun : subjects.pronouns) {
        emit(tmpl, fill(pronoun.text, pronoun.person), pronoun.text, pronoun.pronoun_class);
      }
      for (const auto& possessive : subjects.possessives) {
        for (const auto& relative : subjects.relatives) {
          const auto subject = possessive.text + " " + relative;
          emit(tmpl, fill(subject, Person::third_singular), subject, possessive.pronoun_class);
        }
      }
    } else {
      auto fill = [&](const std::string& owner) {
        std::string text = tmpl.text_pattern;
        replace_once(text, kPossessiveSlot, owner);
        return text;
      };
      for (const auto& possessive : subjects.possessives) {
        emit(tmpl, fill(possessive.text), possessive.text, possessive.pronoun_class);
      }
      for (const auto& possessive : subjects.possessives) {
        for (const auto& relative : subjects.relatives) {
          const auto subject = possessive.text + " " + relative;
          emit(tmpl, fill(subject + "'s"), subject, possessive.pronoun_class);
        }
      }
    }
  }
  return PromptSet(std::move(prompts));
}

std::string_view to_string(SplitStrategy strategy) {
  switch (strategy) {
    case SplitStrategy::random: return "random";
    case SplitStrategy::pronoun: return "pronoun";
    case SplitStrategy::verb: return "verb";
  }
  return "random";
}

SplitStrategy parse_split_strategy(std::string_view text) {
  if (text == "random") return SplitStrategy::random;
  if (text == "pronoun") return SplitStrategy::pronoun;
  if (text == "verb") return SplitStrategy::verb;
  throw SplitError("unknown split strategy '" + std::string(text) + "'");
}

namespace {

PromptSet subset(const PromptSet& prompts, const std::vector<std::size_t>& indices) {
  std::vector<Prompt> chosen;
  chosen.reserve(indices.size());
  for (const auto i : indices) chosen.push_back(prompts[i]);
  std::optional<std::vector<double>> priors;
  if (prompts.priors()) {
    std::vector<double> weights;
    double total = 0.0;
    for (const auto i : indices) total += (*prompts.priors())[i];
    for (const auto i : indices) weights.push_back((*prompts.priors())[i] / total);
    priors = std::move(weights);
  }
  return PromptSet(std::move(chosen), std::move(priors));
}

std::size_t clamp_side(double fraction, std::size_t n) {
  const auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  return std::clamp<std::size_t>(k, 1, n - 1);
}

}  // namespace

PromptSplit split(const PromptSet& prompts, SplitStrategy strategy, std::uint64_t fold_seed,
                  const SplitOptions& options) {
  if (prompts.size() < 2) throw SplitError("need at least 2 prompts to split");
  if (!(options.train_fraction > 0.0 && options.train_fraction < 1.0)) {
    throw SplitError("train fraction must lie in (0, 1)");
  }
  std::mt19937_64 rng(fold_seed);
  std::vector<bool> in_test(prompts.size(), false);
  std::vector<std::string> test_groups;

  if (strategy == SplitStrategy::random) {
    std::vector<std::size_t> order(prompts.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    detail::shuffle(std::span(order), rng);
    const auto n_train = clamp_side(options.train_fraction, prompts.size());
    for (std::size_t k = n_train; k < order.size(); ++k) in_test[order[k]] = true;
  } else {
    auto key = [strategy](const Prompt& p) -> const std::string& {
      return strategy == SplitStrategy::pronoun ? p.pronoun_class : p.verb_group;
    };
    std::vector<std::string> groups;
    for (const auto& p : prompts.prompts()) {
      if (std::find(groups.begin(), groups.end(), key(p)) == groups.end()) groups.push_back(key(p));
    }
    if (groups.size() < 2) {
      throw SplitError(std::string(to_string(strategy)) + " split needs at least 2 groups, found " +
                       std::to_string(groups.size()));
    }
    if (!options.test_groups.empty()) {
      for (const auto& g : options.test_groups) {
        if (std::find(groups.begin(), groups.end(), g) == groups.end()) {
          throw SplitError("unknown split group '" + g + "'");
        }
      }
      test_groups = options.test_groups;
    } else {
      detail::shuffle(std::span(groups), rng);
      const auto n_test = clamp_side(1.0 - options.train_fraction, groups.size());
      test_groups.assign(groups.begin(), groups.begin() + static_cast<std::ptrdiff_t>(n_test));
      std::sort(test_groups.begin(), test_groups.end());
    }
    for (std::size_t i = 0; i < prompts.size(); ++i) {
      in_test[i] = std::find(test_groups.begin(), test_groups.end(), key(prompts[i])) !=
                   test_groups.end();
    }
  }

  std::vector<std::size_t> train_idx;
  std::vector<std::size_t> test_idx;
  for (std::size_t i = 0; i < prompts.size(); ++i) (in_test[i] ? test_idx : train_idx).push_back(i);
  if (train_idx.empty() || test_idx.empty()) {
    throw SplitError("split leaves one side empty");
  }
  return PromptSplit{subset(prompts, train_idx), subset(prompts, test_idx), strategy, fold_seed,
                     std::move(test_groups)};
}

namespace {

std::ifstream open_or_throw(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError("cannot open '" + path.string() + "'");
  return in;
}

json parse_json(std::istream& in, std::string_view what) {
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw SchemaError(std::string(what) + ": " + e.what());
  }
}

Person parse_person(const std::string& text) {
  if (text == "first_singular") return Person::first_singular;
  if (text == "second") return Person::second;
  if (text == "third_singular") return Person::third_singular;
  if (text == "plural") return Person::plural;
  throw SchemaError("unknown person '" + text + "'");
}

}  // namespace

std::vector<PromptTemplate> load_templates(std::istream& in) {
  const auto doc = parse_json(in, "templates file");
  std::vector<PromptTemplate> templates;
  try {
    for (const auto& item : doc.at("templates")) {
      PromptTemplate t;
      t.template_id = item.at("id").get<int>();
      t.text_pattern = item.at("pattern").get<std::string>();
      const auto style = item.at("style").get<std::string>();
      if (style == "verb_form") {
        t.style = TemplateStyle::verb_form;
      } else if (style == "possessive_form") {
        t.style = TemplateStyle::possessive_form;
      } else {
        throw SchemaError("unknown template style '" + style + "'");
      }
      t.verb_lemma = item.value("verb_lemma", "");
      t.verb_group = item.value("verb_group", t.text_pattern);
      templates.push_back(std::move(t));
    }
  } catch (const json::exception& e) {
    throw SchemaError(std::string("templates file: ") + e.what());
  }
  return templates;
}

std::vector<PromptTemplate> load_templates(const std::filesystem::path& path) {
  auto in = open_or_throw(path);
  return load_templates(in);
}

SubjectConfig load_subject_config(std::istream& in) {
  const auto doc = parse_json(in, "subjects file");
  SubjectConfig config;
  try {
    for (const auto& p : doc.at("pronouns")) {
      config.pronouns.push_back(Pronoun{p.at("text").get<std::string>(),
                                        p.at("class").get<std::string>(),
                                        parse_person(p.at("person").get<std::string>())});
    }
    for (const auto& p : doc.at("possessives")) {
      config.possessives.push_back(
          Possessive{p.at("text").get<std::string>(), p.at("class").get<std::string>()});
    }
    config.relatives = doc.at("relatives").get<std::vector<std::string>>();
    for (const auto& [lemma, forms] : doc.at("conjugations").items()) {
      std::array<std::string, 4> row;
      row[0] = forms.at("first_singular").get<std::string>();
      row[1] = forms.at("second").get<std::string>();
      row[2] = forms.at("third_singular").get<std::string>();
      row[3] = forms.at("plural").get<std::string>();
      config.conjugations.emplace(lemma, std::move(row));
    }
  } catch (const json::exception& e) {
    throw SchemaError(std::string("subjects file: ") + e.what());
  }
  return config;
}

SubjectConfig load_subject_config(const std::filesystem::path& path) {
  auto in = open_or_throw(path);
  return load_subject_config(in);
}

namespace {

ordered_json prompt_to_json(const Prompt& p) {
  ordered_json j;
  j["text"] = p.text;
  j["template_id"] = p.template_id;
  j["subject"] = p.subject_tag;
  j["pronoun_class"] = p.pronoun_class;
  j["verb_group"] = p.verb_group;
  return j;
}

}  // namespace

void write_prompt_set(std::ostream& out, const PromptSet& prompts) {
  ordered_json doc;
  doc["count"] = prompts.size();
  doc["prompts"] = ordered_json::array();
  for (const auto& p : prompts.prompts()) doc["prompts"].push_back(prompt_to_json(p));
  if (prompts.priors()) doc["priors"] = *prompts.priors();
  out << doc.dump(2) << '\n';
}

PromptSet read_prompt_set(std::istream& in) {
  const auto doc = parse_json(in, "prompt set");
  std::vector<Prompt> prompts;
  std::optional<std::vector<double>> priors;
  try {
    for (const auto& item : doc.at("prompts")) {
      if (item.is_string()) {
        prompts.push_back(Prompt{item.get<std::string>(), 0, "", "", ""});
        continue;
      }
      prompts.push_back(Prompt{item.at("text").get<std::string>(), item.value("template_id", 0),
                               item.value("subject", ""), item.value("pronoun_class", ""),
                               item.value("verb_group", "")});
    }
    if (doc.contains("priors")) priors = doc.at("priors").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw SchemaError(std::string("prompt set: ") + e.what());
  }
  return PromptSet(std::move(prompts), std::move(priors));
}

PromptSet read_prompt_set(const std::filesystem::path& path) {
  auto in = open_or_throw(path);
  return read_prompt_set(in);
}

void write_split_manifest(std::ostream& out, const PromptSplit& split) {
  ordered_json doc;
  doc["strategy"] = std::string(to_string(split.strategy));
  doc["fold_seed"] = split.fold_seed;
  doc["test_groups"] = split.test_groups;
  doc["train"] = ordered_json::array();
  for (const auto& p : split.train.prompts()) doc["train"].push_back(prompt_to_json(p));
  doc["test"] = ordered_json::array();
  for (const auto& p : split.test.prompts()) doc["test"].push_back(prompt_to_json(p));
  out << doc.dump(2) << '\n';
}

}  // namespace geoerasure
