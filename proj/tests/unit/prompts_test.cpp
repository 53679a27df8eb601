#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "doctest.h"
#include "geoerasure/error.hpp"
#include "geoerasure/prompts.hpp"
#include "support.hpp"

using namespace geoerasure;

namespace {

const std::string kDataDir = std::string(GEOERASURE_FIXTURES_DIR) + "/../../data/";

SubjectConfig small_subjects() {
  SubjectConfig s;
  s.pronouns = {{"I", "i", Person::first_singular}, {"She", "she", Person::third_singular}};
  s.possessives = {{"My", "i"}, {"Her", "she"}};
  s.conjugations["live"] = {"live", "live", "lives", "live"};
  return s;
}

std::vector<std::string> texts(const PromptSet& set) {
  std::vector<std::string> out;
  for (const auto& p : set.prompts()) out.push_back(p.text);
  return out;
}

Prompt tagged(std::string text, std::string pronoun_class, std::string verb_group) {
  return Prompt{std::move(text), 1, "", std::move(pronoun_class), std::move(verb_group)};
}

void check_partition(const PromptSet& all, const PromptSplit& s) {
  CHECK(s.train.size() + s.test.size() == all.size());
  std::multiset<std::string> joined;
  for (const auto& p : s.train.prompts()) joined.insert(p.text);
  for (const auto& p : s.test.prompts()) joined.insert(p.text);
  std::multiset<std::string> expected;
  for (const auto& p : all.prompts()) expected.insert(p.text);
  CHECK(joined == expected);
}

// Plain enumeration straight from the JSON files, with no shared code.
std::set<std::string> enumerate_shipped() {
  std::ifstream tf(kDataDir + "templates.json");
  std::ifstream sf(kDataDir + "subjects.json");
  const auto templates = nlohmann::json::parse(tf).at("templates");
  const auto subjects = nlohmann::json::parse(sf);
  auto sub = [](std::string s, const std::string& slot, const std::string& value) {
    s.replace(s.find(slot), slot.size(), value);
    return s;
  };
  std::set<std::string> out;
  for (const auto& t : templates) {
    const auto pattern = t.at("pattern").get<std::string>();
    if (t.at("style") == "verb_form") {
      const auto& conj = subjects.at("conjugations").at(t.at("verb_lemma").get<std::string>());
      for (const auto& p : subjects.at("pronouns")) {
        const auto verb = conj.at(p.at("person").get<std::string>()).get<std::string>();
        out.insert(sub(sub(pattern, "{subject}", p.at("text")), "{verb}", verb));
      }
      for (const auto& q : subjects.at("possessives")) {
        for (const auto& rel : subjects.at("relatives")) {
          const auto subject = q.at("text").get<std::string>() + " " + rel.get<std::string>();
          out.insert(sub(sub(pattern, "{subject}", subject), "{verb}", conj.at("third_singular")));
        }
      }
    } else {
      for (const auto& q : subjects.at("possessives")) {
        out.insert(sub(pattern, "{possessive}", q.at("text")));
        for (const auto& rel : subjects.at("relatives")) {
          out.insert(sub(pattern, "{possessive}",
                         q.at("text").get<std::string>() + " " + rel.get<std::string>() + "'s"));
        }
      }
    }
  }
  return out;
}

}  // namespace

TEST_CASE("two-subject verb expansion") {
  const std::vector<PromptTemplate> t{{1, "{subject} {verb} in", "live", TemplateStyle::verb_form, "live in"}};
  auto subjects = small_subjects();
  subjects.possessives.clear();
  CHECK(texts(expand(t, subjects)) == std::vector<std::string>{"I live in", "She lives in"});
}

TEST_CASE("possessive expansion without relatives") {
  const std::vector<PromptTemplate> t{{4, "{possessive} homeland is", "", TemplateStyle::possessive_form, "homeland"}};
  const auto set = expand(t, small_subjects());
  CHECK(texts(set) == std::vector<std::string>{"My homeland is", "Her homeland is"});
  CHECK(set[1].pronoun_class == "she");
  CHECK(set[1].verb_group == "homeland");
}

TEST_CASE("relatives take third-person verbs and the possessive's class") {
  const std::vector<PromptTemplate> t{{2, "{subject} {verb} in", "live", TemplateStyle::verb_form, "live in"}};
  auto subjects = small_subjects();
  subjects.relatives = {"uncle"};
  const auto set = expand(t, subjects);
  CHECK(texts(set) == std::vector<std::string>{"I live in", "She lives in", "My uncle lives in",
                                               "Her uncle lives in"});
  CHECK(set[2].subject_tag == "My uncle");
  CHECK(set[2].pronoun_class == "i");
}

TEST_CASE("template validation") {
  const auto subjects = small_subjects();
  CHECK_THROWS_AS(validate_template({1, "{subject} in", "live", TemplateStyle::verb_form, ""}, subjects),
                  TemplateError);
  CHECK_THROWS_AS(validate_template({1, "{subject} {verb} {verb}", "live", TemplateStyle::verb_form, ""},
                                    subjects),
                  TemplateError);
  CHECK_THROWS_AS(validate_template({1, "{subject} {verb} {place}", "live", TemplateStyle::verb_form, ""},
                                    subjects),
                  TemplateError);
  CHECK_THROWS_AS(validate_template({1, "{subject} {verb} in", "swim", TemplateStyle::verb_form, ""},
                                    subjects),
                  TemplateError);
  CHECK_THROWS_AS(validate_template({1, "{possessive} home is", "", TemplateStyle::verb_form, ""}, subjects),
                  TemplateError);
}

TEST_CASE("shipped configuration expands to the frozen count") {
  const auto templates = load_templates(kDataDir + "templates.json");
  const auto subjects = load_subject_config(kDataDir + "subjects.json");
  CHECK(templates.size() == 16);
  const auto set = expand(templates, subjects);
  const auto oracle = enumerate_shipped();
  CHECK(set.size() == oracle.size());
  CHECK(set.size() == 1212);
  for (const auto& p : set.prompts()) CHECK(oracle.contains(p.text));
  CHECK(texts(expand(templates, subjects)) == texts(set));
}

TEST_CASE("shipped expansion agrees with the conjugation table") {
  const auto templates = load_templates(kDataDir + "templates.json");
  const auto subjects = load_subject_config(kDataDir + "subjects.json");
  const auto set = expand(templates, subjects);
  for (const auto& p : set.prompts()) {
    const auto& tmpl = *std::find_if(templates.begin(), templates.end(),
                                     [&](const auto& t) { return t.template_id == p.template_id; });
    if (tmpl.style != TemplateStyle::verb_form) continue;
    Person person = Person::third_singular;
    for (const auto& pr : subjects.pronouns) {
      if (pr.text == p.subject_tag) person = pr.person;
    }
    std::string expected = tmpl.text_pattern;
    expected.replace(expected.find("{subject}"), 9, p.subject_tag);
    expected.replace(expected.find("{verb}"), 6,
                     subjects.conjugations.at(tmpl.verb_lemma)[static_cast<std::size_t>(person)]);
    CHECK(p.text == expected);
  }
}

TEST_CASE("random split of four prompts is three and one") {
  PromptSet set({tagged("a", "i", "x"), tagged("b", "i", "x"), tagged("c", "i", "x"), tagged("d", "i", "x")});
  for (std::uint64_t seed : {0ull, 1ull, 17ull, 123456789ull}) {
    const auto s = split(set, SplitStrategy::random, seed);
    CHECK(s.train.size() == 3);
    CHECK(s.test.size() == 1);
    check_partition(set, s);
  }
}

TEST_CASE("pronoun split keeps classes on one side") {
  std::vector<Prompt> prompts;
  for (const auto* c : {"i", "you", "he", "she", "we", "they"}) {
    prompts.push_back(tagged(std::string(c) + " one", c, "live in"));
    prompts.push_back(tagged(std::string(c) + " two", c, "be from"));
  }
  const PromptSet set(prompts);
  SplitOptions options;
  options.test_groups = {"i", "he"};
  const auto s = split(set, SplitStrategy::pronoun, 3, options);
  for (const auto& p : s.test.prompts()) CHECK((p.pronoun_class == "i" || p.pronoun_class == "he"));
  for (const auto& p : s.train.prompts()) {
    CHECK((p.pronoun_class == "she" || p.pronoun_class == "you" || p.pronoun_class == "we" ||
           p.pronoun_class == "they"));
  }
  check_partition(set, s);

  const auto seeded = split(set, SplitStrategy::pronoun, 9);
  std::set<std::string> train_classes;
  for (const auto& p : seeded.train.prompts()) train_classes.insert(p.pronoun_class);
  for (const auto& p : seeded.test.prompts()) CHECK_FALSE(train_classes.contains(p.pronoun_class));
  check_partition(set, seeded);
}

TEST_CASE("verb split sends reside to the test side") {
  const PromptSet set({tagged("I live in", "i", "live in"), tagged("She is a citizen of", "she", "citizen of"),
                       tagged("I reside in", "i", "reside in"), tagged("We reside in", "we", "reside in")});
  SplitOptions options;
  options.test_groups = {"reside in"};
  const auto s = split(set, SplitStrategy::verb, 0, options);
  CHECK(texts(s.test) == std::vector<std::string>{"I reside in", "We reside in"});
  check_partition(set, s);
}

TEST_CASE("infeasible splits") {
  const PromptSet one_group({tagged("a", "i", "x"), tagged("b", "i", "x")});
  CHECK_THROWS_AS(split(one_group, SplitStrategy::verb, 0), SplitError);
  CHECK_THROWS_AS(split(one_group, SplitStrategy::pronoun, 0), SplitError);
  CHECK_THROWS_AS(split(PromptSet({tagged("a", "i", "x")}), SplitStrategy::random, 0), SplitError);
  SplitOptions all;
  all.test_groups = {"i", "he"};
  const PromptSet two({tagged("a", "i", "x"), tagged("b", "he", "x")});
  CHECK_THROWS_AS(split(two, SplitStrategy::pronoun, 0, all), SplitError);
  SplitOptions unknown;
  unknown.test_groups = {"zz"};
  CHECK_THROWS_AS(split(two, SplitStrategy::pronoun, 0, unknown), SplitError);
}

TEST_CASE("shipped prompts split every way") {
  const auto set = expand(load_templates(kDataDir + "templates.json"),
                          load_subject_config(kDataDir + "subjects.json"));
  for (auto strategy : {SplitStrategy::random, SplitStrategy::pronoun, SplitStrategy::verb}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto s = split(set, strategy, seed);
      check_partition(set, s);
      const auto again = split(set, strategy, seed);
      CHECK(texts(again.test) == texts(s.test));
    }
  }
}

TEST_CASE("prompt set round trip keeps priors and tags") {
  const PromptSet set({tagged("I live in", "i", "live in"), tagged("We live in", "we", "live in")},
                      std::vector<double>{0.25, 0.75});
  std::stringstream buf;
  write_prompt_set(buf, set);
  const auto back = read_prompt_set(buf);
  CHECK(back.prompts() == set.prompts());
  CHECK(back.priors() == set.priors());

  std::istringstream bare(R"({"prompts": ["I live in"]})");
  CHECK(read_prompt_set(bare)[0].text == "I live in");
}

TEST_CASE("split manifest lists both sides") {
  const PromptSet set({tagged("a", "i", "x"), tagged("b", "he", "y")});
  std::stringstream buf;
  write_split_manifest(buf, split(set, SplitStrategy::verb, 4));
  const auto doc = nlohmann::json::parse(buf.str());
  CHECK(doc.at("strategy") == "verb");
  CHECK(doc.at("fold_seed") == 4);
  CHECK(doc.at("train").size() + doc.at("test").size() == 2);
}
