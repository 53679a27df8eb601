#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "doctest.h"
#include "geoerasure/corpus.hpp"
#include "geoerasure/error.hpp"
#include "naive_scan.hpp"
#include "support.hpp"

using namespace geoerasure;
namespace fs = std::filesystem;

namespace {

std::vector<std::uint64_t> raw(const MentionCounts& m) {
  std::vector<std::uint64_t> out;
  for (double c : m.counts) out.push_back(static_cast<std::uint64_t>(c));
  return out;
}

CandidateSetPtr uk_set() {
  return make_candidate_set(std::vector<Country>{make_country("United Kingdom", {"UK", "Britain"}),
                                                 make_country("Ukraine"), make_country("Canada")});
}

CorpusDataset memory(std::string name, double weight, std::vector<std::vector<std::string>> shards) {
  CorpusDataset d{std::move(name), weight, {}};
  for (auto& docs : shards) d.shards.emplace_back(MemoryShard{std::move(docs)});
  return d;
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("geoerasure_corpus_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  void write(const std::string& name, const std::string& content) const {
    std::ofstream(path / name, std::ios::binary) << content;
  }
};

}  // namespace

TEST_CASE("repeated mentions") {
  const auto cs = uk_set();
  const auto m = count_mentions("I visited Canada. Canada is cold.", *cs);
  CHECK(raw(m) == std::vector<std::uint64_t>{0, 0, 2});
  CHECK(m.total_documents == 1);
}

TEST_CASE("aliases respect word boundaries") {
  const auto cs = uk_set();
  const std::string text = "The United Kingdom (UK) differs from Ukraine.";
  CHECK(raw(count_mentions(text, *cs)) == std::vector<std::uint64_t>{2, 1, 0});
  CHECK(raw(count_mentions(text, *cs)) == testing::naive_counts(text, *cs));
  CHECK(raw(count_mentions("UKraine UKs xUK UK9 UK-based", *cs)) == std::vector<std::uint64_t>{1, 0, 0});
}

TEST_CASE("empty document counts nothing") {
  const auto cs = uk_set();
  const auto m = count_mentions("", *cs);
  CHECK(raw(m) == std::vector<std::uint64_t>{0, 0, 0});
  CHECK(m.total_bytes == 0);
}

TEST_CASE("leftmost-longest resolution") {
  const auto cs = make_candidate_set(std::vector<Country>{
      make_country("Guinea"), make_country("Papua New Guinea"), make_country("New Zealand", {"New"})});
  const AliasMatcher matcher(*cs);
  const auto found = matcher.find("Papua New Guinea and New Guinea");
  REQUIRE(found.size() == 3);
  CHECK(found[0] == AliasMatcher::Match{0, 16, 1});
  CHECK(found[1].country == 2);
  CHECK(found[2].country == 0);
}

TEST_CASE("non-ASCII letters are word bytes") {
  const auto cs = make_candidate_set({"Chad"});
  CHECK(raw(count_mentions("Chad\xC3\xA9 \xC3\xA9" "Chad Chad\xE2\x80\x94!", *cs)) ==
        std::vector<std::uint64_t>{0});
  CHECK(raw(count_mentions("(Chad) Chad's", *cs)) == std::vector<std::uint64_t>{2});
}

TEST_CASE("case folding") {
  const auto cs = uk_set();
  CHECK(raw(count_mentions("canada CANADA uk", *cs)) == std::vector<std::uint64_t>{0, 0, 0});
  MatchOptions fold;
  fold.case_insensitive = true;
  CHECK(raw(count_mentions("canada CANADA uk", *cs, fold)) == std::vector<std::uint64_t>{1, 0, 2});
  const auto clash = make_candidate_set(std::vector<Country>{make_country("A", {"us"}), make_country("B", {"US"})});
  CHECK_NOTHROW(AliasMatcher(*clash));
  CHECK_THROWS_AS(AliasMatcher(*clash, fold), ValidationError);
}

TEST_CASE("ill-formed UTF-8 becomes U+FFFD per maximal subpart") {
  std::string s = "a\xC0\xAF" "b";
  CHECK(sanitize_utf8(s) == 2);
  CHECK(s == "a\xEF\xBF\xBD\xEF\xBF\xBD" "b");
  std::string t = "\xE2\x82";
  CHECK(sanitize_utf8(t) == 1);
  CHECK(t == "\xEF\xBF\xBD");
  std::string u = "\xF0\x9F\x98\x80 ok";
  CHECK(sanitize_utf8(u) == 0);
  std::string v = "\xED\xA0\x80";
  CHECK(sanitize_utf8(v) == 3);
  std::string w = "\xF4\x90\x80\x80";
  CHECK(sanitize_utf8(w) == 4);
  std::string x = "\xE1\x80" "A";
  CHECK(sanitize_utf8(x) == 1);
  CHECK(x == "\xEF\xBF\xBD" "A");
  const auto cs = make_candidate_set({"Chad"});
  const auto m = count_mentions("\xFF" "Chad\xFE", *cs);
  CHECK(m.invalid_utf8_sequences == 2);
  CHECK(raw(m) == std::vector<std::uint64_t>{0});
}

TEST_CASE("matcher agrees with the naive scan on synthetic documents") {
  const auto cs = make_candidate_set(std::vector<Country>{
      make_country("United Kingdom", {"UK", "Britain", "Great Britain"}), make_country("Ukraine"),
      make_country("Niger"), make_country("Nigeria"), make_country("Guinea"),
      make_country("Papua New Guinea"), make_country("Dominica"), make_country("Dominican Republic"),
      make_country("India", {"Bharat"})});
  std::mt19937_64 rng(2024);
  MatchOptions fold;
  fold.case_insensitive = true;
  for (int k = 0; k < 200; ++k) {
    auto doc = testing::synthetic_document(rng, *cs, 2000);
    const auto m = count_mentions(doc, *cs);
    sanitize_utf8(doc);
    CHECK(raw(m) == testing::naive_counts(doc, *cs));
    CHECK(raw(count_mentions(doc, *cs, fold)) == testing::naive_counts(doc, *cs, true));
  }
}

TEST_CASE("profile of one dataset") {
  const auto cs = make_candidate_set({"A", "B"});
  const std::vector<CorpusDataset> data{memory("d", 1.0, {{"A A A B"}})};
  const auto p = profile(data, cs);
  CHECK(p.dist[0] == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(p.dist[1] == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(p.raw_counts == std::vector<std::vector<std::uint64_t>>{{3, 1}});
}

TEST_CASE("profile weights datasets") {
  const auto cs = make_candidate_set({"A", "B"});
  const std::vector<CorpusDataset> data{memory("one", 2.0, {{"A"}}), memory("two", 1.0, {{"B B", "B"}})};
  const auto p = profile(data, cs);
  CHECK(p.counts.counts == std::vector<double>{2.0, 3.0});
  CHECK(p.dist[0] == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(p.dist[1] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(p.dataset_names == std::vector<std::string>{"one", "two"});
  CHECK(p.dataset_weights == std::vector<double>{2.0, 1.0});

  const std::vector<CorpusDataset> doubled{memory("one", 4.0, {{"A"}}), memory("two", 2.0, {{"B B", "B"}})};
  const auto q = profile(doubled, cs);
  CHECK(q.counts.counts == std::vector<double>{4.0, 6.0});
  CHECK(q.dist[0] == doctest::Approx(p.dist[0]).epsilon(1e-15));
  CHECK(q.dist[1] == doctest::Approx(p.dist[1]).epsilon(1e-15));
}

TEST_CASE("profile floors and rejects") {
  const auto cs = make_candidate_set({"A", "B", "C"});
  const std::vector<CorpusDataset> data{memory("d", 1.0, {{"A B"}})};
  const auto p = profile(data, cs);
  CHECK(p.floored_countries == std::vector<std::string>{"C"});
  CHECK(p.dist[2] > 0.0);
  CHECK(p.dist[2] < 1e-11);

  ProfileOptions strict;
  strict.floor = 0.0;
  CHECK(profile(data, cs, strict).dist[2] == 0.0);
  const std::vector<CorpusDataset> silent{memory("d", 1.0, {{"nothing here"}})};
  CHECK_THROWS_AS(profile(silent, cs, strict), NormalizationError);
  CHECK_NOTHROW(profile(silent, cs));
  CHECK_THROWS_AS(profile(std::vector<CorpusDataset>{}, cs), ContractError);
  const std::vector<CorpusDataset> negative{memory("d", -1.0, {{"A"}})};
  CHECK_THROWS_AS(profile(negative, cs), ValidationError);
}

TEST_CASE("profile does not depend on workers or shard order") {
  const auto cs = make_candidate_set(std::vector<Country>{make_country("United Kingdom", {"UK"}),
                                                          make_country("Ukraine"), make_country("Chad")});
  std::mt19937_64 rng(7);
  std::vector<std::vector<std::string>> shards(6);
  for (auto& shard : shards) {
    for (int k = 0; k < 20; ++k) shard.push_back(testing::synthetic_document(rng, *cs, 500));
  }
  auto reversed = shards;
  std::reverse(reversed.begin(), reversed.end());
  const std::vector<CorpusDataset> forward{memory("a", 1.5, shards), memory("b", 0.5, {shards[0]})};
  const std::vector<CorpusDataset> backward{memory("a", 1.5, reversed), memory("b", 0.5, {shards[0]})};
  ProfileOptions one;
  ProfileOptions many;
  many.workers = 4;
  const auto base = profile(forward, cs, one);
  for (const auto& other : {profile(forward, cs, many), profile(backward, cs, one), profile(backward, cs, many)}) {
    CHECK(other.counts.counts == base.counts.counts);
    CHECK(std::equal(other.dist.probs().begin(), other.dist.probs().end(), base.dist.probs().begin()));
    CHECK(other.raw_counts == base.raw_counts);
  }

  std::vector<std::uint64_t> summed(cs->size(), 0);
  for (const auto& shard : shards) {
    for (const auto& doc : shard) {
      const auto m = count_mentions(doc, *cs);
      for (std::size_t i = 0; i < summed.size(); ++i) summed[i] += static_cast<std::uint64_t>(m.counts[i]);
    }
  }
  CHECK(base.raw_counts[0] == summed);
}

TEST_CASE("merge is additive") {
  MentionCounts a(2);
  a.counts = {1.0, 2.0};
  a.total_documents = 3;
  MentionCounts b(2);
  b.counts = {4.0, 0.0};
  b.total_documents = 1;
  a.merge(b);
  CHECK(a.counts == std::vector<double>{5.0, 2.0});
  CHECK(a.total_documents == 4);
  MentionCounts wrong(3);
  CHECK_THROWS_AS(a.merge(wrong), ContractError);
}

TEST_CASE("file shards and manifests") {
  const TempDir dir;
  dir.write("a1.txt", "Chad and Chad\nno mention\n");
  dir.write("a2.txt", "Chad");
  const std::string first = "Chad\nChad";
  const std::string second = "none";
  dir.write("b.rec", std::to_string(first.size()) + "\n" + first + "\n" + std::to_string(second.size()) +
                         "\n" + second);
  dir.write("manifest.csv", "name,weight,path_glob,format\nweb,2,a*.txt,lines\nbooks,1,b.rec,length\n");

  std::vector<std::string> docs;
  for_each_document(FileShard{dir.path / "b.rec", RecordFormat::length_prefixed},
                    [&](std::string& d) { docs.push_back(d); });
  CHECK(docs == std::vector<std::string>{"Chad\nChad", "none"});

  const auto datasets = load_manifest(dir.path / "manifest.csv");
  REQUIRE(datasets.size() == 2);
  CHECK(datasets[0].shards.size() == 2);
  CHECK(datasets[0].weight == 2.0);
  const auto cs = make_candidate_set({"Chad", "Mali"});
  const auto p = profile(datasets, cs);
  CHECK(p.raw_counts == std::vector<std::vector<std::uint64_t>>{{3, 0}, {2, 0}});
  CHECK(p.counts.counts[0] == 8.0);
  CHECK(p.counts.total_documents == 5);

  dir.write("bad.csv", "name,weight,path_glob\nweb,1,missing*.txt\n");
  CHECK_THROWS_AS(load_manifest(dir.path / "bad.csv"), SchemaError);
  dir.write("bad2.csv", "name,weight\nweb,1\n");
  CHECK_THROWS_AS(load_manifest(dir.path / "bad2.csv"), SchemaError);
  dir.write("trunc.rec", "50\nshort");
  CHECK_THROWS_AS(for_each_document(FileShard{dir.path / "trunc.rec", RecordFormat::length_prefixed},
                                    [](std::string&) {}),
                  SchemaError);
}

TEST_CASE("data bias triple") {
  const auto cs = make_candidate_set({"A", "B"});
  const std::vector<CorpusDataset> data{memory("d", 1.0, {{"A A A B"}})};
  const auto train = profile(data, cs);
  const ProbDist truth(cs, {0.75, 0.25});
  const ProbDist model(cs, {0.95, 0.05});
  const auto bias = data_bias(truth, train, model, 3.0);
  CHECK(bias.truth_vs_train == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(bias.train_vs_model == doctest::Approx(0.25 * std::log(5.0)));
  CHECK(bias.truth_vs_model == doctest::Approx(0.25 * std::log(5.0)));
  CHECK(data_bias(truth, train, train.dist, 3.0).train_vs_model == 0.0);

  std::ostringstream json;
  write_profile(json, train, &bias, 3.0);
  CHECK(json.str().find("geoerasure.train_profile/1") != std::string::npos);
  std::ostringstream csv;
  write_counts_table(csv, train);
  CHECK(csv.str().rfind("country,weighted_count,probability,floored\n", 0) == 0);
}
