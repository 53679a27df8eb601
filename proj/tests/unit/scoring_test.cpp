#include <cmath>
#include <map>
#include <sstream>

#include "doctest.h"
#include "geoerasure/error.hpp"
#include "geoerasure/mock_backend.hpp"
#include "geoerasure/scoring.hpp"
#include "support.hpp"

using namespace geoerasure;

namespace {

// Every continuation is split on '|'; each piece scores a fixed logprob.
class ScriptedBackend final : public ScoringBackend {
 public:
  explicit ScriptedBackend(std::map<std::string, double> per_token, bool temperature = false)
      : per_token_(std::move(per_token)) {
    descriptor_.model_label = "scripted";
    descriptor_.supports_temperature = temperature;
  }
  const BackendDescriptor& descriptor() const override { return descriptor_; }

 protected:
  ContinuationScore do_score(const ScoreRequest& request) const override {
    ContinuationScore out;
    std::string piece;
    std::istringstream in(request.continuation);
    while (std::getline(in, piece, '|')) {
      out.token_scores.push_back(TokenScore{piece, per_token_.at(piece) / request.temperature});
    }
    return out;
  }

 private:
  std::map<std::string, double> per_token_;
  BackendDescriptor descriptor_;
};

MockBackend table(const std::string& rows) {
  std::istringstream in(rows);
  return MockBackend::from_table(in);
}

}  // namespace

TEST_CASE("mock lookup of a single token") {
  const auto mock = table("I live in\t Canada\t0.2\n");
  const auto s = score_continuation(mock, "I live in", " Canada");
  REQUIRE(s.token_scores.size() == 1);
  CHECK(s.total_logprob == doctest::Approx(std::log(0.2)).epsilon(1e-15));
  CHECK(s.total_logprob == doctest::Approx(-1.6094).epsilon(1e-4));
}

TEST_CASE("sequence logprob of a listed prompt") {
  const auto mock = table("\tI live in\t0.001\n");
  CHECK(sequence_logprob(mock, "I live in") == doctest::Approx(std::log(0.001)).epsilon(1e-15));
  const auto certain = table("\tHello\t1.0\n");
  CHECK(sequence_logprob(certain, "Hello") == 0.0);
}

TEST_CASE("chain-rule total of three subtokens") {
  const ScriptedBackend backend({{"a", -1.0}, {"b", -2.0}, {"c", -0.5}});
  const auto s = score_continuation(backend, "x", "a|b|c");
  CHECK(s.token_scores.size() == 3);
  CHECK(s.total_logprob == -3.5);
}

TEST_CASE("precondition errors") {
  const MockBackend mock;
  CHECK_THROWS_AS(score_continuation(mock, "I live in", ""), ContractError);
  CHECK_THROWS_AS(sequence_logprob(mock, ""), ContractError);
  CHECK_THROWS_AS(score_continuation(mock, "a", " b", 0.0), DomainError);
  CHECK_THROWS_AS(score_continuation(mock, "a", " b", -1.0), DomainError);
  const ScriptedBackend fixed({{"a", -1.0}});
  CHECK_THROWS_AS(score_continuation(fixed, "x", "a", 0.5), CapabilityError);
  CHECK_NOTHROW(score_continuation(fixed, "x", "a", 1.0));
}

TEST_CASE("mock fallback mass and unknown contexts") {
  const auto mock = table("#fallback_vocab\t10\nctx\t A\t0.5\n");
  CHECK(mock.token_logprob("ctx", " Z") == doctest::Approx(std::log(0.05)));
  CHECK(mock.token_logprob("nowhere", " Z") == doctest::Approx(-std::log(10.0)));
  CHECK_THROWS_AS(table("ctx\tA\t0.7\nctx\tB\t0.7\n"), ValidationError);
  CHECK_THROWS_AS(table("ctx\tA\t0.5\nctx\tA\t0.1\n"), ValidationError);
  CHECK_THROWS_AS(table("ctx\tA\t0\n"), ValidationError);
}

TEST_CASE("mock tokenizer prefers the longest table token") {
  const auto mock = table("a\t Pak\t0.1\na Pak\tistan\t0.5\nb\t Pakistan\t0.1\n");
  CHECK(mock.tokenize(" Pakistan") == std::vector<std::string>{" Pakistan"});
  CHECK(mock.tokenize(" Pakis") == std::vector<std::string>{" Pak", "is"});
  CHECK(mock.tokenize(" hello world") == std::vector<std::string>{" hello", " world"});
}

TEST_CASE("chain rule: one call equals two steps") {
  const auto mock = table("I live in\t Pak\t0.1\nI live in Pak\tistan\t0.5\n");
  const auto whole = score_continuation(mock, "I live in", " Pakistan");
  const auto first = score_continuation(mock, "I live in", " Pak");
  const auto second = score_continuation(mock, "I live in Pak", "istan");
  CHECK(whole.total_logprob == first.total_logprob + second.total_logprob);
  CHECK(whole.total_logprob == doctest::Approx(std::log(0.05)));
}

TEST_CASE("country distribution normalizes over candidates") {
  const auto mock = table("p\t A\t0.3\np\t B\t0.1\n");
  const auto d = country_distribution(mock, "p", make_candidate_set({"A", "B"}));
  CHECK(d[0] == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(d[1] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("country distribution sums aliases") {
  const auto mock = table("p\t a1\t0.1\np\t a2\t0.2\np\t B\t0.3\np\t A\t0.0000001\n");
  auto run = [&](std::vector<std::string> aliases) {
    const auto cs = make_candidate_set(std::vector<Country>{make_country("A", aliases), make_country("B")});
    return country_distribution(mock, "p", cs);
  };
  const auto d = run({"a1", "a2"});
  const double a = 0.3 + 1e-7;
  CHECK(d[0] == doctest::Approx(a / (a + 0.3)).epsilon(1e-12));
  CHECK(d[0] == doctest::Approx(0.5).epsilon(1e-6));
  const auto swapped = run({"a2", "a1"});
  CHECK(swapped[0] == doctest::Approx(d[0]).epsilon(1e-15));
  CHECK(swapped[1] == doctest::Approx(d[1]).epsilon(1e-15));
}

TEST_CASE("single-country distribution is certain") {
  const MockBackend mock;
  CHECK(country_distribution(mock, "anything", make_candidate_set({"A"}))[0] == 1.0);
  CHECK_THROWS_AS(make_candidate_set(std::vector<std::string>{}), ValidationError);
}

TEST_CASE("perplexity") {
  const ScriptedBackend halves({{"h", -std::log(2.0)}, {"one", 0.0}, {"t", -1.0}, {"u", -1.0}});
  const std::vector<std::string> bits{"h|h|h|h"};
  CHECK(perplexity(halves, bits) == doctest::Approx(2.0).epsilon(1e-12));
  const std::vector<std::string> sure{"one|one"};
  CHECK(perplexity(halves, sure) == 1.0);
  const std::vector<std::string> mixed{"t|t|t", "u"};
  CHECK(perplexity(halves, mixed) == doctest::Approx(std::exp(1.0)).epsilon(1e-12));
  CHECK_THROWS_AS(perplexity(halves, std::vector<std::string>{}), ContractError);
}

TEST_CASE("mock temperature is the exact rescaled softmax") {
  const auto mock = table("#fallback_vocab\t2\nc\t x\t0.5\nc\t y\t0.3\n");
  const double tau = 0.5;
  // Full distribution: x 0.5, y 0.3, two fallback tokens 0.1 each.
  const double z = std::pow(0.5, 2.0) + std::pow(0.3, 2.0) + 2 * std::pow(0.1, 2.0);
  CHECK(mock.token_logprob("c", " x", tau) == doctest::Approx(std::log(0.25 / z)).epsilon(1e-14));
  CHECK(mock.token_logprob("c", " q", tau) == doctest::Approx(std::log(0.01 / z)).epsilon(1e-14));
  CHECK(mock.token_logprob("c", " x", 1.0) == std::log(0.5));
}

TEST_CASE("mock is deterministic and batch preserves order") {
  const auto mock = MockBackend::from_file(testing::fixture("mock_table.tsv"));
  CHECK(mock.descriptor().model_label == "fixture-mock");
  const std::vector<ScoreRequest> requests{{"I live in", " Canada", 1.0},
                                           {"I live in", " Pakistan", 1.0},
                                           {"She lives in", " India", 1.0}};
  const auto batch = mock.score_batch(requests);
  REQUIRE(batch.size() == 3);
  for (std::size_t i = 0; i < requests.size(); ++i) {
    const auto single = mock.score(requests[i]);
    CHECK(batch[i].continuation == requests[i].continuation);
    CHECK(batch[i].total_logprob == single.total_logprob);
  }
}

TEST_CASE("log_sum_exp") {
  CHECK(std::isinf(log_sum_exp(std::vector<double>{})));
  CHECK(log_sum_exp(std::vector<double>{-1000.0, -1000.0}) ==
        doctest::Approx(-1000.0 + std::log(2.0)));
}
