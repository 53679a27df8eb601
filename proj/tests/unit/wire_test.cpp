#include <atomic>
#include <chrono>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "doctest.h"
#include "geoerasure/error.hpp"
#include "geoerasure/mock_backend.hpp"
#include "geoerasure/wire_backend.hpp"
#include "support.hpp"

using namespace geoerasure;
using nlohmann::json;

namespace {

WireOptions fast(const std::string& url) {
  WireOptions o;
  o.url = url;
  o.max_retries = 2;
  o.initial_backoff = std::chrono::milliseconds(5);
  o.timeout = std::chrono::seconds(5);
  return o;
}

// Minimal hand-written server for error paths the real server never takes.
struct RawServer {
  httplib::Server server;
  std::thread thread;
  int port = 0;

  void start() {
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~RawServer() {
    server.stop();
    if (thread.joinable()) thread.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port); }
};

void serve_info(httplib::Server& s, bool temperature) {
  s.Get("/info", [temperature](const httplib::Request&, httplib::Response& res) {
    res.set_content(json{{"model_label", "raw"}, {"supports_temperature", temperature}}.dump(),
                    "application/json");
  });
}

}  // namespace

TEST_CASE("wire round trip matches the served mock") {
  const auto mock = MockBackend::from_file(testing::fixture("mock_table.tsv"));
  WireServer server(mock);
  const int port = server.start();
  const WireBackend client(fast("http://127.0.0.1:" + std::to_string(port)));
  CHECK(client.descriptor().model_label == "fixture-mock");
  CHECK(client.descriptor().backend_kind == BackendKind::wire_client);
  CHECK(client.descriptor().supports_temperature);
  CHECK(client.supports_batch());

  const std::vector<ScoreRequest> requests{{"I live in", " Canada", 1.0},
                                           {"I live in", " Pakistan", 1.0},
                                           {"We grew up in", " Nigeria", 0.7},
                                           {"", "I live in", 1.0}};
  const auto batch = client.score_batch(requests);
  REQUIRE(batch.size() == requests.size());
  for (std::size_t i = 0; i < requests.size(); ++i) {
    const auto local = mock.score(requests[i]);
    const auto remote = client.score(requests[i]);
    CHECK(remote.total_logprob == doctest::Approx(local.total_logprob).epsilon(1e-12));
    CHECK(batch[i].total_logprob == doctest::Approx(local.total_logprob).epsilon(1e-12));
    CHECK(remote.token_scores.size() == local.token_scores.size());
  }
  const auto cs = make_candidate_set({"Canada", "Nigeria"});
  const auto a = country_distribution(client, "I live in", cs);
  const auto b = country_distribution(mock, "I live in", cs);
  CHECK(a[0] == doctest::Approx(b[0]).epsilon(1e-12));
  server.stop();
}

TEST_CASE("chain rule holds across the wire") {
  const auto mock = MockBackend::from_file(testing::fixture("mock_table.tsv"));
  WireServer server(mock);
  const WireBackend client(fast("http://127.0.0.1:" + std::to_string(server.start())));
  const auto whole = score_continuation(client, "I live in", " Pakistan");
  double parts = 0.0;
  std::string context = "I live in";
  for (const auto& t : whole.token_scores) {
    parts += score_continuation(client, context, t.token_text).total_logprob;
    context += t.token_text;
  }
  CHECK(whole.total_logprob == doctest::Approx(parts).epsilon(1e-6));
}

TEST_CASE("unreachable endpoint is a transport error") {
  CHECK_THROWS_AS(WireBackend(fast("http://127.0.0.1:1")), TransportError);
}

TEST_CASE("server-side capability errors map to CapabilityError") {
  RawServer raw;
  serve_info(raw.server, true);
  raw.server.Post("/score", [](const httplib::Request&, httplib::Response& res) {
    res.status = 501;
    res.set_content(R"({"error": "temperature unsupported", "kind": "capability"})", "application/json");
  });
  raw.start();
  const WireBackend client(fast(raw.url()));
  CHECK_THROWS_AS(score_continuation(client, "a", " b", 0.5), CapabilityError);
}

TEST_CASE("client refuses temperature the server does not advertise") {
  RawServer raw;
  serve_info(raw.server, false);
  raw.start();
  const WireBackend client(fast(raw.url()));
  CHECK_THROWS_AS(score_continuation(client, "a", " b", 0.5), CapabilityError);
}

TEST_CASE("transient 503 is retried") {
  RawServer raw;
  serve_info(raw.server, false);
  std::atomic<int> calls{0};
  raw.server.Post("/score", [&calls](const httplib::Request& req, httplib::Response& res) {
    if (calls.fetch_add(1) == 0) {
      res.status = 503;
      return;
    }
    const auto body = json::parse(req.body);
    res.set_content(json{{"id", body.at("id")},
                         {"tokens", json::array({json{{"text", " b"}, {"logprob", -0.25}}})},
                         {"total_logprob", -0.25}}
                        .dump(),
                    "application/json");
  });
  raw.start();
  const WireBackend client(fast(raw.url()));
  CHECK(score_continuation(client, "a", " b").total_logprob == -0.25);
  CHECK(calls.load() == 2);
}

TEST_CASE("persistent 503 gives up with a transport error") {
  RawServer raw;
  serve_info(raw.server, false);
  raw.server.Post("/score", [](const httplib::Request&, httplib::Response& res) { res.status = 503; });
  raw.start();
  const WireBackend client(fast(raw.url()));
  CHECK_THROWS_AS(score_continuation(client, "a", " b"), TransportError);
}

TEST_CASE("bad requests are backend errors") {
  RawServer raw;
  serve_info(raw.server, false);
  raw.server.Post("/score", [](const httplib::Request&, httplib::Response& res) {
    res.status = 400;
    res.set_content(R"({"error": "tokenizer failure", "kind": "validation"})", "application/json");
  });
  raw.start();
  const WireBackend client(fast(raw.url()));
  CHECK_THROWS_AS(score_continuation(client, "a", " b"), BackendError);
}

TEST_CASE("inconsistent totals are rejected") {
  RawServer raw;
  serve_info(raw.server, false);
  raw.server.Post("/score", [](const httplib::Request& req, httplib::Response& res) {
    const auto body = json::parse(req.body);
    res.set_content(json{{"id", body.at("id")},
                         {"tokens", json::array({json{{"text", " b"}, {"logprob", -0.25}}})},
                         {"total_logprob", -3.0}}
                        .dump(),
                    "application/json");
  });
  raw.start();
  const WireBackend client(fast(raw.url()));
  CHECK_THROWS_AS(score_continuation(client, "a", " b"), BackendError);
}
