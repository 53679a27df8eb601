#include "geoerasure/wire_backend.hpp"

#include <cmath>
#include <thread>
#include <unordered_map>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "geoerasure/error.hpp"

namespace geoerasure {

using nlohmann::json;

namespace {

struct ParsedUrl {
  std::string origin;  // scheme://host:port
  std::string base;    // path prefix without trailing slash
};

ParsedUrl parse_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos || url.substr(0, scheme_end) != "http") {
    throw ContractError("backend url must start with http:// (got '" + url + "')");
  }
  const auto path_start = url.find('/', scheme_end + 3);
  ParsedUrl parsed;
  parsed.origin = url.substr(0, path_start);
  if (path_start != std::string::npos) {
    parsed.base = url.substr(path_start);
    while (!parsed.base.empty() && parsed.base.back() == '/') parsed.base.pop_back();
  }
  return parsed;
}

bool retryable_status(int status) { return status == 502 || status == 503 || status == 504; }

json request_to_json(const ScoreRequest& request, std::uint64_t id) {
  return json{{"id", std::to_string(id)},
              {"prompt", request.prompt},
              {"continuation", request.continuation},
              {"temperature", request.temperature}};
}

ContinuationScore score_from_json(const json& body) {
  ContinuationScore result;
  for (const auto& token : body.at("tokens")) {
    result.token_scores.push_back(
        TokenScore{token.at("text").get<std::string>(), token.at("logprob").get<double>()});
  }
  double sum = 0.0;
  for (const auto& t : result.token_scores) sum += t.logprob;
  if (body.contains("total_logprob")) {
    const double reported = body.at("total_logprob").get<double>();
    if (!(std::abs(reported - sum) <= 1e-6 * std::max(1.0, std::abs(sum)))) {
      throw BackendError("server total_logprob disagrees with its token logprobs");
    }
  }
  result.total_logprob = sum;
  return result;
}

}  // namespace

WireBackend::WireBackend(WireOptions options) : options_(std::move(options)) {
  const auto parsed = parse_url(options_.url);
  origin_ = parsed.origin;
  base_path_ = parsed.base;
  descriptor_.backend_kind = BackendKind::wire_client;
  descriptor_.model_label = options_.url;

  httplib::Client client(origin_);
  client.set_connection_timeout(options_.timeout);
  client.set_read_timeout(options_.timeout);
  httplib::Result res;
  auto backoff = options_.initial_backoff;
  for (int attempt = 0;; ++attempt) {
    res = client.Get(base_path_ + "/info");
    if (res && !retryable_status(res->status)) break;
    if (attempt >= options_.max_retries) {
      throw TransportError("backend at '" + options_.url + "' is unreachable" +
                           (res ? "" : ": " + httplib::to_string(res.error())));
    }
    std::this_thread::sleep_for(backoff);
    backoff *= 2;
  }
  if (res->status == 200) {
    try {
      const auto info = json::parse(res->body);
      descriptor_.model_label = info.value("model_label", options_.url);
      descriptor_.supports_temperature = info.value("supports_temperature", false);
      descriptor_.supports_full_logits = info.value("supports_full_logits", false);
      descriptor_.bos_convention = info.value("bos_convention", "");
      supports_batch_ = info.value("supports_batch", false);
    } catch (const json::exception& e) {
      throw BackendError(std::string("malformed /info response: ") + e.what());
    }
  }
}

std::string WireBackend::post(const std::string& path, const std::string& body) const {
  httplib::Client client(origin_);
  client.set_connection_timeout(options_.timeout);
  client.set_read_timeout(options_.timeout);
  auto backoff = options_.initial_backoff;
  for (int attempt = 0;; ++attempt) {
    auto res = client.Post(base_path_ + path, body, "application/json");
    if (res && !retryable_status(res->status)) {
      if (res->status == 200) return res->body;
      std::string message = "status " + std::to_string(res->status);
      std::string kind;
      try {
        const auto err = json::parse(res->body);
        message = err.value("error", message);
        kind = err.value("kind", "");
      } catch (const json::exception&) {
      }
      if (res->status == 501 || kind == "capability") throw CapabilityError(message);
      throw BackendError("backend rejected request: " + message);
    }
    if (attempt >= options_.max_retries) {
      throw TransportError("backend at '" + options_.url + "' failed" +
                           (res ? " with status " + std::to_string(res->status)
                                : ": " + httplib::to_string(res.error())));
    }
    std::this_thread::sleep_for(backoff);
    backoff *= 2;
  }
}

ContinuationScore WireBackend::do_score(const ScoreRequest& request) const {
  const auto id = next_id_.fetch_add(1);
  const auto body = post("/score", request_to_json(request, id).dump());
  try {
    const auto reply = json::parse(body);
    if (reply.contains("id") && reply.at("id").get<std::string>() != std::to_string(id)) {
      throw BackendError("response correlation id does not match request");
    }
    return score_from_json(reply);
  } catch (const json::exception& e) {
    throw BackendError(std::string("malformed score response: ") + e.what());
  }
}

std::vector<ContinuationScore> WireBackend::do_score_batch(
    std::span<const ScoreRequest> requests) const {
  if (!supports_batch_ || requests.size() <= 1) return ScoringBackend::do_score_batch(requests);
  json payload{{"requests", json::array()}};
  std::unordered_map<std::string, std::size_t> slot;
  for (std::size_t i = 0; i < requests.size(); ++i) {
    const auto id = next_id_.fetch_add(1);
    payload["requests"].push_back(request_to_json(requests[i], id));
    slot.emplace(std::to_string(id), i);
  }
  const auto body = post("/score_batch", payload.dump());
  std::vector<ContinuationScore> results(requests.size());
  std::vector<bool> filled(requests.size(), false);
  try {
    const auto reply = json::parse(body);
    for (const auto& item : reply.at("results")) {
      const auto it = slot.find(item.at("id").get<std::string>());
      if (it == slot.end() || filled[it->second]) {
        throw BackendError("batch response has unknown or repeated correlation id");
      }
      results[it->second] = score_from_json(item);
      filled[it->second] = true;
    }
  } catch (const json::exception& e) {
    throw BackendError(std::string("malformed batch response: ") + e.what());
  }
  for (const bool f : filled) {
    if (!f) throw BackendError("batch response is missing results");
  }
  return results;
}

struct WireServer::Impl {
  const ScoringBackend& backend;
  httplib::Server server;
  std::thread thread;

  explicit Impl(const ScoringBackend& b) : backend(b) {}

  static json score_to_json(const ContinuationScore& score, const json& id) {
    json tokens = json::array();
    for (const auto& t : score.token_scores) {
      tokens.push_back(json{{"text", t.token_text}, {"logprob", t.logprob}});
    }
    json out{{"tokens", tokens}, {"total_logprob", score.total_logprob}};
    if (!id.is_null()) out["id"] = id;
    return out;
  }

  static ScoreRequest request_from_json(const json& j) {
    return ScoreRequest{j.at("prompt").get<std::string>(), j.at("continuation").get<std::string>(),
                        j.value("temperature", 1.0)};
  }

  template <typename Fn>
  static void guarded(httplib::Response& res, Fn&& fn) {
    auto fail = [&res](int status, const std::string& kind, const std::string& what) {
      res.status = status;
      res.set_content(json{{"error", what}, {"kind", kind}}.dump(), "application/json");
    };
    try {
      fn();
    } catch (const CapabilityError& e) {
      fail(501, "capability", e.what());
    } catch (const json::exception& e) {
      fail(400, "validation", e.what());
    } catch (const Error& e) {
      fail(400, "validation", e.what());
    }
  }

  void install_routes() {
    server.Get("/info", [this](const httplib::Request&, httplib::Response& res) {
      const auto& d = backend.descriptor();
      res.set_content(json{{"model_label", d.model_label},
                           {"supports_temperature", d.supports_temperature},
                           {"supports_full_logits", d.supports_full_logits},
                           {"supports_batch", true},
                           {"bos_convention", d.bos_convention}}
                          .dump(),
                      "application/json");
    });
    server.Post("/score", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const auto body = json::parse(req.body);
        const auto score = backend.score(request_from_json(body));
        res.set_content(score_to_json(score, body.value("id", json())).dump(), "application/json");
      });
    });
    server.Post("/score_batch", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const auto body = json::parse(req.body);
        std::vector<ScoreRequest> requests;
        for (const auto& item : body.at("requests")) requests.push_back(request_from_json(item));
        const auto scores = backend.score_batch(requests);
        json results = json::array();
        // Reverse order so clients cannot rely on positional matching.
        for (std::size_t k = scores.size(); k-- > 0;) {
          results.push_back(score_to_json(scores[k], body.at("requests")[k].value("id", json())));
        }
        res.set_content(json{{"results", results}}.dump(), "application/json");
      });
    });
  }
};

WireServer::WireServer(const ScoringBackend& backend) : impl_(std::make_unique<Impl>(backend)) {
  impl_->install_routes();
}

WireServer::~WireServer() { stop(); }

int WireServer::start(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = impl_->server.bind_to_any_port(host);
  } else if (!impl_->server.bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) throw TransportError("cannot bind " + host + ":" + std::to_string(port));
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

void WireServer::listen(const std::string& host, int port) {
  if (!impl_->server.listen(host, port)) {
    throw TransportError("cannot listen on " + host + ":" + std::to_string(port));
  }
}

void WireServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace geoerasure
