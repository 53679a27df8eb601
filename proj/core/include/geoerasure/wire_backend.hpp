#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <memory>
#include <string>

#include "geoerasure/scoring.hpp"

namespace geoerasure {

// Wire protocol (JSON over HTTP):
//
//   GET  {base}/info
//     -> {model_label, supports_temperature, supports_full_logits,
//         supports_batch, bos_convention}
//   POST {base}/score        {id, prompt, continuation, temperature}
//     -> {id, tokens: [{text, logprob}], total_logprob}
//   POST {base}/score_batch  {requests: [<score request>...]}
//     -> {results: [<score response>...]}   (any order; matched by id)
//
// Errors are non-2xx with {error, kind}; kind "capability" (status 501) maps
// to CapabilityError, any other 4xx to BackendError. Connection failures and
// 502/503/504 are transport errors and are retried with exponential backoff.

struct WireOptions {
  std::string url;  // http://host:port[/base]
  int max_retries = 3;
  std::chrono::milliseconds initial_backoff{100};
  std::chrono::seconds timeout{60};
};

/// Client for the wire protocol. Construction contacts `{base}/info` and
/// throws TransportError when the endpoint is unreachable.
class WireBackend final : public ScoringBackend {
 public:
  explicit WireBackend(WireOptions options);

  const BackendDescriptor& descriptor() const override { return descriptor_; }
  bool supports_batch() const noexcept { return supports_batch_; }

 protected:
  ContinuationScore do_score(const ScoreRequest& request) const override;
  std::vector<ContinuationScore> do_score_batch(std::span<const ScoreRequest> requests) const override;

 private:
  std::string post(const std::string& path, const std::string& body) const;

  WireOptions options_;
  std::string origin_;
  std::string base_path_;
  BackendDescriptor descriptor_;
  bool supports_batch_ = false;
  mutable std::atomic<std::uint64_t> next_id_{1};
};

/// Serves any ScoringBackend over the wire protocol. Used by tests and the
/// `serve-mock` command.
class WireServer {
 public:
  explicit WireServer(const ScoringBackend& backend);
  ~WireServer();
  WireServer(const WireServer&) = delete;
  WireServer& operator=(const WireServer&) = delete;

  /// Binds to host on an ephemeral port (port == 0) or the given port and
  /// starts serving on a background thread. Returns the bound port.
  int start(const std::string& host = "127.0.0.1", int port = 0);

  /// Serves on the calling thread until stop() is called.
  void listen(const std::string& host, int port);

  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace geoerasure
