#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <stdexcept>
#include <string>

#include "geoerasure/erasure.hpp"
#include "geoerasure/scoring.hpp"

namespace geoerasure::app {

/// Bad or missing configuration. Maps to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr const char* kBackendUrlEnv = "GEOERASURE_BACKEND_URL";

struct BackendConfig {
  std::string kind;  // "mock", "wire" or empty when unset
  std::filesystem::path mock_table;
  std::string url;
  int max_retries = 3;
  int timeout_seconds = 60;
};

/// Everything an audit needs. Paths in a config file are relative to the
/// file's directory; command-line flags override file values.
struct AuditConfig {
  BackendConfig backend;
  std::filesystem::path templates;
  std::filesystem::path subjects;
  std::filesystem::path prompts;  // pre-expanded prompt set; wins over templates
  std::filesystem::path population;
  std::filesystem::path aliases;
  std::filesystem::path gdp;
  double r = 3.0;
  ChooseRMode choose_r_mode = ChooseRMode::median_of_er;
  int r_min = 2;
  int r_max = 20;
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = ".";
  std::size_t workers = 0;  // 0 = available parallelism
  std::size_t bootstrap_resamples = 10000;
  bool case_insensitive = false;
};

AuditConfig load_config(const std::filesystem::path& path);
AuditConfig parse_config(std::istream& in, const std::filesystem::path& base_dir);

ChooseRMode parse_choose_r_mode(const std::string& text);

/// Builds the configured backend. Falls back to the backend URL environment
/// variable when nothing else is configured.
std::unique_ptr<ScoringBackend> make_backend(const AuditConfig& config);

/// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

/// "<file name> sha256:<hex>", recorded in report metadata.
std::string describe_input(const std::filesystem::path& path);

}  // namespace geoerasure::app
