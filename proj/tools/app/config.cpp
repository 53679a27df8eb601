#include "config.hpp"

#include <openssl/evp.h>

#include <array>
#include <cstdlib>
#include <fstream>

#include <nlohmann/json.hpp>

#include "geoerasure/error.hpp"
#include "geoerasure/mock_backend.hpp"
#include "geoerasure/wire_backend.hpp"

namespace geoerasure::app {

namespace {

using nlohmann::json;

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& value) {
  std::filesystem::path p = value;
  return p.is_relative() ? base / p : p;
}

}  // namespace

ChooseRMode parse_choose_r_mode(const std::string& text) {
  if (text == "median_of_er" || text == "median") return ChooseRMode::median_of_er;
  if (text == "er_of_aggregate" || text == "aggregate") return ChooseRMode::er_of_aggregate;
  throw ConfigError("unknown choose_r mode '" + text + "' (median_of_er or er_of_aggregate)");
}

AuditConfig parse_config(std::istream& in, const std::filesystem::path& base_dir) {
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");

  AuditConfig config;
  try {
    if (doc.contains("backend")) {
      const auto& b = doc.at("backend");
      config.backend.kind = b.value("kind", "");
      if (b.contains("mock_table")) {
        config.backend.mock_table = resolve(base_dir, b.at("mock_table").get<std::string>());
        if (config.backend.kind.empty()) config.backend.kind = "mock";
      }
      if (b.contains("url")) {
        config.backend.url = b.at("url").get<std::string>();
        if (config.backend.kind.empty()) config.backend.kind = "wire";
      }
      config.backend.max_retries = b.value("max_retries", config.backend.max_retries);
      config.backend.timeout_seconds = b.value("timeout_seconds", config.backend.timeout_seconds);
      if (!config.backend.kind.empty() && config.backend.kind != "mock" &&
          config.backend.kind != "wire") {
        throw ConfigError("backend kind must be 'mock' or 'wire'");
      }
    }
    for (auto [key, field] : {std::pair{"templates", &config.templates},
                              std::pair{"subjects", &config.subjects},
                              std::pair{"prompts", &config.prompts},
                              std::pair{"population", &config.population},
                              std::pair{"aliases", &config.aliases},
                              std::pair{"gdp", &config.gdp},
                              std::pair{"out_dir", &config.out_dir}}) {
      if (doc.contains(key)) *field = resolve(base_dir, doc.at(key).get<std::string>());
    }
    config.r = doc.value("r", config.r);
    if (doc.contains("choose_r_mode")) {
      config.choose_r_mode = parse_choose_r_mode(doc.at("choose_r_mode").get<std::string>());
    }
    if (doc.contains("r_range")) {
      const auto range = doc.at("r_range").get<std::vector<int>>();
      if (range.size() != 2) throw ConfigError("r_range must be [min, max]");
      config.r_min = range[0];
      config.r_max = range[1];
    }
    config.seed = doc.value("seed", config.seed);
    config.workers = doc.value("workers", config.workers);
    config.bootstrap_resamples = doc.value("bootstrap_resamples", config.bootstrap_resamples);
    config.case_insensitive = doc.value("case_insensitive", config.case_insensitive);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return config;
}

AuditConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  return parse_config(in, path.parent_path());
}

std::unique_ptr<ScoringBackend> make_backend(const AuditConfig& config) {
  BackendConfig b = config.backend;
  if (b.kind.empty()) {
    if (const char* env = std::getenv(kBackendUrlEnv); env && *env) {
      b.kind = "wire";
      b.url = env;
    }
  }
  if (b.kind == "mock") {
    if (b.mock_table.empty()) throw ConfigError("mock backend needs a mock_table path");
    if (!std::filesystem::exists(b.mock_table)) {
      throw ConfigError("mock table not found: '" + b.mock_table.string() + "'");
    }
    return std::make_unique<MockBackend>(MockBackend::from_file(b.mock_table));
  }
  if (b.kind == "wire") {
    if (b.url.empty()) throw ConfigError("wire backend needs a url");
    WireOptions options;
    options.url = b.url;
    options.max_retries = b.max_retries;
    options.timeout = std::chrono::seconds(b.timeout_seconds);
    return std::make_unique<WireBackend>(options);
  }
  throw ConfigError(std::string("no backend configured: use --mock-table, --backend-url, a config "
                                "backend section or ") +
                    kBackendUrlEnv);
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path.string() + "'");
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256 initialisation failed");
  }
  std::array<char, 1 << 16> buffer;
  while (in) {
    in.read(buffer.data(), buffer.size());
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buffer.data(), static_cast<std::size_t>(in.gcount()));
  }
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int length = 0;
  EVP_DigestFinal_ex(ctx.get(), digest.data(), &length);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  for (unsigned int i = 0; i < length; ++i) {
    hex.push_back(kHex[digest[i] >> 4]);
    hex.push_back(kHex[digest[i] & 0xF]);
  }
  return hex;
}

std::string describe_input(const std::filesystem::path& path) {
  return path.filename().string() + " sha256:" + sha256_file(path);
}

}  // namespace geoerasure::app
