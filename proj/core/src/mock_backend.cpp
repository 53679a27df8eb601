#include "geoerasure/mock_backend.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>

#include "geoerasure/error.hpp"

namespace geoerasure {

MockBackend::MockBackend(std::size_t fallback_vocab_size, std::string model_label)
    : fallback_vocab_size_(fallback_vocab_size) {
  if (fallback_vocab_size_ == 0) throw ValidationError("fallback vocabulary must be non-empty");
  descriptor_.backend_kind = BackendKind::mock;
  descriptor_.model_label = std::move(model_label);
  descriptor_.supports_temperature = true;
  descriptor_.supports_full_logits = true;
  descriptor_.bos_convention = "none (empty context scores the first token)";
}

MockBackend& MockBackend::add(const std::string& context, const std::string& token,
                              double probability) {
  if (token.empty()) throw ValidationError("mock table: empty token");
  if (!(probability > 0.0 && probability <= 1.0)) {
    throw ValidationError("mock table: probability of '" + token + "' must lie in (0, 1]");
  }
  auto& entry = table_[context];
  if (!entry.next.emplace(token, probability).second) {
    throw ValidationError("mock table: duplicate row for context '" + context + "', token '" +
                          token + "'");
  }
  entry.listed_mass += probability;
  if (entry.listed_mass > 1.0 + 1e-12) {
    throw ValidationError("mock table: context '" + context + "' has mass above 1");
  }
  vocab_by_length_[token.size()].insert(token);
  return *this;
}

MockBackend MockBackend::from_table(std::istream& in) {
  std::size_t vocab = kDefaultFallbackVocab;
  std::string label = "mock";
  struct Row {
    std::string context, token;
    double probability;
  };
  std::vector<Row> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab1 = line.find('\t');
    if (line.front() == '#') {
      const auto key = line.substr(1, tab1 == std::string::npos ? std::string::npos : tab1 - 1);
      const auto value = tab1 == std::string::npos ? std::string() : line.substr(tab1 + 1);
      if (key == "fallback_vocab") {
        const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), vocab);
        if (ec != std::errc() || ptr != value.data() + value.size() || vocab == 0) {
          throw SchemaError("mock table line " + std::to_string(line_no) +
                            ": bad fallback_vocab");
        }
      } else if (key == "model") {
        label = value;
      }
      continue;
    }
    const auto tab2 = tab1 == std::string::npos ? tab1 : line.find('\t', tab1 + 1);
    if (tab2 == std::string::npos) {
      throw SchemaError("mock table line " + std::to_string(line_no) + ": expected 3 fields");
    }
    const auto prob_text = line.substr(tab2 + 1);
    double probability = 0.0;
    const auto [ptr, ec] =
        std::from_chars(prob_text.data(), prob_text.data() + prob_text.size(), probability);
    if (ec != std::errc() || ptr != prob_text.data() + prob_text.size()) {
      throw SchemaError("mock table line " + std::to_string(line_no) + ": bad probability");
    }
    rows.push_back({line.substr(0, tab1), line.substr(tab1 + 1, tab2 - tab1 - 1), probability});
  }
  MockBackend backend(vocab, std::move(label));
  for (const auto& row : rows) backend.add(row.context, row.token, row.probability);
  return backend;
}

MockBackend MockBackend::from_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError("cannot open mock table '" + path.string() + "'");
  return from_table(in);
}

std::vector<std::string> MockBackend::tokenize(std::string_view text) const {
  std::vector<std::string> tokens;
  std::size_t pos = 0;
  auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
  while (pos < text.size()) {
    std::size_t take = 0;
    for (const auto& [length, tokens_of_length] : vocab_by_length_) {
      if (length <= text.size() - pos &&
          tokens_of_length.contains(std::string(text.substr(pos, length)))) {
        take = length;
        break;
      }
    }
    if (take == 0) {
      std::size_t end = pos;
      while (end < text.size() && is_space(text[end])) ++end;
      while (end < text.size() && !is_space(text[end])) ++end;
      take = end - pos;
    }
    tokens.emplace_back(text.substr(pos, take));
    pos += take;
  }
  return tokens;
}

double MockBackend::token_logprob(const std::string& context, const std::string& token,
                                  double temperature) const {
  const double log_vocab = std::log(static_cast<double>(fallback_vocab_size_));
  const auto it = table_.find(context);
  if (it == table_.end()) return -log_vocab;

  const auto& entry = it->second;
  const double remainder = std::max(0.0, 1.0 - entry.listed_mass);
  double logprob = 0.0;
  if (const auto hit = entry.next.find(token); hit != entry.next.end()) {
    logprob = std::log(hit->second);
  } else if (remainder > 1e-15) {
    logprob = std::log(remainder) - log_vocab;
  } else {
    throw BackendError("token '" + token + "' has zero probability after '" + context + "'");
  }
  if (temperature == 1.0) return logprob;

  const double inv = 1.0 / temperature;
  std::vector<double> terms;
  terms.reserve(entry.next.size() + 1);
  for (const auto& [next_token, p] : entry.next) terms.push_back(inv * std::log(p));
  if (remainder > 1e-15) terms.push_back(log_vocab + inv * (std::log(remainder) - log_vocab));
  return inv * logprob - log_sum_exp(terms);
}

ContinuationScore MockBackend::do_score(const ScoreRequest& request) const {
  ContinuationScore result;
  std::string context = request.prompt;
  for (auto& token : tokenize(request.continuation)) {
    const double logprob = token_logprob(context, token, request.temperature);
    context += token;
    result.token_scores.push_back(TokenScore{std::move(token), logprob});
  }
  return result;
}

}  // namespace geoerasure
