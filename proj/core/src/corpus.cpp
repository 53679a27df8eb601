#include "geoerasure/corpus.hpp"

#include <glob.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <deque>
#include <fstream>

#include <nlohmann/json.hpp>

#include "csv.hpp"
#include "geoerasure/detail/parallel.hpp"
#include "geoerasure/erasure.hpp"
#include "geoerasure/error.hpp"
#include "geoerasure/report.hpp"

namespace geoerasure {

MentionCounts& MentionCounts::merge(const MentionCounts& other) {
  if (counts.empty()) counts.assign(other.counts.size(), 0.0);
  if (counts.size() != other.counts.size()) {
    throw ContractError("cannot merge counts over different candidate sets");
  }
  for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
  total_documents += other.total_documents;
  total_bytes += other.total_bytes;
  invalid_utf8_sequences += other.invalid_utf8_sequences;
  return *this;
}

namespace {

inline unsigned char fold(unsigned char c, bool case_insensitive) {
  return case_insensitive && c >= 'A' && c <= 'Z' ? static_cast<unsigned char>(c - 'A' + 'a') : c;
}

inline bool is_word_byte(unsigned char c) {
  return (c >= '0' && c <= '9') || (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || c >= 0x80;
}

inline bool is_boundary(std::string_view text, std::size_t pos) {
  if (pos == 0 || pos >= text.size()) return true;
  return !(is_word_byte(static_cast<unsigned char>(text[pos - 1])) &&
           is_word_byte(static_cast<unsigned char>(text[pos])));
}

}  // namespace

AliasMatcher::AliasMatcher(const CandidateSet& candidates, MatchOptions options)
    : options_(options), countries_(candidates.size()) {
  std::array<std::int32_t, 256> empty;
  empty.fill(-1);
  transitions_.push_back(empty);
  pattern_at_.push_back(-1);

  for (std::size_t country = 0; country < candidates.size(); ++country) {
    for (const auto& alias : candidates[country].aliases) {
      std::int32_t state = 0;
      for (const char ch : alias) {
        const auto c = fold(static_cast<unsigned char>(ch), options_.case_insensitive);
        if (transitions_[state][c] < 0) {
          transitions_[state][c] = static_cast<std::int32_t>(transitions_.size());
          transitions_.push_back(empty);
          pattern_at_.push_back(-1);
        }
        state = transitions_[state][c];
      }
      if (pattern_at_[state] >= 0) {
        if (patterns_[pattern_at_[state]].country != country) {
          throw ValidationError("alias '" + alias + "' is ambiguous under case folding");
        }
        continue;
      }
      pattern_at_[state] = static_cast<std::int32_t>(patterns_.size());
      patterns_.push_back(Pattern{alias.size(), country});
    }
  }

  // Breadth-first failure links, folded into a complete transition table.
  std::vector<std::int32_t> failure(transitions_.size(), 0);
  output_link_.assign(transitions_.size(), -1);
  std::deque<std::int32_t> queue;
  for (int c = 0; c < 256; ++c) {
    auto& next = transitions_[0][c];
    if (next < 0) {
      next = 0;
    } else {
      queue.push_back(next);
    }
  }
  while (!queue.empty()) {
    const auto u = queue.front();
    queue.pop_front();
    for (int c = 0; c < 256; ++c) {
      const auto v = transitions_[u][c];
      if (v < 0) {
        transitions_[u][c] = transitions_[failure[u]][c];
        continue;
      }
      const auto f = transitions_[failure[u]][c];
      failure[v] = f;
      output_link_[v] = pattern_at_[f] >= 0 ? f : output_link_[f];
      queue.push_back(v);
    }
  }
}

void AliasMatcher::scan(std::string_view text, const std::function<void(const Match&)>& emit) const {
  std::int32_t state = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    state = transitions_[state][fold(static_cast<unsigned char>(text[i]), options_.case_insensitive)];
    for (auto s = pattern_at_[state] >= 0 ? state : output_link_[state]; s >= 0;
         s = output_link_[s]) {
      const auto& pattern = patterns_[pattern_at_[s]];
      const std::size_t end = i + 1;
      const std::size_t begin = end - pattern.length;
      if (is_boundary(text, begin) && is_boundary(text, end)) {
        emit(Match{begin, end, pattern.country});
      }
    }
  }
}

std::vector<AliasMatcher::Match> AliasMatcher::find(std::string_view text) const {
  std::vector<Match> candidates;
  scan(text, [&](const Match& m) { candidates.push_back(m); });
  std::sort(candidates.begin(), candidates.end(), [](const Match& a, const Match& b) {
    if (a.begin != b.begin) return a.begin < b.begin;
    return a.end > b.end;
  });
  std::vector<Match> chosen;
  std::size_t free_from = 0;
  for (const auto& m : candidates) {
    if (m.begin < free_from) continue;
    chosen.push_back(m);
    free_from = m.end;
  }
  return chosen;
}

void AliasMatcher::count(std::string_view text, std::span<std::uint64_t> counts) const {
  if (counts.size() != countries_) throw ContractError("count buffer has wrong size");
  for (const auto& m : find(text)) ++counts[m.country];
}

std::size_t sanitize_utf8(std::string& text) {
  // Length of the well-formed sequence starting at i, or the length of the
  // maximal ill-formed prefix negated.
  auto sequence = [&text](std::size_t i) -> std::ptrdiff_t {
    const auto byte = [&](std::size_t k) { return static_cast<unsigned char>(text[k]); };
    const unsigned char lead = byte(i);
    if (lead < 0x80) return 1;
    unsigned char lo = 0x80, hi = 0xBF;
    std::size_t need = 0;
    if (lead >= 0xC2 && lead <= 0xDF) {
      need = 1;
    } else if (lead >= 0xE0 && lead <= 0xEF) {
      need = 2;
      if (lead == 0xE0) lo = 0xA0;
      if (lead == 0xED) hi = 0x9F;
    } else if (lead >= 0xF0 && lead <= 0xF4) {
      need = 3;
      if (lead == 0xF0) lo = 0x90;
      if (lead == 0xF4) hi = 0x8F;
    } else {
      return -1;
    }
    for (std::size_t k = 1; k <= need; ++k) {
      if (i + k >= text.size()) return -static_cast<std::ptrdiff_t>(k);
      const unsigned char c = byte(i + k);
      const unsigned char min = k == 1 ? lo : 0x80;
      const unsigned char max = k == 1 ? hi : 0xBF;
      if (c < min || c > max) return -static_cast<std::ptrdiff_t>(k);
    }
    return static_cast<std::ptrdiff_t>(need + 1);
  };

  std::size_t i = 0;
  for (; i < text.size(); ++i) {
    if (static_cast<unsigned char>(text[i]) >= 0x80 && sequence(i) < 0) break;
    if (static_cast<unsigned char>(text[i]) >= 0x80) i += static_cast<std::size_t>(sequence(i)) - 1;
  }
  if (i == text.size()) return 0;

  std::string out = text.substr(0, i);
  std::size_t replaced = 0;
  while (i < text.size()) {
    const auto len = sequence(i);
    if (len > 0) {
      out.append(text, i, static_cast<std::size_t>(len));
      i += static_cast<std::size_t>(len);
    } else {
      out.append("\xEF\xBF\xBD");
      ++replaced;
      i += static_cast<std::size_t>(-len);
    }
  }
  text = std::move(out);
  return replaced;
}

MentionCounts count_mentions(std::string_view document, const CandidateSet& candidates,
                             MatchOptions options) {
  const AliasMatcher matcher(candidates, options);
  std::string text(document);
  MentionCounts result(candidates.size());
  result.invalid_utf8_sequences = sanitize_utf8(text);
  result.total_documents = 1;
  result.total_bytes = document.size();
  std::vector<std::uint64_t> raw(candidates.size(), 0);
  matcher.count(text, raw);
  for (std::size_t i = 0; i < raw.size(); ++i) result.counts[i] = static_cast<double>(raw[i]);
  return result;
}

void for_each_document(const Shard& shard, const std::function<void(std::string&)>& sink) {
  if (const auto* memory = std::get_if<MemoryShard>(&shard)) {
    for (const auto& doc : memory->documents) {
      std::string copy = doc;
      sink(copy);
    }
    return;
  }
  const auto& file = std::get<FileShard>(shard);
  std::ifstream in(file.path, std::ios::binary);
  if (!in) throw SchemaError("cannot open corpus shard '" + file.path.string() + "'");
  std::string record;
  if (file.format == RecordFormat::lines) {
    while (std::getline(in, record)) {
      if (!record.empty() && record.back() == '\r') record.pop_back();
      sink(record);
    }
    return;
  }
  std::string header;
  while (std::getline(in, header)) {
    if (header.empty() || header == "\r") continue;
    std::size_t length = 0;
    const auto [ptr, ec] = std::from_chars(header.data(), header.data() + header.size(), length);
    if (ec != std::errc() || (ptr != header.data() + header.size() && *ptr != '\r')) {
      throw SchemaError("corpus shard '" + file.path.string() + "': bad record length '" +
                        header + "'");
    }
    record.resize(length);
    if (!in.read(record.data(), static_cast<std::streamsize>(length))) {
      throw SchemaError("corpus shard '" + file.path.string() + "': truncated record");
    }
    sink(record);
    if (in.peek() == '\n') in.get();
  }
}

TrainProfile profile(std::span<const CorpusDataset> datasets, const CandidateSetPtr& candidates,
                     const ProfileOptions& options) {
  if (datasets.empty()) throw ContractError("profile needs at least one dataset");
  if (!(options.floor >= 0.0) || !std::isfinite(options.floor)) {
    throw ContractError("floor must be a non-negative number");
  }
  for (const auto& d : datasets) {
    if (!(d.weight > 0.0) || !std::isfinite(d.weight)) {
      throw ValidationError("dataset '" + d.name + "' must have a positive weight");
    }
  }
  const auto m = candidates->size();
  const AliasMatcher matcher(*candidates, options.match);

  struct Unit {
    std::size_t dataset;
    const Shard* shard;
    std::vector<std::uint64_t> counts;
    std::uint64_t documents = 0, bytes = 0, invalid = 0;
  };
  std::vector<Unit> units;
  for (std::size_t d = 0; d < datasets.size(); ++d) {
    for (const auto& shard : datasets[d].shards) {
      units.push_back(Unit{d, &shard, std::vector<std::uint64_t>(m, 0)});
    }
  }
  detail::parallel_for(units.size(), options.workers, [&](std::size_t k) {
    auto& unit = units[k];
    for_each_document(*unit.shard, [&](std::string& doc) {
      ++unit.documents;
      unit.bytes += doc.size();
      unit.invalid += sanitize_utf8(doc);
      matcher.count(doc, unit.counts);
    });
  });

  TrainProfile result{ProbDist(candidates, std::vector<double>(m, 1.0 / static_cast<double>(m))),
                      MentionCounts(m),
                      {},
                      {},
                      {},
                      std::vector<std::vector<std::uint64_t>>(datasets.size(),
                                                              std::vector<std::uint64_t>(m, 0))};
  for (const auto& d : datasets) {
    result.dataset_names.push_back(d.name);
    result.dataset_weights.push_back(d.weight);
  }
  for (const auto& unit : units) {
    auto& raw = result.raw_counts[unit.dataset];
    for (std::size_t i = 0; i < m; ++i) raw[i] += unit.counts[i];
    result.counts.total_documents += unit.documents;
    result.counts.total_bytes += unit.bytes;
    result.counts.invalid_utf8_sequences += unit.invalid;
  }
  // Sorting the weighted terms makes the sum independent of dataset order.
  std::vector<double> masses(m, 0.0);
  std::vector<double> terms(datasets.size());
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t d = 0; d < datasets.size(); ++d) {
      terms[d] = datasets[d].weight * static_cast<double>(result.raw_counts[d][i]);
    }
    std::sort(terms.begin(), terms.end());
    double sum = 0.0;
    for (const double t : terms) sum += t;
    result.counts.counts[i] = sum;
    masses[i] = sum;
    if (sum == 0.0) {
      masses[i] = options.floor;
      if (options.floor > 0.0) result.floored_countries.push_back(candidates->name(i));
    }
  }
  try {
    result.dist = ProbDist::from_masses(candidates, masses);
  } catch (const NormalizationError&) {
    throw NormalizationError("no country mentions found and floor is 0");
  }
  return result;
}

std::vector<CorpusDataset> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError("cannot open manifest '" + path.string() + "'");
  const auto table = detail::read_csv(in);
  const bool has_format = table.header.size() == 4 && table.header[3] == "format";
  if (table.header.size() < 3 || table.header[0] != "name" || table.header[1] != "weight" ||
      table.header[2] != "path_glob" || (table.header.size() == 4 && !has_format) ||
      table.header.size() > 4) {
    throw SchemaError("manifest header must be 'name,weight,path_glob[,format]'");
  }
  const auto base = path.parent_path();
  std::vector<CorpusDataset> datasets;
  for (const auto& row : table.rows) {
    if (row.fields.size() != table.header.size()) {
      throw SchemaError("manifest line " + std::to_string(row.line) + ": wrong field count");
    }
    CorpusDataset dataset;
    dataset.name = row.fields[0];
    const auto& w = row.fields[1];
    const auto [ptr, ec] = std::from_chars(w.data(), w.data() + w.size(), dataset.weight);
    if (w.empty() || ec != std::errc() || ptr != w.data() + w.size()) {
      throw ValidationError("manifest line " + std::to_string(row.line) + ": bad weight '" + w +
                            "'");
    }
    RecordFormat format = RecordFormat::lines;
    if (has_format) {
      if (row.fields[3] == "length") {
        format = RecordFormat::length_prefixed;
      } else if (row.fields[3] != "lines" && !row.fields[3].empty()) {
        throw SchemaError("manifest line " + std::to_string(row.line) + ": unknown format '" +
                          row.fields[3] + "'");
      }
    }
    std::filesystem::path pattern = row.fields[2];
    if (pattern.is_relative()) pattern = base / pattern;
    glob_t matches{};
    const int rc = ::glob(pattern.c_str(), 0, nullptr, &matches);
    if (rc == 0) {
      for (std::size_t k = 0; k < matches.gl_pathc; ++k) {
        dataset.shards.emplace_back(FileShard{matches.gl_pathv[k], format});
      }
    }
    ::globfree(&matches);
    if (dataset.shards.empty()) {
      throw SchemaError("manifest line " + std::to_string(row.line) + ": '" + pattern.string() +
                        "' matched no files");
    }
    datasets.push_back(std::move(dataset));
  }
  if (datasets.empty()) throw SchemaError("manifest lists no datasets");
  return datasets;
}

DataBias data_bias(const ProbDist& p_true, const TrainProfile& train, const ProbDist& predictions,
                   double r) {
  return DataBias{erasure(p_true, train.dist, r), erasure(train.dist, predictions, r),
                  erasure(p_true, predictions, r)};
}

void write_profile(std::ostream& out, const TrainProfile& profile, const DataBias* bias, double r) {
  using nlohmann::ordered_json;
  const auto& candidates = profile.dist.candidates();
  ordered_json doc;
  doc["schema"] = "geoerasure.train_profile/1";
  doc["countries"] = ordered_json::array();
  for (std::size_t i = 0; i < candidates.size(); ++i) doc["countries"].push_back(candidates.name(i));
  doc["probs"] = ordered_json::array();
  for (const double p : profile.dist.probs()) doc["probs"].push_back(stable_round(p));
  doc["weighted_counts"] = ordered_json::array();
  for (const double c : profile.counts.counts) doc["weighted_counts"].push_back(stable_round(c));
  doc["floored_countries"] = profile.floored_countries;
  doc["total_documents"] = profile.counts.total_documents;
  doc["total_bytes"] = profile.counts.total_bytes;
  doc["invalid_utf8_sequences"] = profile.counts.invalid_utf8_sequences;
  doc["datasets"] = ordered_json::array();
  for (std::size_t d = 0; d < profile.dataset_names.size(); ++d) {
    ordered_json entry;
    entry["name"] = profile.dataset_names[d];
    entry["weight"] = profile.dataset_weights[d];
    entry["counts"] = profile.raw_counts[d];
    doc["datasets"].push_back(std::move(entry));
  }
  if (bias) {
    ordered_json b;
    b["r"] = r;
    b["truth_vs_train"] = stable_round(bias->truth_vs_train);
    b["train_vs_model"] = stable_round(bias->train_vs_model);
    b["truth_vs_model"] = stable_round(bias->truth_vs_model);
    doc["data_bias"] = std::move(b);
  }
  out << doc.dump(2) << '\n';
}

void write_counts_table(std::ostream& out, const TrainProfile& profile) {
  const auto& candidates = profile.dist.candidates();
  out << "country,weighted_count,probability,floored\n";
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const bool floored = std::find(profile.floored_countries.begin(),
                                   profile.floored_countries.end(),
                                   candidates.name(i)) != profile.floored_countries.end();
    out << detail::csv_escape(candidates.name(i)) << ','
        << detail::csv_number(profile.counts.counts[i]) << ',' << detail::csv_number(profile.dist[i]) << ','
        << (floored ? 1 : 0) << '\n';
  }
}

}  // namespace geoerasure
