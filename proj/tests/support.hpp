#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "geoerasure/detail/random.hpp"
#include "geoerasure/distributions.hpp"

namespace testing {

inline std::string fixture(const std::string& name) {
  return std::string(GEOERASURE_FIXTURES_DIR) + "/" + name;
}

inline geoerasure::CandidateSetPtr countries(std::size_t m) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < m; ++i) names.push_back("C" + std::to_string(i));
  return geoerasure::make_candidate_set(std::move(names));
}

/// Random point on the simplex. `spread` > 1 makes the masses more uneven,
/// which puts more countries into erasure sets.
inline geoerasure::ProbDist random_dist(std::mt19937_64& rng,
                                        const geoerasure::CandidateSetPtr& candidates,
                                        double spread = 1.0) {
  std::vector<double> masses(candidates->size());
  for (auto& m : masses) {
    const double u = 1.0 - geoerasure::detail::uniform_unit(rng);
    m = std::pow(-std::log(u), spread) + 1e-12;
  }
  return geoerasure::ProbDist::from_masses(candidates, masses);
}

inline std::size_t random_size(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(geoerasure::detail::uniform_index(rng, hi - lo + 1));
}

}  // namespace testing
