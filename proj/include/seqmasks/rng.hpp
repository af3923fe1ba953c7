#ifndef SEQMASKS_RNG_HPP_
#define SEQMASKS_RNG_HPP_

#include <cstdint>
#include <random>

namespace seqmasks {

/// Every stochastic operation takes one of these explicitly; no hidden global state.
using Rng = std::mt19937_64;

inline bool bernoulli(Rng& rng, double p) { return std::bernoulli_distribution(p)(rng); }

inline int uniform_int(Rng& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

}  // namespace seqmasks

#endif  // SEQMASKS_RNG_HPP_
