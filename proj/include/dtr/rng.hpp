#pragma once

#include <cstdint>
#include <limits>

namespace dtr {

std::uint64_t splitmix64(std::uint64_t& state);

// Hash of (seed, a, b) used to derive independent stream seeds.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

// xoshiro256++ satisfying UniformRandomBitGenerator. One instance per subject
// (or per fitting task) keeps generation order-independent.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()();

  double uniform();                      // [0, 1)
  double uniform(double lo, double hi);  // [lo, hi)
  double normal();                       // standard normal
  bool bernoulli(double p);
  std::uint64_t below(std::uint64_t n);  // uniform integer in [0, n)

 private:
  std::uint64_t s_[4];
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace dtr
