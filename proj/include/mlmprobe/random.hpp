#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace mlmprobe {

// The project-wide sampling generator. std::mt19937_64's output sequence is
// fixed by the standard; the distribution helpers below are written out here
// because the std:: distributions are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // Uniform in [0, bound). bound must be > 0.
  std::uint64_t below(std::uint64_t bound);

  // Uniform in [0, 1) with 53 random bits.
  double unit();

  // Partial Fisher-Yates: the first `count` entries of a uniformly random
  // permutation of [0, n), in draw order.
  std::vector<std::size_t> sample_indices(std::size_t n, std::size_t count);

 private:
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

// Independent per-unit seed, e.g. derive_seed(global_seed, relation_id).
std::uint64_t derive_seed(std::uint64_t global_seed, std::string_view key);

}  // namespace mlmprobe
