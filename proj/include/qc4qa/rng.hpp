#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace qc4qa {

// Seeded generator with distribution helpers whose output does not depend on
// the standard library's (implementation-defined) distribution classes.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform integer in [0, n). n must be positive.
  std::size_t uniform_index(std::size_t n);

  // Uniform double in [0, 1) with 53 random bits.
  double uniform01();

  double normal();

  // Index drawn from an unnormalized nonnegative weight vector.
  std::size_t categorical(std::span<const double> weights);

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = uniform_index(i);
      std::swap(items[i - 1], items[j]);
    }
  }

  std::string state() const;
  void set_state(const std::string& state);

 private:
  std::mt19937_64 engine_;
};

// Derives an independent seed for a named pipeline stage.
std::uint64_t stage_seed(std::uint64_t global_seed, std::string_view stage);

}  // namespace qc4qa
