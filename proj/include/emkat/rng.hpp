#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace emkat {

// Deterministic 64-bit generator (splitmix64). Used instead of the std
// engines/distributions so that streams are identical across standard
// library implementations. All randomness in the project flows from one
// root seed expanded per phase through derive_seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64();

  // Uniform in [0, 1) with 53 bits of mantissa.
  double next_double();

  double uniform(double lo, double hi);

  // Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);

  bool bernoulli(double p);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      using std::swap;
      swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t state_;
};

// Expands a root seed into an independent stream seed for a named phase
// ("split", "mask", "init", ...) plus an optional index (epoch number etc).
std::uint64_t derive_seed(std::uint64_t root, std::string_view label,
                          std::uint64_t index = 0);

}  // namespace emkat
