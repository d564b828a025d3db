#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

namespace raretab {

/// Seeded random stream. The engine is std::mt19937_64; the conversions to
/// uniform/normal/index are implemented here so that draws are identical
/// across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t bits() { return engine_(); }
  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  /// Uniform on (0, 1).
  double open_uniform();
  double normal();
  double normal(double mu, double sigma) { return mu + sigma * normal(); }
  /// Uniform integer in [0, n). n must be > 0.
  std::size_t index(std::size_t n);
  bool bernoulli(double p) { return uniform() < p; }

  template <class T>
  void shuffle(std::span<T> values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      const std::size_t j = index(i);
      std::swap(values[i - 1], values[j]);
    }
  }

  std::vector<std::size_t> permutation(std::size_t n);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t hash_string(std::string_view text);

/// Child seed for a task identified by a path of integers. Scheduling-order
/// independent: the same (root, path) always maps to the same seed.
std::uint64_t derive_seed(std::uint64_t root, std::initializer_list<std::uint64_t> path);
std::uint64_t derive_seed(std::uint64_t root, std::string_view tag,
                          std::initializer_list<std::uint64_t> path = {});

}  // namespace raretab
