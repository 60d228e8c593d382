#ifndef WAVERORA_RNG_HPP
#define WAVERORA_RNG_HPP

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "waverora/tensor.hpp"

namespace waverora {

/// Seeded random stream. Uniform and normal draws are derived from the raw
/// 64-bit engine output here (not via <random> distributions) so the stream
/// is identical across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal(double mean = 0.0, double stddev = 1.0);
  /// Uniform integer in [0, n).
  std::size_t below(std::size_t n);

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) std::swap(items[i - 1], items[below(i)]);
  }

  Tensor uniform_tensor(Shape shape, double lo, double hi);
  Tensor normal_tensor(Shape shape, double mean, double stddev);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace waverora

#endif  // WAVERORA_RNG_HPP
