#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>

namespace privdistill {

/// SplitMix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) {
  return mix_seed(mix_seed(seed) ^ (stream + 0x632be59bd9b4e019ULL));
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  Rng(std::uint64_t seed, std::uint64_t stream) : engine_(stream_seed(seed, stream)) {}

  /// Uniform on the open interval (0, 1), 53-bit resolution.
  double open_uniform() { return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * open_uniform(); }

  double normal() { return normal_(engine_); }

  std::size_t index(std::size_t n) { return static_cast<std::size_t>(engine_() % n); }

  /// Draws an index with probability proportional to `mass`.
  int categorical(std::span<const double> mass) {
    double total = 0.0;
    for (double m : mass) total += m;
    double u = open_uniform() * total;
    for (std::size_t i = 0; i + 1 < mass.size(); ++i) {
      if (u < mass[i]) return static_cast<int>(i);
      u -= mass[i];
    }
    return static_cast<int>(mass.size()) - 1;
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace privdistill
