#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace ipswlab {

namespace detail {
// SplitMix64 finalizer; used only to derive well-separated stream seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}
}  // namespace detail

/// Seeded random stream with deterministic substream derivation.
///
/// Replicate r of a study, chain c of an imputation, resample b of a
/// bootstrap each run on `stream.substream(id)` so that results do not
/// depend on execution order or worker count.
class RngStream {
public:
  explicit RngStream(std::uint64_t seed)
      : seed_(seed), gen_(detail::splitmix64(seed)) {}

  std::uint64_t seed() const { return seed_; }

  /// Independent stream derived from (this stream's seed, id).
  RngStream substream(std::uint64_t id) const {
    return RngStream(detail::splitmix64(seed_ ^ detail::splitmix64(id + 0x243F6A8885A308D3ULL)));
  }

  std::mt19937_64& engine() { return gen_; }

  double uniform() {
    return std::uniform_real_distribution<double>(0.0, 1.0)(gen_);
  }

  double normal(double mean = 0.0, double sd = 1.0) {
    return std::normal_distribution<double>(mean, sd)(gen_);
  }

  bool bernoulli(double p) {
    return std::bernoulli_distribution(p)(gen_);
  }

  double chi_squared(double df) {
    return std::chi_squared_distribution<double>(df)(gen_);
  }

  /// Uniform integer in [0, n).
  std::size_t uniform_index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(gen_);
  }

  std::vector<double> normals(std::size_t n, double mean = 0.0, double sd = 1.0) {
    std::normal_distribution<double> d(mean, sd);
    std::vector<double> out(n);
    for (auto& v : out) v = d(gen_);
    return out;
  }

private:
  std::uint64_t seed_;
  std::mt19937_64 gen_;
};

}  // namespace ipswlab
