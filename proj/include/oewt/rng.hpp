#pragma once

#include <cstdint>
#include <random>

namespace oewt::rng {

/// One step of the splitmix64 output function (Steele & Vigna constants).
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derive an independent sub-stream seed from a parent seed and a tag.
/// Sub-seeds for distinct (seed, tag) pairs are decorrelated, which lets
/// replicates and scenarios draw from independent streams and be re-run
/// individually.
inline std::uint64_t mix(std::uint64_t seed, std::uint64_t tag) {
  return splitmix64(splitmix64(seed) ^ splitmix64(tag + 0x632be59bd9b4e019ULL));
}

template <typename... Tags>
std::uint64_t mix(std::uint64_t seed, std::uint64_t tag, Tags... rest) {
  return mix(mix(seed, tag), static_cast<std::uint64_t>(rest)...);
}

/// Bit pattern of a double, for mixing real-valued scenario parameters
/// into seeds.
std::uint64_t double_bits(double v);

/// Inverse standard-normal CDF (Wichura's AS241 PPND16 rational
/// approximation, accurate to ~1e-16 relative). Requires 0 < p < 1.
double normal_quantile(double p);

/// Seedable random stream. All variates are derived from the engine's
/// 64-bit outputs by explicit inverse transforms, so sequences are
/// reproducible bit-for-bit across platforms for a given seed.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : gen_(splitmix64(seed)) {}

  /// Uniform on the open interval (0,1). Uses 52 random bits so that
  /// (k + 0.5) * 2^-52 is exact; the result can never round to 0 or 1,
  /// which keeps log() and normal_quantile() safe on the output.
  double uniform() {
    return (static_cast<double>(gen_() >> 12) + 0.5) * 0x1.0p-52;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Unbiased integer in [0, n), rejection-sampled.
  std::uint64_t uniform_below(std::uint64_t n);

  bool bernoulli(double p) { return uniform() < p; }

  /// Exponential with rate 1.
  double exponential() { return -std::log(uniform()); }

  /// Chi-square with 4 degrees of freedom (sum of two mean-2 exponentials).
  double chisq4() { return -2.0 * std::log(uniform() * uniform()); }

  /// Standard normal by inversion.
  double normal() { return normal_quantile(uniform()); }

  template <typename RandomIt>
  void shuffle(RandomIt first, RandomIt last) {
    const auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
      std::swap(first[i - 1], first[uniform_below(i)]);
    }
  }

private:
  std::mt19937_64 gen_;
};

}  // namespace oewt::rng
