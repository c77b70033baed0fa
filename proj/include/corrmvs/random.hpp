#ifndef CORRMVS_RANDOM_HPP_
#define CORRMVS_RANDOM_HPP_

#include <cmath>
#include <cstdint>
#include <numbers>

namespace corrmvs
{

/**
 * @brief SplitMix64 generator.
 *
 * Constants are the published SplitMix64 ones (golden-ratio increment
 * 0x9E3779B97F4A7C15, mixers 0xBF58476D1CE4E5B9 / 0x94D049BB133111EB). Every
 * seeded quantity in the library (synthetic scenes, features, random weights)
 * is drawn from this generator so results are reproducible bit-for-bit on any
 * platform.
 */
class SplitMix64
{
public:
  explicit constexpr SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

  constexpr std::uint64_t next() noexcept
  {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller (one sample per call; the pair partner is discarded).
  double normal() noexcept
  {
    double u1 = uniform();
    while (u1 <= 0.0) { u1 = uniform(); }
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Derive an independent stream, e.g. one per view.
  SplitMix64 fork(std::uint64_t salt) noexcept { return SplitMix64(next() ^ (salt * 0xD1B54A32D192ED03ULL)); }

private:
  std::uint64_t state_;
};

}  // namespace corrmvs

#endif  // CORRMVS_RANDOM_HPP_
