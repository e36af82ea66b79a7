#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace gridcomp {

// xoshiro256++ seeded through splitmix64. Cheap to construct, so a fresh
// generator is derived for every parallel work unit (see make_stream).
class StreamRng {
 public:
  using result_type = std::uint64_t;

  explicit StreamRng(std::uint64_t seed);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  std::array<std::uint64_t, 4> s_;
};

// Phases of the computation that draw random numbers. Each (seed, phase,
// counter, unit) tuple names an independent stream, so results do not depend
// on how units are scheduled across threads.
enum class Stream : std::uint32_t {
  init = 1,
  w_grid = 2,
  w_township = 3,
  membership = 4,
  hyper = 5,
  alpha = 6,
  theta = 7,
  simulate = 8,
  holdout = 9,
  interval = 10,
};

StreamRng make_stream(std::uint64_t seed, Stream phase, std::uint64_t counter, std::uint64_t unit);

// Uniform on the open interval (0, 1).
inline double uniform_open01(StreamRng& rng) {
  return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

double standard_normal(StreamRng& rng);

double normal_cdf(double x);
// P(Z > x) computed without cancellation in the upper tail.
double normal_upper_tail(double x);
// log P(Z > x), finite for every finite x.
double log_normal_upper_tail(double x);
double normal_pdf(double x);

// Draw from N(mean, 1) restricted to [lower, inf) by inverting the tail CDF.
// Stable for bounds far in either tail.
double truncated_normal_below(StreamRng& rng, double mean, double lower);
// Draw from N(mean, 1) restricted to (-inf, upper].
double truncated_normal_above(StreamRng& rng, double mean, double upper);

}  // namespace gridcomp
