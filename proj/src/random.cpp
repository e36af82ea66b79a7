#include "gridcomp/random.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <boost/math/special_functions/erf.hpp>
#include <boost/random/normal_distribution.hpp>

namespace gridcomp {

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t mix(std::uint64_t h, std::uint64_t v) {
  std::uint64_t s = h ^ (v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2));
  return splitmix64(s);
}

// Inverse of the upper tail: returns x with P(Z > x) = t, for t in (0, 1).
double upper_tail_quantile(double t) {
  return std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * t);
}

// Bounds beyond this have an upper-tail mass too close to the double range
// for erfc/erfc_inv; they are handled by Newton iteration on log P(Z > x).
constexpr double kLogSpaceBound = 37.0;

double sample_far_tail(StreamRng& rng, double lower) {
  const double target = log_normal_upper_tail(lower) + std::log1p(-uniform_open01(rng));
  double x = lower;
  for (int iter = 0; iter < 100; ++iter) {
    const double g = log_normal_upper_tail(x) - target;
    const double log_pdf = -0.5 * x * x - 0.5 * std::log(2.0 * std::numbers::pi);
    const double slope = -std::exp(log_pdf - log_normal_upper_tail(x));
    const double step = g / slope;
    x -= step;
    if (std::abs(step) <= 1e-14 * std::abs(x)) break;
  }
  return std::max(x, lower);
}

// Standard normal restricted to [lower, inf).
double standard_truncated_below(StreamRng& rng, double lower) {
  if (lower == -std::numeric_limits<double>::infinity()) return standard_normal(rng);
  if (lower > kLogSpaceBound) return sample_far_tail(rng, lower);
  const double v = uniform_open01(rng);
  const double upper_mass = normal_upper_tail(lower);
  // Upper-tail mass of the draw; precise whenever the draw is in the right tail.
  const double t = (1.0 - v) * upper_mass;
  double x;
  if (t < 0.5) {
    x = upper_tail_quantile(t);
  } else {
    // Lower-tail mass of the draw; precise whenever the draw is in the left tail.
    const double s = normal_upper_tail(-lower) + v * upper_mass;
    x = -upper_tail_quantile(s);
  }
  return std::max(x, lower);
}

}  // namespace

StreamRng::StreamRng(std::uint64_t seed) {
  std::uint64_t state = seed;
  for (auto& word : s_) word = splitmix64(state);
}

StreamRng make_stream(std::uint64_t seed, Stream phase, std::uint64_t counter, std::uint64_t unit) {
  std::uint64_t h = mix(seed, static_cast<std::uint64_t>(phase));
  h = mix(h, counter);
  h = mix(h, unit);
  return StreamRng(h);
}

double standard_normal(StreamRng& rng) {
  // Boost's unit normal is a stateless ziggurat, so draws are reproducible
  // independent of the standard library in use.
  return boost::random::normal_distribution<double>{}(rng);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_upper_tail(double x) { return 0.5 * std::erfc(x / std::numbers::sqrt2); }

double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

double log_normal_upper_tail(double x) {
  if (x < 35.0) return std::log(normal_upper_tail(x));
  // Asymptotic Mills-ratio expansion; relative error < 1e-11 for x >= 35.
  const double r = 1.0 / (x * x);
  const double series = 1.0 - r * (1.0 - 3.0 * r * (1.0 - 5.0 * r * (1.0 - 7.0 * r)));
  return -0.5 * x * x - std::log(x) - 0.5 * std::log(2.0 * std::numbers::pi) + std::log(series);
}

double truncated_normal_below(StreamRng& rng, double mean, double lower) {
  return mean + standard_truncated_below(rng, lower - mean);
}

double truncated_normal_above(StreamRng& rng, double mean, double upper) {
  return mean - standard_truncated_below(rng, mean - upper);
}

}  // namespace gridcomp
