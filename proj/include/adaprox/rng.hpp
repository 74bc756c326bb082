#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string_view>

namespace adaprox {

namespace detail {

constexpr std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

}  // namespace detail

// Seeded stream of doubles, reproducible across platforms: the mt19937_64
// engine is fully specified by the standard, and all value mappings below are
// done by hand because std::uniform_real_distribution / normal_distribution
// output is implementation-defined.
//
// Streams are split by name: the engine seed mixes the base seed with a hash
// of the stream name, so each purpose ("noise", "positions", "init", ...)
// draws from an independent sequence and extra draws on one stream never
// shift another.
class RandomStream {
 public:
  RandomStream(std::uint64_t seed, std::string_view stream)
      : engine_(detail::splitmix64(seed ^ detail::fnv1a64(stream))) {}

  // uniform on [0, 1) with 53-bit resolution
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // log-uniform on [lo, hi]; requires lo > 0
  double log_uniform(double lo, double hi) {
    return std::exp(uniform(std::log(lo), std::log(hi)));
  }

  // standard normal via Box-Muller; consumes two uniforms per pair and
  // caches the spare
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 == 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  std::uint64_t raw() { return engine_(); }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace adaprox
