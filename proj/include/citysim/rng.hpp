#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace citysim {

/// splitmix64 finalizer; used to derive independent per-stage seeds.
std::uint64_t splitmix64(std::uint64_t x);

/// Seed for an independent stream `stream` derived from `seed`.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// Named stream tags so stages stay reproducible on their own.
enum class Stream : std::uint64_t {
  roads = 1,
  buildings = 2,
  elements = 3,
  traffic = 4,
  lights = 5,
  agents = 6,
  tasks = 7,
};

inline std::uint64_t derive_seed(std::uint64_t seed, Stream s) {
  return derive_seed(seed, static_cast<std::uint64_t>(s));
}

/// Portable seeded generator. The engine is std::mt19937_64, whose output
/// sequence is fixed by the standard; the distributions below are written
/// out explicitly because the std:: ones are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Unbiased integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n);

  /// Integer in [lo, hi] inclusive.
  std::int64_t range(std::int64_t lo, std::int64_t hi);

  bool bernoulli(double p) { return uniform() < p; }

  /// Index drawn proportionally to non-negative weights; -1 if all are zero.
  int weighted(std::span<const double> weights);

  template <class Container>
  void shuffle(Container& c) {
    for (std::size_t i = c.size(); i > 1; --i) {
      std::swap(c[i - 1], c[below(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

/// 64-bit FNV-1a, used for content hashes of serialized state.
std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace citysim
