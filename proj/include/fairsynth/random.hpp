#pragma once

// Counter-based seeding and the small generator used everywhere randomness is
// needed. All draws are derived from explicit seeds; there is no global RNG.

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <utility>

namespace fairsynth {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Purposes that get their own sub-seed stream off a master seed.
enum class SeedStream : std::uint64_t {
  fit = 1,
  sample = 2,
  decode = 3,
  split = 4,
  audit_rep = 5,
  proxy = 6,
  logreg = 7,
};

/// Sub-seed = splitmix64(splitmix64(master) ^ splitmix64((stream << 32) | index)).
inline constexpr std::uint64_t derive_seed(std::uint64_t master, SeedStream stream,
                                           std::uint64_t index = 0) {
  const std::uint64_t tag = (static_cast<std::uint64_t>(stream) << 32) | (index & 0xffffffffULL);
  return splitmix64(splitmix64(master) ^ splitmix64(tag));
}

/// Per-item stream seed (row i of a sample, epoch e of training, ...).
inline constexpr std::uint64_t item_seed(std::uint64_t seed, std::uint64_t item) {
  return splitmix64(seed ^ splitmix64(item + 0x632be59bd9b4e019ULL));
}

/// SplitMix64 as a UniformRandomBitGenerator. Cheap to construct, which lets
/// every row draw from its own deterministic sub-stream.
class SplitMix64 {
 public:
  using result_type = std::uint64_t;

  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n), rejection-sampled to avoid modulo bias.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = max() - max() % n;
    std::uint64_t x;
    do {
      x = (*this)();
    } while (x >= limit);
    return x % n;
  }

 private:
  std::uint64_t state_;
};

/// Fisher-Yates shuffle. Portable, unlike std::shuffle whose draws are
/// implementation-defined.
template <class T>
void shuffle(std::span<T> items, SplitMix64& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.below(i));
    std::swap(items[i - 1], items[j]);
  }
}

/// Index drawn from a discrete distribution by inverse CDF on one uniform.
inline std::size_t draw_categorical(std::span<const double> probs, double u) {
  double cumulative = 0.0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    cumulative += probs[k];
    if (u < cumulative) return k;
  }
  // u landed in the rounding slack above the last cumulative sum
  for (std::size_t k = probs.size(); k > 0; --k) {
    if (probs[k - 1] > 0.0) return k - 1;
  }
  return 0;
}

}  // namespace fairsynth
