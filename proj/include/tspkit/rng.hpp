#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

namespace tspkit {

// Deterministic random source. All randomness in the project flows through
// this wrapper so that a (seed, call sequence) pair fully determines results
// on every platform: mt19937_64 output is specified by the standard, and the
// derived draws below avoid unspecified library distributions.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next() { return engine_(); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform01() { return (next() >> 11) * 0x1.0p-53; }

  // Unbiased uniform integer in [0, n).
  uint64_t below(uint64_t n) {
    if (n == 0) throw std::invalid_argument("Rng::below: n must be positive");
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t r = next();
    while (r >= limit) r = next();
    return r % n;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Index drawn from an unnormalized or normalized weight vector.
  size_t categorical(std::span<const double> probs) {
    double total = 0.0;
    for (double p : probs) total += p;
    double u = uniform01() * total;
    double acc = 0.0;
    size_t last_positive = 0;
    bool seen = false;
    for (size_t i = 0; i < probs.size(); ++i) {
      if (probs[i] <= 0.0) continue;
      acc += probs[i];
      last_positive = i;
      seen = true;
      if (u < acc) return i;
    }
    if (!seen) throw std::invalid_argument("Rng::categorical: no positive weight");
    return last_positive;  // guards against accumulated rounding at u ~ total
  }

  // In-place Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = below(i);
      std::swap(v[i - 1], v[j]);
    }
  }

  // splitmix64 step; used to spread user seeds and to derive substreams.
  static uint64_t split(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  static uint64_t mix(uint64_t a, uint64_t b) { return split(a ^ split(b)); }

 private:
  std::mt19937_64 engine_;
};

// Derives an independent stream seed from a master seed and a path of
// indices, e.g. (master, {epoch, step, b}).
inline uint64_t derive_seed(uint64_t master, std::initializer_list<uint64_t> path) {
  uint64_t s = Rng::split(master);
  for (uint64_t p : path) s = Rng::mix(s, p);
  return s;
}

}  // namespace tspkit
