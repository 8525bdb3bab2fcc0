// Counter-based splittable RNG. Every consumer derives its own stream from
// (seed, tag, index) so results do not depend on the order in which unrelated
// code draws numbers. Runs are reproducible from (seed, config) alone.
#pragma once

#include <cstdint>
#include <string_view>

namespace aid {

namespace detail {
inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline uint64_t fnv1a(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}
}  // namespace detail

class Rng {
 public:
  Rng() : state_(0) {}
  explicit Rng(uint64_t seed) : state_(detail::splitmix64(seed ^ 0x5851f42d4c957f2dull)) {}

  // Independent stream derived from this one; does not advance the parent.
  Rng fork(uint64_t stream) const {
    Rng r;
    r.state_ = detail::splitmix64(state_ ^ detail::splitmix64(stream + 0x9e3779b97f4a7c15ull));
    return r;
  }
  Rng fork(std::string_view tag) const { return fork(detail::fnv1a(tag)); }

  uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). n must be positive.
  int64_t uniform_int(int64_t n) {
    // Rejection sampling keeps the distribution exact.
    uint64_t un = static_cast<uint64_t>(n);
    uint64_t limit = UINT64_MAX - UINT64_MAX % un;
    uint64_t v;
    do {
      v = next_u64();
    } while (v >= limit);
    return static_cast<int64_t>(v % un);
  }

 private:
  uint64_t state_;
};

}  // namespace aid
