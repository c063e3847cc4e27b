#pragma once

#include <cstdint>
#include <utility>
#include <vector>

namespace longtail {

// Deterministic 64-bit generator (splitmix64). Streams are identical on
// every platform, unlike the std:: distributions, so seeded runs stay
// bit-reproducible across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased uniform integer in [0, n), n >= 1.
  std::uint64_t uniform_int(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  // Fisher-Yates with our own draws; std::shuffle is implementation-defined.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Independent substream, e.g. one per user or per epoch.
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t salt) {
    Rng r(seed ^ (0x632be59bd9b4e019ULL + salt * 0x9e3779b97f4a7c15ULL));
    return r.next_u64();
  }

 private:
  std::uint64_t state_;
};

}  // namespace longtail
