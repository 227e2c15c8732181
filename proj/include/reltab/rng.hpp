#pragma once
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace reltab {

// Seeded RNG wrapper. The mt19937_64 engine is fully specified by the
// standard; the distribution code below is hand-rolled so that sampled
// values are identical across platforms and standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_(seed), eng_(seed) {}

  uint64_t next_u64() { return eng_(); }

  // uniform over [0, n), rejection-sampled to avoid modulo bias
  size_t uniform_index(size_t n) {
    if (n <= 1) return 0;
    uint64_t bound = static_cast<uint64_t>(n);
    uint64_t threshold = (0 - bound) % bound;
    for (;;) {
      uint64_t r = next_u64();
      if (r >= threshold) return static_cast<size_t>(r % bound);
    }
  }

  // uniform over [0, 1)
  double uniform_real() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double normal(double mean = 0.0, double stddev = 1.0) {
    if (have_spare_) {
      have_spare_ = false;
      return mean + stddev * spare_;
    }
    double u1 = 1.0 - uniform_real();  // (0, 1]
    double u2 = uniform_real();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return mean + stddev * r * std::cos(theta);
  }

  // Fisher-Yates; std::shuffle is not portable across standard libraries
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = uniform_index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

  // independent child stream, stable under the parent's own consumption
  Rng child(uint64_t stream) const { return Rng(mix(seed_, stream)); }

  uint64_t seed() const { return seed_; }

  static uint64_t mix(uint64_t a, uint64_t b) {
    // splitmix64 finalizer over the combined state
    uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  uint64_t seed_;
  std::mt19937_64 eng_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace reltab
