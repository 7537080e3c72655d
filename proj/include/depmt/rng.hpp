#ifndef DEPMT_RNG_HPP
#define DEPMT_RNG_HPP

#include <cstdint>
#include <random>
#include <vector>

namespace depmt {

// Deterministic RNG used everywhere randomness is needed. std::mt19937_64 is
// fully specified by the standard; the derived draws below are hand-rolled so
// that corpora, schedules and parameter initializations are byte-identical
// across platforms (std::uniform_int_distribution and std::shuffle are not).
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next() { return gen_(); }

  // uniform integer in [0, n), n > 0; rejection sampling, unbiased
  int below(int n) {
    const uint64_t bound = static_cast<uint64_t>(n);
    const uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    uint64_t x = gen_();
    while (x >= limit) x = gen_();
    return static_cast<int>(x % bound);
  }

  // uniform double in [0, 1) with 53 bits
  double unit() { return static_cast<double>(gen_() >> 11) * (1.0 / 9007199254740992.0); }

  // uniform double in [-s, s]
  double sym(double s) { return (2.0 * unit() - 1.0) * s; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
      const int j = below(i + 1);
      std::swap(v[i], v[j]);
    }
  }

 private:
  std::mt19937_64 gen_;
};

// Mixes a base seed with stream identifiers (step, slot, ...) into an
// independent seed; splitmix64 finalizer.
inline uint64_t mix_seed(uint64_t a, uint64_t b, uint64_t c = 0) {
  uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1) + 0xbf58476d1ce4e5b9ULL * (c + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace depmt

#endif
