#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace aural {

// Deterministic generator with fixed algorithms (splitmix64 core,
// Box-Muller normals) so that streams are bit-identical across platforms
// and standard-library versions.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed ^ 0x9e3779b97f4a7c15ull) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - uniform();  // (0, 1], keeps log finite
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  // [lo, hi)
  int64_t randint(int64_t lo, int64_t hi) {
    return lo + static_cast<int64_t>(next_u64() % static_cast<uint64_t>(hi - lo));
  }

  std::vector<double> normal_vec(size_t n, double scale = 1.0) {
    std::vector<double> out(n);
    for (auto& v : out) v = normal() * scale;
    return out;
  }

  std::vector<double> uniform_vec(size_t n, double lo, double hi) {
    std::vector<double> out(n);
    for (auto& v : out) v = uniform(lo, hi);
    return out;
  }

  // Independent generator derived from this one's seed and a stream tag.
  Rng fork(uint64_t stream) const {
    Rng r(state_ ^ (0x94d049bb133111ebull * (stream + 1)));
    r.next_u64();
    return r;
  }

 private:
  uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace aural
