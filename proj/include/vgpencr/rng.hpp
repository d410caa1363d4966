#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "vgpencr/errors.hpp"
#include "vgpencr/types.hpp"

namespace vgpencr {

// splitmix64 step, used to decorrelate nearby seeds before feeding the engine.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// mt19937_64 with fixed output transforms. The standard library's
// distribution objects are implementation-defined, which would break
// bitwise reproducibility of generated datasets across toolchains, so
// the uniform/normal/categorical transforms are pinned here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(mix_seed(seed)) {}

  // uniform on [0, 1) with 53-bit resolution
  double uniform01() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Box-Muller with cached partner draw
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  // index into probs by inverse CDF; probs are normalized internally
  int categorical(const std::vector<double>& probs) {
    if (probs.empty()) throw EmptyInput("categorical: empty probability vector");
    double total = 0.0;
    for (double p : probs) total += p;
    double u = uniform01() * total;
    for (std::size_t k = 0; k + 1 < probs.size(); ++k) {
      if (u < probs[k]) return static_cast<int>(k);
      u -= probs[k];
    }
    return static_cast<int>(probs.size()) - 1;
  }

  // Fisher-Yates permutation of 0..n-1
  std::vector<Index> permutation(Index n) {
    std::vector<Index> idx(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
    for (Index i = n - 1; i > 0; --i) {
      const Index j = static_cast<Index>(eng_() % static_cast<std::uint64_t>(i + 1));
      std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    }
    return idx;
  }

 private:
  std::mt19937_64 eng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace vgpencr
