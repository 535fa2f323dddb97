#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace oslow {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// mt19937_64 engine with hand-rolled variate transforms. The engine output
/// is pinned by the standard and the transforms below avoid the
/// implementation-defined std::*_distribution classes, so streams are
/// bit-reproducible across compilers.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(splitmix64(seed)) {}

  // uniform on (0,1): the half-ulp offset keeps both endpoints open, which
  // the log transforms below rely on.
  double uniform() {
    return (static_cast<double>(gen_() >> 11) + 0.5) * 0x1.0p-53;
  }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform(), u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  // Laplace(0, scale) via inverse CDF.
  double laplace(double scale) {
    double u = uniform() - 0.5;
    return -scale * std::copysign(std::log(1.0 - 2.0 * std::abs(u)), -u);
  }

  // Standard Gumbel: mean is the Euler-Mascheroni constant, variance pi^2/6.
  double gumbel() { return -std::log(-std::log(uniform())); }

  // unbiased integer in [0, n)
  std::uint64_t integer(std::uint64_t n) {
    std::uint64_t bound = ~std::uint64_t{0} - ~std::uint64_t{0} % n;
    std::uint64_t x;
    do {
      x = gen_();
    } while (x >= bound);
    return x % n;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i)
      std::swap(v[i - 1], v[integer(i)]);
  }

  bool coin() { return (gen_() & 1u) != 0; }

  /// Independent child stream; used to give parallel jobs their own rngs.
  Rng spawn(std::uint64_t stream_id) {
    return Rng(splitmix64(gen_() ^ splitmix64(stream_id)));
  }

  std::uint64_t raw() { return gen_(); }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

/// Deterministic seed for a named sub-task of a base seed.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a,
                                 std::uint64_t b = 0) {
  return splitmix64(splitmix64(base ^ splitmix64(a)) ^ splitmix64(b + 1));
}

}  // namespace oslow
