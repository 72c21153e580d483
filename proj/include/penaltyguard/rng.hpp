#pragma once

// Deterministic, labeled random streams.
//
// Every random choice in a model build comes from its own named stream
// derived from the master seed, so e.g. enlarging the environment does not
// shift the coupling coefficients drawn for the system.  Distribution
// sampling is implemented by hand (not via <random> distribution adaptors,
// whose output is implementation-defined) so identical seeds give
// bit-identical models on any standard library.

#include <array>
#include <cmath>
#include <random>
#include <string>

#include "penaltyguard/common.hpp"

namespace penaltyguard {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

class RngStream {
 public:
  RngStream(std::uint64_t master_seed, const std::string& label)
      : gen_(splitmix64(master_seed ^ fnv1a64(label))) {}

  // Uniform on [0, 1) with 53 random bits.
  double uniform01() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Standard normal via Box-Muller; the pair's second value is cached.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - uniform01();  // (0, 1]: keeps the log finite
    double u2 = uniform01();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  // Uniform point on the unit sphere (normalized Gaussian triple).
  std::array<double, 3> unit_vector3() {
    for (;;) {
      std::array<double, 3> v{normal(), normal(), normal()};
      double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
      if (n > 1e-12) {
        for (double& x : v) x /= n;
        return v;
      }
    }
  }

  // Haar-random unit vector in C^dim (normalized complex Gaussians).
  VecC haar_state(Eigen::Index dim) {
    VecC v(dim);
    for (Eigen::Index k = 0; k < dim; ++k) v[k] = cplx(normal(), normal());
    double n = v.norm();
    if (n < 1e-12) return haar_state(dim);
    return v / n;
  }

  // Integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    // Rejection sampling to avoid modulo bias.
    std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                          std::numeric_limits<std::uint64_t>::max() % n;
    for (;;) {
      std::uint64_t x = gen_();
      if (x < limit) return x % n;
    }
  }

  std::uint64_t raw() { return gen_(); }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace penaltyguard
