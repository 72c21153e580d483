#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "penaltyguard/rng.hpp"

using namespace penaltyguard;

TEST_CASE("labeled streams are deterministic and independent") {
  RngStream a(42, "graph"), a2(42, "graph"), b(42, "coupling");
  bool identical = true, differs = false;
  for (int k = 0; k < 64; ++k) {
    auto x = a.raw(), x2 = a2.raw(), y = b.raw();
    identical = identical && (x == x2);
    differs = differs || (x != y);
  }
  CHECK(identical);
  CHECK(differs);
}

TEST_CASE("different master seeds give different streams") {
  RngStream a(1, "graph"), b(2, "graph");
  bool differs = false;
  for (int k = 0; k < 16; ++k) differs = differs || (a.raw() != b.raw());
  CHECK(differs);
}

TEST_CASE("uniform01 stays in [0,1) and fills the range") {
  RngStream r(7, "u");
  double lo = 1.0, hi = 0.0;
  for (int k = 0; k < 100000; ++k) {
    double x = r.uniform01();
    REQUIRE(x >= 0.0);
    REQUIRE(x < 1.0);
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  CHECK(lo < 0.01);
  CHECK(hi > 0.99);
}

TEST_CASE("uniform(a,b) respects bounds") {
  RngStream r(7, "u2");
  for (int k = 0; k < 10000; ++k) {
    double x = r.uniform(0.9, 1.1);
    REQUIRE(x >= 0.9);
    REQUIRE(x <= 1.1);
  }
}

TEST_CASE("normal() has standard moments") {
  RngStream r(13, "n");
  const int N = 200000;
  double s1 = 0, s2 = 0;
  for (int k = 0; k < N; ++k) {
    double x = r.normal();
    s1 += x;
    s2 += x * x;
  }
  double mean = s1 / N, var = s2 / N - mean * mean;
  CHECK(std::abs(mean) < 0.02);
  CHECK(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("unit_vector3 lies on the sphere and covers both hemispheres") {
  RngStream r(99, "v");
  double zmin = 1, zmax = -1;
  for (int k = 0; k < 1000; ++k) {
    auto v = r.unit_vector3();
    double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    REQUIRE(std::abs(n - 1.0) < 1e-12);
    zmin = std::min(zmin, v[2]);
    zmax = std::max(zmax, v[2]);
  }
  CHECK(zmin < -0.9);
  CHECK(zmax > 0.9);
}

TEST_CASE("haar_state is unit norm and reproducible") {
  RngStream r(5, "env_state"), r2(5, "env_state");
  VecC a = r.haar_state(256), b = r2.haar_state(256);
  CHECK(std::abs(a.norm() - 1.0) < 1e-12);
  CHECK((a - b).norm() == 0.0);
}

TEST_CASE("below(n) stays in range and hits all residues") {
  RngStream r(3, "i");
  std::set<std::uint64_t> seen;
  for (int k = 0; k < 1000; ++k) {
    auto x = r.below(8);
    REQUIRE(x < 8);
    seen.insert(x);
  }
  CHECK(seen.size() == 8);
}
