#include <catch2/catch_amalgamated.hpp>

#include "penaltyguard/rng.hpp"
#include "penaltyguard/state.hpp"

using namespace penaltyguard;

TEST_CASE("basis states and norms") {
  StateVector s = StateVector::basis(8, 3);
  CHECK(s.dim() == 8);
  CHECK(s.norm() == 1.0);
  CHECK(s.is_normalized());
  CHECK(s.amplitudes[3] == cplx(1.0, 0.0));
}

TEST_CASE("inner product conjugates the left argument") {
  StateVector a(VecC(2)), b(VecC(2));
  a.amplitudes << iu, 0.0;
  b.amplitudes << 1.0, 0.0;
  CHECK(inner(a, b) == cplx(0.0, -1.0));
  CHECK(inner(b, a) == cplx(0.0, 1.0));
  StateVector c(VecC(3));
  CHECK_THROWS_AS(inner(a, c), config_error);
}

TEST_CASE("tensor puts the first factor on the most significant side") {
  StateVector a = StateVector::basis(2, 1), b = StateVector::basis(2, 0);
  StateVector ab = tensor(a, b);
  REQUIRE(ab.dim() == 4);
  CHECK(ab.amplitudes[2] == cplx(1.0, 0.0));  // |1> tensor |0> = index 10b
}

TEST_CASE("tensor of random states preserves norm and amplitudes") {
  RngStream r(11, "t");
  StateVector a(r.haar_state(4)), b(r.haar_state(8));
  StateVector ab = tensor(a, b);
  CHECK(std::abs(ab.norm() - 1.0) < 1e-12);
  // Spot-check one amplitude against the definition.
  CHECK(std::abs(ab.amplitudes[3 * 8 + 5] - a.amplitudes[3] * b.amplitudes[5]) <
        1e-15);
}

TEST_CASE("normalize rejects the zero vector") {
  StateVector z(4);
  CHECK_THROWS_AS(z.normalize(), numeric_error);
  StateVector s(VecC(2));
  s.amplitudes << 3.0, 4.0;
  s.normalize();
  CHECK(std::abs(s.norm() - 1.0) < 1e-15);
  CHECK(std::abs(s.amplitudes[0].real() - 0.6) < 1e-15);
}
