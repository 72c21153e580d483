#include <catch2/catch_amalgamated.hpp>

#include "oracle_helpers.hpp"
#include "penaltyguard/pauli.hpp"

using namespace penaltyguard;

namespace {
const Pauli kAll[4] = {Pauli::I, Pauli::X, Pauli::Y, Pauli::Z};
}

TEST_CASE("single-qubit product table matches dense 2x2 algebra") {
  for (Pauli a : kAll)
    for (Pauli b : kAll) {
      auto [phase, c] = pauli_product(a, b);
      MatC expect = oracle::pauli2x2(a) * oracle::pauli2x2(b);
      MatC got = phase * oracle::pauli2x2(c);
      REQUIRE(oracle::max_abs_diff(got, expect) == 0.0);
    }
}

TEST_CASE("anticommutator identity {sigma_a, sigma_b} = 2 delta_ab I") {
  for (Pauli a : kAll)
    for (Pauli b : kAll) {
      if (a == Pauli::I || b == Pauli::I) continue;
      MatC anti = oracle::pauli2x2(a) * oracle::pauli2x2(b) +
                  oracle::pauli2x2(b) * oracle::pauli2x2(a);
      MatC expect = (a == b) ? MatC(2.0 * MatC::Identity(2, 2))
                             : MatC(MatC::Zero(2, 2));
      REQUIRE(oracle::max_abs_diff(anti, expect) == 0.0);
    }
}

TEST_CASE("two-qubit string products close under multiplication") {
  // All 256 pairs of two-qubit strings: the PauliString product must match
  // the dense product of the corresponding 4x4 matrices exactly.
  for (Pauli a0 : kAll)
    for (Pauli a1 : kAll)
      for (Pauli b0 : kAll)
        for (Pauli b1 : kAll) {
          PauliString a = PauliString::identity().with(0, a0).with(1, a1);
          PauliString b = PauliString::identity().with(0, b0).with(1, b1);
          PauliString prod = a * b;
          MatC expect =
              oracle::dense_pauli_string(a, 2) * oracle::dense_pauli_string(b, 2);
          REQUIRE(oracle::max_abs_diff(oracle::dense_pauli_string(prod, 2),
                                       expect) == 0.0);
        }
}

TEST_CASE("identity factors are normalized away") {
  PauliString p = PauliString::single(3, Pauli::X);
  CHECK(p.weight() == 1);
  p.set(3, Pauli::I);
  CHECK(p.weight() == 0);
  CHECK(p == PauliString::identity());
  CHECK(p.max_qubit() == -1);
}

TEST_CASE("string accessors and scaling") {
  PauliString p = PauliString::single(0, Pauli::Y, 2.0).with(2, Pauli::Z);
  CHECK(p.at(0) == Pauli::Y);
  CHECK(p.at(1) == Pauli::I);
  CHECK(p.at(2) == Pauli::Z);
  CHECK(p.weight() == 2);
  CHECK(p.max_qubit() == 2);
  CHECK(p.has_real_coefficient());
  CHECK_FALSE(p.scaled(iu).has_real_coefficient());
}

TEST_CASE("register layout and dimensions") {
  QubitRegister reg = QubitRegister::encoded(1, 4, 8);
  CHECK(reg.n_system_physical() == 4);
  CHECK(reg.n_total() == 12);
  CHECK(reg.dim() == 4096);
  CHECK(reg.dim_system() == 16);
  CHECK(reg.dim_env() == 256);
  CHECK(reg.env_qubit(0) == 4);
  CHECK(reg.env_qubit(7) == 11);
  CHECK_THROWS_AS(reg.env_qubit(8), config_error);
  CHECK_THROWS_AS(QubitRegister::encoded(1, 0, 0), config_error);
}

TEST_CASE("qubit 0 is the most significant bit (canonical vector)") {
  // In a 3-qubit register the basis state |q0 q1 q2> = |1 0 0> has index 4.
  QubitRegister reg = QubitRegister::plain(3);
  Eigen::Index c = 4;
  CHECK(reg.bit(c, 0) == 1);
  CHECK(reg.bit(c, 1) == 0);
  CHECK(reg.bit(c, 2) == 0);
}

TEST_CASE("pauli letters round-trip") {
  for (Pauli p : kAll) CHECK(pauli_from_char(pauli_char(p)) == p);
  CHECK_THROWS_AS(pauli_from_char('Q'), config_error);
}
