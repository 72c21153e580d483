#include <catch2/catch_amalgamated.hpp>

#include "oracle_helpers.hpp"
#include "penaltyguard/code.hpp"
#include "penaltyguard/rng.hpp"

using namespace penaltyguard;

namespace {

// A deliberately non-detecting "code": one bare qubit, P = identity.
CodeSpec bare_qubit_code() {
  CodeSpec c;
  c.name = "bare";
  c.ell = 1;
  c.detect_weight = 1;
  c.logical_zero = StateVector::basis(2, 0);
  c.logical_one = StateVector::basis(2, 1);
  QubitRegister one = QubitRegister::plain(1);
  c.logical_x = pauli_to_operator(PauliString::single(0, Pauli::X), one);
  c.logical_y = pauli_to_operator(PauliString::single(0, Pauli::Y), one);
  c.logical_z = pauli_to_operator(PauliString::single(0, Pauli::Z), one);
  finalize_code(c);
  return c;
}

PauliSum random_logical_sum(RngStream& rng, int n, int terms) {
  PauliSum sum;
  for (int t = 0; t < terms; ++t) {
    PauliString p = PauliString::identity(rng.uniform(-1.0, 1.0));
    for (int q = 0; q < n; ++q) p.set(q, static_cast<Pauli>(rng.below(4)));
    sum.push_back(p);
  }
  return sum;
}

}  // namespace

TEST_CASE("four-qubit code states are orthonormal with the stated amplitudes") {
  CodeSpec c = build_jfs_code();
  CHECK(c.ell == 4);
  CHECK(c.detect_weight == 1);
  CHECK(c.logical_zero.norm() == 1.0);
  CHECK(c.logical_one.norm() == 1.0);
  CHECK(std::abs(inner(c.logical_zero, c.logical_one)) == 0.0);
  CHECK(c.logical_zero.amplitudes[0b0000] == cplx(0.5, 0.0));
  CHECK(c.logical_zero.amplitudes[0b0011] == cplx(0.0, 0.5));
  CHECK(c.logical_zero.amplitudes[0b1100] == cplx(0.0, 0.5));
  CHECK(c.logical_zero.amplitudes[0b1111] == cplx(0.5, 0.0));
  CHECK(c.logical_one.amplitudes[0b1010] == cplx(-0.5, 0.0));
  CHECK(c.logical_one.amplitudes[0b1001] == cplx(0.0, 0.5));
  CHECK(c.logical_one.amplitudes[0b0110] == cplx(0.0, 0.5));
  CHECK(c.logical_one.amplitudes[0b0101] == cplx(-0.5, 0.0));
}

TEST_CASE("logical operators are the stated two-local strings") {
  CodeSpec c = build_jfs_code();
  CHECK(oracle::max_abs_diff(
            c.logical_x.dense(),
            oracle::dense_pauli_string(
                PauliString::identity().with(0, Pauli::Y).with(2, Pauli::Y),
                4)) == 0.0);
  CHECK(oracle::max_abs_diff(
            c.logical_y.dense(),
            oracle::dense_pauli_string(
                PauliString::identity(-1.0).with(1, Pauli::X).with(2, Pauli::X),
                4)) == 0.0);
  CHECK(oracle::max_abs_diff(
            c.logical_z.dense(),
            oracle::dense_pauli_string(
                PauliString::identity().with(0, Pauli::Z).with(1, Pauli::Z),
                4)) == 0.0);
}

TEST_CASE("logical action table equals the bare Pauli matrices") {
  CodeSpec c = build_jfs_code();
  for (Pauli p : {Pauli::X, Pauli::Y, Pauli::Z}) {
    MatC table = logical_action_table(c, p);
    REQUIRE(oracle::max_abs_diff(table, oracle::pauli2x2(p)) < 1e-14);
  }
  // Explicit state actions, including phases.
  VecC x0 = c.logical_x.dense() * c.logical_zero.amplitudes;
  CHECK((x0 - c.logical_one.amplitudes).cwiseAbs().maxCoeff() < 1e-15);
  VecC y0 = c.logical_y.dense() * c.logical_zero.amplitudes;
  CHECK((y0 - iu * c.logical_one.amplitudes).cwiseAbs().maxCoeff() < 1e-15);
  VecC z1 = c.logical_z.dense() * c.logical_one.amplitudes;
  CHECK((z1 + c.logical_one.amplitudes).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("error-string enumeration counts and weights") {
  auto w1 = enumerate_error_strings(4, 1);
  CHECK(w1.size() == 12);
  for (const auto& s : w1) CHECK(s.weight() == 1);
  auto w2 = enumerate_error_strings(4, 2);
  CHECK(w2.size() == 12 + 9 * 6);  // weight-1 plus 3^2 * C(4,2) weight-2
}

TEST_CASE("detection holds for every weight-1 error") {
  CodeSpec c = build_jfs_code();
  DetectionReport rep = verify_detection(c);
  CHECK(rep.entries.size() == 12);
  CHECK(rep.passed);
  CHECK(rep.max_residual < 1e-12);
}

TEST_CASE("an undetecting code is reported as failing") {
  DetectionReport rep = verify_detection(bare_qubit_code());
  CHECK_FALSE(rep.passed);
  CHECK(rep.max_residual > 0.99);
}

TEST_CASE("encode_hamiltonian single logical X") {
  CodeSpec c = build_jfs_code();
  auto h = encode_hamiltonian({PauliString::single(0, Pauli::X)}, c, 1);
  CHECK(oracle::max_abs_diff(h.dense(), c.logical_x.dense()) == 0.0);
}

TEST_CASE("encode_hamiltonian identity and weighted two-qubit term") {
  CodeSpec c = build_jfs_code();
  auto id = encode_hamiltonian({PauliString::identity()}, c, 1);
  CHECK(oracle::max_abs_diff(id.dense(), MatC::Identity(16, 16)) == 0.0);

  PauliString xz = PauliString::identity(0.5).with(0, Pauli::X).with(1, Pauli::Z);
  auto h = encode_hamiltonian({xz}, c, 2);
  MatC expect = 0.5 * oracle::dense_kron(c.logical_x.dense(), c.logical_z.dense());
  CHECK(oracle::max_abs_diff(h.dense(), expect) < 1e-15);
}

TEST_CASE("encode_hamiltonian rejects out-of-range logical qubits") {
  CodeSpec c = build_jfs_code();
  CHECK_THROWS_AS(encode_hamiltonian({PauliString::single(2, Pauli::X)}, c, 2),
                  config_error);
}

TEST_CASE("encoded Hamiltonians commute with every block projector") {
  CodeSpec c = build_jfs_code();
  RngStream rng(17, "enc");
  QubitRegister reg = QubitRegister::encoded(2, 4, 0);
  ProjectorFamily fam = build_projector_family(c, 2, reg);
  for (int k = 0; k < 5; ++k) {
    auto h = encode_hamiltonian(random_logical_sum(rng, 2, 4), c, 2);
    for (int i = 0; i < 2; ++i) {
      double r = spectral_norm(commutator(h, fam.per_logical_p_sys[i]));
      REQUIRE(r < 1e-12);
    }
  }
}

TEST_CASE("projector family invariants for one logical qubit") {
  CodeSpec c = build_jfs_code();
  QubitRegister reg = QubitRegister::encoded(1, 4, 2);
  ProjectorFamily fam = build_projector_family(c, 1, reg);

  // Idempotent, Hermitian, orthogonal pieces.
  for (int i = 0; i < 1; ++i) {
    const auto& p = fam.per_logical_p[i];
    const auto& q = fam.per_logical_q[i];
    CHECK(p.is_hermitian());
    CHECK(spectral_norm(p * p - p) < 1e-12);
    CHECK(spectral_norm(q * q - q) < 1e-12);
    CHECK(spectral_norm(p * q) < 1e-12);
  }
  // R family: completeness, orthogonality, R_0 = P.
  auto sum = HermitianOperator::zero(reg.dim());
  for (const auto& r : fam.r_family) sum = sum + r;
  CHECK(spectral_norm(sum - HermitianOperator::identity(reg.dim())) < 1e-12);
  CHECK(spectral_norm(fam.r_family[0] - fam.total_P) < 1e-12);
  CHECK(spectral_norm(fam.r_family[0] * fam.r_family[1]) < 1e-12);

  // trace(P) on the system block: the codespace is 2-dimensional.
  CHECK(std::abs(sparse_trace(fam.total_P_sys.matrix()) - cplx(2.0, 0.0)) <
        1e-12);

  // Environment-identity structure of the embeddings.
  SpMatC env_id(reg.dim_env(), reg.dim_env());
  env_id.setIdentity();
  CHECK(spectral_norm(fam.total_P -
                      HermitianOperator::from_sparse(
                          kron(fam.total_P_sys.matrix(), env_id), true)) ==
        0.0);
}

TEST_CASE("projector family invariants for two logical qubits") {
  CodeSpec c = build_jfs_code();
  QubitRegister reg = QubitRegister::encoded(2, 4, 0);
  ProjectorFamily fam = build_projector_family(c, 2, reg);
  REQUIRE(fam.r_family.size() == 3);

  // R_1 = Q_1 P_2 + P_1 Q_2, orthogonal to R_0 and R_2.
  MatC expect = fam.per_logical_q[0].dense() * fam.per_logical_p[1].dense() +
                fam.per_logical_p[0].dense() * fam.per_logical_q[1].dense();
  CHECK(oracle::max_abs_diff(fam.r_family[1].dense(), expect) < 1e-12);
  CHECK(spectral_norm(fam.r_family[1] * fam.r_family[0]) < 1e-12);
  CHECK(spectral_norm(fam.r_family[1] * fam.r_family[2]) < 1e-12);

  // Completeness and penalty grading: Qt = sum_r r R_r.
  auto sum = HermitianOperator::zero(reg.dim());
  auto graded = HermitianOperator::zero(reg.dim());
  for (int r = 0; r < 3; ++r) {
    sum = sum + fam.r_family[r];
    graded = graded + fam.r_family[r].scaled(double(r));
  }
  CHECK(spectral_norm(sum - HermitianOperator::identity(reg.dim())) < 1e-12);
  CHECK(spectral_norm(graded - fam.penalty_Q) < 1e-12);

  CHECK(std::abs(sparse_trace(fam.total_P_sys.matrix()) - cplx(4.0, 0.0)) <
        1e-12);
}

TEST_CASE("sector bases are orthonormal and resolve the R projectors") {
  CodeSpec c = build_jfs_code();
  for (int n : {1, 2}) {
    QubitRegister reg = QubitRegister::encoded(n, 4, 0);
    ProjectorFamily fam = build_projector_family(c, n, reg);
    Eigen::Index total_cols = 0;
    for (int r = 0; r <= n; ++r) {
      MatC b = fam.sector_basis(r);
      total_cols += b.cols();
      REQUIRE(oracle::max_abs_diff(b.adjoint() * b,
                                   MatC::Identity(b.cols(), b.cols())) < 1e-12);
      REQUIRE(oracle::max_abs_diff(b * b.adjoint(),
                                   fam.r_family_sys[r].dense()) < 1e-12);
    }
    CHECK(total_cols == reg.dim_system());
  }
}

TEST_CASE("penalty exponential acts trivially on the codespace") {
  // exp(-i E_P Qt t) P = P at random times (dense exponential oracle).
  CodeSpec c = build_jfs_code();
  QubitRegister reg = QubitRegister::encoded(1, 4, 0);
  ProjectorFamily fam = build_projector_family(c, 1, reg);
  RngStream rng(23, "t");
  MatC q = fam.penalty_Q_sys.dense(), p = fam.total_P_sys.dense();
  for (int k = 0; k < 5; ++k) {
    double ep = rng.uniform(1.0, 100.0), t = rng.uniform(-10.0, 10.0);
    MatC u = oracle::expm(MatC(-iu * ep * t * q));
    REQUIRE(oracle::max_abs_diff(u * p, p) < 1e-11);
  }
}

TEST_CASE("projector phase identity on a single block") {
  // exp(i E_P Q_1 tau) Q_1 = e^{i E_P tau} Q_1.
  CodeSpec c = build_jfs_code();
  QubitRegister reg = QubitRegister::encoded(1, 4, 0);
  ProjectorFamily fam = build_projector_family(c, 1, reg);
  MatC q = fam.per_logical_q_sys[0].dense();
  double ep = 3.7, tau = 0.83;
  MatC lhs = oracle::expm(MatC(iu * ep * tau * q)) * q;
  MatC rhs = std::exp(iu * ep * tau) * q;
  CHECK(oracle::max_abs_diff(lhs, rhs) < 1e-12);
}

TEST_CASE("one-local couplings leave the codespace: V P = Q V P") {
  CodeSpec c = build_jfs_code();
  QubitRegister reg = QubitRegister::encoded(1, 4, 0);
  ProjectorFamily fam = build_projector_family(c, 1, reg);
  MatC p = fam.total_P_sys.dense(), q = fam.per_logical_q_sys[0].dense();
  for (const auto& s : enumerate_error_strings(4, 1)) {
    MatC v = MatC(pauli_string_matrix(s, 4));
    REQUIRE(oracle::max_abs_diff(v * p, q * v * p) < 1e-13);
  }
}

TEST_CASE("phase decomposition: single-phase form for 1-local couplings") {
  CodeSpec c = build_jfs_code();
  QubitRegister reg = QubitRegister::encoded(1, 4, 2);
  ProjectorFamily fam = build_projector_family(c, 1, reg);
  // V = (X on system qubit 1) tensor (Z on environment qubit 0): 1-local.
  PauliString v = PauliString::identity()
                      .with(1, Pauli::X)
                      .with(reg.env_qubit(0), Pauli::Z);
  auto V = pauli_to_operator(v, reg);
  auto res = phase_decomposition_check(V, fam, 17.0, 0.61, true);
  CHECK(res.pvp_residual < 1e-12);
  CHECK(res.multi_phase_residual < 1e-10);
  CHECK(res.single_phase_checked);
  CHECK(res.single_phase_residual < 1e-10);
}

TEST_CASE("phase decomposition: zero coupling is trivially consistent") {
  CodeSpec c = build_jfs_code();
  QubitRegister reg = QubitRegister::encoded(1, 4, 0);
  ProjectorFamily fam = build_projector_family(c, 1, reg);
  auto res = phase_decomposition_check(HermitianOperator::zero(reg.dim()), fam,
                                       5.0, 1.0, true);
  CHECK(res.max_residual() == 0.0);
}

TEST_CASE("phase decomposition: weight-2 cross-block coupling needs R_r") {
  CodeSpec c = build_jfs_code();
  QubitRegister reg = QubitRegister::encoded(2, 4, 0);
  ProjectorFamily fam = build_projector_family(c, 2, reg);
  // X on the last qubit of block 0 times X on the first qubit of block 1:
  // system weight 2, touching both blocks.
  PauliString v =
      PauliString::identity().with(3, Pauli::X).with(4, Pauli::X);
  auto V = pauli_to_operator(v, reg);
  auto res = phase_decomposition_check(V, fam, 3.0, 0.37, true);
  CHECK(res.multi_phase_residual < 1e-10);   // graded form holds
  CHECK(res.single_phase_residual > 0.1);    // single-phase form fails
}

TEST_CASE("phase decomposition rejects couplings with P V P != 0") {
  CodeSpec c = build_jfs_code();
  QubitRegister reg = QubitRegister::encoded(1, 4, 0);
  ProjectorFamily fam = build_projector_family(c, 1, reg);
  // The logical X preserves the codespace, so P X_L P != 0.
  auto V = HermitianOperator::from_sparse(c.logical_x.matrix(), true);
  CHECK_THROWS_AS(phase_decomposition_check(V, fam, 5.0, 1.0, false),
                  numeric_error);
}

TEST_CASE("logical basis states and encoded superpositions") {
  CodeSpec c = build_jfs_code();
  StateVector s10 = logical_basis_state(c, 2, 2);  // |1_L> tensor |0_L>
  StateVector expect = tensor(c.logical_one, c.logical_zero);
  CHECK((s10.amplitudes - expect.amplitudes).norm() == 0.0);

  VecC coeffs(2);
  coeffs << cplx(3.0, 0.0), cplx(0.0, 4.0);
  StateVector s = encode_logical_state(c, 1, coeffs);
  CHECK(std::abs(s.norm() - 1.0) < 1e-12);
  StateVector manual(16);
  manual.amplitudes = 0.6 * c.logical_zero.amplitudes +
                      cplx(0.0, 0.8) * c.logical_one.amplitudes;
  CHECK((s.amplitudes - manual.amplitudes).norm() < 1e-15);
}
