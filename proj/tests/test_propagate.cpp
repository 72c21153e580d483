#include <catch2/catch_amalgamated.hpp>

#include <functional>

#include "oracle_helpers.hpp"
#include "penaltyguard/propagate.hpp"

using namespace penaltyguard;

namespace {

HermitianOperator random_hermitian(Eigen::Index dim, std::uint64_t seed) {
  RngStream rng(seed, "test_h");
  MatC m(dim, dim);
  for (Eigen::Index i = 0; i < dim; ++i)
    for (Eigen::Index j = 0; j < dim; ++j)
      m(i, j) = cplx(rng.normal(), rng.normal());
  MatC h = 0.5 * (m + m.adjoint().eval());
  return HermitianOperator::from_sparse(to_sparse(h), true);
}

ModelConfig small_config(std::uint64_t seed, double lambda, double e_penalty) {
  ModelConfig c;
  c.n_logical = 1;
  c.n_env = 4;
  c.seed = seed;
  c.lambda = lambda;
  c.e_penalty = e_penalty;
  c.h_comp = Schedule::constant({PauliString::single(0, Pauli::X)});
  c.initial_system_state.kind = InitialSystemState::Kind::random_codespace;
  return c;
}

// Independent classic RK4 march for i d/dt psi = H(t) psi.
VecC rk4_evolve(const std::function<MatC(double)>& h, VecC psi, double t0,
                double t1, double dt_req) {
  const long n = std::max<long>(1, static_cast<long>(std::ceil((t1 - t0) / dt_req)));
  const double dt = (t1 - t0) / static_cast<double>(n);
  for (long i = 0; i < n; ++i) {
    const double t = t0 + dt * static_cast<double>(i);
    VecC k1 = -iu * (h(t) * psi);
    VecC k2 = -iu * (h(t + 0.5 * dt) * VecC(psi + 0.5 * dt * k1));
    VecC k3 = -iu * (h(t + 0.5 * dt) * VecC(psi + 0.5 * dt * k2));
    VecC k4 = -iu * (h(t + dt) * VecC(psi + dt * k3));
    psi += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return psi;
}

double overlap_deficit(const VecC& a, const VecC& b) {
  return 1.0 - std::abs(a.dot(b)) / (a.norm() * b.norm());
}

}  // namespace

TEST_CASE("single-qubit Z diagonalizes to -1, +1") {
  auto f = diagonalize(pauli_to_operator(PauliString::single(0, Pauli::Z),
                                         QubitRegister::plain(1)));
  REQUIRE(f.dim() == 2);
  CHECK(f.eigenvalues[0] == Catch::Approx(-1.0).margin(1e-14));
  CHECK(f.eigenvalues[1] == Catch::Approx(1.0).margin(1e-14));
}

TEST_CASE("scaled penalty projector has the expected spectrum") {
  // One encoded logical qubit: the penalty term has eigenvalue 0 on the
  // 2-dim codespace and E_P on the 14-dim error space.
  CodeSpec code = build_code("jfs4");
  QubitRegister reg = QubitRegister::encoded(1, code.ell, 0);
  ProjectorFamily fam = build_projector_family(code, 1, reg);
  const double ep = 7.5;
  auto f = diagonalize(fam.penalty_Q_sys.scaled(ep));
  int zeros = 0, tops = 0;
  for (Eigen::Index i = 0; i < f.dim(); ++i) {
    if (std::abs(f.eigenvalues[i]) < 1e-10) ++zeros;
    if (std::abs(f.eigenvalues[i] - ep) < 1e-10) ++tops;
  }
  CHECK(zeros == 2);
  CHECK(tops == 14);
}

TEST_CASE("encoded logical X keeps +-1 in its spectrum") {
  CodeSpec code = build_code("jfs4");
  auto f = diagonalize(encode_hamiltonian({PauliString::single(0, Pauli::X)},
                                          code, 1));
  bool has_minus = false, has_plus = false;
  for (Eigen::Index i = 0; i < f.dim(); ++i) {
    if (std::abs(f.eigenvalues[i] + 1.0) < 1e-12) has_minus = true;
    if (std::abs(f.eigenvalues[i] - 1.0) < 1e-12) has_plus = true;
  }
  CHECK(has_minus);
  CHECK(has_plus);
}

TEST_CASE("spectral form invariants hold on a random operator") {
  auto h = random_hermitian(64, 7);
  auto f = diagonalize(h);
  CHECK(unitarity_residual(f) < 1e-10);
  CHECK(reconstruction_residual(f, h) < 1e-10);
  for (Eigen::Index i = 1; i < f.dim(); ++i)
    REQUIRE(f.eigenvalues[i] >= f.eigenvalues[i - 1]);
  CHECK(f.source_hash == h.fingerprint());
}

TEST_CASE("probe-based verification covers large decompositions") {
  auto h = random_hermitian(2048, 3);
  auto f = diagonalize(h);  // > 1024 takes the stochastic-probe branch
  CHECK(f.dim() == 2048);
  VecC x = RngStream(5, "probe_check").haar_state(2048);
  VecC hx = h.matrix() * x;
  VecC cx = f.eigenvectors.adjoint() * x;
  VecC rec = f.eigenvectors * VecC(f.eigenvalues.cast<cplx>().cwiseProduct(cx));
  CHECK((rec - hx).norm() / f.eigenvalues.cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("diagonalize refuses oversized or unmarked operators") {
  CHECK_THROWS_AS(diagonalize(HermitianOperator::identity(16), 8),
                  config_error);
  SpMatC m(2, 2);
  m.insert(0, 1) = cplx(0.0, 1.0);
  auto nh = HermitianOperator::from_sparse(m, false);
  CHECK_THROWS_AS(diagonalize(nh), config_error);
}

TEST_CASE("spectral evolution fixes eigenstates up to phase") {
  auto f = diagonalize(pauli_to_operator(PauliString::single(0, Pauli::Z),
                                         QubitRegister::plain(1)));
  StateVector zero{(VecC(2) << 1.0, 0.0).finished()};
  auto same = evolve_spectral(f, zero, 0.0);
  CHECK((same.amplitudes - zero.amplitudes).norm() < 1e-14);
  auto out = evolve_spectral(f, zero, M_PI);
  CHECK(std::abs(out.amplitudes[0] - cplx(-1.0, 0.0)) < 1e-12);
  CHECK(std::abs(out.amplitudes[1]) < 1e-14);
  CHECK(std::abs(std::abs(inner(zero, out)) - 1.0) < 1e-12);
}

TEST_CASE("spectral evolution stays exact at extreme times") {
  auto h = random_hermitian(16, 11);
  auto f = diagonalize(h);
  StateVector s{RngStream(2, "s").haar_state(16)};
  auto far = evolve_spectral(f, s, 1e9);
  CHECK(std::abs(far.norm() - 1.0) < 1e-9);
  // Energy expectation is conserved exactly under the spectral map.
  MatC hd = h.dense();
  cplx e0 = s.amplitudes.dot(hd * s.amplitudes);
  cplx e1 = far.amplitudes.dot(hd * far.amplitudes);
  CHECK(std::abs(e0 - e1) < 1e-8 * std::abs(e0));
}

TEST_CASE("spectral and stepped methods agree; both match dense expm") {
  auto h = random_hermitian(256, 13);  // an 8-qubit Hamiltonian
  auto f = diagonalize(h);
  StateVector s{RngStream(3, "s").haar_state(256)};
  const double t = 5.0;
  auto a = evolve_spectral(f, s, t);
  auto b = evolve_stepped(make_stepped(h), s, 0.0, t);
  CHECK(overlap_deficit(a.amplitudes, b.amplitudes) < 1e-8);
  VecC oracle_state = oracle::dense_evolve(h.dense(), s.amplitudes, t);
  CHECK((a.amplitudes - oracle_state).norm() < 1e-9);
  CHECK((b.amplitudes - oracle_state).norm() < 1e-7);
}

TEST_CASE("stepped evolution under the zero Hamiltonian is the identity") {
  auto sh = make_stepped(HermitianOperator::zero(8));
  StateVector s{RngStream(4, "s").haar_state(8)};
  auto out = evolve_stepped(sh, s, 0.0, 12.0);
  CHECK((out.amplitudes - s.amplitudes).norm() < 1e-14);
}

TEST_CASE("stepped evolution composes across intermediate times") {
  auto h = random_hermitian(16, 17);
  auto sh = make_stepped(h);
  StateVector s{RngStream(5, "s").haar_state(16)};
  auto ab = evolve_stepped(sh, evolve_stepped(sh, s, 0.0, 2.0), 2.0, 5.0);
  auto direct = evolve_stepped(sh, s, 0.0, 5.0);
  CHECK(overlap_deficit(ab.amplitudes, direct.amplitudes) < 1e-8);
  CHECK(std::abs(ab.norm() - 1.0) < 1e-9);
}

TEST_CASE("stepped evolution conserves energy for constant Hamiltonians") {
  auto h = random_hermitian(32, 19);
  auto sh = make_stepped(h);
  MatC hd = h.dense();
  StateVector s{RngStream(6, "s").haar_state(32)};
  cplx e0 = s.amplitudes.dot(hd * s.amplitudes);
  for (double t : {1.0, 7.0, 30.0}) {
    auto out = evolve_stepped(sh, s, 0.0, t);
    cplx e = out.amplitudes.dot(hd * out.amplitudes);
    REQUIRE(std::abs(e - e0) < 1e-8 * std::abs(e0));
  }
}

TEST_CASE("stepped schedule evolution matches an independent integrator") {
  // Encoded interpolation X_L -> Z_L on the 16-dim system block, fast enough
  // (T=3) that the dynamics is genuinely nonadiabatic.
  CodeSpec code = build_code("jfs4");
  SpMatC a = encode_hamiltonian({PauliString::single(0, Pauli::X)}, code, 1)
                 .matrix();
  SpMatC b = encode_hamiltonian({PauliString::single(0, Pauli::Z)}, code, 1)
                 .matrix();
  const double T = 3.0;
  auto sh = make_stepped_sparse(a, SpMatC(b - a), T);
  REQUIRE(sh.time_dependent());

  StateVector s{RngStream(7, "s").haar_state(16)};
  auto mine = evolve_stepped(sh, s, 0.0, T);

  MatC ad = MatC(a), bd = MatC(b);
  auto h_of_t = [&](double t) { return MatC(ad + (t / T) * (bd - ad)); };
  VecC ref = rk4_evolve(h_of_t, s.amplitudes, 0.0, T, 2e-4);
  // The refinement contract is an overlap deficit per unit time; vector-norm
  // agreement is correspondingly looser (deficit ~ error^2 / 2).
  CHECK(overlap_deficit(mine.amplitudes, ref) < 1e-8 * T);
  CHECK((mine.amplitudes - ref).norm() < 1e-4);
  CHECK(std::abs(mine.norm() - 1.0) < 1e-9);
}

TEST_CASE("stepped evolution reports stiffness instead of looping") {
  SpMatC huge(2, 2);
  huge.insert(0, 0) = 1e15;
  huge.insert(1, 1) = -1e15;
  auto sh = make_stepped_sparse(std::move(huge), SpMatC(2, 2), 0.0);
  StateVector s{(VecC(2) << 1.0, 0.0).finished()};
  CHECK_THROWS_AS(evolve_stepped(sh, s, 0.0, 1.0), numeric_error);
}

TEST_CASE("norm drift is an error, never silently repaired") {
  SpMatC bad(2, 2);  // anti-Hermitian generator: exp(-i Theta) is a dilation
  bad.insert(0, 0) = cplx(0.0, 0.4);
  bad.insert(1, 1) = cplx(0.0, 0.4);
  auto sh = make_stepped_sparse(std::move(bad), SpMatC(2, 2), 0.0);
  StateVector s{(VecC(2) << 1.0, 0.0).finished()};
  CHECK_THROWS_AS(evolve_stepped(sh, s, 0.0, 1.0), numeric_error);
}

TEST_CASE("propagator settings are validated") {
  PropagatorSettings st;
  st.unitarity_tol = 1e-13;
  CHECK_THROWS_AS(st.validate(), config_error);
  st = PropagatorSettings{};
  st.dt_max = 0.0;
  CHECK_THROWS_AS(st.validate(), config_error);
  st = PropagatorSettings{};
  st.substep_expansion_order = 2;
  CHECK_THROWS_AS(st.validate(), config_error);
}

TEST_CASE("paired evolution matches dense-exponential oracles") {
  ModelInstance inst = assemble(small_config(23, 0.1, 7.0));
  auto tr = evolve_pair(inst, inst.init_system, inst.init_env,
                        {0.0, 0.7, 2.5});
  MatC hd = inst.hamiltonian(0.0).dense();
  MatC h0d = inst.h0(0.0).dense();
  VecC s0 = inst.init_full.amplitudes;
  for (std::size_t k = 0; k < tr.times.size(); ++k) {
    VecC phi_ref = oracle::dense_evolve(hd, s0, tr.times[k]);
    VecC phi0_ref = oracle::dense_evolve(h0d, s0, tr.times[k]);
    REQUIRE((tr.phi[k] - phi_ref).norm() < 1e-8);
    REQUIRE((tr.phi0[k] - phi0_ref).norm() < 1e-8);
    // The penalty-free trajectory factorizes by construction.
    VecC prod = tensor(StateVector{tr.phi0_sys[k]}, StateVector{tr.phi0_env[k]})
                    .amplitudes;
    REQUIRE((tr.phi0[k] - prod).norm() == 0.0);
    REQUIRE(std::abs(VecC(tr.phi[k]).norm() - 1.0) < 1e-9);
  }
}

TEST_CASE("with no coupling the paired trajectories coincide") {
  ModelInstance inst = assemble(small_config(29, 0.0, 11.0));
  auto tr = evolve_pair(inst, inst.init_system, inst.init_env,
                        {0.5, 3.0, 10.0, 100.0});
  for (std::size_t k = 0; k < tr.times.size(); ++k) {
    double f = std::norm(VecC(tr.phi0[k]).dot(VecC(tr.phi[k])));
    REQUIRE(std::abs(f - 1.0) < 1e-10);
  }
}

TEST_CASE("paired evolution rejects states outside the codespace") {
  ModelInstance inst = assemble(small_config(31, 0.1, 5.0));
  VecC err = VecC::Zero(16);
  err[3] = 1.0;
  CHECK_THROWS_AS(evolve_pair(inst, StateVector{err}, inst.init_env, {1.0}),
                  config_error);
}

TEST_CASE("pair evolver evaluates arbitrary times consistently") {
  ModelInstance inst = assemble(small_config(37, 0.1, 9.0));
  auto ev = make_pair_evolver(inst, inst.init_system, inst.init_env);
  auto tr = evolve_pair(inst, inst.init_system, inst.init_env, {4.2});
  CHECK((ev.phi_at(4.2) - tr.phi[0]).norm() < 1e-12);
  CHECK((ev.phi0_at(4.2) - tr.phi0[0]).norm() < 1e-12);
}

TEST_CASE("schedule instances evolve through the stepped path") {
  ModelConfig c = small_config(41, 0.05, 3.0);
  c.h_comp = Schedule::linear({PauliString::single(0, Pauli::X)},
                              {PauliString::single(0, Pauli::Z)}, 5.0);
  ModelInstance inst = assemble(c);
  auto tr = evolve_pair(inst, inst.init_system, inst.init_env,
                        {1.0, 2.5, 5.0});

  MatC h0_dense = inst.hamiltonian(0.0).dense();
  SpMatC env_id(inst.reg.dim_env(), inst.reg.dim_env());
  env_id.setIdentity();
  MatC slope =
      MatC(kron(SpMatC(inst.h_comp_sys[1] - inst.h_comp_sys[0]), env_id));
  auto h_of_t = [&](double t) { return MatC(h0_dense + (t / 5.0) * slope); };
  VecC ref = rk4_evolve(h_of_t, inst.init_full.amplitudes, 0.0, 5.0, 5e-4);
  CHECK(overlap_deficit(tr.phi.back(), ref) < 1e-8 * 5.0);
  CHECK((tr.phi.back() - ref).norm() < 1e-4);
  for (const auto& v : tr.phi) REQUIRE(std::abs(v.norm() - 1.0) < 1e-9);
  // The penalty-free system factor follows its own schedule.
  MatC sa = MatC(inst.h_comp_sys[0]), sb = MatC(inst.h_comp_sys[1]);
  auto hs_of_t = [&](double t) { return MatC(sa + (t / 5.0) * (sb - sa)); };
  VecC sys_ref = rk4_evolve(hs_of_t, inst.init_system.amplitudes, 0.0, 5.0,
                            2e-4);
  CHECK(overlap_deficit(tr.phi0_sys.back(), sys_ref) < 1e-8 * 5.0);
  CHECK((tr.phi0_sys.back() - sys_ref).norm() < 1e-4);
}

TEST_CASE("grid evolution validates its time grid") {
  auto sh = make_stepped(random_hermitian(4, 43));
  StateVector s{RngStream(9, "s").haar_state(4)};
  CHECK_THROWS_AS(evolve_stepped_grid(sh, s, {2.0, 1.0}), config_error);
  CHECK_THROWS_AS(evolve_stepped(sh, s, 1.0, 0.5), config_error);
}
