#pragma once

// Error-detecting codes and their projector algebra: the [[4,1]] code, the
// per-block codespace projectors P_i / Q_i, the total projector P, the
// penalty operator Q-tilde, the graded projector family R_r, logical
// encoding of Hamiltonians, and the phase-decomposition identity
//   exp(i E_P Qt tau) V P = sum_r exp(i r E_P tau) R_r V P.

#include <unsupported/Eigen/MatrixFunctions>

#include <bit>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "penaltyguard/operator.hpp"

namespace penaltyguard {

struct CodeSpec {
  std::string name;
  int ell = 0;            // physical qubits per logical qubit
  int detect_weight = 0;  // maximum error weight the code detects
  StateVector logical_zero, logical_one;              // dimension 2^ell
  HermitianOperator logical_x, logical_y, logical_z;  // dimension 2^ell

  // Derived data, filled by finalize_code():
  HermitianOperator block_projector;  // |0_L><0_L| + |1_L><1_L|
  MatC block_code_basis;              // 2^ell x 2, columns |0_L>, |1_L>
  MatC block_error_basis;             // 2^ell x (2^ell - 2), orthonormal complement

  Eigen::Index block_dim() const { return Eigen::Index(1) << ell; }

  const HermitianOperator& logical(Pauli p) const {
    switch (p) {
      case Pauli::X: return logical_x;
      case Pauli::Y: return logical_y;
      case Pauli::Z: return logical_z;
      case Pauli::I: break;
    }
    throw config_error("code: logical(I) has no stored operator");
  }
};

// Computes the block projector and the orthonormal code/error bases, then
// verifies the basic code invariants.  Called by every code builder.
inline void finalize_code(CodeSpec& c) {
  const Eigen::Index d = c.block_dim();
  require(c.logical_zero.dim() == d && c.logical_one.dim() == d,
          "code: logical state dimension mismatch");
  require_numeric(std::abs(c.logical_zero.norm() - 1.0) < 1e-12 &&
                      std::abs(c.logical_one.norm() - 1.0) < 1e-12,
                  "code: logical states must be unit norm");
  require_numeric(std::abs(inner(c.logical_zero, c.logical_one)) < 1e-12,
                  "code: logical states must be orthogonal");

  c.block_code_basis.resize(d, 2);
  c.block_code_basis.col(0) = c.logical_zero.amplitudes;
  c.block_code_basis.col(1) = c.logical_one.amplitudes;

  MatC p = c.block_code_basis * c.block_code_basis.adjoint();
  c.block_projector = HermitianOperator::from_sparse(to_sparse(p, 1e-15), true);

  // Orthonormal complement: eigenvectors of the projector with eigenvalue 0
  // (ascending order puts them first).
  MatC evecs = p;
  VecR evals;
  detail::zheevd_in_place(evecs, evals);
  c.block_error_basis = evecs.leftCols(d - 2);
  require_numeric((d == 2 || evals[d - 3] < 1e-10) &&
                      evals[d - 2] > 1.0 - 1e-10 && evals[d - 1] > 1.0 - 1e-10,
                  "code: block projector is not a rank-2 projector");
  require_numeric(
      c.block_error_basis.cols() == 0 ||
          (c.block_error_basis.adjoint() * c.block_code_basis)
                  .cwiseAbs()
                  .maxCoeff() < 1e-12,
      "code: error basis is not orthogonal to the code basis");

  // Logical operators must commute with the block projector.
  for (Pauli s : {Pauli::X, Pauli::Y, Pauli::Z}) {
    const auto& L = c.logical(s);
    require(L.dim() == d, "code: logical operator dimension mismatch");
    double r = spectral_norm(L * c.block_projector - c.block_projector * L);
    require_numeric(r < 1e-12, "code: logical operator does not commute with "
                               "the codespace projector");
  }
}

// The Jordan-Farhi-Shor [[4,1]] code: detects every weight-1 Pauli error,
// with two-local logical operators.
inline CodeSpec build_jfs_code() {
  CodeSpec c;
  c.name = "jfs4";
  c.ell = 4;
  c.detect_weight = 1;

  VecC z0 = VecC::Zero(16), z1 = VecC::Zero(16);
  z0[0b0000] = 0.5;
  z0[0b0011] = 0.5 * iu;
  z0[0b1100] = 0.5 * iu;
  z0[0b1111] = 0.5;
  z1[0b1010] = -0.5;
  z1[0b1001] = 0.5 * iu;
  z1[0b0110] = 0.5 * iu;
  z1[0b0101] = -0.5;
  c.logical_zero = StateVector(z0);
  c.logical_one = StateVector(z1);

  QubitRegister block = QubitRegister::plain(4);
  c.logical_x = pauli_to_operator(
      PauliString::identity().with(0, Pauli::Y).with(2, Pauli::Y), block);
  c.logical_y = pauli_to_operator(
      PauliString::identity(-1.0).with(1, Pauli::X).with(2, Pauli::X), block);
  c.logical_z = pauli_to_operator(
      PauliString::identity().with(0, Pauli::Z).with(1, Pauli::Z), block);

  finalize_code(c);
  return c;
}

inline CodeSpec build_code(const std::string& name) {
  if (name == "jfs4") return build_jfs_code();
  throw config_error("unknown code '" + name + "' (available: jfs4)");
}

// The 2x2 matrix of each logical operator restricted to the codespace, in
// the {|0_L>, |1_L>} basis.  For a faithful encoding these equal the bare
// Pauli matrices exactly.
inline MatC logical_action_table(const CodeSpec& c, Pauli p) {
  return c.block_code_basis.adjoint() * c.logical(p).dense() *
         c.block_code_basis;
}

// ---------------------------------------------------------------------------
// Detection verification

struct DetectionEntry {
  PauliString string;
  double residual;
};

struct DetectionReport {
  bool passed = false;
  double tolerance = 0.0;
  double max_residual = 0.0;
  std::string worst_string;
  std::vector<DetectionEntry> entries;
};

// All Pauli strings of weight 1..max_weight on n qubits.
inline std::vector<PauliString> enumerate_error_strings(int n, int max_weight) {
  std::vector<PauliString> out;
  std::vector<PauliString> frontier{PauliString::identity()};
  for (int w = 1; w <= max_weight; ++w) {
    std::vector<PauliString> next;
    for (const auto& base : frontier) {
      int start = base.max_qubit() + 1;
      for (int q = start; q < n; ++q)
        for (Pauli p : {Pauli::X, Pauli::Y, Pauli::Z}) {
          PauliString s = base.with(q, p);
          out.push_back(s);
          next.push_back(s);
        }
    }
    frontier = std::move(next);
  }
  return out;
}

// Checks ||P sigma P|| <= tol for every Pauli error of weight up to the
// code's detect_weight.  Norms are exact (dense SVD on the 2^ell block).
inline DetectionReport verify_detection(const CodeSpec& c,
                                        double tol = 1e-12) {
  DetectionReport rep;
  rep.tolerance = tol;
  MatC p = c.block_projector.dense();
  for (const auto& s : enumerate_error_strings(c.ell, c.detect_weight)) {
    MatC m = p * MatC(pauli_string_matrix(s, c.ell)) * p;
    double r = m.jacobiSvd().singularValues()(0);
    rep.entries.push_back({s, r});
    if (r >= rep.max_residual) {
      rep.max_residual = r;
      rep.worst_string = s.to_string(c.ell);
    }
  }
  rep.passed = rep.max_residual <= tol;
  return rep;
}

// ---------------------------------------------------------------------------
// Logical encoding

// Encodes a Pauli-decomposed Hamiltonian on n logical qubits by replacing
// each Pauli factor with the code's logical operator on that block.
inline HermitianOperator encode_hamiltonian(const PauliSum& h,
                                            const CodeSpec& code,
                                            int n_logical) {
  require(n_logical >= 1, "encode: need at least one logical qubit");
  require(max_qubit(h) < n_logical,
          "encode: Pauli string references logical qubit " +
              std::to_string(max_qubit(h)) + " but the register has " +
              std::to_string(n_logical));
  const Eigen::Index dim = Eigen::Index(1) << (code.ell * n_logical);
  SpMatC acc(dim, dim);
  SpMatC block_id(code.block_dim(), code.block_dim());
  block_id.setIdentity();
  for (const auto& term : h) {
    require(term.has_real_coefficient(),
            "encode: non-real coefficient in Hamiltonian term");
    SpMatC chain(1, 1);
    chain.insert(0, 0) = term.coefficient;
    for (int i = 0; i < n_logical; ++i) {
      Pauli p = term.at(i);
      chain = kron(chain, p == Pauli::I ? block_id : code.logical(p).matrix());
    }
    acc += chain;
  }
  return HermitianOperator::from_sparse(std::move(acc), true);
}

// Logical basis state |b_0 b_1 ... b_{n-1}>_L (block 0 most significant).
inline StateVector logical_basis_state(const CodeSpec& code, int n_logical,
                                       Eigen::Index index) {
  require(index >= 0 && index < (Eigen::Index(1) << n_logical),
          "logical_basis_state: index out of range");
  StateVector out = StateVector::basis(1, 0);
  for (int i = 0; i < n_logical; ++i) {
    int b = static_cast<int>((index >> (n_logical - 1 - i)) & 1);
    out = tensor(out, b == 0 ? code.logical_zero : code.logical_one);
  }
  return out;
}

// sum_k coeffs[k] |k>_L, normalized.
inline StateVector encode_logical_state(const CodeSpec& code, int n_logical,
                                        const VecC& coeffs) {
  require(coeffs.size() == (Eigen::Index(1) << n_logical),
          "encode_logical_state: wrong number of coefficients");
  StateVector out(Eigen::Index(1) << (code.ell * n_logical));
  for (Eigen::Index k = 0; k < coeffs.size(); ++k)
    out.amplitudes += coeffs[k] * logical_basis_state(code, n_logical, k).amplitudes;
  return out.normalize();
}

// ---------------------------------------------------------------------------
// Projector family

struct ProjectorFamily {
  QubitRegister reg;
  CodeSpec code;
  int n_logical = 0;

  // Full-register embeddings (identity on the environment block).
  std::vector<HermitianOperator> per_logical_p, per_logical_q;  // P_i, Q_i
  HermitianOperator total_P;    // product of all P_i
  HermitianOperator penalty_Q;  // sum of all Q_i
  std::vector<HermitianOperator> r_family;  // R_0 .. R_n

  // System-local copies (dimension 2^{ell n}) for factorized fast paths.
  std::vector<HermitianOperator> per_logical_p_sys, per_logical_q_sys;
  HermitianOperator total_P_sys, penalty_Q_sys;
  std::vector<HermitianOperator> r_family_sys;

  // Orthonormal columns spanning range(R_r) in the system space, built as
  // tensor products of per-block code/error bases.  Column count grows
  // combinatorially in n_logical; intended for the simulated n <= 2.
  MatC sector_basis(int r) const {
    require(r >= 0 && r <= n_logical, "sector_basis: r out of range");
    const Eigen::Index dim_sys = Eigen::Index(1) << (code.ell * n_logical);
    std::vector<MatC> pieces;
    Eigen::Index cols = 0;
    for (unsigned mask = 0; mask < (1u << n_logical); ++mask) {
      if (std::popcount(mask) != r) continue;
      MatC chain = MatC::Identity(1, 1);
      for (int i = 0; i < n_logical; ++i) {
        bool errored = (mask >> i) & 1;  // bit i of the mask = block i
        const MatC& basis =
            errored ? code.block_error_basis : code.block_code_basis;
        chain = Eigen::kroneckerProduct(chain, basis).eval();
      }
      cols += chain.cols();
      pieces.push_back(std::move(chain));
    }
    MatC out(dim_sys, cols);
    Eigen::Index at = 0;
    for (const auto& m : pieces) {
      out.middleCols(at, m.cols()) = m;
      at += m.cols();
    }
    return out;
  }

  MatC codespace_basis_sys() const { return sector_basis(0); }
};

inline ProjectorFamily build_projector_family(const CodeSpec& code,
                                              int n_logical,
                                              const QubitRegister& reg) {
  require(reg.n_logical == n_logical && reg.ell == code.ell,
          "projector family: register layout does not match the code");
  ProjectorFamily fam;
  fam.reg = reg;
  fam.code = code;
  fam.n_logical = n_logical;

  const Eigen::Index dim_sys = reg.dim_system();
  SpMatC block_id(code.block_dim(), code.block_dim());
  block_id.setIdentity();
  SpMatC env_id(reg.dim_env(), reg.dim_env());
  env_id.setIdentity();
  SpMatC sys_id(dim_sys, dim_sys);
  sys_id.setIdentity();

  auto embed = [&](const SpMatC& sys) {
    return HermitianOperator::from_sparse(kron(sys, env_id), true);
  };

  // Per-block projectors.
  SpMatC penalty_sys(dim_sys, dim_sys);
  for (int i = 0; i < n_logical; ++i) {
    SpMatC chain(1, 1);
    chain.insert(0, 0) = 1.0;
    for (int j = 0; j < n_logical; ++j)
      chain = kron(chain, j == i ? code.block_projector.matrix() : block_id);
    SpMatC q = sys_id - chain;
    penalty_sys += q;
    fam.per_logical_p_sys.push_back(HermitianOperator::from_sparse(chain, true));
    fam.per_logical_q_sys.push_back(HermitianOperator::from_sparse(q, true));
    fam.per_logical_p.push_back(embed(chain));
    fam.per_logical_q.push_back(embed(q));
  }
  fam.penalty_Q_sys = HermitianOperator::from_sparse(penalty_sys, true);
  fam.penalty_Q = embed(penalty_sys);

  // Total projector: product of commuting P_i = tensor power of the block
  // projector.
  SpMatC total(1, 1);
  total.insert(0, 0) = 1.0;
  for (int i = 0; i < n_logical; ++i)
    total = kron(total, code.block_projector.matrix());
  fam.total_P_sys = HermitianOperator::from_sparse(total, true);
  fam.total_P = embed(total);

  // R_r: sum over all block subsets with exactly r blocks projected by Q.
  // Cost grows as 2^n_logical * dim_sys nonzeros; fine for the n <= 2 this
  // library simulates, documented as combinatorial beyond that.
  SpMatC q_block = SpMatC(block_id - code.block_projector.matrix());
  for (int r = 0; r <= n_logical; ++r) {
    SpMatC acc(dim_sys, dim_sys);
    for (unsigned mask = 0; mask < (1u << n_logical); ++mask) {
      if (std::popcount(mask) != r) continue;
      SpMatC chain(1, 1);
      chain.insert(0, 0) = 1.0;
      for (int i = 0; i < n_logical; ++i)
        chain = kron(chain, ((mask >> i) & 1) ? q_block
                                              : code.block_projector.matrix());
      acc += chain;
    }
    fam.r_family_sys.push_back(HermitianOperator::from_sparse(acc, true));
    fam.r_family.push_back(embed(acc));
  }
  return fam;
}

// ---------------------------------------------------------------------------
// Phase decomposition identity

struct PhaseCheckResult {
  double pvp_residual = 0.0;           // precondition ||P V P||
  double multi_phase_residual = 0.0;   // vs sum_r e^{i r E_P tau} R_r V P
  double single_phase_residual = -1.0; // vs e^{i E_P tau} V P (if checked)
  bool single_phase_checked = false;

  double max_residual() const {
    return std::max(multi_phase_residual,
                    single_phase_checked ? single_phase_residual : 0.0);
  }
};

// Verifies exp(i E_P Qt tau) V P = sum_{r>=1} e^{i r E_P tau} R_r V P, and
// optionally the single-phase form e^{i E_P tau} V P, which holds when V is
// 1-local on the system.  The exponential is computed independently by
// dense scaling-and-squaring on the system block.
inline PhaseCheckResult phase_decomposition_check(const HermitianOperator& V,
                                                  const ProjectorFamily& fam,
                                                  double e_penalty, double tau,
                                                  bool check_single_phase) {
  require(V.dim() == fam.reg.dim(), "phase check: dimension mismatch");
  PhaseCheckResult res;

  const SpMatC& P = fam.total_P.matrix();
  SpMatC VP = V.matrix() * P;
  res.pvp_residual =
      spectral_norm(HermitianOperator::from_sparse(SpMatC(P * VP), false));
  require_numeric(res.pvp_residual < 1e-9,
                  "phase check: precondition P V P = 0 violated, residual " +
                      std::to_string(res.pvp_residual));

  // exp(i E_P Qt tau) on the system block, embedded over the environment.
  MatC arg = iu * e_penalty * tau * fam.penalty_Q_sys.dense();
  MatC eqt = arg.exp();
  SpMatC env_id(fam.reg.dim_env(), fam.reg.dim_env());
  env_id.setIdentity();
  SpMatC eqt_full = kron(to_sparse(eqt, 1e-16), env_id);

  SpMatC lhs = eqt_full * VP;
  SpMatC rhs_multi(V.dim(), V.dim());
  for (int r = 1; r <= fam.n_logical; ++r)
    rhs_multi += std::exp(iu * (double(r) * e_penalty * tau)) *
                 SpMatC(fam.r_family[r].matrix() * VP);
  res.multi_phase_residual = spectral_norm(
      HermitianOperator::from_sparse(SpMatC(lhs - rhs_multi), false));

  if (check_single_phase) {
    SpMatC rhs_single = std::exp(iu * (e_penalty * tau)) * VP;
    res.single_phase_residual = spectral_norm(
        HermitianOperator::from_sparse(SpMatC(lhs - rhs_single), false));
    res.single_phase_checked = true;
  }
  return res;
}

}  // namespace penaltyguard
