#pragma once

// Independent dense oracles used by the test suites.  Everything here is
// deliberately naive (brute-force Kronecker products, double-loop partial
// traces, series-free matrix exponentials from Eigen) so that agreement
// with the library is meaningful.

#include <unsupported/Eigen/MatrixFunctions>

#include <array>
#include <map>

#include "penaltyguard/common.hpp"
#include "penaltyguard/pauli.hpp"

namespace oracle {

using penaltyguard::cplx;
using penaltyguard::MatC;
using penaltyguard::VecC;
using penaltyguard::iu;

inline MatC pauli2x2(penaltyguard::Pauli p) {
  MatC m(2, 2);
  switch (p) {
    case penaltyguard::Pauli::I: m << 1, 0, 0, 1; break;
    case penaltyguard::Pauli::X: m << 0, 1, 1, 0; break;
    case penaltyguard::Pauli::Y: m << 0, -iu, iu, 0; break;
    case penaltyguard::Pauli::Z: m << 1, 0, 0, -1; break;
  }
  return m;
}

inline MatC dense_kron(const MatC& a, const MatC& b) {
  MatC out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

// Brute-force dense matrix of a Pauli string: chain of 2x2 Kronecker
// factors, qubit 0 leftmost (most significant).
inline MatC dense_pauli_string(const penaltyguard::PauliString& p,
                               int n_qubits) {
  MatC out = MatC::Identity(1, 1);
  for (int q = 0; q < n_qubits; ++q) out = dense_kron(out, pauli2x2(p.at(q)));
  return p.coefficient * out;
}

inline MatC dense_pauli_sum(const penaltyguard::PauliSum& sum, int n_qubits) {
  const Eigen::Index dim = Eigen::Index(1) << n_qubits;
  MatC out = MatC::Zero(dim, dim);
  for (const auto& p : sum) out += dense_pauli_string(p, n_qubits);
  return out;
}

inline MatC expm(const MatC& a) { return a.exp(); }

// exp(-i h t) |v>, fully dense.
inline VecC dense_evolve(const MatC& h, const VecC& v, double t) {
  return expm(MatC(-iu * t * h)) * v;
}

// Partial trace over the trailing (least-significant) env factor:
// rho[s,s'] = sum_e psi[s*dim_env+e] conj(psi[s'*dim_env+e]).
inline MatC naive_partial_trace_env(const VecC& psi, Eigen::Index dim_sys,
                                    Eigen::Index dim_env) {
  MatC rho = MatC::Zero(dim_sys, dim_sys);
  for (Eigen::Index s = 0; s < dim_sys; ++s)
    for (Eigen::Index sp = 0; sp < dim_sys; ++sp)
      for (Eigen::Index e = 0; e < dim_env; ++e)
        rho(s, sp) += psi[s * dim_env + e] * std::conj(psi[sp * dim_env + e]);
  return rho;
}

inline double max_abs_diff(const MatC& a, const MatC& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

}  // namespace oracle
