#pragma once

// Sparse Hermitian operators over a qubit register, plus the small algebra
// the rest of the library is built on: Pauli-string embedding, products,
// commutators, spectral norms and matrix-vector application.

#include <algorithm>
#include <string>
#include <vector>

#include <unsupported/Eigen/KroneckerProduct>

#include "penaltyguard/common.hpp"
#include "penaltyguard/detail/lapack.hpp"
#include "penaltyguard/pauli.hpp"
#include "penaltyguard/rng.hpp"
#include "penaltyguard/state.hpp"

namespace penaltyguard {

class HermitianOperator {
 public:
  HermitianOperator() = default;

  // Wraps a sparse matrix.  When `hermitian` is set the matrix is verified
  // to equal its conjugate transpose within `tol` elementwise.
  static HermitianOperator from_sparse(SpMatC m, bool hermitian,
                                       double tol = 1e-12) {
    require(m.rows() == m.cols(), "operator: matrix must be square");
    HermitianOperator op;
    m.makeCompressed();
    op.mat_ = std::move(m);
    op.hermitian_ = hermitian;
    if (hermitian) {
      double r = op.hermiticity_residual();
      require_numeric(r <= tol, "operator: hermiticity residual " +
                                    std::to_string(r) + " exceeds tolerance");
    }
    return op;
  }

  static HermitianOperator identity(Eigen::Index dim) {
    SpMatC m(dim, dim);
    m.setIdentity();
    return from_sparse(std::move(m), true);
  }

  static HermitianOperator zero(Eigen::Index dim) {
    return from_sparse(SpMatC(dim, dim), true);
  }

  Eigen::Index dim() const { return mat_.rows(); }
  std::int64_t nnz() const { return mat_.nonZeros(); }
  bool is_hermitian() const { return hermitian_; }
  const SpMatC& matrix() const { return mat_; }

  MatC dense() const { return MatC(mat_); }

  // Largest elementwise deviation from the conjugate transpose.
  double hermiticity_residual() const {
    SpMatC d = mat_ - SpMatC(mat_.adjoint());
    double r = 0.0;
    for (int k = 0; k < d.outerSize(); ++k)
      for (SpMatC::InnerIterator it(d, k); it; ++it)
        r = std::max(r, std::abs(it.value()));
    return r;
  }

  // Content fingerprint (row pattern + values), used for provenance fields.
  std::uint64_t fingerprint() const {
    std::uint64_t h = fnv1a64("op", 0xcbf29ce484222325ull);
    std::int64_t dims[2] = {mat_.rows(), mat_.nonZeros()};
    h = fnv1a64_bytes(dims, sizeof dims, h);
    for (int k = 0; k < mat_.outerSize(); ++k)
      for (SpMatC::InnerIterator it(mat_, k); it; ++it) {
        std::int64_t pos[2] = {it.row(), it.col()};
        double val[2] = {it.value().real(), it.value().imag()};
        h = fnv1a64_bytes(pos, sizeof pos, h);
        h = fnv1a64_bytes(val, sizeof val, h);
      }
    return h;
  }

  HermitianOperator scaled(cplx c) const {
    bool herm = hermitian_ && std::abs(c.imag()) == 0.0;
    return from_sparse(SpMatC(c * mat_), herm);
  }

  HermitianOperator adjoint() const {
    return from_sparse(SpMatC(mat_.adjoint()), hermitian_);
  }

  friend HermitianOperator operator+(const HermitianOperator& a,
                                     const HermitianOperator& b) {
    require(a.dim() == b.dim(), "operator+: dimension mismatch");
    return from_sparse(SpMatC(a.mat_ + b.mat_),
                       a.hermitian_ && b.hermitian_);
  }
  friend HermitianOperator operator-(const HermitianOperator& a,
                                     const HermitianOperator& b) {
    require(a.dim() == b.dim(), "operator-: dimension mismatch");
    return from_sparse(SpMatC(a.mat_ - b.mat_),
                       a.hermitian_ && b.hermitian_);
  }
  // Matrix product (not Hermitian in general; flag cleared).
  friend HermitianOperator operator*(const HermitianOperator& a,
                                     const HermitianOperator& b) {
    require(a.dim() == b.dim(), "operator*: dimension mismatch");
    return from_sparse(SpMatC(a.mat_ * b.mat_), false);
  }

 private:
  SpMatC mat_;
  bool hermitian_ = false;
};

// Kronecker product with `a` on the most-significant side.
inline SpMatC kron(const SpMatC& a, const SpMatC& b) {
  SpMatC out(a.rows() * b.rows(), a.cols() * b.cols());
  out = Eigen::kroneckerProduct(a, b);
  return out;
}

inline HermitianOperator kron(const HermitianOperator& a,
                              const HermitianOperator& b) {
  return HermitianOperator::from_sparse(kron(a.matrix(), b.matrix()),
                                        a.is_hermitian() && b.is_hermitian());
}

// Dense-to-sparse conversion keeping entries with magnitude above drop_tol.
inline SpMatC to_sparse(const MatC& m, double drop_tol = 0.0) {
  std::vector<Eigen::Triplet<cplx, std::int64_t>> trips;
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      if (std::abs(m(i, j)) > drop_tol) trips.emplace_back(i, j, m(i, j));
  SpMatC out(m.rows(), m.cols());
  out.setFromTriplets(trips.begin(), trips.end());
  return out;
}

// Trace of a sparse matrix.
inline cplx sparse_trace(const SpMatC& m) {
  cplx t = 0.0;
  for (int k = 0; k < m.outerSize(); ++k)
    for (SpMatC::InnerIterator it(m, k); it; ++it)
      if (it.row() == it.col()) t += it.value();
  return t;
}

// Sparse matrix of a Pauli string over an n-qubit register: exactly one
// nonzero per column (the string maps each basis state to one basis state).
inline SpMatC pauli_string_matrix(const PauliString& p, int n_qubits) {
  require(p.max_qubit() < n_qubits,
          "pauli_to_operator: string references qubit " +
              std::to_string(p.max_qubit()) + " outside a " +
              std::to_string(n_qubits) + "-qubit register");
  const Eigen::Index dim = Eigen::Index(1) << n_qubits;
  // Bit mask of flipped qubits, and per-column phase.
  Eigen::Index flip_mask = 0;
  for (const auto& [q, fac] : p.factors)
    if (fac == Pauli::X || fac == Pauli::Y)
      flip_mask |= Eigen::Index(1) << (n_qubits - 1 - q);

  std::vector<Eigen::Triplet<cplx, std::int64_t>> trips;
  trips.reserve(static_cast<std::size_t>(dim));
  for (Eigen::Index c = 0; c < dim; ++c) {
    cplx phase = p.coefficient;
    for (const auto& [q, fac] : p.factors) {
      int b = QubitRegister::bit(c, q, n_qubits);
      switch (fac) {
        case Pauli::X: break;
        case Pauli::Y: phase *= (b == 0) ? iu : -iu; break;
        case Pauli::Z: phase *= (b == 0) ? 1.0 : -1.0; break;
        case Pauli::I: break;
      }
    }
    if (phase != 0.0) trips.emplace_back(c ^ flip_mask, c, phase);
  }
  SpMatC m(dim, dim);
  m.setFromTriplets(trips.begin(), trips.end());
  return m;
}

inline HermitianOperator pauli_to_operator(const PauliString& p,
                                           const QubitRegister& reg,
                                           bool hermitian = true) {
  if (hermitian)
    require(p.has_real_coefficient(),
            "pauli_to_operator: non-real coefficient on a string asserted "
            "Hermitian");
  return HermitianOperator::from_sparse(pauli_string_matrix(p, reg.n_total()),
                                        hermitian);
}

inline HermitianOperator pauli_sum_to_operator(const PauliSum& sum,
                                               const QubitRegister& reg,
                                               bool hermitian = true) {
  const Eigen::Index dim = reg.dim();
  SpMatC acc(dim, dim);
  for (const auto& p : sum) {
    if (hermitian)
      require(p.has_real_coefficient(),
              "pauli_sum_to_operator: non-real coefficient in a sum asserted "
              "Hermitian: " + p.to_string(reg.n_total()));
    acc += pauli_string_matrix(p, reg.n_total());
  }
  return HermitianOperator::from_sparse(std::move(acc), hermitian);
}

inline HermitianOperator commutator(const HermitianOperator& a,
                                    const HermitianOperator& b) {
  require(a.dim() == b.dim(), "commutator: dimension mismatch");
  SpMatC c = a.matrix() * b.matrix() - b.matrix() * a.matrix();
  // [A,B] is anti-Hermitian for Hermitian A, B; never flagged Hermitian.
  return HermitianOperator::from_sparse(std::move(c), false);
}

struct SpectralNormResult {
  double value = 0.0;
  std::string method;  // "power_iteration" or "dense_eigensolve"
  int iterations = 0;
};

// Largest singular value via power iteration on a^dagger a with a fixed
// seeded start; falls back to a dense eigensolve (dimension <= 4096) if the
// iteration stalls before reaching relative accuracy ~1e-8.
inline SpectralNormResult spectral_norm_detailed(const HermitianOperator& a) {
  const Eigen::Index n = a.dim();
  SpectralNormResult res;
  if (a.nnz() == 0) {
    res.method = "power_iteration";
    return res;
  }
  const SpMatC& m = a.matrix();
  SpMatC madj;
  if (!a.is_hermitian()) madj = m.adjoint();
  const SpMatC& mh = a.is_hermitian() ? m : madj;

  RngStream rng(0x5eedba5e, "spectral_norm_start");
  VecC v = rng.haar_state(n);
  double sigma = 0.0, prev = -1.0;
  const int max_iters = 10000;
  bool converged = false;
  for (int it = 1; it <= max_iters; ++it) {
    VecC w = mh * (m * v).eval();
    double wn = w.norm();
    if (wn < 1e-300) {
      // Start vector annihilated; retry once with a fresh vector.
      v = rng.haar_state(n);
      w = mh * (m * v).eval();
      wn = w.norm();
      if (wn < 1e-300) {
        res.method = "power_iteration";
        res.iterations = it;
        return res;  // operator acts as zero on two random vectors
      }
    }
    sigma = std::sqrt(std::real(v.dot(w)));
    v = w / wn;
    res.iterations = it;
    if (it >= 30 && std::abs(sigma - prev) <= 1e-10 * std::max(sigma, 1e-30)) {
      converged = true;
      break;
    }
    prev = sigma;
  }
  if (converged) {
    res.value = sigma;
    res.method = "power_iteration";
    return res;
  }
  require_numeric(n <= 4096,
                  "spectral_norm: power iteration failed to converge and the "
                  "dimension exceeds the dense fallback limit (4096)");
  MatC g = MatC(mh) * MatC(m);
  res.value = std::sqrt(std::max(0.0, detail::dense_largest_abs_eigenvalue(g)));
  res.method = "dense_eigensolve";
  return res;
}

inline double spectral_norm(const HermitianOperator& a) {
  return spectral_norm_detailed(a).value;
}

inline StateVector apply(const HermitianOperator& a, const StateVector& s) {
  require(a.dim() == s.dim(), "apply: dimension mismatch");
  return StateVector(VecC(a.matrix() * s.amplitudes));
}

inline VecC apply(const HermitianOperator& a, const VecC& v) {
  require(a.dim() == v.size(), "apply: dimension mismatch");
  return a.matrix() * v;
}

}  // namespace penaltyguard
