#pragma once

// Dense state vectors over a qubit register.

#include <cmath>
#include <string>

#include "penaltyguard/common.hpp"
#include "penaltyguard/pauli.hpp"

namespace penaltyguard {

struct StateVector {
  VecC amplitudes;

  StateVector() = default;
  explicit StateVector(VecC a) : amplitudes(std::move(a)) {}
  explicit StateVector(Eigen::Index dim) : amplitudes(VecC::Zero(dim)) {}

  static StateVector basis(Eigen::Index dim, Eigen::Index index) {
    StateVector s(dim);
    s.amplitudes[index] = 1.0;
    return s;
  }

  Eigen::Index dim() const { return amplitudes.size(); }
  double norm() const { return amplitudes.norm(); }

  StateVector& normalize() {
    double n = norm();
    require_numeric(n > 1e-300, "state: cannot normalize the zero vector");
    amplitudes /= n;
    return *this;
  }

  bool is_normalized(double tol = 1e-9) const {
    return std::abs(norm() - 1.0) <= tol;
  }
};

inline cplx inner(const StateVector& a, const StateVector& b) {
  require(a.dim() == b.dim(), "inner: dimension mismatch");
  return a.amplitudes.dot(b.amplitudes);  // conjugates the left argument
}

// |a> tensor |b>, with a on the most-significant side (matching the
// qubit-0-is-MSB convention).
inline StateVector tensor(const StateVector& a, const StateVector& b) {
  StateVector out(a.dim() * b.dim());
  for (Eigen::Index i = 0; i < a.dim(); ++i)
    out.amplitudes.segment(i * b.dim(), b.dim()) =
        a.amplitudes[i] * b.amplitudes;
  return out;
}

}  // namespace penaltyguard
