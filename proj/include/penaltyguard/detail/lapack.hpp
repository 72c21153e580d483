#pragma once

// Thin wrappers around the LAPACKE Hermitian eigensolver.  Eigen matrices
// are column-major by default, matching LAPACK_COL_MAJOR, so decompositions
// run in place on the Eigen storage.

#include <lapacke.h>

#include <string>

#include "penaltyguard/common.hpp"

namespace penaltyguard::detail {

// Full eigendecomposition of a Hermitian matrix.  On return `a` holds the
// eigenvectors (columns) and `w` the ascending eigenvalues.
inline void zheevd_in_place(MatC& a, VecR& w) {
  require(a.rows() == a.cols(), "zheevd: matrix must be square");
  const lapack_int n = static_cast<lapack_int>(a.rows());
  w.resize(n);
  lapack_int info = LAPACKE_zheevd(
      LAPACK_COL_MAJOR, 'V', 'U', n,
      reinterpret_cast<lapack_complex_double*>(a.data()), n, w.data());
  require_numeric(info == 0,
                  "zheevd: eigensolver failed, info = " + std::to_string(info));
}

// Eigenvalues only (ascending).  `a` is taken by value and destroyed.
inline VecR zheevd_values(MatC a) {
  require(a.rows() == a.cols(), "zheevd: matrix must be square");
  const lapack_int n = static_cast<lapack_int>(a.rows());
  VecR w(n);
  lapack_int info = LAPACKE_zheevd(
      LAPACK_COL_MAJOR, 'N', 'U', n,
      reinterpret_cast<lapack_complex_double*>(a.data()), n, w.data());
  require_numeric(info == 0,
                  "zheevd: eigensolver failed, info = " + std::to_string(info));
  return w;
}

inline double dense_largest_abs_eigenvalue(const MatC& h) {
  VecR w = zheevd_values(h);
  return std::max(std::abs(w[0]), std::abs(w[w.size() - 1]));
}

}  // namespace penaltyguard::detail
