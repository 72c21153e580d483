#pragma once

// Shared aliases, error types and small utilities used across the library.

#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string_view>
#include <string>

#include <Eigen/Core>
#include <Eigen/SparseCore>

namespace penaltyguard {

using cplx = std::complex<double>;
using VecC = Eigen::VectorXcd;
using VecR = Eigen::VectorXd;
using MatC = Eigen::MatrixXcd;
using MatR = Eigen::MatrixXd;
// Compressed-row sparse storage for all operators.
using SpMatC = Eigen::SparseMatrix<cplx, Eigen::RowMajor, std::int64_t>;

inline constexpr cplx iu{0.0, 1.0};

// Error hierarchy.  Each class maps to a process exit code so the CLI can
// translate failures uniformly:
//   config_error   -> 2 (bad input / validation)
//   numeric_error  -> 3 (a numerical contract was violated)
//   io_error       -> 4 (filesystem problems)
// Anything else escaping to main is a bug and also exits 4.
struct config_error : std::runtime_error {
  explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};
struct numeric_error : std::runtime_error {
  explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};
struct io_error : std::runtime_error {
  explicit io_error(const std::string& msg) : std::runtime_error(msg) {}
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw config_error(msg);
}
inline void require_numeric(bool cond, const std::string& msg) {
  if (!cond) throw numeric_error(msg);
}

// FNV-1a, used to derive per-purpose RNG streams and to fingerprint
// configurations and operators.
inline std::uint64_t fnv1a64_bytes(const void* data, std::size_t len,
                                   std::uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}
inline std::uint64_t fnv1a64(std::string_view s,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
  return fnv1a64_bytes(s.data(), s.size(), h);
}

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

}  // namespace penaltyguard
