#pragma once

// Qubit registers and Pauli strings.
//
// Basis-index convention (used everywhere): qubit 0 is the MOST significant
// bit of the computational-basis index.  A register lays out the
// system-physical qubits first (logical block i occupies qubits
// [i*ell, (i+1)*ell)), followed by the environment qubits.

#include <cmath>
#include <map>
#include <string>
#include <utility>

#include "penaltyguard/common.hpp"

namespace penaltyguard {

struct QubitRegister {
  int n_logical = 0;  // number of encoded logical qubits
  int ell = 1;        // physical qubits per logical block
  int n_env = 0;      // environment qubits

  static QubitRegister encoded(int n_logical, int ell, int n_env) {
    require(n_logical >= 0 && ell >= 1 && n_env >= 0,
            "register: counts must be nonnegative, ell >= 1");
    return QubitRegister{n_logical, ell, n_env};
  }
  // A flat register of n bare qubits (no encoding, no environment).
  static QubitRegister plain(int n) { return encoded(n, 1, 0); }

  int n_system_physical() const { return n_logical * ell; }
  int n_total() const { return n_system_physical() + n_env; }
  Eigen::Index dim() const { return Eigen::Index(1) << n_total(); }
  Eigen::Index dim_system() const {
    return Eigen::Index(1) << n_system_physical();
  }
  Eigen::Index dim_env() const { return Eigen::Index(1) << n_env; }

  // Global index of environment qubit `local` (0-based within the
  // environment block).
  int env_qubit(int local) const {
    require(local >= 0 && local < n_env, "register: environment label out of range");
    return n_system_physical() + local;
  }

  // Value of qubit q's bit within basis index c (qubit 0 = MSB).
  static int bit(Eigen::Index c, int q, int n_total) {
    return static_cast<int>((c >> (n_total - 1 - q)) & 1);
  }
  int bit(Eigen::Index c, int q) const { return bit(c, q, n_total()); }

  bool operator==(const QubitRegister&) const = default;
};

enum class Pauli : int { I = 0, X = 1, Y = 2, Z = 3 };

inline char pauli_char(Pauli p) { return "IXYZ"[static_cast<int>(p)]; }

inline Pauli pauli_from_char(char c) {
  switch (c) {
    case 'I': return Pauli::I;
    case 'X': return Pauli::X;
    case 'Y': return Pauli::Y;
    case 'Z': return Pauli::Z;
    default: throw config_error(std::string("unknown Pauli letter '") + c + "'");
  }
}

// Single-qubit product sigma_a * sigma_b = phase * sigma_c
// (sigma_a sigma_b = delta_ab I + i eps_abc sigma_c).
inline std::pair<cplx, Pauli> pauli_product(Pauli a, Pauli b) {
  if (a == Pauli::I) return {1.0, b};
  if (b == Pauli::I) return {1.0, a};
  if (a == b) return {1.0, Pauli::I};
  int ia = static_cast<int>(a), ib = static_cast<int>(b);
  Pauli c = static_cast<Pauli>(6 - ia - ib);
  // eps_abc = +1 for cyclic (X,Y,Z) order, -1 otherwise.
  bool cyclic = (ib - ia + 3) % 3 == 1;
  return {cyclic ? iu : -iu, c};
}

// A scalar multiple of a tensor product of single-qubit Paulis.  Factors
// absent from the map act as identity; explicit identities are normalized
// away so equal strings have equal representations.
struct PauliString {
  cplx coefficient{1.0, 0.0};
  std::map<int, Pauli> factors;

  static PauliString identity(cplx c = 1.0) { return PauliString{c, {}}; }

  static PauliString single(int qubit, Pauli p, cplx c = 1.0) {
    return PauliString{c, {}}.with(qubit, p);
  }

  PauliString with(int qubit, Pauli p) const& {
    PauliString out = *this;
    out.set(qubit, p);
    return out;
  }
  PauliString with(int qubit, Pauli p) && {
    set(qubit, p);
    return std::move(*this);
  }

  void set(int qubit, Pauli p) {
    require(qubit >= 0, "pauli string: negative qubit label");
    if (p == Pauli::I)
      factors.erase(qubit);
    else
      factors[qubit] = p;
  }

  Pauli at(int qubit) const {
    auto it = factors.find(qubit);
    return it == factors.end() ? Pauli::I : it->second;
  }

  // Number of non-identity factors.
  int weight() const { return static_cast<int>(factors.size()); }

  int max_qubit() const {
    return factors.empty() ? -1 : factors.rbegin()->first;
  }

  PauliString operator*(const PauliString& o) const {
    PauliString out;
    out.coefficient = coefficient * o.coefficient;
    out.factors = factors;
    for (const auto& [q, p] : o.factors) {
      auto [phase, r] = pauli_product(out.at(q), p);
      out.coefficient *= phase;
      out.set(q, r);
    }
    return out;
  }

  PauliString scaled(cplx c) const {
    PauliString out = *this;
    out.coefficient *= c;
    return out;
  }

  // Hermitian iff the coefficient is real (each factor is Hermitian).
  bool has_real_coefficient(double tol = 1e-14) const {
    return std::abs(coefficient.imag()) <= tol * (1.0 + std::abs(coefficient));
  }

  std::string to_string(int n_qubits = -1) const {
    if (n_qubits < 0) n_qubits = max_qubit() + 1;
    std::string s = "(" + std::to_string(coefficient.real()) + (coefficient.imag() < 0 ? "-" : "+") +
                    std::to_string(std::abs(coefficient.imag())) + "i)*";
    for (int q = 0; q < n_qubits; ++q) s += pauli_char(at(q));
    return s;
  }

  bool operator==(const PauliString&) const = default;
};

// A formal real-weighted sum of Pauli strings (a decomposed Hermitian
// operator, e.g. a computational Hamiltonian on the logical register).
using PauliSum = std::vector<PauliString>;

inline int max_qubit(const PauliSum& sum) {
  int m = -1;
  for (const auto& p : sum) m = std::max(m, p.max_qubit());
  return m;
}

}  // namespace penaltyguard
