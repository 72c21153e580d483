#pragma once

// Materialization of a full seeded experiment instance:
//   H(t) = H_comp^L(t) + H_env + lambda V + E_P Qt
// with the computational Hamiltonian encoded through the error-detecting
// code, the environment a random two-body Hamiltonian on a 3-regular graph,
// and V a 1-local (on the system) system-environment coupling.
//
// All randomness flows through named streams derived from the master seed
// ("graph", "env", "coupling_map", "coupling", "init_sys", "init_env"), so
// identical configurations rebuild bit-identical instances and changing one
// sub-build's parameters does not disturb the draws of another.

#include <algorithm>
#include <array>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "penaltyguard/code.hpp"
#include "penaltyguard/operator.hpp"
#include "penaltyguard/rng.hpp"

namespace penaltyguard {

// ---------------------------------------------------------------------------
// Schedules

struct Schedule {
  enum class Kind { constant, linear_interpolation };
  Kind kind = Kind::constant;
  std::vector<PauliSum> endpoints;  // 1 (constant) or 2 (linear)
  double total_time = 0.0;          // ignored for constant schedules

  static Schedule constant(PauliSum h) {
    Schedule s;
    s.kind = Kind::constant;
    s.endpoints = {std::move(h)};
    return s;
  }
  static Schedule linear(PauliSum a, PauliSum b, double total_time) {
    require(total_time > 0.0, "schedule: linear interpolation needs T > 0");
    Schedule s;
    s.kind = Kind::linear_interpolation;
    s.endpoints = {std::move(a), std::move(b)};
    s.total_time = total_time;
    return s;
  }

  bool time_dependent() const { return kind == Kind::linear_interpolation; }

  void validate() const {
    if (kind == Kind::constant)
      require(endpoints.size() == 1, "schedule: constant kind needs exactly "
                                     "one endpoint");
    else {
      require(endpoints.size() == 2, "schedule: linear kind needs exactly two "
                                     "endpoints");
      require(total_time > 0.0, "schedule: linear kind needs total_time > 0");
    }
  }
};

// ---------------------------------------------------------------------------
// Environment

struct EnvGraph {
  int n = 0;
  std::vector<std::pair<int, int>> edges;  // each (b, c) with b < c, sorted
  bool connected = false;
};

// Simple 3-regular graph via the pairing model: three stubs per vertex,
// random perfect matching, rejected and retried on self-loops or repeated
// edges.
inline EnvGraph random_3regular_graph(int n, RngStream& rng,
                                      int retry_budget = 10000) {
  require(n >= 4 && n % 2 == 0,
          "environment: 3-regularity needs even n >= 4, got " +
              std::to_string(n));
  for (int attempt = 0; attempt < retry_budget; ++attempt) {
    std::vector<int> stubs(static_cast<std::size_t>(3 * n));
    for (int i = 0; i < 3 * n; ++i) stubs[static_cast<std::size_t>(i)] = i / 3;
    // Fisher-Yates shuffle.
    for (int i = 3 * n - 1; i > 0; --i)
      std::swap(stubs[static_cast<std::size_t>(i)],
                stubs[rng.below(static_cast<std::uint64_t>(i + 1))]);
    std::vector<std::pair<int, int>> edges;
    bool ok = true;
    for (int k = 0; k < 3 * n && ok; k += 2) {
      int b = stubs[static_cast<std::size_t>(k)];
      int c = stubs[static_cast<std::size_t>(k + 1)];
      if (b == c) ok = false;  // self-loop
      else edges.emplace_back(std::min(b, c), std::max(b, c));
    }
    if (!ok) continue;
    std::sort(edges.begin(), edges.end());
    if (std::adjacent_find(edges.begin(), edges.end()) != edges.end())
      continue;  // multi-edge
    EnvGraph g;
    g.n = n;
    g.edges = std::move(edges);
    // Connectivity (recorded, not enforced).
    std::vector<int> seen(static_cast<std::size_t>(n), 0);
    std::vector<int> stack{0};
    seen[0] = 1;
    while (!stack.empty()) {
      int v = stack.back();
      stack.pop_back();
      for (auto [b, c] : g.edges) {
        int w = (b == v) ? c : (c == v) ? b : -1;
        if (w >= 0 && !seen[static_cast<std::size_t>(w)]) {
          seen[static_cast<std::size_t>(w)] = 1;
          stack.push_back(w);
        }
      }
    }
    g.connected =
        std::all_of(seen.begin(), seen.end(), [](int s) { return s == 1; });
    return g;
  }
  throw numeric_error("environment: graph generation exhausted its retry "
                      "budget (n = " + std::to_string(n) + ")");
}

// The logged random draws of an environment build; assembly is a pure
// function of (graph, draw), which is what makes hand-built oracles
// possible in the tests.
struct EnvironmentDraw {
  std::vector<double> vertex_coeff;                 // alpha_a in [0.9, 1.1]
  std::vector<std::array<double, 3>> vertex_dir;    // unit n_a
  std::vector<double> edge_coeff;                   // alpha_bc in [0.9, 1.1]
  std::vector<std::array<double, 3>> edge_dir_b;    // unit m_b
  std::vector<std::array<double, 3>> edge_dir_c;    // unit l_c
};

// Draw order: per vertex (coefficient, direction) in vertex order, then per
// sorted edge (coefficient, direction_b, direction_c).
inline EnvironmentDraw draw_environment(const EnvGraph& g, RngStream& rng) {
  EnvironmentDraw d;
  for (int a = 0; a < g.n; ++a) {
    d.vertex_coeff.push_back(rng.uniform(0.9, 1.1));
    d.vertex_dir.push_back(rng.unit_vector3());
  }
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    d.edge_coeff.push_back(rng.uniform(0.9, 1.1));
    d.edge_dir_b.push_back(rng.unit_vector3());
    d.edge_dir_c.push_back(rng.unit_vector3());
  }
  return d;
}

// n-hat . sigma-vec on one qubit as a 3-term Pauli sum.
inline PauliSum directed_pauli(int qubit, const std::array<double, 3>& dir,
                               double coeff = 1.0) {
  return {PauliString::single(qubit, Pauli::X, coeff * dir[0]),
          PauliString::single(qubit, Pauli::Y, coeff * dir[1]),
          PauliString::single(qubit, Pauli::Z, coeff * dir[2])};
}

// Product of two directed Paulis on distinct qubits, expanded to 9 strings.
inline PauliSum directed_pauli_pair(int qb, const std::array<double, 3>& db,
                                    int qc, const std::array<double, 3>& dc,
                                    double coeff = 1.0) {
  PauliSum out;
  const Pauli letters[3] = {Pauli::X, Pauli::Y, Pauli::Z};
  for (int mu = 0; mu < 3; ++mu)
    for (int nu = 0; nu < 3; ++nu)
      out.push_back(PauliString::identity(coeff * db[static_cast<std::size_t>(mu)] *
                                          dc[static_cast<std::size_t>(nu)])
                        .with(qb, letters[mu])
                        .with(qc, letters[nu]));
  return out;
}

inline PauliSum environment_strings(const EnvGraph& g,
                                    const EnvironmentDraw& d) {
  PauliSum out;
  for (int a = 0; a < g.n; ++a) {
    PauliSum v = directed_pauli(a, d.vertex_dir[static_cast<std::size_t>(a)],
                                d.vertex_coeff[static_cast<std::size_t>(a)]);
    out.insert(out.end(), v.begin(), v.end());
  }
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    auto [b, c] = g.edges[e];
    PauliSum p = directed_pauli_pair(b, d.edge_dir_b[e], c, d.edge_dir_c[e],
                                     d.edge_coeff[e]);
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

inline HermitianOperator assemble_environment(const EnvGraph& g,
                                              const EnvironmentDraw& d) {
  return pauli_sum_to_operator(environment_strings(g, d),
                               QubitRegister::plain(g.n));
}

struct EnvironmentResult {
  EnvGraph graph;
  EnvironmentDraw draw;
  HermitianOperator h_env;  // local, dimension 2^n_env
};

inline EnvironmentResult build_environment(int n_env, std::uint64_t seed) {
  RngStream graph_rng(seed, "graph"), env_rng(seed, "env");
  EnvironmentResult r;
  r.graph = random_3regular_graph(n_env, graph_rng);
  r.draw = draw_environment(r.graph, env_rng);
  r.h_env = assemble_environment(r.graph, r.draw);
  return r;
}

// ---------------------------------------------------------------------------
// System-environment coupling

// Injective map: system-physical qubit w -> environment qubit (local index),
// drawn as the head of a shuffled environment permutation.
inline std::vector<int> draw_coupling_map(int n_sys, int n_env,
                                          RngStream& rng) {
  require(n_env >= n_sys, "coupling: need one distinct environment qubit per "
                          "system qubit");
  std::vector<int> perm(static_cast<std::size_t>(n_env));
  for (int i = 0; i < n_env; ++i) perm[static_cast<std::size_t>(i)] = i;
  for (int i = n_env - 1; i > 0; --i)
    std::swap(perm[static_cast<std::size_t>(i)],
              perm[rng.below(static_cast<std::uint64_t>(i + 1))]);
  perm.resize(static_cast<std::size_t>(n_sys));
  return perm;
}

struct CouplingDraw {
  std::vector<double> beta, gamma;                      // in [0.9, 1.1]
  std::vector<std::array<double, 3>> dir_pure;          // n_w (pure system term)
  std::vector<std::array<double, 3>> dir_sys, dir_env;  // m_w, l_w (paired term)
};

// Draw order per system qubit: beta, n_w, gamma, m_w, l_w.
inline CouplingDraw draw_coupling(int n_sys, RngStream& rng) {
  CouplingDraw d;
  for (int w = 0; w < n_sys; ++w) {
    d.beta.push_back(rng.uniform(0.9, 1.1));
    d.dir_pure.push_back(rng.unit_vector3());
    d.gamma.push_back(rng.uniform(0.9, 1.1));
    d.dir_sys.push_back(rng.unit_vector3());
    d.dir_env.push_back(rng.unit_vector3());
  }
  return d;
}

// One Kronecker-factorized term of V: sys_op acts on the system block
// (dimension 2^{ell n}), env_op on the environment block.
struct VTerm {
  int sys_qubit = 0;
  SpMatC sys_op;
  SpMatC env_op;
  SpMatC env_op_t;  // transpose, precomputed for right-multiplication
  bool has_env = false;  // false: env_op is the identity
};

struct CouplingResult {
  std::vector<int> map;       // system qubit -> local environment qubit
  CouplingDraw draw;
  std::vector<VTerm> terms;   // 2 per system qubit (1 if no environment)
  PauliSum strings;           // full-register Pauli decomposition
  HermitianOperator v_full;   // full-register operator
};

// Assembly from logged draws; pure in (reg, map, draw).  When the register
// has no environment the paired gamma terms are omitted entirely.
inline CouplingResult assemble_coupling(const QubitRegister& reg,
                                        const std::vector<int>& map,
                                        const CouplingDraw& draw) {
  const int n_sys = reg.n_system_physical();
  const bool with_env = reg.n_env > 0;
  if (with_env) {
    require(static_cast<int>(map.size()) == n_sys,
            "coupling: map must cover every system-physical qubit");
    std::vector<int> sorted = map;
    std::sort(sorted.begin(), sorted.end());
    require(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end(),
            "coupling: map must be injective");
    require(sorted.front() >= 0 && sorted.back() < reg.n_env,
            "coupling: map targets outside the environment");
  }
  QubitRegister sys_reg = QubitRegister::plain(n_sys);
  QubitRegister env_reg = QubitRegister::plain(std::max(reg.n_env, 0));
  SpMatC env_id(reg.dim_env(), reg.dim_env());
  env_id.setIdentity();

  CouplingResult res;
  res.map = map;
  res.draw = draw;
  for (int w = 0; w < n_sys; ++w) {
    const auto uw = static_cast<std::size_t>(w);
    // Pure system error: beta_w (n_w . sigma^w).
    VTerm pure;
    pure.sys_qubit = w;
    pure.sys_op = pauli_sum_to_operator(
                      directed_pauli(w, draw.dir_pure[uw], draw.beta[uw]),
                      sys_reg)
                      .matrix();
    pure.env_op = env_id;
    pure.env_op_t = env_id;
    pure.has_env = false;
    res.terms.push_back(pure);
    PauliSum ps = directed_pauli(w, draw.dir_pure[uw], draw.beta[uw]);
    res.strings.insert(res.strings.end(), ps.begin(), ps.end());

    if (!with_env) continue;
    // Paired term: gamma_w (m_w . sigma^w) tensor (l_w . sigma^{env(w)}).
    VTerm paired;
    paired.sys_qubit = w;
    paired.sys_op = pauli_sum_to_operator(
                        directed_pauli(w, draw.dir_sys[uw], draw.gamma[uw]),
                        sys_reg)
                        .matrix();
    paired.env_op = pauli_sum_to_operator(
                        directed_pauli(map[uw], draw.dir_env[uw]), env_reg)
                        .matrix();
    paired.env_op_t = paired.env_op.transpose();
    paired.has_env = true;
    res.terms.push_back(paired);
    PauliSum pp = directed_pauli_pair(w, draw.dir_sys[uw],
                                      reg.env_qubit(map[uw]), draw.dir_env[uw],
                                      draw.gamma[uw]);
    res.strings.insert(res.strings.end(), pp.begin(), pp.end());
  }

  SpMatC acc(reg.dim(), reg.dim());
  for (const auto& t : res.terms) acc += kron(t.sys_op, t.env_op);
  res.v_full = HermitianOperator::from_sparse(std::move(acc), true);
  return res;
}

inline CouplingResult build_coupling(const QubitRegister& reg,
                                     const std::vector<int>& map,
                                     std::uint64_t seed) {
  RngStream rng(seed, "coupling");
  return assemble_coupling(reg, map, draw_coupling(reg.n_system_physical(), rng));
}

// ---------------------------------------------------------------------------
// Configuration and instance

// y += alpha * (sum of the given coupling terms) x, using the Kronecker
// factorization (no full-size sparse product is ever formed).
inline void add_apply_coupling_terms(const std::vector<VTerm>& terms,
                                     const QubitRegister& reg, VecC& y,
                                     cplx alpha, const VecC& x) {
  const Eigen::Index ds = reg.dim_system(), de = reg.dim_env();
  using RowMat =
      Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const RowMat> xm(x.data(), ds, de);
  Eigen::Map<RowMat> ym(y.data(), ds, de);
  for (const auto& t : terms) {
    if (t.has_env)
      ym.noalias() += alpha * (t.sys_op * (xm * t.env_op_t));
    else
      ym.noalias() += alpha * (t.sys_op * xm);
  }
}

struct InitialSystemState {
  enum class Kind { logical_coeffs, plus_L, zero_L, random_codespace };
  Kind kind = Kind::zero_L;
  VecC coeffs;  // used by logical_coeffs only
};

struct ModelConfig {
  int n_logical = 1;
  std::string code = "jfs4";
  int n_env = 8;
  std::uint64_t seed = 0;
  double lambda = 0.0;
  double e_penalty = 0.0;
  Schedule h_comp;
  InitialSystemState initial_system_state;
  std::string initial_env_state = "random";
};

inline std::uint64_t config_fingerprint(const ModelConfig& c) {
  std::uint64_t h = fnv1a64("model-config-v1");
  auto mix_int = [&](std::int64_t v) { h = fnv1a64_bytes(&v, sizeof v, h); };
  auto mix_real = [&](double v) { h = fnv1a64_bytes(&v, sizeof v, h); };
  mix_int(c.n_logical);
  h = fnv1a64(c.code, h);
  mix_int(c.n_env);
  mix_int(static_cast<std::int64_t>(c.seed));
  mix_real(c.lambda);
  mix_real(c.e_penalty);
  mix_int(static_cast<std::int64_t>(c.h_comp.kind));
  mix_real(c.h_comp.total_time);
  for (const auto& ep : c.h_comp.endpoints) {
    mix_int(static_cast<std::int64_t>(ep.size()));
    for (const auto& p : ep) {
      mix_real(p.coefficient.real());
      mix_real(p.coefficient.imag());
      for (const auto& [q, f] : p.factors) {
        mix_int(q);
        mix_int(static_cast<std::int64_t>(f));
      }
    }
  }
  mix_int(static_cast<std::int64_t>(c.initial_system_state.kind));
  for (Eigen::Index k = 0; k < c.initial_system_state.coeffs.size(); ++k) {
    mix_real(c.initial_system_state.coeffs[k].real());
    mix_real(c.initial_system_state.coeffs[k].imag());
  }
  h = fnv1a64(c.initial_env_state, h);
  return h;
}

struct ModelInstance {
  ModelConfig config;
  QubitRegister reg;
  CodeSpec code;
  ProjectorFamily fam;
  double lambda = 0.0;
  double e_penalty = 0.0;
  std::uint64_t seed = 0;
  std::string config_hash;

  std::vector<SpMatC> h_comp_sys;  // encoded endpoints, system-local
  EnvGraph graph;
  HermitianOperator h_env_local;   // dimension 2^n_env (1x1 zero if none)
  SpMatC h_env_local_t;            // transpose, for right-multiplication
  HermitianOperator H_env;         // full register
  std::vector<int> couplings_map;
  std::vector<VTerm> v_terms;
  PauliSum v_strings;
  HermitianOperator V;             // full register

  StateVector init_system;  // dimension 2^{ell n}
  StateVector init_env;     // dimension 2^{n_env}
  StateVector init_full;

  bool time_dependent() const { return config.h_comp.time_dependent(); }

  // Encoded computational Hamiltonian on the system block at time t.
  SpMatC h_comp_sys_at(double t) const {
    if (!time_dependent()) return h_comp_sys[0];
    double s = t / config.h_comp.total_time;
    return SpMatC((1.0 - s) * h_comp_sys[0] + s * h_comp_sys[1]);
  }

  // System-local penalty-free + penalty pieces.
  const SpMatC& penalty_sys() const { return fam.penalty_Q_sys.matrix(); }

  // Full-register Hamiltonians (sparse, assembled on demand).
  HermitianOperator h0(double t) const {  // H_comp^L(t) + H_env
    SpMatC env_id(reg.dim_env(), reg.dim_env());
    env_id.setIdentity();
    SpMatC m = kron(h_comp_sys_at(t), env_id) + H_env.matrix();
    return HermitianOperator::from_sparse(std::move(m), true);
  }
  HermitianOperator hamiltonian(double t) const {  // H_0 + lambda V + E_P Qt
    SpMatC env_id(reg.dim_env(), reg.dim_env());
    env_id.setIdentity();
    SpMatC m = kron(SpMatC(h_comp_sys_at(t) + e_penalty * penalty_sys()),
                    env_id) +
               H_env.matrix() + lambda * V.matrix();
    return HermitianOperator::from_sparse(std::move(m), true);
  }

  // y += alpha * V x (Kronecker-factorized, no full-size sparse product).
  void add_apply_v(VecC& y, cplx alpha, const VecC& x) const {
    add_apply_coupling_terms(v_terms, reg, y, alpha, x);
  }

  // Coupling terms acting on the physical qubits of one logical block.
  std::vector<VTerm> block_coupling_terms(int block) const {
    require(block >= 0 && block < reg.n_logical,
            "block_coupling_terms: block index out of range");
    std::vector<VTerm> out;
    for (const auto& t : v_terms)
      if (t.sys_qubit / reg.ell == block) out.push_back(t);
    return out;
  }

  // y += alpha * (H_comp^L(t) + H_env) x, same factorized scheme.
  void add_apply_h0(VecC& y, cplx alpha, const VecC& x, double t) const {
    const Eigen::Index ds = reg.dim_system(), de = reg.dim_env();
    using RowMat =
        Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Eigen::Map<const RowMat> xm(x.data(), ds, de);
    Eigen::Map<RowMat> ym(y.data(), ds, de);
    ym.noalias() += alpha * (h_comp_sys_at(t) * xm);
    if (reg.n_env > 0) ym.noalias() += alpha * (xm * h_env_local_t);
  }

  // y += alpha * H(t) x.
  void add_apply_h(VecC& y, cplx alpha, const VecC& x, double t) const {
    add_apply_h0(y, alpha, x, t);
    add_apply_v(y, alpha * lambda, x);
    const Eigen::Index ds = reg.dim_system(), de = reg.dim_env();
    using RowMat =
        Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Eigen::Map<const RowMat> xm(x.data(), ds, de);
    Eigen::Map<RowMat> ym(y.data(), ds, de);
    ym.noalias() += (alpha * e_penalty) * (penalty_sys() * xm);
  }
};

// Largest singular value of a linear map given only its action (and its
// adjoint's).  Same scheme as spectral_norm but matrix-free.
template <class Apply, class ApplyAdj>
double action_spectral_norm(Eigen::Index dim, Apply&& apply,
                            ApplyAdj&& apply_adj, int max_iters = 10000) {
  RngStream rng(0x5eedba5e, "action_norm_start");
  VecC v = rng.haar_state(dim);
  double sigma = 0.0, prev = -1.0;
  for (int it = 1; it <= max_iters; ++it) {
    VecC av = apply(v);
    VecC w = apply_adj(av);
    double wn = w.norm();
    if (wn < 1e-300) return 0.0;
    sigma = std::sqrt(std::max(0.0, std::real(v.dot(w))));
    v = w / wn;
    if (it >= 30 && std::abs(sigma - prev) <= 1e-10 * std::max(sigma, 1e-30))
      return sigma;
    prev = sigma;
  }
  throw numeric_error("action_spectral_norm: power iteration did not "
                      "converge");
}

// Norm of a Hermitian sum of coupling terms via the factorized action.
inline double coupling_terms_norm(const ModelInstance& inst,
                                  const std::vector<VTerm>& terms) {
  auto apply = [&](const VecC& x) {
    VecC y = VecC::Zero(x.size());
    add_apply_coupling_terms(terms, inst.reg, y, 1.0, x);
    return y;
  };
  return action_spectral_norm(inst.reg.dim(), apply, apply);
}

// ||V|| via the factorized action (V is Hermitian).
inline double coupling_norm(const ModelInstance& inst) {
  return coupling_terms_norm(inst, inst.v_terms);
}

// ||[sum of terms, H_0(t)]|| via factorized actions; the commutator of
// Hermitian maps is anti-Hermitian, so adjoint application is just negation.
inline double coupling_terms_h0_commutator_norm(
    const ModelInstance& inst, const std::vector<VTerm>& terms,
    double t = 0.0) {
  auto comm = [&](const VecC& x) {
    VecC hx = VecC::Zero(x.size());
    inst.add_apply_h0(hx, 1.0, x, t);
    VecC vhx = VecC::Zero(x.size());
    add_apply_coupling_terms(terms, inst.reg, vhx, 1.0, hx);
    VecC vx = VecC::Zero(x.size());
    add_apply_coupling_terms(terms, inst.reg, vx, 1.0, x);
    VecC hvx = VecC::Zero(x.size());
    inst.add_apply_h0(hvx, 1.0, vx, t);
    return VecC(vhx - hvx);
  };
  auto comm_adj = [&](const VecC& x) { return VecC(-comm(x)); };
  return action_spectral_norm(inst.reg.dim(), comm, comm_adj);
}

inline double coupling_h0_commutator_norm(const ModelInstance& inst,
                                          double t = 0.0) {
  return coupling_terms_h0_commutator_norm(inst, inst.v_terms, t);
}

inline void validate_config(const ModelConfig& c) {
  require(c.n_logical >= 1, "config: n_logical must be >= 1");
  require(c.n_env == 0 || (c.n_env >= 4 && c.n_env % 2 == 0),
          "config: n_env must be 0 or an even number >= 4");
  require(c.lambda >= 0.0, "config: lambda must be nonnegative");
  c.h_comp.validate();
  for (const auto& ep : c.h_comp.endpoints)
    require(max_qubit(ep) < c.n_logical,
            "config: computational Hamiltonian references a logical qubit "
            "outside the register");
  if (c.initial_system_state.kind == InitialSystemState::Kind::logical_coeffs)
    require(c.initial_system_state.coeffs.size() ==
                (Eigen::Index(1) << c.n_logical),
            "config: logical_coeffs needs 2^n_logical coefficients");
  else
    require(c.initial_system_state.coeffs.size() == 0,
            "config: coeffs must be empty unless kind is logical_coeffs");
  require(c.initial_env_state == "random",
          "config: initial_env_state must be \"random\"");
}

inline ModelInstance assemble(const ModelConfig& cfg) {
  validate_config(cfg);
  ModelInstance inst;
  inst.config = cfg;
  inst.code = build_code(cfg.code);
  inst.reg = QubitRegister::encoded(cfg.n_logical, inst.code.ell, cfg.n_env);
  inst.fam = build_projector_family(inst.code, cfg.n_logical, inst.reg);
  inst.lambda = cfg.lambda;
  inst.e_penalty = cfg.e_penalty;
  inst.seed = cfg.seed;
  inst.config_hash = hex64(config_fingerprint(cfg));

  for (const auto& ep : cfg.h_comp.endpoints)
    inst.h_comp_sys.push_back(
        encode_hamiltonian(ep, inst.code, cfg.n_logical).matrix());

  SpMatC sys_id(inst.reg.dim_system(), inst.reg.dim_system());
  sys_id.setIdentity();
  if (cfg.n_env > 0) {
    EnvironmentResult env = build_environment(cfg.n_env, cfg.seed);
    inst.graph = env.graph;
    inst.h_env_local = env.h_env;
    RngStream map_rng(cfg.seed, "coupling_map");
    inst.couplings_map =
        draw_coupling_map(inst.reg.n_system_physical(), cfg.n_env, map_rng);
  } else {
    inst.h_env_local = HermitianOperator::zero(1);
  }
  inst.h_env_local_t = inst.h_env_local.matrix().transpose();
  inst.H_env = HermitianOperator::from_sparse(
      kron(sys_id, inst.h_env_local.matrix()), true);

  CouplingResult cr = build_coupling(inst.reg, inst.couplings_map, cfg.seed);
  inst.v_terms = std::move(cr.terms);
  inst.v_strings = std::move(cr.strings);
  inst.V = std::move(cr.v_full);

  // Initial states.
  RngStream sys_rng(cfg.seed, "init_sys");
  const Eigen::Index n_codes = Eigen::Index(1) << cfg.n_logical;
  switch (cfg.initial_system_state.kind) {
    case InitialSystemState::Kind::zero_L:
      inst.init_system = logical_basis_state(inst.code, cfg.n_logical, 0);
      break;
    case InitialSystemState::Kind::plus_L: {
      VecC c = VecC::Constant(n_codes, 1.0);
      inst.init_system = encode_logical_state(inst.code, cfg.n_logical, c);
      break;
    }
    case InitialSystemState::Kind::random_codespace:
      inst.init_system = encode_logical_state(inst.code, cfg.n_logical,
                                              sys_rng.haar_state(n_codes));
      break;
    case InitialSystemState::Kind::logical_coeffs:
      inst.init_system = encode_logical_state(inst.code, cfg.n_logical,
                                              cfg.initial_system_state.coeffs);
      break;
  }
  RngStream env_rng(cfg.seed, "init_env");
  inst.init_env = StateVector(cfg.n_env > 0 ? env_rng.haar_state(inst.reg.dim_env())
                                            : VecC::Ones(1));
  inst.init_full = tensor(inst.init_system, inst.init_env);

  // Build-time contracts.
  double pvp = spectral_norm(HermitianOperator::from_sparse(
      SpMatC(inst.fam.total_P.matrix() * inst.V.matrix() *
             inst.fam.total_P.matrix()),
      false));
  require_numeric(pvp < 1e-12,
                  "assemble: coupling leaks inside the codespace, ||PVP|| = " +
                      std::to_string(pvp));
  return inst;
}

}  // namespace penaltyguard
