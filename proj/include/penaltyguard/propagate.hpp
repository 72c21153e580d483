#pragma once

// Time evolution.
//
// - SpectralForm: dense eigendecomposition of a time-independent Hamiltonian;
//   states are then evolved at arbitrary times (including t ~ 1e9) in
//   O(dim^2) per evaluation.
// - evolve_stepped: step-frozen unitary integrator.  The per-step generator
//   is the midpoint Hamiltonian plus the exact commutator integral, which for
//   the linear schedules used here is the complete second Magnus term; the
//   remaining error is O(dt^4 / T^2).  The exponential action is a truncated
//   power series, and every evolution is verified by halving the step count
//   until the two results agree.
// - evolve_pair: joint trajectories under the full Hamiltonian and under its
//   penalty-free part, exploiting the system (x) environment factorization of
//   the latter so only the full Hamiltonian ever needs a big eigensolve.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "penaltyguard/detail/lapack.hpp"
#include "penaltyguard/model.hpp"
#include "penaltyguard/operator.hpp"
#include "penaltyguard/rng.hpp"
#include "penaltyguard/state.hpp"

namespace penaltyguard {

// ---------------------------------------------------------------------------
// Spectral form

struct SpectralForm {
  VecR eigenvalues;   // ascending
  MatC eigenvectors;  // columns, unitary
  std::uint64_t source_hash = 0;

  Eigen::Index dim() const { return eigenvalues.size(); }
};

// Full-matrix invariant checks, O(dim^3).  diagonalize() runs them outright
// at small dimension and falls back to random-probe versions above 1024.
inline double unitarity_residual(const SpectralForm& f) {
  MatC g = f.eigenvectors.adjoint() * f.eigenvectors;
  g.diagonal().array() -= 1.0;
  return g.cwiseAbs().maxCoeff();
}

inline double reconstruction_residual(const SpectralForm& f,
                                      const HermitianOperator& h) {
  VecC ev = f.eigenvalues.cast<cplx>();
  MatC rebuilt = f.eigenvectors * ev.asDiagonal() * f.eigenvectors.adjoint();
  double scale = std::max(f.eigenvalues.cwiseAbs().maxCoeff(), 1e-12);
  return (rebuilt - h.dense()).cwiseAbs().maxCoeff() / scale;
}

inline SpectralForm diagonalize(const HermitianOperator& h,
                                Eigen::Index dense_limit = 8192) {
  require(h.is_hermitian(),
          "diagonalize: operator is not marked Hermitian; symmetrize or "
          "rebuild it before decomposing");
  require(h.dim() <= dense_limit,
          "diagonalize: dimension " + std::to_string(h.dim()) +
              " exceeds the dense limit " + std::to_string(dense_limit) +
              "; use the stepped propagator instead");
  SpectralForm f;
  f.source_hash = h.fingerprint();
  MatC m = h.dense();
  detail::zheevd_in_place(m, f.eigenvalues);
  f.eigenvectors = std::move(m);

  if (h.dim() <= 1024) {
    double ur = unitarity_residual(f);
    require_numeric(ur < 1e-10, "diagonalize: eigenvector matrix is not "
                                "unitary, residual " + std::to_string(ur));
    double rr = reconstruction_residual(f, h);
    require_numeric(rr < 1e-10, "diagonalize: reconstruction residual " +
                                    std::to_string(rr));
  } else {
    // Random-probe versions of the same invariants; a broken decomposition
    // cannot hide from vectors with support on every eigenspace.
    RngStream rng(f.source_hash, "spectral_probe");
    const double scale =
        std::max(f.eigenvalues.cwiseAbs().maxCoeff(), 1e-12);
    for (int p = 0; p < 3; ++p) {
      VecC x = rng.haar_state(h.dim());
      VecC cx = f.eigenvectors.adjoint() * x;
      require_numeric(std::abs(cx.norm() - 1.0) < 1e-10,
                      "diagonalize: eigenvector matrix fails a unitarity "
                      "probe");
      require_numeric((f.eigenvectors * cx - x).norm() < 1e-10,
                      "diagonalize: eigenvector matrix fails a completeness "
                      "probe");
      VecC rec = f.eigenvectors *
                 VecC(f.eigenvalues.cast<cplx>().cwiseProduct(cx));
      require_numeric((rec - h.matrix() * x).norm() / scale < 1e-10,
                      "diagonalize: reconstruction probe failed");
    }
  }
  return f;
}

inline StateVector evolve_spectral(const SpectralForm& f, const StateVector& s,
                                   double t, double unitarity_tol = 1e-9) {
  require(s.dim() == f.dim(), "evolve_spectral: dimension mismatch");
  VecC c = f.eigenvectors.adjoint() * s.amplitudes;
  for (Eigen::Index i = 0; i < c.size(); ++i)
    c[i] *= std::polar(1.0, -f.eigenvalues[i] * t);
  StateVector out{f.eigenvectors * c};
  double in_norm = s.norm();
  require_numeric(std::abs(out.norm() - in_norm) <=
                      unitarity_tol * std::max(1.0, in_norm),
                  "evolve_spectral: norm drifted beyond tolerance; the "
                  "decomposition is broken");
  return out;
}

// Same evolution applied to a block of column vectors.
inline MatC evolve_columns(const SpectralForm& f, const MatC& cols, double t) {
  require(cols.rows() == f.dim(), "evolve_columns: dimension mismatch");
  MatC c = f.eigenvectors.adjoint() * cols;
  for (Eigen::Index i = 0; i < c.rows(); ++i)
    c.row(i) *= std::polar(1.0, -f.eigenvalues[i] * t);
  return f.eigenvectors * c;
}

// ---------------------------------------------------------------------------
// Stepped propagator

struct PropagatorSettings {
  enum class Method { spectral, stepped };
  Method method = Method::spectral;
  double dt_max = 0.5;
  double unitarity_tol = 1e-9;
  int substep_expansion_order = 60;  // cap on series terms per step
  double refine_target = 1e-8;       // overlap deficit per unit time

  void validate() const {
    require(unitarity_tol >= 1e-12,
            "propagator settings: unitarity_tol must be >= 1e-12");
    require(dt_max > 0.0, "propagator settings: dt_max must be positive");
    require(substep_expansion_order >= 4,
            "propagator settings: expansion order must be >= 4");
    require(refine_target > 0.0,
            "propagator settings: refinement target must be positive");
  }
};

inline double sparse_operator_norm(const SpMatC& a) {
  if (a.rows() == 0 || a.nonZeros() == 0) return 0.0;
  SpMatC adj = SpMatC(a.adjoint());
  auto ap = [&](const VecC& x) { return VecC(a * x); };
  auto apj = [&](const VecC& x) { return VecC(adj * x); };
  return action_spectral_norm(a.rows(), ap, apj);
}

// H(t) = h_static + (t / slope_total_time) h_slope, with h_slope empty in the
// time-independent case.  slope_comm caches [h_static, h_slope]: the step
// generator over [t, t+dt] is
//   Theta = dt H(t + dt/2) + i (dt^3 / 12 T) [h_static, h_slope],
// exactly the first two Magnus terms for a schedule linear in t.
struct SteppedHamiltonian {
  SpMatC h_static;
  SpMatC h_slope;
  SpMatC slope_comm;
  double slope_total_time = 0.0;
  double static_norm = 0.0, slope_norm = 0.0, comm_norm = 0.0;

  Eigen::Index dim() const { return h_static.rows(); }
  bool time_dependent() const { return h_slope.nonZeros() > 0; }
};

inline SteppedHamiltonian make_stepped_sparse(SpMatC h_static, SpMatC h_slope,
                                              double total_time) {
  SteppedHamiltonian s;
  s.h_static = std::move(h_static);
  s.static_norm = sparse_operator_norm(s.h_static);
  if (h_slope.nonZeros() > 0) {
    require(total_time > 0.0,
            "stepped: a time-dependent slope needs total_time > 0");
    s.h_slope = std::move(h_slope);
    s.slope_total_time = total_time;
    SpMatC comm =
        SpMatC(s.h_static * s.h_slope) - SpMatC(s.h_slope * s.h_static);
    // Drop the exact-cancellation fill-in (slope commutes with the whole
    // environment part, so most of the product pattern is zeros).
    double top = 0.0;
    for (Eigen::Index k = 0; k < comm.outerSize(); ++k)
      for (SpMatC::InnerIterator it(comm, k); it; ++it)
        top = std::max(top, std::abs(it.value()));
    comm.prune([thr = 1e-13 * top](const std::int64_t&, const std::int64_t&,
                                   const cplx& v) {
      return std::abs(v) > thr;
    });
    s.slope_comm = std::move(comm);
    s.slope_norm = sparse_operator_norm(s.h_slope);
    s.comm_norm = sparse_operator_norm(s.slope_comm);
  } else {
    s.h_slope.resize(s.h_static.rows(), s.h_static.cols());
    s.slope_comm.resize(s.h_static.rows(), s.h_static.cols());
  }
  return s;
}

inline SteppedHamiltonian make_stepped(const HermitianOperator& h) {
  require(h.is_hermitian(), "stepped: Hamiltonian must be Hermitian");
  return make_stepped_sparse(h.matrix(), SpMatC(h.dim(), h.dim()), 0.0);
}

inline SteppedHamiltonian make_stepped(const ModelInstance& inst) {
  if (!inst.time_dependent()) return make_stepped(inst.hamiltonian(0.0));
  SpMatC env_id(inst.reg.dim_env(), inst.reg.dim_env());
  env_id.setIdentity();
  SpMatC slope =
      kron(SpMatC(inst.h_comp_sys[1] - inst.h_comp_sys[0]), env_id);
  return make_stepped_sparse(inst.hamiltonian(0.0).matrix(), std::move(slope),
                             inst.config.h_comp.total_time);
}

namespace detail {

// psi <- exp(-i Theta) psi via the power series; false when the series did
// not converge within max_order terms (caller shrinks the step).
template <class ApplyTheta>
bool series_exp_apply(VecC& psi, ApplyTheta&& theta, int max_order,
                      double rel_tol) {
  VecC term = psi;
  const double base = std::max(psi.norm(), 1e-300);
  int small_streak = 0;
  for (int k = 1; k <= max_order; ++k) {
    VecC tv = theta(term);
    term = (cplx(0.0, -1.0) / static_cast<double>(k)) * tv;
    psi += term;
    if (term.norm() <= rel_tol * base) {
      if (++small_streak >= 2) return true;
    } else {
      small_streak = 0;
    }
  }
  return false;
}

// One uniform march over [t0, t1] with n steps; nullopt if any step's series
// failed to converge.
inline std::optional<VecC> stepped_march(const SteppedHamiltonian& sh,
                                         const VecC& psi0, double t0,
                                         double t1, long n,
                                         const PropagatorSettings& st) {
  VecC psi = psi0;
  const double dt = (t1 - t0) / static_cast<double>(n);
  const bool td = sh.time_dependent();
  const cplx comm_coef =
      td ? cplx(0.0, dt * dt * dt / (12.0 * sh.slope_total_time)) : cplx(0.0);
  for (long i = 0; i < n; ++i) {
    const double tm = t0 + dt * (static_cast<double>(i) + 0.5);
    const double sig = td ? tm / sh.slope_total_time : 0.0;
    auto theta = [&](const VecC& x) {
      VecC y = dt * (sh.h_static * x);
      if (td) {
        y += (dt * sig) * (sh.h_slope * x);
        if (sh.slope_comm.nonZeros() > 0) y += comm_coef * (sh.slope_comm * x);
      }
      return y;
    };
    if (!series_exp_apply(psi, theta, st.substep_expansion_order, 1e-13))
      return std::nullopt;
  }
  return psi;
}

}  // namespace detail

inline StateVector evolve_stepped(const SteppedHamiltonian& sh,
                                  const StateVector& s0, double t0, double t1,
                                  const PropagatorSettings& settings =
                                      PropagatorSettings{}) {
  settings.validate();
  require(t1 >= t0, "stepped: t1 must be >= t0");
  require(s0.dim() == sh.dim(), "stepped: dimension mismatch");
  if (t1 == t0) return s0;

  const double interval = t1 - t0;
  const double sigma_max =
      sh.time_dependent()
          ? std::max(std::abs(t0), std::abs(t1)) / sh.slope_total_time
          : 0.0;
  const double norm_bound = sh.static_norm + sigma_max * sh.slope_norm;
  const double theta_target = 5.0;  // per-step generator norm aimed for
  double h = settings.dt_max;
  if (norm_bound > 0.0) h = std::min(h, theta_target / norm_bound);
  long n = std::max<long>(1, static_cast<long>(std::ceil(interval / h)));
  const double deficit_thr =
      settings.refine_target * std::max(interval, 1e-6);

  std::optional<VecC> prev;
  for (;;) {
    if (interval / static_cast<double>(n) < 1e-12)
      throw numeric_error(
          "stepped: step underflow below 1e-12 (stiff problem), local "
          "Hamiltonian norm ~ " +
          std::to_string(norm_bound));
    auto cur = detail::stepped_march(sh, s0.amplitudes, t0, t1, n, settings);
    if (cur) {
      if (prev) {
        const double denom =
            std::max(prev->norm() * cur->norm(), 1e-300);
        const double deficit = 1.0 - std::abs(prev->dot(*cur)) / denom;
        if (deficit < deficit_thr) {
          const double in_norm = s0.norm();
          require_numeric(
              std::abs(cur->norm() - in_norm) <=
                  settings.unitarity_tol * std::max(1.0, in_norm),
              "stepped: norm drifted beyond tolerance (drift is an error, "
              "never renormalized away)");
          return StateVector{std::move(*cur)};
        }
      }
      prev = std::move(cur);
    }
    n *= 2;
  }
}

inline std::vector<StateVector> evolve_stepped_grid(
    const SteppedHamiltonian& sh, const StateVector& s0,
    const std::vector<double>& times,
    const PropagatorSettings& settings = PropagatorSettings{},
    double t_start = 0.0) {
  require(!times.empty(), "stepped grid: empty time grid");
  std::vector<StateVector> out;
  StateVector cur = s0;
  double t_prev = t_start;
  for (double t : times) {
    require(t >= t_prev, "stepped grid: times must be nondecreasing and "
                         "start at or after t_start");
    cur = evolve_stepped(sh, cur, t_prev, t, settings);
    t_prev = t;
    out.push_back(cur);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Paired evolution: full Hamiltonian vs penalty-free part

// Time-independent instances only: holds the spectral forms needed to
// evaluate phi(t) = U(t) psi and the factorized phi_0(t) = U_0(t) psi at any
// t.  The penalty-free part never needs a full-register eigensolve because
// U_0 = U_sys (x) U_env.
struct PairEvolver {
  Eigen::Index ds = 0, de = 0;
  VecC s0_sys, s0_env, s0_full;
  SpectralForm sys_form;                  // encoded computational part, 2^{ln}
  SpectralForm env_form;                  // local environment, 2^{n_env}
  std::optional<SpectralForm> full_form;  // full Hamiltonian

  VecC phi0_sys_at(double t) const {
    return evolve_spectral(sys_form, StateVector{s0_sys}, t).amplitudes;
  }
  VecC phi0_env_at(double t) const {
    return evolve_spectral(env_form, StateVector{s0_env}, t).amplitudes;
  }
  VecC phi0_at(double t) const {
    return tensor(StateVector{phi0_sys_at(t)}, StateVector{phi0_env_at(t)})
        .amplitudes;
  }
  VecC phi_at(double t) const {
    require(full_form.has_value(),
            "pair evolver: built without the full-Hamiltonian form");
    return evolve_spectral(*full_form, StateVector{s0_full}, t).amplitudes;
  }
};

inline void require_codespace_state(const ModelInstance& inst,
                                    const VecC& s0_sys) {
  VecC q = inst.fam.penalty_Q_sys.matrix() * s0_sys;
  require(q.norm() < 1e-9,
          "initial system state leaves the codespace: ||Qt s0|| = " +
              std::to_string(q.norm()));
}

inline PairEvolver make_pair_evolver(const ModelInstance& inst,
                                     const StateVector& s0_sys,
                                     const StateVector& s0_env,
                                     bool with_full = true,
                                     bool require_codespace = true) {
  require(!inst.time_dependent(),
          "pair evolver: schedules need the stepped path (evolve_pair)");
  require(s0_sys.dim() == inst.reg.dim_system() &&
              s0_env.dim() == inst.reg.dim_env(),
          "pair evolver: initial state dimension mismatch");
  if (require_codespace) require_codespace_state(inst, s0_sys.amplitudes);

  PairEvolver ev;
  ev.ds = inst.reg.dim_system();
  ev.de = inst.reg.dim_env();
  ev.s0_sys = s0_sys.amplitudes;
  ev.s0_env = s0_env.amplitudes;
  ev.s0_full = tensor(s0_sys, s0_env).amplitudes;
  ev.sys_form = diagonalize(
      HermitianOperator::from_sparse(inst.h_comp_sys_at(0.0), true));
  ev.env_form = diagonalize(inst.h_env_local);
  if (with_full) ev.full_form = diagonalize(inst.hamiltonian(0.0));
  return ev;
}

struct PairTrajectory {
  std::vector<double> times;
  std::vector<VecC> phi;       // full evolution
  std::vector<VecC> phi0;      // penalty-free evolution
  std::vector<VecC> phi0_sys;  // its system factor
  std::vector<VecC> phi0_env;  // its environment factor
};

inline PairTrajectory evolve_pair(const ModelInstance& inst,
                                  const StateVector& s0_sys,
                                  const StateVector& s0_env,
                                  const std::vector<double>& times,
                                  const PropagatorSettings& settings =
                                      PropagatorSettings{},
                                  bool require_codespace = true) {
  settings.validate();
  require(!times.empty(), "evolve_pair: empty time grid");
  require(times.front() >= 0.0, "evolve_pair: times must be nonnegative");
  for (std::size_t i = 1; i < times.size(); ++i)
    require(times[i] >= times[i - 1],
            "evolve_pair: times must be nondecreasing");

  PairTrajectory tr;
  tr.times = times;
  const bool spectral_ok =
      !inst.time_dependent() &&
      settings.method == PropagatorSettings::Method::spectral;

  if (spectral_ok) {
    PairEvolver ev =
        make_pair_evolver(inst, s0_sys, s0_env, true, require_codespace);
    for (double t : times) {
      tr.phi0_sys.push_back(ev.phi0_sys_at(t));
      tr.phi0_env.push_back(ev.phi0_env_at(t));
      tr.phi0.push_back(tensor(StateVector{tr.phi0_sys.back()},
                               StateVector{tr.phi0_env.back()})
                            .amplitudes);
      tr.phi.push_back(ev.phi_at(t));
    }
    return tr;
  }

  if (require_codespace) require_codespace_state(inst, s0_sys.amplitudes);
  SteppedHamiltonian full = make_stepped(inst);
  SpMatC sys_slope(inst.reg.dim_system(), inst.reg.dim_system());
  double sys_T = 0.0;
  if (inst.time_dependent()) {
    sys_slope = SpMatC(inst.h_comp_sys[1] - inst.h_comp_sys[0]);
    sys_T = inst.config.h_comp.total_time;
  }
  SteppedHamiltonian sys0 =
      make_stepped_sparse(inst.h_comp_sys[0], std::move(sys_slope), sys_T);
  SpectralForm env_form = diagonalize(inst.h_env_local);

  StateVector cur_full = tensor(s0_sys, s0_env);
  StateVector cur_sys = s0_sys;
  double t_prev = 0.0;
  for (double t : times) {
    cur_full = evolve_stepped(full, cur_full, t_prev, t, settings);
    cur_sys = evolve_stepped(sys0, cur_sys, t_prev, t, settings);
    t_prev = t;
    tr.phi.push_back(cur_full.amplitudes);
    tr.phi0_sys.push_back(cur_sys.amplitudes);
    tr.phi0_env.push_back(
        evolve_spectral(env_form, s0_env, t).amplitudes);
    tr.phi0.push_back(tensor(StateVector{tr.phi0_sys.back()},
                             StateVector{tr.phi0_env.back()})
                          .amplitudes);
  }
  return tr;
}

}  // namespace penaltyguard
