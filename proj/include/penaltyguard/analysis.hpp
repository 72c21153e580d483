#pragma once

// Diagnostics for penalty-protected evolutions: fidelity measures, the
// partial trace over the environment, the oscillatory-integral operator F(t)
// that controls the leading-order infidelity, its closed-form norm bound,
// the infinite-penalty convergence check, protection-time search, long-time
// dephasing predictions, and a three-level effective model of the slow
// codespace leakage channel.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Eigenvalues>

#include "penaltyguard/propagate.hpp"

namespace penaltyguard {

// ---------------------------------------------------------------------------
// Pointwise fidelity measures

// Squared overlap |<phi0|phi>|^2 of two normalized states.
inline double total_fidelity_sq(const StateVector& phi0,
                                const StateVector& phi) {
  require(phi0.dim() == phi.dim(), "total_fidelity_sq: dimension mismatch");
  require(phi0.is_normalized() && phi.is_normalized(),
          "total_fidelity_sq: states must be normalized");
  return std::norm(inner(phi0, phi));
}

// Reduced density matrix of the system block: rho = tr_env |phi><phi|.
inline MatC partial_trace_env(const StateVector& phi,
                              const QubitRegister& reg) {
  require(phi.dim() == reg.dim(), "partial_trace_env: dimension mismatch");
  require(phi.is_normalized(), "partial_trace_env: state must be normalized");
  using RowMat =
      Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const RowMat> m(phi.amplitudes.data(), reg.dim_system(),
                             reg.dim_env());
  MatC rho = m * m.adjoint();
  const cplx tr = rho.trace();
  require_numeric(std::abs(tr - cplx(1.0, 0.0)) < 1e-10,
                  "partial_trace_env: trace deviates from 1 by " +
                      std::to_string(std::abs(tr - cplx(1.0, 0.0))));
  return rho;
}

// Validates Hermiticity, unit trace, and positive semidefiniteness.
inline void require_density_matrix(const MatC& rho) {
  require(rho.rows() == rho.cols(), "density matrix: must be square");
  require((rho - rho.adjoint()).cwiseAbs().maxCoeff() < 1e-10,
          "density matrix: not Hermitian");
  require(std::abs(rho.trace() - cplx(1.0, 0.0)) < 1e-8,
          "density matrix: trace is not 1");
  Eigen::SelfAdjointEigenSolver<MatC> es(rho, Eigen::EigenvaluesOnly);
  require(es.info() == Eigen::Success,
          "density matrix: eigenvalue check failed");
  require(es.eigenvalues().minCoeff() > -1e-9,
          "density matrix: negative eigenvalue " +
              std::to_string(es.eigenvalues().minCoeff()));
}

// <phi0_s| rho |phi0_s> for a normalized system state and a density matrix.
inline double system_fidelity_sq(const StateVector& phi0_s, const MatC& rho) {
  require_density_matrix(rho);
  require(phi0_s.dim() == rho.rows(),
          "system_fidelity_sq: dimension mismatch");
  require(phi0_s.is_normalized(),
          "system_fidelity_sq: reference state must be normalized");
  const double v =
      std::real(phi0_s.amplitudes.dot(rho * phi0_s.amplitudes));
  require_numeric(v > -1e-9 && v < 1.0 + 1e-9,
                  "system_fidelity_sq: value escaped [0,1]: " +
                      std::to_string(v));
  return std::clamp(v, 0.0, 1.0);
}

// <phi| P |phi> for an arbitrary full-register projector.
inline double codespace_probability(const StateVector& phi,
                                    const HermitianOperator& p) {
  require(phi.dim() == p.dim(), "codespace_probability: dimension mismatch");
  require(phi.is_normalized(),
          "codespace_probability: state must be normalized");
  const double v =
      std::real(phi.amplitudes.dot(p.matrix() * phi.amplitudes));
  require_numeric(v > -1e-9 && v < 1.0 + 1e-9,
                  "codespace_probability: value escaped [0,1]: " +
                      std::to_string(v));
  return std::clamp(v, 0.0, 1.0);
}

// Fast path using the system-local projector: P = P_sys (x) I_env.
inline double codespace_probability(const StateVector& phi,
                                    const ProjectorFamily& fam) {
  require(phi.dim() == fam.reg.dim(),
          "codespace_probability: dimension mismatch");
  require(phi.is_normalized(),
          "codespace_probability: state must be normalized");
  using RowMat =
      Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const RowMat> m(phi.amplitudes.data(), fam.reg.dim_system(),
                             fam.reg.dim_env());
  const double v = std::real(
      (fam.total_P_sys.matrix() * m).cwiseProduct(m.conjugate()).sum());
  require_numeric(v > -1e-9 && v < 1.0 + 1e-9,
                  "codespace_probability: value escaped [0,1]: " +
                      std::to_string(v));
  return std::clamp(v, 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// Least-squares helpers

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

inline LinearFit fit_linear(const std::vector<double>& x,
                            const std::vector<double>& y) {
  require(x.size() == y.size(), "fit_linear: length mismatch");
  require(x.size() >= 2, "fit_linear: need at least two points");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  require(sxx > 0.0, "fit_linear: abscissas are all identical");
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - (f.intercept + f.slope * x[i]);
    ss_res += r * r;
  }
  f.r2 = (syy == 0.0) ? 1.0 : 1.0 - ss_res / syy;
  return f;
}

// Proportional model y = slope * x; R^2 is still reported about the mean so
// it stays comparable with the affine fit.
inline LinearFit fit_linear_through_origin(const std::vector<double>& x,
                                           const std::vector<double>& y) {
  require(x.size() == y.size(), "fit_linear_through_origin: length mismatch");
  require(x.size() >= 2,
          "fit_linear_through_origin: need at least two points");
  double sxx = 0.0, sxy = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
    my += y[i];
  }
  require(sxx > 0.0, "fit_linear_through_origin: abscissas are all zero");
  my /= static_cast<double>(x.size());
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = 0.0;
  double ss_res = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - f.slope * x[i];
    ss_res += r * r;
    syy += (y[i] - my) * (y[i] - my);
  }
  f.r2 = (syy == 0.0) ? (ss_res == 0.0 ? 1.0 : 0.0) : 1.0 - ss_res / syy;
  return f;
}

// ---------------------------------------------------------------------------
// Spectral evaluation context

struct FidelityPoint {
  double t = 0.0;
  double total_sq = 0.0;       // |<phi0(t)|phi(t)>|^2
  double system_sq = 0.0;      // <phi0_s(t)| tr_env rho |phi0_s(t)>
  double codespace_prob = 0.0; // <phi(t)| P |phi(t)>
};

// Shared eigendecompositions for one time-independent instance.  The full
// form is the only expensive piece; every initial state and every evaluation
// time reuses it.
struct AnalysisContext {
  ModelInstance inst;
  SpectralForm sys_form;                  // encoded computational part
  SpectralForm env_form;                  // local environment
  std::optional<SpectralForm> full_form;  // H_0 + lambda V + penalty
};

inline AnalysisContext make_analysis_context(ModelInstance inst,
                                             bool with_full = true) {
  require(!inst.time_dependent(),
          "analysis context: schedules need the stepped propagator; spectral "
          "evaluation covers constant Hamiltonians only");
  AnalysisContext ctx;
  ctx.sys_form = diagonalize(
      HermitianOperator::from_sparse(inst.h_comp_sys_at(0.0), true));
  ctx.env_form = diagonalize(inst.h_env_local);
  if (with_full) ctx.full_form = diagonalize(inst.hamiltonian(0.0));
  ctx.inst = std::move(inst);
  return ctx;
}

// One initial state, arbitrary evaluation times.  Eigenbasis coefficients
// are precomputed so each time costs a single reconstruction per factor.
class StateEvolution {
 public:
  StateEvolution(const AnalysisContext& ctx, const StateVector& s0_sys,
                 const StateVector& s0_env, bool require_codespace = true)
      : ctx_(&ctx) {
    require(ctx.full_form.has_value(),
            "state evolution: context was built without the full form");
    require(s0_sys.dim() == ctx.inst.reg.dim_system() &&
                s0_env.dim() == ctx.inst.reg.dim_env(),
            "state evolution: initial state dimension mismatch");
    require(s0_sys.is_normalized() && s0_env.is_normalized(),
            "state evolution: initial states must be normalized");
    if (require_codespace) require_codespace_state(ctx.inst, s0_sys.amplitudes);
    s0_sys_ = s0_sys.amplitudes;
    VecC s0_full =
        tensor(s0_sys, s0_env).amplitudes;
    sys_coeffs_ = ctx.sys_form.eigenvectors.adjoint() * s0_sys_;
    env_coeffs_ = ctx.env_form.eigenvectors.adjoint() * s0_env.amplitudes;
    full_coeffs_ = ctx.full_form->eigenvectors.adjoint() * s0_full;
  }

  FidelityPoint at(double t) const {
    const VecC phi0s = reconstruct(ctx_->sys_form, sys_coeffs_, t);
    const VecC phi0e = reconstruct(ctx_->env_form, env_coeffs_, t);
    const VecC phi = reconstruct(*ctx_->full_form, full_coeffs_, t);
    require_numeric(std::abs(phi.norm() - 1.0) < 1e-9,
                    "state evolution: norm drift at t = " + std::to_string(t));

    const Eigen::Index ds = ctx_->inst.reg.dim_system();
    const Eigen::Index de = ctx_->inst.reg.dim_env();
    using RowMat =
        Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Eigen::Map<const RowMat> m(phi.data(), ds, de);

    FidelityPoint p;
    p.t = t;
    const cplx overlap = phi0s.dot(m * phi0e.conjugate());
    p.total_sq = std::norm(overlap);
    p.system_sq = (m.adjoint() * phi0s).squaredNorm();
    p.codespace_prob = std::real(
        (ctx_->inst.fam.total_P_sys.matrix() * m)
            .cwiseProduct(m.conjugate())
            .sum());
    auto check = [&](double v, const char* what) {
      require_numeric(v > -1e-9 && v < 1.0 + 1e-9,
                      std::string("state evolution: ") + what +
                          " escaped [0,1]: " + std::to_string(v));
      return std::clamp(v, 0.0, 1.0);
    };
    p.total_sq = check(p.total_sq, "total fidelity");
    p.system_sq = check(p.system_sq, "system fidelity");
    p.codespace_prob = check(p.codespace_prob, "codespace probability");
    return p;
  }

 private:
  static VecC reconstruct(const SpectralForm& f, const VecC& coeffs,
                          double t) {
    VecC c = coeffs;
    for (Eigen::Index i = 0; i < c.size(); ++i)
      c[i] *= std::polar(1.0, -f.eigenvalues[i] * t);
    return f.eigenvectors * c;
  }

  const AnalysisContext* ctx_;
  VecC s0_sys_;
  VecC sys_coeffs_, env_coeffs_, full_coeffs_;
};

// Evaluates all three measures at one time from the instance's own initial
// state.  For many times against a fixed state, build one StateEvolution.
inline FidelityPoint evaluate_point(const AnalysisContext& ctx, double t) {
  return StateEvolution(ctx, ctx.inst.init_system, ctx.inst.init_env).at(t);
}

// ---------------------------------------------------------------------------
// Protection time

struct ProtectionTime {
  double t = std::numeric_limits<double>::infinity();
  bool crossed = false;   // a sustained crossing was found before t_max
  bool floored = false;   // already below threshold at t = 1
  double threshold = 0.9;
};

// First time the squared system fidelity drops below `threshold`, located by
// a geometric coarse scan (factor 1.3 from t = 1) and then bisection to 1%
// relative width.  The fidelity fluctuates, so the trigger is a window of
// five consecutive scan points below threshold; this tracks the lower
// envelope instead of reacting to a single dip.
inline ProtectionTime protection_time(const AnalysisContext& ctx,
                                      double threshold = 0.9,
                                      double t_max = 1e9) {
  require(threshold > 0.0 && threshold < 1.0,
          "protection_time: threshold must lie in (0,1)");
  require(t_max >= 1.0, "protection_time: t_max must be at least 1");
  StateEvolution ev(ctx, ctx.inst.init_system, ctx.inst.init_env);
  auto fs = [&](double t) { return ev.at(t).system_sq; };

  ProtectionTime out;
  out.threshold = threshold;
  if (fs(1.0) < threshold) {
    out.t = 1.0;
    out.crossed = true;
    out.floored = true;
    return out;
  }

  double last_above = 1.0;
  double first_below = 0.0;
  int below_run = 0;
  bool triggered = false;
  for (double t = 1.3; t <= t_max; t *= 1.3) {
    if (fs(t) < threshold) {
      if (below_run == 0) first_below = t;
      if (++below_run >= 5) {
        triggered = true;
        break;
      }
    } else {
      below_run = 0;
      last_above = t;
    }
  }
  if (!triggered) return out;  // infinity sentinel

  double lo = last_above, hi = first_below;
  while (hi / lo > 1.01) {
    const double mid = std::sqrt(lo * hi);
    (fs(mid) >= threshold ? lo : hi) = mid;
  }
  out.t = hi;
  out.crossed = true;
  return out;
}

// ---------------------------------------------------------------------------
// Long-time dephasing

struct LongTermFidelity {
  double measured_mean = 0.0;
  double predicted = 0.0;
};

inline std::vector<double> longterm_default_times(double scale = 1e5) {
  std::vector<double> t;
  for (int k = 1; k <= 10; ++k) t.push_back(scale * k);
  return t;
}

// Average squared system fidelity over the given times for the initial state
// alpha |+_L> + beta |-_L> (beta = sqrt(1 - alpha^2) >= 0), against the
// dephasing prediction |alpha|^4 + |beta|^4.  The prediction assumes the
// computational generator is diagonal in the |+-_L> = (|0_L> +- |1_L>)/sqrt2
// basis, as holds for the default logical-X generator.
inline LongTermFidelity longterm_fidelity(const AnalysisContext& ctx,
                                          double alpha,
                                          const std::vector<double>& times) {
  require(ctx.inst.reg.n_logical == 1,
          "longterm_fidelity: a single logical qubit is required");
  require(alpha >= 0.0 && alpha <= 1.0,
          "longterm_fidelity: alpha must lie in [0,1]");
  require(!times.empty(), "longterm_fidelity: empty time list");
  const double beta = std::sqrt(std::max(0.0, 1.0 - alpha * alpha));
  const MatC b = ctx.inst.fam.codespace_basis_sys();
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  VecC s0 = inv_sqrt2 * ((alpha + beta) * b.col(0).eval() +
                         (alpha - beta) * b.col(1).eval());
  StateEvolution ev(ctx, StateVector{std::move(s0)}, ctx.inst.init_env);
  double acc = 0.0;
  for (double t : times) acc += ev.at(t).system_sq;
  LongTermFidelity out;
  out.measured_mean = acc / static_cast<double>(times.size());
  out.predicted = std::pow(alpha, 4) + std::pow(beta, 4);
  return out;
}

// ---------------------------------------------------------------------------
// The operator F(t) = integral_0^t e^{i E_P tau} U_0^dag(tau) V U_0(tau) P

namespace detail {

// integral_0^t e^{i omega tau} d tau, in closed form.  Written without the
// difference e^{i omega t} - 1 so small |omega t| loses no precision.
inline cplx osc_integral(double omega, double t) {
  if (omega == 0.0) return cplx(t, 0.0);
  const double s = std::sin(0.5 * omega * t);
  return cplx(std::sin(omega * t), 2.0 * s * s) / omega;
}

}  // namespace detail

// Eigendecomposition of the encoded computational part carried out sector by
// sector (error weight r = 0 .. n).  The generator commutes with every block
// projector, so eigenvectors can always be chosen inside one sector; a plain
// dense solve may mix sectors across degeneracies, which would scramble the
// codespace labeling needed below.
struct SectorSpectral {
  VecR eigenvalues;
  MatC eigenvectors;
  std::vector<int> sector;                  // error weight per column
  std::vector<Eigen::Index> codespace_cols; // columns with weight 0
};

inline SectorSpectral diagonalize_by_sector(const SpMatC& h_sys,
                                            const ProjectorFamily& fam) {
  const Eigen::Index d = fam.reg.dim_system();
  require(h_sys.rows() == d && h_sys.cols() == d,
          "sector diagonalization: dimension mismatch");
  double scale = 1.0;
  if (h_sys.nonZeros() > 0)
    scale = std::max(scale, Eigen::Map<const VecC>(h_sys.valuePtr(),
                                                   h_sys.nonZeros())
                                .cwiseAbs()
                                .maxCoeff());
  SectorSpectral out;
  out.eigenvalues.resize(d);
  out.eigenvectors.resize(d, d);
  out.sector.resize(static_cast<std::size_t>(d));
  Eigen::Index at = 0;
  for (int r = 0; r <= fam.n_logical; ++r) {
    MatC basis = fam.sector_basis(r);
    if (basis.cols() == 0) continue;
    MatC compressed = basis.adjoint() * (h_sys * basis);
    compressed = (0.5 * (compressed + compressed.adjoint())).eval();
    VecR w;
    detail::zheevd_in_place(compressed, w);
    MatC lifted = basis * compressed;
    MatC scaled = lifted;
    for (Eigen::Index c = 0; c < scaled.cols(); ++c) scaled.col(c) *= w[c];
    const double resid = (h_sys * lifted - scaled).cwiseAbs().maxCoeff();
    require_numeric(resid < 1e-10 * scale,
                    "sector diagonalization: eigenvectors leak between "
                    "sectors, residual " + std::to_string(resid));
    for (Eigen::Index c = 0; c < lifted.cols(); ++c) {
      out.eigenvalues[at + c] = w[c];
      out.sector[static_cast<std::size_t>(at + c)] = r;
      if (r == 0) out.codespace_cols.push_back(at + c);
    }
    out.eigenvectors.middleCols(at, lifted.cols()) = lifted;
    at += lifted.cols();
  }
  require_numeric(at == d, "sector diagonalization: sectors do not fill the "
                           "space");
  return out;
}

// F(t) expressed in the product eigenbasis of H_0.  Rows run over all
// (system, environment) eigenpairs, columns over codespace pairs only (the
// projector P annihilates everything else).
struct FOperator {
  double t = 0.0;
  Eigen::Index de = 1;
  MatC coords;
  std::vector<int> row_sector;  // per system-factor row block

  // Largest singular value, via the small Gram matrix.
  double norm() const {
    if (coords.size() == 0) return 0.0;
    MatC gram = coords.adjoint() * coords;
    VecR w = detail::zheevd_values(std::move(gram));
    return std::sqrt(std::max(0.0, w[w.size() - 1]));
  }

  // Frobenius norm of the rows living in the codespace sector; P F(t) = 0
  // requires this to vanish.
  double codespace_rows_norm() const {
    double acc = 0.0;
    for (std::size_t s = 0; s < row_sector.size(); ++s)
      if (row_sector[s] == 0)
        acc += coords.middleRows(static_cast<Eigen::Index>(s) * de, de)
                   .squaredNorm();
    return std::sqrt(acc);
  }
};

// Per-element closed-form integration: in the H_0 eigenbasis the integrand's
// element (a,b) oscillates as e^{i (E_P + E_a - E_b) tau} <a|V|b>, so F(t)
// needs no numerical quadrature at all.  The single phase e^{i E_P tau} is
// exact because every coupling term is detected by the code: V P lands
// entirely in the weight-1 error sector.
class FComputer {
 public:
  double e_penalty = 0.0;
  Eigen::Index ds = 0, de = 1, n0 = 0;
  MatC v_cols;        // <row| V |codespace col>, (ds*de) x (n0*de)
  VecR row_energy, col_energy;
  std::vector<int> row_sector;

  FOperator at(double t) const {
    FOperator f;
    f.t = t;
    f.de = de;
    f.row_sector = row_sector;
    f.coords.resize(v_cols.rows(), v_cols.cols());
    for (Eigen::Index c = 0; c < v_cols.cols(); ++c)
      for (Eigen::Index r = 0; r < v_cols.rows(); ++r)
        f.coords(r, c) =
            v_cols(r, c) *
            detail::osc_integral(e_penalty + row_energy[r] - col_energy[c],
                                 t);
    return f;
  }
};

inline FComputer make_f_computer(const ModelInstance& inst,
                                 const std::vector<VTerm>& terms) {
  require(!inst.time_dependent(),
          "F computation: time-dependent schedules are not supported");
  FComputer fc;
  fc.e_penalty = inst.e_penalty;
  fc.ds = inst.reg.dim_system();
  fc.de = inst.reg.dim_env();

  SectorSpectral ss = diagonalize_by_sector(inst.h_comp_sys_at(0.0),
                                            inst.fam);
  SpectralForm env = diagonalize(inst.h_env_local);
  fc.row_sector = ss.sector;
  fc.n0 = static_cast<Eigen::Index>(ss.codespace_cols.size());

  fc.row_energy.resize(fc.ds * fc.de);
  for (Eigen::Index s = 0; s < fc.ds; ++s)
    for (Eigen::Index e = 0; e < fc.de; ++e)
      fc.row_energy[s * fc.de + e] = ss.eigenvalues[s] + env.eigenvalues[e];
  fc.col_energy.resize(fc.n0 * fc.de);
  for (Eigen::Index c = 0; c < fc.n0; ++c)
    for (Eigen::Index e = 0; e < fc.de; ++e)
      fc.col_energy[c * fc.de + e] =
          ss.eigenvalues[ss.codespace_cols[static_cast<std::size_t>(c)]] +
          env.eigenvalues[e];

  fc.v_cols = MatC::Zero(fc.ds * fc.de, fc.n0 * fc.de);
  const MatC env_id = MatC::Identity(fc.de, fc.de);
  for (const auto& term : terms) {
    MatC st = ss.eigenvectors.adjoint() * (term.sys_op * ss.eigenvectors);
    MatC et = term.has_env
                  ? MatC(env.eigenvectors.adjoint() *
                         (term.env_op * env.eigenvectors))
                  : env_id;
    for (Eigen::Index c = 0; c < fc.n0; ++c) {
      const Eigen::Index col =
          ss.codespace_cols[static_cast<std::size_t>(c)];
      for (Eigen::Index s = 0; s < fc.ds; ++s) {
        const cplx coef = st(s, col);
        if (std::abs(coef) < 1e-300) continue;
        fc.v_cols.block(s * fc.de, c * fc.de, fc.de, fc.de) += coef * et;
      }
    }
  }
  return fc;
}

inline FComputer make_f_computer(const ModelInstance& inst) {
  return make_f_computer(inst, inst.v_terms);
}

struct FNormSeries {
  std::vector<double> times;
  std::vector<double> norms;
  double max_codespace_residual = 0.0;
};

// ||F(t)|| on an even grid 0, T/grid, ..., T.  Every point also verifies
// P F(t) = 0 (the codespace rows vanish).
inline FNormSeries compute_F(const ModelInstance& inst, double t_final,
                             int grid_points) {
  require(t_final >= 0.0, "compute_F: negative final time");
  require(grid_points >= 1, "compute_F: need at least one grid step");
  FComputer fc = make_f_computer(inst);
  FNormSeries out;
  for (int i = 0; i <= grid_points; ++i) {
    const double t = t_final * static_cast<double>(i) /
                     static_cast<double>(grid_points);
    FOperator f = fc.at(t);
    const double resid = f.codespace_rows_norm();
    require_numeric(resid < 1e-10,
                    "compute_F: F(t) has support on the codespace, residual " +
                        std::to_string(resid));
    out.max_codespace_residual = std::max(out.max_codespace_residual, resid);
    out.times.push_back(t);
    out.norms.push_back(f.norm());
  }
  return out;
}

// Closed-form norm bound: integration by parts of the oscillatory integral
// gives ||F_i(t)|| <= (2 ||V_i|| + ||[V_i, H_0]|| t) / |E_P| per logical
// block, and the blocks' images lie in orthogonal error sectors, so
// ||F|| <= sqrt(n) max_i ||F_i||.
inline double bound_F(const ModelInstance& inst, double t_final) {
  require(!inst.time_dependent(),
          "bound_F: time-dependent schedules are not supported");
  require(inst.e_penalty != 0.0,
          "bound_F: a zero penalty gives no suppression bound");
  require(t_final >= 0.0, "bound_F: negative final time");
  const int n = inst.reg.n_logical;
  double worst = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto terms = inst.block_coupling_terms(i);
    const double v_norm = coupling_terms_norm(inst, terms);
    const double c_norm = coupling_terms_h0_commutator_norm(inst, terms, 0.0);
    worst = std::max(worst, 2.0 * v_norm + c_norm * t_final);
  }
  return std::sqrt(static_cast<double>(n)) * worst /
         std::abs(inst.e_penalty);
}

// Leading-order infidelity bound 1 - F^2 <= lambda^2 ||F||^2 + O(lambda^3).
inline double fidelity_bound(double lambda, double f_norm) {
  require(lambda >= 0.0 && f_norm >= 0.0,
          "fidelity_bound: arguments must be nonnegative");
  if (lambda > 0.3)
    std::cerr << "fidelity_bound: lambda = " << lambda
              << " is outside the leading-order regime; the bound is "
                 "unreliable\n";
  return lambda * lambda * f_norm * f_norm;
}

// ---------------------------------------------------------------------------
// Infinite-penalty convergence

struct TheoremLimitReport {
  double t = 0.0;
  std::vector<double> e_penalties;
  std::vector<double> norms;  // ||(U(T) - U_0(T)) P|| per penalty
  bool all_zero = false;
  bool monotone_decreasing = false;
  bool fit_valid = false;
  double fit_exponent = 0.0;  // slope of log norm vs log |E_P|
  double fit_r2 = 0.0;
  bool exponent_in_band = false;  // within [-1.2, -0.8]
};

// As |E_P| grows, the protected evolution restricted to the codespace
// converges to the penalty-free one.  This measures ||(U(T) - U_0(T)) P||
// across a penalty ladder and fits the decay exponent (expected near -1).
// U_0 factorizes over system and environment, so only U needs the full
// eigensolve.  Failed expectations are flagged in the report, not thrown:
// resonances can legitimately break monotonicity.
inline TheoremLimitReport theorem_limit_check(
    const ModelConfig& cfg, double t_final,
    const std::vector<double>& ep_list) {
  require(!ep_list.empty(), "theorem_limit_check: empty penalty list");
  require(!cfg.h_comp.time_dependent(),
          "theorem_limit_check: schedules are not supported");
  for (std::size_t i = 0; i < ep_list.size(); ++i) {
    require(ep_list[i] != 0.0, "theorem_limit_check: zero penalty entry");
    if (i > 0)
      require(std::abs(ep_list[i]) > std::abs(ep_list[i - 1]),
              "theorem_limit_check: penalties must ascend in magnitude");
  }

  TheoremLimitReport rep;
  rep.t = t_final;
  rep.e_penalties = ep_list;
  for (double ep : ep_list) {
    ModelConfig c = cfg;
    c.e_penalty = ep;
    ModelInstance inst = assemble(c);
    const Eigen::Index ds = inst.reg.dim_system();
    const Eigen::Index de = inst.reg.dim_env();

    SpectralForm sysf = diagonalize(
        HermitianOperator::from_sparse(inst.h_comp_sys_at(0.0), true));
    SpectralForm envf = diagonalize(inst.h_env_local);
    SpectralForm fullf = diagonalize(inst.hamiltonian(0.0));

    const MatC b = inst.fam.codespace_basis_sys();  // ds x n0
    const Eigen::Index n0 = b.cols();
    const MatC b_t = evolve_columns(sysf, b, t_final);
    const MatC env_prop =
        evolve_columns(envf, MatC::Identity(de, de), t_final);

    MatC u0c(ds * de, n0 * de);
    MatC c_cols = MatC::Zero(ds * de, n0 * de);
    for (Eigen::Index c2 = 0; c2 < n0; ++c2)
      for (Eigen::Index s = 0; s < ds; ++s) {
        u0c.block(s * de, c2 * de, de, de) = b_t(s, c2) * env_prop;
        if (b(s, c2) != cplx(0.0, 0.0))
          for (Eigen::Index e = 0; e < de; ++e)
            c_cols(s * de + e, c2 * de + e) = b(s, c2);
      }
    const MatC uc = evolve_columns(fullf, c_cols, t_final);

    MatC gram = (uc - u0c).adjoint() * (uc - u0c);
    VecR w = detail::zheevd_values(std::move(gram));
    rep.norms.push_back(std::sqrt(std::max(0.0, w[w.size() - 1])));
  }

  // Two independently computed unitaries agree to roughly eigensolver
  // precision at best; below this floor differences carry no signal.
  constexpr double floor = 1e-10;
  double max_norm = 0.0;
  for (double v : rep.norms) max_norm = std::max(max_norm, v);
  rep.all_zero = max_norm < floor;
  rep.monotone_decreasing = true;
  for (std::size_t i = 0; i + 1 < rep.norms.size(); ++i) {
    const bool both_floor = rep.norms[i] < floor && rep.norms[i + 1] < floor;
    if (!(rep.norms[i + 1] < rep.norms[i] || both_floor))
      rep.monotone_decreasing = false;
  }
  if (!rep.all_zero && rep.norms.size() >= 2) {
    bool positive = true;
    for (double v : rep.norms) positive = positive && v > 0.0;
    if (positive) {
      std::vector<double> lx, ly;
      for (std::size_t i = 0; i < rep.norms.size(); ++i) {
        lx.push_back(std::log(std::abs(rep.e_penalties[i])));
        ly.push_back(std::log(rep.norms[i]));
      }
      LinearFit f = fit_linear(lx, ly);
      rep.fit_valid = true;
      rep.fit_exponent = f.slope;
      rep.fit_r2 = f.r2;
      rep.exponent_in_band = f.slope >= -1.2 && f.slope <= -0.8;
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Three-level effective model of codespace leakage

// Two codespace levels at +-omega coupled through one penalized level at
// E_P with strengths lambda_+ and lambda_-.
struct ToyModelParams {
  double omega = 1.0;
  double lambda_plus = 0.0;
  double lambda_minus = 0.0;
  double e_penalty = 1.0;
};

struct ToyModelResult {
  double e_plus_perturbative = 0.0;   //  omega - lambda_+^2 / E_P
  double e_minus_perturbative = 0.0;  // -omega - lambda_-^2 / E_P
  double transition_ceiling = 0.0;    // (lambda_+ lambda_- / (omega E_P))^2
  double dephasing_rate = 0.0;        // (lambda_+^2 - lambda_-^2) / E_P
  Eigen::Vector3d exact_eigenvalues;  // ascending
  bool perturbative_valid = false;
};

inline Eigen::Matrix3d toy_hamiltonian(const ToyModelParams& p) {
  Eigen::Matrix3d h;
  h << p.omega, 0.0, p.lambda_plus,
       0.0, -p.omega, p.lambda_minus,
       p.lambda_plus, p.lambda_minus, p.e_penalty;
  return h;
}

inline ToyModelResult toy_model(const ToyModelParams& p) {
  require(p.e_penalty != 0.0, "toy model: the penalty must be nonzero");
  ToyModelResult r;
  r.e_plus_perturbative =
      p.omega - p.lambda_plus * p.lambda_plus / p.e_penalty;
  r.e_minus_perturbative =
      -p.omega - p.lambda_minus * p.lambda_minus / p.e_penalty;
  r.dephasing_rate =
      (p.lambda_plus * p.lambda_plus - p.lambda_minus * p.lambda_minus) /
      p.e_penalty;
  const double prod = p.lambda_plus * p.lambda_minus;
  if (prod == 0.0)
    r.transition_ceiling = 0.0;
  else if (p.omega == 0.0)
    r.transition_ceiling = std::numeric_limits<double>::infinity();
  else {
    const double amp = prod / (p.omega * p.e_penalty);
    r.transition_ceiling = amp * amp;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(toy_hamiltonian(p));
  require_numeric(es.info() == Eigen::Success,
                  "toy model: 3x3 eigensolve failed");
  r.exact_eigenvalues = es.eigenvalues();
  r.perturbative_valid =
      std::abs(p.e_penalty) >=
      10.0 * std::max({std::abs(p.omega), std::abs(p.lambda_plus),
                       std::abs(p.lambda_minus)});
  return r;
}

// Exact |<level -omega| e^{-i H t} |level +omega>|^2.
inline double toy_transition_probability(const ToyModelParams& p, double t) {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(toy_hamiltonian(p));
  require_numeric(es.info() == Eigen::Success,
                  "toy model: 3x3 eigensolve failed");
  const Eigen::Vector3d w = es.eigenvalues();
  const Eigen::Matrix3d v = es.eigenvectors();
  cplx amp(0.0, 0.0);
  for (int k = 0; k < 3; ++k)
    amp += std::polar(1.0, -w[k] * t) * v(1, k) * v(0, k);
  return std::norm(amp);
}

}  // namespace penaltyguard
