// Command-line driver: code verification, experiment plans, the
// protection-time sweep, the infinite-penalty convergence check, norm
// bounds, and the three-level leakage model.
//
// Exit codes: 0 success, 2 validation problem, 3 numerical contract
// violation, 4 I/O failure (or an unexpected internal error).

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "penaltyguard/analysis.hpp"
#include "penaltyguard/code.hpp"
#include "penaltyguard/harness.hpp"

namespace pg = penaltyguard;

namespace {

pg::MatC bare_pauli(pg::Pauli p) {
  pg::MatC m(2, 2);
  switch (p) {
    case pg::Pauli::X: m << 0, 1, 1, 0; break;
    case pg::Pauli::Y:
      m << pg::cplx(0, 0), pg::cplx(0, -1), pg::cplx(0, 1), pg::cplx(0, 0);
      break;
    case pg::Pauli::Z: m << 1, 0, 0, -1; break;
    default: m.setIdentity(); break;
  }
  return m;
}

void do_verify_code(const std::string& code_name) {
  const pg::CodeSpec code = pg::build_code(code_name);
  std::printf("code %s: %d physical qubits per logical, detects weight-%d "
              "errors\n",
              code_name.c_str(), code.ell, code.detect_weight);

  const pg::DetectionReport rep = pg::verify_detection(code, 1e-12);
  std::printf("detection: %zu error strings, max ||P sigma P|| = %.3e "
              "(worst %s)  %s\n",
              rep.entries.size(), rep.max_residual, rep.worst_string.c_str(),
              rep.passed ? "PASS" : "FAIL");

  double worst_action = 0.0;
  for (pg::Pauli p : {pg::Pauli::X, pg::Pauli::Y, pg::Pauli::Z}) {
    const pg::MatC table = pg::logical_action_table(code, p);
    const double resid = (table - bare_pauli(p)).cwiseAbs().maxCoeff();
    worst_action = std::max(worst_action, resid);
    std::printf("logical %c acts on the codespace as the bare Pauli to "
                "%.3e  %s\n",
                "IXYZ"[static_cast<int>(p)], resid,
                resid < 1e-12 ? "PASS" : "FAIL");
  }
  if (!rep.passed || worst_action >= 1e-12)
    throw pg::numeric_error("code verification failed");
}

pg::ExperimentPlan resolve_plan(const std::string& spec, double scale,
                                bool seed_given, std::uint64_t seed) {
  const auto& names = pg::named_plan_list();
  if (std::find(names.begin(), names.end(), spec) != names.end())
    return pg::make_named_plan(spec, scale, seed_given ? seed : 1);

  if (!std::filesystem::exists(spec)) {
    std::string known;
    for (const auto& n : names) known += " " + n;
    throw pg::config_error("plan '" + spec +
                           "' is neither a built-in name (" + known +
                           " ) nor an existing file");
  }
  pg::require(!seed_given,
              "--seed applies to built-in plans only; edit the plan file "
              "instead");
  pg::require(scale == 1.0,
              "--scale applies to built-in plans only; edit the plan file "
              "instead");
  return pg::load_plan(spec);
}

std::vector<pg::RunRecord> run_and_emit(const pg::ExperimentPlan& plan,
                                        const pg::RunOptions& opt,
                                        std::string out_dir) {
  if (out_dir.empty()) out_dir = "penaltyguard_out/" + plan.name;
  std::printf("plan %s  hash %s  grid %zu point(s)\n", plan.name.c_str(),
              pg::plan_hash(plan).c_str(), plan.grid.size());

  const std::vector<pg::RunRecord> records = pg::run_experiment(plan, opt);
  pg::emit_csv(records, out_dir);
  pg::save_plan(plan, out_dir + "/plan.json");

  std::size_t failures = 0;
  for (const auto& r : records) {
    if (r.ok) {
      const auto& last = r.series.back();
      std::printf("  ep %-8g lambda %-8g seed %-6llu F2 %.6f Fs2 %.6f "
                  "Pcode %.6f",
                  r.point.e_penalty, r.point.lambda,
                  static_cast<unsigned long long>(r.point.seed),
                  last.total_sq, last.system_sq, last.codespace_prob);
      if (!std::isnan(r.t_prot)) std::printf(" t_prot %.6g", r.t_prot);
      if (!std::isnan(r.longterm_fs_sq))
        std::printf(" longterm %.6f (predicted %.6f)", r.longterm_fs_sq,
                    r.longterm_predicted);
      std::printf("  [%.1fs]\n", r.wall_seconds);
    } else {
      ++failures;
      std::printf("  ep %-8g lambda %-8g seed %-6llu FAILED: %s\n",
                  r.point.e_penalty, r.point.lambda,
                  static_cast<unsigned long long>(r.point.seed),
                  r.error.c_str());
    }
  }
  std::printf("artifacts written to %s (%zu of %zu points succeeded)\n",
              out_dir.c_str(), records.size() - failures, records.size());
  return records;
}

void do_sweep(const pg::ExperimentPlan& plan, const pg::RunOptions& opt,
              const std::string& out_dir) {
  pg::require(plan.has_output("t_prot"),
              "sweep: the plan must request the t_prot diagnostic (the "
              "built-in fig3 plan does)");
  const std::string dir =
      out_dir.empty() ? "penaltyguard_out/" + plan.name : out_dir;
  const std::vector<pg::RunRecord> records = run_and_emit(plan, opt, dir);
  const pg::FitReport rep = pg::fit_report(records);

  std::ofstream fit(dir + "/fit.csv", std::ios::binary);
  if (!fit) throw pg::io_error("cannot open '" + dir + "/fit.csv'");
  fit << "e_over_lambda_sq,t_prot,residual,plan_hash\n";
  for (std::size_t i = 0; i < rep.x.size(); ++i) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,", rep.x[i], rep.y[i],
                  rep.residuals[i]);
    fit << buf << records.front().plan_hash << "\n";
  }
  fit.flush();
  if (!fit) throw pg::io_error("write to '" + dir + "/fit.csv' failed");

  std::printf("protection-time fit (through origin): t_prot = %.6g * "
              "E_P/lambda^2, R^2 = %.4f over %zu points%s\n",
              rep.slope, rep.r2, rep.n_points,
              rep.non_scaling ? "  [flagged: non-scaling]" : "");
}

void do_theorem_limit(double t, const std::vector<double>& eps,
                      std::uint64_t seed, double lambda, int n_env) {
  pg::ModelConfig cfg;
  cfg.n_logical = 1;
  cfg.n_env = n_env;
  cfg.seed = seed;
  cfg.lambda = lambda;
  cfg.h_comp =
      pg::Schedule::constant({pg::PauliString::single(0, pg::Pauli::X)});
  cfg.initial_system_state.kind =
      pg::InitialSystemState::Kind::random_codespace;

  const pg::TheoremLimitReport rep = pg::theorem_limit_check(cfg, t, eps);
  std::printf("||(U(T) - U_0(T)) P|| at T = %g, seed %llu, lambda %g:\n", t,
              static_cast<unsigned long long>(seed), lambda);
  for (std::size_t i = 0; i < rep.norms.size(); ++i)
    std::printf("  E_P %-10g  %.6e\n", rep.e_penalties[i], rep.norms[i]);
  std::printf("monotone decreasing: %s\n",
              rep.monotone_decreasing ? "yes" : "no");
  if (rep.fit_valid)
    std::printf("decay exponent %.4f (R^2 = %.4f), %s the [-1.2, -0.8] "
                "band\n",
                rep.fit_exponent, rep.fit_r2,
                rep.exponent_in_band ? "inside" : "OUTSIDE");
  else
    std::printf("decay fit unavailable (norms at the noise floor)\n");
}

void do_bounds(const std::string& config_path, double t, int grid) {
  std::ifstream in(config_path, std::ios::binary);
  if (!in)
    throw pg::io_error("cannot open config file '" + config_path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  pg::ModelConfig cfg;
  try {
    cfg = pg::config_from_json(nlohmann::json::parse(buf.str()));
  } catch (const nlohmann::json::exception& e) {
    throw pg::config_error("config file '" + config_path +
                           "' is not valid JSON: " + e.what());
  }
  pg::validate_config(cfg);
  const pg::ModelInstance inst = pg::assemble(cfg);

  std::printf("instance %s: ||V|| = %.4f, ||[V, H_0]|| = %.4f\n",
              inst.config_hash.c_str(), pg::coupling_norm(inst),
              pg::coupling_h0_commutator_norm(inst));
  const pg::FNormSeries series = pg::compute_F(inst, t, grid);
  std::printf("%-12s %-14s %-14s %s\n", "t", "||F(t)||", "bound",
              "lambda^2 bound on 1 - F^2");
  for (std::size_t i = 0; i < series.times.size(); ++i) {
    const double bound = pg::bound_F(inst, series.times[i]);
    std::printf("%-12g %-14.6f %-14.6f %.6e\n", series.times[i],
                series.norms[i], bound,
                pg::fidelity_bound(inst.lambda, series.norms[i]));
  }
}

void do_toy_model(double omega, double lp, double lm, double ep,
                  int n_times, double t_max) {
  pg::ToyModelParams p;
  p.omega = omega;
  p.lambda_plus = lp;
  p.lambda_minus = lm;
  p.e_penalty = ep;
  const pg::ToyModelResult r = pg::toy_model(p);

  std::printf("exact eigenvalues: %.10f, %.10f, %.10f\n",
              r.exact_eigenvalues[0], r.exact_eigenvalues[1],
              r.exact_eigenvalues[2]);
  auto nearest = [&](double target) {
    double best = r.exact_eigenvalues[0];
    for (int k = 1; k < 3; ++k)
      if (std::abs(r.exact_eigenvalues[k] - target) <
          std::abs(best - target))
        best = r.exact_eigenvalues[k];
    return best;
  };
  const double e_plus_exact = nearest(r.e_plus_perturbative);
  const double e_minus_exact = nearest(r.e_minus_perturbative);
  std::printf("E_+ perturbative %.10f vs exact %.10f (|diff| %.3e)\n",
              r.e_plus_perturbative, e_plus_exact,
              std::abs(r.e_plus_perturbative - e_plus_exact));
  std::printf("E_- perturbative %.10f vs exact %.10f (|diff| %.3e)\n",
              r.e_minus_perturbative, e_minus_exact,
              std::abs(r.e_minus_perturbative - e_minus_exact));
  std::printf("dephasing rate (lambda_+^2 - lambda_-^2)/E_P = %.6e\n",
              r.dephasing_rate);
  if (!r.perturbative_valid)
    std::printf("note: |E_P| is not large against the other scales; the "
                "perturbative numbers are unreliable\n");

  double max_p = 0.0, arg_max = 0.0;
  for (int i = 1; i <= n_times; ++i) {
    const double t = t_max * static_cast<double>(i) /
                     static_cast<double>(n_times);
    const double v = pg::toy_transition_probability(p, t);
    if (v > max_p) {
      max_p = v;
      arg_max = t;
    }
  }
  std::printf("transition probability: ceiling %.6e, max over %d sampled "
              "times %.6e (at t = %g)\n",
              r.transition_ceiling, n_times, max_p, arg_max);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"penaltyguard: simulation and analysis of energy-penalty "
               "error suppression"};
  app.set_version_flag("--version",
                       std::string("penaltyguard ") + pg::kToolVersion);
  app.require_subcommand(1);

  // verify-code
  std::string code_name = "jfs4";
  auto* vc = app.add_subcommand(
      "verify-code", "Check error detection and logical operator action");
  vc->add_option("--code", code_name, "code name")->capture_default_str();
  vc->callback([&]() { do_verify_code(code_name); });

  // Options shared by run and sweep.
  std::string plan_spec, out_dir;
  double scale = 1.0;
  std::uint64_t seed = 1;
  bool seed_given = false;
  pg::RunOptions ropt;

  auto add_run_options = [&](CLI::App* cmd) {
    cmd->add_option("--plan", plan_spec,
                    "built-in plan name or plan file path")
        ->required();
    cmd->add_option("--scale", scale,
                    "shrink grids and horizons of built-in plans (0, 1]")
        ->capture_default_str();
    cmd->add_option("--seed", seed, "master seed for built-in plans")
        ->each([&](const std::string&) { seed_given = true; });
    cmd->add_option("--out", out_dir,
                    "output directory (default penaltyguard_out/<plan>)");
    cmd->add_option("--workers", ropt.workers,
                    "worker threads (0 = automatic)")
        ->capture_default_str();
    cmd->add_option("--mem-gb", ropt.memory_budget_gb,
                    "memory budget bounding automatic worker count")
        ->capture_default_str();
  };

  auto* run = app.add_subcommand(
      "run", "Run an experiment plan and emit CSV artifacts");
  add_run_options(run);
  run->callback([&]() {
    run_and_emit(resolve_plan(plan_spec, scale, seed_given, seed), ropt,
                 out_dir);
  });

  auto* sweep = app.add_subcommand(
      "sweep", "Run a protection-time sweep and fit the scaling law");
  add_run_options(sweep);
  sweep->callback([&]() {
    do_sweep(resolve_plan(plan_spec, scale, seed_given, seed), ropt,
             out_dir);
  });

  // theorem-limit
  double tl_t = 10.0, tl_lambda = 0.1;
  int tl_n_env = 8;
  std::uint64_t tl_seed = 1;
  std::vector<double> tl_eps;
  auto* tl = app.add_subcommand(
      "theorem-limit",
      "Measure ||(U(T) - U_0(T)) P|| across a penalty ladder");
  tl->add_option("--t", tl_t, "final time T")->capture_default_str();
  tl->add_option("--ep-list", tl_eps,
                 "comma-separated penalties, ascending magnitude")
      ->required()
      ->delimiter(',');
  tl->add_option("--seed", tl_seed, "instance seed")->capture_default_str();
  tl->add_option("--lambda", tl_lambda, "coupling strength")
      ->capture_default_str();
  tl->add_option("--n-env", tl_n_env, "environment qubits")
      ->capture_default_str();
  tl->callback(
      [&]() { do_theorem_limit(tl_t, tl_eps, tl_seed, tl_lambda, tl_n_env); });

  // bounds
  std::string bounds_config;
  double bounds_t = 5.0;
  int bounds_grid = 10;
  auto* bd = app.add_subcommand(
      "bounds", "Compare measured ||F(t)|| with the closed-form bound");
  bd->add_option("--config", bounds_config, "model config JSON file")
      ->required();
  bd->add_option("--t", bounds_t, "final time")->capture_default_str();
  bd->add_option("--grid", bounds_grid, "number of grid steps")
      ->capture_default_str();
  bd->callback([&]() { do_bounds(bounds_config, bounds_t, bounds_grid); });

  // toy-model
  double tm_omega = 1.0, tm_lp = 0.1, tm_lm = 0.1, tm_ep = 50.0,
         tm_tmax = 1000.0;
  int tm_times = 100;
  auto* tm = app.add_subcommand(
      "toy-model", "Three-level leakage model: energies and transition "
                   "ceiling");
  tm->add_option("--omega", tm_omega, "codespace level splitting")
      ->capture_default_str();
  tm->add_option("--lp", tm_lp, "coupling of the + level")
      ->capture_default_str();
  tm->add_option("--lm", tm_lm, "coupling of the - level")
      ->capture_default_str();
  tm->add_option("--ep", tm_ep, "penalty level energy")
      ->capture_default_str();
  tm->add_option("--times", tm_times, "number of sampled times")
      ->capture_default_str();
  tm->add_option("--t-max", tm_tmax, "largest sampled time")
      ->capture_default_str();
  tm->callback([&]() {
    do_toy_model(tm_omega, tm_lp, tm_lm, tm_ep, tm_times, tm_tmax);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const pg::config_error& e) {
    std::cerr << "error (validation): " << e.what() << "\n";
    return 2;
  } catch (const pg::numeric_error& e) {
    std::cerr << "error (numerical contract): " << e.what() << "\n";
    return 3;
  } catch (const pg::io_error& e) {
    std::cerr << "error (I/O): " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
