#pragma once

// Experiment orchestration: declarative plans over (penalty, coupling, seed)
// grids, a deterministic runner with per-point failure isolation, CSV / JSON
// artifact emission, and the protection-time scaling fit.
//
// A plan is hash-stable: its canonical JSON serialization fingerprints every
// physics-relevant field, and every artifact written by the runner carries
// that hash so a mismatched re-analysis is detectable.  Re-running the same
// plan with the same build reproduces every physics number bit-for-bit; only
// wall-clock bookkeeping differs.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "penaltyguard/analysis.hpp"
#include "penaltyguard/model.hpp"
#include "penaltyguard/propagate.hpp"

namespace penaltyguard {

inline constexpr const char* kToolVersion = "1.0.0";

// ---------------------------------------------------------------------------
// Plans

// One grid point: the fields of the base configuration that a sweep varies.
struct GridPoint {
  double e_penalty = 0.0;
  double lambda = 0.0;
  std::uint64_t seed = 0;
};

// Diagnostics a plan can request on top of the fidelity series.
//   "series"   fidelity measures on the output time grid (always computed)
//   "t_prot"   first sustained crossing of F_s^2 below 0.9
//   "longterm" mean F_s^2 over `longterm_times` plus the dephasing prediction
struct ExperimentPlan {
  std::string name;
  ModelConfig base_config;
  std::vector<GridPoint> grid;
  std::vector<double> time_grid;
  std::vector<std::string> outputs;
  std::vector<double> longterm_times;  // used only when "longterm" requested

  bool has_output(const std::string& key) const {
    return std::find(outputs.begin(), outputs.end(), key) != outputs.end();
  }
};

inline ModelConfig resolved_config(const ExperimentPlan& plan,
                                   const GridPoint& pt) {
  ModelConfig cfg = plan.base_config;
  cfg.e_penalty = pt.e_penalty;
  cfg.lambda = pt.lambda;
  cfg.seed = pt.seed;
  return cfg;
}

inline void validate_plan(const ExperimentPlan& plan) {
  require(!plan.name.empty(), "plan: name must be non-empty");
  require(!plan.grid.empty(), "plan: grid must be non-empty");
  require(!plan.time_grid.empty(), "plan: time grid must be non-empty");
  require(plan.time_grid.front() >= 0.0,
          "plan: time grid must start at a nonnegative time");
  for (std::size_t i = 0; i < plan.time_grid.size(); ++i) {
    require(std::isfinite(plan.time_grid[i]),
            "plan: time grid entries must be finite");
    if (i > 0)
      require(plan.time_grid[i] > plan.time_grid[i - 1],
              "plan: time grid must be strictly increasing");
  }
  require(!plan.outputs.empty(), "plan: outputs must list at least one "
                                 "diagnostic");
  for (std::size_t i = 0; i < plan.outputs.size(); ++i) {
    const std::string& o = plan.outputs[i];
    require(o == "series" || o == "t_prot" || o == "longterm",
            "plan: unknown output '" + o +
                "' (expected series, t_prot or longterm)");
    for (std::size_t j = 0; j < i; ++j)
      require(plan.outputs[j] != o, "plan: duplicate output '" + o + "'");
  }
  if (plan.has_output("longterm")) {
    require(!plan.longterm_times.empty(),
            "plan: the longterm diagnostic needs longterm_times");
    for (std::size_t i = 0; i < plan.longterm_times.size(); ++i) {
      require(std::isfinite(plan.longterm_times[i]) &&
                  plan.longterm_times[i] > 0.0,
              "plan: longterm_times must be positive and finite");
      if (i > 0)
        require(plan.longterm_times[i] > plan.longterm_times[i - 1],
                "plan: longterm_times must be strictly increasing");
    }
  } else {
    require(plan.longterm_times.empty(),
            "plan: longterm_times given without the longterm output");
  }
  if (plan.base_config.h_comp.time_dependent()) {
    require(!plan.has_output("t_prot") && !plan.has_output("longterm"),
            "plan: t_prot and longterm diagnostics need a time-independent "
            "generator");
    require(plan.time_grid.back() <=
                plan.base_config.h_comp.total_time * (1.0 + 1e-12),
            "plan: time grid exceeds the schedule duration");
  }
  // Every resolved configuration must be valid before any compute starts.
  for (const auto& pt : plan.grid) validate_config(resolved_config(plan, pt));
}

// ---------------------------------------------------------------------------
// Plan serialization (canonical JSON; also the basis of the plan hash)

namespace detail {

inline void check_keys(const nlohmann::json& j,
                       std::initializer_list<const char*> allowed,
                       const std::string& what) {
  require(j.is_object(), what + ": expected a JSON object");
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* k : allowed) known = known || item.key() == k;
    require(known, what + ": unknown key '" + item.key() + "'");
  }
  for (const char* k : allowed)
    require(j.contains(k), what + ": missing key '" + std::string(k) + "'");
}

inline char pauli_letter(Pauli p) {
  switch (p) {
    case Pauli::I: return 'I';
    case Pauli::X: return 'X';
    case Pauli::Y: return 'Y';
    case Pauli::Z: return 'Z';
  }
  throw config_error("pauli letter: invalid enum value");
}

inline Pauli pauli_from_letter(const std::string& s) {
  require(s.size() == 1, "pauli letter: expected one of I, X, Y, Z");
  switch (s[0]) {
    case 'I': return Pauli::I;
    case 'X': return Pauli::X;
    case 'Y': return Pauli::Y;
    case 'Z': return Pauli::Z;
  }
  throw config_error("pauli letter: expected one of I, X, Y, Z, got '" + s +
                     "'");
}

inline nlohmann::json pauli_sum_to_json(const PauliSum& sum) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& s : sum) {
    nlohmann::json js;
    js["coeff"] = {s.coefficient.real(), s.coefficient.imag()};
    nlohmann::json factors = nlohmann::json::array();
    for (const auto& [q, p] : s.factors)
      factors.push_back({q, std::string(1, pauli_letter(p))});
    js["factors"] = factors;
    arr.push_back(js);
  }
  return arr;
}

inline PauliSum pauli_sum_from_json(const nlohmann::json& j) {
  require(j.is_array(), "h_comp endpoint: expected an array of Pauli terms");
  PauliSum sum;
  for (const auto& js : j) {
    check_keys(js, {"coeff", "factors"}, "pauli term");
    const auto& c = js.at("coeff");
    require(c.is_array() && c.size() == 2,
            "pauli term: coeff must be [re, im]");
    PauliString s = PauliString::identity(
        cplx(c.at(0).get<double>(), c.at(1).get<double>()));
    for (const auto& f : js.at("factors")) {
      require(f.is_array() && f.size() == 2,
              "pauli term: each factor must be [qubit, letter]");
      s = s.with(f.at(0).get<int>(),
                 pauli_from_letter(f.at(1).get<std::string>()));
    }
    sum.push_back(std::move(s));
  }
  return sum;
}

}  // namespace detail

inline nlohmann::json config_to_json(const ModelConfig& cfg) {
  nlohmann::json j;
  j["n_logical"] = cfg.n_logical;
  j["code"] = cfg.code;
  j["n_env"] = cfg.n_env;
  j["seed"] = cfg.seed;
  j["lambda"] = cfg.lambda;
  j["e_penalty"] = cfg.e_penalty;
  nlohmann::json sched;
  sched["kind"] = cfg.h_comp.kind == Schedule::Kind::constant ? "constant"
                                                              : "linear";
  nlohmann::json eps = nlohmann::json::array();
  for (const auto& ep : cfg.h_comp.endpoints)
    eps.push_back(detail::pauli_sum_to_json(ep));
  sched["endpoints"] = eps;
  sched["total_time"] = cfg.h_comp.total_time;
  j["h_comp"] = sched;
  nlohmann::json init;
  switch (cfg.initial_system_state.kind) {
    case InitialSystemState::Kind::zero_L: init["kind"] = "zero_logical"; break;
    case InitialSystemState::Kind::plus_L: init["kind"] = "plus_logical"; break;
    case InitialSystemState::Kind::random_codespace:
      init["kind"] = "random_codespace";
      break;
    case InitialSystemState::Kind::logical_coeffs:
      init["kind"] = "logical_coeffs";
      break;
  }
  nlohmann::json coeffs = nlohmann::json::array();
  for (Eigen::Index k = 0; k < cfg.initial_system_state.coeffs.size(); ++k)
    coeffs.push_back({cfg.initial_system_state.coeffs[k].real(),
                      cfg.initial_system_state.coeffs[k].imag()});
  init["coeffs"] = coeffs;
  j["initial_system_state"] = init;
  j["initial_env_state"] = cfg.initial_env_state;
  return j;
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
  detail::check_keys(j,
                     {"n_logical", "code", "n_env", "seed", "lambda",
                      "e_penalty", "h_comp", "initial_system_state",
                      "initial_env_state"},
                     "model config");
  ModelConfig cfg;
  cfg.n_logical = j.at("n_logical").get<int>();
  cfg.code = j.at("code").get<std::string>();
  cfg.n_env = j.at("n_env").get<int>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  cfg.lambda = j.at("lambda").get<double>();
  cfg.e_penalty = j.at("e_penalty").get<double>();

  const auto& sched = j.at("h_comp");
  detail::check_keys(sched, {"kind", "endpoints", "total_time"}, "h_comp");
  const std::string kind = sched.at("kind").get<std::string>();
  const auto& eps = sched.at("endpoints");
  require(eps.is_array(), "h_comp: endpoints must be an array");
  if (kind == "constant") {
    require(eps.size() == 1, "h_comp: constant kind needs one endpoint");
    cfg.h_comp = Schedule::constant(detail::pauli_sum_from_json(eps.at(0)));
  } else if (kind == "linear") {
    require(eps.size() == 2, "h_comp: linear kind needs two endpoints");
    cfg.h_comp = Schedule::linear(detail::pauli_sum_from_json(eps.at(0)),
                                  detail::pauli_sum_from_json(eps.at(1)),
                                  sched.at("total_time").get<double>());
  } else {
    throw config_error("h_comp: unknown kind '" + kind +
                       "' (expected constant or linear)");
  }

  const auto& init = j.at("initial_system_state");
  detail::check_keys(init, {"kind", "coeffs"}, "initial_system_state");
  const std::string ik = init.at("kind").get<std::string>();
  if (ik == "zero_logical")
    cfg.initial_system_state.kind = InitialSystemState::Kind::zero_L;
  else if (ik == "plus_logical")
    cfg.initial_system_state.kind = InitialSystemState::Kind::plus_L;
  else if (ik == "random_codespace")
    cfg.initial_system_state.kind = InitialSystemState::Kind::random_codespace;
  else if (ik == "logical_coeffs")
    cfg.initial_system_state.kind = InitialSystemState::Kind::logical_coeffs;
  else
    throw config_error("initial_system_state: unknown kind '" + ik + "'");
  const auto& coeffs = init.at("coeffs");
  require(coeffs.is_array(), "initial_system_state: coeffs must be an array");
  cfg.initial_system_state.coeffs.resize(
      static_cast<Eigen::Index>(coeffs.size()));
  for (std::size_t k = 0; k < coeffs.size(); ++k) {
    const auto& c = coeffs.at(k);
    require(c.is_array() && c.size() == 2,
            "initial_system_state: each coefficient must be [re, im]");
    cfg.initial_system_state.coeffs[static_cast<Eigen::Index>(k)] =
        cplx(c.at(0).get<double>(), c.at(1).get<double>());
  }
  cfg.initial_env_state = j.at("initial_env_state").get<std::string>();
  return cfg;
}

inline nlohmann::json plan_to_json(const ExperimentPlan& plan) {
  nlohmann::json j;
  j["name"] = plan.name;
  j["base_config"] = config_to_json(plan.base_config);
  nlohmann::json grid = nlohmann::json::array();
  for (const auto& pt : plan.grid) {
    nlohmann::json jp;
    jp["e_penalty"] = pt.e_penalty;
    jp["lambda"] = pt.lambda;
    jp["seed"] = pt.seed;
    grid.push_back(jp);
  }
  j["grid"] = grid;
  j["time_grid"] = plan.time_grid;
  j["outputs"] = plan.outputs;
  j["longterm_times"] = plan.longterm_times;
  return j;
}

inline ExperimentPlan plan_from_json(const nlohmann::json& j) {
  detail::check_keys(j,
                     {"name", "base_config", "grid", "time_grid", "outputs",
                      "longterm_times"},
                     "plan");
  ExperimentPlan plan;
  plan.name = j.at("name").get<std::string>();
  plan.base_config = config_from_json(j.at("base_config"));
  const auto& grid = j.at("grid");
  require(grid.is_array(), "plan: grid must be an array");
  for (const auto& jp : grid) {
    detail::check_keys(jp, {"e_penalty", "lambda", "seed"}, "grid point");
    GridPoint pt;
    pt.e_penalty = jp.at("e_penalty").get<double>();
    pt.lambda = jp.at("lambda").get<double>();
    pt.seed = jp.at("seed").get<std::uint64_t>();
    plan.grid.push_back(pt);
  }
  plan.time_grid = j.at("time_grid").get<std::vector<double>>();
  plan.outputs = j.at("outputs").get<std::vector<std::string>>();
  plan.longterm_times = j.at("longterm_times").get<std::vector<double>>();
  validate_plan(plan);
  return plan;
}

// Canonical serialization (sorted keys, round-trip-exact numbers) hashed
// with FNV-1a.  Identical plans hash identically across processes; any
// physics-relevant change to the plan changes the hash.
inline std::string plan_hash(const ExperimentPlan& plan) {
  return hex64(fnv1a64(plan_to_json(plan).dump()));
}

inline ExperimentPlan load_plan(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open plan file '" + path + "' for reading");
  std::ostringstream buf;
  buf << in.rdbuf();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(buf.str());
  } catch (const nlohmann::json::exception& e) {
    throw config_error("plan file '" + path + "' is not valid JSON: " +
                       e.what());
  }
  try {
    return plan_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw config_error("plan file '" + path + "' is malformed: " + e.what());
  }
}

inline void save_plan(const ExperimentPlan& plan, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot open '" + path + "' for writing");
  out << plan_to_json(plan).dump(2) << "\n";
  out.flush();
  if (!out) throw io_error("write to '" + path + "' failed");
}

// ---------------------------------------------------------------------------
// Records and the runner

struct RunRecord {
  std::string plan_name;
  std::string plan_hash;
  GridPoint point;
  std::string config_hash;  // instance fingerprint (empty if assembly failed)
  std::string settings;     // propagation method actually used
  bool ok = false;
  std::string error;

  std::vector<FidelityPoint> series;

  // Derived scalars; NaN when not requested or not applicable.
  double t_prot = std::numeric_limits<double>::quiet_NaN();
  bool t_prot_crossed = false;
  double longterm_fs_sq = std::numeric_limits<double>::quiet_NaN();
  double longterm_predicted = std::numeric_limits<double>::quiet_NaN();

  double wall_seconds = 0.0;  // bookkeeping only, excluded from determinism
  std::string tool_version = kToolVersion;
};

struct RunOptions {
  int workers = 0;              // 0 = automatic
  double memory_budget_gb = 4.0;
  PropagatorSettings propagator;  // used for time-dependent plans
};

// Worker resolution: the PENALTYGUARD_WORKERS environment variable wins
// outright; otherwise the explicit option, otherwise hardware concurrency
// capped by the memory budget (one full dense eigensolve costs about 1 GB
// at the default register size).
inline int resolve_workers(const RunOptions& opt, std::size_t grid_size) {
  long n = 0;
  if (const char* env = std::getenv("PENALTYGUARD_WORKERS")) {
    char* end = nullptr;
    n = std::strtol(env, &end, 10);
    require(end != env && *end == '\0' && n >= 1,
            "PENALTYGUARD_WORKERS must be a positive integer, got '" +
                std::string(env) + "'");
  } else if (opt.workers > 0) {
    n = opt.workers;
  } else {
    n = static_cast<long>(std::max(1u, std::thread::hardware_concurrency()));
    const double per_worker_gb = 1.0;
    const long mem_cap = static_cast<long>(
        std::max(1.0, std::floor(opt.memory_budget_gb / per_worker_gb)));
    n = std::min(n, mem_cap);
  }
  return static_cast<int>(
      std::min<long>(n, static_cast<long>(std::max<std::size_t>(1, grid_size))));
}

namespace detail {

// Long-time dephasing prediction for an arbitrary initial system state:
// populations of distinct generator eigenvalues survive, coherences between
// them average out, so the long-term F_s^2 is the sum of squared level
// populations (|alpha|^4 + |beta|^4 for a two-level codespace).
inline double dephasing_prediction(const SpectralForm& sys_form,
                                   const VecC& psi_s) {
  require(psi_s.size() == sys_form.dim(),
          "dephasing prediction: dimension mismatch");
  const VecC ov = sys_form.eigenvectors.adjoint() * psi_s;
  const double scale =
      std::max(1.0, sys_form.eigenvalues.cwiseAbs().maxCoeff());
  const double tol = 1e-8 * scale;
  double pred = 0.0, mass = 0.0;
  double e_anchor = 0.0;
  bool open = false;
  for (Eigen::Index i = 0; i < ov.size(); ++i) {
    const double e = sys_form.eigenvalues[i];
    if (open && std::abs(e - e_anchor) > tol) {
      pred += mass * mass;
      mass = 0.0;
    }
    mass += std::norm(ov[i]);
    e_anchor = e;
    open = true;
  }
  pred += mass * mass;
  return pred;
}

// Protection-time scan ceiling: the crossing scales like E_P / lambda^2, so
// the geometric scan must be allowed to reach well past it.
inline double protection_scan_t_max(const GridPoint& pt) {
  if (pt.lambda <= 0.0) return 1e9;
  const double est =
      1e4 * std::max(1.0, std::abs(pt.e_penalty)) / (pt.lambda * pt.lambda);
  return std::clamp(est, 1e6, 1e15);
}

inline void run_point(const ExperimentPlan& plan, const GridPoint& pt,
                      const RunOptions& opt, RunRecord& rec) {
  const auto t_start = std::chrono::steady_clock::now();
  try {
    ModelConfig cfg = resolved_config(plan, pt);
    ModelInstance inst = assemble(cfg);
    rec.config_hash = inst.config_hash;

    if (!inst.time_dependent()) {
      rec.settings = "method=spectral";
      AnalysisContext ctx = make_analysis_context(std::move(inst), true);
      StateEvolution ev(ctx, ctx.inst.init_system, ctx.inst.init_env);
      for (double t : plan.time_grid) rec.series.push_back(ev.at(t));
      if (plan.has_output("t_prot")) {
        ProtectionTime p =
            protection_time(ctx, 0.9, protection_scan_t_max(pt));
        rec.t_prot = p.t;
        rec.t_prot_crossed = p.crossed;
      }
      if (plan.has_output("longterm")) {
        double acc = 0.0;
        for (double t : plan.longterm_times) acc += ev.at(t).system_sq;
        rec.longterm_fs_sq =
            acc / static_cast<double>(plan.longterm_times.size());
        rec.longterm_predicted = dephasing_prediction(
            ctx.sys_form, ctx.inst.init_system.amplitudes);
      }
    } else {
      PropagatorSettings st = opt.propagator;
      st.method = PropagatorSettings::Method::stepped;
      rec.settings = "method=stepped;dt_max=" + std::to_string(st.dt_max);
      PairTrajectory tr = evolve_pair(inst, inst.init_system, inst.init_env,
                                      plan.time_grid, st);
      for (std::size_t i = 0; i < tr.times.size(); ++i) {
        FidelityPoint fp;
        fp.t = tr.times[i];
        fp.total_sq = total_fidelity_sq(StateVector{tr.phi0[i]},
                                        StateVector{tr.phi[i]});
        const MatC rho =
            partial_trace_env(StateVector{tr.phi[i]}, inst.reg);
        fp.system_sq =
            system_fidelity_sq(StateVector{tr.phi0_sys[i]}, rho);
        fp.codespace_prob =
            codespace_probability(StateVector{tr.phi[i]}, inst.fam);
        rec.series.push_back(fp);
      }
    }
    rec.ok = true;
  } catch (const std::exception& e) {
    rec.ok = false;
    rec.error = e.what();
    rec.series.clear();
  }
  rec.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                    t_start)
          .count();
}

}  // namespace detail

// Runs every grid point, isolating per-point failures into their records.
// Validation problems in the plan itself abort before any compute.
inline std::vector<RunRecord> run_experiment(const ExperimentPlan& plan,
                                             const RunOptions& opt = {}) {
  validate_plan(plan);
  const std::string hash = plan_hash(plan);
  std::vector<RunRecord> records(plan.grid.size());
  for (std::size_t i = 0; i < plan.grid.size(); ++i) {
    records[i].plan_name = plan.name;
    records[i].plan_hash = hash;
    records[i].point = plan.grid[i];
  }

  const int workers = resolve_workers(opt, plan.grid.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < plan.grid.size(); ++i)
      detail::run_point(plan, plan.grid[i], opt, records[i]);
    return records;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&]() {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= plan.grid.size()) return;
        detail::run_point(plan, plan.grid[i], opt, records[i]);
      }
    });
  for (auto& th : pool) th.join();
  return records;
}

// ---------------------------------------------------------------------------
// CSV emission

namespace detail {

// Full-precision decimal: 17 significant digits round-trip any double
// exactly through strtod.
inline std::string g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return std::string(buf);
}

inline std::string gshort(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return std::string(buf);
}

inline std::ofstream open_for_write(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot open '" + path + "' for writing");
  return out;
}

inline void finish_write(std::ofstream& out, const std::string& path) {
  out.flush();
  if (!out) throw io_error("write to '" + path + "' failed");
}

}  // namespace detail

inline constexpr const char* kSeriesHeader =
    "t,f_total_sq,f_system_sq,p_codespace,plan_hash";

// Time series of one record.  Layout: header plus one row per time point;
// a record with 3 time points gives a 4-line file.  The trailing column
// repeats the plan hash so every artifact is self-identifying.
inline void emit_series_csv(const RunRecord& rec, const std::string& path) {
  std::ofstream out = detail::open_for_write(path);
  out << kSeriesHeader << "\n";
  for (const auto& p : rec.series)
    out << detail::g17(p.t) << ',' << detail::g17(p.total_sq) << ','
        << detail::g17(p.system_sq) << ',' << detail::g17(p.codespace_prob)
        << ',' << rec.plan_hash << "\n";
  detail::finish_write(out, path);
}

struct SeriesFile {
  std::string plan_hash;
  std::vector<FidelityPoint> points;
};

inline SeriesFile parse_series_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open '" + path + "' for reading");
  std::string line;
  require(static_cast<bool>(std::getline(in, line)),
          "series csv '" + path + "': empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  require(line == kSeriesHeader,
          "series csv '" + path + "': unexpected header '" + line + "'");
  SeriesFile sf;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    require(cells.size() == 5,
            "series csv '" + path + "': malformed row '" + line + "'");
    FidelityPoint p;
    p.t = std::strtod(cells[0].c_str(), nullptr);
    p.total_sq = std::strtod(cells[1].c_str(), nullptr);
    p.system_sq = std::strtod(cells[2].c_str(), nullptr);
    p.codespace_prob = std::strtod(cells[3].c_str(), nullptr);
    if (sf.plan_hash.empty()) sf.plan_hash = cells[4];
    require(sf.plan_hash == cells[4],
            "series csv '" + path + "': inconsistent plan hash");
    sf.points.push_back(p);
  }
  return sf;
}

// Scalar summary, one row per record.  Derived scalars that were not
// requested stay NaN.
inline void emit_summary_csv(const std::vector<RunRecord>& records,
                             const std::string& path) {
  std::ofstream out = detail::open_for_write(path);
  out << "e_penalty,lambda,seed,ok,final_t,final_f_total_sq,"
         "final_f_system_sq,final_p_codespace,t_prot,longterm_fs_sq,"
         "longterm_predicted,plan_hash,tool_version\n";
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (const auto& r : records) {
    const bool has_series = r.ok && !r.series.empty();
    const FidelityPoint last =
        has_series ? r.series.back() : FidelityPoint{nan, nan, nan, nan};
    out << detail::g17(r.point.e_penalty) << ',' << detail::g17(r.point.lambda)
        << ',' << r.point.seed << ',' << (r.ok ? 1 : 0) << ','
        << detail::g17(last.t) << ',' << detail::g17(last.total_sq) << ','
        << detail::g17(last.system_sq) << ','
        << detail::g17(last.codespace_prob) << ',' << detail::g17(r.t_prot)
        << ',' << detail::g17(r.longterm_fs_sq) << ','
        << detail::g17(r.longterm_predicted) << ',' << r.plan_hash << ','
        << r.tool_version << "\n";
  }
  detail::finish_write(out, path);
}

// Protection-time sweep summary with the abscissa of the scaling law.
inline void emit_tprot_summary_csv(const std::vector<RunRecord>& records,
                                   const std::string& path) {
  std::ofstream out = detail::open_for_write(path);
  out << "e_penalty,lambda,seed,t_prot,e_over_lambda_sq,plan_hash\n";
  for (const auto& r : records) {
    if (!r.ok || std::isnan(r.t_prot) || r.point.lambda <= 0.0) continue;
    const double x = r.point.e_penalty / (r.point.lambda * r.point.lambda);
    out << detail::g17(r.point.e_penalty) << ',' << detail::g17(r.point.lambda)
        << ',' << r.point.seed << ',' << detail::g17(r.t_prot) << ','
        << detail::g17(x) << ',' << r.plan_hash << "\n";
  }
  detail::finish_write(out, path);
}

// Emits the whole artifact set for one homogeneous record set into a
// directory: per-record series files, the scalar summary, the
// protection-time summary when present, and a manifest binding every file
// to the plan hash (with per-point error messages for failed points).
inline void emit_csv(const std::vector<RunRecord>& records,
                     const std::string& dir) {
  require(!records.empty(), "emit_csv: empty record set");
  for (const auto& r : records)
    require(r.plan_hash == records.front().plan_hash &&
                r.plan_name == records.front().plan_name,
            "emit_csv: records come from different plans");
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec)
    throw io_error("cannot create directory '" + dir + "': " + ec.message());

  nlohmann::json manifest;
  manifest["plan_name"] = records.front().plan_name;
  manifest["plan_hash"] = records.front().plan_hash;
  manifest["tool_version"] = records.front().tool_version;
  manifest["n_records"] = records.size();
  nlohmann::json files = nlohmann::json::array();
  nlohmann::json errors = nlohmann::json::array();
  nlohmann::json walls = nlohmann::json::array();

  bool any_tprot = false;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    walls.push_back(r.wall_seconds);
    if (!r.ok) {
      nlohmann::json e;
      e["index"] = i;
      e["e_penalty"] = r.point.e_penalty;
      e["lambda"] = r.point.lambda;
      e["seed"] = r.point.seed;
      e["message"] = r.error;
      errors.push_back(e);
      continue;
    }
    any_tprot = any_tprot || !std::isnan(r.t_prot);
    char idx[16];
    std::snprintf(idx, sizeof idx, "%03zu", i);
    const std::string name = "series_" + std::string(idx) + "_ep" +
                             detail::gshort(r.point.e_penalty) + "_lam" +
                             detail::gshort(r.point.lambda) + "_seed" +
                             std::to_string(r.point.seed) + ".csv";
    emit_series_csv(r, dir + "/" + name);
    files.push_back(name);
  }

  emit_summary_csv(records, dir + "/summary.csv");
  files.push_back("summary.csv");
  if (any_tprot) {
    emit_tprot_summary_csv(records, dir + "/tprot_summary.csv");
    files.push_back("tprot_summary.csv");
  }
  manifest["files"] = files;
  manifest["errors"] = errors;
  manifest["wall_seconds"] = walls;
  std::ofstream out = detail::open_for_write(dir + "/manifest.json");
  out << manifest.dump(2) << "\n";
  detail::finish_write(out, dir + "/manifest.json");
}

// ---------------------------------------------------------------------------
// Protection-time scaling fit

enum class FitModel { linear_through_origin };

struct FitReport {
  std::size_t n_points = 0;
  double slope = 0.0;
  double r2 = 0.0;
  std::vector<double> x;          // E_P / lambda^2
  std::vector<double> y;          // t_prot
  std::vector<double> residuals;  // y - slope * x
  bool non_scaling = false;  // fit explains < 50% of the variance about the
                             // mean (e.g. constant protection times)
};

inline FitReport fit_report(const std::vector<RunRecord>& records,
                            FitModel model = FitModel::linear_through_origin) {
  require(model == FitModel::linear_through_origin,
          "fit_report: unsupported fit model");
  FitReport rep;
  for (const auto& r : records) {
    if (!r.ok || !std::isfinite(r.t_prot) || r.point.lambda <= 0.0) continue;
    rep.x.push_back(r.point.e_penalty / (r.point.lambda * r.point.lambda));
    rep.y.push_back(r.t_prot);
  }
  rep.n_points = rep.x.size();
  require(rep.n_points >= 3,
          "fit_report: need at least three finite protection times, got " +
              std::to_string(rep.n_points));
  LinearFit f = fit_linear_through_origin(rep.x, rep.y);
  rep.slope = f.slope;
  rep.r2 = f.r2;
  for (std::size_t i = 0; i < rep.x.size(); ++i)
    rep.residuals.push_back(rep.y[i] - rep.slope * rep.x[i]);
  rep.non_scaling = rep.r2 < 0.5;
  return rep;
}

// ---------------------------------------------------------------------------
// Time grids and named plans

inline std::vector<double> log_time_grid(double t_min, double t_max,
                                         int per_decade = 8) {
  require(t_min > 0.0 && t_max > t_min,
          "log time grid: need 0 < t_min < t_max");
  require(per_decade >= 1, "log time grid: need at least one point per "
                           "decade");
  std::vector<double> out;
  const double step = std::pow(10.0, 1.0 / per_decade);
  for (double t = t_min; t < t_max * (1.0 - 1e-12); t *= step)
    out.push_back(t);
  out.push_back(t_max);
  return out;
}

inline std::vector<double> linear_time_grid(double t0, double t1,
                                            int n_points) {
  require(t1 > t0, "linear time grid: need t1 > t0");
  require(n_points >= 2, "linear time grid: need at least two points");
  std::vector<double> out;
  for (int i = 0; i < n_points; ++i)
    out.push_back(t0 + (t1 - t0) * static_cast<double>(i) /
                           static_cast<double>(n_points - 1));
  out.back() = t1;
  return out;
}

namespace detail {

// Keeps ceil(scale * n) evenly spaced entries (always both endpoints).
inline std::vector<double> thin_grid(const std::vector<double>& xs,
                                     double scale) {
  if (scale >= 1.0 || xs.size() <= 2) return xs;
  std::size_t m = static_cast<std::size_t>(
      std::ceil(static_cast<double>(xs.size()) * scale));
  m = std::clamp<std::size_t>(m, 2, xs.size());
  std::vector<double> out;
  for (std::size_t i = 0; i < m; ++i) {
    const auto idx = static_cast<std::size_t>(std::llround(
        static_cast<double>(i) * static_cast<double>(xs.size() - 1) /
        static_cast<double>(m - 1)));
    if (out.empty() || xs[idx] != out.back()) out.push_back(xs[idx]);
  }
  return out;
}

inline PauliSum logical_x() { return {PauliString::single(0, Pauli::X, 1.0)}; }
inline PauliSum logical_z() { return {PauliString::single(0, Pauli::Z, 1.0)}; }

inline ModelConfig default_base_config(std::uint64_t seed) {
  ModelConfig cfg;
  cfg.n_logical = 1;
  cfg.code = "jfs4";
  cfg.n_env = 8;
  cfg.seed = seed;
  cfg.h_comp = Schedule::constant(logical_x());
  cfg.initial_system_state.kind = InitialSystemState::Kind::random_codespace;
  cfg.initial_env_state = "random";
  return cfg;
}

inline const std::vector<double>& penalty_ladder() {
  static const std::vector<double> eps = {0.0, 2.0, 4.0, 8.0,
                                          16.0, 32.0, 64.0, 128.0};
  return eps;
}

}  // namespace detail

inline const std::vector<std::string>& named_plan_list() {
  static const std::vector<std::string> names = {
      "fig1", "fig2", "fig3", "fig4a", "fig4b", "fig5", "fig7", "fig8"};
  return names;
}

// Built-in experiments.  At scale = 1 the grids and horizons match the
// published protocols; smaller scales shrink horizons proportionally and
// thin parameter lists for quick runs.  All randomness derives from `seed`.
//
//   fig1   random codespace state, lambda = 0.1, penalty ladder, t to 1e3
//   fig2   same instance at lambda = 0.01, t to 1e5
//   fig3   protection-time sweep: E_P in {35,...,225} x lambda in
//          {1e-4,...,1}, one instance, t_prot per point
//   fig4a  initial state |0_L>, lambda = 0.1, penalty ladder
//   fig4b  initial state |+_L>, lambda = 0.1, penalty ladder
//   fig5   long-term F_s^2 vs the dephasing prediction at E_P = 128 over
//          independently seeded instances (fresh state and couplings each)
//   fig7   codespace probability series for the fig1 protocol (the series
//          files' p_codespace column; companion panels come from fig4a/b)
//   fig8   adiabatic sweep X_L -> Z_L over T = 1e4, lambda = 0.1, stepped
inline ExperimentPlan make_named_plan(const std::string& name,
                                      double scale = 1.0,
                                      std::uint64_t seed = 1) {
  require(scale > 0.0 && scale <= 1.0, "named plan: scale must lie in (0, 1]");
  ExperimentPlan plan;
  plan.name = name;
  plan.base_config = detail::default_base_config(seed);
  plan.outputs = {"series"};

  auto ladder_grid = [&](double lambda) {
    for (double ep : detail::thin_grid(detail::penalty_ladder(), scale))
      plan.grid.push_back({ep, lambda, seed});
  };

  if (name == "fig1" || name == "fig7") {
    ladder_grid(0.1);
    plan.time_grid = log_time_grid(0.1, std::max(10.0, 1e3 * scale));
  } else if (name == "fig2") {
    ladder_grid(0.01);
    plan.time_grid = log_time_grid(0.1, std::max(10.0, 1e5 * scale));
  } else if (name == "fig3") {
    std::vector<double> eps;
    for (int k = 0; k < 20; ++k) eps.push_back(35.0 + 10.0 * k);
    const std::vector<double> lams = {1e-4, 3e-4, 1e-3, 3e-3, 1e-2,
                                      3e-2, 1e-1, 3e-1, 1.0};
    for (double lam : detail::thin_grid(lams, scale))
      for (double ep : detail::thin_grid(eps, scale))
        plan.grid.push_back({ep, lam, seed});
    plan.time_grid = {1.0, 10.0, 100.0};
    plan.outputs = {"series", "t_prot"};
  } else if (name == "fig4a" || name == "fig4b") {
    plan.base_config.initial_system_state.kind =
        name == "fig4a" ? InitialSystemState::Kind::zero_L
                        : InitialSystemState::Kind::plus_L;
    ladder_grid(0.1);
    plan.time_grid = log_time_grid(0.1, std::max(10.0, 1e3 * scale));
  } else if (name == "fig5") {
    const auto n_pts = static_cast<std::size_t>(
        std::max(3.0, std::llround(20.0 * scale) * 1.0));
    for (std::size_t i = 0; i < n_pts; ++i)
      plan.grid.push_back({128.0, 0.1, seed + i});
    plan.time_grid = log_time_grid(1.0, 1e3);
    plan.outputs = {"series", "longterm"};
    for (int k = 1; k <= 10; ++k)
      plan.longterm_times.push_back(std::max(1.0, 1e8 * scale) * k);
  } else if (name == "fig8") {
    const double t_total = std::max(10.0, 1e4 * scale);
    plan.base_config.h_comp =
        Schedule::linear(detail::logical_x(), detail::logical_z(), t_total);
    plan.base_config.initial_system_state.kind =
        InitialSystemState::Kind::logical_coeffs;
    plan.base_config.initial_system_state.coeffs.resize(2);
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    plan.base_config.initial_system_state.coeffs[0] = cplx(inv_sqrt2, 0.0);
    plan.base_config.initial_system_state.coeffs[1] = cplx(-inv_sqrt2, 0.0);
    ladder_grid(0.1);
    const int n_points =
        std::max(11, static_cast<int>(std::llround(41.0 * scale)));
    plan.time_grid = linear_time_grid(0.0, t_total, n_points);
  } else {
    std::string known;
    for (const auto& n : named_plan_list()) known += " " + n;
    throw config_error("unknown plan '" + name + "'; built-in plans are:" +
                       known);
  }
  validate_plan(plan);
  return plan;
}

}  // namespace penaltyguard
