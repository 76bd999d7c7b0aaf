#pragma once

#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "balancing.hpp"
#include "bounds.hpp"
#include "io.hpp"
#include "lowrank.hpp"
#include "report.hpp"
#include "system.hpp"

namespace dtmor {

enum class ReductionMode { bt, tlbt, both };
enum class SolverKind { smith, rksm, dense };
enum class InputKind { impulse, random };

inline ReductionMode parse_mode(const std::string& s) {
  if (s == "bt" || s == "BT") return ReductionMode::bt;
  if (s == "tlbt" || s == "TLBT") return ReductionMode::tlbt;
  if (s == "both") return ReductionMode::both;
  throw ConfigError("unknown reduction mode: " + s);
}

/// Solver names: smith, rksm (shift kind from --shifts), rksm-pm1, rksm-disc, dense.
inline std::pair<SolverKind, std::optional<ShiftKind>> parse_solver(const std::string& s) {
  if (s == "smith") return {SolverKind::smith, std::nullopt};
  if (s == "rksm") return {SolverKind::rksm, std::nullopt};
  if (s == "rksm-pm1") return {SolverKind::rksm, ShiftKind::alternating_pm1};
  if (s == "rksm-disc") return {SolverKind::rksm, ShiftKind::adaptive_disc};
  if (s == "dense") return {SolverKind::dense, std::nullopt};
  throw ConfigError("unknown solver: " + s);
}

inline ShiftKind parse_shifts(const std::string& s) {
  if (s == "pm1") return ShiftKind::alternating_pm1;
  if (s == "disc") return ShiftKind::adaptive_disc;
  throw ConfigError("unknown shift strategy: " + s);
}

inline Horizon parse_horizon(const std::string& s) {
  if (s == "inf" || s == "infinity") return Horizon();
  long v = 0;
  try {
    v = detail::parse_long(s, "--tau");
  } catch (const IoError&) {
    throw ConfigError("tau must be a positive integer or 'inf'");
  }
  if (v < 1) throw ConfigError("tau must be >= 1");
  return Horizon::finite(v);
}

inline std::string solver_name(SolverKind k, ShiftKind s) {
  switch (k) {
    case SolverKind::smith: return "smith";
    case SolverKind::dense: return "dense";
    case SolverKind::rksm: return std::string("rksm-") + to_string(s);
  }
  return "unknown";
}

struct JobConfig {
  std::optional<fs::path> input;
  std::optional<ExampleSpec> example;
  Horizon tau = Horizon::finite(20);
  ReductionMode mode = ReductionMode::both;
  OrderSpec order = OrderSpec::tolerance(1e-2);
  SolverKind solver = SolverKind::rksm;
  ShiftKind shifts = ShiftKind::alternating_pm1;
  SolverConfig solver_cfg;
  long steps = -1;  // simulation horizon K; default max(2 tau, 100) or 100
  InputKind input_kind = InputKind::impulse;
  std::uint64_t input_seed = 0;
  ConstantMethod constants = ConstantMethod::eigen;
  bool full_bounds = true;  // dense balanced-realization bounds and certificate (dense path)

  void validate() const {
    if (input.has_value() == example.has_value()) throw ConfigError("give exactly one of an input system and an example");
    order.validate();
    solver_cfg.validate();
    if (mode != ReductionMode::bt && tau.is_infinite()) throw ConfigError("TLBT needs a finite tau");
    if (steps < -1) throw ConfigError("simulation steps must be >= 0");
  }

  long horizon() const {
    if (steps >= 0) return steps;
    return tau.is_finite() ? std::max(2 * tau.steps(), 100L) : 100L;
  }
};

/// Gramian approximation with any solver. The dense path is rotated into the
/// same (Q, Y) form the low-rank solvers return.
inline GramianApprox compute_gramian(const DiscreteLTISystem& sys, Side side, Horizon tau, SolverKind solver,
                                     ShiftKind shifts, const SolverConfig& cfg) {
  switch (solver) {
    case SolverKind::smith: return smith_arnoldi(sys, side, tau, cfg);
    case SolverKind::rksm: {
      ShiftStrategy s;
      s.kind = shifts;
      return rksm(sys, side, tau, s, cfg);
    }
    case SolverKind::dense: {
      const DenseGramianPair d = tl_gramian_dense(sys, tau, side);
      GramianApprox g;
      g.Q = Mat::Identity(sys.n(), sys.n());
      g.Y = d.gramian;
      g.tl_term = d.tl_term;
      g.tau = tau;
      g.side = side;
      g.residual = 0.0;
      g.converged = true;
      g.dim_before_truncation = sys.n();
      return truncate_factor(g, cfg.trunc_tol);
    }
  }
  throw ConfigError("unknown solver");
}

/// max_k ||y(k) - yhat(k)||_2 per sample.
inline Vec output_errors(const DiscreteLTISystem& sys, const DiscreteLTISystem& rom, const Mat& u, long K) {
  if (sys.m() != rom.m() || sys.p() != rom.p()) throw DimensionError("ROM and system differ in m or p");
  const SimulationTrace a = simulate(sys, u, K), b = simulate(rom, u, K);
  return (a.y - b.y).colwise().norm().transpose();
}

struct ErrorSeries {
  std::string name;
  Vec err;
  double bound_level = nan();
  double hsv_level = nan();
};

/// One row per k in [0, K]: k, window end marker, then errors, bound levels
/// and HSV-tail levels per series.
inline std::string error_csv(const std::vector<ErrorSeries>& series, long K, Horizon tau) {
  std::ostringstream out;
  out << "k,window_end";
  for (const auto& s : series) out << ",err_" << s.name;
  for (const auto& s : series) out << ",bound_" << s.name;
  for (const auto& s : series) out << ",hsv_" << s.name;
  out << '\n';
  for (long k = 0; k <= K; ++k) {
    out << k << ',' << ((tau.is_finite() && k == tau.steps()) ? 1 : 0);
    for (const auto& s : series) out << ',' << csv_number(s.err(k));
    for (const auto& s : series) out << ',' << csv_number(s.bound_level);
    for (const auto& s : series) out << ',' << csv_number(s.hsv_level);
    out << '\n';
  }
  return out.str();
}

struct NamedRom {
  std::string name;
  const DiscreteLTISystem* rom;
  double bound_level = nan();
  double hsv_level = nan();
};

inline std::string emit_error_csv(const DiscreteLTISystem& sys, const std::vector<NamedRom>& roms, const Mat& u,
                                  long K, Horizon tau) {
  std::vector<ErrorSeries> series;
  for (const auto& r : roms) series.push_back({r.name, output_errors(sys, *r.rom, u, K), r.bound_level, r.hsv_level});
  return error_csv(series, K, tau);
}

inline Mat make_input(InputKind kind, Index m, long K, std::uint64_t seed) {
  if (kind == InputKind::impulse) return impulse_input(m, K);
  Rng rng(seed);
  return rng.normal_matrix(m, K + 1);
}

struct MethodResult {
  std::string method;  // BT or TLBT
  GramianApprox P, Q;
  ReducedOrderModel rom;
  HankelSpectrum hsv;
  BoundReport report;
  double rho_rom = nan();
  Vec err;
  double emax = nan();         // max error over the window
  double bound = nan();        // epsilon (TLBT) or sqrt of the infinite-horizon value (BT)
  double bound_level = nan();  // bound times the input window norm
  double hsv_level = nan();
};

struct ReportBundle {
  DiscreteLTISystem sys;
  Horizon window;  // tau, or K when tau is infinite
  long K = 0;
  Mat u;
  std::string solver;
  std::vector<MethodResult> methods;

  std::string errors_csv() const {
    std::vector<ErrorSeries> s;
    for (const auto& m : methods) s.push_back({m.method, m.err, m.bound_level, m.hsv_level});
    return error_csv(s, K, window);
  }

  std::string summary_csv() const {
    std::ostringstream out;
    out << "method,tau,r,emax,bound,bound_level,hsv_tail,rho_rom,certificate\n";
    for (const auto& m : methods) {
      std::string cert = "na";
      if (m.report.certificate) cert = m.report.certificate->holds ? "holds" : "fails";
      out << m.method << ',' << m.rom.tau.str() << ',' << m.rom.order() << ',' << csv_number(m.emax) << ','
          << csv_number(m.bound) << ',' << csv_number(m.bound_level) << ',' << csv_number(m.rom.hsv_tail) << ','
          << csv_number(m.rho_rom) << ',' << cert << '\n';
    }
    return out.str();
  }

  std::string convergence_csv() const {
    std::string out = convergence_header();
    for (const auto& m : methods) {
      out += convergence_rows(m.method, m.P, solver);
      out += convergence_rows(m.method, m.Q, solver);
    }
    return out;
  }

  std::string solver_summary_csv() const {
    std::ostringstream out;
    out << "method,side,solver,iterations,dim,rank,residual\n";
    for (const auto& m : methods)
      for (const GramianApprox* g : {&m.P, &m.Q})
        out << m.method << ',' << to_string(g->side) << ',' << solver << ',' << g->iterations << ','
            << g->dim_before_truncation << ',' << g->rank() << ',' << csv_number(g->residual) << '\n';
    return out.str();
  }

  std::string hsv_csv() const {
    std::ostringstream out;
    out << "index";
    Index len = 0;
    for (const auto& m : methods) {
      out << ",hsv_" << m.method;
      len = std::max(len, m.hsv.size());
    }
    out << '\n';
    for (Index i = 0; i < len; ++i) {
      out << i + 1;
      for (const auto& m : methods) out << ',' << (i < m.hsv.size() ? csv_number(m.hsv.sigma(i)) : std::string());
      out << '\n';
    }
    return out.str();
  }

  json report_json() const {
    json j;
    j["system"] = {{"n", sys.n()}, {"m", sys.m()}, {"p", sys.p()}, {"kind", sys.kind}, {"seed", sys.seed}};
    j["window"] = window.str();
    j["steps"] = K;
    j["solver"] = solver;
    json ms = json::array();
    for (const auto& m : methods) {
      json r = m.report.to_json();
      r["emax"] = detail::num(m.emax);
      r["bound"] = detail::num(m.bound);
      r["bound-level"] = detail::num(m.bound_level);
      r["rho-rom"] = detail::num(m.rho_rom);
      r["gramian-tau"] = m.rom.tau.str();
      ms.push_back(r);
    }
    j["methods"] = ms;
    return j;
  }
};

namespace detail {

template <typename F>
void try_bound(BoundReport& rep, const char* what, F&& f) {
  try {
    f();
  } catch (const SolvabilityError& e) {
    rep.notes.push_back(std::string(what) + ": " + e.what());
  } catch (const DimensionError& e) {
    rep.notes.push_back(std::string(what) + ": " + e.what());
  }
}

inline std::pair<AsymptoticConstants, AsymptoticConstants> constants_pair(const Mat& A, const Mat& Ah,
                                                                          ConstantMethod method,
                                                                          BoundReport& rep) {
  if (method == ConstantMethod::eigen) {
    try {
      return {asymptotic_constants(A, method), asymptotic_constants(Ah, method)};
    } catch (const SolvabilityError& e) {
      rep.notes.push_back(std::string("eigen constants unavailable, using numerical radius: ") + e.what());
    }
  }
  return {asymptotic_constants(A, ConstantMethod::numerical_radius),
          asymptotic_constants(Ah, ConstantMethod::numerical_radius)};
}

}  // namespace detail

/// Run one reduction job in memory: Gramians, ROMs, bounds, simulation.
inline ReportBundle compute_job(const JobConfig& cfg) {
  cfg.validate();
  ReportBundle b;
  b.sys = cfg.input ? read_system(*cfg.input) : generate_example(*cfg.example);
  const DiscreteLTISystem& sys = b.sys;
  b.K = cfg.horizon();
  b.window = cfg.tau.is_finite() ? cfg.tau : Horizon::finite(std::max(1L, b.K));
  b.u = make_input(cfg.input_kind, sys.m(), b.K, cfg.input_seed);
  b.solver = solver_name(cfg.solver, cfg.shifts);
  const bool dense_ok = sys.n() <= dense_cap();
  const double u_norm = b.u.leftCols(std::min(b.window.steps(), b.K) + 1).norm();

  std::optional<BalancedRealization> bal_inf, bal_tl;
  auto get_bal_inf = [&]() -> const BalancedRealization& {
    if (!bal_inf) bal_inf = balance_dense(sys, Horizon());
    return *bal_inf;
  };
  auto get_bal_tl = [&]() -> const BalancedRealization& {
    if (!bal_tl) bal_tl = balance_dense(sys, cfg.tau);
    return *bal_tl;
  };

  std::vector<std::string> methods;
  if (cfg.mode != ReductionMode::tlbt) methods.push_back("BT");
  if (cfg.mode != ReductionMode::bt) methods.push_back("TLBT");

  for (const std::string& name : methods) {
    MethodResult mr;
    mr.method = name;
    const Horizon gtau = name == "BT" ? Horizon() : cfg.tau;
    mr.P = compute_gramian(sys, Side::reach, gtau, cfg.solver, cfg.shifts, cfg.solver_cfg);
    mr.Q = compute_gramian(sys, Side::obs, gtau, cfg.solver, cfg.shifts, cfg.solver_cfg);
    auto [rom, hsv] = square_root_truncate(mr.P.factor(), mr.Q.factor(), sys, cfg.order, gtau);
    mr.rom = std::move(rom);
    mr.hsv = std::move(hsv);
    mr.rho_rom = spectral_radius(mr.rom.A);
    const Index r = mr.rom.order();

    BoundReport& rep = mr.report;
    rep.method = name;
    rep.tau = b.window;
    rep.r = r;
    rep.hsv_tail = mr.rom.hsv_tail;

    // Output bound on the simulation window.
    const bool want_output = name == "TLBT" || cfg.full_bounds;
    if (want_output) {
      detail::try_bound(rep, "output bound", [&] {
        if (dense_ok) {
          rep.output = bound_output_tl(sys, mr.rom.sys, b.window);
        } else if (gtau == b.window) {
          rep.output = bound_output_tl(sys, mr.rom.sys, b.window, full_traces_lowrank(sys, mr.P, mr.Q));
        } else {
          rep.notes.push_back("output bound skipped: window Gramians unavailable above the dense cap");
        }
      });
    }

    if (name == "BT") {
      detail::try_bound(rep, "infinite-horizon bound", [&] {
        if (!dense_ok) {
          // Large scale: infinite-horizon output bound from low-rank factors.
          OutputBound ob = bound_output_tl(sys, mr.rom.sys, Horizon(), full_traces_lowrank(sys, mr.P, mr.Q));
          mr.bound = ob.epsilon;
          rep.notes.push_back("infinite-horizon bound from low-rank Gramian traces");
          return;
        }
        const BalancedRealization& bal = get_bal_inf();
        if (r > bal.order()) throw DimensionError("order exceeds the minimal balanced order");
        rep.inf_horizon = bound_inf_horizon(bal, r);
        mr.bound = std::sqrt(rep.inf_horizon->value);
      });
    } else {
      if (rep.output) mr.bound = rep.output->epsilon;
      if (cfg.full_bounds && dense_ok) {
        detail::try_bound(rep, "dense bounds", [&] {
          const BalancedRealization& bal = get_bal_tl();
          if (r > bal.order()) throw DimensionError("order exceeds the minimal balanced order");
          rep.tl_expression = error_expr_tlbt(bal, r);
          auto [cf, cr] = detail::constants_pair(bal.A, bal.A.topLeftCorner(r, r), cfg.constants, rep);
          rep.constants_full = cf;
          rep.constants_rom = cr;
          rep.asymptotic = bound_asymptotic(bal, r, bal.tau, cf, cr);
          rep.certificate = stability_certificate(bal, r);
        });
      }
    }

    mr.err = output_errors(sys, mr.rom.sys, b.u, b.K);
    const long w = std::min(b.window.steps(), b.K);
    mr.emax = mr.err.head(w + 1).maxCoeff();
    mr.bound_level = mr.bound * u_norm;
    mr.hsv_level = mr.rom.hsv_tail * u_norm;
    b.methods.push_back(std::move(mr));
  }
  return b;
}

/// Write every artifact of a bundle into `out` (atomically replaced).
inline void write_bundle(const ReportBundle& b, const fs::path& out) {
  write_directory_atomically(out, [&](const fs::path& dir) {
    for (const auto& m : b.methods) {
      const fs::path rd = dir / ("rom-" + detail::lower(m.method));
      fs::create_directories(rd);
      json prov = {{"method", m.method},
                   {"tau", m.rom.tau.str()},
                   {"r", m.rom.order()},
                   {"hsv-tail", detail::num(m.rom.hsv_tail)},
                   {"certificate", m.report.certificate ? json(m.report.certificate->holds) : json(nullptr)}};
      write_system_files(m.rom.sys, rd, json{{"provenance", prov}});
    }
    detail::write_text_file(dir / "report.json", b.report_json().dump(2) + "\n");
    detail::write_text_file(dir / "convergence.csv", b.convergence_csv());
    detail::write_text_file(dir / "solver_summary.csv", b.solver_summary_csv());
    detail::write_text_file(dir / "errors.csv", b.errors_csv());
    detail::write_text_file(dir / "summary.csv", b.summary_csv());
    detail::write_text_file(dir / "hsv.csv", b.hsv_csv());
  });
}

inline ReportBundle run_pipeline(const JobConfig& cfg, const std::optional<fs::path>& out) {
  ReportBundle b = compute_job(cfg);
  if (out) write_bundle(b, *out);
  return b;
}

}  // namespace dtmor
