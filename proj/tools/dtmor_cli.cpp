// Command-line front end: generate, gramian, reduce, bounds, simulate, pipeline.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <dtmor/dtmor.hpp>

namespace {

using namespace dtmor;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitSolver = 3;
constexpr int kExitIo = 4;

/// Either --system DIR or example generator flags.
struct SourceOptions {
  std::string system;
  std::string kind;
  long size = 10;
  long m = 1;
  long p = 1;
  std::uint64_t seed = 0;
  double radius = 0.95;

  void add(CLI::App* app, bool with_seed = true) {
    app->add_option("--system", system, "System directory (Matrix Market + manifest)");
    app->add_option("--kind", kind, "Example kind: jacobi, gauss-seidel, random-stable, laplacian-grid");
    app->add_option("--size", size, "Grid size N (grid kinds) or order n (random-stable)");
    app->add_option("--m", m, "Number of inputs");
    app->add_option("--p", p, "Number of outputs");
    if (with_seed) app->add_option("--seed", seed, "Generator seed");
    app->add_option("--radius", radius, "Target spectral radius (random-stable)");
  }

  bool has_system() const { return !system.empty(); }

  ExampleSpec spec() const {
    if (kind.empty()) throw ConfigError("give --system or --kind");
    ExampleSpec s;
    s.kind = parse_example_kind(kind);
    s.size = size;
    s.m = m;
    s.p = p;
    s.seed = seed;
    s.target_radius = radius;
    return s;
  }

  DiscreteLTISystem load() const {
    if (has_system() && !kind.empty()) throw ConfigError("--system and --kind are mutually exclusive");
    return has_system() ? read_system(system) : generate_example(spec());
  }
};

/// --tau, --order/--hsv-tol, --solver, --shifts, --tol.
struct ReductionOptions {
  std::string tau = "20";
  std::optional<long> order;
  std::optional<double> hsv_tol;
  std::string solver = "rksm";
  std::string shifts = "pm1";
  double tol = 1e-8;
  std::optional<double> tol_f;
  int cadence = 5;
  int max_iter = 300;

  void add(CLI::App* app, bool with_order) {
    app->add_option("--tau", tau, "Time horizon (positive integer or 'inf')");
    if (with_order) {
      auto* o = app->add_option("--order", order, "Fixed reduced order r");
      auto* h = app->add_option("--hsv-tol", hsv_tol, "Adaptive order: smallest r with 2*sum_{k>r} sigma_k <= tol");
      o->excludes(h);
    }
    app->add_option("--solver", solver, "smith, rksm, rksm-pm1, rksm-disc or dense");
    app->add_option("--shifts", shifts, "RKSM shifts: pm1 or disc");
    app->add_option("--tol", tol, "Scaled residual tolerance");
    app->add_option("--tol-f", tol_f, "TL-term change tolerance (default: --tol)");
    app->add_option("--cadence", cadence, "RKSM projected-solve cadence");
    app->add_option("--max-iter", max_iter, "Maximum basis expansions");
  }

  SolverConfig solver_config() const {
    SolverConfig c;
    c.tol = tol;
    c.tol_f = tol_f.value_or(tol);
    c.cadence = cadence;
    c.max_iter = max_iter;
    c.validate();
    return c;
  }

  std::pair<SolverKind, ShiftKind> solver_kind() const {
    auto [k, s] = parse_solver(solver);
    return {k, s.value_or(parse_shifts(shifts))};
  }

  OrderSpec order_spec() const {
    if (order) return OrderSpec::fixed(*order);
    if (hsv_tol) return OrderSpec::tolerance(*hsv_tol);
    throw ConfigError("give --order or --hsv-tol");
  }
};

void write_or_print(const std::string& out, const std::string& text) {
  if (out.empty() || out == "-") {
    std::cout << text;
    return;
  }
  fs::path path(out);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  detail::write_text_file(tmp, text);
  fs::rename(tmp, path);
}

ConstantMethod parse_constants(const std::string& s) {
  if (s == "eigen") return ConstantMethod::eigen;
  if (s == "numerical-radius" || s == "nr") return ConstantMethod::numerical_radius;
  throw ConfigError("unknown constant method: " + s);
}

InputKind parse_input(const std::string& s) {
  if (s == "impulse") return InputKind::impulse;
  if (s == "random") return InputKind::random;
  throw ConfigError("unknown input kind: " + s);
}

int run(int argc, char** argv) {
  CLI::App app{"Balanced truncation and error bounds for discrete-time LTI systems"};
  app.require_subcommand(1);

  // generate
  SourceOptions gen_src;
  std::string gen_out;
  auto* gen = app.add_subcommand("generate", "Write a seeded example system");
  gen_src.add(gen);
  gen->add_option("--out", gen_out, "Output directory")->required();

  // gramian
  SourceOptions gr_src;
  ReductionOptions gr_red;
  std::string gr_side = "both", gr_out;
  auto* gram = app.add_subcommand("gramian", "Low-rank (time-limited) Gramian factors");
  gr_src.add(gram);
  gr_red.add(gram, false);
  gram->add_option("--side", gr_side, "reach, obs or both");
  gram->add_option("--out", gr_out, "Output directory")->required();

  // reduce
  SourceOptions rd_src;
  ReductionOptions rd_red;
  std::string rd_out;
  auto* red = app.add_subcommand("reduce", "Square-root balanced truncation (BT for tau=inf, TLBT otherwise)");
  rd_src.add(red);
  rd_red.add(red, true);
  red->add_option("--out", rd_out, "Output ROM directory")->required();

  // bounds
  SourceOptions bd_src;
  std::string bd_rom, bd_tau = "20", bd_out, bd_constants = "eigen";
  std::optional<long> bd_order;
  auto* bnd = app.add_subcommand("bounds", "Error bounds for a ROM and/or a dense balanced truncation");
  bd_src.add(bnd);
  bnd->add_option("--rom", bd_rom, "ROM directory (output bound)");
  bnd->add_option("--tau", bd_tau, "Time horizon");
  bnd->add_option("--order", bd_order, "Order for the dense balanced-truncation bounds");
  bnd->add_option("--constants", bd_constants, "eigen or numerical-radius");
  bnd->add_option("--out", bd_out, "Output JSON file ('-' for stdout)");

  // simulate
  SourceOptions sm_src;
  std::vector<std::string> sm_roms;
  long sm_steps = 100;
  std::string sm_input = "impulse", sm_out;
  std::uint64_t sm_input_seed = 0;
  auto* sim = app.add_subcommand("simulate", "Simulate outputs (and ROM errors) from x(0)=0");
  sm_src.add(sim);
  sim->add_option("--rom", sm_roms, "ROM directories to compare");
  sim->add_option("--steps", sm_steps, "Horizon K");
  sim->add_option("--input", sm_input, "impulse or random");
  sim->add_option("--input-seed", sm_input_seed, "Seed for random inputs");
  sim->add_option("--out", sm_out, "Output CSV file ('-' for stdout)");

  // pipeline
  SourceOptions pl_src;
  ReductionOptions pl_red;
  std::string pl_mode = "both", pl_input = "impulse", pl_out, pl_constants = "eigen";
  long pl_steps = -1;
  std::uint64_t pl_input_seed = 0;
  bool pl_no_dense_bounds = false;
  auto* pipe = app.add_subcommand("pipeline", "Full reduction job: ROMs, bounds, error and convergence tables");
  pl_src.add(pipe);
  pl_red.add(pipe, true);
  pipe->add_option("--mode", pl_mode, "bt, tlbt or both");
  pipe->add_option("--steps", pl_steps, "Simulation horizon K (default max(2 tau, 100))");
  pipe->add_option("--input", pl_input, "impulse or random");
  pipe->add_option("--input-seed", pl_input_seed, "Seed for random inputs");
  pipe->add_option("--constants", pl_constants, "eigen or numerical-radius");
  pipe->add_flag("--no-dense-bounds", pl_no_dense_bounds, "Skip the dense balanced-realization bounds and certificate");
  pipe->add_option("--out", pl_out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  if (gen->parsed()) {
    const DiscreteLTISystem sys = generate_example(gen_src.spec());
    write_system(sys, gen_out, nlohmann::json{{"size", gen_src.size}});
    std::cout << "wrote " << gen_out << " (n=" << sys.n() << ")\n";
  } else if (gram->parsed()) {
    const DiscreteLTISystem sys = gr_src.load();
    const Horizon tau = parse_horizon(gr_red.tau);
    const SolverConfig cfg = gr_red.solver_config();
    auto [kind, shifts] = gr_red.solver_kind();
    std::vector<Side> sides;
    if (gr_side == "reach" || gr_side == "both") sides.push_back(Side::reach);
    if (gr_side == "obs" || gr_side == "both") sides.push_back(Side::obs);
    if (sides.empty()) throw ConfigError("--side must be reach, obs or both");
    std::vector<GramianApprox> res;
    for (Side s : sides) res.push_back(compute_gramian(sys, s, tau, kind, shifts, cfg));
    const std::string solver = solver_name(kind, shifts);
    write_directory_atomically(gr_out, [&](const fs::path& dir) {
      std::string conv = convergence_header();
      nlohmann::json info = nlohmann::json::array();
      for (const auto& g : res) {
        const std::string side = to_string(g.side);
        write_mtx(dir / ("Z_" + side + ".mtx"), g.factor());
        write_mtx(dir / ("tl_term_" + side + ".mtx"), g.tl_term);
        conv += convergence_rows("gramian", g, solver);
        info.push_back({{"side", side},
                        {"tau", tau.str()},
                        {"solver", solver},
                        {"iterations", g.iterations},
                        {"dim", g.dim_before_truncation},
                        {"rank", g.rank()},
                        {"residual", detail::num(g.residual)}});
      }
      detail::write_text_file(dir / "convergence.csv", conv);
      detail::write_text_file(dir / "gramian.json", info.dump(2) + "\n");
    });
    for (const auto& g : res)
      std::printf("%s: iterations=%d dim=%ld rank=%ld residual=%.3e\n", to_string(g.side), g.iterations,
                  static_cast<long>(g.dim_before_truncation), static_cast<long>(g.rank()), g.residual);
  } else if (red->parsed()) {
    const DiscreteLTISystem sys = rd_src.load();
    const Horizon tau = parse_horizon(rd_red.tau);
    const SolverConfig cfg = rd_red.solver_config();
    auto [kind, shifts] = rd_red.solver_kind();
    const GramianApprox P = compute_gramian(sys, Side::reach, tau, kind, shifts, cfg);
    const GramianApprox Q = compute_gramian(sys, Side::obs, tau, kind, shifts, cfg);
    auto [rom, hsv] = square_root_truncate(P.factor(), Q.factor(), sys, rd_red.order_spec(), tau);
    nlohmann::json prov = {{"method", rom.method},
                           {"tau", tau.str()},
                           {"r", rom.order()},
                           {"hsv-tail", detail::num(rom.hsv_tail)},
                           {"certificate", nullptr}};
    write_directory_atomically(rd_out, [&](const fs::path& dir) {
      write_system_files(rom.sys, dir, nlohmann::json{{"provenance", prov}});
      std::string h = "index,hsv\n";
      for (Index i = 0; i < hsv.size(); ++i) h += std::to_string(i + 1) + "," + csv_number(hsv.sigma(i)) + "\n";
      detail::write_text_file(dir / "hsv.csv", h);
    });
    std::printf("%s r=%ld hsv-tail=%.5e rho(Ahat)=%.5f\n", rom.method.c_str(), static_cast<long>(rom.order()),
                rom.hsv_tail, spectral_radius(rom.A));
  } else if (bnd->parsed()) {
    const DiscreteLTISystem sys = bd_src.load();
    const Horizon tau = parse_horizon(bd_tau);
    nlohmann::json j;
    j["tau"] = tau.str();
    if (!bd_rom.empty()) {
      const DiscreteLTISystem rom = read_system(bd_rom);
      const OutputBound ob = bound_output_tl(sys, rom, tau);
      j["output-bound"] = {{"epsilon", detail::num(ob.epsilon)},
                           {"c-side", detail::num(ob.c_side)},
                           {"b-side", detail::num(ob.b_side)},
                           {"absolute-value-applied", ob.abs_applied},
                           {"sides-disagree", ob.sides_disagree},
                           {"direct-sum-fallback", ob.direct_sum}};
    }
    if (bd_order) {
      const Index r = *bd_order;
      BoundReport rep;
      rep.method = tau.is_finite() ? "TLBT" : "BT";
      rep.tau = tau;
      rep.r = r;
      const BalancedRealization bal = balance_dense(sys, tau);
      rep.hsv_tail = hsv_tail_bound(bal.sigma, r);
      if (tau.is_finite()) {
        rep.output = bound_output_tl(sys, bal.truncate(r).sys, tau);
        rep.tl_expression = error_expr_tlbt(bal, r);
      } else {
        rep.inf_horizon = bound_inf_horizon(bal, r);
      }
      const ConstantMethod cm = parse_constants(bd_constants);
      rep.constants_full = asymptotic_constants(bal.A, cm);
      rep.constants_rom = asymptotic_constants(bal.A.topLeftCorner(r, r), cm);
      rep.asymptotic = bound_asymptotic(bal, r, tau, *rep.constants_full, *rep.constants_rom);
      if (tau.is_finite()) rep.certificate = stability_certificate(bal, r);
      j["balanced-truncation"] = rep.to_json();
    }
    if (bd_rom.empty() && !bd_order) throw ConfigError("bounds needs --rom and/or --order");
    write_or_print(bd_out, j.dump(2) + "\n");
  } else if (sim->parsed()) {
    const DiscreteLTISystem sys = sm_src.load();
    if (sm_steps < 0) throw ConfigError("--steps must be >= 0");
    const Mat u = make_input(parse_input(sm_input), sys.m(), sm_steps, sm_input_seed);
    const SimulationTrace tr = simulate(sys, u, sm_steps);
    std::vector<Vec> errs;
    for (const auto& rd : sm_roms) errs.push_back(output_errors(sys, read_system(rd), u, sm_steps));
    std::string out = "k";
    for (Index i = 0; i < sys.p(); ++i) out += ",y" + std::to_string(i + 1);
    for (std::size_t i = 0; i < errs.size(); ++i) out += ",err_rom" + std::to_string(i + 1);
    out += "\n";
    for (long k = 0; k <= sm_steps; ++k) {
      out += std::to_string(k);
      for (Index i = 0; i < sys.p(); ++i) out += "," + csv_number(tr.y(i, k));
      for (const auto& e : errs) out += "," + csv_number(e(k));
      out += "\n";
    }
    write_or_print(sm_out, out);
  } else if (pipe->parsed()) {
    JobConfig cfg;
    if (pl_src.has_system()) cfg.input = pl_src.system;
    else cfg.example = pl_src.spec();
    cfg.tau = parse_horizon(pl_red.tau);
    cfg.mode = parse_mode(pl_mode);
    cfg.order = pl_red.order_spec();
    auto [kind, shifts] = pl_red.solver_kind();
    cfg.solver = kind;
    cfg.shifts = shifts;
    cfg.solver_cfg = pl_red.solver_config();
    cfg.steps = pl_steps;
    cfg.input_kind = parse_input(pl_input);
    cfg.input_seed = pl_input_seed;
    cfg.constants = parse_constants(pl_constants);
    cfg.full_bounds = !pl_no_dense_bounds;
    const ReportBundle b = run_pipeline(cfg, fs::path(pl_out));
    std::cout << b.summary_csv();
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const dtmor::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const dtmor::DimensionError& e) {
    std::cerr << "dimension error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const dtmor::ConvergenceError& e) {
    std::cerr << "no convergence: " << e.what() << '\n';
    return kExitSolver;
  } catch (const dtmor::SolvabilityError& e) {
    std::cerr << "not solvable: " << e.what() << '\n';
    return kExitSolver;
  } catch (const dtmor::IoError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
