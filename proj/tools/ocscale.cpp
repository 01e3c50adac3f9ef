// Command-line front end: define -> scale -> solve -> descale -> verify ->
// balance -> audit. Data files go to --out; stdout gets a one-line summary
// and stderr the diagnostics.
//
// Exit codes: 0 ok, 1 usage or schema error, 2 numeric failure,
// 3 verification failure.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ocscale/audit.hpp"
#include "ocscale/balance.hpp"
#include "ocscale/conditions.hpp"
#include "ocscale/expr.hpp"
#include "ocscale/linalg.hpp"
#include "ocscale/problem.hpp"
#include "ocscale/problem_io.hpp"
#include "ocscale/report_io.hpp"
#include "ocscale/scaling.hpp"
#include "ocscale/solver.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace ocscale;

namespace {

constexpr int kOk = 0, kUsage = 1, kNumeric = 2, kVerify = 3;
constexpr const char* kVersion = "1.0.0";

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string out = "ocscale_out";
  double tol = 1e-6;
  double grid_tol = 1e-4;
  std::uint64_t seed = 0;
  std::size_t multistart = 0;
  std::size_t grid = 1001;
  bool dump = false;
};

const std::vector<std::string>& builtin_problem_names() {
  static const std::vector<std::string> names{"brachistochrone"};
  return names;
}

std::string joined(const std::vector<std::string>& v) {
  std::string s;
  for (const auto& x : v) s += (s.empty() ? "" : ", ") + x;
  return s;
}

OCProblem builtin_problem(const std::string& name) {
  if (name == "brachistochrone") return brachistochrone();
  throw UsageError("unknown builtin problem '" + name + "'; builtins: " + joined(builtin_problem_names()));
}

Guess builtin_guess(const std::string& name) {
  if (name == "brachistochrone") return {{-0.013, 0.225, -0.113}, 24.0};
  throw UsageError("no shipped guess for '" + name + "'");
}

bool is_builtin(const std::vector<std::string>& names, const std::string& s) {
  return std::find(names.begin(), names.end(), s) != names.end();
}

OCProblem resolve_problem(const std::string& arg) {
  if (is_builtin(builtin_problem_names(), arg)) return builtin_problem(arg);
  if (!fs::exists(arg))
    throw UsageError("problem '" + arg + "' is neither a builtin (" + joined(builtin_problem_names()) +
                     ") nor an existing file");
  return load_problem(arg);
}

ScaleSet resolve_scales(const std::string& arg, const OCProblem& p) {
  if (arg.empty()) return identity_scales(p);
  if (is_builtin(builtin_scale_names(), arg)) return builtin_scales(arg, p);
  if (!fs::exists(arg))
    throw UsageError("scale set '" + arg + "' is neither a builtin (" + joined(builtin_scale_names()) +
                     ") nor an existing file");
  return load_scale_set(arg, p);
}

Guess resolve_guess(const std::string& arg, const OCProblem& p) {
  if (!fs::exists(arg)) throw UsageError("guess file '" + arg + "' does not exist");
  return load_guess(arg, p.nx());
}

BvpOptions bvp_options(const Common& c) {
  BvpOptions o;
  o.grid_points = c.grid;
  o.multistart = c.multistart;
  o.seed = c.seed;
  return o;
}

fs::path prepare_out(const Common& c) {
  const fs::path out(c.out);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec || !fs::is_directory(out)) throw UsageError("cannot create output directory '" + c.out + "'");
  return out;
}

// Run metadata lives apart from the data files so those stay reproducible.
void write_meta(const fs::path& out, const std::vector<std::string>& argv,
                std::chrono::steady_clock::time_point start) {
  json j;
  j["tool"] = "ocscale";
  j["version"] = kVersion;
  j["arguments"] = argv;
  j["elapsed_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_json_file(j, out / "meta.json");
}

std::string fmt(double v, int digits = 12) {
  std::ostringstream os;
  os.precision(digits);
  os << v;
  return os.str();
}

// ---------------------------------------------------------------------------

int solve_and_report(const OCProblem& p, const ScaleSet& s, const std::string& scale_name, const Guess& guess,
                     const Common& c, const std::string& command) {
  const fs::path out = prepare_out(c);
  BvpSolution sol;
  try {
    sol = solve_bvp(p, s, guess, bvp_options(c));
  } catch (const SolveError& e) {
    json j;
    j["problem"] = p.name;
    j["scale"] = scale_name;
    j["passed"] = false;
    j["solver"] = to_json(e.partial());
    write_json_file(j, out / "report.json");
    throw;
  }
  const bool scaled = sol.trajectory.label == SolutionLabel::Scaled;
  save_trajectory_csv(out / "trajectory.csv", sol.solved, sol.trajectory);
  save_dual_csv(out / "dual.csv", sol.solved, sol.dual);
  write_json_file(nu_to_json(sol.dual.nu), out / "nu.json");

  const ToleranceSet tol{c.tol, c.grid_tol};
  const auto rep_solved = verify(sol.solved, sol.trajectory, sol.dual, tol);
  json report;
  report["problem"] = p.name;
  report["scale"] = scale_name;
  report["label"] = to_string(sol.trajectory.label);
  report["solver"] = to_json(sol.newton);
  report["verification"]["solved"] = to_json(rep_solved);
  bool passed = rep_solved.passed;
  Trajectory phys = sol.trajectory;
  if (scaled) {
    phys = descale_primal(sol.trajectory, s);
    const auto dual = descale_dual(sol.dual, s);
    save_trajectory_csv(out / "trajectory_descaled.csv", p, phys);
    save_dual_csv(out / "dual_descaled.csv", p, dual);
    write_json_file(nu_to_json(dual.nu), out / "nu_descaled.json");
    const auto rep_phys = verify(p, phys, dual, tol);
    report["verification"]["descaled"] = to_json(rep_phys);
    passed = passed && rep_phys.passed;
  }
  report["passed"] = passed;
  report["final_time"] = phys.t.back();
  write_json_file(report, out / "report.json");
  write_json_file(to_json(magnitude_report(sol.solved, sol.trajectory, sol.dual)), out / "magnitude.json");
  if (c.dump) {
    CsvTable h;
    h.header = {"iteration", "residual_norm"};
    h.values = Matrix(sol.newton.history.size(), 2);
    for (std::size_t k = 0; k < sol.newton.history.size(); ++k) {
      h.values(k, 0) = static_cast<double>(k);
      h.values(k, 1) = sol.newton.history[k];
    }
    save_csv_table(out / "newton_history.csv", h);
  }

  std::cout << command << " " << p.name << " " << scale_name << ": " << to_string(sol.newton.status) << " in "
            << sol.newton.iterations << " iterations, tf = " << fmt(phys.t.back()) << ", verification "
            << (passed ? "passed" : "FAILED") << "\n";
  if (!passed) std::cerr << "verification failed; see " << (out / "report.json").string() << "\n";
  return passed ? kOk : kVerify;
}

int cmd_demo(const std::string& name, const std::string& scale, const Common& c) {
  const OCProblem p = builtin_problem(name);
  if (!is_builtin(builtin_scale_names(), scale))
    throw UsageError("unknown builtin scale set '" + scale + "'; builtins: " + joined(builtin_scale_names()));
  return solve_and_report(p, builtin_scales(scale, p), scale, builtin_guess(name), c, "demo");
}

int cmd_solve(const std::string& problem, const std::string& scale, const std::string& guess, const Common& c) {
  const OCProblem p = resolve_problem(problem);
  const ScaleSet s = resolve_scales(scale, p);
  const Guess g = guess.empty() && is_builtin(builtin_problem_names(), problem) ? builtin_guess(problem)
                                                                              : resolve_guess(guess, p);
  return solve_and_report(p, s, scale.empty() ? "unscaled" : scale, g, c, "solve");
}

int cmd_verify(const std::string& problem, const std::string& traj, const std::string& dual, std::string nu,
               const Common& c) {
  const OCProblem p = resolve_problem(problem);
  for (const auto& f : {traj, dual})
    if (!fs::exists(f)) throw UsageError("file '" + f + "' does not exist");
  if (nu.empty()) nu = (fs::path(dual).parent_path() / "nu.json").string();
  if (!fs::exists(nu)) throw UsageError("endpoint multiplier file '" + nu + "' does not exist (use --nu)");
  const Trajectory tr = load_trajectory_csv(traj, p);
  DualTrajectory d = load_dual_csv(dual, p);
  d.nu = nu_from_json(read_json_file(nu), p.ne());
  const auto rep = verify(p, tr, d, ToleranceSet{c.tol, c.grid_tol});
  const fs::path out = prepare_out(c);
  json j = to_json(rep);
  j["problem"] = p.name;
  write_json_file(j, out / "report.json");
  std::size_t failed = 0;
  for (const auto& g : rep.groups) failed += !g.passed && !g.exempt;
  std::cout << "verify " << p.name << ": " << (rep.passed ? "passed" : "FAILED") << " (" << rep.groups.size() - failed
            << "/" << rep.groups.size() << " groups within tolerance)\n";
  for (const auto& g : rep.groups)
    if (!g.passed && !g.exempt) std::cerr << g.name << " = " << g.value << " > " << g.tolerance << "\n";
  return rep.passed ? kOk : kVerify;
}

int cmd_balance(const std::string& problem, const std::string& scale, const std::string& guess, int max_iter,
                const Common& c) {
  const OCProblem p = resolve_problem(problem);
  const ScaleSet s0 = resolve_scales(scale, p);
  const Guess g = guess.empty() && is_builtin(builtin_problem_names(), problem) ? builtin_guess(problem)
                                                                              : resolve_guess(guess, p);
  const fs::path out = prepare_out(c);
  const auto res = balance_iterate(p, s0, g, max_iter, bvp_options(c));
  write_json_file(to_json(res), out / "balance_history.json");
  write_json_file(scale_set_to_json(res.scales()), out / "balanced_scales.json");
  const auto& best = res.history[res.best];
  write_json_file(to_json(best.report), out / "magnitude.json");
  save_trajectory_csv(out / "trajectory.csv", res.solution.solved, res.solution.trajectory);
  save_dual_csv(out / "dual.csv", res.solution.solved, res.solution.dual);
  write_json_file(nu_to_json(res.solution.dual.nu), out / "nu.json");
  if (res.failure) std::cerr << *res.failure << "\n";
  std::cout << "balance " << p.name << ": score " << fmt(res.history.front().report.score, 3) << " -> "
            << fmt(best.report.score, 3) << " after " << res.history.size() << " solves ("
            << (best.report.balanced() ? "balanced" : "not balanced") << ")\n";
  return kOk;
}

Matrix states_matching(const CsvTable& states, const ScaleSequence& s, const std::string& file) {
  if (states.header.empty() || states.header[0] != "t")
    throw SchemaError(file, "first column must be 't'");
  if (states.values.cols() != s.dim() + 1 || states.values.rows() != s.size())
    throw SchemaError(file, "expected " + std::to_string(s.size()) + " rows of t plus " + std::to_string(s.dim()) +
                                " components");
  Matrix x(s.size(), s.dim());
  for (std::size_t k = 0; k < s.size(); ++k) {
    const double tk = states.values(k, 0);
    if (std::fabs(tk - s.t[k]) > 1e-12 * std::max(1.0, std::fabs(tk)))
      throw SchemaError(file + ":" + std::to_string(k + 2), "time differs from the scale table");
    for (std::size_t i = 0; i < s.dim(); ++i) x(k, i) = states.values(k, i + 1);
  }
  return x;
}

void require_file(const std::string& f) {
  if (!fs::exists(f)) throw UsageError("file '" + f + "' does not exist");
}

int cmd_audit_sequences(const std::string& kind, const std::string& scales, const std::string& states, double pt,
                        const Common& c) {
  require_file(scales);
  require_file(states);
  const ScaleSequence s = scale_sequence_from_table(load_csv_table(scales));
  const CsvTable st = load_csv_table(states);
  const Matrix x = states_matching(st, s, states);
  const fs::path out = prepare_out(c);
  std::vector<std::string> names(st.header.begin() + 1, st.header.end());
  CsvTable dump;
  dump.header.push_back("t");
  Vec sup;
  if (kind == "discrete") {
    const auto rep = discrete_scaling_error(s, x);
    write_json_file(to_json(rep), out / "audit.json");
    sup = rep.sup_norm;
    for (const auto& n : names) dump.header.push_back("error_" + n);
    dump.values = Matrix(rep.error.rows(), names.size() + 1);
    for (std::size_t k = 0; k < rep.error.rows(); ++k) {
      dump.values(k, 0) = s.t[k];
      for (std::size_t i = 0; i < names.size(); ++i) dump.values(k, i + 1) = rep.error(k, i);
    }
  } else {
    const auto rep = additional_dynamics(s, x, pt);
    write_json_file(to_json(rep), out / "audit.json");
    sup = rep.sup_norm;
    for (const auto& n : names) dump.header.push_back("term_" + n);
    dump.values = Matrix(rep.term.rows(), names.size() + 1);
    for (std::size_t k = 0; k < rep.term.rows(); ++k) {
      dump.values(k, 0) = s.t[k];
      for (std::size_t i = 0; i < names.size(); ++i) dump.values(k, i + 1) = rep.term(k, i);
    }
  }
  if (c.dump) save_csv_table(out / "audit_points.csv", dump);
  double worst = 0.0;
  for (double v : sup) worst = std::max(worst, v);
  std::cout << "audit " << kind << ": sup-norm " << fmt(worst) << " over " << names.size() << " components\n";
  return kOk;
}

int cmd_audit_spectral(const std::string& problem, const std::string& traj, const std::string& scale,
                       double rel_tol, const Common& c) {
  const OCProblem p = resolve_problem(problem);
  require_file(traj);
  const ScaleSet s = resolve_scales(scale, p);
  const Trajectory tr = load_trajectory_csv(traj, p);
  const auto rep = sensitivity_invariance(p, s, tr, rel_tol);
  const fs::path out = prepare_out(c);
  write_json_file(to_json(rep), out / "audit.json");
  if (c.dump) {
    CsvTable d;
    d.header = {"t", "unscaled", "scaled", "similarity"};
    d.values = Matrix(tr.size(), 4);
    for (std::size_t k = 0; k < tr.size(); ++k) {
      d.values(k, 0) = tr.t[k];
      d.values(k, 1) = rep.unscaled[k];
      d.values(k, 2) = rep.scaled[k];
      d.values(k, 3) = rep.similarity[k];
    }
    save_csv_table(out / "audit_points.csv", d);
  }
  std::cout << "audit spectral " << p.name << ": " << (rep.invariant() ? "invariant" : "NOT invariant")
            << ", max rel. error " << fmt(std::max(rep.max_rel_error_scaled, rep.max_rel_error_similarity), 3)
            << "\n";
  return rep.invariant() ? kOk : kVerify;
}

}  // namespace

int main(int argc, char** argv) {
  const auto start = std::chrono::steady_clock::now();
  const std::vector<std::string> args(argv, argv + argc);

  CLI::App app{"Scale, balance, solve and verify optimal control problems"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  Common c;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--out", c.out, "Output directory")->capture_default_str();
    sub->add_option("--tol", c.tol, "Algebraic residual tolerance")->capture_default_str();
    sub->add_option("--grid-tol", c.grid_tol, "Grid-defect tolerance")->capture_default_str();
    sub->add_flag("--dump", c.dump, "Also write per-point CSV");
  };
  auto add_solver = [&](CLI::App* sub) {
    sub->add_option("--seed", c.seed, "Multistart seed")->capture_default_str();
    sub->add_option("--multistart", c.multistart, "Extra Latin-hypercube starts")->capture_default_str();
    sub->add_option("--grid", c.grid, "Output grid points")->capture_default_str()->check(CLI::Range(2, 1000000));
  };

  std::string name = "brachistochrone", scale, problem, guess, traj, dual, nu, scales_csv, states_csv;
  int max_iter = 3;
  double pt = 1.0, spectral_tol = 1e-8;

  auto* demo = app.add_subcommand("demo", "Solve a builtin problem under a builtin scale set");
  demo->add_option("name", name, "Builtin problem")->capture_default_str();
  demo->add_option("--scale", scale, "unscaled, set1, set2 or set3")->default_str("unscaled");
  add_common(demo);
  add_solver(demo);

  auto* solve = app.add_subcommand("solve", "Solve a problem file by indirect shooting");
  solve->add_option("problem", problem, "Problem JSON or builtin name")->required();
  solve->add_option("--scale", scale, "Scale-set JSON or builtin name");
  solve->add_option("--guess", guess, "Guess JSON");
  add_common(solve);
  add_solver(solve);

  auto* ver = app.add_subcommand("verify", "Check the necessary conditions on a sampled solution");
  ver->add_option("problem", problem, "Problem JSON or builtin name")->required();
  ver->add_option("trajectory", traj, "Trajectory CSV")->required();
  ver->add_option("dual", dual, "Dual CSV")->required();
  ver->add_option("--nu", nu, "Endpoint multipliers JSON (default: nu.json next to the dual CSV)");
  add_common(ver);

  auto* bal = app.add_subcommand("balance", "Iterate scale proposals until the solution is balanced");
  bal->add_option("problem", problem, "Problem JSON or builtin name")->required();
  bal->add_option("--scale", scale, "Starting scale set");
  bal->add_option("--guess", guess, "Guess JSON");
  bal->add_option("--max-iter", max_iter, "Maximum proposals")->capture_default_str();
  add_common(bal);
  add_solver(bal);

  auto* audit = app.add_subcommand("audit", "Audit scaling effects");
  audit->require_subcommand(1);
  auto* disc = audit->add_subcommand("discrete", "Error of differencing with grid-varying scales");
  disc->add_option("scales", scales_csv, "Scale CSV: t,P_*[,q_*]")->required();
  disc->add_option("states", states_csv, "Scaled samples CSV: t,<components>")->required();
  add_common(disc);
  auto* add = audit->add_subcommand("additional", "Spurious dynamics from time-varying scales");
  add->add_option("scales", scales_csv, "Scale CSV: t,P_*[,q_*]")->required();
  add->add_option("states", states_csv, "Scaled samples CSV: t,<components>")->required();
  add->add_option("--pt", pt, "Time scale")->capture_default_str();
  add_common(add);
  auto* spec = audit->add_subcommand("spectral", "Scale invariance of the time-weighted spectral radius");
  spec->add_option("problem", problem, "Problem JSON or builtin name")->required();
  spec->add_option("trajectory", traj, "Physical trajectory CSV")->required();
  spec->add_option("--scale", scale, "Scale-set JSON or builtin name")->required();
  spec->add_option("--rel-tol", spectral_tol, "Relative tolerance of the invariance")->capture_default_str();
  add_common(spec);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  int code = kOk;
  try {
    if (*demo)
      code = cmd_demo(name, scale.empty() ? "unscaled" : scale, c);
    else if (*solve)
      code = cmd_solve(problem, scale, guess, c);
    else if (*ver)
      code = cmd_verify(problem, traj, dual, nu, c);
    else if (*bal)
      code = cmd_balance(problem, scale, guess, max_iter, c);
    else if (*disc)
      code = cmd_audit_sequences("discrete", scales_csv, states_csv, pt, c);
    else if (*add)
      code = cmd_audit_sequences("additional", scales_csv, states_csv, pt, c);
    else if (*spec)
      code = cmd_audit_spectral(problem, traj, scale, spectral_tol, c);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const SchemaError& e) {
    std::cerr << "schema error: " << e.what() << "\n";
    return kUsage;
  } catch (const ProblemError& e) {
    std::cerr << "invalid problem: " << e.what() << "\n";
    return kUsage;
  } catch (const ParseError& e) {
    std::cerr << "expression error: " << e.what() << "\n";
    return kUsage;
  } catch (const ShootingError& e) {
    std::cerr << "unsupported problem structure: " << e.what() << "\n";
    return kUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kNumeric;
  }
  try {
    if (!(*ver)) write_meta(fs::path(c.out), args, start);
  } catch (const std::exception& e) {
    std::cerr << "warning: could not write meta.json: " << e.what() << "\n";
  }
  return code;
}
