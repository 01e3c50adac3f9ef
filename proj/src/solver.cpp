#include "ocscale/solver.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "ocscale/linalg.hpp"

namespace ocscale {

// ---------------------------------------------------------------------------
// Dormand-Prince 5(4)

namespace {

constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192, a75 = -2187.0 / 6784, a76 = 11.0 / 84;
// Difference between the fifth- and fourth-order weights.
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200, e6 = 22.0 / 525,
                 e7 = -1.0 / 40;
// Dense output (Hairer, Norsett and Wanner).
constexpr double d1 = -12715105075.0 / 11282082432, d3 = 87487479700.0 / 32700410799,
                 d4 = -10690763975.0 / 1880347072, d5 = 701980252875.0 / 199316789632,
                 d6 = -1453857185.0 / 822651844, d7 = 69997945.0 / 29380423;

Vec eval_rhs(const OdeRhs& rhs, double t, const Vec& y) {
  Vec dy = rhs(t, y);
  if (dy.size() != y.size()) throw IntegrationError("right-hand side returned the wrong dimension");
  for (double v : dy)
    if (!std::isfinite(v)) {
      std::ostringstream os;
      os << "non-finite derivative at t = " << t;
      throw IntegrationError(os.str());
    }
  return dy;
}

double weighted_max(const Vec& v, const Vec& y, const IntegratorOptions& o) {
  double m = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) m = std::max(m, std::fabs(v[i]) / (o.abs_tol + o.rel_tol * std::fabs(y[i])));
  return m;
}

double initial_step(const OdeRhs& rhs, double t0, const Vec& y0, const Vec& f0, double span,
                    const IntegratorOptions& o) {
  const double d0 = weighted_max(y0, y0, o), d1n = weighted_max(f0, y0, o);
  double h0 = (d0 < 1e-5 || d1n < 1e-5) ? 1e-6 : 0.01 * d0 / d1n;
  h0 = std::min(h0, span);
  Vec y1(y0.size());
  for (std::size_t i = 0; i < y0.size(); ++i) y1[i] = y0[i] + h0 * f0[i];
  const Vec f1 = eval_rhs(rhs, t0 + h0, y1);
  Vec df(y0.size());
  for (std::size_t i = 0; i < y0.size(); ++i) df[i] = f1[i] - f0[i];
  const double d2 = weighted_max(df, y0, o) / h0;
  const double m = std::max(d1n, d2);
  const double h1 = m <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / m, 1.0 / 5);
  return std::min({100 * h0, h1, span});
}

}  // namespace

OdeSolution rk45_propagate(const OdeRhs& rhs, const Vec& y0, double t0, double tf, const Vec& sample_times,
                           const IntegratorOptions& o) {
  if (!(o.rel_tol > 0) || !(o.abs_tol > 0)) throw std::invalid_argument("integrator tolerances must be positive");
  if (!(tf > t0)) throw IntegrationError("final time must exceed initial time");
  const double slack = 1e-12 * std::max({1.0, std::fabs(t0), std::fabs(tf)});
  for (std::size_t k = 0; k < sample_times.size(); ++k) {
    if (sample_times[k] < t0 - slack || sample_times[k] > tf + slack)
      throw std::invalid_argument("sample time outside the integration interval");
    if (k > 0 && sample_times[k] < sample_times[k - 1]) throw std::invalid_argument("sample times must be nondecreasing");
  }

  const std::size_t n = y0.size();
  OdeSolution sol;
  sol.samples = Matrix(sample_times.size(), n);
  std::size_t next = 0;
  while (next < sample_times.size() && sample_times[next] <= t0) sol.samples.set_row(next++, y0);

  double t = t0;
  Vec y = y0;
  Vec k1 = eval_rhs(rhs, t, y);
  double h = initial_step(rhs, t0, y0, k1, tf - t0, o);
  Vec tmp(n), k2, k3, k4, k5, k6, k7, ynew(n), err(n);
  if (o.dense_stride > 0) {
    sol.step_times.push_back(t);
    sol.step_states.push_back(y);
  }

  std::size_t steps = 0;
  bool last = false;
  while (!last) {
    if (++steps > o.max_steps) throw IntegrationError("maximum number of integration steps exceeded");
    if (t + h >= tf || tf - (t + h) <= slack) {
      h = tf - t;
      last = true;
    }
    if (h <= 16 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::fabs(t)))
      throw IntegrationError("step size underflow");

    auto stage = [&](std::initializer_list<std::pair<double, const Vec*>> terms) {
      for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (const auto& [a, k] : terms) acc += a * (*k)[i];
        tmp[i] = y[i] + h * acc;
      }
      return tmp;
    };
    k2 = eval_rhs(rhs, t + c2 * h, stage({{a21, &k1}}));
    k3 = eval_rhs(rhs, t + c3 * h, stage({{a31, &k1}, {a32, &k2}}));
    k4 = eval_rhs(rhs, t + c4 * h, stage({{a41, &k1}, {a42, &k2}, {a43, &k3}}));
    k5 = eval_rhs(rhs, t + c5 * h, stage({{a51, &k1}, {a52, &k2}, {a53, &k3}, {a54, &k4}}));
    k6 = eval_rhs(rhs, t + h, stage({{a61, &k1}, {a62, &k2}, {a63, &k3}, {a64, &k4}, {a65, &k5}}));
    ynew = stage({{a71, &k1}, {a73, &k3}, {a74, &k4}, {a75, &k5}, {a76, &k6}});
    const double tnew = last ? tf : t + h;
    k7 = eval_rhs(rhs, tnew, ynew);

    double enorm = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      err[i] = h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] + e7 * k7[i]);
      const double sc = o.abs_tol + o.rel_tol * std::max(std::fabs(y[i]), std::fabs(ynew[i]));
      enorm = std::max(enorm, std::fabs(err[i]) / sc);
    }
    if (!std::isfinite(enorm)) throw IntegrationError("non-finite error estimate");

    if (enorm > 1.0) {
      ++sol.rejected;
      h *= std::max(0.2, 0.9 * std::pow(enorm, -0.2));
      last = false;
      continue;
    }

    // Dense output on [t, tnew] for samples that fall inside the step.
    while (next < sample_times.size() && (sample_times[next] <= tnew || (last && next < sample_times.size()))) {
      const double theta = last && sample_times[next] >= tf ? 1.0 : (sample_times[next] - t) / h;
      const double th1 = 1.0 - theta;
      for (std::size_t i = 0; i < n; ++i) {
        const double r2 = ynew[i] - y[i];
        const double r3 = h * k1[i] - r2;
        const double r4 = r2 - h * k7[i] - r3;
        const double r5 = h * (d1 * k1[i] + d3 * k3[i] + d4 * k4[i] + d5 * k5[i] + d6 * k6[i] + d7 * k7[i]);
        tmp[i] = theta == 1.0 ? ynew[i] : y[i] + theta * (r2 + th1 * (r3 + theta * (r4 + th1 * r5)));
      }
      sol.samples.set_row(next++, tmp);
    }

    ++sol.accepted;
    t = tnew;
    y = ynew;
    k1 = k7;
    if (o.dense_stride > 0 && (sol.accepted % o.dense_stride == 0 || last)) {
      sol.step_times.push_back(t);
      sol.step_states.push_back(y);
    }
    const double fac = enorm == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(enorm, -0.2), 0.2, 5.0);
    h *= fac;
  }
  sol.final_state = y;
  return sol;
}

// ---------------------------------------------------------------------------
// Newton

const char* to_string(NewtonStatus s) {
  switch (s) {
    case NewtonStatus::Converged:
      return "converged";
    case NewtonStatus::SmallStep:
      return "small-step";
    case NewtonStatus::SingularJacobian:
      return "singular-jacobian";
    case NewtonStatus::IterationLimit:
      return "iteration-limit";
    case NewtonStatus::LineSearchFailed:
      return "line-search-failed";
    case NewtonStatus::ResidualFailed:
      return "residual-failed";
  }
  return "?";
}

namespace {

double sumsq(const Vec& r) {
  double s = 0.0;
  for (double v : r) s += v * v;
  return s;
}

}  // namespace

NewtonResult newton_solve(const ResidualFn& fn, const Vec& guess, const NewtonOptions& o) {
  NewtonResult res;
  const std::size_t n = guess.size();
  Vec z = guess, r;
  try {
    r = fn(z);
  } catch (const std::exception& e) {
    res.z = z;
    res.status = NewtonStatus::ResidualFailed;
    res.residual_norm = std::numeric_limits<double>::infinity();
    res.message = std::string("residual failed at the initial guess: ") + e.what();
    return res;
  }
  if (r.size() != n) throw std::invalid_argument("newton_solve: residual dimension differs from unknowns");

  auto keep_best = [&](const Vec& zz, const Vec& rr) {
    const double nr = sup_norm(rr);
    if (res.z.empty() || nr < res.residual_norm) {
      res.z = zz;
      res.residual = rr;
      res.residual_norm = nr;
    }
  };
  keep_best(z, r);
  res.history.push_back(sup_norm(r));

  for (int iter = 0;; ++iter) {
    if (sup_norm(r) <= o.residual_tol) {
      res.status = NewtonStatus::Converged;
      return res;
    }
    if (iter >= o.max_iter) {
      res.status = NewtonStatus::IterationLimit;
      res.message = "no convergence in " + std::to_string(o.max_iter) + " iterations";
      return res;
    }

    Matrix J(n, n);
    for (std::size_t j = 0; j < n; ++j) {
      Vec zj = z;
      const double h = o.fd_step * std::max(1.0, std::fabs(z[j]));
      zj[j] += h;
      Vec rj;
      try {
        rj = fn(zj);
      } catch (const std::exception& e) {
        res.status = NewtonStatus::ResidualFailed;
        res.message = std::string("residual failed while differencing: ") + e.what();
        return res;
      }
      for (std::size_t i = 0; i < n; ++i) J(i, j) = (rj[i] - r[i]) / h;
    }
    const auto lu = lu_factor(J);
    res.condition = condition_number_1(J, lu);
    if (lu.singular || !(res.condition <= o.max_condition)) {
      res.status = NewtonStatus::SingularJacobian;
      res.message = "Jacobian condition estimate " + std::to_string(res.condition) + " exceeds limit";
      return res;
    }
    Vec dz = lu_solve(lu, r);
    for (double& v : dz) v = -v;

    // Armijo on f = |r|^2 / 2 along the Newton direction, whose slope is -2f.
    const double f0 = sumsq(r);
    double alpha = 1.0;
    bool accepted = false;
    Vec znew(n), rnew;
    for (int k = 0; k <= o.max_halvings; ++k, alpha *= 0.5) {
      for (std::size_t i = 0; i < n; ++i) znew[i] = z[i] + alpha * dz[i];
      double f1;
      try {
        rnew = fn(znew);
        f1 = sumsq(rnew);
      } catch (const std::exception&) {
        f1 = std::numeric_limits<double>::infinity();
      }
      if (std::isfinite(f1) && f1 <= (1.0 - 2e-4 * alpha) * f0) {
        accepted = true;
        break;
      }
    }
    ++res.iterations;
    if (!accepted) {
      res.status = NewtonStatus::LineSearchFailed;
      res.message = "line search failed after " + std::to_string(o.max_halvings) + " halvings";
      return res;
    }
    const double step = alpha * sup_norm(dz);
    z = znew;
    r = rnew;
    keep_best(z, r);
    res.history.push_back(sup_norm(r));
    if (sup_norm(r) <= o.residual_tol) {
      res.status = NewtonStatus::Converged;
      return res;
    }
    if (step <= o.step_tol * std::max(1.0, sup_norm(z))) {
      res.status = NewtonStatus::SmallStep;
      res.message = "step below tolerance";
      return res;
    }
  }
}

// ---------------------------------------------------------------------------
// Shooting

ShootingSpec reduce_to_shooting(const OCProblem& p) {
  validate(p);
  const std::size_t nx = p.nx();
  const auto slots = p.endpoint_arguments();
  ShootingSpec spec;
  spec.nx = nx;
  spec.slot_event.assign(2 * nx + 2, std::nullopt);
  Vec slot_value(2 * nx + 2, 0.0);

  for (std::size_t i = 0; i < p.ne(); ++i) {
    const std::string where = "event " + std::to_string(i + 1) + " (" + to_string(p.events[i]) + ")";
    if (p.events_lower[i] != p.events_upper[i])
      throw ShootingError(where + " is an inequality; shooting needs equality pins");
    const auto pin = event_pin(p, i);
    if (!pin) throw ShootingError(where + " does not pin a single endpoint variable");
    if (spec.slot_event[pin->slot])
      throw ShootingError(where + " pins " + slots[pin->slot] + " a second time");
    spec.slot_event[pin->slot] = i;
    slot_value[pin->slot] = (p.events_lower[i] - pin->offset) / pin->slope;
  }

  if (spec.slot_event[2 * nx]) {
    spec.t0 = slot_value[2 * nx];
  } else if (p.t0_fixed) {
    spec.t0 = *p.t0_fixed;
  } else {
    throw ShootingError("initial time is free; shooting needs a fixed t0");
  }
  spec.x0.resize(nx);
  for (std::size_t i = 0; i < nx; ++i) {
    if (!spec.slot_event[i]) throw ShootingError("initial state " + p.state_names[i] + " is free; shooting needs it pinned");
    spec.x0[i] = slot_value[i];
  }
  spec.xf_target.resize(nx);
  for (std::size_t i = 0; i < nx; ++i) {
    if (spec.slot_event[nx + i]) {
      spec.xf_target[i] = slot_value[nx + i];
      spec.row_names.push_back(final_var(p.state_names[i]) + " - target");
    } else {
      spec.row_names.push_back("lam_" + p.state_names[i] + "(tf) - dE/d" + final_var(p.state_names[i]));
    }
  }
  spec.tf_free = !spec.slot_event[2 * nx + 1];
  if (spec.tf_free) {
    spec.row_names.push_back("H(tf) + dE/dtf");
  } else {
    spec.tf_fixed = slot_value[2 * nx + 1];
    if (!(spec.tf_fixed > spec.t0)) throw ShootingError("pinned final time does not exceed initial time");
  }
  for (std::size_t k = 0; k < p.nh(); ++k)
    if (p.path[k].op() != Op::Var || std::find(p.control_names.begin(), p.control_names.end(), p.path[k].name()) ==
                                         p.control_names.end())
      throw ShootingError("path constraint " + std::to_string(k + 1) + " is not a bare control bound");
  return spec;
}

namespace {

std::string describe(const Vec& z) {
  std::ostringstream os;
  os.precision(17);
  os << "[";
  for (std::size_t i = 0; i < z.size(); ++i) os << (i ? ", " : "") << z[i];
  os << "]";
  return os.str();
}

OdeRhs costate_rhs(const Conditions& c, std::size_t nx) {
  const Vec hint(c.problem().nu(), 0.0);
  return [&c, nx, hint](double t, const Vec& y) {
    const CSpan x(y.data(), nx), lam(y.data() + nx, nx);
    const Vec u = c.minimize_hamiltonian(lam, {}, x, t, hint).u;
    Vec dy = c.dynamics(x, u, t);
    const Vec dl = c.adjoint_rhs(lam, {}, x, u, t);
    dy.insert(dy.end(), dl.begin(), dl.end());
    return dy;
  };
}

// Objective E + integral of F along the extremal started from z.
double objective(const Conditions& c, const ShootingSpec& spec, const Vec& z, const IntegratorOptions& opts) {
  const std::size_t nx = spec.nx;
  const OdeRhs base = costate_rhs(c, nx);
  const Vec hint(c.problem().nu(), 0.0);
  const OdeRhs rhs = [&](double t, const Vec& y) {
    const Vec core(y.begin(), y.end() - 1);
    Vec dy = base(t, core);
    const CSpan x(core.data(), nx), lam(core.data() + nx, nx);
    dy.push_back(c.running_cost(x, c.minimize_hamiltonian(lam, {}, x, t, hint).u, t));
    return dy;
  };
  const double tf = spec.tf_free ? z[nx] : spec.tf_fixed;
  Vec y0 = spec.x0;
  y0.insert(y0.end(), z.begin(), z.begin() + static_cast<std::ptrdiff_t>(nx));
  y0.push_back(0.0);
  const Vec y = rk45_propagate(rhs, y0, spec.t0, tf, {}, opts).final_state;
  const std::vector<std::string> slots = c.problem().endpoint_arguments();
  Env env;
  for (std::size_t i = 0; i < nx; ++i) {
    env[slots[i]] = spec.x0[i];
    env[slots[nx + i]] = y[i];
  }
  env[slots[2 * nx]] = spec.t0;
  env[slots[2 * nx + 1]] = tf;
  return c.problem().endpoint_cost.eval(env) + y.back();
}

double final_time(const ShootingSpec& spec, const Vec& z) { return spec.tf_free ? z[spec.nx] : spec.tf_fixed; }

Vec initial_state(const ShootingSpec& spec, const Vec& z) {
  Vec y0 = spec.x0;
  y0.insert(y0.end(), z.begin(), z.begin() + static_cast<std::ptrdiff_t>(spec.nx));
  return y0;
}

}  // namespace

Vec shooting_map(const Conditions& c, const ShootingSpec& spec, const Vec& z, const IntegratorOptions& opts) {
  const std::size_t nx = spec.nx;
  if (z.size() != spec.unknowns()) throw std::invalid_argument("shooting_map: wrong number of unknowns");
  const double tf = final_time(spec, z);
  OdeSolution sol;
  try {
    if (!(tf > spec.t0)) throw IntegrationError("final time does not exceed initial time");
    sol = rk45_propagate(costate_rhs(c, nx), initial_state(spec, z), spec.t0, tf, {}, opts);
  } catch (const IntegrationError& e) {
    throw IntegrationError(std::string(e.what()) + " (unknowns " + describe(z) + ")");
  } catch (const MinimizationError& e) {
    throw MinimizationError(std::string(e.what()) + " (unknowns " + describe(z) + ")", e.best_u(), e.best_h());
  }
  const Vec& y = sol.final_state;
  const CSpan xf(y.data(), nx), lf(y.data() + nx, nx);
  const Vec nu0(c.problem().ne(), 0.0);
  const Vec grad = c.endpoint_gradient(nu0, spec.x0, xf, spec.t0, tf);

  Vec r;
  r.reserve(spec.unknowns());
  for (std::size_t i = 0; i < nx; ++i)
    r.push_back(spec.xf_target[i] ? xf[i] - *spec.xf_target[i] : lf[i] - grad[nx + i]);
  if (spec.tf_free) {
    const Vec hint(c.problem().nu(), 0.0);
    const double H = c.minimize_hamiltonian(lf, {}, xf, tf, hint).hamiltonian;
    r.push_back(H + grad[2 * nx + 1]);
  }
  return r;
}

Vec scaled_unknowns(const ShootingSpec& spec, const ScaleSet& s, const Guess& guess) {
  if (guess.lambda0.size() != spec.nx)
    throw std::invalid_argument("guess has " + std::to_string(guess.lambda0.size()) + " initial costates, expected " +
                                std::to_string(spec.nx));
  const auto cv = covector_scales(s);
  Vec z(spec.nx);
  for (std::size_t i = 0; i < spec.nx; ++i) z[i] = guess.lambda0[i] / cv.Plam[i];
  if (spec.tf_free) z.push_back((guess.tf - s.qt) / s.pt);
  return z;
}

namespace {

std::vector<Vec> latin_hypercube(const Vec& center, std::size_t count, double spread, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t n = center.size();
  std::vector<Vec> pts(count, Vec(n));
  for (std::size_t j = 0; j < n; ++j) {
    std::vector<std::size_t> perm(count);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    const double half = spread * std::max(std::fabs(center[j]), 1e-3);
    for (std::size_t k = 0; k < count; ++k) {
      const double u = (static_cast<double>(perm[k]) + unit(rng)) / static_cast<double>(count);
      pts[k][j] = center[j] - half + 2 * half * u;
    }
  }
  return pts;
}

}  // namespace

BvpSolution solve_bvp(const OCProblem& p, const ScaleSet& s, const Guess& guess, const BvpOptions& opts) {
  check_scales(p, s);
  if (opts.grid_points < 2) throw std::invalid_argument("solve_bvp: need at least two grid points");
  const bool identity = s == identity_scales(p);
  BvpSolution out;
  out.scales = s;
  out.solved = identity ? p : scale_problem(p, s);
  out.spec = reduce_to_shooting(out.solved);
  const auto& spec = out.spec;
  const Conditions c(out.solved);
  const std::size_t nx = spec.nx;

  std::vector<Vec> starts{scaled_unknowns(spec, s, guess)};
  if (opts.multistart > 0) {
    auto more = latin_hypercube(starts[0], opts.multistart, opts.multistart_spread, opts.seed);
    starts.insert(starts.end(), more.begin(), more.end());
  }
  const ResidualFn fn = [&](const Vec& z) { return shooting_map(c, spec, z, opts.shooting.integrator); };
  std::vector<NewtonResult> results(starts.size());
  if (starts.size() == 1) {
    results[0] = newton_solve(fn, starts[0], opts.shooting.newton);
  } else {
    std::vector<std::future<NewtonResult>> jobs;
    for (const auto& z : starts)
      jobs.push_back(std::async(std::launch::async, [&, z] { return newton_solve(fn, z, opts.shooting.newton); }));
    for (std::size_t k = 0; k < jobs.size(); ++k) results[k] = jobs[k].get();
  }
  out.starts_tried = starts.size();

  // Several starts may reach different extremals: keep the cheapest,
  // preferring the earliest start on ties.
  std::optional<std::size_t> win;
  double win_cost = std::numeric_limits<double>::infinity();
  std::size_t best_any = 0;
  for (std::size_t k = 0; k < results.size(); ++k) {
    if (results[k].residual_norm < results[best_any].residual_norm) best_any = k;
    if (!results[k].converged()) continue;
    double cost;
    try {
      cost = starts.size() == 1 ? 0.0 : objective(c, spec, results[k].z, opts.shooting.integrator);
    } catch (const std::exception&) {
      continue;
    }
    if (!win || cost < win_cost - 1e-9 * std::max(1.0, std::fabs(win_cost))) {
      win = k;
      win_cost = cost;
    }
  }
  if (!win) {
    const auto& b = results[best_any];
    throw SolveError("shooting did not converge (" + std::string(to_string(b.status)) + ", residual " +
                         std::to_string(b.residual_norm) + (b.message.empty() ? "" : "; " + b.message) + ")",
                     b);
  }
  out.start_index = *win;
  out.newton = results[*win];
  const Vec& z = out.newton.z;

  // Sample the converged extremal on a uniform grid.
  const double t0 = spec.t0, tf = final_time(spec, z);
  const std::size_t n = opts.grid_points;
  Vec times(n);
  for (std::size_t k = 0; k < n; ++k) times[k] = t0 + (tf - t0) * static_cast<double>(k) / static_cast<double>(n - 1);
  times.back() = tf;
  const auto sol = rk45_propagate(costate_rhs(c, nx), initial_state(spec, z), t0, tf, times, opts.shooting.integrator);

  const auto& ps = out.solved;
  const std::size_t nu = ps.nu(), nh = ps.nh(), ne = ps.ne();
  auto& tr = out.trajectory;
  auto& d = out.dual;
  tr.t = times;
  d.t = times;
  tr.x = Matrix(n, nx);
  tr.u = Matrix(n, nu);
  d.lambda = Matrix(n, nx);
  d.mu = Matrix(n, nh);
  d.hamiltonian.resize(n);
  tr.label = d.label = identity ? SolutionLabel::Unscaled : SolutionLabel::Scaled;
  const Vec hint(nu, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    const CSpan row = sol.samples.row(k);
    const CSpan x = row.subspan(0, nx), lam = row.subspan(nx, nx);
    const auto m = c.minimize_hamiltonian(lam, {}, x, times[k], hint);
    tr.x.set_row(k, x);
    d.lambda.set_row(k, lam);
    tr.u.set_row(k, m.u);
    d.hamiltonian[k] = m.hamiltonian;
    if (nh > 0) {
      // Active control bounds: dH/du_j + mu_k = 0.
      const Vec g = c.stationarity({}, lam, x, m.u, times[k]);
      for (std::size_t q = 0; q < nh; ++q) {
        const auto j = static_cast<std::size_t>(
            std::find(ps.control_names.begin(), ps.control_names.end(), ps.path[q].name()) - ps.control_names.begin());
        const double tol = 1e-9 * std::max(1.0, std::fabs(m.u[j]));
        const bool active = m.u[j] <= ps.path_lower[q] + tol || m.u[j] >= ps.path_upper[q] - tol;
        d.mu(k, q) = active ? -g[j] : 0.0;
      }
    }
  }

  // Event multipliers from the transversality and Hamiltonian value
  // conditions of the pinned slots.
  d.nu.assign(ne, 0.0);
  const Vec zero_nu(ne, 0.0);
  const CSpan x0 = tr.x.row(0), xf = tr.x.row(n - 1);
  const Vec grad = c.endpoint_gradient(zero_nu, x0, xf, t0, tf);
  for (std::size_t slot = 0; slot < spec.slot_event.size(); ++slot) {
    if (!spec.slot_event[slot]) continue;
    const std::size_t i = *spec.slot_event[slot];
    const double a = event_pin(ps, i)->slope;
    if (slot < nx) {
      d.nu[i] = -(d.lambda(0, slot) + grad[slot]) / a;
    } else if (slot < 2 * nx) {
      d.nu[i] = (d.lambda(n - 1, slot - nx) - grad[slot]) / a;
    } else if (slot == 2 * nx) {
      d.nu[i] = (d.hamiltonian[0] - grad[slot]) / a;
    } else {
      d.nu[i] = -(d.hamiltonian[n - 1] + grad[slot]) / a;
    }
  }
  return out;
}

Matrix repropagate(const OCProblem& p, const Trajectory& tr, const IntegratorOptions& opts) {
  check_shapes(p, tr);
  const Conditions c(p);
  const std::size_t n = tr.size();
  if (n < 2) throw std::invalid_argument("repropagate: need at least two grid points");
  const Vec& ts = tr.t;
  auto control = [&](double t) {
    auto it = std::upper_bound(ts.begin(), ts.end(), t);
    std::size_t k = it == ts.begin() ? 0 : static_cast<std::size_t>(it - ts.begin()) - 1;
    k = std::min(k, n - 2);
    const double w = (t - ts[k]) / (ts[k + 1] - ts[k]);
    Vec u(p.nu());
    for (std::size_t j = 0; j < u.size(); ++j) u[j] = (1 - w) * tr.u(k, j) + w * tr.u(k + 1, j);
    return u;
  };
  const OdeRhs rhs = [&](double t, const Vec& x) { return c.dynamics(x, control(t), t); };
  const Vec x0(tr.x.row(0).begin(), tr.x.row(0).end());
  return rk45_propagate(rhs, x0, ts.front(), ts.back(), ts, opts).samples;
}

}  // namespace ocscale
