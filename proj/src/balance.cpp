#include "ocscale/balance.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "ocscale/conditions.hpp"

namespace ocscale {

const char* to_string(ComponentKind k) {
  switch (k) {
    case ComponentKind::State:
      return "state";
    case ComponentKind::Control:
      return "control";
    case ComponentKind::Costate:
      return "costate";
    case ComponentKind::PathMultiplier:
      return "path_multiplier";
    case ComponentKind::Hamiltonian:
      return "hamiltonian";
    case ComponentKind::EventMultiplier:
      return "event_multiplier";
  }
  return "?";
}

const ComponentExtrema& MagnitudeReport::component(const std::string& name) const {
  for (const auto& c : components)
    if (c.name == name) return c;
  throw std::out_of_range("no component '" + name + "' in magnitude report");
}

namespace {

ComponentExtrema extrema(std::string name, ComponentKind kind, const Vec& v) {
  ComponentExtrema c;
  c.name = std::move(name);
  c.kind = kind;
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  c.min = *lo;
  c.max = *hi;
  c.max_abs = std::max(std::fabs(c.min), std::fabs(c.max));
  return c;
}

bool scored(ComponentKind k) {
  return k == ComponentKind::State || k == ComponentKind::Control || k == ComponentKind::Costate ||
         k == ComponentKind::PathMultiplier;
}

}  // namespace

MagnitudeReport magnitude_report(const OCProblem& p, const Trajectory& tr, const DualTrajectory& d) {
  if (tr.size() == 0) throw std::invalid_argument("magnitude_report: empty grid");
  check_shapes(p, tr, d);
  MagnitudeReport rep;
  rep.time_span = tr.t.back() - tr.t.front();
  for (std::size_t i = 0; i < p.nx(); ++i)
    rep.components.push_back(extrema(p.state_names[i], ComponentKind::State, tr.x.column(i)));
  for (std::size_t j = 0; j < p.nu(); ++j)
    rep.components.push_back(extrema(p.control_names[j], ComponentKind::Control, tr.u.column(j)));
  for (std::size_t i = 0; i < p.nx(); ++i)
    rep.components.push_back(extrema("lam_" + p.state_names[i], ComponentKind::Costate, d.lambda.column(i)));
  for (std::size_t k = 0; k < p.nh(); ++k)
    rep.components.push_back(extrema("mu_" + std::to_string(k + 1), ComponentKind::PathMultiplier, d.mu.column(k)));
  rep.components.push_back(extrema("H", ComponentKind::Hamiltonian, d.hamiltonian));
  for (std::size_t k = 0; k < d.nu.size(); ++k)
    rep.components.push_back(extrema("nu_" + std::to_string(k + 1), ComponentKind::EventMultiplier, Vec{d.nu[k]}));

  double hi = 0.0, lo = std::numeric_limits<double>::infinity();
  for (const auto& c : rep.components) {
    if (!scored(c.kind)) continue;
    if (c.max_abs == 0.0) {
      rep.notes.push_back(c.name + " is identically zero and is left out of the score");
      continue;
    }
    hi = std::max(hi, c.max_abs);
    lo = std::min(lo, c.max_abs);
  }
  rep.score = hi > 0.0 ? std::log10(hi / lo) : 0.0;
  if (hi == 0.0) rep.notes.push_back("every scored component is zero");
  return rep;
}

double round_one_figure(double v) {
  if (v == 0.0 || !std::isfinite(v)) return v;
  const double e = std::floor(std::log10(std::fabs(v)));
  double mag = std::pow(10.0, e);
  double digit = std::round(std::fabs(v) / mag);
  if (digit >= 10) {
    digit = 1;
    mag *= 10;
  }
  if (digit == 0) digit = 1;
  return std::copysign(digit * mag, v);
}

ScaleSet propose_scales(const OCProblem& p, const MagnitudeReport& rep, const ScaleSet& current, double target) {
  check_scales(p, current);
  if (!(target > 0)) throw std::invalid_argument("propose_scales: target must be positive");
  bool any = false;
  for (const auto& c : rep.components) any = any || c.max_abs > 0.0;
  if (!any) throw std::invalid_argument("propose_scales: every magnitude in the report is zero");

  ScaleSet s = current;
  auto update = [&](double P, double magnitude) { return magnitude > 0.0 ? round_one_figure(P * magnitude / target) : P; };
  for (std::size_t i = 0; i < p.nx(); ++i) s.Px[i] = update(current.Px[i], rep.component(p.state_names[i]).max_abs);
  for (std::size_t j = 0; j < p.nu(); ++j) s.Pu[j] = update(current.Pu[j], rep.component(p.control_names[j]).max_abs);
  s.pt = update(current.pt, rep.time_span);
  // Unscaled |H| = (pJ/pt)|H~|; choose pJ so that the new |H~| is the target.
  const double h_phys = current.pJ / current.pt * rep.component("H").max_abs;
  if (h_phys > 0.0) s.pJ = round_one_figure(s.pt * h_phys / target);

  // Pins inherit the scale of what they pin: e = a*v + c with
  // v = P v~ + q gives e~ = v~ for Pe = |a| P, qe = a q + c.
  const std::size_t nx = p.nx();
  for (std::size_t i = 0; i < p.ne(); ++i) {
    const auto pin = event_pin(p, i);
    if (!pin) continue;
    double P, q;
    if (pin->slot < 2 * nx) {
      P = s.Px[pin->slot % nx];
      q = s.qx[pin->slot % nx];
    } else {
      P = s.pt;
      q = s.qt;
    }
    s.Pe[i] = std::fabs(pin->slope) * P;
    s.qe[i] = pin->slope * q + pin->offset;
  }
  for (std::size_t k = 0; k < p.nh(); ++k) {
    if (p.path[k].op() != Op::Var) continue;
    const auto it = std::find(p.control_names.begin(), p.control_names.end(), p.path[k].name());
    if (it == p.control_names.end()) continue;
    const auto j = static_cast<std::size_t>(it - p.control_names.begin());
    s.Ph[k] = s.Pu[j];
    s.qh[k] = s.qu[j];
  }
  return s;
}

BalanceResult balance_iterate(const OCProblem& p, const ScaleSet& s0, const Guess& guess, int max_iter,
                              const BvpOptions& opts) {
  BalanceResult out;
  ScaleSet s = s0;
  Guess g = guess;
  std::vector<BvpSolution> solutions;
  for (int iter = 0;; ++iter) {
    BvpSolution sol;
    try {
      sol = solve_bvp(p, s, g, opts);
    } catch (const std::exception& e) {
      if (iter == 0) throw;
      out.failure = "solve failed at iterate " + std::to_string(iter) + ": " + e.what();
      break;
    }
    BalanceStep step;
    step.scales = s;
    step.report = magnitude_report(sol.solved, sol.trajectory, sol.dual);
    step.newton_iterations = sol.newton.iterations;
    const bool done = step.report.balanced() || iter >= max_iter;
    out.history.push_back(step);
    solutions.push_back(std::move(sol));
    if (done) break;

    // Next guess: this solution's initial costates and final time, physical.
    const auto& last = solutions.back();
    const bool scaled = last.trajectory.label == SolutionLabel::Scaled;
    const DualTrajectory d = scaled ? descale_dual(last.dual, s) : last.dual;
    g.lambda0.assign(d.lambda.row(0).begin(), d.lambda.row(0).end());
    g.tf = d.t.back();
    ScaleSet next = propose_scales(p, out.history.back().report, s);
    if (next == s) break;  // fixed point: another solve would repeat this one
    s = std::move(next);
  }
  for (std::size_t k = 1; k < out.history.size(); ++k)
    if (out.history[k].report.score < out.history[out.best].report.score) out.best = k;
  out.solution = std::move(solutions[out.best]);
  return out;
}

}  // namespace ocscale
