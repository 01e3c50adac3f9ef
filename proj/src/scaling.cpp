#include "ocscale/scaling.hpp"

#include <charconv>
#include <cmath>
#include <map>

namespace ocscale {
namespace {

void check_vector(const Vec& v, std::size_t n, const char* name, bool positive) {
  if (v.size() != n)
    throw ScaleError(std::string(name) + " has length " + std::to_string(v.size()) + ", expected " + std::to_string(n));
  if (!positive) {
    for (std::size_t i = 0; i < n; ++i)
      if (!std::isfinite(v[i])) throw ScaleError(std::string(name) + " component " + std::to_string(i + 1) + " is not finite");
    return;
  }
  for (std::size_t i = 0; i < n; ++i)
    if (!(v[i] > 0.0) || !std::isfinite(v[i]))
      throw ScaleError(std::string(name) + " component " + std::to_string(i + 1) + " must be positive");
}

// num/den * e, merging into a leading constant factor so that a scaled
// coefficient is computed as (c*num)/den with no extra rounding.
Expr times_ratio(const Expr& e, double num, double den) {
  if (num == den) return e;
  if (e.is_constant()) return Expr::constant(e.value() * num / den);
  if (e.op() == Op::Mul && e.lhs().is_constant())
    return Expr::constant(e.lhs().value() * num / den) * e.rhs();
  return Expr::constant(num / den) * e;
}

// (g - q)/P with the offset folded into a trailing constant.
Expr affine_inverse(const Expr& g, double P, double q) {
  const Expr scaled = times_ratio(g, 1.0, P);
  if (q == 0.0) return scaled;
  return scaled - Expr::constant(q / P);
}

Expr affine(const std::string& name, double P, double q) {
  return Expr::constant(P) * Expr::variable(name) + Expr::constant(q);
}

std::string shortest(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string unit_or_default(const std::vector<std::string>& labels, std::size_t i, const std::string& fallback) {
  if (i < labels.size() && !labels[i].empty()) return labels[i];
  return fallback + "-units";
}

// Parenthesize a compound label used as a divisor.
std::string divisor(const std::string& unit) {
  if (unit.find_first_of("/* ") == std::string::npos) return unit;
  return "(" + unit + ")";
}

std::string simplified(const std::string& raw) { return simplify_unit(raw).value_or(raw); }

std::vector<std::string> designer_labels(const std::vector<std::string>& labels, const Vec& P) {
  if (labels.empty()) return {};
  std::vector<std::string> out;
  for (std::size_t i = 0; i < labels.size(); ++i) out.push_back(designer_unit(P[i], labels[i]));
  return out;
}

ScaleSet brachistochrone_set(const OCProblem& p, Vec Px, double pt, double pJ, Vec Pe) {
  if (p.nx() != 3 || p.nu() != 1 || p.ne() != 6 || p.nh() != 0)
    throw ScaleError("builtin scale sets set1..set3 apply to the Brachistochrone dimensions (nx=3, nu=1, ne=6)");
  ScaleSet s = identity_scales(p);
  s.Px = std::move(Px);
  s.pt = pt;
  s.pJ = pJ;
  s.Pe = std::move(Pe);
  return s;
}

void require_label(const Trajectory& tr, bool scaled, const char* what) {
  if ((tr.label == SolutionLabel::Scaled) != scaled)
    throw std::invalid_argument(std::string(what) + ": trajectory is labelled " + to_string(tr.label));
}

void require_label(const DualTrajectory& d, bool scaled, const char* what) {
  if ((d.label == SolutionLabel::Scaled) != scaled)
    throw std::invalid_argument(std::string(what) + ": dual trajectory is labelled " + to_string(d.label));
}

void check_dual_dims(const DualTrajectory& d, const ScaleSet& s) {
  if (d.lambda.cols() != s.Px.size()) throw ScaleError("costate width does not match Px");
  if (d.mu.rows() > 0 && d.mu.cols() != s.Ph.size()) throw ScaleError("path multiplier width does not match Ph");
  if (!d.nu.empty() && d.nu.size() != s.Pe.size()) throw ScaleError("endpoint multiplier length does not match Pe");
}

}  // namespace

ScaleSet identity_scales(const OCProblem& p) {
  ScaleSet s;
  s.Px.assign(p.nx(), 1.0);
  s.qx.assign(p.nx(), 0.0);
  s.Pu.assign(p.nu(), 1.0);
  s.qu.assign(p.nu(), 0.0);
  s.Pe.assign(p.ne(), 1.0);
  s.qe.assign(p.ne(), 0.0);
  s.Ph.assign(p.nh(), 1.0);
  s.qh.assign(p.nh(), 0.0);
  return s;
}

void check_scales(const OCProblem& p, const ScaleSet& s) {
  check_vector(s.Px, p.nx(), "Px", true);
  check_vector(s.qx, p.nx(), "qx", false);
  check_vector(s.Pu, p.nu(), "Pu", true);
  check_vector(s.qu, p.nu(), "qu", false);
  check_vector(s.Pe, p.ne(), "Pe", true);
  check_vector(s.qe, p.ne(), "qe", false);
  check_vector(s.Ph, p.nh(), "Ph", true);
  check_vector(s.qh, p.nh(), "qh", false);
  if (!(s.pt > 0.0) || !std::isfinite(s.pt)) throw ScaleError("pt must be positive");
  if (!(s.pJ > 0.0) || !std::isfinite(s.pJ)) throw ScaleError("pJ must be positive");
  if (!std::isfinite(s.qt) || !std::isfinite(s.qJ)) throw ScaleError("qt and qJ must be finite");
}

const std::vector<std::string>& builtin_scale_names() {
  static const std::vector<std::string> names{"unscaled", "set1", "set2", "set3"};
  return names;
}

ScaleSet builtin_scales(const std::string& name, const OCProblem& p) {
  if (name == "unscaled" || name == "identity") return identity_scales(p);
  if (name == "set1") return brachistochrone_set(p, {100, 20, 10}, 10, 10, {10, 100, 20, 10, 100, 20});
  if (name == "set2") return brachistochrone_set(p, {1000, 160, 20}, 10, 10, {10, 1000, 160, 20, 1000, 160});
  if (name == "set3") return brachistochrone_set(p, {1000, 320, 80}, 1, 1, {1, 1000, 320, 80, 1000, 320});
  std::string known;
  for (const auto& n : builtin_scale_names()) known += (known.empty() ? "" : ", ") + n;
  throw ScaleError("unknown scale set '" + name + "' (builtins: " + known + ")");
}

CovectorScales covector_scales(const ScaleSet& s) {
  CovectorScales c;
  for (double P : s.Px) c.Plam.push_back(s.pJ / P);
  for (double P : s.Ph) c.Pmu.push_back((s.pJ / s.pt) / P);
  for (double P : s.Pe) c.Pnu.push_back(s.pJ / P);
  return c;
}

OCProblem scale_problem(const OCProblem& p, const ScaleSet& s) {
  validate(p);
  check_scales(p, s);

  std::map<std::string, Expr> running, endpoint;
  for (std::size_t i = 0; i < p.nx(); ++i) {
    const auto& n = p.state_names[i];
    running[n] = affine(n, s.Px[i], s.qx[i]);
    endpoint[initial_var(n)] = affine(initial_var(n), s.Px[i], s.qx[i]);
    endpoint[final_var(n)] = affine(final_var(n), s.Px[i], s.qx[i]);
  }
  for (std::size_t j = 0; j < p.nu(); ++j) running[p.control_names[j]] = affine(p.control_names[j], s.Pu[j], s.qu[j]);
  running[kTimeVar] = affine(kTimeVar, s.pt, s.qt);
  endpoint[kInitialTimeVar] = affine(kInitialTimeVar, s.pt, s.qt);
  endpoint[kFinalTimeVar] = affine(kFinalTimeVar, s.pt, s.qt);

  OCProblem out = p;
  out.name = p.name.empty() ? "scaled" : p.name + "_scaled";
  out.running_cost = times_ratio(substitute(p.running_cost, running), s.pt, s.pJ);
  out.endpoint_cost = affine_inverse(substitute(p.endpoint_cost, endpoint), s.pJ, s.qJ);
  for (std::size_t i = 0; i < p.nx(); ++i)
    out.dynamics[i] = times_ratio(substitute(p.dynamics[i], running), s.pt, s.Px[i]);
  for (std::size_t i = 0; i < p.ne(); ++i)
    out.events[i] = affine_inverse(substitute(p.events[i], endpoint), s.Pe[i], s.qe[i]);
  for (std::size_t i = 0; i < p.nh(); ++i) {
    out.path[i] = affine_inverse(substitute(p.path[i], running), s.Ph[i], s.qh[i]);
    out.path_lower[i] = (p.path_lower[i] - s.qh[i]) / s.Ph[i];
    out.path_upper[i] = (p.path_upper[i] - s.qh[i]) / s.Ph[i];
  }
  std::tie(out.events_lower, out.events_upper) = scale_endpoint_bounds(p, s);
  if (p.t0_fixed) out.t0_fixed = (*p.t0_fixed - s.qt) / s.pt;

  out.units.states = designer_labels(p.units.states, s.Px);
  out.units.controls = designer_labels(p.units.controls, s.Pu);
  out.units.events = designer_labels(p.units.events, s.Pe);
  out.units.path = designer_labels(p.units.path, s.Ph);
  out.units.cost = designer_unit(s.pJ, p.units.cost);
  out.units.time = designer_unit(s.pt, p.units.time);
  return out;
}

std::pair<Vec, Vec> scale_endpoint_bounds(const OCProblem& p, const ScaleSet& s) {
  check_scales(p, s);
  Vec lo(p.ne()), hi(p.ne());
  for (std::size_t i = 0; i < p.ne(); ++i) {
    lo[i] = (p.events_lower[i] - s.qe[i]) / s.Pe[i];
    hi[i] = (p.events_upper[i] - s.qe[i]) / s.Pe[i];
  }
  return {lo, hi};
}

std::string designer_unit(double P, const std::string& unit) {
  if (P == 1.0) return unit;
  return shortest(P) + " " + unit;
}

Trajectory descale_primal(const Trajectory& tr, const ScaleSet& s) {
  require_label(tr, true, "descale_primal");
  if (tr.x.cols() != s.Px.size() || tr.u.cols() != s.Pu.size()) throw ScaleError("trajectory width does not match the scale set");
  Trajectory out = tr;
  out.label = SolutionLabel::Descaled;
  for (std::size_t k = 0; k < tr.size(); ++k) {
    out.t[k] = std::fma(s.pt, tr.t[k], s.qt);
    for (std::size_t i = 0; i < s.Px.size(); ++i) out.x(k, i) = std::fma(s.Px[i], tr.x(k, i), s.qx[i]);
    for (std::size_t j = 0; j < s.Pu.size(); ++j) out.u(k, j) = std::fma(s.Pu[j], tr.u(k, j), s.qu[j]);
  }
  return out;
}

Trajectory rescale_primal(const Trajectory& tr, const ScaleSet& s) {
  require_label(tr, false, "rescale_primal");
  if (tr.x.cols() != s.Px.size() || tr.u.cols() != s.Pu.size()) throw ScaleError("trajectory width does not match the scale set");
  Trajectory out = tr;
  out.label = SolutionLabel::Scaled;
  for (std::size_t k = 0; k < tr.size(); ++k) {
    out.t[k] = (tr.t[k] - s.qt) / s.pt;
    for (std::size_t i = 0; i < s.Px.size(); ++i) out.x(k, i) = (tr.x(k, i) - s.qx[i]) / s.Px[i];
    for (std::size_t j = 0; j < s.Pu.size(); ++j) out.u(k, j) = (tr.u(k, j) - s.qu[j]) / s.Pu[j];
  }
  return out;
}

DualTrajectory descale_dual(const DualTrajectory& d, const ScaleSet& s) {
  require_label(d, true, "descale_dual");
  check_dual_dims(d, s);
  const CovectorScales c = covector_scales(s);
  const double h_scale = s.pJ / s.pt;
  DualTrajectory out = d;
  out.label = SolutionLabel::Descaled;
  for (std::size_t k = 0; k < d.size(); ++k) {
    out.t[k] = std::fma(s.pt, d.t[k], s.qt);
    for (std::size_t i = 0; i < c.Plam.size(); ++i) out.lambda(k, i) = c.Plam[i] * d.lambda(k, i);
    if (d.mu.rows() > 0)
      for (std::size_t i = 0; i < c.Pmu.size(); ++i) out.mu(k, i) = c.Pmu[i] * d.mu(k, i);
    out.hamiltonian[k] = h_scale * d.hamiltonian[k];
  }
  for (std::size_t i = 0; i < d.nu.size(); ++i) out.nu[i] = c.Pnu[i] * d.nu[i];
  return out;
}

DualTrajectory rescale_dual(const DualTrajectory& d, const ScaleSet& s) {
  require_label(d, false, "rescale_dual");
  check_dual_dims(d, s);
  const CovectorScales c = covector_scales(s);
  const double h_scale = s.pJ / s.pt;
  DualTrajectory out = d;
  out.label = SolutionLabel::Scaled;
  for (std::size_t k = 0; k < d.size(); ++k) {
    out.t[k] = (d.t[k] - s.qt) / s.pt;
    for (std::size_t i = 0; i < c.Plam.size(); ++i) out.lambda(k, i) = d.lambda(k, i) / c.Plam[i];
    if (d.mu.rows() > 0)
      for (std::size_t i = 0; i < c.Pmu.size(); ++i) out.mu(k, i) = d.mu(k, i) / c.Pmu[i];
    out.hamiltonian[k] = d.hamiltonian[k] / h_scale;
  }
  for (std::size_t i = 0; i < d.nu.size(); ++i) out.nu[i] = d.nu[i] / c.Pnu[i];
  return out;
}

CovectorUnits covector_units(const OCProblem& p) {
  CovectorUnits out;
  const std::string& cu = p.units.cost;
  const std::string& tu = p.units.time;
  for (std::size_t i = 0; i < p.nx(); ++i) {
    out.lambda.push_back(cu + "/" + divisor(unit_or_default(p.units.states, i, p.state_names[i])));
    out.lambda_simplified.push_back(simplified(out.lambda.back()));
  }
  for (std::size_t i = 0; i < p.nh(); ++i) {
    out.mu.push_back("(" + cu + "/" + divisor(tu) + ")/" + divisor(unit_or_default(p.units.path, i, "h" + std::to_string(i + 1))));
    out.mu_simplified.push_back(simplified(out.mu.back()));
  }
  for (std::size_t i = 0; i < p.ne(); ++i) {
    out.nu.push_back(cu + "/" + divisor(unit_or_default(p.units.events, i, "e" + std::to_string(i + 1))));
    out.nu_simplified.push_back(simplified(out.nu.back()));
  }
  out.hamiltonian = cu + "/" + divisor(tu);
  out.hamiltonian_simplified = simplified(out.hamiltonian);
  out.hamiltonian_dimensionless = cu == tu;
  return out;
}

CovectorUnits covector_units(const OCProblem& p, const ScaleSet& s) { return covector_units(scale_problem(p, s)); }

}  // namespace ocscale
