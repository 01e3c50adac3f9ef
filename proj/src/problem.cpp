#include "ocscale/problem.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

namespace ocscale {
namespace {

bool is_identifier(const std::string& s) {
  if (s.empty()) return false;
  if (!(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
  });
}

std::string describe(const std::string& what, std::size_t i) {
  return what + " " + std::to_string(i + 1);
}

void check_arguments(const Expr& e, const std::set<std::string>& allowed, const std::string& what,
                     std::vector<std::string>& out) {
  for (const auto& v : e.variables())
    if (!allowed.count(v)) out.push_back(what + " uses undeclared variable '" + v + "'");
}

void check_bounds(const Vec& lo, const Vec& hi, std::size_t n, const std::string& lo_name,
                  const std::string& hi_name, std::vector<std::string>& out) {
  if (lo.size() != n) out.push_back(lo_name + " has length " + std::to_string(lo.size()) + ", expected " + std::to_string(n));
  if (hi.size() != n) out.push_back(hi_name + " has length " + std::to_string(hi.size()) + ", expected " + std::to_string(n));
  const std::size_t m = std::min({lo.size(), hi.size(), n});
  for (std::size_t i = 0; i < m; ++i)
    if (lo[i] > hi[i]) out.push_back(lo_name + " > " + hi_name + " at component " + std::to_string(i + 1));
}

std::string join(const std::vector<std::string>& items) {
  std::ostringstream os;
  for (std::size_t i = 0; i < items.size(); ++i) os << (i ? "; " : "") << items[i];
  return os.str();
}

}  // namespace

std::vector<std::string> OCProblem::running_arguments() const {
  std::vector<std::string> out = state_names;
  out.insert(out.end(), control_names.begin(), control_names.end());
  out.push_back(kTimeVar);
  return out;
}

std::vector<std::string> OCProblem::endpoint_arguments() const {
  std::vector<std::string> out;
  for (const auto& s : state_names) out.push_back(initial_var(s));
  for (const auto& s : state_names) out.push_back(final_var(s));
  out.push_back(kInitialTimeVar);
  out.push_back(kFinalTimeVar);
  return out;
}

ProblemError::ProblemError(std::vector<std::string> violations)
    : std::runtime_error("invalid problem: " + join(violations)), violations_(std::move(violations)) {}

void validate(const OCProblem& p) {
  std::vector<std::string> out;
  if (p.nx() == 0) out.push_back("problem needs at least one state");
  if (p.nu() == 0) out.push_back("problem needs at least one control");

  std::set<std::string> seen;
  auto check_name = [&](const std::string& n, const std::string& what) {
    if (!is_identifier(n)) out.push_back(what + " name '" + n + "' is not an identifier");
    if (n == kTimeVar || n == kInitialTimeVar || n == kFinalTimeVar)
      out.push_back(what + " name '" + n + "' is reserved");
    if (!seen.insert(n).second) out.push_back("duplicate name '" + n + "'");
  };
  for (const auto& n : p.state_names) check_name(n, "state");
  for (const auto& n : p.control_names) check_name(n, "control");

  const auto running = p.running_arguments();
  const auto endpoint = p.endpoint_arguments();
  const std::set<std::string> running_set(running.begin(), running.end());
  const std::set<std::string> endpoint_set(endpoint.begin(), endpoint.end());

  if (p.dynamics.size() != p.nx())
    out.push_back("dynamics has " + std::to_string(p.dynamics.size()) + " components but nx = " + std::to_string(p.nx()));
  check_arguments(p.running_cost, running_set, "running cost", out);
  check_arguments(p.endpoint_cost, endpoint_set, "endpoint cost", out);
  for (std::size_t i = 0; i < p.dynamics.size(); ++i)
    check_arguments(p.dynamics[i], running_set, describe("dynamics component", i), out);
  for (std::size_t i = 0; i < p.events.size(); ++i)
    check_arguments(p.events[i], endpoint_set, describe("event", i), out);
  for (std::size_t i = 0; i < p.path.size(); ++i)
    check_arguments(p.path[i], running_set, describe("path constraint", i), out);

  check_bounds(p.events_lower, p.events_upper, p.ne(), "eL", "eU", out);
  check_bounds(p.path_lower, p.path_upper, p.nh(), "hL", "hU", out);

  const auto& u = p.units;
  auto check_units = [&](const std::vector<std::string>& labels, std::size_t n, const std::string& what) {
    if (!labels.empty() && labels.size() != n)
      out.push_back(what + " unit list has " + std::to_string(labels.size()) + " labels, expected " + std::to_string(n));
  };
  check_units(u.states, p.nx(), "state");
  check_units(u.controls, p.nu(), "control");
  check_units(u.events, p.ne(), "event");
  check_units(u.path, p.nh(), "path");

  if (!out.empty()) throw ProblemError(std::move(out));
}

bool same_problem(const OCProblem& a, const OCProblem& b) {
  auto same_list = [](const std::vector<Expr>& x, const std::vector<Expr>& y) {
    if (x.size() != y.size()) return false;
    for (std::size_t i = 0; i < x.size(); ++i)
      if (!x[i].same_as(y[i])) return false;
    return true;
  };
  return a.name == b.name && a.state_names == b.state_names && a.control_names == b.control_names &&
         a.endpoint_cost.same_as(b.endpoint_cost) && a.running_cost.same_as(b.running_cost) &&
         same_list(a.dynamics, b.dynamics) && same_list(a.events, b.events) &&
         a.events_lower == b.events_lower && a.events_upper == b.events_upper &&
         same_list(a.path, b.path) && a.path_lower == b.path_lower && a.path_upper == b.path_upper &&
         a.t0_fixed == b.t0_fixed && a.units == b.units;
}

OCProblem brachistochrone() {
  OCProblem p;
  p.name = "brachistochrone";
  p.state_names = {"x", "y", "v"};
  p.control_names = {"theta"};
  p.endpoint_cost = parse("tf");
  p.running_cost = parse("0");
  p.dynamics = {parse("v*sin(theta)"), parse("v*cos(theta)"), parse("9.8*cos(theta)")};
  p.events = {parse("t0"), parse("x0_x"), parse("x0_y"), parse("x0_v"), parse("xf_x"), parse("xf_y")};
  p.events_lower = {0, 0, 0, 0, 1000, 1};
  p.events_upper = p.events_lower;
  p.units.states = {"meters", "meters", "meters/seconds"};
  p.units.controls = {"radians"};
  p.units.events = {"seconds", "meters", "meters", "meters/seconds", "meters", "meters"};
  p.units.cost = "seconds";
  p.units.time = "seconds";
  return p;
}

const char* to_string(SolutionLabel label) {
  switch (label) {
    case SolutionLabel::Unscaled:
      return "unscaled";
    case SolutionLabel::Scaled:
      return "scaled";
    case SolutionLabel::Descaled:
      return "descaled";
  }
  return "?";
}

void check_shapes(const OCProblem& p, const Trajectory& tr) {
  const std::size_t n = tr.t.size();
  if (n == 0) throw std::invalid_argument("trajectory has an empty grid");
  for (std::size_t k = 1; k < n; ++k)
    if (!(tr.t[k] > tr.t[k - 1])) throw std::invalid_argument("trajectory grid is not strictly increasing at index " + std::to_string(k));
  if (tr.x.rows() != n || tr.x.cols() != p.nx())
    throw std::invalid_argument("state samples are not (N+1) x nx");
  if (tr.u.rows() != n || tr.u.cols() != p.nu())
    throw std::invalid_argument("control samples are not (N+1) x nu");
}

void check_shapes(const OCProblem& p, const Trajectory& tr, const DualTrajectory& d) {
  check_shapes(p, tr);
  const std::size_t n = tr.t.size();
  if (d.t != tr.t) throw std::invalid_argument("primal and dual grids differ");
  if (d.lambda.rows() != n || d.lambda.cols() != p.nx())
    throw std::invalid_argument("costate samples are not (N+1) x nx");
  if (p.nh() > 0 && (d.mu.rows() != n || d.mu.cols() != p.nh()))
    throw std::invalid_argument("path multiplier samples are not (N+1) x nh");
  if (d.nu.size() != p.ne()) throw std::invalid_argument("endpoint multiplier vector does not have length ne");
  if (d.hamiltonian.size() != n) throw std::invalid_argument("Hamiltonian samples do not match the grid");
}

}  // namespace ocscale
