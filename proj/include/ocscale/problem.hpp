#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ocscale/expr.hpp"
#include "ocscale/matrix.hpp"

namespace ocscale {

/// Free-form unit labels. Components may use mutually inconsistent units.
struct UnitSystem {
  std::vector<std::string> states;
  std::vector<std::string> controls;
  std::vector<std::string> events;
  std::vector<std::string> path;
  std::string cost = "CU";
  std::string time = "TU";

  friend bool operator==(const UnitSystem&, const UnitSystem&) = default;
};

/// Bolza optimal control problem
///
///   minimize   E(x0, xf, t0, tf) + integral of F(x, u, t) dt
///   subject to dx/dt = f(x, u, t)
///              eL <= e(x0, xf, t0, tf) <= eU
///              hL <= h(x, u, t) <= hU
///
/// Running functions (F, f, h) are written over the state names, control
/// names and `t`. Endpoint functions (E, e) are written over `x0_<state>`,
/// `xf_<state>`, `t0` and `tf`. A fixed endpoint value is an event with
/// equal lower and upper bounds.
struct OCProblem {
  std::string name;
  std::vector<std::string> state_names;
  std::vector<std::string> control_names;

  Expr endpoint_cost;
  Expr running_cost;
  std::vector<Expr> dynamics;

  std::vector<Expr> events;
  Vec events_lower;
  Vec events_upper;

  std::vector<Expr> path;
  Vec path_lower;
  Vec path_upper;

  std::optional<double> t0_fixed;
  UnitSystem units;

  std::size_t nx() const { return state_names.size(); }
  std::size_t nu() const { return control_names.size(); }
  std::size_t ne() const { return events.size(); }
  std::size_t nh() const { return path.size(); }

  /// Slot order for running functions: states, controls, t.
  std::vector<std::string> running_arguments() const;
  /// Slot order for endpoint functions: x0_*, xf_*, t0, tf.
  std::vector<std::string> endpoint_arguments() const;
};

inline constexpr const char* kTimeVar = "t";
inline constexpr const char* kInitialTimeVar = "t0";
inline constexpr const char* kFinalTimeVar = "tf";

inline std::string initial_var(const std::string& state) { return "x0_" + state; }
inline std::string final_var(const std::string& state) { return "xf_" + state; }

/// Structural equality: same names, bounds, units and expression trees.
bool same_problem(const OCProblem& a, const OCProblem& b);

class ProblemError : public std::runtime_error {
 public:
  explicit ProblemError(std::vector<std::string> violations);
  const std::vector<std::string>& violations() const { return violations_; }

 private:
  std::vector<std::string> violations_;
};

/// Throws ProblemError listing every violated invariant.
void validate(const OCProblem& p);

/// The badly scaled Brachistochrone: reach (x, y) = (1000, 1) m from rest in
/// minimum time, with y measured downward and g = 9.8 m/s^2.
/// Events are ordered (t0, x0, y0, v0, xf, yf).
OCProblem brachistochrone();

enum class SolutionLabel { Unscaled, Scaled, Descaled };

const char* to_string(SolutionLabel label);

struct Trajectory {
  Vec t;
  Matrix x;  // (N+1) x nx
  Matrix u;  // (N+1) x nu
  SolutionLabel label = SolutionLabel::Unscaled;

  std::size_t size() const { return t.size(); }
};

struct DualTrajectory {
  Vec t;
  Matrix lambda;  // (N+1) x nx
  Matrix mu;      // (N+1) x nh
  Vec nu;         // ne
  Vec hamiltonian;
  SolutionLabel label = SolutionLabel::Unscaled;

  std::size_t size() const { return t.size(); }
};

/// Shooting guess in physical units: initial costates and, when the final
/// time is free, a final time.
struct Guess {
  Vec lambda0;
  double tf = 0.0;
};

/// Throws std::invalid_argument when shapes disagree with the problem or
/// the grid is not strictly increasing.
void check_shapes(const OCProblem& p, const Trajectory& tr);
void check_shapes(const OCProblem& p, const Trajectory& tr, const DualTrajectory& d);

}  // namespace ocscale
