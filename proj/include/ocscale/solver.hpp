#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ocscale/conditions.hpp"
#include "ocscale/problem.hpp"
#include "ocscale/scaling.hpp"

namespace ocscale {

// ---------------------------------------------------------------------------
// Integration

struct IntegratorOptions {
  double rel_tol = 1e-10;
  double abs_tol = 1e-12;
  std::size_t max_steps = 1'000'000;
  /// Record every `dense_stride`-th accepted step in OdeSolution
  /// (0 records none).
  std::size_t dense_stride = 0;
};

class IntegrationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// dy/dt = rhs(t, y).
using OdeRhs = std::function<Vec(double, const Vec&)>;

struct OdeSolution {
  /// Samples at the requested times, one row per time.
  Matrix samples;
  Vec final_state;
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  /// Accepted step endpoints when a dense stride is set.
  Vec step_times;
  std::vector<Vec> step_states;
};

/// Dormand-Prince 5(4) with local error control
///   max_i |err_i| / (abs_tol + rel_tol * max(|y_i|, |y_new_i|)) <= 1
/// and fourth-order dense output at `sample_times` (each in [t0, tf]).
/// Throws IntegrationError on a non-finite derivative, a step-size
/// underflow or when max_steps is exceeded; a std::exception thrown by the
/// rhs propagates unchanged.
OdeSolution rk45_propagate(const OdeRhs& rhs, const Vec& y0, double t0, double tf, const Vec& sample_times,
                           const IntegratorOptions& opts = {});

// ---------------------------------------------------------------------------
// Root finding

struct NewtonOptions {
  double residual_tol = 1e-9;
  double step_tol = 1e-14;
  int max_iter = 50;
  int max_halvings = 30;
  double fd_step = 1e-7;
  double max_condition = 1e14;
};

enum class NewtonStatus { Converged, SmallStep, SingularJacobian, IterationLimit, LineSearchFailed, ResidualFailed };

const char* to_string(NewtonStatus s);

struct NewtonResult {
  /// Best iterate seen (smallest residual sup-norm).
  Vec z;
  Vec residual;
  double residual_norm = 0.0;
  int iterations = 0;
  NewtonStatus status = NewtonStatus::IterationLimit;
  double condition = 0.0;
  std::vector<double> history;
  std::string message;

  bool converged() const { return status == NewtonStatus::Converged || status == NewtonStatus::SmallStep; }
};

using ResidualFn = std::function<Vec(const Vec&)>;

/// Damped Newton: forward-difference Jacobian with step fd_step*max(1,|z_i|),
/// partial-pivoting LU, Armijo backtracking on |r|^2 by halving. Converged
/// when |r|_inf <= residual_tol or the accepted step is below step_tol
/// (relative to max(1, |z|_inf)). A residual evaluation that throws is
/// treated as an infinite residual inside the line search. Never throws for
/// numerical failure; the status says what happened.
NewtonResult newton_solve(const ResidualFn& r, const Vec& guess, const NewtonOptions& opts = {});

// ---------------------------------------------------------------------------
// Indirect shooting

class ShootingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Square shooting system for the structured subclass: t0 fixed, every
/// initial state pinned, each final state pinned or free, tf pinned or free.
///
/// Unknowns: lambda(t0), then tf when free.
/// Rows: x_i(tf) - target for pinned final states, lambda_i(tf) - dE/dxf_i
/// for free final states, then H(tf) + dE/dtf when tf is free.
struct ShootingSpec {
  std::size_t nx = 0;
  double t0 = 0.0;
  Vec x0;
  std::vector<std::optional<double>> xf_target;
  bool tf_free = true;
  double tf_fixed = 0.0;
  /// Event index pinning each endpoint slot (x0, xf, t0, tf), if any.
  std::vector<std::optional<std::size_t>> slot_event;
  std::vector<std::string> row_names;

  std::size_t unknowns() const { return nx + (tf_free ? 1 : 0); }
};

/// Throws ShootingError naming the first unsupported feature.
ShootingSpec reduce_to_shooting(const OCProblem& p);

struct ShootingOptions {
  IntegratorOptions integrator;
  NewtonOptions newton;
};

/// Integrates x and lambda from t0 with u from pointwise Hamiltonian
/// minimization and returns the residual rows. Throws IntegrationError or
/// MinimizationError with the unknown vector in the message.
Vec shooting_map(const Conditions& c, const ShootingSpec& spec, const Vec& unknowns,
                 const IntegratorOptions& opts = {});

struct BvpOptions {
  ShootingOptions shooting;
  std::size_t grid_points = 1001;
  /// Latin-hypercube starts around the guess (0 disables multistart). Among
  /// converged starts the one with the lowest objective wins.
  std::size_t multistart = 0;
  /// Half-width of the multistart box, relative to max(|z_i|, 1e-3).
  double multistart_spread = 0.5;
  std::uint64_t seed = 0;
};

struct BvpSolution {
  /// Problem actually solved (scaled when the scale set is not identity).
  OCProblem solved;
  ScaleSet scales;
  ShootingSpec spec;
  Trajectory trajectory;
  DualTrajectory dual;
  NewtonResult newton;
  /// Index of the winning start (0 = the guess itself).
  std::size_t start_index = 0;
  std::size_t starts_tried = 1;

  bool converged() const { return newton.converged(); }
};

class SolveError : public std::runtime_error {
 public:
  SolveError(const std::string& what, NewtonResult partial)
      : std::runtime_error(what), partial_(std::move(partial)) {}
  const NewtonResult& partial() const { return partial_; }

 private:
  NewtonResult partial_;
};

/// Scales p by s, solves the scaled problem by shooting from the guess (in
/// physical units; rescaled internally) and samples the result on a uniform
/// grid. The returned trajectory and dual are in the solved problem's units
/// (label Scaled unless s is the identity). nu comes from the transversality
/// rows of pinned components; mu from stationarity on active control boxes.
/// Throws ShootingError for unsupported structure and SolveError when no
/// start converges.
BvpSolution solve_bvp(const OCProblem& p, const ScaleSet& s, const Guess& guess, const BvpOptions& opts = {});

/// Unknown vector of the solved problem for a physical-units guess.
Vec scaled_unknowns(const ShootingSpec& spec, const ScaleSet& s, const Guess& guess);

/// Integrates the state equations alone from tr.x(0) with the sampled
/// control linearly interpolated, returning states on tr's grid.
Matrix repropagate(const OCProblem& p, const Trajectory& tr, const IntegratorOptions& opts = {});

}  // namespace ocscale
