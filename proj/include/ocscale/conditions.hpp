#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ocscale/problem.hpp"

namespace ocscale {

using CSpan = std::span<const double>;

/// Thrown when pointwise Hamiltonian minimization does not converge.
/// Carries the best candidate seen.
class MinimizationError : public std::runtime_error {
 public:
  MinimizationError(const std::string& what, Vec best_u, double best_h)
      : std::runtime_error(what), best_u_(std::move(best_u)), best_h_(best_h) {}
  const Vec& best_u() const { return best_u_; }
  double best_h() const { return best_h_; }

 private:
  Vec best_u_;
  double best_h_;
};

struct Minimizer {
  Vec u;
  double hamiltonian = 0.0;
  /// Every candidate gave the same H (for instance lambda = 0): u is the hint.
  bool degenerate = false;
};

/// Evaluates the objects of the necessary conditions for one problem:
///
///   H    = F + lambda' f                 Hbar = H + mu' h
///   Ebar = E + nu' e
///   dlambda/dt = -dHbar/dx               dHbar/du = 0
///   lambda(t0) = -dEbar/dx0              lambda(tf) = dEbar/dxf
///   H(t0) = dEbar/dt0                    H(tf) = -dEbar/dtf
///
/// All derivatives are symbolic and compiled once at construction. The
/// object is immutable and may be shared between threads.
class Conditions {
 public:
  explicit Conditions(const OCProblem& p);

  const OCProblem& problem() const { return p_; }

  Vec dynamics(CSpan x, CSpan u, double t) const;
  double running_cost(CSpan x, CSpan u, double t) const;
  Vec path(CSpan x, CSpan u, double t) const;
  Vec events(CSpan x0, CSpan xf, double t0, double tf) const;

  double hamiltonian(CSpan lambda, CSpan x, CSpan u, double t) const;
  double lagrangian_hamiltonian(CSpan mu, CSpan lambda, CSpan x, CSpan u, double t) const;
  double endpoint_lagrangian(CSpan nu, CSpan x0, CSpan xf, double t0, double tf) const;

  /// dlambda/dt = -dHbar/dx. An empty `mu` means zero path multipliers.
  Vec adjoint_rhs(CSpan lambda, CSpan mu, CSpan x, CSpan u, double t) const;
  /// dHbar/du.
  Vec stationarity(CSpan mu, CSpan lambda, CSpan x, CSpan u, double t) const;
  /// d2Hbar/du2, row-major nu x nu.
  Matrix stationarity_jacobian(CSpan mu, CSpan lambda, CSpan x, CSpan u, double t) const;
  /// df/dx, nx x nx.
  Matrix state_jacobian(CSpan x, CSpan u, double t) const;

  /// Gradient of Ebar over the endpoint slots (x0, xf, t0, tf).
  Vec endpoint_gradient(CSpan nu, CSpan x0, CSpan xf, double t0, double tf) const;

  /// r0 = lambda0 + dEbar/dx0, rf = lambdaf - dEbar/dxf.
  std::pair<Vec, Vec> transversality_residuals(CSpan nu, CSpan lambda0, CSpan lambdaf, CSpan x0, CSpan xf,
                                               double t0, double tf) const;
  /// r_t0 = H(t0) - dEbar/dt0, r_tf = H(tf) + dEbar/dtf, given the lower
  /// Hamiltonian values at both ends.
  std::pair<double, double> hamiltonian_value_residuals(CSpan nu, double h0, double hf, CSpan x0, CSpan xf,
                                                        double t0, double tf) const;

  /// Minimizes H over the admissible controls at a point. A single control
  /// that enters only through sin and cos of k*u + g(x, t) is minimized in
  /// closed form; otherwise a multistart Newton iteration on dH/du = 0 runs
  /// inside the box given by path constraints that are bare controls. The
  /// path multipliers `mu` are outputs of that inner problem and are not
  /// used here.
  Minimizer minimize_hamiltonian(CSpan lambda, CSpan mu, CSpan x, double t, CSpan u_hint) const;

  /// True when the closed-form harmonic minimizer applies.
  bool harmonic_control() const { return harmonic_; }

 private:
  void check(std::size_t got, std::size_t want, const char* what) const;
  void fill_running(Vec& slots, CSpan x, CSpan u, double t) const;
  void fill_endpoint(Vec& slots, CSpan x0, CSpan xf, double t0, double tf) const;
  double h_at(CSpan lambda, CSpan mu, CSpan x, CSpan u, double t) const;
  Minimizer minimize_harmonic(CSpan lambda, CSpan mu, CSpan x, double t, CSpan u_hint) const;
  Minimizer minimize_newton(CSpan lambda, CSpan mu, CSpan x, double t, CSpan u_hint) const;

  OCProblem p_;
  std::size_t nx_, nu_, ne_, nh_;

  BoundExpr F_;
  std::vector<BoundExpr> f_, h_, e_;
  BoundExpr E_;

  // Running-function derivatives, indexed [variable][function].
  std::vector<BoundExpr> dF_dx_, dF_du_;
  std::vector<std::vector<BoundExpr>> df_dx_, df_du_, dh_dx_, dh_du_;
  // Second control derivatives [j][l], and per-function [j][l][function].
  std::vector<std::vector<BoundExpr>> d2F_du2_;
  std::vector<std::vector<std::vector<BoundExpr>>> d2f_du2_, d2h_du2_;

  // Endpoint derivatives over the 2nx+2 endpoint slots.
  std::vector<BoundExpr> dE_;
  std::vector<std::vector<BoundExpr>> de_;  // [slot][event]

  bool harmonic_ = false;
  double harmonic_slope_ = 1.0;
  // Path constraints of the form h = u_j, used as boxes by the minimizer.
  Vec u_lower_, u_upper_;
  bool path_is_box_ = true;
};

// Free-function forms. Each builds a Conditions object; prefer the class in
// loops.
double hamiltonian(const OCProblem& p, CSpan lambda, CSpan x, CSpan u, double t);
double lagrangian_hamiltonian(const OCProblem& p, CSpan mu, CSpan lambda, CSpan x, CSpan u, double t);
double endpoint_lagrangian(const OCProblem& p, CSpan nu, CSpan x0, CSpan xf, double t0, double tf);
Vec adjoint_rhs(const OCProblem& p, CSpan lambda, CSpan mu, CSpan x, CSpan u, double t);
Vec stationarity(const OCProblem& p, CSpan mu, CSpan lambda, CSpan x, CSpan u, double t);
Minimizer minimize_hamiltonian(const OCProblem& p, CSpan lambda, CSpan mu, CSpan x, double t, CSpan u_hint);

enum class BoundSide { Lower, Interior, Upper, Pinned };

struct ComplementarityStatus {
  BoundSide side = BoundSide::Interior;
  bool satisfied = true;
  /// How far the multiplier is past what the side allows (0 when satisfied).
  double margin = 0.0;
};

/// Sign conditions: at the lower bound mult <= 0, strictly inside mult = 0,
/// at the upper bound mult >= 0, unrestricted when lo = hi. Throws
/// std::invalid_argument when lo > hi or lengths differ.
std::vector<ComplementarityStatus> complementarity_check(CSpan values, CSpan lo, CSpan hi, CSpan mult, double tol);

/// An event of the form slope*v + offset in a single endpoint slot v
/// (index into OCProblem::endpoint_arguments()).
struct EventPin {
  std::size_t slot = 0;
  double slope = 1.0;
  double offset = 0.0;
};

/// The pin described by event i, if it is affine in exactly one slot.
std::optional<EventPin> event_pin(const OCProblem& p, std::size_t i);

struct ToleranceSet {
  double algebraic = 1e-6;
  double grid = 1e-4;
};

struct ResidualGroup {
  std::string name;
  double value = 0.0;
  double tolerance = 0.0;
  bool passed = true;
  /// Reported but not counted, e.g. a Hamiltonian value condition at a
  /// time pinned by an equality event.
  bool exempt = false;
  std::string note;
};

struct VerificationReport {
  std::vector<ResidualGroup> groups;
  ToleranceSet tolerances;
  bool passed = true;
  std::vector<std::string> notes;

  const ResidualGroup& group(const std::string& name) const;
};

/// Names of the report groups, in report order.
const std::vector<std::string>& verification_group_names();

/// Residual image of the necessary conditions on a sampled solution. Grid
/// derivatives use five-point fourth-order stencils (one-sided near the
/// ends) so that the check is independent of the integrator that produced
/// the samples. Throws std::invalid_argument on a grid mismatch.
VerificationReport verify(const OCProblem& p, const Trajectory& tr, const DualTrajectory& d,
                          const ToleranceSet& tol = {});

/// First derivative of uniformly or non-uniformly sampled data, fourth order
/// where five points are available.
Vec grid_derivative(CSpan t, CSpan y);

}  // namespace ocscale
