#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ocscale/problem.hpp"

namespace ocscale {

/// Diagonal affine scaling of every variable and function of a problem:
///
///   x = Px x~ + qx,   u = Pu u~ + qu,   t = pt t~ + qt,   J = pJ J~ + qJ,
///   e = Pe e~ + qe,   h = Ph h~ + qh.
///
/// Vectors hold the diagonals. Every P entry must be strictly positive.
struct ScaleSet {
  Vec Px, qx;
  Vec Pu, qu;
  double pt = 1.0, qt = 0.0;
  double pJ = 1.0, qJ = 0.0;
  Vec Pe, qe;
  Vec Ph, qh;

  friend bool operator==(const ScaleSet&, const ScaleSet&) = default;
};

class ScaleError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// All P = 1, all q = 0, sized for `p`.
ScaleSet identity_scales(const OCProblem& p);

/// Throws ScaleError on a dimension mismatch or a nonpositive P entry.
void check_scales(const OCProblem& p, const ScaleSet& s);

/// Names accepted by builtin_scales: "unscaled", "set1", "set2", "set3".
/// The numbered sets are the designer units of the Brachistochrone
/// example, with events ordered (t0, x0, y0, v0, xf, yf).
const std::vector<std::string>& builtin_scale_names();
ScaleSet builtin_scales(const std::string& name, const OCProblem& p);

/// Multiplier scales induced by a choice of primal scales:
///   Plam_i = pJ / Px_i,  Pmu_i = (pJ / pt) / Ph_i,  Pnu_i = pJ / Pe_i,
/// so that lambda = Plam lambda~ (and likewise for mu, nu).
struct CovectorScales {
  Vec Plam;
  Vec Pmu;
  Vec Pnu;
};

CovectorScales covector_scales(const ScaleSet& s);

/// Rewrites every data function in scaled variables by symbolic
/// substitution. Variable names are unchanged; unit labels become designer
/// units such as "100 meters".
OCProblem scale_problem(const OCProblem& p, const ScaleSet& s);

/// Scaled event bounds (eL - qe)/Pe and (eU - qe)/Pe.
std::pair<Vec, Vec> scale_endpoint_bounds(const OCProblem& p, const ScaleSet& s);

/// Label for one designer unit: "<P> <unit>", or just the unit when P = 1.
std::string designer_unit(double P, const std::string& unit);

// Primal maps. descale expects a Scaled trajectory and returns a Descaled
// one; rescale accepts Unscaled or Descaled and returns Scaled.
Trajectory descale_primal(const Trajectory& tr, const ScaleSet& s);
Trajectory rescale_primal(const Trajectory& tr, const ScaleSet& s);

// Dual maps: lambda = Plam lambda~, mu = Pmu mu~, nu = Pnu nu~,
// H = (pJ/pt) H~, on the descaled time grid.
DualTrajectory descale_dual(const DualTrajectory& d, const ScaleSet& s);
DualTrajectory rescale_dual(const DualTrajectory& d, const ScaleSet& s);

/// Units carried by the multipliers of a problem. `raw` entries follow the
/// templates CU/x-unit, (CU/TU)/h-unit, CU/e-unit and CU/TU; `simplified`
/// entries reduce them with a monomial unit algebra when the labels parse,
/// and repeat the raw text otherwise.
struct CovectorUnits {
  std::vector<std::string> lambda, lambda_simplified;
  std::vector<std::string> mu, mu_simplified;
  std::vector<std::string> nu, nu_simplified;
  std::string hamiltonian, hamiltonian_simplified;
  /// True when the cost unit and the time unit are the same label.
  bool hamiltonian_dimensionless = false;
};

CovectorUnits covector_units(const OCProblem& p);
/// Units of the scaled multipliers, i.e. covector_units(scale_problem(p, s)).
CovectorUnits covector_units(const OCProblem& p, const ScaleSet& s);

/// Reduces a unit label such as "seconds/(meters/seconds)" to a canonical
/// monomial ("seconds²/meters"). Labels are products and quotients of
/// identifiers (which may contain '-'), numbers, parentheses and integer
/// powers. Returns nullopt when the label does not parse.
std::optional<std::string> simplify_unit(const std::string& label);

}  // namespace ocscale
