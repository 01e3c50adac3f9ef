#pragma once

#include <cstddef>

#include "ocscale/conditions.hpp"
#include "ocscale/matrix.hpp"
#include "ocscale/problem.hpp"
#include "ocscale/scaling.hpp"

namespace ocscale {

/// Scale factors given only at grid points: x_k = P_k x~_k + q_k, one
/// column per component. An empty q means zero offsets.
struct ScaleSequence {
  Vec t;
  Matrix P;  // (N+1) x n
  Matrix q;  // (N+1) x n or empty

  std::size_t size() const { return t.size(); }
  std::size_t dim() const { return P.cols(); }
  /// Throws std::invalid_argument on mismatched lengths, an unsorted grid
  /// or a zero or non-finite P entry.
  void check() const;
};

/// Constant sequence equal to the diagonal `P` (and `q`) at every grid point.
ScaleSequence constant_scales(const Vec& t, const Vec& P, const Vec& q = {});
/// P_k and q_k linearly interpolated in time from (P0, q0) to (P1, q1).
ScaleSequence interpolated_scales(const Vec& t, const Vec& P0, const Vec& P1, const Vec& q0 = {}, const Vec& q1 = {});

struct DiscreteErrorReport {
  /// (dP_k)(dx~_k) per forward step, N x n.
  Matrix error;
  /// d(P x~)_k - P_k dx~_k - (dP_k) x~_k, evaluated independently.
  Matrix direct;
  /// Largest disagreement between `error` and `direct`, in units in the
  /// last place of the larger magnitude.
  double max_ulps = 0.0;
  /// sup_k |error_k| and sup_k |d(P x~)_k| per component, and their ratio
  /// (zero when the increment is zero).
  Vec sup_norm;
  Vec increment_sup;
  Vec ratio;
};

/// The error of differencing x~ as if P were constant. With forward
/// differences d z_k = z_{k+1} - z_k,
///
///   d(P x~)_k - [P_k dx~_k + (dP_k) x~_k] = (dP_k)(dx~_k),
///
/// which is not second order unless the scales vary slowly. Both sides are
/// expanded into exact products and sums and then rounded once, so they
/// agree to 1 ulp for every input; a larger disagreement throws
/// std::logic_error. Throws std::invalid_argument on a length mismatch.
DiscreteErrorReport discrete_scaling_error(const ScaleSequence& s, const Matrix& xtilde);

struct AdditionalDynamicsReport {
  /// pt P^-1 (dP/dt x~ + dq/dt), (N+1) x n.
  Matrix term;
  Vec sup_norm;
};

/// Spurious term that time-varying scales add to the scaled dynamics.
/// Derivatives by second-order finite differences on the (possibly
/// nonuniform) grid: centered in the interior, one-sided at the ends.
/// Throws std::invalid_argument on a length mismatch, fewer than three
/// grid points or |P_k| < 1e-12.
AdditionalDynamicsReport additional_dynamics(const ScaleSequence& s, const Matrix& xtilde, double pt);

/// rho(df/dx) at one point. Throws std::invalid_argument when nx > 16 and
/// EigenError when QR does not converge.
double spectral_radius(const Conditions& c, CSpan x, CSpan u, double t);
double spectral_radius(const OCProblem& p, CSpan x, CSpan u, double t);

struct SensitivityReport {
  /// (tf - t0) rho(df/dx) at each grid point, physical problem.
  Vec unscaled;
  /// (t~f - t~0) rho(df~/dx~) with the Jacobian of the scaled problem.
  Vec scaled;
  /// (t~f - t~0) rho(pt Px^-1 (df/dx) Px), the similarity formed explicitly.
  Vec similarity;
  double max_rel_error_scaled = 0.0;
  double max_rel_error_similarity = 0.0;
  double tolerance = 1e-8;

  bool invariant() const {
    return max_rel_error_scaled <= tolerance && max_rel_error_similarity <= tolerance;
  }
};

/// Checks that the time-weighted spectral radius of the dynamics Jacobian
/// does not depend on the scales along a physical trajectory of p (label
/// Unscaled or Descaled). Relative errors use max(|a|, |b|, 1e-300).
SensitivityReport sensitivity_invariance(const OCProblem& p, const ScaleSet& s, const Trajectory& tr,
                                         double tolerance = 1e-8);

}  // namespace ocscale
