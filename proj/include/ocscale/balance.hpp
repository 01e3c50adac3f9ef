#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ocscale/problem.hpp"
#include "ocscale/scaling.hpp"
#include "ocscale/solver.hpp"

namespace ocscale {

enum class ComponentKind { State, Control, Costate, PathMultiplier, Hamiltonian, EventMultiplier };

const char* to_string(ComponentKind k);

struct ComponentExtrema {
  std::string name;
  ComponentKind kind = ComponentKind::State;
  double max_abs = 0.0;
  double min = 0.0;
  double max = 0.0;
};

/// Magnitudes of a primal-dual solution in the units it is expressed in.
///
/// The balance score is log10(largest max_abs / smallest nonzero max_abs)
/// over states, controls, costates and path multipliers. Identically zero
/// components are left out of the score and listed in `notes`. A score of
/// at most 1 (every component within one decade) counts as balanced. The
/// Hamiltonian and the event multipliers are reported but not scored.
struct MagnitudeReport {
  std::vector<ComponentExtrema> components;
  double time_span = 0.0;
  double score = 0.0;
  std::vector<std::string> notes;

  bool balanced(double threshold = 1.0) const { return score <= threshold; }
  const ComponentExtrema& component(const std::string& name) const;
};

/// Throws std::invalid_argument on an empty or mismatched grid.
MagnitudeReport magnitude_report(const OCProblem& p, const Trajectory& tr, const DualTrajectory& d);

/// One significant figure, away from zero: 318 -> 300, 79 -> 80, 0.95 -> 1.
double round_one_figure(double v);

/// New designer units from a solution expressed under `current`:
///   Px_i <- r(Px_i * max|x~_i| / target), Pu likewise,
///   pt   <- r(pt * (t~f - t~0) / target),
///   pJ   <- r(pt_new * max|H| / target) with H the unscaled Hamiltonian,
/// r = round_one_figure, components with zero magnitude unchanged. Events
/// that pin one endpoint variable and path constraints that bound one
/// control inherit that variable's new scale, so pinned values stay
/// consistent. Costates follow through Plam = pJ / Px (the seesaw).
/// Throws std::invalid_argument when every magnitude is zero.
ScaleSet propose_scales(const OCProblem& p, const MagnitudeReport& rep, const ScaleSet& current, double target = 1.0);

struct BalanceStep {
  ScaleSet scales;
  MagnitudeReport report;
  int newton_iterations = 0;
};

struct BalanceResult {
  std::vector<BalanceStep> history;
  /// Index into history of the best-scoring iterate.
  std::size_t best = 0;
  BvpSolution solution;
  /// Set when a solve after the first failed; history holds what was done.
  std::optional<std::string> failure;

  const ScaleSet& scales() const { return history[best].scales; }
};

/// solve -> report -> propose until the score is at most 1 or `max_iter`
/// proposals were made, or a proposal repeats the current scales. Each solve starts from the previous solution
/// descaled to physical units. Returns the best-scoring iterate. A failure
/// of the first solve propagates; later failures end the loop.
BalanceResult balance_iterate(const OCProblem& p, const ScaleSet& s0, const Guess& guess, int max_iter = 3,
                              const BvpOptions& opts = {});

}  // namespace ocscale
