#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ocscale/balance.hpp"

using namespace ocscale;

namespace {

const Guess kShippedGuess{{-0.013, 0.225, -0.113}, 24.0};

const BvpSolution& solution(const std::string& name) {
  static std::map<std::string, BvpSolution> cache;
  auto it = cache.find(name);
  if (it == cache.end()) {
    const auto p = brachistochrone();
    it = cache.emplace(name, solve_bvp(p, builtin_scales(name, p), kShippedGuess)).first;
  }
  return it->second;
}

MagnitudeReport report_of(const std::string& name) {
  const auto& s = solution(name);
  return magnitude_report(s.solved, s.trajectory, s.dual);
}

}  // namespace

TEST(Magnitude, UnscaledStateMaximaMatchCycloid) {
  const auto rep = report_of("unscaled");
  // Cycloid with R = 159.1608957: y_max = 2R, v_max = sqrt(2 g y_max).
  const double R = 159.1608957;
  EXPECT_NEAR(rep.component("x").max_abs, 1000, 1e-6);
  EXPECT_NEAR(rep.component("y").max_abs, 2 * R, 1e-3);
  EXPECT_NEAR(rep.component("v").max_abs, std::sqrt(2 * 9.8 * 2 * R), 1e-3);
  EXPECT_NEAR(rep.time_span, 24.86925199, 1e-6);
  EXPECT_NEAR(rep.component("H").max_abs, 1, 1e-6);
  EXPECT_GT(rep.score, 1.0);
  EXPECT_FALSE(rep.balanced());
}

TEST(Magnitude, ZeroDualsAreLeftOutOfTheScore) {
  OCProblem p;
  p.name = "drift";
  p.state_names = {"x"};
  p.control_names = {"u"};
  p.endpoint_cost = parse("0");
  p.running_cost = parse("0");
  p.dynamics = {parse("u")};
  Trajectory tr;
  DualTrajectory d;
  tr.t = d.t = {0, 1, 2};
  tr.x = Matrix(3, 1);
  tr.x(2, 0) = 200;
  tr.u = Matrix(3, 1, 2.0);
  d.lambda = Matrix(3, 1);
  d.mu = Matrix(3, 0);
  d.hamiltonian = {0, 0, 0};
  const auto rep = magnitude_report(p, tr, d);
  EXPECT_NEAR(rep.score, 2.0, 1e-15);
  ASSERT_EQ(rep.notes.size(), 1u);
  EXPECT_NE(rep.notes[0].find("lam_x"), std::string::npos);
  EXPECT_EQ(rep.component("x").min, 0.0);
  EXPECT_EQ(rep.component("x").max, 200.0);
  tr.t.clear();
  EXPECT_THROW(magnitude_report(p, tr, d), std::invalid_argument);
}

TEST(Magnitude, SetTwoExtremaWithinFour) {
  const auto rep = report_of("set2");
  for (const auto& c : rep.components) {
    if (c.kind == ComponentKind::EventMultiplier) continue;
    EXPECT_LE(c.max_abs, 4.0) << c.name;
  }
}

TEST(Magnitude, SetThreeFlagsTheDuals) {
  const auto rep = report_of("set3");
  for (const std::string name : {"x", "y", "v"}) {
    EXPECT_GE(rep.component(name).min, -1e-9) << name;
    EXPECT_LE(rep.component(name).max, 1 + 1e-9) << name;
  }
  double lo = 0, hi = 0;
  for (const auto& c : rep.components)
    if (c.kind == ComponentKind::Costate) {
      lo = std::min(lo, c.min);
      hi = std::max(hi, c.max);
    }
  EXPECT_GE(lo, -220.0);
  EXPECT_LE(hi, 110.0);
  EXPECT_LT(lo, -100.0);
  EXPECT_GT(hi, 50.0);
  EXPECT_GT(rep.score, 1.0);
}

TEST(Propose, RoundsToOneFigure) {
  EXPECT_EQ(round_one_figure(318.32), 300);
  EXPECT_EQ(round_one_figure(78.99), 80);
  EXPECT_EQ(round_one_figure(24.87), 20);
  EXPECT_EQ(round_one_figure(0.96), 1);
  EXPECT_EQ(round_one_figure(9.6), 10);
  EXPECT_EQ(round_one_figure(-0.034), -0.03);
  EXPECT_EQ(round_one_figure(0.0), 0.0);
}

TEST(Propose, FromUnscaledSolution) {
  const auto p = brachistochrone();
  const auto s = propose_scales(p, report_of("unscaled"), identity_scales(p));
  EXPECT_EQ(s.Px, (Vec{1000, 300, 80}));
  EXPECT_EQ(s.pt, 20);
  EXPECT_EQ(s.pJ, 20);
  EXPECT_EQ(s.Pu, (Vec{3}));
  EXPECT_EQ(s.Pe, (Vec{20, 1000, 300, 80, 1000, 300}));
  // Same decade as the shipped third set.
  const auto s3 = builtin_scales("set3", p);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_LT(std::fabs(std::log10(s.Px[i] / s3.Px[i])), 1.0);
}

TEST(Propose, SetOneSolutionGivesTheSameUnits) {
  const auto p = brachistochrone();
  const auto s = propose_scales(p, report_of("set1"), builtin_scales("set1", p));
  EXPECT_EQ(s.Px, (Vec{1000, 300, 80}));
  EXPECT_EQ(s.pt, 20);
  EXPECT_EQ(s.pJ, 20);
}

TEST(Propose, BalancedReportIsAFixedPoint) {
  const auto p = brachistochrone();
  MagnitudeReport rep;
  for (const std::string n : {"x", "y", "v", "theta", "lam_x", "lam_y", "lam_v", "H"}) {
    ComponentExtrema c;
    c.name = n;
    c.max_abs = c.max = 1.0;
    rep.components.push_back(c);
  }
  rep.time_span = 1.0;
  auto s = identity_scales(p);
  s.Px = {1000, 300, 80};
  s.pt = s.pJ = 20;
  s.Pe = {20, 1000, 300, 80, 1000, 300};
  EXPECT_EQ(propose_scales(p, rep, s), s);
  for (auto& c : rep.components) c.max_abs = 0.0;
  EXPECT_THROW(propose_scales(p, rep, s), std::invalid_argument);
}

TEST(Propose, IdempotentWithinRoundingQuantum) {
  const auto p = brachistochrone();
  const auto first = propose_scales(p, report_of("unscaled"), identity_scales(p));
  const auto sol = solve_bvp(p, first, kShippedGuess);
  const auto second = propose_scales(p, magnitude_report(sol.solved, sol.trajectory, sol.dual), first);
  auto quantum = [](double v) { return std::pow(10.0, std::floor(std::log10(std::fabs(v)))); };
  for (std::size_t i = 0; i < 3; ++i) EXPECT_LE(std::fabs(second.Px[i] - first.Px[i]), quantum(first.Px[i])) << i;
  EXPECT_LE(std::fabs(second.pt - first.pt), quantum(first.pt));
  EXPECT_LE(std::fabs(second.pJ - first.pJ), quantum(first.pJ));
}

// Re-expressing one solution under Px' = c Px divides max|x~_i| by c and
// multiplies max|lam~_i| by c.
TEST(Seesaw, ProductInvariantOnData) {
  const auto p = brachistochrone();
  const auto& ref = solution("set1");
  const auto s1 = builtin_scales("set1", p);
  const auto tr = descale_primal(ref.trajectory, s1);
  const auto d = descale_dual(ref.dual, s1);
  const auto rep1 = magnitude_report(ref.solved, ref.trajectory, ref.dual);
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> logc(-2, 2);
  for (int trial = 0; trial < 20; ++trial) {
    ScaleSet s2 = s1;
    Vec c(3);
    for (std::size_t i = 0; i < 3; ++i) {
      c[i] = std::pow(10.0, logc(rng));
      s2.Px[i] *= c[i];
    }
    const auto tr2 = rescale_primal(tr, s2);
    const auto d2 = rescale_dual(d, s2);
    const auto rep2 = magnitude_report(scale_problem(p, s2), tr2, d2);
    for (std::size_t i = 0; i < 3; ++i) {
      const auto& name = p.state_names[i];
      const double x1 = rep1.component(name).max_abs, x2 = rep2.component(name).max_abs;
      const double l1 = rep1.component("lam_" + name).max_abs, l2 = rep2.component("lam_" + name).max_abs;
      EXPECT_NEAR(x2 * c[i] / x1, 1.0, 1e-12) << name;
      EXPECT_NEAR(l2 / (c[i] * l1), 1.0, 1e-12) << name;
      EXPECT_NEAR((x2 * l2) / (x1 * l1), 1.0, 1e-12) << name;
    }
    // Renaming units leaves the physical solution alone.
    const auto back = descale_primal(tr2, s2);
    for (std::size_t k = 0; k < tr.size(); k += 37)
      for (std::size_t i = 0; i < 3; ++i)
        EXPECT_NEAR(back.x(k, i), tr.x(k, i), 1e-9 * std::max(1.0, std::fabs(tr.x(k, i))));
  }
}

TEST(Iterate, FromSetOneBalancesInTwoProposals) {
  const auto p = brachistochrone();
  const auto res = balance_iterate(p, builtin_scales("set1", p), kShippedGuess, 2);
  EXPECT_FALSE(res.failure);
  EXPECT_LE(res.history.size(), 3u);
  EXPECT_LE(res.history[res.best].report.score, 1.2);
  EXPECT_TRUE(res.solution.converged());
}

TEST(Iterate, BalancedStartReturnsImmediately) {
  const auto p = brachistochrone();
  // The one-figure proposal leaves max|lam~_v| near 7 against lam~_x near
  // 0.6; halving the speed unit brings both inside a decade.
  auto s = propose_scales(p, report_of("unscaled"), identity_scales(p));
  s.Px[2] = 40;
  s.Pe[3] = 40;
  const auto res = balance_iterate(p, s, kShippedGuess);
  ASSERT_EQ(res.history.size(), 1u);
  EXPECT_TRUE(res.history[0].report.balanced());
  EXPECT_EQ(res.scales(), s);
}

TEST(Iterate, StopsAtAFixedPointOfTheProposal) {
  const auto p = brachistochrone();
  const auto res = balance_iterate(p, identity_scales(p), kShippedGuess, 10);
  ASSERT_EQ(res.history.size(), 2u);
  EXPECT_EQ(propose_scales(p, res.history[1].report, res.history[1].scales), res.history[1].scales);
  EXPECT_EQ(res.best, 1u);
}

TEST(Iterate, FromIdentityEveryStateAndCostateWithinADecade) {
  const auto p = brachistochrone();
  const auto res = balance_iterate(p, identity_scales(p), kShippedGuess);
  const auto& rep = res.history[res.best].report;
  for (const auto& c : rep.components)
    if (c.kind == ComponentKind::State || c.kind == ComponentKind::Costate) {
      EXPECT_GE(c.max_abs, 0.1) << c.name;
      EXPECT_LE(c.max_abs, 10.0) << c.name;
    }
}
