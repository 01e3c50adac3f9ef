#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "ocscale/problem_io.hpp"
#include "ocscale/scaling.hpp"

using namespace ocscale;
namespace fs = std::filesystem;

namespace {

fs::path data_dir() { return fs::path(OCSCALE_SOURCE_DIR) / "data"; }

bool within_ulps(double a, double b, int n) {
  double x = b;
  for (int i = 0; i < n; ++i) x = std::nextafter(x, a);
  return a == b || (b < a ? a <= x : a >= x);
}

Env running_env(const OCProblem& p, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(-3.0, 3.0);
  Env env;
  for (const auto& n : p.running_arguments()) env[n] = d(rng);
  for (const auto& n : p.endpoint_arguments()) env[n] = d(rng);
  return env;
}

Trajectory random_trajectory(std::mt19937_64& rng, SolutionLabel label) {
  std::uniform_real_distribution<double> d(-50.0, 50.0);
  Trajectory tr;
  tr.label = label;
  const std::size_t n = 40;
  tr.x = Matrix(n, 3);
  tr.u = Matrix(n, 1);
  double t = d(rng);
  for (std::size_t k = 0; k < n; ++k) {
    t += 0.01 + std::fabs(d(rng)) / 50;
    tr.t.push_back(t);
    for (std::size_t i = 0; i < 3; ++i) tr.x(k, i) = d(rng) * std::pow(10.0, static_cast<double>(i));
    tr.u(k, 0) = d(rng) / 10;
  }
  return tr;
}

ScaleSet random_scales(const OCProblem& p, std::mt19937_64& rng, bool offsets) {
  std::uniform_real_distribution<double> logp(-3.0, 3.0), q(-5.0, 5.0);
  ScaleSet s = identity_scales(p);
  for (auto* v : {&s.Px, &s.Pu, &s.Pe, &s.Ph})
    for (double& x : *v) x = std::pow(10.0, logp(rng));
  s.pt = std::pow(10.0, logp(rng));
  s.pJ = std::pow(10.0, logp(rng));
  if (offsets) {
    for (auto* v : {&s.qx, &s.qu, &s.qe, &s.qh})
      for (double& x : *v) x = q(rng);
    s.qt = q(rng);
    s.qJ = q(rng);
  }
  return s;
}

}  // namespace

TEST(ScaleProblem, GravityUnderSetOneIsNinePointEight) {
  const OCProblem scaled = scale_problem(brachistochrone(), builtin_scales("set1", brachistochrone()));
  const Expr& fv = scaled.dynamics[2];
  EXPECT_EQ(fv.eval({{"theta", 0.0}}), 9.8);
  ASSERT_EQ(fv.op(), Op::Mul);
  EXPECT_EQ(fv.lhs().value(), 9.8);
  EXPECT_EQ(to_string(fv), "9.8*cos(theta)");
}

TEST(ScaleProblem, GravityUnderSetTwoIsFourPointNine) {
  const OCProblem scaled = scale_problem(brachistochrone(), builtin_scales("set2", brachistochrone()));
  EXPECT_TRUE(within_ulps(scaled.dynamics[2].eval({{"theta", 0.0}}), 4.9, 1));
}

TEST(ScaleProblem, IdentityLeavesEveryFunctionUnchanged) {
  const OCProblem p = load_problem(data_dir() / "problems" / "zpm.json");
  const OCProblem b = brachistochrone();
  std::mt19937_64 rng(21);
  for (const OCProblem* q : {&p, &b}) {
    const OCProblem s = scale_problem(*q, identity_scales(*q));
    for (int k = 0; k < 100; ++k) {
      const Env env = running_env(*q, rng);
      EXPECT_EQ(s.running_cost.eval(env), q->running_cost.eval(env));
      EXPECT_EQ(s.endpoint_cost.eval(env), q->endpoint_cost.eval(env));
      for (std::size_t i = 0; i < q->nx(); ++i) EXPECT_EQ(s.dynamics[i].eval(env), q->dynamics[i].eval(env));
      for (std::size_t i = 0; i < q->ne(); ++i) EXPECT_EQ(s.events[i].eval(env), q->events[i].eval(env));
      for (std::size_t i = 0; i < q->nh(); ++i) EXPECT_EQ(s.path[i].eval(env), q->path[i].eval(env));
    }
    EXPECT_EQ(s.events_lower, q->events_lower);
    EXPECT_EQ(s.units, q->units);
  }
}

TEST(ScaleProblem, MatchesTransformFormulasOnRandomScales) {
  const OCProblem p = load_problem(data_dir() / "problems" / "zpm.json");
  std::mt19937_64 rng(22);
  for (int trial = 0; trial < 50; ++trial) {
    const ScaleSet s = random_scales(p, rng, true);
    const OCProblem sp = scale_problem(p, s);
    const Env tilde = running_env(p, rng);
    Env phys = tilde;
    for (std::size_t i = 0; i < p.nx(); ++i) {
      const auto& n = p.state_names[i];
      phys[n] = s.Px[i] * tilde.at(n) + s.qx[i];
      phys[initial_var(n)] = s.Px[i] * tilde.at(initial_var(n)) + s.qx[i];
      phys[final_var(n)] = s.Px[i] * tilde.at(final_var(n)) + s.qx[i];
    }
    for (std::size_t j = 0; j < p.nu(); ++j) phys[p.control_names[j]] = s.Pu[j] * tilde.at(p.control_names[j]) + s.qu[j];
    for (const char* n : {"t", "t0", "tf"}) phys[n] = s.pt * tilde.at(n) + s.qt;
    auto close = [](double a, double b) { return std::fabs(a - b) <= 1e-12 * std::max(1.0, std::fabs(b)); };
    EXPECT_TRUE(close(sp.running_cost.eval(tilde), s.pt / s.pJ * p.running_cost.eval(phys)));
    EXPECT_TRUE(close(sp.endpoint_cost.eval(tilde), (p.endpoint_cost.eval(phys) - s.qJ) / s.pJ));
    for (std::size_t i = 0; i < p.nx(); ++i)
      EXPECT_TRUE(close(sp.dynamics[i].eval(tilde), s.pt / s.Px[i] * p.dynamics[i].eval(phys)));
    for (std::size_t i = 0; i < p.ne(); ++i)
      EXPECT_TRUE(close(sp.events[i].eval(tilde), (p.events[i].eval(phys) - s.qe[i]) / s.Pe[i]));
    for (std::size_t i = 0; i < p.nh(); ++i) {
      EXPECT_TRUE(close(sp.path[i].eval(tilde), (p.path[i].eval(phys) - s.qh[i]) / s.Ph[i]));
      EXPECT_DOUBLE_EQ(sp.path_upper[i], (p.path_upper[i] - s.qh[i]) / s.Ph[i]);
    }
  }
}

TEST(ScaleProblem, RejectsBadScales) {
  const OCProblem p = brachistochrone();
  ScaleSet s = identity_scales(p);
  s.Px[1] = 0.0;
  EXPECT_THROW(scale_problem(p, s), ScaleError);
  s = identity_scales(p);
  s.Pe.pop_back();
  EXPECT_THROW(scale_problem(p, s), ScaleError);
  s = identity_scales(p);
  s.pJ = -1;
  EXPECT_THROW(scale_problem(p, s), ScaleError);
  EXPECT_THROW(builtin_scales("set9", p), ScaleError);
}

TEST(ScaleProblem, DesignerUnitLabels) {
  const OCProblem sp = scale_problem(brachistochrone(), builtin_scales("set1", brachistochrone()));
  EXPECT_EQ(sp.units.states[0], "100 meters");
  EXPECT_EQ(sp.units.states[2], "10 meters/seconds");
  EXPECT_EQ(sp.units.controls[0], "radians");
  EXPECT_EQ(sp.units.cost, "10 seconds");
  EXPECT_EQ(sp.units.time, "10 seconds");
}

TEST(EndpointBounds, SetOneFinalPositions) {
  const auto [lo, hi] = scale_endpoint_bounds(brachistochrone(), builtin_scales("set1", brachistochrone()));
  EXPECT_EQ(lo[4], 10.0);
  EXPECT_EQ(lo[5], 0.05);
  EXPECT_EQ(lo, hi);
}

TEST(EndpointBounds, UnitScalesLeaveBoundsUnchanged) {
  const OCProblem p = brachistochrone();
  const auto [lo, hi] = scale_endpoint_bounds(p, identity_scales(p));
  EXPECT_EQ(lo, p.events_lower);
  EXPECT_EQ(hi, p.events_upper);
}

TEST(EndpointBounds, WidthsScaleLinearly) {
  OCProblem p = brachistochrone();
  p.events_lower = {-1, -2, -3, -4, 990, 0};
  p.events_upper = {1, 2, 3, 4, 1010, 2};
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 100; ++trial) {
    const ScaleSet s = random_scales(p, rng, true);
    const auto [lo, hi] = scale_endpoint_bounds(p, s);
    for (std::size_t i = 0; i < p.ne(); ++i) {
      const double expected = (p.events_upper[i] - p.events_lower[i]) / s.Pe[i];
      EXPECT_NEAR(hi[i] - lo[i], expected, 1e-12 * std::max(1.0, expected));
    }
  }
}

TEST(CovectorScales, SetOne) {
  const OCProblem p = brachistochrone();
  const CovectorScales c = covector_scales(builtin_scales("set1", p));
  EXPECT_EQ(c.Plam, (Vec{0.1, 0.5, 1.0}));
  // Events here are ordered (t0, x0, y0, v0, xf, yf); checked by component.
  const std::vector<std::string> names{"t0", "x0", "y0", "v0", "xf", "yf"};
  const std::map<std::string, double> expected{{"t0", 1.0}, {"x0", 0.1}, {"xf", 0.1}, {"y0", 0.5}, {"yf", 0.5}, {"v0", 1.0}};
  for (std::size_t i = 0; i < names.size(); ++i) EXPECT_EQ(c.Pnu[i], expected.at(names[i])) << names[i];
}

TEST(CovectorScales, IdentityIsAllOnes) {
  const OCProblem p = load_problem(data_dir() / "problems" / "zpm.json");
  const CovectorScales c = covector_scales(identity_scales(p));
  for (const Vec* v : {&c.Plam, &c.Pmu, &c.Pnu})
    for (double x : *v) EXPECT_EQ(x, 1.0);
  EXPECT_EQ(c.Pmu.size(), 3u);
}

TEST(CovectorScales, PathMultipliersUseTimeScale) {
  const OCProblem p = load_problem(data_dir() / "problems" / "zpm.json");
  const ScaleSet s = load_scale_set(data_dir() / "scales" / "zpm.json", p);
  const CovectorScales c = covector_scales(s);
  EXPECT_DOUBLE_EQ(c.Pmu[0], (s.pJ / s.pt) / s.Ph[0]);
  EXPECT_DOUBLE_EQ(c.Plam[0], s.pJ / 1000.0);
}

TEST(DescalePrimal, SetOneFinalPosition) {
  const ScaleSet s = builtin_scales("set1", brachistochrone());
  Trajectory tr;
  tr.label = SolutionLabel::Scaled;
  tr.t = {0.0, 2.5};
  tr.x = Matrix(2, 3);
  tr.u = Matrix(2, 1);
  tr.x(1, 0) = 10.0;
  tr.x(1, 1) = 0.05;
  const Trajectory out = descale_primal(tr, s);
  EXPECT_EQ(out.x(1, 0), 1000.0);
  EXPECT_EQ(out.x(1, 1), 1.0);
  EXPECT_EQ(out.t[1], 25.0);
  EXPECT_EQ(out.label, SolutionLabel::Descaled);
  EXPECT_THROW(descale_primal(out, s), std::invalid_argument);
}

TEST(DescalePrimal, RoundTripWithinOneUlp) {
  const OCProblem p = brachistochrone();
  std::mt19937_64 rng(24);
  for (int trial = 0; trial < 200; ++trial) {
    const ScaleSet s = random_scales(p, rng, false);
    const Trajectory tr = random_trajectory(rng, SolutionLabel::Unscaled);
    const Trajectory back = descale_primal(rescale_primal(tr, s), s);
    for (std::size_t k = 0; k < tr.size(); ++k) {
      EXPECT_TRUE(within_ulps(back.t[k], tr.t[k], 1));
      for (std::size_t i = 0; i < 3; ++i) EXPECT_TRUE(within_ulps(back.x(k, i), tr.x(k, i), 1));
      EXPECT_TRUE(within_ulps(back.u(k, 0), tr.u(k, 0), 1));
    }
  }
}

TEST(DescalePrimal, RoundTripWithOffsets) {
  // With offsets the subtraction x - q can cancel, so the bound is relative
  // to the larger of |x| and |q| rather than one ulp of x.
  const OCProblem p = brachistochrone();
  std::mt19937_64 rng(25);
  for (int trial = 0; trial < 200; ++trial) {
    const ScaleSet s = random_scales(p, rng, true);
    const Trajectory tr = random_trajectory(rng, SolutionLabel::Unscaled);
    const Trajectory back = descale_primal(rescale_primal(tr, s), s);
    for (std::size_t k = 0; k < tr.size(); ++k)
      for (std::size_t i = 0; i < 3; ++i)
        EXPECT_LE(std::fabs(back.x(k, i) - tr.x(k, i)), 4e-16 * (std::fabs(tr.x(k, i)) + std::fabs(s.qx[i])));
  }
}

TEST(DescaleDual, SetOneCostatesAndHamiltonian) {
  const OCProblem p = brachistochrone();
  const ScaleSet s = builtin_scales("set1", p);
  DualTrajectory d;
  d.label = SolutionLabel::Scaled;
  d.t = {0.0};
  d.lambda = Matrix(1, 3);
  d.lambda(0, 0) = 3.0;
  d.lambda(0, 1) = 5.0;
  d.lambda(0, 2) = 7.0;
  d.hamiltonian = {-1.0};
  d.nu = Vec(6, 1.0);
  const DualTrajectory out = descale_dual(d, s);
  EXPECT_DOUBLE_EQ(out.lambda(0, 0), 0.3);
  EXPECT_DOUBLE_EQ(out.lambda(0, 1), 2.5);
  EXPECT_DOUBLE_EQ(out.lambda(0, 2), 7.0);
  EXPECT_EQ(out.hamiltonian[0], -1.0);
  EXPECT_EQ(out.nu[1], 0.1);
}

TEST(DescaleDual, IdentityIsNoOp) {
  const OCProblem p = brachistochrone();
  DualTrajectory d;
  d.label = SolutionLabel::Scaled;
  d.t = {0.0, 1.0};
  d.lambda = Matrix(2, 3, -0.3);
  d.hamiltonian = {-1.0, -1.0};
  d.nu = {1, 2, 3, 4, 5, 6};
  const DualTrajectory out = descale_dual(d, identity_scales(p));
  EXPECT_EQ(out.lambda, d.lambda);
  EXPECT_EQ(out.hamiltonian, d.hamiltonian);
  EXPECT_EQ(out.nu, d.nu);
}

TEST(DescaleDual, RoundTripWithinOneUlp) {
  const OCProblem p = brachistochrone();
  std::mt19937_64 rng(26);
  std::uniform_real_distribution<double> d(-10.0, 10.0);
  for (int trial = 0; trial < 100; ++trial) {
    const ScaleSet s = random_scales(p, rng, false);
    DualTrajectory dual;
    dual.label = SolutionLabel::Unscaled;
    dual.lambda = Matrix(10, 3);
    for (std::size_t k = 0; k < 10; ++k) {
      dual.t.push_back(static_cast<double>(k));
      dual.hamiltonian.push_back(d(rng));
      for (std::size_t i = 0; i < 3; ++i) dual.lambda(k, i) = d(rng);
    }
    for (int i = 0; i < 6; ++i) dual.nu.push_back(d(rng));
    const DualTrajectory back = descale_dual(rescale_dual(dual, s), s);
    for (std::size_t k = 0; k < 10; ++k) {
      // Two roundings on each side of the covector scale itself.
      for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(back.lambda(k, i), dual.lambda(k, i), 4e-16 * std::fabs(dual.lambda(k, i)));
      EXPECT_NEAR(back.hamiltonian[k], dual.hamiltonian[k], 4e-16 * std::fabs(dual.hamiltonian[k]));
    }
  }
}

TEST(CovectorUnits, Brachistochrone) {
  const CovectorUnits u = covector_units(brachistochrone());
  EXPECT_EQ(u.lambda[0], "seconds/meters");
  EXPECT_EQ(u.lambda_simplified[0], "seconds/meters");
  EXPECT_EQ(u.lambda[2], "seconds/(meters/seconds)");
  EXPECT_EQ(u.lambda_simplified[2], "seconds\xC2\xB2/meters");
  EXPECT_EQ(u.nu[0], "seconds/seconds");
  EXPECT_EQ(u.hamiltonian, "seconds/seconds");
  EXPECT_TRUE(u.hamiltonian_dimensionless);
  EXPECT_EQ(u.hamiltonian_simplified, "1");
}

TEST(CovectorUnits, GenericPathMultiplier) {
  OCProblem p = brachistochrone();
  p.units.cost = "J";
  p.units.time = "s";
  p.path = {parse("theta")};
  p.path_lower = {-1};
  p.path_upper = {1};
  p.units.path = {"h-units"};
  const CovectorUnits u = covector_units(p);
  EXPECT_EQ(u.mu[0], "(J/s)/h-units");
  EXPECT_EQ(u.hamiltonian, "J/s");
  EXPECT_FALSE(u.hamiltonian_dimensionless);
}

TEST(CovectorUnits, ScaledUnitsCarryTheCovectorScale) {
  const OCProblem p = brachistochrone();
  const CovectorUnits u = covector_units(p, builtin_scales("set1", p));
  EXPECT_EQ(u.lambda[0], "10 seconds/(100 meters)");
  EXPECT_EQ(u.lambda_simplified[0], "0.1 seconds/meters");
  EXPECT_EQ(u.lambda_simplified[1], "0.5 seconds/meters");
  EXPECT_TRUE(u.hamiltonian_dimensionless);
}

TEST(SimplifyUnit, Algebra) {
  EXPECT_EQ(simplify_unit("meters/seconds/seconds"), "meters/seconds\xC2\xB2");
  EXPECT_EQ(simplify_unit("(lb-ft)^2*s"), "lb-ft\xC2\xB2*s");
  EXPECT_EQ(simplify_unit("lb-ft-s/lb-ft"), "lb-ft-s/lb-ft");
  EXPECT_EQ(simplify_unit("1/s"), "1/s");
  EXPECT_EQ(simplify_unit("kg*m^4/(s*m)"), "kg*m\xC2\xB3/s");
  EXPECT_EQ(simplify_unit("seconds\xC2\xB2/meters"), "seconds\xC2\xB2/meters");
  EXPECT_FALSE(simplify_unit("meters (approx)/").has_value());
}

TEST(ScaleFiles, ShippedSetsMatchBuiltins) {
  const OCProblem p = brachistochrone();
  for (const char* name : {"set1", "set2", "set3"}) {
    const ScaleSet s = load_scale_set(data_dir() / "scales" / (std::string(name) + ".json"), p);
    EXPECT_EQ(s, builtin_scales(name, p)) << name;
  }
}

TEST(ScaleFiles, DefaultsAndBroadcast) {
  const OCProblem p = brachistochrone();
  const ScaleSet s = scale_set_from_json(nlohmann::json{{"Px", 2.0}, {"pt", 3.0}}, p);
  EXPECT_EQ(s.Px, (Vec{2, 2, 2}));
  EXPECT_EQ(s.qx, (Vec{0, 0, 0}));
  EXPECT_EQ(s.Pe, Vec(6, 1.0));
  EXPECT_EQ(s.pJ, 1.0);
  EXPECT_THROW(scale_set_from_json(nlohmann::json{{"Px", {1, 2}}}, p), SchemaError);
  EXPECT_THROW(scale_set_from_json(nlohmann::json{{"Pz", 1}}, p), SchemaError);
  EXPECT_THROW(scale_set_from_json(nlohmann::json{{"Px", -1}}, p), ScaleError);
}

TEST(ScaleFiles, ZpmFactors) {
  const OCProblem p = load_problem(data_dir() / "problems" / "zpm.json");
  const ScaleSet s = load_scale_set(data_dir() / "scales" / "zpm.json", p);
  EXPECT_EQ(s.Px, Vec(3, 1000.0));
  EXPECT_EQ(s.Pu, Vec(3, 10.0));
  EXPECT_EQ(s.pt, 1000.0);
  // Momentum of order 1e4 lb-ft-s becomes order 10; torque of order 1e2
  // lb-ft becomes order 10.
  const OCProblem sp = scale_problem(p, s);
  EXPECT_DOUBLE_EQ(sp.events_lower[1], 8.0);
  EXPECT_DOUBLE_EQ(sp.path_upper[0], 10.0);
  EXPECT_DOUBLE_EQ(sp.events_upper.back(), 10.0);
}
