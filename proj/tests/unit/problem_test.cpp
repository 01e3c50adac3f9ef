#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "ocscale/problem.hpp"
#include "ocscale/problem_io.hpp"

using namespace ocscale;
namespace fs = std::filesystem;

namespace {

fs::path data_dir() { return fs::path(OCSCALE_SOURCE_DIR) / "data"; }

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "ocscale_problem_test";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST(Brachistochrone, DynamicsAtRestPointingDown) {
  const OCProblem p = brachistochrone();
  const Env env{{"x", 0.0}, {"y", 0.0}, {"v", 1.0}, {"theta", 0.0}, {"t", 0.0}};
  EXPECT_EQ(p.dynamics[0].eval(env), 0.0);
  EXPECT_EQ(p.dynamics[1].eval(env), 1.0);
  EXPECT_EQ(p.dynamics[2].eval(env), 9.8);
}

TEST(Brachistochrone, EventBoundsAndCost) {
  const OCProblem p = brachistochrone();
  const Vec expected{0, 0, 0, 0, 1000, 1};
  EXPECT_EQ(p.events_lower, expected);
  EXPECT_EQ(p.events_upper, expected);
  EXPECT_EQ(p.endpoint_cost.eval({{"tf", 5.0}}), 5.0);
  EXPECT_TRUE(p.running_cost.is_constant(0.0));
  EXPECT_EQ(p.nx(), 3u);
  EXPECT_EQ(p.nu(), 1u);
  EXPECT_EQ(p.ne(), 6u);
  EXPECT_EQ(p.nh(), 0u);
  EXPECT_NO_THROW(validate(p));
}

TEST(Validate, ReportsInvertedBounds) {
  OCProblem p = brachistochrone();
  p.events = {parse("tf")};
  p.events_lower = {1};
  p.events_upper = {0};
  p.units.events.clear();
  try {
    validate(p);
    FAIL();
  } catch (const ProblemError& e) {
    ASSERT_EQ(e.violations().size(), 1u);
    EXPECT_EQ(e.violations()[0], "eL > eU at component 1");
  }
}

TEST(Validate, ReportsDimensionMismatch) {
  OCProblem p = brachistochrone();
  p.dynamics.pop_back();
  try {
    validate(p);
    FAIL();
  } catch (const ProblemError& e) {
    EXPECT_NE(std::string(e.what()).find("dynamics has 2 components but nx = 3"), std::string::npos);
  }
}

TEST(Validate, ReportsEveryViolation) {
  OCProblem p = brachistochrone();
  p.dynamics[0] = parse("v*sin(phi)");
  p.events[0] = parse("t");
  p.path = {parse("theta")};
  p.path_lower = {1};
  p.path_upper = {0};
  try {
    validate(p);
    FAIL();
  } catch (const ProblemError& e) {
    EXPECT_EQ(e.violations().size(), 3u) << e.what();
  }
}

TEST(ProblemIo, RoundTripIsStructurallyEqual) {
  const OCProblem p = brachistochrone();
  const auto path = scratch("brach.json");
  save_problem(p, path);
  EXPECT_TRUE(same_problem(load_problem(path), p));
  EXPECT_TRUE(same_problem(load_problem(data_dir() / "problems" / "brachistochrone.json"), p));
}

TEST(ProblemIo, MissingDynamicsNamesTheKey) {
  auto j = problem_to_json(brachistochrone());
  j.erase("dynamics");
  try {
    problem_from_json(j);
    FAIL();
  } catch (const SchemaError& e) {
    EXPECT_EQ(e.where(), "/dynamics");
    EXPECT_NE(std::string(e.what()).find("dynamics"), std::string::npos);
  }
}

TEST(ProblemIo, BadExpressionPointsAtField) {
  auto j = problem_to_json(brachistochrone());
  j["dynamics"][1] = "v*cos(theta";
  try {
    problem_from_json(j);
    FAIL();
  } catch (const SchemaError& e) {
    EXPECT_EQ(e.where(), "/dynamics/1");
  }
}

TEST(ProblemIo, ZpmFileParses) {
  const OCProblem p = load_problem(data_dir() / "problems" / "zpm.json");
  EXPECT_EQ(p.nx(), 3u);
  EXPECT_EQ(p.nu(), 3u);
  EXPECT_EQ(p.nh(), 3u);
  EXPECT_EQ(p.path_upper[0], 100.0);
  EXPECT_EQ(p.units.states[0], "lb-ft-s");
  // Orbit-rate coupling of order 1e-3 on momenta of order 1e4.
  EXPECT_DOUBLE_EQ(p.dynamics[0].eval({{"ux", 0.0}, {"hy", 1e4}}), 10.0);
}

TEST(ProblemIo, UnboundedBoundsSerializeAsNull) {
  OCProblem p = brachistochrone();
  p.path = {parse("theta")};
  p.path_lower = {-std::numeric_limits<double>::infinity()};
  p.path_upper = {1.5};
  p.units.path = {"radians"};
  const auto j = problem_to_json(p);
  EXPECT_TRUE(j["path"]["lower"][0].is_null());
  EXPECT_TRUE(same_problem(problem_from_json(j), p));
}

TEST(TrajectoryCsv, RoundTripsFullPrecision) {
  const OCProblem p = brachistochrone();
  Trajectory tr;
  tr.t = {0.0, 0.1, 1.0 / 3.0};
  tr.x = Matrix(3, 3);
  tr.u = Matrix(3, 1);
  for (std::size_t k = 0; k < 3; ++k) {
    for (std::size_t i = 0; i < 3; ++i) tr.x(k, i) = std::sqrt(2.0) * (k + 1) * (i + 0.7);
    tr.u(k, 0) = -1e-300 * k;
  }
  std::ostringstream os;
  write_trajectory_csv(os, p, tr);
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "t,x,y,v,theta");
  const auto path = scratch("traj.csv");
  save_trajectory_csv(path, p, tr);
  const Trajectory back = load_trajectory_csv(path, p);
  EXPECT_EQ(back.t, tr.t);
  EXPECT_EQ(back.x, tr.x);
  EXPECT_EQ(back.u, tr.u);
}

TEST(DualCsv, RoundTrips) {
  const OCProblem p = brachistochrone();
  DualTrajectory d;
  d.t = {0.0, 2.0};
  d.lambda = Matrix(2, 3, 0.125);
  d.lambda(1, 2) = -0.1;
  d.hamiltonian = {-1.0, -1.0 + 1e-16};
  std::ostringstream os;
  write_dual_csv(os, p, d);
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "t,lam_1,lam_2,lam_3,H");
  const auto path = scratch("dual.csv");
  save_dual_csv(path, p, d);
  const DualTrajectory back = load_dual_csv(path, p);
  EXPECT_EQ(back.lambda, d.lambda);
  EXPECT_EQ(back.hamiltonian, d.hamiltonian);
  EXPECT_EQ(nu_from_json(nu_to_json({1, 2, 3}), 3), (Vec{1, 2, 3}));
}

TEST(Shapes, RejectsNonIncreasingGrid) {
  const OCProblem p = brachistochrone();
  Trajectory tr;
  tr.t = {0.0, 0.0};
  tr.x = Matrix(2, 3);
  tr.u = Matrix(2, 1);
  EXPECT_THROW(check_shapes(p, tr), std::invalid_argument);
}
