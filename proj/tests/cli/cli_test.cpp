// End-to-end tests of the command-line tool. Goldens under tests/golden are
// compared numerically (relative 1e-9, floored at 1); set
// OCSCALE_UPDATE_GOLDEN=1 to rewrite them from the current build.

#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unistd.h>

#include <json.hpp>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr double kRelTol = 1e-9;

const fs::path kSource = OCSCALE_SOURCE_DIR;
const fs::path kGolden = kSource / "tests" / "golden";

fs::path scratch() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / ("ocscale_cli_test_" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

struct Run {
  int code = -1;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

Run run(const std::string& args) {
  static int counter = 0;
  const auto base = scratch() / ("run" + std::to_string(counter++));
  const std::string cmd = std::string(OCSCALE_CLI) + " " + args + " >" + base.string() + ".out 2>" + base.string() + ".err";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(base.string() + ".out");
  r.err = slurp(base.string() + ".err");
  return r;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

bool close(double a, double b) { return std::fabs(a - b) <= kRelTol * std::max({1.0, std::fabs(a), std::fabs(b)}); }

void compare_json(const json& got, const json& want, const std::string& where) {
  if (want.is_number() && got.is_number()) {
    EXPECT_TRUE(close(got.get<double>(), want.get<double>())) << where << ": " << got << " vs " << want;
    return;
  }
  ASSERT_EQ(got.type(), want.type()) << where;
  if (want.is_object()) {
    ASSERT_EQ(got.size(), want.size()) << where;
    for (auto it = want.begin(); it != want.end(); ++it) {
      ASSERT_TRUE(got.contains(it.key())) << where << "/" << it.key();
      compare_json(got[it.key()], it.value(), where + "/" + it.key());
    }
  } else if (want.is_array()) {
    ASSERT_EQ(got.size(), want.size()) << where;
    for (std::size_t i = 0; i < want.size(); ++i) compare_json(got[i], want[i], where + "/" + std::to_string(i));
  } else {
    EXPECT_EQ(got, want) << where;
  }
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  for (std::string l; std::getline(ss, l);) out.push_back(l);
  return out;
}

void compare_csv(const fs::path& got, const fs::path& want) {
  const auto g = lines(slurp(got)), w = lines(slurp(want));
  ASSERT_EQ(g.size(), w.size()) << got;
  ASSERT_FALSE(w.empty());
  EXPECT_EQ(g[0], w[0]) << "header of " << got;
  for (std::size_t r = 1; r < w.size(); ++r) {
    std::stringstream gs(g[r]), ws(w[r]);
    std::string gc, wc;
    while (std::getline(ws, wc, ',')) {
      ASSERT_TRUE(std::getline(gs, gc, ',')) << got << ":" << r + 1;
      EXPECT_TRUE(close(std::stod(gc), std::stod(wc))) << got << ":" << r + 1 << ": " << gc << " vs " << wc;
    }
  }
}

void compare_dir(const fs::path& got, const fs::path& want, const std::vector<std::string>& files) {
  const bool update = std::getenv("OCSCALE_UPDATE_GOLDEN") != nullptr;
  if (update) fs::create_directories(want);
  for (const auto& f : files) {
    SCOPED_TRACE(f);
    ASSERT_TRUE(fs::exists(got / f)) << f;
    if (update) fs::copy_file(got / f, want / f, fs::copy_options::overwrite_existing);
    ASSERT_TRUE(fs::exists(want / f)) << "missing golden " << (want / f);
    if (f.ends_with(".json"))
      compare_json(json::parse(slurp(got / f)), json::parse(slurp(want / f)), f);
    else
      compare_csv(got / f, want / f);
  }
}

const std::vector<std::string> kDemoFiles{"report.json",         "magnitude.json",  "nu.json",
                                          "trajectory.csv",      "dual.csv",        "nu_descaled.json",
                                          "trajectory_descaled.csv", "dual_descaled.csv"};

}  // namespace

TEST(Demo, SetOneMatchesGolden) {
  const auto out = scratch() / "demo_set1";
  const auto r = run("demo brachistochrone --scale set1 --grid 201 --out " + q(out));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(lines(r.out).size(), 1u) << r.out;
  EXPECT_NE(r.out.find("verification passed"), std::string::npos) << r.out;
  EXPECT_TRUE(json::parse(slurp(out / "report.json"))["passed"].get<bool>());
  compare_dir(out, kGolden / "demo_set1", kDemoFiles);
}

TEST(Demo, OutputsAreByteIdenticalAcrossRuns) {
  const auto a = scratch() / "det_a", b = scratch() / "det_b";
  ASSERT_EQ(run("demo --scale set2 --grid 201 --out " + q(a)).code, 0);
  ASSERT_EQ(run("demo --scale set2 --grid 201 --out " + q(b)).code, 0);
  for (const auto& f : kDemoFiles) EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  EXPECT_TRUE(fs::exists(a / "meta.json"));
}

TEST(Demo, SetThreeMagnitudes) {
  const auto out = scratch() / "demo_set3";
  ASSERT_EQ(run("demo --scale set3 --out " + q(out)).code, 0);
  const auto mag = json::parse(slurp(out / "magnitude.json"));
  double lo = 0, hi = 0;
  for (const auto& c : mag["components"]) {
    if (c["kind"] == "state") {
      EXPECT_GE(c["min"].get<double>(), -1e-9);
      EXPECT_LE(c["max"].get<double>(), 1 + 1e-9);
    }
    if (c["kind"] == "costate") {
      lo = std::min(lo, c["min"].get<double>());
      hi = std::max(hi, c["max"].get<double>());
    }
  }
  EXPECT_GE(lo, -220.0);
  EXPECT_LT(lo, -100.0);
  EXPECT_LE(hi, 110.0);
  EXPECT_GT(hi, 50.0);
  EXPECT_FALSE(mag["balanced"].get<bool>());
}

TEST(Demo, UnknownBuiltinListsTheBuiltins) {
  auto r = run("demo pendulum --out " + q(scratch() / "x"));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("brachistochrone"), std::string::npos) << r.err;
  EXPECT_TRUE(r.out.empty());
  r = run("demo --scale set7 --out " + q(scratch() / "x"));
  EXPECT_EQ(r.code, 1);
  for (const char* s : {"unscaled", "set1", "set2", "set3"}) EXPECT_NE(r.err.find(s), std::string::npos) << r.err;
}

TEST(Verify, GoldenDescaledSolutionPasses) {
  const auto g = kGolden / "demo_set1";
  const auto r = run("verify " + q(kSource / "data/problems/brachistochrone.json") + " " + q(g / "trajectory_descaled.csv") +
                     " " + q(g / "dual_descaled.csv") + " --nu " + q(g / "nu_descaled.json") + " --tol 1e-6 --out " +
                     q(scratch() / "verify_ok"));
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(lines(r.out).size(), 1u);
}

TEST(Verify, ScaledNumbersFailAgainstThePhysicalProblem) {
  const auto g = kGolden / "demo_set1";
  const auto r = run("verify brachistochrone " + q(g / "trajectory.csv") + " " + q(g / "dual.csv") + " --out " +
                     q(scratch() / "verify_bad"));
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("state_eqns"), std::string::npos) << r.err;
}

TEST(Verify, MissingMultipliersNameTheFile) {
  const auto dir = scratch() / "no_nu";
  fs::create_directories(dir);
  fs::copy_file(kGolden / "demo_set1" / "dual_descaled.csv", dir / "dual.csv", fs::copy_options::overwrite_existing);
  const auto r = run("verify brachistochrone " + q(kGolden / "demo_set1" / "trajectory_descaled.csv") + " " +
                     q(dir / "dual.csv") + " --out " + q(dir));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("nu.json"), std::string::npos) << r.err;
}

TEST(Solve, MissingGuessNamesTheFile) {
  const auto r = run("solve " + q(kSource / "data/problems/brachistochrone.json") + " --scale " +
                     q(kSource / "data/scales/set1.json") + " --guess no_such_guess.json --out " + q(scratch() / "s"));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("no_such_guess.json"), std::string::npos) << r.err;
}

TEST(Solve, ShippedFilesReproduceTheDemo) {
  const auto out = scratch() / "solve_set1";
  const auto r = run("solve " + q(kSource / "data/problems/brachistochrone.json") + " --scale " +
                     q(kSource / "data/scales/set1.json") + " --guess " + q(kSource / "data/guesses/brachistochrone.json") +
                     " --grid 201 --out " + q(out));
  ASSERT_EQ(r.code, 0) << r.err;
  for (const auto& f : {"trajectory_descaled.csv", "dual_descaled.csv"}) compare_csv(out / f, kGolden / "demo_set1" / f);
}

TEST(Solve, ZpmWithShippedScales) {
  const auto r = run("solve " + q(kSource / "data/problems/zpm.json") + " --scale " + q(kSource / "data/scales/zpm.json") +
                     " --guess " + q(kSource / "data/guesses/zpm.json") + " --out " + q(scratch() / "zpm"));
  EXPECT_EQ(r.code, 0) << r.err;
}

TEST(Solve, SchemaErrorsExitOne) {
  const auto bad = scratch() / "bad_problem.json";
  std::ofstream(bad) << R"({"states": ["x"], "controls": ["u"], "dynamics": ["u +"], "endpoint_cost": "0", "running_cost": "u^2"})";
  auto r = run("solve " + q(bad) + " --guess " + q(kSource / "data/guesses/brachistochrone.json") + " --out " +
               q(scratch() / "bad"));
  EXPECT_EQ(r.code, 1);
  EXPECT_FALSE(r.err.empty());
  r = run("solve brachistochrone --bogus-flag");
  EXPECT_EQ(r.code, 1);
}

TEST(Solve, NumericFailureExitsTwo) {
  const auto guess = scratch() / "far_guess.json";
  std::ofstream(guess) << R"({"lambda0": [5, -5, 5], "tf": 0.001})";
  const auto out = scratch() / "far";
  const auto r = run("solve brachistochrone --guess " + q(guess) + " --out " + q(out));
  EXPECT_EQ(r.code, 2) << r.out << r.err;
  EXPECT_FALSE(json::parse(slurp(out / "report.json"))["passed"].get<bool>());
}

TEST(Balance, WritesHistory) {
  const auto out = scratch() / "balance";
  const auto r = run("balance brachistochrone --scale set1 --max-iter 2 --out " + q(out));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto h = json::parse(slurp(out / "balance_history.json"));
  ASSERT_GE(h["iterations"].size(), 2u);
  EXPECT_LE(h["iterations"].size(), 3u);
  const auto best = h["best"].get<std::size_t>();
  EXPECT_LE(h["iterations"][best]["score"].get<double>(), 1.2);
  EXPECT_TRUE(fs::exists(out / "balanced_scales.json"));
}

TEST(Audit, ConstantScalesGiveZeroDiscreteError) {
  const auto dir = scratch() / "audit_const";
  fs::create_directories(dir);
  std::ofstream sc(dir / "scales.csv"), st(dir / "states.csv");
  sc << "t,P_a,P_b\n";
  st << "t,a,b\n";
  for (int k = 0; k <= 20; ++k) {
    sc << 0.5 * k << ",100,0.25\n";
    st << 0.5 * k << "," << std::sin(0.5 * k) << "," << k * k << "\n";
  }
  sc.close();
  st.close();
  const auto r = run("audit discrete " + q(dir / "scales.csv") + " " + q(dir / "states.csv") + " --dump --out " + q(dir));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto a = json::parse(slurp(dir / "audit.json"));
  EXPECT_EQ(a["sup_norm"], json::parse("[0.0, 0.0]"));
  EXPECT_TRUE(fs::exists(dir / "audit_points.csv"));
  const auto r2 = run("audit additional " + q(dir / "scales.csv") + " " + q(dir / "states.csv") + " --out " + q(dir));
  ASSERT_EQ(r2.code, 0) << r2.err;
  EXPECT_EQ(json::parse(slurp(dir / "audit.json"))["sup_norm"], json::parse("[0.0, 0.0]"));
}

TEST(Audit, MismatchedGridIsASchemaError) {
  const auto dir = scratch() / "audit_bad";
  fs::create_directories(dir);
  std::ofstream(dir / "scales.csv") << "t,P_a\n0,1\n1,2\n2,3\n";
  std::ofstream(dir / "states.csv") << "t,a\n0,1\n1.5,2\n2,3\n";
  const auto r = run("audit discrete " + q(dir / "scales.csv") + " " + q(dir / "states.csv") + " --out " + q(dir));
  EXPECT_EQ(r.code, 1);
}

TEST(Audit, SpectralInvariantUnderEveryBuiltinSet) {
  const auto traj = kGolden / "demo_set1" / "trajectory_descaled.csv";
  for (const char* s : {"set1", "set2", "set3"}) {
    const auto r = run("audit spectral brachistochrone " + q(traj) + " --scale " + s + " --out " + q(scratch() / "spec"));
    EXPECT_EQ(r.code, 0) << s << r.err;
    EXPECT_NE(r.out.find("invariant"), std::string::npos);
  }
}
