#pragma once

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "ocscale/problem.hpp"
#include "ocscale/scaling.hpp"

namespace ocscale {

/// A malformed input file. `where()` is a JSON pointer or a CSV location.
class SchemaError : public std::runtime_error {
 public:
  SchemaError(const std::string& where, const std::string& what);
  const std::string& where() const { return where_; }

 private:
  std::string where_;
};

nlohmann::json problem_to_json(const OCProblem& p);
/// Validates the result; throws SchemaError or ProblemError.
OCProblem problem_from_json(const nlohmann::json& j);

OCProblem load_problem(const std::filesystem::path& path);
void save_problem(const OCProblem& p, const std::filesystem::path& path);

nlohmann::json read_json_file(const std::filesystem::path& path);
/// Writes `j` with two-space indentation and a trailing newline.
void write_json_file(const nlohmann::json& j, const std::filesystem::path& path);

/// "%.17g" text, which round-trips every double. Used for every number
/// written to a data file.
std::string format_double(double v);

// Trajectory CSV: header `t,<state names>,<control names>`.
void write_trajectory_csv(std::ostream& os, const OCProblem& p, const Trajectory& tr);
void save_trajectory_csv(const std::filesystem::path& path, const OCProblem& p, const Trajectory& tr);
Trajectory load_trajectory_csv(const std::filesystem::path& path, const OCProblem& p,
                               SolutionLabel label = SolutionLabel::Unscaled);

// Dual CSV: header `t,lam_1..lam_nx[,mu_1..mu_nh],H`. Endpoint multipliers
// travel separately in nu.json as {"nu": [...]}.
void write_dual_csv(std::ostream& os, const OCProblem& p, const DualTrajectory& d);
void save_dual_csv(const std::filesystem::path& path, const OCProblem& p, const DualTrajectory& d);
DualTrajectory load_dual_csv(const std::filesystem::path& path, const OCProblem& p,
                             SolutionLabel label = SolutionLabel::Unscaled);
nlohmann::json nu_to_json(const Vec& nu);
Vec nu_from_json(const nlohmann::json& j, std::size_t ne);

/// Scale-set JSON: keys Px, qx, Pu, qu, pt, qt, pJ, qJ, Pe, qe, Ph, qh.
/// Vector keys accept an array or a scalar (broadcast). Omitted P entries
/// default to 1 and omitted q entries to 0. The result is checked against
/// the problem's dimensions.
ScaleSet scale_set_from_json(const nlohmann::json& j, const OCProblem& p);
nlohmann::json scale_set_to_json(const ScaleSet& s);
ScaleSet load_scale_set(const std::filesystem::path& path, const OCProblem& p);

/// Guess JSON: {"lambda0": [...], "tf": <real>}.
Guess guess_from_json(const nlohmann::json& j, std::size_t nx);
Guess load_guess(const std::filesystem::path& path, std::size_t nx);

/// Generic numeric CSV with a header row, used by the audit commands.
struct CsvTable {
  std::vector<std::string> header;
  Matrix values;
};
CsvTable load_csv_table(const std::filesystem::path& path);
void save_csv_table(const std::filesystem::path& path, const CsvTable& table);

}  // namespace ocscale
