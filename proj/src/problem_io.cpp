#include "ocscale/problem_io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace ocscale {

using nlohmann::json;

SchemaError::SchemaError(const std::string& where, const std::string& what)
    : std::runtime_error(where + ": " + what), where_(where) {}

namespace {

const json& require(const json& j, const std::string& key, const std::string& at) {
  if (!j.is_object()) throw SchemaError(at.empty() ? "/" : at, "expected an object");
  auto it = j.find(key);
  if (it == j.end()) throw SchemaError(at + "/" + key, "missing required key '" + key + "'");
  return *it;
}

std::vector<std::string> string_list(const json& j, const std::string& at) {
  if (!j.is_array()) throw SchemaError(at, "expected an array of strings");
  std::vector<std::string> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_string()) throw SchemaError(at + "/" + std::to_string(i), "expected a string");
    out.push_back(j[i].get<std::string>());
  }
  return out;
}

Expr expression(const json& j, const std::string& at) {
  if (j.is_number()) return Expr::constant(j.get<double>());
  if (!j.is_string()) throw SchemaError(at, "expected an expression string");
  try {
    return parse(j.get<std::string>());
  } catch (const ParseError& e) {
    throw SchemaError(at, e.what());
  }
}

std::vector<Expr> expression_list(const json& j, const std::string& at) {
  if (!j.is_array()) throw SchemaError(at, "expected an array of expressions");
  std::vector<Expr> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(expression(j[i], at + "/" + std::to_string(i)));
  return out;
}

// null stands for an infinite bound in the direction of `unbounded`.
Vec bound_list(const json& j, const std::string& at, double unbounded) {
  if (!j.is_array()) throw SchemaError(at, "expected an array of numbers");
  Vec out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (j[i].is_null()) {
      out.push_back(unbounded);
    } else if (j[i].is_number()) {
      out.push_back(j[i].get<double>());
    } else {
      throw SchemaError(at + "/" + std::to_string(i), "expected a number or null");
    }
  }
  return out;
}

json bounds_to_json(const Vec& v) {
  json out = json::array();
  for (double x : v) {
    if (std::isinf(x)) {
      out.push_back(nullptr);
    } else {
      out.push_back(x);
    }
  }
  return out;
}

json exprs_to_json(const std::vector<Expr>& v) {
  json out = json::array();
  for (const auto& e : v) out.push_back(to_string(e));
  return out;
}

void constraint_block(const json& j, const std::string& at, std::vector<Expr>& exprs, Vec& lo, Vec& hi) {
  exprs = expression_list(require(j, "exprs", at), at + "/exprs");
  lo = bound_list(require(j, "lower", at), at + "/lower", -std::numeric_limits<double>::infinity());
  hi = bound_list(require(j, "upper", at), at + "/upper", std::numeric_limits<double>::infinity());
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    out.push_back(cell);
  }
  return out;
}

void write_row(std::ostream& os, double t, std::initializer_list<std::span<const double>> parts) {
  os << format_double(t);
  for (auto part : parts)
    for (double v : part) os << ',' << format_double(v);
  os << '\n';
}

std::ofstream open_for_write(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  return os;
}

}  // namespace

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json problem_to_json(const OCProblem& p) {
  json j;
  j["name"] = p.name;
  j["states"] = p.state_names;
  j["controls"] = p.control_names;
  j["endpoint_cost"] = to_string(p.endpoint_cost);
  j["running_cost"] = to_string(p.running_cost);
  j["dynamics"] = exprs_to_json(p.dynamics);
  j["events"] = {{"exprs", exprs_to_json(p.events)},
                 {"lower", bounds_to_json(p.events_lower)},
                 {"upper", bounds_to_json(p.events_upper)}};
  j["path"] = {{"exprs", exprs_to_json(p.path)},
               {"lower", bounds_to_json(p.path_lower)},
               {"upper", bounds_to_json(p.path_upper)}};
  if (p.t0_fixed) j["initial_time"] = *p.t0_fixed;
  j["units"] = {{"states", p.units.states},   {"controls", p.units.controls},
                {"events", p.units.events},   {"path", p.units.path},
                {"cost", p.units.cost},       {"time", p.units.time}};
  return j;
}

OCProblem problem_from_json(const json& j) {
  if (!j.is_object()) throw SchemaError("/", "problem file must be a JSON object");
  OCProblem p;
  if (j.contains("name")) {
    if (!j["name"].is_string()) throw SchemaError("/name", "expected a string");
    p.name = j["name"].get<std::string>();
  }
  p.state_names = string_list(require(j, "states", ""), "/states");
  p.control_names = string_list(require(j, "controls", ""), "/controls");
  p.dynamics = expression_list(require(j, "dynamics", ""), "/dynamics");
  p.endpoint_cost = j.contains("endpoint_cost") ? expression(j["endpoint_cost"], "/endpoint_cost") : Expr();
  p.running_cost = j.contains("running_cost") ? expression(j["running_cost"], "/running_cost") : Expr();
  if (j.contains("events")) constraint_block(j["events"], "/events", p.events, p.events_lower, p.events_upper);
  if (j.contains("path")) constraint_block(j["path"], "/path", p.path, p.path_lower, p.path_upper);
  if (j.contains("initial_time")) {
    if (!j["initial_time"].is_number()) throw SchemaError("/initial_time", "expected a number");
    p.t0_fixed = j["initial_time"].get<double>();
  }
  if (j.contains("units")) {
    const json& u = j["units"];
    if (!u.is_object()) throw SchemaError("/units", "expected an object");
    if (u.contains("states")) p.units.states = string_list(u["states"], "/units/states");
    if (u.contains("controls")) p.units.controls = string_list(u["controls"], "/units/controls");
    if (u.contains("events")) p.units.events = string_list(u["events"], "/units/events");
    if (u.contains("path")) p.units.path = string_list(u["path"], "/units/path");
    if (u.contains("cost")) p.units.cost = u["cost"].get<std::string>();
    if (u.contains("time")) p.units.time = u["time"].get<std::string>();
  }
  validate(p);
  return p;
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw SchemaError(path.string(), "cannot open file");
  try {
    return json::parse(is);
  } catch (const json::parse_error& e) {
    throw SchemaError(path.string(), std::string("invalid JSON: ") + e.what());
  }
}

void write_json_file(const json& j, const std::filesystem::path& path) {
  auto os = open_for_write(path);
  os << j.dump(2) << '\n';
}

OCProblem load_problem(const std::filesystem::path& path) {
  const json j = read_json_file(path);
  try {
    return problem_from_json(j);
  } catch (const SchemaError& e) {
    throw SchemaError(path.string() + e.where(), e.what());
  }
}

void save_problem(const OCProblem& p, const std::filesystem::path& path) {
  write_json_file(problem_to_json(p), path);
}

void write_trajectory_csv(std::ostream& os, const OCProblem& p, const Trajectory& tr) {
  check_shapes(p, tr);
  os << "t";
  for (const auto& n : p.state_names) os << ',' << n;
  for (const auto& n : p.control_names) os << ',' << n;
  os << '\n';
  for (std::size_t k = 0; k < tr.size(); ++k) write_row(os, tr.t[k], {tr.x.row(k), tr.u.row(k)});
}

void save_trajectory_csv(const std::filesystem::path& path, const OCProblem& p, const Trajectory& tr) {
  auto os = open_for_write(path);
  write_trajectory_csv(os, p, tr);
}

void write_dual_csv(std::ostream& os, const OCProblem& p, const DualTrajectory& d) {
  os << "t";
  for (std::size_t i = 0; i < p.nx(); ++i) os << ",lam_" << i + 1;
  for (std::size_t i = 0; i < p.nh(); ++i) os << ",mu_" << i + 1;
  os << ",H\n";
  for (std::size_t k = 0; k < d.size(); ++k) {
    std::span<const double> mu;
    if (p.nh() > 0) mu = d.mu.row(k);
    const double h = d.hamiltonian[k];
    write_row(os, d.t[k], {d.lambda.row(k), mu, std::span<const double>(&h, 1)});
  }
}

void save_dual_csv(const std::filesystem::path& path, const OCProblem& p, const DualTrajectory& d) {
  auto os = open_for_write(path);
  write_dual_csv(os, p, d);
}

CsvTable load_csv_table(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw SchemaError(path.string(), "cannot open file");
  CsvTable table;
  std::string line;
  if (!std::getline(is, line)) throw SchemaError(path.string(), "empty CSV file");
  table.header = split_csv_line(line);
  std::vector<Vec> rows;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != table.header.size())
      throw SchemaError(path.string() + ":" + std::to_string(line_no),
                        "expected " + std::to_string(table.header.size()) + " columns, got " + std::to_string(cells.size()));
    Vec row;
    for (const auto& c : cells) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(c, &used));
        if (used != c.size()) throw std::invalid_argument(c);
      } catch (const std::exception&) {
        throw SchemaError(path.string() + ":" + std::to_string(line_no), "not a number: '" + c + "'");
      }
    }
    rows.push_back(std::move(row));
  }
  table.values = Matrix(rows.size(), table.header.size());
  for (std::size_t r = 0; r < rows.size(); ++r) table.values.set_row(r, rows[r]);
  return table;
}

void save_csv_table(const std::filesystem::path& path, const CsvTable& table) {
  auto os = open_for_write(path);
  for (std::size_t c = 0; c < table.header.size(); ++c) os << (c ? "," : "") << table.header[c];
  os << '\n';
  for (std::size_t r = 0; r < table.values.rows(); ++r) {
    for (std::size_t c = 0; c < table.values.cols(); ++c) os << (c ? "," : "") << format_double(table.values(r, c));
    os << '\n';
  }
}

Trajectory load_trajectory_csv(const std::filesystem::path& path, const OCProblem& p, SolutionLabel label) {
  const CsvTable table = load_csv_table(path);
  std::vector<std::string> expected{"t"};
  expected.insert(expected.end(), p.state_names.begin(), p.state_names.end());
  expected.insert(expected.end(), p.control_names.begin(), p.control_names.end());
  if (table.header != expected) throw SchemaError(path.string() + ":1", "trajectory header does not match the problem");
  Trajectory tr;
  tr.label = label;
  const std::size_t n = table.values.rows();
  tr.t.resize(n);
  tr.x = Matrix(n, p.nx());
  tr.u = Matrix(n, p.nu());
  for (std::size_t k = 0; k < n; ++k) {
    tr.t[k] = table.values(k, 0);
    for (std::size_t i = 0; i < p.nx(); ++i) tr.x(k, i) = table.values(k, 1 + i);
    for (std::size_t j = 0; j < p.nu(); ++j) tr.u(k, j) = table.values(k, 1 + p.nx() + j);
  }
  return tr;
}

DualTrajectory load_dual_csv(const std::filesystem::path& path, const OCProblem& p, SolutionLabel label) {
  const CsvTable table = load_csv_table(path);
  std::vector<std::string> expected{"t"};
  for (std::size_t i = 0; i < p.nx(); ++i) expected.push_back("lam_" + std::to_string(i + 1));
  for (std::size_t i = 0; i < p.nh(); ++i) expected.push_back("mu_" + std::to_string(i + 1));
  expected.push_back("H");
  if (table.header != expected) throw SchemaError(path.string() + ":1", "dual header does not match the problem");
  DualTrajectory d;
  d.label = label;
  const std::size_t n = table.values.rows();
  d.t.resize(n);
  d.lambda = Matrix(n, p.nx());
  d.mu = Matrix(n, p.nh());
  d.hamiltonian.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    d.t[k] = table.values(k, 0);
    for (std::size_t i = 0; i < p.nx(); ++i) d.lambda(k, i) = table.values(k, 1 + i);
    for (std::size_t i = 0; i < p.nh(); ++i) d.mu(k, i) = table.values(k, 1 + p.nx() + i);
    d.hamiltonian[k] = table.values(k, 1 + p.nx() + p.nh());
  }
  return d;
}

json nu_to_json(const Vec& nu) { return json{{"nu", nu}}; }

Vec nu_from_json(const json& j, std::size_t ne) {
  const json& arr = require(j, "nu", "");
  if (!arr.is_array() || arr.size() != ne)
    throw SchemaError("/nu", "expected an array of " + std::to_string(ne) + " numbers");
  Vec out;
  for (const auto& v : arr) out.push_back(v.get<double>());
  return out;
}

namespace {

Vec scale_vector(const json& j, const char* key, std::size_t n, double fallback) {
  const std::string at = std::string("/") + key;
  if (!j.contains(key)) return Vec(n, fallback);
  const json& v = j[key];
  if (v.is_number()) return Vec(n, v.get<double>());
  if (!v.is_array()) throw SchemaError(at, "expected a number or an array of numbers");
  if (v.size() != n)
    throw SchemaError(at, "expected " + std::to_string(n) + " entries, got " + std::to_string(v.size()));
  Vec out;
  for (std::size_t i = 0; i < n; ++i) {
    if (!v[i].is_number()) throw SchemaError(at + "/" + std::to_string(i), "expected a number");
    out.push_back(v[i].get<double>());
  }
  return out;
}

double scale_scalar(const json& j, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number()) throw SchemaError(std::string("/") + key, "expected a number");
  return j[key].get<double>();
}

}  // namespace

ScaleSet scale_set_from_json(const json& j, const OCProblem& p) {
  if (!j.is_object()) throw SchemaError("/", "scale file must be a JSON object");
  static const std::set<std::string> known{"Px", "qx", "Pu", "qu", "pt", "qt", "pJ", "qJ", "Pe", "qe", "Ph", "qh"};
  for (const auto& item : j.items())
    if (!known.count(item.key())) throw SchemaError("/" + item.key(), "unknown scale key '" + item.key() + "'");
  ScaleSet s;
  s.Px = scale_vector(j, "Px", p.nx(), 1.0);
  s.qx = scale_vector(j, "qx", p.nx(), 0.0);
  s.Pu = scale_vector(j, "Pu", p.nu(), 1.0);
  s.qu = scale_vector(j, "qu", p.nu(), 0.0);
  s.pt = scale_scalar(j, "pt", 1.0);
  s.qt = scale_scalar(j, "qt", 0.0);
  s.pJ = scale_scalar(j, "pJ", 1.0);
  s.qJ = scale_scalar(j, "qJ", 0.0);
  s.Pe = scale_vector(j, "Pe", p.ne(), 1.0);
  s.qe = scale_vector(j, "qe", p.ne(), 0.0);
  s.Ph = scale_vector(j, "Ph", p.nh(), 1.0);
  s.qh = scale_vector(j, "qh", p.nh(), 0.0);
  check_scales(p, s);
  return s;
}

json scale_set_to_json(const ScaleSet& s) {
  return json{{"Px", s.Px}, {"qx", s.qx}, {"Pu", s.Pu}, {"qu", s.qu}, {"pt", s.pt}, {"qt", s.qt},
              {"pJ", s.pJ}, {"qJ", s.qJ}, {"Pe", s.Pe}, {"qe", s.qe}, {"Ph", s.Ph}, {"qh", s.qh}};
}

ScaleSet load_scale_set(const std::filesystem::path& path, const OCProblem& p) {
  const json j = read_json_file(path);
  try {
    return scale_set_from_json(j, p);
  } catch (const SchemaError& e) {
    throw SchemaError(path.string() + e.where(), e.what());
  }
}

Guess guess_from_json(const json& j, std::size_t nx) {
  Guess g;
  const json& lam = require(j, "lambda0", "");
  if (!lam.is_array() || lam.size() != nx)
    throw SchemaError("/lambda0", "expected an array of " + std::to_string(nx) + " numbers");
  for (std::size_t i = 0; i < nx; ++i) {
    if (!lam[i].is_number()) throw SchemaError("/lambda0/" + std::to_string(i), "expected a number");
    g.lambda0.push_back(lam[i].get<double>());
  }
  if (j.contains("tf")) {
    if (!j["tf"].is_number()) throw SchemaError("/tf", "expected a number");
    g.tf = j["tf"].get<double>();
  }
  return g;
}

Guess load_guess(const std::filesystem::path& path, std::size_t nx) {
  const json j = read_json_file(path);
  try {
    return guess_from_json(j, nx);
  } catch (const SchemaError& e) {
    throw SchemaError(path.string() + e.where(), e.what());
  }
}

}  // namespace ocscale
