#include "ocscale/report_io.hpp"

#include <algorithm>
#include <string>

namespace ocscale {

using json = nlohmann::json;

json to_json(const VerificationReport& r) {
  json j;
  j["passed"] = r.passed;
  j["tolerances"] = {{"algebraic", r.tolerances.algebraic}, {"grid", r.tolerances.grid}};
  j["groups"] = json::array();
  for (const auto& g : r.groups) {
    json e;
    e["name"] = g.name;
    e["value"] = g.value;
    e["tolerance"] = g.tolerance;
    e["passed"] = g.passed;
    e["exempt"] = g.exempt;
    if (!g.note.empty()) e["note"] = g.note;
    j["groups"].push_back(e);
  }
  j["notes"] = r.notes;
  return j;
}

json to_json(const NewtonResult& r) {
  json j;
  j["status"] = to_string(r.status);
  j["converged"] = r.converged();
  j["iterations"] = r.iterations;
  j["residual_norm"] = r.residual_norm;
  j["condition"] = r.condition;
  j["unknowns"] = r.z;
  j["residual"] = r.residual;
  j["history"] = r.history;
  if (!r.message.empty()) j["message"] = r.message;
  return j;
}

json to_json(const MagnitudeReport& r) {
  json j;
  j["score"] = r.score;
  j["balanced"] = r.balanced();
  j["score_definition"] = "log10(largest / smallest nonzero max|.|) over states, controls, costates, path multipliers";
  j["time_span"] = r.time_span;
  j["components"] = json::array();
  for (const auto& c : r.components)
    j["components"].push_back(
        json{{"name", c.name}, {"kind", to_string(c.kind)}, {"max_abs", c.max_abs}, {"min", c.min}, {"max", c.max}});
  j["notes"] = r.notes;
  return j;
}

json to_json(const BalanceResult& r) {
  json j;
  j["best"] = r.best;
  j["iterations"] = json::array();
  for (const auto& step : r.history) {
    json e;
    e["scales"] = scale_set_to_json(step.scales);
    e["score"] = step.report.score;
    e["newton_iterations"] = step.newton_iterations;
    e["report"] = to_json(step.report);
    j["iterations"].push_back(e);
  }
  if (r.failure) j["failure"] = *r.failure;
  return j;
}

json to_json(const DiscreteErrorReport& r) {
  json j;
  j["kind"] = "discrete";
  j["sup_norm"] = r.sup_norm;
  j["increment_sup"] = r.increment_sup;
  j["ratio"] = r.ratio;
  j["identity_max_ulps"] = r.max_ulps;
  return j;
}

json to_json(const AdditionalDynamicsReport& r) {
  json j;
  j["kind"] = "additional";
  j["sup_norm"] = r.sup_norm;
  return j;
}

json to_json(const SensitivityReport& r) {
  json j;
  j["kind"] = "spectral";
  j["invariant"] = r.invariant();
  j["tolerance"] = r.tolerance;
  j["max_rel_error_scaled"] = r.max_rel_error_scaled;
  j["max_rel_error_similarity"] = r.max_rel_error_similarity;
  double hi = 0.0;
  for (double v : r.unscaled) hi = std::max(hi, v);
  j["max_time_weighted_radius"] = hi;
  return j;
}

CsvTable scale_sequence_table(const ScaleSequence& s, const std::vector<std::string>& names) {
  if (names.size() != s.dim()) throw std::invalid_argument("scale_sequence_table: one name per component");
  CsvTable t;
  t.header.push_back("t");
  for (const auto& n : names) t.header.push_back("P_" + n);
  if (!s.q.empty())
    for (const auto& n : names) t.header.push_back("q_" + n);
  t.values = Matrix(s.size(), t.header.size());
  for (std::size_t k = 0; k < s.size(); ++k) {
    t.values(k, 0) = s.t[k];
    for (std::size_t i = 0; i < s.dim(); ++i) {
      t.values(k, 1 + i) = s.P(k, i);
      if (!s.q.empty()) t.values(k, 1 + s.dim() + i) = s.q(k, i);
    }
  }
  return t;
}

ScaleSequence scale_sequence_from_table(const CsvTable& table) {
  if (table.header.empty() || table.header[0] != "t")
    throw SchemaError("column 1", "scale table must start with a 't' column");
  std::vector<std::size_t> pcols, qcols;
  for (std::size_t c = 1; c < table.header.size(); ++c) {
    const auto& h = table.header[c];
    if (h.rfind("P", 0) == 0)
      pcols.push_back(c);
    else if (h.rfind("q", 0) == 0)
      qcols.push_back(c);
    else
      throw SchemaError("column " + std::to_string(c + 1), "header '" + h + "' is neither P_* nor q_*");
  }
  if (pcols.empty()) throw SchemaError("header", "no P_* columns");
  if (!qcols.empty() && qcols.size() != pcols.size())
    throw SchemaError("header", std::to_string(pcols.size()) + " P columns but " + std::to_string(qcols.size()) + " q columns");
  ScaleSequence s;
  const std::size_t n = table.values.rows();
  s.t = table.values.column(0);
  s.P = Matrix(n, pcols.size());
  if (!qcols.empty()) s.q = Matrix(n, qcols.size());
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < pcols.size(); ++i) {
      s.P(k, i) = table.values(k, pcols[i]);
      if (!qcols.empty()) s.q(k, i) = table.values(k, qcols[i]);
    }
  s.check();
  return s;
}

}  // namespace ocscale
