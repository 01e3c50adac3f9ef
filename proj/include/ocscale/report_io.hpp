#pragma once

#include <filesystem>

#include <json.hpp>

#include "ocscale/audit.hpp"
#include "ocscale/balance.hpp"
#include "ocscale/conditions.hpp"
#include "ocscale/problem_io.hpp"
#include "ocscale/solver.hpp"

namespace ocscale {

// JSON views of the module results. Keys are sorted and numbers use the
// shortest round-trip form, so equal inputs give byte-identical files.

nlohmann::json to_json(const VerificationReport& r);
nlohmann::json to_json(const NewtonResult& r);
nlohmann::json to_json(const MagnitudeReport& r);
nlohmann::json to_json(const BalanceResult& r);
nlohmann::json to_json(const DiscreteErrorReport& r);
nlohmann::json to_json(const AdditionalDynamicsReport& r);
nlohmann::json to_json(const SensitivityReport& r);

/// Time grid plus scales as a CSV table: `t,P_<name>...[,q_<name>...]`.
CsvTable scale_sequence_table(const ScaleSequence& s, const std::vector<std::string>& names);
/// Inverse of scale_sequence_table: the first column is t, columns headed
/// P_* are scales and q_* offsets (same count as P_* or none).
ScaleSequence scale_sequence_from_table(const CsvTable& table);

}  // namespace ocscale
