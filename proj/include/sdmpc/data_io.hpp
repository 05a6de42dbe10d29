#pragma once

#include <iosfwd>

#include <json.hpp>

#include "sdmpc/data.hpp"

namespace sdmpc {

/// Columns k, x1..x{n_x}, u1..u{n_u}, w1..w{n_x}; the final row k = T leaves u
/// and w empty.
void write_csv(std::ostream& os, const DataRecord& record);
DataRecord read_csv(std::istream& is, DisturbanceSource source = DisturbanceSource::kMeasured);

/// {"nx", "nu", "T", "flag": "measured"|"estimated", "x", "u", "w"} with
/// per-sample arrays.
nlohmann::json to_json(const DataRecord& record);
DataRecord record_from_json(const nlohmann::json& j);

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m);
Eigen::MatrixXd matrix_from_json(const nlohmann::json& j);

}  // namespace sdmpc
