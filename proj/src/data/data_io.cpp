#include "sdmpc/data_io.hpp"

#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace sdmpc {

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

const char* flag_name(DisturbanceSource s) { return s == DisturbanceSource::kMeasured ? "measured" : "estimated"; }

}  // namespace

void write_csv(std::ostream& os, const DataRecord& record) {
  record.validate();
  const int nx = record.nx(), nu = record.nu(), T = record.length();
  os << "k";
  for (int i = 1; i <= nx; ++i) os << ",x" << i;
  for (int i = 1; i <= nu; ++i) os << ",u" << i;
  for (int i = 1; i <= nx; ++i) os << ",w" << i;
  os << '\n' << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (int k = 0; k <= T; ++k) {
    os << k;
    for (int i = 0; i < nx; ++i) os << ',' << record.x(i, k);
    for (int i = 0; i < nu; ++i) {
      os << ',';
      if (k < T) os << record.u(i, k);
    }
    for (int i = 0; i < nx; ++i) {
      os << ',';
      if (k < T) os << record.w(i, k);
    }
    os << '\n';
  }
}

DataRecord read_csv(std::istream& is, DisturbanceSource source) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("read_csv: empty input");
  const std::vector<std::string> header = split(line);
  int nx = 0, nu = 0, nw = 0;
  for (const std::string& h : header) {
    if (h.empty()) continue;
    if (h[0] == 'x') ++nx;
    if (h[0] == 'u') ++nu;
    if (h[0] == 'w') ++nw;
  }
  if (header.empty() || header[0] != "k" || nx == 0 || nw != nx || static_cast<int>(header.size()) != 1 + 2 * nx + nu)
    throw std::runtime_error("read_csv: unexpected header '" + line + "'");
  std::vector<std::vector<std::string>> rows;
  while (std::getline(is, line))
    if (!line.empty()) rows.push_back(split(line));
  if (rows.size() < 2) throw std::runtime_error("read_csv: need at least two rows");
  const int T = static_cast<int>(rows.size()) - 1;
  DataRecord r{Eigen::MatrixXd(nx, T + 1), Eigen::MatrixXd(nu, T), Eigen::MatrixXd(nx, T), source};
  for (int k = 0; k <= T; ++k) {
    const auto& c = rows[k];
    if (static_cast<int>(c.size()) != 1 + 2 * nx + nu) throw std::runtime_error("read_csv: bad row " + std::to_string(k));
    for (int i = 0; i < nx; ++i) r.x(i, k) = std::stod(c[1 + i]);
    if (k == T) break;
    for (int i = 0; i < nu; ++i) r.u(i, k) = std::stod(c[1 + nx + i]);
    for (int i = 0; i < nx; ++i) r.w(i, k) = std::stod(c[1 + nx + nu + i]);
  }
  return r;
}

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw std::runtime_error("matrix_from_json: expected an array of rows");
  const Eigen::Index rows = static_cast<Eigen::Index>(j.size());
  const Eigen::Index cols = rows > 0 ? static_cast<Eigen::Index>(j[0].size()) : 0;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    if (static_cast<Eigen::Index>(j[i].size()) != cols) throw std::runtime_error("matrix_from_json: ragged rows");
    for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = j[i][c].get<double>();
  }
  return m;
}

nlohmann::json to_json(const DataRecord& record) {
  record.validate();
  // Per-sample arrays: entry k holds the sample at time k.
  return {{"nx", record.nx()},
          {"nu", record.nu()},
          {"T", record.length()},
          {"flag", flag_name(record.source)},
          {"x", matrix_to_json(record.x.transpose())},
          {"u", matrix_to_json(record.u.transpose())},
          {"w", matrix_to_json(record.w.transpose())}};
}

DataRecord record_from_json(const nlohmann::json& j) {
  DataRecord r;
  const std::string flag = j.at("flag").get<std::string>();
  if (flag != "measured" && flag != "estimated") throw std::runtime_error("record_from_json: unknown flag " + flag);
  r.source = flag == "measured" ? DisturbanceSource::kMeasured : DisturbanceSource::kEstimated;
  r.x = matrix_from_json(j.at("x")).transpose();
  r.u = matrix_from_json(j.at("u")).transpose();
  r.w = matrix_from_json(j.at("w")).transpose();
  const int nx = j.at("nx").get<int>(), nu = j.at("nu").get<int>(), T = j.at("T").get<int>();
  if (r.nx() != nx || r.nu() != nu || r.length() != T) throw std::runtime_error("record_from_json: dims disagree with arrays");
  r.validate();
  return r;
}

}  // namespace sdmpc
