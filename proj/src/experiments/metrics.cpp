#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <stdexcept>

#include "sdmpc/campaign.hpp"
#include "sdmpc/data_io.hpp"
#include "sdmpc/terminal_io.hpp"

namespace sdmpc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

nlohmann::json vec_json(const VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

nlohmann::json num_json(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

void put(std::ostream& os, double v) {
  if (std::isfinite(v)) os << v;
  else if (std::isnan(v)) os << "nan";
  else os << (v > 0 ? "inf" : "-inf");
}

int violations(const BoxSet& xb, const BoxSet& ub, const VectorXd& x, const VectorXd& u) {
  int count = 0;
  for (int i = 0; i < xb.dim(); ++i) count += xb.enabled[i] && (x[i] < xb.lower[i] || x[i] > xb.upper[i]);
  for (int i = 0; i < ub.dim(); ++i) count += ub.enabled[i] && (u[i] < ub.lower[i] || u[i] > ub.upper[i]);
  return count;
}

}  // namespace

void write_metrics_csv(std::ostream& os, const CampaignResult& c) {
  const Scenario& s = c.scenario;
  os << "run_id,k";
  for (int i = 1; i <= s.nx(); ++i) os << ",x" << i;
  for (int i = 1; i <= s.nu(); ++i) os << ",u" << i;
  os << ",path,V_N,J_tilde,stage_cost,cum_avg_cost,violations\n";
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (const RunResult& r : c.runs) {
    double cum = 0.0;
    for (int k = 0; k < r.completed; ++k) {
      const StepDiagnostics& d = r.diagnostics[k];
      cum += r.stage[k];
      os << r.run_id << ',' << k;
      for (int i = 0; i < s.nx(); ++i) os << ',' << r.x(i, k);
      for (int i = 0; i < s.nu(); ++i) os << ',' << r.u(i, k);
      os << ',' << to_string(d.path) << ',';
      put(os, d.V_N);
      os << ',';
      put(os, d.J_tilde);
      os << ',' << r.stage[k] << ',' << cum / (k + 1) << ',' << violations(s.x_box, s.u_box, r.x.col(k), r.u.col(k))
         << '\n';
    }
  }
}

void write_histograms_csv(std::ostream& os, const CampaignResult& c) {
  const Scenario& s = c.scenario;
  const int i = s.histogram_coordinate, bins = s.histogram_bins;
  os << "step,bin_lo,bin_hi,density\n" << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (int step : s.histogram_steps) {
    if (step < 0 || step > s.steps) continue;
    std::vector<double> v;
    for (const RunResult& r : c.runs)
      if (step <= r.completed) v.push_back(r.x(i, step));
    if (v.empty()) continue;
    double lo, hi;
    if (s.x_box.enabled[i]) {
      lo = s.x_box.lower[i];
      hi = s.x_box.upper[i];
    } else {
      lo = *std::min_element(v.begin(), v.end());
      hi = *std::max_element(v.begin(), v.end());
      if (hi <= lo) hi = lo + 1.0;
    }
    const double width = (hi - lo) / bins;
    std::vector<int> count(bins, 0);
    for (double x : v) {
      if (x < lo || x > hi) continue;
      count[std::min(bins - 1, static_cast<int>((x - lo) / width))]++;
    }
    for (int b = 0; b < bins; ++b)
      os << step << ',' << lo + b * width << ',' << lo + (b + 1) * width << ','
         << count[b] / (static_cast<double>(v.size()) * width) << '\n';
  }
}

void write_diagnostics_jsonl(std::ostream& os, const CampaignResult& c) {
  for (const RunResult& r : c.runs) {
    for (const StepDiagnostics& d : r.diagnostics) {
      nlohmann::json j = to_json(d);
      j["run_id"] = r.run_id;
      os << j.dump() << '\n';
    }
    if (r.failed) os << nlohmann::json{{"run_id", r.run_id}, {"k", r.completed}, {"error", r.error}}.dump() << '\n';
  }
}

nlohmann::json to_json(const CampaignSummary& s) {
  nlohmann::json x_rate = matrix_to_json(s.x_violation_rate), u_rate = matrix_to_json(s.u_violation_rate);
  return {{"runs", s.runs},
          {"failed", s.failed},
          {"alpha", s.alpha},
          {"alpha_unscaled", 2.0 * s.alpha},
          {"J_cl_mean", s.J_mean},
          {"J_cl_sd", s.J_sd},
          {"J_cl_mean_unscaled", 2.0 * s.J_mean},
          {"J_cl_sd_unscaled", 2.0 * s.J_sd},
          {"avg_cost", s.avg_cost},
          {"long_run_mean", s.long_run_mean},
          {"long_run_se", s.long_run_se},
          {"x_violation_rate", x_rate},
          {"u_violation_rate", u_rate},
          {"x_violation_freq", vec_json(s.x_violation_freq)},
          {"u_violation_freq", vec_json(s.u_violation_freq)},
          {"backup_steps", s.backup_steps},
          {"total_steps", s.total_steps},
          {"max_q", s.max_q},
          {"max_slack", s.max_slack},
          {"max_descent_residual", s.max_descent_residual},
          {"max_candidate_residual", s.max_candidate_residual},
          {"max_selection_gap", num_json(s.max_selection_gap)},
          {"step_seconds_mean", s.step_seconds_mean},
          {"step_seconds_sd", s.step_seconds_sd}};
}

nlohmann::json ingredients_json(const OfflineArtifacts& a) {
  nlohmann::json j = to_json(a.ingredients);
  j["variant"] = to_string(a.variant);
  j["alpha"] = a.alpha;
  j["alpha_unscaled"] = 2.0 * a.alpha;
  j["sigma_x"] = a.sigma_x;
  j["sigma_u"] = a.sigma_u;
  j["prestabilizing_gain"] = matrix_to_json(a.prestabilizing_gain);
  j["pe_order"] = a.pe_order;
  j["attempts"] = a.attempts;
  j["terminal_report"] = {{"invariance_margin", a.terminal_report.invariance_margin},
                          {"state_margin", vec_json(a.terminal_report.state_margin.cwiseMin(1e300))},
                          {"input_margin", vec_json(a.terminal_report.input_margin.cwiseMin(1e300))},
                          {"passed", a.terminal_report.passed()}};
  if (a.identified) j["identified"] = {{"A", matrix_to_json(a.identified->A)}, {"B", matrix_to_json(a.identified->B)}};
  return j;
}

void write_campaign(const std::filesystem::path& dir, const CampaignResult& c, const OfflineArtifacts& a) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream f(dir / name);
    if (!f) throw std::runtime_error("cannot write " + (dir / name).string());
    return f;
  };
  {
    std::ofstream f = open("metrics.csv");
    write_metrics_csv(f, c);
  }
  {
    std::ofstream f = open("histograms.csv");
    write_histograms_csv(f, c);
  }
  {
    std::ofstream f = open("diagnostics.jsonl");
    write_diagnostics_jsonl(f, c);
  }
  open("summary.json") << to_json(c.summary).dump(2) << '\n';
  open("ingredients.json") << ingredients_json(a).dump(2) << '\n';
  open("scenario.json") << to_json(c.scenario).dump(2) << '\n';
}

}  // namespace sdmpc
