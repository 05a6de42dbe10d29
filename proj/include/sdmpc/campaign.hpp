#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "sdmpc/controller.hpp"
#include "sdmpc/scenario.hpp"

namespace sdmpc {

/// Offline phase: the record, the variant's disturbances, ingredients and
/// predictor.
struct OfflineArtifacts {
  Variant variant = Variant::kMeasured;
  /// Full record with measured disturbances; identical for every variant.
  DataRecord record;
  /// record with the disturbances the variant works with.
  DataRecord variant_record;
  /// Feedback used for prestabilized sampling, empty for open-loop data.
  Eigen::MatrixXd prestabilizing_gain;
  TerminalIngredients ingredients;
  TerminalReport terminal_report;
  Predictor predictor;
  std::optional<LinearModel> identified;  ///< variant III
  int pe_order = 0;
  int attempts = 0;
  double sigma_x = 1.0;
  double sigma_u = 1.0;
  /// ½ tr(Σ_W P).
  double alpha = 0.0;
};

/// Samples one record of scenario.T steps from x = 0. Prestabilized sampling
/// synthesizes K̃ from the first count_open samples with estimated
/// disturbances, then applies u = K̃x + v.
DataRecord collect_data(const Scenario& s, std::mt19937_64& rng, Eigen::MatrixXd* prestabilizing_gain = nullptr);

/// Re-samples (stream `attempt` of the scenario seed) until the Hankel window
/// is persistently exciting of order N + n_x + 1, then builds the variant's
/// ingredients and predictor. Throws InsufficientExcitation after
/// max_attempts and SynthesisError when the terminal design fails.
OfflineArtifacts run_offline(const Scenario& s, int max_attempts = 10);

ControllerConfig make_controller_config(const Scenario& s, const OfflineArtifacts& artifacts);

/// ½(xᵀQx + uᵀRu).
double stage_cost(const Eigen::VectorXd& x, const Eigen::VectorXd& u, const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R);

/// Closed-loop run: x₀ from stream (seed, run_id, 2), disturbances from
/// (seed, run_id, 1), so every variant sees the same realizations.
struct RunResult {
  int run_id = 0;
  bool failed = false;
  std::string error;
  Eigen::MatrixXd x;  ///< n_x × (steps + 1), completed columns only when failed
  Eigen::MatrixXd u;  ///< n_u × steps
  Eigen::MatrixXd w;  ///< n_x × steps, realized disturbances
  std::vector<double> stage;  ///< ½ convention
  std::vector<StepDiagnostics> diagnostics;
  int completed = 0;  ///< number of applied inputs

  /// J^cl = Σ_k ℓ(x_k, u_k) over the completed steps.
  double closed_loop_cost() const;
};

RunResult run_closed_loop(const Scenario& s, const OfflineArtifacts& artifacts, int run_id);

struct CampaignSummary {
  int runs = 0;
  int failed = 0;
  double alpha = 0.0;
  double J_mean = 0.0, J_sd = 0.0;
  /// ℓ̄_k = mean over runs of (1/(k+1)) Σ_{i<=k} ℓ_i.
  std::vector<double> avg_cost;
  /// Mean over runs of the per-run average of ℓ_k over [transient, steps),
  /// and its standard error.
  double long_run_mean = 0.0, long_run_se = 0.0;
  /// Fraction of runs violating each coordinate box at each step.
  Eigen::MatrixXd x_violation_rate;  ///< n_x × steps
  Eigen::MatrixXd u_violation_rate;  ///< n_u × steps
  /// Over all steps at or after the transient.
  Eigen::VectorXd x_violation_freq;
  Eigen::VectorXd u_violation_freq;
  int backup_steps = 0;
  int total_steps = 0;
  int max_q = 0;
  double max_slack = 0.0;
  double max_descent_residual = 0.0;
  double max_candidate_residual = 0.0;
  /// max over steps of V_N - J̃ (<= 0 expected).
  double max_selection_gap = -std::numeric_limits<double>::infinity();
  double step_seconds_mean = 0.0, step_seconds_sd = 0.0;
};

struct CampaignResult {
  Scenario scenario;
  std::vector<RunResult> runs;
  CampaignSummary summary;
};

struct CampaignOptions {
  /// 0: hardware concurrency.
  int threads = 0;
  /// Called after each finished run with the number finished so far.
  std::function<void(int)> progress;
};

/// Independent runs 0..samples-1 in parallel; results are stored by run_id, so
/// the output does not depend on the thread count. A run that throws is
/// recorded as failed and the campaign continues.
CampaignResult run_campaign(const Scenario& s, const OfflineArtifacts& artifacts, const CampaignOptions& options = {});

CampaignSummary summarize(const Scenario& s, const OfflineArtifacts& artifacts, const std::vector<RunResult>& runs);

/// run_id,k,x1..,u1..,path,V_N,J_tilde,stage_cost,cum_avg_cost,violations with
/// one row per applied input; violations counts the violated box coordinates.
void write_metrics_csv(std::ostream& os, const CampaignResult& c);
/// step,bin_lo,bin_hi,density of the histogram coordinate. Bins cover the
/// state box, or the sample range when that coordinate is free; the density
/// is normalized by all samples of the step.
void write_histograms_csv(std::ostream& os, const CampaignResult& c);
/// One object per step with run_id added.
void write_diagnostics_jsonl(std::ostream& os, const CampaignResult& c);

nlohmann::json to_json(const CampaignSummary& s);
/// Ingredients plus α, σ values, the prestabilizing gain and the terminal report.
nlohmann::json ingredients_json(const OfflineArtifacts& a);

/// metrics.csv, histograms.csv, diagnostics.jsonl, summary.json,
/// ingredients.json and scenario.json under dir.
void write_campaign(const std::filesystem::path& dir, const CampaignResult& c, const OfflineArtifacts& a);

}  // namespace sdmpc
