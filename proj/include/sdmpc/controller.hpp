#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "sdmpc/ocp.hpp"
#include "sdmpc/terminal.hpp"

namespace sdmpc {

/// Both the measured and the backup initial condition failed. Under the
/// standing assumptions the backup problem is feasible by construction, so
/// this points at inconsistent data, ingredients or tolerances.
class ControllerInfeasible : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ControllerConfig {
  /// Must be built with ingredients.K.
  Predictor predictor;
  TerminalIngredients ingredients;
  DisturbanceModel w_model;
  Eigen::MatrixXd Q, R;
  BoxSet x_box;
  BoxSet u_box;
  double sigma_x = 1.0;
  double sigma_u = 1.0;
  CovarianceMode covariance_mode = CovarianceMode::kSemidefinite;
  bool terminal_constraints = true;
  double beta = 1e4;
  double slack_max = 1e-3;
  conic::Settings solver;
  bool fast_path = true;
  /// Used when step() receives no disturbance realization.
  std::optional<DisturbanceEstimator> estimator;

  int nx() const { return predictor.nx; }
  int nu() const { return predictor.nu; }
  int horizon() const { return predictor.horizon; }
  void validate() const;
};

/// Shifted previous solution in the grown basis, feasible for the next backup
/// problem.
struct Candidate {
  PceBasis basis;
  std::vector<PceVector> x;  ///< N + 1 entries, n_x × L'
  std::vector<PceVector> u;  ///< N entries
  double cost = 0.0;
};

/// Drops the first step, appends u = K x_N and x = F x_N with F the terminal
/// closed loop, and places the disturbance of step new_tag in the appended
/// block at the last step.
Candidate shift_candidate(const OcpSolution& solution, const PceBasis& basis, const TerminalIngredients& ingredients,
                          const DisturbanceModel& w_model, int new_tag, const Eigen::MatrixXd& Q,
                          const Eigen::MatrixXd& R);

/// Least-squares germ of one disturbance realization. Coordinates without a
/// coefficient get germ 0 and set *degenerate. Throws std::invalid_argument
/// when w does not lie in the range of the coefficients.
Eigen::VectorXd fit_germ_checked(const DisturbanceModel& w_model, const Eigen::VectorXd& w, bool* degenerate = nullptr);

/// u = Σ_{j < L_x} uʲ φʲ(ξ̂) with the germs of the x-block fitted from the
/// realizations in past_w (time tag → w).
Eigen::VectorXd realize_feedback(const PceVector& u_first, const PceBasis& basis,
                                 const std::map<int, Eigen::VectorXd>& past_w, const DisturbanceModel& w_model,
                                 bool* degenerate = nullptr);

/// Σ_j ⟨φʲ,φʲ⟩ (½ x₀ʲᵀQx₀ʲ + ½ u₀ʲᵀRu₀ʲ).
double first_stage_cost(const OcpSolution& solution, const PceBasis& basis, const Eigen::MatrixXd& Q,
                        const Eigen::MatrixXd& R);

enum class InitPath { kMeasured, kBackup };
const char* to_string(InitPath path);

struct StepDiagnostics {
  int k = 0;
  InitPath path = InitPath::kMeasured;
  int q = 0;
  int basis_size = 0;
  OcpStatus measured_status = OcpStatus::kNumericalFailure;
  std::optional<OcpStatus> backup_status;
  double V_measured = 0.0;  ///< NaN unless optimal
  double V_backup = 0.0;    ///< NaN unless solved
  double V_N = 0.0;
  double J_tilde = 0.0;       ///< compared against at this step
  double J_tilde_next = 0.0;  ///< of the new candidate
  /// Constraint violation of the candidate in the backup problem, NaN when the
  /// backup path was not needed.
  double candidate_residual = 0.0;
  /// J̃_{k+1} - (cost - first stage + disturbance P-cost); zero up to rounding
  /// because P solves the terminal Lyapunov equation.
  double descent_residual = 0.0;
  double first_stage = 0.0;
  double disturbance_cost = 0.0;
  double slack_inf = 0.0;
  bool fast_path = false;
  int iterations = 0;
  bool degenerate_germ = false;
  double solve_seconds = 0.0;
  Eigen::VectorXd x;
  Eigen::VectorXd u;
  Eigen::VectorXd w_prev;  ///< empty at k = 0
};

nlohmann::json to_json(const StepDiagnostics& d);

struct ControllerState {
  int k = 0;
  int q = 0;
  PceBasis basis;  ///< of the last accepted problem
  std::optional<Candidate> candidate;
  double J_tilde = 0.0;
  /// x-block of the candidate's first state.
  PceVector predicted_init;
  std::map<int, Eigen::VectorXd> past_w;
  Eigen::VectorXd x_prev;
  Eigen::VectorXd u_prev;
};

/// Online loop with measured/backup initial conditions.
class Controller {
 public:
  explicit Controller(ControllerConfig config);

  /// Applies one step at state x. w_prev is the realization of the previous
  /// disturbance; when absent it is estimated from data. Throws
  /// ControllerInfeasible when neither initial condition yields a solution.
  Eigen::VectorXd step(const Eigen::VectorXd& x, const std::optional<Eigen::VectorXd>& w_prev = std::nullopt,
                       StepDiagnostics* diagnostics = nullptr);

  const ControllerState& state() const { return state_; }
  const ControllerConfig& config() const { return config_; }

  /// Fresh basis with L_x = 1 and disturbance tags k..k+N-1.
  PceBasis measured_basis(int k) const;
  OcpProblem make_problem(const PceBasis& basis, const PceVector& init) const;

 private:
  ControllerConfig config_;
  ControllerState state_;
};

}  // namespace sdmpc
