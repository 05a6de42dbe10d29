#pragma once

#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "sdmpc/conic.hpp"
#include "sdmpc/constraints.hpp"
#include "sdmpc/data.hpp"
#include "sdmpc/pce.hpp"

namespace sdmpc {

/// Affine map from (x_0, v_0..v_{N-1}, w_0..w_{N-1}) to x_1..x_N over one
/// horizon in prestabilized inputs v = u - K x, stacked sample by sample:
///   x_{1..N} = Ψ_x0 x_0 + Ψ_v v + Ψ_w w.
/// With K stabilizing the entries stay bounded over long horizons, which open
/// loop condensing of an unstable plant does not. The map is block lower
/// triangular exactly. A predictor built from a Hankel stack also keeps S⁺ so
/// that the multipliers g = S⁺ z of a stacked trajectory z can be reported.
struct Predictor {
  int nx = 0;
  int nu = 0;
  int horizon = 0;
  Eigen::MatrixXd K;
  Eigen::MatrixXd psi_x0;
  Eigen::MatrixXd psi_v;
  Eigen::MatrixXd psi_w;
  Eigen::MatrixXd stack_pinv;  ///< empty for model predictors

  bool has_stack() const { return stack_pinv.size() > 0; }
  int stack_cols() const { return static_cast<int>(stack_pinv.rows()); }
};

/// Every column of the stack is an exact trajectory, so the future state rows
/// are a linear function of the (x_0, v, w) rows, whose rank must be
/// n_x + N (n_u + n_x). Throws InsufficientExcitation when it is smaller and
/// std::invalid_argument when the data are not generated by an LTI system.
/// An empty K means K = 0.
Predictor make_predictor(const HankelStack& stack, const Eigen::MatrixXd& K = {});

/// Rollout of x⁺ = (A + BK) x + B v + w.
Predictor make_predictor(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, int horizon,
                         const Eigen::MatrixXd& K = {});

enum class CovarianceMode { kSemidefinite, kDiagonal };

/// Disturbance coefficients of each predicted step in the basis: step i
/// occupies the columns of block i.
std::vector<PceVector> place_disturbance(const PceBasis& basis, const DisturbanceModel& w_model);

struct OcpProblem {
  Predictor predictor;
  PceBasis basis;
  PceVector init;                  ///< x̄, n_x × L, zero beyond the x-block
  std::vector<PceVector> w;        ///< N entries of n_x × L
  Eigen::MatrixXd Q, R, P;
  double sigma_x = 1.0;
  double sigma_u = 1.0;
  BoxSet x_box;
  BoxSet u_box;
  Eigen::MatrixXd Gamma;
  double gamma_level = 1.0;
  bool terminal_constraints = true;
  CovarianceMode covariance_mode = CovarianceMode::kSemidefinite;
  double beta = 1e4;
  /// Bound on each slack entry; keeps the measured path honest when x̄ is far
  /// outside the constraint set.
  double slack_max = 1e-3;
  conic::Settings solver;
  /// Accept the unconstrained minimizer when it satisfies every cone.
  bool fast_path = true;

  int nx() const { return predictor.nx; }
  int nu() const { return predictor.nu; }
  int horizon() const { return predictor.horizon; }
  int size() const { return basis.size(); }
  void validate() const;
};

/// First predicted step at which input coefficient j may be nonzero; the
/// horizon when it is pinned throughout.
int first_free_step(const PceBasis& basis, int j);

/// Decision vector layout: for each j, c̃⁺ʲ and c̃⁻ʲ in [0, 1] (n_x each,
/// x-block columns only, cʲ = c_max (c̃⁺ʲ - c̃⁻ʲ)), then the free prestabilized
/// input coefficients vʲ of steps first_free_step(j)..N-1.
struct OcpLayout {
  std::vector<int> offset;  ///< start of block j, size L + 1
  std::vector<int> first_free;
  int num_vars() const { return offset.back(); }
};

struct AssembledOcp {
  conic::Problem program;
  OcpLayout layout;
  double constant = 0.0;  ///< objective offset
};

AssembledOcp assemble(const OcpProblem& problem);

/// Sparse triplet form of an assembled program: {"n", "P", "q", "G", "h",
/// "cones": {"nonneg", "soc", "psd"}} with P and G as [[row, col, value], ...]
/// and P upper triangular.
nlohmann::json to_json(const AssembledOcp& ocp);

enum class OcpStatus { kOptimal, kInfeasible, kNumericalFailure };
const char* to_string(OcpStatus status);

struct OcpSolution {
  OcpStatus status = OcpStatus::kNumericalFailure;
  std::vector<PceVector> x;  ///< N + 1 entries, n_x × L
  std::vector<PceVector> u;  ///< N entries, n_u × L
  Eigen::MatrixXd g;         ///< (T - N + 1) × L, empty for model predictors
  PceVector slack;           ///< n_x × L, zero beyond the x-block
  double value = 0.0;        ///< with β‖c‖₁
  double cost = 0.0;         ///< without
  int iterations = 0;
  bool fast_path = false;

  bool optimal() const { return status == OcpStatus::kOptimal; }
};

OcpSolution solve(const OcpProblem& problem);

/// Σ_j ⟨φʲ,φʲ⟩ (Σ_i ½xʲᵢᵀQxʲᵢ + ½uʲᵢᵀRuʲᵢ + ½xʲ_NᵀPxʲ_N).
double evaluate_cost(const std::vector<PceVector>& x, const std::vector<PceVector>& u, const PceBasis& basis,
                     const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R, const Eigen::MatrixXd& P);

/// Positive entries are violations.
struct OcpResidual {
  double initial = 0.0;     ///< ‖x_0 - x̄‖∞
  double dynamics = 0.0;    ///< predictor mismatch, ∞-norm
  double chance = 0.0;      ///< max of mean ± σ sd beyond the box
  double terminal_mean = 0.0;
  double terminal_covariance = 0.0;
  double causality = 0.0;   ///< largest pinned input coefficient

  double max() const;
};

OcpResidual constraint_violation(const OcpProblem& problem, const std::vector<PceVector>& x,
                                 const std::vector<PceVector>& u);

/// Decision-variable counts of the unreduced program with explicit x, u, g and
/// one slack block: n_x(N+1)L, n_u N L, (T-N+1) L and n_x L.
struct VariableCounts {
  int x, u, g, c;
};
VariableCounts nominal_variable_counts(int nx, int nu, int horizon, int L, int T);

}  // namespace sdmpc
