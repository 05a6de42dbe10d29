#pragma once

#include <stdexcept>

#include <Eigen/Dense>

#include "sdmpc/conic.hpp"
#include "sdmpc/constraints.hpp"
#include "sdmpc/data.hpp"

namespace sdmpc {

class SynthesisError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Terminal feedback K, data multiplier H, cost P, covariance bound Γ, level γ
/// of X_f = {x : ½xᵀPx <= γ}, and M = X⁺ - W. Model-based ingredients leave
/// H and M empty.
struct TerminalIngredients {
  Eigen::MatrixXd K;
  Eigen::MatrixXd H;
  Eigen::MatrixXd P;
  Eigen::MatrixXd Gamma;
  double gamma_level = 1.0;
  Eigen::MatrixXd M;
  /// Closed-loop map: MH for data-driven ingredients, A + BK otherwise.
  Eigen::MatrixXd closed_loop;

  int nx() const { return static_cast<int>(P.rows()); }
  int nu() const { return static_cast<int>(K.rows()); }
};

struct FeedbackDesign {
  Eigen::MatrixXd K;
  Eigen::MatrixXd H;
};

/// Semidefinite program
///   min tr(Q X X₂) + tr(X₁)
///   s.t. [[X X₂ - I, M X₂], [⋆, X X₂]] ⪰ 0,  [[X₁, R^½ U X₂], [⋆, X X₂]] ⪰ 0
/// with K = U X₂ (X X₂)⁻¹ and H = X₂ (X X₂)⁻¹. Every term depends on X₂ only
/// through V = [X; U] X₂ because the rows of M lie in the row space of
/// [X; U]; the program is solved in V and X₂ = [X; U]⁺ V.
FeedbackDesign synthesize_K_H(const DataRecord& record, const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R,
                              const conic::Settings& settings = {});

/// Spectral radius via the eigenvalues of a general matrix.
double spectral_radius(const Eigen::MatrixXd& F);

/// Solution of X - Fᵀ X F = S by Kronecker vectorization. Throws SynthesisError
/// unless F is Schur stable.
Eigen::MatrixXd solve_lyapunov(const Eigen::MatrixXd& F, const Eigen::MatrixXd& S);

/// P - (MH)ᵀ P (MH) - Kᵀ R K = Q.
Eigen::MatrixXd solve_P(const Eigen::MatrixXd& K, const Eigen::MatrixXd& H, const Eigen::MatrixXd& M,
                        const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R);

/// (MH) Γ (MH)ᵀ - Γ + Σ̄ = 0.
Eigen::MatrixXd solve_Gamma(const Eigen::MatrixXd& MH, const Eigen::MatrixXd& sigma_bar);

/// Stabilizing DARE solution by structure-preserving doubling.
Eigen::MatrixXd solve_dare(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const Eigen::MatrixXd& Q,
                           const Eigen::MatrixXd& R, double tol = 1e-13, int max_iter = 100);

/// Data-driven K, H, P and Γ with γ left at 1.
TerminalIngredients data_driven_ingredients(const DataRecord& record, const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R,
                                            const Eigen::MatrixXd& sigma_bar, const conic::Settings& settings = {});

/// P from the DARE, K = -(R + BᵀPB)⁻¹BᵀPA, Γ from the closed-loop Lyapunov equation.
TerminalIngredients model_based_ingredients(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const Eigen::MatrixXd& Q,
                                            const Eigen::MatrixXd& R, const Eigen::MatrixXd& sigma_bar);

struct TerminalReport {
  /// 1 - max over X_f of ‖F x‖²_P / γ, scale free.
  double invariance_margin = 0.0;
  /// Per coordinate: distance of the worst-case tightened bound to the box,
  /// +inf for unconstrained coordinates.
  Eigen::VectorXd state_margin;
  Eigen::VectorXd input_margin;

  bool invariant() const { return invariance_margin >= -1e-12; }
  bool covered() const {
    return (state_margin.array() >= 0).all() && (input_margin.array() >= 0).all();
  }
  bool passed() const { return invariant() && covered(); }
};

/// Certifies the terminal assumption for boxes with per-coordinate variance
/// tightening: over X_f, |x_i| <= sqrt(2γ (P⁻¹)_ii), and the covariance bound
/// adds σ_x sqrt(Γ_ii); inputs use K P⁻¹ Kᵀ and K Γ Kᵀ.
TerminalReport check_terminal_assumption(const TerminalIngredients& ing, const BoxSet& x_box, const BoxSet& u_box,
                                         double sigma_x, double sigma_u);

/// Halves γ from γ₀ until check_terminal_assumption passes; throws
/// SynthesisError after max_halvings.
double select_gamma_level(const TerminalIngredients& ing, const BoxSet& x_box, const BoxSet& u_box, double sigma_x,
                          double sigma_u, double gamma0 = 1.0, int max_halvings = 60);

}  // namespace sdmpc
