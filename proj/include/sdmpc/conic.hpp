#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace sdmpc::conic {

using SparseRowMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Layout of the cone rows of G and h, in this order: nonnegative orthant,
/// second-order cones, positive semidefinite cones. A PSD block of order p
/// occupies p(p+1)/2 rows holding its lower triangle column by column, with
/// off-diagonal entries scaled by sqrt(2).
struct ConeDims {
  int nonneg = 0;
  std::vector<int> soc;
  std::vector<int> psd;

  int rows() const;
  /// Barrier degree: nonneg + #soc + sum of PSD orders.
  int degree() const;
};

/// minimize    ½ xᵀPx + qᵀx
/// subject to  A x = b
///             G x + s = h,  s ∈ K
struct Problem {
  Eigen::MatrixXd P;  ///< n×n symmetric PSD; an empty matrix means zero.
  Eigen::VectorXd q;
  SparseRowMatrix A;
  Eigen::VectorXd b;
  SparseRowMatrix G;
  Eigen::VectorXd h;
  ConeDims cones;

  int num_vars() const { return static_cast<int>(q.size()); }
};

enum class Status {
  kOptimal,
  kPrimalInfeasible,
  kDualInfeasible,
  kMaxIterations,
  kNumericalError,
};

std::string to_string(Status status);

struct Settings {
  double tol_gap_abs = 1e-8;
  double tol_gap_rel = 1e-8;
  double tol_feas = 1e-8;
  double tol_infeas = 1e-8;
  int max_iter = 100;
  double static_reg = 1e-10;
  int refine_steps = 3;
  double step_fraction = 0.99;
  bool verbose = false;
};

struct Result {
  Status status = Status::kNumericalError;
  Eigen::VectorXd x, y, z, s;
  double primal_objective = 0.0;
  double dual_objective = 0.0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double gap = 0.0;
  int iterations = 0;
};

Result solve(const Problem& problem, const Settings& settings = {});

/// Number of svec entries for a symmetric matrix of the given order.
inline int svec_size(int order) { return order * (order + 1) / 2; }

/// Position of entry (row, col), row >= col, inside svec.
inline int svec_index(int row, int col, int order) {
  return col * order - col * (col - 1) / 2 + (row - col);
}

Eigen::VectorXd svec(const Eigen::Ref<const Eigen::MatrixXd>& m);
Eigen::MatrixXd smat(const Eigen::Ref<const Eigen::VectorXd>& v, int order);

/// Affine symmetric matrix S(x) = S₀ + Σ_v x_v S_v described by its lower
/// triangle, emitted as one PSD block of G x + s = h with s = svec(S(x)).
class LmiBlock {
 public:
  explicit LmiBlock(int order) : order_(order), constant_(Eigen::MatrixXd::Zero(order, order)) {}

  int order() const { return order_; }
  /// Adds coef · x_var to entry (row, col), row >= col.
  void add(int row, int col, int var, double coef);
  void add_constant(int row, int col, double value);

  /// Appends the block's rows starting at row_offset.
  void emit(int row_offset, std::vector<Eigen::Triplet<double>>& g, Eigen::VectorXd& h) const;

 private:
  struct Term {
    int row, col, var;
    double coef;
  };
  int order_;
  Eigen::MatrixXd constant_;
  std::vector<Term> terms_;
};

}  // namespace sdmpc::conic
