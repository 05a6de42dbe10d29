#pragma once

#include <map>
#include <random>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace sdmpc {

enum class PolyKind { kConstant, kHermite, kLegendre };

/// Symbolic univariate orthogonal polynomial of one germ coordinate.
/// Functions with different time_tag have independent germs.
struct PolyFamily {
  PolyKind kind = PolyKind::kConstant;
  int degree = 0;
  int time_tag = 0;
  int germ = 0;  ///< coordinate of a vector germ that shares time_tag

  bool operator==(const PolyFamily&) const = default;
};

/// Probabilists' Hermite polynomial He_d.
double hermite(int degree, double xi);
/// Legendre polynomial P_d on [-1, 1].
double legendre(int degree, double xi);

double eval_poly(const PolyFamily& f, double xi);

/// ⟨φ,φ⟩ under the germ's probability measure: d! for Hermite, 1/(2d+1) for
/// Legendre, 1 for the constant.
double poly_norm(const PolyFamily& f);

/// Ordered orthogonal basis {1, x-block, w-block_0, ..., w-block_{N-1}} with
/// L = L_x + N (L_w - 1).
class PceBasis {
 public:
  PceBasis() = default;
  PceBasis(std::vector<PolyFamily> functions, int lx, int lw, int horizon);

  int size() const { return static_cast<int>(functions_.size()); }
  int lx() const { return lx_; }
  int lw() const { return lw_; }
  int horizon() const { return horizon_; }

  const std::vector<PolyFamily>& functions() const { return functions_; }
  const PolyFamily& operator[](int j) const { return functions_[j]; }
  const Eigen::VectorXd& norms() const { return norms_; }

  /// Index of the first function of the disturbance block of predicted step k.
  int w_block_start(int k) const { return lx_ + k * (lw_ - 1); }
  bool has_tag(int tag) const;

 private:
  std::vector<PolyFamily> functions_;
  Eigen::VectorXd norms_;
  int lx_ = 1;
  int lw_ = 1;
  int horizon_ = 0;
};

/// General form: the x-block families (L_x - 1 entries) are given explicitly
/// and each disturbance block repeats w_template with tags w_start_tag + k.
PceBasis make_basis(int lx, int lw, int horizon, const std::vector<PolyFamily>& x_block,
                    const std::vector<PolyFamily>& w_template, int w_start_tag);

/// Degree-1 form: every tag in x_tags and every disturbance step contributes
/// L_w - 1 functions of the given kind, one per germ coordinate.
PceBasis make_basis(int lx, int lw, int horizon, const std::vector<int>& x_tags, int w_start_tag,
                    PolyKind kind = PolyKind::kHermite);

/// Appends the block of step new_tag and moves the first disturbance block
/// into the x-block, so L' = L + L_w - 1 and L_x' = L_x + L_w - 1.
PceBasis grow_basis_for_backup(const PceBasis& basis, int new_tag);

/// φ^j(ξ) for every basis function, germ_values[tag](germ) giving ξ.
Eigen::VectorXd eval_basis_at(const PceBasis& basis, const std::map<int, Eigen::VectorXd>& germ_values);

/// Input coefficients pinned to zero at predicted step k:
/// {j : L_x + k (L_w - 1) <= j <= L - 1}.
std::vector<int> causality_zero_indices(int k, int lx, int lw, int L);

/// Coefficients of a vector random variable: column j multiplies φ^j.
using PceVector = Eigen::MatrixXd;

struct Moments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
};

template <typename Derived>
Moments moments(const Eigen::MatrixBase<Derived>& z, const PceBasis& basis) {
  if (z.cols() != basis.size()) throw std::invalid_argument("moments: coefficient columns do not match basis size");
  const Eigen::Index L = z.cols();
  Moments m;
  m.mean = z.col(0);
  m.covariance = z.rightCols(L - 1) * basis.norms().tail(L - 1).asDiagonal() * z.rightCols(L - 1).transpose();
  return m;
}

/// Additive disturbance with an exact degree-1 PCE over one germ vector per
/// time step. Gaussian coefficient columns come from a Cholesky factor of the
/// covariance, uniform ones from the half-widths.
class DisturbanceModel {
 public:
  enum class Kind { kGaussian, kUniform };

  DisturbanceModel() = default;
  static DisturbanceModel gaussian(const Eigen::MatrixXd& covariance);
  static DisturbanceModel gaussian_diagonal(const Eigen::VectorXd& sigma);
  static DisturbanceModel uniform(const Eigen::VectorXd& half_width);

  Kind kind() const { return kind_; }
  PolyKind poly_kind() const { return kind_ == Kind::kGaussian ? PolyKind::kHermite : PolyKind::kLegendre; }
  int dim() const { return static_cast<int>(coeffs_.rows()); }
  int lw() const { return static_cast<int>(coeffs_.cols()); }

  /// dim × L_w, column 0 is zero.
  const Eigen::MatrixXd& pce_coeffs() const { return coeffs_; }
  /// Covariance of the distribution itself.
  const Eigen::MatrixXd& covariance() const { return covariance_; }
  /// Σ_j w^j w^jᵀ ⟨φ^j,φ^j⟩.
  Eigen::MatrixXd covariance_from_pce() const;

  /// The L_w - 1 basis functions of one time instance.
  std::vector<PolyFamily> block(int tag) const;

  Eigen::VectorXd sample_germ(std::mt19937_64& rng) const;
  Eigen::VectorXd realize(const Eigen::Ref<const Eigen::VectorXd>& germ) const;

  /// Least-squares germ values reproducing a realization w (degree-1 blocks).
  Eigen::VectorXd fit_germ(const Eigen::Ref<const Eigen::VectorXd>& w) const;

 private:
  Kind kind_ = Kind::kGaussian;
  Eigen::MatrixXd coeffs_;
  Eigen::MatrixXd covariance_;
};

/// x^j_{k+1} = A x^j_k + B u^j_k + w^j_k for every basis index j, with the
/// disturbance coefficients of step k placed in their own block. The basis is
/// implied by the column count of x0 and the disturbance model.
std::vector<PceVector> galerkin_propagate(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const PceVector& x0,
                                          const std::vector<PceVector>& u, const DisturbanceModel& w_model,
                                          int horizon);

/// Same recursion under the coefficient-wise feedback u^j_k = K x^j_k.
std::vector<PceVector> galerkin_propagate(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const PceVector& x0,
                                          const Eigen::MatrixXd& K, const DisturbanceModel& w_model, int horizon);

}  // namespace sdmpc
