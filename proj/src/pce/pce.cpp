#include "sdmpc/pce.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace sdmpc {

double hermite(int degree, double xi) {
  if (degree < 0) throw std::invalid_argument("hermite: negative degree");
  if (degree == 0) return 1.0;
  double h0 = 1.0, h1 = xi;
  for (int d = 1; d < degree; ++d) {
    const double h2 = xi * h1 - d * h0;
    h0 = h1;
    h1 = h2;
  }
  return h1;
}

double legendre(int degree, double xi) {
  if (degree < 0) throw std::invalid_argument("legendre: negative degree");
  if (degree == 0) return 1.0;
  double p0 = 1.0, p1 = xi;
  for (int d = 1; d < degree; ++d) {
    const double p2 = ((2 * d + 1) * xi * p1 - d * p0) / (d + 1);
    p0 = p1;
    p1 = p2;
  }
  return p1;
}

double eval_poly(const PolyFamily& f, double xi) {
  switch (f.kind) {
    case PolyKind::kConstant: return 1.0;
    case PolyKind::kHermite: return hermite(f.degree, xi);
    case PolyKind::kLegendre: return legendre(f.degree, xi);
  }
  return 0.0;
}

double poly_norm(const PolyFamily& f) {
  switch (f.kind) {
    case PolyKind::kConstant: return 1.0;
    case PolyKind::kHermite: return std::tgamma(f.degree + 1.0);
    case PolyKind::kLegendre: return 1.0 / (2.0 * f.degree + 1.0);
  }
  return 0.0;
}

PceBasis::PceBasis(std::vector<PolyFamily> functions, int lx, int lw, int horizon)
    : functions_(std::move(functions)), lx_(lx), lw_(lw), horizon_(horizon) {
  if (lx < 1 || lw < 1 || horizon < 0) throw std::invalid_argument("PceBasis: invalid block sizes");
  if (size() != lx + horizon * (lw - 1)) throw std::invalid_argument("PceBasis: L != L_x + N (L_w - 1)");
  if (functions_.front().kind != PolyKind::kConstant) throw std::invalid_argument("PceBasis: first function must be constant");
  norms_.resize(size());
  for (int j = 0; j < size(); ++j) {
    const PolyFamily& f = functions_[j];
    if (j > 0 && (f.kind == PolyKind::kConstant || f.degree < 1))
      throw std::invalid_argument("PceBasis: non-constant functions need degree >= 1");
    norms_[j] = poly_norm(f);
  }
}

bool PceBasis::has_tag(int tag) const {
  return std::any_of(functions_.begin() + 1, functions_.end(), [tag](const PolyFamily& f) { return f.time_tag == tag; });
}

PceBasis make_basis(int lx, int lw, int horizon, const std::vector<PolyFamily>& x_block,
                    const std::vector<PolyFamily>& w_template, int w_start_tag) {
  if (lx < 1 || lw < 2 || horizon < 1) throw std::invalid_argument("make_basis: need L_x >= 1, L_w >= 2, N >= 1");
  if (static_cast<int>(x_block.size()) != lx - 1) throw std::invalid_argument("make_basis: x-block size != L_x - 1");
  if (static_cast<int>(w_template.size()) != lw - 1) throw std::invalid_argument("make_basis: w-block size != L_w - 1");
  std::vector<PolyFamily> fns;
  fns.reserve(lx + horizon * (lw - 1));
  fns.push_back(PolyFamily{});
  fns.insert(fns.end(), x_block.begin(), x_block.end());
  for (int k = 0; k < horizon; ++k) {
    for (PolyFamily f : w_template) {
      f.time_tag = w_start_tag + k;
      fns.push_back(f);
    }
  }
  return PceBasis(std::move(fns), lx, lw, horizon);
}

PceBasis make_basis(int lx, int lw, int horizon, const std::vector<int>& x_tags, int w_start_tag, PolyKind kind) {
  if (lw < 2) throw std::invalid_argument("make_basis: need L_w >= 2");
  if (lx - 1 != static_cast<int>(x_tags.size()) * (lw - 1))
    throw std::invalid_argument("make_basis: L_x - 1 must equal |x_tags| (L_w - 1)");
  std::vector<PolyFamily> x_block, w_template;
  for (int tag : x_tags)
    for (int g = 0; g < lw - 1; ++g) x_block.push_back({kind, 1, tag, g});
  for (int g = 0; g < lw - 1; ++g) w_template.push_back({kind, 1, 0, g});
  return make_basis(lx, lw, horizon, x_block, w_template, w_start_tag);
}

PceBasis grow_basis_for_backup(const PceBasis& basis, int new_tag) {
  if (basis.has_tag(new_tag)) throw std::invalid_argument("grow_basis_for_backup: tag " + std::to_string(new_tag) + " already present");
  if (basis.horizon() < 1) throw std::invalid_argument("grow_basis_for_backup: empty horizon");
  std::vector<PolyFamily> fns = basis.functions();
  const int last = basis.w_block_start(basis.horizon() - 1);
  for (int j = last; j < basis.size(); ++j) {
    PolyFamily f = fns[j];
    f.time_tag = new_tag;
    fns.push_back(f);
  }
  return PceBasis(std::move(fns), basis.lx() + basis.lw() - 1, basis.lw(), basis.horizon());
}

Eigen::VectorXd eval_basis_at(const PceBasis& basis, const std::map<int, Eigen::VectorXd>& germ_values) {
  Eigen::VectorXd out(basis.size());
  for (int j = 0; j < basis.size(); ++j) {
    const PolyFamily& f = basis[j];
    if (f.kind == PolyKind::kConstant) {
      out[j] = 1.0;
      continue;
    }
    auto it = germ_values.find(f.time_tag);
    if (it == germ_values.end()) throw std::invalid_argument("eval_basis_at: missing germ for tag " + std::to_string(f.time_tag));
    if (f.germ >= it->second.size()) throw std::invalid_argument("eval_basis_at: germ vector too short for tag " + std::to_string(f.time_tag));
    out[j] = eval_poly(f, it->second[f.germ]);
  }
  return out;
}

std::vector<int> causality_zero_indices(int k, int lx, int lw, int L) {
  std::vector<int> idx;
  for (int j = std::max(0, lx + k * (lw - 1)); j < L; ++j) idx.push_back(j);
  return idx;
}

DisturbanceModel DisturbanceModel::gaussian(const Eigen::MatrixXd& covariance) {
  const Eigen::Index n = covariance.rows();
  if (n == 0 || covariance.cols() != n) throw std::invalid_argument("DisturbanceModel::gaussian: covariance must be square");
  if (!covariance.isApprox(covariance.transpose(), 1e-12)) throw std::invalid_argument("DisturbanceModel::gaussian: covariance not symmetric");
  // LDLT tolerates singular covariances; the factor L D^½ reproduces Σ.
  Eigen::LDLT<Eigen::MatrixXd> ldlt(covariance);
  if (ldlt.info() != Eigen::Success || (ldlt.vectorD().array() < -1e-12 * covariance.diagonal().cwiseAbs().maxCoeff()).any())
    throw std::invalid_argument("DisturbanceModel::gaussian: covariance not positive semidefinite");
  Eigen::MatrixXd factor = ldlt.transpositionsP().transpose() *
                           Eigen::MatrixXd(ldlt.matrixL()) *
                           ldlt.vectorD().cwiseMax(0.0).cwiseSqrt().asDiagonal();
  DisturbanceModel m;
  m.kind_ = Kind::kGaussian;
  m.coeffs_ = Eigen::MatrixXd::Zero(n, n + 1);
  m.coeffs_.rightCols(n) = factor;
  m.covariance_ = covariance;
  return m;
}

DisturbanceModel DisturbanceModel::gaussian_diagonal(const Eigen::VectorXd& sigma) {
  if ((sigma.array() < 0).any()) throw std::invalid_argument("DisturbanceModel::gaussian_diagonal: negative sigma");
  return gaussian(sigma.array().square().matrix().asDiagonal());
}

DisturbanceModel DisturbanceModel::uniform(const Eigen::VectorXd& half_width) {
  const Eigen::Index n = half_width.size();
  if (n == 0 || (half_width.array() < 0).any()) throw std::invalid_argument("DisturbanceModel::uniform: bad half-widths");
  DisturbanceModel m;
  m.kind_ = Kind::kUniform;
  m.coeffs_ = Eigen::MatrixXd::Zero(n, n + 1);
  m.coeffs_.rightCols(n) = half_width.asDiagonal();
  m.covariance_ = (half_width.array().square() / 3.0).matrix().asDiagonal();
  return m;
}

Eigen::MatrixXd DisturbanceModel::covariance_from_pce() const {
  const double norm = poly_norm({poly_kind(), 1, 0, 0});
  const auto tail = coeffs_.rightCols(lw() - 1);
  return norm * tail * tail.transpose();
}

std::vector<PolyFamily> DisturbanceModel::block(int tag) const {
  std::vector<PolyFamily> b;
  for (int g = 0; g < lw() - 1; ++g) b.push_back({poly_kind(), 1, tag, g});
  return b;
}

Eigen::VectorXd DisturbanceModel::sample_germ(std::mt19937_64& rng) const {
  Eigen::VectorXd xi(lw() - 1);
  if (kind_ == Kind::kGaussian) {
    std::normal_distribution<double> dist(0.0, 1.0);
    for (Eigen::Index i = 0; i < xi.size(); ++i) xi[i] = dist(rng);
  } else {
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (Eigen::Index i = 0; i < xi.size(); ++i) xi[i] = dist(rng);
  }
  return xi;
}

Eigen::VectorXd DisturbanceModel::realize(const Eigen::Ref<const Eigen::VectorXd>& germ) const {
  if (germ.size() != lw() - 1) throw std::invalid_argument("DisturbanceModel::realize: germ size mismatch");
  return coeffs_.rightCols(lw() - 1) * germ;
}

Eigen::VectorXd DisturbanceModel::fit_germ(const Eigen::Ref<const Eigen::VectorXd>& w) const {
  if (w.size() != dim()) throw std::invalid_argument("DisturbanceModel::fit_germ: dimension mismatch");
  return coeffs_.rightCols(lw() - 1).completeOrthogonalDecomposition().solve(w);
}

namespace {

void check_system(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const PceVector& x0, const DisturbanceModel& w,
                  int horizon) {
  const Eigen::Index n = A.rows();
  if (A.cols() != n || B.rows() != n || x0.rows() != n || w.dim() != n)
    throw std::invalid_argument("galerkin_propagate: dimension mismatch");
  if (horizon < 0) throw std::invalid_argument("galerkin_propagate: negative horizon");
  const Eigen::Index lx = x0.cols() - horizon * (w.lw() - 1);
  if (lx < 1) throw std::invalid_argument("galerkin_propagate: x0 has too few columns for the horizon");
}

// Places w_k's coefficients in the block of step k.
void add_disturbance(PceVector& x, const DisturbanceModel& w, int horizon, int k) {
  const int lw = w.lw();
  const Eigen::Index lx = x.cols() - horizon * (lw - 1);
  x.middleCols(lx + k * (lw - 1), lw - 1) += w.pce_coeffs().rightCols(lw - 1);
}

}  // namespace

std::vector<PceVector> galerkin_propagate(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const PceVector& x0,
                                          const std::vector<PceVector>& u, const DisturbanceModel& w_model,
                                          int horizon) {
  check_system(A, B, x0, w_model, horizon);
  if (static_cast<int>(u.size()) != horizon) throw std::invalid_argument("galerkin_propagate: need one input block per step");
  const Eigen::Index L = x0.cols();
  std::vector<PceVector> x{x0};
  for (int k = 0; k < horizon; ++k) {
    if (u[k].rows() != B.cols() || u[k].cols() != L) throw std::invalid_argument("galerkin_propagate: input block shape");
    PceVector next = A * x.back() + B * u[k];
    add_disturbance(next, w_model, horizon, k);
    x.push_back(std::move(next));
  }
  return x;
}

std::vector<PceVector> galerkin_propagate(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const PceVector& x0,
                                          const Eigen::MatrixXd& K, const DisturbanceModel& w_model, int horizon) {
  check_system(A, B, x0, w_model, horizon);
  if (K.rows() != B.cols() || K.cols() != A.rows()) throw std::invalid_argument("galerkin_propagate: gain shape");
  const Eigen::MatrixXd Acl = A + B * K;
  std::vector<PceVector> x{x0};
  for (int k = 0; k < horizon; ++k) {
    PceVector next = Acl * x.back();
    add_disturbance(next, w_model, horizon, k);
    x.push_back(std::move(next));
  }
  return x;
}

}  // namespace sdmpc
