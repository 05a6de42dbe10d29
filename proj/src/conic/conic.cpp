#include "sdmpc/conic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace sdmpc::conic {

using Eigen::MatrixXd;
using Eigen::VectorXd;

int ConeDims::rows() const {
  int m = nonneg;
  for (int d : soc) m += d;
  for (int p : psd) m += svec_size(p);
  return m;
}

int ConeDims::degree() const {
  int nu = nonneg + static_cast<int>(soc.size());
  for (int p : psd) nu += p;
  return nu;
}

std::string to_string(Status status) {
  switch (status) {
    case Status::kOptimal: return "optimal";
    case Status::kPrimalInfeasible: return "primal_infeasible";
    case Status::kDualInfeasible: return "dual_infeasible";
    case Status::kMaxIterations: return "max_iterations";
    case Status::kNumericalError: return "numerical_error";
  }
  return "unknown";
}

VectorXd svec(const Eigen::Ref<const MatrixXd>& m) {
  const int p = static_cast<int>(m.rows());
  VectorXd v(svec_size(p));
  constexpr double kSqrt2 = 1.41421356237309504880;
  int k = 0;
  for (int j = 0; j < p; ++j) {
    for (int i = j; i < p; ++i) v(k++) = (i == j) ? m(i, j) : kSqrt2 * m(i, j);
  }
  return v;
}

MatrixXd smat(const Eigen::Ref<const VectorXd>& v, int order) {
  MatrixXd m(order, order);
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  int k = 0;
  for (int j = 0; j < order; ++j) {
    for (int i = j; i < order; ++i) {
      const double x = (i == j) ? v(k) : kInvSqrt2 * v(k);
      m(i, j) = x;
      m(j, i) = x;
      ++k;
    }
  }
  return m;
}

void LmiBlock::add(int row, int col, int var, double coef) {
  if (row < col || row >= order_ || col < 0) throw std::invalid_argument("LmiBlock::add: need row >= col inside the block");
  if (coef != 0.0) terms_.push_back({row, col, var, coef});
}

void LmiBlock::add_constant(int row, int col, double value) {
  if (row < col || row >= order_ || col < 0) throw std::invalid_argument("LmiBlock::add_constant: need row >= col inside the block");
  constant_(row, col) += value;
}

void LmiBlock::emit(int row_offset, std::vector<Eigen::Triplet<double>>& g, VectorXd& h) const {
  const double r2 = std::sqrt(2.0);
  for (const Term& t : terms_) {
    const double scale = t.row == t.col ? 1.0 : r2;
    g.emplace_back(row_offset + svec_index(t.row, t.col, order_), t.var, -scale * t.coef);
  }
  for (int c = 0; c < order_; ++c)
    for (int r = c; r < order_; ++r) h[row_offset + svec_index(r, c, order_)] += (r == c ? 1.0 : r2) * constant_(r, c);
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct UnitTerm {
  int i;
  int j;
  double coef;
};

// One cone of the product K, with its Nesterov-Todd scaling at the current
// iterate. Vectors handed to the member functions are the block's segment.
class Cone {
 public:
  enum Kind { kNonneg, kSoc, kPsd };

  Cone(Kind kind, int offset, int dim, int order)
      : kind_(kind), offset_(offset), dim_(dim), order_(order) {}

  Kind kind() const { return kind_; }
  int offset() const { return offset_; }
  int dim() const { return dim_; }
  int degree() const { return kind_ == kNonneg ? dim_ : (kind_ == kSoc ? 1 : order_); }

  void set_structure(const SparseRowMatrix& G) {
    std::vector<int> cols;
    for (int r = offset_; r < offset_ + dim_; ++r) {
      for (SparseRowMatrix::InnerIterator it(G, r); it; ++it) cols.push_back(static_cast<int>(it.col()));
    }
    std::sort(cols.begin(), cols.end());
    cols.erase(std::unique(cols.begin(), cols.end()), cols.end());
    support_ = cols;
    if (kind_ != kPsd) return;
    constexpr double kInvSqrt2 = 0.70710678118654752440;
    terms_.assign(support_.size(), {});
    int r = offset_;
    for (int j = 0; j < order_; ++j) {
      for (int i = j; i < order_; ++i, ++r) {
        for (SparseRowMatrix::InnerIterator it(G, r); it; ++it) {
          const int k = static_cast<int>(
              std::lower_bound(support_.begin(), support_.end(), static_cast<int>(it.col())) - support_.begin());
          if (i == j) {
            terms_[k].push_back({i, i, it.value()});
          } else {
            terms_[k].push_back({i, j, kInvSqrt2 * it.value()});
            terms_[k].push_back({j, i, kInvSqrt2 * it.value()});
          }
        }
      }
    }
  }

  void set_identity_scaling() {
    switch (kind_) {
      case kNonneg:
        w_ = VectorXd::Ones(dim_);
        lambda_ = VectorXd::Ones(dim_);
        break;
      case kSoc:
        beta_ = 1.0;
        v_ = VectorXd::Zero(dim_);
        v_(0) = 1.0;
        lambda_ = VectorXd::Zero(dim_);
        lambda_(0) = 1.0;
        break;
      case kPsd:
        R_ = MatrixXd::Identity(order_, order_);
        Rinv_ = R_;
        T_ = R_;
        lambda_ = VectorXd::Ones(order_);
        break;
    }
  }

  // Computes the NT scaling point from strictly interior s and z.
  bool update_scaling(const Eigen::Ref<const VectorXd>& s, const Eigen::Ref<const VectorXd>& z) {
    switch (kind_) {
      case kNonneg: {
        if ((s.array() <= 0).any() || (z.array() <= 0).any()) return false;
        w_ = (s.array() / z.array()).sqrt();
        lambda_ = (s.array() * z.array()).sqrt();
        return true;
      }
      case kSoc: {
        const double sn = jnorm(s);
        const double zn = jnorm(z);
        if (!(sn > 0) || !(zn > 0)) return false;
        const VectorXd sb = s / sn;
        const VectorXd zb = z / zn;
        const double gamma = std::sqrt(0.5 * (1.0 + sb.dot(zb)));
        VectorXd wb = sb;
        wb(0) += zb(0);
        wb.tail(dim_ - 1) -= zb.tail(dim_ - 1);
        wb /= 2.0 * gamma;
        wb(0) += 1.0;
        v_ = wb / std::sqrt(2.0 * wb(0));
        beta_ = std::sqrt(sn / zn);
        lambda_ = apply_w(z);
        return std::isfinite(lambda_.squaredNorm());
      }
      case kPsd: {
        const MatrixXd S = smat(s, order_);
        const MatrixXd Z = smat(z, order_);
        Eigen::LLT<MatrixXd> ls(S), lz(Z);
        if (ls.info() != Eigen::Success || lz.info() != Eigen::Success) return false;
        const MatrixXd Ls = ls.matrixL();
        const MatrixXd Lz = lz.matrixL();
        Eigen::JacobiSVD<MatrixXd> svd(Lz.transpose() * Ls, Eigen::ComputeFullU | Eigen::ComputeFullV);
        const VectorXd sv = svd.singularValues();
        if (!(sv.minCoeff() > 0)) return false;
        const VectorXd isq = sv.cwiseSqrt().cwiseInverse();
        R_ = Ls * svd.matrixV() * isq.asDiagonal();
        Rinv_ = isq.asDiagonal() * svd.matrixU().transpose() * Lz.transpose();
        T_ = Rinv_.transpose() * Rinv_;
        lambda_ = sv;
        return true;
      }
    }
    return false;
  }

  // Scaled point λ in vector form.
  VectorXd lambda_vec() const {
    if (kind_ == kPsd) return svec(MatrixXd(lambda_.asDiagonal()));
    return lambda_;
  }

  VectorXd identity() const {
    switch (kind_) {
      case kNonneg: return VectorXd::Ones(dim_);
      case kSoc: {
        VectorXd e = VectorXd::Zero(dim_);
        e(0) = 1.0;
        return e;
      }
      case kPsd: return svec(MatrixXd::Identity(order_, order_));
    }
    return {};
  }

  // W x, applied to dual-type vectors.
  VectorXd apply_w(const Eigen::Ref<const VectorXd>& x) const {
    switch (kind_) {
      case kNonneg: return w_.cwiseProduct(x);
      case kSoc: return beta_ * (2.0 * v_.dot(x) * v_ - jmul(x));
      case kPsd: return svec(R_.transpose() * smat(x, order_) * R_);
    }
    return {};
  }

  // W⁻ᵀ x, applied to primal-type vectors.
  VectorXd apply_winv_t(const Eigen::Ref<const VectorXd>& x) const {
    switch (kind_) {
      case kNonneg: return x.cwiseQuotient(w_);
      case kSoc: {
        const VectorXd jv = jmul(v_);
        return (2.0 * jv.dot(x) * jv - jmul(x)) / beta_;
      }
      case kPsd: return svec(Rinv_ * smat(x, order_) * Rinv_.transpose());
    }
    return {};
  }

  // W⁻¹ x.
  VectorXd apply_winv(const Eigen::Ref<const VectorXd>& x) const {
    if (kind_ == kPsd) return svec(Rinv_.transpose() * smat(x, order_) * Rinv_);
    return apply_winv_t(x);
  }

  // Wᵀ x.
  VectorXd apply_w_t(const Eigen::Ref<const VectorXd>& x) const {
    if (kind_ == kPsd) return svec(R_ * smat(x, order_) * R_.transpose());
    return apply_w(x);
  }

  // H⁻¹ x = W⁻¹W⁻ᵀ x.
  VectorXd apply_hinv(const Eigen::Ref<const VectorXd>& x) const {
    switch (kind_) {
      case kNonneg: return x.cwiseQuotient(w_.cwiseAbs2());
      case kSoc: {
        const VectorXd jv = jmul(v_);
        VectorXd y = (2.0 * jv.dot(x) * jv - jmul(x)) / beta_;
        return (2.0 * jv.dot(y) * jv - jmul(y)) / beta_;
      }
      case kPsd: return svec(T_ * smat(x, order_) * T_);
    }
    return {};
  }

  // Jordan product u∘v.
  VectorXd circ(const Eigen::Ref<const VectorXd>& u, const Eigen::Ref<const VectorXd>& v) const {
    switch (kind_) {
      case kNonneg: return u.cwiseProduct(v);
      case kSoc: {
        VectorXd r(dim_);
        r(0) = u.dot(v);
        r.tail(dim_ - 1) = u(0) * v.tail(dim_ - 1) + v(0) * u.tail(dim_ - 1);
        return r;
      }
      case kPsd: {
        const MatrixXd U = smat(u, order_);
        const MatrixXd V = smat(v, order_);
        const MatrixXd UV = U * V;
        return svec(0.5 * (UV + UV.transpose()));
      }
    }
    return {};
  }

  // λ \ r, the inverse of x ↦ λ∘x.
  VectorXd lambda_solve(const Eigen::Ref<const VectorXd>& r) const {
    switch (kind_) {
      case kNonneg: return r.cwiseQuotient(lambda_);
      case kSoc: {
        const double l0 = lambda_(0);
        const auto l1 = lambda_.tail(dim_ - 1);
        const double det = l0 * l0 - l1.squaredNorm();
        VectorXd x(dim_);
        x(0) = (l0 * r(0) - l1.dot(r.tail(dim_ - 1))) / det;
        x.tail(dim_ - 1) = (r.tail(dim_ - 1) - x(0) * l1) / l0;
        return x;
      }
      case kPsd: {
        MatrixXd X = smat(r, order_);
        for (int j = 0; j < order_; ++j) {
          for (int i = 0; i < order_; ++i) X(i, j) *= 2.0 / (lambda_(i) + lambda_(j));
        }
        return svec(X);
      }
    }
    return {};
  }

  // Largest α with λ + α d in the cone, d given in scaled coordinates.
  double max_step_scaled(const Eigen::Ref<const VectorXd>& d) const {
    switch (kind_) {
      case kNonneg: {
        double a = kInf;
        for (int i = 0; i < dim_; ++i) {
          if (d(i) < 0) a = std::min(a, -lambda_(i) / d(i));
        }
        return a;
      }
      case kSoc: return soc_step(lambda_, d);
      case kPsd: {
        const VectorXd isq = lambda_.cwiseSqrt().cwiseInverse();
        const MatrixXd D = isq.asDiagonal() * smat(d, order_) * isq.asDiagonal();
        const double lmin = Eigen::SelfAdjointEigenSolver<MatrixXd>(D, Eigen::EigenvaluesOnly).eigenvalues()(0);
        return lmin < 0 ? -1.0 / lmin : kInf;
      }
    }
    return kInf;
  }

  // min{t : x + t e ∈ K}.
  double boundary_shift(const Eigen::Ref<const VectorXd>& x) const {
    switch (kind_) {
      case kNonneg: return -x.minCoeff();
      case kSoc: return x.tail(dim_ - 1).norm() - x(0);
      case kPsd:
        return -Eigen::SelfAdjointEigenSolver<MatrixXd>(smat(x, order_), Eigen::EigenvaluesOnly).eigenvalues()(0);
    }
    return 0.0;
  }

  // M += G_cᵀ H⁻¹ G_c.
  void add_hessian(const SparseRowMatrix& G, MatrixXd& M) const {
    switch (kind_) {
      case kNonneg: {
        for (int k = 0; k < dim_; ++k) {
          const double d = 1.0 / (w_(k) * w_(k));
          add_row_outer(G, offset_ + k, d, M);
        }
        break;
      }
      case kSoc: {
        const double ib2 = 1.0 / (beta_ * beta_);
        for (int k = 0; k < dim_; ++k) add_row_outer(G, offset_ + k, ib2, M);
        const VectorXd jv = jmul(v_);
        const int ns = static_cast<int>(support_.size());
        VectorXd p = VectorXd::Zero(ns), r = VectorXd::Zero(ns);
        for (int k = 0; k < dim_; ++k) {
          for (SparseRowMatrix::InnerIterator it(G, offset_ + k); it; ++it) {
            const int idx = local_index(static_cast<int>(it.col()));
            p(idx) += jv(k) * it.value();
            r(idx) += v_(k) * it.value();
          }
        }
        const double c = 4.0 * v_.squaredNorm() * ib2;
        for (int b = 0; b < ns; ++b) {
          const int cb = support_[b];
          for (int a = 0; a < ns; ++a) {
            M(support_[a], cb) += c * p(a) * p(b) - 2.0 * ib2 * (p(a) * r(b) + r(a) * p(b));
          }
        }
        break;
      }
      case kPsd: {
        const int ns = static_cast<int>(support_.size());
        for (int b = 0; b < ns; ++b) {
          for (int a = b; a < ns; ++a) {
            double acc = 0.0;
            for (const UnitTerm& tu : terms_[a]) {
              for (const UnitTerm& tv : terms_[b]) acc += tu.coef * tv.coef * T_(tu.j, tv.i) * T_(tv.j, tu.i);
            }
            M(support_[a], support_[b]) += acc;
            if (a != b) M(support_[b], support_[a]) += acc;
          }
        }
        break;
      }
    }
  }

 private:
  static double jnorm(const Eigen::Ref<const VectorXd>& x) {
    const double t = x.tail(x.size() - 1).norm();
    const double a = (x(0) - t) * (x(0) + t);
    return a > 0 ? std::sqrt(a) : 0.0;
  }

  VectorXd jmul(const Eigen::Ref<const VectorXd>& x) const {
    VectorXd y = -x;
    y(0) = x(0);
    return y;
  }

  static double soc_step(const VectorXd& l, const Eigen::Ref<const VectorXd>& d) {
    const int m = static_cast<int>(l.size());
    const double a = d(0) * d(0) - d.tail(m - 1).squaredNorm();
    const double b = l(0) * d(0) - l.tail(m - 1).dot(d.tail(m - 1));
    const double c = std::max(l(0) * l(0) - l.tail(m - 1).squaredNorm(), 0.0);
    double alpha = kInf;
    if (d(0) < 0) alpha = -l(0) / d(0);
    // a α² + 2 b α + c ≥ 0, smallest positive root
    const double disc = b * b - a * c;
    if (std::abs(a) < 1e-300) {
      if (b < 0) alpha = std::min(alpha, -c / (2.0 * b));
    } else if (disc >= 0) {
      const double sq = std::sqrt(disc);
      const double qq = -(b + std::copysign(sq, b));
      const double r1 = qq / a;
      const double r2 = qq != 0 ? c / qq : kInf;
      for (double r : {r1, r2}) {
        if (r > 0) alpha = std::min(alpha, r);
      }
    }
    return alpha;
  }

  int local_index(int col) const {
    return static_cast<int>(std::lower_bound(support_.begin(), support_.end(), col) - support_.begin());
  }

  static void add_row_outer(const SparseRowMatrix& G, int row, double d, MatrixXd& M) {
    for (SparseRowMatrix::InnerIterator ia(G, row); ia; ++ia) {
      const double ga = d * ia.value();
      for (SparseRowMatrix::InnerIterator ib(G, row); ib; ++ib) M(ia.col(), ib.col()) += ga * ib.value();
    }
  }

  Kind kind_;
  int offset_;
  int dim_;
  int order_;
  std::vector<int> support_;
  std::vector<std::vector<UnitTerm>> terms_;
  VectorXd w_;
  double beta_ = 1.0;
  VectorXd v_;
  MatrixXd R_, Rinv_, T_;
  VectorXd lambda_;
};

class ConeProduct {
 public:
  ConeProduct(const ConeDims& dims, const SparseRowMatrix& G) {
    int off = 0;
    if (dims.nonneg > 0) {
      cones_.emplace_back(Cone::kNonneg, off, dims.nonneg, 0);
      off += dims.nonneg;
    }
    for (int d : dims.soc) {
      if (d < 1) throw std::invalid_argument("second-order cone of dimension < 1");
      cones_.emplace_back(Cone::kSoc, off, d, 0);
      off += d;
    }
    for (int p : dims.psd) {
      if (p < 1) throw std::invalid_argument("PSD cone of order < 1");
      cones_.emplace_back(Cone::kPsd, off, svec_size(p), p);
      off += svec_size(p);
    }
    rows_ = off;
    for (Cone& c : cones_) c.set_structure(G);
  }

  int rows() const { return rows_; }
  std::vector<Cone>& cones() { return cones_; }
  const std::vector<Cone>& cones() const { return cones_; }

  template <typename F>
  VectorXd map(const VectorXd& x, F f) const {
    VectorXd y(rows_);
    for (const Cone& c : cones_) y.segment(c.offset(), c.dim()) = f(c, x.segment(c.offset(), c.dim()));
    return y;
  }

  template <typename F>
  VectorXd map2(const VectorXd& x, const VectorXd& u, F f) const {
    VectorXd y(rows_);
    for (const Cone& c : cones_) {
      y.segment(c.offset(), c.dim()) = f(c, x.segment(c.offset(), c.dim()), u.segment(c.offset(), c.dim()));
    }
    return y;
  }

  VectorXd identity() const {
    VectorXd e(rows_);
    for (const Cone& c : cones_) e.segment(c.offset(), c.dim()) = c.identity();
    return e;
  }

  VectorXd lambda() const {
    VectorXd l(rows_);
    for (const Cone& c : cones_) l.segment(c.offset(), c.dim()) = c.lambda_vec();
    return l;
  }

  double boundary_shift(const VectorXd& x) const {
    double t = -kInf;
    for (const Cone& c : cones_) t = std::max(t, c.boundary_shift(x.segment(c.offset(), c.dim())));
    return t;
  }

  double max_step_scaled(const VectorXd& d) const {
    double a = kInf;
    for (const Cone& c : cones_) a = std::min(a, c.max_step_scaled(d.segment(c.offset(), c.dim())));
    return a;
  }

 private:
  std::vector<Cone> cones_;
  int rows_ = 0;
};

// Factorization of the reduced KKT system
//   [P + GᵀH⁻¹G   Aᵀ] [dx]   [r1]
//   [A            0 ] [dy] = [r2]
// used to solve the full Newton system with third block row G dx − H dz = r3.
class ReducedKkt {
 public:
  ReducedKkt(const Problem& pr, const ConeProduct& K) : pr_(pr), K_(K) {}

  bool factor(double reg) {
    const int n = pr_.num_vars();
    M_ = pr_.P.size() ? pr_.P : MatrixXd::Zero(n, n);
    for (const Cone& c : K_.cones()) c.add_hessian(pr_.G, M_);
    const double scale = n ? M_.diagonal().cwiseAbs().maxCoeff() : 0.0;
    double delta = reg + 1e-15 * scale;
    for (int attempt = 0; attempt < 10; ++attempt) {
      MatrixXd Mr = M_;
      Mr.diagonal().array() += delta;
      llt_.compute(Mr);
      if (llt_.info() == Eigen::Success) {
        if (pr_.A.rows() > 0) {
          MinvAt_ = llt_.solve(MatrixXd(pr_.A.transpose()));
          MatrixXd S = pr_.A * MinvAt_;
          S.diagonal().array() += delta;
          schur_.compute(S);
          if (schur_.info() != Eigen::Success) {
            delta *= 100.0;
            continue;
          }
        }
        return true;
      }
      delta *= 100.0;
    }
    return false;
  }

  // Returns dx, dy, dz and the scaled dual direction W dz. Refinement runs on
  // the scaled augmented system [P Aᵀ G̃ᵀ; A 0 0; G̃ 0 −I] with G̃ = W⁻ᵀG.
  void solve(const VectorXd& r1, const VectorXd& r2, const VectorXd& r3, int refine, VectorXd& dx, VectorXd& dy,
             VectorXd& dz, VectorXd& wdz) const {
    auto winv_t = [&](const VectorXd& v) { return K_.map(v, [](const Cone& c, const auto& x) { return c.apply_winv_t(x); }); };
    auto winv = [&](const VectorXd& v) { return K_.map(v, [](const Cone& c, const auto& x) { return c.apply_winv(x); }); };
    const bool has_a = pr_.A.rows() > 0;
    const VectorXd v3 = winv_t(r3);
    solve_reduced(r1 + pr_.G.transpose() * winv(v3), r2, dx, dy);
    wdz = winv_t(pr_.G * dx) - v3;
    double prev = std::numeric_limits<double>::infinity();
    const double scale = 1.0 + std::max({inf_norm(r1), inf_norm(r2), inf_norm(v3)});
    for (int it = 0; it < refine; ++it) {
      dz = winv(wdz);
      const VectorXd gdx = winv_t(pr_.G * dx);
      VectorXd e1 = r1 - pr_.G.transpose() * dz;
      if (pr_.P.size()) e1 -= pr_.P * dx;
      if (has_a) e1 -= pr_.A.transpose() * dy;
      const VectorXd e2 = has_a ? VectorXd(r2 - pr_.A * dx) : VectorXd();
      const VectorXd e3 = v3 - gdx + wdz;
      const double err = std::max({inf_norm(e1), inf_norm(e2), inf_norm(e3)});
      if (!(err < 0.5 * prev) || err <= 1e-15 * scale) break;
      prev = err;
      VectorXd cx, cy;
      solve_reduced(e1 + pr_.G.transpose() * winv(e3), e2, cx, cy);
      dx += cx;
      if (has_a) dy += cy;
      wdz += winv_t(pr_.G * cx) - e3;
    }
    dz = winv(wdz);
  }

 private:
  static double inf_norm(const VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

  void solve_reduced(const VectorXd& rhs, const VectorXd& r2, VectorXd& dx, VectorXd& dy) const {
    VectorXd t = llt_.solve(rhs);
    if (pr_.A.rows() > 0) {
      dy = schur_.solve(pr_.A * t - r2);
      dx = t - MinvAt_ * dy;
    } else {
      dy.resize(0);
      dx = t;
    }
  }

  const Problem& pr_;
  const ConeProduct& K_;
  MatrixXd M_;
  Eigen::LLT<MatrixXd> llt_;
  MatrixXd MinvAt_;
  Eigen::LLT<MatrixXd> schur_;
};

double inf_norm(const VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

void validate(const Problem& pr) {
  const int n = pr.num_vars();
  if (pr.P.size() && (pr.P.rows() != n || pr.P.cols() != n)) throw std::invalid_argument("P has wrong shape");
  if (pr.A.cols() != n && pr.A.rows() > 0) throw std::invalid_argument("A has wrong column count");
  if (pr.A.rows() != pr.b.size()) throw std::invalid_argument("A and b disagree");
  if (pr.G.rows() != pr.h.size()) throw std::invalid_argument("G and h disagree");
  if (pr.G.rows() > 0 && pr.G.cols() != n) throw std::invalid_argument("G has wrong column count");
  if (pr.cones.rows() != pr.h.size()) throw std::invalid_argument("cone dimensions do not match h");
}

}  // namespace

Result solve(const Problem& input, const Settings& st) {
  validate(input);
  Problem pr = input;
  const int n = pr.num_vars();
  const int p = static_cast<int>(pr.b.size());
  if (pr.A.rows() == 0) pr.A.resize(0, n);
  if (pr.G.rows() == 0) pr.G.resize(0, n);
  pr.A.makeCompressed();
  pr.G.makeCompressed();

  ConeProduct K(pr.cones, pr.G);
  const int m = K.rows();
  const double nu = pr.cones.degree();
  const bool has_p = pr.P.size() > 0;
  auto Pmul = [&](const VectorXd& x) -> VectorXd { return has_p ? VectorXd(pr.P * x) : VectorXd::Zero(n); };

  Result res;
  ReducedKkt kkt(pr, K);

  // Initial point: solve the KKT system with identity scaling, then push s and z inside the cone.
  for (Cone& c : K.cones()) c.set_identity_scaling();
  if (!kkt.factor(st.static_reg)) {
    res.status = Status::kNumericalError;
    return res;
  }
  VectorXd x, y, z, wz;
  kkt.solve(-pr.q, pr.b, pr.h, st.refine_steps, x, y, z, wz);
  VectorXd s = -z;
  const VectorXd e = K.identity();
  if (m > 0) {
    const double ts = K.boundary_shift(s);
    if (ts >= -1e-8 * std::max(1.0, s.norm())) s += (1.0 + ts) * e;
    const double tz = K.boundary_shift(z);
    if (tz >= -1e-8 * std::max(1.0, z.norm())) z += (1.0 + tz) * e;
  }
  if (p == 0) y.resize(0);
  double tau = 1.0, kappa = 1.0;

  const double norm_q = inf_norm(pr.q), norm_b = inf_norm(pr.b), norm_h = inf_norm(pr.h);

  for (int iter = 0; iter <= st.max_iter; ++iter) {
    res.iterations = iter;
    const VectorXd Px = Pmul(x);
    const double xPx = x.dot(Px);
    VectorXd Aty = p ? VectorXd(pr.A.transpose() * y) : VectorXd::Zero(n);
    const VectorXd Gtz = pr.G.transpose() * z;
    const VectorXd Ax = p ? VectorXd(pr.A * x) : VectorXd();
    const VectorXd Gx = pr.G * x;

    const VectorXd rx = Px + Aty + Gtz + pr.q * tau;
    const VectorXd ry = p ? VectorXd(Ax - pr.b * tau) : VectorXd();
    const VectorXd rz = Gx + s - pr.h * tau;
    const double bty = p ? pr.b.dot(y) : 0.0;
    const double htz = pr.h.dot(z);
    const double qtx = pr.q.dot(x);
    const double rtau = kappa + qtx + bty + htz + xPx / tau;

    // Convergence tests on the normalized iterate.
    const double pobj = (0.5 * xPx / tau + qtx) / tau;
    const double dobj = (-0.5 * xPx / tau - bty - htz) / tau;
    const double pres_eq = p ? inf_norm(ry) / tau / (1.0 + std::max(norm_b, inf_norm(Ax) / tau)) : 0.0;
    const double pres_cone =
        m ? inf_norm(rz) / tau / (1.0 + std::max({norm_h, inf_norm(Gx) / tau, inf_norm(s) / tau})) : 0.0;
    const double pres = std::max(pres_eq, pres_cone);
    const double dres = inf_norm(rx) / tau /
                        (1.0 + std::max({norm_q, inf_norm(Px) / tau, inf_norm(Aty) / tau, inf_norm(Gtz) / tau}));
    const double gap_abs = std::abs(pobj - dobj);
    const double gap_rel = gap_abs / std::max(1.0, std::min(std::abs(pobj), std::abs(dobj)));

    res.primal_residual = pres;
    res.dual_residual = dres;
    res.gap = gap_abs;
    res.primal_objective = pobj;
    res.dual_objective = dobj;

    if (st.verbose) {
      std::fprintf(stderr, "%3d pobj % .9e dobj % .9e pres %.2e dres %.2e gap %.2e tau %.2e kappa %.2e\n", iter, pobj,
                   dobj, pres, dres, gap_abs, tau, kappa);
    }

    if (pres <= st.tol_feas && dres <= st.tol_feas && (gap_abs <= st.tol_gap_abs || gap_rel <= st.tol_gap_rel)) {
      res.status = Status::kOptimal;
      res.x = x / tau;
      res.y = y / tau;
      res.z = z / tau;
      res.s = s / tau;
      return res;
    }

    // Infeasibility certificates, tested on the direction normalized to unit size.
    const double yz_norm = std::max(inf_norm(y), inf_norm(z));
    if (yz_norm > 0 && bty + htz < 0) {
      const double t = -(bty + htz) / yz_norm;
      if (t > st.tol_infeas && inf_norm(Aty + Gtz) / yz_norm <= st.tol_infeas * t) {
        res.status = Status::kPrimalInfeasible;
        res.y = y / (-(bty + htz));
        res.z = z / (-(bty + htz));
        return res;
      }
    }
    const double x_norm = inf_norm(x);
    if (x_norm > 0 && qtx < 0) {
      const double t = -qtx / x_norm;
      const double r = std::max({inf_norm(Px), p ? inf_norm(Ax) : 0.0, m ? inf_norm(Gx + s) : 0.0}) / x_norm;
      if (t > st.tol_infeas && r <= st.tol_infeas * t) {
        res.status = Status::kDualInfeasible;
        res.x = x / (-qtx);
        return res;
      }
    }
    if (iter == st.max_iter) break;

    // Scaling and factorization at the current iterate.
    bool ok = true;
    for (Cone& c : K.cones()) {
      ok = ok && c.update_scaling(s.segment(c.offset(), c.dim()), z.segment(c.offset(), c.dim()));
    }
    if (!ok || !kkt.factor(st.static_reg)) {
      res.status = Status::kNumericalError;
      break;
    }
    const VectorXd lam = K.lambda();
    const double mu = (s.dot(z) + tau * kappa) / (nu + 1.0);

    VectorXd x1, y1, z1, wz1;
    kkt.solve(-pr.q, pr.b, pr.h, st.refine_steps, x1, y1, z1, wz1);
    const VectorXd c1 = pr.q + 2.0 * Px / tau;
    const double den = -kappa / tau + c1.dot(x1) + (p ? pr.b.dot(y1) : 0.0) + pr.h.dot(z1) - xPx / (tau * tau);

    // Solves the Newton system for a given complementarity target.
    auto direction = [&](double eta, const VectorXd& rc, double rkappa, VectorXd& dx, VectorXd& dy, VectorXd& dz,
                         VectorXd& ds, double& dtau, double& dkappa) {
      const VectorXd ls = K.map(rc, [](const Cone& c, const auto& v) { return c.lambda_solve(v); });
      const VectorXd wl = K.map(ls, [](const Cone& c, const auto& v) { return c.apply_w_t(v); });
      VectorXd x2, y2, z2, wz2;
      kkt.solve(-eta * rx, p ? VectorXd(-eta * ry) : VectorXd(), -eta * rz - wl, st.refine_steps, x2, y2, z2, wz2);
      const double num = -eta * rtau - rkappa / tau - c1.dot(x2) - (p ? pr.b.dot(y2) : 0.0) - pr.h.dot(z2);
      dtau = num / den;
      dx = x2 + dtau * x1;
      dy = p ? VectorXd(y2 + dtau * y1) : VectorXd();
      dz = z2 + dtau * z1;
      ds = -eta * rz - pr.G * dx + pr.h * dtau;
      dkappa = (rkappa - kappa * dtau) / tau;
    };

    auto step_length = [&](const VectorXd& ds, const VectorXd& dz, double dtau, double dkappa) {
      double a = kInf;
      if (m) {
        const VectorXd dss = K.map(ds, [](const Cone& c, const auto& v) { return c.apply_winv_t(v); });
        const VectorXd dzs = K.map(dz, [](const Cone& c, const auto& v) { return c.apply_w(v); });
        a = std::min(K.max_step_scaled(dss), K.max_step_scaled(dzs));
      }
      if (dtau < 0) a = std::min(a, -tau / dtau);
      if (dkappa < 0) a = std::min(a, -kappa / dkappa);
      return a;
    };

    // Predictor.
    VectorXd dxa, dya, dza, dsa;
    double dtaua, dkappaa;
    const VectorXd rc_aff = -K.map2(lam, lam, [](const Cone& c, const auto& a, const auto& b) { return c.circ(a, b); });
    direction(1.0, rc_aff, -tau * kappa, dxa, dya, dza, dsa, dtaua, dkappaa);
    const double alpha_aff = std::min(1.0, step_length(dsa, dza, dtaua, dkappaa));
    const double sigma = std::pow(1.0 - alpha_aff, 3);

    // Corrector.
    VectorXd rc = rc_aff + sigma * mu * e;
    if (m) {
      const VectorXd dss = K.map(dsa, [](const Cone& c, const auto& v) { return c.apply_winv_t(v); });
      const VectorXd dzs = K.map(dza, [](const Cone& c, const auto& v) { return c.apply_w(v); });
      rc -= K.map2(dss, dzs, [](const Cone& c, const auto& a, const auto& b) { return c.circ(a, b); });
    }
    const double rkappa = -tau * kappa - dtaua * dkappaa + sigma * mu;
    VectorXd dx, dy, dz, ds;
    double dtau, dkappa;
    direction(1.0 - sigma, rc, rkappa, dx, dy, dz, ds, dtau, dkappa);
    const double alpha = std::min(1.0, st.step_fraction * step_length(ds, dz, dtau, dkappa));
    if (!(alpha > 0) || !std::isfinite(alpha) || !dx.allFinite()) {
      res.status = Status::kNumericalError;
      break;
    }

    x += alpha * dx;
    if (p) y += alpha * dy;
    z += alpha * dz;
    s += alpha * ds;
    tau += alpha * dtau;
    kappa += alpha * dkappa;
    res.status = Status::kMaxIterations;
  }

  if (res.status != Status::kNumericalError) res.status = Status::kMaxIterations;
  res.x = x / tau;
  res.y = y / tau;
  res.z = z / tau;
  res.s = s / tau;
  return res;
}

}  // namespace sdmpc::conic
