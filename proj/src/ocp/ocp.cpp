#include "sdmpc/ocp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace sdmpc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

// Coefficient j over the horizon as affine functions of its decision block
// z = [c̃⁺; c̃⁻; free v]: stacked states x_0..x_N = a + T z and stacked inputs
// u_0..u_{N-1} = b + M z. The slack enters as c = c_max (c̃⁺ - c̃⁻) with
// c̃± ∈ [0, 1], which keeps β out of the solver's residual scaling.
struct BlockMap {
  VectorXd a, b;
  MatrixXd T, M;
  int num_slack = 0;  ///< n_x on x-block columns, else 0
  int first_free = 0;
  int num_free = 0;

  int size() const { return static_cast<int>(T.cols()); }
};

VectorXd stacked_w(const OcpProblem& pb, int j) {
  const int nx = pb.nx(), N = pb.horizon();
  VectorXd w(N * nx);
  for (int i = 0; i < N; ++i) w.segment(i * nx, nx) = pb.w[i].col(j);
  return w;
}

BlockMap block_map(const OcpProblem& pb, int j) {
  const Predictor& p = pb.predictor;
  const int nx = p.nx, nu = p.nu, N = p.horizon;
  BlockMap m;
  m.num_slack = j < pb.basis.lx() && pb.slack_max > 0 ? nx : 0;
  m.first_free = first_free_step(pb.basis, j);
  m.num_free = (N - m.first_free) * nu;
  const int ns = m.num_slack, nz = 2 * ns + m.num_free;
  const VectorXd xbar = pb.init.col(j);

  m.a.resize((N + 1) * nx);
  m.a << xbar, p.psi_x0 * xbar + p.psi_w * stacked_w(pb, j);
  m.T = MatrixXd::Zero((N + 1) * nx, nz);
  if (ns > 0) {
    const double c = pb.slack_max;
    m.T.topLeftCorner(nx, nx) = c * MatrixXd::Identity(nx, nx);
    m.T.block(0, nx, nx, nx) = -c * MatrixXd::Identity(nx, nx);
    m.T.block(nx, 0, N * nx, nx) = c * p.psi_x0;
    m.T.block(nx, nx, N * nx, nx) = -c * p.psi_x0;
  }
  m.T.bottomRightCorner(N * nx, m.num_free) = p.psi_v.rightCols(m.num_free);

  // u_i = K x_i + v_i
  m.b.resize(N * nu);
  m.M = MatrixXd::Zero(N * nu, nz);
  for (int i = 0; i < N; ++i) {
    m.b.segment(i * nu, nu) = p.K * m.a.segment(i * nx, nx);
    m.M.middleRows(i * nu, nu) = p.K * m.T.middleRows(i * nx, nx);
  }
  m.M.bottomRightCorner(m.num_free, m.num_free).diagonal().array() += 1.0;
  return m;
}

// Q̃ = blkdiag(Q, ..., Q, P) applied to stacked states x_0..x_N.
MatrixXd weight_states(const OcpProblem& pb, const MatrixXd& X) {
  const int nx = pb.nx(), N = pb.horizon();
  MatrixXd out(X.rows(), X.cols());
  for (int i = 0; i < N; ++i) out.middleRows(i * nx, nx) = pb.Q * X.middleRows(i * nx, nx);
  out.bottomRows(nx) = pb.P * X.bottomRows(nx);
  return out;
}

MatrixXd weight_inputs(const OcpProblem& pb, const MatrixXd& U) {
  const int nu = pb.nu();
  MatrixXd out(U.rows(), U.cols());
  for (int i = 0; i < pb.horizon(); ++i) out.middleRows(i * nu, nu) = pb.R * U.middleRows(i * nu, nu);
  return out;
}

// Writes coefficient j of a block solution; pinned inputs stay exactly zero.
void unpack(const OcpProblem& pb, int j, const BlockMap& m, const VectorXd& z, std::vector<PceVector>& x,
            std::vector<PceVector>& u, PceVector& slack) {
  const int nx = pb.nx(), nu = pb.nu(), N = pb.horizon();
  const VectorXd xs = m.a + m.T * z, us = m.b + m.M * z;
  for (int i = 0; i <= N; ++i) x[i].col(j) = xs.segment(i * nx, nx);
  for (int i = m.first_free; i < N; ++i) u[i].col(j) = us.segment(i * nu, nu);
  if (m.num_slack > 0) slack.col(j) = pb.slack_max * (z.head(nx) - z.segment(nx, nx));
}

MatrixXd recover_g(const OcpProblem& pb, const std::vector<PceVector>& x, const std::vector<PceVector>& u) {
  const Predictor& p = pb.predictor;
  if (!p.has_stack()) return {};
  const int nx = p.nx, nu = p.nu, N = p.horizon, L = pb.size();
  MatrixXd z((N + 1) * nx + N * nu + N * nx, L);
  for (int j = 0; j < L; ++j) {
    for (int i = 0; i <= N; ++i) z.col(j).segment(i * nx, nx) = x[i].col(j);
    for (int i = 0; i < N; ++i) z.col(j).segment((N + 1) * nx + i * nu, nu) = u[i].col(j);
    z.col(j).tail(N * nx) = stacked_w(pb, j);
  }
  return p.stack_pinv * z;
}

struct Rows {
  std::vector<Eigen::Triplet<double>> g;
  std::vector<double> h;

  // Appends the cone entry s = alpha + coefᵀ z[offset : offset + coef.size()].
  template <typename Derived>
  void add(double alpha, int offset, const Eigen::MatrixBase<Derived>& coef) {
    const int row = static_cast<int>(h.size());
    for (Eigen::Index k = 0; k < coef.size(); ++k)
      if (coef(k) != 0.0) g.emplace_back(row, offset + static_cast<int>(k), -coef(k));
    h.push_back(alpha);
  }
  void add_constant(double alpha) { h.push_back(alpha); }
};

OcpSolution make_empty_solution(const OcpProblem& pb) {
  OcpSolution s;
  const int L = pb.size();
  s.x.assign(pb.horizon() + 1, PceVector::Zero(pb.nx(), L));
  s.u.assign(pb.horizon(), PceVector::Zero(pb.nu(), L));
  s.slack = PceVector::Zero(pb.nx(), L);
  return s;
}

// Minimizer with c = 0 and no inequality constraints; exact when it satisfies
// the cones and the slack subgradient condition |∂V/∂c| <= β. For n_x = 1 a
// violated terminal variance bound Σ_{j>=1} nʲ (xʲ_N)² <= Γ is made active
// with its multiplier λ: per block the terminal value is eʲ(λ) = eʲ(0) / (1 + 2λsʲ)
// with sʲ = tʲᵀ Hʲ⁻¹ tʲ, and λ solves the scalar equation by Newton's method.
bool try_fast_path(const OcpProblem& pb, OcpSolution& sol) {
  const int L = pb.size(), N = pb.horizon(), nx = pb.nx();
  const VectorXd& norms = pb.basis.norms();
  std::vector<BlockMap> maps;
  std::vector<VectorXd> z(L), h(L);
  VectorXd e0 = VectorXd::Zero(L), s = VectorXd::Zero(L);
  for (int j = 0; j < L; ++j) {
    maps.push_back(block_map(pb, j));
    const BlockMap& m = maps.back();
    z[j] = VectorXd::Zero(m.size());
    h[j] = VectorXd::Zero(m.size());
    if (m.num_free > 0) {
      const auto Tv = m.T.rightCols(m.num_free);
      const auto Mv = m.M.rightCols(m.num_free);
      const MatrixXd H = Tv.transpose() * weight_states(pb, Tv) + Mv.transpose() * weight_inputs(pb, Mv);
      const VectorXd q = Tv.transpose() * weight_states(pb, m.a) + Mv.transpose() * weight_inputs(pb, m.b);
      const Eigen::LDLT<MatrixXd> ldlt(H);
      z[j].tail(m.num_free) = -ldlt.solve(q);
      if (nx == 1) {
        h[j].tail(m.num_free) = ldlt.solve(Tv.row(N).transpose());
        s[j] = Tv.row(N).dot(h[j].tail(m.num_free));
      }
    }
    e0[j] = m.a[N * nx] + m.T.row(N * nx).dot(z[j]);
  }

  double lambda = 0.0;
  VectorXd e = e0;
  if (pb.terminal_constraints && nx == 1 && L > 1) {
    const double Gamma = pb.Gamma(0, 0);
    const auto phi = [&](double l, double* dphi) {
      double f = 0.0, df = 0.0;
      for (int j = 1; j < L; ++j) {
        const double d = 1.0 + 2.0 * l * s[j];
        f += norms[j] * e0[j] * e0[j] / (d * d);
        df -= 4.0 * s[j] * norms[j] * e0[j] * e0[j] / (d * d * d);
      }
      if (dphi) *dphi = df;
      return f;
    };
    if (phi(0.0, nullptr) > Gamma) {
      for (int it = 0; it < 100; ++it) {
        double df = 0.0;
        const double f = phi(lambda, &df) - Gamma;
        if (f <= 0.0 || df >= 0.0) break;
        const double next = lambda - f / df;
        if (next <= lambda * (1.0 + 1e-15)) break;
        lambda = next;
      }
      for (int j = 1; j < L; ++j) {
        e[j] = e0[j] / (1.0 + 2.0 * lambda * s[j]);
        z[j] -= 2.0 * lambda * e[j] * h[j];
      }
    }
  }

  for (int j = 0; j < L; ++j) {
    const BlockMap& m = maps[j];
    if (m.num_slack > 0) {
      const VectorXd xs = m.a + m.T * z[j], us = m.b + m.M * z[j];
      VectorXd grad = norms[j] * (m.T.leftCols(m.num_slack).transpose() * weight_states(pb, xs) +
                                  m.M.leftCols(m.num_slack).transpose() * weight_inputs(pb, us));
      if (j > 0 && lambda > 0.0) grad += 2.0 * lambda * norms[j] * e[j] * m.T.row(N * nx).head(m.num_slack).transpose();
      if (grad.cwiseAbs().maxCoeff() > pb.beta * pb.slack_max) return false;
    }
    unpack(pb, j, m, z[j], sol.x, sol.u, sol.slack);
  }
  const OcpResidual r = constraint_violation(pb, sol.x, sol.u);
  // Same feasibility tolerance as the interior-point solver; the terminal
  // covariance bound is active up to rounding under the unconstrained policy.
  const double tol = pb.solver.tol_feas;
  if (r.chance > tol || r.terminal_mean > tol * (1.0 + pb.gamma_level) ||
      r.terminal_covariance > tol * (1.0 + pb.Gamma.norm()))
    return false;
  sol.cost = sol.value = evaluate_cost(sol.x, sol.u, pb.basis, pb.Q, pb.R, pb.P);
  sol.status = OcpStatus::kOptimal;
  sol.fast_path = true;
  return true;
}

}  // namespace

std::vector<PceVector> place_disturbance(const PceBasis& basis, const DisturbanceModel& w_model) {
  require(basis.lw() == w_model.lw(), "place_disturbance: L_w of basis and disturbance model differ");
  const int lw = w_model.lw();
  std::vector<PceVector> w(basis.horizon(), PceVector::Zero(w_model.dim(), basis.size()));
  for (int i = 0; i < basis.horizon(); ++i)
    w[i].middleCols(basis.w_block_start(i), lw - 1) = w_model.pce_coeffs().rightCols(lw - 1);
  return w;
}

int first_free_step(const PceBasis& basis, int j) {
  if (j < basis.lx()) return 0;
  const int per_step = basis.lw() - 1;
  if (per_step <= 0) return basis.horizon();
  return std::min(basis.horizon(), (j - basis.lx()) / per_step + 1);
}

void OcpProblem::validate() const {
  const int n = nx(), m = nu(), N = horizon(), L = size();
  require(n > 0 && m > 0 && N > 0, "OcpProblem: empty predictor");
  require(predictor.psi_x0.rows() == N * n && predictor.psi_x0.cols() == n && predictor.psi_v.cols() == N * m &&
              predictor.psi_w.cols() == N * n && predictor.K.rows() == m && predictor.K.cols() == n,
          "OcpProblem: predictor shapes");
  require(basis.horizon() == N, "OcpProblem: basis horizon differs from predictor horizon");
  require(init.rows() == n && init.cols() == L, "OcpProblem: init must be n_x x L");
  require(init.rightCols(L - basis.lx()).isZero(0.0), "OcpProblem: init must vanish beyond the x-block");
  require(static_cast<int>(w.size()) == N, "OcpProblem: one disturbance block per step");
  for (const PceVector& wi : w) require(wi.rows() == n && wi.cols() == L, "OcpProblem: disturbance block shape");
  require(Q.rows() == n && Q.cols() == n && P.rows() == n && P.cols() == n, "OcpProblem: Q and P must be n_x x n_x");
  require(R.rows() == m && R.cols() == m, "OcpProblem: R must be n_u x n_u");
  require(sigma_x > 0 && sigma_u > 0, "OcpProblem: chance scalings must be positive");
  require(beta > 0 && slack_max >= 0, "OcpProblem: beta must be positive");
  x_box.validate(n);
  u_box.validate(m);
  if (terminal_constraints)
    require(Gamma.rows() == n && Gamma.cols() == n && gamma_level > 0, "OcpProblem: terminal Gamma and level");
}

AssembledOcp assemble(const OcpProblem& pb) {
  pb.validate();
  const int nx = pb.nx(), nu = pb.nu(), N = pb.horizon(), L = pb.size();
  const VectorXd& norms = pb.basis.norms();

  AssembledOcp out;
  std::vector<BlockMap> maps;
  out.layout.offset.push_back(0);
  for (int j = 0; j < L; ++j) {
    maps.push_back(block_map(pb, j));
    out.layout.first_free.push_back(maps.back().first_free);
    out.layout.offset.push_back(out.layout.offset.back() + maps.back().size());
  }
  const int n = out.layout.num_vars();
  const auto& off = out.layout.offset;

  conic::Problem& prog = out.program;
  prog.P = MatrixXd::Zero(n, n);
  prog.q = VectorXd::Zero(n);
  for (int j = 0; j < L; ++j) {
    const BlockMap& m = maps[j];
    prog.P.block(off[j], off[j], m.size(), m.size()) =
        norms[j] * (m.T.transpose() * weight_states(pb, m.T) + m.M.transpose() * weight_inputs(pb, m.M));
    prog.q.segment(off[j], m.size()) =
        norms[j] * (m.T.transpose() * weight_states(pb, m.a) + m.M.transpose() * weight_inputs(pb, m.b));
    prog.q.segment(off[j], 2 * m.num_slack).array() += pb.beta * pb.slack_max;
    out.constant += 0.5 * norms[j] *
                    (m.a.dot(weight_states(pb, m.a).col(0)) + m.b.dot(weight_inputs(pb, m.b).col(0)));
  }
  prog.A.resize(0, n);
  prog.b.resize(0);

  Rows rows;
  // 0 <= c̃± <= 1
  for (int j = 0; j < L; ++j)
    for (int k = 0; k < 2 * maps[j].num_slack; ++k) {
      rows.add(0.0, off[j] + k, VectorXd::Ones(1));
      rows.add(1.0, off[j] + k, -VectorXd::Ones(1));
    }
  prog.cones.nonneg = static_cast<int>(rows.h.size());

  const double inf = std::numeric_limits<double>::infinity();
  // (hi - mean)/σ >= ‖(√nʲ zʲ)_{j>=1}‖ and the mirror image, where the
  // coefficient zʲ is row `row` of a + T or b + M.
  const auto add_chance = [&](bool state, int row, double lo, double hi, double sigma, int step) {
    for (int side : {1, -1}) {
      const double bound = side > 0 ? hi : lo;
      if (std::abs(bound) == inf) continue;
      const BlockMap& m0 = maps[0];
      const double mean = state ? m0.a[row] : m0.b[row];
      const auto coef0 = state ? m0.T.row(row) : m0.M.row(row);
      rows.add(side * (bound - mean) / sigma, off[0], (-side / sigma) * coef0.transpose());
      int dim = 1;
      for (int j = 1; j < L; ++j) {
        const BlockMap& m = maps[j];
        if (!state && m.first_free > step) continue;
        const double s = std::sqrt(norms[j]);
        rows.add(s * (state ? m.a[row] : m.b[row]), off[j], s * (state ? m.T.row(row) : m.M.row(row)).transpose());
        ++dim;
      }
      prog.cones.soc.push_back(dim);
    }
  };
  for (int i = 0; i < N; ++i) {
    for (int r = 0; r < nx; ++r)
      if (pb.x_box.enabled[r]) add_chance(true, i * nx + r, pb.x_box.lower[r], pb.x_box.upper[r], pb.sigma_x, i);
    for (int r = 0; r < nu; ++r)
      if (pb.u_box.enabled[r]) add_chance(false, i * nu + r, pb.u_box.lower[r], pb.u_box.upper[r], pb.sigma_u, i);
  }

  if (pb.terminal_constraints) {
    // ½ x⁰ᵀ P x⁰ <= γ  ⇔  ‖Lᵀ x⁰‖ <= √(2γ), P = L Lᵀ.
    const MatrixXd Lt = pb.P.llt().matrixU();
    const BlockMap& m0 = maps[0];
    rows.add_constant(std::sqrt(2.0 * pb.gamma_level));
    for (int r = 0; r < nx; ++r)
      rows.add(Lt.row(r).dot(m0.a.tail(nx)), off[0], (Lt.row(r) * m0.T.bottomRows(nx)).transpose());
    prog.cones.soc.push_back(1 + nx);

    if (L == 1) {
      // deterministic: no covariance
    } else if (pb.covariance_mode == CovarianceMode::kDiagonal || nx == 1) {
      for (int r = 0; r < nx; ++r) {
        rows.add_constant(std::sqrt(std::max(pb.Gamma(r, r), 0.0)));
        for (int j = 1; j < L; ++j) {
          const double s = std::sqrt(norms[j]);
          const int row = N * nx + r;
          rows.add(s * maps[j].a[row], off[j], s * maps[j].T.row(row).transpose());
        }
        prog.cones.soc.push_back(L);
      }
    } else {
      // [[Γ, C], [Cᵀ, I]] ⪰ 0 with C = [√nʲ xʲ_N]_{j>=1}.
      conic::LmiBlock lmi(nx + L - 1);
      for (int c = 0; c < nx; ++c)
        for (int r = c; r < nx; ++r) lmi.add_constant(r, c, pb.Gamma(r, c));
      for (int j = 1; j < L; ++j) {
        const double s = std::sqrt(norms[j]);
        lmi.add_constant(nx + j - 1, nx + j - 1, 1.0);
        for (int r = 0; r < nx; ++r) {
          const int row = N * nx + r;
          lmi.add_constant(nx + j - 1, r, s * maps[j].a[row]);
          for (int k = 0; k < maps[j].size(); ++k)
            if (maps[j].T(row, k) != 0.0) lmi.add(nx + j - 1, r, off[j] + k, s * maps[j].T(row, k));
        }
      }
      VectorXd h = VectorXd::Zero(conic::svec_size(lmi.order()));
      const int base = static_cast<int>(rows.h.size());
      std::vector<Eigen::Triplet<double>> g;
      lmi.emit(0, g, h);
      for (const auto& t : g) rows.g.emplace_back(base + t.row(), t.col(), t.value());
      rows.h.insert(rows.h.end(), h.data(), h.data() + h.size());
      prog.cones.psd.push_back(lmi.order());
    }
  }

  prog.h = Eigen::Map<const VectorXd>(rows.h.data(), static_cast<Eigen::Index>(rows.h.size()));
  prog.G.resize(static_cast<Eigen::Index>(rows.h.size()), n);
  prog.G.setFromTriplets(rows.g.begin(), rows.g.end());
  return out;
}

nlohmann::json to_json(const AssembledOcp& ocp) {
  const conic::Problem& p = ocp.program;
  nlohmann::json j;
  j["n"] = p.num_vars();
  j["constant"] = ocp.constant;
  nlohmann::json P = nlohmann::json::array();
  for (int c = 0; c < p.P.cols(); ++c)
    for (int r = 0; r <= c; ++r)
      if (p.P(r, c) != 0.0) P.push_back({r, c, p.P(r, c)});
  j["P"] = P;
  j["q"] = std::vector<double>(p.q.data(), p.q.data() + p.q.size());
  nlohmann::json G = nlohmann::json::array();
  for (int r = 0; r < p.G.outerSize(); ++r)
    for (conic::SparseRowMatrix::InnerIterator it(p.G, r); it; ++it) G.push_back({r, it.col(), it.value()});
  j["G"] = G;
  j["h"] = std::vector<double>(p.h.data(), p.h.data() + p.h.size());
  j["cones"] = {{"nonneg", p.cones.nonneg}, {"soc", p.cones.soc}, {"psd", p.cones.psd}};
  return j;
}

const char* to_string(OcpStatus status) {
  switch (status) {
    case OcpStatus::kOptimal: return "optimal";
    case OcpStatus::kInfeasible: return "infeasible";
    case OcpStatus::kNumericalFailure: return "numerical_failure";
  }
  return "unknown";
}

OcpSolution solve(const OcpProblem& pb) {
  pb.validate();
  OcpSolution sol = make_empty_solution(pb);
  if (pb.fast_path && try_fast_path(pb, sol)) {
    sol.g = recover_g(pb, sol.x, sol.u);
    return sol;
  }
  sol = make_empty_solution(pb);

  const AssembledOcp ocp = assemble(pb);
  const conic::Result res = conic::solve(ocp.program, pb.solver);
  sol.iterations = res.iterations;
  if (res.status == conic::Status::kPrimalInfeasible) {
    sol.status = OcpStatus::kInfeasible;
    return sol;
  }
  if (res.status != conic::Status::kOptimal) {
    sol.status = OcpStatus::kNumericalFailure;
    return sol;
  }

  for (int j = 0; j < pb.size(); ++j) {
    const BlockMap m = block_map(pb, j);
    unpack(pb, j, m, res.x.segment(ocp.layout.offset[j], m.size()), sol.x, sol.u, sol.slack);
  }
  sol.status = OcpStatus::kOptimal;
  sol.cost = evaluate_cost(sol.x, sol.u, pb.basis, pb.Q, pb.R, pb.P);
  sol.value = sol.cost + pb.beta * sol.slack.cwiseAbs().sum();
  sol.g = recover_g(pb, sol.x, sol.u);
  return sol;
}

double evaluate_cost(const std::vector<PceVector>& x, const std::vector<PceVector>& u, const PceBasis& basis,
                     const MatrixXd& Q, const MatrixXd& R, const MatrixXd& P) {
  require(!x.empty() && x.size() == u.size() + 1, "evaluate_cost: need N + 1 state and N input blocks");
  const VectorXd& norms = basis.norms();
  const auto weighted = [&](const PceVector& z, const MatrixXd& W) {
    require(z.cols() == basis.size(), "evaluate_cost: coefficient columns differ from basis size");
    return 0.5 * ((W * z).cwiseProduct(z).colwise().sum() * norms)(0);
  };
  double cost = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) cost += weighted(x[i], Q) + weighted(u[i], R);
  return cost + weighted(x.back(), P);
}

double OcpResidual::max() const {
  return std::max({initial, dynamics, chance, terminal_mean, terminal_covariance, causality});
}

OcpResidual constraint_violation(const OcpProblem& pb, const std::vector<PceVector>& x,
                                 const std::vector<PceVector>& u) {
  pb.validate();
  const int nx = pb.nx(), nu = pb.nu(), N = pb.horizon(), L = pb.size();
  require(static_cast<int>(x.size()) == N + 1 && static_cast<int>(u.size()) == N,
          "constraint_violation: need N + 1 state and N input blocks");
  const Predictor& p = pb.predictor;
  const VectorXd& norms = pb.basis.norms();

  OcpResidual r;
  r.initial = (x[0] - pb.init).cwiseAbs().maxCoeff();
  for (int j = 0; j < L; ++j) {
    VectorXd xf(N * nx), vs(N * nu);
    for (int i = 0; i < N; ++i) {
      xf.segment(i * nx, nx) = x[i + 1].col(j);
      vs.segment(i * nu, nu) = u[i].col(j) - p.K * x[i].col(j);
    }
    const VectorXd pred = p.psi_x0 * x[0].col(j) + p.psi_v * vs + p.psi_w * stacked_w(pb, j);
    r.dynamics = std::max(r.dynamics, (xf - pred).cwiseAbs().maxCoeff());
    for (int i = 0; i < first_free_step(pb.basis, j); ++i)
      r.causality = std::max(r.causality, u[i].col(j).cwiseAbs().maxCoeff());
  }

  r.chance = -std::numeric_limits<double>::infinity();
  const auto check = [&](const PceVector& z, const BoxSet& box, double sigma) {
    const VectorXd sd = (z.rightCols(L - 1).array().square().matrix() * norms.tail(L - 1)).cwiseSqrt();
    for (int c = 0; c < box.dim(); ++c) {
      if (!box.enabled[c]) continue;
      r.chance = std::max({r.chance, z(c, 0) + sigma * sd[c] - box.upper[c], box.lower[c] - z(c, 0) + sigma * sd[c]});
    }
  };
  for (int i = 0; i < N; ++i) {
    check(x[i], pb.x_box, pb.sigma_x);
    check(u[i], pb.u_box, pb.sigma_u);
  }
  if (!std::isfinite(r.chance)) r.chance = 0.0;

  if (pb.terminal_constraints) {
    const VectorXd m = x[N].col(0);
    r.terminal_mean = 0.5 * m.dot(pb.P * m) - pb.gamma_level;
    const MatrixXd diff = moments(x[N], pb.basis).covariance - pb.Gamma;
    r.terminal_covariance = pb.covariance_mode == CovarianceMode::kDiagonal
                                ? diff.diagonal().maxCoeff()
                                : Eigen::SelfAdjointEigenSolver<MatrixXd>(diff).eigenvalues().maxCoeff();
  } else {
    r.terminal_mean = r.terminal_covariance = 0.0;
  }
  return r;
}

VariableCounts nominal_variable_counts(int nx, int nu, int horizon, int L, int T) {
  require(nx > 0 && nu > 0 && horizon > 0 && L > 0 && T >= horizon, "nominal_variable_counts: bad sizes");
  return {nx * (horizon + 1) * L, nu * horizon * L, (T - horizon + 1) * L, nx * L};
}

}  // namespace sdmpc
