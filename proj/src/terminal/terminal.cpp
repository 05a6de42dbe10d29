#include "sdmpc/terminal.hpp"

#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Eigenvalues>

namespace sdmpc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MatrixXd symmetric_sqrt(const MatrixXd& S) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(S);
  return es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
}

void check_weights(const MatrixXd& Q, const MatrixXd& R, int nx, int nu) {
  if (Q.rows() != nx || Q.cols() != nx || R.rows() != nu || R.cols() != nu)
    throw std::invalid_argument("terminal: weight dimensions");
}

// Index of the lower-triangle entry (i, j), i >= j, of an order-n symmetric
// matrix stored without scaling.
int tri(int i, int j, int n) {
  if (i < j) std::swap(i, j);
  return conic::svec_index(i, j, n);
}

}  // namespace

FeedbackDesign synthesize_K_H(const DataRecord& record, const MatrixXd& Q, const MatrixXd& R,
                              const conic::Settings& settings) {
  record.validate();
  const int nx = record.nx(), nu = record.nu();
  check_weights(Q, R, nx, nu);
  const MatrixXd D = record.D();
  if (numerical_rank(D) < D.rows()) throw InsufficientExcitation("synthesize_K_H: [X; U] is rank deficient");
  const MatrixXd Dpinv = pinv(D);
  const MatrixXd M = record.Xplus() - record.w;
  // M X₂ = (M D⁺) [Y; Z] with Y = X X₂, Z = U X₂.
  const MatrixXd F = M * Dpinv;
  const MatrixXd Fx = F.leftCols(nx), Fu = F.rightCols(nu);
  const MatrixXd Rh = symmetric_sqrt(R);

  // Variables: lower triangle of Y, Z column-major, lower triangle of X₁.
  const int ny = conic::svec_size(nx), nz = nu * nx, n1 = conic::svec_size(nu);
  const int nv = ny + nz + n1;
  auto yv = [&](int i, int j) { return tri(i, j, nx); };
  auto zv = [&](int m, int a) { return ny + a * nu + m; };
  auto x1v = [&](int i, int j) { return ny + nz + tri(i, j, nu); };

  conic::Problem prob;
  prob.q = VectorXd::Zero(nv);
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j <= i; ++j) prob.q[yv(i, j)] = (i == j) ? Q(i, i) : Q(i, j) + Q(j, i);
  for (int i = 0; i < nu; ++i) prob.q[x1v(i, i)] = 1.0;

  // [[Y - I, (M X₂)], [(M X₂)ᵀ, Y]] ⪰ 0, lower block holds (M X₂)ᵀ.
  conic::LmiBlock lmi1(2 * nx);
  for (int c = 0; c < nx; ++c)
    for (int r = c; r < nx; ++r) {
      lmi1.add(r, c, yv(r, c), 1.0);
      lmi1.add(nx + r, nx + c, yv(r, c), 1.0);
      if (r == c) lmi1.add_constant(r, c, -1.0);
    }
  for (int a = 0; a < nx; ++a)
    for (int b = 0; b < nx; ++b) {
      for (int l = 0; l < nx; ++l) lmi1.add(nx + a, b, yv(l, a), Fx(b, l));
      for (int m = 0; m < nu; ++m) lmi1.add(nx + a, b, zv(m, a), Fu(b, m));
    }

  // [[X₁, R^½ Z], [⋆, Y]] ⪰ 0.
  conic::LmiBlock lmi2(nu + nx);
  for (int c = 0; c < nu; ++c)
    for (int r = c; r < nu; ++r) lmi2.add(r, c, x1v(r, c), 1.0);
  for (int c = 0; c < nx; ++c)
    for (int r = c; r < nx; ++r) lmi2.add(nu + r, nu + c, yv(r, c), 1.0);
  for (int a = 0; a < nx; ++a)
    for (int b = 0; b < nu; ++b)
      for (int m = 0; m < nu; ++m) lmi2.add(nu + a, b, zv(m, a), Rh(b, m));

  prob.cones.psd = {2 * nx, nu + nx};
  const int rows = prob.cones.rows();
  std::vector<Eigen::Triplet<double>> trip;
  prob.h = VectorXd::Zero(rows);
  lmi1.emit(0, trip, prob.h);
  lmi2.emit(conic::svec_size(2 * nx), trip, prob.h);
  prob.G.resize(rows, nv);
  prob.G.setFromTriplets(trip.begin(), trip.end());
  prob.A.resize(0, nv);
  prob.b.resize(0);

  const conic::Result res = conic::solve(prob, settings);
  if (res.status != conic::Status::kOptimal)
    throw SynthesisError("synthesize_K_H: semidefinite program returned " + conic::to_string(res.status));

  MatrixXd Y(nx, nx), Z(nu, nx);
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < nx; ++j) Y(i, j) = res.x[yv(i, j)];
  for (int a = 0; a < nx; ++a)
    for (int m = 0; m < nu; ++m) Z(m, a) = res.x[zv(m, a)];
  Eigen::LLT<MatrixXd> llt(Y);
  if (llt.info() != Eigen::Success) throw SynthesisError("synthesize_K_H: X X2 is not positive definite");

  FeedbackDesign out;
  out.K = llt.solve(Z.transpose()).transpose();
  MatrixXd IK(nx + nu, nx);
  IK << MatrixXd::Identity(nx, nx), out.K;
  out.H = Dpinv * IK;
  return out;
}

double spectral_radius(const MatrixXd& F) {
  if (F.size() == 0) return 0.0;
  return Eigen::EigenSolver<MatrixXd>(F, false).eigenvalues().cwiseAbs().maxCoeff();
}

MatrixXd solve_lyapunov(const MatrixXd& F, const MatrixXd& S) {
  const Eigen::Index n = F.rows();
  if (F.cols() != n || S.rows() != n || S.cols() != n) throw std::invalid_argument("solve_lyapunov: dimension mismatch");
  const double rho = spectral_radius(F);
  if (!(rho < 1.0)) throw SynthesisError("solve_lyapunov: closed loop not Schur stable (spectral radius " + std::to_string(rho) + ")");
  // vec(Fᵀ X F) = (Fᵀ ⊗ Fᵀ) vec(X).
  MatrixXd L = MatrixXd::Identity(n * n, n * n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) L.block(j * n, i * n, n, n) -= F(i, j) * F.transpose();
  const VectorXd x = L.partialPivLu().solve(S.reshaped());
  const MatrixXd X = x.reshaped(n, n);
  return 0.5 * (X + X.transpose());
}

MatrixXd solve_P(const MatrixXd& K, const MatrixXd& H, const MatrixXd& M, const MatrixXd& Q, const MatrixXd& R) {
  if (M.cols() != H.rows()) throw std::invalid_argument("solve_P: M and H do not conform");
  check_weights(Q, R, static_cast<int>(M.rows()), static_cast<int>(K.rows()));
  return solve_lyapunov(M * H, Q + K.transpose() * R * K);
}

MatrixXd solve_Gamma(const MatrixXd& MH, const MatrixXd& sigma_bar) { return solve_lyapunov(MH.transpose(), sigma_bar); }

MatrixXd solve_dare(const MatrixXd& A, const MatrixXd& B, const MatrixXd& Q, const MatrixXd& R, double tol, int max_iter) {
  const Eigen::Index n = A.rows();
  check_weights(Q, R, static_cast<int>(n), static_cast<int>(B.cols()));
  MatrixXd Ak = A;
  MatrixXd G = B * R.ldlt().solve(B.transpose());
  MatrixXd Hk = Q;
  const MatrixXd I = MatrixXd::Identity(n, n);
  for (int it = 0; it < max_iter; ++it) {
    const Eigen::PartialPivLU<MatrixXd> W(I + G * Hk);
    const MatrixXd WA = W.solve(Ak);
    const MatrixXd WG = W.solve(G);
    const MatrixXd Hn = Hk + Ak.transpose() * Hk * WA;
    G = G + Ak * WG * Ak.transpose();
    Ak = Ak * WA;
    const double change = (Hn - Hk).norm();
    Hk = 0.5 * (Hn + Hn.transpose());
    if (!Hk.allFinite()) break;
    if (change <= tol * (1.0 + Hk.norm())) return Hk;
  }
  throw SynthesisError("solve_dare: doubling iteration did not converge");
}

TerminalIngredients data_driven_ingredients(const DataRecord& record, const MatrixXd& Q, const MatrixXd& R,
                                            const MatrixXd& sigma_bar, const conic::Settings& settings) {
  const FeedbackDesign fd = synthesize_K_H(record, Q, R, settings);
  TerminalIngredients ing;
  ing.K = fd.K;
  ing.H = fd.H;
  ing.M = record.Xplus() - record.w;
  ing.closed_loop = ing.M * ing.H;
  ing.P = solve_P(ing.K, ing.H, ing.M, Q, R);
  ing.Gamma = solve_Gamma(ing.closed_loop, sigma_bar);
  return ing;
}

TerminalIngredients model_based_ingredients(const MatrixXd& A, const MatrixXd& B, const MatrixXd& Q, const MatrixXd& R,
                                            const MatrixXd& sigma_bar) {
  TerminalIngredients ing;
  ing.P = solve_dare(A, B, Q, R);
  ing.K = -(R + B.transpose() * ing.P * B).ldlt().solve(B.transpose() * ing.P * A);
  ing.closed_loop = A + B * ing.K;
  ing.Gamma = solve_Gamma(ing.closed_loop, sigma_bar);
  return ing;
}

namespace {

// Worst-case distance to [lo, hi] of mean ± spread with |mean| <= reach.
double box_margin(double lo, double hi, double reach, double spread) {
  return std::min(hi - reach - spread, -reach - spread - lo);
}

}  // namespace

TerminalReport check_terminal_assumption(const TerminalIngredients& ing, const BoxSet& x_box, const BoxSet& u_box,
                                         double sigma_x, double sigma_u) {
  const int nx = ing.nx(), nu = ing.nu();
  x_box.validate(nx);
  u_box.validate(nu);
  TerminalReport rep;
  // max_{½xᵀPx<=γ} ½(Fx)ᵀP(Fx) / γ = λ_max(FᵀPF, P).
  const MatrixXd& F = ing.closed_loop;
  Eigen::GeneralizedSelfAdjointEigenSolver<MatrixXd> ges(F.transpose() * ing.P * F, ing.P, Eigen::EigenvaluesOnly);
  rep.invariance_margin = 1.0 - ges.eigenvalues().maxCoeff();
  if (spectral_radius(F) >= 1.0) rep.invariance_margin = std::min(rep.invariance_margin, -1.0);

  const MatrixXd Pinv = ing.P.inverse();
  const double g = ing.gamma_level;
  const double inf = std::numeric_limits<double>::infinity();
  rep.state_margin = VectorXd::Constant(nx, inf);
  for (int i = 0; i < nx; ++i)
    if (x_box.enabled[i])
      rep.state_margin[i] = box_margin(x_box.lower[i], x_box.upper[i], std::sqrt(2.0 * g * Pinv(i, i)),
                                       sigma_x * std::sqrt(std::max(0.0, ing.Gamma(i, i))));
  const MatrixXd KPK = ing.K * Pinv * ing.K.transpose();
  const MatrixXd KGK = ing.K * ing.Gamma * ing.K.transpose();
  rep.input_margin = VectorXd::Constant(nu, inf);
  for (int i = 0; i < nu; ++i)
    if (u_box.enabled[i])
      rep.input_margin[i] = box_margin(u_box.lower[i], u_box.upper[i], std::sqrt(2.0 * g * KPK(i, i)),
                                       sigma_u * std::sqrt(std::max(0.0, KGK(i, i))));
  return rep;
}

double select_gamma_level(const TerminalIngredients& ing, const BoxSet& x_box, const BoxSet& u_box, double sigma_x,
                          double sigma_u, double gamma0, int max_halvings) {
  TerminalIngredients trial = ing;
  trial.gamma_level = gamma0;
  for (int h = 0; h <= max_halvings; ++h) {
    const TerminalReport rep = check_terminal_assumption(trial, x_box, u_box, sigma_x, sigma_u);
    if (!rep.invariant()) throw SynthesisError("select_gamma_level: terminal set is not invariant");
    if (rep.covered()) return trial.gamma_level;
    trial.gamma_level *= 0.5;
  }
  throw SynthesisError("select_gamma_level: no admissible level after " + std::to_string(max_halvings) + " halvings");
}

}  // namespace sdmpc
