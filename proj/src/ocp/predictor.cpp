#include <stdexcept>

#include "sdmpc/ocp.hpp"

namespace sdmpc {

using Eigen::MatrixXd;

namespace {

MatrixXd gain_or_zero(const MatrixXd& K, int nu, int nx) {
  if (K.size() == 0) return MatrixXd::Zero(nu, nx);
  if (K.rows() != nu || K.cols() != nx) throw std::invalid_argument("make_predictor: K must be n_u x n_x");
  return K;
}

// Zeros the blocks (i, l), l > i; they are exactly zero for a causal system.
void make_causal(MatrixXd& psi, int row_block, int col_block) {
  const int N = static_cast<int>(psi.rows()) / row_block;
  for (int i = 0; i < N; ++i)
    psi.block(i * row_block, (i + 1) * col_block, row_block, (N - i - 1) * col_block).setZero();
}

}  // namespace

Predictor make_predictor(const HankelStack& stack, const MatrixXd& K) {
  const int nx = stack.nx, nu = stack.nu, N = stack.horizon;
  const int cols = stack.cols();
  const int rho = nx + N * (nu + nx);
  const MatrixXd Kg = gain_or_zero(K, nu, nx);

  MatrixXd v_rows = stack.Hu;
  for (int i = 0; i < N; ++i) v_rows.middleRows(i * nu, nu) -= Kg * stack.Hx.middleRows(i * nx, nx);
  MatrixXd free_rows(rho, cols);
  free_rows << stack.Hx.topRows(nx), v_rows, stack.Hw;
  if (numerical_rank(free_rows) < rho)
    throw InsufficientExcitation("make_predictor: stack rank below n_x + N(n_u + n_x)");

  const MatrixXd future = stack.Hx.bottomRows(N * nx);
  const MatrixXd map = future * pinv(free_rows);
  const double mismatch = (map * free_rows - future).norm();
  if (mismatch > 1e-6 * (1.0 + future.norm()))
    throw std::invalid_argument("make_predictor: data are not consistent with a linear time-invariant system");

  Predictor p;
  p.nx = nx;
  p.nu = nu;
  p.horizon = N;
  p.K = Kg;
  p.psi_x0 = map.leftCols(nx);
  p.psi_v = map.middleCols(nx, N * nu);
  p.psi_w = map.rightCols(N * nx);
  make_causal(p.psi_v, nx, nu);
  make_causal(p.psi_w, nx, nx);
  p.stack_pinv = pinv(stack.matrix());
  return p;
}

Predictor make_predictor(const MatrixXd& A, const MatrixXd& B, int horizon, const MatrixXd& K) {
  const int nx = static_cast<int>(A.rows()), nu = static_cast<int>(B.cols());
  if (A.cols() != nx || B.rows() != nx || horizon < 1) throw std::invalid_argument("make_predictor: bad dimensions");
  Predictor p;
  p.nx = nx;
  p.nu = nu;
  p.horizon = horizon;
  p.K = gain_or_zero(K, nu, nx);
  const MatrixXd F = A + B * p.K;
  p.psi_x0.resize(horizon * nx, nx);
  p.psi_v = MatrixXd::Zero(horizon * nx, horizon * nu);
  p.psi_w = MatrixXd::Zero(horizon * nx, horizon * nx);
  // powers[d] = F^d
  std::vector<MatrixXd> powers{MatrixXd::Identity(nx, nx)};
  for (int d = 1; d <= horizon; ++d) powers.push_back(F * powers.back());
  for (int i = 0; i < horizon; ++i) {
    p.psi_x0.middleRows(i * nx, nx) = powers[i + 1];
    for (int l = 0; l <= i; ++l) {
      p.psi_v.block(i * nx, l * nu, nx, nu) = powers[i - l] * B;
      p.psi_w.block(i * nx, l * nx, nx, nx) = powers[i - l];
    }
  }
  return p;
}

}  // namespace sdmpc
