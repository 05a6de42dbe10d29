#include "sdmpc/terminal.hpp"

#include <cmath>

#include <gtest/gtest.h>

#include "sdmpc/terminal_io.hpp"

namespace sdmpc {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

MatrixXd reactor_A() {
  MatrixXd A(4, 4);
  A << 1.178, 0.001, 0.511, -0.403,
      -0.051, 0.661, -0.011, 0.061,
      0.076, 0.335, 0.560, 0.382,
      0.0, 0.335, 0.089, 0.849;
  return A;
}

MatrixXd reactor_B() {
  MatrixXd B(4, 2);
  B << 0.004, -0.087, 0.467, 0.001, 0.213, -0.235, 0.213, -0.016;
  return B;
}

MatrixXd m11(double v) { return MatrixXd::Constant(1, 1, v); }

MatrixXd random_matrix(int r, int c, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> ud(-1.0, 1.0);
  return MatrixXd::NullaryExpr(r, c, [&] { return ud(rng); });
}

MatrixXd random_stable(int n, std::mt19937_64& rng) {
  MatrixXd F = random_matrix(n, n, rng);
  const double rho = spectral_radius(F);
  return F * (0.9 / std::max(rho, 1e-3));
}

// Scalar plant x+ = 2x + u + w with measured w; inputs u = -1.6x + v.
DataRecord scalar_record(int T, std::uint64_t seed) {
  Plant p{m11(2.0), m11(1.0), DisturbanceModel::gaussian_diagonal(VectorXd::Constant(1, 0.1)), seed};
  std::mt19937_64 rng = make_rng(seed);
  std::uniform_real_distribution<double> ud(-1.0, 1.0);
  return make_record(simulate(
      p, [&](int, const VectorXd& x) -> VectorXd { return VectorXd::Constant(1, -1.6 * x[0] + ud(rng)); },
      VectorXd::Zero(1), T, rng));
}

DataRecord reactor_record(int T, std::uint64_t seed, const MatrixXd& K0) {
  Plant p{reactor_A(), reactor_B(), DisturbanceModel::gaussian_diagonal(VectorXd::Constant(4, 0.01)), seed};
  std::mt19937_64 rng = make_rng(seed);
  std::uniform_real_distribution<double> ud(-1.0, 1.0);
  return make_record(simulate(
      p, [&](int, const VectorXd& x) -> VectorXd { return K0 * x + VectorXd::NullaryExpr(2, [&] { return ud(rng); }); },
      VectorXd::Zero(4), T, rng));
}

TEST(LyapunovTest, Trivial) {
  const MatrixXd P = solve_P(MatrixXd::Zero(1, 2), MatrixXd::Zero(3, 2), MatrixXd::Zero(2, 3), MatrixXd::Identity(2, 2), m11(1.0));
  EXPECT_LT((P - MatrixXd::Identity(2, 2)).norm(), 1e-15);
  EXPECT_TRUE(solve_Gamma(m11(0.382), m11(0.0)).isZero(0.0));
  EXPECT_THROW(solve_Gamma(m11(1.2), m11(1.0)), SynthesisError);
}

TEST(LyapunovTest, ResidualProperty) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 1 + trial % 6;
    const MatrixXd F = random_stable(n, rng);
    MatrixXd S = random_matrix(n, n, rng);
    S = S * S.transpose();
    const MatrixXd X = solve_lyapunov(F, S);
    EXPECT_LT((X - F.transpose() * X * F - S).norm(), 1e-8 * (1 + X.norm()));
    const MatrixXd G = solve_Gamma(F, S);
    EXPECT_LT((F * G * F.transpose() - G + S).norm(), 1e-8 * (1 + G.norm()));
  }
}

TEST(LyapunovTest, ScalarGamma) {
  const double cl = 2.0 - (1.0 + std::sqrt(5.0)) / 2.0;
  EXPECT_NEAR(solve_Gamma(m11(cl), m11(0.01))(0, 0), 0.01 / (1 - cl * cl), 1e-15);
  EXPECT_NEAR(solve_Gamma(m11(0.382), m11(0.01))(0, 0), 0.0117, 5e-5);
}

TEST(DareTest, ScalarClosedForm) {
  const TerminalIngredients ing = model_based_ingredients(m11(2), m11(1), m11(1), m11(1), m11(0.01));
  const double P = 2.0 + std::sqrt(5.0);
  EXPECT_NEAR(ing.P(0, 0), P, 1e-12);
  EXPECT_NEAR(ing.K(0, 0), -2 * P / (1 + P), 1e-12);
  EXPECT_NEAR(ing.K(0, 0), -1.618, 5e-4);
}

TEST(DareTest, ZeroInputReducesToLyapunov) {
  MatrixXd A(2, 2);
  A << 0.5, 0.2, -0.1, 0.3;
  const MatrixXd Q = MatrixXd::Identity(2, 2);
  const TerminalIngredients ing = model_based_ingredients(A, MatrixXd::Zero(2, 1), Q, m11(1), Q);
  EXPECT_TRUE(ing.K.isZero(1e-14));
  EXPECT_LT((ing.P - A.transpose() * ing.P * A - Q).norm(), 1e-12);
}

TEST(DareTest, FixedPointProperty) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 1 + trial % 5, m = 1 + trial % 3;
    const MatrixXd A = 1.5 * random_matrix(n, n, rng), B = random_matrix(n, m, rng);
    const MatrixXd Q = MatrixXd::Identity(n, n), R = MatrixXd::Identity(m, m);
    const MatrixXd P = solve_dare(A, B, Q, R);
    const MatrixXd res =
        A.transpose() * P * A - P + Q -
        A.transpose() * P * B * (R + B.transpose() * P * B).ldlt().solve(B.transpose() * P * A);
    EXPECT_LT(res.norm(), 1e-8 * (1 + P.norm()));
  }
}

TEST(SynthesisTest, ScalarMatchesClosedForms) {
  const DataRecord r = scalar_record(100, 3);
  const TerminalIngredients ing = data_driven_ingredients(r, m11(1), m11(1), m11(0.01));
  const double P = 2.0 + std::sqrt(5.0), K = -2 * P / (1 + P);
  const double Gamma = 0.01 / (1 - (2 + K) * (2 + K));
  EXPECT_NEAR(ing.P(0, 0), P, 5e-3);
  EXPECT_NEAR(ing.K(0, 0), K, 5e-3);
  EXPECT_NEAR(ing.Gamma(0, 0), Gamma, 5e-4);
  EXPECT_NEAR(ing.P(0, 0), 4.236, 5e-3);
  EXPECT_NEAR(ing.Gamma(0, 0), 0.0117, 5e-4);
}

TEST(SynthesisTest, EquationResiduals) {
  const TerminalIngredients mb = model_based_ingredients(reactor_A(), reactor_B(), MatrixXd::Identity(4, 4),
                                                         MatrixXd::Identity(2, 2), 1e-4 * MatrixXd::Identity(4, 4));
  const DataRecord r = reactor_record(120, 4, mb.K);
  const MatrixXd Q = MatrixXd::Identity(4, 4), R = MatrixXd::Identity(2, 2), S = 1e-4 * MatrixXd::Identity(4, 4);
  const TerminalIngredients ing = data_driven_ingredients(r, Q, R, S);

  MatrixXd IK(6, 4);
  IK << MatrixXd::Identity(4, 4), ing.K;
  EXPECT_LT((r.D() * ing.H - IK).cwiseAbs().maxCoeff(), 1e-7);
  const MatrixXd& F = ing.closed_loop;
  EXPECT_LT((ing.P - F.transpose() * ing.P * F - ing.K.transpose() * R * ing.K - Q).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LT((F * ing.Gamma * F.transpose() - ing.Gamma + S).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LT(spectral_radius(F), 1.0);
  EXPECT_GT(Eigen::SelfAdjointEigenSolver<MatrixXd>(ing.Gamma).eigenvalues().minCoeff(), 0.0);

  // Measured disturbances: MH = A + BK.
  EXPECT_LT((F - (reactor_A() + reactor_B() * ing.K)).cwiseAbs().maxCoeff(), 1e-7);
  // Data-driven vs model-based cost.
  EXPECT_LT((ing.P - mb.P).norm() / mb.P.norm(), 1e-2);
}

TEST(SynthesisTest, EstimatedDisturbancesMatchIdentifiedModel) {
  const TerminalIngredients mb = model_based_ingredients(reactor_A(), reactor_B(), MatrixXd::Identity(4, 4),
                                                         MatrixXd::Identity(2, 2), 1e-4 * MatrixXd::Identity(4, 4));
  const DataRecord r = with_estimated_disturbances(reactor_record(200, 5, mb.K));
  const LinearModel m = identify_model(r.x, r.u);
  const TerminalIngredients ing = data_driven_ingredients(r, MatrixXd::Identity(4, 4), MatrixXd::Identity(2, 2),
                                                          1e-4 * MatrixXd::Identity(4, 4));
  EXPECT_LT((ing.closed_loop - (m.A + m.B * ing.K)).cwiseAbs().maxCoeff(), 1e-7);
}

TEST(TerminalCheckTest, ScalarAutoLevelPasses) {
  TerminalIngredients ing = model_based_ingredients(m11(2), m11(1), m11(1), m11(1), m11(0.01));
  const BoxSet xb = BoxSet::symmetric(VectorXd::Constant(1, 2.0)), ub = BoxSet::symmetric(VectorXd::Constant(1, 3.0));
  ing.gamma_level = select_gamma_level(ing, xb, ub, 1.645, 1.645);
  const TerminalReport rep = check_terminal_assumption(ing, xb, ub, 1.645, 1.645);
  EXPECT_TRUE(rep.passed());
  // Closed-form extremum sqrt(2γ/P) plus the tightening.
  const double reach = std::sqrt(2 * ing.gamma_level / ing.P(0, 0));
  EXPECT_NEAR(rep.state_margin[0], 2.0 - reach - 1.645 * std::sqrt(ing.Gamma(0, 0)), 1e-12);
}

TEST(TerminalCheckTest, Failures) {
  TerminalIngredients ing = model_based_ingredients(m11(2), m11(1), m11(1), m11(1), m11(0.01));
  const BoxSet xb = BoxSet::symmetric(VectorXd::Constant(1, 0.5)), ub = BoxSet::symmetric(VectorXd::Constant(1, 0.5));
  ing.gamma_level = 1e6;
  TerminalReport rep = check_terminal_assumption(ing, xb, ub, 1.645, 1.645);
  EXPECT_TRUE(rep.invariant());
  EXPECT_FALSE(rep.covered());

  ing.gamma_level = 1e-6;
  ing.closed_loop = m11(1.5);
  rep = check_terminal_assumption(ing, xb, ub, 1.645, 1.645);
  EXPECT_FALSE(rep.invariant());
}

TEST(TerminalIoTest, JsonRoundTrip) {
  const DataRecord r = scalar_record(40, 6);
  TerminalIngredients ing = data_driven_ingredients(r, m11(1), m11(1), m11(0.01));
  ing.gamma_level = 0.25;
  const TerminalIngredients back = ingredients_from_json(nlohmann::json::parse(to_json(ing).dump()));
  EXPECT_EQ(back.K, ing.K);
  EXPECT_EQ(back.H, ing.H);
  EXPECT_EQ(back.P, ing.P);
  EXPECT_EQ(back.Gamma, ing.Gamma);
  EXPECT_EQ(back.M, ing.M);
  EXPECT_EQ(back.gamma_level, 0.25);
}

}  // namespace
}  // namespace sdmpc
