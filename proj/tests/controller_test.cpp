#include "sdmpc/controller.hpp"

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "sdmpc/chance.hpp"

namespace sdmpc {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

MatrixXd m11(double v) { return MatrixXd::Constant(1, 1, v); }
VectorXd v1(double v) { return VectorXd::Constant(1, v); }



const DisturbanceModel& scalar_w() {
  static const DisturbanceModel w = DisturbanceModel::gaussian_diagonal(v1(0.1));
  return w;
}

DataRecord scalar_record(int T, std::uint64_t seed) {
  Plant p{m11(2.0), m11(1.0), scalar_w(), seed};
  std::mt19937_64 rng = make_rng(seed);
  std::uniform_real_distribution<double> ud(-1.0, 1.0);
  return make_record(simulate(
      p, [&](int, const VectorXd& x) -> VectorXd { return v1(-1.6 * x[0] + ud(rng)); }, VectorXd::Zero(1), T, rng));
}

// Data-driven scalar case: x+ = 2x + u + w, X = [-2, 2], U = [-3, 3].
ControllerConfig scalar_config(int N, const DataRecord& record) {
  ControllerConfig c;
  c.Q = c.R = m11(1);
  c.x_box = BoxSet::symmetric(v1(2.0));
  c.u_box = BoxSet::symmetric(v1(3.0));
  c.sigma_x = c.sigma_u = chance_sigma(SigmaMode::kGaussian, 0.1);
  c.w_model = scalar_w();
  c.ingredients = data_driven_ingredients(record, c.Q, c.R, scalar_w().covariance());
  c.ingredients.gamma_level = select_gamma_level(c.ingredients, c.x_box, c.u_box, c.sigma_x, c.sigma_u);
  c.predictor = make_predictor(build_stack(record, N), c.ingredients.K);
  return c;
}

ControllerConfig scalar_config(int N) { return scalar_config(N, scalar_record(100, 11)); }

TEST(ShiftCandidateTest, ZeroSolutionGivesZeroCandidate) {
  const int N = 4;
  const PceBasis basis = make_basis(1, 2, N, std::vector<int>{}, 0);
  OcpSolution sol;
  sol.status = OcpStatus::kOptimal;
  sol.x.assign(N + 1, PceVector::Zero(1, basis.size()));
  sol.u.assign(N, PceVector::Zero(1, basis.size()));
  const TerminalIngredients ing = model_based_ingredients(m11(2), m11(1), m11(1), m11(1), m11(0.01));
  const DisturbanceModel zero = DisturbanceModel::gaussian_diagonal(v1(0.0));
  const Candidate c = shift_candidate(sol, basis, ing, zero, N, m11(1), m11(1));
  EXPECT_EQ(c.basis.size(), basis.size() + 1);
  EXPECT_EQ(c.cost, 0.0);
  for (const PceVector& x : c.x) EXPECT_TRUE(x.isZero(0.0));
  for (const PceVector& u : c.u) EXPECT_TRUE(u.isZero(0.0));
}

TEST(ShiftCandidateTest, LayoutAndCost) {
  const int N = 3;
  const PceBasis basis = make_basis(1, 2, N, std::vector<int>{}, 0);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  OcpSolution sol;
  sol.status = OcpStatus::kOptimal;
  for (int i = 0; i <= N; ++i) sol.x.push_back(PceVector::NullaryExpr(1, basis.size(), [&] { return nd(rng); }));
  for (int i = 0; i < N; ++i) sol.u.push_back(PceVector::NullaryExpr(1, basis.size(), [&] { return nd(rng); }));
  const TerminalIngredients ing = model_based_ingredients(m11(2), m11(1), m11(1), m11(1), m11(0.01));
  const Candidate c = shift_candidate(sol, basis, ing, scalar_w(), N, m11(1), m11(1));

  const double F = ing.closed_loop(0, 0), K = ing.K(0, 0);
  for (int j = 0; j < basis.size(); ++j) {
    for (int i = 0; i < N; ++i) EXPECT_EQ(c.x[i](0, j), sol.x[i + 1](0, j));
    for (int i = 0; i + 1 < N; ++i) EXPECT_EQ(c.u[i](0, j), sol.u[i + 1](0, j));
    EXPECT_DOUBLE_EQ(c.u[N - 1](0, j), K * sol.x[N](0, j));
    EXPECT_DOUBLE_EQ(c.x[N](0, j), F * sol.x[N](0, j));
  }
  EXPECT_EQ(c.x[N](0, basis.size()), 0.1);
  EXPECT_EQ(c.basis[basis.size()].time_tag, N);

  // Hand-expanded cost; all Hermite norms are 1 here.
  double J = 0.0;
  for (int j = 0; j < c.basis.size(); ++j) {
    for (int i = 0; i < N; ++i) J += 0.5 * (c.x[i](0, j) * c.x[i](0, j) + c.u[i](0, j) * c.u[i](0, j));
    J += 0.5 * ing.P(0, 0) * c.x[N](0, j) * c.x[N](0, j);
  }
  EXPECT_NEAR(c.cost, J, 1e-12 * J);
}

TEST(RealizeFeedbackTest, MeasuredBasisReturnsMean) {
  const PceBasis basis = make_basis(1, 2, 5, std::vector<int>{}, 0);
  PceVector u = PceVector::Zero(1, basis.size());
  u(0, 0) = -0.7;
  EXPECT_EQ(realize_feedback(u, basis, {}, scalar_w())[0], -0.7);
}

TEST(RealizeFeedbackTest, OneBackupStep) {
  // x-block {1, φ_{-1}}; w_{-1} = 0.05 with coefficient 0.1 gives φ̂ = 0.5.
  const PceBasis basis = make_basis(2, 2, 5, std::vector<int>{-1}, 0);
  PceVector u = PceVector::Zero(1, basis.size());
  u(0, 0) = 0.3;
  u(0, 1) = -2.0;
  const VectorXd uc = realize_feedback(u, basis, {{-1, v1(0.05)}}, scalar_w());
  EXPECT_NEAR(uc[0], 0.3 + 0.5 * -2.0, 1e-15);
}

TEST(RealizeFeedbackTest, Errors) {
  const PceBasis basis = make_basis(2, 2, 3, std::vector<int>{-1}, 0);
  PceVector u = PceVector::Zero(1, basis.size());
  EXPECT_THROW(realize_feedback(u, basis, {}, scalar_w()), std::invalid_argument);
  u(0, 2) = 1.0;  // pinned coefficient
  EXPECT_THROW(realize_feedback(u, basis, {{-1, v1(0.0)}}, scalar_w()), std::invalid_argument);

  const DisturbanceModel partial = DisturbanceModel::gaussian_diagonal((VectorXd(2) << 0.1, 0.0).finished());
  bool degenerate = false;
  const VectorXd xi = fit_germ_checked(partial, (VectorXd(2) << 0.05, 0.0).finished(), &degenerate);
  EXPECT_TRUE(degenerate);
  EXPECT_NEAR(xi[0], 0.5, 1e-14);
  EXPECT_EQ(xi[1], 0.0);
  EXPECT_THROW(fit_germ_checked(partial, (VectorXd(2) << 0.05, 0.3).finished()), std::invalid_argument);
}

TEST(RealizeFeedbackTest, StateFeedbackConsistency) {
  // If uʲ = K x̄ʲ, the realized input is K times the realized x̄.
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  MatrixXd S = MatrixXd::NullaryExpr(4, 4, [&] { return nd(rng); });
  const DisturbanceModel w = DisturbanceModel::gaussian(1e-2 * (S * S.transpose() + MatrixXd::Identity(4, 4)));
  const MatrixXd K = MatrixXd::NullaryExpr(2, 4, [&] { return nd(rng); });
  for (int q = 0; q < 4; ++q) {
    std::vector<int> tags;
    std::map<int, VectorXd> past;
    for (int t = -q; t < 0; ++t) {
      tags.push_back(t);
      past[t] = 0.2 * VectorXd::NullaryExpr(4, [&] { return nd(rng); });
    }
    const PceBasis basis = make_basis(1 + 4 * q, 5, 3, tags, 0);
    PceVector xbar = PceVector::Zero(4, basis.size());
    xbar.leftCols(basis.lx()) = MatrixXd::NullaryExpr(4, basis.lx(), [&] { return nd(rng); });
    std::map<int, VectorXd> germs;
    for (const auto& [t, wt] : past) germs[t] = w.fit_germ(wt);
    germs[0] = germs[1] = germs[2] = VectorXd::Zero(4);
    const VectorXd realized = xbar * eval_basis_at(basis, germs);
    EXPECT_LT((realize_feedback(K * xbar, basis, past, w) - K * realized).norm(), 1e-10 * (1 + realized.norm()));
  }
}

TEST(ControllerTest, ConfigValidation) {
  ControllerConfig c = scalar_config(6);
  c.predictor.K = m11(-1.0);
  EXPECT_THROW(Controller{c}, std::invalid_argument);
}

TEST(ControllerTest, FirstStepInfeasibleIsHardError) {
  Controller ctl(scalar_config(8));
  EXPECT_THROW(ctl.step(v1(50.0)), ControllerInfeasible);
}

// Zero disturbance realizations: the realized state is the predicted mean, so
// V^m <= J̃ and the measured path is accepted every step with u = u⁰.
TEST(ControllerTest, ZeroRealizationsKeepMeasuredPath) {
  const int N = 25;
  Controller ctl(scalar_config(N));
  VectorXd x = v1(1.7);
  double J_prev = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 20; ++k) {
    StepDiagnostics d;
    const VectorXd u = k == 0 ? ctl.step(x, std::nullopt, &d) : ctl.step(x, v1(0.0), &d);
    EXPECT_EQ(d.path, InitPath::kMeasured) << k;
    EXPECT_EQ(d.q, 0);
    EXPECT_EQ(ctl.state().basis.lx(), 1);
    EXPECT_EQ(ctl.state().basis.size(), 1 + N);
    EXPECT_LE(d.V_N, J_prev);
    EXPECT_EQ(d.J_tilde, J_prev);
    J_prev = d.J_tilde_next;
    x = 2 * x + u;
  }
  EXPECT_LT(std::abs(x[0]), 1e-3);
}

// Random disturbances: both paths occur, and away from the constraints every
// applied input is the terminal feedback u = K x whichever path is taken.
TEST(ControllerTest, NominalClosedLoop) {
  const int N = 25;
  Controller ctl(scalar_config(N));
  const double K = ctl.config().ingredients.K(0, 0);
  std::mt19937_64 rng = make_rng(21);
  std::normal_distribution<double> nd(0.0, 0.1);
  VectorXd x = v1(1.7);
  VectorXd w_prev;
  double J_prev = std::numeric_limits<double>::infinity();
  int measured = 0;
  for (int k = 0; k < 60; ++k) {
    StepDiagnostics d;
    const VectorXd u = k == 0 ? ctl.step(x, std::nullopt, &d) : ctl.step(x, w_prev, &d);
    measured += d.path == InitPath::kMeasured;
    EXPECT_EQ(ctl.state().basis.lx(), 1 + d.q);
    EXPECT_LE(d.V_N, J_prev + 1e-9 * (1 + J_prev));
    EXPECT_EQ(d.J_tilde, J_prev);
    EXPECT_LT(std::abs(d.descent_residual), 1e-6 * (1 + d.J_tilde_next)) << k;
    // Disturbance P-cost of the appended block is ½ Σ_W P.
    EXPECT_NEAR(d.disturbance_cost, 0.5 * 0.01 * ctl.config().ingredients.P(0, 0), 1e-12);
    EXPECT_LT(d.slack_inf, 1e-12);
    EXPECT_NEAR(u[0], K * x[0], 1e-4 * (1 + std::abs(x[0]))) << k;
    J_prev = d.J_tilde_next;
    w_prev = v1(nd(rng));
    x = 2 * x + u + w_prev;
  }
  EXPECT_GT(measured, 10);
  EXPECT_LT(measured, 60);
  EXPECT_LT(std::abs(x[0]), 1.0);
}

// A disturbance pushing x outside X forces the backup path; the shifted
// candidate is feasible for the backup problem and the basis follows
// {1, tags k-q..k-1, tags k..k+N-1}.
TEST(ControllerTest, InjectedDisturbanceTriggersBackup) {
  const int N = 10;
  Controller ctl(scalar_config(N));
  std::mt19937_64 rng = make_rng(22);
  std::normal_distribution<double> nd(0.0, 0.1);
  VectorXd x = v1(0.5);
  VectorXd w_prev;
  int backups = 0, max_q = 0;
  double J_prev = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 30; ++k) {
    StepDiagnostics d;
    const VectorXd u = k == 0 ? ctl.step(x, std::nullopt, &d) : ctl.step(x, w_prev, &d);
    EXPECT_LE(d.V_N, J_prev + 1e-9 * (1 + J_prev));
    EXPECT_LT(std::abs(d.descent_residual), 1e-6 * (1 + d.J_tilde_next));
    const PceBasis& b = ctl.state().basis;
    EXPECT_EQ(b.lx(), 1 + d.q);
    ASSERT_EQ(b.size(), 1 + d.q + N);
    for (int j = 1; j < b.size(); ++j) EXPECT_EQ(b[j].time_tag, k - d.q + j - 1);
    if (d.path == InitPath::kBackup) {
      ++backups;
      EXPECT_LT(d.candidate_residual, 1e-6) << k;
    } else {
      EXPECT_TRUE(std::isnan(d.candidate_residual));
    }
    max_q = std::max(max_q, d.q);
    J_prev = d.J_tilde_next;
    w_prev = v1(k == 5 ? 1.2 : nd(rng));
    x = 2 * x + u + w_prev;
  }
  EXPECT_GE(backups, 1);
  EXPECT_GE(max_q, 1);
  EXPECT_LT(std::abs(x[0]), 2.0);
}

TEST(ControllerTest, BackupInitialConditionReproducesState) {
  // Model-exact predictor: the backup x̄ evaluated at the fitted germs is x_k.
  const int N = 8;
  Controller ctl(scalar_config(N));
  VectorXd x = v1(0.2);
  const VectorXd u0 = ctl.step(x);
  const VectorXd w = v1(2.5);
  const VectorXd x1 = 2 * x + u0 + w;
  ASSERT_GT(std::abs(x1[0]), 2.0);
  const Candidate cand = *ctl.state().candidate;
  const PceVector xbar = ctl.state().predicted_init;
  std::map<int, VectorXd> germs{{0, w / 0.1}};
  for (int t = 1; t <= N; ++t) germs[t] = v1(0.0);
  EXPECT_NEAR((xbar * eval_basis_at(cand.basis, germs))[0], x1[0], 1e-8);

  StepDiagnostics d;
  ctl.step(x1, w, &d);
  EXPECT_EQ(d.path, InitPath::kBackup);
  EXPECT_NE(d.measured_status, OcpStatus::kOptimal);
  EXPECT_EQ(d.q, 1);
  EXPECT_NEAR(d.V_backup, d.V_N, 0.0);
  EXPECT_LE(d.V_N, d.J_tilde + 1e-9);
}

TEST(ControllerTest, RecursiveFeasibilityLongRun) {
  const int N = 10;
  Controller ctl(scalar_config(N));
  std::mt19937_64 rng = make_rng(23);
  std::normal_distribution<double> nd(0.0, 0.1);
  VectorXd x = v1(1.9);
  VectorXd w_prev;
  int backups = 0, max_q = 0;
  for (int k = 0; k < 300; ++k) {
    StepDiagnostics d;
    VectorXd u;
    ASSERT_NO_THROW({ u = k == 0 ? ctl.step(x, std::nullopt, &d) : ctl.step(x, w_prev, &d); }) << k;
    EXPECT_LE(d.V_N, d.J_tilde + 1e-9 * (1 + std::abs(d.V_N)));
    if (d.path == InitPath::kBackup) {
      ++backups;
      EXPECT_LT(d.candidate_residual, 1e-6) << k;
    }
    max_q = std::max(max_q, d.q);
    // Heavy tail every 50 steps.
    w_prev = v1(k % 50 == 49 ? 1.0 : nd(rng));
    x = 2 * x + u + w_prev;
  }
  EXPECT_GT(backups, 0);
  EXPECT_GE(max_q, 2);
}

TEST(ControllerTest, EstimatedDisturbancesMatchMeasured) {
  const int N = 10;
  const DataRecord rec = scalar_record(100, 11);
  ControllerConfig cm = scalar_config(N, rec);
  ControllerConfig ce = scalar_config(N, with_estimated_disturbances(rec));
  ce.estimator = DisturbanceEstimator(with_estimated_disturbances(rec));
  Controller a(cm), b(ce);
  std::mt19937_64 rng = make_rng(24);
  std::normal_distribution<double> nd(0.0, 0.1);
  VectorXd xa = v1(1.5), xb = xa, w;
  for (int k = 0; k < 20; ++k) {
    StepDiagnostics da, db;
    const VectorXd ua = k == 0 ? a.step(xa, std::nullopt, &da) : a.step(xa, w, &da);
    const VectorXd ub = b.step(xb, std::nullopt, &db);
    // Both differ only by the least-squares fit of 100 noisy samples.
    if (k > 0) {
      EXPECT_NEAR(db.w_prev[0], w[0], 0.05);
    }
    EXPECT_NEAR(ua[0], ub[0], 0.05);
    w = v1(nd(rng));
    xa = 2 * xa + ua + w;
    xb = 2 * xb + ub + w;
  }
}

TEST(ControllerTest, DiagnosticsJson) {
  Controller ctl(scalar_config(6));
  StepDiagnostics d;
  ctl.step(v1(0.4), std::nullopt, &d);
  const nlohmann::json j = to_json(d);
  for (const char* key : {"k", "path", "q", "V_N", "J_tilde", "slack_inf", "u", "x", "status_measured"})
    EXPECT_TRUE(j.contains(key)) << key;
  EXPECT_EQ(j["path"], "measured");
  EXPECT_TRUE(j["J_tilde"].is_null());
  EXPECT_TRUE(j["status_backup"].is_null());
}

}  // namespace
}  // namespace sdmpc
