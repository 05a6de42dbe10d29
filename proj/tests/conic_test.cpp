#include "sdmpc/conic.hpp"

#include <cstdlib>
#include <random>

#include <gtest/gtest.h>

namespace sdmpc::conic {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

SparseRowMatrix sparse(const MatrixXd& m) { return m.sparseView(); }

TEST(SvecTest, RoundTripAndInnerProduct) {
  MatrixXd a(3, 3), b(3, 3);
  a << 2, 1, 0, 1, 3, -1, 0, -1, 4;
  b << 1, 0.5, 2, 0.5, -1, 0, 2, 0, 3;
  EXPECT_TRUE(smat(svec(a), 3).isApprox(a));
  EXPECT_NEAR(svec(a).dot(svec(b)), (a * b).trace(), 1e-12);
  EXPECT_EQ(svec_index(2, 1, 3), 4);
  EXPECT_EQ(svec_size(4), 10);
}

TEST(ConicSolveTest, LinearProgram) {
  // max x1 + x2 s.t. x1 + 2x2 <= 4, 3x1 + x2 <= 6, x >= 0
  Problem pr;
  pr.q = VectorXd::Constant(2, -1.0);
  MatrixXd g(4, 2);
  g << 1, 2, 3, 1, -1, 0, 0, -1;
  pr.G = sparse(g);
  pr.h = (VectorXd(4) << 4, 6, 0, 0).finished();
  pr.cones.nonneg = 4;
  const Result r = solve(pr);
  ASSERT_EQ(r.status, Status::kOptimal);
  EXPECT_NEAR(r.x(0), 1.6, 1e-7);
  EXPECT_NEAR(r.x(1), 1.2, 1e-7);
  EXPECT_NEAR(r.primal_objective, -2.8, 1e-7);
}

TEST(ConicSolveTest, EqualityConstrainedQuadratic) {
  Problem pr;
  pr.P = MatrixXd::Identity(2, 2);
  pr.q = VectorXd::Zero(2);
  pr.A = sparse(MatrixXd::Ones(1, 2));
  pr.b = VectorXd::Ones(1);
  pr.h.resize(0);
  const Result r = solve(pr);
  ASSERT_EQ(r.status, Status::kOptimal);
  EXPECT_NEAR(r.x(0), 0.5, 1e-9);
  EXPECT_NEAR(r.x(1), 0.5, 1e-9);
  EXPECT_NEAR(r.y(0), -0.5, 1e-8);
}

TEST(ConicSolveTest, SecondOrderConeDistanceToHyperplane) {
  // min t s.t. ||x - c|| <= t, x1 + x2 = 1 with c = (1, 2); optimum sqrt(2).
  Problem pr;
  pr.q = (VectorXd(3) << 1, 0, 0).finished();
  pr.A = sparse((MatrixXd(1, 3) << 0, 1, 1).finished());
  pr.b = VectorXd::Ones(1);
  pr.G = sparse(-MatrixXd::Identity(3, 3));
  pr.h = (VectorXd(3) << 0, -1, -2).finished();
  pr.cones.soc = {3};
  const Result r = solve(pr);
  ASSERT_EQ(r.status, Status::kOptimal);
  EXPECT_NEAR(r.x(0), std::sqrt(2.0), 1e-7);
  EXPECT_NEAR(r.x(1), 0.0, 1e-6);
  EXPECT_NEAR(r.x(2), 1.0, 1e-6);
}

TEST(ConicSolveTest, SemidefiniteMinimumEigenvalue) {
  // min tr(C X) s.t. tr X = 1, X ⪰ 0 equals λ_min(C).
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  const int p = 4;
  MatrixXd c = MatrixXd::NullaryExpr(p, p, [&] { return nd(rng); });
  c = 0.5 * (c + c.transpose());
  const int nv = svec_size(p);
  Problem pr;
  pr.q = svec(c);
  pr.A = sparse(svec(MatrixXd::Identity(p, p)).transpose());
  pr.b = VectorXd::Ones(1);
  pr.G = sparse(-MatrixXd::Identity(nv, nv));
  pr.h = VectorXd::Zero(nv);
  pr.cones.psd = {p};
  const Result r = solve(pr);
  ASSERT_EQ(r.status, Status::kOptimal);
  const double lmin = Eigen::SelfAdjointEigenSolver<MatrixXd>(c).eigenvalues()(0);
  EXPECT_NEAR(r.primal_objective, lmin, 1e-7);
}

TEST(ConicSolveTest, DetectsPrimalInfeasibility) {
  // x >= 1 and x <= 0
  Problem pr;
  pr.q = VectorXd::Ones(1);
  pr.G = sparse((MatrixXd(2, 1) << -1, 1).finished());
  pr.h = (VectorXd(2) << -1, 0).finished();
  pr.cones.nonneg = 2;
  EXPECT_EQ(solve(pr).status, Status::kPrimalInfeasible);
}

TEST(ConicSolveTest, DetectsDualInfeasibility) {
  // min -x s.t. x >= 0
  Problem pr;
  pr.q = -VectorXd::Ones(1);
  pr.G = sparse(-MatrixXd::Identity(1, 1));
  pr.h = VectorXd::Zero(1);
  pr.cones.nonneg = 1;
  EXPECT_EQ(solve(pr).status, Status::kDualInfeasible);
}

TEST(ConicSolveTest, SecondOrderConeInfeasible) {
  // ||x|| <= 1 and x1 >= 2
  Problem pr;
  pr.q = VectorXd::Zero(2);
  MatrixXd g(4, 2);
  g << 0, 0, -1, 0, 0, -1, -1, 0;
  pr.G = sparse(g);
  pr.h = (VectorXd(4) << 1, 0, 0, -2).finished();
  pr.cones.nonneg = 0;
  // cone order: nonneg first, so place the linear row as a one-dimensional SOC
  pr.cones.soc = {3, 1};
  EXPECT_EQ(solve(pr).status, Status::kPrimalInfeasible);
}

// Random feasible, bounded instances mixing all cone types; the optimum is
// certified through the KKT conditions rather than a reference solver.
class RandomConicTest : public ::testing::TestWithParam<int> {};

bool in_cone(const ConeDims& dims, const VectorXd& v, double tol) {
  int off = 0;
  for (int i = 0; i < dims.nonneg; ++i) {
    if (v(off++) < -tol) return false;
  }
  for (int d : dims.soc) {
    if (v(off) + tol < v.segment(off + 1, d - 1).norm()) return false;
    off += d;
  }
  for (int p : dims.psd) {
    const MatrixXd m = smat(v.segment(off, svec_size(p)), p);
    if (Eigen::SelfAdjointEigenSolver<MatrixXd>(m).eigenvalues()(0) < -tol) return false;
    off += svec_size(p);
  }
  return true;
}

TEST_P(RandomConicTest, KktConditionsHold) {
  std::mt19937_64 rng(100 + GetParam());
  std::normal_distribution<double> nd;
  std::uniform_int_distribution<int> ud(2, 6);
  const int n = ud(rng) + 2;
  ConeDims dims;
  dims.nonneg = ud(rng);
  dims.soc = {ud(rng), ud(rng)};
  dims.psd = {ud(rng) - 1};
  const int m = dims.rows();
  // Interior primal slack s0 = e and a strictly feasible x0 make the instance feasible;
  // a positive definite P keeps it bounded.
  MatrixXd g = MatrixXd::NullaryExpr(m, n, [&] { return nd(rng); });
  VectorXd x0 = VectorXd::NullaryExpr(n, [&] { return nd(rng); });
  VectorXd e(m);
  int off = 0;
  e.head(dims.nonneg).setOnes();
  off = dims.nonneg;
  for (int d : dims.soc) {
    e.segment(off, d).setZero();
    e(off) = 1.0;
    off += d;
  }
  for (int p : dims.psd) {
    e.segment(off, svec_size(p)) = svec(MatrixXd::Identity(p, p));
    off += svec_size(p);
  }
  MatrixXd lp = MatrixXd::NullaryExpr(n, n, [&] { return nd(rng); });
  Problem pr;
  pr.P = lp * lp.transpose() + 0.1 * MatrixXd::Identity(n, n);
  pr.q = VectorXd::NullaryExpr(n, [&] { return 5.0 * nd(rng); });
  pr.G = sparse(g);
  pr.h = g * x0 + e;
  pr.cones = dims;
  MatrixXd a = MatrixXd::NullaryExpr(1, n, [&] { return nd(rng); });
  pr.A = sparse(a);
  pr.b = a * x0;

  Settings st;
  st.verbose = std::getenv("CONIC_VERBOSE") != nullptr;
  const Result r = solve(pr, st);
  ASSERT_EQ(r.status, Status::kOptimal);
  const VectorXd grad = pr.P * r.x + pr.q + a.transpose() * r.y + g.transpose() * r.z;
  EXPECT_LT(grad.cwiseAbs().maxCoeff(), 1e-6 * (1 + pr.q.norm()));
  EXPECT_LT((g * r.x + r.s - pr.h).cwiseAbs().maxCoeff(), 1e-7);
  EXPECT_LT((a * r.x - pr.b).cwiseAbs().maxCoeff(), 1e-7);
  EXPECT_TRUE(in_cone(dims, r.s, 1e-9));
  EXPECT_TRUE(in_cone(dims, r.z, 1e-9));
  EXPECT_LT(std::abs(r.s.dot(r.z)), 1e-6 * (1 + std::abs(r.primal_objective)));
}

INSTANTIATE_TEST_SUITE_P(Instances, RandomConicTest, ::testing::Range(0, 60));

}  // namespace
}  // namespace sdmpc::conic
