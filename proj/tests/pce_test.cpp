#include "sdmpc/pce.hpp"

#include <cmath>
#include <random>

#include <gtest/gtest.h>

namespace sdmpc {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Hand-written reference polynomials.
double he_ref(int d, double x) {
  switch (d) {
    case 0: return 1;
    case 1: return x;
    case 2: return x * x - 1;
    case 3: return x * x * x - 3 * x;
    case 4: return x * x * x * x - 6 * x * x + 3;
  }
  return NAN;
}

double p_ref(int d, double x) {
  switch (d) {
    case 0: return 1;
    case 1: return x;
    case 2: return 0.5 * (3 * x * x - 1);
    case 3: return 0.5 * (5 * x * x * x - 3 * x);
    case 4: return (35 * std::pow(x, 4) - 30 * x * x + 3) / 8;
  }
  return NAN;
}

TEST(PolyTest, MatchesClosedForms) {
  for (int d = 0; d <= 4; ++d) {
    for (double x : {-1.0, -0.3, 0.0, 0.7, 2.5}) {
      EXPECT_NEAR(hermite(d, x), he_ref(d, x), 1e-12);
      EXPECT_NEAR(legendre(d, x), p_ref(d, x), 1e-12);
    }
  }
  EXPECT_DOUBLE_EQ(poly_norm({PolyKind::kHermite, 3, 0, 0}), 6.0);
  EXPECT_DOUBLE_EQ(poly_norm({PolyKind::kLegendre, 2, 0, 0}), 0.2);
  EXPECT_DOUBLE_EQ(poly_norm({}), 1.0);
}

TEST(MakeBasisTest, Sizes) {
  EXPECT_EQ(make_basis(1, 2, 25, std::vector<int>{}, 0).size(), 26);
  const PceBasis b = make_basis(1, 2, 1, std::vector<int>{}, 0);
  ASSERT_EQ(b.size(), 2);
  EXPECT_EQ(b[0].kind, PolyKind::kConstant);
  EXPECT_EQ(b[1].kind, PolyKind::kHermite);
  EXPECT_EQ(b[1].time_tag, 0);
  EXPECT_EQ(make_basis(3, 3, 2, std::vector<int>{-1}, 0).size(), 7);
}

TEST(MakeBasisTest, OrderingAndNorms) {
  const PceBasis b = make_basis(3, 3, 2, std::vector<int>{-1}, 5, PolyKind::kLegendre);
  EXPECT_EQ(b[1].time_tag, -1);
  EXPECT_EQ(b[2].time_tag, -1);
  EXPECT_EQ(b[3].time_tag, 5);
  EXPECT_EQ(b[4].time_tag, 5);
  EXPECT_EQ(b[5].time_tag, 6);
  EXPECT_EQ(b[4].germ, 1);
  EXPECT_EQ(b.w_block_start(1), 5);
  EXPECT_DOUBLE_EQ(b.norms()[0], 1.0);
  for (int j = 1; j < b.size(); ++j) EXPECT_DOUBLE_EQ(b.norms()[j], 1.0 / 3.0);
}

TEST(MakeBasisTest, RejectsInvalidSizes) {
  EXPECT_THROW(make_basis(0, 2, 1, std::vector<int>{}, 0), std::invalid_argument);
  EXPECT_THROW(make_basis(1, 1, 1, std::vector<int>{}, 0), std::invalid_argument);
  EXPECT_THROW(make_basis(1, 2, 0, std::vector<int>{}, 0), std::invalid_argument);
  EXPECT_THROW(make_basis(2, 2, 1, std::vector<int>{}, 0), std::invalid_argument);
}

TEST(MakeBasisTest, ArithmeticProperty) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> tags(0, 4), lwd(2, 5), nd(1, 30);
  for (int trial = 0; trial < 200; ++trial) {
    const int lw = lwd(rng), n = nd(rng), nt = tags(rng);
    std::vector<int> xt;
    for (int t = 0; t < nt; ++t) xt.push_back(-1 - t);
    const int lx = 1 + nt * (lw - 1);
    const PceBasis b = make_basis(lx, lw, n, xt, 0);
    EXPECT_EQ(b.size(), lx + n * (lw - 1));
    EXPECT_TRUE((b.norms().array() > 0).all());
  }
}

TEST(MomentsTest, Examples) {
  const PceBasis h = make_basis(1, 2, 1, std::vector<int>{}, 0);
  MatrixXd z(1, 2);
  z << 1, 2;
  Moments m = moments(z, h);
  EXPECT_DOUBLE_EQ(m.mean[0], 1.0);
  EXPECT_DOUBLE_EQ(m.covariance(0, 0), 4.0);

  const PceBasis p = make_basis(1, 2, 1, std::vector<int>{}, 0, PolyKind::kLegendre);
  z << 0, 0.173;
  m = moments(z, p);
  EXPECT_NEAR(m.covariance(0, 0), 0.173 * 0.173 / 3.0, 1e-15);
  EXPECT_NEAR(m.covariance(0, 0), 0.00998, 1e-5);

  z << 3, 0;
  EXPECT_DOUBLE_EQ(moments(z, h).covariance(0, 0), 0.0);

  EXPECT_THROW(moments(MatrixXd::Ones(1, 3), h), std::invalid_argument);
}

TEST(CausalityTest, Examples) {
  EXPECT_EQ(causality_zero_indices(0, 1, 2, 4), (std::vector<int>{1, 2, 3}));
  EXPECT_EQ(causality_zero_indices(1, 1, 2, 4), (std::vector<int>{2, 3}));
  EXPECT_EQ(causality_zero_indices(2, 1, 2, 4), (std::vector<int>{3}));
  EXPECT_EQ(causality_zero_indices(1, 3, 3, 7), (std::vector<int>{5, 6}));
}

TEST(DisturbanceModelTest, Encodings) {
  MatrixXd sigma(2, 2);
  sigma << 0.04, 0.01, 0.01, 0.09;
  const DisturbanceModel g = DisturbanceModel::gaussian(sigma);
  EXPECT_EQ(g.lw(), 3);
  EXPECT_TRUE(g.pce_coeffs().col(0).isZero(0.0));
  EXPECT_LT((g.covariance_from_pce() - sigma).cwiseAbs().maxCoeff(), 1e-12);

  const DisturbanceModel u = DisturbanceModel::uniform(VectorXd::Constant(1, 0.173));
  EXPECT_TRUE(u.pce_coeffs().col(0).isZero(0.0));
  EXPECT_DOUBLE_EQ(u.pce_coeffs()(0, 1), 0.173);
  EXPECT_LT(std::abs(u.covariance_from_pce()(0, 0) - 0.173 * 0.173 / 3), 1e-12);

  const DisturbanceModel d = DisturbanceModel::gaussian_diagonal(VectorXd::Constant(1, 0.1));
  EXPECT_NEAR(d.covariance_from_pce()(0, 0), 0.01, 1e-12);

  // A singular covariance is still encodable.
  MatrixXd rank1 = VectorXd::Ones(3) * VectorXd::Ones(3).transpose();
  EXPECT_LT((DisturbanceModel::gaussian(rank1).covariance_from_pce() - rank1).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(DisturbanceModelTest, FitGermInvertsRealize) {
  MatrixXd sigma(2, 2);
  sigma << 1.0, 0.3, 0.3, 0.5;
  const DisturbanceModel g = DisturbanceModel::gaussian(sigma);
  std::mt19937_64 rng(3);
  for (int i = 0; i < 20; ++i) {
    const VectorXd xi = g.sample_germ(rng);
    EXPECT_LT((g.fit_germ(g.realize(xi)) - xi).norm(), 1e-12);
  }
}

TEST(DisturbanceModelTest, SampleCovariance) {
  MatrixXd sigma(2, 2);
  sigma << 0.04, 0.01, 0.01, 0.09;
  const DisturbanceModel g = DisturbanceModel::gaussian(sigma);
  std::mt19937_64 rng(5);
  const int n = 200000;
  MatrixXd acc = MatrixXd::Zero(2, 2);
  for (int i = 0; i < n; ++i) {
    const VectorXd w = g.realize(g.sample_germ(rng));
    acc += w * w.transpose();
  }
  acc /= n;
  EXPECT_LT((acc - sigma).cwiseAbs().maxCoeff(), 0.02 * sigma.maxCoeff());
}

TEST(GalerkinTest, ExampleOne) {
  // A = B = 1, x0 = 1 + φ_x, u_k = -0.5 x_k, w_k = φ_k.
  const PceBasis b = make_basis(2, 2, 2, std::vector<int>{-1}, 0);
  const DisturbanceModel w = DisturbanceModel::gaussian_diagonal(VectorXd::Ones(1));
  MatrixXd A = MatrixXd::Ones(1, 1), B = MatrixXd::Ones(1, 1), K = MatrixXd::Constant(1, 1, -0.5);
  PceVector x0(1, 4);
  x0 << 1, 1, 0, 0;
  const auto xs = galerkin_propagate(A, B, x0, K, w, 2);
  ASSERT_EQ(xs.size(), 3u);
  PceVector x1(1, 4), x2(1, 4);
  x1 << 0.5, 0.5, 1, 0;
  x2 << 0.25, 0.25, 0.5, 1;
  EXPECT_LT((xs[1] - x1).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT((xs[2] - x2).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_EQ(b.size(), xs[2].cols());

  // Open-loop overload with the same inputs written out.
  std::vector<PceVector> u{-0.5 * x0, -0.5 * x1};
  const auto ys = galerkin_propagate(A, B, x0, u, w, 2);
  EXPECT_LT((ys[2] - x2).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(GalerkinTest, DeterministicZeroInput) {
  MatrixXd A(2, 2);
  A << 0.9, 0.2, -0.1, 1.1;
  const MatrixXd B = MatrixXd::Zero(2, 1);
  const DisturbanceModel w = DisturbanceModel::uniform(VectorXd::Zero(2));
  const int n = 4;
  PceVector x0 = PceVector::Zero(2, 1 + n * 2);
  x0.col(0) << 1, -2;
  std::vector<PceVector> u(n, PceVector::Zero(1, x0.cols()));
  const auto xs = galerkin_propagate(A, B, x0, u, w, n);
  VectorXd ref = x0.col(0);
  for (int k = 1; k <= n; ++k) {
    ref = A * ref;
    EXPECT_LT((xs[k].col(0) - ref).norm(), 1e-12);
    EXPECT_TRUE(xs[k].rightCols(x0.cols() - 1).isZero(0.0));
  }
}

TEST(GalerkinTest, DimensionMismatchThrows) {
  const DisturbanceModel w = DisturbanceModel::gaussian_diagonal(VectorXd::Ones(1));
  MatrixXd A = MatrixXd::Ones(1, 1), B = MatrixXd::Ones(1, 1);
  EXPECT_THROW(galerkin_propagate(A, B, PceVector::Zero(2, 3), MatrixXd::Zero(1, 1), w, 2), std::invalid_argument);
  EXPECT_THROW(galerkin_propagate(A, B, PceVector::Zero(1, 2), MatrixXd::Zero(1, 1), w, 2), std::invalid_argument);
  EXPECT_THROW(galerkin_propagate(A, B, PceVector::Zero(1, 3), std::vector<PceVector>(1), w, 2), std::invalid_argument);
}

// Step-N moments against a Monte-Carlo simulation of x+ = A x + B K x + w.
TEST(GalerkinTest, MatchesMonteCarloMoments) {
  MatrixXd A(2, 2), B(2, 1), K(1, 2), sigma(2, 2);
  A << 1.0, 0.1, 0.0, 1.0;
  B << 0.0, 0.1;
  K << -2.0, -3.0;
  sigma << 0.02, 0.005, 0.005, 0.01;
  const int n = 6;
  const DisturbanceModel w = DisturbanceModel::gaussian(sigma);
  const PceBasis basis = make_basis(1, 3, n, std::vector<int>{}, 0);
  PceVector x0 = PceVector::Zero(2, basis.size());
  x0.col(0) << 1.0, -0.5;
  const Moments gal = moments(galerkin_propagate(A, B, x0, K, w, n).back(), basis);

  std::mt19937_64 rng(17);
  std::normal_distribution<double> nd;
  const MatrixXd chol = sigma.llt().matrixL();
  const int samples = 100000;
  VectorXd mean = VectorXd::Zero(2);
  MatrixXd second = MatrixXd::Zero(2, 2);
  for (int s = 0; s < samples; ++s) {
    VectorXd x = x0.col(0);
    for (int k = 0; k < n; ++k) {
      VectorXd e(2);
      e << nd(rng), nd(rng);
      x = A * x + B * (K * x) + chol * e;
    }
    mean += x;
    second += x * x.transpose();
  }
  mean /= samples;
  const MatrixXd cov = second / samples - mean * mean.transpose();
  for (int i = 0; i < 2; ++i) {
    EXPECT_LT(std::abs(mean[i] - gal.mean[i]), 0.02 * std::abs(gal.mean[i]) + 3 * std::sqrt(gal.covariance(i, i) / samples));
    EXPECT_LT(std::abs(cov(i, i) - gal.covariance(i, i)), 0.02 * gal.covariance(i, i));
  }
}

// Σ_j x_k^j φ^j(ξ) reproduces the realization trajectory for every germ draw.
TEST(GalerkinTest, RealizationProperty) {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> ud(-1.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const int nx = 1 + trial % 3, nu = 1 + trial % 2, n = 2 + trial % 5;
    MatrixXd A = MatrixXd::NullaryExpr(nx, nx, [&] { return ud(rng); });
    MatrixXd B = MatrixXd::NullaryExpr(nx, nu, [&] { return ud(rng); });
    MatrixXd K = MatrixXd::NullaryExpr(nu, nx, [&] { return 0.5 * ud(rng); });
    VectorXd hw = VectorXd::NullaryExpr(nx, [&] { return 0.1 + std::abs(ud(rng)); });
    const DisturbanceModel w = (trial % 2) ? DisturbanceModel::uniform(hw) : DisturbanceModel::gaussian_diagonal(hw);
    // Random initial state with its own germ (tag -1).
    const PceBasis basis = make_basis(1 + (w.lw() - 1), w.lw(), n, std::vector<int>{-1}, 0, w.poly_kind());
    PceVector x0 = PceVector::NullaryExpr(nx, basis.size(), [&] { return ud(rng); });
    x0.rightCols(basis.size() - basis.lx()).setZero();
    const auto xs = galerkin_propagate(A, B, x0, K, w, n);

    std::map<int, VectorXd> germs;
    germs[-1] = w.sample_germ(rng);
    for (int k = 0; k < n; ++k) germs[k] = w.sample_germ(rng);
    const VectorXd phi = eval_basis_at(basis, germs);
    VectorXd x = x0 * phi;
    for (int k = 0; k < n; ++k) {
      x = A * x + B * (K * x) + w.realize(germs[k]);
      EXPECT_LT((xs[k + 1] * phi - x).norm(), 1e-10 * (1 + x.norm()));
    }
  }
}

// Inputs obeying the causality pattern give states with zeros in
// {L_x + k(L_w-1), ..., L-1} at step k.
TEST(GalerkinTest, CausalityClosureProperty) {
  std::mt19937_64 rng(29);
  std::uniform_real_distribution<double> ud(-1.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const int nx = 1 + trial % 3, nu = 1 + trial % 2, n = 1 + trial % 6;
    const DisturbanceModel w = DisturbanceModel::gaussian_diagonal(VectorXd::Ones(nx));
    const int lw = w.lw(), lx = 1, L = lx + n * (lw - 1);
    MatrixXd A = MatrixXd::NullaryExpr(nx, nx, [&] { return ud(rng); });
    MatrixXd B = MatrixXd::NullaryExpr(nx, nu, [&] { return ud(rng); });
    PceVector x0 = PceVector::Zero(nx, L);
    x0.col(0) = VectorXd::NullaryExpr(nx, [&] { return ud(rng); });
    std::vector<PceVector> u;
    for (int k = 0; k < n; ++k) {
      PceVector uk = PceVector::NullaryExpr(nu, L, [&] { return ud(rng); });
      for (int j : causality_zero_indices(k, lx, lw, L)) uk.col(j).setZero();
      u.push_back(uk);
    }
    const auto xs = galerkin_propagate(A, B, x0, u, w, n);
    for (int k = 0; k <= n; ++k)
      for (int j : causality_zero_indices(k, lx, lw, L)) EXPECT_TRUE(xs[k].col(j).isZero(0.0)) << k << " " << j;
  }
}

TEST(GrowBasisTest, Examples) {
  const PceBasis b = make_basis(1, 2, 25, std::vector<int>{}, 0);
  const PceBasis g = grow_basis_for_backup(b, 25);
  EXPECT_EQ(g.size(), 27);
  EXPECT_EQ(g.lx(), 2);
  for (int j = 0; j < b.size(); ++j) EXPECT_EQ(g[j], b[j]);
  EXPECT_EQ(g[26].time_tag, 25);
  EXPECT_THROW(grow_basis_for_backup(g, 3), std::invalid_argument);

  // q consecutive growths.
  for (int lw : {2, 3}) {
    PceBasis c = make_basis(1, lw, 25, std::vector<int>{}, 0);
    for (int q = 1; q <= 6; ++q) {
      c = grow_basis_for_backup(c, 24 + q);
      EXPECT_EQ(c.size(), 1 + (25 + q) * (lw - 1));
      EXPECT_EQ(c.lx(), 1 + q * (lw - 1));
    }
  }
}

TEST(GrowBasisTest, ZeroPaddingKeepsMoments) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> ud(-1.0, 1.0);
  const PceBasis b = make_basis(1, 3, 4, std::vector<int>{}, 0);
  const PceBasis g = grow_basis_for_backup(b, 4);
  PceVector z = PceVector::NullaryExpr(2, b.size(), [&] { return ud(rng); });
  PceVector zp = PceVector::Zero(2, g.size());
  zp.leftCols(b.size()) = z;
  const Moments m1 = moments(z, b), m2 = moments(zp, g);
  EXPECT_LT((m1.mean - m2.mean).norm(), 1e-15);
  EXPECT_LT((m1.covariance - m2.covariance).norm(), 1e-15);
}

TEST(EvalBasisTest, Examples) {
  const PceBasis c(std::vector<PolyFamily>{PolyFamily{}}, 1, 2, 0);
  EXPECT_EQ(eval_basis_at(c, {}), VectorXd::Ones(1));

  const PceBasis h = make_basis(1, 2, 1, std::vector<int>{}, 0);
  const VectorXd v = eval_basis_at(h, {{0, VectorXd::Constant(1, 0.7)}});
  EXPECT_DOUBLE_EQ(v[1], 0.7);

  const PceBasis p({PolyFamily{}, PolyFamily{PolyKind::kLegendre, 2, 0, 0}}, 1, 2, 1);
  EXPECT_DOUBLE_EQ(eval_basis_at(p, {{0, VectorXd::Ones(1)}})[1], 1.0);

  EXPECT_THROW(eval_basis_at(h, {}), std::invalid_argument);
}

// Sampled Gram matrix of a mixed basis.
TEST(OrthogonalityTest, MonteCarloGram) {
  std::vector<PolyFamily> fns{PolyFamily{},
                              {PolyKind::kHermite, 1, -1, 0},
                              {PolyKind::kHermite, 2, -1, 0},
                              {PolyKind::kLegendre, 1, 0, 0},
                              {PolyKind::kLegendre, 2, 0, 0},
                              {PolyKind::kHermite, 1, 1, 0},
                              {PolyKind::kHermite, 1, 1, 1}};
  // Mixed families do not follow the block layout; only the Gram check uses it.
  const PceBasis basis(fns, 7, 2, 0);
  std::mt19937_64 rng(37);
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> ud(-1.0, 1.0);
  const int samples = 1000000;
  const int L = basis.size();
  MatrixXd gram = MatrixXd::Zero(L, L);
  std::map<int, VectorXd> germs{{-1, VectorXd(1)}, {0, VectorXd(1)}, {1, VectorXd(2)}};
  for (int s = 0; s < samples; ++s) {
    germs[-1][0] = nd(rng);
    germs[0][0] = ud(rng);
    germs[1][0] = nd(rng);
    germs[1][1] = nd(rng);
    const VectorXd phi = eval_basis_at(basis, germs);
    gram.selfadjointView<Eigen::Lower>().rankUpdate(phi);
  }
  gram = gram.selfadjointView<Eigen::Lower>();
  gram /= samples;
  const VectorXd& nrm = basis.norms();
  for (int i = 0; i < L; ++i) {
    EXPECT_NEAR(gram(i, i), nrm[i], 0.01 * nrm[i]) << i;
    for (int j = 0; j < i; ++j) EXPECT_LT(std::abs(gram(i, j)), 5e-3 * std::sqrt(nrm[i] * nrm[j])) << i << "," << j;
  }
}

TEST(MomentsTest, MonteCarloConsistency) {
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> ud(-1.0, 1.0);
  const DisturbanceModel w = DisturbanceModel::uniform(VectorXd::Ones(2));
  const PceBasis basis = make_basis(1, 3, 3, std::vector<int>{}, 0, PolyKind::kLegendre);
  const PceVector z = PceVector::NullaryExpr(2, basis.size(), [&] { return ud(rng); });
  const Moments m = moments(z, basis);
  const int samples = 200000;
  VectorXd mean = VectorXd::Zero(2);
  MatrixXd second = MatrixXd::Zero(2, 2);
  std::map<int, VectorXd> germs;
  for (int s = 0; s < samples; ++s) {
    for (int k = 0; k < 3; ++k) germs[k] = w.sample_germ(rng);
    const VectorXd v = z * eval_basis_at(basis, germs);
    mean += v;
    second += v * v.transpose();
  }
  mean /= samples;
  const MatrixXd cov = second / samples - mean * mean.transpose();
  const double scale = std::sqrt(m.covariance.diagonal().maxCoeff());
  EXPECT_LT((mean - m.mean).cwiseAbs().maxCoeff(), 5 * scale / std::sqrt(samples));
  EXPECT_LT((cov - m.covariance).cwiseAbs().maxCoeff(), 0.02 * m.covariance.diagonal().maxCoeff());
}

}  // namespace
}  // namespace sdmpc
