#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include "inhom/gp.hpp"
#include "inhom/rng.hpp"
#include "support.hpp"

using namespace inhom;

namespace {

/// Conditional of the joint normal of (y_train, y_test) by explicit block inversion.
GpPrediction block_oracle(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const SqeKernel& k, double jitter,
                          const Eigen::VectorXd& xt) {
  const Eigen::Index n = x.rows();
  Eigen::MatrixXd all(n + 1, x.cols());
  all.topRows(n) = x;
  all.row(n) = xt.transpose();
  Eigen::MatrixXd joint(n + 1, n + 1);
  for (Eigen::Index i = 0; i <= n; ++i)
    for (Eigen::Index j = 0; j <= n; ++j) {
      double s = 0.0;
      for (Eigen::Index m = 0; m < x.cols(); ++m) s += std::pow(all(i, m) - all(j, m), 2) / k.lengthscales(m);
      joint(i, j) = std::exp(-s) + (i == j ? jitter : 0.0);
    }
  const Eigen::MatrixXd inv = joint.topLeftCorner(n, n).inverse();
  const Eigen::VectorXd c = joint.block(0, n, n, 1);
  return {c.dot(inv * y), joint(n, n) - c.dot(inv * c)};
}

double dense_loglik(const Eigen::MatrixXd& s, const Eigen::VectorXd& y) {
  const Eigen::FullPivLU<Eigen::MatrixXd> lu(s);
  return -0.5 * (y.size() * std::log(2.0 * std::numbers::pi) + std::log(lu.determinant()) + y.dot(s.inverse() * y));
}

}  // namespace

TEST(SqeCorr, Basics) {
  const SqeKernel k{1.0};
  EXPECT_EQ(sqe_corr(Eigen::VectorXd::Constant(1, 0.3), Eigen::VectorXd::Constant(1, 0.3), k), 1.0);
  EXPECT_NEAR(sqe_corr(Eigen::VectorXd::Constant(1, 0.0), Eigen::VectorXd::Constant(1, 1.0), k), std::exp(-1.0), 1e-16);
  EXPECT_THROW((void)sqe_corr(Eigen::Vector2d(0, 0), Eigen::Vector2d(1, 1), k), DataError);
  EXPECT_THROW((void)sqe_corr(Eigen::VectorXd::Constant(1, NAN), Eigen::VectorXd::Constant(1, 1.0), k), DataError);
  EXPECT_THROW((void)SqeKernel({0.0}), DataError);
}

TEST(SqeCorr, Symmetry) {
  Rng rng(derive_seed(6, "sqe"));
  const SqeKernel k{0.3, 2.0, 7.0};
  for (int rep = 0; rep < 200; ++rep) {
    const Eigen::VectorXd a = testkit::random_matrix(3, 1, rng, -3, 3);
    const Eigen::VectorXd b = testkit::random_matrix(3, 1, rng, -3, 3);
    EXPECT_EQ(sqe_corr(a, b, k), sqe_corr(b, a, k));
    const double v = sqe_corr(a, b, k);
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(CorrMatrix, SmallCases) {
  const auto one = corr_matrix(Eigen::MatrixXd::Constant(1, 1, 4.0), SqeKernel{1.0}, 1e-8);
  EXPECT_DOUBLE_EQ(one.entries(0, 0), 1.0 + 1e-8);

  Eigen::MatrixXd twins(2, 1);
  twins << 0.5, 0.5;
  EXPECT_THROW((void)factorize(corr_matrix(twins, SqeKernel{1.0}, 0.0)), NumericalError);
  EXPECT_NO_THROW((void)factorize(corr_matrix(twins, SqeKernel{1.0}, 1e-8)));
}

TEST(CorrMatrix, TetouanSizedCount) {
  Rng rng(derive_seed(7, "cm"));
  const Eigen::MatrixXd x = testkit::random_matrix(200, 4, rng, 0, 30);
  const auto c = corr_matrix(x, SqeKernel{0.1, 8.45, 0.02, 0.015}, 1e-8);
  std::size_t off = 0;
  for (Eigen::Index j = 0; j < 200; ++j)
    for (Eigen::Index i = j + 1; i < 200; ++i) {
      ++off;
      EXPECT_EQ(c.entries(i, j), c.entries(j, i));
    }
  EXPECT_EQ(off, 19900u);
}

TEST(CorrMatrix, PermutationEquivariance) {
  Rng rng(derive_seed(8, "perm"));
  const Eigen::MatrixXd x = testkit::random_matrix(12, 2, rng);
  const SqeKernel k{0.4, 1.3};
  Eigen::VectorXi idx = Eigen::VectorXi::LinSpaced(12, 0, 11);
  std::shuffle(idx.data(), idx.data() + 12, rng);
  const Eigen::PermutationMatrix<Eigen::Dynamic> p(idx);
  const Eigen::MatrixXd xp = p * x;
  const auto a = corr_matrix(x, k, 1e-8).entries;
  const auto b = corr_matrix(xp, k, 1e-8).entries;
  EXPECT_LT((Eigen::MatrixXd(p * a * p.transpose()) - b).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(CorrMatrix, LadderEscalates) {
  Eigen::MatrixXd x(3, 1);
  x << 0.0, 0.0, 0.0;
  const auto f = factorize_with_ladder(x, SqeKernel{1.0});
  EXPECT_GE(f.jitter, 1e-8);
  EXPECT_LE(f.jitter, 1e-4);
  Eigen::MatrixXd bad = Eigen::MatrixXd::Ones(2, 2);
  bad(0, 1) = bad(1, 0) = 2.0;
  EXPECT_THROW((void)factorize_with_ladder(bad), NumericalError);
}

TEST(LogLikelihood, Examples) {
  const CholeskyFactor unit = factorize(CorrMatrix{Eigen::MatrixXd::Identity(1, 1), 0.0});
  EXPECT_NEAR(log_likelihood(unit, Eigen::VectorXd::Zero(1)), -0.9189385332046727, 1e-15);

  const Eigen::VectorXd y = Eigen::Vector4d(0.3, -1.0, 2.0, 0.0);
  const CholeskyFactor id = factorize(CorrMatrix{Eigen::MatrixXd::Identity(4, 4), 0.0});
  EXPECT_NEAR(log_likelihood(id, y), -2.0 * std::log(2.0 * std::numbers::pi) - 0.5 * y.squaredNorm(), 1e-14);

  Eigen::Matrix2d s;
  s << 1.0, 0.5, 0.5, 1.0;
  // closed-form bivariate normal at (1, 1)
  EXPECT_NEAR(log_likelihood(factorize(CorrMatrix{s, 0.0}), Eigen::Vector2d(1, 1)), -2.3607026968501215, 1e-12);
  EXPECT_THROW((void)log_likelihood(id, Eigen::Vector2d(1, 1)), DataError);
}

TEST(LogLikelihood, MatchesDenseEvaluation) {
  Rng rng(derive_seed(9, "ll"));
  std::uniform_int_distribution<int> size(1, 50);
  std::uniform_real_distribution<double> ls(0.05, 2.0);
  for (int rep = 0; rep < 60; ++rep) {
    const int n = size(rng);
    const Eigen::MatrixXd x = testkit::random_matrix(n, 2, rng, 0, 3);
    const Eigen::VectorXd y = testkit::random_matrix(n, 1, rng, -2, 2);
    const SqeKernel k{ls(rng), ls(rng)};
    const auto cm = corr_matrix(x, k, 1e-3);
    EXPECT_NEAR(log_likelihood(factorize(cm), y), dense_loglik(cm.entries, y), 1e-8) << "n=" << n;
  }
}

TEST(GpPredict, MatchesBlockConditioning) {
  Rng rng(derive_seed(10, "pred"));
  std::uniform_int_distribution<int> size(1, 8);
  std::uniform_real_distribution<double> ls(0.2, 3.0);
  for (int rep = 0; rep < 200; ++rep) {
    const int n = size(rng);
    const Eigen::MatrixXd x = testkit::random_matrix(n, 2, rng, 0, 4);
    const Eigen::VectorXd y = testkit::random_matrix(n, 1, rng, -2, 2);
    const Eigen::VectorXd xt = testkit::random_matrix(2, 1, rng, 0, 4);
    const SqeKernel k{ls(rng), ls(rng)};
    const auto p = gp_predict(x, y, k, 1e-6, xt);
    const auto o = block_oracle(x, y, k, 1e-6, xt);
    EXPECT_NEAR(p.mean, o.mean, 1e-10);
    EXPECT_NEAR(p.variance, std::max(o.variance, 0.0), 1e-10);
    EXPECT_LE(p.variance, 1.0 + 1e-6);
  }
}

TEST(GpPredict, InterpolatesAndRevertsToPrior) {
  Eigen::MatrixXd x(3, 1);
  x << 0.0, 1.0, 2.5;
  const Eigen::VectorXd y = Eigen::Vector3d(0.4, -1.2, 0.9);
  const SqeKernel k{0.5};
  for (int i = 0; i < 3; ++i) {
    const auto p = gp_predict(x, y, k, 0.0, x.row(i).transpose());
    EXPECT_NEAR(p.mean, y(i), 1e-12);
    EXPECT_NEAR(p.variance, 0.0, 1e-12);
  }
  const auto far = gp_predict(x, y, k, 1e-8, Eigen::VectorXd::Constant(1, 100.0));
  EXPECT_NEAR(far.mean, 0.0, 1e-12);
  EXPECT_NEAR(far.variance, 1.0 + 1e-8, 1e-12);
}

TEST(GpPredict, UnstandardizesWithScale) {
  Eigen::MatrixXd x(2, 1);
  x << 0.0, 1.0;
  const Eigen::VectorXd y = Eigen::Vector2d(1.0, -1.0);
  const Eigen::VectorXd xt = Eigen::VectorXd::Constant(1, 0.4);
  const auto z = gp_predict(x, y, SqeKernel{1.0}, 1e-8, xt);
  const auto u = gp_predict(x, y, SqeKernel{1.0}, 1e-8, xt, OutputScale{10.0, 3.0});
  EXPECT_NEAR(u.mean, 10.0 + 3.0 * z.mean, 1e-12);
  EXPECT_NEAR(u.variance, 9.0 * z.variance, 1e-12);
}
