#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

#include "inhom/inference.hpp"
#include "inhom/rng.hpp"
#include "inhom/synth.hpp"

using namespace inhom;

namespace {

/// Monte-Carlo standard error of the mean by non-overlapping batch means.
double batch_mcse(const std::vector<double>& s, std::size_t batches = 50) {
  const std::size_t len = s.size() / batches;
  std::vector<double> means(batches);
  for (std::size_t b = 0; b < batches; ++b) {
    double sum = 0.0;
    for (std::size_t i = 0; i < len; ++i) sum += s[b * len + i];
    means[b] = sum / static_cast<double>(len);
  }
  double m = 0.0;
  for (double v : means) m += v;
  m /= static_cast<double>(batches);
  double var = 0.0;
  for (double v : means) var += (v - m) * (v - m);
  var /= static_cast<double>(batches - 1);
  return std::sqrt(var / static_cast<double>(batches));
}

/// Shortest window of k sorted samples found by trying every start.
Interval exhaustive_hpd(std::vector<double> s, double mass) {
  std::sort(s.begin(), s.end());
  const auto k = static_cast<std::size_t>(std::ceil(mass * static_cast<double>(s.size()) - 1e-9));
  Interval best{s.front(), s.back()};
  double width = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a + k <= s.size(); ++a) {
    const double w = s[a + k - 1] - s[a];
    if (w < width) {
      width = w;
      best = {s[a], s[a + k - 1]};
    }
  }
  return best;
}

Dataset small_gp(std::uint64_t seed, std::size_t n = 30, double spacing = 0.1) {
  SynthSpec spec = SynthSpec::defaults_for(SynthKind::StationaryGp);
  spec.n = n;
  spec.spacing = spacing;
  spec.rng_seed = seed;
  return sample_gp(spec);
}

}  // namespace

TEST(MhUpdate, ZeroProposalAlwaysAccepted) {
  Rng rng(1);
  Eigen::VectorXd cur = Eigen::Vector2d(0.5, 2.0);
  auto target = [](const Eigen::VectorXd& v) { return -v.squaredNorm(); };
  for (int i = 0; i < 20; ++i) {
    const auto s = mh_update(cur, target, Eigen::Vector2d::Zero(), rng);
    EXPECT_TRUE(s.accepted);
    EXPECT_EQ(s.state, cur);
  }
}

TEST(MhUpdate, MinusInfinityRejected) {
  Rng rng(2);
  Eigen::VectorXd cur = Eigen::VectorXd::Constant(1, 1.0);
  auto target = [](const Eigen::VectorXd& v) {
    return v(0) == 1.0 ? 0.0 : -std::numeric_limits<double>::infinity();
  };
  for (int i = 0; i < 50; ++i) EXPECT_FALSE(mh_update(cur, target, Eigen::VectorXd::Constant(1, 0.5), rng).accepted);
}

TEST(MhUpdate, PositiveSupportRejectsNonpositive) {
  Rng rng(3);
  Eigen::VectorXd cur = Eigen::VectorXd::Constant(1, 1e-3);
  auto target = [](const Eigen::VectorXd&) { return 0.0; };
  int accepted = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto s = mh_update(cur, target, Eigen::VectorXd::Constant(1, 1.0), rng, Support::Positive);
    EXPECT_GT(s.state(0), 0.0);
    accepted += s.accepted;
  }
  EXPECT_GT(accepted, 350);
  EXPECT_LT(accepted, 650);
}

TEST(MhUpdate, NonFiniteCurrentIsAnError) {
  Rng rng(4);
  auto target = [](const Eigen::VectorXd&) { return std::nan(""); };
  EXPECT_THROW((void)mh_update(Eigen::VectorXd::Ones(1), target, Eigen::VectorXd::Ones(1), rng), NumericalError);
}

TEST(MhUpdate, StandardNormalCalibration) {
  Rng rng(derive_seed(11, "mh-1d"));
  Eigen::VectorXd cur = Eigen::VectorXd::Zero(1);
  auto target = [](const Eigen::VectorXd& v) { return -0.5 * v(0) * v(0); };
  double lp = target(cur);
  std::vector<double> s;
  for (int i = 0; i < 55000; ++i) {
    auto st = mh_update(cur, lp, target, Eigen::VectorXd::Constant(1, 2.4), rng, Support::Real);
    cur = st.state;
    lp = st.log_target;
    if (i >= 5000) s.push_back(cur(0));
  }
  double m = 0.0;
  for (double v : s) m += v;
  m /= static_cast<double>(s.size());
  double var = 0.0;
  for (double v : s) var += (v - m) * (v - m);
  var /= static_cast<double>(s.size() - 1);
  EXPECT_LT(std::abs(m), 3.0 * batch_mcse(s));
  EXPECT_NEAR(var, 1.0, 0.1);
}

TEST(OuterPosterior, FlatPriorLimit) {
  const Dataset ds = small_gp(5);
  const Eigen::VectorXd y = standardize(ds).values.col(0);
  const LengthscalePriors flat{Eigen::VectorXd::Constant(1, 1.0), Eigen::VectorXd::Constant(1, 1e9)};
  const Eigen::VectorXd a = Eigen::VectorXd::Constant(1, 0.3);
  const Eigen::VectorXd b = Eigen::VectorXd::Constant(1, 0.9);
  const double dp = log_posterior_outer(a, ds.inputs, y, flat) - log_posterior_outer(b, ds.inputs, y, flat);
  const double dl = log_likelihood(factorize_with_ladder(ds.inputs, SqeKernel(a)), y) -
                    log_likelihood(factorize_with_ladder(ds.inputs, SqeKernel(b)), y);
  EXPECT_NEAR(dp, dl, 1e-10);
}

TEST(OuterPosterior, TwoPointHandInstance) {
  Eigen::MatrixXd x(2, 1);
  x << 0.0, 1.0;
  const Eigen::VectorXd y = Eigen::Vector2d(1.0, -0.5);
  const double ell = 2.0;
  const LengthscalePriors pr{Eigen::VectorXd::Constant(1, 1.0), Eigen::VectorXd::Constant(1, 10.0)};
  // bivariate normal with rho = exp(-1/2) + unit diagonal plus jitter, plus the normal prior
  const double rho = std::exp(-0.5);
  const double a = 1.0 + 1e-8;
  const double det = a * a - rho * rho;
  const double quad = (a * y(0) * y(0) - 2.0 * rho * y(0) * y(1) + a * y(1) * y(1)) / det;
  const double ll = -0.5 * (2.0 * std::log(2.0 * std::numbers::pi) + std::log(det) + quad);
  const double prior = -0.5 * std::pow((ell - 1.0) / 10.0, 2) - std::log(10.0) - 0.5 * std::log(2.0 * std::numbers::pi);
  EXPECT_NEAR(log_posterior_outer(Eigen::VectorXd::Constant(1, ell), x, y, pr), ll + prior, 1e-12);
  EXPECT_THROW((void)log_posterior_outer(Eigen::VectorXd::Constant(1, 0.0), x, y, pr), DataError);
  EXPECT_THROW((void)log_posterior_outer(Eigen::VectorXd::Constant(1, -1.0), x, y, pr), DataError);
}

TEST(Lookback, PredictMatchesConditioningOracle) {
  LookbackWindow w;
  w.capacity = 3;
  w.push(7, 1.0);
  w.push(8, 2.0);
  w.push(9, 3.0);
  // hand MVN conditioning on the standardized 3x3 system, delta = 2
  const auto p = lookback_predict(w, 10, 2.0);
  ASSERT_TRUE(p.has_value());
  EXPECT_NEAR(*p, 2.688615650372571, 1e-9);
}

TEST(Lookback, DegenerateWindowCarriesValue) {
  LookbackWindow w;
  w.capacity = 4;
  for (long t = 1; t <= 4; ++t) w.push(t, 0.7);
  Rng rng(5);
  const auto out = lookback_step(w, 5, 0.7, InnerConfig{}, rng);
  EXPECT_TRUE(out.fallback);
  EXPECT_DOUBLE_EQ(out.lengthscale, 0.7);
  EXPECT_FALSE(lookback_predict(w, 6, 1.0).has_value());
}

TEST(Lookback, SlideBookkeeping) {
  LookbackWindow w;
  w.capacity = 5;
  for (long t = 10; t <= 14; ++t) w.push(t, 1.0 + 0.1 * static_cast<double>(t % 3));
  Rng rng(6);
  const auto out = lookback_step(w, 15, 2.5, InnerConfig{}, rng);
  EXPECT_FALSE(out.fallback);
  EXPECT_GE(out.lengthscale, kLengthscaleFloor);
  EXPECT_TRUE(std::isfinite(out.log_post));
  ASSERT_EQ(w.size(), 5u);
  EXPECT_EQ(w.index.front(), 11);
  EXPECT_EQ(w.index.back(), 15);
  EXPECT_DOUBLE_EQ(w.value.back(), 2.5);
  for (std::size_t i = 1; i < w.size(); ++i) EXPECT_EQ(w.index[i], w.index[i - 1] + 1);
  EXPECT_THROW((void)lookback_step(w, 17, 1.0, InnerConfig{}, rng), UsageError);
  LookbackWindow partial;
  partial.capacity = 5;
  partial.push(1, 1.0);
  EXPECT_THROW((void)lookback_step(partial, 2, 1.0, InnerConfig{}, rng), UsageError);
  EXPECT_THROW(partial.push(3, 1.0), UsageError);
  EXPECT_THROW(partial.push(2, -1.0), DataError);
}

TEST(Lookback, PredictionIsFloored) {
  LookbackWindow w;
  w.capacity = 4;
  w.push(1, 4.0);
  w.push(2, 3.0);
  w.push(3, 2.0);
  w.push(4, 1e-7);
  const auto p = lookback_predict(w, 5, 50.0);
  ASSERT_TRUE(p.has_value());
  EXPECT_GE(*p, kLengthscaleFloor);
}

TEST(Hpd, Examples) {
  std::vector<double> s(100);
  for (int i = 0; i < 100; ++i) s[i] = i + 1.0;
  const auto iv = hpd_interval(s, 0.95);
  EXPECT_DOUBLE_EQ(iv.lo, 1.0);
  EXPECT_DOUBLE_EQ(iv.hi, 95.0);
  const auto flat = hpd_interval(std::vector<double>(80, 3.5));
  EXPECT_EQ(flat.lo, 3.5);
  EXPECT_EQ(flat.hi, 3.5);
  EXPECT_THROW((void)hpd_interval(std::vector<double>(49, 1.0)), DataError);
  EXPECT_THROW((void)hpd_interval(s, 1.0), UsageError);
}

TEST(Hpd, MatchesExhaustiveSearch) {
  Rng rng(derive_seed(12, "hpd"));
  std::uniform_int_distribution<int> size(50, 600);
  std::gamma_distribution<double> g(2.0, 1.0);
  for (int rep = 0; rep < 100; ++rep) {
    std::vector<double> s(static_cast<std::size_t>(size(rng)));
    for (auto& v : s) v = std::round(g(rng) * 50.0) / 50.0;
    const auto a = hpd_interval(s, 0.95);
    const auto b = exhaustive_hpd(s, 0.95);
    EXPECT_EQ(a.lo, b.lo);
    EXPECT_EQ(a.hi, b.hi);
  }
}

TEST(Hpd, NormalQuantilesAndMonotoneWidth) {
  Rng rng(derive_seed(13, "hpd-normal"));
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> s(10000);
  for (auto& v : s) v = n(rng);
  const auto iv = hpd_interval(s, 0.95);
  EXPECT_NEAR(iv.lo, -1.96, 0.1);
  EXPECT_NEAR(iv.hi, 1.96, 0.1);
  double prev = std::numeric_limits<double>::infinity();
  for (double m = 0.99; m > 0.05; m -= 0.04) {
    const auto i = hpd_interval(s, m);
    EXPECT_LE(i.hi - i.lo, prev);
    prev = i.hi - i.lo;
  }
}

TEST(ChainConfig, Validation) {
  ChainConfig c;
  c.n_iter = 100;
  c.n_burn = 100;
  EXPECT_THROW(c.validate(1), UsageError);
  c.n_burn = 50;
  c.model = ModelKind::Nonstationary;
  c.lookback = 50;
  EXPECT_THROW(c.validate(1), UsageError);
  c.lookback = 20;
  EXPECT_NO_THROW(c.validate(1));
  c.seeds = {1.0, 2.0};
  EXPECT_THROW(c.validate(1), UsageError);
  c.seeds = {-1.0};
  EXPECT_THROW(c.validate(1), UsageError);
}

TEST(RunChain, DeterministicGivenSeed) {
  const Dataset ds = small_gp(8);
  const Eigen::VectorXd y = standardize(ds).values.col(0);
  ChainConfig c;
  c.n_iter = 600;
  c.n_burn = 100;
  c.lookback = 50;
  c.model = ModelKind::Nonstationary;
  c.seeds = {0.5};
  c.rng_seed = 99;
  const auto a = run_chain(c, ds.inputs, y);
  const auto b = run_chain(c, ds.inputs, y);
  ASSERT_EQ(a.trace.size(), 600u);
  EXPECT_EQ(a.trace.lengthscales, b.trace.lengthscales);
  EXPECT_EQ(a.trace.log_post_outer, b.trace.log_post_outer);
  for (std::size_t i = 0; i < a.trace.deltas.size(); ++i) {
    const double x = a.trace.deltas[i];
    const double z = b.trace.deltas[i];
    EXPECT_TRUE((std::isnan(x) && std::isnan(z)) || x == z);
  }
  c.rng_seed = 100;
  EXPECT_NE(run_chain(c, ds.inputs, y).trace.lengthscales, a.trace.lengthscales);
}

TEST(RunChain, NonstationaryPhases) {
  const Dataset ds = small_gp(9);
  const Eigen::VectorXd y = standardize(ds).values.col(0);
  ChainConfig c;
  c.n_iter = 500;
  c.n_burn = 100;
  c.lookback = 40;
  c.model = ModelKind::Nonstationary;
  c.seeds = {0.5};
  c.proposal_sd = {0.2};
  c.rng_seed = 3;
  const auto r = run_chain(c, ds.inputs, y);
  for (std::size_t t = 0; t < 140; ++t) EXPECT_TRUE(std::isnan(r.trace.delta(t, 0)));
  for (std::size_t t = 140; t < 500; ++t) {
    EXPECT_GT(r.trace.delta(t, 0), 0.0);
    EXPECT_GE(r.trace.lengthscale(t, 0), kLengthscaleFloor);
  }
  ASSERT_EQ(r.summary.parameters.size(), 2u);
  EXPECT_EQ(r.summary.parameters[0].name, "l_1");
  EXPECT_EQ(r.summary.parameters[0].n_samples, 400u);
  EXPECT_EQ(r.summary.parameters[1].name, "delta_1");
  EXPECT_EQ(r.summary.parameters[1].n_samples, 360u);
}

TEST(RunChain, StationaryTraceAndSummary) {
  const Dataset ds = small_gp(10);
  const Eigen::VectorXd y = standardize(ds).values.col(0);
  ChainConfig c;
  c.n_iter = 800;
  c.n_burn = 200;
  c.seeds = {0.5};
  c.proposal_sd = {0.1};
  c.rng_seed = 4;
  std::size_t seen = 0;
  const auto r = run_chain(c, ds.inputs, y, [&](std::size_t it, const ChainTrace& tr) {
    EXPECT_EQ(it, seen++);
    EXPECT_EQ(tr.size(), it + 1);
  });
  EXPECT_EQ(seen, 800u);
  EXPECT_EQ(r.summary.parameters.size(), 1u);
  const auto& p = r.summary.parameters[0];
  EXPECT_LE(p.hpd.lo, p.hpd.hi);
  EXPECT_GT(r.summary.acceptance_rate, 0.0);
  for (std::size_t t = 200; t < 800; ++t) EXPECT_TRUE(std::isfinite(r.trace.log_post_outer[t]));
}

TEST(RunChain, LowAcceptanceWarns) {
  const Dataset ds = small_gp(11);
  const Eigen::VectorXd y = standardize(ds).values.col(0);
  ChainConfig c;
  c.n_iter = 300;
  c.n_burn = 100;
  c.seeds = {0.5};
  c.proposal_sd = {1e3};
  const auto r = run_chain(c, ds.inputs, y);
  EXPECT_FALSE(r.summary.warnings.empty());
}
