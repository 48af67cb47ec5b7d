#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "inhom/evaluation.hpp"
#include "inhom/rng.hpp"
#include "support.hpp"

using namespace inhom;

namespace {

PredictionSet make_set(const std::vector<double>& truth, const std::vector<double>& mean, const std::vector<double>& sd) {
  PredictionSet ps;
  ps.input_names = {"x"};
  for (std::size_t i = 0; i < truth.size(); ++i) ps.rows.push_back({{static_cast<double>(i)}, truth[i], mean[i], sd[i]});
  return ps;
}

}  // namespace

TEST(Rmse, Examples) {
  EXPECT_EQ(rmse(make_set({1, 2, 3}, {1, 2, 3}, {0, 0, 0})), 0.0);
  EXPECT_NEAR(rmse(make_set({0, 0}, {3, 4}, {1, 1})), std::sqrt(12.5), 1e-15);
  PredictionSet missing = make_set({1}, {1}, {1});
  missing.rows[0].truth.reset();
  EXPECT_THROW((void)rmse(missing), DataError);
  EXPECT_THROW((void)compatibility(missing), DataError);
  EXPECT_THROW((void)rmse(PredictionSet{}), DataError);
}

TEST(Compatibility, Examples) {
  EXPECT_EQ(compatibility(make_set({1, 2}, {1, 2}, {0, 0})), 1.0);
  // boundary: truth exactly at mean + sd counts as inside
  EXPECT_EQ(compatibility(make_set({1.5, 0.5}, {1.0, 1.0}, {0.5, 0.5})), 1.0);
  std::vector<double> t(50, 0.0), m(50, 0.0), s(50, 1.0);
  for (int i = 37; i < 50; ++i) t[i] = 2.0;
  EXPECT_DOUBLE_EQ(compatibility(make_set(t, m, s)), 0.74);
}

TEST(Metrics, Invariances) {
  Rng rng(derive_seed(14, "metrics"));
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.01, 2.0);
  for (int rep = 0; rep < 100; ++rep) {
    std::vector<double> t(30), m(30), s(30);
    for (int i = 0; i < 30; ++i) {
      t[i] = n(rng);
      m[i] = n(rng);
      s[i] = u(rng);
    }
    const auto base = make_set(t, m, s);
    // translation covariance of RMSE
    const double c = 1e3 * n(rng);
    std::vector<double> t2(t), m2(m);
    for (int i = 0; i < 30; ++i) {
      t2[i] += c;
      m2[i] += c;
    }
    EXPECT_NEAR(rmse(make_set(t2, m2, s)), rmse(base), 1e-9);
    // C is invariant under a common positive rescaling of residuals and sds
    // (a power of two keeps the comparison exact)
    std::vector<double> t3(30), s3(30);
    for (int i = 0; i < 30; ++i) {
      t3[i] = m[i] + 8.0 * (t[i] - m[i]);
      s3[i] = 8.0 * s[i];
    }
    EXPECT_EQ(compatibility(make_set(t3, m, s3)), compatibility(base));
    // brute-force count
    int inside = 0;
    for (int i = 0; i < 30; ++i) inside += (t[i] >= m[i] - s[i] && t[i] <= m[i] + s[i]);
    EXPECT_EQ(compatibility(base), inside / 30.0);
    EXPECT_GE(compatibility(base), 0.0);
    EXPECT_LE(compatibility(base), 1.0);
  }
}

TEST(Report, WritesCsvAndSummary) {
  testkit::TempDir dir("report");
  std::vector<double> t(50), m(50), s(50, 0.5);
  for (int i = 0; i < 50; ++i) {
    t[i] = i * 0.1;
    m[i] = i * 0.1 + (i % 3 == 0 ? 0.7 : 0.1);
  }
  PredictionSet ps = make_set(t, m, s);
  ps.input_names = {"X_T"};
  const Metrics met = emit_prediction_report(ps, "stationary", dir.path());
  const std::string csv = testkit::read_file(dir / "predictions.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "index,X_T,truth,mean,sd");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 51);
  const auto j = nlohmann::json::parse(testkit::read_file(dir / "summary.json"));
  EXPECT_DOUBLE_EQ(j["rmse"].get<double>(), met.rmse);
  EXPECT_DOUBLE_EQ(j["C"].get<double>(), met.compatibility);
  EXPECT_EQ(j["n_test"].get<int>(), 50);
  EXPECT_EQ(j["model"], "stationary");

  const PredictionSet back = read_predictions_csv(dir / "predictions.csv");
  EXPECT_EQ(back.size(), 50u);
  EXPECT_EQ(rmse(back), met.rmse);
  EXPECT_THROW((void)emit_prediction_report(PredictionSet{}, "x", dir.path()), DataError);
}

TEST(Report, MissingTruthRoundTrips) {
  testkit::TempDir dir("notruth");
  PredictionSet ps = make_set({1, 2}, {1, 2}, {1, 1});
  for (auto& r : ps.rows) r.truth.reset();
  write_predictions_csv(ps, dir / "p.csv");
  const auto back = read_predictions_csv(dir / "p.csv");
  EXPECT_FALSE(back.rows[0].truth.has_value());
  EXPECT_THROW((void)rmse(back), DataError);
}
