#pragma once

// Augmented Dickey-Fuller unit-root test (constant, no trend) on top of a
// small least-squares engine.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "inhom/error.hpp"

namespace inhom {

struct OlsResult {
  Eigen::VectorXd coefficients;
  Eigen::VectorXd standard_errors;  ///< NaN when there are no residual degrees of freedom
  double rss = 0.0;
  Eigen::Index dof = 0;
};

/// Least squares through a column-pivoted Householder QR.
[[nodiscard]] inline OlsResult ols_solve(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  if (x.rows() != y.size()) throw DataError("design matrix and response differ in length");
  if (x.rows() < x.cols()) throw NumericalError("fewer observations than regressors");
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  qr.setThreshold(1e-12);
  if (qr.rank() < x.cols()) throw NumericalError("rank deficiency in design matrix");

  OlsResult out;
  out.coefficients = qr.solve(y);
  out.rss = (y - x * out.coefficients).squaredNorm();
  out.dof = x.rows() - x.cols();

  // (X'X)^{-1} = P R^{-1} R^{-T} P'
  const auto k = x.cols();
  const Eigen::MatrixXd r = qr.matrixR().topLeftCorner(k, k).template triangularView<Eigen::Upper>();
  const Eigen::MatrixXd r_inv = r.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(k, k));
  const Eigen::VectorXd diag_perm = r_inv.rowwise().squaredNorm();
  Eigen::VectorXd diag(k);
  for (Eigen::Index j = 0; j < k; ++j) diag(qr.colsPermutation().indices()(j)) = diag_perm(j);
  const double sigma2 = out.dof > 0 ? out.rss / static_cast<double>(out.dof) : std::numeric_limits<double>::quiet_NaN();
  out.standard_errors = (sigma2 * diag.array()).sqrt().matrix();
  return out;
}

enum class LagRule { Fixed, Aic };

enum class Significance { Pct1, Pct5, Pct10 };

struct AdfResult {
  double statistic = 0.0;
  std::size_t lags_used = 0;
  std::size_t n_effective = 0;
  /// Asymptotic critical values for the constant-only regression.
  static constexpr std::array<std::pair<Significance, double>, 3> critical_values{{
      {Significance::Pct1, -3.430}, {Significance::Pct5, -2.862}, {Significance::Pct10, -2.567}}};
  std::vector<Significance> reject_at;
  std::optional<double> p_value;

  [[nodiscard]] bool rejects(Significance level) const {
    return std::find(reject_at.begin(), reject_at.end(), level) != reject_at.end();
  }
};

[[nodiscard]] inline const char* to_string(Significance s) {
  switch (s) {
    case Significance::Pct1: return "1%";
    case Significance::Pct5: return "5%";
    case Significance::Pct10: return "10%";
  }
  return "?";
}

namespace detail {

/// (statistic, asymptotic p-value) pairs for the constant-only Dickey-Fuller
/// t-statistic, tabulated from MacKinnon's response surface.
inline constexpr std::array<std::pair<double, double>, 86> kAdfPValueTable{{
    {-6.0, 1.666120e-07}, {-5.9, 2.792578e-07}, {-5.8, 4.654953e-07}, {-5.7, 7.715169e-07},
    {-5.6, 1.271172e-06}, {-5.5, 2.081614e-06}, {-5.4, 3.387204e-06}, {-5.3, 5.475653e-06},
    {-5.2, 8.792084e-06}, {-5.1, 1.401900e-05}, {-5.0, 2.219315e-05}, {-4.9, 3.487436e-05},
    {-4.8, 5.438594e-05}, {-4.7, 8.415278e-05}, {-4.6, 1.291696e-04}, {-4.5, 1.966399e-04},
    {-4.4, 2.968326e-04}, {-4.3, 4.442123e-04}, {-4.2, 6.589002e-04}, {-4.1, 9.685245e-04},
    {-4.0, 1.410511e-03}, {-3.9, 2.034847e-03}, {-3.8, 2.907315e-03}, {-3.7, 4.113154e-03},
    {-3.6, 5.761028e-03}, {-3.5, 7.987094e-03}, {-3.4, 1.095887e-02}, {-3.3, 1.487847e-02},
    {-3.2, 1.998468e-02}, {-3.1, 2.655319e-02}, {-3.0, 3.489440e-02}, {-2.9, 4.534800e-02},
    {-2.8, 5.827377e-02}, {-2.7, 7.403827e-02}, {-2.6, 9.299727e-02}, {-2.5, 1.154743e-01},
    {-2.4, 1.417364e-01}, {-2.3, 1.719680e-01}, {-2.2, 2.062455e-01}, {-2.1, 2.445146e-01},
    {-2.0, 2.865731e-01}, {-1.9, 3.320611e-01}, {-1.8, 3.804617e-01}, {-1.7, 4.311125e-01},
    {-1.6, 4.835935e-01}, {-1.5, 5.335113e-01}, {-1.4, 5.822761e-01}, {-1.3, 6.291723e-01},
    {-1.2, 6.735957e-01}, {-1.1, 7.150719e-01}, {-1.0, 7.532643e-01}, {-0.9, 7.879724e-01},
    {-0.8, 8.191221e-01}, {-0.7, 8.467495e-01}, {-0.6, 8.709820e-01}, {-0.5, 8.920165e-01},
    {-0.4, 9.100988e-01}, {-0.3, 9.255043e-01}, {-0.2, 9.385216e-01}, {-0.1, 9.494385e-01},
    {-0.0, 9.585321e-01}, {0.1, 9.660611e-01}, {0.2, 9.722616e-01}, {0.3, 9.773445e-01},
    {0.4, 9.814949e-01}, {0.5, 9.848731e-01}, {0.6, 9.876156e-01}, {0.7, 9.898379e-01},
    {0.8, 9.916362e-01}, {0.9, 9.930903e-01}, {1.0, 9.942659e-01}, {1.1, 9.952166e-01},
    {1.2, 9.959859e-01}, {1.3, 9.966089e-01}, {1.4, 9.971141e-01}, {1.5, 9.975243e-01},
    {1.6, 9.978576e-01}, {1.7, 9.981286e-01}, {1.8, 9.983490e-01}, {1.9, 9.985280e-01},
    {2.0, 9.986730e-01}, {2.1, 9.987896e-01}, {2.2, 9.988825e-01}, {2.3, 9.989552e-01},
    {2.4, 9.990103e-01}, {2.5, 9.990499e-01},
}};

}  // namespace detail

/// Linear interpolation over the tabulated asymptotic distribution; clamps
/// outside the tabulated range.
[[nodiscard]] inline double adf_p_value(double statistic) {
  const auto& t = detail::kAdfPValueTable;
  if (statistic <= t.front().first) return t.front().second;
  if (statistic >= t.back().first) return t.back().second;
  auto it = std::upper_bound(t.begin(), t.end(), statistic,
                             [](double s, const std::pair<double, double>& e) { return s < e.first; });
  const auto& hi = *it;
  const auto& lo = *(it - 1);
  const double w = (statistic - lo.first) / (hi.first - lo.first);
  return lo.second + w * (hi.second - lo.second);
}

/// Default maximum lag, floor(12 (n/100)^{1/4}).
[[nodiscard]] inline std::size_t schwert_max_lag(std::size_t n) {
  return static_cast<std::size_t>(std::floor(12.0 * std::pow(static_cast<double>(n) / 100.0, 0.25)));
}

namespace detail {

/// Rows t = lag+1 .. n-1 (0-based over the level series): regressors are
/// [1, y_{t-1}, dy_{t-1}, ..., dy_{t-lag}] and the response is dy_t, using
/// only observations from `first` onward.
inline std::pair<Eigen::MatrixXd, Eigen::VectorXd> adf_design(std::span<const double> y, std::size_t lag,
                                                              std::size_t first) {
  const std::size_t n = y.size();
  const std::size_t rows = n - 1 - first;
  Eigen::MatrixXd x(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(lag + 2));
  Eigen::VectorXd dy(static_cast<Eigen::Index>(rows));
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t t = first + 1 + r;  // dy_t = y[t] - y[t-1]
    const auto ri = static_cast<Eigen::Index>(r);
    dy(ri) = y[t] - y[t - 1];
    x(ri, 0) = 1.0;
    x(ri, 1) = y[t - 1];
    for (std::size_t j = 1; j <= lag; ++j) x(ri, static_cast<Eigen::Index>(j + 1)) = y[t - j] - y[t - j - 1];
  }
  return {std::move(x), std::move(dy)};
}

}  // namespace detail

/// Fits dy_t = a + g y_{t-1} + sum_j phi_j dy_{t-j} + e_t and returns the
/// t-ratio of g. With LagRule::Aic every lag order up to `max_lag` is fitted
/// on a common sample and the lowest-AIC order (ties to fewer lags) is
/// refitted on all available rows.
[[nodiscard]] inline AdfResult adf_test(std::span<const double> series, std::optional<std::size_t> max_lag = std::nullopt,
                                        LagRule rule = LagRule::Aic) {
  const std::size_t n = series.size();
  for (double v : series) {
    if (!std::isfinite(v)) throw DataError("series contains non-finite values");
  }
  if (n < 2) throw DataError("series too short for ADF");
  const auto [mn, mx] = std::minmax_element(series.begin(), series.end());
  if (*mn == *mx) throw DataError("constant series");

  std::size_t maxlag = max_lag.value_or(schwert_max_lag(n));
  if (!max_lag) maxlag = std::min(maxlag, n / 2 > 3 ? n / 2 - 3 : 0);
  if (n < maxlag + 10) throw DataError("series length " + std::to_string(n) + " is below max_lag + 10");

  std::size_t lag = maxlag;
  if (rule == LagRule::Aic && maxlag > 0) {
    auto [x, dy] = detail::adf_design(series, maxlag, maxlag);
    const double nobs = static_cast<double>(x.rows());
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(x);
    Eigen::VectorXd z = dy;
    z.applyOnTheLeft(qr.householderQ().adjoint());
    // residual sum of squares of the model on the first k columns
    Eigen::VectorXd tail(x.cols() + 1);
    const Eigen::Index k_max = x.cols();
    tail(k_max) = z.tail(z.size() - k_max).squaredNorm();
    for (Eigen::Index k = k_max - 1; k >= 0; --k) tail(k) = tail(k + 1) + z(k) * z(k);
    const Eigen::MatrixXd& r = qr.matrixQR();
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t p = 0; p <= maxlag; ++p) {
      const auto k = static_cast<Eigen::Index>(p + 2);
      for (Eigen::Index j = 0; j < k; ++j) {
        if (std::abs(r(j, j)) <= 1e-12 * std::max(1.0, r.col(j).head(j + 1).norm())) {
          throw NumericalError("singular regressor matrix in ADF lag search");
        }
      }
      const double aic = nobs * std::log(tail(k) / nobs) + 2.0 * static_cast<double>(k);
      if (p == 0 || aic < best - 1e-12 * std::abs(best)) {
        best = aic;
        lag = p;
      }
    }
  }

  auto [x, dy] = detail::adf_design(series, lag, lag);
  const OlsResult fit = ols_solve(x, dy);
  AdfResult res;
  res.statistic = fit.coefficients(1) / fit.standard_errors(1);
  if (!std::isfinite(res.statistic)) throw NumericalError("ADF statistic is not finite");
  res.lags_used = lag;
  res.n_effective = static_cast<std::size_t>(x.rows());
  for (const auto& [level, cv] : AdfResult::critical_values) {
    if (res.statistic < cv) res.reject_at.push_back(level);
  }
  res.p_value = adf_p_value(res.statistic);
  return res;
}

}  // namespace inhom
