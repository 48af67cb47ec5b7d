#pragma once

// Log-correlation distance between consecutive outputs (the L-series), its
// tolerance bands, and the fraction of bands that overlap no other band.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <variant>
#include <vector>

#include "inhom/dataset.hpp"
#include "inhom/error.hpp"

namespace inhom {

enum class CorrEstimator {
  WindowedPairs,      ///< lag-1 pairs in a window around i, scalar outputs
  ElementwiseTensor,  ///< Pearson across the P components of y_i and y_j
};

struct CorrEstimatorConfig {
  CorrEstimator kind = CorrEstimator::WindowedPairs;
  std::size_t half_width = 5;
  double corr_floor = 1e-12;

  void validate() const {
    if (half_width < 1) throw UsageError("half-width must be >= 1");
    if (!(corr_floor > 0.0 && corr_floor < 1.0)) throw UsageError("correlation floor must lie in (0, 1)");
  }
};

enum class ToleranceMode { Constant, Proportional, PerIndex };

/// Half-width of the band placed around each L-value.
struct ToleranceConfig {
  ToleranceMode mode = ToleranceMode::Constant;
  double delta = 0.05;               ///< constant mode
  double beta = 0.1;                 ///< proportional mode: delta_i = beta * L_i
  std::vector<double> per_index;     ///< per-index mode, one delta per L-value

  static ToleranceConfig constant(double delta) { return {ToleranceMode::Constant, delta, 0.1, {}}; }
  static ToleranceConfig proportional(double beta) { return {ToleranceMode::Proportional, 0.05, beta, {}}; }
  static ToleranceConfig explicit_bands(std::vector<double> deltas) {
    return {ToleranceMode::PerIndex, 0.05, 0.1, std::move(deltas)};
  }

  void validate() const {
    switch (mode) {
      case ToleranceMode::Constant:
        if (!(delta >= 0.0) || !std::isfinite(delta)) throw UsageError("delta must be a finite value >= 0");
        break;
      case ToleranceMode::Proportional:
        if (!(beta > 0.0 && beta < 1.0)) throw UsageError("beta must lie in (0, 1)");
        break;
      case ToleranceMode::PerIndex:
        for (double d : per_index) {
          if (!(d >= 0.0) || !std::isfinite(d)) throw UsageError("per-index deltas must be finite and >= 0");
        }
        break;
    }
  }

  [[nodiscard]] double half_width(std::size_t i, double l_value) const {
    switch (mode) {
      case ToleranceMode::Constant: return delta;
      case ToleranceMode::Proportional: return beta * l_value;
      case ToleranceMode::PerIndex: return per_index.at(i);
    }
    return delta;
  }
};

struct Band {
  double lo;
  double hi;
};

/// L_1..L_{N-1} with their bands; entry k holds the 1-based index k+1.
struct LSeries {
  std::vector<double> values;
  std::vector<Band> bands;
  std::vector<double> corr_values;

  [[nodiscard]] std::size_t size() const { return values.size(); }
};

struct InhomReport {
  std::vector<std::size_t> incompatible;  ///< 1-based indices into the L-series
  std::size_t m = 0;
  double p = 0.0;
  std::size_t n = 0;  ///< dataset size, one more than the number of L-values
};

/// Distance between two outputs with absolute correlation `corr`:
/// sqrt(-ln corr).
[[nodiscard]] inline double d_y(double corr) {
  if (!(corr > 0.0 && corr <= 1.0)) throw DataError("correlation outside (0, 1]: " + std::to_string(corr));
  const double v = -std::log(corr);
  return v <= 0.0 ? 0.0 : std::sqrt(v);
}

namespace detail {

template <class A, class B>
double pearson(const A& a, const B& b) {
  const double ma = a.mean();
  const double mb = b.mean();
  const Eigen::ArrayXd da = a.array() - ma;
  const Eigen::ArrayXd db = b.array() - mb;
  const double saa = da.square().sum();
  const double sbb = db.square().sum();
  const double scale_a = std::max(a.array().abs().maxCoeff(), 1.0);
  const double scale_b = std::max(b.array().abs().maxCoeff(), 1.0);
  // relative zero-variance test; exact ties produce round-off sized spreads
  const auto tiny = [](double ss, double scale, Eigen::Index n) {
    return ss <= 1e-24 * scale * scale * static_cast<double>(n);
  };
  if (tiny(saa, scale_a, a.size()) || tiny(sbb, scale_b, b.size())) return std::numeric_limits<double>::quiet_NaN();
  return (da * db).sum() / std::sqrt(saa * sbb);
}

}  // namespace detail

/// |corr(Y_i, Y_j)| for 1-based indices, clamped into [floor, 1].
///
/// The windowed estimator needs j == i + 1 and scalar outputs; it pools the
/// lag-1 pairs (y_c, y_{c+1}) for c in [i - h, i + h] ∩ [1, N - 1]. The
/// tensor estimator correlates the P >= 3 components of y_i and y_j.
[[nodiscard]] inline double abs_corr(const StandardizedOutputs& so, std::size_t i, std::size_t j,
                                     const CorrEstimatorConfig& cfg) {
  const std::size_t n = so.size();
  if (i < 1 || j < 1 || i > n || j > n) throw DataError("index out of range 1..N");
  double r = 0.0;
  if (cfg.kind == CorrEstimator::WindowedPairs) {
    if (j != i + 1) throw DataError("windowed estimator requires j = i + 1");
    if (so.values.cols() != 1) throw DataError("windowed estimator requires scalar outputs");
    const std::size_t h = cfg.half_width;
    const std::size_t lo = i > h ? i - h : 1;
    const std::size_t hi = std::min(i + h, n - 1);
    const auto len = static_cast<Eigen::Index>(hi - lo + 1);
    const auto first = so.values.col(0).segment(static_cast<Eigen::Index>(lo - 1), len);
    const auto second = so.values.col(0).segment(static_cast<Eigen::Index>(lo), len);
    r = detail::pearson(first, second);
    if (std::isnan(r)) throw DataError("degenerate correlation window at index " + std::to_string(i));
  } else {
    if (so.values.cols() < 3) throw DataError("tensor estimator requires at least 3 output components");
    const Eigen::VectorXd a = so.values.row(static_cast<Eigen::Index>(i - 1)).transpose();
    const Eigen::VectorXd b = so.values.row(static_cast<Eigen::Index>(j - 1)).transpose();
    r = detail::pearson(a, b);
    if (std::isnan(r)) throw DataError("degenerate correlation window at index " + std::to_string(i));
  }
  return std::clamp(std::abs(r), cfg.corr_floor, 1.0);
}

/// Builds bands around precomputed L-values.
[[nodiscard]] inline LSeries make_l_series(std::vector<double> values, const ToleranceConfig& tol,
                                           std::vector<double> corr_values = {}) {
  tol.validate();
  if (tol.mode == ToleranceMode::PerIndex && tol.per_index.size() != values.size()) {
    throw UsageError("expected " + std::to_string(values.size()) + " per-index deltas, got " + std::to_string(tol.per_index.size()));
  }
  LSeries ls;
  ls.bands.reserve(values.size());
  for (std::size_t k = 0; k < values.size(); ++k) {
    if (!(values[k] >= 0.0) || !std::isfinite(values[k])) throw DataError("L-value " + std::to_string(k + 1) + " is not a finite nonnegative number");
    const double w = tol.half_width(k, values[k]);
    ls.bands.push_back({values[k] - w, values[k] + w});
  }
  ls.values = std::move(values);
  ls.corr_values = std::move(corr_values);
  return ls;
}

[[nodiscard]] inline LSeries l_series(const ReducedDataset& rd, const StandardizedOutputs& so,
                                      const CorrEstimatorConfig& cfg, const ToleranceConfig& tol) {
  cfg.validate();
  const std::size_t n = rd.index.size();
  if (n != so.size()) throw DataError("reduced dataset and standardized outputs differ in size");
  if (n < 2) throw DataError("N < 2");
  std::vector<double> values(n - 1);
  std::vector<double> corrs(n - 1);
  for (std::size_t i = 1; i < n; ++i) {
    corrs[i - 1] = abs_corr(so, i, i + 1, cfg);
    values[i - 1] = d_y(corrs[i - 1]);
  }
  return make_l_series(std::move(values), tol, std::move(corrs));
}

/// 1-based indices whose band intersects no other band (closed intervals;
/// touching endpoints intersect). O(N log N): after sorting by lower end, a
/// band meets an earlier one iff the running maximum of earlier upper ends
/// reaches it, and meets a later one iff the next lower end does.
[[nodiscard]] inline std::vector<std::size_t> incompatible_set(const LSeries& ls) {
  const std::size_t m = ls.bands.size();
  if (m < 2) throw DataError("incompatibility undefined for fewer than two L-values");
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return ls.bands[a].lo < ls.bands[b].lo || (ls.bands[a].lo == ls.bands[b].lo && a < b);
  });
  std::vector<std::size_t> out;
  double prefix_hi = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < m; ++k) {
    const Band& b = ls.bands[order[k]];
    const bool meets_before = k > 0 && prefix_hi >= b.lo;
    const bool meets_after = k + 1 < m && ls.bands[order[k + 1]].lo <= b.hi;
    if (!meets_before && !meets_after) out.push_back(order[k] + 1);
    prefix_hi = std::max(prefix_hi, b.hi);
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// Exhaustive pairwise version of incompatible_set, O(N^2).
[[nodiscard]] inline std::vector<std::size_t> brute_force_incompatible(const LSeries& ls) {
  const std::size_t m = ls.bands.size();
  if (m < 2) throw DataError("incompatibility undefined for fewer than two L-values");
  std::vector<std::size_t> out;
  for (std::size_t l = 0; l < m; ++l) {
    bool isolated = true;
    for (std::size_t i = 0; i < m && isolated; ++i) {
      if (i == l) continue;
      if (std::max(ls.bands[l].lo, ls.bands[i].lo) <= std::min(ls.bands[l].hi, ls.bands[i].hi)) isolated = false;
    }
    if (isolated) out.push_back(l + 1);
  }
  return out;
}

/// p = m / (N - 1) with m the number of incompatible L-values.
[[nodiscard]] inline InhomReport inhomogeneity_parameter(const LSeries& ls) {
  InhomReport r;
  r.incompatible = incompatible_set(ls);
  r.m = r.incompatible.size();
  r.n = ls.size() + 1;
  r.p = static_cast<double>(r.m) / static_cast<double>(ls.size());
  return r;
}

[[nodiscard]] inline const char* to_string(CorrEstimator k) {
  return k == CorrEstimator::WindowedPairs ? "windowed" : "tensor";
}

[[nodiscard]] inline const char* to_string(ToleranceMode m) {
  switch (m) {
    case ToleranceMode::Constant: return "constant";
    case ToleranceMode::Proportional: return "proportional";
    case ToleranceMode::PerIndex: return "per-index";
  }
  return "constant";
}

}  // namespace inhom
