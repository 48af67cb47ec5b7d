#pragma once

// Seeded synthetic series used by the tests and the acceptance suite.

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "inhom/dataset.hpp"
#include "inhom/error.hpp"
#include "inhom/gp.hpp"
#include "inhom/rng.hpp"

namespace inhom {

enum class SynthKind { StationaryGp, PiecewiseGp, UnitRoot, NoisyTrend };

[[nodiscard]] inline SynthKind parse_synth_kind(const std::string& s) {
  if (s == "stationary-gp") return SynthKind::StationaryGp;
  if (s == "piecewise-gp") return SynthKind::PiecewiseGp;
  if (s == "unit-root") return SynthKind::UnitRoot;
  if (s == "noisy-trend") return SynthKind::NoisyTrend;
  throw UsageError("unknown synth kind '" + s + "'");
}

struct SynthSpec {
  SynthKind kind = SynthKind::StationaryGp;
  std::size_t n = 500;
  /// Grid step of the scalar input x_i = (i - 1) * spacing.
  double spacing = 0.0125;
  /// One length scale per segment (a single entry for stationary-gp).
  std::vector<double> lengthscales{0.5};
  /// 0-based start rows of segments 2..k; empty splits evenly.
  std::vector<std::size_t> boundaries;
  /// unit-root: innovation sd. noisy-trend: base noise half-width.
  double noise = 1.0;
  /// noisy-trend: number of trend cycles over the series.
  double cycles = 3.0;
  double jitter = 1e-8;
  std::uint64_t rng_seed = 0;

  /// Defaults per kind: stationary-gp l = 0.5; piecewise-gp l = 5.0 then
  /// 0.05; unit-root innovation sd 1; noisy-trend noise half-width 0.02.
  static SynthSpec defaults_for(SynthKind kind) {
    SynthSpec s;
    s.kind = kind;
    switch (kind) {
      case SynthKind::StationaryGp: s.lengthscales = {0.5}; break;
      case SynthKind::PiecewiseGp: s.lengthscales = {5.0, 0.05}; break;
      case SynthKind::UnitRoot: s.noise = 1.0; s.n = 2000; break;
      case SynthKind::NoisyTrend: s.noise = 0.02; s.n = 52224; break;
    }
    return s;
  }

  void validate() const {
    if (n < 1) throw UsageError("synth needs n >= 1");
    if (!(spacing > 0.0)) throw UsageError("spacing must be positive");
    for (double l : lengthscales) {
      if (!(l > 0.0) || !std::isfinite(l)) throw UsageError("length scales must be positive");
    }
    if (!(noise >= 0.0)) throw UsageError("noise must be >= 0");
    for (std::size_t i = 0; i < boundaries.size(); ++i) {
      if (boundaries[i] < 1 || boundaries[i] >= n || (i > 0 && boundaries[i] <= boundaries[i - 1])) {
        throw UsageError("segment boundaries must increase strictly within [1, n)");
      }
    }
  }
};

namespace detail {

inline Dataset scalar_dataset(Eigen::VectorXd x, Eigen::VectorXd y) {
  Dataset ds;
  ds.inputs = std::move(x);
  ds.outputs = std::move(y);
  ds.input_names = {"x"};
  ds.output_names = {"y"};
  ds.shape = {1};
  return ds;
}

inline Eigen::VectorXd grid(std::size_t n, double spacing, std::size_t first = 0) {
  Eigen::VectorXd x(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) x(static_cast<Eigen::Index>(i)) = static_cast<double>(first + i) * spacing;
  return x;
}

inline Eigen::VectorXd standard_normals(std::size_t n, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd z(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = normal(rng);
  return z;
}

/// L z with L the (jittered) Cholesky factor of the SQE correlation matrix.
inline Eigen::VectorXd gp_draw(const Eigen::VectorXd& x, double lengthscale, double jitter, Rng& rng) {
  const auto chol = factorize_with_ladder(Eigen::MatrixXd(x), SqeKernel{lengthscale}, JitterLadder{jitter, 1e-4});
  const Eigen::VectorXd z = standard_normals(static_cast<std::size_t>(x.size()), rng);
  return chol.llt.matrixL() * z;
}

}  // namespace detail

/// y ~ MVN(0, K + jitter I) on an evenly spaced grid.
[[nodiscard]] inline Dataset sample_gp(const SynthSpec& spec) {
  spec.validate();
  if (spec.n > 5000) throw UsageError("sample_gp supports n <= 5000");
  if (spec.lengthscales.size() != 1) throw UsageError("stationary-gp takes exactly one length scale");
  Rng rng(spec.rng_seed);
  Eigen::VectorXd x = detail::grid(spec.n, spec.spacing);
  Eigen::VectorXd y = detail::gp_draw(x, spec.lengthscales[0], spec.jitter, rng);
  return detail::scalar_dataset(std::move(x), std::move(y));
}

/// Independent stationary segments with their own length scales, drawn in
/// order on one continuous grid; no continuity across boundaries.
[[nodiscard]] inline Dataset sample_piecewise_gp(const SynthSpec& spec) {
  spec.validate();
  const std::size_t k = spec.lengthscales.size();
  if (k == 0) throw UsageError("piecewise-gp needs at least one length scale");
  std::vector<std::size_t> starts{0};
  if (spec.boundaries.empty()) {
    for (std::size_t s = 1; s < k; ++s) starts.push_back(s * spec.n / k);
  } else {
    if (spec.boundaries.size() != k - 1) throw UsageError("piecewise-gp needs one boundary fewer than length scales");
    starts.insert(starts.end(), spec.boundaries.begin(), spec.boundaries.end());
  }
  starts.push_back(spec.n);
  Rng rng(spec.rng_seed);
  Eigen::VectorXd x = detail::grid(spec.n, spec.spacing);
  Eigen::VectorXd y(static_cast<Eigen::Index>(spec.n));
  for (std::size_t s = 0; s < k; ++s) {
    const std::size_t len = starts[s + 1] - starts[s];
    if (len == 0) throw UsageError("empty segment");
    if (len > 5000) throw UsageError("segments are limited to 5000 points");
    const Eigen::VectorXd xs = x.segment(static_cast<Eigen::Index>(starts[s]), static_cast<Eigen::Index>(len));
    y.segment(static_cast<Eigen::Index>(starts[s]), static_cast<Eigen::Index>(len)) =
        detail::gp_draw(xs, spec.lengthscales[s], spec.jitter, rng);
  }
  return detail::scalar_dataset(std::move(x), std::move(y));
}

/// Random walk y_t = y_{t-1} + e_t from y_0 = 0, e_t ~ N(0, noise^2).
[[nodiscard]] inline Dataset sample_unit_root(const SynthSpec& spec) {
  spec.validate();
  Rng rng(spec.rng_seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd y(static_cast<Eigen::Index>(spec.n));
  double level = 0.0;
  for (Eigen::Index t = 0; t < y.size(); ++t) {
    level += spec.noise * normal(rng);
    y(t) = level;
  }
  return detail::scalar_dataset(detail::grid(spec.n, 1.0, 1), std::move(y));
}

struct NoisyTrendSample {
  Dataset data;
  std::vector<double> max_noise;  ///< per-index half-width a_i of the uniform noise
};

/// Slow sinusoid with drifting amplitude and a linear drift, plus noise
/// uniform on [-a_i, a_i]; a_i = noise * (1 + 0.5 sin(...)) is returned with
/// the series. Frequency, phase and drift are drawn from the seed.
[[nodiscard]] inline NoisyTrendSample sample_example1_like(const SynthSpec& spec) {
  spec.validate();
  Rng rng(spec.rng_seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double freq = spec.cycles * (0.75 + 0.5 * unif(rng));
  const double phase = 2.0 * std::numbers::pi * unif(rng);
  const double amp_slope = unif(rng) - 0.5;
  const double noise_freq = 1.0 + 2.0 * unif(rng);

  NoisyTrendSample out;
  out.max_noise.resize(spec.n);
  Eigen::VectorXd y(static_cast<Eigen::Index>(spec.n));
  const double n = static_cast<double>(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) {
    const double t = static_cast<double>(i) / n;
    const double amplitude = 1.0 + amp_slope * t + 0.3 * t * t;
    const double trend = amplitude * std::sin(2.0 * std::numbers::pi * freq * t + phase) + 0.5 * t;
    const double a = spec.noise * (1.0 + 0.5 * std::sin(2.0 * std::numbers::pi * noise_freq * t));
    out.max_noise[i] = a;
    y(static_cast<Eigen::Index>(i)) = trend + a * (2.0 * unif(rng) - 1.0);
  }
  out.data = detail::scalar_dataset(detail::grid(spec.n, 1.0, 1), std::move(y));
  return out;
}

/// Band half-widths for the L-series of a noisy-trend sample: the larger
/// noise bound of the two outputs each L-value compares.
[[nodiscard]] inline std::vector<double> pairwise_max_noise(const std::vector<double>& max_noise) {
  std::vector<double> out;
  if (max_noise.size() < 2) return out;
  out.reserve(max_noise.size() - 1);
  for (std::size_t i = 0; i + 1 < max_noise.size(); ++i) out.push_back(std::max(max_noise[i], max_noise[i + 1]));
  return out;
}

}  // namespace inhom
