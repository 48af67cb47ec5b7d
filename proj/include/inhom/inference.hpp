#pragma once

// MCMC for the SQE length scales: plain random-walk Metropolis for the
// stationary model, and Metropolis-within-Gibbs with per-dimension lookback
// GPs for the nested non-stationary model.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "inhom/error.hpp"
#include "inhom/gp.hpp"
#include "inhom/rng.hpp"

namespace inhom {

enum class ModelKind { Stationary, Nonstationary };

[[nodiscard]] inline const char* to_string(ModelKind m) {
  return m == ModelKind::Stationary ? "stationary" : "nonstationary";
}

[[nodiscard]] inline ModelKind parse_model_kind(const std::string& s) {
  if (s == "stationary") return ModelKind::Stationary;
  if (s == "nonstationary") return ModelKind::Nonstationary;
  throw UsageError("unknown model '" + s + "' (expected stationary|nonstationary)");
}

enum class Support { Real, Positive };

struct MhStep {
  Eigen::VectorXd state;
  double log_target = 0.0;
  bool accepted = false;
};

/// One joint Gaussian random-walk Metropolis step. Under Support::Positive a
/// proposal with any coordinate <= 0 is rejected without evaluating the
/// target. The number of random draws per call is fixed.
template <class LogTarget>
[[nodiscard]] MhStep mh_update(const Eigen::VectorXd& current, double current_log_target, LogTarget&& log_target,
                               const Eigen::VectorXd& proposal_sd, Rng& rng, Support support = Support::Positive) {
  if (!std::isfinite(current_log_target)) throw NumericalError("log target is not finite at the current state");
  if (proposal_sd.size() != current.size()) throw UsageError("proposal sd has wrong length");
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Eigen::VectorXd prop(current.size());
  for (Eigen::Index i = 0; i < current.size(); ++i) prop(i) = current(i) + proposal_sd(i) * normal(rng);
  const double u = unif(rng);

  if (support == Support::Positive && (prop.array() <= 0.0).any()) return {current, current_log_target, false};
  const double lp = log_target(prop);
  if (std::isnan(lp) || lp == -std::numeric_limits<double>::infinity()) return {current, current_log_target, false};
  const double log_ratio = lp - current_log_target;
  if (log_ratio >= 0.0 || std::log(u) < log_ratio) return {prop, lp, true};
  return {current, current_log_target, false};
}

template <class LogTarget>
[[nodiscard]] MhStep mh_update(const Eigen::VectorXd& current, LogTarget&& log_target, const Eigen::VectorXd& proposal_sd,
                               Rng& rng, Support support = Support::Positive) {
  const double lc = log_target(current);
  return mh_update(current, lc, std::forward<LogTarget>(log_target), proposal_sd, rng, support);
}

[[nodiscard]] inline double log_normal_pdf(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return -0.5 * z * z - std::log(sd) - 0.5 * std::log(2.0 * std::numbers::pi);
}

/// Independent Normal priors on the length scales, centred at the seeds.
struct LengthscalePriors {
  Eigen::VectorXd mean;
  Eigen::VectorXd sd;
};

/// Log-likelihood of the standardized outputs under the SQE GP plus the
/// Normal log-priors on every length scale.
[[nodiscard]] inline double log_posterior_outer(const Eigen::VectorXd& lengthscales, const Eigen::MatrixXd& x,
                                                const Eigen::VectorXd& y_std, const LengthscalePriors& priors,
                                                JitterLadder ladder = {}) {
  if ((lengthscales.array() <= 0.0).any()) throw DataError("length scales must be positive");
  const SqeKernel k(lengthscales);
  const auto chol = factorize_with_ladder(x, k, ladder);
  double lp = log_likelihood(chol, y_std);
  for (Eigen::Index m = 0; m < lengthscales.size(); ++m) lp += log_normal_pdf(lengthscales(m), priors.mean(m), priors.sd(m));
  return lp;
}

/// Inner-GP settings for the lookback windows.
struct InnerConfig {
  double delta_seed = 1.0;
  double delta_prior_sd = 10.0;
  double delta_proposal_sd = 0.2;
  JitterLadder ladder{};
};

/// The last T_L (iteration, value) pairs of one length scale together with
/// the current inner length scale delta of the GP fitted to them.
struct LookbackWindow {
  std::size_t capacity = 100;
  std::deque<long> index;
  std::deque<double> value;
  double delta = 1.0;
  double log_post = std::numeric_limits<double>::quiet_NaN();

  [[nodiscard]] std::size_t size() const { return value.size(); }
  [[nodiscard]] bool full() const { return value.size() == capacity; }

  void push(long t, double v) {
    if (!index.empty() && t != index.back() + 1) throw UsageError("lookback indices must be consecutive");
    if (!(v > 0.0)) throw DataError("lookback values must be positive");
    index.push_back(t);
    value.push_back(v);
    if (value.size() > capacity) {
      index.pop_front();
      value.pop_front();
    }
  }
};

/// Lower bound applied to every predicted length scale.
inline constexpr double kLengthscaleFloor = 1e-6;

namespace detail {

struct WindowData {
  Eigen::VectorXd z;  ///< standardized values
  double mean = 0.0;
  double sd = 0.0;
};

inline std::optional<WindowData> standardize_window(const LookbackWindow& w) {
  const auto n = static_cast<Eigen::Index>(w.size());
  if (n < 2) return std::nullopt;
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = w.value[static_cast<std::size_t>(i)];
  WindowData out;
  out.mean = v.mean();
  const double var = (v.array() - out.mean).square().sum() / static_cast<double>(n - 1);
  if (!(var >= 1e-12)) return std::nullopt;
  out.sd = std::sqrt(var);
  out.z = (v.array() - out.mean) / out.sd;
  return out;
}

/// Psi = [exp(-(t_a - t_b)^2 / delta)] over consecutive integer indices.
inline Eigen::MatrixXd index_corr(Eigen::Index n, double delta) {
  Eigen::MatrixXd psi(n, n);
  for (Eigen::Index a = 0; a < n; ++a) {
    for (Eigen::Index b = 0; b < n; ++b) {
      const double d = static_cast<double>(a - b);
      psi(a, b) = std::exp(-d * d / delta);
    }
  }
  return psi;
}

}  // namespace detail

/// Log posterior of the inner length scale given a window.
[[nodiscard]] inline double lookback_log_posterior(const LookbackWindow& w, double delta, const InnerConfig& cfg) {
  if (!(delta > 0.0)) throw DataError("inner length scale must be positive");
  auto data = detail::standardize_window(w);
  if (!data) throw DataError("degenerate lookback window");
  const auto chol = factorize_with_ladder(detail::index_corr(data->z.size(), delta), cfg.ladder);
  return log_likelihood(chol, data->z) + log_normal_pdf(delta, cfg.delta_seed, cfg.delta_prior_sd);
}

/// Closed-form GP mean at iteration `t` given the window, in the window's
/// original units and floored at kLengthscaleFloor. Empty when the window
/// has (numerically) zero variance.
[[nodiscard]] inline std::optional<double> lookback_predict(const LookbackWindow& w, long t, double delta,
                                                            const JitterLadder& ladder = {}) {
  auto data = detail::standardize_window(w);
  if (!data) return std::nullopt;
  const Eigen::Index n = data->z.size();
  const auto chol = factorize_with_ladder(detail::index_corr(n, delta), ladder);
  Eigen::VectorXd k(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double d = static_cast<double>(t - w.index[static_cast<std::size_t>(i)]);
    k(i) = std::exp(-d * d / delta);
  }
  const double mean_std = k.dot(chol.llt.solve(data->z));
  return std::max(data->mean + data->sd * mean_std, kLengthscaleFloor);
}

struct LookbackOutcome {
  double lengthscale = 0.0;  ///< value of l_m for iteration t
  double log_post = std::numeric_limits<double>::quiet_NaN();  ///< inner log posterior at the updated delta
  bool fallback = false;     ///< window was degenerate, value carried forward
};

/// One Gibbs block for a single input dimension at iteration t: MH-update
/// delta on the window (which ends at t - 1), predict E[g(t)], then slide
/// the window by appending (t, data_value). `data_value` is the length scale
/// produced by this iteration's data-driven update; the prediction becomes
/// the current length scale.
inline LookbackOutcome lookback_step(LookbackWindow& w, long t, double data_value, const InnerConfig& cfg, Rng& rng) {
  if (!w.full()) throw UsageError("lookback window is not full");
  if (w.index.back() != t - 1) throw UsageError("lookback window must end at t - 1");
  LookbackOutcome out;
  if (!detail::standardize_window(w)) {
    out.lengthscale = data_value;
    out.fallback = true;
  } else {
    Eigen::VectorXd cur(1);
    cur(0) = w.delta;
    Eigen::VectorXd sd(1);
    sd(0) = cfg.delta_proposal_sd;
    auto target = [&](const Eigen::VectorXd& d) { return lookback_log_posterior(w, d(0), cfg); };
    auto step = mh_update(cur, target(cur), target, sd, rng);
    w.delta = step.state(0);
    out.log_post = step.log_target;
    out.lengthscale = *lookback_predict(w, t, w.delta, cfg.ladder);
  }
  w.log_post = out.log_post;
  w.push(t, data_value);
  return out;
}

struct ChainConfig {
  std::size_t n_iter = 10000;
  std::size_t n_burn = 2000;
  std::size_t lookback = 100;
  std::vector<double> seeds;        ///< initial length scales and prior centres
  std::vector<double> prior_sd;     ///< empty: 10 x seed
  std::vector<double> proposal_sd;  ///< empty: 0.1 x seed
  InnerConfig inner{};
  double jitter = 1e-8;
  std::uint64_t rng_seed = 0;
  ModelKind model = ModelKind::Stationary;

  [[nodiscard]] Eigen::VectorXd resolved(const std::vector<double>& v, double factor, std::size_t d) const {
    Eigen::VectorXd out(static_cast<Eigen::Index>(d));
    for (std::size_t m = 0; m < d; ++m) out(static_cast<Eigen::Index>(m)) = v.empty() ? factor * seed(m) : v.at(m);
    return out;
  }

  [[nodiscard]] double seed(std::size_t m) const { return seeds.empty() ? 1.0 : seeds.at(m); }

  void validate(std::size_t d) const {
    if (n_burn >= n_iter) throw UsageError("n_burn must be smaller than n_iter");
    if (model == ModelKind::Nonstationary) {
      if (lookback < 2) throw UsageError("lookback must be at least 2");
      if (n_burn + lookback >= n_iter) throw UsageError("n_burn + lookback must be smaller than n_iter");
    }
    auto check = [&](const std::vector<double>& v, const char* what) {
      if (!v.empty() && v.size() != d) throw UsageError(std::string(what) + " needs " + std::to_string(d) + " entries");
      for (double x : v) {
        if (!(x > 0.0) || !std::isfinite(x)) throw UsageError(std::string(what) + " entries must be positive");
      }
    };
    check(seeds, "seeds");
    check(prior_sd, "prior_sd");
    check(proposal_sd, "proposal_sd");
    if (!(inner.delta_seed > 0.0 && inner.delta_prior_sd > 0.0 && inner.delta_proposal_sd > 0.0)) {
      throw UsageError("inner delta seed and sds must be positive");
    }
    if (!(jitter > 0.0)) throw UsageError("jitter must be positive");
  }
};

/// Per-iteration record, row-major over iterations.
struct ChainTrace {
  std::size_t dim = 0;
  std::vector<double> lengthscales;    ///< n_iter x dim
  std::vector<double> deltas;          ///< n_iter x dim, NaN until the windows fill
  std::vector<double> log_post_outer;  ///< n_iter
  std::vector<double> log_post_inner;  ///< n_iter x dim, NaN until the windows fill
  std::vector<char> accepted;          ///< outer MH acceptance

  [[nodiscard]] std::size_t size() const { return log_post_outer.size(); }
  [[nodiscard]] double lengthscale(std::size_t iter, std::size_t m) const { return lengthscales[iter * dim + m]; }
  [[nodiscard]] double delta(std::size_t iter, std::size_t m) const { return deltas[iter * dim + m]; }
};

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

/// Shortest interval spanning ceil(mass * n) of the sorted samples; ties go
/// to the lowest start.
[[nodiscard]] inline Interval hpd_interval(std::vector<double> samples, double mass = 0.95) {
  if (samples.size() < 50) throw DataError("hpd_interval needs at least 50 samples");
  if (!(mass > 0.0 && mass < 1.0)) throw UsageError("mass must lie in (0, 1)");
  std::sort(samples.begin(), samples.end());
  const std::size_t n = samples.size();
  auto k = static_cast<std::size_t>(std::ceil(mass * static_cast<double>(n) - 1e-9));
  k = std::clamp<std::size_t>(k, 1, n);
  std::size_t best = 0;
  double width = samples[k - 1] - samples[0];
  for (std::size_t i = 1; i + k <= n; ++i) {
    const double w = samples[i + k - 1] - samples[i];
    if (w < width) {
      width = w;
      best = i;
    }
  }
  return {samples[best], samples[best + k - 1]};
}

struct ParameterSummary {
  std::string name;
  double mean = 0.0;
  Interval hpd{};
  std::size_t n_samples = 0;
};

struct PosteriorSummary {
  std::vector<ParameterSummary> parameters;
  double acceptance_rate = 0.0;  ///< outer MH, after burn-in
  std::vector<std::string> warnings;
};

struct ChainResult {
  ChainTrace trace;
  PosteriorSummary summary;
};

/// Called after every iteration with the 0-based iteration and the trace so far.
using TraceObserver = std::function<void(std::size_t, const ChainTrace&)>;

namespace detail {

inline ParameterSummary summarize(std::string name, const std::vector<double>& s, std::vector<std::string>& warnings) {
  ParameterSummary p;
  p.name = std::move(name);
  p.n_samples = s.size();
  if (s.empty()) {
    p.mean = p.hpd.lo = p.hpd.hi = std::numeric_limits<double>::quiet_NaN();
    return p;
  }
  double sum = 0.0;
  for (double v : s) sum += v;
  p.mean = sum / static_cast<double>(s.size());
  if (s.size() >= 50) {
    p.hpd = hpd_interval(s);
    if (p.mean < p.hpd.lo || p.mean > p.hpd.hi) warnings.push_back(p.name + ": posterior mean lies outside its 95% HPD interval");
  } else {
    p.hpd = {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
    warnings.push_back(p.name + ": fewer than 50 samples, HPD interval not computed");
  }
  return p;
}

}  // namespace detail

/// Runs one chain on standardized outputs. Iterations are numbered t = 1..n_iter.
///
/// Non-stationary model: for t <= n_burn + lookback only the length scales
/// are updated; afterwards each iteration first MH-updates the length scales
/// given the data and then, per dimension, runs lookback_step, whose
/// prediction E[g_m(t)] becomes the current l_m.
[[nodiscard]] inline ChainResult run_chain(const ChainConfig& cfg, const Eigen::MatrixXd& x, const Eigen::VectorXd& y_std,
                                           const TraceObserver& observer = {}) {
  const auto d = static_cast<std::size_t>(x.cols());
  if (d == 0) throw DataError("model needs at least one input column");
  if (y_std.size() != x.rows()) throw DataError("inputs and outputs differ in length");
  cfg.validate(d);

  const JitterLadder ladder{cfg.jitter, 1e-4};
  const LengthscalePriors priors{cfg.resolved(cfg.seeds, 1.0, d), cfg.resolved(cfg.prior_sd, 10.0, d)};
  const Eigen::VectorXd prop_sd = cfg.resolved(cfg.proposal_sd, 0.1, d);
  InnerConfig inner = cfg.inner;
  inner.ladder = ladder;

  Rng rng(cfg.rng_seed);
  auto log_target = [&](const Eigen::VectorXd& l) { return log_posterior_outer(l, x, y_std, priors, ladder); };

  ChainResult res;
  ChainTrace& tr = res.trace;
  tr.dim = d;
  tr.lengthscales.reserve(cfg.n_iter * d);
  tr.deltas.reserve(cfg.n_iter * d);
  tr.log_post_inner.reserve(cfg.n_iter * d);
  tr.log_post_outer.reserve(cfg.n_iter);
  tr.accepted.reserve(cfg.n_iter);

  Eigen::VectorXd current = priors.mean;
  double current_lp = log_target(current);
  const std::size_t phase1_end = cfg.n_burn + cfg.lookback;  // last iteration of phase 1
  std::vector<LookbackWindow> windows;
  const double nan = std::numeric_limits<double>::quiet_NaN();

  std::size_t accepted_post_burn = 0;
  for (std::size_t t = 1; t <= cfg.n_iter; ++t) {
    try {
      auto step = mh_update(current, current_lp, log_target, prop_sd, rng);
      current = step.state;
      current_lp = step.log_target;
      tr.accepted.push_back(step.accepted ? 1 : 0);
      if (t > cfg.n_burn && step.accepted) ++accepted_post_burn;

      const bool phase2 = cfg.model == ModelKind::Nonstationary && t > phase1_end;
      if (phase2) {
        if (windows.empty()) {
          windows.resize(d);
          for (std::size_t m = 0; m < d; ++m) {
            windows[m].capacity = cfg.lookback;
            windows[m].delta = inner.delta_seed;
            for (std::size_t c = t - cfg.lookback; c < t; ++c) windows[m].push(static_cast<long>(c), tr.lengthscale(c - 1, m));
          }
        }
        Eigen::VectorXd next = current;
        for (std::size_t m = 0; m < d; ++m) {
          auto& w = windows[m];
          auto out = lookback_step(w, static_cast<long>(t), current(static_cast<Eigen::Index>(m)), inner, rng);
          next(static_cast<Eigen::Index>(m)) = out.lengthscale;
          tr.deltas.push_back(w.delta);
          tr.log_post_inner.push_back(out.log_post);
        }
        if (next != current) {
          current = next;
          current_lp = log_target(current);
        }
      } else {
        for (std::size_t m = 0; m < d; ++m) {
          tr.deltas.push_back(nan);
          tr.log_post_inner.push_back(nan);
        }
      }
      for (std::size_t m = 0; m < d; ++m) tr.lengthscales.push_back(current(static_cast<Eigen::Index>(m)));
      tr.log_post_outer.push_back(current_lp);
    } catch (const Error& e) {
      throw NumericalError("chain aborted at iteration " + std::to_string(t) + ": " + e.what());
    }
    if (observer) observer(t - 1, tr);
  }

  auto& sum = res.summary;
  sum.acceptance_rate = static_cast<double>(accepted_post_burn) / static_cast<double>(cfg.n_iter - cfg.n_burn);
  if (sum.acceptance_rate <= 0.05 || sum.acceptance_rate >= 0.9) {
    sum.warnings.push_back("post-burn-in acceptance rate " + std::to_string(sum.acceptance_rate) + " outside (0.05, 0.9)");
  }
  for (std::size_t m = 0; m < d; ++m) {
    std::vector<double> s;
    for (std::size_t i = cfg.n_burn; i < cfg.n_iter; ++i) s.push_back(tr.lengthscale(i, m));
    sum.parameters.push_back(detail::summarize("l_" + std::to_string(m + 1), s, sum.warnings));
  }
  if (cfg.model == ModelKind::Nonstationary) {
    for (std::size_t m = 0; m < d; ++m) {
      std::vector<double> s;
      for (std::size_t i = phase1_end; i < cfg.n_iter; ++i) s.push_back(tr.delta(i, m));
      sum.parameters.push_back(detail::summarize("delta_" + std::to_string(m + 1), s, sum.warnings));
    }
  }
  return res;
}

}  // namespace inhom
