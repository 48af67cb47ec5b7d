#pragma once

// Fitted GP regression models: fitting by MCMC, prediction at test inputs
// and JSON (de)serialization.

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "inhom/dataset.hpp"
#include "inhom/error.hpp"
#include "inhom/gp.hpp"
#include "inhom/inference.hpp"

namespace inhom {

struct FitOptions {
  /// Upper bound on the post-burn-in length-scale draws kept for the
  /// non-stationary predictive mixture (evenly thinned).
  std::size_t max_samples = 200;
  /// Training neighbours used to weight the mixture at each test input.
  std::size_t neighbours = 10;
};

struct FittedModel {
  ModelKind kind = ModelKind::Stationary;
  std::vector<std::string> input_names;
  std::string output_name;
  Eigen::VectorXd lengthscales;  ///< posterior means
  Eigen::VectorXd deltas;        ///< non-stationary only
  double jitter = 1e-8;
  OutputScale scale{};
  std::uint64_t fingerprint = 0;
  Eigen::MatrixXd train_inputs;
  Eigen::VectorXd train_outputs;  ///< original units
  std::vector<Eigen::VectorXd> samples;
  std::size_t neighbours = 10;
  PosteriorSummary summary;
};

namespace detail {

inline Eigen::VectorXd standardized(const FittedModel& m) {
  return (m.train_outputs.array() - m.scale.mean) / m.scale.sd;
}

inline std::vector<std::size_t> nearest_rows(const Eigen::MatrixXd& x, const Eigen::VectorXd& xt, const Eigen::VectorXd& ls,
                                             std::size_t k) {
  std::vector<double> dist(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    dist[static_cast<std::size_t>(i)] = ((x.row(i).transpose() - xt).array().square() / ls.array()).sum();
  }
  std::vector<std::size_t> idx(dist.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  k = std::min(k, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), [&](std::size_t a, std::size_t b) {
    return dist[a] < dist[b] || (dist[a] == dist[b] && a < b);
  });
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace detail

/// Runs the chain on `train` (scalar output) and condenses it into a model.
[[nodiscard]] inline FittedModel fit_model(const Dataset& train, const ChainConfig& cfg, const FitOptions& opts = {},
                                           ChainResult* chain_out = nullptr, const TraceObserver& observer = {}) {
  train.validate(2);
  if (train.output_dim() != 1) throw DataError("GP regression needs exactly one output column");
  if (train.input_dim() == 0) throw DataError("GP regression needs at least one input column");
  const StandardizedOutputs so = standardize(train);
  ChainResult chain = run_chain(cfg, train.inputs, so.values.col(0), observer);

  FittedModel m;
  m.kind = cfg.model;
  m.input_names = train.input_names;
  m.output_name = train.output_names.front();
  m.jitter = cfg.jitter;
  m.scale = {so.mean(0), so.sd(0)};
  m.fingerprint = fingerprint(train);
  m.train_inputs = train.inputs;
  m.train_outputs = train.outputs.col(0);
  m.neighbours = opts.neighbours;
  m.summary = chain.summary;

  const std::size_t d = train.input_dim();
  m.lengthscales.resize(static_cast<Eigen::Index>(d));
  for (std::size_t k = 0; k < d; ++k) m.lengthscales(static_cast<Eigen::Index>(k)) = chain.summary.parameters[k].mean;
  if (cfg.model == ModelKind::Nonstationary) {
    m.deltas.resize(static_cast<Eigen::Index>(d));
    for (std::size_t k = 0; k < d; ++k) m.deltas(static_cast<Eigen::Index>(k)) = chain.summary.parameters[d + k].mean;
    // draws of g_m(t) once the lookback GPs are running
    const std::size_t first = cfg.n_burn + cfg.lookback;
    const std::size_t count = cfg.n_iter - first;
    const std::size_t keep = std::min(count, std::max<std::size_t>(opts.max_samples, 1));
    for (std::size_t s = 0; s < keep; ++s) {
      const std::size_t it = first + (s * count) / keep;
      Eigen::VectorXd v(static_cast<Eigen::Index>(d));
      for (std::size_t k = 0; k < d; ++k) v(static_cast<Eigen::Index>(k)) = chain.trace.lengthscale(it, k);
      m.samples.push_back(std::move(v));
    }
  }
  if (chain_out) *chain_out = std::move(chain);
  return m;
}

/// Predictions in original output units, one per row of `x_test`.
///
/// Stationary: the GP with the posterior-mean length scales. Non-stationary:
/// each retained draw of the length-scale process is a candidate local
/// kernel; at every test input the draws are weighted by the marginal
/// likelihood of the nearest training outputs under that draw, and the
/// predictive is the moment-matched weighted mixture of the per-draw GPs.
[[nodiscard]] inline std::vector<GpPrediction> predict(const FittedModel& m, const Eigen::MatrixXd& x_test) {
  if (x_test.cols() != m.train_inputs.cols()) throw DataError("test inputs have the wrong number of columns");
  const Eigen::VectorXd y = detail::standardized(m);
  const JitterLadder ladder{m.jitter, 1e-4};
  std::vector<GpPrediction> out(static_cast<std::size_t>(x_test.rows()));

  if (m.kind == ModelKind::Stationary || m.samples.empty()) {
    const auto post = GpPosterior::with_ladder(m.train_inputs, y, SqeKernel(m.lengthscales), ladder);
    for (Eigen::Index i = 0; i < x_test.rows(); ++i) out[static_cast<std::size_t>(i)] = post.predict(x_test.row(i).transpose(), m.scale);
    return out;
  }

  const std::size_t s_count = m.samples.size();
  std::vector<GpPosterior> posts;
  posts.reserve(s_count);
  for (const auto& s : m.samples) posts.push_back(GpPosterior::with_ladder(m.train_inputs, y, SqeKernel(s), ladder));

  for (Eigen::Index i = 0; i < x_test.rows(); ++i) {
    const Eigen::VectorXd xt = x_test.row(i).transpose();
    const auto nb = detail::nearest_rows(m.train_inputs, xt, m.lengthscales, std::max<std::size_t>(m.neighbours, 1));
    Eigen::MatrixXd xn(static_cast<Eigen::Index>(nb.size()), m.train_inputs.cols());
    Eigen::VectorXd yn(static_cast<Eigen::Index>(nb.size()));
    for (std::size_t k = 0; k < nb.size(); ++k) {
      xn.row(static_cast<Eigen::Index>(k)) = m.train_inputs.row(static_cast<Eigen::Index>(nb[k]));
      yn(static_cast<Eigen::Index>(k)) = y(static_cast<Eigen::Index>(nb[k]));
    }
    std::vector<double> logw(s_count);
    std::vector<GpPrediction> preds(s_count);
    for (std::size_t s = 0; s < s_count; ++s) {
      logw[s] = log_likelihood(factorize_with_ladder(xn, SqeKernel(m.samples[s]), ladder), yn);
      preds[s] = posts[s].predict(xt);
    }
    const double top = *std::max_element(logw.begin(), logw.end());
    double wsum = 0.0;
    double mean = 0.0;
    double second = 0.0;
    for (std::size_t s = 0; s < s_count; ++s) {
      const double w = std::exp(logw[s] - top);
      wsum += w;
      mean += w * preds[s].mean;
      second += w * (preds[s].variance + preds[s].mean * preds[s].mean);
    }
    mean /= wsum;
    const double var = std::max(second / wsum - mean * mean, 0.0);
    out[static_cast<std::size_t>(i)] = {mean * m.scale.sd + m.scale.mean, var * m.scale.sd * m.scale.sd};
  }
  return out;
}

namespace detail {

inline nlohmann::json to_json(const Eigen::VectorXd& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline Eigen::VectorXd vector_from_json(const nlohmann::json& a) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) v(static_cast<Eigen::Index>(i)) = a.at(i).get<double>();
  return v;
}

inline std::string hex64(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline nlohmann::json nan_as_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

}  // namespace detail

[[nodiscard]] inline nlohmann::json summary_to_json(const PosteriorSummary& s) {
  nlohmann::json j;
  j["acceptance_rate"] = s.acceptance_rate;
  j["warnings"] = s.warnings;
  nlohmann::json params = nlohmann::json::object();
  for (const auto& p : s.parameters) {
    params[p.name] = {{"mean", detail::nan_as_null(p.mean)},
                      {"hpd95", {detail::nan_as_null(p.hpd.lo), detail::nan_as_null(p.hpd.hi)}},
                      {"n_samples", p.n_samples}};
  }
  j["parameters"] = params;
  return j;
}

[[nodiscard]] inline nlohmann::json model_to_json(const FittedModel& m) {
  nlohmann::json j;
  j["model"] = to_string(m.kind);
  j["input_names"] = m.input_names;
  j["output_name"] = m.output_name;
  j["lengthscales"] = detail::to_json(m.lengthscales);
  if (m.kind == ModelKind::Nonstationary) j["deltas"] = detail::to_json(m.deltas);
  j["jitter"] = m.jitter;
  j["standardization"] = {{"mean", m.scale.mean}, {"sd", m.scale.sd}};
  j["fingerprint"] = detail::hex64(m.fingerprint);
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.train_inputs.rows(); ++i) rows.push_back(detail::to_json(m.train_inputs.row(i).transpose()));
  j["training"] = {{"inputs", rows}, {"outputs", detail::to_json(m.train_outputs)}};
  nlohmann::json samples = nlohmann::json::array();
  for (const auto& s : m.samples) samples.push_back(detail::to_json(s));
  j["samples"] = samples;
  j["neighbours"] = m.neighbours;
  j["summary"] = summary_to_json(m.summary);
  return j;
}

[[nodiscard]] inline FittedModel model_from_json(const nlohmann::json& j) {
  try {
    FittedModel m;
    m.kind = parse_model_kind(j.at("model").get<std::string>());
    m.input_names = j.at("input_names").get<std::vector<std::string>>();
    m.output_name = j.at("output_name").get<std::string>();
    m.lengthscales = detail::vector_from_json(j.at("lengthscales"));
    if (j.contains("deltas")) m.deltas = detail::vector_from_json(j.at("deltas"));
    m.jitter = j.at("jitter").get<double>();
    m.scale = {j.at("standardization").at("mean").get<double>(), j.at("standardization").at("sd").get<double>()};
    m.fingerprint = std::stoull(j.at("fingerprint").get<std::string>(), nullptr, 16);
    const auto& rows = j.at("training").at("inputs");
    const auto d = static_cast<Eigen::Index>(m.input_names.size());
    m.train_inputs.resize(static_cast<Eigen::Index>(rows.size()), d);
    for (std::size_t i = 0; i < rows.size(); ++i) m.train_inputs.row(static_cast<Eigen::Index>(i)) = detail::vector_from_json(rows[i]).transpose();
    m.train_outputs = detail::vector_from_json(j.at("training").at("outputs"));
    for (const auto& s : j.at("samples")) m.samples.push_back(detail::vector_from_json(s));
    m.neighbours = j.value("neighbours", std::size_t{10});
    if (m.lengthscales.size() != d || m.train_outputs.size() != m.train_inputs.rows()) throw DataError("inconsistent model dimensions");

    Dataset check;
    check.inputs = m.train_inputs;
    check.outputs = m.train_outputs;
    if (fingerprint(check) != m.fingerprint) throw DataError("model training data does not match its fingerprint");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed model file: ") + e.what());
  }
}

}  // namespace inhom
