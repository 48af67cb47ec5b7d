#pragma once

// Command-line front end: subcommand parsing, config merging, seeding and
// the end-to-end pipeline.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "inhom/config.hpp"
#include "inhom/dataset.hpp"
#include "inhom/error.hpp"
#include "inhom/evaluation.hpp"
#include "inhom/inference.hpp"
#include "inhom/inhomogeneity.hpp"
#include "inhom/model.hpp"
#include "inhom/rng.hpp"
#include "inhom/stationarity.hpp"
#include "inhom/synth.hpp"

namespace inhom::cli {

namespace fs = std::filesystem;
using nlohmann::json;

/// Environment variable naming the directory for outputs whose path is not
/// given explicitly.
inline constexpr const char* kOutDirEnv = "INHOM_OUT_DIR";

[[nodiscard]] inline fs::path default_output(const std::string& name) {
  const char* dir = std::getenv(kOutDirEnv);
  return dir && *dir ? fs::path(dir) / name : fs::path(name);
}

/// Values bound to the command-line options, one block per subcommand.
struct Options {
  std::uint64_t seed = 0;
  int verbosity = 0;
  std::string config;

  // shared data flags
  std::string input;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::string shape;
  std::string out;

  // inhom
  double delta = 0.05;
  double beta = 0.1;
  std::string delta_file;
  std::string estimator = "windowed";
  std::size_t half_width = 5;
  std::string lvalues;

  // adf
  std::string column;
  std::size_t max_lag = 0;
  std::string lag_rule = "aic";

  // fit / pipeline
  std::string model = "stationary";
  std::string trace;
  std::size_t n_iter = 10000;
  std::size_t n_burn = 2000;
  std::size_t lookback = 100;
  double jitter = 1e-8;
  std::vector<double> seeds;
  std::vector<double> prior_sd;
  std::vector<double> proposal_sd;
  std::string train;
  std::string test;
  std::vector<std::string> models{"stationary", "nonstationary"};
  std::string out_dir;

  // predict / evaluate
  std::string model_path;
  std::string predictions;

  // synth
  std::string kind = "stationary-gp";
  std::size_t n = 500;
  std::string noise_out;
};

struct App {
  std::unique_ptr<CLI::App> app;
  Options opt;
  CLI::App* inhom = nullptr;
  CLI::App* adf = nullptr;
  CLI::App* fit = nullptr;
  CLI::App* predict = nullptr;
  CLI::App* evaluate = nullptr;
  CLI::App* synth = nullptr;
  CLI::App* pipeline = nullptr;
};

namespace detail {

inline void add_chain_flags(CLI::App* sc, Options& o) {
  sc->add_option("--config", o.config, "key/value run configuration (TOML syntax)")->check(CLI::ExistingFile);
  sc->add_option("--seed", o.seed, "global random seed")->capture_default_str();
  sc->add_option("--n-iter", o.n_iter, "MCMC iterations (overrides config)")->capture_default_str();
  sc->add_option("--n-burn", o.n_burn, "burn-in iterations (overrides config)")->capture_default_str();
  sc->add_option("--lookback", o.lookback, "lookback window length T_L (overrides config)")->capture_default_str();
  sc->add_option("--jitter", o.jitter, "initial diagonal jitter (overrides config)")->capture_default_str();
  sc->add_option("--seeds", o.seeds, "initial length scales, one per input (default 1.0 each)")->delimiter(',');
  sc->add_option("--prior-sd", o.prior_sd, "prior sds of the length scales (default 10 x seed)")->delimiter(',');
  sc->add_option("--proposal-sd", o.proposal_sd, "random-walk proposal sds (default 0.1 x seed)")->delimiter(',');
  sc->add_flag("-v,--verbose", o.verbosity, "print an iteration counter to stderr");
}

}  // namespace detail

[[nodiscard]] inline App build_app() {
  App a;
  a.app = std::make_unique<CLI::App>("Inhomogeneity of training data and stationary vs non-stationary GP regression",
                                     "inhom-cli");
  a.app->require_subcommand(1);
  a.app->set_version_flag("--version", "inhom-cli 1.0");
  Options& o = a.opt;

  a.inhom = a.app->add_subcommand("inhom", "inhomogeneity parameter p_D of a dataset");
  a.inhom->add_option("--input", o.input, "dataset CSV")->required()->check(CLI::ExistingFile);
  a.inhom->add_option("--outputs", o.outputs, "output columns")->required()->delimiter(',');
  a.inhom->add_option("--inputs", o.inputs, "input columns (ignored: inputs are replaced by their index)")->delimiter(',');
  a.inhom->add_option("--shape", o.shape, "output tensor shape, e.g. 3x4");
  auto* d = a.inhom->add_option("--delta", o.delta, "constant band half-width")->capture_default_str();
  auto* b = a.inhom->add_option("--beta", o.beta, "proportional band half-width beta * L_i")->capture_default_str();
  auto* df = a.inhom->add_option("--delta-file", o.delta_file, "CSV with a 'delta' column, one per L-value")
                 ->check(CLI::ExistingFile);
  d->excludes(b)->excludes(df);
  b->excludes(df);
  a.inhom->add_option("--estimator", o.estimator, "correlation estimator")
      ->check(CLI::IsMember({"windowed", "tensor"}))
      ->capture_default_str();
  a.inhom->add_option("--half-width", o.half_width, "windowed estimator half-width h")->capture_default_str();
  a.inhom->add_option("--config", o.config, "key/value run configuration (TOML syntax)")->check(CLI::ExistingFile);
  a.inhom->add_option("--out", o.out, "report JSON (default report.json)");
  a.inhom->add_option("--lvalues", o.lvalues, "L-value CSV (default lvalues.csv)");

  a.adf = a.app->add_subcommand("adf", "augmented Dickey-Fuller unit-root test");
  a.adf->add_option("--input", o.input, "dataset CSV")->required()->check(CLI::ExistingFile);
  a.adf->add_option("--column", o.column, "series column")->required();
  a.adf->add_option("--max-lag", o.max_lag, "maximum lag (default 12 (n/100)^(1/4))");
  a.adf->add_option("--lag-rule", o.lag_rule, "lag selection")->check(CLI::IsMember({"aic", "fixed"}))->capture_default_str();
  a.adf->add_option("--config", o.config, "key/value run configuration (TOML syntax)")->check(CLI::ExistingFile);
  a.adf->add_option("--out", o.out, "result JSON (default adf.json)");

  a.fit = a.app->add_subcommand("fit", "fit a GP regression model by MCMC");
  a.fit->add_option("--model", o.model, "model kind")
      ->check(CLI::IsMember({"stationary", "nonstationary"}))
      ->capture_default_str();
  a.fit->add_option("--input", o.input, "training CSV")->required()->check(CLI::ExistingFile);
  a.fit->add_option("--inputs", o.inputs, "input columns (default: all but the output)")->delimiter(',');
  a.fit->add_option("--outputs", o.outputs, "output column (default: last column)")->delimiter(',');
  a.fit->add_option("--out", o.out, "model JSON (default model.json)");
  a.fit->add_option("--trace", o.trace, "trace CSV (default trace.csv)");
  detail::add_chain_flags(a.fit, o);

  a.predict = a.app->add_subcommand("predict", "predict at test inputs with a fitted model");
  a.predict->add_option("--model", o.model_path, "model JSON")->required()->check(CLI::ExistingFile);
  a.predict->add_option("--test", o.test, "test CSV (the output column, if present, is kept as truth)")
      ->required()
      ->check(CLI::ExistingFile);
  a.predict->add_option("--out", o.out, "predictions CSV (default predictions.csv)");

  a.evaluate = a.app->add_subcommand("evaluate", "RMSE and compatibility of a predictions file");
  a.evaluate->add_option("--predictions", o.predictions, "predictions CSV")->required()->check(CLI::ExistingFile);
  a.evaluate->add_option("--out", o.out, "summary JSON (default summary.json)");

  a.synth = a.app->add_subcommand("synth", "generate a seeded synthetic dataset");
  a.synth->add_option("--kind", o.kind, "generator")
      ->check(CLI::IsMember({"stationary-gp", "piecewise-gp", "unit-root", "noisy-trend"}))
      ->capture_default_str();
  a.synth->add_option("--n", o.n, "number of points (default per kind)");
  a.synth->add_option("--seed", o.seed, "global random seed")->capture_default_str();
  a.synth->add_option("--out", o.out, "dataset CSV (default data.csv)");
  a.synth->add_option("--noise-out", o.noise_out, "noisy-trend: per-L-value band half-widths CSV");

  a.pipeline = a.app->add_subcommand("pipeline", "fit, predict and compare models on a train/test split");
  a.pipeline->add_option("--train", o.train, "training CSV")->required()->check(CLI::ExistingFile);
  a.pipeline->add_option("--test", o.test, "test CSV")->required()->check(CLI::ExistingFile);
  a.pipeline->add_option("--inputs", o.inputs, "input columns (default: all but the output)")->delimiter(',');
  a.pipeline->add_option("--outputs", o.outputs, "output column (default: last column)")->delimiter(',');
  a.pipeline->add_option("--models", o.models, "models to compare")
      ->delimiter(',')
      ->check(CLI::IsMember({"stationary", "nonstationary"}))
      ->capture_default_str();
  a.pipeline->add_option("--out-dir", o.out_dir, "output directory (default $INHOM_OUT_DIR or .)");
  detail::add_chain_flags(a.pipeline, o);
  return a;
}

namespace detail {

inline std::vector<std::string> csv_header(const fs::path& path) {
  std::ifstream in(path);
  std::string line;
  if (!in || !std::getline(in, line)) throw DataError("cannot read header of '" + path.string() + "'");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return inhom::detail::split_csv_line(line);
}

/// Regression schema: one output column; inputs default to every other column.
inline CsvSchema regression_schema(const fs::path& path, const std::vector<std::string>& inputs,
                                   const std::vector<std::string>& outputs) {
  const auto header = csv_header(path);
  if (header.empty()) throw DataError("'" + path.string() + "' has no columns");
  CsvSchema s;
  s.outputs = outputs.empty() ? std::vector<std::string>{header.back()} : outputs;
  if (s.outputs.size() != 1) throw UsageError("GP regression takes exactly one output column");
  if (inputs.empty()) {
    for (const auto& h : header) {
      if (h != s.outputs.front()) s.inputs.push_back(h);
    }
  } else {
    s.inputs = inputs;
  }
  return s;
}

/// Loads the model's input columns and, when the file has it, the output
/// column as truth.
inline std::pair<Eigen::MatrixXd, std::optional<Eigen::VectorXd>> load_test(const fs::path& path, const FittedModel& m) {
  const auto header = csv_header(path);
  const bool has_truth = std::find(header.begin(), header.end(), m.output_name) != header.end();
  CsvSchema s;
  if (has_truth) {
    s.inputs = m.input_names;
    s.outputs = {m.output_name};
    Dataset ds = load_csv(path, s, 1);
    return {ds.inputs, Eigen::VectorXd(ds.outputs.col(0))};
  }
  // no truth column: read the inputs through the output slot
  s.outputs = m.input_names;
  s.shape = {m.input_names.size()};
  Dataset ds = load_csv(path, s, 1);
  return {ds.outputs, std::nullopt};
}

inline PredictionSet make_prediction_set(const FittedModel& m, const Eigen::MatrixXd& x,
                                         const std::optional<Eigen::VectorXd>& truth) {
  const auto preds = predict(m, x);
  PredictionSet ps;
  ps.input_names = m.input_names;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    PredictionRow r;
    for (Eigen::Index j = 0; j < x.cols(); ++j) r.x.push_back(x(i, j));
    if (truth) r.truth = (*truth)(i);
    r.mean = preds[static_cast<std::size_t>(i)].mean;
    r.sd = std::sqrt(preds[static_cast<std::size_t>(i)].variance);
    ps.rows.push_back(std::move(r));
  }
  return ps;
}

inline RunConfig base_config(const Options& o) {
  return o.config.empty() ? RunConfig{} : load_config(o.config);
}

/// Command-line values win over the config file for every flag given.
inline void apply_chain_flags(const CLI::App& sc, const Options& o, RunConfig& rc) {
  if (sc.count("--seed")) rc.rng_seed = o.seed;
  if (sc.count("--n-iter")) rc.chain.n_iter = o.n_iter;
  if (sc.count("--n-burn")) rc.chain.n_burn = o.n_burn;
  if (sc.count("--lookback")) rc.chain.lookback = o.lookback;
  if (sc.count("--jitter")) rc.chain.jitter = o.jitter;
  if (sc.count("--seeds")) rc.chain.seeds = o.seeds;
  if (sc.count("--prior-sd")) rc.chain.prior_sd = o.prior_sd;
  if (sc.count("--proposal-sd")) rc.chain.proposal_sd = o.proposal_sd;
  if (sc.count("--verbose")) rc.verbosity = o.verbosity;
}

inline ChainConfig chain_for(const RunConfig& rc, ModelKind kind) {
  ChainConfig c = rc.chain;
  c.model = kind;
  c.rng_seed = derive_seed(rc.rng_seed, std::string("chain/") + to_string(kind));
  return c;
}

inline void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw DataError("failed writing '" + path.string() + "'");
}

inline void write_json_file(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

/// Streams the trace: the header first, then one row per iteration.
class TraceWriter {
 public:
  TraceWriter(const fs::path& path, std::size_t d, ModelKind kind) : nonstationary_(kind == ModelKind::Nonstationary) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    out_.open(path, std::ios::binary);
    if (!out_) throw DataError("cannot write '" + path.string() + "'");
    out_ << "iter";
    for (std::size_t m = 1; m <= d; ++m) out_ << ",l_" << m;
    if (nonstationary_) for (std::size_t m = 1; m <= d; ++m) out_ << ",delta_" << m;
    out_ << ",log_post_outer";
    if (nonstationary_) for (std::size_t m = 1; m <= d; ++m) out_ << ",log_post_inner_" << m;
    out_ << '\n';
  }

  void operator()(std::size_t it, const ChainTrace& tr) {
    auto cell = [](double v) { return std::isfinite(v) ? inhom::detail::format_double(v) : std::string(); };
    out_ << (it + 1);
    for (std::size_t m = 0; m < tr.dim; ++m) out_ << ',' << cell(tr.lengthscale(it, m));
    if (nonstationary_) for (std::size_t m = 0; m < tr.dim; ++m) out_ << ',' << cell(tr.delta(it, m));
    out_ << ',' << cell(tr.log_post_outer[it]);
    if (nonstationary_) for (std::size_t m = 0; m < tr.dim; ++m) out_ << ',' << cell(tr.log_post_inner[it * tr.dim + m]);
    out_ << '\n';
    if ((it + 1) % 1000 == 0) out_.flush();
  }

 private:
  std::ofstream out_;
  bool nonstationary_;
};

inline TraceObserver progress(int verbosity, std::size_t n_iter, const std::string& label, std::ostream& err) {
  if (verbosity <= 0) return {};
  return [&err, n_iter, label](std::size_t it, const ChainTrace&) {
    if ((it + 1) % 1000 == 0 || it + 1 == n_iter) err << label << ": iteration " << (it + 1) << "/" << n_iter << '\n';
  };
}

inline json chain_config_json(const ChainConfig& c) {
  return {{"model", to_string(c.model)},
          {"n_iter", c.n_iter},
          {"n_burn", c.n_burn},
          {"lookback", c.lookback},
          {"jitter", c.jitter},
          {"seeds", c.seeds},
          {"prior_sd", c.prior_sd},
          {"proposal_sd", c.proposal_sd},
          {"rng_seed", c.rng_seed},
          {"inner",
           {{"delta_seed", c.inner.delta_seed},
            {"delta_prior_sd", c.inner.delta_prior_sd},
            {"delta_proposal_sd", c.inner.delta_proposal_sd}}}};
}

}  // namespace detail

inline int run_inhom(const App& a, std::ostream& out) {
  const Options& o = a.opt;
  RunConfig rc = detail::base_config(o);
  const CLI::App& sc = *a.inhom;
  if (sc.count("--estimator")) rc.estimator.kind = o.estimator == "tensor" ? CorrEstimator::ElementwiseTensor : CorrEstimator::WindowedPairs;
  if (sc.count("--half-width")) rc.estimator.half_width = o.half_width;
  if (sc.count("--delta")) rc.tolerance = ToleranceConfig::constant(o.delta);
  if (sc.count("--beta")) rc.tolerance = ToleranceConfig::proportional(o.beta);

  CsvSchema schema{o.inputs, o.outputs, o.shape.empty() ? std::vector<std::size_t>{} : parse_shape(o.shape)};
  const Dataset ds = load_csv(o.input, schema);
  if (!o.delta_file.empty()) {
    CsvSchema ds_schema{{}, {"delta"}, {}};
    const Dataset deltas = load_csv(o.delta_file, ds_schema, 1);
    std::vector<double> v(deltas.outputs.data(), deltas.outputs.data() + deltas.outputs.rows());
    rc.tolerance = ToleranceConfig::explicit_bands(std::move(v));
  }
  if (rc.estimator.kind == CorrEstimator::WindowedPairs && ds.output_dim() != 1) {
    throw UsageError("the windowed estimator needs exactly one output column; use --estimator tensor");
  }
  const auto so = standardize(ds);
  const auto ls = l_series(reduce(ds), so, rc.estimator, rc.tolerance);
  const auto rep = inhomogeneity_parameter(ls);

  json cfg = {{"estimator", to_string(rc.estimator.kind)},
              {"half_width", rc.estimator.half_width},
              {"tolerance", to_string(rc.tolerance.mode)}};
  if (rc.tolerance.mode == ToleranceMode::Constant) cfg["delta"] = rc.tolerance.delta;
  if (rc.tolerance.mode == ToleranceMode::Proportional) cfg["beta"] = rc.tolerance.beta;
  if (rc.tolerance.mode == ToleranceMode::PerIndex) cfg["delta_file"] = o.delta_file;
  json report = {{"n", rep.n}, {"m", rep.m}, {"p", rep.p}, {"incompatible_indices", rep.incompatible}, {"config", cfg}};
  const fs::path report_path = o.out.empty() ? default_output("report.json") : fs::path(o.out);
  detail::write_json_file(report_path, report);

  std::ostringstream csv;
  csv << "index,L,band_lo,band_hi,incompatible\n";
  std::vector<char> flag(ls.size(), 0);
  for (auto i : rep.incompatible) flag[i - 1] = 1;
  for (std::size_t k = 0; k < ls.size(); ++k) {
    csv << (k + 1) << ',' << inhom::detail::format_double(ls.values[k]) << ',' << inhom::detail::format_double(ls.bands[k].lo)
        << ',' << inhom::detail::format_double(ls.bands[k].hi) << ',' << int(flag[k]) << '\n';
  }
  detail::write_text(o.lvalues.empty() ? default_output("lvalues.csv") : fs::path(o.lvalues), csv.str());
  out << report.dump(2) << '\n';
  return 0;
}

inline int run_adf(const App& a, std::ostream& out) {
  const Options& o = a.opt;
  RunConfig rc = detail::base_config(o);
  if (a.adf->count("--max-lag")) rc.adf_max_lag = o.max_lag;
  if (a.adf->count("--lag-rule")) rc.adf_lag_rule = o.lag_rule == "fixed" ? LagRule::Fixed : LagRule::Aic;
  const Dataset ds = load_csv(o.input, CsvSchema{{}, {o.column}, {}});
  std::vector<double> y(ds.outputs.data(), ds.outputs.data() + ds.outputs.rows());
  const AdfResult r = adf_test(y, rc.adf_max_lag, rc.adf_lag_rule);
  json reject = json::array();
  for (auto s : r.reject_at) reject.push_back(to_string(s));
  json j = {{"statistic", r.statistic},
            {"lags_used", r.lags_used},
            {"n_effective", r.n_effective},
            {"reject_at", reject},
            {"p_value", r.p_value ? json(*r.p_value) : json(nullptr)},
            {"critical_values", {{"1%", -3.430}, {"5%", -2.862}, {"10%", -2.567}}}};
  detail::write_json_file(o.out.empty() ? default_output("adf.json") : fs::path(o.out), j);
  out << j.dump(2) << '\n';
  return 0;
}

inline int run_fit(const App& a, std::ostream& out, std::ostream& err) {
  const Options& o = a.opt;
  RunConfig rc = detail::base_config(o);
  detail::apply_chain_flags(*a.fit, o, rc);
  const ModelKind kind = a.fit->count("--model") ? parse_model_kind(o.model) : rc.chain.model;
  const Dataset train = load_csv(o.input, detail::regression_schema(o.input, o.inputs, o.outputs));
  const ChainConfig cfg = detail::chain_for(rc, kind);
  cfg.validate(train.input_dim());

  detail::TraceWriter trace(o.trace.empty() ? default_output("trace.csv") : fs::path(o.trace), train.input_dim(), kind);
  auto prog = detail::progress(rc.verbosity, cfg.n_iter, to_string(kind), err);
  const FittedModel m = fit_model(train, cfg, {rc.max_samples, rc.neighbours}, nullptr, [&](std::size_t it, const ChainTrace& tr) {
    trace(it, tr);
    if (prog) prog(it, tr);
  });
  json j = model_to_json(m);
  j["chain"] = detail::chain_config_json(cfg);
  detail::write_json_file(o.out.empty() ? default_output("model.json") : fs::path(o.out), j);
  out << json{{"model", to_string(kind)}, {"summary", j["summary"]}}.dump(2) << '\n';
  return 0;
}

inline FittedModel read_model(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open model '" + path.string() + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError("model file is not valid JSON: " + std::string(e.what()));
  }
  return model_from_json(j);
}

inline int run_predict(const App& a, std::ostream& out) {
  const Options& o = a.opt;
  const FittedModel m = read_model(o.model_path);
  const auto [x, truth] = detail::load_test(o.test, m);
  const PredictionSet ps = detail::make_prediction_set(m, x, truth);
  const fs::path path = o.out.empty() ? default_output("predictions.csv") : fs::path(o.out);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_predictions_csv(ps, path);
  out << "wrote " << ps.size() << " predictions to " << path.string() << '\n';
  return 0;
}

inline int run_evaluate(const App& a, std::ostream& out) {
  const Options& o = a.opt;
  const PredictionSet ps = read_predictions_csv(o.predictions);
  const Metrics m = score(ps);
  const json j = metrics_json(m, fs::path(o.predictions).stem().string());
  detail::write_json_file(o.out.empty() ? default_output("summary.json") : fs::path(o.out), j);
  out << j.dump(2) << '\n';
  return 0;
}

inline int run_synth(const App& a, std::ostream& out) {
  const Options& o = a.opt;
  const SynthKind kind = parse_synth_kind(o.kind);
  SynthSpec spec = SynthSpec::defaults_for(kind);
  if (a.synth->count("--n")) spec.n = o.n;
  spec.rng_seed = derive_seed(o.seed, "synth/" + o.kind);
  const fs::path path = o.out.empty() ? default_output("data.csv") : fs::path(o.out);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  Dataset ds;
  switch (kind) {
    case SynthKind::StationaryGp: ds = sample_gp(spec); break;
    case SynthKind::PiecewiseGp: ds = sample_piecewise_gp(spec); break;
    case SynthKind::UnitRoot: ds = sample_unit_root(spec); break;
    case SynthKind::NoisyTrend: {
      auto s = sample_example1_like(spec);
      ds = std::move(s.data);
      if (!o.noise_out.empty()) {
        std::ostringstream csv;
        csv << "index,delta\n";
        const auto d = pairwise_max_noise(s.max_noise);
        for (std::size_t i = 0; i < d.size(); ++i) csv << (i + 1) << ',' << inhom::detail::format_double(d[i]) << '\n';
        detail::write_text(o.noise_out, csv.str());
      }
      break;
    }
  }
  if (!o.noise_out.empty() && kind != SynthKind::NoisyTrend) throw UsageError("--noise-out applies to --kind noisy-trend only");
  write_csv(ds, path);
  out << "wrote " << ds.size() << " rows to " << path.string() << '\n';
  return 0;
}

/// Fits each requested model on the training file (concurrently, one chain
/// per worker), predicts the test file and writes a model x metric table.
inline int run_pipeline(const App& a, std::ostream& out, std::ostream& err) {
  const Options& o = a.opt;
  RunConfig rc = detail::base_config(o);
  detail::apply_chain_flags(*a.pipeline, o, rc);
  const CsvSchema schema = detail::regression_schema(o.train, o.inputs, o.outputs);
  const Dataset train = load_csv(o.train, schema);
  const Dataset test = load_csv(o.test, schema, 1);
  const fs::path dir = o.out_dir.empty() ? default_output("") : fs::path(o.out_dir);

  std::vector<ModelKind> kinds;
  for (const auto& name : o.models) {
    const ModelKind k = parse_model_kind(name);
    if (std::find(kinds.begin(), kinds.end(), k) != kinds.end()) throw UsageError("model '" + name + "' listed twice");
    kinds.push_back(k);
  }
  for (auto k : kinds) detail::chain_for(rc, k).validate(train.input_dim());

  std::vector<std::future<FittedModel>> jobs;
  for (auto k : kinds) {
    const ChainConfig cfg = detail::chain_for(rc, k);
    auto prog = detail::progress(rc.verbosity, cfg.n_iter, to_string(k), err);
    jobs.push_back(std::async(std::launch::async, [&train, cfg, &rc, prog] {
      return fit_model(train, cfg, {rc.max_samples, rc.neighbours}, nullptr, prog);
    }));
  }

  json models = json::object();
  std::ostringstream table;
  table << "model,rmse,C,n_test\n";
  for (std::size_t i = 0; i < kinds.size(); ++i) {
    const FittedModel m = jobs[i].get();
    const std::string name = to_string(kinds[i]);
    const PredictionSet ps = detail::make_prediction_set(m, test.inputs, Eigen::VectorXd(test.outputs.col(0)));
    const Metrics met = emit_prediction_report(ps, name, dir / name);
    json mj = model_to_json(m);
    mj["chain"] = detail::chain_config_json(detail::chain_for(rc, kinds[i]));
    detail::write_json_file(dir / name / "model.json", mj);
    models[name] = {{"rmse", met.rmse}, {"C", met.compatibility}, {"summary", mj["summary"]}};
    table << name << ',' << inhom::detail::format_double(met.rmse) << ',' << inhom::detail::format_double(met.compatibility)
          << ',' << met.n_test << '\n';
  }

  json inhom_train = nullptr;
  try {
    const auto so = standardize(train);
    const auto rep = inhomogeneity_parameter(l_series(reduce(train), so, rc.estimator, rc.tolerance));
    inhom_train = {{"m", rep.m}, {"p", rep.p}, {"n", rep.n}};
  } catch (const DataError&) {
    // degenerate windows: leave the field null
  }
  json report = {{"models", models},
                 {"n_train", train.size()},
                 {"n_test", test.size()},
                 {"seed", rc.rng_seed},
                 {"train_fingerprint", inhom::detail::hex64(fingerprint(train))},
                 {"train_inhomogeneity", inhom_train}};
  detail::write_json_file(dir / "report.json", report);
  detail::write_text(dir / "comparison.csv", table.str());
  out << table.str();
  return 0;
}

[[nodiscard]] inline json error_json(ErrorKind kind, const std::string& message) {
  return {{"error", {{"kind", to_string(kind)}, {"message", message}, {"exit_code", static_cast<int>(kind)}}}};
}

/// Parses argv, runs the subcommand and maps failures to exit codes:
/// 0 ok, 2 usage, 3 data validation, 4 numerical failure.
inline int dispatch(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  App a = build_app();
  try {
    try {
      a.app->parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
      out << a.app->help();
      return 0;
    } catch (const CLI::CallForAllHelp&) {
      out << a.app->help("", CLI::AppFormatMode::All);
      return 0;
    } catch (const CLI::CallForVersion& e) {
      out << e.what() << '\n';
      return 0;
    } catch (const CLI::ParseError& e) {
      if (e.get_exit_code() == 0) {
        out << a.app->help();
        return 0;
      }
      throw UsageError(e.what());
    }
    if (a.inhom->parsed()) return run_inhom(a, out);
    if (a.adf->parsed()) return run_adf(a, out);
    if (a.fit->parsed()) return run_fit(a, out, err);
    if (a.predict->parsed()) return run_predict(a, out);
    if (a.evaluate->parsed()) return run_evaluate(a, out);
    if (a.synth->parsed()) return run_synth(a, out);
    if (a.pipeline->parsed()) return run_pipeline(a, out, err);
    throw UsageError("no subcommand given");
  } catch (const Error& e) {
    err << error_json(e.kind(), e.what()).dump() << '\n';
    return static_cast<int>(e.kind());
  } catch (const fs::filesystem_error& e) {
    err << error_json(ErrorKind::Data, e.what()).dump() << '\n';
    return static_cast<int>(ErrorKind::Data);
  } catch (const std::exception& e) {
    err << error_json(ErrorKind::Numerical, e.what()).dump() << '\n';
    return static_cast<int>(ErrorKind::Numerical);
  }
}

}  // namespace inhom::cli
