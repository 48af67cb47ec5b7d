#pragma once

// Predictive scoring (RMSE and the compatibility fraction C) and the
// prediction/summary files written after a fit.

#include <Eigen/Dense>
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "inhom/dataset.hpp"
#include "inhom/error.hpp"

namespace inhom {

struct PredictionRow {
  std::vector<double> x;
  std::optional<double> truth;
  double mean = 0.0;
  double sd = 0.0;
};

struct PredictionSet {
  std::vector<std::string> input_names;
  std::vector<PredictionRow> rows;

  [[nodiscard]] std::size_t size() const { return rows.size(); }

  void validate() const {
    for (const auto& r : rows) {
      if (r.x.size() != input_names.size()) throw DataError("prediction row has the wrong number of inputs");
      if (!(r.sd >= 0.0) || !std::isfinite(r.mean)) throw DataError("prediction needs a finite mean and sd >= 0");
    }
  }
};

namespace detail {

inline void require_truths(const PredictionSet& ps) {
  if (ps.rows.empty()) throw DataError("empty prediction set");
  for (const auto& r : ps.rows) {
    if (!r.truth) throw DataError("missing truth");
  }
}

}  // namespace detail

/// sqrt(mean((y - ybar)^2)) in the units of the predictions.
[[nodiscard]] inline double rmse(const PredictionSet& ps) {
  detail::require_truths(ps);
  double s = 0.0;
  for (const auto& r : ps.rows) {
    const double e = *r.truth - r.mean;
    s += e * e;
  }
  return std::sqrt(s / static_cast<double>(ps.rows.size()));
}

/// Fraction of truths inside the closed band [mean - sd, mean + sd].
[[nodiscard]] inline double compatibility(const PredictionSet& ps) {
  detail::require_truths(ps);
  std::size_t inside = 0;
  for (const auto& r : ps.rows) {
    if (std::abs(*r.truth - r.mean) <= r.sd) ++inside;
  }
  return static_cast<double>(inside) / static_cast<double>(ps.rows.size());
}

struct Metrics {
  double rmse = 0.0;
  double compatibility = 0.0;
  std::size_t n_test = 0;
};

[[nodiscard]] inline Metrics score(const PredictionSet& ps) { return {rmse(ps), compatibility(ps), ps.size()}; }

[[nodiscard]] inline nlohmann::json metrics_json(const Metrics& m, const std::string& model) {
  return {{"rmse", m.rmse}, {"C", m.compatibility}, {"n_test", m.n_test}, {"model", model}};
}

inline void write_json(const nlohmann::json& j, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
  if (!out) throw DataError("failed writing '" + path.string() + "'");
}

/// index (1-based), one column per input, truth (empty if unknown), mean, sd.
inline void write_predictions_csv(const PredictionSet& ps, const std::filesystem::path& path) {
  if (ps.rows.empty()) throw DataError("empty prediction set");
  ps.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << "index";
  for (const auto& n : ps.input_names) out << ',' << n;
  out << ",truth,mean,sd\n";
  for (std::size_t i = 0; i < ps.rows.size(); ++i) {
    const auto& r = ps.rows[i];
    out << (i + 1);
    for (double v : r.x) out << ',' << detail::format_double(v);
    out << ',' << (r.truth ? detail::format_double(*r.truth) : std::string());
    out << ',' << detail::format_double(r.mean) << ',' << detail::format_double(r.sd) << '\n';
  }
  if (!out) throw DataError("failed writing '" + path.string() + "'");
}

[[nodiscard]] inline PredictionSet read_predictions_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw DataError("'" + path.string() + "' is empty");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto header = detail::split_csv_line(line);
  const std::size_t c = header.size();
  if (c < 4 || detail::trim(header[0]) != "index" || detail::trim(header[c - 3]) != "truth" ||
      detail::trim(header[c - 2]) != "mean" || detail::trim(header[c - 1]) != "sd") {
    throw DataError("predictions file needs columns index, <inputs...>, truth, mean, sd");
  }
  PredictionSet ps;
  for (std::size_t k = 1; k + 3 < c; ++k) ps.input_names.push_back(detail::trim(header[k]));
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != c) throw DataError("line " + std::to_string(line_no) + ": expected " + std::to_string(c) + " cells");
    auto num = [&](std::size_t k) {
      const auto v = detail::parse_double(cells[k]);
      if (!v) throw DataError("line " + std::to_string(line_no) + ": non-numeric cell '" + cells[k] + "'");
      return *v;
    };
    PredictionRow r;
    for (std::size_t k = 1; k + 3 < c; ++k) r.x.push_back(num(k));
    if (!detail::trim(cells[c - 3]).empty()) r.truth = num(c - 3);
    r.mean = num(c - 2);
    r.sd = num(c - 1);
    ps.rows.push_back(std::move(r));
  }
  ps.validate();
  return ps;
}

/// Writes predictions.csv and summary.json into `dir`; returns the metrics.
inline Metrics emit_prediction_report(const PredictionSet& ps, const std::string& model,
                                      const std::filesystem::path& dir) {
  const Metrics m = score(ps);
  std::filesystem::create_directories(dir);
  write_predictions_csv(ps, dir / "predictions.csv");
  write_json(metrics_json(m, model), dir / "summary.json");
  return m;
}

}  // namespace inhom
