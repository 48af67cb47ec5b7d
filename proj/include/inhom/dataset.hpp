#pragma once

// Training/test data ingestion, output standardization and the reduced
// (index-only) view of a dataset.

#include <Eigen/Dense>

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "inhom/error.hpp"

namespace inhom {

/// N input/output pairs. Outputs are tensors of a common shape stored
/// flattened row-major, one row per observation.
struct Dataset {
  Eigen::MatrixXd inputs;   ///< N x d
  Eigen::MatrixXd outputs;  ///< N x P
  std::vector<std::string> input_names;
  std::vector<std::string> output_names;
  std::vector<std::size_t> shape;  ///< product equals P

  [[nodiscard]] std::size_t size() const { return static_cast<std::size_t>(outputs.rows()); }
  [[nodiscard]] std::size_t input_dim() const { return static_cast<std::size_t>(inputs.cols()); }
  [[nodiscard]] std::size_t output_dim() const { return static_cast<std::size_t>(outputs.cols()); }

  /// Throws DataError when an invariant is broken. `min_rows` is 2 for
  /// training data; prediction sets may hold a single row.
  void validate(std::size_t min_rows = 2) const {
    if (size() < min_rows) {
      throw DataError(min_rows == 2 ? "N < 2" : "dataset has fewer than " + std::to_string(min_rows) + " rows");
    }
    if (inputs.rows() != outputs.rows()) throw DataError("input and output row counts differ");
    if (output_dim() == 0) throw DataError("dataset has no output columns");
    if (input_names.size() != input_dim() || output_names.size() != output_dim()) {
      throw DataError("column names do not match data dimensions");
    }
    std::size_t p = 1;
    for (auto m : shape) p *= m;
    if (shape.empty() || p != output_dim()) throw DataError("output shape does not match number of output columns");
    if (!inputs.allFinite() || !outputs.allFinite()) throw DataError("non-finite value in dataset");
  }
};

/// Outputs indexed by their ordinal position 1..N; inputs discarded.
struct ReducedDataset {
  std::vector<std::size_t> index;  ///< 1-based, consecutive
  Eigen::MatrixXd outputs;         ///< N x P, same rows as the source
};

/// Per-component standardized outputs with the constants needed to undo it.
struct StandardizedOutputs {
  Eigen::MatrixXd values;  ///< N x P
  Eigen::VectorXd mean;    ///< P
  Eigen::VectorXd sd;      ///< P, sample sd with N-1 denominator

  [[nodiscard]] std::size_t size() const { return static_cast<std::size_t>(values.rows()); }

  [[nodiscard]] Eigen::MatrixXd restore() const {
    Eigen::MatrixXd out = values;
    for (Eigen::Index p = 0; p < values.cols(); ++p) out.col(p) = values.col(p).array() * sd(p) + mean(p);
    return out;
  }
};

/// Which CSV columns play which role.
struct CsvSchema {
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::vector<std::size_t> shape;  ///< empty means (P,)
};

namespace detail {

inline std::string trim(std::string s) {
  auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

/// Splits one CSV record. Double quotes group a field and "" escapes a quote.
inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(trim(cur));
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  fields.push_back(trim(cur));
  return fields;
}

inline std::optional<double> parse_double(const std::string& s) {
  if (s.empty()) return std::nullopt;
  errno = 0;
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || errno == ERANGE) return std::nullopt;
  return v;
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

/// Parses "3x4x2" style shapes.
inline std::vector<std::size_t> parse_shape(const std::string& text) {
  std::vector<std::size_t> shape;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, 'x')) {
    auto v = detail::parse_double(detail::trim(part));
    if (!v || *v < 1 || std::floor(*v) != *v) throw UsageError("invalid shape '" + text + "'");
    shape.push_back(static_cast<std::size_t>(*v));
  }
  if (shape.empty()) throw UsageError("invalid shape '" + text + "'");
  return shape;
}

/// Reads a comma-separated file with one header row. Columns not named in
/// the schema (row indices, timestamps) are ignored.
inline Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema, std::size_t min_rows = 2) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  if (schema.outputs.empty()) throw UsageError("schema names no output columns");

  std::string line;
  if (!std::getline(in, line)) throw DataError("'" + path.string() + "' is empty");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // UTF-8 BOM
  const auto header = detail::split_csv_line(line);
  std::unordered_map<std::string, std::size_t> column;
  for (std::size_t i = 0; i < header.size(); ++i) column.emplace(header[i], i);

  auto locate = [&](const std::vector<std::string>& names) {
    std::vector<std::size_t> idx;
    for (const auto& n : names) {
      auto it = column.find(n);
      if (it == column.end()) throw DataError("column '" + n + "' absent from '" + path.string() + "'");
      idx.push_back(it->second);
    }
    return idx;
  };
  const auto in_idx = locate(schema.inputs);
  const auto out_idx = locate(schema.outputs);

  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    auto fields = detail::split_csv_line(line);
    if (fields.size() != header.size()) {
      throw DataError("ragged row at line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                      " fields, found " + std::to_string(fields.size()));
    }
    std::vector<double> row;
    row.reserve(in_idx.size() + out_idx.size());
    for (auto group : {&in_idx, &out_idx}) {
      for (auto c : *group) {
        auto v = detail::parse_double(fields[c]);
        if (!v) throw DataError("non-numeric cell '" + fields[c] + "' at line " + std::to_string(line_no) + ", column '" + header[c] + "'");
        if (!std::isfinite(*v)) throw DataError("non-finite value at line " + std::to_string(line_no) + ", column '" + header[c] + "'");
        row.push_back(*v);
      }
    }
    rows.push_back(std::move(row));
  }

  Dataset ds;
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto d = static_cast<Eigen::Index>(in_idx.size());
  const auto p = static_cast<Eigen::Index>(out_idx.size());
  ds.inputs.resize(n, d);
  ds.outputs.resize(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) ds.inputs(i, j) = rows[i][j];
    for (Eigen::Index j = 0; j < p; ++j) ds.outputs(i, j) = rows[i][d + j];
  }
  ds.input_names = schema.inputs;
  ds.output_names = schema.outputs;
  ds.shape = schema.shape.empty() ? std::vector<std::size_t>{static_cast<std::size_t>(p)} : schema.shape;
  ds.validate(min_rows);
  return ds;
}

/// Writes inputs then outputs with 17 significant digits.
inline void write_csv(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  std::vector<std::string> names = ds.input_names;
  names.insert(names.end(), ds.output_names.begin(), ds.output_names.end());
  for (std::size_t i = 0; i < names.size(); ++i) out << (i ? "," : "") << names[i];
  out << '\n';
  for (Eigen::Index r = 0; r < ds.outputs.rows(); ++r) {
    bool first = true;
    for (Eigen::Index c = 0; c < ds.inputs.cols(); ++c, first = false) out << (first ? "" : ",") << detail::format_double(ds.inputs(r, c));
    for (Eigen::Index c = 0; c < ds.outputs.cols(); ++c, first = false) out << (first ? "" : ",") << detail::format_double(ds.outputs(r, c));
    out << '\n';
  }
  if (!out) throw DataError("write to '" + path.string() + "' failed");
}

inline StandardizedOutputs standardize(const Dataset& ds) {
  const auto n = ds.outputs.rows();
  if (n < 2) throw DataError("N < 2");
  StandardizedOutputs so;
  so.mean = ds.outputs.colwise().mean().transpose();
  so.sd.resize(ds.outputs.cols());
  so.values.resize(n, ds.outputs.cols());
  for (Eigen::Index p = 0; p < ds.outputs.cols(); ++p) {
    Eigen::ArrayXd centred = ds.outputs.col(p).array() - so.mean(p);
    const double sd = std::sqrt(centred.square().sum() / static_cast<double>(n - 1));
    if (!(sd > 0.0) || sd <= 1e-300) throw DataError("constant output component '" + (p < static_cast<Eigen::Index>(ds.output_names.size()) ? ds.output_names[p] : std::to_string(p)) + "'");
    so.sd(p) = sd;
    so.values.col(p) = centred / sd;
  }
  return so;
}

inline ReducedDataset reduce(const Dataset& ds) {
  ReducedDataset rd;
  rd.index.resize(ds.size());
  std::iota(rd.index.begin(), rd.index.end(), std::size_t{1});
  rd.outputs = ds.outputs;
  return rd;
}

/// Selects 0-based rows, preserving their order within each side. The test
/// side may hold a single row.
inline std::pair<Dataset, Dataset> split(const Dataset& ds, std::span<const std::size_t> train_rows,
                                         std::span<const std::size_t> test_rows) {
  std::vector<char> used(ds.size(), 0);
  auto take = [&](std::span<const std::size_t> rows, char tag) {
    std::vector<std::size_t> sorted(rows.begin(), rows.end());
    std::sort(sorted.begin(), sorted.end());
    Dataset out;
    out.inputs.resize(static_cast<Eigen::Index>(sorted.size()), ds.inputs.cols());
    out.outputs.resize(static_cast<Eigen::Index>(sorted.size()), ds.outputs.cols());
    for (std::size_t k = 0; k < sorted.size(); ++k) {
      const auto r = sorted[k];
      if (r >= ds.size()) throw DataError("row " + std::to_string(r) + " out of range");
      if (used[r] != 0) throw DataError("train and test rows overlap at row " + std::to_string(r));
      used[r] = tag;
      out.inputs.row(static_cast<Eigen::Index>(k)) = ds.inputs.row(static_cast<Eigen::Index>(r));
      out.outputs.row(static_cast<Eigen::Index>(k)) = ds.outputs.row(static_cast<Eigen::Index>(r));
    }
    out.input_names = ds.input_names;
    out.output_names = ds.output_names;
    out.shape = ds.shape;
    return out;
  };
  Dataset train = take(train_rows, 1);
  Dataset test = take(test_rows, 2);
  train.validate(2);
  test.validate(1);
  return {std::move(train), std::move(test)};
}

/// Stable 64-bit fingerprint of the numeric content (FNV-1a over the bytes
/// of every value), used to tie a fitted model to its training data.
inline std::uint64_t fingerprint(const Dataset& ds) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&](double v) {
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &v, sizeof v);
    for (auto b : bytes) {
      h ^= b;
      h *= 0x100000001b3ULL;
    }
  };
  for (Eigen::Index r = 0; r < ds.outputs.rows(); ++r) {
    for (Eigen::Index c = 0; c < ds.inputs.cols(); ++c) mix(ds.inputs(r, c));
    for (Eigen::Index c = 0; c < ds.outputs.cols(); ++c) mix(ds.outputs(r, c));
  }
  return h;
}

}  // namespace inhom
