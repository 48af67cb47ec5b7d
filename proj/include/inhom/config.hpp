#pragma once

// Run configuration files. The accepted syntax is the key/value core of
// TOML: `key = value`, `[section]` headers, `#` comments, and values that
// are numbers, booleans, quoted strings or flat arrays of numbers.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "inhom/dataset.hpp"
#include "inhom/error.hpp"
#include "inhom/inference.hpp"
#include "inhom/inhomogeneity.hpp"
#include "inhom/stationarity.hpp"

namespace inhom {

using ConfigValue = std::variant<bool, std::int64_t, double, std::string, std::vector<double>>;

/// Flat table keyed by "section.key" (top-level keys have no prefix).
struct ConfigTable {
  std::map<std::string, ConfigValue> values;
  std::map<std::string, std::size_t> lines;
};

namespace detail {

inline std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"' && (i == 0 || line[i - 1] != '\\')) quoted = !quoted;
    if (line[i] == '#' && !quoted) return line.substr(0, i);
  }
  return line;
}

inline bool valid_key(const std::string& k) {
  if (k.empty()) return false;
  for (char c : k) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.')) return false;
  }
  return true;
}

inline std::optional<ConfigValue> parse_scalar(const std::string& text) {
  if (text == "true") return ConfigValue{true};
  if (text == "false") return ConfigValue{false};
  if (text.size() >= 2 && text.front() == '"' && text.back() == '"') {
    std::string out;
    for (std::size_t i = 1; i + 1 < text.size(); ++i) {
      if (text[i] == '\\' && i + 2 < text.size()) {
        const char e = text[++i];
        out += e == 'n' ? '\n' : e == 't' ? '\t' : e;
      } else if (text[i] == '"') {
        return std::nullopt;
      } else {
        out += text[i];
      }
    }
    return ConfigValue{out};
  }
  std::string digits;
  for (char c : text) {
    if (c != '_') digits += c;
  }
  bool integral = !digits.empty();
  for (std::size_t i = 0; i < digits.size(); ++i) {
    const char c = digits[i];
    if (!(std::isdigit(static_cast<unsigned char>(c)) || (i == 0 && (c == '-' || c == '+')))) integral = false;
  }
  if (integral && digits != "-" && digits != "+") {
    try {
      return ConfigValue{static_cast<std::int64_t>(std::stoll(digits))};
    } catch (const std::out_of_range&) {
      return std::nullopt;
    }
  }
  if (auto v = parse_double(digits)) return ConfigValue{*v};
  return std::nullopt;
}

}  // namespace detail

[[nodiscard]] inline ConfigTable parse_config(std::istream& in, const std::string& origin = "config") {
  ConfigTable t;
  std::string section;
  std::string raw;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& what) {
    throw UsageError(origin + ":" + std::to_string(line_no) + ": " + what);
  };
  while (std::getline(in, raw)) {
    ++line_no;
    if (line_no == 1 && raw.size() >= 3 && raw.compare(0, 3, "\xEF\xBB\xBF") == 0) raw.erase(0, 3);
    const std::string line = detail::trim(detail::strip_comment(raw));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) fail("malformed section header");
      section = detail::trim(line.substr(1, line.size() - 2));
      if (!detail::valid_key(section)) fail("malformed section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail("expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string text = detail::trim(line.substr(eq + 1));
    if (!detail::valid_key(key)) fail("malformed key '" + key + "'");
    if (text.empty()) fail("missing value for '" + key + "'");
    ConfigValue value;
    if (text.front() == '[') {
      if (text.back() != ']') fail("unterminated array");
      std::vector<double> arr;
      std::stringstream ss(text.substr(1, text.size() - 2));
      std::string item;
      while (std::getline(ss, item, ',')) {
        item = detail::trim(item);
        if (item.empty()) continue;
        const auto v = detail::parse_scalar(item);
        if (!v || std::holds_alternative<bool>(*v) || std::holds_alternative<std::string>(*v)) fail("arrays hold numbers only");
        arr.push_back(std::holds_alternative<double>(*v) ? std::get<double>(*v) : static_cast<double>(std::get<std::int64_t>(*v)));
      }
      value = std::move(arr);
    } else {
      auto v = detail::parse_scalar(text);
      if (!v) fail("cannot parse value '" + text + "'");
      value = std::move(*v);
    }
    const std::string full = section.empty() ? key : section + "." + key;
    if (t.values.count(full)) fail("duplicate key '" + full + "'");
    t.values[full] = std::move(value);
    t.lines[full] = line_no;
  }
  return t;
}

[[nodiscard]] inline ConfigTable parse_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config '" + path.string() + "'");
  return parse_config(in, path.string());
}

/// Options for every subcommand; each block mirrors one module's settings.
struct RunConfig {
  /// Global seed; the chain and the generators draw from streams derived
  /// from it, so `chain.rng_seed` is not read from files.
  std::uint64_t rng_seed = 0;
  int verbosity = 0;
  ChainConfig chain{};
  CorrEstimatorConfig estimator{};
  ToleranceConfig tolerance{};
  std::optional<std::size_t> adf_max_lag;
  LagRule adf_lag_rule = LagRule::Aic;
  std::size_t max_samples = 200;
  std::size_t neighbours = 10;
};

namespace detail {

class ConfigReader {
 public:
  explicit ConfigReader(const ConfigTable& t) : t_(t) {}

  template <class F>
  void with(const std::string& key, F&& f) {
    const auto it = t_.values.find(key);
    if (it == t_.values.end()) return;
    used_.insert(key);
    try {
      f(it->second);
    } catch (const std::bad_variant_access&) {
      throw UsageError(where(key) + "wrong value type for '" + key + "'");
    } catch (const UsageError& e) {
      throw UsageError(where(key) + e.what());
    }
  }

  double number(const ConfigValue& v) const {
    if (std::holds_alternative<std::int64_t>(v)) return static_cast<double>(std::get<std::int64_t>(v));
    return std::get<double>(v);
  }

  std::uint64_t count(const ConfigValue& v) const {
    const auto n = std::get<std::int64_t>(v);
    if (n < 0) throw UsageError("expected a nonnegative integer");
    return static_cast<std::uint64_t>(n);
  }

  void reject_unused(const std::string& origin) const {
    for (const auto& [key, value] : t_.values) {
      if (!used_.count(key)) throw UsageError(origin + ":" + std::to_string(t_.lines.at(key)) + ": unknown key '" + key + "'");
    }
  }

 private:
  std::string where(const std::string& key) const {
    const auto it = t_.lines.find(key);
    return it == t_.lines.end() ? std::string() : "line " + std::to_string(it->second) + ": ";
  }

  const ConfigTable& t_;
  std::set<std::string> used_;
};

}  // namespace detail

/// Applies a parsed table on top of `base`. With `strict`, keys that match
/// no option are an error.
[[nodiscard]] inline RunConfig apply_config(const ConfigTable& t, RunConfig base = {}, bool strict = true,
                                            const std::string& origin = "config") {
  detail::ConfigReader r(t);
  RunConfig& c = base;
  r.with("seed", [&](const ConfigValue& v) { c.rng_seed = r.count(v); });
  r.with("verbosity", [&](const ConfigValue& v) { c.verbosity = static_cast<int>(r.count(v)); });

  ChainConfig& ch = c.chain;
  r.with("chain.model", [&](const ConfigValue& v) { ch.model = parse_model_kind(std::get<std::string>(v)); });
  r.with("chain.n_iter", [&](const ConfigValue& v) { ch.n_iter = r.count(v); });
  r.with("chain.n_burn", [&](const ConfigValue& v) { ch.n_burn = r.count(v); });
  r.with("chain.lookback", [&](const ConfigValue& v) { ch.lookback = r.count(v); });
  r.with("chain.seeds", [&](const ConfigValue& v) { ch.seeds = std::get<std::vector<double>>(v); });
  r.with("chain.prior_sd", [&](const ConfigValue& v) { ch.prior_sd = std::get<std::vector<double>>(v); });
  r.with("chain.proposal_sd", [&](const ConfigValue& v) { ch.proposal_sd = std::get<std::vector<double>>(v); });
  r.with("chain.jitter", [&](const ConfigValue& v) { ch.jitter = r.number(v); });
  r.with("chain.inner.delta_seed", [&](const ConfigValue& v) { ch.inner.delta_seed = r.number(v); });
  r.with("chain.inner.delta_prior_sd", [&](const ConfigValue& v) { ch.inner.delta_prior_sd = r.number(v); });
  r.with("chain.inner.delta_proposal_sd", [&](const ConfigValue& v) { ch.inner.delta_proposal_sd = r.number(v); });

  r.with("estimator.kind", [&](const ConfigValue& v) {
    const auto& s = std::get<std::string>(v);
    if (s == "windowed") c.estimator.kind = CorrEstimator::WindowedPairs;
    else if (s == "tensor") c.estimator.kind = CorrEstimator::ElementwiseTensor;
    else throw UsageError("estimator must be windowed or tensor");
  });
  r.with("estimator.half_width", [&](const ConfigValue& v) { c.estimator.half_width = r.count(v); });
  r.with("estimator.corr_floor", [&](const ConfigValue& v) { c.estimator.corr_floor = r.number(v); });

  std::optional<double> delta;
  std::optional<double> beta;
  r.with("tolerance.delta", [&](const ConfigValue& v) { delta = r.number(v); });
  r.with("tolerance.beta", [&](const ConfigValue& v) { beta = r.number(v); });
  if (delta && beta) throw UsageError(origin + ": tolerance.delta and tolerance.beta are mutually exclusive");
  if (delta) c.tolerance = ToleranceConfig::constant(*delta);
  if (beta) c.tolerance = ToleranceConfig::proportional(*beta);

  r.with("adf.max_lag", [&](const ConfigValue& v) { c.adf_max_lag = r.count(v); });
  r.with("adf.lag_rule", [&](const ConfigValue& v) {
    const auto& s = std::get<std::string>(v);
    if (s == "aic") c.adf_lag_rule = LagRule::Aic;
    else if (s == "fixed") c.adf_lag_rule = LagRule::Fixed;
    else throw UsageError("lag_rule must be aic or fixed");
  });

  r.with("predict.max_samples", [&](const ConfigValue& v) { c.max_samples = r.count(v); });
  r.with("predict.neighbours", [&](const ConfigValue& v) { c.neighbours = r.count(v); });

  if (strict) r.reject_unused(origin);
  return c;
}

/// Reads and validates a config file; an empty file yields the defaults.
[[nodiscard]] inline RunConfig load_config(const std::filesystem::path& path, bool strict = true) {
  return apply_config(parse_config_file(path), RunConfig{}, strict, path.string());
}

}  // namespace inhom
