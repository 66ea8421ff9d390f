#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "marloc/error.hpp"
#include "marloc/location.hpp"
#include "marloc/model.hpp"
#include "marloc/pipeline.hpp"
#include "marloc/simulation.hpp"

namespace marloc {

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

struct CsvOptions {
  std::string response = "y";
  std::vector<std::string> covariates;  // empty: every other column
  std::optional<std::string> indicator;
};

struct Dataset {
  std::vector<std::string> columns;
  std::vector<std::string> covariate_names;
  std::string response_name;
  std::optional<std::string> indicator_name;
  Matrix x;
  Vector y;  // NaN where missing
  std::vector<std::uint8_t> observed;

  Eigen::Index n() const noexcept { return x.rows(); }
  Eigen::Index m() const noexcept {
    return static_cast<Eigen::Index>(std::count(observed.begin(), observed.end(), std::uint8_t{1}));
  }
  CompleteCaseSample sample() const { return CompleteCaseSample(x, y, observed); }
};

namespace detail {

/// One RFC 4180 record; quoted fields may hold commas, doubled quotes and newlines.
inline bool read_record(std::istream& in, std::vector<std::string>& fields, std::size_t& line) {
  fields.clear();
  if (in.peek() == std::char_traits<char>::eof()) return false;
  std::string field;
  bool quoted = false;
  bool any = false;
  char ch;
  while (in.get(ch)) {
    any = true;
    if (quoted) {
      if (ch == '"') {
        if (in.peek() == '"') {
          in.get(ch);
          field.push_back('"');
        } else {
          quoted = false;
        }
      } else {
        if (ch == '\n') ++line;
        field.push_back(ch);
      }
      continue;
    }
    if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (ch == '\r') {
      if (in.peek() == '\n') in.get(ch);
      break;
    } else if (ch == '\n') {
      break;
    } else {
      field.push_back(ch);
    }
  }
  ++line;
  if (quoted) throw Error(ErrorCode::ParseError, "line " + std::to_string(line) + ": unterminated quoted field");
  if (!any) return false;
  fields.push_back(std::move(field));
  return true;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

inline bool is_missing(std::string_view s) {
  s = trim(s);
  return s.empty() || s == "NA";
}

inline std::optional<double> parse_number(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(value)) return std::nullopt;
  return value;
}

}  // namespace detail

inline Dataset parse_csv(std::istream& in, const CsvOptions& options = {}) {
  Dataset data;
  std::size_t line = 0;
  std::vector<std::string> fields;
  if (!detail::read_record(in, fields, line)) throw Error(ErrorCode::ParseError, "missing header row");
  for (auto& f : fields) data.columns.emplace_back(detail::trim(f));

  auto column_of = [&](const std::string& name) -> std::size_t {
    const auto it = std::find(data.columns.begin(), data.columns.end(), name);
    if (it == data.columns.end()) throw Error(ErrorCode::ParseError, "no column named '" + name + "'");
    return static_cast<std::size_t>(it - data.columns.begin());
  };
  const std::size_t response_col = column_of(options.response);
  std::optional<std::size_t> indicator_col;
  if (options.indicator) indicator_col = column_of(*options.indicator);
  std::vector<std::size_t> covariate_cols;
  if (options.covariates.empty()) {
    for (std::size_t c = 0; c < data.columns.size(); ++c) {
      if (c != response_col && (!indicator_col || c != *indicator_col)) covariate_cols.push_back(c);
    }
  } else {
    for (const auto& name : options.covariates) covariate_cols.push_back(column_of(name));
  }
  if (covariate_cols.empty()) throw Error(ErrorCode::ParseError, "no covariate columns");
  for (auto c : covariate_cols) data.covariate_names.push_back(data.columns[c]);
  data.response_name = options.response;
  data.indicator_name = options.indicator;

  std::vector<std::vector<double>> rows;
  std::vector<double> ys;
  std::size_t record = 0;
  while (detail::read_record(in, fields, line)) {
    ++record;
    if (fields.size() == 1 && detail::trim(fields[0]).empty()) continue;
    const std::string where = "row " + std::to_string(record);
    if (fields.size() != data.columns.size()) {
      throw Error(ErrorCode::ParseError, where + ": expected " + std::to_string(data.columns.size()) + " fields, found " +
                                             std::to_string(fields.size()));
    }
    std::vector<double> xs;
    for (auto c : covariate_cols) {
      if (detail::is_missing(fields[c])) {
        throw Error(ErrorCode::MissingCovariate, where + ", column '" + data.columns[c] + "': covariate is missing");
      }
      const auto v = detail::parse_number(fields[c]);
      if (!v) {
        throw Error(ErrorCode::ParseError,
                    where + ", column '" + data.columns[c] + "': not a number: '" + fields[c] + "'");
      }
      xs.push_back(*v);
    }
    double y = std::numeric_limits<double>::quiet_NaN();
    if (!detail::is_missing(fields[response_col])) {
      const auto v = detail::parse_number(fields[response_col]);
      if (!v) {
        throw Error(ErrorCode::ParseError,
                    where + ", column '" + options.response + "': not a number: '" + fields[response_col] + "'");
      }
      y = *v;
    }
    std::uint8_t a = std::isfinite(y) ? 1 : 0;
    if (indicator_col) {
      const auto v = detail::parse_number(fields[*indicator_col]);
      if (!v || (*v != 0.0 && *v != 1.0)) {
        throw Error(ErrorCode::ParseError, where + ", column '" + *options.indicator + "': indicator must be 0 or 1");
      }
      if ((*v == 1.0) != (a == 1)) {
        throw Error(ErrorCode::IndicatorConflict, where + ": indicator says " + (*v == 1.0 ? "observed" : "missing") +
                                                      " but the response is " + (a == 1 ? "present" : "empty"));
      }
    }
    rows.push_back(std::move(xs));
    ys.push_back(y);
    data.observed.push_back(a);
  }
  data.x.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(covariate_cols.size()));
  data.y.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < covariate_cols.size(); ++j) {
      data.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
    data.y[static_cast<Eigen::Index>(i)] = ys[i];
  }
  return data;
}

inline Dataset load_csv(const std::string& path, const CsvOptions& options = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::ParseError, "cannot open '" + path + "'");
  return parse_csv(in, options);
}

inline void write_csv(std::ostream& out, const CompleteCaseSample& sample) {
  out.precision(17);
  for (Eigen::Index j = 0; j < sample.p(); ++j) out << 'x' << (j + 1) << ',';
  out << "y\n";
  for (Eigen::Index i = 0; i < sample.n(); ++i) {
    for (Eigen::Index j = 0; j < sample.p(); ++j) out << sample.x()(i, j) << ',';
    if (sample.observed(i)) out << sample.y()[i];
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Flat key = value configuration
// ---------------------------------------------------------------------------

using Config = std::map<std::string, std::string, std::less<>>;

inline Config parse_config(std::istream& in) {
  Config out;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (const auto hash = text.find('#'); hash != std::string::npos) text.erase(hash);
    const auto body = detail::trim(text);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorCode::ParseError, "config line " + std::to_string(line) + ": expected key = value");
    }
    out[std::string(detail::trim(body.substr(0, eq)))] = std::string(detail::trim(body.substr(eq + 1)));
  }
  return out;
}

inline Config load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ParseError, "cannot open config '" + path + "'");
  return parse_config(in);
}

namespace detail {

inline double config_number(const Config& config, std::string_view key, double fallback) {
  const auto it = config.find(key);
  if (it == config.end()) return fallback;
  const auto v = parse_number(it->second);
  if (!v) throw Error(ErrorCode::ParseError, "config key '" + std::string(key) + "' is not a number");
  return *v;
}

}  // namespace detail

inline void apply_config(const Config& config, SearchConfig& search) {
  search.subsets = static_cast<int>(detail::config_number(config, "subsets", search.subsets));
  search.keep = static_cast<int>(detail::config_number(config, "keep", search.keep));
  search.refine_steps = static_cast<int>(detail::config_number(config, "refine_steps", search.refine_steps));
  search.max_iterations = static_cast<int>(detail::config_number(config, "max_iterations", search.max_iterations));
  search.tolerance = detail::config_number(config, "tolerance", search.tolerance);
  search.scale_tolerance = detail::config_number(config, "scale_tolerance", search.scale_tolerance);
  search.seed = static_cast<std::uint64_t>(detail::config_number(config, "seed", static_cast<double>(search.seed)));
}

inline void apply_config(const Config& config, RegressionKernels& kernels) {
  kernels.rho0.k = detail::config_number(config, "k0", kernels.rho0.k);
  kernels.rho1.k = detail::config_number(config, "k1", kernels.rho1.k);
  kernels.delta = detail::config_number(config, "delta", kernels.delta);
}

inline void apply_config(const Config& config, SimScenario& scenario) {
  scenario.n = static_cast<int>(detail::config_number(config, "n", scenario.n));
  scenario.p = static_cast<int>(detail::config_number(config, "p", scenario.p));
  scenario.beta_value = detail::config_number(config, "beta", scenario.beta_value);
  scenario.missingness_slope = detail::config_number(config, "missingness_slope", scenario.missingness_slope);
  scenario.error_sd = detail::config_number(config, "error_sd", scenario.error_sd);
  scenario.replications = static_cast<int>(detail::config_number(config, "replications", scenario.replications));
  scenario.seed = static_cast<std::uint64_t>(detail::config_number(config, "seed", static_cast<double>(scenario.seed)));
  if (config.contains("contamination.x_star")) {
    Contamination c;
    c.fraction = detail::config_number(config, "contamination.fraction", c.fraction);
    c.x_star = detail::config_number(config, "contamination.x_star", c.x_star);
    c.y_star_grid = Contamination::grid(detail::config_number(config, "contamination.y_from", 8.0),
                                        detail::config_number(config, "contamination.y_to", 50.0),
                                        detail::config_number(config, "contamination.y_step", 0.2));
    scenario.contamination = c;
  }
}

// ---------------------------------------------------------------------------
// Run report
// ---------------------------------------------------------------------------

struct RunReport {
  std::string functional;
  std::string regression;
  double estimate = 0.0;
  std::optional<double> tau_sq;
  std::optional<double> se;
  std::optional<double> ci_lower;
  std::optional<double> ci_upper;
  std::optional<double> component_e;
  std::optional<double> component_f;
  std::optional<double> component_regression;
  std::vector<double> beta;
  double alpha = 0.0;
  double sigma = 0.0;
  bool converged = false;
  int iterations = 0;
  bool exact_fit = false;
  std::int64_t n = 0;
  std::int64_t m = 0;
  double eta = 0.0;
  std::map<std::string, double> config;
  std::vector<std::string> warnings;

  bool operator==(const RunReport&) const = default;
};

inline std::string fit_method_name(FitMethod method) {
  switch (method) {
    case FitMethod::LeastSquares: return "ls";
    case FitMethod::S: return "s";
    case FitMethod::MM: return "mm";
  }
  return "?";
}

inline FitMethod fit_method_from_name(std::string_view name) {
  if (name == "ls") return FitMethod::LeastSquares;
  if (name == "s") return FitMethod::S;
  if (name == "mm") return FitMethod::MM;
  throw Error(ErrorCode::InvalidArgument, "unknown regression '" + std::string(name) + "'");
}

inline nlohmann::ordered_json to_json(const RunReport& r) {
  nlohmann::ordered_json j;
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(); };
  j["functional"] = r.functional;
  j["estimate"] = r.estimate;
  j["tau_sq"] = opt(r.tau_sq);
  j["se"] = opt(r.se);
  j["ci_lower"] = opt(r.ci_lower);
  j["ci_upper"] = opt(r.ci_upper);
  j["variance_components"] = {{"e", opt(r.component_e)}, {"f", opt(r.component_f)},
                              {"regression", opt(r.component_regression)}};
  j["regression"] = {{"method", r.regression}, {"beta", r.beta},           {"alpha", r.alpha},
                     {"sigma", r.sigma},        {"converged", r.converged}, {"iterations", r.iterations},
                     {"exact_fit", r.exact_fit}};
  j["sample"] = {{"n", r.n}, {"m", r.m}, {"eta", r.eta}};
  j["config"] = r.config;
  j["warnings"] = r.warnings;
  return j;
}

inline RunReport report_from_json(const nlohmann::ordered_json& j) {
  auto opt = [](const nlohmann::ordered_json& v) -> std::optional<double> {
    if (v.is_null()) return std::nullopt;
    return v.get<double>();
  };
  RunReport r;
  r.functional = j.at("functional").get<std::string>();
  r.estimate = j.at("estimate").get<double>();
  r.tau_sq = opt(j.at("tau_sq"));
  r.se = opt(j.at("se"));
  r.ci_lower = opt(j.at("ci_lower"));
  r.ci_upper = opt(j.at("ci_upper"));
  const auto& vc = j.at("variance_components");
  r.component_e = opt(vc.at("e"));
  r.component_f = opt(vc.at("f"));
  r.component_regression = opt(vc.at("regression"));
  const auto& reg = j.at("regression");
  r.regression = reg.at("method").get<std::string>();
  r.beta = reg.at("beta").get<std::vector<double>>();
  r.alpha = reg.at("alpha").get<double>();
  r.sigma = reg.at("sigma").get<double>();
  r.converged = reg.at("converged").get<bool>();
  r.iterations = reg.at("iterations").get<int>();
  r.exact_fit = reg.at("exact_fit").get<bool>();
  const auto& s = j.at("sample");
  r.n = s.at("n").get<std::int64_t>();
  r.m = s.at("m").get<std::int64_t>();
  r.eta = s.at("eta").get<double>();
  r.config = j.at("config").get<std::map<std::string, double>>();
  r.warnings = j.at("warnings").get<std::vector<std::string>>();
  return r;
}

inline std::string format_text(const RunReport& r) {
  std::ostringstream out;
  out.precision(6);
  out << "functional    " << r.functional << '\n';
  out << "estimate      " << r.estimate << '\n';
  if (r.se) {
    out << "std. error    " << *r.se << '\n';
    out << "95% CI        [" << *r.ci_lower << ", " << *r.ci_upper << "]\n";
  }
  out << "regression    " << r.regression << " (sigma " << r.sigma << ", " << r.iterations << " iterations"
      << (r.converged ? "" : ", not converged") << ")\n";
  out << "n / m / eta   " << r.n << " / " << r.m << " / " << r.eta << '\n';
  for (const auto& w : r.warnings) out << "warning       " << w << '\n';
  return out.str();
}

struct EstimateOptions {
  PipelineOptions pipeline;
  bool standard_error = true;
};

/// Full estimation on a loaded dataset with a linear model in its covariates.
inline RunReport estimate_command(const Dataset& dataset, const std::string& functional,
                                  const EstimateOptions& options = {}) {
  const LocationSpec spec = LocationSpec::from_name(functional);
  const CompleteCaseSample sample = dataset.sample();
  if (sample.m() == 0) throw Error(ErrorCode::EmptyObservedSet, "no observed responses in the dataset");
  const auto model = RegressionModel::linear(static_cast<int>(sample.p()));
  PipelineOptions pipeline = options.pipeline;
  pipeline.compute_se = options.standard_error;
  const PipelineResult result = run_pipeline(sample, model, spec, pipeline);

  RunReport r;
  r.functional = spec.name;
  r.regression = fit_method_name(result.fit.method);
  r.estimate = result.location.value;
  if (result.variance) {
    r.tau_sq = result.variance->tau_sq;
    r.se = result.variance->se;
    r.ci_lower = result.variance->ci_lower;
    r.ci_upper = result.variance->ci_upper;
    r.component_e = result.variance->component_e;
    r.component_f = result.variance->component_f;
    r.component_regression = result.variance->component_regression;
  }
  r.beta.assign(result.fit.beta_hat.data(), result.fit.beta_hat.data() + result.fit.beta_hat.size());
  r.alpha = result.fit.alpha_hat;
  r.sigma = result.fit.sigma_hat;
  r.converged = result.fit.converged;
  r.iterations = result.fit.iterations;
  r.exact_fit = result.fit.exact_fit;
  r.n = sample.n();
  r.m = sample.m();
  r.eta = static_cast<double>(sample.m()) / static_cast<double>(sample.n());
  r.config = {{"k0", pipeline.kernels.rho0.k},
              {"k1", pipeline.kernels.rho1.k},
              {"delta", pipeline.kernels.delta},
              {"subsets", static_cast<double>(pipeline.search.subsets)},
              {"seed", static_cast<double>(pipeline.search.seed)}};
  if (spec.kind == LocationKind::MMLocation) {
    r.config["k0_location"] = spec.rho0.k;
    r.config["k1_location"] = spec.rho1.k;
  }
  r.warnings = result.warnings;
  return r;
}

}  // namespace marloc
