#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "marloc/marloc.hpp"

namespace {

struct Globals {
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::string config_path;
};

marloc::Config load_globals_config(const Globals& g) {
  return g.config_path.empty() ? marloc::Config{} : marloc::load_config(g.config_path);
}

unsigned thread_count(const Globals& g) { return g.threads.value_or(marloc::default_threads()); }

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, sep)) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double to_number(const std::string& text, const std::string& what) {
  const auto v = marloc::detail::parse_number(text);
  if (!v) throw marloc::Error(marloc::ErrorCode::InvalidArgument, what + ": not a number: '" + text + "'");
  return *v;
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw marloc::Error(marloc::ErrorCode::InvalidArgument, "cannot write '" + path + "'");
  out << text;
}

// estimate ------------------------------------------------------------------

struct EstimateArgs {
  std::string data;
  std::string response = "y";
  std::string covariates;
  std::string indicator;
  std::string functional = "mm90";
  bool se = false;
  bool no_se = false;
  std::string format = "json";
  std::string dump_convolution;
  std::optional<double> k0, k1, delta;
  std::optional<int> subsets;
};

int run_estimate(const Globals& g, const EstimateArgs& a) {
  marloc::CsvOptions csv;
  csv.response = a.response;
  csv.covariates = split(a.covariates, ',');
  if (!a.indicator.empty()) csv.indicator = a.indicator;
  const auto dataset = marloc::load_csv(a.data, csv);

  marloc::EstimateOptions options;
  const auto config = load_globals_config(g);
  marloc::apply_config(config, options.pipeline.search);
  marloc::apply_config(config, options.pipeline.kernels);
  if (g.seed) options.pipeline.search.seed = *g.seed;
  if (a.k0) options.pipeline.kernels.rho0.k = *a.k0;
  if (a.k1) options.pipeline.kernels.rho1.k = *a.k1;
  if (a.delta) options.pipeline.kernels.delta = *a.delta;
  if (a.subsets) options.pipeline.search.subsets = *a.subsets;
  options.standard_error = !a.no_se && (a.se || a.functional != "mean");

  const auto report = marloc::estimate_command(dataset, a.functional, options);
  if (!a.dump_convolution.empty()) {
    const auto sample = dataset.sample();
    const auto model = marloc::RegressionModel::linear(static_cast<int>(sample.p()));
    const auto spec = marloc::LocationSpec::from_name(a.functional);
    const auto fit = marloc::fit_regression(marloc::default_regression(spec), sample, model, options.pipeline.kernels,
                                            options.pipeline.search);
    marloc::ConvolvedDistribution::build(fit, sample, model).write_csv(a.dump_convolution);
  }
  if (a.format == "table") {
    std::cout << marloc::format_text(report);
  } else {
    std::cout << marloc::to_json(report).dump(2) << '\n';
  }
  return 0;
}

// simulate ------------------------------------------------------------------

struct SimulateArgs {
  std::optional<int> replications;
  std::optional<int> n;
  std::string contaminate;
  double fraction = 0.1;
  std::string estimators = "MEAN,MEDIAN,MM90,MM95";
  std::string output;
  std::string format = "table";
  std::string write_sample;
  std::uint64_t sample_index = 0;
};

int run_simulate(const Globals& g, const SimulateArgs& a) {
  marloc::SimScenario scenario;
  marloc::EstimatorSettings settings;
  const auto config = load_globals_config(g);
  marloc::apply_config(config, scenario);
  marloc::apply_config(config, settings.kernels);
  if (g.seed) scenario.seed = *g.seed;
  if (a.replications) scenario.replications = *a.replications;
  if (a.n) scenario.n = *a.n;

  if (!a.write_sample.empty()) {
    std::ostringstream out;
    marloc::write_csv(out, marloc::generate_replicate(scenario, a.sample_index));
    write_text(a.write_sample, out.str());
    return 0;
  }

  std::vector<marloc::Estimator> estimators;
  for (const auto& name : split(a.estimators, ',')) estimators.push_back(marloc::estimator_from_name(name));

  std::optional<marloc::Contamination> contamination = scenario.contamination;
  if (!a.contaminate.empty()) {
    const auto parts = split(a.contaminate, ':');
    if (parts.size() != 1 && parts.size() != 4) {
      throw marloc::Error(marloc::ErrorCode::InvalidArgument, "--contaminate expects x* or x*:from:to:step");
    }
    marloc::Contamination c;
    c.fraction = a.fraction;
    c.x_star = to_number(parts[0], "--contaminate");
    c.y_star_grid = parts.size() == 4 ? marloc::Contamination::grid(to_number(parts[1], "--contaminate"),
                                                                    to_number(parts[2], "--contaminate"),
                                                                    to_number(parts[3], "--contaminate"))
                                      : marloc::Contamination::default_grid();
    contamination = c;
  }

  if (contamination) {
    const auto report = marloc::run_contamination_sweep(scenario, *contamination, estimators, settings, thread_count(g));
    write_text(a.output, marloc::format_csv(report));
    return 0;
  }
  const auto report = marloc::run_study(scenario, estimators, settings, thread_count(g));
  const std::string text = a.format == "csv" ? marloc::format_csv(report) : marloc::format_table(report);
  write_text(a.output, text);
  return 0;
}

// breakdown -----------------------------------------------------------------

struct BreakdownArgs {
  std::string data;
  std::string response = "y";
  std::string functional = "mm90";
  int n = 100;
  int trials = 50;
  std::string fractions = "0.01,0.05,0.1,0.15,0.2,0.25,0.28,0.3,0.35,0.4,0.45";
  std::string placement = "both";
  std::string output;
};

int run_breakdown(const Globals& g, const BreakdownArgs& a) {
  const std::uint64_t seed = g.seed.value_or(20240101);
  marloc::CompleteCaseSample base = [&] {
    if (!a.data.empty()) {
      marloc::CsvOptions csv;
      csv.response = a.response;
      return marloc::load_csv(a.data, csv).sample();
    }
    marloc::SimScenario scenario;
    scenario.n = a.n;
    scenario.seed = seed;
    return marloc::generate_replicate(scenario, 0);
  }();

  marloc::RegressionKernels kernels;
  marloc::SearchConfig search;
  const auto config = load_globals_config(g);
  marloc::apply_config(config, kernels);
  marloc::apply_config(config, search);

  marloc::Placement placement = marloc::Placement::Both;
  if (a.placement == "x") placement = marloc::Placement::LeverageX;
  else if (a.placement == "y") placement = marloc::Placement::OutlierY;
  else if (a.placement != "both") throw marloc::Error(marloc::ErrorCode::InvalidArgument, "--placement: x, y or both");

  std::vector<double> fractions;
  for (const auto& f : split(a.fractions, ',')) fractions.push_back(to_number(f, "--fractions"));
  const auto spec = marloc::LocationSpec::from_name(a.functional);
  const auto pipeline = marloc::make_location_pipeline(spec, kernels, search);
  const auto grid = marloc::kappa_grid(base.n(), base.m(), fractions);
  const auto report = marloc::empirical_fsbp(pipeline, base, grid, marloc::ContaminationScheme{}.ladder, a.trials, seed,
                                             placement, thread_count(g));
  write_text(a.output, marloc::format_csv(report));
  if (!a.output.empty() && a.output != "-") {
    std::cout << "clean estimate " << report.clean_estimate << ", escape bound " << report.bound << '\n';
    if (report.smallest_escape) std::cout << "smallest escaping kappa " << *report.smallest_escape << '\n';
    else std::cout << "no escape on the grid\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust location estimation with responses missing at random"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals globals;
  app.add_option("--seed", globals.seed, "Master seed");
  app.add_option("--threads", globals.threads, "Worker threads (default: MARLOC_THREADS or hardware)")
      ->check(CLI::PositiveNumber);
  app.add_option("--config", globals.config_path, "Flat key = value configuration file")->check(CLI::ExistingFile);

  EstimateArgs est;
  auto* estimate = app.add_subcommand("estimate", "Estimate the response location from a CSV file");
  estimate->add_option("--data", est.data, "CSV input")->required()->check(CLI::ExistingFile);
  estimate->add_option("--response", est.response, "Response column")->capture_default_str();
  estimate->add_option("--covariates", est.covariates, "Comma separated covariate columns (default: all others)");
  estimate->add_option("--indicator", est.indicator, "Optional 0/1 column marking observed responses");
  estimate->add_option("--functional", est.functional, "mean, median, mm90 or mm95")
      ->check(CLI::IsMember({"mean", "median", "mm90", "mm95"}))
      ->capture_default_str();
  estimate->add_flag("--se", est.se, "Report the standard error (always on unless --no-se, except for mean)");
  estimate->add_flag("--no-se", est.no_se, "Skip the standard error");
  estimate->add_option("--format", est.format, "json or table")
      ->check(CLI::IsMember({"json", "table"}))
      ->capture_default_str();
  estimate->add_option("--dump-convolution", est.dump_convolution, "Write the convolution support to a CSV file");
  estimate->add_option("--k0", est.k0, "Bisquare constant of the scale");
  estimate->add_option("--k1", est.k1, "Bisquare constant of the MM regression");
  estimate->add_option("--delta", est.delta, "Scale equation right-hand side");
  estimate->add_option("--subsets", est.subsets, "Resampling subsets for the S start");

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Monte Carlo study on the generated design");
  simulate->add_option("--replications", sim.replications, "Replications");
  simulate->add_option("--n", sim.n, "Sample size");
  simulate->add_option("--contaminate", sim.contaminate, "x* or x*:from:to:step for a contamination sweep");
  simulate->add_option("--fraction", sim.fraction, "Fraction of observed rows replaced")->capture_default_str();
  simulate->add_option("--estimators", sim.estimators, "Comma separated estimators")->capture_default_str();
  simulate->add_option("--format", sim.format, "table or csv")->check(CLI::IsMember({"table", "csv"}));
  simulate->add_option("--output", sim.output, "Output file (default: stdout)");
  simulate->add_option("--write-sample", sim.write_sample, "Write one generated replicate as CSV and exit");
  simulate->add_option("--sample-index", sim.sample_index, "Replicate index for --write-sample");

  BreakdownArgs bd;
  auto* breakdown = app.add_subcommand("breakdown", "Empirical finite-sample breakdown over a contamination grid");
  breakdown->add_option("--data", bd.data, "CSV input (default: a generated sample)")->check(CLI::ExistingFile);
  breakdown->add_option("--response", bd.response, "Response column")->capture_default_str();
  breakdown->add_option("--functional", bd.functional, "mean, median, mm90 or mm95")
      ->check(CLI::IsMember({"mean", "median", "mm90", "mm95"}))
      ->capture_default_str();
  breakdown->add_option("--n", bd.n, "Generated sample size")->capture_default_str();
  breakdown->add_option("--trials", bd.trials, "Trials per grid point")->capture_default_str();
  breakdown->add_option("--fractions", bd.fractions, "Comma separated contamination fractions")->capture_default_str();
  breakdown->add_option("--placement", bd.placement, "x, y or both")->capture_default_str();
  breakdown->add_option("--output", bd.output, "CSV output file (default: stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (estimate->parsed()) return run_estimate(globals, est);
    if (simulate->parsed()) return run_simulate(globals, sim);
    if (breakdown->parsed()) return run_breakdown(globals, bd);
  } catch (const marloc::Error& e) {
    std::cerr << "error: " << marloc::to_string(e.code()) << ": " << e.what() << '\n';
    return marloc::exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
