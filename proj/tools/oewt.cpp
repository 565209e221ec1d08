#include <cstdint>
#include <ctime>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "oewt/csv.hpp"
#include "oewt/errors.hpp"
#include "oewt/inference.hpp"
#include "oewt/log.hpp"
#include "oewt/popgen.hpp"
#include "oewt/propensity.hpp"
#include "oewt/rng.hpp"
#include "oewt/sampling.hpp"
#include "oewt/simulation.hpp"
#include "oewt/types.hpp"

namespace {

using nlohmann::ordered_json;
using namespace oewt;

std::string timestamp_utc() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void emit_json(const ordered_json& doc, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << doc.dump(2) << '\n';
    return;
  }
  std::ofstream out(out_path);
  if (!out) throw ValidationError("cannot write " + out_path);
  out << doc.dump(2) << '\n';
}

struct GenerateArgs {
  std::int64_t n = 200000;
  double rho = 0.3;
  std::uint64_t seed = 1;
  std::string out;
  std::string big_out;
  std::string ref_out;
  std::int64_t n_b = 0;
  std::int64_t n_a = 0;
  std::vector<double> slopes{0.1, 0.2, 0.3, 0.4};
  int size_col = 3;
  double size_ratio = 10.0;
};

int run_generate(const GenerateArgs& args) {
  PopulationSpec spec;
  spec.n = args.n;
  spec.rho = args.rho;
  spec.seed = args.seed;
  Population pop = generate_population(spec);

  const bool want_big = !args.big_out.empty();
  const bool want_ref = !args.ref_out.empty();

  std::optional<Eigen::VectorXd> d_ref_pop;
  Eigen::VectorXd z;
  if (want_ref) {
    PPSDesignSpec pps{args.n_a, args.size_col, args.size_ratio};
    pps.validate(pop);
    const Eigen::VectorXd base = pop.X.col(args.size_col);
    z = base.array() + solve_ratio_constant(base, args.size_ratio);
    d_ref_pop = pps_inclusion_probabilities(z, args.n_a).cwiseInverse();
  }

  // Resolve the selection model first so the population dump can include
  // the true propensities alongside the covariates.
  if (want_big) {
    if (args.n_b < 1) throw ValidationError("generate: --big-out needs --n-b >= 1");
    Eigen::VectorXd slopes = Eigen::Map<const Eigen::VectorXd>(
        args.slopes.data(), static_cast<Eigen::Index>(args.slopes.size()));
    BigDesignSpec big{slopes, args.n_b};
    big.validate(pop);
    const double theta0 = calibrate_intercept(pop, slopes, args.n_b);
    pop.pi_b_true = true_propensities(pop, slopes, theta0);
  }
  write_population_csv(args.out, pop);
  log_info("population written to " + args.out + " (N=" + std::to_string(pop.n()) + ")");
  if (!want_big && !want_ref) return 0;

  BigSample b;
  if (want_big) {
    b = draw_poisson(pop, *pop.pi_b_true, args.seed);
    if (d_ref_pop) {
      Eigen::VectorXd d_ref(b.n());
      for (Eigen::Index i = 0; i < b.n(); ++i) d_ref[i] = (*d_ref_pop)[b.ids[i] - 1];
      b.d_ref = std::move(d_ref);
    }
    write_big_csv(args.big_out, b);
    log_info("big sample written to " + args.big_out + " (n=" + std::to_string(b.n()) + ")");
  }

  if (want_ref) {
    ReferenceSample a = draw_pps_systematic_z(pop, z, args.n_a, args.seed);
    if (want_big) a.delta = tag_overlap(a.ids, b.ids);
    write_reference_csv(args.ref_out, a);
    log_info("reference sample written to " + args.ref_out + " (n=" + std::to_string(a.n()) +
             ")");
  }
  return 0;
}

struct FitArgs {
  std::string method;
  std::string ref;
  std::string big;
  std::string out;
  double tolerance = 1e-8;
  int max_iterations = 50;
  bool no_timestamp = false;
};

int run_fit(const FitArgs& args) {
  const Method method = parse_method(args.method);
  ReferenceSample a = load_reference_sample(args.ref);
  const BigSample b = load_big_sample(args.big, {}, a.p());

  const bool needs_delta = method == Method::OE || method == Method::KW;
  if (needs_delta && !a.delta) {
    throw ValidationError("fit: method " + method_name(method) +
                          " needs the in_big column on the reference file");
  }
  if (!needs_delta && a.delta) {
    log_info("warning: in_big column is unused by method " + method_name(method));
    a.delta.reset();
  }

  FitOptions options;
  options.tolerance = args.tolerance;
  options.max_iterations = args.max_iterations;
  const PropensityFit result = fit(method, a, b, options);
  if (!result.converged) {
    log_info("warning: fit did not converge (score norm " +
             format_double(result.score_norm) + ")");
  }

  write_weights_csv(args.out, b.ids, result.pi_hat_B);

  ordered_json doc;
  doc["method"] = method_name(method);
  doc["theta_hat"] = std::vector<double>(result.theta_hat.data(),
                                         result.theta_hat.data() + result.theta_hat.size());
  doc["iterations"] = result.iterations;
  doc["converged"] = result.converged;
  doc["score_norm"] = result.score_norm;
  if (method == Method::WVL) doc["pi_above_one"] = result.pi_above_one;
  doc["n_ref"] = a.n();
  doc["n_big"] = b.n();
  doc["weights_file"] = args.out;
  if (!args.no_timestamp) doc["generated_at"] = timestamp_utc();
  emit_json(doc, "");
  return 0;
}

struct EstimateArgs {
  std::string weights;
  std::string big;
  double pop_size = 0.0;
  std::string variance = "none";
  double level = 0.95;
  std::string ref;
  std::string method;
  std::string out;
  bool no_timestamp = false;
};

int run_estimate(const EstimateArgs& args) {
  const BigSample b = load_big_sample(args.big);
  const WeightsFile weights = load_weights_csv(args.weights);

  std::unordered_map<std::int64_t, double> by_id;
  by_id.reserve(weights.ids.size());
  for (std::size_t i = 0; i < weights.ids.size(); ++i) {
    by_id[weights.ids[i]] = weights.pi_hat[static_cast<Eigen::Index>(i)];
  }
  Eigen::VectorXd pi_hat(b.n());
  for (Eigen::Index i = 0; i < b.n(); ++i) {
    const auto it = by_id.find(b.ids[i]);
    if (it == by_id.end()) {
      throw ValidationError("estimate: big-sample id " + std::to_string(b.ids[i]) +
                            " has no row in the weights file");
    }
    pi_hat[i] = it->second;
  }

  const MeanEstimate point = ipw_mean(b, pi_hat);
  ordered_json doc;
  doc["mu_hat"] = point.mu_hat;
  doc["n_b_hat"] = point.n_b_hat;
  doc["n_big"] = b.n();

  if (args.variance != "none") {
    VarianceOptions options;
    if (args.variance == "standard") {
      options.variant = VarianceVariant::standard;
    } else if (args.variance == "alt") {
      options.variant = VarianceVariant::alt;
    } else {
      throw ValidationError("estimate: --variance must be standard, alt, or none");
    }
    options.level = args.level;
    if (!(args.pop_size >= 1.0)) {
      throw ValidationError("estimate: --pop-size is required for the variance");
    }
    if (args.ref.empty() || args.method.empty()) {
      throw ValidationError("estimate: variance needs --ref and --method to rebuild the "
                            "propensity model on the reference sample");
    }
    const Method method = parse_method(args.method);
    if (method != Method::OE) {
      log_info("warning: the plug-in variance formula is derived for the oe objective; "
               "applying it to " + method_name(method) + " is a heuristic");
    }
    ReferenceSample a = load_reference_sample(args.ref, {}, b.p());
    if (method != Method::OE && method != Method::KW && a.delta) a.delta.reset();
    const PropensityFit refit = fit(method, a, b);
    const double drift = (refit.pi_hat_B - pi_hat).lpNorm<Eigen::Infinity>();
    if (drift > 1e-6) {
      log_info("warning: weights file disagrees with the refitted propensities "
               "(max abs difference " + format_double(drift) + ")");
    }
    const VarianceBreakdown vb =
        plug_in_variance(refit, a, b, point.mu_hat, args.pop_size, options);
    const auto [lo, hi] = confidence_interval(point.mu_hat, vb.total, options.level);
    doc["variance"] = {{"residual_term", vb.residual_term},
                       {"design_term", vb.design_term},
                       {"weight_term", vb.weight_term},
                       {"total", vb.total},
                       {"floored", vb.floored},
                       {"variant", args.variance}};
    doc["ci"] = {{"level", options.level}, {"lower", lo}, {"upper", hi}};
    doc["pop_size"] = args.pop_size;
  }

  if (!args.no_timestamp) doc["generated_at"] = timestamp_utc();
  emit_json(doc, args.out);
  return 0;
}

struct SimulateArgs {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<std::int64_t> reps;
};

int run_simulate(const SimulateArgs& args) {
  StudyConfig config = load_study_config(args.config);
  if (args.seed) config.base.master_seed = *args.seed;
  if (args.workers) config.base.workers = *args.workers;
  if (args.reps) config.base.replicates = *args.reps;
  config.validate();

  const std::vector<ScenarioReport> reports = run_study(config);
  write_results_csv(args.out, reports);
  log_info("results written to " + args.out);
  std::cout << format_results_table(reports);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Propensity-weighted estimation of a population mean from a "
               "non-probability sample with a probability reference sample"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* cmd_gen = app.add_subcommand(
      "generate", "Generate a synthetic population and optional samples");
  cmd_gen->add_option("--n", gen.n, "Population size");
  cmd_gen->add_option("--rho", gen.rho, "Outcome correlation with the linear predictor");
  cmd_gen->add_option("--seed", gen.seed, "Master seed");
  cmd_gen->add_option("--out", gen.out, "Population CSV path")->required();
  cmd_gen->add_option("--big-out", gen.big_out, "Also draw a big sample to this CSV");
  cmd_gen->add_option("--ref-out", gen.ref_out, "Also draw a reference sample to this CSV");
  cmd_gen->add_option("--n-b", gen.n_b, "Target big-sample size");
  cmd_gen->add_option("--n-a", gen.n_a, "Reference-sample size");
  cmd_gen->add_option("--slopes", gen.slopes, "Big-sample selection slopes")->delimiter(',');
  cmd_gen->add_option("--size-col", gen.size_col, "PPS size covariate column");
  cmd_gen->add_option("--size-ratio", gen.size_ratio, "PPS size max/min ratio");

  FitArgs fit_args;
  auto* cmd_fit = app.add_subcommand("fit", "Fit a propensity model");
  cmd_fit->add_option("--method", fit_args.method, "oe|clw|kw|vd|wvl")->required();
  cmd_fit->add_option("--ref", fit_args.ref, "Reference-sample CSV")->required();
  cmd_fit->add_option("--big", fit_args.big, "Big-sample CSV")->required();
  cmd_fit->add_option("--out", fit_args.out, "Weights CSV path")->required();
  cmd_fit->add_option("--tolerance", fit_args.tolerance, "Scaled score tolerance");
  cmd_fit->add_option("--max-iterations", fit_args.max_iterations, "Newton iteration cap");
  cmd_fit->add_flag("--no-timestamp", fit_args.no_timestamp,
                    "Omit the timestamp for byte-identical output");

  EstimateArgs est;
  auto* cmd_est = app.add_subcommand("estimate", "IPW mean with optional plug-in variance");
  cmd_est->add_option("--weights", est.weights, "Weights CSV from fit")->required();
  cmd_est->add_option("--big", est.big, "Big-sample CSV")->required();
  cmd_est->add_option("--pop-size", est.pop_size, "Population size N");
  cmd_est->add_option("--variance", est.variance, "standard|alt|none (default none)");
  cmd_est->add_option("--level", est.level, "Confidence level");
  cmd_est->add_option("--ref", est.ref, "Reference-sample CSV (variance only)");
  cmd_est->add_option("--method", est.method, "Propensity method (variance only)");
  cmd_est->add_option("--out", est.out, "JSON output path (default stdout)");
  cmd_est->add_flag("--no-timestamp", est.no_timestamp,
                    "Omit the timestamp for byte-identical output");

  SimulateArgs sim;
  auto* cmd_sim = app.add_subcommand("simulate", "Run the Monte Carlo scenario grid");
  cmd_sim->add_option("--config", sim.config, "key = value study configuration")->required();
  cmd_sim->add_option("--out", sim.out, "Results CSV path")->required();
  cmd_sim->add_option("--seed", sim.seed, "Override the configured seed");
  cmd_sim->add_option("--workers", sim.workers, "Override the configured worker count");
  cmd_sim->add_option("--reps", sim.reps, "Override the configured replicate count");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*cmd_gen) return run_generate(gen);
    if (*cmd_fit) return run_fit(fit_args);
    if (*cmd_est) return run_estimate(est);
    if (*cmd_sim) return run_simulate(sim);
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
