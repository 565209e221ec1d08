#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "oewt/errors.hpp"
#include "oewt/inference.hpp"
#include "oewt/popgen.hpp"
#include "oewt/propensity.hpp"
#include "oewt/sampling.hpp"
#include "oewt/types.hpp"

namespace oewt {

// The six estimators of the population mean compared in the study: the
// unweighted big-sample mean plus IPW means under each propensity method.
enum class EstimatorId { naive, oe, clw, kw, vd, wvl };

std::string estimator_name(EstimatorId id);
EstimatorId parse_estimator(std::string_view name);

/// Propensity method behind an estimator; empty for the naive mean.
std::optional<Method> estimator_method(EstimatorId id);

std::vector<EstimatorId> default_estimators();

/// One simulation cell: repeated Poisson draws of B and PPS draws of A from
/// a fixed population, every configured estimator applied per draw.
struct ScenarioConfig {
  std::int64_t n_population = 200000;
  double rho = 0.3;
  std::int64_t target_n_b = 50000;
  std::int64_t n_a = 5000;
  std::int64_t replicates = 2000;
  std::uint64_t master_seed = 1;
  std::vector<EstimatorId> estimators = default_estimators();

  // Selection model for B: logit(pi) = theta0 + slopes' x, intercept
  // calibrated so the expected size hits target_n_b.
  std::vector<double> big_slopes{0.1, 0.2, 0.3, 0.4};
  // Size variable for A's PPS design: column size_col of X plus a constant
  // chosen so max/min of the size equals size_ratio.
  int size_col = 3;
  double size_ratio = 10.0;

  FitOptions fit;
  VarianceOptions variance;       // interval settings for the oe estimator
  bool compute_coverage = true;   // plug-in CI per replicate for oe
  bool check_balance = true;      // verify stationarity identities per fit
  bool inject_true_propensities = false;  // oracle hook: skip fits, use true pi
  bool keep_replicates = false;   // retain per-replicate records in the report
  int workers = 1;

  void validate() const;
};

struct EstimatorSummary {
  EstimatorId id = EstimatorId::naive;
  std::int64_t attempted = 0;
  std::int64_t failed = 0;  // fit threw or did not converge; excluded from metrics
  std::int64_t balance_violations = 0;
  double percent_rb = 0.0;
  double percent_rrmse = 0.0;
  std::optional<double> coverage;  // oe only, when compute_coverage is on
};

struct ReplicateOutcome {
  std::optional<double> mu_hat;  // empty when the fit failed
  std::optional<double> variance;
  std::optional<double> ci_lower;
  std::optional<double> ci_upper;
  bool balance_ok = true;
  std::string note;  // short failure reason, empty on success
};

struct ReplicateRecord {
  std::int64_t index = 0;  // replicate number, 0-based
  std::int64_t n_b = 0;
  std::int64_t n_overlap = 0;
  std::vector<ReplicateOutcome> outcomes;  // parallel to config.estimators
};

struct ScenarioReport {
  ScenarioConfig config;
  double truth = 0.0;   // realized population mean of y
  double mean_n_b = 0.0;
  double mean_overlap = 0.0;
  std::vector<EstimatorSummary> estimators;
  bool valid = true;  // false when any estimator fails on >1% of replicates
  std::string invalid_reason;
  double runtime_seconds = 0.0;
  std::vector<ReplicateRecord> replicates;  // filled when keep_replicates
};

/// Run one cell against an already generated population. Deterministic for
/// a given (population, config) regardless of the worker count: replicate r
/// draws from streams seeded by (master_seed, rho, target_n_b, r).
ScenarioReport run_scenario(const Population& pop, const ScenarioConfig& config);

/// (1/R) sum (estimate_r - truth)/truth * 100.
double percent_rb(const std::vector<double>& estimates, double truth);

/// sqrt((1/R) sum (estimate_r - truth)^2) / truth * 100.
double percent_rrmse(const std::vector<double>& estimates, double truth);

/// Fraction of [lower, upper] intervals containing the truth.
double coverage_rate(const std::vector<std::pair<double, double>>& intervals,
                     double truth);

/// Scenario grid: every rho crossed with every target N_B. Populations are
/// generated once per rho from the same seed, so they share covariates.
struct StudyConfig {
  std::vector<double> rhos{0.3, 0.7};
  std::vector<std::int64_t> n_b_targets{2000, 50000, 140000};
  ScenarioConfig base;  // n_population, seed, and per-cell knobs

  void validate() const;
};

/// Parse a key = value study configuration file. Lists are comma separated,
/// '#' starts a comment, unknown keys are rejected.
StudyConfig load_study_config(const std::string& path);

std::vector<ScenarioReport> run_study(const StudyConfig& config);

/// One CSV row per scenario x estimator.
void write_results_csv(const std::string& path,
                       const std::vector<ScenarioReport>& reports);

/// Human-readable summary, one block per rho with estimators as rows and
/// target sizes as columns (%RB / %RRMSE pairs).
std::string format_results_table(const std::vector<ScenarioReport>& reports);

}  // namespace oewt
