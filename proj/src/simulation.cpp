#include "oewt/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <thread>

#include "oewt/csv.hpp"
#include "oewt/log.hpp"
#include "oewt/rng.hpp"

namespace oewt {

namespace {

constexpr double kBalanceTolerance = 1e-6;
constexpr double kMaxFailureShare = 0.01;

const std::vector<std::pair<EstimatorId, const char*>>& estimator_table() {
  static const std::vector<std::pair<EstimatorId, const char*>> table{
      {EstimatorId::naive, "naive"}, {EstimatorId::oe, "oe"},
      {EstimatorId::clw, "clw"},     {EstimatorId::kw, "kw"},
      {EstimatorId::vd, "vd"},       {EstimatorId::wvl, "wvl"}};
  return table;
}

}  // namespace

std::string estimator_name(EstimatorId id) {
  for (const auto& [key, name] : estimator_table()) {
    if (key == id) return name;
  }
  throw ValidationError("unknown estimator id");
}

EstimatorId parse_estimator(std::string_view name) {
  for (const auto& [key, label] : estimator_table()) {
    if (name == label) return key;
  }
  throw ConfigError("unknown estimator '" + std::string(name) +
                    "' (expected naive|oe|clw|kw|vd|wvl)");
}

std::optional<Method> estimator_method(EstimatorId id) {
  switch (id) {
    case EstimatorId::naive: return std::nullopt;
    case EstimatorId::oe: return Method::OE;
    case EstimatorId::clw: return Method::CLW;
    case EstimatorId::kw: return Method::KW;
    case EstimatorId::vd: return Method::VD;
    case EstimatorId::wvl: return Method::WVL;
  }
  throw ValidationError("unknown estimator id");
}

std::vector<EstimatorId> default_estimators() {
  return {EstimatorId::naive, EstimatorId::oe, EstimatorId::clw,
          EstimatorId::kw,    EstimatorId::vd, EstimatorId::wvl};
}

void ScenarioConfig::validate() const {
  if (n_population < 2) throw ValidationError("scenario: population size must be at least 2");
  if (!(rho > 0.0 && rho < 1.0)) throw ValidationError("scenario: rho must lie in (0,1)");
  if (target_n_b < 1 || target_n_b >= n_population) {
    throw ValidationError("scenario: target N_B must lie in [1, N-1]");
  }
  if (n_a < 2) throw ValidationError("scenario: n_A must be at least 2");
  if (replicates < 1) throw ValidationError("scenario: need at least one replicate");
  if (estimators.empty()) throw ValidationError("scenario: estimator list is empty");
  if (big_slopes.empty()) throw ValidationError("scenario: big-sample slopes are empty");
  if (size_col < 1) throw ValidationError("scenario: size column must be a covariate column");
  if (!(size_ratio > 1.0)) throw ValidationError("scenario: size ratio must exceed 1");
  if (workers < 1) throw ValidationError("scenario: worker count must be at least 1");
  fit.validate();
  variance.validate();
}

double percent_rb(const std::vector<double>& estimates, double truth) {
  if (estimates.empty()) throw ValidationError("percent_rb: no estimates");
  if (truth == 0.0) throw ValidationError("percent_rb: truth is zero");
  double acc = 0.0;
  for (double e : estimates) acc += (e - truth) / truth;
  return acc / static_cast<double>(estimates.size()) * 100.0;
}

double percent_rrmse(const std::vector<double>& estimates, double truth) {
  if (estimates.empty()) throw ValidationError("percent_rrmse: no estimates");
  if (truth == 0.0) throw ValidationError("percent_rrmse: truth is zero");
  double acc = 0.0;
  for (double e : estimates) acc += (e - truth) * (e - truth);
  return std::sqrt(acc / static_cast<double>(estimates.size())) / truth * 100.0;
}

double coverage_rate(const std::vector<std::pair<double, double>>& intervals,
                     double truth) {
  if (intervals.empty()) throw ValidationError("coverage_rate: no intervals");
  std::int64_t hit = 0;
  for (const auto& [lo, hi] : intervals) {
    if (lo <= truth && truth <= hi) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(intervals.size());
}

namespace {

// Everything that depends only on (population, config), computed once and
// shared read-only across replicate workers.
struct ScenarioContext {
  const Population* pop = nullptr;
  const ScenarioConfig* config = nullptr;
  Eigen::VectorXd pi_true;    // big-sample inclusion probability per unit
  Eigen::VectorXd z;          // PPS size variable per unit
  Eigen::VectorXd d_ref_pop;  // reference-design weight per unit
  double truth = 0.0;
};

ScenarioContext make_context(const Population& pop, const ScenarioConfig& config) {
  config.validate();
  if (pop.n() != config.n_population) {
    throw ValidationError("scenario: population size " + std::to_string(pop.n()) +
                          " does not match configured N " +
                          std::to_string(config.n_population));
  }

  ScenarioContext ctx;
  ctx.pop = &pop;
  ctx.config = &config;

  if (pop.pi_b_true) {
    // Oracle hook: a population carrying its own big-sample propensities
    // bypasses the logistic selection model entirely.
    ctx.pi_true = *pop.pi_b_true;
  } else {
    Eigen::VectorXd slopes =
        Eigen::Map<const Eigen::VectorXd>(config.big_slopes.data(),
                                          static_cast<Eigen::Index>(config.big_slopes.size()));
    BigDesignSpec big{std::move(slopes), config.target_n_b};
    big.validate(pop);
    const double theta0 = calibrate_intercept(pop, big.slopes, config.target_n_b);
    ctx.pi_true = true_propensities(pop, big.slopes, theta0);
  }

  PPSDesignSpec pps{config.n_a, config.size_col, config.size_ratio};
  pps.validate(pop);
  const Eigen::VectorXd size_base = pop.X.col(config.size_col);
  ctx.z = size_base.array() + solve_ratio_constant(size_base, config.size_ratio);
  ctx.d_ref_pop = pps_inclusion_probabilities(ctx.z, config.n_a).cwiseInverse();

  ctx.truth = pop.y.mean();
  return ctx;
}

PropensityFit injected_fit(const ScenarioContext& ctx, Method method,
                           const ReferenceSample& a, const BigSample& b) {
  PropensityFit out;
  out.method = method;
  out.theta_hat = Eigen::VectorXd::Zero(b.p());
  out.converged = true;
  out.pi_hat_B.resize(b.n());
  for (Eigen::Index i = 0; i < b.n(); ++i) out.pi_hat_B[i] = ctx.pi_true[b.ids[i] - 1];
  out.pi_hat_A.resize(a.n());
  for (Eigen::Index i = 0; i < a.n(); ++i) out.pi_hat_A[i] = ctx.pi_true[a.ids[i] - 1];
  return out;
}

double balance_threshold(Method method, const ReferenceSample& a, const BigSample& b) {
  switch (method) {
    case Method::OE:
    case Method::CLW:
      return kBalanceTolerance * static_cast<double>(b.n());
    default:
      return kBalanceTolerance * (static_cast<double>(b.n()) + a.dA.sum());
  }
}

ReplicateRecord run_replicate(const ScenarioContext& ctx, std::int64_t r) {
  const ScenarioConfig& cfg = *ctx.config;
  const std::uint64_t seed =
      rng::mix(cfg.master_seed, rng::double_bits(cfg.rho),
               static_cast<std::uint64_t>(cfg.target_n_b), static_cast<std::uint64_t>(r));

  ReplicateRecord rec;
  rec.index = r;
  rec.outcomes.resize(cfg.estimators.size());

  BigSample b = draw_poisson(*ctx.pop, ctx.pi_true, seed);
  ReferenceSample a = draw_pps_systematic_z(*ctx.pop, ctx.z, cfg.n_a, seed);
  a.delta = tag_overlap(a.ids, b.ids);

  Eigen::VectorXd d_ref(b.n());
  for (Eigen::Index i = 0; i < b.n(); ++i) d_ref[i] = ctx.d_ref_pop[b.ids[i] - 1];
  b.d_ref = std::move(d_ref);

  rec.n_b = b.n();
  std::int64_t overlap = 0;
  for (std::uint8_t f : *a.delta) overlap += f;
  rec.n_overlap = overlap;

  for (std::size_t k = 0; k < cfg.estimators.size(); ++k) {
    ReplicateOutcome& out = rec.outcomes[k];
    const EstimatorId est = cfg.estimators[k];
    try {
      if (est == EstimatorId::naive) {
        out.mu_hat = naive_mean(b).mu_hat;
        continue;
      }
      const Method method = *estimator_method(est);
      PropensityFit result;
      if (cfg.inject_true_propensities) {
        result = injected_fit(ctx, method, a, b);
      } else {
        result = fit(method, a, b, cfg.fit);
        if (!result.converged) {
          out.note = "fit did not converge";
          continue;
        }
        if (cfg.check_balance) {
          const double resid = balance_residual(method, result, a, b);
          out.balance_ok = resid <= balance_threshold(method, a, b);
        }
      }
      out.mu_hat = ipw_mean(b, result.pi_hat_B).mu_hat;
      if (est == EstimatorId::oe && cfg.compute_coverage) {
        const VarianceBreakdown vb = plug_in_variance(
            result, a, b, *out.mu_hat, static_cast<double>(cfg.n_population), cfg.variance);
        out.variance = vb.total;
        const auto [lo, hi] = confidence_interval(*out.mu_hat, vb.total, cfg.variance.level);
        out.ci_lower = lo;
        out.ci_upper = hi;
      }
    } catch (const Error& e) {
      out.mu_hat.reset();
      out.variance.reset();
      out.ci_lower.reset();
      out.ci_upper.reset();
      out.note = e.what();
    }
  }
  return rec;
}

}  // namespace

ScenarioReport run_scenario(const Population& pop, const ScenarioConfig& config) {
  const auto started = std::chrono::steady_clock::now();
  const ScenarioContext ctx = make_context(pop, config);
  const std::int64_t r_total = config.replicates;

  std::vector<ReplicateRecord> records(static_cast<std::size_t>(r_total));
  std::atomic<std::int64_t> next{0};
  auto work = [&] {
    for (;;) {
      const std::int64_t r = next.fetch_add(1, std::memory_order_relaxed);
      if (r >= r_total) break;
      records[static_cast<std::size_t>(r)] = run_replicate(ctx, r);
      if ((r + 1) % 100 == 0) {
        log_debug("replicate " + std::to_string(r + 1) + "/" + std::to_string(r_total));
      }
    }
  };

  const int workers =
      static_cast<int>(std::min<std::int64_t>(config.workers, r_total));
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }

  ScenarioReport report;
  report.config = config;
  report.truth = ctx.truth;

  double n_b_acc = 0.0;
  double overlap_acc = 0.0;
  for (const auto& rec : records) {
    n_b_acc += static_cast<double>(rec.n_b);
    overlap_acc += static_cast<double>(rec.n_overlap);
  }
  report.mean_n_b = n_b_acc / static_cast<double>(r_total);
  report.mean_overlap = overlap_acc / static_cast<double>(r_total);

  for (std::size_t k = 0; k < config.estimators.size(); ++k) {
    EstimatorSummary s;
    s.id = config.estimators[k];
    s.attempted = r_total;
    std::vector<double> estimates;
    estimates.reserve(records.size());
    std::vector<std::pair<double, double>> intervals;
    for (const auto& rec : records) {
      const ReplicateOutcome& out = rec.outcomes[k];
      if (out.mu_hat) {
        estimates.push_back(*out.mu_hat);
      } else {
        ++s.failed;
      }
      if (!out.balance_ok) ++s.balance_violations;
      if (out.ci_lower && out.ci_upper) intervals.emplace_back(*out.ci_lower, *out.ci_upper);
    }
    if (estimates.empty()) {
      report.valid = false;
      report.invalid_reason = estimator_name(s.id) + ": every replicate failed";
    } else {
      s.percent_rb = percent_rb(estimates, ctx.truth);
      s.percent_rrmse = percent_rrmse(estimates, ctx.truth);
    }
    if (!intervals.empty()) s.coverage = coverage_rate(intervals, ctx.truth);
    if (static_cast<double>(s.failed) >
        kMaxFailureShare * static_cast<double>(r_total)) {
      report.valid = false;
      report.invalid_reason = estimator_name(s.id) + " failed on " +
                              std::to_string(s.failed) + "/" + std::to_string(r_total) +
                              " replicates";
    }
    report.estimators.push_back(std::move(s));
  }

  if (config.keep_replicates) report.replicates = std::move(records);
  report.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

void StudyConfig::validate() const {
  if (rhos.empty()) throw ValidationError("study: rho list is empty");
  for (double r : rhos) {
    if (!(r > 0.0 && r < 1.0)) throw ValidationError("study: rho must lie in (0,1)");
  }
  if (n_b_targets.empty()) throw ValidationError("study: N_B list is empty");
  ScenarioConfig probe = base;
  for (std::int64_t n_b : n_b_targets) {
    probe.target_n_b = n_b;
    probe.rho = rhos.front();
    probe.validate();
  }
}

std::vector<ScenarioReport> run_study(const StudyConfig& config) {
  config.validate();
  std::vector<ScenarioReport> reports;
  for (double rho : config.rhos) {
    PopulationSpec pspec;
    pspec.n = config.base.n_population;
    pspec.rho = rho;
    pspec.seed = config.base.master_seed;
    log_info("generating population: N=" + std::to_string(pspec.n) +
             " rho=" + format_double(rho));
    const Population pop = generate_population(pspec);
    for (std::int64_t n_b : config.n_b_targets) {
      ScenarioConfig cell = config.base;
      cell.rho = rho;
      cell.target_n_b = n_b;
      log_info("scenario rho=" + format_double(rho) + " N_B=" + std::to_string(n_b) +
               " R=" + std::to_string(cell.replicates));
      ScenarioReport report = run_scenario(pop, cell);
      log_info("scenario done in " + format_double(report.runtime_seconds) + "s" +
               (report.valid ? "" : " (INVALID: " + report.invalid_reason + ")"));
      reports.push_back(std::move(report));
    }
  }
  return reports;
}

namespace {

std::string trimmed(std::string_view s) {
  const auto from = s.find_first_not_of(" \t\r");
  if (from == std::string_view::npos) return {};
  const auto to = s.find_last_not_of(" \t\r");
  return std::string(s.substr(from, to - from + 1));
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> items;
  std::size_t start = 0;
  while (start <= value.size()) {
    const auto comma = value.find(',', start);
    const auto end = comma == std::string::npos ? value.size() : comma;
    const std::string item = trimmed(std::string_view(value).substr(start, end - start));
    if (!item.empty()) items.push_back(item);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return items;
}

double parse_real(const std::string& text) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ConfigError("not a number: '" + text + "'");
  }
  return v;
}

std::int64_t parse_integer(const std::string& text) {
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ConfigError("not an integer: '" + text + "'");
  }
  return v;
}

bool parse_flag(const std::string& text) {
  if (text == "true" || text == "yes" || text == "1") return true;
  if (text == "false" || text == "no" || text == "0") return false;
  throw ConfigError("not a boolean: '" + text + "'");
}

void apply_study_key(StudyConfig& config, const std::string& key, const std::string& value) {
  if (key == "n_population") {
    config.base.n_population = parse_integer(value);
  } else if (key == "rho") {
    config.rhos.clear();
    for (const auto& item : split_list(value)) config.rhos.push_back(parse_real(item));
  } else if (key == "n_b") {
    config.n_b_targets.clear();
    for (const auto& item : split_list(value)) config.n_b_targets.push_back(parse_integer(item));
  } else if (key == "n_a") {
    config.base.n_a = parse_integer(value);
  } else if (key == "replicates") {
    config.base.replicates = parse_integer(value);
  } else if (key == "seed") {
    config.base.master_seed = static_cast<std::uint64_t>(parse_integer(value));
  } else if (key == "estimators") {
    config.base.estimators.clear();
    for (const auto& item : split_list(value)) {
      config.base.estimators.push_back(parse_estimator(item));
    }
  } else if (key == "slopes") {
    config.base.big_slopes.clear();
    for (const auto& item : split_list(value)) config.base.big_slopes.push_back(parse_real(item));
  } else if (key == "size_col") {
    config.base.size_col = static_cast<int>(parse_integer(value));
  } else if (key == "size_ratio") {
    config.base.size_ratio = parse_real(value);
  } else if (key == "tolerance") {
    config.base.fit.tolerance = parse_real(value);
  } else if (key == "max_iterations") {
    config.base.fit.max_iterations = static_cast<int>(parse_integer(value));
  } else if (key == "variance") {
    if (value == "standard") {
      config.base.variance.variant = VarianceVariant::standard;
    } else if (value == "alt") {
      config.base.variance.variant = VarianceVariant::alt;
    } else {
      throw ConfigError("variance must be standard or alt, got '" + value + "'");
    }
  } else if (key == "level") {
    config.base.variance.level = parse_real(value);
  } else if (key == "coverage") {
    config.base.compute_coverage = parse_flag(value);
  } else if (key == "check_balance") {
    config.base.check_balance = parse_flag(value);
  } else if (key == "inject_true_propensities") {
    config.base.inject_true_propensities = parse_flag(value);
  } else if (key == "keep_replicates") {
    config.base.keep_replicates = parse_flag(value);
  } else if (key == "workers") {
    config.base.workers = static_cast<int>(parse_integer(value));
  } else {
    throw ConfigError("unknown key '" + key + "'");
  }
}

}  // namespace

StudyConfig load_study_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);

  StudyConfig config;
  std::set<std::string> seen;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string stripped = trimmed(line);
    if (stripped.empty()) continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path + ":" + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trimmed(std::string_view(stripped).substr(0, eq));
    const std::string value = trimmed(std::string_view(stripped).substr(eq + 1));
    if (key.empty() || value.empty()) {
      throw ConfigError(path + ":" + std::to_string(line_no) + ": expected key = value");
    }
    if (!seen.insert(key).second) {
      throw ConfigError(path + ":" + std::to_string(line_no) + ": duplicate key '" + key + "'");
    }
    try {
      apply_study_key(config, key, value);
    } catch (const Error& e) {
      throw ConfigError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  config.validate();
  return config;
}

void write_results_csv(const std::string& path, const std::vector<ScenarioReport>& reports) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot open output file: " + path);
  out << "rho,n_b_target,n_a,replicates,master_seed,estimator,attempted,failed,"
         "balance_violations,percent_rb,percent_rrmse,coverage,mean_n_b,mean_overlap,"
         "truth,valid\n";
  for (const auto& rep : reports) {
    const auto& cfg = rep.config;
    for (const auto& s : rep.estimators) {
      out << format_double(cfg.rho) << ',' << cfg.target_n_b << ',' << cfg.n_a << ','
          << cfg.replicates << ',' << cfg.master_seed << ',' << estimator_name(s.id) << ','
          << s.attempted << ',' << s.failed << ',' << s.balance_violations << ','
          << format_double(s.percent_rb) << ',' << format_double(s.percent_rrmse) << ','
          << (s.coverage ? format_double(*s.coverage) : std::string()) << ','
          << format_double(rep.mean_n_b) << ',' << format_double(rep.mean_overlap) << ','
          << format_double(rep.truth) << ',' << (rep.valid ? 1 : 0) << '\n';
    }
  }
  if (!out) throw ValidationError("failed while writing output file: " + path);
}

std::string format_results_table(const std::vector<ScenarioReport>& reports) {
  std::ostringstream os;
  os << std::fixed;

  // Preserve first-appearance order of the rho groups.
  std::vector<double> rhos;
  for (const auto& rep : reports) {
    if (std::find(rhos.begin(), rhos.end(), rep.config.rho) == rhos.end()) {
      rhos.push_back(rep.config.rho);
    }
  }

  for (double rho : rhos) {
    std::vector<const ScenarioReport*> cells;
    for (const auto& rep : reports) {
      if (rep.config.rho == rho) cells.push_back(&rep);
    }
    const auto& first = *cells.front();
    os << "rho = " << std::setprecision(2) << rho
       << "  (N = " << first.config.n_population << ", n_A = " << first.config.n_a
       << ", R = " << first.config.replicates << ", seed = " << first.config.master_seed
       << ")\n";

    os << std::left << std::setw(12) << "estimator" << std::right;
    for (const auto* cell : cells) {
      std::ostringstream head;
      head << "N_B=" << cell->config.target_n_b;
      os << std::setw(20) << head.str();
    }
    os << '\n';
    os << std::left << std::setw(12) << " " << std::right;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      os << std::setw(10) << "%RB" << std::setw(10) << "%RRMSE";
    }
    os << '\n';

    for (EstimatorId id : first.config.estimators) {
      os << std::left << std::setw(12) << estimator_name(id) << std::right
         << std::setprecision(2);
      for (const auto* cell : cells) {
        const auto it = std::find_if(cell->estimators.begin(), cell->estimators.end(),
                                     [&](const EstimatorSummary& s) { return s.id == id; });
        if (it == cell->estimators.end()) {
          os << std::setw(10) << "-" << std::setw(10) << "-";
        } else {
          os << std::setw(10) << it->percent_rb << std::setw(10) << it->percent_rrmse;
        }
      }
      os << '\n';
    }

    bool any_coverage = false;
    for (const auto* cell : cells) {
      for (const auto& s : cell->estimators) {
        if (s.coverage) any_coverage = true;
      }
    }
    if (any_coverage) {
      os << std::left << std::setw(12) << "oe coverage" << std::right
         << std::setprecision(3);
      for (const auto* cell : cells) {
        const auto it = std::find_if(cell->estimators.begin(), cell->estimators.end(),
                                     [](const EstimatorSummary& s) { return s.coverage.has_value(); });
        if (it == cell->estimators.end()) {
          os << std::setw(10) << "-" << std::setw(10) << " ";
        } else {
          os << std::setw(10) << *it->coverage << std::setw(10) << " ";
        }
      }
      os << '\n';
    }

    for (const auto* cell : cells) {
      for (const auto& s : cell->estimators) {
        if (s.failed > 0) {
          os << "  note: N_B=" << cell->config.target_n_b << " " << estimator_name(s.id)
             << " failed on " << s.failed << "/" << s.attempted << " replicates\n";
        }
      }
      if (!cell->valid) {
        os << "  INVALID (N_B=" << cell->config.target_n_b << "): " << cell->invalid_reason
           << '\n';
      }
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace oewt
