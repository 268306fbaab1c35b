#include "gwi/experiment.hpp"

#include <fmt/format.h>
#include <fmt/ostream.h>

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "gwi/analysis.hpp"
#include "gwi/errors.hpp"
#include "gwi/numeric.hpp"

namespace gwi::experiment {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr std::uint64_t kReferenceSalt = 0x5245464552454e43ULL;

RandomStream reference_stream(std::uint64_t seed, std::uint64_t index) {
  return RandomStream::derive(mix64(seed ^ kReferenceSalt), index);
}

// ---------------------------------------------------------------------------
// JSON helpers

template <typename T>
T get_or(const Json& block, const char* key, T fallback) {
  if (!block.is_object() || !block.contains(key)) return fallback;
  try {
    return block.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw ConfigError(fmt::format("field '{}': {}", key, e.what()));
  }
}

template <typename T>
std::optional<T> get_opt(const Json& block, const char* key) {
  if (!block.is_object() || !block.contains(key) || block.at(key).is_null()) {
    return std::nullopt;
  }
  try {
    return block.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw ConfigError(fmt::format("field '{}': {}", key, e.what()));
  }
}

double rule_value(const Json& field, std::uint64_t n, const std::string& key) {
  if (field.is_number()) return field.get<double>();
  if (!field.is_object() || !field.contains("rule")) {
    throw ConfigError(fmt::format("field '{}' must be a number or a rule object", key));
  }
  const std::string rule = field.at("rule").get<std::string>();
  const double x = get_or<double>(field, "value", 1.0);
  const double dn = static_cast<double>(n);
  if (rule == "constant") return x;
  if (rule == "over-n") return x / dn;
  if (rule == "over-n-squared") return x / (dn * dn);
  if (rule == "one-minus-over-n") return 1.0 - x / dn;
  if (rule == "one-plus-over-n") return 1.0 + x / dn;
  if (rule == "floor-sqrt-n") return std::floor(x * std::sqrt(dn));
  throw ConfigError(fmt::format("unknown rule '{}' for field '{}'", rule, key));
}

double family_param(const Json& spec, const char* key, std::uint64_t n) {
  if (!spec.contains(key)) {
    throw ConfigError(fmt::format("family '{}' needs field '{}'",
                                  spec.value("family", "?"), key));
  }
  return rule_value(spec.at(key), n, key);
}

std::uint64_t family_count(const Json& spec, const char* key, std::uint64_t n) {
  const double v = family_param(spec, key, n);
  if (!(v >= 0.0) || v != std::floor(v) || v > 9.0e18) {
    throw ConfigError(fmt::format("field '{}' must be a nonnegative integer", key));
  }
  return static_cast<std::uint64_t>(v);
}

std::vector<analysis::Atom> parse_atoms(const Json& block, const char* key) {
  std::vector<analysis::Atom> atoms;
  if (!block.contains(key)) return atoms;
  for (const auto& item : block.at(key)) {
    if (!item.is_array() || item.size() != 2) {
      throw ConfigError(fmt::format("'{}' entries must be [position, mass]", key));
    }
    atoms.push_back({item[0].get<double>(), item[1].get<double>()});
  }
  return atoms;
}

double atom_moment(const std::vector<analysis::Atom>& atoms, double power) {
  double total = 0.0;
  for (const auto& atom : atoms) total += atom.mass * std::pow(atom.position, power);
  return total;
}

Json summary_json(const analysis::SampleSummary& s) {
  return Json{{"count", s.count}, {"mean", s.mean}, {"variance", s.variance}};
}

Json laplace_json(std::span<const analysis::LaplacePoint> points,
                  std::span<const double> theory) {
  Json out = Json::array();
  for (std::size_t i = 0; i < points.size(); ++i) {
    out.push_back({{"lambda", points[i].lambda},
                   {"empirical", points[i].value},
                   {"se", points[i].se},
                   {"theoretical", theory[i]}});
  }
  return out;
}

std::string laws_csv(std::span<const analysis::LaplacePoint> points,
                     std::span<const double> theory) {
  std::ostringstream out;
  analysis::write_laws_csv(out, points, theory);
  return out.str();
}

void add_check(Outcome& outcome, std::string name, double value, double bound) {
  const bool pass = std::isfinite(value) && value <= bound;
  outcome.checks.push_back({std::move(name), value, bound, pass});
  outcome.pass = outcome.pass && pass;
}

// Largest |empirical - theoretical| / se over the lambda grid.
double laplace_score(std::span<const analysis::LaplacePoint> points,
                     std::span<const double> theory) {
  double worst = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double gap = std::abs(points[i].value - theory[i]);
    worst = std::max(worst, points[i].se > 0.0 ? gap / points[i].se
                                               : (gap == 0.0 ? 0.0 : kNaN));
  }
  return worst;
}

double cbi_stable_laplace(double lambda, double t, double alpha, double gamma,
                          double varpi) {
  const double base = 1.0 + gamma * (alpha - 1.0) * std::pow(lambda, alpha - 1.0) * t;
  return std::pow(base, -varpi / (gamma * (alpha - 1.0)));
}

// SE of a sample variance from the fourth central moment.
double variance_se(std::span<const double> x) {
  const auto s = analysis::summarize(x);
  CompensatedSum m4;
  for (double v : x) m4 += std::pow(v - s.mean, 4);
  const double fourth = m4.value() / static_cast<double>(x.size());
  return std::sqrt(std::max(0.0, fourth - s.variance * s.variance) /
                   static_cast<double>(x.size()));
}

// ---------------------------------------------------------------------------
// Presets

Json make_presets() {
  Json p = Json::object();
  const Json stable_critical = {
      {"offspring", {{"family", "stable-tailed"}, {"m", 1.0}, {"alpha", 1.5}, {"c", 0.5}}},
      {"immigration", {{"family", "sibuya-tailed"}, {"beta", 0.5}, {"scale", 0.5}}}};
  const Json cbi_limit = {{"process", "cbi-stable"}, {"alpha", 1.5},
                          {"gamma", 0.5},            {"varpi", 0.5}};
  const Json stable_fluctuation = {
      {"offspring",
       {{"family", "stable-tailed"}, {"m", 1.0}, {"alpha", 1.5},
        {"c", {{"rule", "over-n"}, {"value", 0.5}}}}},
      {"immigration",
       {{"family", "stable-tailed"}, {"m", 1.0}, {"alpha", 1.5}, {"c", 0.5}}}};
  const Json jump_model = {
      {"offspring",
       {{"family", "two-point"}, {"low", 1}, {"high", {{"rule", "floor-sqrt-n"}}},
        {"p", {{"rule", "over-n-squared"}, {"value", 1.0}}}}},
      {"immigration",
       {{"family", "two-point"}, {"low", 1}, {"high", {{"rule", "floor-sqrt-n"}}},
        {"p", {{"rule", "over-n"}, {"value", 1.0}}}}}};
  const Json jump_limit = {{"a", 0.0}, {"omega", 1.0},
                           {"mu", {{1.0, 1.0}}}, {"nu", {{1.0, 1.0}}}};

  p["corollary-2.1"] = {
      {"experiment", "simulate"},
      {"model", stable_critical},
      {"scaling", {{"n", 400}, {"b_n", "n^{1/(alpha-1)}"}, {"alpha", 1.5}}},
      {"limit", cbi_limit},
      {"run", {{"replicates", 4000}, {"lambda_grid", {1.0}}, {"paths_written", 10}}},
      {"check", {{"laplace_se", 3.0}}}};

  Json natural_limit = cbi_limit;
  natural_limit["reference"] = "cbi-natural-mean";
  natural_limit["a"] = 0.0;
  p["theorem-3.1"] = {
      {"experiment", "estimator-law"},
      {"model", stable_critical},
      {"scaling", {{"n", 2000}, {"b_n", "n^{1/(alpha-1)}"}, {"alpha", 1.5}}},
      {"limit", natural_limit},
      {"run",
       {{"replicates", 3000},
        {"reference_replicates", 20000},
        {"dt", 1e-3},
        {"estimator", "natural_mean"},
        {"normalization", {"n"}},
        {"lambda_grid", {0.1, 0.25}}}},
      {"check", {{"ks_max", 0.05}}}};

  p["corollary-3.1"] = {
      {"experiment", "estimator-law"},
      {"model", stable_fluctuation},
      {"scaling", {{"n", 2000}, {"c_n", "n^{1/alpha}"}, {"alpha", 1.5}}},
      {"limit",
       {{"reference", "stable-mean-laplace"}, {"alpha", 1.5}, {"a", 0.0},
        {"omega", 1.0}, {"gamma", 0.5}, {"varpi", 0.5}}},
      {"run",
       {{"replicates", 5000},
        {"estimator", "clse_mean"},
        {"normalization", {"n^2/c_n"}},
        {"lambda_grid", {0.25, 0.5, 1.0}}}},
      {"check", {{"laplace_se", 4.0}}}};

  p["theorem-3.4"] = {
      {"experiment", "estimator-law"},
      {"model",
       {{"offspring",
         {{"family", "geometric"}, {"p", {{"rule", "one-minus-over-n"}, {"value", 1.0}}}}},
        {"immigration", {{"family", "geometric"}, {"p", 0.5}}}}},
      {"scaling", {{"n", 500}, {"c_n", "sqrt-n"}}},
      {"limit",
       {{"reference", "gaussian-variances"}, {"a", 1.0}, {"omega", 2.0},
        {"pi", 1.0}, {"r", 2.0}, {"a4", 1.0}, {"b4", 38.0}}},
      {"run",
       {{"replicates", 5000},
        {"reference_replicates", 1000000},
        {"estimator", "clse_variances"},
        {"normalization", {"n^{3/2}", "n^{1/2}"}},
        {"lambda_grid", {0.25, 0.5, 1.0}}}},
      {"check", {{"variance_rel_tol", 0.10}, {"ks_max", 0.05}}}};

  Json variance_limit = jump_limit;
  variance_limit["reference"] = "jump-variance";
  p["theorem-3.3"] = {
      {"experiment", "estimator-law"},
      {"model", jump_model},
      {"scaling", {{"n", 10000}, {"c_n", "sqrt-n"}}},
      {"limit", variance_limit},
      {"run",
       {{"replicates", 3000},
        {"reference_replicates", 100000},
        {"estimator", "clse_variances"},
        {"normalization", {"n", "1"}},
        {"lambda_grid", {0.25, 0.5, 1.0}}}},
      {"check", {{"second_moment_rel_tol", 0.15}, {"ks_max", 0.06}}}};

  Json jump_ou_limit = jump_limit;
  jump_ou_limit["process"] = "jump-ou";
  p["jump-ou"] = {{"experiment", "limit-law"},
                  {"limit", jump_ou_limit},
                  {"run", {{"replicates", 10000}}},
                  {"check", {{"variance_se", 4.0}, {"bookkeeping_tol", 1e-10}}}};

  p["stable-increment"] = {
      {"experiment", "limit-law"},
      {"limit", {{"process", "stable-increment"}, {"alpha", 1.5}}},
      {"run", {{"replicates", 1000000}, {"lambda_grid", {0.25, 0.5, 1.0}}}},
      {"check", {{"laplace_se", 3.0}}}};

  p["corollary-2.3"] = {
      {"experiment", "diagnose"},
      {"model", stable_fluctuation},
      {"scaling", {{"n", 100}, {"b_n", "n"}, {"c_n", "n^{1/alpha}"}, {"alpha", 1.5}}},
      {"run",
       {{"n_grid", {100, 1000, 10000, 100000}},
        {"lambda_grid", {0.25, 0.5, 1.0, 2.0}}}},
      {"check", {{"diagnostics_tol", 1e-9}, {"diagnostics_conditions", {"G_n", "H_n"}}}}};
  return p;
}

const Json& presets() {
  static const Json table = make_presets();
  return table;
}

// ---------------------------------------------------------------------------
// Estimators

struct Component {
  std::string label;
  double truth = 0.0;
  est::Normalization normalization = est::Normalization::unit;
};

est::Estimator parse_estimator(const std::string& name) {
  for (auto e : {est::Estimator::natural_mean, est::Estimator::clse_mean,
                 est::Estimator::clse_mean_joint, est::Estimator::clse_variances,
                 est::Estimator::clse_variances_plugin}) {
    if (est::estimator_name(e) == name) return e;
  }
  throw ConfigError(fmt::format("unknown estimator '{}'", name));
}

est::Normalization parse_normalization(const std::string& name) {
  for (auto k : {est::Normalization::unit, est::Normalization::linear,
                 est::Normalization::mean_clse, est::Normalization::intercept,
                 est::Normalization::three_halves, est::Normalization::root}) {
    if (est::normalization_name(k) == name) return k;
  }
  throw ConfigError(fmt::format("unknown normalization '{}'", name));
}

std::vector<Component> components(est::Estimator e, const chain::GwiModel& model,
                                  const std::vector<std::string>& norms) {
  const double m = model.offspring.mean();
  const double omega = model.immigration.mean();
  const double pi = model.offspring.moments().variance;
  const double r = model.immigration.moments().variance;
  std::vector<Component> out;
  using N = est::Normalization;
  switch (e) {
    case est::Estimator::natural_mean:
      out = {{"m_check", m, N::linear}};
      break;
    case est::Estimator::clse_mean:
      out = {{"m_hat", m, N::mean_clse}};
      break;
    case est::Estimator::clse_mean_joint:
      out = {{"m_tilde", m, N::mean_clse}, {"omega_tilde", omega, N::intercept}};
      break;
    case est::Estimator::clse_variances:
      out = {{"pi_hat", pi, N::three_halves}, {"r_hat", r, N::root}};
      break;
    case est::Estimator::clse_variances_plugin:
      out = {{"pi_tilde", pi, N::three_halves}, {"r_tilde", r, N::root}};
      break;
  }
  if (!norms.empty() && norms.size() != out.size()) {
    throw ConfigError(fmt::format("estimator needs {} normalizations", out.size()));
  }
  for (std::size_t i = 0; i < norms.size(); ++i) {
    out[i].normalization = parse_normalization(norms[i]);
  }
  return out;
}

std::array<double, 2> apply_estimator(est::Estimator e, const chain::PathRecord& path,
                                      const chain::GwiModel& model) {
  est::EstimateReport rep;
  switch (e) {
    case est::Estimator::natural_mean: rep = est::natural_mean(path); break;
    case est::Estimator::clse_mean:
      rep = est::clse_mean_known_immigration(path, model.immigration.mean());
      break;
    case est::Estimator::clse_mean_joint: rep = est::clse_mean_joint(path); break;
    case est::Estimator::clse_variances:
      rep = est::clse_variances(path, model.offspring.mean(), model.immigration.mean());
      break;
    case est::Estimator::clse_variances_plugin:
      rep = est::clse_variances_plugin(path);
      break;
  }
  return {rep.value, rep.second.value_or(kNaN)};
}

// ---------------------------------------------------------------------------
// Experiment kinds

std::uint64_t chain_horizon(const ExperimentConfig& config) {
  return chain::step_index(config.scaling.n, config.run.horizon);
}

Outcome run_simulate(const ExperimentConfig& config) {
  const auto model = build_model(config, config.scaling.n);
  const std::uint64_t horizon = chain_horizon(config);
  const std::uint64_t reps = config.run.replicates;
  const std::uint64_t keep = config.run.paths_written.value_or(reps);
  const double b = model.scaling.b_n;

  struct Result {
    std::optional<chain::PathRecord> path;
    double level = 0.0;
    double immigration = 0.0;
  };
  const auto results = parallel_map<Result>(
      reps, config.run.workers, [&](std::uint64_t i) {
        auto rng = RandomStream::derive(config.run.seed, i);
        auto path = chain::simulate_path(model, horizon, rng, true);
        Result res;
        res.level = static_cast<double>(path.y.back()) / b;
        double eta_total = 0.0;
        for (auto v : *path.eta) eta_total += static_cast<double>(v);
        res.immigration = eta_total / b;
        if (i < keep) res.path = std::move(path);
        return res;
      });

  Outcome outcome;
  std::vector<double> level;
  std::vector<chain::PathRecord> kept;
  for (const auto& r : results) {
    level.push_back(r.level);
    if (r.path) kept.push_back(*r.path);
  }
  std::ostringstream paths;
  chain::write_paths_csv(paths, kept);
  outcome.files["paths.csv"] = paths.str();
  outcome.metrics["terminal_level"] = summary_json(analysis::summarize(level));

  if (!config.run.lambda_grid.empty()) {
    const auto points = analysis::empirical_laplace(level, config.run.lambda_grid);
    std::vector<double> theory;
    const auto& lim = config.limit;
    for (double lambda : config.run.lambda_grid) {
      theory.push_back(lim.process == "cbi-stable"
                           ? cbi_stable_laplace(lambda, config.run.horizon,
                                                lim.spec.alpha, lim.spec.gamma,
                                                lim.spec.varpi)
                           : kNaN);
    }
    outcome.files["laws.csv"] = laws_csv(points, theory);
    outcome.metrics["laplace"] = laplace_json(points, theory);
    if (config.check.laplace_se) {
      add_check(outcome, "laplace_se", laplace_score(points, theory),
                *config.check.laplace_se);
    }
  }
  return outcome;
}

std::vector<double> reference_sample(const ExperimentConfig& config) {
  const auto& lim = config.limit;
  const std::uint64_t count = config.run.reference_replicates;
  if (count == 0) throw ConfigError("reference law needs run.reference_replicates >= 1");
  const auto grid = limit::TimeGrid::uniform(config.run.horizon, config.run.dt);
  if (lim.reference == "cbi-natural-mean") {
    return parallel_map<double>(count, config.run.workers, [&](std::uint64_t i) {
      auto rng = reference_stream(config.run.seed, i);
      const auto path = limit::simulate_cbi_stable(lim.spec.alpha, lim.spec.gamma,
                                                   lim.spec.varpi, grid, rng);
      return limit::natural_mean_functional(path, lim.spec.a);
    });
  }
  if (lim.reference == "jump-variance") {
    const auto phi = [&](double t) { return lim.spec.phi(t); };
    return parallel_map<double>(count, config.run.workers, [&](std::uint64_t i) {
      auto rng = reference_stream(config.run.seed, i);
      const auto j = limit::simulate_J(lim.spec, grid, rng);
      return limit::limit_variance_functional(j, phi).first;
    });
  }
  throw ConfigError(fmt::format("reference '{}' has no simulated sample", lim.reference));
}

Outcome run_estimate(const ExperimentConfig& config, bool with_law) {
  const auto model = build_model(config, config.scaling.n);
  const auto estimator = parse_estimator(config.run.estimator);
  const auto comps = components(estimator, model, config.run.normalization);
  const std::uint64_t horizon = chain_horizon(config);
  const bool record = estimator == est::Estimator::natural_mean;
  const double n = static_cast<double>(config.scaling.n);

  using Row = std::optional<std::array<double, 2>>;
  const auto rows = parallel_map<Row>(
      config.run.replicates, config.run.workers, [&](std::uint64_t i) -> Row {
        auto rng = RandomStream::derive(config.run.seed, i);
        const auto path = chain::simulate_path(model, horizon, rng, record);
        try {
          return apply_estimator(estimator, path, model);
        } catch (const DegeneratePathError&) {
          return std::nullopt;
        }
      });

  Outcome outcome;
  std::ostringstream csv;
  est::write_estimate_header(csv);
  std::vector<std::vector<double>> normalized(comps.size());
  std::uint64_t degenerate = 0;
  for (std::uint64_t i = 0; i < rows.size(); ++i) {
    if (!rows[i]) {
      ++degenerate;
      continue;
    }
    for (std::size_t c = 0; c < comps.size(); ++c) {
      const double value = (*rows[i])[c];
      const double z = est::normalization_factor(comps[c].normalization, n,
                                                 model.scaling.c_n) *
                       (value - comps[c].truth);
      normalized[c].push_back(z);
      est::write_estimate_row(csv, i, config.scaling.n, comps[c].label, value, z);
    }
  }
  outcome.files["estimates.csv"] = csv.str();
  outcome.metrics["degenerate_replicates"] = degenerate;
  for (std::size_t c = 0; c < comps.size(); ++c) {
    auto summary = summary_json(analysis::summarize(normalized[c]));
    summary["truth"] = comps[c].truth;
    summary["normalization"] = est::normalization_name(comps[c].normalization);
    outcome.metrics["estimators"][comps[c].label] = summary;
  }
  if (!with_law) return outcome;

  const auto& lim = config.limit;
  const auto& lambdas = config.run.lambda_grid;
  const auto& primary = normalized.at(0);
  const auto points = analysis::empirical_laplace(primary, lambdas);
  std::vector<double> theory(lambdas.size(), kNaN);

  if (lim.reference == "stable-mean-laplace") {
    for (std::size_t i = 0; i < lambdas.size(); ++i) {
      theory[i] = analysis::stable_mean_limit_laplace(
          lambdas[i], lim.spec.alpha, lim.spec.a, lim.spec.omega, lim.spec.gamma,
          lim.spec.varpi);
    }
    outcome.metrics["limit_coefficient"] = analysis::stable_mean_limit_coefficient(
        lim.spec.alpha, lim.spec.a, lim.spec.omega, lim.spec.gamma, lim.spec.varpi);
    if (config.check.laplace_se) {
      add_check(outcome, "laplace_se", laplace_score(points, theory),
                *config.check.laplace_se);
    }
  } else if (lim.reference == "cbi-natural-mean" || lim.reference == "jump-variance") {
    const auto reference = reference_sample(config);
    const auto ref_points = analysis::empirical_laplace(reference, lambdas);
    for (std::size_t i = 0; i < lambdas.size(); ++i) theory[i] = ref_points[i].value;
    const double ks = analysis::ks_two_sample(primary, reference);
    const auto ref_summary = analysis::summarize(reference);
    outcome.metrics["reference"] = summary_json(ref_summary);
    outcome.metrics["ks"] = ks;
    if (config.check.ks_max) add_check(outcome, "ks", ks, *config.check.ks_max);
    if (lim.reference == "jump-variance") {
      const auto moments = analysis::u1_u2_second_moments(
          atom_moment(lim.spec.nu, 4.0), atom_moment(lim.spec.mu, 4.0), lim.spec.a,
          lim.spec.omega);
      CompensatedSum sq;
      for (double v : primary) sq += v * v;
      const double second = sq.value() / static_cast<double>(primary.size());
      outcome.metrics["second_moment"] = second;
      outcome.metrics["second_moment_theory"] = moments.u1;
      if (config.check.second_moment_rel_tol) {
        add_check(outcome, "second_moment_rel", std::abs(second / moments.u1 - 1.0),
                  *config.check.second_moment_rel_tol);
      }
    }
  } else if (lim.reference == "gaussian-variances") {
    const auto sig = analysis::sigma_matrix(lim.spec.a, lim.spec.omega, lim.pi, lim.r,
                                            lim.a4, lim.b4);
    outcome.metrics["sigma"] = sig.sigma;
    outcome.metrics["fourth_moment_warning"] = sig.fourth_moment_warning;
    const std::uint64_t count = config.run.reference_replicates;
    if (count == 0) throw ConfigError("reference law needs run.reference_replicates >= 1");
    const auto normals =
        parallel_map<double>(count, config.run.workers, [&](std::uint64_t i) {
          auto rng = reference_stream(config.run.seed, i);
          return rng.normal();
        });
    for (std::size_t i = 0; i < lambdas.size(); ++i) {
      theory[i] = std::exp(0.5 * lambdas[i] * lambdas[i] * sig.sigma[0][0]);
    }
    for (std::size_t c = 0; c < comps.size() && c < 2; ++c) {
      const double target = sig.sigma[c][c];
      const double sd = std::sqrt(target);
      std::vector<double> reference(normals.size());
      for (std::size_t i = 0; i < normals.size(); ++i) reference[i] = sd * normals[i];
      const double var = analysis::summarize(normalized[c]).variance;
      const double ks = analysis::ks_two_sample(normalized[c], reference);
      auto& entry = outcome.metrics["estimators"][comps[c].label];
      entry["theoretical_variance"] = target;
      entry["ks"] = ks;
      if (config.check.variance_rel_tol) {
        add_check(outcome, comps[c].label + "_variance_rel", std::abs(var / target - 1.0),
                  *config.check.variance_rel_tol);
      }
      if (config.check.ks_max) {
        add_check(outcome, comps[c].label + "_ks", ks, *config.check.ks_max);
      }
    }
  } else {
    throw ConfigError(fmt::format("unknown limit reference '{}'", lim.reference));
  }
  outcome.files["laws.csv"] = laws_csv(points, theory);
  outcome.metrics["laplace"] = laplace_json(points, theory);
  return outcome;
}

Outcome run_limit_law(const ExperimentConfig& config) {
  const auto& lim = config.limit;
  const auto& spec = lim.spec;
  const auto grid = limit::TimeGrid::uniform(config.run.horizon, config.run.dt);
  const std::uint64_t reps = config.run.replicates;
  const auto& lambdas = config.run.lambda_grid;
  Outcome outcome;

  if (lim.process == "stable-increment") {
    const auto draws = parallel_map<double>(reps, config.run.workers, [&](std::uint64_t i) {
      auto rng = RandomStream::derive(config.run.seed, i);
      return limit::sample_stable_increment(spec.alpha, config.run.horizon, rng);
    });
    const auto points = analysis::empirical_laplace(draws, lambdas);
    std::vector<double> theory;
    for (double l : lambdas) theory.push_back(std::exp(config.run.horizon * std::pow(l, spec.alpha)));
    outcome.files["laws.csv"] = laws_csv(points, theory);
    outcome.metrics["laplace"] = laplace_json(points, theory);
    if (config.check.laplace_se) {
      add_check(outcome, "laplace_se", laplace_score(points, theory), *config.check.laplace_se);
    }
    return outcome;
  }

  if (lim.process == "cbi-stable") {
    struct Result {
      double level;
      std::size_t clamps;
      std::optional<limit::CbiPath> path;
    };
    const auto results = parallel_map<Result>(reps, config.run.workers, [&](std::uint64_t i) {
      auto rng = RandomStream::derive(config.run.seed, i);
      auto path = limit::simulate_cbi_stable(spec.alpha, spec.gamma, spec.varpi, grid, rng);
      Result res{path.level.terminal(), path.level.clamp_events, std::nullopt};
      if (i == 0) res.path = std::move(path);
      return res;
    });
    std::vector<double> level;
    std::size_t clamps = 0;
    for (const auto& r : results) {
      level.push_back(r.level);
      clamps += r.clamps;
    }
    std::ostringstream traj;
    limit::write_trajectory_csv(traj, results.front().path->level);
    outcome.files["trajectory.csv"] = traj.str();
    outcome.metrics["terminal"] = summary_json(analysis::summarize(level));
    outcome.metrics["clamp_events"] = clamps;
    const auto points = analysis::empirical_laplace(level, lambdas);
    std::vector<double> theory;
    for (double l : lambdas) {
      theory.push_back(cbi_stable_laplace(l, config.run.horizon, spec.alpha, spec.gamma, spec.varpi));
    }
    outcome.files["laws.csv"] = laws_csv(points, theory);
    outcome.metrics["laplace"] = laplace_json(points, theory);
    if (config.check.laplace_se) {
      add_check(outcome, "laplace_se", laplace_score(points, theory), *config.check.laplace_se);
    }
    return outcome;
  }

  if (lim.process == "stable-ou" || lim.process == "ou-diffusion") {
    const auto rho1 = [&](double t) { return spec.evaluate(spec.rho1(), t); };
    const auto rho = [&](double t) { return spec.evaluate(spec.rho(), t); };
    const auto paths = parallel_map<limit::Trajectory>(reps, config.run.workers, [&](std::uint64_t i) {
      auto rng = RandomStream::derive(config.run.seed, i);
      return lim.process == "stable-ou"
                 ? limit::simulate_stable_ou(spec.a, spec.alpha, rho1, grid, rng)
                 : limit::simulate_ou_diffusion(spec.a, rho, grid, rng);
    });
    std::vector<double> terminal;
    for (const auto& p : paths) terminal.push_back(p.terminal());
    std::ostringstream traj;
    limit::write_trajectory_csv(traj, paths.front());
    outcome.files["trajectory.csv"] = traj.str();
    outcome.metrics["terminal"] = summary_json(analysis::summarize(terminal));
    return outcome;
  }

  if (lim.process == "jump-ou") {
    struct Result {
      double z = 0.0;
      double j = 0.0;
      double bookkeeping = 0.0;
      std::optional<limit::Trajectory> path;
    };
    const double horizon = config.run.horizon;
    const double nu1 = atom_moment(spec.nu, 1.0);
    const double mu1 = atom_moment(spec.mu, 1.0);
    const double nu2 = atom_moment(spec.nu, 2.0);
    const double mu2 = atom_moment(spec.mu, 2.0);
    const double big_phi = analysis::phi_antiderivative(horizon, spec.a, spec.omega);
    const bool pure_jump = spec.a == 0.0 && spec.beta1 == 0.0 && spec.beta2 == 0.0 &&
                           spec.evaluate(spec.rho(), 0.0) == 0.0 &&
                           spec.evaluate(spec.rho(), horizon) == 0.0;
    const auto results = parallel_map<Result>(reps, config.run.workers, [&](std::uint64_t i) {
      auto rng = RandomStream::derive(config.run.seed, i);
      const auto events = limit::sample_jump_events(spec, horizon, rng);
      auto z = limit::simulate_jump_ou(spec, grid, events, rng);
      const auto j = limit::simulate_J(spec, grid, events);
      double z_sizes = 0.0;
      double j_sizes = 0.0;
      for (const auto& e : z.jumps) z_sizes += e.size;
      for (const auto& e : j.jumps) j_sizes += e.size;
      double err = std::abs(j.terminal() - (j_sizes - j.compensator));
      err = std::max(err, std::abs(j.compensator - (nu2 * horizon + mu2 * big_phi)));
      err = std::max(err, std::abs(z.compensator - (nu1 * horizon + mu1 * big_phi)));
      if (pure_jump) err = std::max(err, std::abs(z.terminal() - (z_sizes - z.compensator)));
      Result res{z.terminal(), j.terminal(), err, std::nullopt};
      if (i == 0) res.path = std::move(z);
      return res;
    });
    std::vector<double> zs;
    std::vector<double> js;
    double worst = 0.0;
    for (const auto& r : results) {
      zs.push_back(r.z);
      js.push_back(r.j);
      worst = std::max(worst, r.bookkeeping);
    }
    // Var Z(T) = int e^{2a(T-s)} (rho(s) + nu_2 + mu_2 phi(s)) ds.
    const double var_z = integrate(
        [&](double s) {
          return std::exp(2.0 * spec.a * (horizon - s)) *
                 (spec.evaluate(spec.rho(), s) + nu2 + mu2 * spec.phi(s));
        },
        0.0, horizon);
    const double var_j = atom_moment(spec.nu, 4.0) * horizon + atom_moment(spec.mu, 4.0) * big_phi;
    const auto sz = analysis::summarize(zs);
    const auto sj = analysis::summarize(js);
    outcome.metrics["Z"] = summary_json(sz);
    outcome.metrics["J"] = summary_json(sj);
    outcome.metrics["Z"]["theoretical_variance"] = var_z;
    outcome.metrics["J"]["theoretical_variance"] = var_j;
    outcome.metrics["bookkeeping_max_error"] = worst;
    std::ostringstream traj;
    std::ostringstream jumps;
    limit::write_trajectory_csv(traj, *results.front().path);
    limit::write_jump_log_csv(jumps, *results.front().path);
    outcome.files["trajectory.csv"] = traj.str();
    outcome.files["jumps.csv"] = jumps.str();
    std::ostringstream terminals;
    terminals << "replicate,z,j\n";
    for (std::size_t i = 0; i < zs.size(); ++i) {
      fmt::print(terminals, "{},{:.17g},{:.17g}\n", i, zs[i], js[i]);
    }
    outcome.files["terminals.csv"] = terminals.str();
    if (config.check.variance_se) {
      add_check(outcome, "Z_variance_se", std::abs(sz.variance - var_z) / variance_se(zs),
                *config.check.variance_se);
      add_check(outcome, "J_variance_se", std::abs(sj.variance - var_j) / variance_se(js),
                *config.check.variance_se);
    }
    if (config.check.bookkeeping_tol) {
      add_check(outcome, "bookkeeping", worst, *config.check.bookkeeping_tol);
    }
    return outcome;
  }
  throw ConfigError(fmt::format("unknown limit process '{}'", lim.process));
}

Outcome run_diagnose(const ExperimentConfig& config) {
  const auto builder = [&](std::uint64_t n) { return build_model(config, n); };
  const auto report = analysis::condition_diagnostics(builder, config.run.lambda_grid,
                                                      config.run.n_grid);
  Outcome outcome;
  std::ostringstream csv;
  analysis::write_diagnostics_csv(csv, report);
  outcome.files["diagnostics.csv"] = csv.str();
  for (const auto& cond : report.conditions) {
    if (!cond.evaluated) continue;
    outcome.metrics["conditions"][cond.name] = {{"cauchy_gap", cond.cauchy_gap},
                                                {"lipschitz", cond.lipschitz}};
    if (!config.check.diagnostics_tol) continue;
    const auto& wanted = config.check.diagnostics_conditions;
    if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), cond.name) == wanted.end()) {
      continue;
    }
    add_check(outcome, cond.name + "_cauchy_gap", cond.cauchy_gap, *config.check.diagnostics_tol);
  }
  return outcome;
}

}  // namespace

// ---------------------------------------------------------------------------

std::string_view kind_name(Kind kind) noexcept {
  switch (kind) {
    case Kind::simulate: return "simulate";
    case Kind::estimate: return "estimate";
    case Kind::estimator_law: return "estimator-law";
    case Kind::limit_law: return "limit-law";
    case Kind::diagnose: return "diagnose";
  }
  return "unknown";
}

Kind parse_kind(std::string_view text) {
  for (auto k : {Kind::simulate, Kind::estimate, Kind::estimator_law, Kind::limit_law,
                 Kind::diagnose}) {
    if (kind_name(k) == text) return k;
  }
  throw ConfigError(fmt::format("unknown experiment kind '{}'", text));
}

std::vector<std::string> preset_names() {
  std::vector<std::string> names;
  for (const auto& item : presets().items()) names.push_back(item.key());
  return names;
}

Json preset(const std::string& name) {
  if (!presets().contains(name)) throw ConfigError(fmt::format("unknown preset '{}'", name));
  return presets().at(name);
}

void ExperimentConfig::validate() const {
  if (run.replicates < 1 && kind != Kind::diagnose) {
    throw ConfigError("run.replicates must be >= 1");
  }
  if (run.workers < 1) throw ConfigError("run.workers must be >= 1");
  if (!(run.horizon > 0.0) || !(run.dt > 0.0)) {
    throw ConfigError("run.horizon and run.dt must be positive");
  }
  const bool needs_model = kind != Kind::limit_law;
  if (needs_model && (model.offspring.is_null() || model.immigration.is_null())) {
    throw ConfigError("model block needs offspring and immigration");
  }
  if ((kind == Kind::estimate || kind == Kind::estimator_law) && run.estimator.empty()) {
    throw ConfigError("run.estimator is required");
  }
  if (kind == Kind::diagnose && (run.n_grid.empty() || run.lambda_grid.empty())) {
    throw ConfigError("diagnose needs run.n_grid and run.lambda_grid");
  }
  if (kind == Kind::limit_law && limit.process == "none") {
    throw ConfigError("limit-law needs limit.process");
  }
  if (kind == Kind::estimator_law && limit.reference == "none") {
    throw ConfigError("estimator-law needs limit.reference");
  }
}

ExperimentConfig parse_config(const Json& input) {
  if (!input.is_object()) throw ConfigError("config must be a JSON object");
  Json doc = input;
  if (doc.contains("preset")) {
    Json base = preset(doc.at("preset").get<std::string>());
    Json overrides = doc;
    overrides.erase("preset");
    // Merge one level deep so that overriding run.replicates keeps the rest
    // of the run block.
    for (auto& [key, value] : overrides.items()) {
      if (value.is_object() && base.contains(key) && base[key].is_object()) {
        base[key].merge_patch(value);
      } else {
        base[key] = value;
      }
    }
    base["name"] = doc.at("preset");
    doc = std::move(base);
  }

  ExperimentConfig cfg;
  cfg.source = doc;
  try {
    cfg.kind = parse_kind(doc.at("experiment").get<std::string>());
  } catch (const Json::exception&) {
    throw ConfigError("config needs a string field 'experiment'");
  }
  cfg.name = get_or<std::string>(doc, "name", std::string(kind_name(cfg.kind)));

  const Json model = doc.value("model", Json::object());
  cfg.model.offspring = model.value("offspring", Json());
  cfg.model.immigration = model.value("immigration", Json());

  const Json scaling = doc.value("scaling", Json::object());
  cfg.scaling.n = get_or<std::uint64_t>(scaling, "n", 1);
  cfg.scaling.b_rule = get_or<std::string>(scaling, "b_n", "one");
  cfg.scaling.c_rule = get_or<std::string>(scaling, "c_n", "one");
  cfg.scaling.alpha = get_or<double>(scaling, "alpha", 2.0);
  cfg.scaling.gamma0 = get_opt<double>(scaling, "gamma0");
  if (cfg.scaling.n < 1) throw ConfigError("scaling.n must be >= 1");

  const Json lim = doc.value("limit", Json::object());
  cfg.limit.process = get_or<std::string>(lim, "process", "none");
  cfg.limit.reference = get_or<std::string>(lim, "reference", "none");
  auto& spec = cfg.limit.spec;
  spec.a = get_or<double>(lim, "a", 0.0);
  spec.omega = get_or<double>(lim, "omega", 0.0);
  spec.beta1 = get_or<double>(lim, "beta1", 0.0);
  spec.beta2 = get_or<double>(lim, "beta2", 0.0);
  spec.gamma0 = get_or<double>(lim, "gamma0", 0.0);
  spec.sigma1 = get_or<double>(lim, "sigma1", 0.0);
  spec.sigma2 = get_or<double>(lim, "sigma2", 0.0);
  spec.alpha = get_or<double>(lim, "alpha", 2.0);
  spec.gamma = get_or<double>(lim, "gamma", 0.0);
  spec.varpi = get_or<double>(lim, "varpi", 0.0);
  spec.mu = parse_atoms(lim, "mu");
  spec.nu = parse_atoms(lim, "nu");
  cfg.limit.pi = get_or<double>(lim, "pi", 0.0);
  cfg.limit.r = get_or<double>(lim, "r", 0.0);
  cfg.limit.a4 = get_or<double>(lim, "a4", 0.0);
  cfg.limit.b4 = get_or<double>(lim, "b4", 0.0);

  const Json run = doc.value("run", Json::object());
  cfg.run.replicates = get_or<std::uint64_t>(run, "replicates", 1);
  cfg.run.seed = get_or<std::uint64_t>(run, "seed", 0);
  cfg.run.dt = get_or<double>(run, "dt", limit::kDefaultStep);
  cfg.run.horizon = get_or<double>(run, "horizon", 1.0);
  cfg.run.lambda_grid = get_or<std::vector<double>>(run, "lambda_grid", {});
  cfg.run.n_grid = get_or<std::vector<std::uint64_t>>(run, "n_grid", {});
  cfg.run.workers = get_or<unsigned>(run, "workers", 1);
  cfg.run.out = get_or<std::string>(run, "out", "out");
  cfg.run.reference_replicates = get_or<std::uint64_t>(run, "reference_replicates", 0);
  cfg.run.paths_written = get_opt<std::uint64_t>(run, "paths_written");
  cfg.run.estimator = get_or<std::string>(run, "estimator", "");
  cfg.run.normalization = get_or<std::vector<std::string>>(run, "normalization", {});

  const Json check = doc.value("check", Json::object());
  cfg.check.laplace_se = get_opt<double>(check, "laplace_se");
  cfg.check.ks_max = get_opt<double>(check, "ks_max");
  cfg.check.variance_se = get_opt<double>(check, "variance_se");
  cfg.check.variance_rel_tol = get_opt<double>(check, "variance_rel_tol");
  cfg.check.second_moment_rel_tol = get_opt<double>(check, "second_moment_rel_tol");
  cfg.check.diagnostics_tol = get_opt<double>(check, "diagnostics_tol");
  cfg.check.bookkeeping_tol = get_opt<double>(check, "bookkeeping_tol");
  cfg.check.diagnostics_conditions =
      get_or<std::vector<std::string>>(check, "diagnostics_conditions", {});
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError(fmt::format("cannot read config '{}'", file.string()));
  Json doc;
  try {
    doc = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError(fmt::format("config '{}': {}", file.string(), e.what()));
  }
  return parse_config(doc);
}

double scaling_rule(const std::string& rule, double n, double alpha) {
  if (rule == "one") return 1.0;
  if (rule == "n") return n;
  if (rule == "sqrt-n") return std::sqrt(n);
  if (rule == "n^{1/alpha}" || rule == "n^{1/(alpha-1)}") {
    if (!(alpha > 1.0 && alpha <= 2.0)) {
      throw ConfigError(fmt::format("scaling rule '{}' needs alpha in (1, 2]", rule));
    }
    return rule == "n^{1/alpha}" ? std::pow(n, 1.0 / alpha) : std::pow(n, 1.0 / (alpha - 1.0));
  }
  throw ConfigError(fmt::format("unknown scaling rule '{}'", rule));
}

dist::DiscreteDist build_family(const Json& spec, std::uint64_t n) {
  if (!spec.is_object() || !spec.contains("family")) {
    throw ConfigError("family spec needs a 'family' field");
  }
  const std::string family = spec.at("family").get<std::string>();
  try {
    if (family == "deterministic") {
      return dist::DiscreteDist::deterministic(family_count(spec, "value", n));
    }
    if (family == "bernoulli") return dist::DiscreteDist::bernoulli(family_param(spec, "p", n));
    if (family == "geometric") return dist::DiscreteDist::geometric(family_param(spec, "p", n));
    if (family == "stable-tailed") {
      return dist::DiscreteDist::stable_tailed(family_param(spec, "m", n),
                                               family_param(spec, "alpha", n),
                                               family_param(spec, "c", n));
    }
    if (family == "sibuya-tailed") {
      return dist::DiscreteDist::sibuya_tailed(family_param(spec, "beta", n),
                                               family_param(spec, "scale", n));
    }
    if (family == "two-point") {
      return dist::DiscreteDist::two_point(family_count(spec, "low", n),
                                           family_count(spec, "high", n),
                                           family_param(spec, "p", n));
    }
    if (family == "explicit-pmf") {
      return dist::DiscreteDist::explicit_pmf(spec.at("pmf").get<std::vector<double>>());
    }
  } catch (const InvalidParameter& e) {
    throw ConfigError(fmt::format("family '{}': {}", family, e.what()));
  } catch (const Json::exception& e) {
    throw ConfigError(fmt::format("family '{}': {}", family, e.what()));
  }
  throw ConfigError(fmt::format("unknown family '{}'", family));
}

chain::GwiModel build_model(const ExperimentConfig& config, std::uint64_t n) {
  const double dn = static_cast<double>(n);
  chain::GwiModel model{build_family(config.model.offspring, n),
                        build_family(config.model.immigration, n),
                        n,
                        {scaling_rule(config.scaling.b_rule, dn, config.scaling.alpha),
                         scaling_rule(config.scaling.c_rule, dn, config.scaling.alpha),
                         config.scaling.gamma0}};
  try {
    model.validate();
  } catch (const InvalidParameter& e) {
    throw ConfigError(e.what());
  }
  return model;
}

Outcome run(const ExperimentConfig& config) {
  config.validate();
  Outcome outcome;
  switch (config.kind) {
    case Kind::simulate: outcome = run_simulate(config); break;
    case Kind::estimate: outcome = run_estimate(config, false); break;
    case Kind::estimator_law: outcome = run_estimate(config, true); break;
    case Kind::limit_law: outcome = run_limit_law(config); break;
    case Kind::diagnose: outcome = run_diagnose(config); break;
  }
  Json checks = Json::array();
  for (const auto& c : outcome.checks) {
    checks.push_back({{"name", c.name}, {"value", c.value}, {"bound", c.bound}, {"pass", c.pass}});
  }
  outcome.metrics["checks"] = checks;
  return outcome;
}

void write_outcome(const ExperimentConfig& config, const Outcome& outcome) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(config.run.out, ec);
  if (ec) {
    throw ConfigError(fmt::format("cannot create output directory '{}': {}",
                                  config.run.out.string(), ec.message()));
  }
  const auto write = [&](const std::string& name, const std::string& body) {
    std::ofstream out(config.run.out / name, std::ios::binary);
    if (!out) throw ConfigError(fmt::format("cannot write '{}'", (config.run.out / name).string()));
    out << body;
  };
  for (const auto& [name, body] : outcome.files) write(name, body);

  Json parameters = config.source;
  if (parameters.contains("run")) {
    parameters["run"].erase("workers");
    parameters["run"].erase("out");
  }
  parameters["run"]["seed"] = config.run.seed;
  const Json summary = {{"experiment", config.name},
                        {"parameters", parameters},
                        {"metrics", outcome.metrics},
                        {"pass", outcome.pass}};
  write("summary.json", summary.dump(2) + "\n");
}

}  // namespace gwi::experiment
