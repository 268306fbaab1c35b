#pragma once

#include "json.hpp"

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "gwi/chain.hpp"
#include "gwi/est.hpp"
#include "gwi/limit.hpp"

namespace gwi::experiment {

using Json = nlohmann::json;

enum class Kind { simulate, estimate, estimator_law, limit_law, diagnose };

std::string_view kind_name(Kind kind) noexcept;
Kind parse_kind(std::string_view text);

/// Model block: offspring and immigration family specs. Numeric fields are
/// either plain numbers or n-dependent rules {"rule": ..., "value": x}.
struct ModelSpec {
  Json offspring;
  Json immigration;
};

/// Scaling block: the index n and named rules for b_n and c_n.
struct ScalingSpec {
  std::uint64_t n = 1;
  std::string b_rule = "one";
  std::string c_rule = "one";
  double alpha = 2.0;  // exponent used by the alpha-dependent rules
  std::optional<double> gamma0;
};

/// Limit block: the limiting process and its reference law.
struct LimitBlock {
  std::string process = "none";  // cbi-stable | stable-ou | ou-diffusion | jump-ou | J | stable-increment
  std::string reference = "none";
  limit::LimitSpec spec;
  // Fourth-moment limits for the Gaussian variance law.
  double pi = 0.0;
  double r = 0.0;
  double a4 = 0.0;
  double b4 = 0.0;
};

struct RunBlock {
  std::uint64_t replicates = 1;
  std::uint64_t seed = 0;
  double dt = limit::kDefaultStep;
  double horizon = 1.0;
  std::vector<double> lambda_grid;
  std::vector<std::uint64_t> n_grid;
  unsigned workers = 1;
  std::filesystem::path out = "out";
  std::uint64_t reference_replicates = 0;
  std::optional<std::uint64_t> paths_written;  // default: every replicate
  std::string estimator;
  std::vector<std::string> normalization;
};

/// Acceptance tolerances evaluated when the experiment finishes.
struct CheckBlock {
  std::optional<double> laplace_se;
  std::optional<double> ks_max;
  std::optional<double> variance_se;
  std::optional<double> variance_rel_tol;
  std::optional<double> second_moment_rel_tol;
  std::optional<double> diagnostics_tol;
  std::vector<std::string> diagnostics_conditions;  // empty: all evaluated
  std::optional<double> bookkeeping_tol;
};

struct ExperimentConfig {
  Kind kind = Kind::simulate;
  std::string name;
  ModelSpec model;
  ScalingSpec scaling;
  LimitBlock limit;
  RunBlock run;
  CheckBlock check;
  Json source;  // merged JSON the config was parsed from

  /// Throws ConfigError unless replicates >= 1 and the blocks needed by the
  /// experiment kind are present.
  void validate() const;
};

/// Names of the built-in presets.
std::vector<std::string> preset_names();
/// Built-in preset JSON; throws ConfigError for unknown names.
Json preset(const std::string& name);

/// Parses a config; a "preset" key is expanded first and the remaining keys
/// are merged on top of it.
ExperimentConfig parse_config(const Json& doc);
ExperimentConfig load_config(const std::filesystem::path& file);

double scaling_rule(const std::string& rule, double n, double alpha);
dist::DiscreteDist build_family(const Json& spec, std::uint64_t n);
chain::GwiModel build_model(const ExperimentConfig& config, std::uint64_t n);

struct CheckResult {
  std::string name;
  double value = 0.0;
  double bound = 0.0;
  bool pass = false;
};

struct Outcome {
  Json metrics = Json::object();
  std::vector<CheckResult> checks;
  bool pass = true;
  std::map<std::string, std::string> files;  // file name -> contents
};

/// Runs the experiment in memory. Outputs depend only on (config, seed).
Outcome run(const ExperimentConfig& config);

/// Writes every file of the outcome plus summary.json into config.run.out.
void write_outcome(const ExperimentConfig& config, const Outcome& outcome);

enum ExitCode : int {
  exit_ok = 0,
  exit_config = 2,
  exit_numerical = 3,
  exit_tolerance = 4,
};

/// Evaluates fn(i) for i in [0, count) on `workers` threads and returns the
/// results in index order. The exception of the lowest failing index is
/// rethrown.
template <typename T>
std::vector<T> parallel_map(std::uint64_t count, unsigned workers,
                            const std::function<T(std::uint64_t)>& fn) {
  std::vector<std::optional<T>> slots(count);
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::uint64_t> next{0};
  auto work = [&] {
    for (std::uint64_t i = next++; i < count; i = next++) {
      try {
        slots[i].emplace(fn(i));
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const unsigned threads =
      static_cast<unsigned>(std::min<std::uint64_t>(std::max(1u, workers), count));
  if (threads <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  for (const auto& error : errors) {
    if (error) std::rethrow_exception(error);
  }
  std::vector<T> out;
  out.reserve(count);
  for (auto& slot : slots) out.push_back(std::move(*slot));
  return out;
}

}  // namespace gwi::experiment
