#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string_view>

#include "gwi/chain.hpp"

namespace gwi::est {

enum class Estimator {
  natural_mean,           // m-check, needs the immigration record
  clse_mean,              // m-hat, immigration mean known
  clse_mean_joint,        // (m-tilde, omega-tilde)
  clse_variances,         // (pi-hat, r-hat), means known
  clse_variances_plugin,  // (pi-tilde, r-tilde), means estimated
};

std::string_view estimator_name(Estimator e) noexcept;

struct EstimateReport {
  Estimator estimator;
  double value = 0.0;
  std::optional<double> second;  // omega-tilde or r-hat for the pair estimators
  /// Magnitude of the denominator of the defining ratio.
  double denominator = 0.0;
};

/// sum (y(k) - eta(k)) / sum y(k-1). Throws DegeneratePathError when the
/// chain never left zero before the last step.
EstimateReport natural_mean(const chain::PathRecord& path);

/// sum y(k-1)(y(k) - omega) / sum y(k-1)^2.
EstimateReport clse_mean_known_immigration(const chain::PathRecord& path,
                                           double omega);

/// Least squares fit of y(k) on (y(k-1), 1).
EstimateReport clse_mean_joint(const chain::PathRecord& path);

/// Least squares fit of u(k)^2 on (y(k-1), 1) with
/// u(k) = y(k) - m y(k-1) - omega.
EstimateReport clse_variances(const chain::PathRecord& path, double m,
                              double omega);

/// clse_variances with (m, omega) replaced by clse_mean_joint.
EstimateReport clse_variances_plugin(const chain::PathRecord& path);

/// Normalizing factors of the limit theorems for the estimators.
enum class Normalization {
  unit,          // 1
  linear,        // n
  mean_clse,     // n^2 / c_n
  intercept,     // n / c_n
  three_halves,  // n^{3/2}
  root,          // n^{1/2}
};

double normalization_factor(Normalization kind, double n, double c_n);
std::string_view normalization_name(Normalization kind) noexcept;

/// Row writer for `replicate,n,estimator,value,normalized_value`.
void write_estimate_header(std::ostream& out);
void write_estimate_row(std::ostream& out, std::uint64_t replicate,
                        std::uint64_t n, std::string_view estimator,
                        double value, double normalized_value);

}  // namespace gwi::est
