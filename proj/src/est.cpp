#include "gwi/est.hpp"

#include <fmt/format.h>
#include <fmt/ostream.h>

#include <cmath>
#include <ostream>
#include <vector>

#include "gwi/errors.hpp"
#include "gwi/numeric.hpp"

namespace gwi::est {

std::string_view estimator_name(Estimator e) noexcept {
  switch (e) {
    case Estimator::natural_mean: return "natural_mean";
    case Estimator::clse_mean: return "clse_mean";
    case Estimator::clse_mean_joint: return "clse_mean_joint";
    case Estimator::clse_variances: return "clse_variances";
    case Estimator::clse_variances_plugin: return "clse_variances_plugin";
  }
  return "unknown";
}

namespace {

std::uint64_t sample_size(const chain::PathRecord& path) {
  if (path.horizon() < 1) throw DegeneratePathError("path has no transitions");
  return path.horizon();
}

double at(const chain::PathRecord& path, std::uint64_t k) {
  return static_cast<double>(path.y[k]);
}

// Mean of the lagged values y(0..N-1) and their centred sum of squares.
struct LaggedMoments {
  double mean = 0.0;
  double centred_ss = 0.0;
};

LaggedMoments lagged_moments(const chain::PathRecord& path) {
  const std::uint64_t count = sample_size(path);
  CompensatedSum sum;
  for (std::uint64_t k = 1; k <= count; ++k) sum += at(path, k - 1);
  LaggedMoments out;
  out.mean = sum.value() / static_cast<double>(count);
  CompensatedSum ss;
  for (std::uint64_t k = 1; k <= count; ++k) {
    const double d = at(path, k - 1) - out.mean;
    ss += d * d;
  }
  out.centred_ss = ss.value();
  return out;
}

EstimateReport variance_regression(const chain::PathRecord& path, double m,
                                   double omega, Estimator tag) {
  const std::uint64_t count = sample_size(path);
  const LaggedMoments lag = lagged_moments(path);
  if (!(lag.centred_ss > 0.0)) {
    throw DegeneratePathError("variance CLSE: lagged values are constant");
  }
  CompensatedSum numerator, squares;
  for (std::uint64_t k = 1; k <= count; ++k) {
    const double u = at(path, k) - m * at(path, k - 1) - omega;
    const double u2 = u * u;
    numerator += u2 * (at(path, k - 1) - lag.mean);
    squares += u2;
  }
  const double pi_hat = numerator.value() / lag.centred_ss;
  const double r_hat =
      squares.value() / static_cast<double>(count) - pi_hat * lag.mean;
  return {tag, pi_hat, r_hat, lag.centred_ss};
}

}  // namespace

EstimateReport natural_mean(const chain::PathRecord& path) {
  const std::uint64_t count = sample_size(path);
  if (!path.eta) throw DomainError("natural mean needs the immigration record");
  CompensatedSum numerator, denominator;
  for (std::uint64_t k = 1; k <= count; ++k) {
    numerator += at(path, k) - static_cast<double>(path.immigration_at(k));
    denominator += at(path, k - 1);
  }
  if (!(denominator.value() > 0.0)) {
    throw DegeneratePathError("natural mean: sum of y(k-1) is zero");
  }
  return {Estimator::natural_mean, numerator.value() / denominator.value(),
          std::nullopt, denominator.value()};
}

EstimateReport clse_mean_known_immigration(const chain::PathRecord& path,
                                           double omega) {
  const std::uint64_t count = sample_size(path);
  CompensatedSum numerator, denominator;
  for (std::uint64_t k = 1; k <= count; ++k) {
    const double prev = at(path, k - 1);
    numerator += prev * (at(path, k) - omega);
    denominator += prev * prev;
  }
  if (!(denominator.value() > 0.0)) {
    throw DegeneratePathError("mean CLSE: sum of y(k-1)^2 is zero");
  }
  return {Estimator::clse_mean, numerator.value() / denominator.value(),
          std::nullopt, denominator.value()};
}

EstimateReport clse_mean_joint(const chain::PathRecord& path) {
  const std::uint64_t count = sample_size(path);
  const LaggedMoments lag = lagged_moments(path);
  if (!(lag.centred_ss > 0.0)) {
    throw DegeneratePathError("joint mean CLSE: lagged values are constant");
  }
  CompensatedSum level;
  for (std::uint64_t k = 1; k <= count; ++k) level += at(path, k);
  const double y_bar = level.value() / static_cast<double>(count);
  CompensatedSum numerator;
  for (std::uint64_t k = 1; k <= count; ++k) {
    numerator += at(path, k - 1) * (at(path, k) - y_bar);
  }
  const double m_tilde = numerator.value() / lag.centred_ss;
  return {Estimator::clse_mean_joint, m_tilde, y_bar - m_tilde * lag.mean,
          lag.centred_ss};
}

EstimateReport clse_variances(const chain::PathRecord& path, double m,
                              double omega) {
  return variance_regression(path, m, omega, Estimator::clse_variances);
}

EstimateReport clse_variances_plugin(const chain::PathRecord& path) {
  const EstimateReport means = clse_mean_joint(path);
  return variance_regression(path, means.value, *means.second,
                             Estimator::clse_variances_plugin);
}

double normalization_factor(Normalization kind, double n, double c_n) {
  switch (kind) {
    case Normalization::unit: return 1.0;
    case Normalization::linear: return n;
    case Normalization::mean_clse: return n * n / c_n;
    case Normalization::intercept: return n / c_n;
    case Normalization::three_halves: return n * std::sqrt(n);
    case Normalization::root: return std::sqrt(n);
  }
  return 1.0;
}

std::string_view normalization_name(Normalization kind) noexcept {
  switch (kind) {
    case Normalization::unit: return "1";
    case Normalization::linear: return "n";
    case Normalization::mean_clse: return "n^2/c_n";
    case Normalization::intercept: return "n/c_n";
    case Normalization::three_halves: return "n^{3/2}";
    case Normalization::root: return "n^{1/2}";
  }
  return "?";
}

void write_estimate_header(std::ostream& out) {
  out << "replicate,n,estimator,value,normalized_value\n";
}

void write_estimate_row(std::ostream& out, std::uint64_t replicate,
                        std::uint64_t n, std::string_view estimator,
                        double value, double normalized_value) {
  fmt::print(out, "{},{},{},{:.17g},{:.17g}\n", replicate, n, estimator, value,
             normalized_value);
}

}  // namespace gwi::est
