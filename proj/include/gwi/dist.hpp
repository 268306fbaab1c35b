#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "gwi/rng.hpp"

namespace gwi::dist {

enum class Family {
  deterministic,
  bernoulli,
  geometric,
  stable_tailed,
  sibuya_tailed,
  two_point,
  explicit_pmf,
};

std::string_view family_name(Family f) noexcept;

/// Mean, variance and fourth central moment. Infinite entries are stored
/// as +infinity.
struct MomentRecord {
  double mean = 0.0;
  double variance = 0.0;
  double fourth_central = 0.0;

  bool mean_finite() const noexcept;
  bool variance_finite() const noexcept;
  bool fourth_finite() const noexcept;
};

/// Tail-mass threshold defining the tabulation cutoff.
inline constexpr double kTableTailThreshold = 1e-12;
/// Hard cap on the tabulated support.
inline constexpr std::uint64_t kTableCap = 1'000'000;

/// A distribution on {0, 1, 2, ...} described by its generating function.
///
/// Families:
///  - deterministic(v):           g(s) = s^v
///  - bernoulli(p):               g(s) = 1 - p + p s
///  - geometric(p):               P(X = i) = p (1-p)^(i-1), i >= 1
///  - stable_tailed(m, alpha, c): g(s) = (1-m) + m s + c (1-s)^alpha,
///                                1 < alpha <= 2
///  - sibuya_tailed(beta, w):     g(s) = 1 - w (1-s)^beta, 0 < beta < 1
///  - two_point(lo, hi, p):       P(X = hi) = p, P(X = lo) = 1 - p
///  - explicit_pmf(p_0, p_1, ...)
///
/// Instances are immutable; copies share the precomputed pmf/tail table.
class DiscreteDist {
 public:
  static DiscreteDist deterministic(std::uint64_t value);
  static DiscreteDist bernoulli(double p);
  static DiscreteDist geometric(double p);
  static DiscreteDist stable_tailed(double m, double alpha, double c);
  static DiscreteDist sibuya_tailed(double beta, double scale);
  static DiscreteDist two_point(std::uint64_t low, std::uint64_t high,
                                double p_high);
  static DiscreteDist explicit_pmf(std::vector<double> pmf);

  Family family() const noexcept { return family_; }

  /// g(s) for s in [0, 1].
  double pgf(double s) const;
  /// 1 - g(1 - x), evaluated without cancellation, x in [0, 1].
  double pgf_complement(double x) const;
  /// g(1 - x) - 1 + m x, the second-order remainder of g at 1. Requires a
  /// finite mean.
  double pgf_remainder(double x) const;

  double pmf(std::uint64_t k) const;
  /// P(X > k).
  double tail_mass(std::uint64_t k) const;
  /// Largest tabulated value K_max.
  std::uint64_t table_cutoff() const noexcept;

  const MomentRecord& moments() const noexcept { return moments_; }
  double mean() const noexcept { return moments_.mean; }

  std::uint64_t sample(RandomStream& rng) const;
  /// Sum of `count` independent draws.
  std::uint64_t sample_iid_sum(std::uint64_t count, RandomStream& rng) const;

  std::string describe() const;

 private:
  struct Table {
    std::vector<double> pmf;   // pmf[k], k = 0..K_max
    std::vector<double> tail;  // tail[k] = P(X > k)
  };

  DiscreteDist() = default;
  void build_table();
  void compute_moments();
  double pmf_formula(std::uint64_t k) const;
  double tail_formula(std::uint64_t k) const;
  /// Smallest k > floor with P(X > k) < u, for u in (0, P(X > floor)].
  std::uint64_t invert_tail(double u, std::uint64_t floor_plus_one) const;

  Family family_ = Family::deterministic;
  std::uint64_t low_ = 0;
  std::uint64_t high_ = 0;
  double p_ = 0.0;
  double m_ = 0.0;
  double index_ = 0.0;  // alpha or beta
  double scale_ = 0.0;  // c or w
  std::vector<double> explicit_;
  MomentRecord moments_;
  std::shared_ptr<const Table> table_;
};

}  // namespace gwi::dist
