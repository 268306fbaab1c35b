#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "gwi/dist.hpp"
#include "gwi/rng.hpp"

namespace gwi::chain {

/// Level and fluctuation normalizations attached to a model index n.
struct Scaling {
  double b_n = 1.0;
  double c_n = 1.0;
  std::optional<double> gamma0;
};

/// One member y_n of a sequence of branching chains with immigration.
struct GwiModel {
  dist::DiscreteDist offspring;
  dist::DiscreteDist immigration;
  std::uint64_t n = 1;
  Scaling scaling;

  /// Throws InvalidParameter unless n >= 1 and b_n, c_n > 0.
  void validate() const;
  /// |n / c_n^2 - gamma0| when gamma0 is declared.
  std::optional<double> fluctuation_scale_gap() const;
};

/// A realized trajectory y(0..N), y(0) = 0, with the optional immigration
/// record eta(1..N) stored at indices 0..N-1.
struct PathRecord {
  std::vector<std::uint64_t> y;
  std::optional<std::vector<std::uint64_t>> eta;
  std::uint64_t n = 1;

  std::uint64_t horizon() const noexcept { return y.empty() ? 0 : y.size() - 1; }
  /// Immigration of generation k >= 1.
  std::uint64_t immigration_at(std::uint64_t k) const;
};

/// y(k) = sum_{j <= y(k-1)} xi(k, j) + eta(k). Throws OverflowError when a
/// generation exceeds the 64-bit count range.
PathRecord simulate_path(const GwiModel& model, std::uint64_t horizon,
                         RandomStream& rng, bool record_immigration);

/// E y(k) = omega (m^k - 1)/(m - 1), or k omega at criticality.
double mean_path(const GwiModel& model, std::uint64_t k);

/// floor(n t) with a 1e-9 guard so that t = k/n maps to k.
std::uint64_t step_index(std::uint64_t n, double t);

/// Z_n(t) = (y[floor(nt)] - E y[floor(nt)]) / c_n on each grid point.
std::vector<double> rescaled_fluctuation(const PathRecord& path,
                                         const GwiModel& model,
                                         std::span<const double> grid);

struct LevelPath {
  std::vector<double> level;        // Y_n(t) / b_n
  std::vector<double> immigration;  // Y'_n(t) / b_n
};

/// (Y_n(t)/b_n, Y'_n(t)/b_n) on each grid point; requires the immigration
/// record.
LevelPath rescaled_level(const PathRecord& path, const GwiModel& model,
                         std::span<const double> grid);

/// CSV with header `replicate,k,y,eta`; eta is empty when unrecorded.
void write_paths_csv(std::ostream& out, std::span<const PathRecord> paths,
                     std::uint64_t first_replicate = 0);

}  // namespace gwi::chain
