#include "gwi/chain.hpp"

#include <fmt/format.h>
#include <fmt/ostream.h>

#include <cmath>
#include <ostream>

#include "gwi/errors.hpp"

namespace gwi::chain {

void GwiModel::validate() const {
  if (n < 1) throw InvalidParameter("model index n must be >= 1");
  if (!(scaling.b_n > 0.0) || !(scaling.c_n > 0.0)) {
    throw InvalidParameter(fmt::format("need b_n, c_n > 0 (b_n = {}, c_n = {})",
                                       scaling.b_n, scaling.c_n));
  }
}

std::optional<double> GwiModel::fluctuation_scale_gap() const {
  if (!scaling.gamma0) return std::nullopt;
  const double nd = static_cast<double>(n);
  return std::abs(nd / (scaling.c_n * scaling.c_n) - *scaling.gamma0);
}

std::uint64_t PathRecord::immigration_at(std::uint64_t k) const {
  if (!eta) throw DomainError("path has no immigration record");
  if (k < 1 || k > eta->size()) {
    throw DomainError(fmt::format("immigration index {} out of range", k));
  }
  return (*eta)[k - 1];
}

PathRecord simulate_path(const GwiModel& model, std::uint64_t horizon,
                         RandomStream& rng, bool record_immigration) {
  model.validate();
  if (horizon < 1) throw DomainError("horizon must be >= 1");
  PathRecord path;
  path.n = model.n;
  path.y.assign(horizon + 1, 0);
  if (record_immigration) path.eta.emplace(horizon, 0);
  for (std::uint64_t k = 1; k <= horizon; ++k) {
    const std::uint64_t offspring =
        model.offspring.sample_iid_sum(path.y[k - 1], rng);
    const std::uint64_t immigrants = model.immigration.sample(rng);
    std::uint64_t next;
    if (__builtin_add_overflow(offspring, immigrants, &next)) {
      throw OverflowError(fmt::format("generation {} overflows", k));
    }
    path.y[k] = next;
    if (record_immigration) (*path.eta)[k - 1] = immigrants;
  }
  return path;
}

double mean_path(const GwiModel& model, std::uint64_t k) {
  const double m = model.offspring.mean();
  const double omega = model.immigration.mean();
  if (!std::isfinite(m) || !std::isfinite(omega)) {
    throw DomainError("mean path needs finite offspring and immigration means");
  }
  if (k == 0) return 0.0;
  const double kd = static_cast<double>(k);
  const double delta = m - 1.0;
  if (delta == 0.0) return kd * omega;
  // (m^k - 1)/(m - 1) without cancellation for m near 1.
  return omega * std::expm1(kd * std::log1p(delta)) / delta;
}

std::uint64_t step_index(std::uint64_t n, double t) {
  if (!(t >= 0.0)) throw DomainError(fmt::format("negative time {}", t));
  return static_cast<std::uint64_t>(
      std::floor(static_cast<double>(n) * t + 1e-9));
}

namespace {

std::uint64_t checked_step(const PathRecord& path, double t) {
  const std::uint64_t k = step_index(path.n, t);
  if (k > path.horizon()) {
    throw DomainError(fmt::format("grid point {} beyond horizon {}/{}", t,
                                  path.horizon(), path.n));
  }
  return k;
}

}  // namespace

std::vector<double> rescaled_fluctuation(const PathRecord& path,
                                         const GwiModel& model,
                                         std::span<const double> grid) {
  std::vector<double> out;
  out.reserve(grid.size());
  for (double t : grid) {
    const std::uint64_t k = checked_step(path, t);
    out.push_back((static_cast<double>(path.y[k]) - mean_path(model, k)) /
                  model.scaling.c_n);
  }
  return out;
}

LevelPath rescaled_level(const PathRecord& path, const GwiModel& model,
                         std::span<const double> grid) {
  if (!path.eta) throw DomainError("rescaled level needs the immigration record");
  // Partial sums of eta; prefix[k] = sum_{j <= k} eta(j).
  std::vector<double> prefix(path.horizon() + 1, 0.0);
  for (std::uint64_t k = 1; k <= path.horizon(); ++k) {
    prefix[k] = prefix[k - 1] + static_cast<double>((*path.eta)[k - 1]);
  }
  LevelPath out;
  out.level.reserve(grid.size());
  out.immigration.reserve(grid.size());
  for (double t : grid) {
    const std::uint64_t k = checked_step(path, t);
    out.level.push_back(static_cast<double>(path.y[k]) / model.scaling.b_n);
    out.immigration.push_back(prefix[k] / model.scaling.b_n);
  }
  return out;
}

void write_paths_csv(std::ostream& out, std::span<const PathRecord> paths,
                     std::uint64_t first_replicate) {
  out << "replicate,k,y,eta\n";
  for (std::size_t r = 0; r < paths.size(); ++r) {
    const auto& path = paths[r];
    for (std::uint64_t k = 0; k <= path.horizon(); ++k) {
      if (path.eta && k >= 1) {
        fmt::print(out, "{},{},{},{}\n", first_replicate + r, k, path.y[k],
                   (*path.eta)[k - 1]);
      } else {
        fmt::print(out, "{},{},{},\n", first_replicate + r, k, path.y[k]);
      }
    }
  }
}

}  // namespace gwi::chain
