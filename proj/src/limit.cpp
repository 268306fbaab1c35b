#include "gwi/limit.hpp"

#include <fmt/format.h>
#include <fmt/ostream.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>

#include "gwi/errors.hpp"
#include "gwi/numeric.hpp"

namespace gwi::limit {

namespace {

constexpr double kPi = std::numbers::pi;

double total_mass(const std::vector<Atom>& atoms) {
  double total = 0.0;
  for (const auto& atom : atoms) total += atom.mass;
  return total;
}

double moment(const std::vector<Atom>& atoms, double power) {
  double total = 0.0;
  for (const auto& atom : atoms) total += atom.mass * std::pow(atom.position, power);
  return total;
}

const Atom& pick_atom(const std::vector<Atom>& atoms, double total,
                      RandomStream& rng) {
  double target = rng.uniform() * total;
  for (const auto& atom : atoms) {
    if (target < atom.mass) return atom;
    target -= atom.mass;
  }
  return atoms.back();
}

void validate_grid(const TimeGrid& grid) {
  if (grid.steps == 0 || !(grid.horizon > 0.0)) {
    throw DomainError("time grid needs a positive horizon and steps");
  }
}

Trajectory empty_trajectory(const TimeGrid& grid) {
  Trajectory traj;
  traj.grid = grid;
  traj.values.assign(grid.steps + 1, 0.0);
  return traj;
}

// int phi and int phi^2 over the grid horizon.
std::pair<double, double> phi_moments(const RateFunction& phi, double horizon) {
  const double first = integrate(phi, 0.0, horizon, 1e-10);
  const double second = integrate(
      [&](double t) {
        const double p = phi(t);
        return p * p;
      },
      0.0, horizon, 1e-10);
  return {first, second};
}

// Left-endpoint sum of int phi dX over the grid.
double stochastic_integral(const Trajectory& x, const RateFunction& phi) {
  CompensatedSum acc;
  for (std::size_t i = 0; i < x.grid.steps; ++i) {
    acc += phi(x.grid.at(i)) * (x.values[i + 1] - x.values[i]);
  }
  return acc.value();
}

std::pair<double, double> regression_pair(const Trajectory& x,
                                          const RateFunction& phi) {
  const auto [mean, square] = phi_moments(phi, x.grid.horizon);
  const double spread = square - mean * mean;
  if (!(spread > 0.0)) {
    throw DomainError("functional needs int phi^2 - (int phi)^2 > 0");
  }
  const double integral = stochastic_integral(x, phi);
  const double terminal = x.terminal();
  return {(integral - terminal * mean) / spread,
          (terminal * square - mean * integral) / spread};
}

}  // namespace

TimeGrid TimeGrid::uniform(double horizon, double dt) {
  if (!(horizon > 0.0) || !(dt > 0.0)) {
    throw DomainError("time grid needs horizon > 0 and dt > 0");
  }
  TimeGrid grid;
  grid.horizon = horizon;
  grid.steps = static_cast<std::size_t>(std::llround(std::ceil(horizon / dt - 1e-9)));
  return grid;
}

// ---------------------------------------------------------------------------

double LimitSpec::phi(double t) const { return analysis::phi(t, a, omega); }

AffineIntensity LimitSpec::rho() const {
  return {2.0 * sigma1 - a * gamma0,
          2.0 * sigma2 + omega * (1.0 - omega) * gamma0};
}

AffineIntensity LimitSpec::rho1() const { return {gamma, varpi}; }

double LimitSpec::evaluate(const AffineIntensity& form, double t) const {
  return form.slope * phi(t) + form.offset;
}

void LimitSpec::validate(double horizon) const {
  for (const auto* atoms : {&mu, &nu}) {
    for (const auto& atom : *atoms) {
      if (!(atom.position > 0.0) || !(atom.mass > 0.0)) {
        throw InvalidParameter("jump atoms need position > 0 and mass > 0");
      }
    }
  }
  if (!(omega >= 0.0)) throw InvalidParameter("omega must be >= 0");
  const AffineIntensity form = rho();
  // rho is affine in the monotone phi, so the endpoints bound it.
  if (evaluate(form, 0.0) < 0.0 || evaluate(form, horizon) < 0.0) {
    throw InvalidParameter("Gaussian intensity rho is negative on the horizon");
  }
}

// ---------------------------------------------------------------------------

double sample_stable_increment(double alpha, double dt, RandomStream& rng) {
  if (!(alpha > 1.0 && alpha <= 2.0)) {
    throw InvalidParameter(fmt::format("stable index {} outside (1, 2]", alpha));
  }
  if (!(dt > 0.0)) throw DomainError("stable increment needs dt > 0");
  if (alpha == 2.0) return std::sqrt(2.0 * dt) * rng.normal();
  // Chambers-Mallows-Stuck with skewness +1. S_alpha(sigma, 1, 0) has
  // E exp(-l X) = exp(-sigma^alpha l^alpha / cos(pi alpha / 2)); the scale
  // below turns the exponent into dt * l^alpha.
  const double v = kPi * (rng.uniform() - 0.5);
  const double w = rng.exponential();
  const double tan_term = std::tan(kPi * alpha / 2.0);
  const double b = std::atan(tan_term) / alpha;
  const double s = std::pow(1.0 + tan_term * tan_term, 1.0 / (2.0 * alpha));
  const double x = s * std::sin(alpha * (v + b)) /
                   std::pow(std::cos(v), 1.0 / alpha) *
                   std::pow(std::cos(v - alpha * (v + b)) / w,
                            (1.0 - alpha) / alpha);
  const double sigma =
      std::pow(dt * std::abs(std::cos(kPi * alpha / 2.0)), 1.0 / alpha);
  return sigma * x;
}

double sample_subordinator_increment(double beta, double scale,
                                     RandomStream& rng) {
  if (!(beta > 0.0 && beta < 1.0)) {
    throw InvalidParameter(fmt::format("subordinator index {} outside (0, 1)", beta));
  }
  if (!(scale >= 0.0)) throw DomainError("subordinator scale must be >= 0");
  if (scale == 0.0) return 0.0;
  // Kanter's representation of the positive beta-stable law.
  const double u = kPi * rng.uniform();
  const double w = rng.exponential();
  const double x = std::sin(beta * u) / std::pow(std::sin(u), 1.0 / beta) *
                   std::pow(std::sin((1.0 - beta) * u) / w, (1.0 - beta) / beta);
  return std::pow(scale, 1.0 / beta) * x;
}

Trajectory simulate_ou_diffusion(double a, const RateFunction& rho,
                                 const TimeGrid& grid, RandomStream& rng) {
  validate_grid(grid);
  Trajectory traj = empty_trajectory(grid);
  const double dt = grid.dt();
  double z = 0.0;
  for (std::size_t i = 0; i < grid.steps; ++i) {
    const double rate = rho(grid.at(i));
    if (rate < 0.0) {
      throw DomainError(fmt::format("negative rho = {} at t = {}", rate, grid.at(i)));
    }
    double next = z + a * z * dt;
    if (rate > 0.0) next += std::sqrt(rate * dt) * rng.normal();
    z = next;
    traj.values[i + 1] = z;
  }
  return traj;
}

Trajectory simulate_stable_ou(double a, double alpha, const RateFunction& rho1,
                              const TimeGrid& grid, RandomStream& rng) {
  validate_grid(grid);
  if (!(alpha > 1.0 && alpha <= 2.0)) {
    throw InvalidParameter(fmt::format("stable index {} outside (1, 2]", alpha));
  }
  for (std::size_t i = 0; i <= grid.steps; ++i) {
    if (!(rho1(grid.at(i)) > 0.0)) {
      throw InvalidParameter("stable OU needs rho_1 > 0 on the grid");
    }
  }
  if (alpha == 2.0) {
    return simulate_ou_diffusion(
        a, [&](double t) { return 2.0 * rho1(t); }, grid, rng);
  }
  Trajectory traj = empty_trajectory(grid);
  const double dt = grid.dt();
  double z = 0.0;
  for (std::size_t i = 0; i < grid.steps; ++i) {
    const double weight = std::pow(rho1(grid.at(i)), 1.0 / alpha);
    z += a * z * dt + weight * sample_stable_increment(alpha, dt, rng);
    traj.values[i + 1] = z;
  }
  return traj;
}

// ---------------------------------------------------------------------------

std::vector<JumpEvent> sample_jump_events(const LimitSpec& spec, double horizon,
                                          RandomStream& rng) {
  std::vector<JumpEvent> events;
  const double nu_rate = total_mass(spec.nu);
  if (nu_rate > 0.0) {
    for (double t = rng.exponential() / nu_rate; t <= horizon;
         t += rng.exponential() / nu_rate) {
      events.push_back({t, pick_atom(spec.nu, nu_rate, rng).position,
                        JumpSource::nu});
    }
  }
  const double mu_mass = total_mass(spec.mu);
  const double phi_max = spec.phi(horizon);  // phi is nondecreasing
  const double envelope = phi_max * mu_mass;
  if (envelope > 0.0) {
    for (double t = rng.exponential() / envelope; t <= horizon;
         t += rng.exponential() / envelope) {
      const bool accept = rng.uniform() * phi_max <= spec.phi(t);
      const Atom& atom = pick_atom(spec.mu, mu_mass, rng);
      if (accept) events.push_back({t, atom.position, JumpSource::mu});
    }
  }
  std::stable_sort(events.begin(), events.end(),
                   [](const JumpEvent& x, const JumpEvent& y) {
                     return x.time < y.time;
                   });
  return events;
}

Trajectory simulate_jump_ou(const LimitSpec& spec, const TimeGrid& grid,
                            RandomStream& rng) {
  const auto events = sample_jump_events(spec, grid.horizon, rng);
  return simulate_jump_ou(spec, grid, events, rng);
}

Trajectory simulate_jump_ou(const LimitSpec& spec, const TimeGrid& grid,
                            const std::vector<JumpEvent>& events,
                            RandomStream& rng) {
  validate_grid(grid);
  spec.validate(grid.horizon);
  Trajectory traj = empty_trajectory(grid);
  const AffineIntensity rho = spec.rho();
  const double nu_first = moment(spec.nu, 1.0);
  const double mu_first = moment(spec.mu, 1.0);
  const double dt = grid.dt();
  std::size_t next_event = 0;
  CompensatedSum compensator;
  double z = 0.0;
  for (std::size_t i = 0; i < grid.steps; ++i) {
    const double t0 = grid.at(i);
    const double t1 = grid.at(i + 1);
    double step = (spec.beta2 + spec.beta1 * spec.phi(t0) + spec.a * z) * dt;
    const double rate = spec.evaluate(rho, t0);
    if (rate > 0.0) step += std::sqrt(rate * dt) * rng.normal();
    double jumps = 0.0;
    while (next_event < events.size() && events[next_event].time <= t1) {
      const auto& ev = events[next_event++];
      jumps += ev.position;
      traj.jumps.push_back({ev.time, ev.position, ev.source});
    }
    const double comp =
        nu_first * dt +
        mu_first * (analysis::phi_antiderivative(t1, spec.a, spec.omega) -
                    analysis::phi_antiderivative(t0, spec.a, spec.omega));
    compensator += comp;
    z += step + jumps - comp;
    traj.values[i + 1] = z;
  }
  traj.compensator = compensator.value();
  return traj;
}

Trajectory simulate_J(const LimitSpec& spec, const TimeGrid& grid,
                      RandomStream& rng) {
  const auto events = sample_jump_events(spec, grid.horizon, rng);
  return simulate_J(spec, grid, events);
}

Trajectory simulate_J(const LimitSpec& spec, const TimeGrid& grid,
                      const std::vector<JumpEvent>& events) {
  validate_grid(grid);
  spec.validate(grid.horizon);
  Trajectory traj = empty_trajectory(grid);
  const double nu_second = moment(spec.nu, 2.0);
  const double mu_second = moment(spec.mu, 2.0);
  const double dt = grid.dt();
  std::size_t next_event = 0;
  CompensatedSum compensator;
  double j = 0.0;
  for (std::size_t i = 0; i < grid.steps; ++i) {
    const double t0 = grid.at(i);
    const double t1 = grid.at(i + 1);
    double jumps = 0.0;
    while (next_event < events.size() && events[next_event].time <= t1) {
      const auto& ev = events[next_event++];
      const double size = ev.position * ev.position;
      jumps += size;
      traj.jumps.push_back({ev.time, size, ev.source});
    }
    const double comp =
        nu_second * dt +
        mu_second * (analysis::phi_antiderivative(t1, spec.a, spec.omega) -
                     analysis::phi_antiderivative(t0, spec.a, spec.omega));
    compensator += comp;
    j += jumps - comp;
    traj.values[i + 1] = j;
  }
  traj.compensator = compensator.value();
  return traj;
}

CbiPath simulate_cbi_stable(double alpha, double gamma, double varpi,
                            const TimeGrid& grid, RandomStream& rng) {
  validate_grid(grid);
  if (!(alpha > 1.0 && alpha < 2.0)) {
    throw InvalidParameter(fmt::format("CBI stable index {} outside (1, 2)", alpha));
  }
  if (!(gamma > 0.0) || !(varpi >= 0.0)) {
    throw InvalidParameter("CBI needs gamma > 0 and varpi >= 0");
  }
  CbiPath path{empty_trajectory(grid), empty_trajectory(grid)};
  const double dt = grid.dt();
  const double noise_scale = std::pow(gamma, 1.0 / alpha);
  double y = 0.0;
  double y_prime = 0.0;
  for (std::size_t i = 0; i < grid.steps; ++i) {
    const double dx = noise_scale * sample_stable_increment(alpha, dt, rng);
    const double dy_prime =
        varpi > 0.0 ? sample_subordinator_increment(alpha - 1.0, varpi * dt, rng)
                    : 0.0;
    if (y < 0.0) ++path.level.clamp_events;
    y += std::pow(std::max(y, 0.0), 1.0 / alpha) * dx + dy_prime;
    y_prime += dy_prime;
    path.level.values[i + 1] = y;
    path.immigration.values[i + 1] = y_prime;
  }
  return path;
}

// ---------------------------------------------------------------------------

Trajectory martingale_M(const Trajectory& z, double a) {
  Trajectory m;
  m.grid = z.grid;
  m.values.resize(z.values.size());
  if (z.values.empty()) return m;
  const double dt = z.grid.dt();
  CompensatedSum drift;
  m.values[0] = z.values[0];
  for (std::size_t i = 1; i < z.values.size(); ++i) {
    drift += 0.5 * dt * (z.values[i - 1] + z.values[i]);
    m.values[i] = a == 0.0 ? z.values[i] : z.values[i] - a * drift.value();
  }
  return m;
}

double limit_mean_functional(const Trajectory& m, const RateFunction& phi) {
  const auto [mean, square] = phi_moments(phi, m.grid.horizon);
  if (!(square > 0.0)) throw DomainError("functional needs int phi^2 > 0");
  return stochastic_integral(m, phi) / square;
}

std::pair<double, double> limit_mean_joint_functional(const Trajectory& m,
                                                      const RateFunction& phi) {
  return regression_pair(m, phi);
}

std::pair<double, double> limit_variance_functional(const Trajectory& j,
                                                    const RateFunction& phi) {
  return regression_pair(j, phi);
}

double natural_mean_functional(const CbiPath& path, double a) {
  const auto& y = path.level;
  const double dt = y.grid.dt();
  CompensatedSum area;
  for (std::size_t i = 0; i < y.grid.steps; ++i) {
    area += 0.5 * dt * (y.values[i] + y.values[i + 1]);
  }
  if (!(area.value() > 0.0)) {
    throw DegeneratePathError("natural mean functional: int Y is not positive");
  }
  return (y.terminal() - a * area.value() - path.immigration.terminal()) /
         area.value();
}

void write_trajectory_csv(std::ostream& out, const Trajectory& traj) {
  out << "t,value\n";
  for (std::size_t i = 0; i < traj.values.size(); ++i) {
    fmt::print(out, "{:.17g},{:.17g}\n", traj.grid.at(i), traj.values[i]);
  }
}

void write_jump_log_csv(std::ostream& out, const Trajectory& traj) {
  out << "t,size,source\n";
  for (const auto& jump : traj.jumps) {
    fmt::print(out, "{:.17g},{:.17g},{}\n", jump.time, jump.size,
               jump.source == JumpSource::nu ? "nu" : "mu");
  }
}

}  // namespace gwi::limit
