#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <utility>
#include <vector>

#include "gwi/analysis.hpp"
#include "gwi/rng.hpp"

namespace gwi::limit {

using analysis::Atom;
using RateFunction = std::function<double(double)>;

/// Uniform grid t_i = i * dt on [0, horizon].
struct TimeGrid {
  double horizon = 1.0;
  std::size_t steps = 1000;

  static TimeGrid uniform(double horizon, double dt);
  double dt() const noexcept { return horizon / static_cast<double>(steps); }
  double at(std::size_t i) const noexcept {
    return horizon * static_cast<double>(i) / static_cast<double>(steps);
  }
};

inline constexpr double kDefaultStep = 1e-3;

enum class JumpSource { nu, mu };

struct JumpRecord {
  double time = 0.0;
  double size = 0.0;
  JumpSource source = JumpSource::nu;
};

struct Trajectory {
  TimeGrid grid;
  std::vector<double> values;    // values[i] at grid.at(i)
  std::vector<JumpRecord> jumps;
  double compensator = 0.0;      // total compensator of the logged jumps
  std::size_t clamp_events = 0;  // CBI steps that started below zero

  double terminal() const { return values.back(); }
};

/// phi(s) * slope + offset, the affine-in-phi intensities of the limits.
struct AffineIntensity {
  double slope = 0.0;
  double offset = 0.0;
};

/// Parameters of the time-inhomogeneous OU-type limit.
struct LimitSpec {
  double a = 0.0;
  double omega = 0.0;
  double beta1 = 0.0;
  double beta2 = 0.0;
  double gamma0 = 0.0;
  double sigma1 = 0.0;
  double sigma2 = 0.0;
  std::vector<Atom> mu;  // offspring jump measure, rate phi(s) mu(du)
  std::vector<Atom> nu;  // immigration jump measure, rate nu(du)
  // Stable case
  double alpha = 2.0;
  double gamma = 0.0;
  double varpi = 0.0;

  double phi(double t) const;
  /// rho = (2 sigma_1 - a gamma_0) phi + 2 sigma_2 + omega(1 - omega) gamma_0
  AffineIntensity rho() const;
  /// rho_1 = varpi + gamma phi
  AffineIntensity rho1() const;
  double evaluate(const AffineIntensity& form, double t) const;

  /// Atoms positive, rho nonnegative at both ends of [0, horizon].
  void validate(double horizon) const;
};

/// Increment over dt of the spectrally positive alpha-stable process with
/// E exp(-lambda X_t) = exp(t lambda^alpha). alpha = 2 gives N(0, 2 dt).
double sample_stable_increment(double alpha, double dt, RandomStream& rng);

/// Increment of a beta-stable subordinator with
/// E exp(-lambda S) = exp(-scale * lambda^beta), 0 < beta < 1.
double sample_subordinator_increment(double beta, double scale,
                                     RandomStream& rng);

/// Euler-Maruyama for dZ = a Z dt + sqrt(rho(t)) dB, Z(0) = 0.
Trajectory simulate_ou_diffusion(double a, const RateFunction& rho,
                                 const TimeGrid& grid, RandomStream& rng);

/// Euler scheme for dZ = a Z dt + rho_1(t)^{1/alpha} dX. For alpha = 2 this
/// is simulate_ou_diffusion with rho = 2 rho_1.
Trajectory simulate_stable_ou(double a, double alpha, const RateFunction& rho1,
                              const TimeGrid& grid, RandomStream& rng);

struct JumpEvent {
  double time = 0.0;
  double position = 0.0;
  JumpSource source = JumpSource::nu;
};

/// Event times of N_0 (rate nu) and of N_1 restricted to zeta <= phi(s)
/// (rate phi(s) mu, by thinning against phi(horizon) mu), sorted by time.
std::vector<JumpEvent> sample_jump_events(const LimitSpec& spec, double horizon,
                                          RandomStream& rng);

/// OU-type process driven by Brownian motion and compensated finite-activity
/// jumps.
Trajectory simulate_jump_ou(const LimitSpec& spec, const TimeGrid& grid,
                            RandomStream& rng);
Trajectory simulate_jump_ou(const LimitSpec& spec, const TimeGrid& grid,
                            const std::vector<JumpEvent>& events,
                            RandomStream& rng);

/// J(t): the same jump stream with sizes u^2, compensated.
Trajectory simulate_J(const LimitSpec& spec, const TimeGrid& grid,
                      RandomStream& rng);
Trajectory simulate_J(const LimitSpec& spec, const TimeGrid& grid,
                      const std::vector<JumpEvent>& events);

struct CbiPath {
  Trajectory level;        // Y
  Trajectory immigration;  // Y'
};

/// Euler scheme for dY = Y^{1/alpha} dX + dY' with R = -gamma l^alpha and
/// F = varpi l^{alpha - 1}; Y is clamped at zero inside the root.
CbiPath simulate_cbi_stable(double alpha, double gamma, double varpi,
                            const TimeGrid& grid, RandomStream& rng);

/// M(t) = Z(t) - int_0^t a Z(s) ds, trapezoidal.
Trajectory martingale_M(const Trajectory& z, double a);

/// int phi dM / int phi^2 over [0, horizon] (left-endpoint sums).
double limit_mean_functional(const Trajectory& m, const RateFunction& phi);

/// (int phi dM - M(1) int phi, M(1) int phi^2 - int phi int phi dM) / L.
std::pair<double, double> limit_mean_joint_functional(const Trajectory& m,
                                                      const RateFunction& phi);

/// Same pair with J in place of M: (U_1, U_2). Throws DomainError when
/// L = int phi^2 - (int phi)^2 <= 0.
std::pair<double, double> limit_variance_functional(const Trajectory& j,
                                                    const RateFunction& phi);

/// (Y(1) - a int_0^1 Y - Y'(1)) / int_0^1 Y.
double natural_mean_functional(const CbiPath& path, double a);

/// CSV `t,value`.
void write_trajectory_csv(std::ostream& out, const Trajectory& traj);
/// CSV `t,size,source`.
void write_jump_log_csv(std::ostream& out, const Trajectory& traj);

}  // namespace gwi::limit
