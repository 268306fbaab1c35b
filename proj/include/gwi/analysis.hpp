#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "gwi/chain.hpp"

namespace gwi::analysis {

// ---------------------------------------------------------------------------
// Fluid limit phi(t) = omega * int_0^t e^{a u} du

double phi(double t, double a, double omega);
/// int_0^t phi(s) ds in closed form (used for compensators of jump drivers).
double phi_antiderivative(double t, double a, double omega);

struct PhiIntegrals {
  double mean = 0.0;    // int_0^1 phi
  double square = 0.0;  // int_0^1 phi^2
  double spread = 0.0;  // square - mean^2
};

/// Integrals of phi over [0, 1] by adaptive quadrature.
PhiIntegrals phi_integrals(double a, double omega);

/// int_0^1 phi^alpha(t) (varpi + gamma phi(t)) dt.
double stable_weight_integral(double a, double omega, double alpha,
                              double gamma, double varpi);

// ---------------------------------------------------------------------------
// Levy triplets

struct Atom {
  double position = 0.0;
  double mass = 0.0;
};

/// Jump density C u^{-1-index} normalized so that its branching-form
/// contribution is -scale * lambda^index.
struct StableJumps {
  double index = 1.5;
  double scale = 0.0;
};

/// (linear, Gaussian, jump measure). The same triplet is read either in
/// branching form  c l - theta l^2 - int (e^{-l u} - 1 + l u) Lambda(du)
/// or in immigration form  d l + int (1 - e^{-l u}) Lambda(du).
struct LevyTriplet {
  double linear = 0.0;
  double gaussian = 0.0;
  std::variant<std::vector<Atom>, StableJumps> jumps = std::vector<Atom>{};

  void validate() const;
  double branching(double lambda) const;
  double immigration(double lambda) const;
};

/// 2 sigma_1 >= a gamma_0.
bool offspring_constraint_holds(double sigma1, double a, double gamma0);
/// 2 sigma_2 + omega gamma_0 >= omega^2 gamma_0.
bool immigration_constraint_holds(double sigma2, double omega, double gamma0);

// ---------------------------------------------------------------------------
// Riccati flow and CBI transition semigroup

using Mechanism = std::function<double(double)>;

inline constexpr double kRiccatiDefaultStep = 1e-3;
inline constexpr double kRiccatiOracleStep = 1e-4;
inline constexpr double kRiccatiBlowUp = 1e12;

struct RiccatiSolution {
  double dt = 0.0;
  std::vector<double> psi;  // psi[i] = psi_{i dt}(z)

  double horizon() const noexcept {
    return dt * static_cast<double>(psi.size() - 1);
  }
};

/// Fixed-step RK4 for d psi/dt = R(psi), psi_0 = z. The step is shrunk so
/// that it divides the horizon. Throws NumericalError on blow-up.
RiccatiSolution solve_riccati(const Mechanism& branching, double z,
                              double horizon, double dt = kRiccatiDefaultStep,
                              double blow_up = kRiccatiBlowUp);

/// exp{-x1 psi_t(z1) - x2 z2 - int_0^t F(psi_s(z1) + z2) ds}.
double cbi_laplace(std::array<double, 2> x, std::array<double, 2> z, double t,
                   const Mechanism& branching, const Mechanism& immigration,
                   double dt = kRiccatiDefaultStep);

// ---------------------------------------------------------------------------
// Convergence diagnostics for R_n, F_n, G_n, H_n

using ModelBuilder = std::function<chain::GwiModel(std::uint64_t n)>;

struct DiagnosticRow {
  std::uint64_t n = 0;
  double lambda = 0.0;
  double r = 0.0;  // R_n
  double f = 0.0;  // F_n
  double g = 0.0;  // G_n (NaN when the offspring mean is infinite)
  double h = 0.0;  // H_n (NaN when the immigration mean is infinite)
};

struct ConditionSummary {
  std::string name;
  /// max over the grid and n-list of |value_n - value_{2n}|.
  double cauchy_gap = 0.0;
  /// max divided difference over consecutive grid points.
  double lipschitz = 0.0;
  bool evaluated = false;
};

struct DiagnosticsReport {
  std::vector<DiagnosticRow> rows;
  std::array<ConditionSummary, 4> conditions;  // R, F, G, H
};

DiagnosticRow evaluate_conditions(const chain::GwiModel& model, double lambda);

DiagnosticsReport condition_diagnostics(const ModelBuilder& build,
                                        std::span<const double> lambdas,
                                        std::span<const std::uint64_t> ns);

void write_diagnostics_csv(std::ostream& out, const DiagnosticsReport& report);

// ---------------------------------------------------------------------------
// Limit-law constants

/// Fourth-moment Gaussian intensity
/// 2 pi^2 phi^2 + (a4 + 4 pi r) phi + (b4 - r^2).
struct FourthMomentIntensity {
  double a = 0.0;
  double omega = 0.0;
  double pi = 0.0;
  double r = 0.0;
  double a4 = 0.0;
  double b4 = 0.0;

  double operator()(double t) const;
};

struct SigmaResult {
  std::array<std::array<double, 2>, 2> raw{};    // sigma_ij
  std::array<std::array<double, 2>, 2> sigma{};  // L^{-2} sigma_ij
  double spread = 0.0;                           // L
  FourthMomentIntensity intensity;
  bool fourth_moment_warning = false;  // b4 < r^2
};

SigmaResult sigma_matrix(double a, double omega, double pi, double r,
                         double a4, double b4);

/// K = int phi^alpha rho_1 / (int phi^2)^alpha.
double stable_mean_limit_coefficient(double alpha, double a, double omega,
                                     double gamma, double varpi);
/// E exp(-lambda U) = exp(K lambda^alpha).
double stable_mean_limit_laplace(double lambda, double alpha, double a,
                                 double omega, double gamma, double varpi);

struct JumpFunctionalMoments {
  double u1 = 0.0;  // E U_1^2
  double u2 = 0.0;  // E U_2^2
};

/// Second moments of the jump-limit functionals given int u^4 nu(du) and
/// int u^4 mu(du). Infinite inputs give infinite outputs.
JumpFunctionalMoments u1_u2_second_moments(double nu_fourth, double mu_fourth,
                                           double a, double omega);

// ---------------------------------------------------------------------------
// Empirical laws

struct LaplacePoint {
  double lambda = 0.0;
  double value = 0.0;
  double se = 0.0;
};

/// (1/R) sum exp(-lambda x_i) with jackknife standard errors.
std::vector<LaplacePoint> empirical_laplace(std::span<const double> samples,
                                            std::span<const double> lambdas);

double ks_two_sample(std::span<const double> a, std::span<const double> b);
double ks_against_cdf(std::span<const double> samples,
                      const std::function<double(double)>& cdf);

double normal_cdf(double x, double mean = 0.0, double sd = 1.0);

struct SampleSummary {
  std::size_t count = 0;
  double mean = 0.0;
  double variance = 0.0;
};

SampleSummary summarize(std::span<const double> samples);
/// Sample covariance of paired samples.
double covariance(std::span<const double> a, std::span<const double> b);

struct LawReport {
  SampleSummary summary;
  std::vector<LaplacePoint> laplace;
  double ks = 0.0;
};

LawReport compare_laws(std::span<const double> samples,
                       std::span<const double> reference,
                       std::span<const double> lambdas);
LawReport compare_laws(std::span<const double> samples,
                       const std::function<double(double)>& reference_cdf,
                       std::span<const double> lambdas);

/// CSV `lambda,empirical,se,theoretical`.
void write_laws_csv(std::ostream& out, std::span<const LaplacePoint> points,
                    std::span<const double> theoretical);

}  // namespace gwi::analysis
