#include "gwi/analysis.hpp"

#include <fmt/format.h>
#include <fmt/ostream.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "gwi/errors.hpp"
#include "gwi/numeric.hpp"

namespace gwi::analysis {

namespace {

constexpr double kQuadTol = 1e-10;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kInf = std::numeric_limits<double>::infinity();

void require_positive_omega(double omega, const char* what) {
  if (!(omega > 0.0)) {
    throw DomainError(fmt::format("{} needs omega > 0 (omega = {})", what, omega));
  }
}

}  // namespace

double phi(double t, double a, double omega) {
  if (a == 0.0) return omega * t;
  return omega * std::expm1(a * t) / a;
}

double phi_antiderivative(double t, double a, double omega) {
  const double at = a * t;
  if (std::abs(at) < 1e-4) {
    // Series of (e^{at} - 1 - at)/a^2.
    return omega * t * t * (0.5 + at / 6.0 + at * at / 24.0);
  }
  return omega * (std::expm1(at) - at) / (a * a);
}

PhiIntegrals phi_integrals(double a, double omega) {
  PhiIntegrals out;
  out.mean = integrate([=](double t) { return phi(t, a, omega); }, 0.0, 1.0,
                       kQuadTol);
  out.square = integrate(
      [=](double t) {
        const double p = phi(t, a, omega);
        return p * p;
      },
      0.0, 1.0, kQuadTol);
  out.spread = out.square - out.mean * out.mean;
  return out;
}

double stable_weight_integral(double a, double omega, double alpha,
                              double gamma, double varpi) {
  return integrate(
      [=](double t) {
        const double p = phi(t, a, omega);
        return std::pow(p, alpha) * (varpi + gamma * p);
      },
      0.0, 1.0, kQuadTol);
}

// ---------------------------------------------------------------------------

void LevyTriplet::validate() const {
  if (!(gaussian >= 0.0)) {
    throw InvalidParameter("Levy triplet: Gaussian coefficient must be >= 0");
  }
  if (const auto* atoms = std::get_if<std::vector<Atom>>(&jumps)) {
    for (const auto& atom : *atoms) {
      if (!(atom.position > 0.0) || !(atom.mass > 0.0)) {
        throw InvalidParameter("Levy triplet: atoms need position, mass > 0");
      }
    }
  } else {
    const auto& stable = std::get<StableJumps>(jumps);
    if (!(stable.index > 0.0 && stable.index <= 2.0) || !(stable.scale >= 0.0)) {
      throw InvalidParameter("Levy triplet: stable index in (0, 2], scale >= 0");
    }
  }
}

double LevyTriplet::branching(double lambda) const {
  double value = linear * lambda - gaussian * lambda * lambda;
  if (const auto* atoms = std::get_if<std::vector<Atom>>(&jumps)) {
    for (const auto& atom : *atoms) {
      const double x = lambda * atom.position;
      value -= atom.mass * (std::expm1(-x) + x);
    }
  } else {
    const auto& stable = std::get<StableJumps>(jumps);
    value -= stable.scale * std::pow(lambda, stable.index);
  }
  return value;
}

double LevyTriplet::immigration(double lambda) const {
  if (gaussian != 0.0) {
    throw DomainError("immigration form has no Gaussian coefficient");
  }
  double value = linear * lambda;
  if (const auto* atoms = std::get_if<std::vector<Atom>>(&jumps)) {
    for (const auto& atom : *atoms) {
      value -= atom.mass * std::expm1(-lambda * atom.position);
    }
  } else {
    const auto& stable = std::get<StableJumps>(jumps);
    value += stable.scale * std::pow(lambda, stable.index);
  }
  return value;
}

bool offspring_constraint_holds(double sigma1, double a, double gamma0) {
  return 2.0 * sigma1 >= a * gamma0;
}

bool immigration_constraint_holds(double sigma2, double omega, double gamma0) {
  return 2.0 * sigma2 + omega * gamma0 >= omega * omega * gamma0;
}

// ---------------------------------------------------------------------------

RiccatiSolution solve_riccati(const Mechanism& branching, double z,
                              double horizon, double dt, double blow_up) {
  if (!(horizon >= 0.0) || !(dt > 0.0)) {
    throw DomainError("Riccati solver needs horizon >= 0 and dt > 0");
  }
  RiccatiSolution out;
  const auto steps =
      static_cast<std::size_t>(std::ceil(horizon / dt - 1e-9));
  out.dt = steps == 0 ? dt : horizon / static_cast<double>(steps);
  out.psi.reserve(steps + 1);
  out.psi.push_back(z);
  const double h = out.dt;
  double psi = z;
  for (std::size_t i = 0; i < steps; ++i) {
    const double k1 = branching(psi);
    const double k2 = branching(psi + 0.5 * h * k1);
    const double k3 = branching(psi + 0.5 * h * k2);
    const double k4 = branching(psi + h * k3);
    psi += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!std::isfinite(psi) || std::abs(psi) > blow_up) {
      throw NumericalError(fmt::format(
          "Riccati flow blew up at t = {}", h * static_cast<double>(i + 1)));
    }
    out.psi.push_back(psi);
  }
  return out;
}

double cbi_laplace(std::array<double, 2> x, std::array<double, 2> z, double t,
                   const Mechanism& branching, const Mechanism& immigration,
                   double dt) {
  if (x[0] < 0.0 || x[1] < 0.0 || z[0] < 0.0 || z[1] < 0.0 || t < 0.0) {
    throw DomainError("CBI Laplace transform needs x, z, t >= 0");
  }
  if (t == 0.0) return std::exp(-x[0] * z[0] - x[1] * z[1]);
  auto steps = static_cast<std::size_t>(std::ceil(t / dt - 1e-9));
  steps = std::max<std::size_t>(2, steps + (steps % 2));
  const RiccatiSolution flow =
      solve_riccati(branching, z[0], t, t / static_cast<double>(steps));
  // Composite Simpson along the Riccati grid.
  CompensatedSum acc;
  for (std::size_t i = 0; i < flow.psi.size(); ++i) {
    const double weight =
        (i == 0 || i + 1 == flow.psi.size()) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
    acc += weight * immigration(flow.psi[i] + z[1]);
  }
  const double integral = acc.value() * flow.dt / 3.0;
  return std::exp(-x[0] * flow.psi.back() - x[1] * z[1] - integral);
}

// ---------------------------------------------------------------------------

DiagnosticRow evaluate_conditions(const chain::GwiModel& model, double lambda) {
  const double n = static_cast<double>(model.n);
  const double b = model.scaling.b_n;
  const double c = model.scaling.c_n;
  if (!(lambda >= 0.0) || lambda > b || lambda > c) {
    throw DomainError(fmt::format(
        "lambda = {} outside [0, min(b_n, c_n)] = [0, {}]", lambda,
        std::min(b, c)));
  }
  const auto& g = model.offspring;
  const auto& h = model.immigration;
  DiagnosticRow row;
  row.n = model.n;
  row.lambda = lambda;
  const double x = lambda / b;
  if (g.moments().mean_finite()) {
    // (1 - x) - g(1 - x) = (m - 1) x - remainder(x)
    row.r = n * ((g.mean() - 1.0) * lambda - b * g.pgf_remainder(x));
  } else {
    row.r = n * b * (g.pgf_complement(x) - x);
  }
  row.f = n * h.pgf_complement(x);
  const double y = lambda / c;
  row.g = g.moments().mean_finite() ? -n * n * g.pgf_remainder(y) : kNaN;
  row.h = h.moments().mean_finite() ? -n * h.pgf_remainder(y) : kNaN;
  return row;
}

DiagnosticsReport condition_diagnostics(const ModelBuilder& build,
                                        std::span<const double> lambdas,
                                        std::span<const std::uint64_t> ns) {
  DiagnosticsReport report;
  const std::array<const char*, 4> names{"R_n", "F_n", "G_n", "H_n"};
  for (std::size_t i = 0; i < 4; ++i) report.conditions[i].name = names[i];

  auto component = [](const DiagnosticRow& row, std::size_t i) {
    switch (i) {
      case 0: return row.r;
      case 1: return row.f;
      case 2: return row.g;
      default: return row.h;
    }
  };

  for (const std::uint64_t n : ns) {
    const chain::GwiModel model = build(n);
    const chain::GwiModel doubled = build(2 * n);
    std::vector<DiagnosticRow> rows;
    for (const double lambda : lambdas) {
      rows.push_back(evaluate_conditions(model, lambda));
      const DiagnosticRow next = evaluate_conditions(doubled, lambda);
      for (std::size_t i = 0; i < 4; ++i) {
        const double gap = std::abs(component(rows.back(), i) - component(next, i));
        if (std::isfinite(gap)) {
          auto& cond = report.conditions[i];
          cond.cauchy_gap = std::max(cond.cauchy_gap, gap);
          cond.evaluated = true;
        }
      }
    }
    for (std::size_t j = 1; j < rows.size(); ++j) {
      const double dl = rows[j].lambda - rows[j - 1].lambda;
      if (dl == 0.0) continue;
      for (std::size_t i = 0; i < 4; ++i) {
        const double slope =
            std::abs(component(rows[j], i) - component(rows[j - 1], i)) /
            std::abs(dl);
        if (std::isfinite(slope)) {
          auto& cond = report.conditions[i];
          cond.lipschitz = std::max(cond.lipschitz, slope);
        }
      }
    }
    report.rows.insert(report.rows.end(), rows.begin(), rows.end());
  }
  return report;
}

void write_diagnostics_csv(std::ostream& out, const DiagnosticsReport& report) {
  out << "n,lambda,R_n,F_n,G_n,H_n\n";
  for (const auto& row : report.rows) {
    fmt::print(out, "{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}\n", row.n,
               row.lambda, row.r, row.f, row.g, row.h);
  }
}

// ---------------------------------------------------------------------------

double FourthMomentIntensity::operator()(double t) const {
  const double p = phi(t, a, omega);
  return 2.0 * pi * pi * p * p + (a4 + 4.0 * pi * r) * p + (b4 - r * r);
}

SigmaResult sigma_matrix(double a, double omega, double pi, double r,
                         double a4, double b4) {
  require_positive_omega(omega, "sigma matrix");
  SigmaResult out;
  out.intensity = {a, omega, pi, r, a4, b4};
  out.fourth_moment_warning = b4 < r * r;
  const PhiIntegrals base = phi_integrals(a, omega);
  if (!(base.spread > 0.0)) {
    throw DomainError("sigma matrix: int phi^2 - (int phi)^2 must be positive");
  }
  out.spread = base.spread;
  const auto& rho = out.intensity;
  auto first = [&](double t) { return phi(t, a, omega) - base.mean; };
  auto second = [&](double t) {
    return base.square - phi(t, a, omega) * base.mean;
  };
  out.raw[0][0] = integrate(
      [&](double t) { return first(t) * first(t) * rho(t); }, 0.0, 1.0, kQuadTol);
  out.raw[1][1] = integrate(
      [&](double t) { return second(t) * second(t) * rho(t); }, 0.0, 1.0,
      kQuadTol);
  out.raw[0][1] = integrate(
      [&](double t) { return first(t) * second(t) * rho(t); }, 0.0, 1.0,
      kQuadTol);
  out.raw[1][0] = out.raw[0][1];
  const double scale = 1.0 / (base.spread * base.spread);
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t j = 0; j < 2; ++j) out.sigma[i][j] = scale * out.raw[i][j];
  }
  return out;
}

double stable_mean_limit_coefficient(double alpha, double a, double omega,
                                     double gamma, double varpi) {
  require_positive_omega(omega, "stable mean limit");
  const PhiIntegrals base = phi_integrals(a, omega);
  return stable_weight_integral(a, omega, alpha, gamma, varpi) /
         std::pow(base.square, alpha);
}

double stable_mean_limit_laplace(double lambda, double alpha, double a,
                                 double omega, double gamma, double varpi) {
  if (lambda < 0.0) throw DomainError("Laplace argument must be >= 0");
  if (lambda == 0.0) return 1.0;
  const double k = stable_mean_limit_coefficient(alpha, a, omega, gamma, varpi);
  return std::exp(k * std::pow(lambda, alpha));
}

JumpFunctionalMoments u1_u2_second_moments(double nu_fourth, double mu_fourth,
                                           double a, double omega) {
  if (!std::isfinite(nu_fourth) || !std::isfinite(mu_fourth)) {
    return {kInf, kInf};
  }
  require_positive_omega(omega, "jump functional moments");
  const PhiIntegrals base = phi_integrals(a, omega);
  // U_1 = int (phi - mean) dJ / L and U_2 = int (square - phi mean) dJ / L,
  // where J has quadratic-variation intensity nu4 + phi(t) mu4.
  auto weight = [&](double t) {
    return nu_fourth + phi(t, a, omega) * mu_fourth;
  };
  const double first = integrate(
      [&](double t) {
        const double d = phi(t, a, omega) - base.mean;
        return d * d * weight(t);
      },
      0.0, 1.0, kQuadTol);
  const double second = integrate(
      [&](double t) {
        const double d = base.square - phi(t, a, omega) * base.mean;
        return d * d * weight(t);
      },
      0.0, 1.0, kQuadTol);
  const double scale = 1.0 / (base.spread * base.spread);
  return {scale * first, scale * second};
}

// ---------------------------------------------------------------------------

std::vector<LaplacePoint> empirical_laplace(std::span<const double> samples,
                                            std::span<const double> lambdas) {
  if (samples.size() < 2) {
    throw DomainError("empirical Laplace transform needs at least 2 samples");
  }
  const double count = static_cast<double>(samples.size());
  std::vector<LaplacePoint> out;
  std::vector<double> values(samples.size());
  for (const double lambda : lambdas) {
    CompensatedSum total;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      values[i] = std::exp(-lambda * samples[i]);
      total += values[i];
    }
    const double estimate = total.value() / count;
    // Jackknife over leave-one-out means.
    CompensatedSum spread;
    for (const double v : values) {
      const double leave_one_out = (total.value() - v) / (count - 1.0);
      const double d = leave_one_out - estimate;
      spread += d * d;
    }
    out.push_back({lambda, estimate,
                   std::sqrt((count - 1.0) / count * spread.value())});
  }
  return out;
}

double ks_two_sample(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw DomainError("KS test needs samples");
  std::vector<double> x(a.begin(), a.end());
  std::vector<double> y(b.begin(), b.end());
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  const double nx = static_cast<double>(x.size());
  const double ny = static_cast<double>(y.size());
  std::size_t i = 0;
  std::size_t j = 0;
  double d = 0.0;
  while (i < x.size() && j < y.size()) {
    const double v = std::min(x[i], y[j]);
    while (i < x.size() && x[i] <= v) ++i;
    while (j < y.size() && y[j] <= v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / nx -
                             static_cast<double>(j) / ny));
  }
  return d;
}

double ks_against_cdf(std::span<const double> samples,
                      const std::function<double(double)>& cdf) {
  if (samples.empty()) throw DomainError("KS test needs samples");
  std::vector<double> x(samples.begin(), samples.end());
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = cdf(x[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - f,
                  f - static_cast<double>(i) / n});
  }
  return d;
}

double normal_cdf(double x, double mean, double sd) {
  return 0.5 * std::erfc(-(x - mean) / (sd * std::sqrt(2.0)));
}

SampleSummary summarize(std::span<const double> samples) {
  SampleSummary out;
  out.count = samples.size();
  if (samples.empty()) return out;
  out.mean = compensated_sum(samples) / static_cast<double>(samples.size());
  if (samples.size() > 1) {
    CompensatedSum ss;
    for (const double x : samples) ss += (x - out.mean) * (x - out.mean);
    out.variance = ss.value() / static_cast<double>(samples.size() - 1);
  }
  return out;
}

double covariance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) {
    throw DomainError("covariance needs paired samples of size >= 2");
  }
  const double ma = compensated_sum(a) / static_cast<double>(a.size());
  const double mb = compensated_sum(b) / static_cast<double>(b.size());
  CompensatedSum acc;
  for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - ma) * (b[i] - mb);
  return acc.value() / static_cast<double>(a.size() - 1);
}

LawReport compare_laws(std::span<const double> samples,
                       std::span<const double> reference,
                       std::span<const double> lambdas) {
  LawReport out;
  out.summary = summarize(samples);
  out.laplace = empirical_laplace(samples, lambdas);
  out.ks = ks_two_sample(samples, reference);
  return out;
}

LawReport compare_laws(std::span<const double> samples,
                       const std::function<double(double)>& reference_cdf,
                       std::span<const double> lambdas) {
  LawReport out;
  out.summary = summarize(samples);
  out.laplace = empirical_laplace(samples, lambdas);
  out.ks = ks_against_cdf(samples, reference_cdf);
  return out;
}

void write_laws_csv(std::ostream& out, std::span<const LaplacePoint> points,
                    std::span<const double> theoretical) {
  out << "lambda,empirical,se,theoretical\n";
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double theory = i < theoretical.size() ? theoretical[i] : kNaN;
    fmt::print(out, "{:.17g},{:.17g},{:.17g},{:.17g}\n", points[i].lambda,
               points[i].value, points[i].se, theory);
  }
}

}  // namespace gwi::analysis
