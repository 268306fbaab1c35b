#include "doctest.h"

#include <cmath>
#include <sstream>
#include <vector>

#include "gwi/analysis.hpp"
#include "gwi/errors.hpp"

namespace an = gwi::analysis;
using gwi::dist::DiscreteDist;

namespace {

double psi_closed(double lambda, double t, double alpha, double gamma) {
  return lambda * std::pow(1.0 + gamma * (alpha - 1.0) * std::pow(lambda, alpha - 1.0) * t,
                           -1.0 / (alpha - 1.0));
}

// Midpoint rule with many cells; independent of the adaptive quadrature.
template <typename F>
double midpoint(F f, int cells = 200000) {
  double total = 0.0;
  for (int i = 0; i < cells; ++i) total += f((i + 0.5) / cells);
  return total / cells;
}

}  // namespace

TEST_CASE("phi and its antiderivative") {
  CHECK(an::phi(0.7, 0.0, 2.0) == doctest::Approx(1.4));
  CHECK(an::phi(0.7, 1.0, 2.0) == doctest::Approx(2.0 * std::expm1(0.7)));
  CHECK(an::phi_antiderivative(1.0, 0.0, 1.0) == doctest::Approx(0.5));
  CHECK(an::phi_antiderivative(1.0, 1.0, 2.0) == doctest::Approx(2.0 * (std::exp(1.0) - 2.0)));
  // Continuity through a = 0.
  CHECK(an::phi_antiderivative(1.0, 1e-9, 1.0) == doctest::Approx(0.5).epsilon(1e-8));
  CHECK(an::phi(0.5, -1e-10, 1.0) == doctest::Approx(0.5).epsilon(1e-9));
  const auto ints = an::phi_integrals(0.0, 1.0);
  CHECK(ints.mean == doctest::Approx(0.5));
  CHECK(ints.square == doctest::Approx(1.0 / 3.0));
  CHECK(ints.spread == doctest::Approx(1.0 / 12.0));
}

TEST_CASE("Riccati RK4 matches the closed-form stable flow") {
  const double alpha = 1.5;
  const double gamma = 0.5;
  const an::Mechanism R = [&](double l) { return -gamma * std::pow(l, alpha); };
  double worst = 0.0;
  for (double lambda : {0.1, 0.5, 1.0, 2.0, 5.0}) {
    const auto sol = an::solve_riccati(R, lambda, 1.0);
    for (std::size_t i = 0; i < sol.psi.size(); ++i) {
      const double t = sol.dt * static_cast<double>(i);
      worst = std::max(worst, std::abs(sol.psi[i] - psi_closed(lambda, t, alpha, gamma)));
    }
  }
  CHECK(worst <= 1e-6);
}

TEST_CASE("Riccati blow-up is detected") {
  const an::Mechanism R = [](double l) { return l * l; };
  CHECK_THROWS_AS(an::solve_riccati(R, 2.0, 1.0), gwi::NumericalError);
}

TEST_CASE("CBI Laplace transform along the flow") {
  const an::Mechanism R = [](double l) { return -0.5 * std::pow(l, 1.5); };
  const an::Mechanism F = [](double l) { return 0.5 * std::pow(l, 0.5); };
  CHECK(an::cbi_laplace({0.0, 0.0}, {1.0, 0.0}, 1.0, R, F) ==
        doctest::Approx(0.64).epsilon(1e-6));
  // Starting mass x: extra factor exp(-x psi_t).
  const double with_mass = an::cbi_laplace({2.0, 0.0}, {1.0, 0.0}, 1.0, R, F);
  CHECK(with_mass == doctest::Approx(0.64 * std::exp(-2.0 * psi_closed(1.0, 1.0, 1.5, 0.5)))
                         .epsilon(1e-6));
}

TEST_CASE("Levy triplet mechanisms") {
  an::LevyTriplet atoms{0.3, 0.2, std::vector<an::Atom>{{1.0, 2.0}}};
  const double l = 0.7;
  CHECK(atoms.branching(l) ==
        doctest::Approx(0.3 * l - 0.2 * l * l - 2.0 * (std::exp(-l) - 1.0 + l)));
  an::LevyTriplet imm{0.1, 0.0, std::vector<an::Atom>{{2.0, 0.5}}};
  CHECK(imm.immigration(l) == doctest::Approx(0.1 * l + 0.5 * (1.0 - std::exp(-2.0 * l))));
  an::LevyTriplet stable{0.0, 0.0, an::StableJumps{1.5, 0.5}};
  CHECK(stable.branching(4.0) == doctest::Approx(-4.0));
  CHECK(an::offspring_constraint_holds(0.5, 1.0, 1.0));
  CHECK_FALSE(an::offspring_constraint_holds(0.4, 1.0, 1.0));
  CHECK(an::immigration_constraint_holds(0.0, 1.0, 1.0));
  CHECK_FALSE(an::immigration_constraint_holds(0.0, 2.0, 1.0));
}

TEST_CASE("condition diagnostics are exact for the stable families") {
  const double alpha = 1.5;
  const auto critical = [&](std::uint64_t n) {
    return gwi::chain::GwiModel{DiscreteDist::stable_tailed(1.0, alpha, 0.5),
                                DiscreteDist::sibuya_tailed(alpha - 1.0, 0.5), n,
                                {std::pow(double(n), 1.0 / (alpha - 1.0)), 1.0, {}}};
  };
  for (std::uint64_t n : {10u, 1000u}) {
    const auto row = an::evaluate_conditions(critical(n), 0.8);
    CHECK(row.r == doctest::Approx(-0.5 * std::pow(0.8, 1.5)).epsilon(1e-12));
    CHECK(row.f == doctest::Approx(0.5 * std::pow(0.8, 0.5)).epsilon(1e-12));
    CHECK(std::isnan(row.h));
  }
  const auto fluct = [&](std::uint64_t n) {
    return gwi::chain::GwiModel{DiscreteDist::stable_tailed(1.0, alpha, 0.5 / n),
                                DiscreteDist::stable_tailed(1.0, alpha, 0.5), n,
                                {double(n), std::pow(double(n), 1.0 / alpha), {}}};
  };
  const std::vector<double> lambdas{0.5, 1.0};
  const std::vector<std::uint64_t> ns{100, 10000};
  const auto report = an::condition_diagnostics(fluct, lambdas, ns);
  CHECK(report.rows.size() == 4);
  for (const auto& row : report.rows) {
    CHECK(row.g == doctest::Approx(-0.5 * std::pow(row.lambda, alpha)).epsilon(1e-12));
    CHECK(row.h == doctest::Approx(-0.5 * std::pow(row.lambda, alpha)).epsilon(1e-12));
  }
  CHECK(report.conditions[2].cauchy_gap < 1e-12);
  CHECK(report.conditions[3].cauchy_gap < 1e-12);
  std::ostringstream csv;
  an::write_diagnostics_csv(csv, report);
  CHECK(csv.str().rfind("n,lambda,R_n,F_n,G_n,H_n\n", 0) == 0);
}

TEST_CASE("sigma matrix against an independent quadrature") {
  const double a = 1.0, omega = 2.0, pi = 1.0, r = 2.0, a4 = 1.0, b4 = 38.0;
  const auto phi = [&](double t) { return omega * std::expm1(a * t) / a; };
  const double m1 = midpoint(phi);
  const double m2 = midpoint([&](double t) { return phi(t) * phi(t); });
  const double L = m2 - m1 * m1;
  const auto rho2 = [&](double t) {
    const double p = phi(t);
    return 2 * pi * pi * p * p + (a4 + 4 * pi * r) * p + (b4 - r * r);
  };
  const double s11 = midpoint([&](double t) { return std::pow(phi(t) - m1, 2) * rho2(t); });
  const double s22 = midpoint([&](double t) { return std::pow(m2 - phi(t) * m1, 2) * rho2(t); });
  const double s12 =
      midpoint([&](double t) { return (phi(t) - m1) * (m2 - phi(t) * m1) * rho2(t); });
  const auto sig = an::sigma_matrix(a, omega, pi, r, a4, b4);
  CHECK(sig.spread == doctest::Approx(L).epsilon(1e-8));
  CHECK(sig.sigma[0][0] == doctest::Approx(s11 / (L * L)).epsilon(1e-7));
  CHECK(sig.sigma[1][1] == doctest::Approx(s22 / (L * L)).epsilon(1e-7));
  CHECK(sig.sigma[0][1] == doctest::Approx(s12 / (L * L)).epsilon(1e-7));
  CHECK(sig.sigma[1][0] == sig.sigma[0][1]);
  CHECK_FALSE(sig.fourth_moment_warning);
  CHECK(an::sigma_matrix(0.0, 1.0, 1.0, 2.0, 0.0, 1.0).fourth_moment_warning);
  CHECK_THROWS(an::sigma_matrix(0.0, 0.0, 1.0, 1.0, 1.0, 1.0));
}

TEST_CASE("stable mean limit coefficient") {
  const double K = an::stable_mean_limit_coefficient(1.5, 0.0, 1.0, 0.5, 0.5);
  CHECK(K == doctest::Approx((12.0 / 35.0) / std::pow(1.0 / 3.0, 1.5)).epsilon(1e-9));
  CHECK(K == doctest::Approx(1.7816).epsilon(1e-4));
  CHECK(an::stable_mean_limit_laplace(1.0, 1.5, 0.0, 1.0, 0.5, 0.5) ==
        doctest::Approx(std::exp(K)));
}

TEST_CASE("jump functional second moments") {
  const auto m = an::u1_u2_second_moments(1.0, 1.0, 0.0, 1.0);
  CHECK(m.u1 == doctest::Approx(18.0).epsilon(1e-9));
  CHECK(m.u2 == doctest::Approx(5.0).epsilon(1e-9));
  const auto inf = an::u1_u2_second_moments(INFINITY, 1.0, 0.0, 1.0);
  CHECK(std::isinf(inf.u1));
}

TEST_CASE("empirical Laplace transform and jackknife error") {
  const std::vector<double> x{0.0, 1.0, 2.0, 0.5};
  const std::vector<double> lambdas{1.0};
  const auto pts = an::empirical_laplace(x, lambdas);
  double mean = 0.0;
  for (double v : x) mean += std::exp(-v);
  mean /= 4.0;
  double ss = 0.0;
  for (double v : x) ss += std::pow(std::exp(-v) - mean, 2);
  CHECK(pts[0].value == doctest::Approx(mean));
  CHECK(pts[0].se == doctest::Approx(std::sqrt(ss / 3.0 / 4.0)));
}

TEST_CASE("Kolmogorov-Smirnov statistics") {
  const std::vector<double> a{1.0, 2.0, 3.0};
  const std::vector<double> b{1.5, 2.5, 3.5};
  CHECK(an::ks_two_sample(a, b) == doctest::Approx(1.0 / 3.0));
  CHECK(an::ks_two_sample(a, a) == 0.0);
  const std::vector<double> ties{1.0, 1.0, 2.0};
  const std::vector<double> other{1.0, 2.0, 2.0};
  CHECK(an::ks_two_sample(ties, other) == doctest::Approx(1.0 / 3.0));
  const std::vector<double> u{0.1, 0.4, 0.7};
  CHECK(an::ks_against_cdf(u, [](double v) { return v; }) ==
        doctest::Approx(0.3).epsilon(1e-12));
  CHECK(an::normal_cdf(0.0) == 0.5);
  CHECK(an::normal_cdf(1.959963984540054) == doctest::Approx(0.975));
  CHECK(an::normal_cdf(3.0, 1.0, 2.0) == doctest::Approx(an::normal_cdf(1.0)));
}

TEST_CASE("sample summaries") {
  const std::vector<double> x{1.0, 2.0, 3.0, 4.0};
  const std::vector<double> y{2.0, 4.0, 6.0, 8.0};
  const auto s = an::summarize(x);
  CHECK(s.count == 4);
  CHECK(s.mean == 2.5);
  CHECK(s.variance == doctest::Approx(5.0 / 3.0));
  CHECK(an::covariance(x, y) == doctest::Approx(10.0 / 3.0));
}
