#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "gwi/dist.hpp"
#include "gwi/errors.hpp"
#include "gwi/rng.hpp"

using gwi::RandomStream;
using gwi::dist::DiscreteDist;

namespace {

// Exact rational arithmetic for the pmf recursion at rational alpha.
struct Ratio {
  __int128 num;
  __int128 den;
};

__int128 gcd128(__int128 a, __int128 b) {
  if (a < 0) a = -a;
  if (b < 0) b = -b;
  while (b != 0) {
    const __int128 t = a % b;
    a = b;
    b = t;
  }
  return a == 0 ? 1 : a;
}

Ratio reduce(Ratio r) {
  const __int128 g = gcd128(r.num, r.den);
  r.num /= g;
  r.den /= g;
  if (r.den < 0) {
    r.num = -r.num;
    r.den = -r.den;
  }
  return r;
}

Ratio mul(Ratio a, Ratio b) { return reduce({a.num * b.num, a.den * b.den}); }
Ratio add(Ratio a, Ratio b) { return reduce({a.num * b.den + b.num * a.den, a.den * b.den}); }
double to_double(Ratio r) { return static_cast<double>(r.num) / static_cast<double>(r.den); }

// pmf of (1-m) + m s + c (1-s)^alpha with alpha = an/ad, by exact binomial
// series coefficients.
std::vector<Ratio> stable_pmf_exact(Ratio m, Ratio alpha, Ratio c, int kmax) {
  std::vector<Ratio> p;
  // (1-s)^alpha = sum_k binom(alpha, k) (-1)^k s^k
  Ratio coeff{1, 1};
  for (int k = 0; k <= kmax; ++k) {
    if (k > 0) {
      // coeff_k = coeff_{k-1} * (k - 1 - alpha) / k
      coeff = mul(coeff, reduce({(k - 1) * alpha.den - alpha.num, alpha.den * k}));
    }
    Ratio value = mul(c, coeff);
    if (k == 0) value = add(value, add({1, 1}, {-m.num, m.den}));
    if (k == 1) value = add(value, m);
    p.push_back(value);
  }
  return p;
}

double brute_pgf(const DiscreteDist& d, double s, std::uint64_t kmax) {
  double total = 0.0;
  double power = 1.0;
  for (std::uint64_t k = 0; k <= kmax; ++k) {
    total += d.pmf(k) * power;
    power *= s;
  }
  return total;
}

}  // namespace

TEST_CASE("stable-tailed pmf matches exact rational coefficients") {
  const auto d = DiscreteDist::stable_tailed(1.0, 1.5, 0.25);
  const auto exact = stable_pmf_exact({1, 1}, {3, 2}, {1, 4}, 12);
  CHECK(d.pmf(0) == 0.25);
  CHECK(d.pmf(1) == 0.625);
  CHECK(d.pmf(2) == 0.09375);
  CHECK(d.pmf(3) == 0.015625);
  for (int k = 0; k <= 12; ++k) {
    CHECK(d.pmf(k) == doctest::Approx(to_double(exact[k])).epsilon(1e-14));
  }
}

TEST_CASE("pmf table plus tail is a probability measure") {
  for (const auto& d : {DiscreteDist::stable_tailed(1.0, 1.5, 0.25),
                        DiscreteDist::stable_tailed(0.9, 1.8, 0.1),
                        DiscreteDist::stable_tailed(1.0, 2.0, 0.3),
                        DiscreteDist::sibuya_tailed(0.5, 0.5),
                        DiscreteDist::geometric(0.3)}) {
    const std::uint64_t kmax = d.table_cutoff();
    long double total = 0.0L;
    for (std::uint64_t k = 0; k <= kmax; ++k) total += d.pmf(k);
    CHECK(std::abs(static_cast<double>(total) + d.tail_mass(kmax) - 1.0) < 1e-12);
    CHECK(d.tail_mass(kmax) < 1e-12 + (kmax == gwi::dist::kTableCap ? 1.0 : 0.0));
  }
}

TEST_CASE("stable-tailed closed-form tail agrees with summed pmf") {
  const auto d = DiscreteDist::stable_tailed(1.0, 1.5, 0.25);
  double cumulative = 0.0;
  for (std::uint64_t k = 0; k < 200; ++k) {
    cumulative += d.pmf(k);
    CHECK(d.tail_mass(k) == doctest::Approx(1.0 - cumulative).epsilon(1e-9));
  }
  // Power-law decay with exponent alpha.
  const double ratio = d.tail_mass(20000) / d.tail_mass(10000);
  CHECK(ratio == doctest::Approx(std::pow(2.0, -1.5)).epsilon(1e-3));
}

TEST_CASE("pgf agrees with the pmf series") {
  const std::vector<DiscreteDist> dists{
      DiscreteDist::bernoulli(0.3),        DiscreteDist::geometric(0.4),
      DiscreteDist::stable_tailed(1.0, 1.5, 0.25),
      DiscreteDist::two_point(1, 7, 0.2),  DiscreteDist::deterministic(3),
      DiscreteDist::explicit_pmf({0.2, 0.3, 0.5})};
  for (const auto& d : dists) {
    for (double s : {0.0, 0.2, 0.5, 0.8}) {
      CHECK(d.pgf(s) == doctest::Approx(brute_pgf(d, s, 4000)).epsilon(1e-10));
    }
    CHECK(d.pgf(1.0) == doctest::Approx(1.0));
  }
}

TEST_CASE("complement and remainder are consistent with the pgf") {
  const std::vector<DiscreteDist> dists{
      DiscreteDist::bernoulli(0.3), DiscreteDist::geometric(0.4),
      DiscreteDist::stable_tailed(0.8, 1.7, 0.1), DiscreteDist::two_point(2, 5, 0.6),
      DiscreteDist::explicit_pmf({0.1, 0.6, 0.3})};
  for (const auto& d : dists) {
    for (double x : {0.05, 0.3, 0.9}) {
      CHECK(d.pgf_complement(x) == doctest::Approx(1.0 - d.pgf(1.0 - x)).epsilon(1e-12));
      CHECK(d.pgf_remainder(x) ==
            doctest::Approx(d.pgf(1.0 - x) - 1.0 + d.mean() * x).epsilon(1e-10));
    }
  }
  // Stable remainder is exactly c x^alpha even where 1 - g cancels.
  const auto s = DiscreteDist::stable_tailed(1.0, 1.5, 0.25);
  CHECK(s.pgf_remainder(1e-9) == doctest::Approx(0.25 * std::pow(1e-9, 1.5)).epsilon(1e-14));
  const auto w = DiscreteDist::sibuya_tailed(0.5, 0.5);
  CHECK(w.pgf_complement(1e-10) == doctest::Approx(0.5 * std::pow(1e-10, 0.5)).epsilon(1e-14));
  CHECK_THROWS_AS(w.pgf_remainder(0.1), gwi::DomainError);
}

TEST_CASE("moments match brute-force sums") {
  const auto g = DiscreteDist::geometric(0.3);
  double m = 0.0;
  for (std::uint64_t k = 0; k < 400; ++k) m += k * g.pmf(k);
  double v = 0.0;
  double f = 0.0;
  for (std::uint64_t k = 0; k < 400; ++k) {
    v += (k - m) * (k - m) * g.pmf(k);
    f += std::pow(k - m, 4) * g.pmf(k);
  }
  CHECK(g.mean() == doctest::Approx(m).epsilon(1e-10));
  CHECK(g.moments().variance == doctest::Approx(v).epsilon(1e-9));
  CHECK(g.moments().fourth_central == doctest::Approx(f).epsilon(1e-8));

  const auto tp = DiscreteDist::two_point(1, 100, 1e-4);
  CHECK(tp.mean() == doctest::Approx(1.0 + 99e-4));
  CHECK(tp.moments().variance == doctest::Approx(99.0 * 99.0 * 1e-4 * (1 - 1e-4)));

  const auto heavy = DiscreteDist::stable_tailed(1.0, 1.5, 0.25);
  CHECK(heavy.mean() == 1.0);
  CHECK(std::isinf(heavy.moments().variance));
  CHECK(std::isinf(DiscreteDist::sibuya_tailed(0.5, 0.5).mean()));

  const auto quad = DiscreteDist::stable_tailed(0.9, 2.0, 0.2);
  double qm = 0.0;
  double qv = 0.0;
  for (std::uint64_t k = 0; k < 10; ++k) qm += k * quad.pmf(k);
  for (std::uint64_t k = 0; k < 10; ++k) qv += (k - qm) * (k - qm) * quad.pmf(k);
  CHECK(quad.moments().variance == doctest::Approx(qv));
  CHECK(quad.moments().variance == doctest::Approx(2 * 0.2 + 0.9 * 0.1));
}

TEST_CASE("invalid parameters are rejected eagerly") {
  CHECK_THROWS_AS(DiscreteDist::bernoulli(1.5), gwi::InvalidParameter);
  CHECK_THROWS_AS(DiscreteDist::geometric(0.0), gwi::InvalidParameter);
  CHECK_THROWS_AS(DiscreteDist::stable_tailed(1.0, 1.5, 0.9), gwi::InvalidParameter);  // p1 < 0
  CHECK_THROWS_AS(DiscreteDist::stable_tailed(1.0, 2.5, 0.1), gwi::InvalidParameter);
  CHECK_THROWS_AS(DiscreteDist::sibuya_tailed(1.0, 0.5), gwi::InvalidParameter);
  CHECK_THROWS_AS(DiscreteDist::explicit_pmf({0.5, 0.4}), gwi::InvalidParameter);
  CHECK_THROWS_AS(DiscreteDist::explicit_pmf({1.2, -0.2}), gwi::InvalidParameter);
  const auto d = DiscreteDist::bernoulli(0.5);
  CHECK_THROWS_AS(d.pgf(1.5), gwi::DomainError);
  CHECK_THROWS_AS(d.pgf(-0.1), gwi::DomainError);
}

TEST_CASE("sampling frequencies follow the pmf") {
  const auto d = DiscreteDist::stable_tailed(1.0, 1.5, 0.25);
  auto rng = RandomStream::derive(11, 0);
  const int draws = 200000;
  std::vector<int> counts(6, 0);
  for (int i = 0; i < draws; ++i) {
    const auto x = d.sample(rng);
    if (x < counts.size()) ++counts[x];
  }
  for (std::uint64_t k = 0; k < counts.size(); ++k) {
    const double p = d.pmf(k);
    const double se = std::sqrt(p * (1 - p) / draws);
    CHECK(std::abs(counts[k] / double(draws) - p) < 5 * se);
  }
}

TEST_CASE("sampling beyond the table follows the power tail") {
  const auto d = DiscreteDist::sibuya_tailed(0.5, 0.5);
  auto rng = RandomStream::derive(12, 0);
  const int draws = 400000;
  const std::uint64_t k = 100000;
  int above = 0;
  for (int i = 0; i < draws; ++i) above += d.sample(rng) > k;
  const double p = d.tail_mass(k);
  CHECK(std::abs(above / double(draws) - p) < 5 * std::sqrt(p / draws));
}

TEST_CASE("iid sums agree in law with repeated single draws") {
  const std::vector<DiscreteDist> dists{
      DiscreteDist::stable_tailed(1.0, 1.5, 0.25), DiscreteDist::geometric(0.6),
      DiscreteDist::two_point(1, 10, 0.05), DiscreteDist::explicit_pmf({0.3, 0.3, 0.4})};
  for (const auto& d : dists) {
    auto rng_a = RandomStream::derive(21, 0);
    auto rng_b = RandomStream::derive(22, 0);
    const int reps = 20000;
    const std::uint64_t count = 40;
    std::vector<double> fast;
    std::vector<double> slow;
    for (int r = 0; r < reps; ++r) {
      fast.push_back(static_cast<double>(d.sample_iid_sum(count, rng_a)));
      std::uint64_t total = 0;
      for (std::uint64_t i = 0; i < count; ++i) total += d.sample(rng_b);
      slow.push_back(static_cast<double>(total));
    }
    // Compare the medians and lower quartiles, which exist for heavy tails.
    std::sort(fast.begin(), fast.end());
    std::sort(slow.begin(), slow.end());
    for (double q : {0.25, 0.5, 0.75}) {
      const auto idx = static_cast<std::size_t>(q * reps);
      CHECK(std::abs(fast[idx] - slow[idx]) <= 1.0 + 0.02 * slow[idx]);
    }
  }
}

TEST_CASE("large iid sums keep the exact mean") {
  const auto d = DiscreteDist::stable_tailed(0.7, 1.9, 0.05);
  auto rng = RandomStream::derive(5, 0);
  const std::uint64_t count = 1'000'000;
  double total = 0.0;
  const int reps = 200;
  for (int r = 0; r < reps; ++r) total += static_cast<double>(d.sample_iid_sum(count, rng));
  CHECK(total / reps / count == doctest::Approx(0.7).epsilon(2e-3));
}

TEST_CASE("iid sum overflow is reported") {
  const auto d = DiscreteDist::deterministic(UINT64_MAX / 2);
  auto rng = RandomStream::derive(1, 0);
  CHECK_THROWS_AS(d.sample_iid_sum(3, rng), gwi::OverflowError);
}

TEST_CASE("random streams are reproducible and distinct") {
  auto a = RandomStream::derive(7, 3);
  auto b = RandomStream::derive(7, 3);
  auto c = RandomStream::derive(7, 4);
  bool differs = false;
  for (int i = 0; i < 10; ++i) {
    const auto x = a.engine()();
    CHECK(x == b.engine()());
    differs = differs || x != c.engine()();
  }
  CHECK(differs);
  for (int i = 0; i < 1000; ++i) {
    const double u = a.uniform();
    CHECK(u > 0.0);
    CHECK(u < 1.0);
  }
}
