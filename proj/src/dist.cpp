#include "gwi/dist.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "gwi/errors.hpp"
#include "gwi/numeric.hpp"

namespace gwi::dist {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kMaxCount = 9.2e18;  // below 2^63

void check_unit(double s, const char* what) {
  if (!(s >= 0.0 && s <= 1.0)) {
    throw DomainError(fmt::format("{} = {} outside [0, 1]", what, s));
  }
}

std::uint64_t checked_add(std::uint64_t a, std::uint64_t b) {
  std::uint64_t out;
  if (__builtin_add_overflow(a, b, &out)) {
    throw OverflowError("count overflow in iid sum");
  }
  return out;
}

std::uint64_t checked_mul(std::uint64_t a, std::uint64_t b) {
  std::uint64_t out;
  if (__builtin_mul_overflow(a, b, &out)) {
    throw OverflowError("count overflow in iid sum");
  }
  return out;
}

// Fourth central moment of a two-point law with gap d and top mass p.
double two_point_fourth(double p, double d) {
  return p * (1.0 - p) * (1.0 - 3.0 * p + 3.0 * p * p) * d * d * d * d;
}

}  // namespace

std::string_view family_name(Family f) noexcept {
  switch (f) {
    case Family::deterministic: return "deterministic";
    case Family::bernoulli: return "bernoulli";
    case Family::geometric: return "geometric";
    case Family::stable_tailed: return "stable-tailed";
    case Family::sibuya_tailed: return "sibuya-tailed";
    case Family::two_point: return "two-point";
    case Family::explicit_pmf: return "explicit-pmf";
  }
  return "unknown";
}

bool MomentRecord::mean_finite() const noexcept { return std::isfinite(mean); }
bool MomentRecord::variance_finite() const noexcept {
  return std::isfinite(variance);
}
bool MomentRecord::fourth_finite() const noexcept {
  return std::isfinite(fourth_central);
}

// ---------------------------------------------------------------------------
// Construction

DiscreteDist DiscreteDist::deterministic(std::uint64_t value) {
  DiscreteDist d;
  d.family_ = Family::deterministic;
  d.low_ = d.high_ = value;
  d.compute_moments();
  return d;
}

DiscreteDist DiscreteDist::bernoulli(double p) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw InvalidParameter(fmt::format("bernoulli: p = {} outside [0, 1]", p));
  }
  DiscreteDist d;
  d.family_ = Family::bernoulli;
  d.p_ = p;
  d.low_ = 0;
  d.high_ = 1;
  d.compute_moments();
  return d;
}

DiscreteDist DiscreteDist::geometric(double p) {
  if (!(p > 0.0 && p <= 1.0)) {
    throw InvalidParameter(fmt::format("geometric: p = {} outside (0, 1]", p));
  }
  DiscreteDist d;
  d.family_ = Family::geometric;
  d.p_ = p;
  d.compute_moments();
  return d;
}

DiscreteDist DiscreteDist::stable_tailed(double m, double alpha, double c) {
  if (!(alpha > 1.0 && alpha <= 2.0)) {
    throw InvalidParameter(
        fmt::format("stable-tailed: alpha = {} outside (1, 2]", alpha));
  }
  if (!(c > 0.0) || !(m >= 0.0)) {
    throw InvalidParameter(
        fmt::format("stable-tailed: need c > 0 and m >= 0 (c = {}, m = {})", c,
                    m));
  }
  // p_0 = 1 - m + c and p_1 = m - c alpha; all higher terms are positive.
  if (1.0 - m + c < 0.0 || m - c * alpha < 0.0) {
    throw InvalidParameter(fmt::format(
        "stable-tailed: negative probability (p0 = {}, p1 = {})", 1.0 - m + c,
        m - c * alpha));
  }
  DiscreteDist d;
  d.family_ = Family::stable_tailed;
  d.m_ = m;
  d.index_ = alpha;
  d.scale_ = c;
  d.build_table();
  d.compute_moments();
  return d;
}

DiscreteDist DiscreteDist::sibuya_tailed(double beta, double scale) {
  if (!(beta > 0.0 && beta < 1.0)) {
    throw InvalidParameter(
        fmt::format("sibuya-tailed: beta = {} outside (0, 1)", beta));
  }
  if (!(scale > 0.0 && scale <= 1.0)) {
    throw InvalidParameter(
        fmt::format("sibuya-tailed: scale = {} outside (0, 1]", scale));
  }
  DiscreteDist d;
  d.family_ = Family::sibuya_tailed;
  d.index_ = beta;
  d.scale_ = scale;
  d.build_table();
  d.compute_moments();
  return d;
}

DiscreteDist DiscreteDist::two_point(std::uint64_t low, std::uint64_t high,
                                     double p_high) {
  if (!(p_high >= 0.0 && p_high <= 1.0) || high < low) {
    throw InvalidParameter(fmt::format(
        "two-point: need low <= high and p in [0, 1] (low = {}, high = {}, "
        "p = {})",
        low, high, p_high));
  }
  DiscreteDist d;
  d.family_ = Family::two_point;
  d.low_ = low;
  d.high_ = high;
  d.p_ = p_high;
  d.compute_moments();
  return d;
}

DiscreteDist DiscreteDist::explicit_pmf(std::vector<double> pmf) {
  if (pmf.empty()) throw InvalidParameter("explicit-pmf: empty pmf");
  CompensatedSum total;
  for (double p : pmf) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw InvalidParameter(
          fmt::format("explicit-pmf: probability {} outside [0, 1]", p));
    }
    total += p;
  }
  if (std::abs(total.value() - 1.0) > 1e-12) {
    throw InvalidParameter(
        fmt::format("explicit-pmf: masses sum to {}", total.value()));
  }
  while (pmf.size() > 1 && pmf.back() == 0.0) pmf.pop_back();
  DiscreteDist d;
  d.family_ = Family::explicit_pmf;
  d.explicit_ = std::move(pmf);
  d.build_table();
  d.compute_moments();
  return d;
}

void DiscreteDist::build_table() {
  auto table = std::make_shared<Table>();
  auto& pmf = table->pmf;
  auto& tail = table->tail;
  switch (family_) {
    case Family::stable_tailed: {
      const double alpha = index_;
      const double c = scale_;
      // Coefficients of (1-s)^alpha: q_2 = alpha(alpha-1)/2 and
      // q_{k+1} = q_k (k - alpha)/(k + 1). Tail sums of the same series
      // satisfy sum_{j>k} q_j = -(-1)^k binom(alpha-1, k).
      pmf.push_back(1.0 - m_ + c);
      pmf.push_back(m_ - c * alpha);
      tail.push_back(m_ - c);
      double r = -(alpha - 1.0);  // (-1)^k binom(alpha - 1, k) at k = 1
      tail.push_back(-c * r);
      double q = alpha * (alpha - 1.0) / 2.0;
      for (std::uint64_t k = 2;; ++k) {
        if (tail.back() < kTableTailThreshold || k > kTableCap) break;
        pmf.push_back(c * q);
        r *= (static_cast<double>(k - 1) - (alpha - 1.0)) /
             static_cast<double>(k);
        tail.push_back(std::max(0.0, -c * r));
        q *= (static_cast<double>(k) - alpha) / static_cast<double>(k + 1);
      }
      break;
    }
    case Family::sibuya_tailed: {
      const double beta = index_;
      const double w = scale_;
      pmf.push_back(1.0 - w);
      tail.push_back(w);
      double coef = beta;  // -(-1)^k binom(beta, k) at k = 1
      double t = 1.0;      // (-1)^k binom(beta - 1, k) at k = 0
      for (std::uint64_t k = 1;; ++k) {
        if (tail.back() < kTableTailThreshold || k > kTableCap) break;
        pmf.push_back(w * coef);
        t *= (static_cast<double>(k) - beta) / static_cast<double>(k);
        tail.push_back(w * t);
        coef *= (static_cast<double>(k) - beta) / static_cast<double>(k + 1);
      }
      break;
    }
    case Family::explicit_pmf: {
      pmf = explicit_;
      tail.resize(pmf.size());
      // Suffix sums give the tail without cancellation.
      CompensatedSum acc;
      for (std::size_t k = pmf.size(); k-- > 0;) {
        tail[k] = acc.value();
        acc += pmf[k];
      }
      break;
    }
    default:
      return;
  }
  table_ = std::move(table);
}

void DiscreteDist::compute_moments() {
  switch (family_) {
    case Family::deterministic:
      moments_ = {static_cast<double>(low_), 0.0, 0.0};
      break;
    case Family::bernoulli:
      moments_ = {p_, p_ * (1.0 - p_), two_point_fourth(p_, 1.0)};
      break;
    case Family::two_point: {
      const double gap = static_cast<double>(high_ - low_);
      moments_ = {static_cast<double>(low_) + p_ * gap,
                  p_ * (1.0 - p_) * gap * gap, two_point_fourth(p_, gap)};
      break;
    }
    case Family::geometric: {
      const double q = 1.0 - p_;
      const double p2 = p_ * p_;
      moments_ = {1.0 / p_, q / p2, q * (p2 - 9.0 * p_ + 9.0) / (p2 * p2)};
      break;
    }
    case Family::stable_tailed:
      if (index_ < 2.0) {
        moments_ = {m_, kInf, kInf};
      } else {
        // alpha = 2: support {0, 1, 2}.
        const auto& pmf = table_->pmf;
        double fourth = 0.0;
        for (std::size_t k = 0; k < pmf.size(); ++k) {
          fourth += pmf[k] * std::pow(static_cast<double>(k) - m_, 4);
        }
        moments_ = {m_, 2.0 * scale_ + m_ * (1.0 - m_), fourth};
      }
      break;
    case Family::sibuya_tailed:
      moments_ = {kInf, kInf, kInf};
      break;
    case Family::explicit_pmf: {
      CompensatedSum mean;
      for (std::size_t k = 0; k < explicit_.size(); ++k) {
        mean += static_cast<double>(k) * explicit_[k];
      }
      const double mu = mean.value();
      CompensatedSum var, fourth;
      for (std::size_t k = 0; k < explicit_.size(); ++k) {
        const double d = static_cast<double>(k) - mu;
        var += explicit_[k] * d * d;
        fourth += explicit_[k] * d * d * d * d;
      }
      moments_ = {mu, var.value(), fourth.value()};
      break;
    }
  }
}

// ---------------------------------------------------------------------------
// Generating function

double DiscreteDist::pgf(double s) const {
  check_unit(s, "pgf argument");
  switch (family_) {
    case Family::deterministic:
      return low_ == 0 ? 1.0 : std::pow(s, static_cast<double>(low_));
    case Family::bernoulli:
      return 1.0 - p_ + p_ * s;
    case Family::geometric:
      return p_ * s / (1.0 - (1.0 - p_) * s);
    case Family::stable_tailed:
      return (1.0 - m_) + m_ * s + scale_ * std::pow(1.0 - s, index_);
    case Family::sibuya_tailed:
      return 1.0 - scale_ * std::pow(1.0 - s, index_);
    case Family::two_point: {
      const double lo = low_ == 0 ? 1.0 : std::pow(s, static_cast<double>(low_));
      const double hi =
          high_ == 0 ? 1.0 : std::pow(s, static_cast<double>(high_));
      return (1.0 - p_) * lo + p_ * hi;
    }
    case Family::explicit_pmf: {
      double acc = 0.0;
      for (std::size_t k = explicit_.size(); k-- > 0;) acc = acc * s + explicit_[k];
      return acc;
    }
  }
  return 0.0;
}

double DiscreteDist::pgf_complement(double x) const {
  check_unit(x, "pgf complement argument");
  const double log_s = std::log1p(-x);
  // 1 - s^k = -expm1(k log s)
  auto one_minus_power = [log_s](std::uint64_t k) {
    if (k == 0) return 0.0;
    return -std::expm1(static_cast<double>(k) * log_s);
  };
  switch (family_) {
    case Family::deterministic:
      return one_minus_power(low_);
    case Family::bernoulli:
      return p_ * x;
    case Family::geometric:
      return x / (p_ + (1.0 - p_) * x);
    case Family::stable_tailed:
      return m_ * x - scale_ * std::pow(x, index_);
    case Family::sibuya_tailed:
      return scale_ * std::pow(x, index_);
    case Family::two_point:
      return (1.0 - p_) * one_minus_power(low_) + p_ * one_minus_power(high_);
    case Family::explicit_pmf: {
      CompensatedSum acc;
      for (std::size_t k = 1; k < explicit_.size(); ++k) {
        acc += explicit_[k] * one_minus_power(k);
      }
      return acc.value();
    }
  }
  return 0.0;
}

double DiscreteDist::pgf_remainder(double x) const {
  check_unit(x, "pgf remainder argument");
  if (!moments_.mean_finite()) {
    throw DomainError(
        fmt::format("pgf remainder needs a finite mean ({})", describe()));
  }
  const double log_s = std::log1p(-x);
  // s^k - 1 + k x
  auto power_remainder = [log_s, x](std::uint64_t k) {
    const double kd = static_cast<double>(k);
    return std::expm1(kd * log_s) + kd * x;
  };
  switch (family_) {
    case Family::deterministic:
      return power_remainder(low_);
    case Family::bernoulli:
      return 0.0;
    case Family::geometric:
      return (1.0 - p_) * x * x / (p_ * (p_ + (1.0 - p_) * x));
    case Family::stable_tailed:
      return scale_ * std::pow(x, index_);
    case Family::two_point:
      return (1.0 - p_) * power_remainder(low_) + p_ * power_remainder(high_);
    case Family::explicit_pmf: {
      CompensatedSum acc;
      for (std::size_t k = 2; k < explicit_.size(); ++k) {
        acc += explicit_[k] * power_remainder(k);
      }
      return acc.value();
    }
    case Family::sibuya_tailed:
      break;
  }
  return 0.0;
}

// ---------------------------------------------------------------------------
// Probabilities

double DiscreteDist::pmf_formula(std::uint64_t k) const {
  const double kd = static_cast<double>(k);
  switch (family_) {
    case Family::stable_tailed:
      if (index_ == 2.0) return 0.0;  // k > 2
      // c * Gamma(k - alpha) / (Gamma(-alpha) Gamma(k + 1))
      return scale_ * std::exp(std::lgamma(kd - index_) - std::lgamma(kd + 1.0)) /
             std::tgamma(-index_);
    case Family::sibuya_tailed:
      // w * beta * Gamma(k - beta) / (Gamma(1 - beta) Gamma(k + 1))
      return scale_ * index_ *
             std::exp(std::lgamma(kd - index_) - std::lgamma(kd + 1.0)) /
             std::tgamma(1.0 - index_);
    default:
      return 0.0;
  }
}

double DiscreteDist::tail_formula(std::uint64_t k) const {
  const double kd = static_cast<double>(k);
  switch (family_) {
    case Family::stable_tailed: {
      if (index_ == 2.0) return 0.0;
      const double a = index_ - 1.0;
      // -c (-1)^k binom(a, k) = -c Gamma(k - a) / (Gamma(-a) Gamma(k + 1))
      return -scale_ * std::exp(std::lgamma(kd - a) - std::lgamma(kd + 1.0)) /
             std::tgamma(-a);
    }
    case Family::sibuya_tailed: {
      const double b = index_ - 1.0;
      return scale_ * std::exp(std::lgamma(kd - b) - std::lgamma(kd + 1.0)) /
             std::tgamma(-b);
    }
    default:
      return 0.0;
  }
}

double DiscreteDist::pmf(std::uint64_t k) const {
  switch (family_) {
    case Family::deterministic:
      return k == low_ ? 1.0 : 0.0;
    case Family::bernoulli:
      return k == 0 ? 1.0 - p_ : (k == 1 ? p_ : 0.0);
    case Family::two_point:
      if (low_ == high_) return k == low_ ? 1.0 : 0.0;
      return k == low_ ? 1.0 - p_ : (k == high_ ? p_ : 0.0);
    case Family::geometric:
      if (k == 0) return 0.0;
      return p_ * std::pow(1.0 - p_, static_cast<double>(k - 1));
    default:
      break;
  }
  if (k < table_->pmf.size()) return table_->pmf[k];
  return pmf_formula(k);
}

double DiscreteDist::tail_mass(std::uint64_t k) const {
  switch (family_) {
    case Family::deterministic:
      return k < low_ ? 1.0 : 0.0;
    case Family::bernoulli:
      return k == 0 ? p_ : 0.0;
    case Family::two_point:
      if (k >= high_) return 0.0;
      return k >= low_ ? p_ : 1.0;
    case Family::geometric:
      return std::pow(1.0 - p_, static_cast<double>(k));
    default:
      break;
  }
  if (k < table_->tail.size()) return table_->tail[k];
  return tail_formula(k);
}

std::uint64_t DiscreteDist::table_cutoff() const noexcept {
  switch (family_) {
    case Family::deterministic:
    case Family::bernoulli:
    case Family::two_point:
      return high_;
    case Family::geometric: {
      if (p_ >= 1.0) return 1;
      const double k = std::ceil(std::log(kTableTailThreshold) / std::log1p(-p_));
      return static_cast<std::uint64_t>(
          std::min(k + 1.0, static_cast<double>(kTableCap)));
    }
    default:
      return table_->pmf.size() - 1;
  }
}

// ---------------------------------------------------------------------------
// Sampling

std::uint64_t DiscreteDist::invert_tail(double u,
                                        std::uint64_t first) const {
  const auto& tail = table_->tail;
  if (first < tail.size()) {
    auto it = std::partition_point(
        tail.begin() + static_cast<std::ptrdiff_t>(first), tail.end(),
        [u](double t) { return t >= u; });
    if (it != tail.end()) {
      return static_cast<std::uint64_t>(it - tail.begin());
    }
  }
  // Beyond the table the tail is a power law T(k) ~ T(K) (k/K)^(-index),
  // with index alpha for stable-tailed and beta for sibuya-tailed laws.
  const double k_max = static_cast<double>(tail.size() - 1);
  const double t_max = tail.back();
  const double x = k_max * std::pow(t_max / u, 1.0 / index_);
  const double k = std::max(std::floor(x) + 1.0, static_cast<double>(first));
  if (!(k < kMaxCount)) {
    throw OverflowError(
        fmt::format("tail draw exceeds count capacity ({})", describe()));
  }
  return static_cast<std::uint64_t>(k);
}

std::uint64_t DiscreteDist::sample(RandomStream& rng) const {
  const double u = rng.uniform();
  switch (family_) {
    case Family::deterministic:
      return low_;
    case Family::bernoulli:
      return u < p_ ? 1 : 0;
    case Family::two_point:
      return u < p_ ? high_ : low_;
    case Family::geometric: {
      if (p_ >= 1.0) return 1;
      const double k = std::floor(std::log(u) / std::log1p(-p_)) + 1.0;
      if (!(k < kMaxCount)) throw OverflowError("geometric draw overflow");
      return static_cast<std::uint64_t>(k);
    }
    default:
      return invert_tail(u, 0);
  }
}

std::uint64_t DiscreteDist::sample_iid_sum(std::uint64_t count,
                                           RandomStream& rng) const {
  if (count == 0) return 0;
  switch (family_) {
    case Family::deterministic:
      return checked_mul(count, low_);
    case Family::bernoulli:
      return rng.binomial(count, p_);
    case Family::two_point:
      return checked_add(checked_mul(count, low_),
                         checked_mul(high_ - low_, rng.binomial(count, p_)));
    case Family::geometric:
      return checked_add(count, rng.negative_binomial(count, p_));
    default:
      break;
  }

  constexpr std::uint64_t kDirectLimit = 8;
  std::uint64_t total = 0;
  if (count <= kDirectLimit) {
    for (std::uint64_t i = 0; i < count; ++i) {
      total = checked_add(total, sample(rng));
    }
    return total;
  }

  // Conditional binomial splitting: the number of draws equal to k among
  // those known to be >= k is Binomial(remaining, p_k / P(X >= k)). Once
  // few draws remain they are sampled individually from the conditional
  // tail, which keeps the cost near O(count^(1/(1+index))) for power-law
  // tails.
  const auto& pmf = table_->pmf;
  const auto& tail = table_->tail;
  std::uint64_t remaining = count;
  double at_least = 1.0;  // P(X >= k)
  std::uint64_t k = 0;
  for (; k < pmf.size() && remaining > 0; ++k) {
    if (k > 0 && remaining <= k + kDirectLimit) break;
    const double q = at_least > 0.0 ? std::min(1.0, pmf[k] / at_least) : 1.0;
    const std::uint64_t hits = rng.binomial(remaining, q);
    total = checked_add(total, checked_mul(hits, k));
    remaining -= hits;
    at_least = tail[k];
  }
  for (std::uint64_t i = 0; i < remaining; ++i) {
    // Draws conditioned on X >= k, i.e. P(X > k - 1) scaled uniform.
    const double u = rng.uniform() * at_least;
    total = checked_add(total, invert_tail(u, k));
  }
  return total;
}

std::string DiscreteDist::describe() const {
  switch (family_) {
    case Family::deterministic:
      return fmt::format("deterministic(value={})", low_);
    case Family::bernoulli:
      return fmt::format("bernoulli(p={})", p_);
    case Family::geometric:
      return fmt::format("geometric(p={})", p_);
    case Family::stable_tailed:
      return fmt::format("stable-tailed(m={},alpha={},c={})", m_, index_,
                         scale_);
    case Family::sibuya_tailed:
      return fmt::format("sibuya-tailed(beta={},scale={})", index_, scale_);
    case Family::two_point:
      return fmt::format("two-point(low={},high={},p={})", low_, high_, p_);
    case Family::explicit_pmf:
      return fmt::format("explicit-pmf(size={})", explicit_.size());
  }
  return "unknown";
}

}  // namespace gwi::dist
