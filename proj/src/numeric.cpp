#include "gwi/numeric.hpp"

namespace gwi {

double compensated_sum(std::span<const double> xs) noexcept {
  CompensatedSum acc;
  for (double x : xs) acc.add(x);
  return acc.value();
}

namespace {

struct Panel {
  double lo, hi, f_lo, f_mid, f_hi, whole;
};

double simpson_step(const std::function<double(double)>& f, const Panel& p,
                    double tol, int depth, int level) {
  const double mid = 0.5 * (p.lo + p.hi);
  const double left_mid = 0.5 * (p.lo + mid);
  const double right_mid = 0.5 * (mid + p.hi);
  const double f_lm = f(left_mid);
  const double f_rm = f(right_mid);
  const double h = p.hi - p.lo;
  const double left = h / 12.0 * (p.f_lo + 4.0 * f_lm + p.f_mid);
  const double right = h / 12.0 * (p.f_mid + 4.0 * f_rm + p.f_hi);
  const double delta = left + right - p.whole;
  // Require at least a few levels so that smooth-looking coarse panels
  // cannot hide structure.
  if (depth <= 0 || (level >= 4 && std::abs(delta) <= 15.0 * tol)) {
    return left + right + delta / 15.0;
  }
  return simpson_step(f, {p.lo, mid, p.f_lo, f_lm, p.f_mid, left}, 0.5 * tol,
                      depth - 1, level + 1) +
         simpson_step(f, {mid, p.hi, p.f_mid, f_rm, p.f_hi, right}, 0.5 * tol,
                      depth - 1, level + 1);
}

}  // namespace

double integrate(const std::function<double(double)>& f, double lo, double hi,
                 double abs_tol, int max_depth) {
  if (lo == hi) return 0.0;
  const double mid = 0.5 * (lo + hi);
  const double f_lo = f(lo);
  const double f_mid = f(mid);
  const double f_hi = f(hi);
  const double whole = (hi - lo) / 6.0 * (f_lo + 4.0 * f_mid + f_hi);
  return simpson_step(f, {lo, hi, f_lo, f_mid, f_hi, whole}, abs_tol,
                      max_depth, 0);
}

}  // namespace gwi
