#include "gwi/rng.hpp"

#include <boost/random/binomial_distribution.hpp>

#include <cmath>
#include <cstdint>
#include <limits>

#include "gwi/errors.hpp"

namespace gwi {

RandomStream RandomStream::derive(std::uint64_t master_seed,
                                  std::uint64_t index) {
  // Two rounds of mixing decorrelate neighbouring indices and seeds.
  const std::uint64_t key = mix64(master_seed ^ mix64(index + 0x632be59bd9b4e019ULL));
  return RandomStream(mix64(key ^ 0xd1b54a32d192ed03ULL));
}

double RandomStream::normal() { return normal_(engine_); }

double RandomStream::exponential() { return -std::log(uniform()); }

std::uint64_t RandomStream::binomial(std::uint64_t trials, double p) {
  if (trials == 0 || p <= 0.0) return 0;
  if (p >= 1.0) return trials;
  if (trials > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max())) {
    throw OverflowError("binomial trial count exceeds the signed 64-bit range");
  }
  // Boost's BTRD sampler has a much cheaper setup than the libstdc++ one,
  // which matters because the parameters change on every call.
  boost::random::binomial_distribution<std::int64_t, double> dist(
      static_cast<std::int64_t>(trials), p);
  return static_cast<std::uint64_t>(dist(engine_));
}

std::uint64_t RandomStream::negative_binomial(std::uint64_t successes,
                                              double p) {
  if (successes == 0 || p >= 1.0) return 0;
  std::negative_binomial_distribution<std::uint64_t> dist(successes, p);
  return dist(engine_);
}

std::uint64_t RandomStream::poisson(double mean) {
  if (mean <= 0.0) return 0;
  std::poisson_distribution<std::uint64_t> dist(mean);
  return dist(engine_);
}

}  // namespace gwi
