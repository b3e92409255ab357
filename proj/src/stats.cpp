#include "marketrank/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include "marketrank/random.hpp"

namespace marketrank {

namespace {

constexpr std::uint64_t kBootstrapStream = 31;

double quantile_sorted(const std::vector<double>& v, double q) {
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return v[lo] + frac * (v[hi] - v[lo]);
}

}  // namespace

Interval percentile_interval(std::vector<double> values, double level) {
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("level must lie in (0,1)");
  std::erase_if(values, [](double x) { return !std::isfinite(x); });
  if (values.empty()) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    return {nan, nan};
  }
  std::sort(values.begin(), values.end());
  const double tail = (1.0 - level) / 2.0;
  return {quantile_sorted(values, tail), quantile_sorted(values, 1.0 - tail)};
}

std::vector<double> bootstrap_replicates(std::size_t n_units, int replicates, std::uint64_t seed,
                                         unsigned threads, const BootstrapStatistic& stat) {
  if (n_units == 0) throw std::invalid_argument("bootstrap needs at least one unit");
  if (replicates < 1) throw std::invalid_argument("bootstrap needs at least one replicate");
  std::vector<double> out(static_cast<std::size_t>(replicates));
  parallel_for(out.size(), threads, [&](std::size_t r) {
    Rng rng(derive_seed(seed, kBootstrapStream, r));
    std::uniform_int_distribution<std::size_t> pick(0, n_units - 1);
    std::vector<std::uint32_t> counts(n_units, 0);
    for (std::size_t i = 0; i < n_units; ++i) ++counts[pick(rng)];
    out[r] = stat(counts);
  });
  return out;
}

double relative_lift(double a, double b) {
  if (!(b > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  return (a - b) / b;
}

}  // namespace marketrank
