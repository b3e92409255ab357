#pragma once

// Percentile bootstrap over resampling units (sessions).

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace marketrank {

inline constexpr int kDefaultBootstrapReplicates = 1000;

struct Interval {
  double low = 0.0;
  double high = 0.0;
};

// Linear-interpolated percentile interval at `level` (e.g. 0.95). Non-finite
// values are ignored; with none left both ends are NaN.
Interval percentile_interval(std::vector<double> values, double level = 0.95);

// Replicate r draws n_units indices with replacement from its own seeded
// stream and hands stat() the multiplicity of each unit. Results are indexed
// by replicate, so the output does not depend on the thread count.
using BootstrapStatistic = std::function<double(std::span<const std::uint32_t>)>;
std::vector<double> bootstrap_replicates(std::size_t n_units, int replicates, std::uint64_t seed,
                                         unsigned threads, const BootstrapStatistic& stat);

// (a - b) / b, or NaN when b is not positive.
double relative_lift(double a, double b);

}  // namespace marketrank
