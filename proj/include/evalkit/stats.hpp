#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "evalkit/error.hpp"

namespace evalkit {
namespace stats {

// Pinned PRNG so resampling is bit-identical across platforms and runs.
//
//   mix64(z): z ^= z >> 30; z *= 0xBF58476D1CE4E5B9;
//             z ^= z >> 27; z *= 0x94D049BB133111EB; z ^= z >> 31
//   next():   state += 0x9E3779B97F4A7C15; return mix64(state)
//
// Iteration b of a resample plan draws from a stream seeded with
// mix64(seed ^ (0x9E3779B97F4A7C15 * (b + 1))), all arithmetic mod 2^64.
// Indices are next() % n.
inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

inline std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ULL;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBULL;
  z ^= z >> 31;
  return z;
}

class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next() {
    state_ += kGolden;
    return mix64(state_);
  }

 private:
  std::uint64_t state_;
};

inline std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t b) {
  return mix64(seed ^ (kGolden * (b + 1)));
}

struct ResamplePlan {
  std::size_t n = 0;
  std::uint64_t iterations = 1000;
  std::uint64_t seed = 42;
};

std::vector<std::size_t> resample_indices(const ResamplePlan& plan,
                                          std::uint64_t iteration);

struct ConfidenceInterval {
  double point = 0.0;
  double low = 0.0;
  double high = 0.0;
  double level = 0.95;
  std::uint64_t iterations = 1000;
  std::uint64_t seed = 42;
};

// Statistic over a multiset of row indices (with repetitions).
using IndexStatistic =
    std::function<double(const std::vector<std::size_t>& indices)>;

// Percentile bootstrap: low/high are the (1-level)/2 and 1-(1-level)/2
// empirical quantiles of B resampled statistics, linear interpolation
// between order statistics. `point` is the statistic on the original data.
ConfidenceInterval bootstrap_ci(const IndexStatistic& statistic, std::size_t n,
                                double level = 0.95,
                                std::uint64_t iterations = 1000,
                                std::uint64_t seed = 42);

// Quantile with linear interpolation over an already sorted vector.
double sorted_quantile(const std::vector<double>& sorted, double p);

}  // namespace stats
}  // namespace evalkit
