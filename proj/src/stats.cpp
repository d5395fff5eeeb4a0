#include "evalkit/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace evalkit {
namespace stats {

std::vector<std::size_t> resample_indices(const ResamplePlan& plan,
                                          std::uint64_t iteration) {
  if (plan.n == 0) raise(ErrorCode::EmptyInput, "resample over zero rows");
  if (iteration >= plan.iterations)
    raise(ErrorCode::IterationOutOfRange,
          "iteration " + std::to_string(iteration) + " >= B=" +
              std::to_string(plan.iterations));
  SplitMix64 gen(stream_seed(plan.seed, iteration));
  std::vector<std::size_t> out(plan.n);
  for (auto& idx : out) idx = std::size_t(gen.next() % plan.n);
  return out;
}

double sorted_quantile(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) raise(ErrorCode::EmptyInput, "quantile of empty sample");
  if (sorted.size() == 1) return sorted[0];
  double h = p * double(sorted.size() - 1);
  std::size_t lo = std::size_t(std::floor(h));
  if (lo >= sorted.size() - 1) return sorted.back();
  double frac = h - double(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

ConfidenceInterval bootstrap_ci(const IndexStatistic& statistic, std::size_t n,
                                double level, std::uint64_t iterations,
                                std::uint64_t seed) {
  if (n == 0) raise(ErrorCode::EmptyInput, "bootstrap over zero rows");
  if (!(level > 0.0 && level < 1.0))
    raise(ErrorCode::InvalidValue, "confidence level must be in (0,1)");
  if (iterations == 0)
    raise(ErrorCode::InvalidValue, "bootstrap needs B >= 1");

  std::vector<std::size_t> identity(n);
  std::iota(identity.begin(), identity.end(), std::size_t(0));
  double point = statistic(identity);

  ResamplePlan plan{n, iterations, seed};
  std::vector<double> samples;
  samples.reserve(iterations);
  for (std::uint64_t b = 0; b < iterations; ++b) {
    double v = statistic(resample_indices(plan, b));
    if (!std::isfinite(v))
      raise(ErrorCode::DegenerateMetric,
            "non-finite statistic at bootstrap iteration " + std::to_string(b));
    samples.push_back(v);
  }
  std::sort(samples.begin(), samples.end());

  double alpha = 1.0 - level;
  ConfidenceInterval ci;
  ci.point = point;
  ci.low = sorted_quantile(samples, alpha / 2.0);
  ci.high = sorted_quantile(samples, 1.0 - alpha / 2.0);
  ci.level = level;
  ci.iterations = iterations;
  ci.seed = seed;
  return ci;
}

}  // namespace stats
}  // namespace evalkit
