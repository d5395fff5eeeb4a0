#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "evalkit/stats.hpp"

using namespace evalkit;
using namespace evalkit::stats;

TEST_CASE("splitmix64 matches the published reference sequence") {
  SplitMix64 gen(0);
  CHECK(gen.next() == 0xe220a8397b1dcdafULL);
  CHECK(gen.next() == 0x6e789e6aa1b965f4ULL);
  CHECK(gen.next() == 0x06c45d188009454fULL);
}

TEST_CASE("resample golden vectors are pinned") {
  // golden vectors generated once from the documented PRNG definition
  CHECK(resample_indices({5, 10, 7}, 0) ==
        std::vector<std::size_t>{2, 2, 2, 1, 0});
  CHECK(resample_indices({5, 10, 7}, 1) ==
        std::vector<std::size_t>{1, 2, 2, 1, 3});
  CHECK(resample_indices({8, 10, 42}, 0) ==
        std::vector<std::size_t>{4, 5, 2, 0, 1, 7, 4, 6});
  CHECK(stream_seed(7, 0) == 0xf75f04cbb5a1a1ddULL);
}

TEST_CASE("resampling is deterministic per (seed, iteration)") {
  ResamplePlan plan{100, 50, 1234};
  CHECK(resample_indices(plan, 17) == resample_indices(plan, 17));
  CHECK(resample_indices(plan, 17) != resample_indices(plan, 18));
  ResamplePlan other{100, 50, 1235};
  CHECK(resample_indices(plan, 17) != resample_indices(other, 17));
}

TEST_CASE("n=1 resamples are all zero") {
  auto idx = resample_indices({1, 10, 9}, 3);
  CHECK(idx == std::vector<std::size_t>{0});
}

TEST_CASE("iteration out of range is rejected") {
  try {
    resample_indices({5, 10, 7}, 10);
    FAIL("expected IterationOutOfRange");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::IterationOutOfRange);
  }
}

TEST_CASE("sorted quantile matches a brute-force interpolation oracle") {
  std::vector<double> sorted{1.0, 2.0, 4.0, 8.0, 16.0};
  auto oracle = [&](double p) {
    double h = p * double(sorted.size() - 1);
    std::size_t lo = std::size_t(h);
    if (lo >= sorted.size() - 1) return sorted.back();
    return sorted[lo] + (h - double(lo)) * (sorted[lo + 1] - sorted[lo]);
  };
  for (double p : {0.0, 0.025, 0.25, 0.5, 0.8, 0.975, 1.0})
    CHECK(sorted_quantile(sorted, p) == oracle(p));
  CHECK(sorted_quantile(sorted, 0.5) == 4.0);
  CHECK(sorted_quantile({3.5}, 0.9) == 3.5);
}

TEST_CASE("bootstrap over constant data collapses to a point") {
  auto ci = bootstrap_ci([](const std::vector<std::size_t>&) { return 0.7; },
                         25, 0.95, 200, 9);
  CHECK(ci.point == 0.7);
  CHECK(ci.low == 0.7);
  CHECK(ci.high == 0.7);
}

TEST_CASE("bootstrap is bit-reproducible for a fixed seed") {
  std::vector<double> data{0.1, 0.9, 0.4, 0.7, 0.2, 0.8, 0.5};
  auto mean_stat = [&](const std::vector<std::size_t>& idx) {
    double sum = 0;
    for (auto i : idx) sum += data[i];
    return sum / double(idx.size());
  };
  auto a = bootstrap_ci(mean_stat, data.size(), 0.9, 500, 42);
  auto b = bootstrap_ci(mean_stat, data.size(), 0.9, 500, 42);
  CHECK(a.low == b.low);
  CHECK(a.high == b.high);
  CHECK(a.point == b.point);

  auto c = bootstrap_ci(mean_stat, data.size(), 0.9, 500, 43);
  CHECK((a.low != c.low || a.high != c.high));
}

TEST_CASE("wider levels contain narrower ones") {
  std::vector<double> data{0.1, 0.9, 0.4, 0.7, 0.2, 0.8, 0.5, 0.35, 0.65};
  auto mean_stat = [&](const std::vector<std::size_t>& idx) {
    double sum = 0;
    for (auto i : idx) sum += data[i];
    return sum / double(idx.size());
  };
  auto narrow = bootstrap_ci(mean_stat, data.size(), 0.90, 400, 5);
  auto wide = bootstrap_ci(mean_stat, data.size(), 0.99, 400, 5);
  CHECK(wide.low <= narrow.low);
  CHECK(wide.high >= narrow.high);
}

TEST_CASE("non-finite statistics abort with the offending iteration") {
  int calls = 0;
  auto bad = [&](const std::vector<std::size_t>&) {
    return ++calls > 3 ? std::nan("") : 0.5;
  };
  try {
    bootstrap_ci(bad, 4, 0.95, 100, 11);
    FAIL("expected DegenerateMetric");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DegenerateMetric);
    CHECK(e.message().find("iteration") != std::string::npos);
  }
}

TEST_CASE("bootstrap argument validation") {
  auto stat = [](const std::vector<std::size_t>&) { return 0.0; };
  CHECK_THROWS_AS(bootstrap_ci(stat, 0, 0.95, 10, 1), Error);
  CHECK_THROWS_AS(bootstrap_ci(stat, 5, 1.5, 10, 1), Error);
  CHECK_THROWS_AS(bootstrap_ci(stat, 5, 0.95, 0, 1), Error);
}

TEST_CASE("nominal 95% coverage on Bernoulli(0.7) accuracy") {
  // Monte Carlo: does the percentile CI cover the true rate often enough?
  const double p_true = 0.7;
  const std::size_t n = 100;
  const int simulations = 200;  // the acceptance suite runs 500
  int covered = 0;
  SplitMix64 world(2024);
  for (int sim = 0; sim < simulations; ++sim) {
    std::vector<int> correct(n);
    for (auto& c : correct)
      c = (double(world.next()) / double(UINT64_MAX)) < p_true ? 1 : 0;
    auto stat = [&](const std::vector<std::size_t>& idx) {
      double sum = 0;
      for (auto i : idx) sum += correct[i];
      return sum / double(idx.size());
    };
    auto ci = bootstrap_ci(stat, n, 0.95, 500, 1000 + sim);
    if (ci.low <= p_true && p_true <= ci.high) ++covered;
  }
  double coverage = double(covered) / simulations;
  CHECK(coverage >= 0.88);  // slightly wider than the acceptance band
  CHECK(coverage <= 1.0);
}
