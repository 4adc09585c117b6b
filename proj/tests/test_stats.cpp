#include <doctest.h>

#include <cmath>

#include "akl/common.hpp"
#include "akl/stats.hpp"

using namespace akl;

TEST_CASE("median and percentile") {
  CHECK(median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(median({4.0, 1.0, 2.0, 3.0}) == 2.5);
  CHECK(std::isnan(median({})));
  CHECK(percentile({1.0, 2.0, 3.0, 4.0, 5.0}, 0.0) == 1.0);
  CHECK(percentile({1.0, 2.0, 3.0, 4.0, 5.0}, 1.0) == 5.0);
  CHECK(percentile({1.0, 2.0, 3.0, 4.0, 5.0}, 0.5) == 3.0);
  CHECK(percentile({0.0, 10.0}, 0.95) == doctest::Approx(9.5));
}

TEST_CASE("log-log fit recovers a power law") {
  std::vector<double> x{4, 8, 16, 32}, y;
  for (double v : x) y.push_back(3.0 * std::pow(v, -1.0));
  const LineFit f = loglog_fit(x, y);
  CHECK(f.slope == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(std::exp(f.intercept) == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("log-log fit rejects degenerate input") {
  CHECK_THROWS_AS(loglog_fit({1.0}, {1.0}), InvalidInput);
  CHECK_THROWS_AS(loglog_fit({1.0, 2.0}, {1.0}), InvalidInput);
  CHECK_THROWS_AS(loglog_fit({1.0, 2.0}, {0.0, 1.0}), InvalidInput);
}
