#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include <editgrpo/grid.hpp>

#include "helpers.hpp"

using namespace editgrpo;

TEST_CASE("grid indexing is row-major h,w,c") {
  Grid g(2, 3, 2);
  g.at(1, 2, 1) = 7.0;
  CHECK(g.data[(1 * 3 + 2) * 2 + 1] == 7.0);
  CHECK(g.size() == 12);
  CHECK_THROWS_AS(Grid(0, 1, 1), std::invalid_argument);
}

TEST_CASE("rng draws are a pure function of (seed, stream, counter)") {
  RngState a(42, streams::kRollout);
  RngState b(42, streams::kRollout);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  // skipping ahead reproduces the same draw
  RngState c(42, streams::kRollout);
  c.counter = 50;
  RngState d(42, streams::kRollout);
  for (int i = 0; i < 50; ++i) d.next_u64();
  CHECK(c.next_u64() == d.next_u64());
}

TEST_CASE("distinct streams and substreams do not alias") {
  RngState a(9, streams::kInit);
  RngState b(9, streams::kEnv);
  int same = 0;
  for (int i = 0; i < 64; ++i) same += a.next_u64() == b.next_u64() ? 1 : 0;
  CHECK(same == 0);

  RngState base(9, streams::kRollout);
  CHECK(base.substream(1, 2, 3).stream != base.substream(1, 2, 4).stream);
  CHECK(base.substream(1, 2, 3).stream == base.substream(1, 2, 3).stream);
  CHECK(base.substream(0).stream != base.stream);
}

TEST_CASE("uniform draws live in (0,1) and pass a law-of-large-numbers check") {
  RngState rng(7, streams::kInit);
  double sum = 0.0, sum2 = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    double u = rng.next_uniform();
    CHECK(u > 0.0);
    CHECK(u < 1.0);
    sum += u;
    sum2 += u * u;
  }
  double mean = sum / n;
  double var = sum2 / n - mean * mean;
  CHECK(std::abs(mean - 0.5) < 0.005);
  CHECK(std::abs(var - 1.0 / 12.0) < 0.005);
}

TEST_CASE("normal draws match N(0,1) moments") {
  RngState rng(11, streams::kInit);
  double sum = 0.0, sum2 = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    double z = rng.next_normal();
    sum += z;
    sum2 += z * z;
  }
  double mean = sum / n;
  double var = sum2 / n - mean * mean;
  CHECK(std::abs(mean) < 0.01);
  CHECK(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("gaussian_logpdf matches the closed form") {
  Grid x(1, 1, 1), mu(1, 1, 1);
  x.at(0, 0, 0) = 1.3;
  mu.at(0, 0, 0) = 0.4;
  const double s = 0.7;
  double expected = -0.5 * std::log(2.0 * 3.14159265358979323846) -
                    std::log(s) - (0.9 * 0.9) / (2.0 * s * s);
  CHECK(gaussian_logpdf(x, mu, s).at(0, 0, 0) ==
        doctest::Approx(expected).epsilon(1e-14));
  CHECK_THROWS_AS(gaussian_logpdf(x, mu, 0.0), std::domain_error);
}

TEST_CASE("exp(logpdf) integrates to 1 (trapezoid rule)") {
  Grid x(1, 1, 1), mu(1, 1, 1);
  mu.at(0, 0, 0) = 0.25;
  const double s = 0.37;
  const double lo = 0.25 - 10.0 * s, hi = 0.25 + 10.0 * s;
  const int n = 20000;
  const double dx = (hi - lo) / n;
  double integral = 0.0;
  for (int i = 0; i <= n; ++i) {
    x.at(0, 0, 0) = lo + i * dx;
    double p = std::exp(gaussian_logpdf(x, mu, s).at(0, 0, 0));
    integral += (i == 0 || i == n) ? 0.5 * p : p;
  }
  integral *= dx;
  CHECK(integral == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("seeded_gaussian is reproducible and shape-correct") {
  RngState a(3, streams::kRollout);
  RngState b(3, streams::kRollout);
  Grid ga = seeded_gaussian(a, 4, 5, 3);
  Grid gb = seeded_gaussian(b, 4, 5, 3);
  CHECK(ga.data == gb.data);
  CHECK(ga.height == 4);
  CHECK(ga.width == 5);
  CHECK(ga.channels == 3);
}
