#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ocppe/math.hpp"
#include "ocppe/rng.hpp"

using namespace ocppe;

TEST_CASE("normal quantile matches high-precision reference values") {
  // Reference values computed with an independent inverse-CDF implementation.
  struct Ref { double p, z; double eps; };
  const Ref refs[] = {
      {0.5, 0.0, 1e-13},
      {0.975, 1.9599639845400536, 1e-13},
      {0.9, 1.2815515655446008, 1e-13},
      {0.99, 2.3263478740408408, 1e-13},
      {1e-9, -5.9978070150076865, 1e-13},
      {0.3, -0.5244005127080407, 1e-13},
      {0.9999999695, 5.415844790374024, 1e-13},
      {0.025, -1.9599639845400538, 1e-13},
      // the 1-p cancellation costs a few ulps this deep in the tail
      {0.999999999999, 7.0344869100478356, 1e-9},
      {0.0001, -3.71901648545568, 1e-13},
  };
  for (const auto& r : refs)
    CHECK(norm_quantile(r.p) == doctest::Approx(r.z).epsilon(r.eps));
  CHECK_THROWS_AS(norm_quantile(0.0), NumericError);
  CHECK_THROWS_AS(norm_quantile(1.0), NumericError);
}

TEST_CASE("normal pdf and cdf") {
  CHECK(norm_pdf(0.0) == doctest::Approx(0.3989422804014327).epsilon(1e-14));
  CHECK(norm_pdf(1.0) == doctest::Approx(0.24197072451914337).epsilon(1e-14));
  CHECK(norm_cdf(0.0) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(norm_cdf(1.959963984540054) == doctest::Approx(0.975).epsilon(1e-12));
}

TEST_CASE("quantile function inverts the cdf") {
  for (double p : {0.01, 0.1, 0.37, 0.5, 0.73, 0.9, 0.999})
    CHECK(norm_cdf(norm_quantile(p)) == doctest::Approx(p).epsilon(1e-12));
}

TEST_CASE("rng streams are deterministic and independent of construction order") {
  Rng a(42, 7), b(42, 7), c(42, 8);
  for (int i = 0; i < 100; ++i) {
    const auto va = a.next();
    CHECK(va == b.next());
  }
  bool differs = false;
  Rng a2(42, 7);
  for (int i = 0; i < 10; ++i)
    if (a2.next() != c.next()) differs = true;
  CHECK(differs);
}

TEST_CASE("rng normal moments") {
  Rng rng(123);
  const int n = 200000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    s += z;
    s2 += z * z;
  }
  const double mean = s / n;
  const double var = s2 / n - mean * mean;
  CHECK(std::abs(mean) < 0.01);
  CHECK(var == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("multiplier weights have mean zero and unit variance") {
  Rng rng(99);
  for (int kind = 0; kind < 2; ++kind) {
    double s = 0, s2 = 0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
      const double z = kind == 0 ? rng.rademacher() : rng.mammen();
      s += z;
      s2 += z * z;
    }
    CHECK(std::abs(s / n) < 0.01);
    CHECK(s2 / n == doctest::Approx(1.0).epsilon(0.02));
  }
}

TEST_CASE("index validation") {
  CHECK_NOTHROW(IndexU(0.2, 0.3));
  CHECK_NOTHROW(IndexU(0.2, 0.21));
  CHECK_THROWS_AS(IndexU(0.3, 0.3), ConfigError);
  CHECK_THROWS_AS(IndexU(0.3, 0.305), ConfigError);  // below the 0.01 floor
  CHECK_THROWS_AS(IndexU(0.5, 0.2), ConfigError);
  CHECK_THROWS_AS(IndexU(0.0, 0.5), ConfigError);
  CHECK_THROWS_AS(IndexU(0.5, 1.0), ConfigError);
}

TEST_CASE("uniform stays inside the open interval") {
  Rng rng(7);
  for (int i = 0; i < 100000; ++i) {
    const double u = rng.uniform();
    CHECK(u > 0.0);
    CHECK(u < 1.0);
  }
}
