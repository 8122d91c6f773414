#include <doctest.h>

#include <cmath>
#include <vector>

#include "dwm/rng.hpp"

using namespace dwm;

TEST_CASE("streams are bit-reproducible") {
  RngStream a(42, 3, Purpose::kPolicyNoise, 17);
  RngStream b(42, 3, Purpose::kPolicyNoise, 17);
  for (int i = 0; i < 1000; ++i) CHECK(a.bits() == b.bits());
}

TEST_CASE("distinct stream ids diverge") {
  RngStream a(42, 0, Purpose::kPolicyNoise, 0);
  RngStream b(42, 1, Purpose::kPolicyNoise, 0);
  RngStream c(42, 0, Purpose::kLatentNoise, 0);
  RngStream d(43, 0, Purpose::kPolicyNoise, 0);
  RngStream e(42, 0, Purpose::kPolicyNoise, 1);
  int equal_ab = 0, equal_ac = 0, equal_ad = 0, equal_ae = 0;
  RngStream a2(42, 0, Purpose::kPolicyNoise, 0);
  for (int i = 0; i < 64; ++i) {
    const std::uint64_t x = a.bits();
    equal_ab += x == b.bits();
    equal_ac += x == c.bits();
    equal_ad += x == d.bits();
    equal_ae += x == e.bits();
    (void)a2;
  }
  CHECK(equal_ab == 0);
  CHECK(equal_ac == 0);
  CHECK(equal_ad == 0);
  CHECK(equal_ae == 0);
}

TEST_CASE("uniform moments") {
  RngStream rng(1, 0, Purpose::kGeneric);
  const int n = 100000;
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    sum += u;
    sum_sq += u * u;
  }
  CHECK(sum / n == doctest::Approx(0.5).epsilon(0.01));
  CHECK(sum_sq / n == doctest::Approx(1.0 / 3.0).epsilon(0.01));
}

TEST_CASE("normal moments and complex power") {
  RngStream rng(2, 0, Purpose::kGeneric);
  const int n = 100000;
  double mean = 0.0, var = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    mean += z;
    var += z * z;
  }
  CHECK(std::abs(mean / n) < 0.02);
  CHECK(var / n == doctest::Approx(1.0).epsilon(0.02));

  double p = 0.0;
  for (int i = 0; i < n; ++i) p += std::norm(rng.cnormal());
  CHECK(p / n == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("statistical independence of parallel streams") {
  RngStream a(9, 0, Purpose::kFadingStep, 5);
  RngStream b(9, 1, Purpose::kFadingStep, 5);
  const int n = 100000;
  double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
  for (int i = 0; i < n; ++i) {
    const double x = a.normal(), y = b.normal();
    sa += x;
    sb += y;
    saa += x * x;
    sbb += y * y;
    sab += x * y;
  }
  const double corr = (sab / n - sa / n * sb / n) /
                      std::sqrt((saa / n - sa / n * sa / n) * (sbb / n - sb / n * sb / n));
  CHECK(std::abs(corr) < 0.02);
}

TEST_CASE("uniform_int covers its range uniformly") {
  RngStream rng(3, 0, Purpose::kReplaySample);
  const int bins = 50, n = 10000;
  std::vector<int> counts(bins, 0);
  for (int i = 0; i < n; ++i) ++counts[rng.uniform_int(bins)];
  double chi2 = 0.0;
  const double expect = static_cast<double>(n) / bins;
  for (int c : counts) chi2 += (c - expect) * (c - expect) / expect;
  // chi-square critical value at p = 0.01 with 49 dof
  CHECK(chi2 < 74.919);
}
