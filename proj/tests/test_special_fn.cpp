#include <bkk/special_fn.hpp>

#include <boost/math/special_functions/gamma.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>
#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

using namespace bkk;
using Big = boost::multiprecision::cpp_bin_float_50;

namespace {

// Power series of I_mu summed in 50-digit arithmetic, no asymptotics, no rescaling.
Big oracle_log_i_big(double mu, double z) {
  const Big bz(z), bmu(mu);
  const Big q = bz * bz / 4;
  Big term = 1;
  Big sum = 1;
  for (int k = 1; k < 200000; ++k) {
    term *= q / (Big(k) * (Big(k) + bmu));
    sum += term;
    if (Big(k) * (Big(k) + bmu) > q && term < sum * Big("1e-40")) break;
  }
  const Big lg = boost::math::lgamma(bmu + 1);
  return bmu * log(bz / 2) - lg + log(sum);
}

double oracle_log_i(double mu, double z) { return static_cast<double>(oracle_log_i_big(mu, z)); }

std::vector<double> log_grid(double lo, double hi, int n) {
  std::vector<double> out;
  for (int i = 0; i < n; ++i) out.push_back(lo * std::pow(hi / lo, double(i) / (n - 1)));
  return out;
}

}  // namespace

TEST(SpecialFn, DomainErrors) {
  EXPECT_THROW(BesselOrder(-1.0), std::domain_error);
  EXPECT_THROW(BesselOrder(std::nan("")), std::domain_error);
  EXPECT_THROW(log_bessel_i(BesselOrder(1.0), 0.0), std::domain_error);
  EXPECT_THROW(log_bessel_i(BesselOrder(1.0), -2.0), std::domain_error);
  EXPECT_THROW(log_bessel_i_ratio(BesselOrder(1.0), 1.0, 0.0), std::domain_error);
  EXPECT_THROW(log_scaled_bessel_power(BesselOrder(1.0), -1.0), std::domain_error);
}

TEST(SpecialFn, AgreesWithExtendedPrecisionSeries) {
  for (double mu : {0.1, 0.5, 1.0, 2.5, 10.0}) {
    for (double z : log_grid(1e-8, 1e4, 49)) {
      const double got = log_bessel_i(BesselOrder(mu), z).log();
      const double want = oracle_log_i(mu, z);
      EXPECT_LE(std::abs(std::expm1(got - want)), 1e-12) << "mu=" << mu << " z=" << z;
    }
  }
}

TEST(SpecialFn, CrossoverBandIsSeamless) {
  for (double mu : {0.0, 0.3, 3.9, 4.0, 7.5, 20.0, 50.0}) {
    const double zc = std::max(30.0, 2.0 * mu * mu);
    for (double f : {0.97, 0.999999, 1.0, 1.000001, 1.03, 1.5}) {
      const double z = zc * f;
      const double got = log_bessel_i(BesselOrder(mu), z).log();
      EXPECT_LE(std::abs(std::expm1(got - oracle_log_i(mu, z))), 1e-12) << mu << " " << z;
    }
  }
}

TEST(SpecialFn, HalfOrderClosedForm) {
  // I_{1/2}(z) = sqrt(2/(pi z)) sinh z
  EXPECT_NEAR(log_bessel_i(BesselOrder(0.5), 1.0).log(), std::log(std::sqrt(2.0 / M_PI) * std::sinh(1.0)), 1e-14);
  for (double z : {1e-6, 0.2, 3.0, 29.9, 30.0, 55.0, 700.0, 5e5}) {
    const double want = 0.5 * std::log(2.0 / (M_PI * z)) + z + std::log(-std::expm1(-2.0 * z)) - std::log(2.0);
    EXPECT_NEAR(log_bessel_i(BesselOrder(0.5), z).log(), want, 1e-13 * std::max(1.0, std::abs(want))) << z;
  }
}

TEST(SpecialFn, SmallArgumentLimit) {
  // I_1(z) ~ z/2
  const double z = 1e-9;
  EXPECT_NEAR(log_bessel_i(BesselOrder(1.0), z).log() - std::log(z / 2), 0.0, 1e-15);
  // leading coefficient of I_{1/2}(z)/z^{1/2}
  EXPECT_NEAR(log_scaled_bessel_power(BesselOrder(0.5), 1e-12),
              std::log(std::pow(2.0, -0.5) / std::tgamma(1.5)), 1e-14);
}

TEST(SpecialFn, LargeArgumentNoOverflow) {
  const double v = log_bessel_i(BesselOrder(2.0), 700.0).log();
  EXPECT_TRUE(std::isfinite(v));
  EXPECT_NEAR(v, 700.0 - 0.5 * std::log(2 * M_PI * 700.0), 0.01);
  EXPECT_LE(std::abs(std::expm1(v - oracle_log_i(2.0, 700.0))), 1e-12);
  EXPECT_TRUE(std::isfinite(log_bessel_i(BesselOrder(50.0), 1e6).log()));
  EXPECT_NEAR(log_bessel_i_scaled(BesselOrder(1.0), 1e6), -0.5 * std::log(2 * M_PI * 1e6), 1e-6);
}

TEST(SpecialFn, RatioExamples) {
  EXPECT_EQ(log_bessel_i_ratio(BesselOrder(0.5), 3.0, 3.0), 0.0);
  const double r = log_bessel_i_ratio(BesselOrder(1.0), 2.0, 1.0);
  EXPECT_GE(r, -std::log(2.0) + 1.0);
  EXPECT_LE(r, std::log(2.0) + 1.0);
  EXPECT_NEAR(log_bessel_i_ratio(BesselOrder(0.5), 5.0, 2.0),
              std::log(std::sinh(5.0) / std::sinh(2.0)) - 0.5 * std::log(2.5), 1e-13);
}

TEST(SpecialFn, BesselRatioBoundsOnRandomPairs) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> lz(std::log(1e-6), std::log(1e4));
  std::uniform_real_distribution<double> um(-0.5, 50.0);
  for (int i = 0; i < 4000; ++i) {
    double x = std::exp(lz(rng)), y = std::exp(lz(rng));
    if (x > y) std::swap(x, y);
    const double mu = std::max(um(rng), -0.4999);
    const double d = log_bessel_i_ratio(BesselOrder(mu), y, x);
    EXPECT_LE(d, mu * std::log(y / x) + (y - x) + 1e-10) << mu << " " << x << " " << y;
    if (mu >= 0.5) EXPECT_GE(d, -mu * std::log(y / x) + (y - x) - 1e-10) << mu << " " << x << " " << y;
  }
}

TEST(SpecialFn, ScaledPowerMonotoneAndConsistent) {
  for (double mu : {-0.7, 0.1, 1.0, 3.0, 12.0, 50.0}) {
    double prev = -1e300;
    for (double z : log_grid(1e-8, 1e6, 400)) {
      const double v = log_scaled_bessel_power(BesselOrder(mu), z);
      EXPECT_GE(v, prev - 1e-12 * std::abs(v)) << mu << " " << z;
      prev = v;
    }
  }
  EXPECT_NEAR(log_scaled_bessel_power(BesselOrder(3.0), 10.0),
              log_bessel_i(BesselOrder(3.0), 10.0).log() - 3.0 * std::log(10.0), 1e-12);
  EXPECT_LT(log_scaled_bessel_power(BesselOrder(1.0), 1.0), log_scaled_bessel_power(BesselOrder(1.0), 2.0));
}

TEST(SpecialFn, NegativeOrderAboveMinusOne) {
  // I_{-1/2}(z) = sqrt(2/(pi z)) cosh z
  for (double z : {1e-4, 0.5, 4.0, 40.0}) {
    const double want = 0.5 * std::log(2.0 / (M_PI * z)) + std::log(std::cosh(z));
    EXPECT_NEAR(log_bessel_i(BesselOrder(-0.5), z).log(), want, 1e-13 * std::max(1.0, std::abs(want)));
  }
}

TEST(SpecialFn, RatioComplementTable) {
  for (double nu : {0.25, 0.5, 1.0, 2.5}) {
    const BesselRatioComplement g(nu);
    for (double z : log_grid(1e-9, 2e4, 200)) {
      const Big rho = exp(oracle_log_i_big(nu + 1, z) - oracle_log_i_big(nu, z));
      const double want = static_cast<double>(Big(z) * (1 - rho));
      EXPECT_NEAR(g(std::log(z)), want, 1e-9 * std::max(want, 1e-300) + 1e-14) << nu << " " << z;
    }
    // I_{3/2}/I_{1/2} = coth z - 1/z, so g -> 1 - 1/(2z) + ... at nu = 1/2
    EXPECT_NEAR(g(std::log(1e7)), nu + 0.5, 1e-6);
  }
  const BesselRatioComplement half(0.5);
  // 1 - 2z e^{-2z} / (1 - e^{-2z}) is 1 to double precision here
  for (double z : {2e5, 1e6, 1e9}) EXPECT_DOUBLE_EQ(half(std::log(z)), 1.0);
  const BesselRatioComplement zero_order(0.0);
  // g = 1/2 + 1/(8z) + O(z^-2) for nu = 0
  EXPECT_NEAR(zero_order(std::log(1e6)), 0.5 + 1.0 / 8e6, 1e-12);
}
