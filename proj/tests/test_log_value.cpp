#include <bkk/log_value.hpp>

#include <gtest/gtest.h>

#include <vector>

using namespace bkk;

TEST(LogValue, RejectsNanAndPosInf) {
  EXPECT_THROW(LogValue(std::nan("")), std::domain_error);
  EXPECT_THROW(LogValue(std::numeric_limits<double>::infinity()), std::domain_error);
  EXPECT_NO_THROW(LogValue(kNegInf));
  EXPECT_TRUE(LogValue::zero().is_zero());
}

TEST(LogValue, ArithmeticInLogSpace) {
  const auto a = LogValue::from_linear(3.0), b = LogValue::from_linear(4.0);
  EXPECT_NEAR((a * b).linear(), 12.0, 1e-14);
  EXPECT_NEAR((b / a).linear(), 4.0 / 3.0, 1e-15);
  EXPECT_THROW(a / LogValue::zero(), std::domain_error);
  EXPECT_LT(a, b);
}

TEST(LogValue, Log1mexpBothBranches) {
  for (double a : {1e-300, 1e-20, 1e-8, 0.3, 0.69, 0.7, 2.0, 40.0, 800.0}) {
    const double expect = std::log(-std::expm1(-a));
    EXPECT_NEAR(log1mexp(a), expect, 1e-14 * std::max(1.0, std::abs(expect))) << a;
  }
  EXPECT_EQ(log1mexp(0.0), kNegInf);
  EXPECT_TRUE(std::isnan(log1mexp(-1.0)));
}

TEST(LogValue, AddSubSum) {
  EXPECT_NEAR(log_add_exp(std::log(2.0), std::log(3.0)), std::log(5.0), 1e-15);
  EXPECT_EQ(log_add_exp(kNegInf, 1.5), 1.5);
  EXPECT_NEAR(log_sub_exp(std::log(5.0), std::log(3.0)), std::log(2.0), 1e-15);
  EXPECT_EQ(log_sub_exp(1.0, 1.0), kNegInf);
  EXPECT_TRUE(std::isnan(log_sub_exp(1.0, 2.0)));
  // far beyond the double range
  EXPECT_NEAR(log_add_exp(-2000.0, -2000.0), -2000.0 + std::log(2.0), 1e-12);
  std::vector<double> xs{1000.0, 1000.0, 1000.0, kNegInf};
  EXPECT_NEAR(log_sum_exp(xs), 1000.0 + std::log(3.0), 1e-12);
  EXPECT_EQ(log_sum_exp(std::vector<double>{}), kNegInf);
}
