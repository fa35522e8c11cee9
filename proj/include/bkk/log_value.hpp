#ifndef BKK_LOG_VALUE_HPP
#define BKK_LOG_VALUE_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>

namespace bkk {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kLogTwoPi = 1.8378770664093454835606594728112;
inline constexpr double kLn10 = 2.302585092994045684017991454684;

// Natural log of a nonnegative quantity. -inf encodes an exact zero; NaN and
// +inf are rejected at construction.
class LogValue {
public:
  constexpr LogValue() = default;
  explicit LogValue(double log_val) : v_(log_val) {
    if (std::isnan(log_val) || log_val == std::numeric_limits<double>::infinity())
      throw std::domain_error("LogValue: invalid log value " + std::to_string(log_val));
  }

  static LogValue zero() { return LogValue(kNegInf); }
  static LogValue from_linear(double x) {
    if (!(x >= 0.0)) throw std::domain_error("LogValue: negative linear value");
    return LogValue(std::log(x));
  }

  double log() const { return v_; }
  double linear() const { return std::exp(v_); }
  bool is_zero() const { return v_ == kNegInf; }

  friend LogValue operator*(LogValue a, LogValue b) { return LogValue(a.v_ + b.v_); }
  friend LogValue operator/(LogValue a, LogValue b) {
    if (b.is_zero()) throw std::domain_error("LogValue: division by zero");
    return LogValue(a.v_ - b.v_);
  }
  friend bool operator==(LogValue a, LogValue b) = default;
  friend auto operator<=>(LogValue a, LogValue b) = default;

private:
  double v_ = kNegInf;
};

// log(1 - exp(-a)) for a >= 0, accurate across the whole range.
inline double log1mexp(double a) {
  if (a < 0.0) return std::numeric_limits<double>::quiet_NaN();
  if (a == 0.0) return kNegInf;
  return a < 0.6931471805599453 ? std::log(-std::expm1(-a)) : std::log1p(-std::exp(-a));
}

inline double log_add_exp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

// log(exp(a) - exp(b)); requires a >= b. Returns -inf when a == b.
inline double log_sub_exp(double a, double b) {
  if (b == kNegInf) return a;
  if (b > a) return std::numeric_limits<double>::quiet_NaN();
  return a + log1mexp(a - b);
}

inline double log_sum_exp(std::span<const double> xs) {
  if (xs.empty()) return kNegInf;
  const double m = *std::max_element(xs.begin(), xs.end());
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

}  // namespace bkk

#endif  // BKK_LOG_VALUE_HPP
