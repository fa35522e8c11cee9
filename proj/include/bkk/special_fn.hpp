#ifndef BKK_SPECIAL_FN_HPP
#define BKK_SPECIAL_FN_HPP

// Modified Bessel function of the first kind for real order mu > -1 and
// positive real argument, evaluated in log scale.
//
// Two branches:
//   z <  max(30, 2 mu^2)  power series, summed with periodic rescaling so that
//                         terms of size e^z never overflow;
//   z >= max(30, 2 mu^2)  exponentially scaled Hankel expansion
//                         e^{-z} I_mu(z) ~ (2 pi z)^{-1/2} sum_k (-1)^k a_k(mu) / z^k.
// Above the crossover the expansion ratio (4mu^2 - (2k-1)^2) / (8kz) starts
// below 1/4, so the truncated sum reaches double precision in a few terms.

#include <bkk/errors.hpp>
#include <bkk/log_value.hpp>

#include <boost/math/special_functions/gamma.hpp>

#include <cmath>
#include <vector>

namespace bkk {

class BesselOrder {
public:
  explicit BesselOrder(double mu) : mu_(mu) {
    if (!std::isfinite(mu) || !(mu > -1.0))
      detail::domain_fail("bessel order must be finite and > -1");
  }
  double value() const { return mu_; }

private:
  double mu_;
};

namespace detail {

inline double series_crossover(double mu) { return std::max(30.0, 2.0 * mu * mu); }

// log of sum_k (z^2/4)^k / (k! (mu+1)_k), the series of
// I_mu(z) Gamma(mu+1) (z/2)^{-mu}.
inline double log_bessel_series_tail(double mu, double z) {
  constexpr double kRescale = 1e250;
  constexpr double kLogRescale = 575.64627324851142;  // log(1e250)
  const double q = 0.25 * z * z;
  double term = 1.0;
  double sum = 1.0;
  double log_scale = 0.0;
  for (long k = 1; k < 50'000'000; ++k) {
    const double kd = static_cast<double>(k);
    term *= q / (kd * (kd + mu));
    sum += term;
    if (sum > kRescale) {
      sum /= kRescale;
      term /= kRescale;
      log_scale += kLogRescale;
    }
    // Past the peak term, terms decay faster than geometrically.
    if (kd * (kd + mu) > q && term < 1e-17 * sum) break;
  }
  return log_scale + std::log(sum);
}

// log of the truncated Hankel sum; the caller adds -0.5*log(2 pi z).
inline double log_hankel_sum(double mu, double z) {
  const double four_mu2 = 4.0 * mu * mu;
  double term = 1.0;
  double sum = 1.0;
  for (int k = 1; k < 200; ++k) {
    const double odd = 2.0 * k - 1.0;
    const double next = -term * (four_mu2 - odd * odd) / (8.0 * k * z);
    if (next == 0.0) break;
    if (std::abs(next) > std::abs(term)) break;  // asymptotic divergence
    term = next;
    sum += term;
    if (std::abs(term) < 1e-17 * std::abs(sum)) break;
  }
  return std::log(sum);
}

inline void check_bessel_args(double z) {
  if (!(z > 0.0) || !std::isfinite(z)) domain_fail("bessel argument must be positive and finite");
}

}  // namespace detail

/// log I_mu(z) - z, the exponentially scaled value. Finite for all z > 0.
inline double log_bessel_i_scaled(BesselOrder order, double z) {
  detail::check_bessel_args(z);
  const double mu = order.value();
  if (z < detail::series_crossover(mu)) {
    return mu * std::log(0.5 * z) - boost::math::lgamma(mu + 1.0) +
           detail::log_bessel_series_tail(mu, z) - z;
  }
  return -0.5 * (kLogTwoPi + std::log(z)) + detail::log_hankel_sum(mu, z);
}

/// log I_mu(z).
inline LogValue log_bessel_i(BesselOrder order, double z) {
  detail::check_bessel_args(z);
  const double mu = order.value();
  if (z < detail::series_crossover(mu)) {
    return LogValue(mu * std::log(0.5 * z) - boost::math::lgamma(mu + 1.0) +
                    detail::log_bessel_series_tail(mu, z));
  }
  return LogValue(z + (-0.5 * (kLogTwoPi + std::log(z)) + detail::log_hankel_sum(mu, z)));
}

/// log(I_mu(z_num) / I_mu(z_den)).
inline double log_bessel_i_ratio(BesselOrder order, double z_num, double z_den) {
  detail::check_bessel_args(z_num);
  detail::check_bessel_args(z_den);
  if (z_num == z_den) return 0.0;
  return (log_bessel_i_scaled(order, z_num) - log_bessel_i_scaled(order, z_den)) + (z_num - z_den);
}

/// log(I_mu(z) / z^mu). Nondecreasing in z.
inline double log_scaled_bessel_power(BesselOrder order, double z) {
  detail::check_bessel_args(z);
  const double mu = order.value();
  if (z < detail::series_crossover(mu)) {
    return -mu * std::log(2.0) - boost::math::lgamma(mu + 1.0) + detail::log_bessel_series_tail(mu, z);
  }
  return z - 0.5 * (kLogTwoPi + std::log(z)) + detail::log_hankel_sum(mu, z) - mu * std::log(z);
}

// g(z) = z * (1 - I_{nu+1}(z) / I_nu(z)), tabulated in log z.
//
// Goes from z (z -> 0) to nu + 1/2 (z -> inf). The killed-over-free ratio
// equation needs it at every node and time step, so it is precomputed on a
// cubic Hermite table with analytic slopes.
class BesselRatioComplement {
public:
  explicit BesselRatioComplement(double nu, double step = 0.005) : nu_(nu), step_(step) {
    if (!(nu >= 0.0)) detail::domain_fail("BesselRatioComplement: order must be >= 0");
    const double a1_lo = (4.0 * nu * nu - 1.0) / 8.0;
    const double a1_hi = (4.0 * (nu + 1) * (nu + 1) - 1.0) / 8.0;
    const double a2_lo = (4.0 * nu * nu - 1.0) * (4.0 * nu * nu - 9.0) / 128.0;
    const double a2_hi = (4.0 * (nu + 1) * (nu + 1) - 1.0) * (4.0 * (nu + 1) * (nu + 1) - 9.0) / 128.0;
    limit_ = nu + 0.5;
    inv_coeff_ = a2_hi - a2_lo - a1_lo * limit_;
    (void)a1_hi;

    const auto n = static_cast<std::size_t>(std::ceil((kUHi - kULo) / step_)) + 1;
    g_.resize(n);
    dg_.resize(n);
    const BesselOrder lo(nu), hi(nu + 1.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double u = kULo + step_ * static_cast<double>(i);
      const double z = std::exp(u);
      const double d = log_bessel_i_scaled(hi, z) - log_bessel_i_scaled(lo, z);
      const double rho = std::exp(d);
      const double one_minus_rho = -std::expm1(d);
      const double drho = 1.0 - (2.0 * nu + 1.0) * rho / z - rho * rho;
      g_[i] = z * one_minus_rho;
      dg_[i] = z * (one_minus_rho - z * drho);
    }
  }

  double nu() const { return nu_; }

  // Takes log z; the caller usually has it for free.
  double operator()(double log_z) const {
    if (log_z <= kULo) {
      const double z = std::exp(log_z);
      return z * (1.0 - z / (2.0 * nu_ + 2.0));
    }
    if (log_z >= kUHi) return limit_ - inv_coeff_ * std::exp(-log_z);
    const double pos = (log_z - kULo) / step_;
    auto i = static_cast<std::size_t>(pos);
    if (i + 1 >= g_.size()) i = g_.size() - 2;
    const double s = pos - static_cast<double>(i);
    const double s2 = s * s, s3 = s2 * s;
    const double h00 = 2 * s3 - 3 * s2 + 1, h10 = s3 - 2 * s2 + s;
    const double h01 = -2 * s3 + 3 * s2, h11 = s3 - s2;
    return h00 * g_[i] + h10 * step_ * dg_[i] + h01 * g_[i + 1] + h11 * step_ * dg_[i + 1];
  }

private:
  static constexpr double kULo = -13.815510557964274;  // log 1e-6
  static constexpr double kUHi = 11.512925464970229;   // log 1e5
  double nu_;
  double step_;
  double limit_ = 0.5;
  double inv_coeff_ = 0.0;
  std::vector<double> g_;
  std::vector<double> dg_;
};

}  // namespace bkk

#endif  // BKK_SPECIAL_FN_HPP
