#ifndef BKK_HUNT_HPP
#define BKK_HUNT_HPP

// Killed kernel through the first-passage decomposition
//   p_1(t,x,y) = p(t,x,y) - int_0^t q_x(s) p(t-s,1,y) ds,
// with the hitting density q_x supplied by a pluggable source.

#include <bkk/errors.hpp>
#include <bkk/kernels.hpp>
#include <bkk/log_value.hpp>
#include <bkk/quadrature.hpp>

#include <cmath>
#include <functional>
#include <limits>
#include <string>

namespace bkk {

enum class SourceKind { exact_half, pde_flux, monte_carlo };

inline const char* to_string(SourceKind k) {
  switch (k) {
    case SourceKind::exact_half: return "exact_half";
    case SourceKind::pde_flux: return "pde_flux";
    case SourceKind::monte_carlo: return "monte_carlo";
  }
  return "unknown";
}

struct HittingDensitySource {
  SourceKind kind = SourceKind::exact_half;
  double mu = 0.5;
  double x = 2.0;
  std::function<LogValue(double)> log_density;  // s -> log q_x(s)
};

/// Closed-form hitting density at index +-1/2.
inline HittingDensitySource exact_half_source(double x, double mu = 0.5) {
  detail::require(is_half_index(mu), "exact source needs |mu| = 1/2");
  detail::require(std::isfinite(x) && x > 1.0, "x must exceed 1");
  return {SourceKind::exact_half, mu, x, [x, mu](double s) { return log_half_family_hitting(mu, x, s); }};
}

namespace detail {

// Logistic coordinates reach s = t e^{-600}; beyond that every integrand here
// is below any representable contribution.
inline constexpr double kLogisticRange = 600.0;

inline LogQuadResult hunt_integral(double mu, const KernelQuery& q, const HittingDensitySource& src,
                                   const QuadratureConfig& cfg) {
  require_index(mu);
  require_unit_barrier(q);
  require(static_cast<bool>(src.log_density), "hitting source has no evaluator");
  require(std::abs(src.x - q.x) <= 1e-12 * q.x, "hitting source was built for a different start point");
  const double log_t = std::log(q.t);
  auto h = [&](double z) {
    const auto lp = logistic_point(log_t, z);
    const double lq = src.log_density(std::exp(lp.log_s)).log();
    if (lq == kNegInf) return kNegInf;
    return lq + log_free_kernel(mu, std::exp(lp.log_tau), 1.0, q.y).log() + lp.log_jacobian;
  };
  return integrate_log_peaked(h, -kLogisticRange, kLogisticRange, cfg);
}

}  // namespace detail

/// r_1(t,x,y) = int_0^t q_x(s) p(t-s,1,y) ds.
inline LogValue convolve_r(double mu, const KernelQuery& q, const HittingDensitySource& src,
                           const QuadratureConfig& cfg = {}) {
  return LogValue(detail::hunt_integral(mu, q, src, cfg).log_value);
}

struct HuntResult {
  LogValue log_p1;
  LogValue log_p;
  LogValue log_r;
  double rel_error_r = 0.0;          // quadrature estimate for r
  double cancellation_digits = 0.0;  // log10(p / p1)
  bool cancellation_warning = false;  // more than 10 digits cancelled; prefer another method
};

inline HuntResult killed_kernel_via_hunt(double mu, const KernelQuery& q, const HittingDensitySource& src,
                                         const QuadratureConfig& cfg = {}) {
  const auto r = detail::hunt_integral(mu, q, src, cfg);
  HuntResult out;
  out.log_p = log_free_kernel(mu, q);
  out.log_r = LogValue(r.log_value);
  out.rel_error_r = r.rel_error;
  const double lp = out.log_p.log(), lr = r.log_value;
  if (lr > lp) {
    const double excess = std::expm1(lr - lp);
    if (excess > std::max(10.0 * r.rel_error, 1e-12))
      throw NegativeDensity("hunt: r exceeds p by relative " + std::to_string(excess));
    out.log_p1 = LogValue::zero();
    out.cancellation_digits = std::numeric_limits<double>::infinity();
    out.cancellation_warning = true;
    return out;
  }
  const double lp1 = log_sub_exp(lp, lr);
  out.log_p1 = LogValue(lp1);
  out.cancellation_digits = lp1 == kNegInf ? std::numeric_limits<double>::infinity() : (lp - lp1) / kLn10;
  out.cancellation_warning = out.cancellation_digits > 10.0;
  return out;
}

/// Quadrature of the integral that defines H(t,a,b); compare with log_H.
inline LogValue verify_H_quadrature(double t, double a_param, double b_param, const QuadratureConfig& cfg = {}) {
  detail::require(t > 0.0 && a_param > 0.0 && b_param > 0.0, "H arguments must be positive");
  const double log_t = std::log(t);
  auto h = [&](double z) {
    const auto lp = logistic_point(log_t, z);
    const double s = std::exp(lp.log_s), tau = std::exp(lp.log_tau);
    return -0.5 * lp.log_tau - 1.5 * lp.log_s - a_param / (2.0 * s) - b_param / (2.0 * tau) + lp.log_jacobian;
  };
  return LogValue(integrate_log_peaked(h, -detail::kLogisticRange, detail::kLogisticRange, cfg).log_value);
}

/// int_0^inf q_x(s) ds; equals x^{-2mu} for mu > 0 and 1 for mu < 0.
inline LogValue hitting_mass(const HittingDensitySource& src, const QuadratureConfig& cfg = {}) {
  detail::require(static_cast<bool>(src.log_density), "hitting source has no evaluator");
  auto h = [&](double u) {
    const double lq = src.log_density(std::exp(u)).log();
    return lq == kNegInf ? kNegInf : lq + u;
  };
  return LogValue(integrate_log_peaked(h, -700.0, 700.0, cfg).log_value);
}

/// Hitting mass up to time t: P_x(T_1 <= t).
inline LogValue hitting_mass_until(const HittingDensitySource& src, double t, const QuadratureConfig& cfg = {}) {
  detail::require(static_cast<bool>(src.log_density), "hitting source has no evaluator");
  detail::require(t > 0.0, "t must be positive");
  const double lt = std::log(t);
  auto h = [&](double u) {
    const double lq = src.log_density(std::exp(u)).log();
    return lq == kNegInf ? kNegInf : lq + u;
  };
  return LogValue(integrate_log_peaked(h, -700.0, lt, cfg, lt).log_value);
}

}  // namespace bkk

#endif  // BKK_HUNT_HPP
