#ifndef BKK_KERNELS_HPP
#define BKK_KERNELS_HPP

// Closed-form kernels of the Bessel process and the two-sided envelopes they
// are compared against. Everything is returned as a natural log.
//
// Index mu relates to dimension by delta = 2 mu + 2. The killed kernel
// p_a(t,x,y) is the Lebesgue density of the process started at x, absorbed on
// first visit to a, evaluated at y.

#include <bkk/errors.hpp>
#include <bkk/log_value.hpp>
#include <bkk/special_fn.hpp>

#include <cmath>

namespace bkk {

struct KernelQuery {
  double t = 1.0;
  double x = 2.0;
  double y = 2.0;
  double a = 1.0;

  void validate() const {
    detail::require(std::isfinite(t) && t > 0.0, "t must be positive");
    detail::require(std::isfinite(a) && a > 0.0, "a must be positive");
    detail::require(std::isfinite(x) && x > a, "x must exceed a");
    detail::require(std::isfinite(y) && y > a, "y must exceed a");
  }
};

struct Envelope {
  LogValue log_val;
};

namespace detail {

inline void require_index(double mu) {
  require(std::isfinite(mu), "mu must be finite");
  require(mu != 0.0, "mu must be nonzero");
}

inline void require_unit_barrier(const KernelQuery& q) {
  q.validate();
  require(q.a == 1.0, "query must use the unit barrier a = 1");
}

inline double min0(double v) { return v < 0.0 ? v : 0.0; }

}  // namespace detail

/// Free transition density
///   p(t,x,y) = (1/t) (y/x)^mu y exp(-(x^2+y^2)/2t) I_|mu|(xy/t).
inline LogValue log_free_kernel(double mu, double t, double x, double y) {
  detail::require_index(mu);
  detail::require(std::isfinite(t) && t > 0.0, "t must be positive");
  detail::require(std::isfinite(x) && x > 0.0, "x must be positive");
  detail::require(std::isfinite(y) && y > 0.0, "y must be positive");
  const double z = x * y / t;
  const double d = x - y;
  return LogValue(-std::log(t) + mu * std::log(y / x) + std::log(y) - d * d / (2.0 * t) +
                  log_bessel_i_scaled(BesselOrder(std::abs(mu)), z));
}

inline LogValue log_free_kernel(double mu, const KernelQuery& q) { return log_free_kernel(mu, q.t, q.x, q.y); }

/// Density of the first passage to 1 at index 1/2.
inline LogValue log_half_hitting_density(double x, double s) {
  detail::require(std::isfinite(x) && x > 1.0, "x must exceed 1");
  detail::require(std::isfinite(s) && s > 0.0, "s must be positive");
  const double c = x - 1.0;
  return LogValue(std::log(c / x) - 0.5 * (kLogTwoPi + 3.0 * std::log(s)) - c * c / (2.0 * s));
}

/// H(t,a,b) = int_0^t (t-s)^{-1/2} s^{-3/2} exp(-a/2s) exp(-b/2(t-s)) ds
///          = sqrt(2 pi/(t a)) exp(-(sqrt a + sqrt b)^2 / 2t).
inline LogValue log_H(double t, double a_param, double b_param) {
  detail::require(t > 0.0 && a_param > 0.0 && b_param > 0.0, "H arguments must be positive");
  const double s = std::sqrt(a_param) + std::sqrt(b_param);
  return LogValue(0.5 * (kLogTwoPi - std::log(t) - std::log(a_param)) - s * s / (2.0 * t));
}

/// Killed kernel at index 1/2 and barrier 1 (Brownian motion killed at 1, h-transformed).
inline LogValue log_half_killed_kernel(const KernelQuery& q) {
  detail::require_unit_barrier(q);
  const double d = q.x - q.y;
  return LogValue(-0.5 * (kLogTwoPi + std::log(q.t)) + std::log(q.y / q.x) - d * d / (2.0 * q.t) +
                  log1mexp(2.0 * (q.x - 1.0) * (q.y - 1.0) / q.t));
}

/// Hunt correction r = p - p_1 at index 1/2 and barrier 1.
inline LogValue log_half_r(const KernelQuery& q) {
  detail::require_unit_barrier(q);
  const double s = q.x + q.y - 2.0;
  return LogValue(-0.5 * (kLogTwoPi + std::log(q.t)) + std::log(q.y / q.x) - s * s / (2.0 * q.t) +
                  log1mexp(2.0 * (q.x + q.y - 1.0) / q.t));
}

/// [1 ^ (x-a)(y-a)/t] (1 ^ xy/t)^{|mu|-1/2} (y/x)^{mu+1/2} t^{-1/2} exp(-(x-y)^2/2t)
inline Envelope log_envelope(double mu, const KernelQuery& q) {
  detail::require_index(mu);
  q.validate();
  const double d = q.x - q.y;
  const double v = detail::min0(std::log((q.x - q.a) * (q.y - q.a) / q.t)) +
                   (std::abs(mu) - 0.5) * detail::min0(std::log(q.x * q.y / q.t)) +
                   (mu + 0.5) * std::log(q.y / q.x) - 0.5 * std::log(q.t) - d * d / (2.0 * q.t);
  return Envelope{LogValue(v)};
}

/// Two-sided estimate of the free kernel:
///   (1 ^ xy/t)^{|mu|+1/2} (y/x)^{mu+1/2} t^{-1/2} exp(-(x-y)^2/2t).
inline LogValue log_free_envelope(double mu, double t, double x, double y) {
  detail::require_index(mu);
  const double d = x - y;
  return LogValue((std::abs(mu) + 0.5) * detail::min0(std::log(x * y / t)) + (mu + 0.5) * std::log(y / x) -
                  0.5 * std::log(t) - d * d / (2.0 * t));
}

/// Boundary factor (1 ^ (x-a)(y-a)/t)(1 v t/xy) describing p_a / p.
inline double log_boundary_factor(const KernelQuery& q) {
  q.validate();
  return detail::min0(std::log((q.x - q.a) * (q.y - q.a) / q.t)) - detail::min0(std::log(q.x * q.y / q.t));
}

/// (x-1)(1 ^ x^{-2mu}) s^{-3/2} e^{-(x-1)^2/2s} x^{2|mu|-1} / (s^{|mu|-1/2} + x^{|mu|-1/2})
inline LogValue log_hitting_envelope(double mu, double x, double s) {
  detail::require_index(mu);
  detail::require(std::isfinite(x) && x > 1.0, "x must exceed 1");
  detail::require(std::isfinite(s) && s > 0.0, "s must be positive");
  const double m = std::abs(mu);
  const double lx = std::log(x), ls = std::log(s);
  const double c = x - 1.0;
  return LogValue(std::log(c) + detail::min0(-2.0 * mu * lx) - 1.5 * ls - c * c / (2.0 * s) +
                  (2.0 * m - 1.0) * lx - log_add_exp((m - 0.5) * ls, (m - 0.5) * lx));
}

/// (x-1)/(sqrt(x ^ t) + x - 1) * 1/(t^mu + x^{2mu}), evaluated as printed.
///
/// For mu > 0 this has the size of P(t < T < inf): it tends to x^{-2mu} as
/// t -> 0 and never approaches the escape probability 1 - x^{-2mu}. The
/// survival probability itself is described by log_survival_band.
inline LogValue log_survival_envelope(double mu, double x, double t) {
  detail::require_index(mu);
  detail::require(std::isfinite(x) && x > 1.0, "x must exceed 1");
  detail::require(std::isfinite(t) && t > 0.0, "t must be positive");
  const double c = x - 1.0;
  return LogValue(std::log(c) - std::log(std::sqrt(std::min(x, t)) + c) -
                  log_add_exp(mu * std::log(t), 2.0 * mu * std::log(x)));
}

/// Two-sided estimate of P_x(T_1 > t) itself:
///   mu > 0: envelope + (1 - x^{-2mu})  (finite-time hits plus escape)
///   mu < 0: x^{2|mu|} envelope(|mu|)   (hitting densities differ by x^{2|mu|})
inline LogValue log_survival_band(double mu, double x, double t) {
  const double m = std::abs(mu);
  const double env = log_survival_envelope(m, x, t).log();
  if (mu > 0.0) return LogValue(log_add_exp(env, log1mexp(2.0 * mu * std::log(x))));
  return LogValue(env + 2.0 * m * std::log(x));
}

struct UnitBarrierQuery {
  KernelQuery q;
  double log_jacobian = 0.0;
};

/// p_a(t,x,y) = (1/a) p_1(t/a^2, x/a, y/a).
inline UnitBarrierQuery reduce_to_unit_barrier(double mu, const KernelQuery& q) {
  detail::require_index(mu);
  q.validate();
  if (q.a == 1.0) return {q, 0.0};
  const KernelQuery u{q.t / (q.a * q.a), q.x / q.a, q.y / q.a, 1.0};
  return {u, -std::log(q.a)};
}

/// log p_1^{(-mu)}(t,x,y) - log p_1^{(mu)}(t,x,y) = 2 mu log(x/y).
inline double reflect_index(double mu, const KernelQuery& q) {
  detail::require(std::isfinite(mu) && mu > 0.0, "reflect_index needs mu > 0");
  detail::require_unit_barrier(q);
  return 2.0 * mu * std::log(q.x / q.y);
}

// Index +-1/2 closed forms at an arbitrary barrier, reached through scaling and
// reflection. These are the reference values used wherever |mu| = 1/2.

inline bool is_half_index(double mu) { return std::abs(mu) == 0.5; }

inline LogValue log_half_family_killed(double mu, const KernelQuery& q) {
  detail::require(is_half_index(mu), "closed form needs |mu| = 1/2");
  const auto u = reduce_to_unit_barrier(mu, q);
  double v = log_half_killed_kernel(u.q).log() + u.log_jacobian;
  if (mu < 0.0) v += reflect_index(0.5, u.q);
  return LogValue(v);
}

/// P_x(T_1 > t). At mu = 1/2, P(T_1 <= t) = erfc((x-1)/sqrt(2t)) / x; at
/// mu = -1/2 it is the Brownian value erfc((x-1)/sqrt(2t)).
inline LogValue log_half_family_survival(double mu, double x, double t) {
  detail::require(is_half_index(mu), "closed form needs |mu| = 1/2");
  detail::require(std::isfinite(x) && x > 1.0, "x must exceed 1");
  detail::require(std::isfinite(t) && t > 0.0, "t must be positive");
  const double arg = (x - 1.0) / std::sqrt(2.0 * t);
  if (mu < 0.0) return LogValue(std::log(std::erf(arg)));
  return LogValue(std::log1p(-std::erfc(arg) / x));
}

inline LogValue log_half_family_hitting(double mu, double x, double s) {
  detail::require(is_half_index(mu), "closed form needs |mu| = 1/2");
  const double v = log_half_hitting_density(x, s).log();
  return LogValue(mu < 0.0 ? v + std::log(x) : v);
}

}  // namespace bkk

#endif  // BKK_KERNELS_HPP
