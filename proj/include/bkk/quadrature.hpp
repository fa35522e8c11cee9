#ifndef BKK_QUADRATURE_HPP
#define BKK_QUADRATURE_HPP

// Adaptive Gauss-Kronrod quadrature for integrands supplied as logarithms.
//
// Each panel is shifted by its own largest log value before exponentiating,
// so integrands like s^{-3/2} e^{-a/2s} with a/s in the thousands integrate
// without underflow. Panel values are carried as (shift, scaled value).

#include <bkk/errors.hpp>
#include <bkk/log_value.hpp>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

namespace bkk {

struct QuadratureConfig {
  double rel_tol = 1e-9;
  double abs_log_floor = -745.0;  // absolute error below e^floor is treated as zero
  int max_subdivisions = 2000;

  void validate() const {
    detail::require(rel_tol > 0.0 && rel_tol <= 1e-3, "rel_tol must lie in (0, 1e-3]");
    detail::require(max_subdivisions >= 16, "max_subdivisions must be >= 16");
  }
};

struct LogQuadResult {
  double log_value = kNegInf;
  double rel_error = 0.0;
  int panels = 0;
};

namespace detail {

struct Panel {
  double a = 0, b = 0;
  double shift = kNegInf;  // panel integral = e^shift * value, error = e^shift * error
  double value = 0;
  double error = 0;
  double log_error() const { return error > 0 ? shift + std::log(error) : kNegInf; }
  double log_value() const { return value > 0 ? shift + std::log(value) : kNegInf; }
};

template <class F>
Panel gk21_panel(F& log_f, double a, double b) {
  using GK = boost::math::quadrature::gauss_kronrod<double, 21>;
  using G = boost::math::quadrature::gauss<double, 10>;
  static const auto& xk = GK::abscissa();
  static const auto& wk = GK::weights();
  static const auto& wg = G::weights();

  const double c = 0.5 * (a + b), h = 0.5 * (b - a);
  double lp[11], lm[11];
  double m = kNegInf;
  for (std::size_t i = 0; i < xk.size(); ++i) {
    lp[i] = log_f(c + h * xk[i]);
    lm[i] = i == 0 ? lp[0] : log_f(c - h * xk[i]);
    if (std::isnan(lp[i]) || std::isnan(lm[i])) throw ConvergenceFailure("integrand returned NaN");
    m = std::max({m, lp[i], lm[i]});
  }
  Panel p{a, b};
  if (m == kNegInf) return p;
  double k = std::exp(lp[0] - m) * wk[0];
  double g = 0.0;
  for (std::size_t i = 1; i < xk.size(); ++i) {
    const double f2 = std::exp(lp[i] - m) + std::exp(lm[i] - m);
    k += f2 * wk[i];
    if (i & 1) g += f2 * wg[i / 2];
  }
  p.shift = m + std::log(h);
  p.value = k;
  p.error = std::max(std::abs(k - g), 4.0 * std::numeric_limits<double>::epsilon() * k);
  return p;
}

struct PanelOrder {
  bool operator()(const Panel& l, const Panel& r) const { return l.log_error() < r.log_error(); }
};

}  // namespace detail

/// log of int exp(log_f(u)) du over the union of [breaks[i], breaks[i+1]].
template <class F>
LogQuadResult integrate_log(F&& log_f, std::span<const double> breaks, const QuadratureConfig& cfg) {
  cfg.validate();
  if (breaks.size() < 2) detail::domain_fail("integrate_log needs at least two breakpoints");
  const detail::PanelOrder order;
  std::vector<detail::Panel> heap;  // max-heap on panel error
  std::vector<detail::Panel> done;  // panels too narrow to split further
  for (std::size_t i = 0; i + 1 < breaks.size(); ++i)
    if (breaks[i + 1] > breaks[i]) heap.push_back(detail::gk21_panel(log_f, breaks[i], breaks[i + 1]));
  std::make_heap(heap.begin(), heap.end(), order);

  double log_val = kNegInf, log_err = kNegInf;
  auto totals = [&] {
    double ref = kNegInf, eref = kNegInf;
    for (const auto* set : {&heap, &done})
      for (const auto& p : *set) {
        ref = std::max(ref, p.log_value());
        eref = std::max(eref, p.log_error());
      }
    if (ref == kNegInf) {
      log_val = kNegInf;
      log_err = eref;
      return;
    }
    double v = 0, e = 0;
    for (const auto* set : {&heap, &done})
      for (const auto& p : *set) {
        if (p.shift == kNegInf) continue;
        const double w = std::exp(p.shift - ref);
        v += p.value * w;
        e += p.error * w;
      }
    log_val = ref + std::log(v);
    log_err = e > 0 ? ref + std::log(e) : kNegInf;
  };
  auto converged = [&] {
    return (log_val > kNegInf && log_err <= log_val + std::log(cfg.rel_tol)) || log_err <= cfg.abs_log_floor;
  };

  int splits = 0;
  int until_check = 0;
  while (true) {
    if (until_check <= 0 || heap.empty()) {
      totals();
      if (converged() || heap.empty()) break;
      // each bisection removes one panel's error, so re-total less often as panels accumulate
      until_check = std::max<int>(1, static_cast<int>(heap.size()) / 16);
    }
    if (splits >= cfg.max_subdivisions) {
      totals();
      if (converged()) break;
      throw ConvergenceFailure("quadrature: relative error " + std::to_string(std::exp(log_err - log_val)) +
                               " after " + std::to_string(splits) + " subdivisions");
    }
    std::pop_heap(heap.begin(), heap.end(), order);
    const detail::Panel worst = heap.back();
    heap.pop_back();
    const double mid = 0.5 * (worst.a + worst.b);
    --until_check;
    if (!(mid > worst.a && mid < worst.b) || worst.b - worst.a < 1e-15 * std::max(1.0, std::abs(mid))) {
      done.push_back(worst);
      continue;
    }
    for (const auto& half : {detail::gk21_panel(log_f, worst.a, mid), detail::gk21_panel(log_f, mid, worst.b)}) {
      heap.push_back(half);
      std::push_heap(heap.begin(), heap.end(), order);
    }
    ++splits;
  }
  if (!converged())
    throw ConvergenceFailure("quadrature: relative error " + std::to_string(std::exp(log_err - log_val)) +
                             " above tolerance");
  const double rel = log_val == kNegInf ? 0.0 : std::exp(log_err - log_val);
  return {log_val, rel, static_cast<int>(heap.size() + done.size())};
}

/// Integral over the whole real line of exp(h(z)) for a smooth h with one
/// dominant bump and decaying tails, restricted to [z_min, z_max].
///
/// Locates the maximum on a coarse scan, refines it, estimates the bump width
/// from the curvature and lays breakpoints at geometric distances from the
/// peak so the adaptive driver starts from panels that resolve it.
template <class H>
LogQuadResult integrate_log_peaked(H&& h, double z_min, double z_max, const QuadratureConfig& cfg,
                                   double z_start = 0.0) {
  constexpr double kDrop = 60.0;  // e^-60 relative to the peak is negligible
  z_start = std::clamp(z_start, z_min, z_max);

  // coarse scan outward from z_start
  double best_z = z_start, best_h = h(z_start);
  auto scan_side = [&](double dir) {
    double z = z_start;
    double step = 0.5;
    int below = 0;
    while (true) {
      z += dir * step;
      if (z < z_min || z > z_max) break;
      const double v = h(z);
      if (v > best_h) {
        best_h = v;
        best_z = z;
        below = 0;
      } else if (best_h > kNegInf && v < best_h - 80.0) {
        if (++below >= 3) break;
      }
      if (std::abs(z - z_start) > 40.0) step = std::min(4.0, step * 1.05);
    }
  };
  scan_side(-1.0);
  scan_side(+1.0);
  if (best_h == kNegInf) return {kNegInf, 0.0, 0};

  // golden-section refinement in a bracket around the grid maximum
  double lo = std::max(z_min, best_z - 0.5), hi = std::min(z_max, best_z + 0.5);
  const double gr = 0.6180339887498949;
  double c = hi - gr * (hi - lo), d = lo + gr * (hi - lo);
  double hc = h(c), hd = h(d);
  for (int it = 0; it < 80 && hi - lo > 1e-12 * std::max(1.0, std::abs(best_z)); ++it) {
    if (hc > hd) {
      hi = d;
      d = c;
      hd = hc;
      c = hi - gr * (hi - lo);
      hc = h(c);
    } else {
      lo = c;
      c = d;
      hc = hd;
      d = lo + gr * (hi - lo);
      hd = h(d);
    }
  }
  const double zr = 0.5 * (lo + hi);
  double peak_z = best_z, peak_h = best_h;
  if (const double hv = h(zr); hv > peak_h) {
    peak_z = zr;
    peak_h = hv;
  }

  // curvature-based width: find a step where h drops by O(1)
  double width = 0.25;
  for (double dz = 0.25; dz > 1e-10; dz *= 0.25) {
    const double l = peak_z - dz >= z_min ? h(peak_z - dz) : kNegInf;
    const double r = peak_z + dz <= z_max ? h(peak_z + dz) : kNegInf;
    const double drop = peak_h - std::max(l, r);
    width = dz;
    if (drop < 2.0) break;
  }

  // outer extent: walk away from the peak until the integrand is negligible
  auto extent = [&](double dir) {
    double step = width;
    double z = peak_z;
    while (true) {
      const double nz = z + dir * step;
      if (nz <= z_min) return z_min;
      if (nz >= z_max) return z_max;
      z = nz;
      const double v = h(z);
      if (v < peak_h - kDrop) return z;
      step *= 1.5;
    }
  };
  const double left = extent(-1.0), right = extent(+1.0);

  std::vector<double> br{left};
  std::vector<double> rights;
  for (double k = 0.5 * width; peak_z - k > left; k *= 2.0) br.push_back(peak_z - k);
  std::reverse(br.begin() + 1, br.end());
  br.push_back(peak_z);
  for (double k = 0.5 * width; peak_z + k < right; k *= 2.0) br.push_back(peak_z + k);
  br.push_back(right);
  br.erase(std::unique(br.begin(), br.end()), br.end());
  if (br.size() < 2) return {kNegInf, 0.0, 0};
  return integrate_log(h, br, cfg);
}

namespace detail {

// log(1 + e^z) without overflow.
inline double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

}  // namespace detail

/// Change of variables for integrals over (0, t) with singular behavior at
/// both ends: s = t / (1 + e^z), t - s = t / (1 + e^-z). Both are computed
/// from z directly so neither loses digits near its endpoint.
struct LogisticPoint {
  double log_s, log_tau, log_jacobian;
};

inline LogisticPoint logistic_point(double log_t, double z) {
  const double ls = log_t - detail::softplus(z);
  const double lt = log_t - detail::softplus(-z);
  return {ls, lt, ls + lt - log_t};
}

}  // namespace bkk

#endif  // BKK_QUADRATURE_HPP
