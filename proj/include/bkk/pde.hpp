#ifndef BKK_PDE_HPP
#define BKK_PDE_HPP

// Killed kernel p_a(t,x,.) for index mu > 0 from the heat equation of the
// generator (1/2) d^2/dy^2 + (2mu+1)/(2y) d/dy with absorption at y = a
// (a = 1 unless PdeConfig::barrier says otherwise; formulas below use a = 1).
//
// The unknown is the ratio w(s,y) = p_1(s,x,y) / p(s,x,y) rather than p_1
// itself. Dividing by the free kernel removes the Gaussian factor, so w stays
// within [0, 1], starts from w = 1 instead of a point mass, and the product
// p * w keeps full relative accuracy in the tails where p_1 is e^{-1000}.
// Substituting p_1 = p w into the forward equation gives
//
//   dw/ds = (1/2) w'' + b(s,y) w',
//   b = d/dy log p - (2mu+1)/(2y) = (x - y)/s + ((2mu+1)/2 - g(xy/s)) / y,
//   g(z) = z (1 - I_{mu+1}(z) / I_mu(z)),
//
// with w(s,1) = 0 and w -> 1 far from the barrier. The flux
// q_x(s) = (1/2) d/dy p_1(s,x,1) = (1/2) p(s,x,1) w'(s,1) is the hitting
// density.
//
// The Brownian bridge value w0 = 1 - exp(-2(x-1)(y-1)/s) solves the same
// equation with the drift (x - y)/s alone, so the solver works on the
// correction v = w - w0, which satisfies
//
//   dv/ds = (1/2) v'' + b v' + beta w0',   beta = ((2mu+1)/2 - g(xy/s)) / y,
//
// with v = 0 at s = 0, at y = 1 and far out. v is small wherever the drift is
// steep, so upwinding errors there stay small in absolute terms, and the
// Gaussian-scale structure of w near the barrier is carried exactly by w0.
//
// Nodes: y = 1 + ell (e^eta - 1) with eta uniform, i.e. uniform over the
// boundary layer and geometric beyond it. Time steps are geometric in s so
// the thin early layer and the long-time spreading both get resolved.

#include <bkk/errors.hpp>
#include <bkk/hunt.hpp>
#include <bkk/kernels.hpp>
#include <bkk/log_value.hpp>
#include <bkk/quadrature.hpp>
#include <bkk/special_fn.hpp>

#include <boost/math/interpolators/cardinal_cubic_b_spline.hpp>
#include <boost/math/interpolators/makima.hpp>

#include <algorithm>
#include <cmath>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace bkk {

struct PdeConfig {
  double domain_cap = 0.0;     // L; 0 selects the default rule
  int nodes = 4000;            // N
  int time_steps = 400;        // least number of graded steps over the whole solve
  double steps_per_efold = 150;  // step density in log s; the larger of the two counts wins
  bool bdf2 = true;            // variable-step BDF2; false selects the theta scheme below
  double theta = 0.5;          // 1/2 Crank-Nicolson, 1 implicit Euler
  double y_max = 0.0;          // largest y of interest, feeds the default L
  double layer_scale = 0.0;    // ell; 0 selects the default rule
  int startup_steps = 8;       // implicit Euler steps before the theta scheme takes over
  double barrier = 1.0;        // absorbing level a

  void validate() const {
    detail::require(nodes >= 200, "PdeConfig: nodes must be >= 200");
    detail::require(time_steps >= 40, "PdeConfig: time_steps must be >= 40");
    detail::require(steps_per_efold >= 0.0, "PdeConfig: steps_per_efold must be >= 0");
    detail::require(theta >= 0.5 && theta <= 1.0, "PdeConfig: theta must lie in [1/2, 1]");
    detail::require(domain_cap >= 0.0 && layer_scale >= 0.0 && y_max >= 0.0, "PdeConfig: negative size");
    detail::require(std::isfinite(barrier) && barrier > 0.0, "a must be positive");
  }
};

namespace detail {

// 1 - P(Brownian bridge from x to y over time s touches a), with c = x - a, d = y - a.
inline double bridge_ratio(double c, double d, double s) { return -std::expm1(-2.0 * c * d / s); }

}  // namespace detail

class KernelSlice {
public:
  KernelSlice() = default;
  /// `v` is the correction to the Brownian bridge ratio at the nodes.
  KernelSlice(double mu, double t, double x, double a, double ell, double d_eta, std::vector<double> y,
              std::vector<double> v)
      : mu_(mu), t_(t), x_(x), a_(a), ell_(ell), d_eta_(d_eta), y_(std::move(y)), v_(std::move(v)) {
    w_.resize(y_.size());
    log_p1_.resize(y_.size());
    for (std::size_t i = 0; i < y_.size(); ++i) {
      w_[i] = i == 0 ? 0.0 : std::clamp(detail::bridge_ratio(x_ - a_, y_[i] - a_, t_) + v_[i], 0.0, 1.0);
      log_p1_[i] = w_[i] <= 0.0 ? kNegInf : log_free_kernel(mu_, t_, x_, y_[i]).log() + std::log(w_[i]);
    }
    spline_ = std::make_shared<boost::math::interpolators::cardinal_cubic_b_spline<double>>(v_.data(), v_.size(), 0.0,
                                                                                           d_eta_);
  }

  double mu() const { return mu_; }
  double t() const { return t_; }
  double x() const { return x_; }
  double a() const { return a_; }
  double domain_cap() const { return y_.back(); }
  const std::vector<double>& y() const { return y_; }
  const std::vector<double>& ratio() const { return w_; }  // p_1 / p at the nodes
  const std::vector<double>& log_p1() const { return log_p1_; }

  /// log p_a(t,x,y) at an arbitrary y in (a, L]; the correction is interpolated by a cubic spline in eta.
  LogValue at(double y) const {
    const double lw = log_ratio_at(y);
    return lw == kNegInf ? LogValue::zero() : LogValue(lw + log_free_kernel(mu_, t_, x_, y).log());
  }

  double log_ratio_at(double y) const {
    detail::require(y > a_ && y <= domain_cap(), "slice query outside (a, L]");
    const double eta = std::log1p((y - a_) / ell_);
    const double w = std::min(detail::bridge_ratio(x_ - a_, y - a_, t_) + (*spline_)(eta), 1.0);
    return w > 0.0 ? std::log(w) : kNegInf;
  }

  /// log int_a^L p_a(t,x,y) (x/y)^k dy; k = 0 is the survival probability, k = 2 mu gives the
  /// survival at index -mu.
  LogValue survival(const QuadratureConfig& cfg = {}, double k = 0.0) const {
    std::vector<double> br{a_};
    for (double d = ell_; a_ + d < domain_cap(); d *= 10.0) br.push_back(a_ + d);
    const double sd = std::sqrt(t_);
    for (double k = 0.25; k < 64.0; k *= 2.0) {
      br.push_back(x_ - k * sd);
      br.push_back(x_ + k * sd);
    }
    br.push_back(x_);
    br.push_back(domain_cap());
    std::erase_if(br, [&](double v) { return v < a_ || v > domain_cap(); });
    std::sort(br.begin(), br.end());
    br.erase(std::unique(br.begin(), br.end()), br.end());
    auto f = [&](double y) {
      if (y <= a_) return kNegInf;
      const double lw = log_ratio_at(y);
      return lw == kNegInf ? kNegInf : lw + log_free_kernel(mu_, t_, x_, y).log() + k * std::log(x_ / y);
    };
    return LogValue(std::min(0.0, integrate_log(f, br, cfg).log_value));
  }

private:
  double mu_ = 0.5, t_ = 1.0, x_ = 2.0, a_ = 1.0, ell_ = 1e-3, d_eta_ = 1.0;
  std::vector<double> y_, v_, w_, log_p1_;
  std::shared_ptr<boost::math::interpolators::cardinal_cubic_b_spline<double>> spline_;
};

/// Hitting density recorded from the boundary flux during a solve.
struct FluxHistory {
  double mu = 0.5;
  double x = 2.0;
  double a = 1.0;
  std::vector<double> log_s;
  std::vector<double> log_q;
};

struct PdeRun {
  std::vector<KernelSlice> slices;  // one per requested time, in increasing time order
  FluxHistory flux;
};

namespace detail {

struct PdeGrid {
  double a, ell, L, d_eta;
  std::vector<double> y, log_y, inv_y;
};

inline PdeGrid make_pde_grid(double mu, double x, double t_min, double t_max, const PdeConfig& cfg) {
  const double a = cfg.barrier, c = x - a;
  PdeGrid g{};
  g.a = a;
  g.ell = cfg.layer_scale > 0.0 ? cfg.layer_scale : 1e-3 * std::min({c, t_min / c, std::sqrt(t_min)});
  const double ymax = std::max(x, cfg.y_max);
  g.L = cfg.domain_cap > 0.0
            ? cfg.domain_cap
            : std::max({8.0 * ymax, 8.0 * std::sqrt(t_max) * std::sqrt(2.0 * mu + 2.0), 50.0 * a, a + 40.0 * t_max / c});
  require(g.L > ymax + 5.0 * std::sqrt(t_max) || cfg.domain_cap > 0.0, "PdeConfig: domain cap too small");
  const int n = cfg.nodes;
  const double eta_max = std::log1p((g.L - a) / g.ell);
  g.d_eta = eta_max / n;
  g.y.resize(n + 1);
  g.log_y.resize(n + 1);
  g.inv_y.resize(n + 1);
  for (int i = 0; i <= n; ++i) {
    g.y[i] = a + g.ell * std::expm1(g.d_eta * i);
    g.log_y[i] = std::log(g.y[i]);
    g.inv_y[i] = 1.0 / g.y[i];
  }
  g.y[n] = g.L;
  return g;
}

// x coth x, smooth through 0.
inline double x_coth_x(double v) {
  const double a = std::abs(v);
  if (a < 1e-4) return 1.0 + a * a / 3.0;
  if (a > 20.0) return a;
  return a / std::tanh(a);
}

class RatioStepper {
public:
  RatioStepper(double mu, double x, const PdeGrid& grid, const BesselRatioComplement& g)
      : mu_(mu), x_(x), log_x_(std::log(x)), grid_(grid), g_(g) {
    const std::size_t n = grid.y.size();
    lo_.assign(n, 0.0);
    di_.assign(n, 0.0);
    up_.assign(n, 0.0);
    lo_next_ = di_next_ = up_next_ = lo_;
    rhs_.assign(n, 0.0);
    cp_.assign(n, 0.0);
    src_.assign(n, 0.0);
    src_next_.assign(n, 0.0);
  }

  // Operator coefficients and source at time s; rows 1..N-1.
  void assemble(double s, std::vector<double>& lo, std::vector<double>& di, std::vector<double>& up,
                std::vector<double>& src) const {
    const auto& y = grid_.y;
    const std::size_t n = y.size() - 1;
    const double log_s = std::log(s);
    const double half_dim = mu_ + 0.5;
    const double k = 2.0 * (x_ - grid_.a) / s;
    for (std::size_t i = 1; i < n; ++i) {
      const double hm = y[i] - y[i - 1], hp = y[i + 1] - y[i];
      const double beta = (half_dim - g_(log_x_ + grid_.log_y[i] - log_s)) * grid_.inv_y[i];
      const double b = (x_ - y[i]) / s + beta;
      src[i] = beta * k * std::exp(-k * (y[i] - grid_.a));
      const double diff = 0.5 * x_coth_x(b * std::max(hm, hp));
      const double sum = hm + hp;
      lo[i] = diff * 2.0 / (hm * sum) - b * hp / (hm * sum);
      up[i] = diff * 2.0 / (hp * sum) + b * hm / (hp * sum);
      di[i] = -diff * 2.0 / (hm * hp) + b * (hp - hm) / (hm * hp);
    }
  }

  // One step s -> s + ds with v = 0 at both ends. theta in [1/2, 1] gives the theta
  // scheme; with a previous level w_prev and step ratio omega = ds / ds_prev, variable-step BDF2.
  void step(std::vector<double>& w, const std::vector<double>* w_prev, double omega, double s, double ds,
            double theta) {
    const std::size_t n = w.size() - 1;
    if (!have_current_) assemble(s, lo_, di_, up_, src_);
    have_current_ = true;
    assemble(s + ds, lo_next_, di_next_, up_next_, src_next_);
    double alpha = 1.0, beta = theta * ds;
    if (w_prev) {
      alpha = (1.0 + 2.0 * omega) / (1.0 + omega);
      beta = ds;
      const double c1 = 1.0 + omega, c2 = omega * omega / (1.0 + omega);
      for (std::size_t i = 1; i < n; ++i) rhs_[i] = c1 * w[i] - c2 * (*w_prev)[i] + ds * src_next_[i];
    } else {
      const double ex = (1.0 - theta) * ds;
      for (std::size_t i = 1; i < n; ++i) {
        double r = w[i];
        if (ex > 0.0) r += ex * (lo_[i] * w[i - 1] + di_[i] * w[i] + up_[i] * w[i + 1] + src_[i]);
        rhs_[i] = r + beta * src_next_[i];
      }
    }
    // Thomas algorithm on (alpha I - beta A_next)
    double denom = alpha - beta * di_next_[1];
    cp_[1] = -beta * up_next_[1] / denom;
    rhs_[1] /= denom;
    for (std::size_t i = 2; i < n; ++i) {
      const double a = -beta * lo_next_[i];
      denom = (alpha - beta * di_next_[i]) - a * cp_[i - 1];
      cp_[i] = -beta * up_next_[i] / denom;
      rhs_[i] = (rhs_[i] - a * rhs_[i - 1]) / denom;
    }
    w[n - 1] = rhs_[n - 1];
    for (std::size_t i = n - 1; i-- > 1;) w[i] = rhs_[i] - cp_[i] * w[i + 1];
    lo_.swap(lo_next_);
    di_.swap(di_next_);
    up_.swap(up_next_);
    src_.swap(src_next_);
  }

private:
  double mu_, x_, log_x_;
  const PdeGrid& grid_;
  const BesselRatioComplement& g_;
  std::vector<double> lo_, di_, up_, lo_next_, di_next_, up_next_, rhs_, cp_, src_, src_next_;
  bool have_current_ = false;
};

// w'(1) from w(1) = 0 and the next two nodes, second order on the uneven spacing.
inline double boundary_slope(const std::vector<double>& w, const std::vector<double>& y) {
  const double h0 = y[1] - y[0], h1 = y[2] - y[1];
  return w[1] * (h0 + h1) / (h0 * h1) - w[2] * h0 / (h1 * (h0 + h1));
}

}  // namespace detail

/// Solve once from s ~ 0 to the largest requested time; slices at every requested time.
inline PdeRun solve_killed_kernel_multi(double mu, double x, std::vector<double> times, const PdeConfig& cfg = {}) {
  cfg.validate();
  detail::require(std::isfinite(mu) && mu > 0.0, "PDE solves need mu > 0; use reflect_index for negative mu");
  detail::require(std::isfinite(x) && x > cfg.barrier, "x must exceed a");
  detail::require(!times.empty(), "no output times");
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());
  detail::require(times.front() > 0.0 && std::isfinite(times.back()), "times must be positive and finite");

  const double a = cfg.barrier, c = x - a;
  const double t_min = times.front(), t_max = times.back();
  const auto grid = detail::make_pde_grid(mu, x, t_min, t_max, cfg);
  const BesselRatioComplement g(mu);
  const std::size_t n = grid.y.size() - 1;

  // Up to s0 the Bessel drift correction has had no time to act; start from the bridge value.
  const double s0 = 1e-4 * std::min({c * c, t_min, a * a});
  std::vector<double> w(n + 1, 0.0);  // the correction v

  // graded steps: geometric from s0 to t_max, with every requested time hit exactly
  const double efolds = std::log(t_max / s0);
  const double steps = std::max<double>(cfg.time_steps, std::ceil(cfg.steps_per_efold * efolds));
  const double ratio = std::exp(efolds / steps);
  PdeRun run;
  run.flux.mu = mu;
  run.flux.x = x;
  run.flux.a = a;
  run.flux.log_s.reserve(static_cast<std::size_t>(steps) + 2 * times.size() + 8);
  run.flux.log_q.reserve(static_cast<std::size_t>(steps) + 2 * times.size() + 8);
  detail::RatioStepper stepper(mu, x, grid, g);
  std::vector<double> w_prev;
  double s = s0, ds_prev = 0.0;
  std::size_t next_out = 0;
  int step_index = 0;
  while (next_out < times.size()) {
    // BDF2 tolerates step ratios up to 1 + sqrt 2; after a short step that lands on an
    // output time, regrow by at most a factor 2 per step
    double s_next = s * ratio;
    if (ds_prev > 0.0) s_next = std::min(s_next, s + 2.0 * ds_prev);
    s_next = std::min(s_next, times[next_out]);
    if (times[next_out] - s_next < 1e-3 * (s_next - s)) s_next = times[next_out];
    const double ds = s_next - s;
    if (cfg.bdf2 && step_index > 0) {
      auto w_now = w;
      stepper.step(w, &w_prev, ds / ds_prev, s, ds, 1.0);
      w_prev.swap(w_now);
    } else {
      w_prev = w;
      stepper.step(w, nullptr, 0.0, s, ds, step_index < cfg.startup_steps ? 1.0 : cfg.theta);
    }
    s = s_next;
    ds_prev = ds;
    ++step_index;

    const double slope = 2.0 * c / s + detail::boundary_slope(w, grid.y);
    run.flux.log_s.push_back(std::log(s));
    run.flux.log_q.push_back(slope > 0.0 ? std::log(0.5 * slope) + log_free_kernel(mu, s, x, a).log() : kNegInf);

    if (s == times[next_out]) {
      // undershoot below 0 matters relative to the largest kernel value; overshoot above 1 is
      // clipped by the slice, keeping p_1 <= p
      double log_peak = kNegInf;
      std::vector<double> log_p(n + 1, kNegInf);
      for (std::size_t i = 1; i <= n; ++i) {
        log_p[i] = log_free_kernel(mu, s, x, grid.y[i]).log();
        log_peak = std::max(log_peak, log_p[i] + std::log(std::max(detail::bridge_ratio(c, grid.y[i] - a, s) + w[i], 1e-300)));
      }
      for (std::size_t i = 1; i <= n; ++i)
        if (const double wi = detail::bridge_ratio(c, grid.y[i] - a, s) + w[i];
            wi < 0.0 && std::log(-wi) + log_p[i] > log_peak + std::log(1e-12))
          throw StabilityFailure("PDE: negative kernel " + std::to_string(wi) + " x p at y=" + std::to_string(grid.y[i]) +
                                 ", t=" + std::to_string(s));
      run.slices.emplace_back(mu, s, x, a, grid.ell, grid.d_eta, grid.y, w);
      // the Dirichlet value w = 1 at L is only harmless where the kernel has no mass left
      const auto& lp1 = run.slices.back().log_p1();
      const double peak = *std::max_element(lp1.begin(), lp1.end());
      if (lp1[n - 1] - peak > std::log(1e-12))
        throw DomainTooSmall("PDE: kernel at y=" + std::to_string(grid.y[n - 1]) + " is " +
                             std::to_string(std::exp(lp1[n - 1] - peak)) + " of its peak at t=" + std::to_string(s) +
                             "; enlarge domain_cap");
      ++next_out;
    }
  }
  return run;
}

inline KernelSlice solve_killed_kernel(double mu, double t, double x, const PdeConfig& cfg = {}) {
  detail::require(std::isfinite(t) && t > 0.0, "t must be positive");
  return std::move(solve_killed_kernel_multi(mu, x, {t}, cfg).slices.front());
}

inline LogValue survival_probability(double mu, double t, double x, const PdeConfig& cfg = {}) {
  return solve_killed_kernel(mu, t, x, cfg).survival();
}

/// Hitting-density source interpolating a recorded flux in (log s, log q).
/// Below the first well-resolved time the density is reported as zero; past
/// the end of the history it is unknown and also reported as zero.
/// Earliest time at which a recorded flux is kept: q_x(s) is below e^{-700} before it.
inline double flux_resolved_from(double x, double a = 1.0) { return (x - a) * (x - a) / 1500.0; }

inline HittingDensitySource flux_source(const FluxHistory& h) {
  const double log_s_floor = std::log(flux_resolved_from(h.x, h.a));
  std::vector<double> ls, lq;
  for (std::size_t i = 0; i < h.log_s.size(); ++i) {
    if (h.log_s[i] < log_s_floor || !(h.log_q[i] > -745.0)) continue;
    if (!ls.empty() && h.log_s[i] <= ls.back()) continue;
    ls.push_back(h.log_s[i]);
    lq.push_back(h.log_q[i]);
  }
  detail::require(ls.size() >= 4, "flux history too short to interpolate");
  const double lo = ls.front(), hi = ls.back();
  using Makima = boost::math::interpolators::makima<std::vector<double>>;
  auto interp = std::make_shared<Makima>(std::move(ls), std::move(lq));
  return {SourceKind::pde_flux, h.mu, h.x, [interp, lo, hi](double s) {
            const double u = std::log(s);
            if (!(u >= lo && u <= hi)) return LogValue::zero();
            return LogValue((*interp)(u));
          }};
}

/// Hitting density of T_1 from x, from the boundary flux of a solve covering s_grid.
inline HittingDensitySource hitting_density_flux(double mu, double x, const PdeConfig& cfg,
                                                 std::span<const double> s_grid) {
  detail::require(!s_grid.empty(), "empty s grid");
  const double s_max = *std::max_element(s_grid.begin(), s_grid.end());
  return flux_source(solve_killed_kernel_multi(mu, x, {s_max}, cfg).flux);
}

}  // namespace bkk

#endif  // BKK_PDE_HPP
