#ifndef BKK_CERTIFY_HPP
#define BKK_CERTIFY_HPP

// Grid sweeps that check the displayed inequalities and identities for the
// killed kernel, and the two-sided envelope report.
//
// Every check works on the unit barrier: a grid cell (t, x, y) at barrier a is
// mapped to (t/a^2, x/a, y/a) first. Kernel values come from the closed forms
// at |mu| = 1/2 and from PDE solves otherwise; negative indices go through
// reflect_index. A check cell compares two logarithms and records the signed
// margin, positive when the inequality holds. It fails when the margin is
// below -slack, where slack depends on the method behind the values.

#include <bkk/errors.hpp>
#include <bkk/hunt.hpp>
#include <bkk/kernels.hpp>
#include <bkk/log_value.hpp>
#include <bkk/mc.hpp>
#include <bkk/parallel.hpp>
#include <bkk/pde.hpp>
#include <bkk/quadrature.hpp>
#include <bkk/special_fn.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

namespace bkk {

enum class Method { closed_form, hunt, pde, mc };

inline const char* to_string(Method m) {
  switch (m) {
    case Method::closed_form: return "closed_form";
    case Method::hunt: return "hunt";
    case Method::pde: return "pde";
    case Method::mc: return "mc";
  }
  return "unknown";
}

inline Method method_from_string(const std::string& s) {
  if (s == "closed_form") return Method::closed_form;
  if (s == "hunt") return Method::hunt;
  if (s == "pde") return Method::pde;
  if (s == "mc") return Method::mc;
  detail::domain_fail("unknown method '" + s + "'");
}

/// n log-spaced points from lo to hi inclusive.
inline std::vector<double> log_spaced(double lo, double hi, int n) {
  detail::require(lo > 0.0 && hi >= lo && n >= 1, "log_spaced needs 0 < lo <= hi and n >= 1");
  std::vector<double> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    v[static_cast<std::size_t>(i)] = n == 1 ? lo : std::exp(std::log(lo) + (std::log(hi) - std::log(lo)) * i / (n - 1));
  v.back() = hi;
  return v;
}

// Slacks in log scale, by the method behind the compared values. The closed-form
// slack is relative to the size of the compared logarithms: near log p = -5e8
// one ulp is already 6e-8.
inline constexpr double kClosedFormSlack = 1e-9;
inline constexpr double kPdeSlack = 5e-3;
inline constexpr double kMcAbsSlack = 1e-2;  // added to 4 std_err, probability units

struct GridSpec {
  std::vector<double> mu_list;
  std::vector<double> t_grid, x_grid, y_grid;  // x and y are absolute positions, > a
  double a = 1.0;
  std::vector<double> scaling_barriers{2.0, 10.0};  // barriers used by the scaling round trip
  int scaling_samples = 3;                          // start points per index for native barrier solves
  PdeConfig pde;
  McConfig mc;
  QuadratureConfig hunt_quadrature{1e-6};
  double hunt_fraction = 0.1;  // share of PDE cells cross-checked by the Hunt formula with PDE flux
  double mc_fraction = 0.01;   // share of PDE cells cross-checked by simulation
  std::uint64_t sample_seed = 17;
  unsigned threads = 0;

  GridSpec() { mc.n_paths = 10'000; }

  /// mu in {+-1/4, +-1/2, +-1, +-5/2}; t, x - 1, y - 1 with 12 log-spaced points over [1e-3, 1e3].
  static GridSpec default_grid() {
    GridSpec g;
    g.mu_list = {-2.5, -1.0, -0.5, -0.25, 0.25, 0.5, 1.0, 2.5};
    g.t_grid = log_spaced(1e-3, 1e3, 12);
    for (double d : log_spaced(1e-3, 1e3, 12)) g.x_grid.push_back(1.0 + d);
    g.y_grid = g.x_grid;
    return g;
  }

  void validate() const {
    detail::require(!mu_list.empty() && !t_grid.empty() && !x_grid.empty() && !y_grid.empty(), "grids must be nonempty");
    for (double mu : mu_list) {
      detail::require(std::isfinite(mu), "mu must be finite");
      detail::require(mu != 0.0, "mu must be nonzero");
    }
    detail::require(std::isfinite(a) && a > 0.0, "a must be positive");
    for (double t : t_grid) detail::require(std::isfinite(t) && t > 0.0, "t must be positive");
    for (double x : x_grid) detail::require(std::isfinite(x) && x > a, "x must exceed a");
    for (double y : y_grid) detail::require(std::isfinite(y) && y > a, "y must exceed a");
    for (double b : scaling_barriers) detail::require(std::isfinite(b) && b > 0.0, "scaling barriers must be positive");
    detail::require(scaling_samples >= 0, "scaling_samples must be >= 0");
    detail::require(hunt_fraction >= 0.0 && hunt_fraction <= 1.0, "hunt_fraction must lie in [0, 1]");
    detail::require(mc_fraction >= 0.0 && mc_fraction <= 1.0, "mc_fraction must lie in [0, 1]");
    pde.validate();
    hunt_quadrature.validate();
  }

  /// Distinct positive magnitudes |mu| of the list, increasing.
  std::vector<double> magnitudes() const {
    std::set<double> s;
    for (double mu : mu_list) s.insert(std::abs(mu));
    return {s.begin(), s.end()};
  }

  bool needs_pde() const {
    return std::any_of(mu_list.begin(), mu_list.end(), [](double mu) { return !is_half_index(mu); });
  }
};

/// A kernel value could not be produced for a cell (solver failure or unresolved region).
struct KernelUnavailable : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Kernel values on the unit barrier with PDE runs cached per (|mu|, x). All
/// requested times come from one solve per start point, so repeated lookups of
/// a cell return the same double.
class KernelProvider {
public:
  struct Value {
    double log_p1 = kNegInf;
    Method method = Method::closed_form;
  };

  KernelProvider(std::vector<double> times, double y_max, PdeConfig cfg = {})
      : times_(std::move(times)), cfg_(cfg) {
    detail::require(!times_.empty(), "provider needs output times");
    std::sort(times_.begin(), times_.end());
    times_.erase(std::unique(times_.begin(), times_.end()), times_.end());
    cfg_.y_max = std::max(cfg_.y_max, y_max);
    cfg_.barrier = 1.0;
  }

  Value killed(double mu, double t, double x, double y) const {
    const KernelQuery q{t, x, y, 1.0};
    if (is_half_index(mu)) return {log_half_family_killed(mu, q).log(), Method::closed_form};
    const double m = std::abs(mu);
    double v = slice(m, x, t).at(y).log();
    if (mu < 0.0 && v != kNegInf) v += reflect_index(m, q);
    return {v, Method::pde};
  }

  const PdeRun& run(double m, double x) const { return entry(m, x).run; }

  const KernelSlice& slice(double m, double x, double t) const {
    const auto& r = run(m, x);
    const auto it = std::lower_bound(r.slices.begin(), r.slices.end(), t,
                                     [](const KernelSlice& s, double v) { return s.t() < v * (1.0 - 1e-13); });
    if (it == r.slices.end() || std::abs(it->t() - t) > 1e-12 * t)
      throw KernelUnavailable("no PDE slice at t=" + std::to_string(t));
    return *it;
  }

  /// Hitting density of the first passage to 1; for negative indices
  /// q^{(-m)} = x^{2m} q^{(m)}.
  HittingDensitySource hitting(double mu, double x) const {
    if (is_half_index(mu)) return exact_half_source(x, mu);
    const double m = std::abs(mu);
    const auto& e = entry(m, x);
    if (!e.flux) throw KernelUnavailable(e.flux_error);
    if (mu > 0.0) return *e.flux;
    auto src = *e.flux;
    const double shift = 2.0 * m * std::log(x);
    src.mu = mu;
    src.log_density = [inner = e.flux->log_density, shift](double s) {
      const auto v = inner(s);
      return v.is_zero() ? v : LogValue(v.log() + shift);
    };
    return src;
  }

  /// log P_x(T_1 > t) from the PDE slice.
  double log_survival(double mu, double x, double t) const {
    if (is_half_index(mu)) return log_half_family_survival(mu, x, t).log();
    const double m = std::abs(mu);
    return slice(m, x, t).survival({1e-9}, mu < 0.0 ? 2.0 * m : 0.0).log();
  }

  /// Solves every (m, x) pair up front, in parallel; failures are remembered per pair.
  void prefetch(const std::vector<std::pair<double, double>>& keys, unsigned threads) const {
    std::vector<std::pair<double, double>> todo;
    {
      std::lock_guard lock(mutex_);
      for (const auto& k : keys)
        if (!cache_.count(k)) todo.push_back(k);
    }
    std::sort(todo.begin(), todo.end());
    todo.erase(std::unique(todo.begin(), todo.end()), todo.end());
    std::vector<std::shared_ptr<Entry>> made(todo.size());
    parallel_for(todo.size(), threads, [&](std::size_t i) { made[i] = solve(todo[i].first, todo[i].second); });
    std::lock_guard lock(mutex_);
    for (std::size_t i = 0; i < todo.size(); ++i) cache_.emplace(todo[i], made[i]);
  }

  std::size_t solves() const {
    std::lock_guard lock(mutex_);
    return cache_.size();
  }

  const PdeConfig& config() const { return cfg_; }
  const std::vector<double>& times() const { return times_; }

private:
  struct Entry {
    PdeRun run;
    std::string error;
    std::optional<HittingDensitySource> flux;
    std::string flux_error;
  };

  std::shared_ptr<Entry> solve(double m, double x) const {
    auto e = std::make_shared<Entry>();
    try {
      e->run = solve_killed_kernel_multi(m, x, times_, cfg_);
    } catch (const StabilityFailure& ex) {
      e->error = std::string("negative kernel: ") + ex.what();
      return e;
    } catch (const std::runtime_error& ex) {
      e->error = ex.what();
      return e;
    }
    try {
      e->flux = flux_source(e->run.flux);
    } catch (const std::exception& ex) {
      e->flux_error = ex.what();
    }
    return e;
  }

  const Entry& entry(double m, double x) const {
    std::shared_ptr<Entry> e;
    {
      std::lock_guard lock(mutex_);
      if (auto it = cache_.find({m, x}); it != cache_.end()) e = it->second;
    }
    if (!e) {
      e = solve(m, x);
      std::lock_guard lock(mutex_);
      e = cache_.emplace(std::pair{m, x}, e).first->second;
    }
    if (!e->error.empty()) throw KernelUnavailable(e->error);
    return *e;
  }

  std::vector<double> times_;
  PdeConfig cfg_;
  mutable std::mutex mutex_;
  mutable std::map<std::pair<double, double>, std::shared_ptr<Entry>> cache_;
};

/// One evaluated cell. nu is the second index of two-index checks and y is
/// the endpoint of kernel checks; both are 0 where the check has none.
struct CellRecord {
  double mu = 0.0, nu = 0.0;
  double t = 0.0, x = 0.0, y = 0.0;
  double a = 1.0;  // barrier of the cell as evaluated
  double margin = 0.0;
  double slack = 0.0;
  Method method = Method::closed_form;
  bool skipped = false;
  std::string reason;

  bool failed() const { return !skipped && margin < -slack; }
  friend bool operator==(const CellRecord&, const CellRecord&) = default;
};

struct CheckResult {
  std::string check_id;
  std::string description;
  bool hard = true;
  std::size_t cells_total = 0;  // evaluated cells, skipped ones excluded
  std::size_t cells_failed = 0;
  std::size_t cells_skipped = 0;
  double worst_margin = 0.0;  // smallest margin over evaluated cells
  CellRecord worst_cell;
  std::map<std::string, std::size_t> method_counts;
  std::map<std::string, std::size_t> skip_reasons;
  std::vector<CellRecord> cells;

  bool passed() const { return !hard || cells_failed == 0; }
  friend bool operator==(const CheckResult&, const CheckResult&) = default;
};

namespace detail {

inline double slack_for(Method m, double scale = 1.0) {
  return m == Method::closed_form ? kClosedFormSlack * std::max(1.0, std::abs(scale)) : kPdeSlack;
}

inline Method worse(Method a, Method b) { return static_cast<int>(a) > static_cast<int>(b) ? a : b; }

// Shortens solver messages to a stable reason key.
inline std::string reason_key(const std::string& r) {
  const auto pos = r.find_first_of(":;");
  return pos == std::string::npos ? r : r.substr(0, pos);
}

}  // namespace detail

/// Recomputes the counts, worst cell and per-method / per-reason tallies from the cells.
inline void tally(CheckResult& r) {
  r.cells_total = r.cells_failed = r.cells_skipped = 0;
  r.worst_margin = 0.0;
  r.worst_cell = {};
  r.method_counts.clear();
  r.skip_reasons.clear();
  bool first = true;
  for (const auto& c : r.cells) {
    if (c.skipped) {
      ++r.cells_skipped;
      ++r.skip_reasons[detail::reason_key(c.reason)];
      continue;
    }
    ++r.cells_total;
    ++r.method_counts[to_string(c.method)];
    if (c.failed()) ++r.cells_failed;
    if (first || c.margin < r.worst_margin) {
      r.worst_margin = c.margin;
      r.worst_cell = c;
      first = false;
    }
  }
}

namespace detail {

template <class F>
CheckResult run_check(std::string id, std::string description, bool hard, std::vector<CellRecord> cells,
                      unsigned threads, F&& eval) {
  parallel_for(cells.size(), threads, [&](std::size_t i) {
    auto& c = cells[i];
    try {
      eval(c);
      if (!c.skipped && !std::isfinite(c.margin)) {
        c.skipped = true;
        c.reason = "non-finite margin";
      }
    } catch (const KernelUnavailable& e) {
      c.skipped = true;
      c.reason = e.what();
    } catch (const ConvergenceFailure& e) {
      c.skipped = true;
      c.reason = std::string("quadrature: ") + e.what();
    } catch (const NegativeDensity& e) {
      c.skipped = true;
      c.reason = std::string("hunt: ") + e.what();
    }
    if (c.skipped) c.margin = 0.0;
  });
  CheckResult r;
  r.check_id = std::move(id);
  r.description = std::move(description);
  r.hard = hard;
  r.cells = std::move(cells);
  tally(r);
  return r;
}

struct UnitCell {
  double t, x, y;
};

inline double log_brownian_killed(double t, double x, double y, double a) {
  const double d = x - y;
  return -0.5 * (kLogTwoPi + std::log(t)) - d * d / (2.0 * t) + log1mexp(2.0 * (x - a) * (y - a) / t);
}

}  // namespace detail

/// Checks (i)-(x) plus the soft Hunt and simulation cross-checks. A provider
/// may be shared with run_envelope_report; it must be built for the unit
/// barrier from the same spec (see make_provider).
std::vector<CheckResult> run_inequality_suite(const GridSpec& spec, std::shared_ptr<const KernelProvider> provider = {});

/// Provider covering every start point and time of the spec, with all PDE runs solved.
inline std::shared_ptr<const KernelProvider> make_provider(const GridSpec& spec) {
  spec.validate();
  std::vector<double> times;
  for (double t : spec.t_grid) times.push_back(t / (spec.a * spec.a));
  double y_max = 0.0;
  for (double v : spec.x_grid) y_max = std::max(y_max, v / spec.a);
  for (double v : spec.y_grid) y_max = std::max(y_max, v / spec.a);
  auto p = std::make_shared<KernelProvider>(times, y_max, spec.pde);
  std::vector<std::pair<double, double>> keys;
  for (double m : spec.magnitudes()) {
    if (m == 0.5) continue;
    for (double v : spec.x_grid) keys.emplace_back(m, v / spec.a);
    for (double v : spec.y_grid) keys.emplace_back(m, v / spec.a);
  }
  p->prefetch(keys, spec.threads);
  return p;
}

inline std::vector<CheckResult> run_inequality_suite(const GridSpec& spec, std::shared_ptr<const KernelProvider> provider) {
  spec.validate();
  if (!provider) provider = make_provider(spec);
  const KernelProvider& kp = *provider;
  const double a = spec.a;
  const unsigned threads = spec.threads;
  const auto mags = spec.magnitudes();

  // every (t, x, y) cell in unit-barrier coordinates, in grid order
  std::vector<detail::UnitCell> grid;
  for (double t : spec.t_grid)
    for (double x : spec.x_grid)
      for (double y : spec.y_grid) grid.push_back({t / (a * a), x / a, y / a});

  auto cells_for = [&](double mu, double nu) {
    std::vector<CellRecord> out;
    out.reserve(grid.size());
    for (const auto& g : grid) {
      CellRecord c;
      c.mu = mu;
      c.nu = nu;
      c.t = g.t;
      c.x = g.x;
      c.y = g.y;
      out.push_back(c);
    }
    return out;
  };
  auto killed = [&](double mu, const CellRecord& c) { return kp.killed(mu, c.t, c.x, c.y); };

  std::vector<CheckResult> results;

  // (i) Bessel ratio bounds at the argument pairs the kernel uses: (y/t, xy/t) and (x/t, xy/t)
  {
    std::vector<CellRecord> up, low;
    for (double mu : spec.mu_list) {
      if (mu > -0.5) for (auto& c : cells_for(mu, 0.0)) up.push_back(c);
      if (mu >= 0.5) for (auto& c : cells_for(mu, 0.0)) low.push_back(c);
    }
    auto ratio_margin = [](const CellRecord& c, bool upper) {
      const BesselOrder order(c.mu);
      double worst = std::numeric_limits<double>::infinity();
      for (double lo_arg : {c.y / c.t, c.x / c.t}) {
        const double hi_arg = c.x * c.y / c.t;
        if (hi_arg <= lo_arg) continue;
        // both sides carry e^{Y-X}; compare the scaled ratio with the power factor
        const double scaled = log_bessel_i_scaled(order, hi_arg) - log_bessel_i_scaled(order, lo_arg);
        const double lp = c.mu * std::log(hi_arg / lo_arg);
        worst = std::min(worst, upper ? lp - scaled : scaled + lp);
      }
      return worst;
    };
    results.push_back(detail::run_check("i.bessel_ratio_upper", "I_mu(Y)/I_mu(X) < (Y/X)^mu e^{Y-X}, Y >= X > 0, mu > -1/2",
                                        true, std::move(up), threads, [&](CellRecord& c) {
                                          c.margin = ratio_margin(c, true);
                                          c.slack = kClosedFormSlack;
                                        }));
    results.push_back(detail::run_check("i.bessel_ratio_lower", "I_mu(Y)/I_mu(X) >= (X/Y)^mu e^{Y-X}, Y >= X > 0, mu >= 1/2",
                                        true, std::move(low), threads, [&](CellRecord& c) {
                                          c.margin = ratio_margin(c, false);
                                          c.slack = kClosedFormSlack;
                                        }));
  }

  // (ii) p_1 <= p
  {
    std::vector<CellRecord> cells;
    for (double mu : spec.mu_list)
      for (auto& c : cells_for(mu, 0.0)) cells.push_back(c);
    results.push_back(detail::run_check("ii.killed_below_free", "p_1(t,x,y) <= p(t,x,y)", true, std::move(cells), threads,
                                        [&](CellRecord& c) {
                                          const auto v = killed(c.mu, c);
                                          if (v.log_p1 == kNegInf) throw KernelUnavailable("kernel underflow");
                                          c.method = v.method;
                                          c.slack = detail::slack_for(v.method, v.log_p1);
                                          c.margin = log_free_kernel(c.mu, c.t, c.x, c.y).log() - v.log_p1;
                                        }));
  }

  // (iii) (x/y)^{mu-1/2} p_1^mu <= p_1^{1/2} <= (x/y)^{nu-1/2} p_1^nu, nu <= 1/2 <= mu
  {
    std::vector<CellRecord> cells;
    for (double m : mags)
      if (m != 0.5)
        for (auto& c : cells_for(m, 0.5)) cells.push_back(c);
    results.push_back(detail::run_check(
        "iii.ordering_around_half", "(x/y)^{mu-1/2} p_1^mu <= p_1^{1/2} <= (x/y)^{nu-1/2} p_1^nu for nu <= 1/2 <= mu",
        true, std::move(cells), threads, [&](CellRecord& c) {
          const auto v = killed(c.mu, c);
          const auto half = killed(0.5, c);
          if (v.log_p1 == kNegInf || half.log_p1 == kNegInf) throw KernelUnavailable("kernel underflow");
          const double side = (c.mu - 0.5) * std::log(c.x / c.y) + v.log_p1;
          c.margin = c.mu > 0.5 ? half.log_p1 - side : side - half.log_p1;
          c.method = detail::worse(v.method, half.method);
          c.slack = detail::slack_for(c.method, half.log_p1);
        }));
  }

  // (iv) and (v): every ordered pair of positive indices mu > nu
  {
    std::vector<CellRecord> iv, v;
    for (std::size_t i = 0; i < mags.size(); ++i)
      for (std::size_t j = 0; j < i; ++j)
        for (auto& c : cells_for(mags[i], mags[j])) {
          iv.push_back(c);
          if (c.t <= 1.0) v.push_back(c);
        }
    auto pair_values = [&](CellRecord& c) {
      const auto hi = killed(c.mu, c), lo = killed(c.nu, c);
      if (hi.log_p1 == kNegInf || lo.log_p1 == kNegInf) throw KernelUnavailable("kernel underflow");
      c.method = detail::worse(hi.method, lo.method);
      c.slack = detail::slack_for(c.method, hi.log_p1);
      return std::pair{hi.log_p1, lo.log_p1 + (c.mu - c.nu) * std::log(c.y / c.x)};
    };
    results.push_back(detail::run_check("iv.index_monotonicity", "p_1^mu <= (y/x)^{mu-nu} p_1^nu for mu >= nu > 0", true,
                                        std::move(iv), threads, [&](CellRecord& c) {
                                          const auto [hi, lo] = pair_values(c);
                                          c.margin = lo - hi;
                                        }));
    results.push_back(detail::run_check("v.small_time_lower",
                                        "p_1^mu >= e^{-(mu^2-nu^2)/2} (y/x)^{mu-nu} p_1^nu for t <= 1, mu >= nu > 0",
                                        true, std::move(v), threads, [&](CellRecord& c) {
                                          const auto [hi, lo] = pair_values(c);
                                          c.margin = hi - (lo - 0.5 * (c.mu * c.mu - c.nu * c.nu));
                                        }));
  }

  // (vi) x^{mu-1/2} q^mu <= q^{1/2} <= x^{nu-1/2} q^nu, positive indices; y = 0, t is the hitting time
  {
    std::vector<CellRecord> cells;
    for (double m : mags) {
      if (m == 0.5) continue;
      for (double s : spec.t_grid)
        for (double x : spec.x_grid) {
          CellRecord c;
          c.mu = m;
          c.nu = 0.5;
          c.t = s / (a * a);
          c.x = x / a;
          cells.push_back(c);
        }
    }
    results.push_back(detail::run_check(
        "vi.hitting_ordering", "x^{mu-1/2} q^mu <= q^{1/2} <= x^{nu-1/2} q^nu for 0 < nu <= 1/2 <= mu", true,
        std::move(cells), threads, [&](CellRecord& c) {
          const double lq = kp.hitting(c.mu, c.x).log_density(c.t).log();
          if (lq == kNegInf) throw KernelUnavailable("flux below resolution floor");
          const double half = log_half_hitting_density(c.x, c.t).log();
          if (half == kNegInf) throw KernelUnavailable("kernel underflow");
          const double side = (c.mu - 0.5) * std::log(c.x) + lq;
          c.margin = c.mu > 0.5 ? half - side : side - half;
          c.method = Method::pde;
          c.slack = kPdeSlack;
        }));
  }

  // (vii) symmetry p_1(t,x,y) (x/y)^{2mu+1} = p_1(t,y,x), and the index reflection at +-1/2
  // against the Brownian killed density (y/x)^{mu+1/2} [phi_t(x-y) - phi_t(x+y-2)]
  {
    std::vector<CellRecord> sym, refl;
    for (double mu : spec.mu_list) {
      for (auto& c : cells_for(mu, 0.0)) {
        sym.push_back(c);
        if (is_half_index(mu)) refl.push_back(c);
      }
    }
    results.push_back(detail::run_check("vii.symmetry", "p_1(t,x,y) (x/y)^{2mu+1} = p_1(t,y,x)", true, std::move(sym),
                                        threads, [&](CellRecord& c) {
                                          const auto fwd = kp.killed(c.mu, c.t, c.x, c.y);
                                          const auto back = kp.killed(c.mu, c.t, c.y, c.x);
                                          if (fwd.log_p1 == kNegInf || back.log_p1 == kNegInf)
                                            throw KernelUnavailable("kernel underflow");
                                          c.margin = -std::abs(fwd.log_p1 + (2.0 * c.mu + 1.0) * std::log(c.x / c.y) -
                                                               back.log_p1);
                                          c.method = detail::worse(fwd.method, back.method);
                                          c.slack = detail::slack_for(c.method, fwd.log_p1);
                                        }));
    results.push_back(detail::run_check(
        "vii.reflection", "p_1^{-mu} = (x/y)^{2mu} p_1^mu, checked at +-1/2 against the Brownian killed density", true,
        std::move(refl), threads, [&](CellRecord& c) {
          const double v = kp.killed(c.mu, c.t, c.x, c.y).log_p1;
          const double want = (c.mu + 0.5) * std::log(c.y / c.x) + detail::log_brownian_killed(c.t, c.x, c.y, 1.0);
          c.margin = (v == kNegInf && want == kNegInf) ? 0.0 : -std::abs(v - want);
          c.slack = detail::slack_for(Method::closed_form, want);
        }));
  }

  // (viii) p_b(t,x,y) = (1/b) p_1(t/b^2, x/b, y/b) at barriers b: closed form at +-1/2 against
  // the barrier-b Brownian formula, native barrier-b PDE solves otherwise
  {
    std::vector<CellRecord> cells;
    for (double mu : spec.mu_list) {
      if (is_half_index(mu)) {
        for (double b : spec.scaling_barriers)
          for (auto c : cells_for(mu, 0.0)) {
            c.a = b;
            cells.push_back(c);
          }
      }
    }
    const std::size_t nx = spec.x_grid.size();
    const int ns = std::min<int>(spec.scaling_samples, static_cast<int>(nx));
    std::vector<double> sample_x;
    for (int k = 0; k < ns; ++k)
      sample_x.push_back(spec.x_grid[ns == 1 ? 0 : static_cast<std::size_t>(k) * (nx - 1) / (ns - 1)] / a);
    std::vector<std::pair<double, double>> native;  // (m, b) pairs with a native solve per sampled x
    for (double m : mags) {
      if (m == 0.5) continue;
      for (double b : spec.scaling_barriers)
        for (double x : sample_x)
          for (double t : spec.t_grid)
            for (double y : spec.y_grid) {
              CellRecord c;
              c.mu = m;
              c.t = t / (a * a);
              c.x = x;
              c.y = y / a;
              c.a = b;
              c.method = Method::pde;
              cells.push_back(c);
            }
    }
    // native solves, keyed by (m, b, x), each covering all times b^2 t
    std::map<std::tuple<double, double, double>, std::optional<PdeRun>> runs;
    std::map<std::tuple<double, double, double>, std::string> run_errors;
    {
      std::vector<std::tuple<double, double, double>> keys;
      for (const auto& c : cells)
        if (c.method == Method::pde) keys.emplace_back(c.mu, c.a, c.x);
      std::sort(keys.begin(), keys.end());
      keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
      std::vector<std::optional<PdeRun>> made(keys.size());
      std::vector<std::string> errs(keys.size());
      parallel_for(keys.size(), threads, [&](std::size_t i) {
        const auto [m, b, x] = keys[i];
        PdeConfig cfg = kp.config();
        cfg.barrier = b;
        cfg.y_max *= b;
        std::vector<double> times;
        for (double t : kp.times()) times.push_back(t * b * b);
        try {
          made[i] = solve_killed_kernel_multi(m, x * b, times, cfg);
        } catch (const std::runtime_error& e) {
          errs[i] = e.what();
        }
      });
      for (std::size_t i = 0; i < keys.size(); ++i) {
        runs[keys[i]] = std::move(made[i]);
        run_errors[keys[i]] = errs[i];
      }
    }
    results.push_back(detail::run_check(
        "viii.scaling", "p_b(t,x,y) = (1/b) p_1(t/b^2, x/b, y/b)", true, std::move(cells), threads, [&](CellRecord& c) {
          const double b = c.a;
          const KernelQuery qb{c.t * b * b, c.x * b, c.y * b, b};
          double scaled, direct;
          if (c.method == Method::closed_form) {
            scaled = log_half_family_killed(c.mu, qb).log();
            direct = (c.mu + 0.5) * std::log(c.y / c.x) + detail::log_brownian_killed(qb.t, qb.x, qb.y, b);
            c.slack = detail::slack_for(Method::closed_form, direct);
          } else {
            const auto key = std::tuple{c.mu, b, c.x};
            if (!runs.at(key)) throw KernelUnavailable(run_errors.at(key));
            const auto& slices = runs.at(key)->slices;
            const auto it = std::find_if(slices.begin(), slices.end(),
                                         [&](const KernelSlice& s) { return std::abs(s.t() - qb.t) <= 1e-12 * qb.t; });
            if (it == slices.end()) throw KernelUnavailable("no native slice");
            direct = it->at(qb.y).log();
            const double unit = kp.killed(c.mu, c.t, c.x, c.y).log_p1;
            scaled = unit == kNegInf ? kNegInf : unit - std::log(b);
            c.slack = kPdeSlack;
          }
          if (scaled == kNegInf || direct == kNegInf) throw KernelUnavailable("kernel underflow");
          c.margin = -std::abs(scaled - direct);
        }));
  }

  // (ix) hitting mass. At +-1/2 the full mass int q = x^{-2mu} (1 for negative indices) by
  // quadrature; for PDE indices the finite-horizon consequences int_0^t q + S(t) = 1,
  // int_0^t q <= x^{-2mu} ^ 1 and S(t) >= 1 - x^{-2mu} for mu > 0.
  {
    std::vector<CellRecord> cells;
    for (double mu : spec.mu_list)
      for (double x : spec.x_grid) {
        if (is_half_index(mu)) {
          CellRecord c;
          c.mu = mu;
          c.x = x / a;
          cells.push_back(c);
        } else {
          for (double t : spec.t_grid) {
            CellRecord c;
            c.mu = mu;
            c.x = x / a;
            c.t = t / (a * a);
            c.method = Method::pde;
            cells.push_back(c);
          }
        }
      }
    results.push_back(detail::run_check(
        "ix.hitting_mass", "int_0^inf q = x^{-2mu} ^ 1; finite horizon: int_0^t q + S(t) = 1, S(t) >= 1 - x^{-2mu}",
        true, std::move(cells), threads, [&](CellRecord& c) {
          const auto src = kp.hitting(c.mu, c.x);
          const double log_total = c.mu > 0.0 ? -2.0 * c.mu * std::log(c.x) : 0.0;
          if (c.method == Method::closed_form) {
            c.margin = -std::abs(hitting_mass(src, {1e-12}).log() - log_total);
            c.slack = kClosedFormSlack;
            return;
          }
          const double hit = hitting_mass_until(src, c.t, {1e-8}).linear();
          const double surv = std::exp(kp.log_survival(c.mu, c.x, c.t));
          double m = -std::abs(std::log(hit + surv));
          if (hit > 0.0) m = std::min(m, log_total - std::log(hit));
          if (c.mu > 0.0) m = std::min(m, std::log(surv) - log1mexp(-log_total));
          c.margin = m;
          c.slack = kPdeSlack;
        }));
  }

  // (x) p_1/p >= 1 - x^{-2mu} e^{(x^2-1)/t} where y > x, (y-1)^2/t >= 2(mu+1), mu > 0 and the right side is positive
  {
    std::vector<CellRecord> cells;
    for (double mu : spec.mu_list) {
      if (mu <= 0.0) continue;
      for (auto& c : cells_for(mu, 0.0)) {
        const double e = -2.0 * mu * std::log(c.x) + (c.x * c.x - 1.0) / c.t;
        if (c.y > c.x && (c.y - 1.0) * (c.y - 1.0) / c.t >= 2.0 * (mu + 1.0) && e < 0.0) cells.push_back(c);
      }
    }
    results.push_back(detail::run_check(
        "x.lower_bound_seed", "p_1/p >= 1 - x^{-2mu} e^{(x^2-1)/t} for y > x, (y-1)^2/t >= 2(mu+1), mu > 0", true,
        std::move(cells), threads, [&](CellRecord& c) {
          const auto v = killed(c.mu, c);
          if (v.log_p1 == kNegInf) throw KernelUnavailable("kernel underflow");
          const double e = -2.0 * c.mu * std::log(c.x) + (c.x * c.x - 1.0) / c.t;
          c.margin = v.log_p1 - log_free_kernel(c.mu, c.t, c.x, c.y).log() - log1mexp(-e);
          c.method = v.method;
          c.slack = detail::slack_for(v.method, v.log_p1);
        }));
  }

  // soft cross-checks on random subsamples of the PDE cells
  {
    std::mt19937_64 rng(spec.sample_seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<CellRecord> hunt_cells, mc_cells;
    for (double mu : spec.mu_list) {
      if (is_half_index(mu)) continue;
      for (auto& c : cells_for(mu, 0.0)) {
        if (u(rng) < spec.hunt_fraction) hunt_cells.push_back(c);
        if (u(rng) < spec.mc_fraction) mc_cells.push_back(c);
      }
    }
    results.push_back(detail::run_check(
        "cross.hunt_flux", "PDE kernel against the Hunt formula fed with the PDE boundary flux", false,
        std::move(hunt_cells), threads, [&](CellRecord& c) {
          // the flux source is zero before flux_resolved_from, which drops r entirely there
          if (c.t <= flux_resolved_from(c.x)) throw KernelUnavailable("t before the resolved flux");
          const double pde = killed(c.mu, c).log_p1;
          const auto h = killed_kernel_via_hunt(c.mu, {c.t, c.x, c.y, 1.0}, kp.hitting(c.mu, c.x), spec.hunt_quadrature);
          // p_1 = p - r amplifies the ~1e-3 flux interpolation error by p/p_1
          if (h.cancellation_digits > 1.0) throw KernelUnavailable("hunt cancellation beyond flux accuracy");
          if (pde == kNegInf || h.log_p1.is_zero()) throw KernelUnavailable("kernel underflow");
          c.margin = -std::abs(h.log_p1.log() - pde);
          c.method = Method::hunt;
          c.slack = kPdeSlack;
        }));
    // simulated mass of a small bin around y against the integrated kernel; margins in probability units
    results.push_back(detail::run_check(
        "cross.monte_carlo", "bin mass around y: simulation against the integrated kernel (probability units)", false,
        std::move(mc_cells), 1, [&](CellRecord& c) {
          const double h = 0.05 * std::min(c.y - 1.0, std::sqrt(c.t));
          const Bin bin{c.y - h, c.y + h};
          McConfig cfg = spec.mc;
          cfg.threads = threads;
          const auto est = simulate_killed_histogram(c.mu, c.x, c.t, {bin}, cfg).front();
          auto f = [&](double y) { return y <= 1.0 ? kNegInf : kp.killed(c.mu, c.t, c.x, y).log_p1; };
          const std::vector<double> br{bin.lo, c.y, bin.hi};
          const double want = std::exp(integrate_log(f, br, {1e-8}).log_value);
          c.slack = 0.0;
          c.margin = 4.0 * est.std_err + kMcAbsSlack - std::abs(est.mean - want);
          c.method = Method::mc;
        }));
  }
  return results;
}

inline bool all_hard_checks_pass(const std::vector<CheckResult>& results) {
  return std::all_of(results.begin(), results.end(), [](const CheckResult& r) { return r.passed(); });
}

// ---------------------------------------------------------------------------
// Envelope report

struct EnvelopeCell {
  double t = 0.0, x = 0.0, y = 0.0;  // barrier-a coordinates of the spec
  double log_ratio = 0.0;           // log p_a - log envelope
  double log_rewrite_ratio = 0.0;   // log(p_a/p) - log boundary factor
  int regime = 0;                   // bit 0: xy/t >= 1, bit 1: (x-a)(y-a)/t >= 1
  double identity_residual = 0.0;   // |direct - rewrite - (log p - log free envelope)|, rounding only
  bool above_free = false;          // p_a > p beyond the method slack
  Method method = Method::closed_form;
  bool skipped = false;
  std::string reason;
  friend bool operator==(const EnvelopeCell&, const EnvelopeCell&) = default;
};

struct RegimeStats {
  std::size_t cells = 0;
  double min_log_ratio = 0.0, max_log_ratio = 0.0;
  friend bool operator==(const RegimeStats&, const RegimeStats&) = default;
};

struct EnvelopeSummary {
  double mu = 0.5;
  double a = 1.0;
  std::size_t cells = 0, skipped = 0;
  double min_log_ratio = 0.0, max_log_ratio = 0.0, spread = 0.0;
  EnvelopeCell argmin, argmax;
  double min_log_rewrite = 0.0, max_log_rewrite = 0.0, rewrite_spread = 0.0;
  double max_identity_residual = 0.0;
  std::size_t above_free = 0;          // cells with p_1 > p
  std::size_t negative = 0;            // cells where a solver reported a negative kernel
  std::array<RegimeStats, 4> regimes{};
  std::vector<EnvelopeCell> cell_values;
  friend bool operator==(const EnvelopeSummary&, const EnvelopeSummary&) = default;
};

struct EnvelopeReport {
  std::vector<EnvelopeSummary> per_mu;
  friend bool operator==(const EnvelopeReport&, const EnvelopeReport&) = default;
};

/// log p_a(t,x,y) for the spec's barrier a through a unit-barrier provider.
inline KernelProvider::Value killed_at_barrier(const KernelProvider& kp, double mu, double a, double t, double x,
                                               double y) {
  auto v = kp.killed(mu, t / (a * a), x / a, y / a);
  if (v.log_p1 != kNegInf) v.log_p1 -= std::log(a);
  return v;
}

/// Fills every summary field of s from s.cell_values.
inline void summarize(EnvelopeSummary& s) {
  const double mu = s.mu, a = s.a;
  auto cells = std::move(s.cell_values);
  s = EnvelopeSummary{};
  s.mu = mu;
  s.a = a;
  bool first = true;
  for (const auto& c : cells) {
    if (c.skipped) {
      ++s.skipped;
      if (c.reason.rfind("negative kernel", 0) == 0) ++s.negative;
      continue;
    }
    ++s.cells;
    s.above_free += c.above_free ? 1 : 0;
    s.max_identity_residual = std::max(s.max_identity_residual, c.identity_residual);
    auto& r = s.regimes[static_cast<std::size_t>(c.regime)];
    if (r.cells++ == 0) r.min_log_ratio = r.max_log_ratio = c.log_ratio;
    r.min_log_ratio = std::min(r.min_log_ratio, c.log_ratio);
    r.max_log_ratio = std::max(r.max_log_ratio, c.log_ratio);
    if (first) {
      s.min_log_ratio = s.max_log_ratio = c.log_ratio;
      s.min_log_rewrite = s.max_log_rewrite = c.log_rewrite_ratio;
      s.argmin = s.argmax = c;
      first = false;
      continue;
    }
    if (c.log_ratio < s.min_log_ratio) {
      s.min_log_ratio = c.log_ratio;
      s.argmin = c;
    }
    if (c.log_ratio > s.max_log_ratio) {
      s.max_log_ratio = c.log_ratio;
      s.argmax = c;
    }
    s.min_log_rewrite = std::min(s.min_log_rewrite, c.log_rewrite_ratio);
    s.max_log_rewrite = std::max(s.max_log_rewrite, c.log_rewrite_ratio);
  }
  s.spread = s.max_log_ratio - s.min_log_ratio;
  s.rewrite_spread = s.max_log_rewrite - s.min_log_rewrite;
  s.cell_values = std::move(cells);
}

/// One envelope cell at barrier a.
inline EnvelopeCell envelope_cell(const KernelProvider& kp, double mu, double a, double t, double x, double y) {
  EnvelopeCell c{t, x, y};
  const KernelQuery q{t, x, y, a};
  c.regime = (x * y >= t ? 1 : 0) + ((x - a) * (y - a) >= t ? 2 : 0);
  try {
    const auto v = killed_at_barrier(kp, mu, a, t, x, y);
    c.method = v.method;
    if (v.log_p1 == kNegInf) throw KernelUnavailable("kernel underflow");
    const double lp = log_free_kernel(mu, t, x, y).log();
    const double lenv = log_envelope(mu, q).log_val.log();
    c.log_ratio = v.log_p1 - lenv;
    c.log_rewrite_ratio = v.log_p1 - lp - log_boundary_factor(q);
    c.identity_residual = std::abs(c.log_ratio - c.log_rewrite_ratio - (lp - log_free_envelope(mu, t, x, y).log()));
    c.above_free = v.log_p1 > lp + detail::slack_for(v.method, lp);
  } catch (const KernelUnavailable& e) {
    c = EnvelopeCell{t, x, y};
    c.regime = (x * y >= t ? 1 : 0) + ((x - a) * (y - a) >= t ? 2 : 0);
    c.skipped = true;
    c.reason = e.what();
  }
  return c;
}

/// Per mu, log p_a - log envelope over all cells with min/max, argmin/argmax, regime
/// split and the rewrite-form ratio log(p_a/p) - log boundary factor.
inline EnvelopeReport run_envelope_report(const GridSpec& spec, std::shared_ptr<const KernelProvider> provider = {}) {
  spec.validate();
  if (!provider) provider = make_provider(spec);
  const KernelProvider& kp = *provider;
  EnvelopeReport rep;
  for (double mu : spec.mu_list) {
    EnvelopeSummary s;
    s.mu = mu;
    s.a = spec.a;
    std::vector<std::array<double, 3>> pts;
    for (double t : spec.t_grid)
      for (double x : spec.x_grid)
        for (double y : spec.y_grid) pts.push_back({t, x, y});
    s.cell_values.resize(pts.size());
    parallel_for(pts.size(), spec.threads, [&](std::size_t i) {
      s.cell_values[i] = envelope_cell(kp, mu, spec.a, pts[i][0], pts[i][1], pts[i][2]);
    });
    summarize(s);
    rep.per_mu.push_back(std::move(s));
  }
  return rep;
}

}  // namespace bkk

#endif  // BKK_CERTIFY_HPP
