#ifndef BKK_MC_HPP
#define BKK_MC_HPP

// Monte Carlo for the Bessel process dR = dB + (mu + 1/2)/R dt started at x,
// killed at its first visit to 1.
//
// Euler-Maruyama steps. Between two grid values above the barrier the path
// may still have dipped below 1; with bridge_correction each step multiplies
// the path weight by 1 - exp(-2(R_i - 1)(R_{i+1} - 1)/dt), the probability
// that a Brownian bridge between them stays above 1. Paths that land at or
// below 1 are killed outright.
//
// Each path draws from its own xoshiro256++ stream seeded by (seed, path), and
// sums are taken over fixed chunks of paths merged in order, so estimates are
// bit-identical for any thread count.

#include <bkk/errors.hpp>
#include <bkk/parallel.hpp>

#include <boost/random/normal_distribution.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

namespace bkk {

struct McConfig {
  std::size_t n_paths = 1'000'000;
  double dt = 0.0;                // 0 selects t / 512
  std::uint64_t seed = 20'240'611;
  bool bridge_correction = true;
  double local_step_scale = 0.0025;  // steps are also capped at scale * R^2 where the drift varies fast
  unsigned threads = 0;            // 0: BKK_THREADS or machine parallelism

  double step_for(double t) const { return dt > 0.0 ? dt : t / 512.0; }

  void validate(double t) const {
    detail::require(n_paths >= 1000, "n_paths must be >= 1000");
    detail::require(std::isfinite(t) && t > 0.0, "t must be positive");
    detail::require(dt >= 0.0 && step_for(t) <= t / 64.0, "dt must not exceed t/64");
    detail::require(local_step_scale > 0.0, "local_step_scale must be positive");
  }
};

struct McEstimate {
  double mean = 0.0;
  double std_err = 0.0;
  std::size_t n = 0;
};

struct Bin {
  double lo = 1.0;
  double hi = 2.0;
};

/// xoshiro256++ seeded through splitmix64.
class Xoshiro256pp {
public:
  using result_type = std::uint64_t;
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  explicit Xoshiro256pp(std::uint64_t seed) {
    for (auto& w : s_) w = splitmix64(seed);
  }

  result_type operator()() {
    const std::uint64_t out = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return out;
  }

  static std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Independent stream for one path.
  static Xoshiro256pp for_path(std::uint64_t seed, std::uint64_t path) {
    std::uint64_t s = seed;
    const std::uint64_t a = splitmix64(s);
    std::uint64_t k = a ^ (path * 0xd1b54a32d192ed03ULL);
    return Xoshiro256pp(splitmix64(k));
  }

private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  std::uint64_t s_[4]{};
};

/// One Euler-Maruyama step; nonpositive results are clamped to a tiny positive value.
inline double path_step(double mu, double r, double dt, double gaussian_draw) {
  detail::require(r > 0.0, "path_step needs r > 0");
  const double next = r + (mu + 0.5) / r * dt + std::sqrt(dt) * gaussian_draw;
  return next > 0.0 ? next : 1e-12;
}

namespace detail {

struct PathOutcome {
  double weight;  // survival weight; 0 when killed
  double r;       // position at time t
};

template <class Rng>
PathOutcome run_path(double mu, double x, double t, double dt, const McConfig& cfg, bool killed, Rng& rng) {
  boost::random::normal_distribution<double> normal;  // ziggurat
  double r = x, s = 0.0, weight = 1.0;
  while (s < t) {
    double h = std::min(dt, cfg.local_step_scale * r * r);
    if (t - s <= h * (1.0 + 1e-9)) h = t - s;
    const double next = path_step(mu, r, h, normal(rng));
    s += h;
    if (killed) {
      if (next <= 1.0) return {0.0, next};
      if (cfg.bridge_correction) {
        weight *= -std::expm1(-2.0 * (r - 1.0) * (next - 1.0) / h);
        if (weight < 1e-300) return {0.0, next};
      }
    }
    r = next;
  }
  return {weight, r};
}

// Sums of weight and weight^2 for the survival and for each bin over all paths.
inline std::vector<double> simulate_sums(double mu, double x, double t, const std::vector<Bin>& bins,
                                         const McConfig& cfg, bool killed) {
  require(std::isfinite(mu) && mu != 0.0, "mu must be nonzero");
  require(std::isfinite(x) && x > (killed ? 1.0 : 0.0), killed ? "x must exceed 1" : "x must be positive");
  cfg.validate(t);
  for (std::size_t i = 0; i < bins.size(); ++i) {
    require(bins[i].lo < bins[i].hi, "bins must have lo < hi");
    require(i == 0 || bins[i - 1].hi <= bins[i].lo, "bins must be disjoint and ordered");
  }
  const double dt = cfg.step_for(t);
  const std::size_t width = 2 * (bins.size() + 1);
  constexpr std::size_t chunk = 4096;
  const std::size_t chunks = (cfg.n_paths + chunk - 1) / chunk;
  std::vector<std::vector<double>> partial(chunks, std::vector<double>(width, 0.0));
  parallel_for(chunks, cfg.threads, [&](std::size_t c) {
    auto& acc = partial[c];
    const std::size_t end = std::min(cfg.n_paths, (c + 1) * chunk);
    for (std::size_t p = c * chunk; p < end; ++p) {
      auto rng = Xoshiro256pp::for_path(cfg.seed, p);
      const auto out = run_path(mu, x, t, dt, cfg, killed, rng);
      if (out.weight == 0.0) continue;
      acc[0] += out.weight;
      acc[1] += out.weight * out.weight;
      const auto it = std::upper_bound(bins.begin(), bins.end(), out.r, [](double v, const Bin& b) { return v < b.hi; });
      if (it != bins.end() && out.r >= it->lo) {
        const std::size_t k = 2 * (1 + (it - bins.begin()));
        acc[k] += out.weight;
        acc[k + 1] += out.weight * out.weight;
      }
    }
  });
  std::vector<double> total(width, 0.0);
  for (const auto& acc : partial)
    for (std::size_t k = 0; k < width; ++k) total[k] += acc[k];
  return total;
}

inline McEstimate estimate(double sum, double sum_sq, std::size_t n) {
  const double nn = static_cast<double>(n);
  const double mean = sum / nn;
  const double var = std::max(0.0, sum_sq / nn - mean * mean) * nn / (nn - 1.0);
  return {mean, std::sqrt(var / nn), n};
}

}  // namespace detail

struct McRun {
  McEstimate survival;
  std::vector<McEstimate> bins;  // mass of the killed kernel in each bin
};

/// Survival and killed-kernel bin masses from one set of paths.
inline McRun simulate_killed(double mu, double x, double t, const std::vector<Bin>& bins, const McConfig& cfg = {}) {
  const auto sums = detail::simulate_sums(mu, x, t, bins, cfg, true);
  McRun run;
  run.survival = detail::estimate(sums[0], sums[1], cfg.n_paths);
  for (std::size_t i = 0; i < bins.size(); ++i)
    run.bins.push_back(detail::estimate(sums[2 * (i + 1)], sums[2 * (i + 1) + 1], cfg.n_paths));
  return run;
}

/// P_x(T_1 > t).
inline McEstimate simulate_survival(double mu, double x, double t, const McConfig& cfg = {}) {
  return simulate_killed(mu, x, t, {}, cfg).survival;
}

/// int_bin p_1(t,x,y) dy for each bin.
inline std::vector<McEstimate> simulate_killed_histogram(double mu, double x, double t, const std::vector<Bin>& bins,
                                                         const McConfig& cfg = {}) {
  return simulate_killed(mu, x, t, bins, cfg).bins;
}

/// int_bin p(t,x,y) dy for the process without killing; validates the stepping itself.
inline std::vector<McEstimate> simulate_free_histogram(double mu, double x, double t, const std::vector<Bin>& bins,
                                                       const McConfig& cfg = {}) {
  const auto sums = detail::simulate_sums(mu, x, t, bins, cfg, false);
  std::vector<McEstimate> out;
  for (std::size_t i = 0; i < bins.size(); ++i)
    out.push_back(detail::estimate(sums[2 * (i + 1)], sums[2 * (i + 1) + 1], cfg.n_paths));
  return out;
}

}  // namespace bkk

#endif  // BKK_MC_HPP
