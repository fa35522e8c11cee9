// bkk: command-line front end for the killed-kernel library.
//
//   bkk eval      one kernel value by a chosen method
//   bkk table     a quantity over a (t, x, y) grid
//   bkk certify   inequality suite and envelope report, written to files
//   bkk simulate  Monte Carlo survival and killed-kernel histogram
//   bkk pde-solve one PDE solve, slices at several times
//
// Exit codes: 0 success, 1 certify found hard-check failures, 2 invalid input,
// 3 numerical failure, 4 output file could not be written.

#include <bkk/bkk.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace {

using bkk::Json;

#ifndef BKK_VERSION
#define BKK_VERSION "unknown"
#endif

constexpr const char* kCliSchema = "bkk.cli/1";

struct IoFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t tt = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Non-finite values (log of an underflowed kernel) are written as strings.
Json jnum(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

std::string human(const Json& v) {
  if (v.is_number_float()) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v.get<double>());
    return buf;
  }
  if (v.is_string()) return v.get<std::string>();
  if (v.is_null()) return "-";
  return v.dump();
}

bool is_row_array(const Json& v) { return v.is_array() && !v.empty() && v.front().is_object(); }

void print_table(std::ostream& os, const Json& rows) {
  std::vector<std::string> cols;
  for (const auto& [k, _] : rows.front().items()) cols.push_back(k);
  std::vector<std::vector<std::string>> cells;
  std::vector<std::size_t> width;
  for (const auto& c : cols) width.push_back(c.size());
  for (const auto& r : rows) {
    std::vector<std::string> line;
    for (std::size_t i = 0; i < cols.size(); ++i) {
      line.push_back(r.contains(cols[i]) ? human(r[cols[i]]) : "");
      width[i] = std::max(width[i], line.back().size());
    }
    cells.push_back(std::move(line));
  }
  auto emit = [&](const std::vector<std::string>& line) {
    for (std::size_t i = 0; i < line.size(); ++i) {
      os << (i ? "  " : "") << line[i];
      if (i + 1 < line.size()) os << std::string(width[i] - line[i].size(), ' ');
    }
    os << "\n";
  };
  emit(cols);
  for (const auto& line : cells) emit(line);
}

void print_human(std::ostream& os, const Json& obj, const std::string& prefix = "") {
  std::vector<std::pair<std::string, const Json*>> tables;
  for (const auto& [k, v] : obj.items()) {
    if (is_row_array(v)) {
      tables.emplace_back(prefix + k, &v);
    } else if (v.is_object()) {
      print_human(os, v, prefix + k + ".");
    } else if (v.is_array()) {
      std::string s;
      for (const auto& e : v) s += (s.empty() ? "" : " ") + human(e);
      os << prefix << k << ": " << s << "\n";
    } else {
      os << prefix << k << ": " << human(v) << "\n";
    }
  }
  for (const auto& [name, rows] : tables) {
    os << "\n" << name << ":\n";
    print_table(os, *rows);
  }
}

struct Globals {
  bool json = false;
  unsigned threads = 0;
};

struct Manifest {
  std::string command;
  std::vector<std::string> argv;
  std::string config;
  std::string started = utc_now();
  Json seeds = Json::object();

  Json to_json() const {
    Json m;
    m["tool"] = "bkk";
    m["version"] = BKK_VERSION;
    m["command"] = command;
    m["argv"] = argv;
    m["config"] = config;
    m["seeds"] = seeds;
    m["started_utc"] = started;
    m["finished_utc"] = utc_now();
    return m;
  }
};

void write_file(const std::string& path, const std::string& text) {
  const auto parent = std::filesystem::path(path).parent_path();
  std::error_code ec;
  if (!parent.empty()) std::filesystem::create_directories(parent, ec);
  std::ofstream out(path, std::ios::binary);
  if (!out || !(out << text) || !out.flush()) throw IoFailure("cannot write " + path);
}

void emit(const Globals& g, const Manifest& man, const Json& result) {
  if (g.json) {
    Json doc;
    doc["schema_version"] = kCliSchema;
    doc["manifest"] = man.to_json();
    doc["result"] = result;
    std::cout << doc.dump(1) << "\n";
  } else {
    print_human(std::cout, result);
  }
}

enum class EvalMethod { automatic, closed, hunt, pde, mc };

const std::map<std::string, EvalMethod> kEvalMethods{{"auto", EvalMethod::automatic},
                                                     {"closed", EvalMethod::closed},
                                                     {"hunt", EvalMethod::hunt},
                                                     {"pde", EvalMethod::pde},
                                                     {"mc", EvalMethod::mc}};

const char* method_name(EvalMethod m) {
  switch (m) {
    case EvalMethod::automatic: return "auto";
    case EvalMethod::closed: return "closed_form";
    case EvalMethod::hunt: return "hunt";
    case EvalMethod::pde: return "pde";
    case EvalMethod::mc: return "mc";
  }
  return "unknown";
}

EvalMethod resolve(EvalMethod m, double mu) {
  if (m == EvalMethod::automatic) return bkk::is_half_index(mu) ? EvalMethod::closed : EvalMethod::pde;
  if (m == EvalMethod::closed) bkk::detail::require(bkk::is_half_index(mu), "closed form needs |mu| = 1/2");
  return m;
}

struct PdeOptions {
  int nodes = bkk::PdeConfig{}.nodes;
  double steps_per_efold = bkk::PdeConfig{}.steps_per_efold;
  double domain_cap = 0.0;

  void add(CLI::App* app) {
    app->add_option("--nodes", nodes, "PDE grid nodes")->capture_default_str();
    app->add_option("--steps-per-efold", steps_per_efold, "PDE time steps per e-fold of t")->capture_default_str();
    app->add_option("--domain-cap", domain_cap, "PDE far boundary L on the unit barrier; 0 picks it")
        ->capture_default_str();
  }

  bkk::PdeConfig config() const {
    bkk::PdeConfig c;
    c.nodes = nodes;
    c.steps_per_efold = steps_per_efold;
    c.domain_cap = domain_cap;
    c.validate();
    return c;
  }
};

// PDE values at the unit barrier by slice lookup, at any index including +-1/2.
double pde_log_killed(const bkk::KernelProvider& kp, double mu, const bkk::KernelQuery& u) {
  const double m = std::abs(mu);
  double v = kp.slice(m, u.x, u.t).at(u.y).log();
  if (mu < 0.0 && v != bkk::kNegInf) v += bkk::reflect_index(m, u);
  return v;
}

double pde_log_survival(const bkk::KernelProvider& kp, double mu, double x, double t) {
  const double m = std::abs(mu);
  return kp.slice(m, x, t).survival({1e-9}, mu < 0.0 ? 2.0 * m : 0.0).log();
}

double pde_log_hitting(const bkk::KernelProvider& kp, double mu, double x, double s) {
  const double m = std::abs(mu);
  const double v = bkk::flux_source(kp.run(m, x).flux).log_density(s).log();
  return mu < 0.0 && v != bkk::kNegInf ? v + 2.0 * m * std::log(x) : v;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  double mu = 0.5, t = 1.0, x = 2.0, y = 2.0, a = 1.0;
  EvalMethod method = EvalMethod::automatic;
  PdeOptions pde;
  double rel_tol = 1e-10;
  std::size_t paths = 1'000'000;
  std::uint64_t seed = bkk::McConfig{}.seed;
  double dt = 0.0;
  double bin_fraction = 0.01;
};

Json run_eval(const EvalArgs& e, const Globals& g, Manifest& man) {
  bkk::detail::require_index(e.mu);
  const bkk::KernelQuery q{e.t, e.x, e.y, e.a};
  q.validate();
  const auto u = bkk::reduce_to_unit_barrier(e.mu, q);
  const EvalMethod m = resolve(e.method, e.mu);

  Json r;
  r["mu"] = e.mu;
  r["t"] = e.t;
  r["x"] = e.x;
  r["y"] = e.y;
  r["a"] = e.a;
  r["method"] = method_name(m);
  double log_p1 = bkk::kNegInf;
  Json extra = Json::object();

  switch (m) {
    case EvalMethod::automatic:
    case EvalMethod::closed: log_p1 = bkk::log_half_family_killed(e.mu, q).log(); break;
    case EvalMethod::pde: {
      const bkk::KernelProvider kp({u.q.t}, u.q.y, e.pde.config());
      log_p1 = pde_log_killed(kp, e.mu, u.q);
      if (log_p1 != bkk::kNegInf) log_p1 += u.log_jacobian;
      break;
    }
    case EvalMethod::hunt: {
      const bkk::QuadratureConfig qc{e.rel_tol};
      qc.validate();
      std::optional<bkk::KernelProvider> kp;
      bkk::HittingDensitySource src;
      if (bkk::is_half_index(e.mu)) {
        src = bkk::exact_half_source(u.q.x, e.mu);
      } else {
        kp.emplace(std::vector<double>{u.q.t}, u.q.y, e.pde.config());
        src = kp->hitting(e.mu, u.q.x);
      }
      const auto h = bkk::killed_kernel_via_hunt(e.mu, u.q, src, qc);
      log_p1 = h.log_p1.log();
      if (log_p1 != bkk::kNegInf) log_p1 += u.log_jacobian;
      extra["source"] = bkk::to_string(src.kind);
      extra["rel_error_r"] = jnum(h.rel_error_r);
      extra["cancellation_digits"] = jnum(h.cancellation_digits);
      extra["cancellation_warning"] = h.cancellation_warning;
      break;
    }
    case EvalMethod::mc: {
      bkk::McConfig mc;
      mc.n_paths = e.paths;
      mc.seed = e.seed;
      mc.dt = e.dt;
      mc.threads = g.threads;
      mc.validate(u.q.t);
      bkk::detail::require(e.bin_fraction > 0.0 && e.bin_fraction <= 0.5, "bin-fraction must lie in (0, 1/2]");
      const double h = e.bin_fraction * std::min(u.q.y - 1.0, std::sqrt(u.q.t));
      const auto run = bkk::simulate_killed(e.mu, u.q.x, u.q.t, {{u.q.y - h, u.q.y + h}}, mc);
      const double density = run.bins[0].mean / (2.0 * h) / e.a;
      log_p1 = density > 0.0 ? std::log(density) : bkk::kNegInf;
      extra["std_err"] = run.bins[0].std_err / (2.0 * h) / e.a;
      extra["bin_halfwidth"] = h * e.a;
      extra["paths"] = e.paths;
      extra["survival"] = run.survival.mean;
      extra["survival_std_err"] = run.survival.std_err;
      man.seeds["mc"] = e.seed;
      break;
    }
  }

  const double log_p = bkk::log_free_kernel(e.mu, q).log();
  const double log_env = bkk::log_envelope(e.mu, q).log_val.log();
  r["log_p1"] = jnum(log_p1);
  r["p1"] = std::exp(log_p1);
  r["log_p"] = jnum(log_p);
  r["log_envelope"] = jnum(log_env);
  r["log_ratio"] = jnum(log_p1 - log_env);
  for (const auto& [k, v] : extra.items()) r[k] = v;
  return r;
}

// ---------------------------------------------------------------- table

struct TableArgs {
  std::string quantity = "p1";
  double mu = 0.5, a = 1.0;
  std::vector<double> t, x, y;
  EvalMethod method = EvalMethod::automatic;
  PdeOptions pde;
  std::string out;
  std::string format = "csv";
};

Json run_table(const TableArgs& ta, const Globals& g, Manifest& man) {
  bkk::detail::require_index(ta.mu);
  const std::string& qn = ta.quantity;
  const bool kernel = qn == "p1" || qn == "p" || qn == "envelope" || qn == "ratio";
  bkk::detail::require(kernel || qn == "survival" || qn == "q", "quantity must be p1, p, envelope, ratio, survival or q");
  bkk::detail::require(std::isfinite(ta.a) && ta.a > 0.0, "a must be positive");
  bkk::detail::require(!ta.t.empty() && !ta.x.empty() && (!kernel || !ta.y.empty()), "grids must be nonempty");
  for (double t : ta.t) bkk::detail::require(std::isfinite(t) && t > 0.0, "t must be positive");
  for (double x : ta.x) bkk::detail::require(std::isfinite(x) && x > ta.a, "x must exceed a");
  if (kernel)
    for (double y : ta.y) bkk::detail::require(std::isfinite(y) && y > ta.a, "y must exceed a");
  bkk::detail::require(ta.method != EvalMethod::hunt && ta.method != EvalMethod::mc, "table supports auto, closed and pde");
  const bool needs_kernel = qn == "p1" || qn == "ratio" || qn == "survival" || qn == "q";
  const EvalMethod m = needs_kernel ? resolve(ta.method, ta.mu) : EvalMethod::closed;
  const double a = ta.a;

  std::optional<bkk::KernelProvider> kp;
  if (m == EvalMethod::pde) {
    std::vector<double> times;
    for (double t : ta.t) times.push_back(t / (a * a));
    double y_max = 0.0;
    for (double x : ta.x) y_max = std::max(y_max, x / a);
    if (kernel)
      for (double y : ta.y) y_max = std::max(y_max, y / a);
    kp.emplace(times, y_max, ta.pde.config());
    std::vector<std::pair<double, double>> keys;
    for (double x : ta.x) keys.emplace_back(std::abs(ta.mu), x / a);
    kp->prefetch(keys, g.threads);
  }

  auto log_p1 = [&](double t, double x, double y) {
    const bkk::KernelQuery q{t, x, y, a};
    if (m == EvalMethod::closed) return bkk::log_half_family_killed(ta.mu, q).log();
    const auto u = bkk::reduce_to_unit_barrier(ta.mu, q);
    const double v = pde_log_killed(*kp, ta.mu, u.q);
    return v == bkk::kNegInf ? v : v + u.log_jacobian;
  };

  Json rows = Json::array();
  for (double t : ta.t)
    for (double x : ta.x) {
      if (!kernel) {
        double v;
        const double tu = t / (a * a), xu = x / a;
        if (qn == "survival") {
          v = m == EvalMethod::closed ? bkk::log_half_family_survival(ta.mu, xu, tu).log()
                                      : pde_log_survival(*kp, ta.mu, xu, tu);
        } else {
          v = m == EvalMethod::closed ? bkk::log_half_family_hitting(ta.mu, xu, tu).log()
                                      : pde_log_hitting(*kp, ta.mu, xu, tu);
          if (v != bkk::kNegInf) v -= 2.0 * std::log(a);
        }
        Json row;
        row[qn == "q" ? "s" : "t"] = t;
        row["x"] = x;
        row["log_" + qn] = jnum(v);
        row[qn] = std::exp(v);
        row["method"] = method_name(m);
        rows.push_back(row);
        continue;
      }
      for (double y : ta.y) {
        const bkk::KernelQuery q{t, x, y, a};
        double v;
        if (qn == "p") v = bkk::log_free_kernel(ta.mu, q).log();
        else if (qn == "envelope") v = bkk::log_envelope(ta.mu, q).log_val.log();
        else if (qn == "p1") v = log_p1(t, x, y);
        else v = log_p1(t, x, y) - bkk::log_envelope(ta.mu, q).log_val.log();
        Json row;
        row["t"] = t;
        row["x"] = x;
        row["y"] = y;
        row["log_" + qn] = jnum(v);
        row[qn] = std::exp(v);
        row["method"] = method_name(m);
        rows.push_back(row);
      }
    }

  Json r;
  r["quantity"] = qn;
  r["mu"] = ta.mu;
  r["a"] = a;
  r["method"] = method_name(m);
  r["pde_solves"] = kp ? kp->solves() : 0;
  r["rows"] = rows;
  if (!ta.out.empty()) {
    bkk::detail::require(ta.format == "csv" || ta.format == "json", "format must be csv or json");
    const Json manifest = man.to_json();
    std::string text;
    if (ta.format == "json") {
      Json doc;
      doc["schema_version"] = kCliSchema;
      doc["manifest"] = manifest;
      doc["result"] = r;
      text = doc.dump(1) + "\n";
    } else {
      std::ostringstream os;
      os << "# manifest " << manifest.dump() << "\n";
      std::vector<std::string> cols;
      for (const auto& [k, _] : rows.front().items()) cols.push_back(k);
      for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
      os << "\n";
      for (const auto& row : rows) {
        for (std::size_t i = 0; i < cols.size(); ++i) {
          const auto& v = row[cols[i]];
          os << (i ? "," : "");
          if (v.is_number_float()) os << bkk::detail::num(v.get<double>());
          else if (v.is_string()) os << v.get<std::string>();
          else os << v.dump();
        }
        os << "\n";
      }
      text = os.str();
    }
    write_file(ta.out, text);
    r["file"] = ta.out;
  }
  return r;
}

// ---------------------------------------------------------------- certify

struct CertifyArgs {
  std::vector<double> mu = bkk::GridSpec::default_grid().mu_list;
  double t_min = 1e-3, t_max = 1e3;
  int t_points = 12;
  double x_offset_min = 1e-3, x_offset_max = 1e3;
  int x_points = 12;
  double y_offset_min = 1e-3, y_offset_max = 1e3;
  int y_points = 12;
  double a = 1.0;
  std::vector<double> barriers{2.0, 10.0};
  int scaling_samples = 3;
  double hunt_fraction = 0.1, mc_fraction = 0.01;
  std::size_t mc_paths = 10'000;
  std::uint64_t sample_seed = 17;
  std::uint64_t mc_seed = bkk::McConfig{}.seed;
  PdeOptions pde;
  std::string out = "bkk_certify";
  std::string format = "json";
};

bkk::GridSpec certify_spec(const CertifyArgs& c, const Globals& g) {
  bkk::detail::require(c.t_points >= 1 && c.x_points >= 1 && c.y_points >= 1, "grid point counts must be >= 1");
  bkk::detail::require(c.x_offset_min > 0.0 && c.y_offset_min > 0.0, "x must exceed a");
  bkk::GridSpec s;
  s.mu_list = c.mu;
  s.t_grid = bkk::log_spaced(c.t_min, c.t_max, c.t_points);
  for (double d : bkk::log_spaced(c.x_offset_min, c.x_offset_max, c.x_points)) s.x_grid.push_back(c.a + d);
  for (double d : bkk::log_spaced(c.y_offset_min, c.y_offset_max, c.y_points)) s.y_grid.push_back(c.a + d);
  s.a = c.a;
  s.scaling_barriers = c.barriers;
  s.scaling_samples = c.scaling_samples;
  s.pde = c.pde.config();
  s.mc.n_paths = c.mc_paths;
  s.mc.seed = c.mc_seed;
  s.mc.threads = g.threads;
  s.hunt_fraction = c.hunt_fraction;
  s.mc_fraction = c.mc_fraction;
  s.sample_seed = c.sample_seed;
  s.threads = g.threads;
  s.validate();
  return s;
}

Json run_certify(const CertifyArgs& c, const Globals& g, Manifest& man, int& exit_code) {
  const bkk::ReportFormat fmt = bkk::report_format_from_string(c.format);
  const auto spec = certify_spec(c, g);
  man.seeds["sample"] = c.sample_seed;
  man.seeds["mc"] = c.mc_seed;

  const auto provider = bkk::make_provider(spec);
  const auto checks = bkk::run_inequality_suite(spec, provider);
  const auto env = bkk::run_envelope_report(spec, provider);

  const std::string ext = fmt == bkk::ReportFormat::json ? ".json" : ".csv";
  const auto checks_path = (std::filesystem::path(c.out) / ("checks" + ext)).string();
  const auto env_path = (std::filesystem::path(c.out) / ("envelope" + ext)).string();
  const Json manifest = man.to_json();
  write_file(checks_path, bkk::emit_report(checks, fmt, manifest));
  write_file(env_path, bkk::emit_report(env, fmt, manifest));

  Json r;
  const bool ok = bkk::all_hard_checks_pass(checks);
  r["all_hard_checks_pass"] = ok;
  r["pde_solves"] = provider->solves();
  r["files"] = {{"checks", checks_path}, {"envelope", env_path}};
  Json rows = Json::array();
  for (const auto& ch : checks) {
    Json row;
    row["check"] = ch.check_id;
    row["hard"] = ch.hard;
    row["status"] = ch.passed() ? (ch.cells_failed ? "soft-fail" : "pass") : "FAIL";
    row["cells"] = ch.cells_total;
    row["failed"] = ch.cells_failed;
    row["skipped"] = ch.cells_skipped;
    row["worst_margin"] = jnum(ch.worst_margin);
    rows.push_back(row);
  }
  r["checks"] = rows;
  Json envs = Json::array();
  for (const auto& s : env.per_mu) {
    Json row;
    row["mu"] = s.mu;
    row["cells"] = s.cells;
    row["skipped"] = s.skipped;
    row["min_log_ratio"] = jnum(s.min_log_ratio);
    row["max_log_ratio"] = jnum(s.max_log_ratio);
    row["spread"] = jnum(s.spread);
    row["above_free"] = s.above_free;
    row["negative"] = s.negative;
    envs.push_back(row);
  }
  r["envelope"] = envs;
  exit_code = ok ? 0 : 1;
  return r;
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
  double mu = 0.5, x = 2.0, t = 1.0, a = 1.0;
  std::size_t paths = 1'000'000;
  std::uint64_t seed = bkk::McConfig{}.seed;
  double dt = 0.0;
  int bins = 0;
  double y_max = 0.0;
  bool no_bridge = false;
};

Json run_simulate(const SimulateArgs& s, const Globals& g, Manifest& man) {
  bkk::detail::require_index(s.mu);
  bkk::detail::require(std::isfinite(s.a) && s.a > 0.0, "a must be positive");
  bkk::detail::require(std::isfinite(s.x) && s.x > s.a, "x must exceed a");
  bkk::detail::require(std::isfinite(s.t) && s.t > 0.0, "t must be positive");
  bkk::detail::require(s.bins >= 0, "bins must be >= 0");
  const double y_max = s.y_max > 0.0 ? s.y_max : s.x + 6.0 * std::sqrt(s.t);
  bkk::detail::require(s.bins == 0 || y_max > s.a, "y-max must exceed a");

  bkk::McConfig mc;
  mc.n_paths = s.paths;
  mc.seed = s.seed;
  mc.dt = s.dt;
  mc.threads = g.threads;
  mc.bridge_correction = !s.no_bridge;
  const double tu = s.t / (s.a * s.a), xu = s.x / s.a;
  mc.validate(tu);
  man.seeds["mc"] = s.seed;

  std::vector<bkk::Bin> bins;
  const double w = s.bins ? (y_max - s.a) / s.bins : 0.0;
  for (int i = 0; i < s.bins; ++i) bins.push_back({(s.a + i * w) / s.a, (s.a + (i + 1) * w) / s.a});
  const auto run = bkk::simulate_killed(s.mu, xu, tu, bins, mc);

  Json r;
  r["mu"] = s.mu;
  r["x"] = s.x;
  r["t"] = s.t;
  r["a"] = s.a;
  r["paths"] = s.paths;
  r["survival"] = run.survival.mean;
  r["survival_std_err"] = run.survival.std_err;
  Json rows = Json::array();
  for (std::size_t i = 0; i < bins.size(); ++i) {
    Json row;
    row["y_lo"] = bins[i].lo * s.a;
    row["y_hi"] = bins[i].hi * s.a;
    row["mass"] = run.bins[i].mean;
    row["mass_std_err"] = run.bins[i].std_err;
    row["density"] = run.bins[i].mean / w;
    rows.push_back(row);
  }
  if (!rows.empty()) r["bins"] = rows;
  return r;
}

// ---------------------------------------------------------------- pde-solve

struct PdeSolveArgs {
  double mu = 1.0, x = 2.0, a = 1.0;
  std::vector<double> t{1.0};
  std::vector<double> y;
  PdeOptions pde;
};

Json run_pde_solve(const PdeSolveArgs& p) {
  bkk::detail::require_index(p.mu);
  bkk::detail::require(std::isfinite(p.a) && p.a > 0.0, "a must be positive");
  bkk::detail::require(std::isfinite(p.x) && p.x > p.a, "x must exceed a");
  bkk::detail::require(!p.t.empty(), "t list must be nonempty");
  for (double t : p.t) bkk::detail::require(std::isfinite(t) && t > 0.0, "t must be positive");
  for (double y : p.y) bkk::detail::require(std::isfinite(y) && y > p.a, "y must exceed a");

  const double a = p.a, xu = p.x / a;
  std::vector<double> times;
  for (double t : p.t) times.push_back(t / (a * a));
  double y_max = xu;
  for (double y : p.y) y_max = std::max(y_max, y / a);
  const bkk::KernelProvider kp(times, y_max, p.pde.config());
  const double m = std::abs(p.mu);
  const auto& run = kp.run(m, xu);

  Json r;
  r["mu"] = p.mu;
  r["x"] = p.x;
  r["a"] = a;
  r["nodes"] = run.slices.front().y().size();
  r["domain_cap"] = run.slices.front().domain_cap() * a;
  Json surv = Json::array();
  Json rows = Json::array();
  for (double t : p.t) {
    const double tu = t / (a * a);
    const double ls = pde_log_survival(kp, p.mu, xu, tu);
    Json srow;
    srow["t"] = t;
    srow["log_survival"] = jnum(ls);
    srow["survival"] = std::exp(ls);
    surv.push_back(srow);
    for (double y : p.y) {
      const bkk::KernelQuery u{tu, xu, y / a, 1.0};
      double v = pde_log_killed(kp, p.mu, u);
      if (v != bkk::kNegInf) v -= std::log(a);
      const bkk::KernelQuery q{t, p.x, y, a};
      Json row;
      row["t"] = t;
      row["y"] = y;
      row["log_p1"] = jnum(v);
      row["p1"] = std::exp(v);
      row["log_ratio_to_free"] = jnum(v - bkk::log_free_kernel(p.mu, q).log());
      rows.push_back(row);
    }
  }
  r["survival"] = surv;
  if (!rows.empty()) r["kernel"] = rows;
  return r;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Killed Bessel-process kernels: evaluation, tables, certification, simulation"};
  app.set_version_flag("--version", std::string("bkk ") + BKK_VERSION);
  app.require_subcommand(1);
  Globals g;
  app.add_flag("--json", g.json, "machine-readable JSON on stdout");
  app.add_option("--threads", g.threads, "worker threads; 0 uses BKK_THREADS or all cores")->capture_default_str();
  app.set_config("--config", "", "INI/TOML file with [subcommand] sections; command-line flags win");
  app.allow_config_extras(CLI::config_extras_mode::error);

  std::string method_name_arg = "auto";
  auto method_opt = [&](CLI::App* sub) {
    sub->add_option("--method", method_name_arg, "auto, closed, hunt, pde or mc")
        ->check(CLI::IsMember({"auto", "closed", "hunt", "pde", "mc"}))
        ->capture_default_str();
  };

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "evaluate log p_a(t,x,y) for one cell");
  eval->add_option("--mu", ea.mu, "index, nonzero")->required();
  eval->add_option("--t", ea.t, "time")->required();
  eval->add_option("--x", ea.x, "start point, > a")->required();
  eval->add_option("--y", ea.y, "end point, > a")->required();
  eval->add_option("--a", ea.a, "barrier")->capture_default_str();
  method_opt(eval);
  ea.pde.add(eval);
  eval->add_option("--rel-tol", ea.rel_tol, "Hunt quadrature relative tolerance")->capture_default_str();
  eval->add_option("--paths", ea.paths, "Monte Carlo paths")->capture_default_str();
  eval->add_option("--seed", ea.seed, "Monte Carlo seed")->capture_default_str();
  eval->add_option("--dt", ea.dt, "Monte Carlo step; 0 uses t/512")->capture_default_str();
  eval->add_option("--bin-fraction", ea.bin_fraction, "MC bin half-width as a share of min(y-a, sqrt t)")
      ->capture_default_str();

  TableArgs ta;
  auto* table = app.add_subcommand("table", "tabulate a quantity over t, x, y lists");
  table->add_option("--quantity", ta.quantity, "p1, p, envelope, ratio, survival or q")->capture_default_str();
  table->add_option("--mu", ta.mu, "index, nonzero")->required();
  table->add_option("--a", ta.a, "barrier")->capture_default_str();
  table->add_option("--t", ta.t, "times (s for q), comma separated")->delimiter(',')->required();
  table->add_option("--x", ta.x, "start points, comma separated")->delimiter(',')->required();
  table->add_option("--y", ta.y, "end points, comma separated; kernel quantities only")->delimiter(',');
  method_opt(table);
  ta.pde.add(table);
  table->add_option("--out", ta.out, "also write the table to this file");
  table->add_option("--format", ta.format, "file format: csv or json")->capture_default_str();

  CertifyArgs ca;
  auto* certify = app.add_subcommand("certify", "run the inequality checks and the envelope report");
  certify->add_option("--mu", ca.mu, "indices, comma separated")->delimiter(',')->capture_default_str();
  certify->add_option("--t-min", ca.t_min)->capture_default_str();
  certify->add_option("--t-max", ca.t_max)->capture_default_str();
  certify->add_option("--t-points", ca.t_points)->capture_default_str();
  certify->add_option("--x-offset-min", ca.x_offset_min, "smallest x - a")->capture_default_str();
  certify->add_option("--x-offset-max", ca.x_offset_max, "largest x - a")->capture_default_str();
  certify->add_option("--x-points", ca.x_points)->capture_default_str();
  certify->add_option("--y-offset-min", ca.y_offset_min, "smallest y - a")->capture_default_str();
  certify->add_option("--y-offset-max", ca.y_offset_max, "largest y - a")->capture_default_str();
  certify->add_option("--y-points", ca.y_points)->capture_default_str();
  certify->add_option("--a", ca.a, "barrier")->capture_default_str();
  certify->add_option("--barriers", ca.barriers, "barriers for the scaling check")->delimiter(',')->capture_default_str();
  certify->add_option("--scaling-samples", ca.scaling_samples, "start points per index for native-barrier solves")
      ->capture_default_str();
  certify->add_option("--hunt-fraction", ca.hunt_fraction, "share of PDE cells cross-checked by Hunt")
      ->capture_default_str();
  certify->add_option("--mc-fraction", ca.mc_fraction, "share of PDE cells cross-checked by simulation")
      ->capture_default_str();
  certify->add_option("--mc-paths", ca.mc_paths)->capture_default_str();
  certify->add_option("--sample-seed", ca.sample_seed, "seed for the cross-check subsamples")->capture_default_str();
  certify->add_option("--mc-seed", ca.mc_seed)->capture_default_str();
  ca.pde.add(certify);
  certify->add_option("--out", ca.out, "output directory")->capture_default_str();
  certify->add_option("--format", ca.format, "json or csv")->capture_default_str();

  SimulateArgs sa;
  auto* simulate = app.add_subcommand("simulate", "Monte Carlo survival and killed-kernel histogram");
  simulate->add_option("--mu", sa.mu, "index, nonzero")->required();
  simulate->add_option("--x", sa.x, "start point, > a")->required();
  simulate->add_option("--t", sa.t, "time")->required();
  simulate->add_option("--a", sa.a, "barrier")->capture_default_str();
  simulate->add_option("--paths", sa.paths)->capture_default_str();
  simulate->add_option("--seed", sa.seed)->capture_default_str();
  simulate->add_option("--dt", sa.dt, "step; 0 uses t/512")->capture_default_str();
  simulate->add_option("--bins", sa.bins, "histogram bins over (a, y-max]")->capture_default_str();
  simulate->add_option("--y-max", sa.y_max, "histogram upper end; 0 uses x + 6 sqrt t")->capture_default_str();
  simulate->add_flag("--no-bridge", sa.no_bridge, "disable the Brownian-bridge crossing correction");

  PdeSolveArgs pa;
  auto* pde = app.add_subcommand("pde-solve", "solve the killed-kernel PDE from one start point");
  pde->add_option("--mu", pa.mu, "index, nonzero")->required();
  pde->add_option("--x", pa.x, "start point, > a")->required();
  pde->add_option("--t", pa.t, "output times, comma separated")->delimiter(',')->required();
  pde->add_option("--y", pa.y, "end points to report, comma separated")->delimiter(',');
  pde->add_option("--a", pa.a, "barrier")->capture_default_str();
  pa.pde.add(pde);

  for (auto* sub : {eval, table, certify, simulate, pde}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "bkk: error: " << e.what() << "\n";
    return 2;
  }

  Manifest man;
  CLI::App* sub = app.get_subcommands().front();
  man.command = sub->get_name();
  man.argv.assign(argv, argv + argc);
  // Loadable again through --config.
  man.config = "[" + sub->get_name() + "]\n" + sub->config_to_str(true, false);

  int code = 0;
  try {
    ea.method = ta.method = kEvalMethods.at(method_name_arg);
    Json result;
    if (sub == eval) result = run_eval(ea, g, man);
    else if (sub == table) result = run_table(ta, g, man);
    else if (sub == certify) result = run_certify(ca, g, man, code);
    else if (sub == simulate) result = run_simulate(sa, g, man);
    else result = run_pde_solve(pa);
    emit(g, man, result);
  } catch (const std::domain_error& e) {
    std::cerr << "bkk: invalid input: " << e.what() << "\n";
    return 2;
  } catch (const IoFailure& e) {
    std::cerr << "bkk: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "bkk: numerical failure: " << e.what() << "\n";
    return 3;
  }
  return code;
}
