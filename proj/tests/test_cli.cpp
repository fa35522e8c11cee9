// End-to-end runs of the bkk binary: exit codes, invariant messages, JSON and
// human output, config files and the certify output files.

#include <bkk/report.hpp>

#include <gtest/gtest.h>
#include <json.hpp>

#include <sys/wait.h>

#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace {

namespace fs = std::filesystem;
using Json = nlohmann::json;

struct Run {
  int code = -1;
  std::string out, err;
};

fs::path scratch_dir() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / ("bkk_cli_test_" + std::to_string(::getpid()));
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Run bkk(const std::string& args, const std::string& env = "") {
  const auto err_file = scratch_dir() / "stderr.txt";
  const std::string cmd = env + " '" BKK_CLI_PATH "' " + args + " 2>'" + err_file.string() + "'";
  Run r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf;
  std::size_t n;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
  const int status = ::pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.err = slurp(err_file);
  return r;
}

struct RemoveScratch : ::testing::Environment {
  void TearDown() override { fs::remove_all(scratch_dir()); }
};
const auto* const kRemoveScratch = ::testing::AddGlobalTestEnvironment(new RemoveScratch);

double num(const Json& v) {
  if (v.is_string()) return v.get<std::string>() == "-inf" ? -INFINITY : NAN;
  return v.get<double>();
}

// Killed density of the index-1/2 process (Brownian motion conditioned to avoid 0)
// at barrier 1: (y/x) [phi_t(y-x) - phi_t(y+x-2)].
double oracle_half(double t, double x, double y) {
  auto phi = [t](double d) { return std::exp(-d * d / (2 * t)) / std::sqrt(2 * M_PI * t); };
  return y / x * (phi(y - x) - phi(y + x - 2));
}

TEST(Cli, EvalHalfIndexMatchesClosedForm) {
  const auto r = bkk("--json eval --mu 0.5 --t 1 --x 2 --y 2");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto doc = Json::parse(r.out);
  EXPECT_EQ(doc["schema_version"], "bkk.cli/1");
  EXPECT_EQ(doc["result"]["method"], "closed_form");
  EXPECT_NEAR(num(doc["result"]["log_p1"]), std::log(oracle_half(1, 2, 2)), 1e-13);
}

TEST(Cli, EvalScalesWithTheBarrier) {
  // p_a(t,x,y) = p_1(t/a^2, x/a, y/a) / a.
  const auto r = bkk("--json eval --mu 0.5 --t 4 --x 4 --y 6 --a 2");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto res = Json::parse(r.out)["result"];
  EXPECT_NEAR(num(res["log_p1"]), std::log(oracle_half(1, 2, 3) / 2), 1e-13);
  const auto rp = bkk("--json eval --mu 1 --t 4 --x 4 --y 6 --a 2 --method pde");
  const auto ru = bkk("--json eval --mu 1 --t 1 --x 2 --y 3 --method pde");
  ASSERT_EQ(rp.code, 0) << rp.err;
  ASSERT_EQ(ru.code, 0) << ru.err;
  EXPECT_NEAR(num(Json::parse(rp.out)["result"]["log_p1"]),
              num(Json::parse(ru.out)["result"]["log_p1"]) - std::log(2.0), 1e-12);
}

TEST(Cli, MethodsAgreeAwayFromTheBarrier) {
  const auto pde = bkk("--json eval --mu 1 --t 1 --x 2 --y 2.5 --method pde");
  const auto hunt = bkk("--json eval --mu 1 --t 1 --x 2 --y 2.5 --method hunt");
  const auto mc = bkk("--json eval --mu 1 --t 1 --x 2 --y 2.5 --method mc --paths 200000 --bin-fraction 0.05");
  ASSERT_EQ(pde.code, 0) << pde.err;
  ASSERT_EQ(hunt.code, 0) << hunt.err;
  ASSERT_EQ(mc.code, 0) << mc.err;
  const double lp = num(Json::parse(pde.out)["result"]["log_p1"]);
  EXPECT_NEAR(num(Json::parse(hunt.out)["result"]["log_p1"]), lp, 1e-4);
  const auto m = Json::parse(mc.out)["result"];
  // The bin average differs from the point value by O(h^2) relative, far below 4 std_err here.
  EXPECT_NEAR(num(m["p1"]), std::exp(lp), 4 * num(m["std_err"]) + 1e-3);
}

TEST(Cli, InvalidInputExitsTwoWithTheInvariant) {
  auto r = bkk("eval --mu 0 --t 1 --x 2 --y 2");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("mu must be nonzero"), std::string::npos) << r.err;
  r = bkk("eval --mu 1 --t 1 --x 0.5 --y 2");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("x must exceed a"), std::string::npos) << r.err;
  r = bkk("eval --mu 0.5 --t 1 --x 3 --y 3 --a 3");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("x must exceed a"), std::string::npos) << r.err;
  r = bkk("eval --mu 1 --t -1 --x 2 --y 2");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("t must be positive"), std::string::npos) << r.err;
  r = bkk("eval --mu 1 --t 1 --x 2 --y 2 --method closed");
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(bkk("eval --mu 1 --t 1 --x 2").code, 2);
  EXPECT_EQ(bkk("eval --mu 1 --t 1 --x 2 --y 2 --method bogus").code, 2);
  EXPECT_EQ(bkk("nonsense").code, 2);
  EXPECT_EQ(bkk("table --mu 1 --quantity bogus --t 1 --x 2 --y 2").code, 2);
  EXPECT_EQ(bkk("certify --mu 0.5,0 --out '" + (scratch_dir() / "bad").string() + "'").code, 2);
  EXPECT_EQ(bkk("--help").code, 0);
}

TEST(Cli, HumanOutputRoundsTheJsonValues) {
  const auto h = bkk("eval --mu 0.5 --t 1 --x 2 --y 2");
  const auto j = bkk("--json eval --mu 0.5 --t 1 --x 2 --y 2");
  ASSERT_EQ(h.code, 0);
  char expect[64];
  std::snprintf(expect, sizeof expect, "log_p1: %.6g\n", num(Json::parse(j.out)["result"]["log_p1"]));
  EXPECT_NE(h.out.find(expect), std::string::npos) << h.out;
}

TEST(Cli, ConfigFileWithCommandLineOverride) {
  const auto cfg = scratch_dir() / "eval.ini";
  std::ofstream(cfg) << "[eval]\nmu = 0.5\nt = 1\nx = 2\ny = 2\n";
  const auto from_file = bkk("--json eval --config '" + cfg.string() + "'");
  ASSERT_EQ(from_file.code, 0) << from_file.err;
  EXPECT_NEAR(num(Json::parse(from_file.out)["result"]["log_p1"]), std::log(oracle_half(1, 2, 2)), 1e-13);
  const auto overridden = bkk("--json eval --config '" + cfg.string() + "' --y 3");
  ASSERT_EQ(overridden.code, 0) << overridden.err;
  EXPECT_NEAR(num(Json::parse(overridden.out)["result"]["log_p1"]), std::log(oracle_half(1, 2, 3)), 1e-13);

  // The manifest's config echo loads back and reproduces the value.
  const auto echo = scratch_dir() / "echo.ini";
  std::ofstream(echo) << Json::parse(overridden.out)["manifest"]["config"].get<std::string>();
  const auto again = bkk("--json eval --config '" + echo.string() + "'");
  ASSERT_EQ(again.code, 0) << again.err;
  EXPECT_EQ(Json::parse(again.out)["result"]["log_p1"], Json::parse(overridden.out)["result"]["log_p1"]);

  std::ofstream(cfg) << "[eval]\nmu = 0.5\nunknown_key = 1\n";
  EXPECT_EQ(bkk("eval --config '" + cfg.string() + "'").code, 2);
}

TEST(Cli, HalfIndexCertifyNeedsNoPdeSolves) {
  const auto out = scratch_dir() / "certify_half";
  const auto r = bkk("--json certify --mu 0.5,-0.5 --t-points 3 --x-points 3 --y-points 3 --out '" + out.string() +
                     "' --format json");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto res = Json::parse(r.out)["result"];
  EXPECT_EQ(res["pde_solves"], 0);
  EXPECT_TRUE(res["all_hard_checks_pass"].get<bool>());

  const auto checks_doc = slurp(out / "checks.json");
  const auto checks = bkk::parse_checks(checks_doc, bkk::ReportFormat::json);
  ASSERT_FALSE(checks.empty());
  for (const auto& c : checks)
    for (const auto& cell : c.cells) EXPECT_EQ(cell.method, bkk::Method::closed_form) << c.check_id;
  const auto manifest = Json::parse(checks_doc)["manifest"];
  EXPECT_EQ(manifest["command"], "certify");
  EXPECT_EQ(manifest["seeds"]["sample"], 17);
  EXPECT_FALSE(manifest["started_utc"].get<std::string>().empty());

  const auto env = bkk::parse_envelope(slurp(out / "envelope.json"), bkk::ReportFormat::json);
  ASSERT_EQ(env.per_mu.size(), 2u);
  EXPECT_EQ(env.per_mu[0].cells, 27u);
}

TEST(Cli, CertifyCsvAndFailureExitCode) {
  const auto out = scratch_dir() / "certify_coarse";
  // A deliberately under-resolved PDE breaks the symmetry and hitting-mass checks.
  const auto r = bkk("certify --mu 2.5,1 --t-points 3 --x-points 3 --y-points 3 --nodes 200 --steps-per-efold 2 "
                     "--out '" + out.string() + "' --format csv");
  EXPECT_EQ(r.code, 1) << r.out << r.err;
  const auto doc = slurp(out / "checks.csv");
  EXPECT_EQ(doc.rfind("# manifest ", 0), 0u);
  const auto checks = bkk::parse_checks(doc, bkk::ReportFormat::csv);
  EXPECT_FALSE(bkk::all_hard_checks_pass(checks));
}

TEST(Cli, TableAndFiles) {
  const auto file = scratch_dir() / "table.csv";
  const auto r = bkk("--json table --mu -0.5 --quantity survival --t 0.5,2 --x 1.5,3 --out '" + file.string() + "'");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = Json::parse(r.out)["result"]["rows"];
  ASSERT_EQ(rows.size(), 4u);
  for (const auto& row : rows) {
    // At index -1/2 the process is Brownian motion: P(T_1 > t) = erf((x-1)/sqrt(2t)).
    const double t = row["t"], x = row["x"];
    EXPECT_NEAR(num(row["log_survival"]), std::log(std::erf((x - 1) / std::sqrt(2 * t))), 1e-14);
  }
  const auto text = slurp(file);
  EXPECT_EQ(text.rfind("# manifest ", 0), 0u);
  EXPECT_NE(text.find("t,x,log_survival,survival,method"), std::string::npos);

  const auto ratio = bkk("--json table --mu 1 --quantity ratio --t 1 --x 2 --y 1.5,3");
  ASSERT_EQ(ratio.code, 0) << ratio.err;
  EXPECT_EQ(Json::parse(ratio.out)["result"]["pde_solves"], 1);
}

TEST(Cli, SimulationIsThreadCountInvariant) {
  const std::string args = "--json simulate --mu 1 --x 2 --t 1 --paths 20000 --bins 3 --seed 5";
  const auto one = bkk(args, "BKK_THREADS=1");
  const auto three = bkk("--threads 3 " + args);
  ASSERT_EQ(one.code, 0) << one.err;
  ASSERT_EQ(three.code, 0) << three.err;
  EXPECT_EQ(Json::parse(one.out)["result"], Json::parse(three.out)["result"]);
  EXPECT_EQ(Json::parse(one.out)["manifest"]["seeds"]["mc"], 5);
}

TEST(Cli, PdeSolveReportsSlices) {
  const auto r = bkk("--json pde-solve --mu 1 --x 2 --t 0.5,2 --y 1.5,3");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto res = Json::parse(r.out)["result"];
  EXPECT_EQ(res["survival"].size(), 2u);
  EXPECT_EQ(res["kernel"].size(), 4u);
  const double s0 = num(res["survival"][0]["log_survival"]), s1 = num(res["survival"][1]["log_survival"]);
  EXPECT_LT(s1, s0);
  EXPECT_LT(s0, 0.0);
}

}  // namespace
