#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "perfzo/diagnostics.hpp"
#include "perfzo/harness.hpp"

using namespace perfzo;
namespace fs = std::filesystem;

namespace {

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::Io;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("perfzo_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

ExperimentConfig parse(const std::string& text) {
  std::istringstream in(text);
  return parse_experiment_config(in);
}

const char* kSmallTwoLevel = R"([experiment]
optimizer = two_level
seeds = 3,4
csv_stride = 1
oracle_resolution = 1e-3

[environment]
name = example1_square

[optimizer]
eps = 0.5
eps_lm = 0.01
eps_kl = 1e-5
T = 5
S = 6
n_kl = 4
delta = 0.1
delta_lm = 0.1
eta = 0.15
eta_lm = 0.3
)";

std::vector<double> power_series(double exponent, std::size_t n) {
  std::vector<double> r(n);
  for (std::size_t i = 0; i < n; ++i) r[i] = std::pow(static_cast<double>(i + 1), exponent);
  return r;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(PERFZO_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("slope fit recovers exact power laws") {
  CHECK(fit_slope(power_series(1.0, 1000)).slope == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(fit_slope(power_series(0.5, 1000)).slope == doctest::Approx(0.5).epsilon(1e-9));
  const SlopeFit f = fit_slope(power_series(5.0 / 6.0, 1000));
  CHECK(std::abs(f.slope - 5.0 / 6.0) <= 1e-6);
  CHECK(f.r_squared == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(f.window == 0.8);
  CHECK(f.points == 800);
}

TEST_CASE("slope fit ignores nonpositive regret and needs enough points") {
  std::vector<double> r = power_series(0.7, 1000);
  for (std::size_t i = 500; i < 600; ++i) r[i] = -1.0;
  const SlopeFit f = fit_slope(r);
  CHECK(f.points == 700);
  CHECK(f.slope == doctest::Approx(0.7).epsilon(1e-9));
  CHECK(kind_of([] { fit_slope(power_series(1.0, 60)); }) == ErrorKind::InsufficientData);
  CHECK(kind_of([] { fit_slope(std::vector<double>(1000, 0.0)); }) == ErrorKind::InsufficientData);
}

TEST_CASE("sparse slope fit uses the given sample indices") {
  std::vector<double> k, r;
  for (int i = 1; i <= 200; ++i) {
    k.push_back(i * 10.0);
    r.push_back(std::sqrt(i * 10.0));
  }
  CHECK(fit_slope(k, r).slope == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("seed lists") {
  CHECK(parse_seed_list("1,2,3") == std::vector<std::uint64_t>{1, 2, 3});
  CHECK(parse_seed_list("1-4") == std::vector<std::uint64_t>{1, 2, 3, 4});
  CHECK(kind_of([] { parse_seed_list("a"); }) == ErrorKind::InvalidConfig);
}

TEST_CASE("experiment config parsing") {
  const ExperimentConfig cfg = parse(kSmallTwoLevel);
  CHECK(cfg.env_name == "example1_square");
  CHECK(cfg.optimizer == ExperimentConfig::Optimizer::TwoLevel);
  CHECK(cfg.seeds == std::vector<std::uint64_t>{3, 4});
  CHECK(cfg.eps == 0.5);
  CHECK(cfg.overrides.T == 5u);
  CHECK(cfg.overrides.n_kl == 4u);
  CHECK(cfg.oracle_resolution == 1e-3);

  const ExperimentConfig convex = parse("[experiment]\noptimizer = convex\nseeds = 1-3\n[environment]\nname = "
                                        "gaussian_affine\nslope = 0\n[optimizer]\nT = 100\n");
  CHECK(convex.optimizer == ExperimentConfig::Optimizer::Convex);
  CHECK(convex.convex_T == 100);
  CHECK(convex.env_params.at("slope") == "0");
}

TEST_CASE("experiment config errors") {
  CHECK(kind_of([] { parse("[experiment]\nbogus = 1\n"); }) == ErrorKind::InvalidConfig);
  CHECK(kind_of([] { parse("[nonsense]\nx = 1\n"); }) == ErrorKind::InvalidConfig);
  CHECK(kind_of([] { parse("[experiment]\noptimizer = sgd\n[environment]\nname = example1_square\n"); }) ==
        ErrorKind::InvalidConfig);
  CHECK(kind_of([] { parse("[experiment]\nseeds = 1\n[environment]\nname = example1_square\n[optimizer]\neps = x\n"); }) ==
        ErrorKind::InvalidConfig);
  CHECK(kind_of([] { load_experiment_config("/nonexistent/cfg.ini"); }) == ErrorKind::InvalidConfig);
  // infeasible tolerances are caught before any deployment
  ExperimentConfig bad = parse(kSmallTwoLevel);
  bad.eps = 0.05;
  const Environment env = make_environment("example1_square");
  CHECK(kind_of([&] { resolve_optimizer(bad, env); }) == ErrorKind::InvalidConfig);
}

TEST_CASE("PERF_SEED replaces the configured seeds") {
  ::setenv("PERF_SEED", "7-9", 1);
  const ExperimentConfig cfg = parse(kSmallTwoLevel);
  ::unsetenv("PERF_SEED");
  CHECK(cfg.seeds == std::vector<std::uint64_t>{7, 8, 9});
}

TEST_CASE("an experiment writes one CSV per seed plus a report, reproducibly") {
  const fs::path dir = scratch_dir("run");
  ExperimentConfig cfg = parse(kSmallTwoLevel);
  cfg.output_dir = (dir / "a").string();
  const ExperimentReport a = run_experiment(cfg);
  std::size_t csvs = 0, others = 0;
  for (const auto& entry : fs::directory_iterator(dir / "a")) (entry.path().extension() == ".csv" ? csvs : others)++;
  CHECK(csvs == 2);
  CHECK(others == 1);
  CHECK(fs::exists(dir / "a" / "report.json"));

  cfg.output_dir = (dir / "b").string();
  cfg.workers = 2;
  run_experiment(cfg);
  for (const char* f : {"seed_3.csv", "seed_4.csv"}) CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));

  const OptimizerConfig& opt = *a.optimizer;
  CHECK(a.expected_loop_n == 2 * (2 * opt.n_kl * opt.S + 1) * opt.T);
  CHECK(a.expected_loop_n == 2 * (2 * 4 * 6 + 1) * 5);
  for (const SeedOutcome& o : a.seeds) {
    CHECK(o.loop_n == a.expected_loop_n);
    CHECK(o.total_n == a.expected_loop_n + 2 * 4 * 6);
  }
  const std::string report = slurp(dir / "a" / "report.json");
  CHECK(report.find("\"loop_n\": 490") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("CSV regret column equals the regret recomputed from the losses") {
  const fs::path dir = scratch_dir("csv");
  ExperimentConfig cfg = parse(kSmallTwoLevel);
  cfg.output_dir = dir.string();
  const ExperimentReport rep = run_experiment(cfg);
  const CsvSeries s = read_run_csv((dir / "seed_3.csv").string());
  REQUIRE(s.k.size() == rep.seeds[0].total_n);
  double cum = 0.0;
  for (std::size_t i = 0; i < s.k.size(); ++i) {
    CHECK(s.k[i] == static_cast<double>(i + 1));
    cum += s.loss[i];
    CHECK(s.cum_loss[i] == doctest::Approx(cum).epsilon(1e-12));
    CHECK(s.regret[i] == doctest::Approx(cum - s.k[i] * rep.oracle.pr_opt).epsilon(1e-12));
  }
  std::ifstream in(dir / "seed_3.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "k,level,theta0,loss,cum_loss,regret");
  fs::remove_all(dir);
}

TEST_CASE("CSV writer keeps every stride-th row and the last") {
  RegretLedger ledger;
  std::vector<double> losses(10, 0.5);
  ledger.append(1, Level::Inner, Vector::Zero(1), losses);
  ledger.set_pr_opt(0.25);
  std::ostringstream out;
  write_run_csv(out, ledger, 4);
  std::istringstream in(out.str());
  std::string line;
  std::vector<std::string> ks;
  std::getline(in, line);
  while (std::getline(in, line)) ks.push_back(line.substr(0, line.find(',')));
  CHECK(ks == std::vector<std::string>{"4", "8", "10"});
}

TEST_CASE("convex experiments run end to end") {
  const fs::path dir = scratch_dir("convex");
  ExperimentConfig cfg = parse("[experiment]\noptimizer = convex\nseeds = 1,2\n[environment]\nname = gaussian_affine\n"
                               "slope = 0\noffset = 0.3\nsigma = 0.1\ntheta_lo = 0\ntheta_hi = 1\n[optimizer]\nT = 2000\n");
  cfg.output_dir = dir.string();
  const ExperimentReport rep = run_experiment(cfg);
  CHECK(rep.seeds.size() == 2);
  CHECK(rep.oracle.theta_opt[0] == doctest::Approx(0.3).epsilon(1e-3));
  for (const SeedOutcome& o : rep.seeds) CHECK(o.total_n == 4000);
  fs::remove_all(dir);
}

TEST_CASE("exit codes") {
  CHECK(exit_code_for(ErrorKind::InvalidConfig) == 2);
  CHECK(exit_code_for(ErrorKind::InfeasibleModel) == 2);
  CHECK(exit_code_for(ErrorKind::OracleFailure) == 3);
  CHECK(exit_code_for(ErrorKind::OracleUnsupported) == 3);
  CHECK(exit_code_for(ErrorKind::Io) == 1);

  const fs::path dir = scratch_dir("cli");
  std::ofstream(dir / "bad.ini") << "[experiment]\nfoo = 1\n";
  CHECK(run_cli("run " + (dir / "bad.ini").string()) == 2);
  CHECK(run_cli("run " + (dir / "missing.ini").string()) == 2);
  CHECK(run_cli("oracle gaussian_affine --param dim=4") == 3);
  CHECK(run_cli("oracle example1_square --resolution 1e-3") == 0);
  CHECK(run_cli("frobnicate") == 2);
  fs::remove_all(dir);
}

TEST_CASE("convexity diagnostic on the square-map environment") {
  const Environment neg = make_environment("example1_square", {{"sign", "negative"}});
  const ConvexityReport theta = diag_convexity(neg, Axis::Theta, 0.01);
  CHECK_FALSE(theta.convex);
  CHECK(theta.min_second_diff < -1e-6);
  CHECK(theta.witness < 1.0 / 3.0);
  const ConvexityReport phi = diag_convexity(neg, Axis::Phi, 0.01);
  CHECK(phi.convex);
  CHECK(phi.min_second_diff >= -1e-6);

  std::vector<double> grid, line;
  for (int i = 0; i <= 20; ++i) {
    grid.push_back(i * 0.05);
    line.push_back(3.0 * i - 2.0);
  }
  const ConvexityReport lin = classify_convexity(grid, line);
  for (double d : lin.second_diff) CHECK(d == 0.0);
  CHECK(lin.convex);

  const Environment two = make_environment("gaussian_affine", {{"dim", "2"}});
  CHECK(kind_of([&] { diag_convexity(two, Axis::Theta, 0.1); }) == ErrorKind::Unsupported);
}

TEST_CASE("exponential-family condition diagnostic") {
  const Environment zero = make_environment("poisson_exp", {{"weight", "0"}});
  const ExpFamReport z = diag_expfam_condition(zero, 5, 20000);
  CHECK(z.all_satisfied);
  for (const ExpFamPoint& p : z.points) {
    CHECK(p.lhs == 0.0);
    CHECK(p.rhs == 0.0);
  }

  const ExpFamReport good = diag_expfam_condition(make_environment("poisson_exp"), 11, 200000);
  CHECK(good.all_satisfied);
  CHECK(good.convexity.convex);
  CHECK(good.implication_holds);
  for (const ExpFamPoint& p : good.points) {
    CHECK(p.lhs == doctest::Approx(p.lhs_exact).epsilon(0.02));
    CHECK(p.lhs_exact <= p.rhs_exact);
  }

  const ExpFamReport bad = diag_expfam_condition(make_environment("poisson_exp", {{"b", "1"}}), 11, 200000);
  CHECK_FALSE(bad.all_satisfied);
  CHECK(bad.implication_holds);

  CHECK(kind_of([] { diag_expfam_condition(make_environment("example1_square"), 5, 100); }) == ErrorKind::Unsupported);
}
