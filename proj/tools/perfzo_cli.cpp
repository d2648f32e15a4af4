#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "perfzo/calibration.hpp"
#include "perfzo/diagnostics.hpp"
#include "perfzo/format.hpp"
#include "perfzo/harness.hpp"

using namespace perfzo;

namespace {

EnvParams parse_params(const std::vector<std::string>& items) {
  EnvParams out;
  for (const auto& item : items) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) throw Error(ErrorKind::InvalidConfig, "--param expects key=value, got " + item);
    out[item.substr(0, eq)] = item.substr(eq + 1);
  }
  return out;
}

std::string vec_text(const Vector& v) {
  std::string s;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) s += ' ';
    append_double(s, v[i]);
  }
  return s;
}

struct FamilyChoice {
  FamilyPtr family;
  std::vector<double> grid;
};

FamilyChoice family_for(const std::string& name, double sigma, double c) {
  std::vector<double> grid;
  if (name == "bernoulli_label") {
    for (int i = 1; i <= 9; ++i) grid.push_back(i / 10.0);
    return {make_bernoulli_label(), grid};
  }
  if (name == "gaussian_mean") {
    for (int i = 0; i < 10; ++i) grid.push_back((2 * i - 9) / 10.0);
    return {make_gaussian_mean(ParamSpace::interval(Vector::Constant(1, -1.0), Vector::Constant(1, 1.0)), sigma), grid};
  }
  if (name == "poisson_rate") {
    for (int i = 0; i < 10; ++i) grid.push_back((i + 1) / 2.0);
    return {make_poisson_rate(0.25, 6.0), grid};
  }
  if (name == "uniform_exp") {
    for (int i = 1; i <= 9; ++i) grid.push_back(i / 50.0);
    return {make_uniform_exp(c, 0.0, 0.2), grid};
  }
  throw Error(ErrorKind::InvalidConfig, "unknown family '" + name + "'");
}

void print_convexity(const ConvexityReport& r, const std::string& label) {
  std::cout << label << ",value,second_diff\n";
  for (std::size_t i = 0; i < r.grid.size(); ++i) {
    std::string line = format_double(r.grid[i]) + "," + format_double(r.values[i]) + ",";
    if (i > 0 && i + 1 < r.grid.size()) line += format_double(r.second_diff[i - 1]);
    std::cout << line << '\n';
  }
  std::cout << "# min_second_diff=" << format_double(r.min_second_diff) << " witness=" << format_double(r.witness)
            << " tolerance=" << format_double(r.tolerance) << " classification=" << (r.convex ? "convex" : "nonconvex")
            << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-level zeroth-order optimization for performative prediction"};
  app.require_subcommand(1);

  std::string config_path;
  auto* run = app.add_subcommand("run", "Run an experiment from a config file");
  run->add_option("config", config_path, "INI experiment config")->required();

  std::string env_name;
  std::vector<std::string> params;
  double resolution = 1e-4;
  auto* oracle_cmd = app.add_subcommand("oracle", "Brute-force performative optimum");
  oracle_cmd->add_option("env", env_name, "environment name")->required();
  oracle_cmd->add_option("--resolution", resolution, "grid resolution");
  oracle_cmd->add_option("--param", params, "environment parameter key=value");

  std::string family_name, out_path = "calibration.ini", grid_text;
  double eps = 0.05, p = 0.05, safety = 1.25, sigma = 1.0, c_uniform = 50.0;
  std::size_t trials = 2000;
  std::uint64_t seed = 1;
  auto* calibrate = app.add_subcommand("calibrate", "Calibrate N_KL for a family");
  calibrate->add_option("family", family_name, "bernoulli_label | gaussian_mean | poisson_rate | uniform_exp")->required();
  calibrate->add_option("--eps", eps, "accuracy eps_kl");
  calibrate->add_option("--p", p, "failure probability p_kl");
  calibrate->add_option("--trials", trials, "Monte-Carlo trials per grid point");
  calibrate->add_option("--grid", grid_text, "comma-separated parameter grid");
  calibrate->add_option("--seed", seed, "seed");
  calibrate->add_option("--safety", safety, "multiplier applied to the passing constant");
  calibrate->add_option("--sigma", sigma, "gaussian_mean standard deviation");
  calibrate->add_option("--c", c_uniform, "uniform_exp constant");
  calibrate->add_option("--out", out_path, "calibration file (merged if present)");

  auto* diag = app.add_subcommand("diag", "Diagnostics");
  diag->require_subcommand(1);
  std::string axis_text = "theta";
  auto* convexity = diag->add_subcommand("convexity", "Second differences of PR along an axis");
  convexity->add_option("env", env_name, "environment name")->required();
  convexity->add_option("--axis", axis_text, "theta | phi | natural");
  double spacing = 0.01;
  convexity->add_option("--resolution", spacing, "grid spacing");
  convexity->add_option("--param", params, "environment parameter key=value");
  std::size_t grid_points = 11, draws = 1000000;
  auto* expfam = diag->add_subcommand("expfam", "Exponential-family convexity condition");
  expfam->add_option("env", env_name, "environment name")->required();
  expfam->add_option("--points", grid_points, "number of model grid points");
  expfam->add_option("--draws", draws, "Monte-Carlo draws per point");
  expfam->add_option("--seed", seed, "seed");
  expfam->add_option("--param", params, "environment parameter key=value");

  std::string csv_path;
  double window = 0.8;
  auto* slope = app.add_subcommand("slope", "Log-log regret slope of a run CSV");
  slope->add_option("csv", csv_path, "per-seed CSV")->required();
  slope->add_option("--window", window, "final fraction of the series");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*run) {
      const ExperimentConfig cfg = load_experiment_config(config_path);
      const ExperimentReport r = run_experiment(cfg);
      std::cout << "report: " << r.report_path << '\n';
      std::cout << "pr_opt: " << format_double(r.oracle.pr_opt) << " at theta " << vec_text(r.oracle.theta_opt) << '\n';
      for (const auto& s : r.seeds) {
        std::cout << "seed " << s.seed << ": gap " << format_double(s.gap) << " slope "
                  << (s.slope ? format_double(s.slope->slope) : std::string("n/a")) << " N " << s.total_n << '\n';
      }
      std::cout << "median slope: " << (r.median_slope ? format_double(*r.median_slope) : std::string("n/a"))
                << "\nsuccess rate: " << format_double(r.success_rate) << '\n';
    } else if (*oracle_cmd) {
      const Environment env = make_environment(env_name, parse_params(params));
      const OracleReport r = oracle::brute_force_opt(env, resolution);
      std::cout << "theta_opt: " << vec_text(r.theta_opt) << "\nphi_opt: " << vec_text(r.phi_opt)
                << "\npr_opt: " << format_double(r.pr_opt) << "\nresolution: " << format_double(r.grid_resolution)
                << '\n';
    } else if (*calibrate) {
      FamilyChoice fc = family_for(family_name, sigma, c_uniform);
      if (!grid_text.empty()) {
        fc.grid.clear();
        std::stringstream ss(grid_text);
        for (std::string item; std::getline(ss, item, ',');) fc.grid.push_back(std::stod(item));
      }
      const KLCalibration cal = calibrate_kl(*fc.family, fc.grid, trials, {{eps, p}}, seed, safety);
      KLCalibrationTable table;
      if (std::filesystem::exists(out_path)) table = load_calibration(out_path);
      table[cal.family] = cal;
      save_calibration(out_path, table);
      std::cout << cal.family << ": c_cal=" << format_double(cal.c_cal) << " c_raw=" << format_double(cal.c_raw)
                << " worst_failure_rate=" << format_double(cal.worst_failure_rate)
                << " N_KL=" << n_kl(cal, eps, p) << " -> " << out_path << '\n';
    } else if (*convexity) {
      const Environment env = make_environment(env_name, parse_params(params));
      const Axis axis = parse_axis(axis_text);
      print_convexity(diag_convexity(env, axis, spacing), to_string(axis));
    } else if (*expfam) {
      const Environment env = make_environment(env_name, parse_params(params));
      const ExpFamReport r = diag_expfam_condition(env, grid_points, draws, seed);
      std::cout << "theta,lhs,rhs,lhs_exact,rhs_exact,satisfied\n";
      for (const auto& pt : r.points)
        std::cout << format_double(pt.theta) << ',' << format_double(pt.lhs) << ',' << format_double(pt.rhs) << ','
                  << format_double(pt.lhs_exact) << ',' << format_double(pt.rhs_exact) << ','
                  << (pt.satisfied ? "yes" : "no") << '\n';
      std::cout << "# condition=" << (r.all_satisfied ? "satisfied" : "violated")
                << " natural_axis=" << (r.convexity.convex ? "convex" : "nonconvex")
                << " implication=" << (r.implication_holds ? "holds" : "fails") << '\n';
    } else if (*slope) {
      const CsvSeries s = read_run_csv(csv_path);
      const SlopeFit f = fit_slope(s.k, s.regret, window);
      std::cout << "slope: " << format_double(f.slope) << "\nintercept: " << format_double(f.intercept)
                << "\nr_squared: " << format_double(f.r_squared) << "\npoints: " << f.points << '\n';
    }
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
