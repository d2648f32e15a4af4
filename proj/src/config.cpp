#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "perfzo/harness.hpp"

namespace perfzo {

namespace {

namespace pt = boost::property_tree;

[[noreturn]] void bad(const std::string& what) { throw Error(ErrorKind::InvalidConfig, what); }

double to_double(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size() || !std::isfinite(v)) bad(key + ": not a finite number: '" + text + "'");
    return v;
  } catch (const std::logic_error&) {
    bad(key + ": not a number: '" + text + "'");
  }
}

std::uint64_t to_count(const std::string& key, const std::string& text) {
  const double v = to_double(key, text);
  if (v < 0.0 || v != std::floor(v) || v > 9.0e15) bad(key + ": not a non-negative integer: '" + text + "'");
  return static_cast<std::uint64_t>(v);
}

void reject_unknown(const pt::ptree& node, const std::string& section, const std::set<std::string>& known) {
  for (const auto& [key, child] : node)
    if (!known.count(key)) bad("unknown key '" + key + "' in [" + section + "]");
}

}  // namespace

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::string item;
  std::stringstream ss(text);
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t"), e = item.find_last_not_of(" \t");
    if (b == std::string::npos) continue;
    item = item.substr(b, e - b + 1);
    const auto dash = item.find('-', 1);
    try {
      if (dash != std::string::npos) {
        const std::uint64_t lo = std::stoull(item.substr(0, dash)), hi = std::stoull(item.substr(dash + 1));
        if (hi < lo || hi - lo > 100000) bad("bad seed range '" + item + "'");
        for (std::uint64_t s = lo; s <= hi; ++s) seeds.push_back(s);
      } else {
        std::size_t used = 0;
        seeds.push_back(std::stoull(item, &used));
        if (used != item.size()) bad("bad seed '" + item + "'");
      }
    } catch (const std::logic_error&) {
      bad("bad seed '" + item + "'");
    }
  }
  if (seeds.empty()) bad("seed list is empty");
  return seeds;
}

ExperimentConfig parse_experiment_config(std::istream& in) {
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    bad("cannot parse config: " + e.message());
  }
  for (const auto& [section, node] : tree)
    if (section != "experiment" && section != "environment" && section != "optimizer")
      bad("unknown section [" + section + "]");

  ExperimentConfig cfg;
  const pt::ptree empty;
  const auto& ex = tree.get_child("experiment", empty);
  const auto& en = tree.get_child("environment", empty);
  const auto& op = tree.get_child("optimizer", empty);

  reject_unknown(ex, "experiment", {"optimizer", "seeds", "output", "workers", "slope_window", "csv_stride",
                                    "oracle_resolution", "success_threshold"});
  const std::string kind = ex.get<std::string>("optimizer", "two_level");
  if (kind == "two_level") cfg.optimizer = ExperimentConfig::Optimizer::TwoLevel;
  else if (kind == "convex") cfg.optimizer = ExperimentConfig::Optimizer::Convex;
  else bad("optimizer must be two_level or convex");
  cfg.seeds = parse_seed_list(ex.get<std::string>("seeds", "1"));
  cfg.output_dir = ex.get<std::string>("output", cfg.output_dir);
  if (auto v = ex.get_optional<std::string>("workers")) cfg.workers = to_count("workers", *v);
  if (auto v = ex.get_optional<std::string>("slope_window")) cfg.slope_window = to_double("slope_window", *v);
  if (auto v = ex.get_optional<std::string>("csv_stride")) cfg.csv_stride = to_count("csv_stride", *v);
  if (auto v = ex.get_optional<std::string>("oracle_resolution"))
    cfg.oracle_resolution = to_double("oracle_resolution", *v);
  if (auto v = ex.get_optional<std::string>("success_threshold"))
    cfg.success_threshold = to_double("success_threshold", *v);
  if (cfg.workers < 1) bad("workers must be >= 1");
  if (cfg.csv_stride < 1) bad("csv_stride must be >= 1");
  if (!(cfg.slope_window > 0.0 && cfg.slope_window <= 1.0)) bad("slope_window must lie in (0, 1]");
  if (!(cfg.oracle_resolution > 0.0)) bad("oracle_resolution must be positive");

  cfg.env_name = en.get<std::string>("name", "");
  if (cfg.env_name.empty()) bad("[environment] needs a name");
  for (const auto& [key, child] : en)
    if (key != "name") cfg.env_params[key] = child.data();

  if (cfg.optimizer == ExperimentConfig::Optimizer::Convex) {
    reject_unknown(op, "optimizer", {"T"});
    cfg.convex_T = to_count("T", op.get<std::string>("T", "0"));
    if (cfg.convex_T < 1) bad("convex optimizer needs T >= 1");
  } else {
    reject_unknown(op, "optimizer", {"eps", "p", "eps_lm", "p_lm", "eps_kl", "p_kl", "T", "S", "n_kl", "delta",
                                     "delta_lm", "eta", "eta_lm", "schedule", "budget", "calibration"});
    auto num = [&](const char* key, double& slot) {
      if (auto v = op.get_optional<std::string>(key)) slot = to_double(key, *v);
    };
    num("eps", cfg.eps);
    num("p", cfg.p);
    num("eps_lm", cfg.eps_lm);
    num("p_lm", cfg.p_lm);
    num("eps_kl", cfg.eps_kl);
    num("p_kl", cfg.p_kl);
    auto count = [&](const char* key, std::optional<std::size_t>& slot) {
      if (auto v = op.get_optional<std::string>(key)) slot = to_count(key, *v);
    };
    count("T", cfg.overrides.T);
    count("S", cfg.overrides.S);
    count("n_kl", cfg.overrides.n_kl);
    auto real = [&](const char* key, std::optional<double>& slot) {
      if (auto v = op.get_optional<std::string>(key)) slot = to_double(key, *v);
    };
    real("delta", cfg.overrides.delta);
    real("delta_lm", cfg.overrides.delta_lm);
    real("eta", cfg.overrides.eta);
    real("eta_lm", cfg.overrides.eta_lm);
    const std::string schedule = op.get<std::string>("schedule", "manual");
    if (schedule == "theorem") {
      if (!op.get_optional<std::string>("budget")) bad("theorem schedule needs a budget");
      cfg.budget = to_double("budget", op.get<std::string>("budget"));
    } else if (schedule != "manual") {
      bad("schedule must be manual or theorem");
    }
    cfg.calibration_path = op.get<std::string>("calibration", "");
  }

  if (const char* env_seed = std::getenv("PERF_SEED"); env_seed && *env_seed) cfg.seeds = parse_seed_list(env_seed);
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) bad("cannot open config file " + path);
  return parse_experiment_config(in);
}

OptimizerConfig resolve_optimizer(const ExperimentConfig& cfg, const Environment& env) {
  if (cfg.optimizer != ExperimentConfig::Optimizer::TwoLevel) bad("resolve_optimizer applies to the two-level optimizer");
  std::optional<KLCalibration> cal;
  if (!cfg.calibration_path.empty()) {
    const auto table = load_calibration(cfg.calibration_path);
    auto it = table.find(env.family().name());
    if (it != table.end()) cal = it->second;
  }
  const auto dt = env.theta_space().dim(), dp = env.family().param_space().dim();
  const KLCalibration* calp = cal ? &*cal : nullptr;
  try {
    if (cfg.budget)
      return OptimizerConfig::theorem_schedule(*cfg.budget, cfg.p, cfg.p_lm, cfg.p_kl, dt, dp, calp, cfg.overrides);
    return OptimizerConfig::derive(cfg.eps, cfg.p, cfg.eps_lm, cfg.p_lm, cfg.eps_kl, cfg.p_kl, dt, dp, calp,
                                   cfg.overrides);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::CalibrationMissing) bad(e.what());
    throw;
  }
}

}  // namespace perfzo
