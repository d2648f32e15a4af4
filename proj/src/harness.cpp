#include "perfzo/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "perfzo/format.hpp"

namespace perfzo {

int exit_code_for(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::InvalidConfig:
    case ErrorKind::InvalidParameter:
    case ErrorKind::InvalidDimension:
    case ErrorKind::CalibrationMissing:
    case ErrorKind::InfeasibleModel:
      return 2;
    case ErrorKind::OracleFailure:
    case ErrorKind::OracleUnsupported:
      return 3;
    default:
      return 1;
  }
}

// ---------------------------------------------------------------------------
// Slope fit

SlopeFit fit_slope(std::span<const double> k, std::span<const double> regret, double window) {
  if (k.size() != regret.size()) throw Error(ErrorKind::InvalidParameter, "k and regret differ in length");
  if (!(window > 0.0 && window <= 1.0)) throw Error(ErrorKind::InvalidParameter, "window must lie in (0, 1]");
  SlopeFit fit;
  fit.window = window;
  if (k.empty()) throw Error(ErrorKind::InsufficientData, "empty regret series");
  const double k_max = *std::max_element(k.begin(), k.end());
  const double k_min = k_max - window * k_max;

  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < k.size(); ++i) {
    if (k[i] > k_min && k[i] > 0.0 && regret[i] > 0.0) {
      xs.push_back(std::log(k[i]));
      ys.push_back(std::log(regret[i]));
    }
  }
  fit.points = xs.size();
  if (xs.size() < 50)
    throw Error(ErrorKind::InsufficientData,
                "slope fit needs 50 positive points in the window, found " + std::to_string(xs.size()));
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx, dy = ys[i] - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (!(sxx > 0.0)) throw Error(ErrorKind::InsufficientData, "slope fit needs distinct k values");
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r_squared = syy > 0.0 ? std::clamp(sxy * sxy / (sxx * syy), 0.0, 1.0) : 1.0;
  return fit;
}

SlopeFit fit_slope(std::span<const double> regret, double window) {
  std::vector<double> k(regret.size());
  for (std::size_t i = 0; i < k.size(); ++i) k[i] = static_cast<double>(i + 1);
  return fit_slope(k, regret, window);
}

// ---------------------------------------------------------------------------
// CSV

void write_run_csv(std::ostream& out, const RegretLedger& ledger, std::size_t stride) {
  if (stride < 1) throw Error(ErrorKind::InvalidParameter, "csv stride must be >= 1");
  if (!ledger.pr_opt()) throw Error(ErrorKind::InvalidParameter, "CSV output needs pr_opt");
  const double opt = *ledger.pr_opt();
  const auto& losses = ledger.losses();
  const std::size_t total = losses.size();
  const auto& records = ledger.records();
  const Eigen::Index d = records.empty() ? 1 : records.front().theta.size();

  std::string buf = "k,level";
  for (Eigen::Index j = 0; j < d; ++j) buf += ",theta" + std::to_string(j);
  buf += ",loss,cum_loss,regret\n";

  double cum = 0.0;
  for (const auto& rec : records) {
    for (std::size_t i = rec.offset; i < rec.offset + rec.n; ++i) {
      cum += losses[i];
      const std::uint64_t k = i + 1;
      if (k % stride != 0 && k != total) continue;
      buf += std::to_string(k);
      buf += ',';
      buf += to_string(rec.level);
      for (Eigen::Index j = 0; j < d; ++j) {
        buf += ',';
        append_double(buf, rec.theta[j]);
      }
      buf += ',';
      append_double(buf, losses[i]);
      buf += ',';
      append_double(buf, cum);
      buf += ',';
      append_double(buf, cum - static_cast<double>(k) * opt);
      buf += '\n';
      if (buf.size() > (1u << 20)) {
        out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
        buf.clear();
      }
    }
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

CsvSeries read_run_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::InvalidConfig, path + ": empty CSV");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    for (std::string h; std::getline(ss, h, ',');) header.push_back(h);
  }
  auto col = [&](const std::string& name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw Error(ErrorKind::InvalidConfig, path + ": missing column " + name);
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t ck = col("k"), cl = col("loss"), cc = col("cum_loss"), cr = col("regret");
  CsvSeries s;
  std::vector<std::string> fields;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    fields.clear();
    std::size_t start = 0;
    for (;;) {
      const auto comma = line.find(',', start);
      fields.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (fields.size() != header.size())
      throw Error(ErrorKind::InvalidConfig, path + ": row " + std::to_string(row) + " has the wrong field count");
    try {
      s.k.push_back(std::stod(fields[ck]));
      s.loss.push_back(std::stod(fields[cl]));
      s.cum_loss.push_back(std::stod(fields[cc]));
      s.regret.push_back(std::stod(fields[cr]));
    } catch (const std::logic_error&) {
      throw Error(ErrorKind::InvalidConfig, path + ": row " + std::to_string(row) + " is not numeric");
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// Runner

RunResult run_seed(const ExperimentConfig& cfg, const OptimizerConfig* opt, std::uint64_t seed, Environment& env) {
  SeededRng rng(seed, 0);
  const std::uint64_t before = env.sample_counter();
  RunResult result;
  if (cfg.optimizer == ExperimentConfig::Optimizer::TwoLevel) {
    if (!opt) throw Error(ErrorKind::InvalidConfig, "two-level run needs a resolved optimizer config");
    result = minimize_pr(env, *opt, rng);
    if (result.loop_n != opt->loop_sample_count() || result.total_n != opt->total_sample_count())
      throw Error(ErrorKind::InvalidParameter, "sample accounting mismatch");
  } else {
    result = run_convex(env, cfg.convex_T, rng);
  }
  if (result.ledger.total_samples() != env.sample_counter() - before)
    throw Error(ErrorKind::InvalidParameter, "ledger disagrees with the environment's sample counter");
  return result;
}

namespace {

using json = nlohmann::ordered_json;

json vec_json(const Vector& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

json fit_json(const std::optional<SlopeFit>& f) {
  if (!f) return nullptr;
  return json{{"slope", f->slope}, {"intercept", f->intercept}, {"r_squared", f->r_squared},
              {"window", f->window}, {"points", f->points}};
}

std::optional<double> median(std::vector<double> v) {
  if (v.empty()) return std::nullopt;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

}  // namespace

ExperimentReport run_experiment(const ExperimentConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  if (cfg.seeds.empty()) throw Error(ErrorKind::InvalidConfig, "no seeds");
  const Environment probe = make_environment(cfg.env_name, cfg.env_params);

  ExperimentReport report;
  if (cfg.optimizer == ExperimentConfig::Optimizer::TwoLevel) {
    report.optimizer = resolve_optimizer(cfg, probe);
    report.expected_loop_n = report.optimizer->loop_sample_count();
  } else if (static_cast<double>(cfg.convex_T) <= static_cast<double>(probe.theta_space().dim())) {
    throw Error(ErrorKind::InvalidConfig, "convex optimizer needs T > d_theta");
  } else {
    report.expected_loop_n = 2ULL * cfg.convex_T;
  }
  report.oracle = oracle::brute_force_opt(probe, cfg.oracle_resolution);

  std::error_code ec;
  std::filesystem::create_directories(cfg.output_dir, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create output directory " + cfg.output_dir + ": " + ec.message());

  report.seeds.resize(cfg.seeds.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cfg.seeds.size()) return;
      try {
        const std::uint64_t seed = cfg.seeds[i];
        Environment env = make_environment(cfg.env_name, cfg.env_params);
        RunResult result = run_seed(cfg, report.optimizer ? &*report.optimizer : nullptr, seed, env);
        result.ledger.set_pr_opt(report.oracle.pr_opt);

        SeedOutcome& o = report.seeds[i];
        o.seed = seed;
        o.theta_bar = result.theta_bar;
        o.phi_bar = result.phi_bar;
        o.pr_theta_bar = oracle::true_pr(env, result.theta_bar);
        o.gap = o.pr_theta_bar - report.oracle.pr_opt;
        o.success = o.gap <= cfg.success_threshold * env.loss_bound();
        o.loop_n = result.loop_n;
        o.total_n = result.total_n;
        o.inner_warnings = result.inner_warnings;
        {
          const std::vector<double> regret = compute_regret(result.ledger);
          o.final_regret = regret.empty() ? 0.0 : regret.back();
          try {
            o.slope = fit_slope(regret, cfg.slope_window);
          } catch (const Error& e) {
            if (e.kind() != ErrorKind::InsufficientData) throw;
          }
        }
        o.csv_path = (std::filesystem::path(cfg.output_dir) / ("seed_" + std::to_string(seed) + ".csv")).string();
        std::ofstream out(o.csv_path, std::ios::binary);
        if (!out) throw Error(ErrorKind::Io, "cannot write " + o.csv_path);
        write_run_csv(out, result.ledger, cfg.csv_stride);
        if (!out) throw Error(ErrorKind::Io, "write failed for " + o.csv_path);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = cfg.seeds.size();
        return;
      }
    }
  };
  const std::size_t n_workers = std::min(cfg.workers, cfg.seeds.size());
  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  std::vector<double> slopes;
  std::size_t successes = 0;
  for (const auto& o : report.seeds) {
    if (o.slope) slopes.push_back(o.slope->slope);
    successes += o.success;
  }
  report.median_slope = median(slopes);
  report.success_rate = static_cast<double>(successes) / static_cast<double>(report.seeds.size());
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  json j;
  j["environment"] = json{{"name", cfg.env_name}, {"params", cfg.env_params}, {"loss_bound", probe.loss_bound()}};
  j["optimizer"] = cfg.optimizer == ExperimentConfig::Optimizer::TwoLevel ? "two_level" : "convex";
  if (report.optimizer) {
    const auto& o = *report.optimizer;
    j["schedule"] = json{{"eps", o.eps},     {"p", o.p},         {"eps_lm", o.eps_lm},     {"p_lm", o.p_lm},
                         {"eps_kl", o.eps_kl}, {"p_kl", o.p_kl},   {"T", o.T},               {"S", o.S},
                         {"n_kl", o.n_kl},   {"delta", o.delta}, {"delta_lm", o.delta_lm}, {"eta", o.eta},
                         {"eta_lm", o.eta_lm}};
  } else {
    j["schedule"] = json{{"T", cfg.convex_T}};
  }
  j["oracle"] = json{{"theta_opt", vec_json(report.oracle.theta_opt)}, {"phi_opt", vec_json(report.oracle.phi_opt)},
                     {"pr_opt", report.oracle.pr_opt}, {"grid_resolution", report.oracle.grid_resolution}};
  json seeds = json::array();
  for (const auto& o : report.seeds) {
    seeds.push_back(json{{"seed", o.seed},
                         {"csv", o.csv_path},
                         {"theta_bar", vec_json(o.theta_bar)},
                         {"phi_bar", o.phi_bar.size() ? vec_json(o.phi_bar) : json(nullptr)},
                         {"pr_theta_bar", o.pr_theta_bar},
                         {"gap", o.gap},
                         {"success", o.success},
                         {"final_regret", o.final_regret},
                         {"slope", fit_json(o.slope)},
                         {"loop_n", o.loop_n},
                         {"total_n", o.total_n},
                         {"inner_warnings", o.inner_warnings}});
  }
  j["seeds"] = seeds;
  json slope_summary = json{{"median", report.median_slope ? json(*report.median_slope) : json(nullptr)},
                            {"theoretical", 5.0 / 6.0},
                            {"window", cfg.slope_window},
                            {"fitted_seeds", slopes.size()}};
  if (!slopes.empty()) {
    slope_summary["min"] = *std::min_element(slopes.begin(), slopes.end());
    slope_summary["max"] = *std::max_element(slopes.begin(), slopes.end());
  }
  j["aggregate"] = json{{"slope", slope_summary},
                        {"success_rate", report.success_rate},
                        {"success_threshold", cfg.success_threshold},
                        {"loop_n", report.expected_loop_n},
                        {"total_n", report.seeds.front().total_n},
                        {"wall_seconds", report.wall_seconds}};

  report.report_path = (std::filesystem::path(cfg.output_dir) / "report.json").string();
  std::ofstream out(report.report_path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + report.report_path);
  out << j.dump(2) << '\n';
  return report;
}

}  // namespace perfzo
