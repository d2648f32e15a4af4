#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "perfzo/divergence.hpp"
#include "perfzo/environment.hpp"

namespace perfzo {

/// Explicit values that replace the derived step counts and step sizes.
struct OptimizerOverrides {
  std::optional<std::size_t> T;
  std::optional<std::size_t> S;
  std::optional<std::size_t> n_kl;
  std::optional<double> delta;
  std::optional<double> delta_lm;
  std::optional<double> eta;
  std::optional<double> eta_lm;
};

struct OptimizerConfig {
  // tolerances and failure probabilities
  double eps = 0.0;
  double p = 0.1;
  double eps_lm = 0.0;
  double p_lm = 0.1;
  double eps_kl = 0.0;
  double p_kl = 0.1;

  // derived
  std::size_t T = 0;
  std::size_t S = 0;
  std::size_t n_kl = 0;
  double delta = 0.0;
  double delta_lm = 0.0;
  double eta = 0.0;
  double eta_lm = 0.0;

  /// Derives T, S, N_KL, delta, delta_LM, eta, eta_LM from the tolerances:
  ///   T = ceil(d_phi / (eps - sqrt(eps_lm d_phi))^2), delta = sqrt(eps_lm d_phi), eta = 1 / sqrt(d_phi T)
  ///   S = ceil(d_theta / (eps_lm - sqrt(eps_kl d_theta))^2), delta_lm = sqrt(eps_kl d_theta),
  ///   eta_lm = 1 / sqrt(d_theta S), N_KL from the calibration.
  /// Overrides replace individual derived values; step sizes follow overridden counts.
  /// `calibration` may be null when N_KL is overridden.
  static OptimizerConfig derive(double eps, double p, double eps_lm, double p_lm, double eps_kl, double p_kl,
                                Eigen::Index d_theta, Eigen::Index d_phi, const KLCalibration* calibration,
                                const OptimizerOverrides& overrides = {});

  /// Tolerances from a total sample budget N: eps_lm = (N_KL/N)^(1/3),
  /// eps_kl = (N_KL/N)^(2/3) / (4 d_theta), with T chosen so that
  /// 2 (2 N_KL S + 1) T fits the budget. N_KL is taken from the override or
  /// solved as a fixed point against the calibration.
  static OptimizerConfig theorem_schedule(double budget, double p, double p_lm, double p_kl, Eigen::Index d_theta,
                                          Eigen::Index d_phi, const KLCalibration* calibration,
                                          const OptimizerOverrides& overrides = {});

  /// 2 (2 N_KL S + 1) T, the sample count of the outer loop without the closing call.
  std::uint64_t loop_sample_count() const;
  /// loop_sample_count() plus the closing inner call's 2 N_KL S.
  std::uint64_t total_sample_count() const;

  void validate() const;
};

enum class Level { Outer, Inner, EstimatePr };
const char* to_string(Level level) noexcept;

struct LedgerRecord {
  std::uint64_t step = 0;
  Level level = Level::EstimatePr;
  Vector theta;
  std::size_t offset = 0;  // into the flat loss array
  std::size_t n = 0;
};

/// Append-only record of every deployment and every observed loss.
class RegretLedger {
 public:
  void append(std::uint64_t step, Level level, const Vector& theta, std::span<const double> losses);

  const std::vector<LedgerRecord>& records() const noexcept { return records_; }
  const std::vector<double>& losses() const noexcept { return losses_; }
  std::uint64_t total_samples() const noexcept { return losses_.size(); }
  std::uint64_t samples_with_level(Level level) const;

  void set_pr_opt(double v) { pr_opt_ = v; }
  std::optional<double> pr_opt() const noexcept { return pr_opt_; }

 private:
  std::vector<LedgerRecord> records_;
  std::vector<double> losses_;
  std::optional<double> pr_opt_;
};

/// R_k = (sum of the first k losses) - k * pr_opt for k = 1..N; element k-1 holds R_k.
std::vector<double> compute_regret(const RegretLedger& ledger);

struct TraceRecord {
  std::uint64_t step = 0;
  Vector point;  // phi_t for the two-level optimizer, theta_t for the others
  double grad_norm = 0.0;
  double f_plus = 0.0;
  double f_minus = 0.0;
  // two-level optimizer only: final-step KL estimates of the inner calls
  double kl_plus = 0.0;
  double kl_minus = 0.0;
  bool inner_warning = false;
};

struct RunResult {
  Vector theta_bar;
  Vector phi_bar;
  RegretLedger ledger;
  std::vector<TraceRecord> trace;
  std::uint64_t loop_n = 0;
  std::uint64_t total_n = 0;
  std::size_t inner_warnings = 0;
};

/// (d / (2 delta)) (f_plus - f_minus) u
Vector two_point_gradient(Eigen::Index d, double delta, double f_plus, double f_minus, const Vector& u);

/// One deployment of one sample; returns its loss and records it.
double estimate_pr(Environment& env, const Vector& theta, SeededRng& rng, RegretLedger& ledger,
                   std::uint64_t step = 0, Level level = Level::EstimatePr);

/// Two-point bandit descent on PR(theta) for T steps; returns the mean iterate.
Vector minimize_convex_pr(Environment& env, std::size_t T, RegretLedger& ledger, SeededRng& rng,
                          std::vector<TraceRecord>* trace = nullptr);

struct LearnModelReport {
  double last_kl_plus = 0.0;
  double last_kl_minus = 0.0;
  bool warning = false;  // last-step KL estimate above eps_lm
};

/// Finds a model whose induced parameter approximately equals phi_target by
/// two-point descent on the estimated KL(phi_target || phi(theta)).
Vector learn_model(Environment& env, const Vector& phi_target, const OptimizerConfig& cfg, RegretLedger& ledger,
                   SeededRng& rng, std::uint64_t step = 0, Level level = Level::Inner,
                   LearnModelReport* report = nullptr);

/// Two-level bandit optimizer over the distribution parameter.
RunResult minimize_pr(Environment& env, const OptimizerConfig& cfg, SeededRng& rng);

/// Convex warm-up wrapped as a RunResult.
RunResult run_convex(Environment& env, std::size_t T, SeededRng& rng);

}  // namespace perfzo
