#include "perfzo/optimizers.hpp"

#include <cmath>
#include <string>

namespace perfzo {

namespace {

[[noreturn]] void bad_config(const std::string& what) { throw Error(ErrorKind::InvalidConfig, what); }

std::size_t ceil_count(double v, const char* what) {
  if (!std::isfinite(v) || v > 1e15) bad_config(std::string(what) + " is not a finite step count");
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(v - 1e-9)));
}

// RNG stream tags
constexpr std::uint64_t kDirections = 0;
constexpr std::uint64_t kDeployPlus = 1;
constexpr std::uint64_t kDeployMinus = 2;
constexpr std::uint64_t kInnerPlus = 3;
constexpr std::uint64_t kInnerMinus = 4;
constexpr std::uint64_t kClosing = 5;

}  // namespace

// ---------------------------------------------------------------------------
// OptimizerConfig

OptimizerConfig OptimizerConfig::derive(double eps, double p, double eps_lm, double p_lm, double eps_kl, double p_kl,
                                        Eigen::Index d_theta, Eigen::Index d_phi, const KLCalibration* calibration,
                                        const OptimizerOverrides& ov) {
  if (d_theta < 1 || d_phi < 1) throw Error(ErrorKind::InvalidDimension, "dimensions must be >= 1");
  if (!(eps > 0.0 && eps_lm > 0.0 && eps_kl > 0.0)) bad_config("eps, eps_lm and eps_kl must be positive");
  for (double q : {p, p_lm, p_kl})
    if (!(q > 0.0 && q < 1.0)) bad_config("failure probabilities must lie in (0, 1)");
  const double dt = static_cast<double>(d_theta), dp = static_cast<double>(d_phi);
  const double outer_gap = eps - std::sqrt(eps_lm * dp);
  const double inner_gap = eps_lm - std::sqrt(eps_kl * dt);
  if (!(outer_gap > 0.0)) bad_config("infeasible tolerances: need eps > sqrt(eps_lm * d_phi)");
  if (!(inner_gap > 0.0)) bad_config("infeasible tolerances: need eps_lm > sqrt(eps_kl * d_theta)");

  OptimizerConfig c;
  c.eps = eps;
  c.p = p;
  c.eps_lm = eps_lm;
  c.p_lm = p_lm;
  c.eps_kl = eps_kl;
  c.p_kl = p_kl;
  c.T = ov.T.value_or(ceil_count(dp / (outer_gap * outer_gap), "T"));
  c.S = ov.S.value_or(ceil_count(dt / (inner_gap * inner_gap), "S"));
  c.delta = ov.delta.value_or(std::sqrt(eps_lm * dp));
  c.delta_lm = ov.delta_lm.value_or(std::sqrt(eps_kl * dt));
  c.eta = ov.eta.value_or(1.0 / std::sqrt(dp * static_cast<double>(c.T)));
  c.eta_lm = ov.eta_lm.value_or(1.0 / std::sqrt(dt * static_cast<double>(c.S)));
  if (ov.n_kl) {
    c.n_kl = *ov.n_kl;
  } else {
    if (!calibration) throw Error(ErrorKind::CalibrationMissing, "N_KL needs a KL calibration or an explicit n_kl");
    c.n_kl = perfzo::n_kl(*calibration, eps_kl, p_kl);
  }
  c.validate();
  return c;
}

OptimizerConfig OptimizerConfig::theorem_schedule(double budget, double p, double p_lm, double p_kl,
                                                  Eigen::Index d_theta, Eigen::Index d_phi,
                                                  const KLCalibration* calibration, const OptimizerOverrides& ov) {
  if (!(budget >= 16.0) || !std::isfinite(budget)) bad_config("theorem schedule needs a finite budget >= 16");
  const double dt = static_cast<double>(d_theta), dp = static_cast<double>(d_phi);
  auto eps_kl_for = [&](double nkl) { return std::pow(nkl / budget, 2.0 / 3.0) / (4.0 * dt); };

  std::size_t nkl = 0;
  if (ov.n_kl) {
    nkl = *ov.n_kl;
  } else {
    if (!calibration) throw Error(ErrorKind::CalibrationMissing, "theorem schedule needs a calibration or n_kl");
    // smallest N_KL that the calibration certifies at its own eps_kl
    std::size_t lo = 1, hi = static_cast<std::size_t>(budget);
    if (perfzo::n_kl(*calibration, eps_kl_for(static_cast<double>(hi)), p_kl) > hi)
      bad_config("budget too small for any self-consistent N_KL");
    while (lo < hi) {
      const std::size_t mid = lo + (hi - lo) / 2;
      if (perfzo::n_kl(*calibration, eps_kl_for(static_cast<double>(mid)), p_kl) <= mid) hi = mid;
      else lo = mid + 1;
    }
    nkl = lo;
  }
  const double ratio = static_cast<double>(nkl) / budget;
  const double eps_lm = std::cbrt(ratio);
  const double eps_kl = eps_kl_for(static_cast<double>(nkl));
  const double inner_gap = eps_lm - std::sqrt(eps_kl * dt);
  const std::size_t S = ov.S.value_or(ceil_count(dt / (inner_gap * inner_gap), "S"));
  const double per_outer = 2.0 * (2.0 * static_cast<double>(nkl) * static_cast<double>(S) + 1.0);
  const auto T_fit = static_cast<std::size_t>(std::floor(budget / per_outer));
  if (T_fit < 1 && !ov.T) bad_config("budget too small for one outer step under the theorem schedule");
  const std::size_t T = ov.T.value_or(T_fit);
  const double eps = std::sqrt(eps_lm * dp) + std::sqrt(dp / static_cast<double>(T));

  OptimizerOverrides fixed = ov;
  fixed.T = T;
  fixed.S = S;
  fixed.n_kl = nkl;
  return derive(eps, p, eps_lm, p_lm, eps_kl, p_kl, d_theta, d_phi, calibration, fixed);
}

std::uint64_t OptimizerConfig::loop_sample_count() const {
  return 2ULL * (2ULL * n_kl * S + 1ULL) * T;
}

std::uint64_t OptimizerConfig::total_sample_count() const { return loop_sample_count() + 2ULL * n_kl * S; }

void OptimizerConfig::validate() const {
  if (T < 1 || S < 1 || n_kl < 1) bad_config("T, S and N_KL must be >= 1");
  if (!(delta > 0.0 && delta < 1.0)) bad_config("delta must lie in (0, 1) after scaling by the space extent");
  if (!(delta_lm > 0.0 && delta_lm < 1.0)) bad_config("delta_lm must lie in (0, 1) after scaling by the space extent");
  if (!(eta > 0.0 && eta_lm > 0.0)) bad_config("step sizes must be positive");
}

// ---------------------------------------------------------------------------
// Ledger

const char* to_string(Level level) noexcept {
  switch (level) {
    case Level::Outer: return "outer";
    case Level::Inner: return "inner";
    case Level::EstimatePr: return "estimate_pr";
  }
  return "unknown";
}

void RegretLedger::append(std::uint64_t step, Level level, const Vector& theta, std::span<const double> losses) {
  records_.push_back(LedgerRecord{step, level, theta, losses_.size(), losses.size()});
  losses_.insert(losses_.end(), losses.begin(), losses.end());
}

std::uint64_t RegretLedger::samples_with_level(Level level) const {
  std::uint64_t n = 0;
  for (const auto& r : records_)
    if (r.level == level) n += r.n;
  return n;
}

std::vector<double> compute_regret(const RegretLedger& ledger) {
  if (!ledger.pr_opt()) throw Error(ErrorKind::InvalidParameter, "regret needs pr_opt from an oracle report");
  const double opt = *ledger.pr_opt();
  const auto& losses = ledger.losses();
  std::vector<double> out(losses.size());
  double cum = 0.0;
  for (std::size_t k = 0; k < losses.size(); ++k) {
    cum += losses[k];
    out[k] = cum - static_cast<double>(k + 1) * opt;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Algorithms

Vector two_point_gradient(Eigen::Index d, double delta, double f_plus, double f_minus, const Vector& u) {
  if (!(delta > 0.0)) throw Error(ErrorKind::InvalidParameter, "two-point gradient needs delta > 0");
  if (d < 1) throw Error(ErrorKind::InvalidDimension, "two-point gradient needs d >= 1");
  if (std::abs(u.norm() - 1.0) > 1e-9) throw Error(ErrorKind::InvalidParameter, "direction must be a unit vector");
  return (static_cast<double>(d) / (2.0 * delta)) * (f_plus - f_minus) * u;
}

double estimate_pr(Environment& env, const Vector& theta, SeededRng& rng, RegretLedger& ledger, std::uint64_t step,
                   Level level) {
  const SampleBatch z = env.deploy(theta, 1, rng);
  const double l = env.loss(z[0], theta);
  ledger.append(step, level, theta, std::span<const double>(&l, 1));
  return l;
}

namespace {

// Perturbations are scaled by the space's half extent so delta stays dimensionless;
// the descent step is taken in the same normalized coordinates.
struct ScaledSpace {
  const ParamSpace& space;
  Vector h;

  explicit ScaledSpace(const ParamSpace& s) : space(s), h(s.half_extent()) {}

  Vector perturb(const Vector& x, double delta, const Vector& u) const { return x + delta * h.cwiseProduct(u); }
  Vector step(const Vector& x, double eta, const Vector& g, double delta) const {
    return project_shrunk(space, x - eta * h.cwiseProduct(g), delta);
  }
};

}  // namespace

Vector minimize_convex_pr(Environment& env, std::size_t T, RegretLedger& ledger, SeededRng& rng,
                          std::vector<TraceRecord>* trace) {
  if (T == 0) throw Error(ErrorKind::InvalidParameter, "T must be >= 1");
  const ParamSpace& space = env.theta_space();
  const auto d = space.dim();
  const double dd = static_cast<double>(d);
  const double delta = std::sqrt(dd / static_cast<double>(T));
  const double eta = 1.0 / std::sqrt(dd * static_cast<double>(T));
  if (!(delta < 1.0)) throw Error(ErrorKind::InvalidParameter, "T must exceed d so that delta < 1");

  const ScaledSpace scaled(space);
  SeededRng dirs = rng.fork(kDirections);
  SeededRng plus_rng = rng.fork(kDeployPlus), minus_rng = rng.fork(kDeployMinus);
  Vector theta = space.center();
  Vector sum = Vector::Zero(d);
  for (std::size_t t = 1; t <= T; ++t) {
    sum += theta;
    const Vector u = sample_unit_sphere(d, dirs);
    const Vector tp = scaled.perturb(theta, delta, u), tm = scaled.perturb(theta, -delta, u);
    const double fp = estimate_pr(env, tp, plus_rng, ledger, t);
    const double fm = estimate_pr(env, tm, minus_rng, ledger, t);
    const Vector g = two_point_gradient(d, delta, fp, fm, u);
    if (trace) trace->push_back(TraceRecord{t, theta, g.norm(), fp, fm, 0.0, 0.0, false});
    theta = scaled.step(theta, eta, g, delta);
  }
  return sum / static_cast<double>(T);
}

Vector learn_model(Environment& env, const Vector& phi_target, const OptimizerConfig& cfg, RegretLedger& ledger,
                   SeededRng& rng, std::uint64_t step, Level level, LearnModelReport* report) {
  const auto& family = env.family();
  check_dim(family.param_space(), phi_target);
  if (!family.param_space().contains(phi_target, 1e-12))
    throw Error(ErrorKind::InvalidParameter, "learn_model target outside the distribution parameter space");
  cfg.validate();

  const ParamSpace& space = env.theta_space();
  const auto d = space.dim();
  const ScaledSpace scaled(space);
  SeededRng dirs = rng.fork(kDirections);
  const SeededRng plus_root = rng.fork(kDeployPlus), minus_root = rng.fork(kDeployMinus);

  SampleBatch batch;
  std::vector<double> losses;
  losses.reserve(cfg.n_kl);
  auto query = [&](const Vector& theta, SeededRng& stream) {
    env.deploy_into(theta, cfg.n_kl, stream, batch);
    losses.clear();
    env.losses(batch, theta, losses);
    ledger.append(step, level, theta, losses);
    return estimate_kl(family, phi_target, batch, cfg.n_kl).value;
  };

  Vector theta = space.center();
  Vector sum = Vector::Zero(d);
  double kp = 0.0, km = 0.0;
  for (std::size_t s = 1; s <= cfg.S; ++s) {
    sum += theta;
    const Vector u = sample_unit_sphere(d, dirs);
    const Vector tp = scaled.perturb(theta, cfg.delta_lm, u), tm = scaled.perturb(theta, -cfg.delta_lm, u);
    SeededRng sp = plus_root.fork(s), sm = minus_root.fork(s);
    kp = query(tp, sp);
    km = query(tm, sm);
    const Vector g = two_point_gradient(d, cfg.delta_lm, kp, km, u);
    theta = scaled.step(theta, cfg.eta_lm, g, cfg.delta_lm);
  }
  if (report) {
    report->last_kl_plus = kp;
    report->last_kl_minus = km;
    report->warning = 0.5 * (kp + km) > cfg.eps_lm;
  }
  return sum / static_cast<double>(cfg.S);
}

RunResult minimize_pr(Environment& env, const OptimizerConfig& cfg, SeededRng& rng) {
  cfg.validate();
  const ParamSpace& phi_space = env.family().param_space();
  const auto d = phi_space.dim();
  const ScaledSpace scaled(phi_space);
  const std::uint64_t start = env.sample_counter();

  RunResult result;
  SeededRng dirs = rng.fork(kDirections);
  const SeededRng inner_plus = rng.fork(kInnerPlus), inner_minus = rng.fork(kInnerMinus);
  const SeededRng pr_plus = rng.fork(kDeployPlus), pr_minus = rng.fork(kDeployMinus);

  Vector phi = phi_space.center();
  Vector sum = Vector::Zero(d);
  for (std::size_t t = 1; t <= cfg.T; ++t) {
    sum += phi;
    const Vector u = sample_unit_sphere(d, dirs);
    const Vector target_plus = project(phi_space, scaled.perturb(phi, cfg.delta, u));
    const Vector target_minus = project(phi_space, scaled.perturb(phi, -cfg.delta, u));

    LearnModelReport rp, rm;
    SeededRng lp = inner_plus.fork(t), lm = inner_minus.fork(t);
    const Vector theta_plus = learn_model(env, target_plus, cfg, result.ledger, lp, t, Level::Inner, &rp);
    const Vector theta_minus = learn_model(env, target_minus, cfg, result.ledger, lm, t, Level::Inner, &rm);

    SeededRng ep = pr_plus.fork(t), em = pr_minus.fork(t);
    const double fp = estimate_pr(env, theta_plus, ep, result.ledger, t);
    const double fm = estimate_pr(env, theta_minus, em, result.ledger, t);
    const Vector g = two_point_gradient(d, cfg.delta, fp, fm, u);

    // mean of the final-step KL pair of each inner call
    TraceRecord rec{t, phi, g.norm(), fp, fm, 0.5 * (rp.last_kl_plus + rp.last_kl_minus),
                    0.5 * (rm.last_kl_plus + rm.last_kl_minus), rp.warning || rm.warning};
    result.inner_warnings += static_cast<std::size_t>(rp.warning) + static_cast<std::size_t>(rm.warning);
    result.trace.push_back(std::move(rec));

    phi = scaled.step(phi, cfg.eta, g, cfg.delta);
    if (!phi_space.scaled(1.0 - cfg.delta).contains(phi, 1e-12))
      throw Error(ErrorKind::InvalidParameter, "outer iterate left the shrunk parameter space");
  }
  result.loop_n = env.sample_counter() - start;

  result.phi_bar = sum / static_cast<double>(cfg.T);
  SeededRng closing = rng.fork(kClosing);
  result.theta_bar = learn_model(env, result.phi_bar, cfg, result.ledger, closing, cfg.T + 1, Level::Outer);
  result.total_n = env.sample_counter() - start;
  return result;
}

RunResult run_convex(Environment& env, std::size_t T, SeededRng& rng) {
  RunResult result;
  const std::uint64_t start = env.sample_counter();
  result.theta_bar = minimize_convex_pr(env, T, result.ledger, rng, &result.trace);
  result.loop_n = result.total_n = env.sample_counter() - start;
  return result;
}

}  // namespace perfzo
