#include "perfzo/calibration.hpp"

#include <algorithm>
#include <cmath>

namespace perfzo {

namespace {

constexpr int kMaxDoublings = 30;
constexpr int kBisections = 40;

// Largest per-pair exceedance frequency. Each (phi_s, trial) draw is shared
// by all targets, and its stream depends only on (seed, phi_s, trial), so
// repeated evaluations at different c use common random numbers.
double worst_rate(const DistributionFamily& family, const std::vector<double>& grid, std::size_t trials,
                  std::size_t n, double eps, std::uint64_t seed) {
  const std::size_t g = grid.size();
  std::vector<double> truth(g * g);
  for (std::size_t s = 0; s < g; ++s)
    for (std::size_t t = 0; t < g; ++t)
      truth[s * g + t] = family.kl(Vector::Constant(1, grid[t]), Vector::Constant(1, grid[s]));

  std::vector<std::size_t> fails(g * g, 0);
  const SeededRng root(seed, 0x6b6c63616cULL);
  for (std::size_t s = 0; s < g; ++s) {
    const Vector phi_s = Vector::Constant(1, grid[s]);
    const SeededRng point = root.fork(s);
    for (std::size_t k = 0; k < trials; ++k) {
      SeededRng rng = point.fork(k);
      const Vector fitted = clamped_mle(family, family.sample_mle(phi_s, n, rng), n);
      for (std::size_t t = 0; t < g; ++t) {
        const double est = family.kl(Vector::Constant(1, grid[t]), fitted);
        const double err = std::abs(est - truth[s * g + t]);
        if (!(err <= eps)) ++fails[s * g + t];
      }
    }
  }
  const std::size_t worst = *std::max_element(fails.begin(), fails.end());
  return static_cast<double>(worst) / static_cast<double>(trials);
}

void check_inputs(const DistributionFamily& family, const std::vector<double>& grid, std::size_t trials) {
  if (family.param_space().dim() != 1)
    throw Error(ErrorKind::Unsupported, "calibration supports scalar families only");
  if (grid.empty()) throw Error(ErrorKind::InvalidParameter, "calibration grid is empty");
  if (trials == 0) throw Error(ErrorKind::InvalidParameter, "calibration needs at least one trial");
  for (double v : grid)
    if (!family.param_space().contains(Vector::Constant(1, v)))
      throw Error(ErrorKind::InvalidParameter, "calibration grid point outside the parameter space");
}

}  // namespace

double calibration_failure_rate(const DistributionFamily& family, const std::vector<double>& grid,
                                std::size_t trials, double c, const CalibrationSetting& setting, std::uint64_t seed) {
  check_inputs(family, grid, trials);
  return worst_rate(family, grid, trials, n_kl(c, setting.eps, setting.p), setting.eps, seed);
}

KLCalibration calibrate_kl(const DistributionFamily& family, const std::vector<double>& grid, std::size_t trials,
                           const std::vector<CalibrationSetting>& settings, std::uint64_t seed, double safety) {
  check_inputs(family, grid, trials);
  if (settings.empty()) throw Error(ErrorKind::InvalidParameter, "calibration needs at least one (eps, p) setting");
  if (!(safety >= 1.0)) throw Error(ErrorKind::InvalidParameter, "safety factor must be >= 1");

  auto passes = [&](double c, double* worst) {
    bool ok = true;
    double w = 0.0;
    for (const auto& st : settings) {
      const double rate = worst_rate(family, grid, trials, n_kl(c, st.eps, st.p), st.eps, seed);
      w = std::max(w, rate);
      ok = ok && rate <= st.p;
    }
    if (worst) *worst = w;
    return ok;
  };

  double hi = 1e-3;
  double worst = 0.0;
  int doublings = 0;
  while (!passes(hi, &worst)) {
    if (++doublings > kMaxDoublings)
      throw Error(ErrorKind::CalibrationFailure, "KL calibration did not converge after 30 doublings");
    hi *= 2.0;
  }
  double lo = doublings == 0 ? 0.0 : hi / 2.0;
  for (int i = 0; i < kBisections && doublings > 0; ++i) {
    const double mid = 0.5 * (lo + hi);
    bool same_n = true;
    for (const auto& st : settings) same_n = same_n && n_kl(mid, st.eps, st.p) == n_kl(hi, st.eps, st.p);
    if (same_n) {
      hi = mid;  // identical sample sizes, identical outcome
      continue;
    }
    if (passes(mid, nullptr)) hi = mid;
    else lo = mid;
    if (hi - lo <= 1e-4 * hi) break;
  }
  passes(hi, &worst);

  KLCalibration cal;
  cal.family = family.name();
  cal.c_raw = hi;
  cal.safety = safety;
  cal.c_cal = hi * safety;
  cal.eps = settings.front().eps;
  cal.p = settings.front().p;
  cal.trials = trials;
  cal.seed = seed;
  cal.grid = grid;
  cal.worst_failure_rate = worst;
  return cal;
}

}  // namespace perfzo
