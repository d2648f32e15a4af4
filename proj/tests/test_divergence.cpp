#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "perfzo/calibration.hpp"
#include "perfzo/divergence.hpp"
#include "perfzo/environment.hpp"

using namespace perfzo;

namespace {

Vector scalar(double v) { return Vector::Constant(1, v); }

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::Io;
}

SampleBatch batch_of(std::initializer_list<std::pair<double, int>> runs) {
  SampleBatch b(1, 0);
  for (auto [v, count] : runs)
    for (int i = 0; i < count; ++i) b.push_back(Sample(&v, 1));
  return b;
}

FamilyPtr unit_gaussian() { return make_gaussian_mean(ParamSpace::interval(scalar(-3.0), scalar(3.0)), 1.0); }

// Smallest L with |a - b| <= L sqrt(KL(a || b)) over the grid.
double tightest_pinsker(const DistributionFamily& fam, const std::vector<double>& grid) {
  double L = 0.0;
  for (double a : grid)
    for (double b : grid)
      if (a != b) L = std::max(L, std::abs(a - b) / std::sqrt(fam.kl(scalar(a), scalar(b))));
  return L;
}

std::vector<double> grid50(double lo, double hi) {
  std::vector<double> g;
  for (int i = 0; i < 50; ++i) g.push_back(lo + (hi - lo) * i / 49.0);
  return g;
}

}  // namespace

TEST_CASE("closed-form KL examples") {
  const FamilyPtr bern = make_bernoulli_label();
  CHECK(kl_closed_form(*bern, scalar(0.3), scalar(0.3)) == 0.0);
  const double expected = 0.5 * std::log(0.5 / 0.25) + 0.5 * std::log(0.5 / 0.75);
  CHECK(kl_closed_form(*bern, scalar(0.5), scalar(0.25)) == doctest::Approx(expected).epsilon(1e-14));
  CHECK(kl_closed_form(*bern, scalar(0.5), scalar(0.25)) == doctest::Approx(0.143841).epsilon(1e-6));
  CHECK(kl_closed_form(*unit_gaussian(), scalar(0.0), scalar(2.0)) == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("closed-form KL agrees with direct integration") {
  const FamilyPtr pois = make_poisson_rate(0.1, 10.0);
  for (auto [a, b] : {std::pair{0.5, 2.0}, {3.0, 1.0}, {4.0, 4.5}}) {
    const double direct = pois->expectation(
        scalar(a), [&](Sample z) { return std::log(pois->density(z, scalar(a)) / pois->density(z, scalar(b))); });
    CHECK(kl_closed_form(*pois, scalar(a), scalar(b)) == doctest::Approx(direct).epsilon(1e-8));
  }
  const FamilyPtr g = make_gaussian_mean(ParamSpace::interval(scalar(-1.0), scalar(1.0)), 0.5);
  CHECK(kl_closed_form(*g, scalar(0.2), scalar(-0.4)) == doctest::Approx(0.36 / 0.5).epsilon(1e-12));
}

TEST_CASE("closed-form KL is nonnegative and vanishes only on the diagonal") {
  const FamilyPtr bern = make_bernoulli_label();
  const FamilyPtr gauss = unit_gaussian();
  const FamilyPtr pois = make_poisson_rate(0.01, 10.0);
  for (double a : {0.05, 0.3, 0.5, 0.9})
    for (double b : {0.05, 0.3, 0.5, 0.9}) {
      for (const auto* fam : {bern.get(), gauss.get(), pois.get()}) {
        const double kl = kl_closed_form(*fam, scalar(a), scalar(b));
        CHECK(kl >= 0.0);
        if (a == b) CHECK(kl == 0.0);
        else CHECK(kl > 0.0);
      }
    }
}

TEST_CASE("closed-form KL guards") {
  const FamilyPtr bern = make_bernoulli_label();
  CHECK(kind_of([&] { kl_closed_form(*bern, scalar(1.2), scalar(0.5)); }) == ErrorKind::InvalidParameter);
  CHECK(std::isinf(kl_closed_form(*bern, scalar(0.5), scalar(1.0))));
  CHECK(std::isinf(kl_closed_form(*bern, scalar(0.5), scalar(0.0))));
}

TEST_CASE("plug-in estimate equals the closed form at the MLE") {
  const FamilyPtr bern = make_bernoulli_label();
  const SampleBatch b = batch_of({{0.0, 40}, {1.0, 60}});
  const KLEstimate est = estimate_kl(*bern, scalar(0.25), b, 100);
  CHECK(est.fitted_phi[0] == doctest::Approx(0.6).epsilon(1e-14));
  const double expected = 0.25 * std::log(0.25 / 0.6) + 0.75 * std::log(0.75 / 0.4);
  CHECK(est.value == doctest::Approx(expected).epsilon(1e-12));
  CHECK(est.n_samples_used == 100);
}

TEST_CASE("all-ones batch gives a finite clamped estimate") {
  const FamilyPtr bern = make_bernoulli_label();
  const SampleBatch b = batch_of({{1.0, 50}});
  const KLEstimate est = estimate_kl(*bern, scalar(0.5), b, 50);
  CHECK(std::isfinite(est.value));
  CHECK(est.fitted_phi[0] == doctest::Approx(1.0 - 1.0 / 100.0));
}

TEST_CASE("estimate approaches zero for samples drawn at the target") {
  const std::vector<std::pair<FamilyPtr, double>> cases = {
      {make_bernoulli_label(), 0.3}, {unit_gaussian(), 0.7}, {make_poisson_rate(0.1, 10.0), 2.0}};
  for (const auto& [fam, target] : cases) {
    SeededRng rng(11, 0);
    const SampleBatch b = fam->sample(scalar(target), 200000, rng);
    CHECK(estimate_kl(*fam, scalar(target), b, b.size()).value < 1e-4);
  }
}

TEST_CASE("too few samples is an error") {
  const FamilyPtr bern = make_bernoulli_label();
  const SampleBatch b = batch_of({{1.0, 10}});
  CHECK(kind_of([&] { estimate_kl(*bern, scalar(0.5), b, 11); }) == ErrorKind::InsufficientSamples);
  KLCalibration cal;
  cal.family = bern->name();
  cal.c_cal = 1.0;
  CHECK(kind_of([&] { estimate_kl(*bern, scalar(0.5), b, 0.1, 0.05, cal); }) == ErrorKind::InsufficientSamples);
}

TEST_CASE("sample requirement formula") {
  CHECK(n_kl(1.0, 0.1, 0.05) == 369);
  CHECK(n_kl(1.0, 0.1, 0.05) == static_cast<std::size_t>(std::ceil(100.0 * std::log(40.0))));
  CHECK(n_kl(1.0, 1.0, 2.0 / std::exp(2.0)) == 2);
  KLCalibrationTable table;
  CHECK(kind_of([&] { n_kl(table, *make_bernoulli_label(), 0.1, 0.05); }) == ErrorKind::CalibrationMissing);
  table[make_bernoulli_label()->name()].c_cal = 2.0;
  CHECK(n_kl(table, *make_bernoulli_label(), 0.1, 0.05) == 738);
}

TEST_CASE("parameter distance is bounded by root KL on 50x50 grids") {
  const FamilyPtr bern = make_bernoulli_label();
  const std::vector<double> bgrid = grid50(0.01, 0.99);
  const double Lb = tightest_pinsker(*bern, bgrid);
  // Pinsker gives |a - b| <= sqrt(KL / 2) for Bernoulli
  CHECK(Lb <= std::sqrt(0.5) + 1e-12);

  const double sigma = 0.8;
  const FamilyPtr gauss = make_gaussian_mean(ParamSpace::interval(scalar(-2.0), scalar(2.0)), sigma);
  const std::vector<double> ggrid = grid50(-2.0, 2.0);
  const double Lg = tightest_pinsker(*gauss, ggrid);
  CHECK(Lg == doctest::Approx(std::sqrt(2.0) * sigma).epsilon(1e-9));

  int violations = 0;
  for (const auto& [fam, grid, L] : {std::tuple{bern.get(), bgrid, Lb}, std::tuple{gauss.get(), ggrid, Lg}})
    for (double a : grid)
      for (double b : grid)
        if (std::abs(a - b) > L * std::sqrt(fam->kl(scalar(a), scalar(b))) * (1 + 1e-12)) ++violations;
  CHECK(violations == 0);
}

TEST_CASE("KL to the deployed distribution is Lipschitz in theta on the square-map environment") {
  const Environment env = make_environment("example1_square");
  const FamilyPtr bern = make_bernoulli_label();
  std::vector<double> thetas;
  for (int i = 0; i <= 80; ++i) thetas.push_back(0.1 + 0.01 * i);
  for (double target : {0.2, 0.5, 0.7}) {
    auto kl_at = [&](double t) { return bern->kl(scalar(target), oracle::phi_of(env, scalar(t))); };
    double L = 0.0;
    for (std::size_t i = 1; i < thetas.size(); ++i)
      L = std::max(L, std::abs(kl_at(thetas[i]) - kl_at(thetas[i - 1])) / (thetas[i] - thetas[i - 1]));
    SeededRng rng(12, 0);
    for (int k = 0; k < 2000; ++k) {
      const double a = 0.1 + 0.8 * rng.uniform01(), b = 0.1 + 0.8 * rng.uniform01();
      CHECK(std::abs(kl_at(a) - kl_at(b)) <= 1.1 * L * std::abs(a - b) + 1e-15);
    }
  }
}

namespace {

double worst_uniform_second_diff(const Environment& env, double target) {
  const FamilyPtr fam = env.family_ptr();
  const double lo = env.theta_space().lower()[0], hi = env.theta_space().upper()[0];
  auto kl_at = [&](double t) { return fam->kl(scalar(target), oracle::phi_of(env, scalar(t))); };
  const int n = 200;
  const double h = (hi - lo) / n;
  double worst = 1e9;
  for (int i = 1; i < n; ++i) {
    const double t = lo + i * h;
    worst = std::min(worst, kl_at(t - h) - 2 * kl_at(t) + kl_at(t + h));
  }
  return worst;
}

}  // namespace

TEST_CASE("uniform example KL is convex in theta while c (target - phi) stays below 2") {
  // f(x) = c x exp(c x) has f'' = c^2 exp(c x) (2 + c x), so convexity needs
  // c x >= -2 across the range; with c = 50 and phi(Theta) = [0, 0.2] that
  // holds for targets up to 0.04
  const Environment env = make_environment("uniform_exp");
  for (double target : {0.0, 0.02, 0.04}) CHECK(worst_uniform_second_diff(env, target) >= -1e-6);
  for (double target : {0.1, 0.18}) CHECK(worst_uniform_second_diff(env, target) < -1e-6);
  // a smaller constant keeps every target inside the convex regime
  const Environment mild = make_environment("uniform_exp", {{"c", "10"}});
  for (double target : {0.0, 0.1, 0.2}) CHECK(worst_uniform_second_diff(mild, target) >= -1e-6);
}

TEST_CASE("plug-in error decays like one over root n") {
  const FamilyPtr bern = make_bernoulli_label();
  SeededRng root(13, 0);
  std::vector<double> logn, logerr;
  for (std::size_t n : {100u, 1000u, 10000u, 100000u}) {
    // KL near the target is quadratic, so the estimate tracks |phi_hat - phi|^2;
    // its square root is the quantity that decays at 1/sqrt(n)
    double acc = 0.0;
    const int reps = 400;
    for (int r = 0; r < reps; ++r) {
      SeededRng rng = root.fork(n).fork(static_cast<std::uint64_t>(r));
      const SampleBatch b = bern->sample(scalar(0.3), n, rng);
      acc += std::sqrt(estimate_kl(*bern, scalar(0.3), b, n).value);
    }
    logn.push_back(std::log(static_cast<double>(n)));
    logerr.push_back(std::log(acc / reps));
  }
  const double mx = (logn[0] + logn[1] + logn[2] + logn[3]) / 4, my = (logerr[0] + logerr[1] + logerr[2] + logerr[3]) / 4;
  double sxy = 0, sxx = 0;
  for (int i = 0; i < 4; ++i) {
    sxy += (logn[i] - mx) * (logerr[i] - my);
    sxx += (logn[i] - mx) * (logn[i] - mx);
  }
  const double slope = sxy / sxx;
  CAPTURE(slope);
  CHECK(slope >= -0.6);
  CHECK(slope <= -0.4);
}

TEST_CASE("calibration table survives a save and load") {
  KLCalibrationTable table;
  KLCalibration& b = table["bernoulli"];
  b.family = "bernoulli";
  b.c_cal = 9.889;
  b.c_raw = 7.9112;
  b.safety = 1.25;
  b.eps = 0.05;
  b.p = 0.05;
  b.trials = 2000;
  b.seed = 7;
  b.grid = {0.1, 0.5, 0.9};
  b.worst_failure_rate = 0.0465;
  const auto path = std::filesystem::temp_directory_path() / "perfzo_test_calibration.ini";
  save_calibration(path.string(), table);
  const KLCalibrationTable back = load_calibration(path.string());
  std::filesystem::remove(path);
  REQUIRE(back.count("bernoulli") == 1);
  const KLCalibration& r = back.at("bernoulli");
  CHECK(r.c_cal == b.c_cal);
  CHECK(r.c_raw == b.c_raw);
  CHECK(r.trials == b.trials);
  CHECK(r.seed == b.seed);
  CHECK(r.grid == b.grid);
  CHECK(r.worst_failure_rate == b.worst_failure_rate);
  CHECK(kind_of([] { load_calibration("/nonexistent/perfzo.ini"); }) == ErrorKind::Io);
}

TEST_CASE("calibration search is deterministic and meets its own contract") {
  const FamilyPtr bern = make_bernoulli_label();
  const std::vector<double> grid = {0.2, 0.5, 0.8};
  const CalibrationSetting setting{0.1, 0.1};
  const KLCalibration a = calibrate_kl(*bern, grid, 300, {setting}, 5);
  const KLCalibration b = calibrate_kl(*bern, grid, 300, {setting}, 5);
  CHECK(a.c_cal == b.c_cal);
  CHECK(std::isfinite(a.c_cal));
  CHECK(a.c_cal == doctest::Approx(1.25 * a.c_raw));
  CHECK(calibration_failure_rate(*bern, grid, 300, a.c_raw, setting, 5) <= setting.p);
  // a huge tolerance is met by the smallest constant tried
  const KLCalibration loose = calibrate_kl(*bern, grid, 100, {{100.0, 0.5}}, 5, 1.0);
  CHECK(loose.c_raw <= 1e-3);
}
