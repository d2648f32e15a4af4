#include "perfzo/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace perfzo {

const char* to_string(Axis axis) noexcept {
  switch (axis) {
    case Axis::Theta: return "theta";
    case Axis::Phi: return "phi";
    case Axis::Natural: return "natural";
  }
  return "unknown";
}

Axis parse_axis(const std::string& text) {
  if (text == "theta") return Axis::Theta;
  if (text == "phi") return Axis::Phi;
  if (text == "natural") return Axis::Natural;
  throw Error(ErrorKind::InvalidParameter, "axis must be theta, phi or natural");
}

ConvexityReport classify_convexity(std::vector<double> grid, std::vector<double> values, double tolerance) {
  if (grid.size() != values.size()) throw Error(ErrorKind::InvalidParameter, "grid and values differ in length");
  if (grid.size() < 3) throw Error(ErrorKind::InvalidParameter, "convexity check needs at least 3 grid points");
  ConvexityReport r;
  r.tolerance = tolerance;
  r.min_second_diff = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i + 1 < values.size(); ++i) {
    const double d2 = values[i - 1] - 2.0 * values[i] + values[i + 1];
    r.second_diff.push_back(d2);
    if (d2 < r.min_second_diff) {
      r.min_second_diff = d2;
      r.witness = grid[i];
    }
  }
  r.convex = r.min_second_diff >= -tolerance;
  r.grid = std::move(grid);
  r.values = std::move(values);
  return r;
}

namespace {

std::vector<double> interior_grid(double lo, double hi, double res) {
  if (!(res > 0.0) || !(hi > lo)) throw Error(ErrorKind::InvalidParameter, "grid needs hi > lo and resolution > 0");
  const auto steps = static_cast<std::size_t>(std::llround((hi - lo) / res));
  if (steps < 4) throw Error(ErrorKind::InvalidParameter, "grid resolution too coarse for the interval");
  std::vector<double> g;
  for (std::size_t i = 1; i < steps; ++i) g.push_back(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(steps));
  return g;
}

}  // namespace

ConvexityReport diag_convexity(const Environment& env, Axis axis, double grid_resolution, double tolerance) {
  const ParamSpace& space = env.theta_space();
  if (space.dim() != 1) throw Error(ErrorKind::Unsupported, "convexity diagnostic needs a one-dimensional model");
  const double tlo = space.lower()[0], thi = space.upper()[0];
  std::vector<double> grid, values;
  if (axis == Axis::Theta) {
    grid = interior_grid(tlo, thi, grid_resolution);
    for (double t : grid) values.push_back(oracle::true_pr_raw(env, Vector::Constant(1, t)));
  } else {
    const DistributionFamily& fam = env.family();
    if (fam.param_space().dim() != 1) throw Error(ErrorKind::Unsupported, "convexity diagnostic needs a scalar phi");
    const double a = oracle::phi_of(env, Vector::Constant(1, tlo))[0];
    const double b = oracle::phi_of(env, Vector::Constant(1, thi))[0];
    if (axis == Axis::Phi) {
      grid = interior_grid(std::min(a, b), std::max(a, b), grid_resolution);
      for (double phi : grid) values.push_back(oracle::pr_dagger(env, phi, true));
    } else {
      if (!fam.is_exponential_family()) throw Error(ErrorKind::Unsupported, "natural axis needs an exponential family");
      const double na = fam.natural(Vector::Constant(1, a)), nb = fam.natural(Vector::Constant(1, b));
      grid = interior_grid(std::min(na, nb), std::max(na, nb), grid_resolution);
      for (double eta : grid) values.push_back(oracle::pr_dagger(env, fam.from_natural(eta)[0], true));
    }
  }
  return classify_convexity(std::move(grid), std::move(values), tolerance);
}

ExpFamReport diag_expfam_condition(const Environment& env, std::size_t grid_points, std::size_t draws,
                                   std::uint64_t seed) {
  const DistributionFamily& fam = env.family();
  if (fam.name() != "poisson_rate") throw Error(ErrorKind::Unsupported, "exponential-family diagnostic needs a Poisson environment");
  if (env.theta_space().dim() != 1) throw Error(ErrorKind::Unsupported, "exponential-family diagnostic needs d_theta = 1");
  if (grid_points < 5) throw Error(ErrorKind::InvalidParameter, "need at least 5 grid points");
  if (draws == 0) throw Error(ErrorKind::InvalidParameter, "need at least one Monte-Carlo draw");

  const LossSpec& loss = env.loss_spec();
  const double tlo = env.theta_space().lower()[0], thi = env.theta_space().upper()[0];
  ExpFamReport report;
  report.all_satisfied = true;
  const SeededRng root(seed, 0x657870ULL);
  SampleBatch batch;
  for (std::size_t i = 0; i < grid_points; ++i) {
    ExpFamPoint pt;
    pt.theta = tlo + (thi - tlo) * static_cast<double>(i) / static_cast<double>(grid_points - 1);
    const Vector theta = Vector::Constant(1, pt.theta);
    const Vector phi = oracle::phi_of(env, theta);
    const double eta = fam.natural(phi);
    const double a1 = fam.log_partition_d1(eta), a2 = fam.log_partition_d2(eta);
    const double eta_prime = fam.natural_derivative(phi) * oracle::phi_derivative(env, pt.theta);
    if (eta_prime == 0.0) throw Error(ErrorKind::Unsupported, "hidden map has zero derivative");

    SeededRng rng = root.fork(i);
    fam.sample(phi, draws, rng, batch);
    double sum_l = 0.0, sum_g = 0.0;
    for (std::size_t k = 0; k < batch.size(); ++k) {
      const Sample z = batch[k];
      sum_l += loss.raw(z, theta);
      sum_g += loss.raw_derivative(z, pt.theta) * (fam.sufficient_stat(z) - a1);
    }
    const double n = static_cast<double>(batch.size());
    pt.lhs = a2 * sum_l / n;
    pt.rhs = 2.0 / eta_prime * sum_g / n;
    pt.lhs_exact = a2 * oracle::true_pr_raw(env, theta);
    pt.rhs_exact = 2.0 / eta_prime *
                   fam.expectation(phi, [&](Sample z) { return loss.raw_derivative(z, pt.theta) * (fam.sufficient_stat(z) - a1); });
    pt.satisfied = pt.lhs <= pt.rhs;
    report.all_satisfied = report.all_satisfied && pt.satisfied;
    report.points.push_back(pt);
  }

  // same models, expressed on the natural axis
  std::vector<double> grid, values;
  for (const auto& pt : report.points) {
    grid.push_back(fam.natural(oracle::phi_of(env, Vector::Constant(1, pt.theta))));
    values.push_back(oracle::true_pr_raw(env, Vector::Constant(1, pt.theta)));
  }
  if (grid.front() > grid.back()) {
    std::reverse(grid.begin(), grid.end());
    std::reverse(values.begin(), values.end());
  }
  report.convexity = classify_convexity(std::move(grid), std::move(values));
  report.implication_holds = !report.all_satisfied || report.convexity.convex;
  return report;
}

}  // namespace perfzo
