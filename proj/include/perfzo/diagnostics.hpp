#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "perfzo/environment.hpp"

namespace perfzo {

enum class Axis {
  Theta,    // PR(theta)
  Phi,      // PR over the family's native parameter
  Natural,  // PR over the exponential-family natural parameter
};
const char* to_string(Axis axis) noexcept;
Axis parse_axis(const std::string& text);

struct ConvexityReport {
  std::vector<double> grid;
  std::vector<double> values;
  std::vector<double> second_diff;  // entry i belongs to grid[i + 1]
  double min_second_diff = 0.0;
  double witness = 0.0;  // grid point of the minimum
  bool convex = true;
  double tolerance = 1e-6;
};

/// Raw second central differences v[i-1] - 2 v[i] + v[i+1] of a sampled function.
ConvexityReport classify_convexity(std::vector<double> grid, std::vector<double> values, double tolerance = 1e-6);

/// Unnormalized PR sampled on the interior points of a uniform grid with the given spacing,
/// along the model axis or along the image of the hidden map.
ConvexityReport diag_convexity(const Environment& env, Axis axis, double grid_resolution, double tolerance = 1e-6);

struct ExpFamPoint {
  double theta = 0.0;
  double lhs = 0.0;  // A''(eta) E[l]
  double rhs = 0.0;  // (2 / eta'(theta)) E[dl/dtheta (T(z) - A'(eta))]
  double lhs_exact = 0.0;  // same quantities by exact summation
  double rhs_exact = 0.0;
  bool satisfied = false;
};

struct ExpFamReport {
  std::vector<ExpFamPoint> points;
  bool all_satisfied = false;
  ConvexityReport convexity;  // PR over the natural parameter on the same grid
  bool implication_holds = true;  // all_satisfied implies convexity.convex
};

/// Sufficient convexity condition for exponential-family environments, evaluated
/// by Monte Carlo (`draws` per grid point) at `grid_points` evenly spaced models.
ExpFamReport diag_expfam_condition(const Environment& env, std::size_t grid_points = 11, std::size_t draws = 1000000,
                                   std::uint64_t seed = 1);

}  // namespace perfzo
