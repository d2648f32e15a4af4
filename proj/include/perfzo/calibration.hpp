#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "perfzo/divergence.hpp"

namespace perfzo {

struct CalibrationSetting {
  double eps = 0.05;
  double p = 0.05;
};

/// Monte-Carlo search for the smallest c such that, with N = N_KL(c, eps, p)
/// samples, |estimate - KL(target || phi_s)| > eps happens in at most a p
/// fraction of `trials` for every (target, phi_s) pair drawn from `grid`.
/// The search doubles c from 1e-3 (30 doublings at most), then bisects; the
/// stored constant is the passing value times `safety`. Scalar families only.
KLCalibration calibrate_kl(const DistributionFamily& family, const std::vector<double>& grid, std::size_t trials,
                           const std::vector<CalibrationSetting>& settings, std::uint64_t seed, double safety = 1.25);

/// Worst per-pair failure rate of the constant `c` on the grid.
double calibration_failure_rate(const DistributionFamily& family, const std::vector<double>& grid,
                                std::size_t trials, double c, const CalibrationSetting& setting, std::uint64_t seed);

}  // namespace perfzo
