#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "perfzo/families.hpp"

namespace perfzo {

struct KLEstimate {
  double value = 0.0;
  std::size_t n_samples_used = 0;
  Vector target_phi;
  Vector fitted_phi;  // clamped MLE
};

/// Per-family constant of N_KL(eps, p) = ceil(c_cal * log(2 / p) / eps^2),
/// plus the metadata of the Monte-Carlo run that produced it.
struct KLCalibration {
  std::string family;
  double c_cal = 0.0;
  double c_raw = 0.0;     // smallest passing constant before the safety factor
  double safety = 1.0;
  double eps = 0.0;
  double p = 0.0;
  std::size_t trials = 0;
  std::uint64_t seed = 0;
  std::vector<double> grid;
  double worst_failure_rate = 0.0;
};

using KLCalibrationTable = std::map<std::string, KLCalibration>;

/// KL(p(.; phi1) || p(.; phi2)) with parameter validation.
double kl_closed_form(const DistributionFamily& family, const Vector& phi1, const Vector& phi2);

/// ceil(c_cal * log(2 / p) / eps^2), at least 1.
std::size_t n_kl(double c_cal, double eps_kl, double p_kl);
std::size_t n_kl(const KLCalibration& cal, double eps_kl, double p_kl);
std::size_t n_kl(const KLCalibrationTable& table, const DistributionFamily& family, double eps_kl, double p_kl);

/// MLE pulled into the family's space shrunk by a margin of width / (2 n) per axis.
Vector clamped_mle(const DistributionFamily& family, const Vector& mle, std::size_t n);

/// Plug-in estimate KL(target || MLE(samples)); throws InsufficientSamples when
/// the batch is shorter than `required_samples`.
KLEstimate estimate_kl(const DistributionFamily& family, const Vector& phi_target, const SampleBatch& samples,
                       std::size_t required_samples);

/// Same, with the requirement taken from the calibrated N_KL(eps_kl, p_kl).
KLEstimate estimate_kl(const DistributionFamily& family, const Vector& phi_target, const SampleBatch& samples,
                       double eps_kl, double p_kl, const KLCalibration& cal);

KLCalibrationTable load_calibration(const std::string& path);
void save_calibration(const std::string& path, const KLCalibrationTable& table);

}  // namespace perfzo
