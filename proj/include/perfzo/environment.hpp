#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "perfzo/core_math.hpp"
#include "perfzo/families.hpp"

namespace perfzo {

class Environment;

namespace oracle {
Vector phi_of(const Environment& env, const Vector& theta);
double true_pr(const Environment& env, const Vector& theta);
double phi_derivative(const Environment& env, double theta);
}  // namespace oracle

/// Hidden map theta -> phi(theta).
class DistributionMap {
 public:
  enum class Kind {
    Square,     // phi = theta^2, scalar
    Affine,     // phi = phi0 + M theta
    ExpAffine,  // phi = exp(a + b theta), scalar; convex in theta
  };

  static DistributionMap square();
  static DistributionMap affine(Vector phi0, Eigen::MatrixXd m);
  static DistributionMap exp_affine(double a, double b);

  Kind kind() const noexcept { return kind_; }
  Eigen::Index input_dim() const;
  Eigen::Index output_dim() const;

  Vector apply(const Vector& theta) const;
  /// d phi / d theta for scalar maps.
  double derivative(double theta) const;
  /// Scalar inverse on [lo, hi]; requires a strictly monotone scalar map.
  double inverse(double phi, double lo, double hi) const;
  bool is_scalar_monotone(double lo, double hi) const;

 private:
  Kind kind_ = Kind::Square;
  Vector phi0_;
  Eigen::MatrixXd m_;
  double a_ = 0.0;
  double b_ = 0.0;
};

/// Loss with an affine normalization into [0, F]:
/// observed = clamp((raw - offset) * scale, 0, F).
struct LossSpec {
  enum class Kind {
    SquaredLabel,       // raw = sign * (theta * x - y)^2, scalar theta
    QuadraticLocation,  // raw = weight * ||z - theta||^2
  };

  Kind kind = Kind::SquaredLabel;
  double sign = 1.0;
  double feature_x = 1.0;
  double weight = 1.0;
  double offset = 0.0;
  double scale = 1.0;
  double bound = 1.0;  // F

  double raw(Sample z, const Vector& theta) const;
  /// d raw / d theta for scalar theta.
  double raw_derivative(Sample z, double theta) const;
  double normalized(double raw_value) const;
};

struct OracleReport {
  Vector theta_opt;
  Vector phi_opt;
  double pr_opt = 0.0;
  double grid_resolution = 0.0;
};

/// A performative world. Learners interact only through deploy() and loss();
/// the distribution map is reachable only through the oracle functions.
class Environment {
 public:
  Environment(std::string name, FamilyPtr family, DistributionMap map, LossSpec loss, ParamSpace theta_space);

  const std::string& name() const noexcept { return name_; }
  const DistributionFamily& family() const noexcept { return *family_; }
  FamilyPtr family_ptr() const noexcept { return family_; }
  const ParamSpace& theta_space() const noexcept { return theta_space_; }
  const LossSpec& loss_spec() const noexcept { return loss_; }
  double loss_bound() const noexcept { return loss_.bound; }
  std::uint64_t sample_counter() const noexcept { return counter_; }

  /// Draws n i.i.d. samples from D(theta) and advances the sample counter.
  SampleBatch deploy(const Vector& theta, std::size_t n, SeededRng& rng);
  void deploy_into(const Vector& theta, std::size_t n, SeededRng& rng, SampleBatch& out);

  /// Normalized loss in [0, F].
  double loss(Sample z, const Vector& theta) const;
  /// Appends the normalized loss of every sample in the batch.
  void losses(const SampleBatch& batch, const Vector& theta, std::vector<double>& out) const;
  /// Unnormalized loss.
  double raw_loss(Sample z, const Vector& theta) const;

  /// Returns theta projected onto the model space when within 1e-9 of it; throws otherwise.
  Vector admit(const Vector& theta) const;

 private:
  friend Vector oracle::phi_of(const Environment& env, const Vector& theta);
  friend double oracle::true_pr(const Environment& env, const Vector& theta);
  friend double oracle::phi_derivative(const Environment& env, double theta);

  std::string name_;
  FamilyPtr family_;
  DistributionMap map_;
  LossSpec loss_;
  ParamSpace theta_space_;
  std::uint64_t counter_ = 0;
};

namespace oracle {

/// Unnormalized performative risk E_{z ~ D(theta)} raw(z; theta).
double true_pr_raw(const Environment& env, const Vector& theta);

/// PR over phi: PR evaluated at the unique model inducing phi (scalar monotone maps).
double pr_dagger(const Environment& env, double phi, bool raw = false);

/// Grid search over the model space; ties go to the lexicographically smallest point.
OracleReport brute_force_opt(const Environment& env, double grid_resolution);

/// Inverse of the hidden map for scalar monotone maps.
double theta_of(const Environment& env, double phi);

/// Derivative of the hidden map (scalar maps).
double phi_derivative(const Environment& env, double theta);

}  // namespace oracle

using EnvParams = std::map<std::string, std::string>;

/// Catalog: example1_square, gaussian_affine, poisson_exp, uniform_exp.
Environment make_environment(const std::string& name, const EnvParams& params = {});
std::vector<std::string> environment_names();

}  // namespace perfzo
