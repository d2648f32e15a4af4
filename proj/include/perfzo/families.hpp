#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "perfzo/core_math.hpp"

namespace perfzo {

using Sample = std::span<const double>;

/// Row-major batch of samples, each `dim` doubles wide.
class SampleBatch {
 public:
  SampleBatch() = default;
  SampleBatch(std::size_t dim, std::size_t n) : dim_(dim), values_(dim * n, 0.0) {}

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return dim_ == 0 ? 0 : values_.size() / dim_; }
  bool empty() const noexcept { return values_.empty(); }

  Sample operator[](std::size_t i) const { return {values_.data() + i * dim_, dim_}; }
  std::span<double> row(std::size_t i) { return {values_.data() + i * dim_, dim_}; }

  void push_back(Sample z);
  const std::vector<double>& values() const noexcept { return values_; }

 private:
  std::size_t dim_ = 1;
  std::vector<double> values_;
};

/// Parametric family p(z; phi) whose functional form the learner knows.
///
/// Families expose a sampler, an MLE, closed-form KL in the native
/// parameterization and, for exponential-family members, the pieces of
/// log p = eta(phi).T(z) - A(eta) + B(z).
class DistributionFamily {
 public:
  virtual ~DistributionFamily() = default;

  virtual std::string name() const = 0;
  virtual const ParamSpace& param_space() const = 0;
  virtual std::size_t sample_dim() const = 0;

  virtual void sample(const Vector& phi, std::size_t n, SeededRng& rng, SampleBatch& out) const = 0;
  SampleBatch sample(const Vector& phi, std::size_t n, SeededRng& rng) const;

  /// Density (or mass) at z; 0 outside the support.
  virtual double density(Sample z, const Vector& phi) const = 0;

  /// Unclamped maximum-likelihood estimate from a non-empty batch.
  virtual Vector mle(const SampleBatch& samples) const = 0;

  /// Draws the MLE of `n` i.i.d. samples at `phi` directly from its sampling
  /// distribution (via the sufficient statistic). Equal in law to mle(sample(phi, n)).
  virtual Vector sample_mle(const Vector& phi, std::size_t n, SeededRng& rng) const = 0;

  /// E[z] and E||z - E z||^2 in closed form.
  virtual Vector mean(const Vector& phi) const = 0;
  virtual double variance_trace(const Vector& phi) const = 0;

  /// KL(p(.; phi1) || p(.; phi2)); may be +infinity.
  virtual double kl(const Vector& phi1, const Vector& phi2) const = 0;

  /// E_{z ~ p(.; phi)}[f(z)] by exact summation or adaptive quadrature
  /// (absolute tolerance 1e-8). Throws OracleFailure when it cannot meet it.
  virtual double expectation(const Vector& phi, const std::function<double(Sample)>& f) const = 0;

  /// |total mass - 1| at phi, computed numerically.
  double normalization_error(const Vector& phi) const;

  // Exponential-family accessors (scalar natural parameter only).
  virtual bool is_exponential_family() const { return false; }
  virtual double natural(const Vector& phi) const;
  /// d eta / d phi
  virtual double natural_derivative(const Vector& phi) const;
  virtual Vector from_natural(double eta) const;
  virtual double sufficient_stat(Sample z) const;
  virtual double log_partition(double eta) const;
  virtual double log_partition_d1(double eta) const;
  virtual double log_partition_d2(double eta) const;
  virtual double base_measure(Sample z) const;

 protected:
  void check_param(const Vector& phi) const;
};

using FamilyPtr = std::shared_ptr<const DistributionFamily>;

/// Labels y ~ Bern(phi), phi in [0, 1].
FamilyPtr make_bernoulli_label();
/// z ~ N(phi, sigma^2 I), phi in `space`.
FamilyPtr make_gaussian_mean(ParamSpace space, double sigma);
/// z ~ Poisson(phi) in rate parameterization, phi in [lo, hi] with lo > 0.
FamilyPtr make_poisson_rate(double lo, double hi);
/// z ~ Unif[0, exp(c phi)], phi in [lo, hi].
FamilyPtr make_uniform_exp(double c, double lo, double hi);

}  // namespace perfzo
