#include "perfzo/families.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/random/binomial_distribution.hpp>
#include <boost/random/poisson_distribution.hpp>

namespace perfzo {

void SampleBatch::push_back(Sample z) {
  if (z.size() != dim_) throw Error(ErrorKind::InvalidDimension, "sample width mismatch");
  values_.insert(values_.end(), z.begin(), z.end());
}

SampleBatch DistributionFamily::sample(const Vector& phi, std::size_t n, SeededRng& rng) const {
  SampleBatch out(sample_dim(), n);
  sample(phi, n, rng, out);
  return out;
}

double DistributionFamily::normalization_error(const Vector& phi) const {
  return std::abs(expectation(phi, [](Sample) { return 1.0; }) - 1.0);
}

void DistributionFamily::check_param(const Vector& phi) const {
  if (phi.size() != param_space().dim())
    throw Error(ErrorKind::InvalidDimension, name() + ": parameter has wrong dimension");
  if (!phi.allFinite() || !param_space().contains(phi, 1e-12))
    throw Error(ErrorKind::InvalidParameter, name() + ": parameter outside the family's space");
}

namespace {

[[noreturn]] void not_expfam(const std::string& name) {
  throw Error(ErrorKind::Unsupported, name + " is not an exponential family");
}

constexpr double kQuadTol = 1e-8;

double integrate(const std::function<double(double)>& g, double a, double b) {
  double err = 0.0;
  const double v = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(g, a, b, 20, 1e-13, &err);
  if (!std::isfinite(v) || err > kQuadTol)
    throw Error(ErrorKind::OracleFailure, "adaptive quadrature did not reach tolerance 1e-8");
  return v;
}

double xlogy_ratio(double p, double q) {
  // p * log(p / q) with 0 log 0 = 0
  if (p == 0.0) return 0.0;
  if (q == 0.0) return std::numeric_limits<double>::infinity();
  return p * std::log(p / q);
}

// ---------------------------------------------------------------------------

class BernoulliLabel final : public DistributionFamily {
 public:
  BernoulliLabel() : space_(ParamSpace::interval(Vector::Zero(1), Vector::Ones(1))) {}

  std::string name() const override { return "bernoulli_label"; }
  const ParamSpace& param_space() const override { return space_; }
  std::size_t sample_dim() const override { return 1; }

  void sample(const Vector& phi, std::size_t n, SeededRng& rng, SampleBatch& out) const override {
    check_param(phi);
    const double p = phi[0];
    out = SampleBatch(1, n);
    for (std::size_t i = 0; i < n; ++i) out.row(i)[0] = rng.uniform01() < p ? 1.0 : 0.0;
  }

  double density(Sample z, const Vector& phi) const override {
    if (z[0] == 1.0) return phi[0];
    if (z[0] == 0.0) return 1.0 - phi[0];
    return 0.0;
  }

  Vector mle(const SampleBatch& samples) const override {
    double s = 0.0;
    for (double v : samples.values()) s += v;
    return Vector::Constant(1, s / static_cast<double>(samples.size()));
  }

  Vector sample_mle(const Vector& phi, std::size_t n, SeededRng& rng) const override {
    check_param(phi);
    boost::random::binomial_distribution<long, double> dist(static_cast<long>(n), phi[0]);
    return Vector::Constant(1, static_cast<double>(dist(rng)) / static_cast<double>(n));
  }

  Vector mean(const Vector& phi) const override { return phi; }
  double variance_trace(const Vector& phi) const override { return phi[0] * (1.0 - phi[0]); }

  double kl(const Vector& phi1, const Vector& phi2) const override {
    check_param(phi1);
    check_param(phi2);
    const double p = phi1[0], q = phi2[0];
    // rounding can leave a tiny negative residue near p = q
    return std::max(0.0, xlogy_ratio(p, q) + xlogy_ratio(1.0 - p, 1.0 - q));
  }

  double expectation(const Vector& phi, const std::function<double(Sample)>& f) const override {
    const double one = 1.0, zero = 0.0;
    const double p1 = density(Sample(&one, 1), phi), p0 = density(Sample(&zero, 1), phi);
    double acc = 0.0;
    if (p1 > 0.0) acc += p1 * f(Sample(&one, 1));
    if (p0 > 0.0) acc += p0 * f(Sample(&zero, 1));
    return acc;
  }

  bool is_exponential_family() const override { return true; }
  double natural(const Vector& phi) const override { return std::log(phi[0] / (1.0 - phi[0])); }
  double natural_derivative(const Vector& phi) const override { return 1.0 / (phi[0] * (1.0 - phi[0])); }
  Vector from_natural(double eta) const override { return Vector::Constant(1, 1.0 / (1.0 + std::exp(-eta))); }
  double sufficient_stat(Sample z) const override { return z[0]; }
  double log_partition(double eta) const override { return std::log1p(std::exp(eta)); }
  double log_partition_d1(double eta) const override { return 1.0 / (1.0 + std::exp(-eta)); }
  double log_partition_d2(double eta) const override {
    const double s = 1.0 / (1.0 + std::exp(-eta));
    return s * (1.0 - s);
  }
  double base_measure(Sample) const override { return 0.0; }

 private:
  ParamSpace space_;
};

// ---------------------------------------------------------------------------

class GaussianMean final : public DistributionFamily {
 public:
  GaussianMean(ParamSpace space, double sigma) : space_(std::move(space)), sigma_(sigma) {
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw Error(ErrorKind::InvalidParameter, "sigma must be positive");
  }

  std::string name() const override { return "gaussian_mean"; }
  const ParamSpace& param_space() const override { return space_; }
  std::size_t sample_dim() const override { return static_cast<std::size_t>(space_.dim()); }
  double sigma() const { return sigma_; }

  void sample(const Vector& phi, std::size_t n, SeededRng& rng, SampleBatch& out) const override {
    check_param(phi);
    const auto d = sample_dim();
    out = SampleBatch(d, n);
    for (std::size_t i = 0; i < n; ++i) {
      auto r = out.row(i);
      for (std::size_t j = 0; j < d; ++j) r[j] = phi[static_cast<Eigen::Index>(j)] + sigma_ * rng.normal();
    }
  }

  double density(Sample z, const Vector& phi) const override {
    double q = 0.0;
    for (std::size_t j = 0; j < z.size(); ++j) {
      const double r = z[j] - phi[static_cast<Eigen::Index>(j)];
      q += r * r;
    }
    const double d = static_cast<double>(z.size());
    return std::exp(-0.5 * q / (sigma_ * sigma_)) / std::pow(2.0 * std::numbers::pi * sigma_ * sigma_, 0.5 * d);
  }

  Vector mle(const SampleBatch& samples) const override {
    const auto d = sample_dim();
    Vector m = Vector::Zero(static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < samples.size(); ++i)
      for (std::size_t j = 0; j < d; ++j) m[static_cast<Eigen::Index>(j)] += samples[i][j];
    return m / static_cast<double>(samples.size());
  }

  Vector sample_mle(const Vector& phi, std::size_t n, SeededRng& rng) const override {
    check_param(phi);
    Vector m(phi.size());
    const double s = sigma_ / std::sqrt(static_cast<double>(n));
    for (Eigen::Index j = 0; j < phi.size(); ++j) m[j] = phi[j] + s * rng.normal();
    return m;
  }

  Vector mean(const Vector& phi) const override { return phi; }
  double variance_trace(const Vector& phi) const override {
    return static_cast<double>(phi.size()) * sigma_ * sigma_;
  }

  double kl(const Vector& phi1, const Vector& phi2) const override {
    check_param(phi1);
    check_param(phi2);
    return (phi1 - phi2).squaredNorm() / (2.0 * sigma_ * sigma_);
  }

  double expectation(const Vector& phi, const std::function<double(Sample)>& f) const override {
    if (phi.size() != 1)
      throw Error(ErrorKind::OracleFailure, "gaussian_mean quadrature is only available in one dimension");
    const double width = 40.0 * sigma_;
    return integrate(
        [&](double z) {
          const double p = density(Sample(&z, 1), phi);
          return p == 0.0 ? 0.0 : p * f(Sample(&z, 1));
        },
        phi[0] - width, phi[0] + width);
  }

  bool is_exponential_family() const override { return space_.dim() == 1; }
  double natural(const Vector& phi) const override { return phi[0] / (sigma_ * sigma_); }
  double natural_derivative(const Vector&) const override { return 1.0 / (sigma_ * sigma_); }
  Vector from_natural(double eta) const override { return Vector::Constant(1, eta * sigma_ * sigma_); }
  double sufficient_stat(Sample z) const override { return z[0]; }
  double log_partition(double eta) const override { return 0.5 * sigma_ * sigma_ * eta * eta; }
  double log_partition_d1(double eta) const override { return sigma_ * sigma_ * eta; }
  double log_partition_d2(double) const override { return sigma_ * sigma_; }
  double base_measure(Sample z) const override {
    return -0.5 * z[0] * z[0] / (sigma_ * sigma_) - 0.5 * std::log(2.0 * std::numbers::pi * sigma_ * sigma_);
  }

 private:
  ParamSpace space_;
  double sigma_;
};

// ---------------------------------------------------------------------------

class PoissonRate final : public DistributionFamily {
 public:
  PoissonRate(double lo, double hi)
      : space_(ParamSpace::interval(Vector::Constant(1, lo), Vector::Constant(1, hi))) {
    if (!(lo > 0.0) || !(hi > lo)) throw Error(ErrorKind::InvalidParameter, "poisson rate space must be 0 < lo < hi");
  }

  std::string name() const override { return "poisson_rate"; }
  const ParamSpace& param_space() const override { return space_; }
  std::size_t sample_dim() const override { return 1; }

  void sample(const Vector& phi, std::size_t n, SeededRng& rng, SampleBatch& out) const override {
    check_param(phi);
    boost::random::poisson_distribution<long, double> dist(phi[0]);
    out = SampleBatch(1, n);
    for (std::size_t i = 0; i < n; ++i) out.row(i)[0] = static_cast<double>(dist(rng));
  }

  double density(Sample z, const Vector& phi) const override {
    const double k = z[0];
    if (k < 0.0 || k != std::floor(k)) return 0.0;
    return std::exp(k * std::log(phi[0]) - phi[0] - std::lgamma(k + 1.0));
  }

  Vector mle(const SampleBatch& samples) const override {
    double s = 0.0;
    for (double v : samples.values()) s += v;
    return Vector::Constant(1, s / static_cast<double>(samples.size()));
  }

  Vector sample_mle(const Vector& phi, std::size_t n, SeededRng& rng) const override {
    check_param(phi);
    const double nd = static_cast<double>(n);
    boost::random::poisson_distribution<long, double> dist(nd * phi[0]);
    return Vector::Constant(1, static_cast<double>(dist(rng)) / nd);
  }

  Vector mean(const Vector& phi) const override { return phi; }
  double variance_trace(const Vector& phi) const override { return phi[0]; }

  double kl(const Vector& phi1, const Vector& phi2) const override {
    check_param(phi1);
    check_param(phi2);
    const double a = phi1[0], b = phi2[0];
    return std::max(0.0, b - a + a * std::log(a / b));
  }

  double expectation(const Vector& phi, const std::function<double(Sample)>& f) const override {
    const double lambda = phi[0];
    const double kmax = std::ceil(lambda + 40.0 * std::sqrt(lambda) + 60.0);
    double acc = 0.0;
    for (double k = 0.0; k <= kmax; k += 1.0) {
      const double p = density(Sample(&k, 1), phi);
      if (p > 0.0) acc += p * f(Sample(&k, 1));
    }
    return acc;
  }

  bool is_exponential_family() const override { return true; }
  double natural(const Vector& phi) const override { return std::log(phi[0]); }
  double natural_derivative(const Vector& phi) const override { return 1.0 / phi[0]; }
  Vector from_natural(double eta) const override { return Vector::Constant(1, std::exp(eta)); }
  double sufficient_stat(Sample z) const override { return z[0]; }
  double log_partition(double eta) const override { return std::exp(eta); }
  double log_partition_d1(double eta) const override { return std::exp(eta); }
  double log_partition_d2(double eta) const override { return std::exp(eta); }
  double base_measure(Sample z) const override { return -std::lgamma(z[0] + 1.0); }

 private:
  ParamSpace space_;
};

// ---------------------------------------------------------------------------

class UniformExp final : public DistributionFamily {
 public:
  UniformExp(double c, double lo, double hi)
      : space_(ParamSpace::interval(Vector::Constant(1, lo), Vector::Constant(1, hi))), c_(c) {
    if (!(c > 0.0) || !std::isfinite(c)) throw Error(ErrorKind::InvalidParameter, "uniform_exp needs c > 0");
  }

  std::string name() const override { return "uniform_exp"; }
  const ParamSpace& param_space() const override { return space_; }
  std::size_t sample_dim() const override { return 1; }

  double upper(const Vector& phi) const { return std::exp(c_ * phi[0]); }

  void sample(const Vector& phi, std::size_t n, SeededRng& rng, SampleBatch& out) const override {
    check_param(phi);
    const double b = upper(phi);
    out = SampleBatch(1, n);
    for (std::size_t i = 0; i < n; ++i) out.row(i)[0] = b * rng.uniform01();
  }

  double density(Sample z, const Vector& phi) const override {
    const double b = upper(phi);
    return (z[0] >= 0.0 && z[0] <= b) ? 1.0 / b : 0.0;
  }

  Vector mle(const SampleBatch& samples) const override {
    double m = 0.0;
    for (double v : samples.values()) m = std::max(m, v);
    // max of the sample is the MLE of the support's upper end
    return Vector::Constant(1, m > 0.0 ? std::log(m) / c_ : -std::numeric_limits<double>::infinity());
  }

  Vector sample_mle(const Vector& phi, std::size_t n, SeededRng& rng) const override {
    check_param(phi);
    // max of n uniforms on [0, b] is b * U^(1/n)
    const double u = 1.0 - rng.uniform01();
    return Vector::Constant(1, phi[0] + std::log(u) / (c_ * static_cast<double>(n)));
  }

  // Closed form used by the inner optimizer's objective: exp(c (phi2 - phi1)) * c (phi2 - phi1).
  // Note this is not the textbook KL between two uniforms.
  Vector mean(const Vector& phi) const override { return Vector::Constant(1, 0.5 * upper(phi)); }
  double variance_trace(const Vector& phi) const override {
    const double b = upper(phi);
    return b * b / 12.0;
  }

  double kl(const Vector& phi1, const Vector& phi2) const override {
    check_param(phi1);
    check_param(phi2);
    const double x = phi2[0] - phi1[0];
    return std::exp(c_ * x) * c_ * x;
  }

  double expectation(const Vector& phi, const std::function<double(Sample)>& f) const override {
    const double b = upper(phi);
    return integrate(
        [&](double z) { return density(Sample(&z, 1), phi) * f(Sample(&z, 1)); }, 0.0, b);
  }

 private:
  ParamSpace space_;
  double c_;
};

}  // namespace

double DistributionFamily::natural(const Vector&) const { not_expfam(name()); }
double DistributionFamily::natural_derivative(const Vector&) const { not_expfam(name()); }
Vector DistributionFamily::from_natural(double) const { not_expfam(name()); }
double DistributionFamily::sufficient_stat(Sample) const { not_expfam(name()); }
double DistributionFamily::log_partition(double) const { not_expfam(name()); }
double DistributionFamily::log_partition_d1(double) const { not_expfam(name()); }
double DistributionFamily::log_partition_d2(double) const { not_expfam(name()); }
double DistributionFamily::base_measure(Sample) const { not_expfam(name()); }

FamilyPtr make_bernoulli_label() { return std::make_shared<BernoulliLabel>(); }
FamilyPtr make_gaussian_mean(ParamSpace space, double sigma) {
  return std::make_shared<GaussianMean>(std::move(space), sigma);
}
FamilyPtr make_poisson_rate(double lo, double hi) { return std::make_shared<PoissonRate>(lo, hi); }
FamilyPtr make_uniform_exp(double c, double lo, double hi) { return std::make_shared<UniformExp>(c, lo, hi); }

}  // namespace perfzo
