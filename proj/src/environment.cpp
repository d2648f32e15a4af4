#include "perfzo/environment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace perfzo {

// ---------------------------------------------------------------------------
// DistributionMap

DistributionMap DistributionMap::square() {
  DistributionMap m;
  m.kind_ = Kind::Square;
  return m;
}

DistributionMap DistributionMap::affine(Vector phi0, Eigen::MatrixXd mat) {
  if (mat.rows() != phi0.size()) throw Error(ErrorKind::InvalidDimension, "affine map: M rows must match phi0");
  DistributionMap m;
  m.kind_ = Kind::Affine;
  m.phi0_ = std::move(phi0);
  m.m_ = std::move(mat);
  return m;
}

DistributionMap DistributionMap::exp_affine(double a, double b) {
  DistributionMap m;
  m.kind_ = Kind::ExpAffine;
  m.a_ = a;
  m.b_ = b;
  return m;
}

Eigen::Index DistributionMap::input_dim() const { return kind_ == Kind::Affine ? m_.cols() : 1; }
Eigen::Index DistributionMap::output_dim() const { return kind_ == Kind::Affine ? m_.rows() : 1; }

Vector DistributionMap::apply(const Vector& theta) const {
  if (theta.size() != input_dim()) throw Error(ErrorKind::InvalidDimension, "distribution map input dimension");
  switch (kind_) {
    case Kind::Square: return Vector::Constant(1, theta[0] * theta[0]);
    case Kind::Affine: return phi0_ + m_ * theta;
    case Kind::ExpAffine: return Vector::Constant(1, std::exp(a_ + b_ * theta[0]));
  }
  return {};
}

double DistributionMap::derivative(double theta) const {
  switch (kind_) {
    case Kind::Square: return 2.0 * theta;
    case Kind::Affine:
      if (m_.size() != 1) throw Error(ErrorKind::Unsupported, "derivative needs a scalar map");
      return m_(0, 0);
    case Kind::ExpAffine: return b_ * std::exp(a_ + b_ * theta);
  }
  return 0.0;
}

bool DistributionMap::is_scalar_monotone(double lo, double hi) const {
  switch (kind_) {
    case Kind::Square: return lo >= 0.0 || hi <= 0.0;
    case Kind::Affine: return m_.size() == 1 && m_(0, 0) != 0.0;
    case Kind::ExpAffine: return b_ != 0.0;
  }
  return false;
}

double DistributionMap::inverse(double phi, double lo, double hi) const {
  if (!is_scalar_monotone(lo, hi)) throw Error(ErrorKind::Unsupported, "map is not invertible on the model space");
  double t = 0.0;
  switch (kind_) {
    case Kind::Square: t = (lo >= 0.0 ? 1.0 : -1.0) * std::sqrt(std::max(phi, 0.0)); break;
    case Kind::Affine: t = (phi - phi0_[0]) / m_(0, 0); break;
    case Kind::ExpAffine: t = (std::log(phi) - a_) / b_; break;
  }
  return std::clamp(t, lo, hi);
}

// ---------------------------------------------------------------------------
// LossSpec

double LossSpec::raw(Sample z, const Vector& theta) const {
  if (kind == Kind::SquaredLabel) {
    const double r = theta[0] * feature_x - z[0];
    return sign * r * r;
  }
  double q = 0.0;
  for (std::size_t j = 0; j < z.size(); ++j) {
    const double r = z[j] - theta[static_cast<Eigen::Index>(j)];
    q += r * r;
  }
  return weight * q;
}

double LossSpec::raw_derivative(Sample z, double theta) const {
  if (kind == Kind::SquaredLabel) return 2.0 * sign * feature_x * (theta * feature_x - z[0]);
  return -2.0 * weight * (z[0] - theta);
}

double LossSpec::normalized(double raw_value) const {
  return std::clamp((raw_value - offset) * scale, 0.0, bound);
}

// ---------------------------------------------------------------------------
// Environment

namespace {

constexpr double kAdmitTol = 1e-9;

// Images of the box corners; exact bounds for affine and monotone scalar maps.
void check_map_image(const DistributionMap& map, const ParamSpace& theta_space, const ParamSpace& phi_space) {
  const auto d = theta_space.dim();
  const Vector lo = theta_space.lower(), hi = theta_space.upper();
  const std::size_t corners = std::size_t{1} << std::min<Eigen::Index>(d, 16);
  for (std::size_t mask = 0; mask < corners; ++mask) {
    Vector t(d);
    for (Eigen::Index i = 0; i < d; ++i) t[i] = (mask >> i) & 1U ? hi[i] : lo[i];
    if (theta_space.kind() == ParamSpace::Kind::Ball) t = project(theta_space, t);
    if (!phi_space.contains(map.apply(t), 1e-9))
      throw Error(ErrorKind::InvalidParameter, "distribution map sends the model space outside the family's space");
  }
}

}  // namespace

Environment::Environment(std::string name, FamilyPtr family, DistributionMap map, LossSpec loss,
                         ParamSpace theta_space)
    : name_(std::move(name)),
      family_(std::move(family)),
      map_(std::move(map)),
      loss_(loss),
      theta_space_(std::move(theta_space)) {
  if (!family_) throw Error(ErrorKind::InvalidParameter, "environment needs a family");
  if (map_.input_dim() != theta_space_.dim() || map_.output_dim() != family_->param_space().dim())
    throw Error(ErrorKind::InvalidDimension, "distribution map dimensions do not match the spaces");
  if (map_.kind() == DistributionMap::Kind::Square) {
    if (theta_space_.dim() != 1 || theta_space_.lower()[0] < 0.0 || theta_space_.upper()[0] > 1.0)
      throw Error(ErrorKind::InvalidParameter, "square map requires a scalar model space inside [0, 1]");
  }
  if (!(loss_.bound > 0.0) || !std::isfinite(loss_.bound))
    throw Error(ErrorKind::InvalidParameter, "loss bound F must be positive and finite");
  if (loss_.kind == LossSpec::Kind::SquaredLabel && (theta_space_.dim() != 1 || family_->sample_dim() != 1))
    throw Error(ErrorKind::InvalidParameter, "squared_label loss needs scalar models and labels");
  if (loss_.kind == LossSpec::Kind::QuadraticLocation &&
      static_cast<Eigen::Index>(family_->sample_dim()) != theta_space_.dim())
    throw Error(ErrorKind::InvalidParameter, "quadratic_location loss needs samples shaped like the model");
  check_map_image(map_, theta_space_, family_->param_space());

  // Densities must integrate to one across the family's space.
  const ParamSpace& phi_space = family_->param_space();
  if (phi_space.dim() == 1) {
    const double lo = phi_space.lower()[0], hi = phi_space.upper()[0];
    for (int i = 0; i <= 4; ++i) {
      const Vector phi = Vector::Constant(1, lo + (hi - lo) * i / 4.0);
      if (family_->normalization_error(phi) > 1e-6)
        throw Error(ErrorKind::InvalidParameter, family_->name() + ": density does not integrate to 1");
    }
  }
}

Vector Environment::admit(const Vector& theta) const {
  check_dim(theta_space_, theta);
  if (!theta.allFinite() || !theta_space_.contains(theta, kAdmitTol))
    throw Error(ErrorKind::InfeasibleModel, "model parameter outside the model space");
  return theta_space_.contains(theta) ? theta : project(theta_space_, theta);
}

void Environment::deploy_into(const Vector& theta, std::size_t n, SeededRng& rng, SampleBatch& out) {
  if (n == 0) throw Error(ErrorKind::InvalidParameter, "deploy needs n >= 1");
  const Vector t = admit(theta);
  const Vector phi = project(family_->param_space(), map_.apply(t));
  family_->sample(phi, n, rng, out);
  counter_ += n;
}

SampleBatch Environment::deploy(const Vector& theta, std::size_t n, SeededRng& rng) {
  SampleBatch out;
  deploy_into(theta, n, rng, out);
  return out;
}

double Environment::raw_loss(Sample z, const Vector& theta) const { return loss_.raw(z, admit(theta)); }

double Environment::loss(Sample z, const Vector& theta) const {
  return loss_.normalized(loss_.raw(z, admit(theta)));
}

void Environment::losses(const SampleBatch& batch, const Vector& theta, std::vector<double>& out) const {
  const Vector t = admit(theta);
  for (std::size_t i = 0; i < batch.size(); ++i) out.push_back(loss_.normalized(loss_.raw(batch[i], t)));
}

// ---------------------------------------------------------------------------
// Oracles

namespace oracle {

Vector phi_of(const Environment& env, const Vector& theta) { return env.map_.apply(env.admit(theta)); }

double true_pr_raw(const Environment& env, const Vector& theta) {
  const Vector t = env.admit(theta);
  const auto& fam = env.family();
  const Vector phi = project(fam.param_space(), phi_of(env, t));
  const LossSpec& loss = env.loss_spec();
  const Vector m = fam.mean(phi);
  const double v = fam.variance_trace(phi);
  if (loss.kind == LossSpec::Kind::SquaredLabel) {
    const double r = t[0] * loss.feature_x - m[0];
    return loss.sign * (r * r + v);
  }
  return loss.weight * ((m - t).squaredNorm() + v);
}

double true_pr(const Environment& env, const Vector& theta) {
  const LossSpec& loss = env.loss_spec();
  return (true_pr_raw(env, theta) - loss.offset) * loss.scale;
}

double theta_of(const Environment& env, double phi) {
  const ParamSpace& ts = env.theta_space();
  if (ts.dim() != 1) throw Error(ErrorKind::Unsupported, "map inversion needs a scalar model space");
  // The learner-facing environment hides the map; inversion goes through phi_of only.
  const double lo = ts.lower()[0], hi = ts.upper()[0];
  const double flo = phi_of(env, Vector::Constant(1, lo))[0];
  const double fhi = phi_of(env, Vector::Constant(1, hi))[0];
  if (flo == fhi) throw Error(ErrorKind::Unsupported, "map is not invertible on the model space");
  const bool increasing = fhi > flo;
  double a = lo, b = hi;
  for (int it = 0; it < 200 && b - a > 1e-15 * std::max(1.0, std::abs(a)); ++it) {
    const double mid = 0.5 * (a + b);
    const double f = phi_of(env, Vector::Constant(1, mid))[0];
    if ((f < phi) == increasing) a = mid;
    else b = mid;
  }
  return 0.5 * (a + b);
}

double phi_derivative(const Environment& env, double theta) { return env.map_.derivative(theta); }

double pr_dagger(const Environment& env, double phi, bool raw) {
  const Vector t = Vector::Constant(1, theta_of(env, phi));
  return raw ? true_pr_raw(env, t) : true_pr(env, t);
}

OracleReport brute_force_opt(const Environment& env, double grid_resolution) {
  const ParamSpace& ts = env.theta_space();
  const auto d = ts.dim();
  if (d > 3) throw Error(ErrorKind::OracleUnsupported, "grid-search oracle supports at most 3 model dimensions");
  if (!(grid_resolution > 0.0)) throw Error(ErrorKind::InvalidParameter, "grid resolution must be positive");
  const Vector lo = ts.lower(), hi = ts.upper();

  std::vector<std::vector<double>> axes(static_cast<std::size_t>(d));
  for (Eigen::Index i = 0; i < d; ++i) {
    const double width = hi[i] - lo[i];
    const auto steps = static_cast<long>(std::floor(width / grid_resolution + 1e-9));
    auto& axis = axes[static_cast<std::size_t>(i)];
    for (long k = 0; k <= steps; ++k) axis.push_back(lo[i] + static_cast<double>(k) * grid_resolution);
    if (hi[i] - axis.back() > 1e-12 * std::max(1.0, std::abs(hi[i]))) axis.push_back(hi[i]);
    else axis.back() = std::min(axis.back(), hi[i]);
  }

  OracleReport best;
  best.pr_opt = std::numeric_limits<double>::infinity();
  best.grid_resolution = grid_resolution;
  std::vector<std::size_t> idx(static_cast<std::size_t>(d), 0);
  Vector t(d);
  // Odometer with axis 0 most significant visits points in lexicographic order,
  // so keeping the first strict minimum implements the tie-break.
  while (true) {
    for (Eigen::Index i = 0; i < d; ++i) t[i] = axes[static_cast<std::size_t>(i)][idx[static_cast<std::size_t>(i)]];
    if (ts.contains(t)) {
      const double pr = true_pr(env, t);
      if (!std::isfinite(pr)) throw Error(ErrorKind::OracleFailure, "non-finite performative risk on the grid");
      if (pr < best.pr_opt) {
        best.pr_opt = pr;
        best.theta_opt = t;
      }
    }
    Eigen::Index k = d - 1;
    while (k >= 0) {
      auto& j = idx[static_cast<std::size_t>(k)];
      if (++j < axes[static_cast<std::size_t>(k)].size()) break;
      j = 0;
      --k;
    }
    if (k < 0) break;
  }
  if (best.theta_opt.size() == 0) throw Error(ErrorKind::OracleFailure, "grid contains no feasible point");
  best.phi_opt = phi_of(env, best.theta_opt);
  return best;
}

}  // namespace oracle

// ---------------------------------------------------------------------------
// Catalog

namespace {

double param(const EnvParams& p, const std::string& key, double fallback) {
  auto it = p.find(key);
  if (it == p.end()) return fallback;
  try {
    std::size_t used = 0;
    const double v = std::stod(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument(key);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorKind::InvalidConfig, "environment parameter '" + key + "' is not a number: " + it->second);
  }
}

std::string param_str(const EnvParams& p, const std::string& key, const std::string& fallback) {
  auto it = p.find(key);
  return it == p.end() ? fallback : it->second;
}

void reject_unknown(const EnvParams& p, std::initializer_list<const char*> known, const std::string& env) {
  for (const auto& [k, v] : p) {
    if (std::none_of(known.begin(), known.end(), [&](const char* s) { return k == s; }))
      throw Error(ErrorKind::InvalidConfig, "unknown parameter '" + k + "' for environment " + env);
  }
}

Environment make_example1(const EnvParams& p) {
  reject_unknown(p, {"sign", "x"}, "example1_square");
  const std::string sign = param_str(p, "sign", "positive");
  const double x = param(p, "x", 1.0);
  if (x < 0.0 || x > 1.0) throw Error(ErrorKind::InvalidConfig, "example1_square: x must lie in [0, 1]");
  LossSpec loss;
  loss.kind = LossSpec::Kind::SquaredLabel;
  loss.feature_x = x;
  loss.bound = 1.0;
  if (sign == "positive") {
    loss.sign = 1.0;
  } else if (sign == "negative") {
    // raw in [-1, 0] -> [0, 1]
    loss.sign = -1.0;
    loss.offset = -1.0;
  } else {
    throw Error(ErrorKind::InvalidConfig, "example1_square: sign must be positive or negative");
  }
  return Environment("example1_square", make_bernoulli_label(), DistributionMap::square(), loss,
                     ParamSpace::interval(Vector::Zero(1), Vector::Ones(1)));
}

Environment make_gaussian_affine(const EnvParams& p) {
  reject_unknown(p, {"dim", "sigma", "slope", "offset", "theta_lo", "theta_hi", "phi_half"}, "gaussian_affine");
  const auto d = static_cast<Eigen::Index>(param(p, "dim", 1.0));
  if (d < 1 || d > 16) throw Error(ErrorKind::InvalidConfig, "gaussian_affine: dim must be in [1, 16]");
  const double sigma = param(p, "sigma", 1.0);
  const double slope = param(p, "slope", 1.0);
  const double offset = param(p, "offset", 0.0);
  const double tlo = param(p, "theta_lo", -1.0), thi = param(p, "theta_hi", 1.0);
  if (!(thi > tlo)) throw Error(ErrorKind::InvalidConfig, "gaussian_affine: theta_hi must exceed theta_lo");

  const double img_a = offset + slope * tlo, img_b = offset + slope * thi;
  const double img_lo = std::min(img_a, img_b), img_hi = std::max(img_a, img_b);
  const double phi_half = param(p, "phi_half", std::max(0.5 * (img_hi - img_lo), 1.0));
  const double phi_mid = 0.5 * (img_lo + img_hi);
  ParamSpace phi_space = ParamSpace::box(Vector::Constant(d, phi_mid), Vector::Constant(d, phi_half));

  LossSpec loss;
  loss.kind = LossSpec::Kind::QuadraticLocation;
  // Clip level 12 sigma beyond the farthest mean: clipping mass is below 1e-30.
  const double reach = std::max({std::abs(phi_mid + phi_half - tlo), std::abs(phi_mid - phi_half - thi),
                                 std::abs(phi_mid + phi_half - thi), std::abs(phi_mid - phi_half - tlo)});
  loss.bound = static_cast<double>(d) * std::pow(reach + 12.0 * sigma, 2);

  return Environment("gaussian_affine", make_gaussian_mean(std::move(phi_space), sigma),
                     DistributionMap::affine(Vector::Constant(d, offset), slope * Eigen::MatrixXd::Identity(d, d)),
                     loss, ParamSpace::box(Vector::Constant(d, 0.5 * (tlo + thi)), Vector::Constant(d, 0.5 * (thi - tlo))));
}

Environment make_poisson_exp(const EnvParams& p) {
  reject_unknown(p, {"a", "b", "weight", "theta_lo", "theta_hi"}, "poisson_exp");
  const double a = param(p, "a", 0.0), b = param(p, "b", -1.0);
  const double w = param(p, "weight", 1.0);
  const double tlo = param(p, "theta_lo", 0.0), thi = param(p, "theta_hi", 1.0);
  if (!(thi > tlo)) throw Error(ErrorKind::InvalidConfig, "poisson_exp: theta_hi must exceed theta_lo");
  if (w < 0.0) throw Error(ErrorKind::InvalidConfig, "poisson_exp: weight must be nonnegative");
  const double l1 = std::exp(a + b * tlo), l2 = std::exp(a + b * thi);
  const double lam_lo = std::min(l1, l2), lam_hi = std::max(l1, l2);

  LossSpec loss;
  loss.kind = LossSpec::Kind::QuadraticLocation;
  loss.weight = w;
  const double zmax = lam_hi + 40.0 * std::sqrt(lam_hi) + 60.0;
  loss.bound = std::max(w * std::pow(zmax + std::max(std::abs(tlo), std::abs(thi)), 2), 1.0);

  return Environment("poisson_exp", make_poisson_rate(lam_lo, lam_hi), DistributionMap::exp_affine(a, b), loss,
                     ParamSpace::interval(Vector::Constant(1, tlo), Vector::Constant(1, thi)));
}

Environment make_uniform_exp_env(const EnvParams& p) {
  reject_unknown(p, {"c", "theta_lo", "theta_hi", "map", "a", "b"}, "uniform_exp");
  const double c = param(p, "c", 50.0);
  const double tlo = param(p, "theta_lo", 0.0), thi = param(p, "theta_hi", 0.2);
  if (!(thi > tlo)) throw Error(ErrorKind::InvalidConfig, "uniform_exp: theta_hi must exceed theta_lo");
  const std::string kind = param_str(p, "map", "identity");

  DistributionMap map = DistributionMap::affine(Vector::Zero(1), Eigen::MatrixXd::Identity(1, 1));
  double plo = tlo, phi_hi = thi;
  if (kind == "exp_affine") {
    const double a = param(p, "a", 0.0), b = param(p, "b", 1.0);
    map = DistributionMap::exp_affine(a, b);
    const double f1 = std::exp(a + b * tlo), f2 = std::exp(a + b * thi);
    plo = std::min(f1, f2);
    phi_hi = std::max(f1, f2);
  } else if (kind != "identity") {
    throw Error(ErrorKind::InvalidConfig, "uniform_exp: map must be identity or exp_affine");
  }

  LossSpec loss;
  loss.kind = LossSpec::Kind::QuadraticLocation;
  const double zmax = std::exp(c * phi_hi) + std::max(std::abs(tlo), std::abs(thi));
  loss.scale = 1.0 / (zmax * zmax);
  loss.bound = 1.0;

  return Environment("uniform_exp", make_uniform_exp(c, plo, phi_hi), map, loss,
                     ParamSpace::interval(Vector::Constant(1, tlo), Vector::Constant(1, thi)));
}

}  // namespace

std::vector<std::string> environment_names() {
  return {"example1_square", "gaussian_affine", "poisson_exp", "uniform_exp"};
}

Environment make_environment(const std::string& name, const EnvParams& params) {
  if (name == "example1_square") return make_example1(params);
  if (name == "gaussian_affine") return make_gaussian_affine(params);
  if (name == "poisson_exp") return make_poisson_exp(params);
  if (name == "uniform_exp") return make_uniform_exp_env(params);
  throw Error(ErrorKind::InvalidConfig, "unknown environment '" + name + "'");
}

}  // namespace perfzo
