#include "perfzo/core_math.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <boost/random/normal_distribution.hpp>

namespace perfzo {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::InvalidDimension: return "invalid-dimension";
    case ErrorKind::InvalidParameter: return "invalid-parameter";
    case ErrorKind::InfeasibleModel: return "infeasible-model";
    case ErrorKind::OracleFailure: return "oracle-failure";
    case ErrorKind::OracleUnsupported: return "oracle-unsupported";
    case ErrorKind::InsufficientSamples: return "insufficient-samples";
    case ErrorKind::CalibrationMissing: return "calibration-missing";
    case ErrorKind::CalibrationFailure: return "calibration-failure";
    case ErrorKind::InsufficientData: return "insufficient-data";
    case ErrorKind::Unsupported: return "unsupported";
    case ErrorKind::InvalidConfig: return "invalid-config";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

namespace {

std::uint64_t engine_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

}  // namespace

SeededRng::SeededRng(std::uint64_t seed, std::uint64_t stream)
    : seed_(seed), stream_(stream), engine_(engine_seed(seed, stream)) {}

SeededRng SeededRng::fork(std::uint64_t tag) const {
  return SeededRng(seed_, splitmix64(stream_ * 0xd1b54a32d192ed03ULL + splitmix64(tag)));
}

double SeededRng::uniform01() {
  // 53 random bits -> [0, 1)
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double SeededRng::normal() {
  boost::random::normal_distribution<double> dist;
  return dist(engine_);
}

// ---------------------------------------------------------------------------

ParamSpace::ParamSpace(Kind kind, Vector center, Vector half_widths, double radius)
    : kind_(kind), center_(std::move(center)), half_widths_(std::move(half_widths)), radius_(radius) {
  if (center_.size() == 0) throw Error(ErrorKind::InvalidDimension, "parameter space needs dim >= 1");
  if (!center_.allFinite()) throw Error(ErrorKind::InvalidParameter, "non-finite center");
}

ParamSpace ParamSpace::box(Vector center, Vector half_widths) {
  if (center.size() != half_widths.size())
    throw Error(ErrorKind::InvalidDimension, "box center and half-widths differ in dimension");
  if (!half_widths.allFinite() || (half_widths.array() <= 0.0).any())
    throw Error(ErrorKind::InvalidParameter, "box half-widths must be finite and positive");
  return ParamSpace(Kind::Box, std::move(center), std::move(half_widths), 0.0);
}

ParamSpace ParamSpace::ball(Vector center, double radius) {
  if (!std::isfinite(radius) || radius <= 0.0)
    throw Error(ErrorKind::InvalidParameter, "ball radius must be finite and positive");
  const auto d = center.size();
  return ParamSpace(Kind::Ball, std::move(center), Vector::Constant(d, radius), radius);
}

ParamSpace ParamSpace::interval(const Vector& lo, const Vector& hi) {
  if (lo.size() != hi.size()) throw Error(ErrorKind::InvalidDimension, "interval bounds differ in dimension");
  return box(0.5 * (lo + hi), 0.5 * (hi - lo));
}

Vector ParamSpace::half_extent() const {
  return kind_ == Kind::Box ? half_widths_ : Vector::Constant(dim(), radius_);
}

double ParamSpace::diameter() const {
  return kind_ == Kind::Ball ? 2.0 * radius_ : 2.0 * half_widths_.norm();
}

bool ParamSpace::contains(const Vector& x, double tol) const {
  if (x.size() != dim()) return false;
  if (kind_ == Kind::Ball) return (x - center_).norm() <= radius_ + tol;
  return ((x - center_).cwiseAbs().array() <= half_widths_.array() + tol).all();
}

Vector ParamSpace::lower() const { return center_ - half_extent(); }
Vector ParamSpace::upper() const { return center_ + half_extent(); }

ParamSpace ParamSpace::scaled(double factor) const {
  if (kind_ == Kind::Ball) return ParamSpace(kind_, center_, half_widths_ * factor, radius_ * factor);
  return ParamSpace(kind_, center_, half_widths_ * factor, 0.0);
}

void check_dim(const ParamSpace& space, const Vector& x) {
  if (x.size() != space.dim())
    throw Error(ErrorKind::InvalidDimension,
                "expected dimension " + std::to_string(space.dim()) + ", got " + std::to_string(x.size()));
}

// ---------------------------------------------------------------------------

Vector sample_unit_sphere(Eigen::Index dim, SeededRng& rng) {
  if (dim < 1) throw Error(ErrorKind::InvalidDimension, "sphere dimension must be >= 1");
  Vector u(dim);
  double norm = 0.0;
  // A zero Gaussian vector has probability zero; redraw rather than divide by it.
  while (norm == 0.0) {
    for (Eigen::Index i = 0; i < dim; ++i) u[i] = rng.normal();
    norm = u.norm();
  }
  return u / norm;
}

namespace {

Vector project_geometry(ParamSpace::Kind kind, const Vector& center, const Vector& half_widths, double radius,
                        const Vector& x) {
  if (kind == ParamSpace::Kind::Ball) {
    Vector offset = x - center;
    const double r = offset.norm();
    if (r <= radius) return x;
    return center + offset * (radius / r);
  }
  Vector out(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i)
    out[i] = std::clamp(x[i], center[i] - half_widths[i], center[i] + half_widths[i]);
  return out;
}

}  // namespace

Vector project(const ParamSpace& space, const Vector& x) {
  check_dim(space, x);
  return project_geometry(space.kind(), space.center(), space.half_widths(), space.radius(), x);
}

Vector project_shrunk(const ParamSpace& space, const Vector& x, double delta) {
  if (!(delta >= 0.0 && delta < 1.0))
    throw Error(ErrorKind::InvalidParameter, "shrink factor delta must lie in [0, 1)");
  check_dim(space, x);
  const double f = 1.0 - delta;
  return project_geometry(space.kind(), space.center(), space.half_widths() * f, space.radius() * f, x);
}

}  // namespace perfzo
