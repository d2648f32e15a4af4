#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Core>

#include "perfzo/error.hpp"

namespace perfzo {

using Vector = Eigen::VectorXd;

/// Reproducible random stream identified by (seed, stream id).
///
/// The engine is std::mt19937_64 (fully specified by the standard) seeded
/// through a splitmix64 mix of the pair, and every distribution used by the
/// library goes through Boost.Random, whose algorithms do not vary across
/// standard library implementations. Together this keeps draw sequences
/// identical across platforms.
class SeededRng {
 public:
  using result_type = std::mt19937_64::result_type;

  explicit SeededRng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream() const noexcept { return stream_; }

  /// Child stream whose identity depends only on this stream's identity and `tag`,
  /// never on how many draws have been taken from the parent.
  SeededRng fork(std::uint64_t tag) const;

  result_type operator()() { return engine_(); }
  static constexpr result_type min() { return std::mt19937_64::min(); }
  static constexpr result_type max() { return std::mt19937_64::max(); }

  double uniform01();
  double normal();

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Compact convex feasible set: an axis-aligned box or a Euclidean ball.
class ParamSpace {
 public:
  enum class Kind { Box, Ball };

  static ParamSpace box(Vector center, Vector half_widths);
  static ParamSpace ball(Vector center, double radius);
  /// Box [lo, hi] per axis.
  static ParamSpace interval(const Vector& lo, const Vector& hi);

  Kind kind() const noexcept { return kind_; }
  Eigen::Index dim() const noexcept { return center_.size(); }
  const Vector& center() const noexcept { return center_; }
  /// Per-axis half extent: the half-widths of a box, the radius repeated for a ball.
  Vector half_extent() const;
  double radius() const noexcept { return radius_; }
  const Vector& half_widths() const noexcept { return half_widths_; }
  double diameter() const;

  bool contains(const Vector& x, double tol = 0.0) const;
  Vector lower() const;  // box corner / ball bounding box
  Vector upper() const;

  /// Copy scaled by `factor` about the center.
  ParamSpace scaled(double factor) const;

 private:
  ParamSpace(Kind kind, Vector center, Vector half_widths, double radius);

  Kind kind_;
  Vector center_;
  Vector half_widths_;
  double radius_ = 0.0;
};

Vector sample_unit_sphere(Eigen::Index dim, SeededRng& rng);

/// Euclidean projection onto the space.
Vector project(const ParamSpace& space, const Vector& x);

/// Projection onto the copy of `space` shrunk by (1 - delta) about its center.
Vector project_shrunk(const ParamSpace& space, const Vector& x, double delta);

void check_dim(const ParamSpace& space, const Vector& x);

}  // namespace perfzo
