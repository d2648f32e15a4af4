#include <doctest.h>

#include <cmath>

#include "perfzo/core_math.hpp"

using namespace perfzo;

namespace {

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::Io;
}

}  // namespace

TEST_CASE("sphere sample in one dimension is a sign with equal odds") {
  SeededRng rng(3, 0);
  int plus = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const Vector u = sample_unit_sphere(1, rng);
    REQUIRE(std::abs(std::abs(u[0]) - 1.0) == 0.0);
    plus += u[0] > 0;
  }
  // 4 sigma band of a fair coin
  CHECK(std::abs(plus - n / 2) < 4.0 * std::sqrt(n / 4.0));
}

TEST_CASE("sphere samples have unit norm") {
  SeededRng rng(5, 1);
  for (int i = 0; i < 1000; ++i) CHECK(std::abs(sample_unit_sphere(3, rng).norm() - 1.0) <= 1e-12);
}

TEST_CASE("sphere sample rejects dimension zero") {
  SeededRng rng(1, 0);
  CHECK(kind_of([&] { sample_unit_sphere(0, rng); }) == ErrorKind::InvalidDimension);
}

TEST_CASE("sphere samples have zero mean and covariance I/d") {
  for (Eigen::Index d : {2, 3, 5}) {
    SeededRng rng(11, static_cast<std::uint64_t>(d));
    const int n = 100000;
    Vector mean = Vector::Zero(d);
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
    for (int i = 0; i < n; ++i) {
      const Vector u = sample_unit_sphere(d, rng);
      mean += u;
      cov += u * u.transpose();
    }
    mean /= n;
    cov /= n;
    // each coordinate has variance 1/d, so the mean is within 0.02 by a wide margin
    for (Eigen::Index j = 0; j < d; ++j) CHECK(std::abs(mean[j]) < 0.02);
    const Eigen::MatrixXd target = Eigen::MatrixXd::Identity(d, d) / static_cast<double>(d);
    CHECK((cov - target).cwiseAbs().maxCoeff() < 5.0 / std::sqrt(static_cast<double>(n)));
  }
}

TEST_CASE("rng streams are reproducible and fork independently of parent draws") {
  SeededRng a(42, 7), b(42, 7);
  for (int i = 0; i < 100; ++i) REQUIRE(a() == b());
  SeededRng fresh(42, 7);
  const SeededRng child_before = fresh.fork(3);
  for (int i = 0; i < 50; ++i) fresh();
  SeededRng c1 = child_before, c2 = fresh.fork(3);
  for (int i = 0; i < 100; ++i) REQUIRE(c1() == c2());
  SeededRng other(42, 8);
  SeededRng same(42, 7);
  CHECK(other() != same());
}

TEST_CASE("normal draws are bit-identical across runs") {
  SeededRng a(9, 2), b(9, 2);
  for (int i = 0; i < 100; ++i) REQUIRE(a.normal() == b.normal());
}

TEST_CASE("project onto ball scales radially") {
  const ParamSpace ball = ParamSpace::ball(Vector::Zero(2), 1.0);
  const Vector p = project(ball, vec({3, 4}));
  CHECK(p[0] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(p[1] == doctest::Approx(0.8).epsilon(1e-15));
}

TEST_CASE("project onto box clamps per axis and keeps interior points") {
  const ParamSpace unit = ParamSpace::box(Vector::Zero(2), vec({1, 1}));
  CHECK(project(unit, vec({0.5, -0.5})) == vec({0.5, -0.5}));
  const ParamSpace wide = ParamSpace::box(Vector::Zero(2), vec({1, 2}));
  CHECK(project(wide, vec({-3, 5})) == vec({-1, 2}));
}

TEST_CASE("project rejects dimension mismatch") {
  const ParamSpace ball = ParamSpace::ball(Vector::Zero(2), 1.0);
  CHECK(kind_of([&] { project(ball, vec({1, 2, 3})); }) == ErrorKind::InvalidDimension);
}

TEST_CASE("shrunk projection examples") {
  const ParamSpace unit = ParamSpace::ball(Vector::Zero(2), 1.0);
  const Vector p = project_shrunk(unit, vec({1, 0}), 0.1);
  CHECK(p[0] == doctest::Approx(0.9));
  CHECK(p[1] == 0.0);
  const ParamSpace two = ParamSpace::ball(Vector::Zero(2), 2.0);
  const Vector q = project_shrunk(two, vec({0, 3}), 0.5);
  CHECK(q[0] == 0.0);
  CHECK(q[1] == doctest::Approx(1.0));
  const ParamSpace off = ParamSpace::box(vec({2, -1}), vec({0.5, 3}));
  for (double delta : {0.0, 0.3, 0.99}) CHECK(project_shrunk(off, off.center(), delta) == off.center());
}

TEST_CASE("shrunk projection rejects delta outside [0, 1)") {
  const ParamSpace unit = ParamSpace::ball(Vector::Zero(1), 1.0);
  CHECK(kind_of([&] { project_shrunk(unit, vec({0.2}), 1.0); }) == ErrorKind::InvalidParameter);
  CHECK(kind_of([&] { project_shrunk(unit, vec({0.2}), -0.1); }) == ErrorKind::InvalidParameter);
}

TEST_CASE("shrunk projection scales about a non-origin center") {
  const ParamSpace iv = ParamSpace::interval(vec({0}), vec({1}));
  CHECK(project_shrunk(iv, vec({5}), 0.1)[0] == doctest::Approx(0.95));
  CHECK(project_shrunk(iv, vec({-5}), 0.1)[0] == doctest::Approx(0.05));
}

TEST_CASE("projection is idempotent on random points") {
  SeededRng rng(17, 0);
  const ParamSpace spaces[] = {ParamSpace::ball(vec({1, -2, 0.5}), 1.5), ParamSpace::box(vec({0, 3, -1}), vec({0.2, 2, 1}))};
  for (const auto& s : spaces) {
    for (int i = 0; i < 500; ++i) {
      Vector x(3);
      for (int j = 0; j < 3; ++j) x[j] = 8.0 * rng.uniform01() - 4.0;
      const Vector p = project(s, x);
      CHECK(s.contains(p, 1e-12));
      CHECK((project(s, p) - p).norm() <= 1e-12);
    }
  }
}

TEST_CASE("box projection is the nearest point") {
  // brute-force comparison against a dense grid of the box
  const ParamSpace box = ParamSpace::box(vec({0.5, -0.5}), vec({1, 0.5}));
  SeededRng rng(19, 0);
  for (int i = 0; i < 50; ++i) {
    const Vector x = vec({6 * rng.uniform01() - 3, 6 * rng.uniform01() - 3});
    const Vector p = project(box, x);
    double best = 1e9;
    for (int a = 0; a <= 200; ++a)
      for (int b = 0; b <= 100; ++b) {
        const Vector g = vec({-0.5 + 2.0 * a / 200, -1.0 + 1.0 * b / 100});
        best = std::min(best, (g - x).norm());
      }
    CHECK((p - x).norm() <= best + 1e-12);
  }
}

TEST_CASE("perturbed shrunk points stay feasible") {
  SeededRng rng(23, 0);
  const ParamSpace spaces[] = {ParamSpace::ball(vec({0.3, -0.7}), 2.0), ParamSpace::box(vec({1, 1}), vec({0.5, 2}))};
  for (const auto& s : spaces) {
    const Vector h = s.half_extent();
    const double hmin = h.minCoeff();
    for (int i = 0; i < 2000; ++i) {
      const double delta = 0.99 * rng.uniform01();
      const Vector x = vec({10 * rng.uniform01() - 5, 10 * rng.uniform01() - 5});
      const Vector y = project_shrunk(s, x, delta);
      const Vector u = sample_unit_sphere(2, rng);
      CHECK(s.contains(y + delta * hmin * u, 1e-12));
      // the per-axis scaled perturbation used by the optimizers
      CHECK(s.contains(y + delta * h.cwiseProduct(u), 1e-12));
    }
  }
}

TEST_CASE("diameter and containment") {
  const ParamSpace ball = ParamSpace::ball(Vector::Zero(3), 2.0);
  CHECK(ball.diameter() == doctest::Approx(4.0));
  const ParamSpace box = ParamSpace::box(Vector::Zero(2), vec({3, 4}));
  CHECK(box.diameter() == doctest::Approx(10.0));
  CHECK(box.contains(box.center()));
  CHECK_FALSE(box.contains(vec({3.1, 0})));
}

TEST_CASE("spaces reject degenerate extents") {
  CHECK(kind_of([] { ParamSpace::ball(Vector::Zero(2), 0.0); }) == ErrorKind::InvalidParameter);
  CHECK(kind_of([] { ParamSpace::box(Vector::Zero(2), vec({1, 0})); }) == ErrorKind::InvalidParameter);
}
