#include <doctest.h>

#include <cmath>

#include "kfp/quadrature.hpp"
#include "test_helpers.hpp"

using namespace kfp;

TEST_CASE("legendre rules: classical values and exactness") {
  const Rule& r1 = rule(Rule::Kind::legendre, 1);
  CHECK(r1.nodes[0] == 0.0);
  CHECK(r1.weights[0] == doctest::Approx(2.0).epsilon(1e-15));

  const Rule& r3 = rule(Rule::Kind::legendre, 3);
  double integral = 0.0;  // x^4 on (-1,1) -> 2/5, exact at degree 5
  for (int i = 0; i < 3; ++i) integral += r3.weights[i] * std::pow(r3.nodes[i], 4);
  CHECK(integral == doctest::Approx(0.4).epsilon(1e-14));

  for (int n : {2, 5, 11, 20}) {
    const Rule& r = rule(Rule::Kind::legendre, n);
    double wsum = 0.0;
    for (int i = 0; i < n; ++i) {
      wsum += r.weights[i];
      CHECK(r.weights[i] > 0.0);
      CHECK(std::abs(r.nodes[i]) < 1.0);
      CHECK(r.nodes[i] + r.nodes[n - 1 - i] == doctest::Approx(0.0).epsilon(1e-14));
    }
    CHECK(wsum == doctest::Approx(2.0).epsilon(1e-13));
  }
}

TEST_CASE("hermite rules: classical values") {
  const Rule& r2 = rule(Rule::Kind::hermite, 2);
  CHECK(r2.nodes[1] == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-14));
  CHECK(r2.weights[0] == doctest::Approx(std::sqrt(M_PI) / 2.0).epsilon(1e-14));

  for (int n : {1, 4, 12, 20}) {
    const Rule& r = rule(Rule::Kind::hermite, n);
    double wsum = 0.0;
    for (int i = 0; i < n; ++i) wsum += r.weights[i];
    CHECK(wsum == doctest::Approx(std::sqrt(M_PI)).epsilon(1e-13));
  }

  CHECK_THROWS_AS(rule(Rule::Kind::hermite, 0), std::invalid_argument);
}

TEST_CASE("gaussian_integral: normalization, mean, second moment") {
  Matrix cov(2, 2);
  cov << 1.3, 0.4, 0.4, 0.9;
  const Vector mean = test::vec2(0.7, -1.1);

  const double one =
      gaussian_integral([](const Vector&) { return 1.0; }, mean, cov, 8);
  CHECK(one == doctest::Approx(1.0).epsilon(1e-13));

  for (int i = 0; i < 2; ++i) {
    const double mi =
        gaussian_integral([i](const Vector& y) { return y(i); }, mean, cov, 8);
    CHECK(mi == doctest::Approx(mean(i)).epsilon(1e-12));
  }

  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      const double mij = gaussian_integral(
          [i, j](const Vector& y) { return y(i) * y(j); }, mean, cov, 8);
      CHECK(mij == doctest::Approx(mean(i) * mean(j) + cov(i, j)).epsilon(1e-12));
    }
}

TEST_CASE("gaussian_integral is invariant under joint rotation") {
  Matrix cov(2, 2);
  cov << 2.0, 0.7, 0.7, 1.1;
  const Vector mean = test::vec2(0.0, 0.0);
  const double theta = 0.6;
  Matrix rot(2, 2);
  rot << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);

  auto quad = [](const Vector& y) { return 3.0 * y(0) * y(0) - y(0) * y(1) + 0.5 * y(1); };
  const double base = gaussian_integral(quad, mean, cov, 10);
  const Matrix cov_rot = rot * cov * rot.transpose();
  auto quad_rot = [&](const Vector& y) { return quad(rot.transpose() * y); };
  const double rotated = gaussian_integral(quad_rot, mean, cov_rot, 10);
  CHECK(rotated == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("gaussian_integral self check flags thin orders") {
  Matrix cov(1, 1);
  cov << 1.0;
  Vector mean(1);
  mean << 0.0;
  auto hard = [](const Vector& y) { return std::cos(4.0 * y(0)); };
  const CheckedIntegral ci = gaussian_integral_checked(hard, mean, cov, 3);
  CHECK(ci.discrepancy > 1e-6);  // order 3 is too small for this integrand
  const CheckedIntegral fine = gaussian_integral_checked(hard, mean, cov, 24);
  CHECK(fine.discrepancy <= 1e-9);
}

TEST_CASE("graded mesh breakpoints") {
  SUBCASE("uniform when grade = 1") {
    const GradedMesh m = graded_mesh(0.0, 1.0, 4, 1.0);
    for (int j = 0; j <= 4; ++j) CHECK(m.points[j] == doctest::Approx(j / 4.0));
  }
  SUBCASE("quadratic clustering at the singular endpoint") {
    const GradedMesh m = graded_mesh(0.0, 1.0, 4, 2.0);
    CHECK(1.0 - m.points[0] == doctest::Approx(1.0));
    CHECK(1.0 - m.points[1] == doctest::Approx(9.0 / 16.0));
    CHECK(1.0 - m.points[2] == doctest::Approx(1.0 / 4.0));
    CHECK(1.0 - m.points[3] == doctest::Approx(1.0 / 16.0));
    CHECK(m.points[4] == 1.0);
  }
  SUBCASE("bad arguments") {
    CHECK_THROWS_AS(graded_mesh(1.0, 0.0, 4, 2.0), std::invalid_argument);
    CHECK_THROWS_AS(graded_mesh(0.0, 1.0, 0, 2.0), std::invalid_argument);
    CHECK_THROWS_AS(graded_mesh(0.0, 1.0, 4, 0.5), std::invalid_argument);
  }
}

TEST_CASE("graded mesh integrates an endpoint singularity") {
  // int_0^1 s^{-1/2} ds = 2; integrand singular at 0, so grade toward 0 by
  // integrating f(tau + t - s) over the mesh clustered at t. The cell touching
  // the singularity caps the accuracy at ~10% of its mass, 0.2 n^{-grade/2}.
  auto value = [](double grade) {
    const GradedMesh m = graded_mesh(0.0, 1.0, 64, grade);
    return integrate_mesh([](double s) { return 1.0 / std::sqrt(1.0 - s); }, m, 4);
  };
  CHECK(value(4.0) == doctest::Approx(2.0).epsilon(1e-4));
  CHECK(value(8.0) == doctest::Approx(2.0).epsilon(1e-6));
  // extreme grading collapses the last cells to double-precision width;
  // the composite rule must stay finite
  CHECK(std::isfinite(value(16.0)));
  CHECK(value(16.0) == doctest::Approx(2.0).epsilon(1e-6));
}

TEST_CASE("default GH orders per dimension") {
  CHECK(default_gh_order(1) == 20);
  CHECK(default_gh_order(3) == 20);
  CHECK(default_gh_order(4) == 12);
  CHECK(default_gh_order(5) == 12);
  CHECK_THROWS_AS(default_gh_order(7), std::invalid_argument);
}
