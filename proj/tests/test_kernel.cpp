#include <doctest.h>

#include <cmath>

#include "kfp/kernel.hpp"
#include "kfp/rng.hpp"
#include "test_helpers.hpp"

using namespace kfp;
using test::unit_kolmogorov_context;
using test::vec2;

namespace {

// closed form of the Kolmogorov covariance for a = 1, from direct integration
Matrix kolmogorov_c0(double t) {
  Matrix c(2, 2);
  c << t, -t * t / 2.0, -t * t / 2.0, t * t * t / 3.0;
  return c;
}

}  // namespace

TEST_CASE("multi-index length, order and key") {
  const Dilation dil = dilation_exponents({1, 1});
  MultiIndex a = MultiIndex::zero(2).plus(0).plus(1).plus(1);
  CHECK(a.length() == 3);
  CHECK(a.order(dil) == 1 + 3 + 3);
  CHECK(a.key() == "1.2");
  CHECK(a.order(dil) >= a.length());
  // order equals length iff supported on the first m0 coordinates
  CHECK(MultiIndex::unit(2, 0).plus(0).order(dil) == 2);
}

TEST_CASE("covariance matches the Kolmogorov closed form") {
  const KernelContext ctx = unit_kolmogorov_context();
  for (double t : {0.1, 1.0, 5.0}) {
    const Covariance cov = covariance(ctx, 0.0, t);
    const Matrix expected = kolmogorov_c0(t);
    CHECK((cov.C - expected).cwiseAbs().maxCoeff() <=
          1e-13 * expected.cwiseAbs().maxCoeff());
    CHECK(std::exp(cov.log_det) ==
          doctest::Approx(std::pow(t, 4) / 12.0).epsilon(1e-12));
  }
  CHECK_THROWS_AS(covariance(ctx, 1.0, 1.0), std::invalid_argument);
}

TEST_CASE("covariance is linear in the coefficient") {
  const DriftStructure ds = test::kolmogorov();
  const KernelContext one = unit_kolmogorov_context();
  const KernelContext two = make_kernel_context(
      ds, TimeCoefficients::constant(2.0 * Matrix::Identity(1, 1)), 0.5);
  const Matrix c1 = covariance(one, 0.0, 0.8).C;
  const Matrix c2 = covariance(two, 0.0, 0.8).C;
  CHECK((c2 - 2.0 * c1).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("covariance homogeneity C0(tau) = D0(sqrt(tau)) C0(1) D0(sqrt(tau))") {
  const KernelContext ctx = unit_kolmogorov_context();
  const Matrix c1 = covariance(ctx, 0.0, 1.0).C;
  for (double tau : {0.1, 1.0, 7.0}) {
    Matrix d0 = Matrix::Zero(2, 2);
    for (int i = 0; i < 2; ++i) d0(i, i) = std::pow(std::sqrt(tau), ctx.dil.q[i]);
    const Matrix lhs = covariance(ctx, 0.0, tau).C;
    const Matrix rhs = d0 * c1 * d0;
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-12 * rhs.cwiseAbs().maxCoeff());
  }
}

TEST_CASE("covariance for piecewise coefficients splits pieces exactly") {
  // a(t) = 1 on [0,1), 2 on [1,2]: C(2,0) = C_0-part + 2 * C_0-part shifted
  const DriftStructure ds = test::kolmogorov();
  Matrix a1(1, 1), a2(1, 1);
  a1 << 1.0;
  a2 << 2.0;
  const KernelContext ctx = make_kernel_context(
      ds, TimeCoefficients::piecewise_constant({1.0}, {a1, a2}), 0.5);
  // hand integration: C(t,s) = int_s^t E(t-u) P a(u) P^T E(t-u)^T du with
  // E(v)e1 = (1,-v); entries: [int a, -int a u'; ., int a u'^2] with u' = t-u
  // piece [0,1): u' in (1,2]; piece [1,2]: u' in [0,1)
  auto block = [](double lo, double hi, double w) {
    Matrix m(2, 2);
    m << w * (hi - lo), -w * (hi * hi - lo * lo) / 2.0, -w * (hi * hi - lo * lo) / 2.0,
        w * (hi * hi * hi - lo * lo * lo) / 3.0;
    return m;
  };
  const Matrix expected = block(1.0, 2.0, 1.0) + block(0.0, 1.0, 2.0);
  const Matrix got = covariance(ctx, 0.0, 2.0).C;
  CHECK((got - expected).cwiseAbs().maxCoeff() <= 1e-13 * expected.cwiseAbs().maxCoeff());
}

TEST_CASE("covariance for callable coefficients matches closed form") {
  const DriftStructure ds = test::kolmogorov();
  // a(t) = 1 + t: int_s^t (1+u) du etc., against high-accuracy adaptive rule
  const KernelContext ctx = make_kernel_context(
      ds, TimeCoefficients::callable(1, [](double t) {
        Matrix a(1, 1);
        a << 1.0 + t;
        return a;
      }),
      0.4);
  const Matrix got = covariance(ctx, 0.0, 1.0).C;
  // C_11 = int_0^1 (1+u) du = 3/2; C_12 = -int (1+u)(1-u) du = -(1 - 1/3) ... 
  // with v = t-u: C = int_0^1 (1 + 1 - v) [1, -v; -v, v^2] dv
  Matrix expected(2, 2);
  expected << 2.0 - 0.5, -(2.0 / 2.0 - 1.0 / 3.0), -(2.0 / 2.0 - 1.0 / 3.0),
      2.0 / 3.0 - 1.0 / 4.0;
  CHECK((got - expected).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("gamma: indicator, peak value, positivity") {
  const KernelContext ctx = unit_kolmogorov_context();
  const GroupPoint eta{vec2(0.3, -0.2), 0.5};

  CHECK(gamma(ctx, {vec2(1, 1), 0.5}, eta) == 0.0);   // t == s
  CHECK(gamma(ctx, {vec2(1, 1), 0.1}, eta) == 0.0);   // t < s

  // peak: x = E(t-s) y, t-s = 1; value (4pi)^{-1} sqrt(12) = sqrt(3)/(2 pi)
  const Matrix e = propagator(ctx.ds, 1.0);
  const GroupPoint xi{e * eta.x, eta.t + 1.0};
  CHECK(gamma(ctx, xi, eta) ==
        doctest::Approx(std::sqrt(3.0) / (2.0 * M_PI)).epsilon(1e-13));
}

TEST_CASE("gamma derivatives: gradient and hessian at the peak") {
  const KernelContext ctx = unit_kolmogorov_context();
  const Covariance cov = covariance(ctx, 0.0, 1.0);
  GammaEvaluator ev(ctx, cov);
  const Vector y = vec2(0.4, -0.1);
  const Vector x = propagator(ctx.ds, 1.0) * y;  // peak: v = 0

  for (int i = 0; i < 2; ++i)
    CHECK(ev.derivative(MultiIndex::unit(2, i), DerivVar::x, x, y) == doctest::Approx(0.0));

  // Hessian at the peak is -1/2 C^{-1} Gamma_peak
  const Matrix cinv = cov.C.inverse();
  const double peak = ev.value(x, y);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      const double d2 =
          ev.derivative(MultiIndex::unit(2, i).plus(j), DerivVar::x, x, y);
      CHECK(d2 == doctest::Approx(-0.5 * cinv(i, j) * peak).epsilon(1e-12));
    }
}

namespace {

// nested central differences, all at the same step
double nested_fd(const std::function<double(const Vector&)>& f, const Vector& x,
                 std::vector<int> alpha, double h) {
  int axis = -1;
  for (std::size_t i = 0; i < alpha.size(); ++i)
    if (alpha[i] > 0) axis = static_cast<int>(i);
  if (axis < 0) return f(x);
  alpha[axis] -= 1;
  Vector xp = x, xm = x;
  xp(axis) += h;
  xm(axis) -= h;
  return (nested_fd(f, xp, alpha, h) - nested_fd(f, xm, alpha, h)) / (2.0 * h);
}

// two Richardson levels on the h^2 expansion: error O(h^6)
double fd_derivative(const std::function<double(const Vector&)>& f, const Vector& x,
                     const std::vector<int>& alpha, double h) {
  const double d1 = nested_fd(f, x, alpha, h);
  const double d2 = nested_fd(f, x, alpha, h / 2.0);
  const double d4 = nested_fd(f, x, alpha, h / 4.0);
  const double r1 = (4.0 * d2 - d1) / 3.0;
  const double r2 = (4.0 * d4 - d2) / 3.0;
  return (16.0 * r2 - r1) / 15.0;
}

}  // namespace

TEST_CASE("gamma derivatives match Richardson finite differences up to |alpha| = 3") {
  const KernelContext ctx = unit_kolmogorov_context();
  const Covariance cov = covariance(ctx, 0.0, 0.7);
  GammaEvaluator ev(ctx, cov);
  Rng rng(21);

  const std::vector<std::vector<int>> alphas = {
      {1, 0}, {0, 1}, {2, 0}, {1, 1}, {0, 2}, {3, 0}, {2, 1}, {1, 2}, {0, 3}};

  for (int rep = 0; rep < 20; ++rep) {
    const Vector y = vec2(rng.uniform(-1, 1), rng.uniform(-1, 1));
    const Vector x =
        propagator(ctx.ds, 0.7) * y + vec2(rng.uniform(0.2, 1.2), rng.uniform(0.2, 1.2));
    for (const auto& a : alphas) {
      for (DerivVar wrt : {DerivVar::x, DerivVar::y}) {
        const MultiIndex alpha{a};
        const double exact = ev.derivative(alpha, wrt, x, y);
        auto f = [&](const Vector& p) {
          return wrt == DerivVar::x ? ev.value(p, y) : ev.value(x, p);
        };
        const double fd = fd_derivative(f, wrt == DerivVar::x ? x : y, a, 0.02);
        CHECK(exact == doctest::Approx(fd).epsilon(1e-6));
      }
    }
  }
}

TEST_CASE("drift derivative: identity with second derivatives and FD oracle") {
  const KernelContext ctx = unit_kolmogorov_context();
  const Covariance cov = covariance(ctx, 0.0, 0.9);
  GammaEvaluator ev(ctx, cov);

  const Vector y = vec2(0.1, 0.3);
  const Vector x = vec2(1.0, -0.4);

  // q = 1, a = 1: Y Gamma = -d2_{x1 x1} Gamma
  const double lhs = ev.drift(x, y);
  const double rhs = -ev.derivative(MultiIndex::unit(2, 0).plus(0), DerivVar::x, x, y);
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-14));

  // FD along the drift flow: Y f(x,t) = d/dh f(E(-h)x, t-h) at h=0
  auto along = [&](double h) {
    const KernelContext& c = ctx;
    const GroupPoint eta{y, 0.0};
    return gamma(c, {propagator(c.ds, -h) * x, 0.9 - h}, eta);
  };
  const double fd1 = (along(1e-4) - along(-1e-4)) / 2e-4;
  const double fd2 = (along(5e-5) - along(-5e-5)) / 1e-4;
  const double fd = (4.0 * fd2 - fd1) / 3.0;
  CHECK(lhs == doctest::Approx(fd).epsilon(1e-6));
}

TEST_CASE("integral identities: normalization and vanishing moments") {
  const KernelContext ctx = unit_kolmogorov_context();
  const Vector x = vec2(0.7, -0.3);

  CHECK(integral_identity(ctx, MultiIndex::zero(2), x, 1.0, 0.0) ==
        doctest::Approx(1.0).epsilon(1e-10));
  CHECK(std::abs(integral_identity(ctx, MultiIndex::unit(2, 0), x, 1.0, 0.0)) <= 1e-8);
  CHECK(std::abs(integral_identity(ctx, MultiIndex::unit(2, 0).plus(1), x, 1.0, 0.0)) <=
        1e-8);

  // Y Gamma integrates to zero as well (differentiated normalization)
  const Covariance cov = covariance(ctx, 0.0, 1.0);
  GammaEvaluator ev(ctx, cov);
  const double drift_moment =
      -integral_identity(ctx, MultiIndex::unit(2, 0).plus(0), x, 1.0, 0.0);
  CHECK(std::abs(drift_moment) <= 1e-7);
}

TEST_CASE("kernel scaling and convolution structure") {
  const KernelContext ctx = unit_kolmogorov_context();
  const GroupPoint origin{vec2(0, 0), 0.0};
  Rng rng(31);
  for (int it = 0; it < 100; ++it) {
    GroupPoint xi{vec2(rng.uniform(-1, 1), rng.uniform(-1, 1)), rng.uniform(0.2, 2.0)};
    GroupPoint eta{vec2(rng.uniform(-1, 1), rng.uniform(-1, 1)),
                   xi.t - rng.uniform(0.1, 1.5)};

    const double direct = gamma(ctx, xi, eta);
    const double conv = gamma(ctx, compose(ctx.ds, invert(ctx.ds, eta), xi), origin);
    CHECK(conv == doctest::Approx(direct).epsilon(1e-12));

    const double lam = rng.uniform(0.5, 2.0);
    const double scaled = gamma(ctx, dilate(ctx.dil, lam, xi), origin);
    CHECK(scaled ==
          doctest::Approx(std::pow(lam, -ctx.dil.Q) * gamma(ctx, xi, origin)).epsilon(1e-12));
  }
}

TEST_CASE("covariance ordering against the constant-coefficient envelope") {
  // piecewise a(t) in {0.5, 2}, nu = 0.5:
  // nu C0^{-1} <= C^{-1} <= nu^{-1} C0^{-1} as quadratic forms
  const DriftStructure ds = test::kolmogorov();
  Matrix lo(1, 1), hi(1, 1);
  lo << 0.5;
  hi << 2.0;
  const double nu = 0.5;
  const KernelContext ctx = make_kernel_context(
      ds, TimeCoefficients::piecewise_constant({0.4, 0.9}, {lo, hi, lo}), nu);
  const KernelContext unit = unit_kolmogorov_context();

  for (double t : {0.3, 0.7, 1.4}) {
    const Matrix c = covariance(ctx, 0.0, t).C;
    const Matrix c0 = covariance(unit, 0.0, t).C;
    // the inverse ordering is equivalent to nu C <= ... via congruence:
    // nu C0^{-1} <= C^{-1}  <=>  C <= nu^{-1} C0
    Eigen::SelfAdjointEigenSolver<Matrix> upper(Matrix(c0 / nu - c));
    Eigen::SelfAdjointEigenSolver<Matrix> lower(Matrix(c - nu * c0));
    CHECK(upper.eigenvalues().minCoeff() >= -1e-12);
    CHECK(lower.eigenvalues().minCoeff() >= -1e-12);
  }
}

TEST_CASE("bound_envelope: sandwich holds and constants are fitted") {
  const DriftStructure ds = test::kolmogorov();
  Matrix lo(1, 1), hi(1, 1);
  lo << 0.5;
  hi << 2.0;
  const KernelContext ctx = make_kernel_context(
      ds, TimeCoefficients::piecewise_constant({0.0}, {lo, hi}), 0.5);

  EnvelopeSpec spec;
  spec.samples = 10000;
  spec.seed = 5;
  spec.kappa_hat = estimate_kappa(ds, 20000, 5).kappa_hat;

  const EnvelopeReport rep = bound_envelope(ctx, MultiIndex::unit(2, 0), spec);
  CHECK(rep.sandwich_ok);
  CHECK(rep.sandwich_violations == 0);
  CHECK(rep.c_sup > 0.0);
  CHECK(std::isfinite(rep.c_sup));
  CHECK(rep.admissible_triples > 100);
  CHECK(std::isfinite(rep.c_mean_value));
  // fitted constants stable under sample doubling (first half vs full)
  CHECK(rep.c_sup <= 1.5 * rep.c_sup_half);
}

TEST_CASE("bound_envelope equality case: a = nu = 1") {
  const KernelContext ctx = unit_kolmogorov_context();
  EnvelopeSpec spec;
  spec.samples = 500;
  spec.seed = 2;
  const EnvelopeReport rep = bound_envelope(ctx, MultiIndex::zero(2), spec);
  CHECK(rep.sandwich_ok);  // Gamma == Gamma_1 exactly
}

TEST_CASE("bound_envelope catches a dishonest nu declaration") {
  // coefficients in {0.5, 2} but declared nu = 1: the sandwich must fail
  const DriftStructure ds = test::kolmogorov();
  Matrix lo(1, 1), hi(1, 1);
  lo << 0.5;
  hi << 2.0;
  const KernelContext ctx = make_kernel_context(
      ds, TimeCoefficients::piecewise_constant({0.5}, {lo, hi}), 1.0);
  EnvelopeSpec spec;
  spec.samples = 3000;
  spec.seed = 3;
  const EnvelopeReport rep = bound_envelope(ctx, MultiIndex::zero(2), spec);
  CHECK_FALSE(rep.sandwich_ok);
  CHECK(rep.sandwich_violations > 0);
}

TEST_CASE("derivative polynomial cache is consistent across orders") {
  // same evaluator, interleaved queries: results must not depend on call order
  const KernelContext ctx = unit_kolmogorov_context();
  GammaEvaluator ev1(ctx, covariance(ctx, 0.0, 0.6));
  GammaEvaluator ev2(ctx, covariance(ctx, 0.0, 0.6));
  const Vector x = vec2(0.9, 0.2), y = vec2(-0.3, 0.5);

  const MultiIndex second = MultiIndex::unit(2, 0).plus(1);
  const MultiIndex first = MultiIndex::unit(2, 0);
  const double a = ev1.derivative(second, DerivVar::x, x, y);
  const double b = ev1.derivative(first, DerivVar::x, x, y);
  const double b2 = ev2.derivative(first, DerivVar::x, x, y);
  const double a2 = ev2.derivative(second, DerivVar::x, x, y);
  CHECK(a == a2);
  CHECK(b == b2);
}

TEST_CASE("pde residual of gamma vanishes at second order in h") {
  const KernelContext ctx = unit_kolmogorov_context();
  const GroupPoint eta{vec2(0, 0), 0.0};
  const GroupPoint xi{vec2(0.6, -0.4), 0.8};

  std::vector<double> hs{0.04, 0.02, 0.01, 0.005};
  std::vector<double> residuals;
  for (double h : hs) {
    GroupPoint xp = xi, xm = xi;
    xp.x(0) += h;
    xm.x(0) -= h;
    const double uxx =
        (gamma(ctx, xp, eta) - 2.0 * gamma(ctx, xi, eta) + gamma(ctx, xm, eta)) / (h * h);
    const double hd = h * h;
    const GroupPoint fwd{propagator(ctx.ds, -hd) * xi.x, xi.t - hd};
    const GroupPoint bwd{propagator(ctx.ds, hd) * xi.x, xi.t + hd};
    const double drift = (gamma(ctx, fwd, eta) - gamma(ctx, bwd, eta)) / (2.0 * hd);
    residuals.push_back(std::abs(uxx + drift));
  }
  // log-log slope >= 1.9
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < hs.size(); ++i) {
    sx += std::log(hs[i]);
    sy += std::log(residuals[i]);
    sxx += std::log(hs[i]) * std::log(hs[i]);
    sxy += std::log(hs[i]) * std::log(residuals[i]);
  }
  const double n = static_cast<double>(hs.size());
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  CHECK(slope >= 1.9);
}

TEST_CASE("three-block chain: normalization and scaling hold in N = 4") {
  const DriftStructure ds = test::chain3();
  const KernelContext ctx =
      make_kernel_context(ds, TimeCoefficients::constant(Matrix::Identity(2, 2)), 1.0);
  Vector x(4);
  x << 0.3, -0.2, 0.5, 0.1;
  CHECK(integral_identity(ctx, MultiIndex::zero(4), x, 0.8, 0.0) ==
        doctest::Approx(1.0).epsilon(1e-8));

  const GroupPoint origin{Vector::Zero(4), 0.0};
  GroupPoint xi{x, 0.9};
  const double lam = 1.4;
  CHECK(gamma(ctx, dilate(ctx.dil, lam, xi), origin) ==
        doctest::Approx(std::pow(lam, -ctx.dil.Q) * gamma(ctx, xi, origin)).epsilon(1e-12));
}
