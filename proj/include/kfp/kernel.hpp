#pragma once

#include <Eigen/Cholesky>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "kfp/coefficients.hpp"
#include "kfp/geometry.hpp"

namespace kfp {

// Raised when t-s is so small that the kernel is numerically a delta and the
// peak value overflows the double range.
struct PrecisionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// C(t,s) = int_s^t E(t-sigma) [A0(sigma) 0; 0 0] E(t-sigma)^T dsigma,
// symmetric positive definite for t > s, held with its Cholesky factor.
struct Covariance {
  Matrix C;
  Matrix L;  // C = L L^T
  double t = 0.0;
  double s = 0.0;
  double log_det = 0.0;  // of C
};

// Spatial multi-index with anisotropic order w(alpha) = sum alpha_i q_i.
struct MultiIndex {
  std::vector<int> a;

  static MultiIndex zero(int n) { return {std::vector<int>(n, 0)}; }
  static MultiIndex unit(int n, int i) {
    MultiIndex m = zero(n);
    m.a[i] = 1;
    return m;
  }
  MultiIndex plus(int i) const {
    MultiIndex m = *this;
    m.a[i] += 1;
    return m;
  }
  int length() const;
  int order(const Dilation& dil) const;
  bool is_zero() const { return length() == 0; }
  std::string key() const;  // "a1.a2....", components joined by '.'
};

struct KernelContext {
  DriftStructure ds;
  Dilation dil;
  TimeCoefficients a0;
  double nu = 0.0;   // declared ellipticity of a0
  int gh_order = 0;  // per-axis Gauss-Hermite order; 0 = dimension default
};

KernelContext make_kernel_context(DriftStructure ds, TimeCoefficients a0, double nu,
                                  int gh_order = 0);

// Exact per-piece Gauss-Legendre for piecewise-constant A0 (the integrand is
// a matrix polynomial); adaptive composite rule to 1e-12 for callables.
Covariance covariance(const KernelContext& ctx, double s, double t);

enum class DerivVar { x, y };

// Evaluator bound to one covariance C(t,s). Derivatives of any order are
// polynomial multiples of the kernel: the polynomials are maintained in the
// whitened variable w = L^{-1}(x - E(t-s)y) and cached per multi-index.
// The quadratic form is never evaluated through an explicit inverse.
// Caches mutate on first use: share per task, not across threads.
class GammaEvaluator {
 public:
  GammaEvaluator(const KernelContext& ctx, Covariance cov);

  const Covariance& cov() const { return cov_; }
  const Matrix& propagator_ts() const { return e_ts_; }  // E(t-s)

  Vector displacement(const Vector& x, const Vector& y) const;  // x - E(t-s)y
  Vector whiten(const Vector& v) const;                         // L^{-1} v

  double log_norm() const { return log_norm_; }  // log[(4pi)^{-N/2} det(C)^{-1/2}]
  double value(const Vector& x, const Vector& y) const;
  double value_v(const Vector& v) const;

  // D^alpha Gamma with respect to x or y coordinates.
  double derivative(const MultiIndex& alpha, DerivVar wrt, const Vector& x, const Vector& y);
  double derivative_v(const MultiIndex& alpha, DerivVar wrt, const Vector& v);
  // Polynomial factor alone, at whitened w: D^alpha Gamma = poly * Gamma.
  double poly_value(const MultiIndex& alpha, DerivVar wrt, const Vector& w);

  // Y Gamma = -sum_{i,j<=q} a_ij(t) d^2_{x_i x_j} Gamma   (from L Gamma = 0)
  double drift(const Vector& x, const Vector& y);
  double drift_v(const Vector& v);

 private:
  struct Poly {
    // sparse monomials over w: coefficient and exponent vector
    std::vector<std::pair<double, std::vector<int>>> terms;
  };
  const Poly& poly(const MultiIndex& alpha, DerivVar wrt);
  static Poly apply_direction(const Poly& p, const Vector& coeff);

  Covariance cov_;
  Matrix e_ts_;       // E(t-s)
  Matrix s_;          // L^{-1}
  Matrix t_;          // -L^{-1} E(t-s), chain factor for y-derivatives
  Matrix a_at_t_;     // A0(t), for the drift identity
  int n_;
  double log_norm_;
  std::map<std::pair<int, std::string>, Poly> cache_;
};

// Plain evaluation wrappers (0 when t <= s).
double gamma(const KernelContext& ctx, const GroupPoint& xi, const GroupPoint& eta);
double gamma_derivative(const KernelContext& ctx, const MultiIndex& alpha, DerivVar wrt,
                        const GroupPoint& xi, const GroupPoint& eta);
double gamma_drift(const KernelContext& ctx, const GroupPoint& xi, const GroupPoint& eta);

// int D_x^alpha Gamma(x,t; y,s) dy by whitened Gauss-Hermite quadrature.
// Contract: 1 for alpha = 0, 0 otherwise. Throws on order-doubling
// disagreement beyond tol.
double integral_identity(const KernelContext& ctx, const MultiIndex& alpha,
                         const Vector& x, double t, double s, double tol = 1e-8);

struct EnvelopeSpec {
  std::int64_t samples = 10000;
  std::uint64_t seed = 0;
  double kappa_hat = 1.0;  // estimated structural constant of d
  double box = 1.0;        // spatial sampling box half-width
  double dt_min = 0.02;    // sampled t-s window
  double dt_max = 1.5;
};

struct EnvelopeReport {
  bool sandwich_ok = true;
  std::int64_t sandwich_violations = 0;
  GroupPoint witness_xi, witness_eta;  // first sandwich violation, if any
  double c_sup = 0.0;                  // sup |D^a Gamma| d(xi,eta)^(Q+w(a))
  double c_sup_half = 0.0;             // same over the first half of the stream
  double c_mean_value = 0.0;  // sup |D^a(xi1)-D^a(xi2)| d(xi1,eta)^(Q+w+1) / d(xi1,xi2)
  double c_mean_value_half = 0.0;
  std::int64_t admissible_triples = 0;
  double kappa_used = 0.0;  // admissibility threshold uses 4 * 1.1 * kappa_hat
  std::int64_t samples = 0;
  std::uint64_t seed = 0;
};

// Pointwise Gaussian sandwich nu^N Gamma_nu <= Gamma <= nu^-N Gamma_{1/nu}
// over seeded samples (hard failure with witness), plus fitted sup and
// mean-value constants for D_x^alpha Gamma.
EnvelopeReport bound_envelope(const KernelContext& ctx, const MultiIndex& alpha,
                              const EnvelopeSpec& spec);

}  // namespace kfp
