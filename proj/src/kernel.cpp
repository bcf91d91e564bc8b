#include "kfp/kernel.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "kfp/quadrature.hpp"
#include "kfp/rng.hpp"

namespace kfp {

int MultiIndex::length() const { return std::accumulate(a.begin(), a.end(), 0); }

int MultiIndex::order(const Dilation& dil) const {
  int w = 0;
  for (std::size_t i = 0; i < a.size(); ++i) w += a[i] * dil.q[i];
  return w;
}

std::string MultiIndex::key() const {
  std::string k;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (i) k += '.';
    k += std::to_string(a[i]);
  }
  return k;
}

KernelContext make_kernel_context(DriftStructure ds, TimeCoefficients a0, double nu,
                                  int gh_order) {
  if (a0.q() != ds.q())
    throw std::invalid_argument("make_kernel_context: coefficient size must equal m_0");
  KernelContext ctx;
  ctx.dil = dilation_exponents(ds.m);
  ctx.ds = std::move(ds);
  ctx.a0 = std::move(a0);
  ctx.nu = nu;
  ctx.gh_order = gh_order > 0 ? gh_order : default_gh_order(ctx.ds.N);
  return ctx;
}

namespace {

// integrand of the covariance: E(t-sigma).leftCols(q) A0(sigma) (...)^T
Matrix cov_integrand(const KernelContext& ctx, double t, double sigma, const Matrix& a) {
  const Matrix head = propagator(ctx.ds, t - sigma).leftCols(ctx.ds.q());
  return head * a * head.transpose();
}

Matrix gl_piece(const KernelContext& ctx, double t, double a, double b, const Matrix& coeff,
                int nodes) {
  const Rule& gl = rule(Rule::Kind::legendre, nodes);
  const double mid = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  Matrix sum = Matrix::Zero(ctx.ds.N, ctx.ds.N);
  for (int i = 0; i < nodes; ++i)
    sum += gl.weights[i] * cov_integrand(ctx, t, mid + half * gl.nodes[i], coeff);
  return half * sum;
}

// callable A0: one Gauss-Legendre panel, evaluating A0 at each node
Matrix gl_panel_callable(const KernelContext& ctx, double t, double lo, double hi) {
  const Rule& gl = rule(Rule::Kind::legendre, 7);
  const double mid = 0.5 * (lo + hi);
  const double half = 0.5 * (hi - lo);
  Matrix sum = Matrix::Zero(ctx.ds.N, ctx.ds.N);
  for (int i = 0; i < 7; ++i) {
    const double sigma = mid + half * gl.nodes[i];
    sum += gl.weights[i] * cov_integrand(ctx, t, sigma, ctx.a0.at(sigma));
  }
  return Matrix(half * sum);
}

Matrix adaptive_piece(const KernelContext& ctx, double t, double a, double b, double tol,
                      int depth) {
  const Matrix one = gl_panel_callable(ctx, t, a, b);
  const Matrix two =
      gl_panel_callable(ctx, t, a, 0.5 * (a + b)) + gl_panel_callable(ctx, t, 0.5 * (a + b), b);
  if (depth >= 24 || (one - two).cwiseAbs().maxCoeff() <= tol) return two;
  return adaptive_piece(ctx, t, a, 0.5 * (a + b), 0.5 * tol, depth + 1) +
         adaptive_piece(ctx, t, 0.5 * (a + b), b, 0.5 * tol, depth + 1);
}

}  // namespace

Covariance covariance(const KernelContext& ctx, double s, double t) {
  if (!(t > s)) throw std::invalid_argument("covariance: need t > s");

  Matrix c = Matrix::Zero(ctx.ds.N, ctx.ds.N);
  if (ctx.a0.is_piecewise()) {
    // split [s,t] at interior breakpoints; each piece is a matrix polynomial
    // of degree <= 2k in sigma, integrated exactly
    std::vector<double> cuts{s};
    for (double b : ctx.a0.breaks())
      if (b > s && b < t) cuts.push_back(b);
    cuts.push_back(t);
    const int nodes = ctx.ds.k() + 1;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i)
      c += gl_piece(ctx, t, cuts[i], cuts[i + 1], ctx.a0.at(0.5 * (cuts[i] + cuts[i + 1])),
                    nodes);
  } else {
    c = adaptive_piece(ctx, t, s, t, 1e-12 * std::max(1.0, t - s), 0);
  }
  c = 0.5 * (c + c.transpose());

  Eigen::LLT<Matrix> llt(c);
  if (llt.info() != Eigen::Success) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(c, Eigen::EigenvaluesOnly);
    std::ostringstream os;
    os << "covariance: factorization failed for t-s=" << t - s
       << " (ellipticity or precision problem); eigenvalues:";
    for (int i = 0; i < es.eigenvalues().size(); ++i) os << " " << es.eigenvalues()(i);
    throw std::runtime_error(os.str());
  }

  Covariance cov;
  cov.C = std::move(c);
  cov.L = llt.matrixL();
  cov.t = t;
  cov.s = s;
  cov.log_det = 0.0;
  for (int i = 0; i < cov.L.rows(); ++i) cov.log_det += 2.0 * std::log(cov.L(i, i));
  return cov;
}

GammaEvaluator::GammaEvaluator(const KernelContext& ctx, Covariance cov)
    : cov_(std::move(cov)), n_(ctx.ds.N) {
  e_ts_ = propagator(ctx.ds, cov_.t - cov_.s);
  s_ = cov_.L.triangularView<Eigen::Lower>().solve(Matrix::Identity(n_, n_));
  t_ = -s_ * e_ts_;
  a_at_t_ = ctx.a0.at(cov_.t);
  log_norm_ = -0.5 * n_ * std::log(4.0 * M_PI) - 0.5 * cov_.log_det;
  cache_[{static_cast<int>(DerivVar::x), MultiIndex::zero(n_).key()}] =
      Poly{{{1.0, std::vector<int>(n_, 0)}}};
  cache_[{static_cast<int>(DerivVar::y), MultiIndex::zero(n_).key()}] =
      Poly{{{1.0, std::vector<int>(n_, 0)}}};
}

Vector GammaEvaluator::displacement(const Vector& x, const Vector& y) const {
  return x - e_ts_ * y;
}

Vector GammaEvaluator::whiten(const Vector& v) const {
  return cov_.L.triangularView<Eigen::Lower>().solve(v);
}

double GammaEvaluator::value_v(const Vector& v) const {
  const Vector w = whiten(v);
  const double lg = log_norm_ - 0.25 * w.squaredNorm();
  if (lg > 709.0)
    throw PrecisionError("gamma: peak value overflows (t-s too small, kernel is a delta)");
  if (lg < -745.0) return 0.0;
  return std::exp(lg);
}

double GammaEvaluator::value(const Vector& x, const Vector& y) const {
  return value_v(displacement(x, y));
}

// one directional derivative: P -> sum_k c_k (d_{w_k} P - w_k/2 P)
GammaEvaluator::Poly GammaEvaluator::apply_direction(const Poly& p, const Vector& coeff) {
  std::map<std::vector<int>, double> acc;
  for (const auto& [c, e] : p.terms) {
    for (int k = 0; k < coeff.size(); ++k) {
      if (coeff(k) == 0.0) continue;
      if (e[k] > 0) {  // differentiate the monomial
        std::vector<int> de = e;
        de[k] -= 1;
        acc[de] += coeff(k) * c * e[k];
      }
      std::vector<int> me = e;  // multiply by -w_k/2
      me[k] += 1;
      acc[me] -= 0.5 * coeff(k) * c;
    }
  }
  Poly out;
  for (auto& [e, c] : acc)
    if (c != 0.0) out.terms.push_back({c, e});
  return out;
}

const GammaEvaluator::Poly& GammaEvaluator::poly(const MultiIndex& alpha, DerivVar wrt) {
  if (static_cast<int>(alpha.a.size()) != n_)
    throw std::invalid_argument("gamma_derivative: multi-index length mismatch");
  const auto key = std::make_pair(static_cast<int>(wrt), alpha.key());
  auto it = cache_.find(key);
  if (it != cache_.end()) return it->second;

  int i = 0;
  while (alpha.a[i] == 0) ++i;
  MultiIndex prev = alpha;
  prev.a[i] -= 1;
  const Vector dir = (wrt == DerivVar::x) ? Vector(s_.col(i)) : Vector(t_.col(i));
  Poly next = apply_direction(poly(prev, wrt), dir);
  return cache_.emplace(key, std::move(next)).first->second;
}

double GammaEvaluator::poly_value(const MultiIndex& alpha, DerivVar wrt, const Vector& w) {
  const Poly& p = poly(alpha, wrt);
  double sum = 0.0;
  for (const auto& [c, e] : p.terms) {
    double m = c;
    for (int k = 0; k < n_; ++k)
      for (int r = 0; r < e[k]; ++r) m *= w(k);
    sum += m;
  }
  return sum;
}

double GammaEvaluator::derivative_v(const MultiIndex& alpha, DerivVar wrt, const Vector& v) {
  const Vector w = whiten(v);
  const double lg = log_norm_ - 0.25 * w.squaredNorm();
  if (lg > 709.0) throw PrecisionError("gamma_derivative: kernel peak overflows");
  if (lg < -745.0) return 0.0;
  return poly_value(alpha, wrt, w) * std::exp(lg);
}

double GammaEvaluator::derivative(const MultiIndex& alpha, DerivVar wrt, const Vector& x,
                                  const Vector& y) {
  return derivative_v(alpha, wrt, displacement(x, y));
}

double GammaEvaluator::drift_v(const Vector& v) {
  const int q = a_at_t_.rows();
  double sum = 0.0;
  for (int i = 0; i < q; ++i)
    for (int j = 0; j < q; ++j)
      sum += a_at_t_(i, j) * derivative_v(MultiIndex::unit(n_, i).plus(j), DerivVar::x, v);
  return -sum;
}

double GammaEvaluator::drift(const Vector& x, const Vector& y) {
  return drift_v(displacement(x, y));
}

double gamma(const KernelContext& ctx, const GroupPoint& xi, const GroupPoint& eta) {
  if (xi.t <= eta.t) return 0.0;
  GammaEvaluator ev(ctx, covariance(ctx, eta.t, xi.t));
  return ev.value(xi.x, eta.x);
}

double gamma_derivative(const KernelContext& ctx, const MultiIndex& alpha, DerivVar wrt,
                        const GroupPoint& xi, const GroupPoint& eta) {
  if (xi.t <= eta.t) return 0.0;
  GammaEvaluator ev(ctx, covariance(ctx, eta.t, xi.t));
  return ev.derivative(alpha, wrt, xi.x, eta.x);
}

double gamma_drift(const KernelContext& ctx, const GroupPoint& xi, const GroupPoint& eta) {
  if (xi.t <= eta.t) return 0.0;
  GammaEvaluator ev(ctx, covariance(ctx, eta.t, xi.t));
  return ev.drift(xi.x, eta.x);
}

namespace {

double integral_identity_at_order(const KernelContext& ctx, GammaEvaluator& ev,
                                  const MultiIndex& alpha, const Vector& x, int order) {
  // nodes of N(0, 2C) in v; y recovered through E(s-t)(x - v); the kernel and
  // the proposal density are evaluated through separate code paths so a
  // normalization/covariance mismatch shows up as a wrong integral
  const int n = ctx.ds.N;
  const Rule& gh = rule(Rule::Kind::hermite, order);
  const Matrix node_map = 2.0 * ev.cov().L;  // sqrt(2) * cholesky(2C)
  const Matrix e_back = propagator(ctx.ds, ev.cov().s - ev.cov().t);
  const double log_prop_norm =
      -0.5 * n * std::log(2.0 * M_PI) - 0.5 * (n * std::log(2.0) + ev.cov().log_det);

  std::vector<int> idx(n, 0);
  Vector z(n);
  double sum = 0.0;
  for (;;) {
    double wgt = 1.0;
    for (int i = 0; i < n; ++i) {
      z(i) = gh.nodes[idx[i]];
      wgt *= gh.weights[idx[i]];
    }
    const Vector v = node_map * z;
    const Vector y = e_back * (x - v);
    // full evaluation path: recompute v from (x, y)
    const Vector vv = ev.displacement(x, y);
    const Vector w = ev.whiten(vv);
    const double log_gamma = ev.log_norm() - 0.25 * w.squaredNorm();
    const double log_prop = log_prop_norm - z.squaredNorm();
    sum += wgt * ev.poly_value(alpha, DerivVar::x, w) * std::exp(log_gamma - log_prop);
    int d = 0;
    while (d < n && ++idx[d] == order) idx[d++] = 0;
    if (d == n) break;
  }
  return std::pow(M_PI, -0.5 * n) * sum;
}

}  // namespace

double integral_identity(const KernelContext& ctx, const MultiIndex& alpha, const Vector& x,
                         double t, double s, double tol) {
  if (!(t > s)) throw std::invalid_argument("integral_identity: need t > s");
  GammaEvaluator ev(ctx, covariance(ctx, s, t));
  const double coarse = integral_identity_at_order(ctx, ev, alpha, x, ctx.gh_order);
  const double fine = integral_identity_at_order(ctx, ev, alpha, x, ctx.gh_order + 6);
  if (std::abs(fine - coarse) > tol) {
    std::ostringstream os;
    os << "integral_identity: quadrature non-convergence, order " << ctx.gh_order << " gives "
       << coarse << ", order " << ctx.gh_order + 6 << " gives " << fine;
    throw std::runtime_error(os.str());
  }
  return fine;
}

EnvelopeReport bound_envelope(const KernelContext& ctx, const MultiIndex& alpha,
                              const EnvelopeSpec& spec) {
  if (ctx.nu <= 0.0) throw std::invalid_argument("bound_envelope: declared nu required");
  const int n = ctx.ds.N;
  const int q = ctx.ds.q();
  const KernelContext lo_ctx =
      make_kernel_context(ctx.ds, TimeCoefficients::constant(ctx.nu * Matrix::Identity(q, q)),
                          ctx.nu, ctx.gh_order);
  const KernelContext hi_ctx = make_kernel_context(
      ctx.ds, TimeCoefficients::constant((1.0 / ctx.nu) * Matrix::Identity(q, q)), ctx.nu,
      ctx.gh_order);

  EnvelopeReport rep;
  rep.samples = spec.samples;
  rep.seed = spec.seed;
  rep.kappa_used = 4.0 * 1.1 * spec.kappa_hat;

  const double nu_pow = std::pow(ctx.nu, n);
  const int w_alpha = alpha.order(ctx.dil);

  Rng rng = Rng::substream(spec.seed, 7);
  auto sample_x = [&] {
    Vector x(n);
    for (int i = 0; i < n; ++i) x(i) = rng.uniform(-spec.box, spec.box);
    return x;
  };

  const std::int64_t half = spec.samples / 2;
  for (std::int64_t it = 0; it < spec.samples; ++it) {
    const double s = rng.uniform(-1.0, 1.0);
    const double dt1 = rng.uniform(spec.dt_min, spec.dt_max);
    const GroupPoint eta{sample_x(), s};
    const GroupPoint xi1{sample_x(), s + dt1};

    // sandwich at (xi1, eta)
    const double g = gamma(ctx, xi1, eta);
    const double g_lo = gamma(lo_ctx, xi1, eta);
    const double g_hi = gamma(hi_ctx, xi1, eta);
    const double slack = 1e-12 * (1.0 + std::abs(g));
    if (nu_pow * g_lo > g + slack || g > g_hi / nu_pow + slack) {
      if (rep.sandwich_ok) {
        rep.witness_xi = xi1;
        rep.witness_eta = eta;
      }
      rep.sandwich_ok = false;
      rep.sandwich_violations++;
    }

    // fitted sup constant for D^alpha Gamma
    const double d1 = qdistance(ctx.ds, ctx.dil, xi1, eta);
    const double da = gamma_derivative(ctx, alpha, DerivVar::x, xi1, eta);
    const double c = std::abs(da) * std::pow(d1, ctx.dil.Q + w_alpha);
    rep.c_sup = std::max(rep.c_sup, c);
    if (it < half) rep.c_sup_half = std::max(rep.c_sup_half, c);

    // mean-value quotient over admissible triples
    GroupPoint xi2 = xi1;
    for (int i = 0; i < n; ++i) xi2.x(i) += 0.1 * rng.uniform(-spec.box, spec.box);
    xi2.t += 0.01 * rng.uniform(0.0, dt1);
    const double d12 = qdistance(ctx.ds, ctx.dil, xi1, xi2);
    if (d12 > 0.0 && d1 >= rep.kappa_used * d12 && xi2.t > eta.t) {
      const double da2 = gamma_derivative(ctx, alpha, DerivVar::x, xi2, eta);
      const double mv = std::abs(da - da2) * std::pow(d1, ctx.dil.Q + w_alpha + 1) / d12;
      rep.admissible_triples++;
      rep.c_mean_value = std::max(rep.c_mean_value, mv);
      if (it < half) rep.c_mean_value_half = std::max(rep.c_mean_value_half, mv);
    }
  }
  return rep;
}

}  // namespace kfp
