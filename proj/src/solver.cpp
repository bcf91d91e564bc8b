#include "kfp/solver.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <stdexcept>

namespace kfp {

namespace {

// C^2 ramp: 0 for z <= 0, 6z^5 - 15z^4 + 10z^3 on (0,1), 1 for z >= 1
double smoothstep2(double z) {
  if (z <= 0.0) return 0.0;
  if (z >= 1.0) return 1.0;
  return z * z * z * (10.0 + z * (-15.0 + 6.0 * z));
}

double smoothstep2_prime(double z) {
  if (z <= 0.0 || z >= 1.0) return 0.0;
  const double a = z * (1.0 - z);
  return 30.0 * a * a;
}

struct Ramp {
  double tau, width;
  double operator()(double t) const { return smoothstep2((t - tau) / width); }
  double prime(double t) const { return smoothstep2_prime((t - tau) / width) / width; }
};

ManufacturedSolution assemble_solution(
    const KernelContext& ctx, TimeWindow window, const std::string& name, Ramp ramp,
    std::function<double(const Vector&)> phi, std::function<double(const Vector&, int)> dphi,
    std::function<double(const Vector&, int, int)> d2phi) {
  ManufacturedSolution ms;
  ms.name = name;
  ms.window = window;
  const Matrix B = ctx.ds.B;
  const TimeCoefficients a0 = ctx.a0;
  const int q = ctx.ds.q();

  ms.u = [ramp, phi](const Vector& x, double t) { return ramp(t) * phi(x); };
  ms.du = [ramp, dphi](const Vector& x, double t, int i) { return ramp(t) * dphi(x, i); };
  ms.d2u = [ramp, d2phi](const Vector& x, double t, int i, int j) {
    return ramp(t) * d2phi(x, i, j);
  };
  ms.ut = [ramp, phi](const Vector& x, double t) { return ramp.prime(t) * phi(x); };
  ms.Yu = [ramp, phi, dphi, B](const Vector& x, double t) {
    const Vector bx = B * x;
    double adv = 0.0;
    for (int j = 0; j < x.size(); ++j)
      if (bx(j) != 0.0) adv += bx(j) * dphi(x, j);
    return ramp(t) * adv - ramp.prime(t) * phi(x);
  };
  ms.Lu = [ms, a0, q](const Vector& x, double t) {
    const Matrix a = a0.at(t);
    double diff = 0.0;
    for (int i = 0; i < q; ++i)
      for (int j = 0; j < q; ++j) diff += a(i, j) * ms.d2u(x, t, i, j);
    return diff + ms.Yu(x, t);
  };
  return ms;
}

}  // namespace

ManufacturedSolution make_gaussian_solution(const KernelContext& ctx, const Vector& center,
                                            const Matrix& shape, TimeWindow window,
                                            const std::string& name) {
  const Ramp ramp{window.tau, 0.8 * (window.T - window.tau)};
  const Vector c = center;
  const Matrix m = shape;
  auto phi = [c, m](const Vector& x) {
    const Vector d = x - c;
    return std::exp(-0.5 * d.dot(m * d));
  };
  auto dphi = [c, m, phi](const Vector& x, int i) {
    const Vector g = m * (x - c);
    return -g(i) * phi(x);
  };
  auto d2phi = [c, m, phi](const Vector& x, int i, int j) {
    const Vector g = m * (x - c);
    return (g(i) * g(j) - m(i, j)) * phi(x);
  };
  return assemble_solution(ctx, window, name, ramp, phi, dphi, d2phi);
}

ManufacturedSolution make_poly_bump_solution(const KernelContext& ctx, const Vector& center,
                                             const Vector& half_width, TimeWindow window,
                                             const std::string& name) {
  const Ramp ramp{window.tau, 0.8 * (window.T - window.tau)};
  const Vector c = center;
  const Vector h = half_width;

  auto axis = [](double z) { return std::pow(1.0 - z * z, 4); };
  auto axis1 = [](double z) {
    const double w = 1.0 - z * z;
    return -8.0 * z * w * w * w;
  };
  auto axis2 = [](double z) {
    const double w = 1.0 - z * z;
    return w * w * (56.0 * z * z - 8.0);
  };

  auto phi = [c, h, axis](const Vector& x) {
    double p = 1.0;
    for (int i = 0; i < x.size(); ++i) {
      const double z = (x(i) - c(i)) / h(i);
      if (std::abs(z) >= 1.0) return 0.0;
      p *= axis(z);
    }
    return p;
  };
  auto dphi = [c, h, axis, axis1](const Vector& x, int i) {
    double p = 1.0;
    for (int k = 0; k < x.size(); ++k) {
      const double z = (x(k) - c(k)) / h(k);
      if (std::abs(z) >= 1.0) return 0.0;
      p *= (k == i) ? axis1(z) / h(k) : axis(z);
    }
    return p;
  };
  auto d2phi = [c, h, axis, axis1, axis2](const Vector& x, int i, int j) {
    double p = 1.0;
    for (int k = 0; k < x.size(); ++k) {
      const double z = (x(k) - c(k)) / h(k);
      if (std::abs(z) >= 1.0) return 0.0;
      if (k == i && k == j)
        p *= axis2(z) / (h(k) * h(k));
      else if (k == i || k == j)
        p *= axis1(z) / h(k);
      else
        p *= axis(z);
    }
    return p;
  };
  return assemble_solution(ctx, window, name, ramp, phi, dphi, d2phi);
}

namespace {

// tensor Gauss-Hermite node set, cached per (dimension, order)
struct TensorGH {
  std::vector<Vector> z;
  std::vector<double> w;  // includes the pi^{-n/2} normalization
};

const TensorGH& tensor_gh(int n, int order) {
  static std::map<std::pair<int, int>, TensorGH> cache;
  static std::mutex mutex;
  std::lock_guard<std::mutex> lock(mutex);
  auto [it, inserted] = cache.try_emplace({n, order});
  if (inserted) {
    const Rule& gh = rule(Rule::Kind::hermite, order);
    TensorGH& tg = it->second;
    const double norm = std::pow(M_PI, -0.5 * n);
    std::vector<int> idx(n, 0);
    for (;;) {
      Vector z(n);
      double w = norm;
      for (int i = 0; i < n; ++i) {
        z(i) = gh.nodes[idx[i]];
        w *= gh.weights[idx[i]];
      }
      tg.z.push_back(std::move(z));
      tg.w.push_back(w);
      int d = 0;
      while (d < n && ++idx[d] == order) idx[d++] = 0;
      if (d == n) break;
    }
  }
  return it->second;
}

}  // namespace

double cauchy_homogeneous(const KernelContext& ctx,
                          const std::function<double(const Vector&)>& f, double s,
                          const GroupPoint& xi, int gh_order) {
  if (!(xi.t > s)) throw std::invalid_argument("cauchy_homogeneous: need t > s");
  const int order = gh_order > 0 ? gh_order : ctx.gh_order;
  const Covariance cov = covariance(ctx, s, xi.t);
  const Matrix e_back = propagator(ctx.ds, s - xi.t);
  const Vector mean = e_back * xi.x;     // mean of the y-density
  const Matrix node_map = e_back * (2.0 * cov.L);

  const TensorGH& tg = tensor_gh(ctx.ds.N, order);
  double sum = 0.0;
  for (std::size_t k = 0; k < tg.z.size(); ++k)
    sum += tg.w[k] * f(mean - node_map * tg.z[k]);
  return sum;
}

std::vector<double> initial_trace_error(const KernelContext& ctx,
                                        const std::function<double(const Vector&)>& f,
                                        double s, const std::vector<double>& eps_list,
                                        const std::vector<Vector>& grid) {
  std::vector<double> errors;
  errors.reserve(eps_list.size());
  for (double eps : eps_list) {
    if (!(eps > 0.0)) throw std::invalid_argument("initial_trace_error: eps must be > 0");
    double sup = 0.0;
    for (const Vector& x : grid) {
      const double u = cauchy_homogeneous(ctx, f, s, {x, s + eps});
      sup = std::max(sup, std::abs(u - f(x)));
    }
    errors.push_back(sup);
  }
  return errors;
}

namespace {

// Shared driver for the strip integrals: integrates inner(s, evaluator) over
// the time mesh. The covariance is factored once per time node and shared by
// all spatial quadrature nodes.
double time_strip_integral(const KernelContext& ctx, double tau, double t, double grade,
                           int cells, int nodes,
                           const std::function<double(double, GammaEvaluator&)>& inner) {
  if (!(t > tau)) return 0.0;
  const GradedMesh mesh = graded_mesh(tau, t, cells, grade);
  const Rule& gl = rule(Rule::Kind::legendre, nodes);
  double total = 0.0;
  for (int c = 0; c < cells; ++c) {
    const double mid = 0.5 * (mesh.points[c] + mesh.points[c + 1]);
    const double half = 0.5 * (mesh.points[c + 1] - mesh.points[c]);
    for (int m = 0; m < nodes; ++m) {
      const double s = mid + half * gl.nodes[m];
      GammaEvaluator ev(ctx, covariance(ctx, s, t));
      total += half * gl.weights[m] * inner(s, ev);
    }
  }
  return total;
}

}  // namespace

double duhamel(const KernelContext& ctx, const SourceField& f, const TimeWindow& window,
               const GroupPoint& xi, const SolverOptions& opts) {
  if (!(xi.t <= window.T)) throw std::invalid_argument("duhamel: need t <= T");
  const int order = opts.gh_order > 0 ? opts.gh_order : ctx.gh_order;
  const TensorGH& tg = tensor_gh(ctx.ds.N, order);
  const double tau = std::max(f.tau, window.tau);
  const double grade = opts.grade > 0.0 ? opts.grade : 1.0;

  auto inner = [&](double s, GammaEvaluator& ev) {
    const Matrix e_back = propagator(ctx.ds, s - xi.t);
    const Vector mean = e_back * xi.x;
    const Matrix node_map = e_back * (2.0 * ev.cov().L);
    double sum = 0.0;
    for (std::size_t k = 0; k < tg.z.size(); ++k)
      sum += tg.w[k] * f.f(mean - node_map * tg.z[k], s);
    return sum;
  };
  return -time_strip_integral(ctx, tau, xi.t, grade, opts.time_cells, opts.time_nodes, inner);
}

double first_derivative(const KernelContext& ctx, const SourceField& f,
                        const TimeWindow& window, const GroupPoint& xi, int i,
                        const SolverOptions& opts) {
  if (i < 0 || i >= ctx.ds.q())
    throw std::invalid_argument("first_derivative: need i < q");
  const int order = opts.gh_order > 0 ? opts.gh_order : ctx.gh_order;
  const TensorGH& tg = tensor_gh(ctx.ds.N, order);
  const double tau = std::max(f.tau, window.tau);
  const double grade = opts.grade > 0.0 ? opts.grade : 2.0;
  const MultiIndex alpha = MultiIndex::unit(ctx.ds.N, i);

  auto inner = [&](double s, GammaEvaluator& ev) {
    const Matrix e_back = propagator(ctx.ds, s - xi.t);
    const Vector mean = e_back * xi.x;
    const Matrix node_map = e_back * (2.0 * ev.cov().L);
    double sum = 0.0;
    for (std::size_t k = 0; k < tg.z.size(); ++k) {
      // at node v = 2 L z the whitened variable is w = 2 z
      const double p = ev.poly_value(alpha, DerivVar::x, 2.0 * tg.z[k]);
      sum += tg.w[k] * p * f.f(mean - node_map * tg.z[k], s);
    }
    return sum;
  };
  return -time_strip_integral(ctx, tau, xi.t, grade, opts.time_cells, opts.time_nodes, inner);
}

double second_derivative(const KernelContext& ctx, const SourceField& f,
                         const TimeWindow& window, const GroupPoint& xi, int i, int j,
                         const SolverOptions& opts) {
  if (i < 0 || i >= ctx.ds.q() || j < 0 || j >= ctx.ds.q())
    throw std::invalid_argument("second_derivative: need i,j < q");
  if (!(f.alpha > 0.0 && f.alpha < 1.0))
    throw std::invalid_argument("second_derivative: source needs a declared alpha in (0,1)");
  const int order = opts.gh_order > 0 ? opts.gh_order : ctx.gh_order;
  const TensorGH& tg = tensor_gh(ctx.ds.N, order);
  const double tau = std::max(f.tau, window.tau);
  const double grade = opts.grade > 0.0 ? opts.grade : 2.0 / f.alpha;
  const MultiIndex alpha = MultiIndex::unit(ctx.ds.N, i).plus(j);

  auto inner = [&](double s, GammaEvaluator& ev) {
    const Matrix e_back = propagator(ctx.ds, s - xi.t);
    const Vector mean = e_back * xi.x;  // E(s-t)x, the subtraction point
    const Matrix node_map = e_back * (2.0 * ev.cov().L);
    const double f_center = f.f(mean, s);
    double sum = 0.0;
    for (std::size_t k = 0; k < tg.z.size(); ++k) {
      const double p = ev.poly_value(alpha, DerivVar::x, 2.0 * tg.z[k]);
      sum += tg.w[k] * p * (f_center - f.f(mean - node_map * tg.z[k], s));
    }
    return sum;
  };
  return time_strip_integral(ctx, tau, xi.t, grade, opts.time_cells, opts.time_nodes, inner);
}

namespace {

// integral of P_alpha(w(v)) Gamma(v) over the anisotropic ball |v| < rho,
// by nested Gauss-Legendre with the per-axis substitution v_d = u^{q_d}
// (odd exponents preserve sign); both half-axes are split at the budget kink.
class BallIntegrator {
 public:
  BallIntegrator(GammaEvaluator& ev, const Dilation& dil, const MultiIndex& alpha, int nodes)
      : ev_(ev), dil_(dil), alpha_(alpha), nodes_(nodes), n_(static_cast<int>(dil.q.size())) {
    v_.resize(n_);
    // clip each axis at 12 standard deviations of the kernel
    clip_.resize(n_);
    for (int d = 0; d < n_; ++d) clip_(d) = 12.0 * std::sqrt(ev.cov().C(d, d));
  }

  double run(double rho) { return axis(0, rho); }

 private:
  double axis(int d, double budget) {
    if (budget <= 0.0) return 0.0;
    const double u_max = std::min(budget, std::pow(clip_(d), 1.0 / dil_.q[d]));
    if (u_max <= 0.0) return 0.0;
    double sum = 0.0;
    const Rule& gl = rule(Rule::Kind::legendre, nodes_);
    for (int sign = -1; sign <= 1; sign += 2) {
      // two panels per half-axis
      for (int panel = 0; panel < 2; ++panel) {
        const double a = 0.5 * panel * u_max;
        const double b = 0.5 * (panel + 1) * u_max;
        const double mid = 0.5 * (a + b);
        const double half = 0.5 * (b - a);
        for (int m = 0; m < nodes_; ++m) {
          const double u = mid + half * gl.nodes[m];
          const int qd = dil_.q[d];
          double jac = qd * std::pow(u, qd - 1);
          v_(d) = sign * std::pow(u, qd);
          const double w = half * gl.weights[m] * jac;
          if (d + 1 == n_)
            sum += w * ev_.derivative_v(alpha_, DerivVar::x, v_);
          else
            sum += w * axis(d + 1, budget - u);
        }
      }
    }
    return sum;
  }

  GammaEvaluator& ev_;
  const Dilation& dil_;
  MultiIndex alpha_;
  int nodes_;
  int n_;
  Vector v_;
  Vector clip_;
};

}  // namespace

double truncated_second_derivative_integral(const KernelContext& ctx, const Vector& x,
                                            double t, double s, double r, int i, int j) {
  if (!(t > s)) throw std::invalid_argument("truncated integral: need t > s");
  if (!(r > 0.0)) throw std::invalid_argument("truncated integral: need r > 0");
  const double rho = r - std::sqrt(t - s);
  if (rho <= 0.0) {
    // the whole strip has d >= r; the integral over R^N vanishes
    return 0.0;
  }
  (void)x;  // kernel of convolution type in v; the value is x-independent
  GammaEvaluator ev(ctx, covariance(ctx, s, t));
  const MultiIndex alpha = MultiIndex::unit(ctx.ds.N, i).plus(j);
  BallIntegrator ball(ev, ctx.dil, alpha, 10);
  return -ball.run(rho);
}

double cancellation_integral(const KernelContext& ctx, const Vector& x, double t, double tau,
                             double r, int i, int j) {
  if (!(tau < t)) {
    if (tau == t) return 0.0;
    throw std::invalid_argument("cancellation_integral: need tau <= t");
  }
  // s = t - sigma^2 resolves both the concentration end (sigma -> 0) and the
  // empty-region end (sigma -> r)
  const double sigma_max = std::min(r, std::sqrt(t - tau));
  auto g = [&](double sigma) {
    const double s = t - sigma * sigma;
    return 2.0 * sigma *
           std::abs(truncated_second_derivative_integral(ctx, x, t, s, r, i, j));
  };
  double total = 0.0;
  const int cells = 24;
  for (int c = 0; c < cells; ++c) {
    const double a = sigma_max * c / cells;
    const double b = sigma_max * (c + 1) / cells;
    total += integrate_interval(g, a, b, 6);
  }
  return total;
}

double subtracted_kernel_mass(const KernelContext& ctx, const Vector& x, double t, double tau,
                              double alpha, int i, int j, const SolverOptions& opts) {
  (void)x;  // convolution-type kernel: the mass is x-independent
  const int order = opts.gh_order > 0 ? opts.gh_order : ctx.gh_order;
  const TensorGH& tg = tensor_gh(ctx.ds.N, order);
  const MultiIndex mi = MultiIndex::unit(ctx.ds.N, i).plus(j);
  const double grade = opts.grade > 0.0 ? opts.grade : 2.0 / alpha;

  auto inner = [&](double s, GammaEvaluator& ev) {
    // |E(s-t)x - y| = |E(s-t) v| at y = E(s-t)(x - v)
    const Matrix e_back = propagator(ctx.ds, s - t);
    const Matrix node_map = e_back * (2.0 * ev.cov().L);
    double sum = 0.0;
    for (std::size_t k = 0; k < tg.z.size(); ++k) {
      const double p = ev.poly_value(mi, DerivVar::x, 2.0 * tg.z[k]);
      const double dist = hom_norm_space(ctx.dil, node_map * tg.z[k]);
      sum += tg.w[k] * std::abs(p) * std::pow(dist, alpha);
    }
    return sum;
  };
  return time_strip_integral(ctx, tau, t, grade, opts.time_cells, opts.time_nodes, inner);
}

}  // namespace kfp
