#pragma once

#include <functional>
#include <string>
#include <vector>

#include "kfp/kernel.hpp"
#include "kfp/quadrature.hpp"

namespace kfp {

struct TimeWindow {
  double tau = 0.0;  // support floor: sources/solutions vanish for t <= tau
  double T = 0.0;    // horizon
};

struct SourceField {
  std::function<double(const Vector& y, double s)> f;
  double tau = 0.0;
  double alpha = 0.0;            // declared Hoelder-in-x exponent
  double holder_seminorm = 0.0;  // estimate, informational
  bool bounded = true;           // moment identities may declare false
};

// Analytic test solution: bump profile times a smooth time ramp supported in
// (tau, T]. All stated derivatives are exact.
struct ManufacturedSolution {
  std::string name;
  TimeWindow window;
  std::function<double(const Vector&, double)> u;
  std::function<double(const Vector&, double, int)> du;        // d_{x_i} u
  std::function<double(const Vector&, double, int, int)> d2u;  // d2_{x_i x_j} u
  std::function<double(const Vector&, double)> ut;             // d_t u
  std::function<double(const Vector&, double)> Yu;             // <Bx,grad u> - u_t
  std::function<double(const Vector&, double)> Lu;             // for the bound ctx
};

// Gaussian-profile solution u = ramp(t) exp(-(x-c)^T M (x-c)/2).
ManufacturedSolution make_gaussian_solution(const KernelContext& ctx, const Vector& center,
                                            const Matrix& shape, TimeWindow window,
                                            const std::string& name = "gaussian");
// Compactly supported polynomial bump u = ramp(t) prod_i (1 - z_i^2)^4,
// z = (x-c)/h; C^3 across the support boundary.
ManufacturedSolution make_poly_bump_solution(const KernelContext& ctx, const Vector& center,
                                             const Vector& half_width, TimeWindow window,
                                             const std::string& name = "poly_bump");

struct SolverOptions {
  int time_cells = 48;
  int time_nodes = 4;
  double grade = 0.0;  // 0: uniform for plain Duhamel, 2/alpha for T_ij
  int gh_order = 0;    // 0: context default
};

// u(x,t) = int Gamma(x,t; y,s) f(y) dy, the Cauchy solution with datum f at
// time s, integrated in whitened coordinates.
double cauchy_homogeneous(const KernelContext& ctx,
                          const std::function<double(const Vector&)>& f, double s,
                          const GroupPoint& xi, int gh_order = 0);

// sup_x |u(x, s+eps) - f(x)| on a grid, one entry per eps.
std::vector<double> initial_trace_error(const KernelContext& ctx,
                                        const std::function<double(const Vector&)>& f,
                                        double s, const std::vector<double>& eps_list,
                                        const std::vector<Vector>& grid);

// u(x,t) = -int_tau^t int Gamma(x,t;y,s) f(y,s) dy ds
double duhamel(const KernelContext& ctx, const SourceField& f, const TimeWindow& window,
               const GroupPoint& xi, const SolverOptions& opts = {});

// d_{x_i} u(x,t) = -int_tau^t int d_{x_i}Gamma f dy ds   (i < q)
double first_derivative(const KernelContext& ctx, const SourceField& f,
                        const TimeWindow& window, const GroupPoint& xi, int i,
                        const SolverOptions& opts = {});

// The singular operator T_ij with the subtracted kernel:
// d2_{x_i x_j} u(x,t) = int_tau^t int d2 Gamma(x,t;y,s)
//                          [f(E(s-t)x, s) - f(y,s)] dy ds.
// Time integration on a mesh with grade 2/alpha.
double second_derivative(const KernelContext& ctx, const SourceField& f,
                         const TimeWindow& window, const GroupPoint& xi, int i, int j,
                         const SolverOptions& opts = {});

// Inner truncated integral int_{d((x,t),(y,s)) >= r} d2_{x_i x_j} Gamma dy,
// computed through the complement over the bounded region {d < r} (the full
// integral vanishes). Exactly 0 when t - s >= r^2.
double truncated_second_derivative_integral(const KernelContext& ctx, const Vector& x,
                                            double t, double s, double r, int i, int j);

// I_{r,tau}(x,t) = int_tau^t |inner truncated integral| ds
double cancellation_integral(const KernelContext& ctx, const Vector& x, double t, double tau,
                             double r, int i, int j);

// int_tau^t int |d2 Gamma| |E(s-t)x - y|^alpha dy ds (anisotropic norm);
// bounded by c (t-tau)^(alpha/2).
double subtracted_kernel_mass(const KernelContext& ctx, const Vector& x, double t, double tau,
                              double alpha, int i, int j, const SolverOptions& opts = {});

}  // namespace kfp
