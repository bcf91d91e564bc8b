#pragma once

#include <functional>
#include <string>
#include <vector>

#include "kfp/geometry.hpp"

namespace kfp {

// Gaussian quadrature rule. legendre: weight 1 on (-1,1), weights sum to 2.
// hermite: physicists' weight exp(-x^2) on R, weights sum to sqrt(pi).
struct Rule {
  enum class Kind { legendre, hermite };
  Kind kind;
  std::vector<double> nodes;    // ascending, symmetric about 0
  std::vector<double> weights;  // positive
};

// Nodes/weights by Golub-Welsch on the Jacobi matrix; rules are cached.
const Rule& rule(Rule::Kind kind, int n);

// Tensor Gauss-Hermite expectation of f under N(mean, cov), evaluated in
// whitened coordinates y = mean + sqrt(2) L z with cov = L L^T. Exact for
// polynomial f of per-axis degree <= 2 order - 1.
double gaussian_integral(const std::function<double(const Vector&)>& f,
                         const Vector& mean, const Matrix& cov, int order);

// Same, with the order-doubling self check: recomputes at a higher order and
// reports the discrepancy so callers can flag an insufficient order.
struct CheckedIntegral {
  double value;
  double discrepancy;
};
CheckedIntegral gaussian_integral_checked(const std::function<double(const Vector&)>& f,
                                          const Vector& mean, const Matrix& cov, int order);

// Time mesh on [tau, t] with breakpoints clustered at t:
//   t - s_j = (t - tau) ((n - j)/n)^grade,   j = 0..n.
// grade = 2/alpha makes composite rules of integrands ~ (t-s)^(alpha/2-1)
// converge at the base-rule order.
struct GradedMesh {
  double tau = 0.0;
  double t = 0.0;
  int n = 0;
  double grade = 1.0;
  std::vector<double> points;  // strictly increasing, points[0]=tau, points[n]=t
};

GradedMesh graded_mesh(double tau, double t, int n, double grade);

// Composite Gauss-Legendre over the cells of a mesh.
double integrate_mesh(const std::function<double(double)>& f, const GradedMesh& mesh,
                      int nodes_per_cell);
double integrate_interval(const std::function<double(double)>& f, double a, double b,
                          int nodes);

// Default per-axis Gauss-Hermite order for dimension n (tensor-grid cost cap).
int default_gh_order(int n);

}  // namespace kfp
