#include "kfp/quadrature.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <stdexcept>

namespace kfp {

namespace {

Rule build_rule(Rule::Kind kind, int n) {
  // Golub-Welsch: nodes are eigenvalues of the symmetric tridiagonal Jacobi
  // matrix, weights mu0 * (first eigenvector component)^2.
  Matrix jac = Matrix::Zero(n, n);
  double mu0;
  if (kind == Rule::Kind::legendre) {
    for (int k = 1; k < n; ++k) {
      const double b = k / std::sqrt(4.0 * k * k - 1.0);
      jac(k, k - 1) = jac(k - 1, k) = b;
    }
    mu0 = 2.0;
  } else {
    for (int k = 1; k < n; ++k) {
      const double b = std::sqrt(k / 2.0);
      jac(k, k - 1) = jac(k - 1, k) = b;
    }
    mu0 = std::sqrt(M_PI);
  }

  Eigen::SelfAdjointEigenSolver<Matrix> es(jac);
  Rule r;
  r.kind = kind;
  r.nodes.resize(n);
  r.weights.resize(n);
  for (int i = 0; i < n; ++i) {
    r.nodes[i] = es.eigenvalues()(i);
    const double v0 = es.eigenvectors()(0, i);
    r.weights[i] = mu0 * v0 * v0;
  }
  // Both weight functions are even; enforce the exact node/weight symmetry.
  for (int i = 0; i < n / 2; ++i) {
    const int j = n - 1 - i;
    const double x = 0.5 * (r.nodes[j] - r.nodes[i]);
    const double w = 0.5 * (r.weights[i] + r.weights[j]);
    r.nodes[i] = -x;
    r.nodes[j] = x;
    r.weights[i] = r.weights[j] = w;
  }
  if (n % 2 == 1) r.nodes[n / 2] = 0.0;
  return r;
}

}  // namespace

const Rule& rule(Rule::Kind kind, int n) {
  if (n < 1) throw std::invalid_argument("rule: need n >= 1");
  static std::map<std::pair<int, int>, Rule> cache;
  static std::mutex mutex;
  std::lock_guard<std::mutex> lock(mutex);
  auto [it, inserted] = cache.try_emplace({static_cast<int>(kind), n});
  if (inserted) it->second = build_rule(kind, n);
  return it->second;
}

double gaussian_integral(const std::function<double(const Vector&)>& f,
                         const Vector& mean, const Matrix& cov, int order) {
  const int n = static_cast<int>(mean.size());
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("gaussian_integral: covariance not positive definite");
  const Matrix scaled_factor = std::sqrt(2.0) * Matrix(llt.matrixL());

  const Rule& gh = rule(Rule::Kind::hermite, order);
  const double norm = std::pow(M_PI, -0.5 * n);

  std::vector<int> idx(n, 0);
  Vector z(n);
  double sum = 0.0;
  for (;;) {
    double w = 1.0;
    for (int i = 0; i < n; ++i) {
      z(i) = gh.nodes[idx[i]];
      w *= gh.weights[idx[i]];
    }
    sum += w * f(mean + scaled_factor * z);
    int d = 0;
    while (d < n && ++idx[d] == order) idx[d++] = 0;
    if (d == n) break;
  }
  return norm * sum;
}

CheckedIntegral gaussian_integral_checked(const std::function<double(const Vector&)>& f,
                                          const Vector& mean, const Matrix& cov, int order) {
  const double coarse = gaussian_integral(f, mean, cov, order);
  const double fine = gaussian_integral(f, mean, cov, order + 6);
  return {fine, std::abs(fine - coarse)};
}

GradedMesh graded_mesh(double tau, double t, int n, double grade) {
  if (!(tau < t)) throw std::invalid_argument("graded_mesh: need tau < t");
  if (n < 1) throw std::invalid_argument("graded_mesh: need n >= 1");
  if (grade < 1.0) throw std::invalid_argument("graded_mesh: need grade >= 1");
  GradedMesh m;
  m.tau = tau;
  m.t = t;
  m.n = n;
  m.grade = grade;
  m.points.resize(n + 1);
  for (int j = 0; j <= n; ++j)
    m.points[j] = t - (t - tau) * std::pow(static_cast<double>(n - j) / n, grade);
  m.points[0] = tau;
  m.points[n] = t;
  return m;
}

double integrate_interval(const std::function<double(double)>& f, double a, double b,
                          int nodes) {
  // cells can collapse to a few ulps at extreme grading; their nodes would
  // land on the endpoints, so they are skipped as unresolvable
  if (!(b - a > 16.0 * std::numeric_limits<double>::epsilon() *
                    std::max({std::abs(a), std::abs(b), 1e-300})))
    return 0.0;
  const Rule& gl = rule(Rule::Kind::legendre, nodes);
  const double mid = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  double sum = 0.0;
  for (int i = 0; i < nodes; ++i) sum += gl.weights[i] * f(mid + half * gl.nodes[i]);
  return half * sum;
}

double integrate_mesh(const std::function<double(double)>& f, const GradedMesh& mesh,
                      int nodes_per_cell) {
  double sum = 0.0;
  for (int j = 0; j < mesh.n; ++j)
    sum += integrate_interval(f, mesh.points[j], mesh.points[j + 1], nodes_per_cell);
  return sum;
}

int default_gh_order(int n) {
  if (n <= 3) return 20;
  if (n <= 5) return 12;
  if (n == 6) return 8;
  throw std::invalid_argument("default_gh_order: tensor grids capped at N <= 6 desk scale");
}

}  // namespace kfp
