#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace kfp {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Block-triangular drift matrix of the operator, assembled from blocks
// B_j (m_j x m_{j-1}, full row rank). B is nilpotent: B^{k+1} = 0.
struct DriftStructure {
  std::vector<int> m;           // m_0 >= m_1 >= ... >= m_k >= 1
  std::vector<Matrix> blocks;   // B_1 ... B_k
  int N = 0;                    // sum of m_i
  Matrix B;                     // N x N
  int nilpotency_index = 0;     // smallest p with B^p = 0

  int q() const { return m.front(); }                    // diffusion rank m_0
  int k() const { return static_cast<int>(m.size()) - 1; }
};

// Anisotropic dilation exponents q_i = (1,..,1,3,..,3,...,2k+1,..,2k+1) and
// the homogeneous dimension Q = sum q_i (Q+2 in space-time).
struct Dilation {
  std::vector<int> q;
  int Q = 0;
};

struct GroupPoint {
  Vector x;
  double t = 0.0;
};

// Empirical structural constants of the quasi-distance. The paper asserts
// their existence without values; these are fitted sups over seeded samples.
struct GeometryConstants {
  double kappa_hat = 1.0;       // max of the two quotients below
  double kappa_triangle = 1.0;  // d(xi,eta) / (d(xi,zeta)+d(eta,zeta))
  double kappa_symmetry = 1.0;  // d(xi,eta) / d(eta,xi)
  double vartheta_hat = 1.0;    // equivalence constant on admissible pairs
  std::int64_t sample_count = 0;
  std::uint64_t seed = 0;
};

DriftStructure build_drift(const std::vector<int>& m, const std::vector<Matrix>& blocks);
Dilation dilation_exponents(const std::vector<int>& m);

// E(t) = exp(-tB), evaluated by the terminating power series of the
// nilpotent B. Always unimodular: det E(t) = 1.
Matrix propagator(const DriftStructure& ds, double t);

// (y,s) o (x,t) = (x + E(t) y, t + s)
GroupPoint compose(const DriftStructure& ds, const GroupPoint& eta, const GroupPoint& xi);
// (y,s)^{-1} = (-E(-s) y, -s)
GroupPoint invert(const DriftStructure& ds, const GroupPoint& xi);

GroupPoint dilate(const Dilation& dil, double lambda, const GroupPoint& xi);

// Anisotropic norm on R^N: |x| = sum_i |x_i|^{1/q_i}.
double hom_norm_space(const Dilation& dil, const Vector& x);
// rho(x,t) = |x| + sqrt(|t|), 1-homogeneous under D(lambda).
double hom_norm(const Dilation& dil, const GroupPoint& xi);
// d(xi,eta) = rho(eta^{-1} o xi) = |x - E(t-s)y| + sqrt(|t-s|)
double qdistance(const DriftStructure& ds, const Dilation& dil,
                 const GroupPoint& xi, const GroupPoint& eta);

// Monte Carlo sups of the quasi-triangle/quasi-symmetry quotients and of the
// equivalence quotient on pairs satisfying d(xi1,eta) >= 2 kappa d(xi1,xi2).
// Samples are drawn from a prefix-stable stream, so estimates are
// non-decreasing in sample_count for a fixed seed.
GeometryConstants estimate_kappa(const DriftStructure& ds, std::int64_t sample_count,
                                 std::uint64_t seed);

// Fitted constant of |E(t)x| <= c (|x| + sqrt(|t|)) over a seeded sample box.
double fit_propagator_norm_constant(const DriftStructure& ds, const Dilation& dil,
                                    std::int64_t sample_count, std::uint64_t seed);

// JSON: {"m":[...],"blocks":[[[...]]]} or {"preset":"kolmogorov","n":1}.
DriftStructure drift_from_json(const nlohmann::json& j);
nlohmann::json drift_to_json(const DriftStructure& ds);

}  // namespace kfp
