#include "kfp/geometry.hpp"

#include <Eigen/SVD>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "kfp/rng.hpp"

namespace kfp {

namespace {

constexpr double kRankTol = 1e-10;  // smallest/largest singular value cutoff

std::string shape_str(const Matrix& a) {
  std::ostringstream os;
  os << a.rows() << "x" << a.cols();
  return os.str();
}

}  // namespace

DriftStructure build_drift(const std::vector<int>& m, const std::vector<Matrix>& blocks) {
  if (m.empty()) throw std::invalid_argument("build_drift: m must be nonempty");
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (m[i] < 1) throw std::invalid_argument("build_drift: m entries must be >= 1");
    if (i > 0 && m[i] > m[i - 1]) {
      std::ostringstream os;
      os << "build_drift: m must be nonincreasing, got m[" << i - 1 << "]=" << m[i - 1]
         << " < m[" << i << "]=" << m[i];
      throw std::invalid_argument(os.str());
    }
  }
  if (blocks.size() + 1 != m.size())
    throw std::invalid_argument("build_drift: expected one block per level after the first");

  DriftStructure ds;
  ds.m = m;
  ds.blocks = blocks;
  ds.N = std::accumulate(m.begin(), m.end(), 0);
  ds.B = Matrix::Zero(ds.N, ds.N);

  int row = m[0];
  int col = 0;
  for (std::size_t j = 0; j < blocks.size(); ++j) {
    const Matrix& bj = blocks[j];
    if (bj.rows() != m[j + 1] || bj.cols() != m[j]) {
      std::ostringstream os;
      os << "build_drift: block " << j + 1 << " has shape " << shape_str(bj)
         << ", expected " << m[j + 1] << "x" << m[j];
      throw std::invalid_argument(os.str());
    }
    if (!bj.allFinite())
      throw std::invalid_argument("build_drift: block entries must be finite");

    Eigen::JacobiSVD<Matrix> svd(bj);
    const auto& sv = svd.singularValues();
    if (sv(sv.size() - 1) <= kRankTol * sv(0)) {
      std::ostringstream os;
      os << "build_drift: block " << j + 1 << " is rank deficient (needs rank " << m[j + 1]
         << "); singular values:";
      for (int i = 0; i < sv.size(); ++i) os << " " << sv(i);
      throw std::invalid_argument(os.str());
    }

    ds.B.block(row, col, bj.rows(), bj.cols()) = bj;
    col += m[j];
    row += m[j + 1];
  }

  // Strictly lower block-triangular, so B^{k+1} = 0; find the exact index.
  Matrix p = Matrix::Identity(ds.N, ds.N);
  ds.nilpotency_index = ds.k() + 1;
  for (int i = 1; i <= ds.k() + 1; ++i) {
    p = p * ds.B;
    if (p.isZero(0.0)) {
      ds.nilpotency_index = i;
      break;
    }
  }
  return ds;
}

Dilation dilation_exponents(const std::vector<int>& m) {
  if (m.empty()) throw std::invalid_argument("dilation_exponents: m must be nonempty");
  Dilation d;
  for (std::size_t j = 0; j < m.size(); ++j) {
    if (m[j] < 1 || (j > 0 && m[j] > m[j - 1]))
      throw std::invalid_argument("dilation_exponents: invalid m");
    d.q.insert(d.q.end(), m[j], 2 * static_cast<int>(j) + 1);
  }
  d.Q = std::accumulate(d.q.begin(), d.q.end(), 0);
  return d;
}

Matrix propagator(const DriftStructure& ds, double t) {
  Matrix e = Matrix::Identity(ds.N, ds.N);
  Matrix term = Matrix::Identity(ds.N, ds.N);
  for (int j = 1; j < ds.nilpotency_index; ++j) {
    term = term * (-t / j) * ds.B;
    e += term;
  }
  return e;
}

GroupPoint compose(const DriftStructure& ds, const GroupPoint& eta, const GroupPoint& xi) {
  if (eta.x.size() != ds.N || xi.x.size() != ds.N)
    throw std::invalid_argument("compose: point dimension mismatch");
  return {xi.x + propagator(ds, xi.t) * eta.x, xi.t + eta.t};
}

GroupPoint invert(const DriftStructure& ds, const GroupPoint& xi) {
  if (xi.x.size() != ds.N) throw std::invalid_argument("invert: point dimension mismatch");
  return {-(propagator(ds, -xi.t) * xi.x), -xi.t};
}

GroupPoint dilate(const Dilation& dil, double lambda, const GroupPoint& xi) {
  if (lambda <= 0.0) throw std::invalid_argument("dilate: lambda must be positive");
  GroupPoint out;
  out.x.resize(xi.x.size());
  for (int i = 0; i < xi.x.size(); ++i)
    out.x(i) = std::pow(lambda, dil.q[i]) * xi.x(i);
  out.t = lambda * lambda * xi.t;
  return out;
}

double hom_norm_space(const Dilation& dil, const Vector& x) {
  double s = 0.0;
  for (int i = 0; i < x.size(); ++i)
    s += std::pow(std::abs(x(i)), 1.0 / dil.q[i]);
  return s;
}

double hom_norm(const Dilation& dil, const GroupPoint& xi) {
  return hom_norm_space(dil, xi.x) + std::sqrt(std::abs(xi.t));
}

double qdistance(const DriftStructure& ds, const Dilation& dil,
                 const GroupPoint& xi, const GroupPoint& eta) {
  if (xi.x.size() != ds.N || eta.x.size() != ds.N)
    throw std::invalid_argument("qdistance: point dimension mismatch");
  const Vector v = xi.x - propagator(ds, xi.t - eta.t) * eta.x;
  return hom_norm_space(dil, v) + std::sqrt(std::abs(xi.t - eta.t));
}

namespace {

GroupPoint sample_point(Rng& rng, int n) {
  GroupPoint p;
  p.x.resize(n);
  for (int i = 0; i < n; ++i) p.x(i) = rng.uniform(-1.0, 1.0);
  p.t = rng.uniform(-1.0, 1.0);
  return p;
}

}  // namespace

GeometryConstants estimate_kappa(const DriftStructure& ds, std::int64_t sample_count,
                                 std::uint64_t seed) {
  if (sample_count < 1) throw std::invalid_argument("estimate_kappa: sample_count >= 1");
  const Dilation dil = dilation_exponents(ds.m);

  GeometryConstants gc;
  gc.sample_count = sample_count;
  gc.seed = seed;

  Rng tri_stream = Rng::substream(seed, 0);
  for (std::int64_t it = 0; it < sample_count; ++it) {
    const GroupPoint xi = sample_point(tri_stream, ds.N);
    const GroupPoint eta = sample_point(tri_stream, ds.N);
    const GroupPoint zeta = sample_point(tri_stream, ds.N);
    const double dxe = qdistance(ds, dil, xi, eta);
    const double dex = qdistance(ds, dil, eta, xi);
    const double dxz = qdistance(ds, dil, xi, zeta);
    const double dez = qdistance(ds, dil, eta, zeta);
    if (dxz + dez > 0.0)
      gc.kappa_triangle = std::max(gc.kappa_triangle, dxe / (dxz + dez));
    if (dex > 0.0)
      gc.kappa_symmetry = std::max(gc.kappa_symmetry, dxe / dex);
  }
  gc.kappa_hat = std::max(gc.kappa_triangle, gc.kappa_symmetry);

  // Equivalence constant on pairs satisfying the admissibility premise
  // d(xi1,eta) >= 2 kappa d(xi1,xi2), with kappa frozen to the estimate above.
  Rng eq_stream = Rng::substream(seed, 1);
  for (std::int64_t it = 0; it < sample_count; ++it) {
    const GroupPoint xi1 = sample_point(eq_stream, ds.N);
    const GroupPoint xi2 = sample_point(eq_stream, ds.N);
    const GroupPoint eta = sample_point(eq_stream, ds.N);
    const double d1e = qdistance(ds, dil, xi1, eta);
    const double d12 = qdistance(ds, dil, xi1, xi2);
    const double d2e = qdistance(ds, dil, xi2, eta);
    if (d12 <= 0.0 || d2e <= 0.0) continue;
    if (d1e < 2.0 * gc.kappa_hat * d12) continue;
    gc.vartheta_hat = std::max({gc.vartheta_hat, d1e / d2e, d2e / d1e});
  }
  return gc;
}

double fit_propagator_norm_constant(const DriftStructure& ds, const Dilation& dil,
                                    std::int64_t sample_count, std::uint64_t seed) {
  Rng rng = Rng::substream(seed, 2);
  double c = 0.0;
  for (std::int64_t it = 0; it < sample_count; ++it) {
    const GroupPoint p = sample_point(rng, ds.N);
    const double denom = hom_norm_space(dil, p.x) + std::sqrt(std::abs(p.t));
    if (denom == 0.0) continue;
    const double num = hom_norm_space(dil, Vector(propagator(ds, p.t) * p.x));
    c = std::max(c, num / denom);
  }
  return c;
}

DriftStructure drift_from_json(const nlohmann::json& j) {
  if (j.contains("preset")) {
    const std::string preset = j.at("preset").get<std::string>();
    if (preset == "kolmogorov") {
      const int n = j.value("n", 1);
      if (n < 1) throw std::invalid_argument("drift_from_json: preset n must be >= 1");
      return build_drift({n, n}, {Matrix::Identity(n, n)});
    }
    if (preset == "parabolic") {  // B = 0, q = N
      const int n = j.value("n", 1);
      if (n < 1) throw std::invalid_argument("drift_from_json: preset n must be >= 1");
      return build_drift({n}, {});
    }
    throw std::invalid_argument("drift_from_json: unknown preset '" + preset + "'");
  }
  const auto m = j.at("m").get<std::vector<int>>();
  std::vector<Matrix> blocks;
  if (j.contains("blocks")) {
    for (const auto& jb : j.at("blocks")) {
      const auto rows = jb.get<std::vector<std::vector<double>>>();
      if (rows.empty()) throw std::invalid_argument("drift_from_json: empty block");
      Matrix b(rows.size(), rows[0].size());
      for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != rows[0].size())
          throw std::invalid_argument("drift_from_json: ragged block rows");
        for (std::size_t c = 0; c < rows[r].size(); ++c) b(r, c) = rows[r][c];
      }
      blocks.push_back(std::move(b));
    }
  }
  return build_drift(m, blocks);
}

nlohmann::json drift_to_json(const DriftStructure& ds) {
  nlohmann::json j;
  j["m"] = ds.m;
  auto& blocks = j["blocks"] = nlohmann::json::array();
  for (const Matrix& b : ds.blocks) {
    nlohmann::json jb = nlohmann::json::array();
    for (int r = 0; r < b.rows(); ++r) {
      nlohmann::json row = nlohmann::json::array();
      for (int c = 0; c < b.cols(); ++c) row.push_back(b(r, c));
      jb.push_back(std::move(row));
    }
    blocks.push_back(std::move(jb));
  }
  return j;
}

}  // namespace kfp
