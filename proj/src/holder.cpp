#include "kfp/holder.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "kfp/rng.hpp"

namespace kfp {

namespace {

HolderReport sup_quotient(const FieldFn& f, double alpha, const std::vector<PointPair>& pairs,
                          const std::function<double(const GroupPoint&, const GroupPoint&)>& gauge,
                          const char* variant) {
  if (pairs.empty()) throw std::invalid_argument("seminorm: empty pair set");
  HolderReport rep;
  rep.alpha = alpha;
  rep.variant = variant;
  for (const auto& [p1, p2] : pairs) {
    const double den = gauge(p1, p2);
    if (den <= 0.0) continue;
    const double quot = std::abs(f(p1) - f(p2)) / den;
    if (quot > rep.estimate) {
      rep.estimate = quot;
      rep.witness_1 = p1;
      rep.witness_2 = p2;
    }
  }
  std::ostringstream os;
  os << pairs.size() << " pairs";
  rep.points_descr = os.str();
  return rep;
}

}  // namespace

HolderReport seminorm_Cx(const FieldFn& f, const Dilation& dil, double alpha,
                         const std::vector<PointPair>& pairs) {
  if (alpha <= 0.0 || alpha >= 1.0) throw std::invalid_argument("seminorm_Cx: alpha in (0,1)");
  for (const auto& [p1, p2] : pairs)
    if (p1.t != p2.t)
      throw std::invalid_argument("seminorm_Cx: pairs must share the time coordinate");
  return sup_quotient(
      f, alpha, pairs,
      [&](const GroupPoint& p1, const GroupPoint& p2) {
        return std::pow(hom_norm_space(dil, p1.x - p2.x), alpha);
      },
      "Cx");
}

HolderReport seminorm_C(const FieldFn& f, const DriftStructure& ds, const Dilation& dil,
                        double alpha, const std::vector<PointPair>& pairs) {
  if (alpha <= 0.0 || alpha >= 1.0) throw std::invalid_argument("seminorm_C: alpha in (0,1)");
  return sup_quotient(
      f, alpha, pairs,
      [&](const GroupPoint& p1, const GroupPoint& p2) {
        return std::pow(qdistance(ds, dil, p1, p2), alpha);
      },
      "C");
}

HolderReport seminorm_Ct(const FieldFn& f, const DriftStructure& ds, const Dilation& dil,
                         double alpha, const std::vector<PointPair>& pairs) {
  if (alpha <= 0.0 || alpha >= 1.0) throw std::invalid_argument("seminorm_Ct: alpha in (0,1)");
  const double qn = dil.q.back();
  return sup_quotient(
      f, alpha, pairs,
      [&](const GroupPoint& p1, const GroupPoint& p2) {
        return std::pow(qdistance(ds, dil, p1, p2), alpha) +
               std::pow(std::abs(p1.t - p2.t), alpha / qn);
      },
      "Ct");
}

std::vector<GroupPoint> tensor_grid(const std::vector<std::pair<double, double>>& box,
                                    int points_per_axis, const std::vector<double>& times) {
  const int n = static_cast<int>(box.size());
  std::vector<GroupPoint> out;
  std::vector<int> idx(n, 0);
  for (;;) {
    Vector x(n);
    for (int i = 0; i < n; ++i) {
      const auto [lo, hi] = box[i];
      x(i) = points_per_axis == 1 ? 0.5 * (lo + hi)
                                  : lo + (hi - lo) * idx[i] / (points_per_axis - 1);
    }
    for (double t : times) out.push_back({x, t});
    int d = 0;
    while (d < n && ++idx[d] == points_per_axis) idx[d++] = 0;
    if (d == n) break;
  }
  return out;
}

std::vector<PointPair> make_pairs(const std::vector<GroupPoint>& points,
                                  std::size_t max_pairs, std::uint64_t seed) {
  const std::size_t n = points.size();
  std::vector<PointPair> pairs;
  if (n < 2) return pairs;
  if (n * (n - 1) / 2 <= max_pairs) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) pairs.push_back({points[i], points[j]});
    return pairs;
  }
  Rng rng = Rng::substream(seed, 3);
  pairs.reserve(max_pairs);
  while (pairs.size() < max_pairs) {
    const auto i = static_cast<std::size_t>(rng.uniform() * n);
    const auto j = static_cast<std::size_t>(rng.uniform() * n);
    if (i == j || i >= n || j >= n) continue;
    pairs.push_back({points[i], points[j]});
  }
  return pairs;
}

std::vector<PointPair> same_time_pairs(const std::vector<GroupPoint>& points,
                                       std::size_t max_pairs, std::uint64_t seed) {
  auto pairs = make_pairs(points, max_pairs * 4, seed);
  std::vector<PointPair> out;
  for (auto& p : pairs)
    if (p.first.t == p.second.t && out.size() < max_pairs) out.push_back(std::move(p));
  return out;
}

SchauderRatioReport schauder_ratio(const DriftStructure& ds, const Dilation& dil,
                                   const std::function<Matrix(const Vector&, double)>& a_field,
                                   const ManufacturedSolution& u, double alpha,
                                   const std::vector<GroupPoint>& grid,
                                   std::size_t max_pairs, std::uint64_t seed) {
  if (grid.empty()) throw std::invalid_argument("schauder_ratio: empty grid");
  const int q = ds.q();

  auto lu = [&](const GroupPoint& p) {
    const Matrix a = a_field(p.x, p.t);
    double diff = 0.0;
    for (int i = 0; i < q; ++i)
      for (int j = 0; j < q; ++j) diff += a(i, j) * u.d2u(p.x, p.t, i, j);
    return diff + u.Yu(p.x, p.t);
  };

  const auto pairs_x = same_time_pairs(grid, max_pairs, seed);
  const auto pairs_joint = make_pairs(grid, max_pairs, seed + 1);

  auto sup_on_grid = [&](const FieldFn& f) {
    double s = 0.0;
    for (const auto& p : grid) s = std::max(s, std::abs(f(p)));
    return s;
  };

  SchauderRatioReport rep;
  rep.solution_name = u.name;

  double sum_d2_semi = 0.0;
  for (int i = 0; i < q; ++i) {
    for (int j = 0; j < q; ++j) {
      FieldFn f = [&, i, j](const GroupPoint& p) { return u.d2u(p.x, p.t, i, j); };
      const double semi = seminorm_Cx(f, dil, alpha, pairs_x).estimate;
      sum_d2_semi += semi;
      rep.sum_d2_cx_norm += sup_on_grid(f) + semi;
      rep.spacetime_quotient =
          std::max(rep.spacetime_quotient, seminorm_Ct(f, ds, dil, alpha, pairs_joint).estimate);
    }
  }

  FieldFn yu = [&](const GroupPoint& p) { return u.Yu(p.x, p.t); };
  const double yu_semi = seminorm_Cx(yu, dil, alpha, pairs_x).estimate;
  rep.yu_cx_norm = sup_on_grid(yu) + yu_semi;

  for (int i = 0; i < q; ++i) {
    FieldFn f = [&, i](const GroupPoint& p) { return u.du(p.x, p.t, i); };
    rep.sum_du_c_norm += sup_on_grid(f) + seminorm_C(f, ds, dil, alpha, pairs_joint).estimate;
  }

  FieldFn uu = [&](const GroupPoint& p) { return u.u(p.x, p.t); };
  rep.u_sup = sup_on_grid(uu);
  rep.u_c_norm = rep.u_sup + seminorm_C(uu, ds, dil, alpha, pairs_joint).estimate;

  const double lu_semi = seminorm_Cx(lu, dil, alpha, pairs_x).estimate;
  rep.lu_cx_norm = sup_on_grid(lu) + lu_semi;

  rep.numerator = rep.sum_d2_cx_norm + rep.yu_cx_norm + rep.sum_du_c_norm + rep.u_c_norm;
  rep.denominator = rep.lu_cx_norm + rep.u_sup;
  if (rep.denominator <= 0.0)
    throw std::invalid_argument("schauder_ratio: degenerate solution, zero denominator");
  rep.ratio = rep.numerator / rep.denominator;
  rep.seminorm_ratio =
      lu_semi > 0.0 ? (sum_d2_semi + yu_semi) / lu_semi : 0.0;
  return rep;
}

}  // namespace kfp
