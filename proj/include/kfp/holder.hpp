#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "kfp/coefficients.hpp"
#include "kfp/geometry.hpp"
#include "kfp/solver.hpp"

namespace kfp {

using FieldFn = std::function<double(const GroupPoint&)>;
using PointPair = std::pair<GroupPoint, GroupPoint>;

struct HolderReport {
  double estimate = 0.0;  // lower estimate of the seminorm
  GroupPoint witness_1, witness_2;
  double alpha = 0.0;
  std::string variant;  // Cx | C | Ct
  std::string points_descr;
};

// |f|_{C_x^alpha}: same-t pairs, anisotropic |x1-x2|^alpha in the denominator.
HolderReport seminorm_Cx(const FieldFn& f, const Dilation& dil, double alpha,
                         const std::vector<PointPair>& pairs);
// |f|_{C^alpha}: arbitrary pairs, d(xi,eta)^alpha.
HolderReport seminorm_C(const FieldFn& f, const DriftStructure& ds, const Dilation& dil,
                        double alpha, const std::vector<PointPair>& pairs);
// mixed space-time scale: d(xi,eta)^alpha + |t1-t2|^(alpha/q_N).
HolderReport seminorm_Ct(const FieldFn& f, const DriftStructure& ds, const Dilation& dil,
                         double alpha, const std::vector<PointPair>& pairs);

// Tensor sample grid box x times.
std::vector<GroupPoint> tensor_grid(const std::vector<std::pair<double, double>>& box,
                                    int points_per_axis, const std::vector<double>& times);
// All pairs up to max_pairs, then seeded random subsampling.
std::vector<PointPair> make_pairs(const std::vector<GroupPoint>& points,
                                  std::size_t max_pairs, std::uint64_t seed);
std::vector<PointPair> same_time_pairs(const std::vector<GroupPoint>& points,
                                       std::size_t max_pairs, std::uint64_t seed);

struct SchauderRatioReport {
  std::string solution_name;
  // numerator terms
  double sum_d2_cx_norm = 0.0;  // sum_ij ||d2u||_{C_x^alpha}
  double yu_cx_norm = 0.0;      // ||Yu||_{C_x^alpha}
  double sum_du_c_norm = 0.0;   // sum_i ||d_i u||_{C^alpha}
  double u_c_norm = 0.0;        // ||u||_{C^alpha}
  // denominator terms
  double lu_cx_norm = 0.0;  // ||Lu||_{C_x^alpha}
  double u_sup = 0.0;       // ||u||_{C^0}
  double numerator = 0.0;
  double denominator = 0.0;
  double ratio = 0.0;
  // seminorm-only ratio (sum_ij |d2u|_Cx + |Yu|_Cx) / |Lu|_Cx; every term is
  // (2+alpha)-homogeneous under u -> u o D(lambda) for the model operator,
  // so this quotient is the dilation-invariant diagnostic
  double seminorm_ratio = 0.0;
  // sup_(i,j) sup_pairs |d2u(xi)-d2u(eta)| / (d^alpha + |dt|^(alpha/q_N))
  double spacetime_quotient = 0.0;
};

// Assembles both sides of the a priori estimate for a manufactured solution
// on the given evaluation grid. The coefficient field supplies a_ij for Lu;
// pass ctx.a0 via a wrapper for the model operator.
SchauderRatioReport schauder_ratio(const DriftStructure& ds, const Dilation& dil,
                                   const std::function<Matrix(const Vector&, double)>& a_field,
                                   const ManufacturedSolution& u, double alpha,
                                   const std::vector<GroupPoint>& grid,
                                   std::size_t max_pairs = 200000, std::uint64_t seed = 19);

}  // namespace kfp
