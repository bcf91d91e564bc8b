#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "kfp/geometry.hpp"

namespace kfp {

// Diffusion matrix A_0(t), measurable in t. Two representable classes:
// piecewise constant over sorted breakpoints (right-continuous) or a pure
// callable. Breakpoints are exposed so covariance integrals can split pieces.
class TimeCoefficients {
 public:
  static TimeCoefficients constant(Matrix a);
  static TimeCoefficients piecewise_constant(std::vector<double> breaks,
                                             std::vector<Matrix> matrices);
  static TimeCoefficients callable(int q, std::function<Matrix(double)> fn);

  int q() const { return q_; }
  bool is_piecewise() const { return fn_ == nullptr; }
  const std::vector<double>& breaks() const { return breaks_; }

  // Right-continuous evaluation: value on [b_i, b_{i+1}) is matrices[i+1].
  Matrix at(double t) const;

 private:
  int q_ = 0;
  std::vector<double> breaks_;
  std::vector<Matrix> matrices_;
  std::function<Matrix(double)> fn_;
};

// a_ij(x,t): Hoelder continuous in x (exponent alpha), measurable in t.
struct SpaceTimeCoefficients {
  int q = 0;
  std::function<Matrix(const Vector& x, double t)> fn;
  double nu = 0.0;      // declared ellipticity
  double alpha = 0.0;   // declared Hoelder exponent in x
  double lambda = 0.0;  // declared bound for max_ij ||a_ij||_{C_x^alpha}; 0 = estimate
};

struct EllipticityReport {
  bool ok = false;
  double nu_hat = 0.0;   // min over samples of min(lambda_min, 1/lambda_max)
  Vector worst_x;        // empty for time-only fields
  double worst_t = 0.0;
  std::string message;
  std::string sample_descr;
};

// Largest nu certified on the sample set; fails on asymmetry, non-finite
// entries, or a non-positive spectrum (with the witness point).
EllipticityReport check_ellipticity(const TimeCoefficients& field,
                                    const std::vector<double>& times);
EllipticityReport check_ellipticity(const SpaceTimeCoefficients& field,
                                    const std::vector<Vector>& points,
                                    const std::vector<double>& times);

// Lower estimate of Lambda = max_ij ||a_ij||_{C_x^alpha}: sup norm plus the
// pairwise quotient |a_ij(x1,t)-a_ij(x2,t)| / |x1-x2|^alpha over the grid,
// with the anisotropic norm of the dilation group.
double holder_lambda(const SpaceTimeCoefficients& field, const Dilation& dil, double alpha,
                     const std::vector<Vector>& points, const std::vector<double>& times);

// a(x_bar, .) wrapped as a time-only field.
TimeCoefficients freeze(const SpaceTimeCoefficients& field, const Vector& x_bar);

// {"type":"piecewise_t","breaks":[...],"matrices":[[[...]]...]} or
// {"type":"expr","name":...,...}. Named expr presets are space-time fields.
TimeCoefficients time_coefficients_from_json(const nlohmann::json& j);
SpaceTimeCoefficients spacetime_coefficients_from_json(const nlohmann::json& j);
bool json_is_time_only(const nlohmann::json& j);

}  // namespace kfp
