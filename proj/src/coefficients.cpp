#include "kfp/coefficients.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace kfp {

namespace {

void require_symmetric(const Matrix& a, const char* where) {
  if (a.rows() != a.cols()) throw std::invalid_argument(std::string(where) + ": matrix not square");
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  if (((a - a.transpose()).cwiseAbs().maxCoeff()) > 1e-14 * scale)
    throw std::invalid_argument(std::string(where) + ": matrix not symmetric");
}

}  // namespace

TimeCoefficients TimeCoefficients::constant(Matrix a) {
  return piecewise_constant({}, {std::move(a)});
}

TimeCoefficients TimeCoefficients::piecewise_constant(std::vector<double> breaks,
                                                      std::vector<Matrix> matrices) {
  if (matrices.empty())
    throw std::invalid_argument("TimeCoefficients: need at least one matrix");
  if (matrices.size() != breaks.size() + 1)
    throw std::invalid_argument("TimeCoefficients: need one matrix more than breakpoints");
  if (!std::is_sorted(breaks.begin(), breaks.end()))
    throw std::invalid_argument("TimeCoefficients: breakpoints must be sorted");
  const int q = static_cast<int>(matrices.front().rows());
  for (const Matrix& a : matrices) {
    require_symmetric(a, "TimeCoefficients");
    if (a.rows() != q) throw std::invalid_argument("TimeCoefficients: inconsistent sizes");
  }
  TimeCoefficients tc;
  tc.q_ = q;
  tc.breaks_ = std::move(breaks);
  tc.matrices_ = std::move(matrices);
  return tc;
}

TimeCoefficients TimeCoefficients::callable(int q, std::function<Matrix(double)> fn) {
  if (q < 1 || !fn) throw std::invalid_argument("TimeCoefficients: bad callable");
  TimeCoefficients tc;
  tc.q_ = q;
  tc.fn_ = std::move(fn);
  return tc;
}

Matrix TimeCoefficients::at(double t) const {
  if (fn_) {
    Matrix a = fn_(t);
    require_symmetric(a, "TimeCoefficients::at");
    return a;
  }
  const auto it = std::upper_bound(breaks_.begin(), breaks_.end(), t);
  return matrices_[static_cast<std::size_t>(it - breaks_.begin())];
}

namespace {

struct SpectrumCheck {
  bool ok;
  double nu;  // min(lambda_min, 1/lambda_max)
  std::string message;
};

SpectrumCheck spectrum_nu(const Matrix& a) {
  if (!a.allFinite()) return {false, 0.0, "non-finite entries"};
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-14 * scale)
    return {false, 0.0, "asymmetric matrix"};
  Eigen::SelfAdjointEigenSolver<Matrix> es(a, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  if (lo <= 0.0) {
    std::ostringstream os;
    os << "non-positive eigenvalue " << lo;
    return {false, 0.0, os.str()};
  }
  return {true, std::min(lo, 1.0 / hi), ""};
}

}  // namespace

EllipticityReport check_ellipticity(const TimeCoefficients& field,
                                    const std::vector<double>& times) {
  if (times.empty()) throw std::invalid_argument("check_ellipticity: empty sample set");
  EllipticityReport rep;
  rep.nu_hat = std::numeric_limits<double>::infinity();
  rep.ok = true;
  for (double t : times) {
    const SpectrumCheck sc = spectrum_nu(field.at(t));
    if (!sc.ok) {
      rep.ok = false;
      rep.nu_hat = 0.0;
      rep.worst_t = t;
      rep.message = sc.message;
      return rep;
    }
    if (sc.nu < rep.nu_hat) {
      rep.nu_hat = sc.nu;
      rep.worst_t = t;
    }
  }
  std::ostringstream os;
  os << times.size() << " time samples";
  rep.sample_descr = os.str();
  return rep;
}

EllipticityReport check_ellipticity(const SpaceTimeCoefficients& field,
                                    const std::vector<Vector>& points,
                                    const std::vector<double>& times) {
  if (points.empty() || times.empty())
    throw std::invalid_argument("check_ellipticity: empty sample set");
  EllipticityReport rep;
  rep.nu_hat = std::numeric_limits<double>::infinity();
  rep.ok = true;
  for (double t : times) {
    for (const Vector& x : points) {
      const SpectrumCheck sc = spectrum_nu(field.fn(x, t));
      if (!sc.ok) {
        rep.ok = false;
        rep.nu_hat = 0.0;
        rep.worst_x = x;
        rep.worst_t = t;
        rep.message = sc.message;
        return rep;
      }
      if (sc.nu < rep.nu_hat) {
        rep.nu_hat = sc.nu;
        rep.worst_x = x;
        rep.worst_t = t;
      }
    }
  }
  std::ostringstream os;
  os << points.size() << "x" << times.size() << " space-time samples";
  rep.sample_descr = os.str();
  return rep;
}

double holder_lambda(const SpaceTimeCoefficients& field, const Dilation& dil, double alpha,
                     const std::vector<Vector>& points, const std::vector<double>& times) {
  if (points.empty() || times.empty())
    throw std::invalid_argument("holder_lambda: empty point set");
  if (alpha <= 0.0 || alpha >= 1.0)
    throw std::invalid_argument("holder_lambda: alpha must be in (0,1)");

  const int q = field.q;
  double lambda = 0.0;
  for (int i = 0; i < q; ++i) {
    for (int j = 0; j < q; ++j) {
      double sup = 0.0;
      double quot = 0.0;
      for (double t : times) {
        std::vector<double> vals(points.size());
        for (std::size_t p = 0; p < points.size(); ++p) {
          vals[p] = field.fn(points[p], t)(i, j);
          sup = std::max(sup, std::abs(vals[p]));
        }
        for (std::size_t p1 = 0; p1 < points.size(); ++p1) {
          for (std::size_t p2 = p1 + 1; p2 < points.size(); ++p2) {
            const double dx = hom_norm_space(dil, points[p1] - points[p2]);
            if (dx == 0.0) continue;
            quot = std::max(quot, std::abs(vals[p1] - vals[p2]) / std::pow(dx, alpha));
          }
        }
      }
      lambda = std::max(lambda, sup + quot);
    }
  }
  return lambda;
}

TimeCoefficients freeze(const SpaceTimeCoefficients& field, const Vector& x_bar) {
  auto fn = field.fn;
  Vector x = x_bar;
  return TimeCoefficients::callable(field.q, [fn, x](double t) { return fn(x, t); });
}

bool json_is_time_only(const nlohmann::json& j) {
  return j.at("type").get<std::string>() == "piecewise_t";
}

TimeCoefficients time_coefficients_from_json(const nlohmann::json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type != "piecewise_t")
    throw std::invalid_argument("time_coefficients_from_json: type must be piecewise_t");
  const auto breaks = j.at("breaks").get<std::vector<double>>();
  std::vector<Matrix> matrices;
  for (const auto& jm : j.at("matrices")) {
    const auto rows = jm.get<std::vector<std::vector<double>>>();
    Matrix a(rows.size(), rows.empty() ? 0 : rows[0].size());
    for (std::size_t r = 0; r < rows.size(); ++r)
      for (std::size_t c = 0; c < rows[r].size(); ++c) a(r, c) = rows[r][c];
    matrices.push_back(std::move(a));
  }
  return TimeCoefficients::piecewise_constant(breaks, std::move(matrices));
}

SpaceTimeCoefficients spacetime_coefficients_from_json(const nlohmann::json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type != "expr")
    throw std::invalid_argument("spacetime_coefficients_from_json: type must be expr");
  const std::string name = j.at("name").get<std::string>();
  const int q = j.value("q", 1);
  const double base = j.value("base", 1.0);
  const double amplitude = j.value("amplitude", 0.5);

  SpaceTimeCoefficients st;
  st.q = q;
  if (name == "sin_x1") {
    // a(x,t) = (base + amplitude sin(x_1)) Id_q; elliptic iff base > |amplitude|
    st.fn = [q, base, amplitude](const Vector& x, double) {
      return Matrix((base + amplitude * std::sin(x(0))) * Matrix::Identity(q, q));
    };
  } else if (name == "cos_norm") {
    st.fn = [q, base, amplitude](const Vector& x, double) {
      return Matrix((base + amplitude * std::cos(x.norm())) * Matrix::Identity(q, q));
    };
  } else {
    throw std::invalid_argument("spacetime_coefficients_from_json: unknown expr '" + name + "'");
  }
  st.nu = j.value("nu", 0.0);
  st.alpha = j.value("alpha", 0.0);
  return st;
}

}  // namespace kfp
