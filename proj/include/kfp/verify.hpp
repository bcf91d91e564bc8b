#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "kfp/kernel.hpp"

namespace kfp {

struct McConfig {
  std::int64_t paths = 100000;
  std::int64_t steps = 1000;
  std::uint64_t seed = 1;
  Vector y;  // start point
  double s = 0.0;
  double t = 1.0;
  bool flip_drift_sign = false;  // negative-control fixture
};

// Euler-Maruyama for dX = -B X dsigma + sqrt(2 A0(sigma)) dW from X_s = y.
// The per-step diffusion square roots are precomputed symmetrically; path
// batches draw from independent substreams, so the sample set is
// deterministic in (seed) and independent of the thread count.
Matrix simulate_sde(const KernelContext& ctx, const McConfig& cfg);  // paths x N

struct CheckResult {
  std::string name;
  bool pass = false;
  bool hard = true;  // informational checks don't gate the suite
  double value = 0.0;
  double tolerance = 0.0;
  double seconds = 0.0;
  std::string detail;
};

struct SuiteResult {
  std::vector<CheckResult> checks;
  bool all_pass() const {
    for (const auto& c : checks)
      if (c.hard && !c.pass) return false;
    return true;
  }
  void add(CheckResult c) { checks.push_back(std::move(c)); }
  void merge(SuiteResult other) {
    for (auto& c : other.checks) checks.push_back(std::move(c));
  }
};

// Sample mean vs E(t-s) y at 3 standard errors, sample covariance vs 2C(t,s)
// at 5%, plus an informational Kolmogorov-Smirnov test on whitened marginals.
SuiteResult moment_check(const Matrix& samples, const KernelContext& ctx, const McConfig& cfg);

// Monte Carlo |B_r(0)| over the given radii: the log-log slope against r must
// be Q+2; translation invariance is spot-checked at a second center.
SuiteResult ball_volume_check(const DriftStructure& ds, const Dilation& dil,
                              const std::vector<double>& r_list, std::int64_t mc_samples,
                              std::uint64_t seed, double slope_tol = 0.05);

struct SuiteConfig {
  KernelContext ctx;
  double alpha = 0.5;
  std::uint64_t seed = 1;
};

// Named check groups: geometry | kernel | solver | cancellation | holder | mc
// (comma separated, or "all"). Empty selection yields an empty passing result.
SuiteResult run_suite(const SuiteConfig& cfg, const std::string& selection);

// {name, status, value, tolerance, seconds} per check. Timings are excluded
// from the canonical form used for reproducibility comparisons.
nlohmann::json suite_to_json(const SuiteResult& result, bool with_timings = true);

}  // namespace kfp
