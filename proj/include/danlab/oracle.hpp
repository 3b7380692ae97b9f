#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "danlab/dan.hpp"
#include "danlab/filters.hpp"
#include "danlab/grad.hpp"
#include "danlab/ods.hpp"

namespace danlab::oracle {

using KfAnalysis = std::function<gauss::MeanCov(const gauss::MeanCov&, const Vector&, const filters::LinearGaussianModel&)>;

// Implementations under test; replaceable so a broken filter can be
// injected and shown to be caught.
struct Hooks {
  KfAnalysis kf_analysis = filters::kf_analysis;
};

struct CheckResult {
  std::string name;  // function validated by the check
  bool passed = false;
  double measured = 0.0;
  double tolerance = 0.0;
  std::string detail;
};

struct Report {
  std::vector<CheckResult> checks;

  bool passed() const;
  std::vector<std::string> failed() const;
  std::string text() const;
};

// The scalar ODS x' = 0.8 x + N(0, 0.36), y = x + N(0, 1), x_0 ~ N(0, 1),
// stationary with unit variance.
ods::OdsConfig scalar_linear_ods(std::uint64_t seed);

struct GridKfComparison {
  double mean_rel_error = 0.0;  // |mu_grid - mu_kf| / max(|mu_kf|, sigma_kf)
  double var_rel_error = 0.0;
  double min_retained_mass = 1.0;
  std::vector<double> kf_means;
  std::vector<double> kf_vars;
  std::vector<double> grid_means;
  std::vector<double> grid_vars;
};

// Runs the grid filter and the Kalman filter side by side on one stream
// of the scalar ODS; the grid spans +-10 stationary deviations.
GridKfComparison grid_vs_kf(std::int64_t cycles, Index points, std::uint64_t seed, const Hooks& hooks = {});

struct EnkfKfComparison {
  double max_z = 0.0;         // single ensemble vs KF, in Monte Carlo standard errors
  double pooled_max_z = 0.0;  // mean over replications vs KF
  Vector kf_stats;            // (mean, cov lower triangle)
  Vector first_stats;
  Vector standard_errors;
};

// 2-D linear analysis with members-sized ensembles; standard errors are
// the spread across independent replications.
EnkfKfComparison enkf_vs_kf(Index members, int replications, std::uint64_t seed, const Hooks& hooks = {});

// Largest deviation of enkf_moments from a plain two-pass loop.
double enkf_moments_error(Index n, Index members, std::uint64_t seed);

// Gain-form analysis error of the (hooked) information-form filter.
double kf_gain_form_error(Index n, Index d, std::uint64_t seed, const Hooks& hooks = {});

// log_density against a dense inverse/determinant evaluation.
double log_density_error(Index n, std::uint64_t seed);

// Central-difference check of the one-cycle DAN loss at random parameters
// and nonzero gates; coordinates whose perturbation crosses a leaky_relu
// kink are skipped.
grad::FiniteDiffResult dan_gradient_check(const dan::DanConfig& cfg, Index batch, Index coordinates, double h,
                                          double floor, std::uint64_t seed);

using Log = std::function<void(const std::string&)>;

Report run_oracle_suite(const Hooks& hooks = {}, std::uint64_t seed = 0, const Log& log = {});

}  // namespace danlab::oracle
