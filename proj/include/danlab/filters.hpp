#pragma once

#include <functional>

#include "danlab/gauss.hpp"
#include "danlab/types.hpp"

namespace danlab::filters {

using gauss::MeanCov;

// Affine propagation x -> M x + offset, linear observation y = H x, and
// the error covariances Q (model) and R (observation).
struct LinearGaussianModel {
  Matrix M;
  Vector offset;  // empty means zero
  Matrix H;
  Matrix Q;
  Matrix R;

  Index n() const { return M.rows(); }
  Index d() const { return H.rows(); }
  void validate() const;
};

// Columns are state realizations; m >= 2.
struct Ensemble {
  Matrix members;

  Index n() const { return members.rows(); }
  Index size() const { return members.cols(); }
};

// Discretized 1-D density on a uniform grid of K points spanning [lo, hi].
// weights are cell probabilities and sum to one.
struct GridDensity {
  double lo = 0.0;
  double hi = 0.0;
  Vector weights;

  Index points() const { return weights.size(); }
  double spacing() const { return (hi - lo) / static_cast<double>(weights.size() - 1); }
  double point(Index k) const { return lo + spacing() * static_cast<double>(k); }
  double mean() const;
  double variance() const;
};

// Gaussian density sampled at grid nodes and normalized.
GridDensity grid_from_gaussian(double lo, double hi, Index points, double mean, double variance);

// Information-form analysis; all inverses are Cholesky solves.
MeanCov kf_analysis(const MeanCov& prior, const Vector& y, const LinearGaussianModel& model);
MeanCov kf_propagate(const MeanCov& post, const LinearGaussianModel& model);

// Unbiased sample mean and covariance (X u, X U X^T).
MeanCov enkf_moments(const Ensemble& ens);

struct EnkfDiagnostics {
  double innovation_condition = 1.0;
  bool ill_conditioned = false;  // condition number above 1e12
};

// Stochastic EnKF analysis with perturbed observations. Anomalies are
// scaled by inflation before the update.
Ensemble enkf_analysis(const Ensemble& prior, const Vector& y, const LinearGaussianModel& model, Rng& rng,
                       double inflation = 1.0, EnkfDiagnostics* diagnostics = nullptr);

using StateMap = std::function<Vector(const Vector& x, Index member)>;

// Propagates each member and adds an independent N(0, Q) draw.
Ensemble enkf_propagate(const Ensemble& post, const StateMap& propagate, const Matrix& Q, Rng& rng);

using Likelihood = std::function<double(double y, double x)>;
using Kernel = std::function<double(double to, double from)>;

GridDensity grid_analysis(const GridDensity& prior, double y, const Likelihood& likelihood);

struct GridPropagationReport {
  double retained_mass = 1.0;  // mass before renormalization
  bool truncated = false;      // retained_mass below 0.99
};

// Dense transition matrix T(j, k) = kernel(x_j, x_k) * spacing.
Matrix transition_matrix(const GridDensity& grid, const Kernel& kernel);

GridDensity grid_propagate(const GridDensity& post, const Kernel& kernel,
                           GridPropagationReport* report = nullptr);
GridDensity grid_propagate(const GridDensity& post, const Matrix& transition,
                           GridPropagationReport* report = nullptr);

}  // namespace danlab::filters
