#include "danlab/filters.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "danlab/error.hpp"

namespace danlab::filters {

namespace {

void check_rows(Index got, Index want, const char* what) {
  if (got != want) {
    throw ShapeError(std::string(what) + ": expected dimension " + std::to_string(want) + ", got " +
                     std::to_string(got));
  }
}

Matrix symmetrized(const Matrix& a) { return 0.5 * (a + a.transpose()); }

}  // namespace

void LinearGaussianModel::validate() const {
  const Index n = M.rows();
  if (M.cols() != n) throw ShapeError("M must be square, got " + shape_str(M.rows(), M.cols()));
  if (offset.size() != 0) check_rows(offset.size(), n, "propagation offset");
  if (H.cols() != n) throw ShapeError("H has " + std::to_string(H.cols()) + " columns, state dimension is " + std::to_string(n));
  if (Q.rows() != n || Q.cols() != n) throw ShapeError("Q shape " + shape_str(Q.rows(), Q.cols()));
  if (R.rows() != H.rows() || R.cols() != H.rows()) throw ShapeError("R shape " + shape_str(R.rows(), R.cols()));
  if (Eigen::LLT<Matrix>(R).info() != Eigen::Success) throw NumericalError("observation covariance R is not invertible");
}

double GridDensity::mean() const {
  double mu = 0.0;
  for (Index k = 0; k < points(); ++k) mu += weights[k] * point(k);
  return mu;
}

double GridDensity::variance() const {
  const double mu = mean();
  double var = 0.0;
  for (Index k = 0; k < points(); ++k) var += weights[k] * (point(k) - mu) * (point(k) - mu);
  return var;
}

GridDensity grid_from_gaussian(double lo, double hi, Index points, double mean, double variance) {
  if (points < 2 || !(hi > lo)) throw ConfigError("grid needs at least two points and hi > lo");
  GridDensity g{lo, hi, Vector(points)};
  for (Index k = 0; k < points; ++k) {
    const double e = g.point(k) - mean;
    g.weights[k] = std::exp(-0.5 * e * e / variance);
  }
  g.weights /= g.weights.sum();
  return g;
}

MeanCov kf_analysis(const MeanCov& prior, const Vector& y, const LinearGaussianModel& model) {
  const Index n = model.n();
  check_rows(prior.dim(), n, "kf_analysis prior");
  check_rows(y.size(), model.d(), "kf_analysis observation");
  Eigen::LLT<Matrix> prior_llt(prior.cov);
  if (prior_llt.info() != Eigen::Success) throw NumericalError("kf_analysis: singular prior covariance");
  Eigen::LLT<Matrix> r_llt(model.R);
  if (r_llt.info() != Eigen::Success) throw NumericalError("kf_analysis: observation covariance R is not invertible");

  const Matrix rinv_h = r_llt.solve(model.H);
  const Matrix information = model.H.transpose() * rinv_h + prior_llt.solve(Matrix::Identity(n, n));
  Eigen::LLT<Matrix> info_llt(information);
  if (info_llt.info() != Eigen::Success) throw NumericalError("kf_analysis: posterior information is not positive definite");

  MeanCov post;
  post.cov = symmetrized(info_llt.solve(Matrix::Identity(n, n)));
  const Vector innovation = y - model.H * prior.mean;
  post.mean = prior.mean + post.cov * (rinv_h.transpose() * innovation);
  return post;
}

MeanCov kf_propagate(const MeanCov& post, const LinearGaussianModel& model) {
  check_rows(post.dim(), model.n(), "kf_propagate posterior");
  MeanCov prior;
  prior.mean = model.M * post.mean;
  if (model.offset.size() != 0) prior.mean += model.offset;
  prior.cov = symmetrized(model.M * post.cov * model.M.transpose() + model.Q);
  return prior;
}

MeanCov enkf_moments(const Ensemble& ens) {
  const Index m = ens.size();
  if (m < 2) throw ConfigError("ensemble moments need at least 2 members, got " + std::to_string(m));
  MeanCov out;
  out.mean = ens.members.rowwise().mean();
  const Matrix anomalies = ens.members.colwise() - out.mean;
  out.cov = anomalies * anomalies.transpose() / static_cast<double>(m - 1);
  return out;
}

Ensemble enkf_analysis(const Ensemble& prior, const Vector& y, const LinearGaussianModel& model, Rng& rng,
                       double inflation, EnkfDiagnostics* diagnostics) {
  const Index m = prior.size();
  if (m < 2) throw ConfigError("EnKF analysis needs at least 2 members, got " + std::to_string(m));
  check_rows(prior.n(), model.n(), "enkf_analysis ensemble");
  check_rows(y.size(), model.d(), "enkf_analysis observation");

  const Vector mean = prior.members.rowwise().mean();
  Matrix anomalies = prior.members.colwise() - mean;
  anomalies *= inflation;
  Matrix xb = anomalies.colwise() + mean;

  const Matrix yb = model.H * xb;
  const Matrix y_anomalies = yb.colwise() - yb.rowwise().mean();
  const double scale = 1.0 / static_cast<double>(m - 1);
  const Matrix innovation_cov = scale * y_anomalies * y_anomalies.transpose() + model.R;

  if (diagnostics != nullptr) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(innovation_cov, Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues().minCoeff();
    diagnostics->innovation_condition =
        lo > 0.0 ? eig.eigenvalues().maxCoeff() / lo : std::numeric_limits<double>::infinity();
    diagnostics->ill_conditioned = diagnostics->innovation_condition > 1e12;
  }
  Eigen::LLT<Matrix> llt(innovation_cov);
  if (llt.info() != Eigen::Success) throw NumericalError("enkf_analysis: innovation covariance is singular");

  // K = Xb U Yb^T (Yb U Yb^T + R)^{-1}, formed through its transpose.
  const Matrix gain_t = llt.solve(scale * y_anomalies * anomalies.transpose());

  Matrix perturbed = gauss::sample(MeanCov{y, model.R}, rng, m);
  xb.noalias() += gain_t.transpose() * (perturbed - yb);
  return Ensemble{std::move(xb)};
}

Ensemble enkf_propagate(const Ensemble& post, const StateMap& propagate, const Matrix& Q, Rng& rng) {
  const Index m = post.size();
  if (m < 2) throw ConfigError("EnKF propagation needs at least 2 members, got " + std::to_string(m));
  Ensemble out{Matrix(post.n(), m)};
  for (Index j = 0; j < m; ++j) out.members.col(j) = propagate(post.members.col(j), j);
  out.members += gauss::sample(MeanCov{Vector::Zero(post.n()), Q}, rng, m);
  if (!out.members.allFinite()) throw NumericalError("enkf_propagate: ensemble diverged");
  return out;
}

GridDensity grid_analysis(const GridDensity& prior, double y, const Likelihood& likelihood) {
  GridDensity post = prior;
  for (Index k = 0; k < post.points(); ++k) {
    const double l = likelihood(y, post.point(k));
    if (!(l >= 0.0)) throw NumericalError("grid_analysis: likelihood must be non-negative");
    post.weights[k] *= l;
  }
  const double total = post.weights.sum();
  if (!(total > 0.0)) throw NumericalError("grid_analysis: degenerate likelihood, posterior has zero mass");
  post.weights /= total;
  return post;
}

Matrix transition_matrix(const GridDensity& grid, const Kernel& kernel) {
  const Index k_points = grid.points();
  const double h = grid.spacing();
  Matrix t(k_points, k_points);
  for (Index k = 0; k < k_points; ++k) {
    const double from = grid.point(k);
    for (Index j = 0; j < k_points; ++j) t(j, k) = kernel(grid.point(j), from) * h;
  }
  return t;
}

GridDensity grid_propagate(const GridDensity& post, const Matrix& transition, GridPropagationReport* report) {
  if (transition.rows() != post.points() || transition.cols() != post.points()) {
    throw ShapeError("grid_propagate: transition matrix " + shape_str(transition.rows(), transition.cols()) +
                     " does not match " + std::to_string(post.points()) + " grid points");
  }
  GridDensity out = post;
  out.weights.noalias() = transition * post.weights;
  const double total = out.weights.sum();
  if (!(total > 0.0)) throw NumericalError("grid_propagate: all mass left the support");
  out.weights /= total;
  if (report != nullptr) {
    report->retained_mass = total;
    report->truncated = total < 0.99;
  }
  return out;
}

GridDensity grid_propagate(const GridDensity& post, const Kernel& kernel, GridPropagationReport* report) {
  return grid_propagate(post, transition_matrix(post, kernel), report);
}

}  // namespace danlab::filters
