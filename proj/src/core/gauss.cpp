#include "danlab/gauss.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "danlab/error.hpp"

namespace danlab::gauss {

void MeanCov::validate() const {
  const Index n = mean.size();
  if (cov.rows() != n || cov.cols() != n) {
    throw ShapeError("covariance shape " + shape_str(cov.rows(), cov.cols()) +
                     " does not match mean length " + std::to_string(n));
  }
  if (!mean.allFinite() || !cov.allFinite()) throw NumericalError("invalid density: non-finite moments");
  const double scale = std::max(1.0, cov.cwiseAbs().maxCoeff());
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw NumericalError("invalid density: covariance is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov, Eigen::EigenvaluesOnly);
  if (n > 0 && eig.eigenvalues().minCoeff() < -1e-10 * scale) {
    throw NumericalError("invalid density: covariance is not positive semi-definite");
  }
}

void CholGaussian::validate() const {
  const Index n = mean.size();
  if (scale.rows() != n || scale.cols() != n) {
    throw ShapeError("scale shape " + shape_str(scale.rows(), scale.cols()) +
                     " does not match mean length " + std::to_string(n));
  }
  if (!mean.allFinite() || !scale.allFinite()) throw NumericalError("invalid density: non-finite parameters");
  for (Index i = 0; i < n; ++i) {
    if (!(scale(i, i) > 0.0)) {
      throw NumericalError("invalid density: non-positive diagonal entry " + std::to_string(i) +
                           " in scale factor");
    }
    for (Index j = i + 1; j < n; ++j) {
      if (scale(i, j) != 0.0) throw NumericalError("invalid density: scale factor is not lower triangular");
    }
  }
}

Index dim_from_packed_size(Index length) {
  const auto n = static_cast<Index>(std::llround((-3.0 + std::sqrt(9.0 + 8.0 * static_cast<double>(length))) / 2.0));
  if (n < 1 || packed_size(n) != length) {
    throw ShapeError("packing vector length " + std::to_string(length) +
                     " is not of the form n + n(n+1)/2");
  }
  return n;
}

CholGaussian vector_to_gaussian(const Eigen::Ref<const Vector>& v) {
  const Index n = dim_from_packed_size(v.size());
  CholGaussian g;
  g.mean = v.head(n);
  g.scale = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    g.scale(i, i) = std::exp(std::clamp(v[n + i], -kLogScaleClamp, kLogScaleClamp));
  }
  for (Index col = 0; col < n; ++col) {
    for (Index row = col + 1; row < n; ++row) g.scale(row, col) = v[offdiag_index(n, row, col)];
  }
  return g;
}

double log_density(const CholGaussian& g, const Eigen::Ref<const Vector>& x) {
  const Index n = g.dim();
  if (x.size() != n) {
    throw ShapeError("log_density: point has length " + std::to_string(x.size()) + ", density has " +
                     std::to_string(n));
  }
  double log_det = 0.0;
  for (Index i = 0; i < n; ++i) {
    if (!(g.scale(i, i) > 0.0)) {
      throw NumericalError("invalid density: non-positive diagonal entry " + std::to_string(i));
    }
    log_det += std::log(g.scale(i, i));
  }
  const Vector z = g.scale.triangularView<Eigen::Lower>().solve(x - g.mean);
  return -0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi) - log_det - 0.5 * z.squaredNorm();
}

Matrix standard_normal(Index rows, Index count, Rng& rng) {
  std::normal_distribution<double> normal;
  Matrix z(rows, count);
  for (Index c = 0; c < count; ++c) {
    for (Index r = 0; r < rows; ++r) z(r, c) = normal(rng);
  }
  return z;
}

Matrix sample(const CholGaussian& g, Rng& rng, Index count) {
  g.validate();
  Matrix out = g.scale.triangularView<Eigen::Lower>() * standard_normal(g.dim(), count, rng);
  out.colwise() += g.mean;
  return out;
}

Matrix sample(const MeanCov& g, Rng& rng, Index count) {
  g.validate();
  const Index n = g.dim();
  Matrix factor;
  Eigen::LLT<Matrix> llt(g.cov);
  if (llt.info() == Eigen::Success) {
    factor = llt.matrixL();
  } else {
    // Singular but PSD (validated above): symmetric square root.
    Eigen::SelfAdjointEigenSolver<Matrix> eig(g.cov);
    if (eig.info() != Eigen::Success) throw NumericalError("invalid density: covariance factorization failed");
    factor = eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
  }
  Matrix out = factor * standard_normal(n, count, rng);
  out.colwise() += g.mean;
  return out;
}

}  // namespace danlab::gauss
