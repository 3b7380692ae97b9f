#pragma once

#include <cstdint>

#include "danlab/types.hpp"

namespace danlab::gauss {

// Moment pair (mean, covariance).
struct MeanCov {
  Vector mean;
  Matrix cov;

  Index dim() const { return mean.size(); }
  // Throws NumericalError unless cov is square, symmetric within 1e-12 and PSD
  // (smallest eigenvalue >= -1e-10 relative to the largest magnitude).
  void validate() const;
};

// N(mean, scale * scale^T) with scale lower triangular, positive diagonal.
struct CholGaussian {
  Vector mean;
  Matrix scale;

  Index dim() const { return mean.size(); }
  Matrix covariance() const { return scale * scale.transpose(); }
  void validate() const;
};

// Exponents of the packed diagonal are clamped to this range.
inline constexpr double kLogScaleClamp = 30.0;

// Length of the packing vector for an n-dimensional Gaussian: n + n(n+1)/2.
constexpr Index packed_size(Index n) { return n + n * (n + 1) / 2; }

// Inverse of packed_size; throws ShapeError if length is not of that form.
Index dim_from_packed_size(Index length);

// Position in the packing vector of the strict-lower entry (row, col),
// row > col. Sub-diagonals are stored one after another starting with the
// first sub-diagonal at offset 2n; the bottom-left corner comes last.
constexpr Index offdiag_index(Index n, Index row, Index col) {
  const Index k = row - col;
  return 2 * n + (k - 1) * n - (k - 1) * k / 2 + col;
}

// Unpacks v = (mean, log-diagonal, strict lower triangle) into a Gaussian.
CholGaussian vector_to_gaussian(const Eigen::Ref<const Vector>& v);

// ln N(x; mean, scale scale^T) via forward substitution.
double log_density(const CholGaussian& g, const Eigen::Ref<const Vector>& x);

// count draws as the columns of a dim x count matrix.
Matrix sample(const CholGaussian& g, Rng& rng, Index count);
Matrix sample(const MeanCov& g, Rng& rng, Index count);

// count columns of standard normal draws.
Matrix standard_normal(Index rows, Index count, Rng& rng);

}  // namespace danlab::gauss
