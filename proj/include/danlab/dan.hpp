#pragma once

#include <cstdint>
#include <vector>

#include "danlab/gauss.hpp"
#include "danlab/grad.hpp"
#include "danlab/types.hpp"

namespace danlab::dan {

struct DanConfig {
  std::int64_t m = 800;  // memory dimension
  std::int64_t n = 40;
  std::int64_t d = 40;
  std::int64_t depth = 20;  // residual blocks per network
  double slope = 0.01;      // leaky_relu negative slope

  void validate() const;
  bool operator==(const DanConfig&) const = default;
};

// Flat parameter vector theta with named column-major slices:
//   analyzer.block<k>.{weight,bias,gate}   on R^{m+d}, k < depth
//   analyzer.out.{weight,bias}             R^{m+d} -> R^m
//   propagater.block<k>.{weight,bias,gate} on R^m
//   propagater.out.{weight,bias}           R^m -> R^m
//   procoder.{weight,bias}                 R^m -> R^{n + n(n+1)/2}
class DanParams {
 public:
  explicit DanParams(const DanConfig& cfg);

  const DanConfig& config() const { return cfg_; }
  const grad::ParamLayout& layout() const { return layout_; }
  Vector& theta() { return theta_; }
  const Vector& theta() const { return theta_; }
  Index size() const { return theta_.size(); }

  Eigen::Map<Matrix> view(const std::string& name);
  Eigen::Map<const Matrix> view(const std::string& name) const;

 private:
  DanConfig cfg_;
  grad::ParamLayout layout_;
  Vector theta_;
};

// Gates are zero; weights and biases are uniform in +-1/sqrt(fan_in).
DanParams init_params(const DanConfig& cfg, std::uint64_t seed);

// Binds a parameter set to a tape and builds the three networks on it.
// Parameter leaves are created once per graph.
class DanGraph {
 public:
  DanGraph(const DanParams& params, grad::Tape& tape);

  grad::NodeId rezero_block(grad::NodeId x, const std::string& prefix);
  grad::NodeId analyzer(grad::NodeId memory, grad::NodeId observation);
  grad::NodeId propagater(grad::NodeId memory);
  // Packing vectors, one column per trajectory.
  grad::NodeId procoder(grad::NodeId memory);

  struct Cycle {
    grad::NodeId prior_memory;
    grad::NodeId prior_packed;
    grad::NodeId post_memory;
    grad::NodeId post_packed;
  };
  // h_b = b(h_prev); q_b = c(h_b); h_a = a(h_b, y); q_a = c(h_a).
  Cycle cycle(grad::NodeId previous_memory, grad::NodeId observation);

  grad::Tape& tape() { return tape_; }

 private:
  grad::NodeId param(const std::string& name);
  grad::NodeId residual_stack(grad::NodeId x, const std::string& network);

  const DanParams& params_;
  grad::Tape& tape_;
  std::vector<std::pair<std::string, grad::NodeId>> leaves_;
};

// Plain-matrix entry points (columns are trajectories).
Matrix rezero_block(const Matrix& x, const Matrix& weight, const Vector& bias, double gate, double slope);
Matrix analyzer_apply(const DanParams& params, const Matrix& prior_memory, const Matrix& observation);
Matrix propagater_apply(const DanParams& params, const Matrix& post_memory);
std::vector<gauss::CholGaussian> procoder_apply(const DanParams& params, const Matrix& memory);

struct CycleResult {
  Matrix prior_memory;
  std::vector<gauss::CholGaussian> prior;
  Matrix post_memory;
  std::vector<gauss::CholGaussian> posterior;
};
CycleResult dan_cycle(const DanParams& params, const Matrix& previous_memory, const Matrix& observation);

// Unpacks each column of a packing matrix.
std::vector<gauss::CholGaussian> unpack_columns(const Eigen::Ref<const Matrix>& packed);

}  // namespace danlab::dan
