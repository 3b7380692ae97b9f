#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "danlab/types.hpp"

namespace danlab::grad {

// A named matrix block inside the flat parameter vector (column-major).
struct Slice {
  std::string name;
  Index offset = 0;
  Index rows = 0;
  Index cols = 0;

  Index size() const { return rows * cols; }
};

class ParamLayout {
 public:
  const Slice& add(std::string name, Index rows, Index cols);
  Index size() const { return size_; }
  const std::vector<Slice>& slices() const { return slices_; }
  // Throws ConfigError for unknown names.
  const Slice& find(const std::string& name) const;

 private:
  std::vector<Slice> slices_;
  Index size_ = 0;
};

// Gradient of a scalar with respect to the flat parameter vector.
struct GradVector {
  Vector values;

  Eigen::Map<const Matrix> view(const Slice& s) const { return {values.data() + s.offset, s.rows, s.cols}; }
};

struct NodeId {
  std::int32_t index = -1;
  bool valid() const { return index >= 0; }
};

enum class Op : std::uint8_t {
  kParameter,
  kConstant,
  kAffine,
  kLeakyRelu,
  kExp,
  kConcat,
  kResidualScaleAdd,
  kGaussianNll,
  kAdd,
  kScale,
};

// Append-only record of primitive applications over column-batched values
// (rows are features, columns are trajectories). Parameter leaves are
// views into an external parameter vector; gradients flow only to them.
// A tape is used by one thread and discarded after backward.
class Tape {
 public:
  explicit Tape(std::span<const double> params = {});

  NodeId parameter(const Slice& slice);
  // A leaf that receives no gradient (data, or detached memory).
  NodeId constant(Matrix value);

  NodeId affine(NodeId weight, NodeId bias, NodeId x);
  NodeId leaky_relu(NodeId x, double slope);
  NodeId exp(NodeId x);
  // Stacks x over y (row-wise concatenation).
  NodeId concat(NodeId x, NodeId y);
  // x + gate * y with gate a 1x1 node.
  NodeId residual_scale_add(NodeId x, NodeId gate, NodeId y);
  // Sum over columns of -ln N(x_j; vector_to_gaussian(v_j)); 1x1 result.
  NodeId gaussian_nll(NodeId packed, NodeId x);
  NodeId add(NodeId a, NodeId b);
  NodeId scale(NodeId a, double factor);

  Eigen::Map<const Matrix> value(NodeId id) const;
  double scalar(NodeId id) const;

  // Reverse accumulation from a 1x1 node; parameter gradients are added
  // into grad (which must have the parameter vector's length).
  void backward(NodeId loss, std::span<double> grad) const;
  GradVector backward(NodeId loss) const;

  std::size_t node_count() const { return nodes_.size(); }
  // Bytes held by node values owned by the tape (parameters excluded).
  std::size_t activation_bytes() const { return activation_bytes_; }

  // When enabled, leaky_relu records the sign pattern of its inputs so that
  // callers can detect evaluations that straddle a kink.
  void set_track_kinks(bool on) { track_kinks_ = on; }
  const std::vector<bool>& kink_pattern() const { return kink_pattern_; }

  // Replays every non-leaf node forward from the stored leaves and checks
  // bit-exact agreement with the recorded values.
  bool replay_matches() const;

 private:
  struct Node {
    Op op;
    std::int32_t in0 = -1;
    std::int32_t in1 = -1;
    std::int32_t in2 = -1;
    bool requires_grad = false;
    double scalar = 0.0;  // slope or scale factor
    Index rows = 0;
    Index cols = 0;
    Index param_offset = -1;
    Matrix value;
  };

  NodeId push(Node node);
  const Node& node(NodeId id) const;
  Matrix evaluate(const Node& n) const;

  std::span<const double> params_;
  std::vector<Node> nodes_;
  std::size_t activation_bytes_ = 0;
  bool track_kinks_ = false;
  std::vector<bool> kink_pattern_;
};

// Forward value and analytic gradient of the summed Gaussian NLL for one
// column, used by the tape and exposed for tests.
double gaussian_nll_column(const Eigen::Ref<const Vector>& packed, const Eigen::Ref<const Vector>& x,
                           Vector* grad_packed = nullptr, Vector* grad_x = nullptr);

struct FiniteDiffResult {
  double max_rel_error = 0.0;
  Index worst_coordinate = -1;
  Index checked = 0;
};

using Objective = std::function<double(const Vector& theta)>;

// Central differences f(theta +- h e_k) compared with grad[k] over the
// given coordinates. Relative error is |fd - ad| / max(|fd|, |ad|, floor).
FiniteDiffResult finite_diff_check(const Objective& f, const Vector& theta, const Vector& grad, double h,
                                   std::span<const Index> coordinates, double floor = 1e-8);

// Draws up to count distinct coordinates in [0, size) accepted by
// admissible (used to skip coordinates whose perturbation crosses a
// leaky_relu kink).
std::vector<Index> sample_coordinates(Index size, Index count, Rng& rng,
                                      const std::function<bool(Index)>& admissible = {});

}  // namespace danlab::grad
