#include "danlab/grad.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>
#include <string>
#include <unordered_set>

#include "danlab/error.hpp"
#include "danlab/gauss.hpp"

namespace danlab::grad {

const Slice& ParamLayout::add(std::string name, Index rows, Index cols) {
  slices_.push_back(Slice{std::move(name), size_, rows, cols});
  size_ += rows * cols;
  return slices_.back();
}

const Slice& ParamLayout::find(const std::string& name) const {
  for (const auto& s : slices_) {
    if (s.name == name) return s;
  }
  throw ConfigError("unknown parameter slice '" + name + "'");
}

double gaussian_nll_column(const Eigen::Ref<const Vector>& packed, const Eigen::Ref<const Vector>& x,
                           Vector* grad_packed, Vector* grad_x) {
  const Index n = x.size();
  if (packed.size() != gauss::packed_size(n)) {
    throw ShapeError("gaussian_nll: packed vector of length " + std::to_string(packed.size()) +
                     " does not describe a " + std::to_string(n) + "-dimensional Gaussian");
  }
  Matrix scale = Matrix::Zero(n, n);
  double log_det = 0.0;
  for (Index i = 0; i < n; ++i) {
    const double s = std::clamp(packed[n + i], -gauss::kLogScaleClamp, gauss::kLogScaleClamp);
    scale(i, i) = std::exp(s);
    log_det += s;
  }
  for (Index col = 0; col < n; ++col) {
    for (Index row = col + 1; row < n; ++row) scale(row, col) = packed[gauss::offdiag_index(n, row, col)];
  }
  const auto lower = scale.triangularView<Eigen::Lower>();
  const Vector z = lower.solve(x - packed.head(n));
  const double nll = 0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi) + log_det + 0.5 * z.squaredNorm();
  if (grad_packed == nullptr && grad_x == nullptr) return nll;

  const Vector w = scale.transpose().triangularView<Eigen::Upper>().solve(z);
  if (grad_x != nullptr) *grad_x = w;
  if (grad_packed != nullptr) {
    Vector& g = *grad_packed;
    g.resize(packed.size());
    g.head(n) = -w;
    for (Index i = 0; i < n; ++i) {
      const double s = packed[n + i];
      const bool clamped = s <= -gauss::kLogScaleClamp || s >= gauss::kLogScaleClamp;
      g[n + i] = clamped ? 0.0 : 1.0 - w[i] * z[i] * scale(i, i);
    }
    for (Index col = 0; col < n; ++col) {
      for (Index row = col + 1; row < n; ++row) g[gauss::offdiag_index(n, row, col)] = -w[row] * z[col];
    }
  }
  return nll;
}

Tape::Tape(std::span<const double> params) : params_(params) {}

const Tape::Node& Tape::node(NodeId id) const {
  if (id.index < 0 || static_cast<std::size_t>(id.index) >= nodes_.size()) {
    throw ShapeError("invalid tape node id " + std::to_string(id.index));
  }
  return nodes_[static_cast<std::size_t>(id.index)];
}

Eigen::Map<const Matrix> Tape::value(NodeId id) const {
  const Node& n = node(id);
  if (n.op == Op::kParameter) return {params_.data() + n.param_offset, n.rows, n.cols};
  return {n.value.data(), n.rows, n.cols};
}

double Tape::scalar(NodeId id) const {
  const auto v = value(id);
  if (v.rows() != 1 || v.cols() != 1) throw ShapeError("expected a scalar node, got " + shape_str(v.rows(), v.cols()));
  return v(0, 0);
}

NodeId Tape::push(Node n) {
  n.rows = n.value.rows();
  n.cols = n.value.cols();
  activation_bytes_ += static_cast<std::size_t>(n.value.size()) * sizeof(double);
  nodes_.push_back(std::move(n));
  return NodeId{static_cast<std::int32_t>(nodes_.size() - 1)};
}

NodeId Tape::parameter(const Slice& slice) {
  if (slice.offset + slice.size() > static_cast<Index>(params_.size())) {
    throw ShapeError("parameter slice '" + slice.name + "' exceeds the parameter vector");
  }
  Node n{Op::kParameter};
  n.requires_grad = true;
  n.rows = slice.rows;
  n.cols = slice.cols;
  n.param_offset = slice.offset;
  nodes_.push_back(std::move(n));
  return NodeId{static_cast<std::int32_t>(nodes_.size() - 1)};
}

NodeId Tape::constant(Matrix value) {
  Node n{Op::kConstant};
  n.value = std::move(value);
  return push(std::move(n));
}

Matrix Tape::evaluate(const Node& n) const {
  switch (n.op) {
    case Op::kParameter:
    case Op::kConstant:
      return value(NodeId{static_cast<std::int32_t>(&n - nodes_.data())});
    case Op::kAffine: {
      const auto w = value(NodeId{n.in0});
      const auto b = value(NodeId{n.in1});
      const auto x = value(NodeId{n.in2});
      Matrix y(w.rows(), x.cols());
      y.noalias() = w * x;
      y.colwise() += b.col(0);
      return y;
    }
    case Op::kLeakyRelu: {
      const auto x = value(NodeId{n.in0});
      return (x.array() >= 0.0).select(x.array(), n.scalar * x.array()).matrix();
    }
    case Op::kExp:
      return value(NodeId{n.in0}).array().exp().matrix();
    case Op::kConcat: {
      const auto x = value(NodeId{n.in0});
      const auto y = value(NodeId{n.in1});
      Matrix out(x.rows() + y.rows(), x.cols());
      out.topRows(x.rows()) = x;
      out.bottomRows(y.rows()) = y;
      return out;
    }
    case Op::kResidualScaleAdd: {
      const double gate = value(NodeId{n.in1})(0, 0);
      return value(NodeId{n.in0}) + gate * value(NodeId{n.in2});
    }
    case Op::kGaussianNll: {
      const auto v = value(NodeId{n.in0});
      const auto x = value(NodeId{n.in1});
      double total = 0.0;
      for (Index j = 0; j < x.cols(); ++j) total += gaussian_nll_column(v.col(j), x.col(j));
      return Matrix::Constant(1, 1, total);
    }
    case Op::kAdd:
      return value(NodeId{n.in0}) + value(NodeId{n.in1});
    case Op::kScale:
      return n.scalar * value(NodeId{n.in0});
  }
  throw Error(ErrorCode::kInternal, "unknown tape op");
}

NodeId Tape::affine(NodeId weight, NodeId bias, NodeId x) {
  const auto w = value(weight);
  const auto b = value(bias);
  const auto xv = value(x);
  if (w.cols() != xv.rows() || b.rows() != w.rows() || b.cols() != 1) {
    throw ShapeError("affine: weight " + shape_str(w.rows(), w.cols()) + ", bias " + shape_str(b.rows(), b.cols()) +
                     ", input " + shape_str(xv.rows(), xv.cols()));
  }
  Node n{Op::kAffine, weight.index, bias.index, x.index};
  n.requires_grad = node(weight).requires_grad || node(bias).requires_grad || node(x).requires_grad;
  n.value = evaluate(n);
  return push(std::move(n));
}

NodeId Tape::leaky_relu(NodeId x, double slope) {
  Node n{Op::kLeakyRelu, x.index};
  n.scalar = slope;
  n.requires_grad = node(x).requires_grad;
  n.value = evaluate(n);
  if (track_kinks_) {
    const auto xv = value(x);
    for (Index k = 0; k < xv.size(); ++k) kink_pattern_.push_back(xv.data()[k] >= 0.0);
  }
  return push(std::move(n));
}

NodeId Tape::exp(NodeId x) {
  Node n{Op::kExp, x.index};
  n.requires_grad = node(x).requires_grad;
  n.value = evaluate(n);
  return push(std::move(n));
}

NodeId Tape::concat(NodeId x, NodeId y) {
  const auto xv = value(x);
  const auto yv = value(y);
  if (xv.cols() != yv.cols()) {
    throw ShapeError("concat: " + shape_str(xv.rows(), xv.cols()) + " and " + shape_str(yv.rows(), yv.cols()));
  }
  Node n{Op::kConcat, x.index, y.index};
  n.requires_grad = node(x).requires_grad || node(y).requires_grad;
  n.value = evaluate(n);
  return push(std::move(n));
}

NodeId Tape::residual_scale_add(NodeId x, NodeId gate, NodeId y) {
  const auto xv = value(x);
  const auto gv = value(gate);
  const auto yv = value(y);
  if (xv.rows() != yv.rows() || xv.cols() != yv.cols() || gv.size() != 1) {
    throw ShapeError("residual_scale_add: x " + shape_str(xv.rows(), xv.cols()) + ", gate " +
                     shape_str(gv.rows(), gv.cols()) + ", y " + shape_str(yv.rows(), yv.cols()));
  }
  Node n{Op::kResidualScaleAdd, x.index, gate.index, y.index};
  n.requires_grad = node(x).requires_grad || node(gate).requires_grad || node(y).requires_grad;
  n.value = evaluate(n);
  return push(std::move(n));
}

NodeId Tape::gaussian_nll(NodeId packed, NodeId x) {
  const auto v = value(packed);
  const auto xv = value(x);
  if (v.cols() != xv.cols() || v.rows() != gauss::packed_size(xv.rows())) {
    throw ShapeError("gaussian_nll: packed " + shape_str(v.rows(), v.cols()) + ", points " +
                     shape_str(xv.rows(), xv.cols()));
  }
  Node n{Op::kGaussianNll, packed.index, x.index};
  n.requires_grad = node(packed).requires_grad || node(x).requires_grad;
  n.value = evaluate(n);
  return push(std::move(n));
}

NodeId Tape::add(NodeId a, NodeId b) {
  const auto av = value(a);
  const auto bv = value(b);
  if (av.rows() != bv.rows() || av.cols() != bv.cols()) {
    throw ShapeError("add: " + shape_str(av.rows(), av.cols()) + " and " + shape_str(bv.rows(), bv.cols()));
  }
  Node n{Op::kAdd, a.index, b.index};
  n.requires_grad = node(a).requires_grad || node(b).requires_grad;
  n.value = evaluate(n);
  return push(std::move(n));
}

NodeId Tape::scale(NodeId a, double factor) {
  Node n{Op::kScale, a.index};
  n.scalar = factor;
  n.requires_grad = node(a).requires_grad;
  n.value = evaluate(n);
  return push(std::move(n));
}

void Tape::backward(NodeId loss, std::span<double> grad) const {
  const Node& root = node(loss);
  if (root.rows != 1 || root.cols != 1) {
    throw ShapeError("backward requires a scalar loss node, got " + shape_str(root.rows, root.cols));
  }
  if (grad.size() != params_.size()) {
    throw ShapeError("gradient buffer has length " + std::to_string(grad.size()) + ", parameters have " +
                     std::to_string(params_.size()));
  }
  if (!root.requires_grad) return;

  std::vector<Matrix> adjoints(nodes_.size());
  auto accumulator = [&](std::int32_t id) -> Eigen::Map<Matrix> {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.op == Op::kParameter) return {grad.data() + n.param_offset, n.rows, n.cols};
    Matrix& a = adjoints[static_cast<std::size_t>(id)];
    if (a.size() == 0) a = Matrix::Zero(n.rows, n.cols);
    return {a.data(), n.rows, n.cols};
  };
  auto wants = [&](std::int32_t id) { return nodes_[static_cast<std::size_t>(id)].requires_grad; };

  adjoints[static_cast<std::size_t>(loss.index)] = Matrix::Ones(1, 1);
  for (std::int32_t id = loss.index; id >= 0; --id) {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    Matrix& out_adj = adjoints[static_cast<std::size_t>(id)];
    if (!n.requires_grad || n.op == Op::kParameter || out_adj.size() == 0) continue;
    const Matrix& dy = out_adj;

    switch (n.op) {
      case Op::kParameter:
      case Op::kConstant:
        break;
      case Op::kAffine: {
        if (wants(n.in0)) accumulator(n.in0).noalias() += dy * value(NodeId{n.in2}).transpose();
        if (wants(n.in1)) accumulator(n.in1).col(0) += dy.rowwise().sum();
        if (wants(n.in2)) accumulator(n.in2).noalias() += value(NodeId{n.in0}).transpose() * dy;
        break;
      }
      case Op::kLeakyRelu: {
        const auto x = value(NodeId{n.in0});
        accumulator(n.in0).array() += (x.array() >= 0.0).select(dy.array(), n.scalar * dy.array());
        break;
      }
      case Op::kExp:
        accumulator(n.in0).array() += dy.array() * n.value.array();
        break;
      case Op::kConcat: {
        const Index top = nodes_[static_cast<std::size_t>(n.in0)].rows;
        if (wants(n.in0)) accumulator(n.in0) += dy.topRows(top);
        if (wants(n.in1)) accumulator(n.in1) += dy.bottomRows(dy.rows() - top);
        break;
      }
      case Op::kResidualScaleAdd: {
        const double gate = value(NodeId{n.in1})(0, 0);
        if (wants(n.in0)) accumulator(n.in0) += dy;
        if (wants(n.in1)) accumulator(n.in1)(0, 0) += (dy.array() * value(NodeId{n.in2}).array()).sum();
        if (wants(n.in2)) accumulator(n.in2) += gate * dy;
        break;
      }
      case Op::kGaussianNll: {
        const double upstream = dy(0, 0);
        const auto v = value(NodeId{n.in0});
        const auto x = value(NodeId{n.in1});
        const bool want_v = wants(n.in0);
        const bool want_x = wants(n.in1);
        Vector gv;
        Vector gx;
        for (Index j = 0; j < x.cols(); ++j) {
          gaussian_nll_column(v.col(j), x.col(j), want_v ? &gv : nullptr, want_x ? &gx : nullptr);
          if (want_v) accumulator(n.in0).col(j) += upstream * gv;
          if (want_x) accumulator(n.in1).col(j) += upstream * gx;
        }
        break;
      }
      case Op::kAdd:
        if (wants(n.in0)) accumulator(n.in0) += dy;
        if (wants(n.in1)) accumulator(n.in1) += dy;
        break;
      case Op::kScale:
        accumulator(n.in0) += n.scalar * dy;
        break;
    }
    out_adj.resize(0, 0);
  }
}

GradVector Tape::backward(NodeId loss) const {
  GradVector g{Vector::Zero(static_cast<Index>(params_.size()))};
  backward(loss, std::span<double>(g.values.data(), static_cast<std::size_t>(g.values.size())));
  return g;
}

bool Tape::replay_matches() const {
  for (const Node& n : nodes_) {
    if (n.op == Op::kParameter || n.op == Op::kConstant) continue;
    const Matrix again = evaluate(n);
    if (again.rows() != n.value.rows() || again.cols() != n.value.cols()) return false;
    if (std::memcmp(again.data(), n.value.data(), static_cast<std::size_t>(again.size()) * sizeof(double)) != 0) {
      return false;
    }
  }
  return true;
}

FiniteDiffResult finite_diff_check(const Objective& f, const Vector& theta, const Vector& grad, double h,
                                   std::span<const Index> coordinates, double floor) {
  FiniteDiffResult result;
  Vector probe = theta;
  for (const Index k : coordinates) {
    probe[k] = theta[k] + h;
    const double up = f(probe);
    probe[k] = theta[k] - h;
    const double down = f(probe);
    probe[k] = theta[k];
    const double fd = (up - down) / (2.0 * h);
    const double denom = std::max({std::abs(fd), std::abs(grad[k]), floor});
    const double err = std::abs(fd - grad[k]) / denom;
    if (result.worst_coordinate < 0 || err > result.max_rel_error) {
      result.max_rel_error = err;
      result.worst_coordinate = k;
    }
    ++result.checked;
  }
  return result;
}

std::vector<Index> sample_coordinates(Index size, Index count, Rng& rng, const std::function<bool(Index)>& admissible) {
  std::vector<Index> order(static_cast<std::size_t>(size));
  for (Index k = 0; k < size; ++k) order[static_cast<std::size_t>(k)] = k;
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<Index> picked;
  for (const Index k : order) {
    if (static_cast<Index>(picked.size()) >= count) break;
    if (!admissible || admissible(k)) picked.push_back(k);
  }
  return picked;
}

}  // namespace danlab::grad
