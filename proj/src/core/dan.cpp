#include "danlab/dan.hpp"

#include <cmath>
#include <string>

#include "danlab/error.hpp"

namespace danlab::dan {

using grad::NodeId;

namespace {

std::string block_name(const std::string& network, std::int64_t k) {
  return network + ".block" + std::to_string(k);
}

}  // namespace

void DanConfig::validate() const {
  if (m < 1) throw ConfigError("memory dimension m must be >= 1");
  if (depth < 1) throw ConfigError("depth must be >= 1");
  if (n < 1 || d < 1) throw ConfigError("state and observation dimensions must be >= 1");
  if (!(slope >= 0.0) || !std::isfinite(slope)) throw ConfigError("leaky_relu slope must be finite and >= 0");
}

DanParams::DanParams(const DanConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const Index m = cfg.m;
  const Index wide = cfg.m + cfg.d;
  for (std::int64_t k = 0; k < cfg.depth; ++k) {
    const auto p = block_name("analyzer", k);
    layout_.add(p + ".weight", wide, wide);
    layout_.add(p + ".bias", wide, 1);
    layout_.add(p + ".gate", 1, 1);
  }
  layout_.add("analyzer.out.weight", m, wide);
  layout_.add("analyzer.out.bias", m, 1);
  for (std::int64_t k = 0; k < cfg.depth; ++k) {
    const auto p = block_name("propagater", k);
    layout_.add(p + ".weight", m, m);
    layout_.add(p + ".bias", m, 1);
    layout_.add(p + ".gate", 1, 1);
  }
  layout_.add("propagater.out.weight", m, m);
  layout_.add("propagater.out.bias", m, 1);
  const Index packed = gauss::packed_size(cfg.n);
  layout_.add("procoder.weight", packed, m);
  layout_.add("procoder.bias", packed, 1);
  theta_ = Vector::Zero(layout_.size());
}

Eigen::Map<Matrix> DanParams::view(const std::string& name) {
  const auto& s = layout_.find(name);
  return {theta_.data() + s.offset, s.rows, s.cols};
}

Eigen::Map<const Matrix> DanParams::view(const std::string& name) const {
  const auto& s = layout_.find(name);
  return {theta_.data() + s.offset, s.rows, s.cols};
}

DanParams init_params(const DanConfig& cfg, std::uint64_t seed) {
  DanParams params(cfg);
  Rng rng = make_substream(seed, stream::kInit, 0);
  Vector& theta = params.theta();
  for (const auto& s : params.layout().slices()) {
    if (s.name.ends_with(".gate")) continue;  // ReZero gates start at zero
    // Procoder starts at zero: every initial output is N(0, I). A random
    // Cholesky factor makes the first losses huge and stalls Adam.
    if (s.name.starts_with("procoder.")) continue;
    // Biases share the fan-in of their layer's weight.
    const bool is_bias = s.name.ends_with(".bias");
    const Index fan_in = is_bias ? params.layout().find(s.name.substr(0, s.name.size() - 4) + "weight").cols : s.cols;
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> uniform(-bound, bound);
    for (Index k = 0; k < s.size(); ++k) theta[s.offset + k] = uniform(rng);
  }
  return params;
}

DanGraph::DanGraph(const DanParams& params, grad::Tape& tape) : params_(params), tape_(tape) {}

NodeId DanGraph::param(const std::string& name) {
  for (const auto& [key, id] : leaves_) {
    if (key == name) return id;
  }
  const NodeId id = tape_.parameter(params_.layout().find(name));
  leaves_.emplace_back(name, id);
  return id;
}

NodeId DanGraph::rezero_block(NodeId x, const std::string& prefix) {
  const NodeId pre = tape_.affine(param(prefix + ".weight"), param(prefix + ".bias"), x);
  const NodeId act = tape_.leaky_relu(pre, params_.config().slope);
  return tape_.residual_scale_add(x, param(prefix + ".gate"), act);
}

NodeId DanGraph::residual_stack(NodeId x, const std::string& network) {
  for (std::int64_t k = 0; k < params_.config().depth; ++k) x = rezero_block(x, block_name(network, k));
  return tape_.affine(param(network + ".out.weight"), param(network + ".out.bias"), x);
}

NodeId DanGraph::analyzer(NodeId memory, NodeId observation) {
  // The observation is concatenated once and carried through every block.
  return residual_stack(tape_.concat(memory, observation), "analyzer");
}

NodeId DanGraph::propagater(NodeId memory) { return residual_stack(memory, "propagater"); }

NodeId DanGraph::procoder(NodeId memory) {
  return tape_.affine(param("procoder.weight"), param("procoder.bias"), memory);
}

DanGraph::Cycle DanGraph::cycle(NodeId previous_memory, NodeId observation) {
  Cycle c;
  c.prior_memory = propagater(previous_memory);
  c.prior_packed = procoder(c.prior_memory);
  c.post_memory = analyzer(c.prior_memory, observation);
  c.post_packed = procoder(c.post_memory);
  return c;
}

Matrix rezero_block(const Matrix& x, const Matrix& weight, const Vector& bias, double gate, double slope) {
  grad::Tape tape;
  const NodeId pre = tape.affine(tape.constant(weight), tape.constant(bias), tape.constant(x));
  const NodeId act = tape.leaky_relu(pre, slope);
  return tape.value(tape.residual_scale_add(tape.constant(x), tape.constant(Matrix::Constant(1, 1, gate)), act));
}

namespace {

void check_input(const Matrix& value, Index rows, const char* what) {
  if (value.rows() != rows) {
    throw ShapeError(std::string(what) + " has " + std::to_string(value.rows()) + " rows, expected " +
                     std::to_string(rows));
  }
}

grad::Tape params_tape(const DanParams& params) {
  return grad::Tape(std::span<const double>(params.theta().data(), static_cast<std::size_t>(params.size())));
}

}  // namespace

Matrix analyzer_apply(const DanParams& params, const Matrix& prior_memory, const Matrix& observation) {
  check_input(prior_memory, params.config().m, "analyzer memory");
  check_input(observation, params.config().d, "analyzer observation");
  grad::Tape tape = params_tape(params);
  DanGraph graph(params, tape);
  return tape.value(graph.analyzer(tape.constant(prior_memory), tape.constant(observation)));
}

Matrix propagater_apply(const DanParams& params, const Matrix& post_memory) {
  check_input(post_memory, params.config().m, "propagater memory");
  grad::Tape tape = params_tape(params);
  DanGraph graph(params, tape);
  return tape.value(graph.propagater(tape.constant(post_memory)));
}

std::vector<gauss::CholGaussian> unpack_columns(const Eigen::Ref<const Matrix>& packed) {
  std::vector<gauss::CholGaussian> out;
  out.reserve(static_cast<std::size_t>(packed.cols()));
  for (Index j = 0; j < packed.cols(); ++j) out.push_back(gauss::vector_to_gaussian(packed.col(j)));
  return out;
}

std::vector<gauss::CholGaussian> procoder_apply(const DanParams& params, const Matrix& memory) {
  check_input(memory, params.config().m, "procoder memory");
  grad::Tape tape = params_tape(params);
  DanGraph graph(params, tape);
  return unpack_columns(tape.value(graph.procoder(tape.constant(memory))));
}

CycleResult dan_cycle(const DanParams& params, const Matrix& previous_memory, const Matrix& observation) {
  check_input(previous_memory, params.config().m, "cycle memory");
  check_input(observation, params.config().d, "cycle observation");
  grad::Tape tape = params_tape(params);
  DanGraph graph(params, tape);
  const auto c = graph.cycle(tape.constant(previous_memory), tape.constant(observation));
  return CycleResult{tape.value(c.prior_memory), unpack_columns(tape.value(c.prior_packed)),
                     tape.value(c.post_memory), unpack_columns(tape.value(c.post_packed))};
}

}  // namespace danlab::dan
