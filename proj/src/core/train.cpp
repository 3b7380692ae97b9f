#include "danlab/train.hpp"

#include <cmath>
#include <deque>
#include <string>

#include "danlab/error.hpp"

namespace danlab::train {

using grad::NodeId;

void TrainConfig::validate() const {
  if (window < 0) throw ConfigError("window T must be >= 0");
  if (batch < 1) throw ConfigError("batch size I must be >= 1");
  if (steps < 0) throw ConfigError("steps must be >= 0");
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (test_every < 0 || test_len < 0) throw ConfigError("test cadence and length must be >= 0");
  if (horizon < 1) throw ConfigError("TBPTT horizon must be >= 1");
}

std::string phase_name(Phase p) {
  switch (p) {
    case Phase::kTrain: return "train";
    case Phase::kTest: return "test";
    case Phase::kEnkf: return "enkf";
    case Phase::kKf: return "kf";
  }
  return "unknown";
}

double instantaneous_loss(std::span<const gauss::CholGaussian> prior, std::span<const gauss::CholGaussian> posterior,
                          const Matrix& states) {
  const auto count = static_cast<std::size_t>(states.cols());
  if (prior.size() != count || posterior.size() != count) {
    throw ShapeError("instantaneous_loss: " + std::to_string(prior.size()) + " priors, " +
                     std::to_string(posterior.size()) + " posteriors, " + std::to_string(count) + " states");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    const auto x = states.col(static_cast<Index>(i));
    total -= gauss::log_density(prior[i], x) + gauss::log_density(posterior[i], x);
  }
  return total / static_cast<double>(count);
}

double rmse(const Eigen::Ref<const Matrix>& means, const Matrix& states) {
  if (means.cols() != states.cols() || means.rows() != states.rows()) {
    throw ShapeError("rmse: means " + shape_str(means.rows(), means.cols()) + ", states " +
                     shape_str(states.rows(), states.cols()));
  }
  double total = 0.0;
  for (Index i = 0; i < states.cols(); ++i) total += (states.col(i) - means.col(i)).norm();
  return total / (std::sqrt(static_cast<double>(states.rows())) * static_cast<double>(states.cols()));
}

std::pair<double, double> rmse_metrics(std::span<const gauss::CholGaussian> prior,
                                       std::span<const gauss::CholGaussian> posterior, const Matrix& states) {
  const auto count = static_cast<std::size_t>(states.cols());
  if (prior.size() != count || posterior.size() != count) throw ShapeError("rmse_metrics: batch sizes differ");
  Matrix mb(states.rows(), states.cols());
  Matrix ma(states.rows(), states.cols());
  for (std::size_t i = 0; i < count; ++i) {
    mb.col(static_cast<Index>(i)) = prior[i].mean;
    ma.col(static_cast<Index>(i)) = posterior[i].mean;
  }
  return {rmse(mb, states), rmse(ma, states)};
}

void adam_step(std::span<double> theta, std::span<const double> grad, AdamState& state, double lr) {
  const auto size = theta.size();
  if (grad.size() != size || static_cast<std::size_t>(state.first.size()) != size ||
      static_cast<std::size_t>(state.second.size()) != size) {
    throw ShapeError("adam_step: parameter, gradient and moment lengths differ");
  }
  ++state.step;
  const double b1 = state.beta1;
  const double b2 = state.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  double* m = state.first.data();
  double* v = state.second.data();
  for (std::size_t k = 0; k < size; ++k) {
    const double g = grad[k];
    m[k] = b1 * m[k] + (1.0 - b1) * g;
    v[k] = b2 * v[k] + (1.0 - b2) * g * g;
    const double m_hat = m[k] / c1;
    const double v_hat = v[k] / c2;
    theta[k] -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
  }
}

CycleLoss cycle_loss(dan::DanGraph& graph, NodeId memory, const Matrix& observation, const Matrix& states) {
  grad::Tape& tape = graph.tape();
  CycleLoss out;
  out.cycle = graph.cycle(memory, tape.constant(observation));
  const NodeId truth = tape.constant(states);
  const NodeId both = tape.add(tape.gaussian_nll(out.cycle.prior_packed, truth),
                               tape.gaussian_nll(out.cycle.post_packed, truth));
  out.loss = tape.scale(both, 1.0 / static_cast<double>(states.cols()));
  return out;
}

namespace {

std::span<const double> const_span(const Vector& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}
std::span<double> mut_span(Vector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

// Checks the emitted packing vectors describe valid Gaussians.
void check_outputs(const grad::Tape& tape, const dan::DanGraph::Cycle& c, std::int64_t step) {
  if (!tape.value(c.prior_packed).allFinite() || !tape.value(c.post_packed).allFinite()) {
    throw NumericalError("procoder emitted non-finite Gaussian parameters at step " + std::to_string(step));
  }
}

void check_loss(double loss, std::int64_t step) {
  if (!std::isfinite(loss)) throw NumericalError("non-finite loss at step " + std::to_string(step));
}

Matrix prior_means(const grad::Tape& tape, const dan::DanGraph::Cycle& c, Index n) {
  return tape.value(c.prior_packed).topRows(n);
}
Matrix post_means(const grad::Tape& tape, const dan::DanGraph::Cycle& c, Index n) {
  return tape.value(c.post_packed).topRows(n);
}

void update_stats(TapeStats& stats, const grad::Tape& tape) {
  stats.peak_bytes = std::max(stats.peak_bytes, tape.activation_bytes());
  stats.peak_nodes = std::max(stats.peak_nodes, tape.node_count());
}

void maybe_test(const TrainConfig& cfg, const Callbacks& cb, std::int64_t completed, const dan::DanParams& params) {
  if (cfg.test_every > 0 && cb.on_test_boundary && completed % cfg.test_every == 0) {
    cb.on_test_boundary(completed, params);
  }
}

}  // namespace

TrainResult direct_train(dan::DanParams& params, const BatchSource& data, const TrainConfig& cfg,
                         const Callbacks& callbacks) {
  cfg.validate();
  const auto& dcfg = params.config();
  AdamState adam(params.size());
  TrainResult result;
  Vector grad_buffer(params.size());

  for (std::int64_t step = 0; step < cfg.steps; ++step) {
    const ods::TrajectoryBatch& batch = data(step);
    if (batch.steps() < cfg.window + 1) {
      throw ConfigError("direct training needs " + std::to_string(cfg.window + 1) + " time steps, batch has " +
                        std::to_string(batch.steps()));
    }
    if (batch.n() != dcfg.n || batch.d() != dcfg.d) throw ConfigError("batch dimensions do not match the DAN config");

    grad::Tape tape(const_span(params.theta()));
    dan::DanGraph graph(params, tape);
    NodeId memory = tape.constant(Matrix::Zero(dcfg.m, batch.count()));
    NodeId total;
    double rmse_b = 0.0;
    double rmse_a = 0.0;
    for (std::int64_t t = 0; t <= cfg.window; ++t) {
      const Matrix states = batch.states_at(t);
      const CycleLoss cl = cycle_loss(graph, memory, batch.observations_at(t), states);
      check_outputs(tape, cl.cycle, step);
      rmse_b += rmse(prior_means(tape, cl.cycle, dcfg.n), states);
      rmse_a += rmse(post_means(tape, cl.cycle, dcfg.n), states);
      total = t == 0 ? cl.loss : tape.add(total, cl.loss);
      memory = cl.cycle.post_memory;
    }
    const double inv = 1.0 / static_cast<double>(cfg.window + 1);
    const NodeId loss = tape.scale(total, inv);

    LossRecord rec{step, tape.scalar(loss), rmse_b * inv, rmse_a * inv, Phase::kTrain};
    check_loss(rec.loss, step);
    update_stats(result.tape, tape);

    grad_buffer.setZero();
    tape.backward(loss, mut_span(grad_buffer));
    if (callbacks.on_step) {
      const Matrix empty;
      callbacks.on_step(StepInfo{step, rec, empty, empty, empty, params, tape.activation_bytes(), tape.node_count()});
    }
    adam_step(mut_span(params.theta()), const_span(grad_buffer), adam, cfg.lr);

    result.history.push_back(rec);
    if (callbacks.on_record) callbacks.on_record(rec);
    maybe_test(cfg, callbacks, step + 1, params);
  }
  return result;
}

TrainResult tbptt_train(dan::DanParams& params, ods::TrajectoryStream& stream, const TrainConfig& cfg,
                        const Callbacks& callbacks) {
  cfg.validate();
  const auto& dcfg = params.config();
  AdamState adam(params.size());
  TrainResult result;
  Vector grad_buffer(params.size());

  struct Slot {
    Matrix memory_in;  // constant memory fed to the cycle
    Matrix observation;
    Matrix states;
  };
  std::deque<Slot> window;
  Matrix carried = Matrix::Zero(dcfg.m, stream.count());
  Matrix states;
  Matrix observation;

  for (std::int64_t step = 0; step < cfg.steps; ++step) {
    stream.next(states, observation);
    window.push_back(Slot{carried, observation, states});
    while (static_cast<std::int64_t>(window.size()) > cfg.horizon) window.pop_front();

    grad::Tape tape(const_span(params.theta()));
    dan::DanGraph graph(params, tape);
    // Cycles before the last only carry memory; the loss is L_t alone.
    NodeId memory = tape.constant(window.front().memory_in);
    for (std::size_t k = 0; k + 1 < window.size(); ++k) {
      memory = graph.cycle(memory, tape.constant(window[k].observation)).post_memory;
    }
    const CycleLoss cl = cycle_loss(graph, memory, observation, states);
    check_outputs(tape, cl.cycle, step);

    LossRecord rec{step, tape.scalar(cl.loss), rmse(prior_means(tape, cl.cycle, dcfg.n), states),
                   rmse(post_means(tape, cl.cycle, dcfg.n), states), Phase::kTrain};
    check_loss(rec.loss, step);
    update_stats(result.tape, tape);

    grad_buffer.setZero();
    tape.backward(cl.loss, mut_span(grad_buffer));
    // The next constant memory is evaluated with the pre-update parameters.
    Matrix next_memory = tape.value(cl.cycle.post_memory);
    if (callbacks.on_step) {
      callbacks.on_step(StepInfo{step, rec, window.back().memory_in, next_memory, observation, params,
                                 tape.activation_bytes(), tape.node_count()});
    }
    adam_step(mut_span(params.theta()), const_span(grad_buffer), adam, cfg.lr);
    carried = std::move(next_memory);

    result.history.push_back(rec);
    if (callbacks.on_record) callbacks.on_record(rec);
    maybe_test(cfg, callbacks, step + 1, params);
  }
  return result;
}

std::vector<LossRecord> run_test(const dan::DanParams& params, ods::TrajectoryStream& stream, std::int64_t steps) {
  const auto& dcfg = params.config();
  std::vector<LossRecord> out;
  out.reserve(static_cast<std::size_t>(steps));
  Matrix memory = Matrix::Zero(dcfg.m, stream.count());
  Matrix states;
  Matrix observation;
  for (std::int64_t t = 0; t < steps; ++t) {
    stream.next(states, observation);
    grad::Tape tape(const_span(params.theta()));
    dan::DanGraph graph(params, tape);
    const CycleLoss cl = cycle_loss(graph, tape.constant(memory), observation, states);
    check_outputs(tape, cl.cycle, t);
    LossRecord rec{t, tape.scalar(cl.loss), rmse(prior_means(tape, cl.cycle, dcfg.n), states),
                   rmse(post_means(tape, cl.cycle, dcfg.n), states), Phase::kTest};
    check_loss(rec.loss, t);
    out.push_back(rec);
    memory = tape.value(cl.cycle.post_memory);
  }
  return out;
}

}  // namespace danlab::train
