#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "danlab/dan.hpp"
#include "danlab/gauss.hpp"
#include "danlab/grad.hpp"
#include "danlab/ods.hpp"

namespace danlab::train {

enum class Mode { kDirect, kTbptt };

struct TrainConfig {
  Mode mode = Mode::kTbptt;
  std::int64_t window = 25;        // T, direct mode
  std::int64_t batch = 1024;       // I
  std::int64_t steps = 1000;
  double lr = 1e-4;
  std::int64_t test_every = 0;     // 0 disables periodic tests
  std::int64_t test_len = 1000;
  std::int64_t horizon = 1;        // TBPTT truncation horizon
  bool fresh_data = false;         // direct mode: new batch every step
  std::uint64_t seed = 0;

  void validate() const;
};

struct AdamState {
  Vector first;
  Vector second;
  std::int64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  explicit AdamState(Index size = 0) : first(Vector::Zero(size)), second(Vector::Zero(size)) {}
};

enum class Phase { kTrain, kTest, kEnkf, kKf };
std::string phase_name(Phase p);

struct LossRecord {
  std::int64_t step = 0;
  double loss = 0.0;
  double rmse_b = 0.0;
  double rmse_a = 0.0;
  Phase phase = Phase::kTrain;
};

// (1/I) sum_i [-ln q_b(x_i) - ln q_a(x_i)].
double instantaneous_loss(std::span<const gauss::CholGaussian> prior, std::span<const gauss::CholGaussian> posterior,
                          const Matrix& states);

// (1/(sqrt(n) I)) sum_i ||x_i - mu_i|| for the prior and posterior means.
std::pair<double, double> rmse_metrics(std::span<const gauss::CholGaussian> prior,
                                       std::span<const gauss::CholGaussian> posterior, const Matrix& states);
double rmse(const Eigen::Ref<const Matrix>& means, const Matrix& states);

// Bias-corrected Adam update of theta in place.
void adam_step(std::span<double> theta, std::span<const double> grad, AdamState& state, double lr);

// Tape bookkeeping reported by the training loops.
struct TapeStats {
  std::size_t peak_bytes = 0;
  std::size_t peak_nodes = 0;
};

struct TrainResult {
  std::vector<LossRecord> history;
  TapeStats tape;
};

struct StepInfo {
  std::int64_t step;
  const LossRecord& record;
  const Matrix& carried_in;    // constant memory fed to this step (TBPTT)
  const Matrix& carried_out;   // memory handed to the next step
  const Matrix& observation;
  const dan::DanParams& params;  // parameters before this step's update
  std::size_t tape_bytes;
  std::size_t tape_nodes;
};

struct Callbacks {
  std::function<void(const LossRecord&)> on_record;
  // Called after step s (1-based count of completed steps) when s is a
  // multiple of test_every.
  std::function<void(std::int64_t completed_steps, const dan::DanParams&)> on_test_boundary;
  std::function<void(const StepInfo&)> on_step;
};

using BatchSource = std::function<const ods::TrajectoryBatch&(std::int64_t step)>;

// Unrolls dan_cycle over t = 0..T from zero memory on one tape and
// backpropagates through the whole window each step.
TrainResult direct_train(dan::DanParams& params, const BatchSource& data, const TrainConfig& cfg,
                         const Callbacks& callbacks = {});

// One optimization step per time step, with the carried memory treated as
// a constant leaf and gradients truncated to cfg.horizon cycles.
TrainResult tbptt_train(dan::DanParams& params, ods::TrajectoryStream& stream, const TrainConfig& cfg,
                        const Callbacks& callbacks = {});

// Frozen-weight test from zero memory over steps time steps; one record
// per time step.
std::vector<LossRecord> run_test(const dan::DanParams& params, ods::TrajectoryStream& stream, std::int64_t steps);

// Builds one cycle's loss on the tape: returns (L_t node, cycle nodes).
struct CycleLoss {
  dan::DanGraph::Cycle cycle;
  grad::NodeId loss;
};
CycleLoss cycle_loss(dan::DanGraph& graph, grad::NodeId memory, const Matrix& observation, const Matrix& states);

}  // namespace danlab::train
