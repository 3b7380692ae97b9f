#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "danlab/types.hpp"

namespace danlab::ods {

enum class Model { kLorenz95, kLinear };

// Observed dynamical system: x_{t+1} = M(x_t) + eta, y_t = x_t + eps with
// eta ~ N(0, q^2 I_n) and eps ~ N(0, r^2 I_d). The observation operator is
// the identity, so d == n.
struct OdsConfig {
  Model model = Model::kLorenz95;
  std::int64_t n = 40;
  std::int64_t d = 40;
  double dt = 0.05;
  double forcing = 8.0;
  double q = 0.1;
  double r = 1.0;
  std::int64_t burn_in = 1000;
  double init_mean = 3.0;
  // Linear model only: M = linear_coeff * I_n.
  double linear_coeff = 0.9;
  std::uint64_t seed = 0;

  void validate() const;
};

// I trajectories of T+1 states and observations, stored trajectory-major:
// entry (i, t, k) lives at (i * steps + t) * dim + k.
class TrajectoryBatch {
 public:
  TrajectoryBatch() = default;
  TrajectoryBatch(std::int64_t count, std::int64_t steps, std::int64_t n, std::int64_t d);

  std::int64_t count() const { return count_; }
  std::int64_t steps() const { return steps_; }  // T + 1
  std::int64_t n() const { return n_; }
  std::int64_t d() const { return d_; }

  std::span<double> states() { return states_; }
  std::span<const double> states() const { return states_; }
  std::span<double> observations() { return observations_; }
  std::span<const double> observations() const { return observations_; }

  Eigen::Map<Vector> state(std::int64_t i, std::int64_t t);
  Eigen::Map<const Vector> state(std::int64_t i, std::int64_t t) const;
  Eigen::Map<Vector> observation(std::int64_t i, std::int64_t t);
  Eigen::Map<const Vector> observation(std::int64_t i, std::int64_t t) const;

  // Time slices as n x I and d x I matrices (columns are trajectories).
  Matrix states_at(std::int64_t t) const;
  Matrix observations_at(std::int64_t t) const;

  bool operator==(const TrajectoryBatch&) const = default;

 private:
  std::int64_t count_ = 0;
  std::int64_t steps_ = 0;
  std::int64_t n_ = 0;
  std::int64_t d_ = 0;
  std::vector<double> states_;
  std::vector<double> observations_;
};

// Cyclic Lorenz95 tendency dx_i/dt = (x_{i+1} - x_{i-2}) x_{i-1} - x_i + F.
Vector lorenz95_tendency(const Vector& x, double forcing);

// One classical RK4 step of the Lorenz95 tendency. batch_index only labels
// the divergence error.
Vector resolvent_rk4(const Vector& x, double dt, double forcing, std::int64_t batch_index = -1);

// The propagation operator M of the configured model (without model error).
Vector propagate(const OdsConfig& cfg, const Vector& x, std::int64_t batch_index = -1);

// Generates I trajectories. Trajectory i draws from substream
// (cfg.seed, stream_id, first_index + i), so results do not depend on I
// or on the thread count.
TrajectoryBatch generate_batch(const OdsConfig& cfg, std::int64_t count, std::int64_t horizon,
                               std::uint64_t stream_id = stream::kTrain, int threads = 1,
                               std::uint64_t first_index = 0);

// Unbounded version of generate_batch for online training and tests. The
// first T+1 emitted slices equal the matching generate_batch call.
class TrajectoryStream {
 public:
  TrajectoryStream(const OdsConfig& cfg, std::int64_t count, std::uint64_t stream_id,
                   std::uint64_t first_index = 0);

  // Fills the current (x_t, y_t) slices and advances to t+1.
  void next(Matrix& states, Matrix& observations);
  std::int64_t time() const { return time_; }
  std::int64_t count() const { return static_cast<std::int64_t>(rngs_.size()); }

 private:
  OdsConfig cfg_;
  std::vector<Rng> rngs_;
  Matrix current_;
  std::int64_t time_ = 0;
};

}  // namespace danlab::ods
