#include "danlab/ods.hpp"

#include <cmath>
#include <string>
#include <thread>

#include "danlab/error.hpp"

namespace danlab::ods {

namespace {

void add_gaussian(Eigen::Ref<Vector> v, double sigma, Rng& rng) {
  std::normal_distribution<double> normal;
  for (Index k = 0; k < v.size(); ++k) v[k] += sigma * normal(rng);
}

// Draws x_{-burn} and applies the deterministic burn-in.
Vector initial_state(const OdsConfig& cfg, Rng& rng, std::int64_t index) {
  Vector x = Vector::Constant(cfg.n, cfg.init_mean);
  add_gaussian(x, 1.0, rng);
  for (std::int64_t k = 0; k < cfg.burn_in; ++k) x = propagate(cfg, x, index);
  return x;
}

}  // namespace

void OdsConfig::validate() const {
  if (model == Model::kLorenz95 && n < 4) {
    throw ConfigError("Lorenz95 requires n >= 4, got n = " + std::to_string(n));
  }
  if (n < 1) throw ConfigError("state dimension must be positive");
  if (d != n) {
    throw ConfigError("identity observation operator requires d == n (n = " + std::to_string(n) +
                      ", d = " + std::to_string(d) + ")");
  }
  if (!(dt > 0.0)) throw ConfigError("dt must be positive");
  if (!(q >= 0.0)) throw ConfigError("q must be non-negative");
  if (!(r >= 0.0)) throw ConfigError("r must be non-negative");
  if (burn_in < 0) throw ConfigError("burn_in must be non-negative");
}

TrajectoryBatch::TrajectoryBatch(std::int64_t count, std::int64_t steps, std::int64_t n,
                                 std::int64_t d)
    : count_(count),
      steps_(steps),
      n_(n),
      d_(d),
      states_(static_cast<std::size_t>(count * steps * n)),
      observations_(static_cast<std::size_t>(count * steps * d)) {}

Eigen::Map<Vector> TrajectoryBatch::state(std::int64_t i, std::int64_t t) {
  return {states_.data() + (i * steps_ + t) * n_, n_};
}
Eigen::Map<const Vector> TrajectoryBatch::state(std::int64_t i, std::int64_t t) const {
  return {states_.data() + (i * steps_ + t) * n_, n_};
}
Eigen::Map<Vector> TrajectoryBatch::observation(std::int64_t i, std::int64_t t) {
  return {observations_.data() + (i * steps_ + t) * d_, d_};
}
Eigen::Map<const Vector> TrajectoryBatch::observation(std::int64_t i, std::int64_t t) const {
  return {observations_.data() + (i * steps_ + t) * d_, d_};
}

Matrix TrajectoryBatch::states_at(std::int64_t t) const {
  Matrix out(n_, count_);
  for (std::int64_t i = 0; i < count_; ++i) out.col(i) = state(i, t);
  return out;
}

Matrix TrajectoryBatch::observations_at(std::int64_t t) const {
  Matrix out(d_, count_);
  for (std::int64_t i = 0; i < count_; ++i) out.col(i) = observation(i, t);
  return out;
}

Vector lorenz95_tendency(const Vector& x, double forcing) {
  const Index n = x.size();
  if (n < 4) throw ConfigError("Lorenz95 requires dimension >= 4, got " + std::to_string(n));
  Vector dx(n);
  for (Index i = 0; i < n; ++i) {
    const double xp1 = x[(i + 1) % n];
    const double xm1 = x[(i + n - 1) % n];
    const double xm2 = x[(i + n - 2) % n];
    dx[i] = (xp1 - xm2) * xm1 - x[i] + forcing;
  }
  return dx;
}

Vector resolvent_rk4(const Vector& x, double dt, double forcing, std::int64_t batch_index) {
  if (dt < 0.0) throw ConfigError("RK4 step requires dt >= 0");
  if (dt == 0.0) return x;
  const Vector k1 = lorenz95_tendency(x, forcing);
  const Vector k2 = lorenz95_tendency(x + 0.5 * dt * k1, forcing);
  const Vector k3 = lorenz95_tendency(x + 0.5 * dt * k2, forcing);
  const Vector k4 = lorenz95_tendency(x + dt * k3, forcing);
  Vector out = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  if (!out.allFinite()) {
    throw NumericalError("propagation diverged (non-finite state) for batch index " +
                         std::to_string(batch_index));
  }
  return out;
}

Vector propagate(const OdsConfig& cfg, const Vector& x, std::int64_t batch_index) {
  switch (cfg.model) {
    case Model::kLorenz95:
      return resolvent_rk4(x, cfg.dt, cfg.forcing, batch_index);
    case Model::kLinear: {
      Vector out = cfg.linear_coeff * x;
      if (!out.allFinite()) {
        throw NumericalError("propagation diverged for batch index " + std::to_string(batch_index));
      }
      return out;
    }
  }
  throw ConfigError("unknown model");
}

TrajectoryBatch generate_batch(const OdsConfig& cfg, std::int64_t count, std::int64_t horizon,
                               std::uint64_t stream_id, int threads, std::uint64_t first_index) {
  cfg.validate();
  if (count < 1) throw ConfigError("batch size I must be >= 1");
  if (horizon < 0) throw ConfigError("horizon T must be >= 0");
  TrajectoryBatch batch(count, horizon + 1, cfg.n, cfg.d);

  auto fill = [&](std::int64_t i) {
    Rng rng = make_substream(cfg.seed, stream_id, first_index + static_cast<std::uint64_t>(i));
    Vector x = initial_state(cfg, rng, i);
    for (std::int64_t t = 0; t <= horizon; ++t) {
      batch.state(i, t) = x;
      Vector y = x;
      add_gaussian(y, cfg.r, rng);
      batch.observation(i, t) = y;
      if (t < horizon) {
        x = propagate(cfg, x, i);
        add_gaussian(x, cfg.q, rng);
      }
    }
  };

  const std::int64_t workers = std::max<std::int64_t>(1, std::min<std::int64_t>(threads, count));
  if (workers == 1) {
    for (std::int64_t i = 0; i < count; ++i) fill(i);
    return batch;
  }
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  {
    std::vector<std::jthread> pool;
    for (std::int64_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::int64_t i = w; i < count; i += workers) fill(i);
        } catch (...) {
          errors[static_cast<std::size_t>(w)] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return batch;
}

TrajectoryStream::TrajectoryStream(const OdsConfig& cfg, std::int64_t count, std::uint64_t stream_id,
                                   std::uint64_t first_index)
    : cfg_(cfg) {
  cfg_.validate();
  if (count < 1) throw ConfigError("stream batch size must be >= 1");
  current_.resize(cfg_.n, count);
  rngs_.reserve(static_cast<std::size_t>(count));
  for (std::int64_t i = 0; i < count; ++i) {
    rngs_.push_back(make_substream(cfg_.seed, stream_id, first_index + static_cast<std::uint64_t>(i)));
    current_.col(i) = initial_state(cfg_, rngs_.back(), i);
  }
}

void TrajectoryStream::next(Matrix& states, Matrix& observations) {
  states = current_;
  observations = current_;
  for (Index i = 0; i < current_.cols(); ++i) {
    Rng& rng = rngs_[static_cast<std::size_t>(i)];
    add_gaussian(observations.col(i), cfg_.r, rng);
    Vector x = propagate(cfg_, current_.col(i), i);
    add_gaussian(x, cfg_.q, rng);
    current_.col(i) = x;
  }
  ++time_;
}

}  // namespace danlab::ods
