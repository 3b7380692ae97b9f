#include "danlab/harness.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>

#include "danlab/error.hpp"
#include "danlab/io.hpp"

namespace danlab::harness {

namespace {

void emit(const Log& log, const std::string& line) {
  if (log) log(line);
}

std::string fmt(const char* pattern, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, pattern, a, b, c, d);
  return buf;
}

gauss::CholGaussian to_chol(const gauss::MeanCov& mc) {
  Eigen::LLT<Matrix> llt(mc.cov);
  if (llt.info() != Eigen::Success) throw NumericalError("Kalman covariance lost positive definiteness");
  return gauss::CholGaussian{mc.mean, llt.matrixL()};
}

}  // namespace

MetricsWriter::MetricsWriter(const std::filesystem::path& path) : out_(path, std::ios::trunc) {
  if (!out_) throw IoError("cannot open metrics file " + path.string());
  out_ << "phase,step,L_t,rmse_b,rmse_a\n" << std::flush;
}

std::string format_row(const train::LossRecord& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%s,%lld,%.17g,%.17g,%.17g", train::phase_name(r.phase).c_str(),
                static_cast<long long>(r.step), r.loss, r.rmse_b, r.rmse_a);
  return buf;
}

void MetricsWriter::write(const train::LossRecord& record) { out_ << format_row(record) << '\n' << std::flush; }

void MetricsWriter::write(const std::vector<train::LossRecord>& records) {
  for (const auto& r : records) out_ << format_row(r) << '\n';
  out_ << std::flush;
}

Averages average(const std::vector<train::LossRecord>& records) {
  Averages a;
  if (records.empty()) return a;
  for (const auto& r : records) {
    a.loss += r.loss;
    a.rmse_b += r.rmse_b;
    a.rmse_a += r.rmse_a;
  }
  const double inv = 1.0 / static_cast<double>(records.size());
  a.loss *= inv;
  a.rmse_b *= inv;
  a.rmse_a *= inv;
  return a;
}

filters::LinearGaussianModel linear_model(const ods::OdsConfig& cfg) {
  const Index n = cfg.n;
  filters::LinearGaussianModel model;
  model.M = cfg.linear_coeff * Matrix::Identity(n, n);
  model.H = Matrix::Identity(cfg.d, n);
  model.Q = cfg.q * cfg.q * Matrix::Identity(n, n);
  model.R = cfg.r * cfg.r * Matrix::Identity(cfg.d, cfg.d);
  return model;
}

std::vector<train::LossRecord> run_enkf(const ods::OdsConfig& cfg, ods::TrajectoryStream& stream, std::int64_t steps,
                                        std::int64_t members, double inflation, std::uint64_t ensemble_index) {
  const Index n = cfg.n;
  filters::LinearGaussianModel obs;
  obs.M = Matrix::Identity(n, n);
  obs.H = Matrix::Identity(cfg.d, n);
  obs.Q = cfg.q * cfg.q * Matrix::Identity(n, n);
  obs.R = cfg.r * cfg.r * Matrix::Identity(cfg.d, cfg.d);

  Rng rng = make_substream(cfg.seed, stream::kEnsemble, ensemble_index);
  std::vector<train::LossRecord> out;
  Matrix states;
  Matrix observation;
  filters::Ensemble ens;
  bool diverged = false;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const double inf = std::numeric_limits<double>::infinity();
  const filters::StateMap step_model = [&](const Vector& x, Index j) { return ods::propagate(cfg, x, j); };

  for (std::int64_t t = 0; t < steps; ++t) {
    stream.next(states, observation);
    if (t == 0) {
      ens.members = gauss::standard_normal(n, members, rng);
      ens.members.colwise() += states.col(0);
    }
    if (diverged) {
      out.push_back({t, nan, inf, inf, train::Phase::kEnkf});
      continue;
    }
    try {
      const Vector prior_mean = ens.members.rowwise().mean();
      ens = filters::enkf_analysis(ens, observation.col(0), obs, rng, inflation);
      const Vector post_mean = ens.members.rowwise().mean();
      out.push_back({t, nan, train::rmse(prior_mean, states), train::rmse(post_mean, states), train::Phase::kEnkf});
      ens = filters::enkf_propagate(ens, step_model, obs.Q, rng);
    } catch (const NumericalError&) {
      diverged = true;
      out.push_back({t, nan, inf, inf, train::Phase::kEnkf});
    }
  }
  return out;
}

std::vector<train::LossRecord> run_kf(const ods::OdsConfig& cfg, ods::TrajectoryStream& stream, std::int64_t steps) {
  if (cfg.model != ods::Model::kLinear) throw ConfigError("the Kalman filter baseline needs a linear model");
  const auto model = linear_model(cfg);
  const Index n = cfg.n;
  const double shrink = std::pow(cfg.linear_coeff, static_cast<double>(cfg.burn_in));
  gauss::MeanCov prior{Vector::Constant(n, shrink * cfg.init_mean), shrink * shrink * Matrix::Identity(n, n)};

  std::vector<train::LossRecord> out;
  Matrix states;
  Matrix observation;
  for (std::int64_t t = 0; t < steps; ++t) {
    stream.next(states, observation);
    const gauss::MeanCov post = filters::kf_analysis(prior, observation.col(0), model);
    const auto gb = to_chol(prior);
    const auto ga = to_chol(post);
    double loss = 0.0;
    for (Index i = 0; i < states.cols(); ++i) {
      loss -= gauss::log_density(gb, states.col(i)) + gauss::log_density(ga, states.col(i));
    }
    loss /= static_cast<double>(states.cols());
    out.push_back({t, loss, train::rmse(prior.mean, states), train::rmse(post.mean, states), train::Phase::kKf});
    prior = filters::kf_propagate(post, model);
  }
  return out;
}

BaselineRun run_reference(const config::ExperimentConfig& cfg, std::uint64_t test_index, std::int64_t steps,
                          Log log) {
  BaselineRun best;
  if (cfg.ods.model == ods::Model::kLinear) {
    ods::TrajectoryStream stream(cfg.ods, 1, stream::kTest, test_index);
    best.records = run_kf(cfg.ods, stream, steps);
    return best;
  }
  double best_rmse = std::numeric_limits<double>::infinity();
  for (const double lambda : cfg.baseline.inflation) {
    ods::TrajectoryStream stream(cfg.ods, 1, stream::kTest, test_index);
    auto records = run_enkf(cfg.ods, stream, steps, cfg.baseline.members, lambda, test_index);
    const double score = average(records).rmse_a;
    emit(log, fmt("enkf inflation %.2f: rmse_a %.4f", lambda, score));
    if (best.records.empty() || score < best_rmse) {
      best_rmse = score;
      best.inflation = lambda;
      best.records = std::move(records);
    }
  }
  return best;
}

namespace {

TestSummary test_and_compare(const config::ExperimentConfig& cfg, const dan::DanParams& params,
                             std::uint64_t test_index, std::int64_t completed, const Log& log) {
  TestSummary s;
  s.completed_steps = completed;
  ods::TrajectoryStream stream(cfg.ods, 1, stream::kTest, test_index);
  s.records = train::run_test(params, stream, cfg.train.test_len);
  s.dan = average(s.records);
  if (!s.records.empty()) {
    s.first_rmse_b = s.records.front().rmse_b;
    s.first_rmse_a = s.records.front().rmse_a;
  }
  BaselineRun reference = run_reference(cfg, test_index, cfg.train.test_len, log);
  s.inflation = reference.inflation;
  s.baseline_records = std::move(reference.records);
  s.baseline = average(s.baseline_records);
  return s;
}

}  // namespace

ExperimentResult run_twin_experiment(const config::ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                                     Log log) {
  std::filesystem::create_directories(out_dir);
  {
    std::ofstream copy(out_dir / "config.ini");
    copy << config::to_text(cfg);
  }
  ExperimentResult result;

  dan::DanParams params = dan::init_params(cfg.dan, cfg.seed);
  MetricsWriter metrics(out_dir / "metrics.csv");
  emit(log, "parameters: " + std::to_string(params.size()));

  const auto started = std::chrono::steady_clock::now();
  std::uint64_t test_index = 0;
  auto on_test = [&](std::int64_t completed, const dan::DanParams& p) {
    TestSummary s = test_and_compare(cfg, p, test_index++, completed, log);
    metrics.write(s.records);
    metrics.write(s.baseline_records);
    io::write_params(p, out_dir / ("checkpoint_" + std::to_string(completed) + ".danparm"));
    emit(log, "test after " + std::to_string(completed) + " steps: " +
                  fmt("L %.4f rmse_b %.4f rmse_a %.4f (baseline rmse_a %.4f)", s.dan.loss, s.dan.rmse_b, s.dan.rmse_a,
                      s.baseline.rmse_a));
    result.tests.push_back(std::move(s));
  };

  double recent = 0.0;
  const std::int64_t report_every = std::max<std::int64_t>(1, cfg.train.steps / 20);
  train::Callbacks callbacks;
  callbacks.on_record = [&](const train::LossRecord& r) {
    metrics.write(r);
    recent += r.rmse_a;
    if ((r.step + 1) % report_every == 0) {
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
      emit(log, "step " + std::to_string(r.step + 1) + "/" + std::to_string(cfg.train.steps) +
                    fmt(": L_t %.4f, mean train rmse_a %.4f, %.1fs", r.loss, recent / static_cast<double>(report_every),
                        secs));
      recent = 0.0;
    }
  };
  callbacks.on_test_boundary = on_test;

  train::TrainResult trained;
  if (cfg.train.mode == train::Mode::kTbptt) {
    ods::TrajectoryStream stream(cfg.ods, cfg.train.batch, stream::kTrain);
    trained = train::tbptt_train(params, stream, cfg.train, callbacks);
  } else if (cfg.train.fresh_data) {
    ods::TrajectoryBatch current;
    const train::BatchSource source = [&](std::int64_t step) -> const ods::TrajectoryBatch& {
      current = ods::generate_batch(cfg.ods, cfg.train.batch, cfg.train.window, stream::kTrain, cfg.threads,
                                    static_cast<std::uint64_t>(step * cfg.train.batch));
      return current;
    };
    trained = train::direct_train(params, source, cfg.train, callbacks);
  } else {
    const ods::TrajectoryBatch fixed =
        ods::generate_batch(cfg.ods, cfg.train.batch, cfg.train.window, stream::kTrain, cfg.threads);
    trained = train::direct_train(params, [&](std::int64_t) -> const ods::TrajectoryBatch& { return fixed; },
                                  cfg.train, callbacks);
  }
  const bool tested_at_end = cfg.train.test_every > 0 && cfg.train.steps % cfg.train.test_every == 0;
  if (!tested_at_end && cfg.train.test_len > 0) on_test(cfg.train.steps, params);

  io::write_params(params, out_dir / "final.danparm");
  result.train_history = std::move(trained.history);
  result.tape = trained.tape;
  return result;
}

TestSummary run_checkpoint_test(const config::ExperimentConfig& cfg, const std::filesystem::path& checkpoint,
                                const std::filesystem::path& out_dir, Log log) {
  const dan::DanParams params = io::read_params(checkpoint);
  if (params.config().n != cfg.ods.n || params.config().d != cfg.ods.d) {
    throw ConfigError("checkpoint dimensions do not match the config's ODS");
  }
  std::filesystem::create_directories(out_dir);
  TestSummary s = test_and_compare(cfg, params, 0, 0, log);
  MetricsWriter metrics(out_dir / "test_metrics.csv");
  metrics.write(s.records);
  metrics.write(s.baseline_records);
  emit(log, fmt("test: L %.4f rmse_b %.4f rmse_a %.4f (baseline rmse_a %.4f)", s.dan.loss, s.dan.rmse_b, s.dan.rmse_a,
                s.baseline.rmse_a));
  return s;
}

TestSummary run_baseline(const config::ExperimentConfig& cfg, const std::filesystem::path& out_dir, Log log) {
  std::filesystem::create_directories(out_dir);
  TestSummary s;
  BaselineRun reference = run_reference(cfg, 0, cfg.train.test_len, log);
  s.inflation = reference.inflation;
  s.baseline_records = std::move(reference.records);
  s.baseline = average(s.baseline_records);
  MetricsWriter metrics(out_dir / "baseline_metrics.csv");
  metrics.write(s.baseline_records);
  emit(log, fmt("baseline (inflation %.2f): rmse_b %.4f rmse_a %.4f", s.inflation, s.baseline.rmse_b,
                s.baseline.rmse_a));
  return s;
}

void run_generate(const config::ExperimentConfig& cfg, std::int64_t count, std::int64_t horizon,
                  const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  io::write_batch(ods::generate_batch(cfg.ods, count, horizon, stream::kTrain, cfg.threads), path);
}

}  // namespace danlab::harness
