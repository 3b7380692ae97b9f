#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "danlab/error.hpp"
#include "danlab/train.hpp"

using namespace danlab;

namespace {

ods::OdsConfig small_ods() {
  ods::OdsConfig cfg;
  cfg.n = 4;
  cfg.d = 4;
  cfg.burn_in = 100;
  cfg.seed = 5;
  return cfg;
}

dan::DanConfig small_dan() { return dan::DanConfig{6, 4, 4, 2, 0.01}; }

double dense_nll(const gauss::CholGaussian& g, const Vector& x) {
  const Matrix cov = g.covariance();
  const Vector e = x - g.mean;
  return 0.5 * (e.dot(cov.inverse() * e) + std::log(cov.determinant()) +
                static_cast<double>(x.size()) * std::log(2.0 * std::numbers::pi));
}

std::vector<gauss::CholGaussian> random_gaussians(Index n, Index count, Rng& rng) {
  std::vector<gauss::CholGaussian> out;
  for (Index j = 0; j < count; ++j) {
    out.push_back(gauss::vector_to_gaussian(0.3 * gauss::standard_normal(gauss::packed_size(n), 1, rng).col(0)));
  }
  return out;
}

}  // namespace

TEST(Loss, PerfectMeansUnitCovariance) {
  const Index n = 40;
  Rng rng(1);
  const Matrix x = gauss::standard_normal(n, 3, rng);
  std::vector<gauss::CholGaussian> q;
  for (Index j = 0; j < 3; ++j) q.push_back({x.col(j), Matrix::Identity(n, n)});
  const double loss = train::instantaneous_loss(q, q, x);
  EXPECT_NEAR(loss, 40.0 * std::log(2.0 * std::numbers::pi), 1e-10);
  EXPECT_NEAR(loss, 73.51508, 1e-5);
}

TEST(Loss, DuplicatedBatchUnchanged) {
  Rng rng(2);
  const auto qb = random_gaussians(3, 4, rng);
  const auto qa = random_gaussians(3, 4, rng);
  const Matrix x = gauss::standard_normal(3, 4, rng);
  auto qb2 = qb;
  auto qa2 = qa;
  qb2.insert(qb2.end(), qb.begin(), qb.end());
  qa2.insert(qa2.end(), qa.begin(), qa.end());
  Matrix x2(3, 8);
  x2 << x, x;
  EXPECT_NEAR(train::instantaneous_loss(qb, qa, x), train::instantaneous_loss(qb2, qa2, x2), 1e-12);
}

TEST(Loss, MatchesDenseOracle) {
  Rng rng(3);
  const auto qb = random_gaussians(5, 6, rng);
  const auto qa = random_gaussians(5, 6, rng);
  const Matrix x = gauss::standard_normal(5, 6, rng);
  double expected = 0.0;
  for (Index j = 0; j < 6; ++j) expected += dense_nll(qb[j], x.col(j)) + dense_nll(qa[j], x.col(j));
  EXPECT_NEAR(train::instantaneous_loss(qb, qa, x), expected / 6.0, 1e-9);
}

TEST(Rmse, ZeroAndConstantOffset) {
  Rng rng(4);
  const Matrix x = gauss::standard_normal(7, 5, rng);
  std::vector<gauss::CholGaussian> exact;
  std::vector<gauss::CholGaussian> shifted;
  for (Index j = 0; j < 5; ++j) {
    exact.push_back({x.col(j), Matrix::Identity(7, 7)});
    shifted.push_back({x.col(j) + Vector::Constant(7, -0.3), Matrix::Identity(7, 7)});
  }
  const auto [b0, a0] = train::rmse_metrics(exact, exact, x);
  EXPECT_EQ(b0, 0.0);
  EXPECT_EQ(a0, 0.0);
  const auto [b1, a1] = train::rmse_metrics(shifted, exact, x);
  EXPECT_NEAR(b1, 0.3, 1e-14);
  EXPECT_EQ(a1, 0.0);
}

TEST(Rmse, MatchesDoubleLoop) {
  Rng rng(5);
  const Matrix x = gauss::standard_normal(4, 9, rng);
  const Matrix mu = gauss::standard_normal(4, 9, rng);
  double total = 0.0;
  for (Index i = 0; i < 9; ++i) {
    double sq = 0.0;
    for (Index k = 0; k < 4; ++k) sq += (x(k, i) - mu(k, i)) * (x(k, i) - mu(k, i));
    total += std::sqrt(sq);
  }
  EXPECT_NEAR(train::rmse(mu, x), total / (2.0 * 9.0), 1e-12);
}

TEST(Adam, ZeroGradientFreshState) {
  Vector theta{{1.0, -2.0}};
  const Vector g = Vector::Zero(2);
  train::AdamState s(2);
  train::adam_step({theta.data(), 2}, {g.data(), 2}, s, 0.1);
  EXPECT_EQ(theta, (Vector{{1.0, -2.0}}));
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Vector theta{{1.0, -2.0, 0.5}};
  const Vector g{{3.0, -0.001, 250.0}};
  train::AdamState s(3);
  train::adam_step({theta.data(), 3}, {g.data(), 3}, s, 1e-3);
  EXPECT_NEAR(theta(0), 1.0 - 1e-3, 1e-9);
  EXPECT_NEAR(theta(1), -2.0 + 1e-3, 1e-8);
  EXPECT_NEAR(theta(2), 0.5 - 1e-3, 1e-9);
}

TEST(Adam, MatchesReferenceTrace) {
  // Reference: plain textbook Adam on f = 0.5 ||theta||^2.
  double ref[2] = {1.0, 1.0};
  double m[2] = {0.0, 0.0};
  double v[2] = {0.0, 0.0};
  Vector theta{{1.0, 1.0}};
  train::AdamState s(2);
  const double lr = 0.1;
  for (int t = 1; t <= 10; ++t) {
    for (int k = 0; k < 2; ++k) {
      const double g = ref[k];
      m[k] = 0.9 * m[k] + 0.1 * g;
      v[k] = 0.999 * v[k] + 0.001 * g * g;
      const double mh = m[k] / (1.0 - std::pow(0.9, t));
      const double vh = v[k] / (1.0 - std::pow(0.999, t));
      ref[k] -= lr * mh / (std::sqrt(vh) + 1e-8);
    }
    const Vector g = theta;
    train::adam_step({theta.data(), 2}, {g.data(), 2}, s, lr);
    EXPECT_NEAR(theta(0), ref[0], 1e-12);
    EXPECT_NEAR(theta(1), ref[1], 1e-12);
  }
}

TEST(Adam, LengthMismatchRejected) {
  Vector theta = Vector::Zero(3);
  const Vector g = Vector::Zero(2);
  train::AdamState s(3);
  EXPECT_THROW(train::adam_step({theta.data(), 3}, {g.data(), 2}, s, 0.1), ShapeError);
}

TEST(DirectTrain, FirstLossOfZeroNetwork) {
  const auto ocfg = small_ods();
  const auto batch = ods::generate_batch(ocfg, 5, 0);
  dan::DanParams params(small_dan());
  train::TrainConfig cfg;
  cfg.mode = train::Mode::kDirect;
  cfg.window = 0;
  cfg.steps = 1;
  cfg.batch = 5;
  const auto result = train::direct_train(params, [&](std::int64_t) -> const auto& { return batch; }, cfg);
  const Matrix x = batch.states_at(0);
  const gauss::CholGaussian std_normal{Vector::Zero(4), Matrix::Identity(4, 4)};
  double expected = 0.0;
  for (Index j = 0; j < 5; ++j) expected -= 2.0 * gauss::log_density(std_normal, x.col(j));
  ASSERT_EQ(result.history.size(), 1u);
  EXPECT_NEAR(result.history[0].loss, expected / 5.0, 1e-12);
}

TEST(DirectTrain, HistoryLengthAndWindowMean) {
  const auto ocfg = small_ods();
  const auto batch = ods::generate_batch(ocfg, 3, 4);
  auto params = dan::init_params(small_dan(), 1);
  const auto before = params;
  train::TrainConfig cfg;
  cfg.mode = train::Mode::kDirect;
  cfg.window = 4;
  cfg.steps = 3;
  cfg.batch = 3;
  const auto result = train::direct_train(params, [&](std::int64_t) -> const auto& { return batch; }, cfg);
  EXPECT_EQ(result.history.size(), 3u);

  // The first window loss equals the mean of per-step losses of the unrolled recursion.
  Matrix h = Matrix::Zero(6, 3);
  double total = 0.0;
  for (std::int64_t t = 0; t <= 4; ++t) {
    const auto r = dan::dan_cycle(before, h, batch.observations_at(t));
    total += train::instantaneous_loss(r.prior, r.posterior, batch.states_at(t));
    h = r.post_memory;
  }
  EXPECT_NEAR(result.history[0].loss, total / 5.0, 1e-12 * std::abs(total));
}

TEST(DirectTrain, TapeGrowsLinearlyInWindow) {
  const auto ocfg = small_ods();
  const auto batch = ods::generate_batch(ocfg, 4, 25);
  std::vector<double> bytes;
  std::vector<double> nodes;
  for (std::int64_t window : {0, 1, 5, 10, 25}) {
    auto params = dan::init_params(small_dan(), 1);
    train::TrainConfig cfg;
    cfg.mode = train::Mode::kDirect;
    cfg.window = window;
    cfg.steps = 1;
    cfg.batch = 4;
    const auto r = train::direct_train(params, [&](std::int64_t) -> const auto& { return batch; }, cfg);
    bytes.push_back(static_cast<double>(r.tape.peak_bytes));
    nodes.push_back(static_cast<double>(r.tape.peak_nodes));
  }
  const std::vector<double> ts{1, 5, 10, 25};
  const double ref = (nodes[1] - nodes[0]) / ts[0];
  for (std::size_t k = 0; k < ts.size(); ++k) {
    EXPECT_NEAR((nodes[k + 1] - nodes[0]) / ts[k], ref, 0.1 * ref);
    EXPECT_NEAR((bytes[k + 1] - bytes[0]) / ts[k], (bytes[1] - bytes[0]), 0.1 * (bytes[1] - bytes[0]));
  }
}

TEST(DirectTrain, ShortBatchRejected) {
  const auto batch = ods::generate_batch(small_ods(), 2, 3);
  auto params = dan::init_params(small_dan(), 1);
  train::TrainConfig cfg;
  cfg.mode = train::Mode::kDirect;
  cfg.window = 5;
  cfg.steps = 1;
  EXPECT_THROW(train::direct_train(params, [&](std::int64_t) -> const auto& { return batch; }, cfg), ConfigError);
}

TEST(Tbptt, ZeroLearningRateIsPureEvaluation) {
  const auto ocfg = small_ods();
  auto params = dan::init_params(small_dan(), 2);
  const Vector before = params.theta();
  train::TrainConfig cfg;
  cfg.steps = 6;
  cfg.batch = 3;
  cfg.lr = 1e-300;  // validation requires lr > 0; this is numerically zero
  ods::TrajectoryStream stream(ocfg, 3, stream::kTrain);
  const auto result = train::tbptt_train(params, stream, cfg);
  EXPECT_LT((params.theta() - before).lpNorm<Eigen::Infinity>(), 1e-290);

  const auto batch = ods::generate_batch(ocfg, 3, 5);
  Matrix h = Matrix::Zero(6, 3);
  for (std::int64_t t = 0; t < 6; ++t) {
    const auto r = dan::dan_cycle(params, h, batch.observations_at(t));
    const double expected = train::instantaneous_loss(r.prior, r.posterior, batch.states_at(t));
    EXPECT_NEAR(result.history[t].loss, expected, 1e-12 * std::abs(expected));
    h = r.post_memory;
  }
}

TEST(Tbptt, CarriedMemoryUsesPreUpdateParameters) {
  const auto ocfg = small_ods();
  auto params = dan::init_params(small_dan(), 3);
  train::TrainConfig cfg;
  cfg.steps = 5;
  cfg.batch = 2;
  cfg.lr = 1e-2;
  ods::TrajectoryStream stream(ocfg, 2, stream::kTrain);
  Matrix previous_out;
  int checked = 0;
  train::Callbacks cb;
  cb.on_step = [&](const train::StepInfo& info) {
    const Matrix hb = dan::propagater_apply(info.params, info.carried_in);
    const Matrix ha = dan::analyzer_apply(info.params, hb, info.observation);
    EXPECT_EQ(info.carried_out, ha);
    if (info.step > 0) EXPECT_EQ(info.carried_in, previous_out);
    previous_out = info.carried_out;
    ++checked;
  };
  train::tbptt_train(params, stream, cfg, cb);
  EXPECT_EQ(checked, 5);
}

TEST(Tbptt, GradientHoldsMemoryConstant) {
  // Two-step toy: the step-1 gradient equals finite differences of L_1 with
  // the carried memory frozen at its step-0 value.
  const auto ocfg = small_ods();
  const dan::DanConfig dcfg = small_dan();
  auto params = dan::init_params(dcfg, 4);
  for (const auto& s : params.layout().slices()) {
    if (s.name.ends_with(".gate")) params.view(s.name)(0, 0) = 0.3;
  }
  Rng init(11);
  params.view("procoder.weight") = 0.3 * gauss::standard_normal(gauss::packed_size(4), 6, init);
  const auto batch = ods::generate_batch(ocfg, 2, 1);
  const Matrix h0 = dan::dan_cycle(params, Matrix::Zero(6, 2), batch.observations_at(0)).post_memory;

  auto loss_at = [&](const Vector& theta, Vector* gradient) {
    grad::Tape tape({theta.data(), static_cast<std::size_t>(theta.size())});
    dan::DanGraph graph(params, tape);
    const auto cl = train::cycle_loss(graph, tape.constant(h0), batch.observations_at(1), batch.states_at(1));
    if (gradient) *gradient = tape.backward(cl.loss).values;
    return tape.scalar(cl.loss);
  };
  Vector g;
  loss_at(params.theta(), &g);
  Rng rng(6);
  const auto coords = grad::sample_coordinates(params.size(), 50, rng);
  const auto res = grad::finite_diff_check([&](const Vector& th) { return loss_at(th, nullptr); }, params.theta(), g,
                                           1e-5, coords, 1e-6);
  EXPECT_LT(res.max_rel_error, 1e-5);
}

TEST(Tbptt, PeakTapeIndependentOfStepCount) {
  const auto ocfg = small_ods();
  std::vector<std::size_t> peaks;
  for (std::int64_t steps : {100, 1000}) {
    auto params = dan::init_params(small_dan(), 5);
    train::TrainConfig cfg;
    cfg.steps = steps;
    cfg.batch = 2;
    cfg.lr = 1e-3;
    ods::TrajectoryStream stream(ocfg, 2, stream::kTrain);
    peaks.push_back(train::tbptt_train(params, stream, cfg).tape.peak_bytes);
  }
  EXPECT_EQ(peaks[0], peaks[1]);
}

TEST(Tbptt, DeterministicHistory) {
  const auto ocfg = small_ods();
  std::vector<std::vector<train::LossRecord>> runs;
  for (int k = 0; k < 2; ++k) {
    auto params = dan::init_params(small_dan(), 6);
    train::TrainConfig cfg;
    cfg.steps = 30;
    cfg.batch = 4;
    cfg.lr = 1e-3;
    ods::TrajectoryStream stream(ocfg, 4, stream::kTrain);
    runs.push_back(train::tbptt_train(params, stream, cfg).history);
  }
  for (std::size_t t = 0; t < runs[0].size(); ++t) {
    EXPECT_EQ(runs[0][t].loss, runs[1][t].loss);
    EXPECT_EQ(runs[0][t].rmse_a, runs[1][t].rmse_a);
  }
}

TEST(Tbptt, NonFiniteLossAbortsWithStep) {
  ods::OdsConfig ocfg = small_ods();
  auto params = dan::init_params(small_dan(), 7);
  params.view("procoder.bias").setConstant(std::numeric_limits<double>::quiet_NaN());
  train::TrainConfig cfg;
  cfg.steps = 3;
  cfg.batch = 2;
  ods::TrajectoryStream stream(ocfg, 2, stream::kTrain);
  try {
    train::tbptt_train(params, stream, cfg);
    FAIL();
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("step 0"), std::string::npos) << e.what();
  }
}

TEST(Tbptt, TestBoundaryCadence) {
  const auto ocfg = small_ods();
  auto params = dan::init_params(small_dan(), 8);
  train::TrainConfig cfg;
  cfg.steps = 10;
  cfg.batch = 2;
  cfg.test_every = 4;
  std::vector<std::int64_t> boundaries;
  train::Callbacks cb;
  cb.on_test_boundary = [&](std::int64_t s, const dan::DanParams&) { boundaries.push_back(s); };
  ods::TrajectoryStream stream(ocfg, 2, stream::kTrain);
  train::tbptt_train(params, stream, cfg, cb);
  EXPECT_EQ(boundaries, (std::vector<std::int64_t>{4, 8}));
}

TEST(RunTest, RecordsPerTimeStep) {
  const auto ocfg = small_ods();
  const auto params = dan::init_params(small_dan(), 9);
  ods::TrajectoryStream stream(ocfg, 1, stream::kTest);
  const auto recs = train::run_test(params, stream, 7);
  ASSERT_EQ(recs.size(), 7u);
  for (std::size_t t = 0; t < recs.size(); ++t) {
    EXPECT_EQ(recs[t].step, static_cast<std::int64_t>(t));
    EXPECT_EQ(recs[t].phase, train::Phase::kTest);
  }
}

TEST(TrainConfig, Validation) {
  train::TrainConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.lr = 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.batch = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.window = -1;
  EXPECT_THROW(cfg.validate(), ConfigError);
}
