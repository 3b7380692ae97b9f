#include "danlab/oracle.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "danlab/error.hpp"
#include "danlab/train.hpp"

namespace danlab::oracle {

namespace {

constexpr double kScalarCoeff = 0.8;
constexpr double kScalarQ = 0.6;

Matrix random_spd(Index n, Rng& rng) {
  const Matrix a = gauss::standard_normal(n, n, rng);
  return a * a.transpose() + static_cast<double>(n) * Matrix::Identity(n, n);
}

// Mean followed by the lower triangle of the covariance, column by column.
Vector moment_stats(const gauss::MeanCov& mc) {
  const Index n = mc.dim();
  Vector s(n + n * (n + 1) / 2);
  Index k = 0;
  for (Index i = 0; i < n; ++i) s(k++) = mc.mean(i);
  for (Index c = 0; c < n; ++c) {
    for (Index r = c; r < n; ++r) s(k++) = mc.cov(r, c);
  }
  return s;
}

}  // namespace

bool Report::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
}

std::vector<std::string> Report::failed() const {
  std::vector<std::string> names;
  for (const auto& c : checks) {
    if (!c.passed) names.push_back(c.name);
  }
  return names;
}

std::string Report::text() const {
  std::string out;
  char buf[320];
  for (const auto& c : checks) {
    std::snprintf(buf, sizeof buf, "%s %-18s measured %.3e (tolerance %.1e) %s\n", c.passed ? "PASS" : "FAIL",
                  c.name.c_str(), c.measured, c.tolerance, c.detail.c_str());
    out += buf;
  }
  return out;
}

ods::OdsConfig scalar_linear_ods(std::uint64_t seed) {
  ods::OdsConfig cfg;
  cfg.model = ods::Model::kLinear;
  cfg.n = 1;
  cfg.d = 1;
  cfg.linear_coeff = kScalarCoeff;
  cfg.q = kScalarQ;
  cfg.r = 1.0;
  cfg.burn_in = 0;
  cfg.init_mean = 0.0;
  cfg.seed = seed;
  return cfg;
}

GridKfComparison grid_vs_kf(std::int64_t cycles, Index points, std::uint64_t seed, const Hooks& hooks) {
  const ods::OdsConfig cfg = scalar_linear_ods(seed);
  const double stationary_sd = cfg.q / std::sqrt(1.0 - cfg.linear_coeff * cfg.linear_coeff);
  const double half_width = 10.0 * stationary_sd;

  filters::LinearGaussianModel model;
  model.M = Matrix::Constant(1, 1, cfg.linear_coeff);
  model.H = Matrix::Identity(1, 1);
  model.Q = Matrix::Constant(1, 1, cfg.q * cfg.q);
  model.R = Matrix::Constant(1, 1, cfg.r * cfg.r);

  const double q2 = cfg.q * cfg.q;
  const double r2 = cfg.r * cfg.r;
  const double a = cfg.linear_coeff;
  const filters::Likelihood likelihood = [r2](double y, double x) { return std::exp(-0.5 * (y - x) * (y - x) / r2); };
  const filters::Kernel kernel = [a, q2](double to, double from) {
    const double e = to - a * from;
    return std::exp(-0.5 * e * e / q2) / std::sqrt(2.0 * std::numbers::pi * q2);
  };

  gauss::MeanCov kf_prior{Vector::Constant(1, cfg.init_mean), Matrix::Identity(1, 1)};
  filters::GridDensity grid_prior = filters::grid_from_gaussian(-half_width, half_width, points, cfg.init_mean, 1.0);
  const Matrix transition = filters::transition_matrix(grid_prior, kernel);

  ods::TrajectoryStream stream(cfg, 1, stream::kTest);
  Matrix x;
  Matrix y;
  GridKfComparison out;
  for (std::int64_t t = 0; t < cycles; ++t) {
    stream.next(x, y);
    const gauss::MeanCov kf_post = hooks.kf_analysis(kf_prior, y.col(0), model);
    const filters::GridDensity grid_post = filters::grid_analysis(grid_prior, y(0, 0), likelihood);

    const double mu = kf_post.mean(0);
    const double var = kf_post.cov(0, 0);
    out.kf_means.push_back(mu);
    out.kf_vars.push_back(var);
    out.grid_means.push_back(grid_post.mean());
    out.grid_vars.push_back(grid_post.variance());
    const double mean_scale = std::max(std::abs(mu), std::sqrt(std::max(var, 0.0)));
    out.mean_rel_error = std::max(out.mean_rel_error, std::abs(grid_post.mean() - mu) / mean_scale);
    out.var_rel_error = std::max(out.var_rel_error, std::abs(grid_post.variance() - var) / std::abs(var));
    if (!std::isfinite(out.mean_rel_error) || !std::isfinite(out.var_rel_error)) {
      out.mean_rel_error = out.var_rel_error = std::numeric_limits<double>::infinity();
    }

    kf_prior = filters::kf_propagate(kf_post, model);
    filters::GridPropagationReport report;
    grid_prior = filters::grid_propagate(grid_post, transition, &report);
    out.min_retained_mass = std::min(out.min_retained_mass, report.retained_mass);
  }
  return out;
}

EnkfKfComparison enkf_vs_kf(Index members, int replications, std::uint64_t seed, const Hooks& hooks) {
  if (replications < 2) throw ConfigError("enkf_vs_kf needs at least two replications");
  Rng setup = make_substream(seed, stream::kTuning, 77);
  filters::LinearGaussianModel model;
  model.M = Matrix::Identity(2, 2);
  model.H = Matrix{{1.0, 0.5}, {0.0, 1.0}};
  model.Q = Matrix::Zero(2, 2);
  model.R = Matrix{{0.5, 0.1}, {0.1, 0.8}};
  const gauss::MeanCov prior{Vector{{1.0, -2.0}}, Matrix{{2.0, 0.6}, {0.6, 1.0}}};
  const Vector y = gauss::sample(gauss::MeanCov{model.H * prior.mean, model.H * prior.cov * model.H.transpose() + model.R},
                                 setup, 1)
                       .col(0);

  EnkfKfComparison out;
  out.kf_stats = moment_stats(hooks.kf_analysis(prior, y, model));
  const Index k = out.kf_stats.size();
  Matrix stats(k, replications);
  for (int rep = 0; rep < replications; ++rep) {
    Rng rng = make_substream(seed, stream::kEnsemble, 500 + static_cast<std::uint64_t>(rep));
    const filters::Ensemble ens{gauss::sample(prior, rng, members)};
    const filters::Ensemble post = filters::enkf_analysis(ens, y, model, rng);
    stats.col(rep) = moment_stats(filters::enkf_moments(post));
  }
  const Vector pooled = stats.rowwise().mean();
  out.standard_errors = Vector(k);
  for (Index i = 0; i < k; ++i) {
    const double ss = (stats.row(i).array() - pooled(i)).square().sum();
    out.standard_errors(i) = std::sqrt(ss / static_cast<double>(replications - 1));
  }
  out.first_stats = stats.col(0);
  const double root_r = std::sqrt(static_cast<double>(replications));
  for (Index i = 0; i < k; ++i) {
    out.max_z = std::max(out.max_z, std::abs(out.first_stats(i) - out.kf_stats(i)) / out.standard_errors(i));
    out.pooled_max_z =
        std::max(out.pooled_max_z, std::abs(pooled(i) - out.kf_stats(i)) / (out.standard_errors(i) / root_r));
  }
  if (!std::isfinite(out.max_z)) out.max_z = std::numeric_limits<double>::infinity();
  return out;
}

double enkf_moments_error(Index n, Index members, std::uint64_t seed) {
  Rng rng = make_substream(seed, stream::kTuning, 11);
  Matrix x = gauss::standard_normal(n, members, rng);
  for (Index j = 0; j < members; ++j) x.col(j).array() += 50.0;  // large offset stresses cancellation
  const gauss::MeanCov got = filters::enkf_moments(filters::Ensemble{x});

  std::vector<double> mean(static_cast<std::size_t>(n), 0.0);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < members; ++j) mean[i] += x(i, j);
    mean[i] /= static_cast<double>(members);
  }
  double err = 0.0;
  for (Index i = 0; i < n; ++i) {
    err = std::max(err, std::abs(got.mean(i) - mean[i]));
    for (Index c = 0; c < n; ++c) {
      double s = 0.0;
      for (Index j = 0; j < members; ++j) s += (x(i, j) - mean[i]) * (x(c, j) - mean[c]);
      s /= static_cast<double>(members - 1);
      err = std::max(err, std::abs(got.cov(i, c) - s));
    }
  }
  return err;
}

double kf_gain_form_error(Index n, Index d, std::uint64_t seed, const Hooks& hooks) {
  Rng rng = make_substream(seed, stream::kTuning, 12);
  filters::LinearGaussianModel model;
  model.M = Matrix::Identity(n, n);
  model.H = gauss::standard_normal(d, n, rng);
  model.Q = Matrix::Zero(n, n);
  model.R = random_spd(d, rng);
  const gauss::MeanCov prior{gauss::standard_normal(n, 1, rng).col(0), random_spd(n, rng)};
  const Vector y = gauss::standard_normal(d, 1, rng).col(0);

  const gauss::MeanCov got = hooks.kf_analysis(prior, y, model);
  const Matrix s = model.H * prior.cov * model.H.transpose() + model.R;
  const Matrix gain = prior.cov * model.H.transpose() * s.inverse();
  const Vector mean = prior.mean + gain * (y - model.H * prior.mean);
  const Matrix cov = (Matrix::Identity(n, n) - gain * model.H) * prior.cov;
  const double scale = std::max(1.0, cov.cwiseAbs().maxCoeff());
  return std::max((got.mean - mean).cwiseAbs().maxCoeff(), (got.cov - cov).cwiseAbs().maxCoeff() / scale);
}

double log_density_error(Index n, std::uint64_t seed) {
  Rng rng = make_substream(seed, stream::kTuning, 13);
  Vector packed = gauss::standard_normal(gauss::packed_size(n), 1, rng).col(0) * 0.5;
  const gauss::CholGaussian g = gauss::vector_to_gaussian(packed);
  const Vector x = gauss::standard_normal(n, 1, rng).col(0);
  const Matrix cov = g.scale * g.scale.transpose();
  const Vector e = x - g.mean;
  const double quad = e.dot(cov.inverse() * e);
  const double dense = -0.5 * (quad + std::log(cov.determinant()) + static_cast<double>(n) * std::log(2.0 * std::numbers::pi));
  return std::abs(gauss::log_density(g, x) - dense) / std::max(1.0, std::abs(dense));
}

grad::FiniteDiffResult dan_gradient_check(const dan::DanConfig& cfg, Index batch, Index coordinates, double h,
                                          double floor, std::uint64_t seed) {
  dan::DanParams params = dan::init_params(cfg, seed);
  Rng rng = make_substream(seed, stream::kTuning, 14);
  std::uniform_real_distribution<double> gate(-0.5, 0.5);
  for (const auto& slice : params.layout().slices()) {
    if (slice.name.ends_with(".gate")) params.view(slice.name)(0, 0) = gate(rng);
  }
  // The procoder initializes to zero; give it weights so every layer carries gradient.
  const double bound = 1.0 / std::sqrt(static_cast<double>(cfg.m));
  std::uniform_real_distribution<double> weight(-bound, bound);
  for (const char* name : {"procoder.weight", "procoder.bias"}) {
    auto v = params.view(name);
    for (Index k = 0; k < v.size(); ++k) v.data()[k] = weight(rng);
  }
  const Matrix memory = gauss::standard_normal(cfg.m, batch, rng);
  const Matrix obs = gauss::standard_normal(cfg.d, batch, rng) * 2.0;
  const Matrix states = gauss::standard_normal(cfg.n, batch, rng) * 2.0;

  // Loss and kink pattern at a given theta.
  auto evaluate = [&](const Vector& theta, std::vector<bool>* pattern, Vector* gradient) {
    grad::Tape tape({theta.data(), static_cast<std::size_t>(theta.size())});
    tape.set_track_kinks(pattern != nullptr);
    dan::DanGraph graph(params, tape);
    const train::CycleLoss cl = train::cycle_loss(graph, tape.constant(memory), obs, states);
    if (pattern) *pattern = tape.kink_pattern();
    if (gradient) *gradient = tape.backward(cl.loss).values;
    return tape.scalar(cl.loss);
  };

  const Vector theta = params.theta();
  std::vector<bool> base_pattern;
  Vector gradient;
  evaluate(theta, &base_pattern, &gradient);

  const auto admissible = [&](Index k) {
    for (const double sign : {1.0, -1.0}) {
      Vector shifted = theta;
      shifted(k) += sign * h;
      std::vector<bool> pattern;
      evaluate(shifted, &pattern, nullptr);
      if (pattern != base_pattern) return false;
    }
    return true;
  };
  const std::vector<Index> coords = grad::sample_coordinates(theta.size(), coordinates, rng, admissible);
  const grad::Objective f = [&](const Vector& th) { return evaluate(th, nullptr, nullptr); };
  return grad::finite_diff_check(f, theta, gradient, h, coords, floor);
}

Report run_oracle_suite(const Hooks& hooks, std::uint64_t seed, const Log& log) {
  Report report;
  auto add = [&](CheckResult c) {
    if (log) {
      char buf[256];
      std::snprintf(buf, sizeof buf, "%s %s: %.3e (tolerance %.1e) %s", c.passed ? "PASS" : "FAIL", c.name.c_str(),
                    c.measured, c.tolerance, c.detail.c_str());
      log(buf);
    }
    report.checks.push_back(std::move(c));
  };
  auto guarded = [&](const std::string& name, double tolerance, const std::function<CheckResult()>& body) {
    try {
      add(body());
    } catch (const std::exception& e) {
      add({name, false, std::numeric_limits<double>::infinity(), tolerance, std::string("threw: ") + e.what()});
    }
  };

  guarded("log_density", 1e-10, [&] {
    double err = 0.0;
    for (std::uint64_t k = 0; k < 5; ++k) err = std::max(err, log_density_error(5, seed + k));
    return CheckResult{"log_density", err < 1e-10, err, 1e-10, "5-D dense covariance"};
  });
  guarded("kf_analysis", 1e-9, [&] {
    double err = 0.0;
    for (std::uint64_t k = 0; k < 5; ++k) err = std::max(err, kf_gain_form_error(3, 3, seed + k, hooks));
    return CheckResult{"kf_analysis", err < 1e-9, err, 1e-9, "3-D information vs gain form"};
  });
  guarded("grid_vs_kf", 1e-3, [&] {
    const auto cmp = grid_vs_kf(100, 2001, seed, hooks);
    const double err = std::max(cmp.mean_rel_error, cmp.var_rel_error);
    char detail[128];
    std::snprintf(detail, sizeof detail, "100 cycles, K=2001 (mean %.2e, variance %.2e)", cmp.mean_rel_error,
                  cmp.var_rel_error);
    return CheckResult{"grid_vs_kf", err < 1e-3, err, 1e-3, detail};
  });
  guarded("enkf_moments", 1e-12, [&] {
    const double err = enkf_moments_error(3, 1000, seed);
    return CheckResult{"enkf_moments", err < 1e-12, err, 1e-12, "two-pass loop"};
  });
  guarded("enkf_analysis", 3.0, [&] {
    const auto cmp = enkf_vs_kf(10000, 16, seed, hooks);
    char detail[128];
    std::snprintf(detail, sizeof detail, "m=10000, z-score vs KF (pooled over 16: %.2f)", cmp.pooled_max_z);
    return CheckResult{"enkf_analysis", cmp.max_z < 3.0, cmp.max_z, 3.0, detail};
  });
  guarded("gradient", 1e-4, [&] {
    const dan::DanConfig cfg{16, 4, 4, 3, 0.01};
    const auto fd = dan_gradient_check(cfg, 3, 200, 1e-5, 1e-6, seed);
    char detail[128];
    std::snprintf(detail, sizeof detail, "one-cycle DAN loss, %lld coordinates", static_cast<long long>(fd.checked));
    return CheckResult{"gradient", fd.max_rel_error < 1e-4 && fd.checked == 200, fd.max_rel_error, 1e-4, detail};
  });
  return report;
}

}  // namespace danlab::oracle
