#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "danlab/config.hpp"
#include "danlab/filters.hpp"
#include "danlab/train.hpp"

namespace danlab::harness {

using Log = std::function<void(const std::string&)>;

// CSV stream "phase,step,L_t,rmse_b,rmse_a", flushed after every row.
class MetricsWriter {
 public:
  explicit MetricsWriter(const std::filesystem::path& path);
  void write(const train::LossRecord& record);
  void write(const std::vector<train::LossRecord>& records);

 private:
  std::ofstream out_;
};

std::string format_row(const train::LossRecord& record);

// Time averages over a block of records.
struct Averages {
  double loss = 0.0;
  double rmse_b = 0.0;
  double rmse_a = 0.0;
};
Averages average(const std::vector<train::LossRecord>& records);

// The linear-Gaussian model matching an identity-observed ODS
// (M = linear_coeff I, H = I, Q = q^2 I, R = r^2 I).
filters::LinearGaussianModel linear_model(const ods::OdsConfig& cfg);

// Stochastic EnKF on one trajectory of the stream, starting from an
// ensemble drawn around the first true state with unit spread. Records
// carry NaN loss; a diverged run yields infinite rmse from that step on.
std::vector<train::LossRecord> run_enkf(const ods::OdsConfig& cfg, ods::TrajectoryStream& stream, std::int64_t steps,
                                        std::int64_t members, double inflation, std::uint64_t ensemble_index);

// Exact Kalman filter on a linear ODS stream, with the true initial prior.
std::vector<train::LossRecord> run_kf(const ods::OdsConfig& cfg, ods::TrajectoryStream& stream, std::int64_t steps);

// Reference filter on test trajectory test_index: the exact KF for linear
// models, otherwise the EnKF at each inflation of the grid, keeping the run
// with the lowest time-averaged posterior rmse.
struct BaselineRun {
  double inflation = 1.0;
  std::vector<train::LossRecord> records;
};
BaselineRun run_reference(const config::ExperimentConfig& cfg, std::uint64_t test_index, std::int64_t steps,
                          Log log = {});

struct TestSummary {
  std::int64_t completed_steps = 0;
  Averages dan;
  double first_rmse_b = 0.0;
  double first_rmse_a = 0.0;
  Averages baseline;
  double inflation = 1.0;
  std::vector<train::LossRecord> records;
  std::vector<train::LossRecord> baseline_records;
};

struct ExperimentResult {
  std::vector<train::LossRecord> train_history;
  std::vector<TestSummary> tests;
  train::TapeStats tape;
};

// Data generation, training, periodic frozen-weight tests with baselines,
// metrics.csv and checkpoints under out_dir.
ExperimentResult run_twin_experiment(const config::ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                                     Log log = {});

// Frozen-weight test of a checkpoint on test trajectory 0, with baseline rows.
TestSummary run_checkpoint_test(const config::ExperimentConfig& cfg, const std::filesystem::path& checkpoint,
                                const std::filesystem::path& out_dir, Log log = {});

// Baseline filter (EnKF, or KF for linear models) on test trajectory 0.
TestSummary run_baseline(const config::ExperimentConfig& cfg, const std::filesystem::path& out_dir, Log log = {});

void run_generate(const config::ExperimentConfig& cfg, std::int64_t count, std::int64_t horizon,
                  const std::filesystem::path& path);

}  // namespace danlab::harness
