#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "danlab/dan.hpp"
#include "danlab/ods.hpp"
#include "danlab/train.hpp"

namespace danlab::config {

struct BaselineConfig {
  std::int64_t members = 20;
  std::vector<double> inflation = {1.00, 1.02, 1.04, 1.06, 1.08, 1.10};
};

// One experiment: sections [ods], [dan], [train], [baseline], [run] of a
// plain key = value file. A single [run] seed drives every random stream.
struct ExperimentConfig {
  ods::OdsConfig ods;
  dan::DanConfig dan;
  train::TrainConfig train;
  BaselineConfig baseline;
  std::uint64_t seed = 0;
  std::string out = "out";
  int threads = 1;

  // Propagates seed to the sub-configs and checks cross-field consistency.
  void finalize();
};

ExperimentConfig parse(const std::string& text);
ExperimentConfig load(const std::filesystem::path& path);
std::string to_text(const ExperimentConfig& cfg);

}  // namespace danlab::config
