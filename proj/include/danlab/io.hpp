#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "danlab/dan.hpp"
#include "danlab/ods.hpp"

// Binary formats (all integers u64, all reals f64, little-endian):
//
//   trajectory file:  "DANTRAJ1" I (T+1) n d  states[I][T+1][n]  observations[I][T+1][d]
//   parameter file:   "DANPARM1" m n d depth slope(f64)  theta[size]
//
// theta follows the DanParams layout; packed Gaussian outputs of the
// procoder use the order documented in gauss.hpp.
namespace danlab::io {

inline constexpr char kTrajectoryMagic[8] = {'D', 'A', 'N', 'T', 'R', 'A', 'J', '1'};
inline constexpr char kParamsMagic[8] = {'D', 'A', 'N', 'P', 'A', 'R', 'M', '1'};

std::vector<std::uint8_t> encode_batch(const ods::TrajectoryBatch& batch);
ods::TrajectoryBatch decode_batch(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> encode_params(const dan::DanParams& params);
dan::DanParams decode_params(std::span<const std::uint8_t> bytes);

void write_batch(const ods::TrajectoryBatch& batch, const std::filesystem::path& path);
ods::TrajectoryBatch read_batch(const std::filesystem::path& path);

void write_params(const dan::DanParams& params, const std::filesystem::path& path);
dan::DanParams read_params(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace danlab::io
