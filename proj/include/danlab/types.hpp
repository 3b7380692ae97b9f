#pragma once

#include <cstdint>
#include <random>
#include <string>

#include <Eigen/Dense>

namespace danlab {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

using Rng = std::mt19937_64;

// Independent generator for (seed, stream, index). Streams separate
// purposes (training data, test data, ensemble noise); index selects the
// trajectory or member within a stream.
inline Rng make_substream(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return Rng(seq);
}

// Named stream identifiers used by the harness.
namespace stream {
inline constexpr std::uint64_t kTrain = 1;
inline constexpr std::uint64_t kTest = 2;
inline constexpr std::uint64_t kEnsemble = 3;
inline constexpr std::uint64_t kInit = 4;
inline constexpr std::uint64_t kTuning = 5;
}  // namespace stream

inline std::string shape_str(Index rows, Index cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

}  // namespace danlab
