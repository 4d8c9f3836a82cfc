#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "tpp/encoder.hpp"
#include "tpp/head.hpp"
#include "tpp/matrix.hpp"

namespace tpp {

/// How frame features become class scores.
///   tpp:           pyramid-pool the frames, one prediction per video
///   frame_average: score each frame, average the raw scores (order-blind baseline)
enum class Aggregation { tpp, frame_average };

std::string to_string(Aggregation a);
Aggregation parse_aggregation(const std::string& s);

struct OptimizerState {
  Matrix weight_momentum;
  std::vector<double> bias_momentum;
  double learning_rate = 0.0;
  std::uint64_t iteration = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  std::uint64_t evals_since_improvement = 0;

  bool operator==(const OptimizerState&) const = default;
};

/// Everything needed to resume training or run inference.
struct Checkpoint {
  PyramidConfig pyramid;
  Aggregation mode = Aggregation::tpp;
  std::size_t dim = 0;
  std::size_t classes = 0;
  HeadParams head;
  OptimizerState optimizer;

  /// Width of the head input: M*d for tpp, d for frame_average.
  std::size_t input_size() const;
  /// Throws DataError when the head shape disagrees with pyramid/dim/classes.
  void validate() const;

  bool operator==(const Checkpoint&) const = default;
};

// Checkpoint file: "DTPC" | u16 version | u32 header length | JSON header |
// little-endian f64 payload laid out as listed in the header's "payload" key.
inline constexpr char kCheckpointMagic[4] = {'D', 'T', 'P', 'C'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace tpp
