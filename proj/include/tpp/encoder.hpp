#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "tpp/matrix.hpp"

namespace tpp {

enum class PoolKernel { max, average };

std::string to_string(PoolKernel k);
PoolKernel parse_kernel(const std::string& s);

/// Temporal pyramid layout. `level_bins` lists the bin count of every level,
/// coarsest first; a standard K-level pyramid is {1, 2, 4, ..., 2^(K-1)}.
/// Non-dyadic layouts (e.g. a single level of 3 bins) are allowed for ablations.
struct PyramidConfig {
  std::vector<std::size_t> level_bins{1, 2, 4};
  PoolKernel kernel = PoolKernel::max;

  static PyramidConfig with_levels(std::size_t levels, PoolKernel kernel = PoolKernel::max);

  /// Total bin count M (2^K - 1 for a standard pyramid).
  std::size_t total_bins() const;
  /// Shortest sequence every bin can cover with at least one frame.
  std::size_t min_frames() const;
  /// Flattened representation length M*d.
  std::size_t representation_size(std::size_t dim) const { return total_bins() * dim; }

  /// Throws DataError on an empty layout or a zero-bin level.
  void validate() const;

  /// "1,2,4" style label; "(Ave)" is appended for the average kernel.
  std::string label() const;

  bool operator==(const PyramidConfig&) const = default;
};

/// Inclusive 1-based frame range of one temporal bin.
struct BinRange {
  std::size_t first;
  std::size_t last;
  std::size_t length() const { return last - first + 1; }
  bool operator==(const BinRange&) const = default;
};

/// Bin b (1-based) of an n-bin level covers floor((b-1)T/n)+1 .. floor(bT/n).
/// Throws DataError("pyramid level too fine") when T < n.
std::vector<BinRange> bin_ranges(std::size_t frames, std::size_t bins);

/// Pooled value of one bin. For max pooling `argmax` holds, per dimension,
/// the smallest 1-based frame index attaining the maximum; empty otherwise.
struct PooledBin {
  std::vector<double> values;
  std::vector<std::size_t> argmax;
};

PooledBin pool_bin(PoolKernel kernel, const Matrix& seq, BinRange range);

/// Output of the pyramid encoder: an M×d matrix, levels in order and bins in
/// temporal order within each level, plus what backward needs.
struct VideoRepresentation {
  Matrix values;
  std::vector<std::size_t> argmax;  // M×d, 1-based frame indices; max kernel only
  PyramidConfig config;
  std::size_t frames = 0;

  std::span<const double> flat() const { return values.flat(); }
};

VideoRepresentation encode(const Matrix& seq, const PyramidConfig& config);

/// Routes dL/dP (M×d) back to the T frames. Average bins spread the gradient
/// evenly over their frames; max bins send it to the recorded argmax frame.
/// Contributions of all levels are summed.
Matrix encode_backward(const Matrix& grad, const VideoRepresentation& forward);

/// Same, with an explicit check that `config` and `frames` match the forward pass.
Matrix encode_backward(const Matrix& grad, const VideoRepresentation& forward,
                       const PyramidConfig& config, std::size_t frames);

}  // namespace tpp
