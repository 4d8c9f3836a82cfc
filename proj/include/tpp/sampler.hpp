#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace tpp {

enum class SampleMode { random, center };

/// Sparse segment sampling of `segments` frames out of a `frames`-long video.
struct SamplePlan {
  std::size_t frames = 1;
  std::size_t segments = 1;
  SampleMode mode = SampleMode::center;
  std::uint64_t seed = 0;  // random mode only
};

/// Inclusive 1-based frame range of segment k (1-based) when frames >= segments.
struct SegmentRange {
  std::size_t first;
  std::size_t last;
};

SegmentRange segment_range(std::size_t frames, std::size_t segments, std::size_t k);

/// One 1-based frame index per segment, non-decreasing.
///
/// Segment k spans floor((k-1)*t/T)+1 .. floor(k*t/T). Center mode takes the
/// midpoint floor((first+last)/2); random mode draws uniformly inside the
/// segment. Videos shorter than the segment count use
/// min(t, floor((k-1)*t/T)+1) in both modes, duplicating frames in order.
std::vector<std::size_t> segment_indices(const SamplePlan& plan);

}  // namespace tpp
