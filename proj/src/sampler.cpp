#include "tpp/sampler.hpp"

#include <algorithm>
#include <random>
#include <string>

#include "tpp/error.hpp"

namespace tpp {

SegmentRange segment_range(std::size_t frames, std::size_t segments, std::size_t k) {
  return {(k - 1) * frames / segments + 1, k * frames / segments};
}

std::vector<std::size_t> segment_indices(const SamplePlan& plan) {
  const auto t = plan.frames;
  const auto T = plan.segments;
  if (t == 0 || T == 0) {
    throw DataError("invalid sample plan: frames=" + std::to_string(t) +
                    " segments=" + std::to_string(T));
  }
  std::vector<std::size_t> out;
  out.reserve(T);
  if (t < T) {
    for (std::size_t k = 1; k <= T; ++k) out.push_back(std::min(t, (k - 1) * t / T + 1));
    return out;
  }
  std::mt19937_64 rng(plan.seed);
  for (std::size_t k = 1; k <= T; ++k) {
    const auto seg = segment_range(t, T, k);
    if (plan.mode == SampleMode::center) {
      out.push_back((seg.first + seg.last) / 2);
    } else {
      std::uniform_int_distribution<std::size_t> pick(seg.first, seg.last);
      out.push_back(pick(rng));
    }
  }
  return out;
}

}  // namespace tpp
