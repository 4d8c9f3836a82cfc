#include "tpp/encoder.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "tpp/error.hpp"

namespace tpp {

std::string to_string(PoolKernel k) { return k == PoolKernel::max ? "max" : "average"; }

PoolKernel parse_kernel(const std::string& s) {
  if (s == "max") return PoolKernel::max;
  if (s == "average" || s == "avg" || s == "ave") return PoolKernel::average;
  throw UsageError("unknown pooling kernel '" + s + "'");
}

PyramidConfig PyramidConfig::with_levels(std::size_t levels, PoolKernel kernel) {
  if (levels == 0 || levels > 31) {
    throw DataError("pyramid level count must be in [1, 31], got " +
                    std::to_string(levels));
  }
  PyramidConfig cfg;
  cfg.kernel = kernel;
  cfg.level_bins.clear();
  for (std::size_t i = 0; i < levels; ++i) cfg.level_bins.push_back(std::size_t{1} << i);
  return cfg;
}

std::size_t PyramidConfig::total_bins() const {
  return std::accumulate(level_bins.begin(), level_bins.end(), std::size_t{0});
}

std::size_t PyramidConfig::min_frames() const {
  return level_bins.empty() ? 0 : *std::max_element(level_bins.begin(), level_bins.end());
}

void PyramidConfig::validate() const {
  if (level_bins.empty()) throw DataError("pyramid has no levels");
  for (auto b : level_bins) {
    if (b == 0) throw DataError("pyramid level with zero bins");
  }
}

std::string PyramidConfig::label() const {
  std::ostringstream out;
  for (std::size_t i = 0; i < level_bins.size(); ++i) {
    out << (i ? "," : "") << level_bins[i];
  }
  if (kernel == PoolKernel::average) out << "(Ave)";
  return out.str();
}

std::vector<BinRange> bin_ranges(std::size_t frames, std::size_t bins) {
  if (bins == 0) throw DataError("pyramid level with zero bins");
  if (frames < bins) {
    throw DataError("pyramid level too fine: " + std::to_string(bins) +
                    " bins need at least that many frames, got " +
                    std::to_string(frames));
  }
  std::vector<BinRange> out;
  out.reserve(bins);
  for (std::size_t b = 1; b <= bins; ++b) {
    out.push_back({(b - 1) * frames / bins + 1, b * frames / bins});
  }
  return out;
}

namespace {

// Pools one bin straight into an output row; shared by pool_bin and encode.
void pool_into(PoolKernel kernel, const Matrix& seq, BinRange range,
               std::span<double> out, std::span<std::size_t> argmax) {
  const auto d = seq.cols();
  if (kernel == PoolKernel::max) {
    for (std::size_t k = 0; k < d; ++k) {
      double best = seq(range.first - 1, k);
      std::size_t at = range.first;
      for (std::size_t f = range.first + 1; f <= range.last; ++f) {
        // strict comparison keeps the lowest index on ties
        if (seq(f - 1, k) > best) {
          best = seq(f - 1, k);
          at = f;
        }
      }
      out[k] = best;
      argmax[k] = at;
    }
  } else {
    for (std::size_t k = 0; k < d; ++k) {
      double sum = 0.0;
      for (std::size_t f = range.first; f <= range.last; ++f) sum += seq(f - 1, k);
      out[k] = sum / static_cast<double>(range.length());
    }
  }
}

}  // namespace

PooledBin pool_bin(PoolKernel kernel, const Matrix& seq, BinRange range) {
  if (range.first == 0 || range.first > range.last || range.last > seq.rows()) {
    throw DataError("empty or out-of-range pooling bin");
  }
  PooledBin bin;
  bin.values.resize(seq.cols());
  if (kernel == PoolKernel::max) bin.argmax.resize(seq.cols());
  pool_into(kernel, seq, range, bin.values, bin.argmax);
  return bin;
}

VideoRepresentation encode(const Matrix& seq, const PyramidConfig& config) {
  config.validate();
  if (seq.cols() == 0) throw DataError("invalid dimension: feature dimension is zero");
  if (seq.rows() < config.min_frames()) {
    throw DataError("sequence too short: pyramid level too fine for " +
                    std::to_string(seq.rows()) + " frames (needs " +
                    std::to_string(config.min_frames()) + ")");
  }
  const auto d = seq.cols();
  VideoRepresentation rep;
  rep.values = Matrix(config.total_bins(), d);
  rep.config = config;
  rep.frames = seq.rows();
  if (config.kernel == PoolKernel::max) rep.argmax.resize(rep.values.size());

  std::size_t row = 0;
  for (auto bins : config.level_bins) {
    for (const auto& range : bin_ranges(seq.rows(), bins)) {
      std::span<std::size_t> arg;
      if (!rep.argmax.empty()) arg = std::span(rep.argmax).subspan(row * d, d);
      pool_into(config.kernel, seq, range, rep.values.row(row), arg);
      ++row;
    }
  }
  return rep;
}

Matrix encode_backward(const Matrix& grad, const VideoRepresentation& forward) {
  const auto& config = forward.config;
  const auto d = forward.values.cols();
  if (grad.rows() != forward.values.rows() || grad.cols() != d) {
    std::ostringstream msg;
    msg << "provenance/config mismatch: gradient is " << grad.rows() << "x"
        << grad.cols() << ", representation is " << forward.values.rows() << "x" << d;
    throw DataError(msg.str());
  }
  if (config.kernel == PoolKernel::max && forward.argmax.size() != grad.size()) {
    throw DataError("provenance/config mismatch: missing argmax provenance");
  }

  Matrix out(forward.frames, d);
  std::size_t row = 0;
  for (auto bins : config.level_bins) {
    for (const auto& range : bin_ranges(forward.frames, bins)) {
      const auto g = grad.row(row);
      if (config.kernel == PoolKernel::max) {
        for (std::size_t k = 0; k < d; ++k) {
          out(forward.argmax[row * d + k] - 1, k) += g[k];
        }
      } else {
        const double share = 1.0 / static_cast<double>(range.length());
        for (std::size_t f = range.first; f <= range.last; ++f) {
          auto dst = out.row(f - 1);
          for (std::size_t k = 0; k < d; ++k) dst[k] += g[k] * share;
        }
      }
      ++row;
    }
  }
  return out;
}

Matrix encode_backward(const Matrix& grad, const VideoRepresentation& forward,
                       const PyramidConfig& config, std::size_t frames) {
  if (!(config == forward.config) || frames != forward.frames) {
    throw DataError("provenance/config mismatch: backward config or frame count "
                    "differs from the forward pass");
  }
  return encode_backward(grad, forward);
}

}  // namespace tpp
