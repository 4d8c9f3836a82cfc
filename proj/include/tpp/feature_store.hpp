#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "tpp/matrix.hpp"

namespace tpp {

// On-disk feature file, all fields little-endian:
//   "DTPF" | u16 version | u32 dim | u32 frames | u16 variants | f32 payload
// The payload is frame-major, then variant, then dimension.
inline constexpr char kFeatureMagic[4] = {'D', 'T', 'P', 'F'};
inline constexpr std::uint16_t kFeatureVersion = 1;
inline constexpr std::size_t kFeatureHeaderBytes = 4 + 2 + 4 + 4 + 2;

/// Per-frame features of one video at rest, including every crop variant.
/// Values stay in 32-bit storage precision; variant() widens to double.
class FeatureTensor {
 public:
  FeatureTensor() = default;
  FeatureTensor(std::uint32_t frames, std::uint16_t variants, std::uint32_t dim);
  FeatureTensor(std::uint32_t frames, std::uint16_t variants, std::uint32_t dim,
                std::vector<float> values);

  /// Single-variant tensor from a T×d matrix (narrowed to float).
  static FeatureTensor from_sequence(const Matrix& seq);
  /// Stacks equally shaped T×d matrices as variants.
  static FeatureTensor from_variants(std::span<const Matrix> variants);

  std::uint32_t frames() const noexcept { return frames_; }
  std::uint16_t variants() const noexcept { return variants_; }
  std::uint32_t dim() const noexcept { return dim_; }

  float& at(std::size_t frame, std::size_t variant, std::size_t k) {
    return values_[(frame * variants_ + variant) * dim_ + k];
  }
  float at(std::size_t frame, std::size_t variant, std::size_t k) const {
    return values_[(frame * variants_ + variant) * dim_ + k];
  }

  /// T×d sequence of one variant, in 64-bit.
  Matrix variant(std::size_t v) const;

  std::span<const float> values() const noexcept { return values_; }

  bool operator==(const FeatureTensor&) const = default;

 private:
  std::uint32_t frames_ = 0;
  std::uint16_t variants_ = 0;
  std::uint32_t dim_ = 0;
  std::vector<float> values_;
};

void write_features(const FeatureTensor& features, const std::filesystem::path& path);
FeatureTensor read_features(const std::filesystem::path& path);

struct FeatureHeader {
  std::uint16_t version = 0;
  std::uint32_t dim = 0;
  std::uint32_t frames = 0;
  std::uint16_t variants = 0;
};

/// Reads and validates only the header (used for manifest checks).
FeatureHeader read_feature_header(const std::filesystem::path& path);

enum class Stream { spatial, temporal };
enum class Split { train, validation, test };

std::string to_string(Stream s);
std::string to_string(Split s);
Stream parse_stream(const std::string& s);
Split parse_split(const std::string& s);

struct VideoRecord {
  std::string video_id;
  std::size_t label = 0;
  Stream stream = Stream::spatial;
  std::filesystem::path path;  // resolved against the manifest base directory
  std::size_t frames = 0;
};

struct DatasetManifest {
  std::size_t n_classes = 0;
  Split split = Split::train;
  std::vector<VideoRecord> records;

  /// Records of a single stream, in manifest order.
  std::vector<VideoRecord> stream_records(Stream s) const;
};

/// Loads a line-delimited JSON manifest. An optional header line carrying
/// `n_classes` (and optionally `split`) precedes the records; each record has
/// `video_id`, `label`, `stream`, `path`, `frames`. Unknown fields are ignored.
/// Relative paths resolve against `base_dir`, or the manifest's directory
/// when `base_dir` is empty. All invariants are checked eagerly.
DatasetManifest load_manifest(const std::filesystem::path& path,
                              const std::filesystem::path& base_dir = {});

/// Writes the header line followed by one record per line. Record paths are
/// written relative to `base_dir` when they live under it.
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path,
                   const std::filesystem::path& base_dir = {});

}  // namespace tpp
