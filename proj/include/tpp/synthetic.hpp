#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tpp/feature_store.hpp"
#include "tpp/matrix.hpp"
#include "tpp/trainer.hpp"

namespace tpp {

/// Planted temporal structure of a synthetic dataset.
///   separable:   each class has its own mean vector; frames are mean + noise.
///   order_pairs: class 2k plays prototype segment A then B, class 2k+1 plays
///                the exact reversal, so paired classes share every frame and
///                differ only in order.
///   confuser:    the first half of every video is a look-alike segment
///                copied from a randomly chosen other class; only the second
///                half carries the video's own class content.
enum class Structure { separable, order_pairs, confuser };

std::string to_string(Structure s);
Structure parse_structure(const std::string& s);

struct SyntheticSpec {
  std::size_t n_classes = 4;
  std::size_t dim = 16;
  std::size_t frames = 12;
  std::size_t train_per_class = 50;
  std::size_t validation_per_class = 0;
  std::size_t test_per_class = 20;
  double noise = 0.1;
  Structure structure = Structure::order_pairs;
  std::uint16_t variants = 1;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SyntheticVideo {
  std::string video_id;
  std::size_t label = 0;
  Stream stream = Stream::spatial;
  Split split = Split::train;
  FeatureTensor features;
};

/// All videos of both streams and every split, in a fixed order. The
/// temporal stream uses its own prototypes and its own noise.
std::vector<SyntheticVideo> generate_videos(const SyntheticSpec& spec);

/// Noise-free class template of one stream (frames × dim). For confuser
/// data this is the own-class content only, without the look-alike half.
Matrix class_template(const SyntheticSpec& spec, Stream stream, std::size_t label);

/// In-memory training/evaluation set of one stream and split.
VideoSet select_videos(const std::vector<SyntheticVideo>& videos, std::size_t n_classes,
                       Stream stream, Split split);

struct GeneratedDataset {
  std::filesystem::path train;
  std::filesystem::path validation;  // empty when validation_per_class == 0
  std::filesystem::path test;
};

/// Writes feature files under out_dir/features/<stream>/ and one manifest
/// per split (out_dir/<split>.jsonl) with records of both streams.
GeneratedDataset generate(const SyntheticSpec& spec, const std::filesystem::path& out_dir);

}  // namespace tpp
