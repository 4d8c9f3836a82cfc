#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "tpp/checkpoint.hpp"
#include "tpp/feature_store.hpp"
#include "tpp/matrix.hpp"

namespace tpp {

/// Rows of `seq` at the given 1-based frame indices, in order.
Matrix gather_frames(const Matrix& seq, std::span<const std::size_t> indices);

/// Raw class scores for an already sampled T×d sequence (no dropout, no softmax).
std::vector<double> sequence_scores(const Matrix& sampled, const Checkpoint& ckpt);

/// Test-time video prediction: center-sample `segments` frames from each
/// variant, score each variant, and average the raw scores over variants.
std::vector<double> predict_video(const FeatureTensor& features, const Checkpoint& ckpt,
                                  std::size_t segments);

struct FusionWeights {
  double spatial = 0.5;
  double temporal = 0.5;

  void validate() const;
};

/// w_spatial * spatial + w_temporal * temporal, without renormalization.
std::vector<double> fuse_streams(std::span<const double> spatial,
                                 std::span<const double> temporal,
                                 const FusionWeights& weights);

/// Index of the largest score; ties go to the lowest index.
std::size_t argmax(std::span<const double> scores);

struct ScoredVideo {
  std::string video_id;
  std::size_t label = 0;
  std::vector<double> scores;
};

struct ScoreTable {
  std::size_t classes = 0;
  std::vector<ScoredVideo> videos;
};

/// Scores every record of `stream` in the manifest with `ckpt`.
ScoreTable score_videos(const DatasetManifest& manifest, Stream stream,
                        const Checkpoint& ckpt, std::size_t segments,
                        std::size_t threads = 1);

/// Fuses two tables video by video (matched on video_id, spatial order kept).
/// Throws DataError when a video is missing from either table.
ScoreTable fuse_tables(const ScoreTable& spatial, const ScoreTable& temporal,
                       const FusionWeights& weights);

/// Scores file: one JSON object per line {"video_id","label","scores"},
/// preceded by a {"n_classes": n} header line.
void write_scores(const ScoreTable& table, const std::filesystem::path& path);
ScoreTable read_scores(const std::filesystem::path& path);

struct EvalReport {
  std::size_t classes = 0;
  std::size_t videos = 0;
  double overall_accuracy = 0.0;
  std::vector<double> per_class_accuracy;  // 0 for classes without test videos
  std::vector<std::size_t> class_counts;
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
  std::vector<std::size_t> top_k;
  std::vector<double> top_k_accuracy;

  bool operator==(const EvalReport&) const = default;
};

/// Predicted label is argmax of the raw scores. A video is a top-k hit when
/// fewer than k classes outrank its label (higher score, or equal score at a
/// lower index).
EvalReport build_report(const ScoreTable& table, std::span<const std::size_t> top_k = {});

/// Scores the test split with one or two stream checkpoints and reports.
/// With both checkpoints, scores are fused with `weights`.
EvalReport evaluate(const DatasetManifest& test, const Checkpoint* spatial,
                    const Checkpoint* temporal, const FusionWeights& weights,
                    std::size_t segments, std::span<const std::size_t> top_k = {},
                    std::size_t threads = 1);

/// Overall accuracy, per-class table and confusion matrix as plain text.
std::string format_report(const EvalReport& report);
std::string report_json(const EvalReport& report);

}  // namespace tpp
