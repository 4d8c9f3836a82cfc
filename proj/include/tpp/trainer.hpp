#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "tpp/checkpoint.hpp"
#include "tpp/encoder.hpp"
#include "tpp/feature_store.hpp"
#include "tpp/head.hpp"
#include "tpp/matrix.hpp"

namespace tpp {

struct TrainConfig {
  std::size_t segments = 25;
  PyramidConfig pyramid;
  Aggregation mode = Aggregation::tpp;
  std::size_t batch_size = 128;        // videos per parameter update
  std::size_t accumulation_steps = 1;  // micro-batch = batch_size / accumulation_steps
  double initial_lr = 0.01;
  double final_lr = 1e-5;
  double momentum = 0.9;
  double clip_norm = 40.0;
  double dropout_rate = 0.8;
  std::uint64_t max_iterations = 1000;
  std::size_t patience = 3;
  double min_delta = 1e-4;
  std::uint64_t eval_interval = 50;
  std::uint64_t seed = 0;
  std::size_t threads = 1;

  /// Throws UsageError on out-of-range settings.
  void validate() const;
};

/// Gradients of the trainable head parameters.
struct Gradients {
  Matrix weights;
  std::vector<double> bias;
};

double global_norm(const Gradients& g);

/// Rescales all tensors by clip_norm/norm when the global L2 norm exceeds
/// clip_norm. Returns the pre-clip norm.
double clip_gradients(Gradients& g, double clip_norm);

/// Clips, then buf <- momentum*buf + g and param <- param - lr*buf.
/// Throws NumericError on non-finite gradients.
void sgd_step(HeadParams& params, Gradients grads, OptimizerState& state,
              const TrainConfig& config);

enum class PlateauEvent { improved, waiting, decayed, stop };

/// Records a validation loss. After `patience` evaluations without an
/// improvement larger than min_delta the learning rate drops 10x; `stop`
/// is returned once it falls below final_lr.
PlateauEvent plateau_schedule(OptimizerState& state, double val_loss,
                              const TrainConfig& config);

/// Loss and gradients of one sampled sequence through aggregation, dropout
/// and the head. `mask` is the dropout mask (empty for none): M*d entries in
/// tpp mode, T*d (one row per frame) in frame-average mode.
struct PipelineResult {
  double loss = 0.0;
  std::vector<double> raw_scores;
  Gradients head;
  Matrix frames;  // dL/dS, T×d
};

double pipeline_loss(const Matrix& seq, std::size_t label, const HeadParams& head,
                     const PyramidConfig& pyramid, Aggregation mode,
                     std::span<const double> mask = {});

PipelineResult pipeline_backward(const Matrix& seq, std::size_t label,
                                 const HeadParams& head, const PyramidConfig& pyramid,
                                 Aggregation mode, std::span<const double> mask = {});

struct LabeledVideo {
  std::string video_id;
  std::size_t label = 0;
  FeatureTensor features;
};

/// In-memory copy of one stream of a manifest.
struct VideoSet {
  std::size_t classes = 0;
  std::size_t dim = 0;
  std::vector<LabeledVideo> videos;

  static VideoSet load(const DatasetManifest& manifest, Stream stream);
};

struct LogRecord {
  std::uint64_t iteration = 0;
  std::string split;
  double loss = 0.0;
  double accuracy = 0.0;
  double lr = 0.0;
};

std::string to_json_line(const LogRecord& r);

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<LogRecord> log;
  bool stopped_by_schedule = false;
};

/// Momentum SGD over the head, one update per batch. Deterministic given
/// the config seed, independent of `threads`. `validation` may be empty; it
/// drives the plateau schedule every eval_interval iterations.
TrainResult train(const VideoSet& train_set, const VideoSet& validation,
                  const TrainConfig& config);

/// Mean cross-entropy and accuracy of test-time predictions.
struct SetMetrics {
  double loss = 0.0;
  double accuracy = 0.0;
};

SetMetrics evaluate_set(const VideoSet& set, const Checkpoint& ckpt, std::size_t segments,
                        std::size_t threads = 1);

}  // namespace tpp
