#include "tpp/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tpp/error.hpp"
#include "tpp/inference.hpp"
#include "tpp/parallel.hpp"
#include "tpp/random.hpp"
#include "tpp/sampler.hpp"

namespace tpp {

namespace {

// Seed salts, so that the streams of random numbers never overlap.
constexpr std::uint64_t kInitSalt = 0x1A17;
constexpr std::uint64_t kShuffleSalt = 0x5AFF;
constexpr std::uint64_t kVideoSalt = 0x7E0;

bool all_finite(std::span<const double> xs) {
  return std::all_of(xs.begin(), xs.end(), [](double x) { return std::isfinite(x); });
}

void check_mask(std::span<const double> mask, std::size_t expected) {
  if (!mask.empty() && mask.size() != expected) {
    throw DataError("dimension mismatch: dropout mask has " + std::to_string(mask.size()) +
                    " entries, expected " + std::to_string(expected));
  }
}

// Head input of one sequence: the (masked) pyramid representation, or the
// mean of the (masked) frames for the frame-average baseline.
struct Aggregated {
  std::vector<double> input;
  VideoRepresentation rep;  // tpp only
};

Aggregated aggregate(const Matrix& seq, const PyramidConfig& pyramid, Aggregation mode,
                     std::span<const double> mask) {
  Aggregated out;
  const auto d = seq.cols();
  if (mode == Aggregation::tpp) {
    out.rep = encode(seq, pyramid);
    const auto flat = out.rep.flat();
    check_mask(mask, flat.size());
    out.input.assign(flat.begin(), flat.end());
    if (!mask.empty()) {
      for (std::size_t j = 0; j < out.input.size(); ++j) out.input[j] *= mask[j];
    }
  } else {
    if (seq.rows() == 0) throw DataError("empty frame sequence");
    check_mask(mask, seq.size());
    out.input.assign(d, 0.0);
    for (std::size_t f = 0; f < seq.rows(); ++f) {
      const auto row = seq.row(f);
      for (std::size_t k = 0; k < d; ++k) {
        out.input[k] += mask.empty() ? row[k] : row[k] * mask[f * d + k];
      }
    }
    for (auto& x : out.input) x /= static_cast<double>(seq.rows());
  }
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw UsageError("invalid training config: " + m); };
  pyramid.validate();
  if (segments == 0) fail("segments must be >= 1");
  if (mode == Aggregation::tpp && segments < pyramid.min_frames()) {
    fail("segments (" + std::to_string(segments) + ") fewer than the finest level's bins (" +
         std::to_string(pyramid.min_frames()) + ")");
  }
  if (batch_size == 0) fail("batch_size must be >= 1");
  if (accumulation_steps == 0 || batch_size % accumulation_steps != 0) {
    fail("accumulation_steps must divide batch_size");
  }
  if (!(initial_lr >= 0.0) || !(final_lr >= 0.0)) fail("learning rates must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) fail("momentum must be in [0, 1)");
  if (!(clip_norm > 0.0)) fail("clip_norm must be > 0");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) fail("dropout must be in [0, 1)");
  if (eval_interval == 0) fail("eval_interval must be >= 1");
  if (patience == 0) fail("patience must be >= 1");
  if (threads == 0) fail("threads must be >= 1");
}

double global_norm(const Gradients& g) {
  double sum = 0.0;
  for (double x : g.weights.flat()) sum += x * x;
  for (double x : g.bias) sum += x * x;
  return std::sqrt(sum);
}

double clip_gradients(Gradients& g, double clip_norm) {
  const double norm = global_norm(g);
  if (norm > clip_norm) {
    const double scale = clip_norm / norm;
    for (auto& x : g.weights.flat()) x *= scale;
    for (auto& x : g.bias) x *= scale;
  }
  return norm;
}

void sgd_step(HeadParams& params, Gradients grads, OptimizerState& state,
              const TrainConfig& config) {
  if (grads.weights.rows() != params.weights.rows() ||
      grads.weights.cols() != params.weights.cols() ||
      grads.bias.size() != params.bias.size()) {
    throw DataError("dimension mismatch: gradient shape differs from parameters");
  }
  if (!all_finite(grads.weights.flat()) || !all_finite(grads.bias)) {
    throw NumericError("non-finite gradient at iteration " +
                       std::to_string(state.iteration));
  }
  clip_gradients(grads, config.clip_norm);
  if (state.weight_momentum.empty()) {
    state.weight_momentum = Matrix(params.weights.rows(), params.weights.cols());
    state.bias_momentum.assign(params.bias.size(), 0.0);
  }
  const double mu = config.momentum;
  const double lr = state.learning_rate;
  auto w = params.weights.flat();
  auto bw = state.weight_momentum.flat();
  const auto gw = grads.weights.flat();
  for (std::size_t i = 0; i < w.size(); ++i) {
    bw[i] = mu * bw[i] + gw[i];
    w[i] -= lr * bw[i];
  }
  for (std::size_t i = 0; i < params.bias.size(); ++i) {
    state.bias_momentum[i] = mu * state.bias_momentum[i] + grads.bias[i];
    params.bias[i] -= lr * state.bias_momentum[i];
  }
}

PlateauEvent plateau_schedule(OptimizerState& state, double val_loss,
                              const TrainConfig& config) {
  if (val_loss < state.best_val_loss - config.min_delta) {
    state.best_val_loss = val_loss;
    state.evals_since_improvement = 0;
    return PlateauEvent::improved;
  }
  if (++state.evals_since_improvement < config.patience) return PlateauEvent::waiting;
  state.evals_since_improvement = 0;
  state.learning_rate /= 10.0;
  return state.learning_rate < config.final_lr ? PlateauEvent::stop : PlateauEvent::decayed;
}

double pipeline_loss(const Matrix& seq, std::size_t label, const HeadParams& head,
                     const PyramidConfig& pyramid, Aggregation mode,
                     std::span<const double> mask) {
  const auto agg = aggregate(seq, pyramid, mode, mask);
  return cross_entropy(predict(agg.input, head), label);
}

PipelineResult pipeline_backward(const Matrix& seq, std::size_t label,
                                 const HeadParams& head, const PyramidConfig& pyramid,
                                 Aggregation mode, std::span<const double> mask) {
  const auto agg = aggregate(seq, pyramid, mode, mask);
  PipelineResult out;
  const auto pred = predict(agg.input, head);
  out.loss = cross_entropy(pred, label);
  out.raw_scores = pred.raw_scores;
  auto hg = head_backward(agg.input, head, label);

  auto& d_input = hg.input;
  const auto d = seq.cols();
  if (mode == Aggregation::tpp) {
    if (!mask.empty()) {
      for (std::size_t j = 0; j < d_input.size(); ++j) d_input[j] *= mask[j];
    }
    out.frames = encode_backward(Matrix(agg.rep.values.rows(), d, d_input), agg.rep);
  } else {
    const double inv = 1.0 / static_cast<double>(seq.rows());
    out.frames = Matrix(seq.rows(), d);
    for (std::size_t f = 0; f < seq.rows(); ++f) {
      for (std::size_t k = 0; k < d; ++k) {
        out.frames(f, k) = d_input[k] * inv * (mask.empty() ? 1.0 : mask[f * d + k]);
      }
    }
  }
  out.head = {std::move(hg.weights), std::move(hg.bias)};
  return out;
}

VideoSet VideoSet::load(const DatasetManifest& manifest, Stream stream) {
  VideoSet set;
  set.classes = manifest.n_classes;
  for (const auto& r : manifest.stream_records(stream)) {
    auto features = read_features(r.path);
    if (set.videos.empty()) {
      set.dim = features.dim();
    } else if (features.dim() != set.dim) {
      throw DataError("dimension mismatch: " + r.path.string() + " has d=" +
                      std::to_string(features.dim()) + ", expected d=" +
                      std::to_string(set.dim));
    }
    set.videos.push_back({r.video_id, r.label, std::move(features)});
  }
  return set;
}

std::string to_json_line(const LogRecord& r) {
  return nlohmann::json{{"iteration", r.iteration},
                        {"split", r.split},
                        {"loss", r.loss},
                        {"accuracy", r.accuracy},
                        {"lr", r.lr}}
      .dump();
}

SetMetrics evaluate_set(const VideoSet& set, const Checkpoint& ckpt, std::size_t segments,
                        std::size_t threads) {
  std::vector<double> losses(set.videos.size());
  std::vector<char> hits(set.videos.size());
  parallel_for(set.videos.size(), threads, [&](std::size_t i) {
    const auto& v = set.videos[i];
    const auto scores = predict_video(v.features, ckpt, segments);
    losses[i] = cross_entropy(scores, v.label);
    hits[i] = argmax(scores) == v.label;
  });
  SetMetrics m;
  if (set.videos.empty()) return m;
  const double n = static_cast<double>(set.videos.size());
  m.loss = std::accumulate(losses.begin(), losses.end(), 0.0) / n;
  m.accuracy = static_cast<double>(std::count(hits.begin(), hits.end(), 1)) / n;
  return m;
}

namespace {

struct VideoStep {
  double loss = 0.0;
  bool correct = false;
  std::vector<double> error;  // softmax - onehot
  std::vector<double> input;  // head input after dropout
};

VideoStep video_step(const LabeledVideo& video, const Checkpoint& ckpt,
                     const TrainConfig& config, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto& f = video.features;
  std::uniform_int_distribution<std::size_t> pick_variant(0, f.variants() - 1);
  const auto variant = pick_variant(rng);
  const auto indices = segment_indices({.frames = f.frames(),
                                        .segments = config.segments,
                                        .mode = SampleMode::random,
                                        .seed = rng()});
  const auto seq = gather_frames(f.variant(variant), indices);
  const std::size_t mask_len =
      config.mode == Aggregation::tpp ? ckpt.input_size() : seq.size();
  const auto mask = dropout_mask(mask_len, config.dropout_rate, rng());

  VideoStep step;
  step.input = aggregate(seq, ckpt.pyramid, ckpt.mode, mask).input;
  const auto pred = predict(step.input, ckpt.head);
  step.loss = cross_entropy(pred, video.label);
  step.correct = argmax(pred.raw_scores) == video.label;
  step.error = pred.probabilities;
  step.error[video.label] -= 1.0;
  return step;
}

}  // namespace

TrainResult train(const VideoSet& train_set, const VideoSet& validation,
                  const TrainConfig& config) {
  config.validate();
  if (train_set.videos.empty()) throw DataError("empty dataset: no training videos");
  if (train_set.classes == 0) throw DataError("training set has no classes");
  if (!validation.videos.empty() &&
      (validation.dim != train_set.dim || validation.classes != train_set.classes)) {
    throw DataError("dimension mismatch: validation set d=" + std::to_string(validation.dim) +
                    " n=" + std::to_string(validation.classes) + ", training set d=" +
                    std::to_string(train_set.dim) + " n=" +
                    std::to_string(train_set.classes));
  }

  TrainResult result;
  auto& ckpt = result.checkpoint;
  ckpt.pyramid = config.pyramid;
  ckpt.mode = config.mode;
  ckpt.dim = train_set.dim;
  ckpt.classes = train_set.classes;
  ckpt.head = HeadParams::init(ckpt.classes, ckpt.input_size(), config.dropout_rate,
                               derive_seed(config.seed, {kInitSalt}));
  auto& state = ckpt.optimizer;
  state.learning_rate = config.initial_lr;
  state.weight_momentum = Matrix(ckpt.classes, ckpt.input_size());
  state.bias_momentum.assign(ckpt.classes, 0.0);

  const auto n_videos = train_set.videos.size();
  std::vector<std::size_t> order(n_videos);
  std::uint64_t epoch = 0;
  std::size_t cursor = n_videos;

  const auto batch = config.batch_size;
  const auto micro = batch / config.accumulation_steps;
  std::vector<std::size_t> members(batch);
  std::vector<VideoStep> steps(batch);
  double window_loss = 0.0, window_acc = 0.0;
  std::uint64_t window = 0;

  while (state.iteration < config.max_iterations) {
    for (auto& m : members) {
      if (cursor == n_videos) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::mt19937_64 shuffle_rng(derive_seed(config.seed, {kShuffleSalt, epoch++}));
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        cursor = 0;
      }
      m = order[cursor++];
    }

    parallel_for(batch, config.threads, [&](std::size_t slot) {
      steps[slot] = video_step(train_set.videos[members[slot]], ckpt, config,
                               derive_seed(config.seed, {kVideoSalt, state.iteration, slot}));
    });

    // Fixed-order reduction: slots within a micro-batch, then micro-batches.
    Gradients total{Matrix(ckpt.classes, ckpt.input_size()),
                    std::vector<double>(ckpt.classes, 0.0)};
    Gradients part = total;
    double loss = 0.0, acc = 0.0;
    for (std::size_t a = 0; a < config.accumulation_steps; ++a) {
      part.weights.fill(0.0);
      std::fill(part.bias.begin(), part.bias.end(), 0.0);
      for (std::size_t slot = a * micro; slot < (a + 1) * micro; ++slot) {
        const auto& s = steps[slot];
        for (std::size_t c = 0; c < ckpt.classes; ++c) {
          auto row = part.weights.row(c);
          for (std::size_t j = 0; j < s.input.size(); ++j) row[j] += s.error[c] * s.input[j];
          part.bias[c] += s.error[c];
        }
        loss += s.loss;
        acc += s.correct ? 1.0 : 0.0;
      }
      auto tw = total.weights.flat();
      const auto pw = part.weights.flat();
      for (std::size_t i = 0; i < tw.size(); ++i) tw[i] += pw[i];
      for (std::size_t c = 0; c < ckpt.classes; ++c) total.bias[c] += part.bias[c];
    }
    const double inv = 1.0 / static_cast<double>(batch);
    for (auto& x : total.weights.flat()) x *= inv;
    for (auto& x : total.bias) x *= inv;
    loss *= inv;
    if (!std::isfinite(loss)) {
      throw NumericError("non-finite training loss at iteration " +
                         std::to_string(state.iteration));
    }

    sgd_step(ckpt.head, std::move(total), state, config);
    ++state.iteration;
    window_loss += loss;
    window_acc += acc * inv;
    ++window;

    const bool at_eval = state.iteration % config.eval_interval == 0;
    const bool last = state.iteration == config.max_iterations;
    if (at_eval || last) {
      result.log.push_back({state.iteration, "train", window_loss / window,
                            window_acc / window, state.learning_rate});
      window_loss = window_acc = 0.0;
      window = 0;
    }
    if (at_eval && !validation.videos.empty()) {
      const auto m = evaluate_set(validation, ckpt, config.segments, config.threads);
      result.log.push_back(
          {state.iteration, "validation", m.loss, m.accuracy, state.learning_rate});
      if (plateau_schedule(state, m.loss, config) == PlateauEvent::stop) {
        result.stopped_by_schedule = true;
        break;
      }
    }
  }
  return result;
}

}  // namespace tpp
