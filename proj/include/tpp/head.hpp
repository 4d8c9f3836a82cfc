#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "tpp/matrix.hpp"

namespace tpp {

/// Fully connected classifier over a flattened representation.
struct HeadParams {
  Matrix weights;             // n × input width
  std::vector<double> bias;   // n
  double dropout_rate = 0.0;  // applied to the input during training only

  std::size_t classes() const { return weights.rows(); }
  std::size_t input_size() const { return weights.cols(); }

  /// Weights uniform on [-a, a] with a = sqrt(1/input_size), zero bias.
  static HeadParams init(std::size_t classes, std::size_t input_size, double dropout_rate,
                         std::uint64_t seed);

  bool operator==(const HeadParams&) const = default;
};

struct Prediction {
  std::vector<double> raw_scores;
  std::vector<double> probabilities;
};

/// Numerically stable softmax (max-subtracted).
std::vector<double> softmax(std::span<const double> scores);

/// raw = W·input + b, probabilities = softmax(raw).
Prediction predict(std::span<const double> input, const HeadParams& params);

/// -log softmax(raw)[label], evaluated by log-sum-exp on the raw scores.
double cross_entropy(std::span<const double> raw_scores, std::size_t label);
double cross_entropy(const Prediction& pred, std::size_t label);

struct HeadGradients {
  Matrix weights;
  std::vector<double> bias;
  std::vector<double> input;
};

/// Softmax cross-entropy gradients; with e = softmax(raw) - onehot(label):
/// dW = e·inputᵀ, db = e, dinput = Wᵀ·e.
HeadGradients head_backward(std::span<const double> input, const HeadParams& params,
                            std::size_t label);

/// Inverted dropout mask: 0 with probability `rate`, else 1/(1-rate).
std::vector<double> dropout_mask(std::size_t length, double rate, std::uint64_t seed);

/// Frame-level baseline: raw scores are the mean over frames of W·S_i + b;
/// softmax is taken after averaging. `params` is n × d.
Prediction frame_average_predict(const Matrix& frames, const HeadParams& params);

}  // namespace tpp
