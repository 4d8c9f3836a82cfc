#include "tpp/head.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "tpp/error.hpp"

namespace tpp {

namespace {

void check_input(std::span<const double> input, const HeadParams& params) {
  if (input.size() != params.input_size() || params.bias.size() != params.classes()) {
    std::ostringstream msg;
    msg << "dimension mismatch: head expects input of " << params.input_size()
        << ", got " << input.size();
    throw DataError(msg.str());
  }
}

void check_label(std::size_t label, std::size_t classes) {
  if (label >= classes) {
    throw DataError("label out of range: " + std::to_string(label) +
                    " with n_classes=" + std::to_string(classes));
  }
}

std::vector<double> raw_scores(std::span<const double> input, const HeadParams& params) {
  std::vector<double> raw(params.classes());
  for (std::size_t c = 0; c < raw.size(); ++c) {
    const auto w = params.weights.row(c);
    double acc = params.bias[c];
    for (std::size_t j = 0; j < input.size(); ++j) acc += w[j] * input[j];
    raw[c] = acc;
  }
  return raw;
}

}  // namespace

HeadParams HeadParams::init(std::size_t classes, std::size_t input_size,
                            double dropout_rate, std::uint64_t seed) {
  if (classes == 0 || input_size == 0) {
    throw DataError("invalid dimension: head needs classes and input width >= 1");
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw UsageError("dropout rate must be in [0, 1)");
  }
  HeadParams p;
  p.weights = Matrix(classes, input_size);
  p.bias.assign(classes, 0.0);
  p.dropout_rate = dropout_rate;
  const double a = std::sqrt(1.0 / static_cast<double>(input_size));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(-a, a);
  for (auto& w : p.weights.flat()) w = uniform(rng);
  return p;
}

std::vector<double> softmax(std::span<const double> scores) {
  std::vector<double> out(scores.begin(), scores.end());
  if (out.empty()) return out;
  const double top = *std::max_element(out.begin(), out.end());
  double sum = 0.0;
  for (auto& x : out) {
    x = std::exp(x - top);
    sum += x;
  }
  for (auto& x : out) x /= sum;
  return out;
}

Prediction predict(std::span<const double> input, const HeadParams& params) {
  check_input(input, params);
  Prediction pred;
  pred.raw_scores = raw_scores(input, params);
  pred.probabilities = softmax(pred.raw_scores);
  return pred;
}

double cross_entropy(std::span<const double> raw, std::size_t label) {
  check_label(label, raw.size());
  const double top = *std::max_element(raw.begin(), raw.end());
  double sum = 0.0;
  for (double x : raw) sum += std::exp(x - top);
  // Clamp the rounding residue when the true class dominates completely.
  return std::max(0.0, top + std::log(sum) - raw[label]);
}

double cross_entropy(const Prediction& pred, std::size_t label) {
  return cross_entropy(pred.raw_scores, label);
}

HeadGradients head_backward(std::span<const double> input, const HeadParams& params,
                            std::size_t label) {
  check_input(input, params);
  check_label(label, params.classes());
  auto err = softmax(raw_scores(input, params));
  err[label] -= 1.0;

  HeadGradients g;
  g.weights = Matrix(params.classes(), params.input_size());
  g.input.assign(params.input_size(), 0.0);
  for (std::size_t c = 0; c < err.size(); ++c) {
    auto dw = g.weights.row(c);
    const auto w = params.weights.row(c);
    for (std::size_t j = 0; j < input.size(); ++j) {
      dw[j] = err[c] * input[j];
      g.input[j] += w[j] * err[c];
    }
  }
  g.bias = std::move(err);
  return g;
}

std::vector<double> dropout_mask(std::size_t length, double rate, std::uint64_t seed) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw UsageError("dropout rate must be in [0, 1), got " + std::to_string(rate));
  }
  std::vector<double> mask(length, 1.0);
  if (rate == 0.0) return mask;
  const double keep = 1.0 / (1.0 - rate);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  for (auto& m : mask) m = uniform(rng) < rate ? 0.0 : keep;
  return mask;
}

Prediction frame_average_predict(const Matrix& frames, const HeadParams& params) {
  if (frames.rows() == 0) throw DataError("frame_average_predict: no frames");
  if (frames.cols() != params.input_size()) {
    std::ostringstream msg;
    msg << "dimension mismatch: baseline head expects frame width "
        << params.input_size() << ", got " << frames.cols();
    throw DataError(msg.str());
  }
  std::vector<double> mean(params.classes(), 0.0);
  for (std::size_t f = 0; f < frames.rows(); ++f) {
    const auto raw = raw_scores(frames.row(f), params);
    for (std::size_t c = 0; c < mean.size(); ++c) mean[c] += raw[c];
  }
  for (auto& x : mean) x /= static_cast<double>(frames.rows());
  Prediction pred;
  pred.probabilities = softmax(mean);
  pred.raw_scores = std::move(mean);
  return pred;
}

}  // namespace tpp
