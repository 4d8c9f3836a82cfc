#include "tpp/verification.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "tpp/checkpoint.hpp"
#include "tpp/error.hpp"
#include "tpp/head.hpp"
#include "tpp/trainer.hpp"

namespace tpp {

std::vector<double> finite_diff(const ScalarFunction& f, std::span<const double> x,
                                double eps) {
  if (!(eps > 0.0)) throw UsageError("finite_diff step must be > 0");
  std::vector<double> point(x.begin(), x.end());
  std::vector<double> grad(point.size());
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double saved = point[i];
    point[i] = saved + eps;
    const double up = f(point);
    point[i] = saved - eps;
    const double down = f(point);
    point[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericError("finite_diff: non-finite function value at coordinate " +
                         std::to_string(i));
    }
    grad[i] = (up - down) / (2.0 * eps);
  }
  return grad;
}

Matrix brute_force_tpp(const Matrix& seq, const PyramidConfig& config) {
  const std::size_t T = seq.rows();
  const std::size_t d = seq.cols();
  std::size_t total = 0;
  for (auto n : config.level_bins) {
    if (n == 0 || T < n) throw DataError("pyramid level too fine");
    total += n;
  }
  Matrix out(total, d);
  std::size_t row = 0;
  for (std::size_t level = 0; level < config.level_bins.size(); ++level) {
    const std::size_t n = config.level_bins[level];
    for (std::size_t b = 1; b <= n; ++b, ++row) {
      for (std::size_t k = 0; k < d; ++k) {
        double acc = config.kernel == PoolKernel::max
                         ? -std::numeric_limits<double>::infinity()
                         : 0.0;
        std::size_t count = 0;
        for (std::size_t f = 1; f <= T; ++f) {
          if (!((b - 1) * T < f * n && f * n <= b * T)) continue;
          const double x = seq(f - 1, k);
          if (config.kernel == PoolKernel::max) {
            acc = std::max(acc, x);
          } else {
            acc += x;
          }
          ++count;
        }
        if (count == 0) throw DataError("brute_force_tpp: empty bin");
        out(row, k) = config.kernel == PoolKernel::max ? acc : acc / static_cast<double>(count);
      }
    }
  }
  return out;
}

double relative_error(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DataError("relative_error: length mismatch");
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double denom = std::sqrt(std::max(na, nb));
  return denom == 0.0 ? 0.0 : std::sqrt(diff) / denom;
}

Matrix tie_free_sequence(std::size_t frames, std::size_t dim, const PyramidConfig& config,
                         double margin, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix seq(frames, dim);
  auto tie_free = [&] {
    for (auto n : config.level_bins) {
      for (const auto& r : bin_ranges(frames, n)) {
        if (r.length() < 2) continue;
        for (std::size_t k = 0; k < dim; ++k) {
          double top = -std::numeric_limits<double>::infinity(), second = top;
          for (std::size_t f = r.first; f <= r.last; ++f) {
            const double x = seq(f - 1, k);
            if (x > top) {
              second = top;
              top = x;
            } else if (x > second) {
              second = x;
            }
          }
          if (top - second < margin) return false;
        }
      }
    }
    return true;
  };
  do {
    for (auto& x : seq.flat()) x = normal(rng);
  } while (!tie_free());
  return seq;
}

double GradCheckReport::worst() const {
  return std::max({worst_frames, worst_weights, worst_bias});
}

std::string GradCheckReport::summary() const {
  std::ostringstream out;
  out << "gradcheck: " << (passed() ? "PASS" : "FAIL") << " instances=" << instances
      << " worst_relative_error=" << worst() << " (frames=" << worst_frames
      << " weights=" << worst_weights << " bias=" << worst_bias
      << ") tolerance=" << tolerance;
  return out.str();
}

GradCheckReport run_gradcheck(const GradCheckOptions& opt) {
  GradCheckReport report;
  report.tolerance = opt.tolerance;
  std::mt19937_64 rng(opt.seed);
  auto uniform = [&rng](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };

  for (std::size_t inst = 0; inst < opt.instances; ++inst) {
    const auto mode = inst % 4 == 3 ? Aggregation::frame_average : Aggregation::tpp;
    const auto kernel = inst % 2 == 0 ? PoolKernel::max : PoolKernel::average;
    const auto levels = uniform(1, opt.max_levels);
    const auto pyramid = PyramidConfig::with_levels(levels, kernel);
    const auto T = uniform(std::max<std::size_t>(pyramid.min_frames(), 2), opt.max_frames);
    const auto d = uniform(1, opt.max_dim);
    const auto n = uniform(2, opt.max_classes);
    const auto label = uniform(0, n - 1);

    // Margin well above the probe step so no probe crosses a max-pool kink.
    const auto seq = tie_free_sequence(T, d, pyramid, 5.0 * opt.eps, rng);
    auto head = HeadParams::init(n, mode == Aggregation::tpp ? pyramid.representation_size(d) : d,
                                 0.5, rng());
    std::normal_distribution<double> normal(0.0, 0.5);
    for (auto& b : head.bias) b = normal(rng);
    const auto mask = dropout_mask(mode == Aggregation::tpp ? head.input_size() : T * d, 0.5,
                                   rng());

    const auto analytic = pipeline_backward(seq, label, head, pyramid, mode, mask);

    const auto fd_frames = finite_diff(
        [&](std::span<const double> x) {
          return pipeline_loss(Matrix(T, d, {x.begin(), x.end()}), label, head, pyramid, mode,
                               mask);
        },
        seq.flat(), opt.eps);
    const auto fd_weights = finite_diff(
        [&](std::span<const double> x) {
          HeadParams h = head;
          std::copy(x.begin(), x.end(), h.weights.flat().begin());
          return pipeline_loss(seq, label, h, pyramid, mode, mask);
        },
        head.weights.flat(), opt.eps);
    const auto fd_bias = finite_diff(
        [&](std::span<const double> x) {
          HeadParams h = head;
          h.bias.assign(x.begin(), x.end());
          return pipeline_loss(seq, label, h, pyramid, mode, mask);
        },
        head.bias, opt.eps);

    report.worst_frames =
        std::max(report.worst_frames, relative_error(analytic.frames.flat(), fd_frames));
    report.worst_weights =
        std::max(report.worst_weights, relative_error(analytic.head.weights.flat(), fd_weights));
    report.worst_bias =
        std::max(report.worst_bias, relative_error(analytic.head.bias, fd_bias));
    ++report.instances;
  }
  return report;
}

}  // namespace tpp
