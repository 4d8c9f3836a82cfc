#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "tpp/encoder.hpp"
#include "tpp/matrix.hpp"

namespace tpp {

using ScalarFunction = std::function<double(std::span<const double>)>;

/// Central differences (f(x+eps e_i) - f(x-eps e_i)) / 2eps per coordinate.
/// Throws NumericError if f returns a non-finite value.
std::vector<double> finite_diff(const ScalarFunction& f, std::span<const double> x,
                                double eps = 1e-3);

/// Reference pyramid pooling written as plain nested loops over levels, bins
/// and frames. Frame f (1-based) belongs to bin b of an n-bin level when
/// (b-1)*T < f*n <= b*T. Shares no code with encode().
Matrix brute_force_tpp(const Matrix& seq, const PyramidConfig& config);

/// Normwise relative error ||a-b|| / max(||a||, ||b||); 0 when both are 0.
double relative_error(std::span<const double> a, std::span<const double> b);

/// Standard-normal T×d sequence where, inside every bin of `config`, the top
/// two values of each dimension differ by at least `margin`, so max-pool
/// argmaxes stay put under perturbations smaller than margin/2.
Matrix tie_free_sequence(std::size_t frames, std::size_t dim, const PyramidConfig& config,
                         double margin, std::mt19937_64& rng);

struct GradCheckOptions {
  std::size_t instances = 100;
  std::size_t max_dim = 16;
  std::size_t max_frames = 16;
  std::size_t max_levels = 3;
  std::size_t max_classes = 5;
  double eps = 1e-4;
  double tolerance = 1e-6;
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  std::size_t instances = 0;
  double worst_frames = 0.0;
  double worst_weights = 0.0;
  double worst_bias = 0.0;
  double tolerance = 0.0;

  double worst() const;
  bool passed() const { return worst() < tolerance; }
  std::string summary() const;
};

/// Random full-pipeline instances (both kernels, both aggregation modes,
/// with a fixed dropout mask): analytic gradients with respect to frames,
/// weights and bias against central differences of the loss.
GradCheckReport run_gradcheck(const GradCheckOptions& options);

}  // namespace tpp
