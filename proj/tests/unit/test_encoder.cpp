#include <algorithm>
#include <numeric>
#include <random>

#include "doctest.h"
#include "test_util.hpp"
#include "tpp/encoder.hpp"
#include "tpp/error.hpp"
#include "tpp/verification.hpp"

using namespace tpp;
using tpp::test::random_matrix;

namespace {

Matrix reversed(const Matrix& m) {
  Matrix out(m.rows(), m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) out(r, c) = m(m.rows() - 1 - r, c);
  return out;
}

}  // namespace

TEST_CASE("pool_bin examples") {
  const Matrix two(2, 2, {1, 5, 3, 2});
  const auto mx = pool_bin(PoolKernel::max, two, {1, 2});
  CHECK(mx.values == std::vector<double>{3, 5});
  CHECK(mx.argmax == std::vector<std::size_t>{2, 1});

  const Matrix avg_in(2, 2, {1, 1, 3, 3});
  CHECK(pool_bin(PoolKernel::average, avg_in, {1, 2}).values == std::vector<double>{2, 2});

  const Matrix constant(5, 3, 0.7);
  const auto c = pool_bin(PoolKernel::max, constant, {1, 5});
  CHECK(c.values == std::vector<double>{0.7, 0.7, 0.7});
  CHECK(c.argmax == std::vector<std::size_t>{1, 1, 1});

  CHECK_THROWS_AS(pool_bin(PoolKernel::max, constant, {3, 2}), DataError);
}

TEST_CASE("bin_ranges examples") {
  using R = std::vector<BinRange>;
  CHECK(bin_ranges(8, 4) == R{{1, 2}, {3, 4}, {5, 6}, {7, 8}});
  CHECK(bin_ranges(25, 4) == R{{1, 6}, {7, 12}, {13, 18}, {19, 25}});
  try {
    bin_ranges(4, 8);
    FAIL("expected an error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("pyramid level too fine") == 0);
  }
}

TEST_CASE("representation length is (2^K - 1) * d") {
  CHECK(PyramidConfig::with_levels(3).representation_size(1024) == 7168);
  std::mt19937_64 rng(1);
  for (std::size_t K = 1; K <= 4; ++K) {
    const auto cfg = PyramidConfig::with_levels(K);
    CHECK(cfg.total_bins() == (std::size_t{1} << K) - 1);
    const auto rep = encode(random_matrix(std::size_t{1} << (K - 1), 5, rng), cfg);
    CHECK(rep.flat().size() == ((std::size_t{1} << K) - 1) * 5);
  }
  CHECK(encode(Matrix(25, 1024, 0.5), PyramidConfig::with_levels(3)).flat().size() == 7168);
}

TEST_CASE("level one covers the whole sequence") {
  std::mt19937_64 rng(2);
  const auto seq = random_matrix(9, 4, rng);
  for (auto kernel : {PoolKernel::max, PoolKernel::average}) {
    const auto rep = encode(seq, PyramidConfig::with_levels(3, kernel));
    const auto whole = pool_bin(kernel, seq, {1, 9}).values;
    CHECK(std::vector<double>(rep.values.row(0).begin(), rep.values.row(0).end()) == whole);
  }
}

TEST_CASE("nesting: a K-level encoding starts with the (K-1)-level encoding") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t K = 2 + trial % 3;
    const auto T = (std::size_t{1} << (K - 1)) + trial % 11;
    const auto seq = random_matrix(T, 1 + trial % 6, rng);
    const auto kernel = trial % 2 ? PoolKernel::max : PoolKernel::average;
    const auto fine = encode(seq, PyramidConfig::with_levels(K, kernel));
    const auto coarse = encode(seq, PyramidConfig::with_levels(K - 1, kernel));
    REQUIRE(std::equal(coarse.flat().begin(), coarse.flat().end(), fine.flat().begin()));
  }
}

TEST_CASE("global pooling is order-invariant; finer levels are not") {
  std::mt19937_64 rng(4);
  const auto seq = random_matrix(6, 3, rng);
  std::vector<std::size_t> perm(6);
  std::iota(perm.begin(), perm.end(), 0);
  for (auto kernel : {PoolKernel::max, PoolKernel::average}) {
    const auto base = encode(seq, PyramidConfig::with_levels(1, kernel)).values;
    for (int trial = 0; trial < 20; ++trial) {
      std::shuffle(perm.begin(), perm.end(), rng);
      Matrix shuffled(6, 3);
      for (std::size_t r = 0; r < 6; ++r)
        for (std::size_t c = 0; c < 3; ++c) shuffled(r, c) = seq(perm[r], c);
      const auto got = encode(shuffled, PyramidConfig::with_levels(1, kernel)).values;
      if (kernel == PoolKernel::max) {
        CHECK(got == base);
      } else {
        for (std::size_t k = 0; k < 3; ++k) CHECK(got(0, k) == doctest::Approx(base(0, k)).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("reversal witness: K=2 max, T=4") {
  std::mt19937_64 rng(5);
  const auto seq = random_matrix(4, 3, rng);
  const auto cfg = PyramidConfig::with_levels(2, PoolKernel::max);
  const auto fwd = brute_force_tpp(seq, cfg);
  const auto rev = brute_force_tpp(reversed(seq), cfg);
  const auto enc_fwd = encode(seq, cfg).values;
  const auto enc_rev = encode(reversed(seq), cfg).values;
  CHECK(enc_fwd == fwd);
  CHECK(enc_rev == rev);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(enc_rev(0, k) == enc_fwd(0, k));
    CHECK(enc_rev(1, k) == enc_fwd(2, k));
    CHECK(enc_rev(2, k) == enc_fwd(1, k));
  }
  CHECK(enc_rev != enc_fwd);
}

TEST_CASE("encode rejects sequences shorter than the finest level") {
  CHECK_THROWS_AS(encode(Matrix(3, 2), PyramidConfig::with_levels(3)), DataError);
  CHECK_NOTHROW(encode(Matrix(4, 2), PyramidConfig::with_levels(3)));
  CHECK_THROWS_AS(encode(Matrix(2, 2), PyramidConfig{{3}, PoolKernel::max}), DataError);
}

TEST_CASE("backward, K=1 average: every frame gets a quarter") {
  const Matrix seq(4, 2, {1, 2, 3, 4, 5, 6, 7, 8});
  const auto fwd = encode(seq, PyramidConfig::with_levels(1, PoolKernel::average));
  const auto g = encode_backward(Matrix(1, 2, {2.0, -4.0}), fwd);
  for (std::size_t f = 0; f < 4; ++f) {
    CHECK(g(f, 0) == 0.5);
    CHECK(g(f, 1) == -1.0);
  }
}

TEST_CASE("backward, K=1 max: gradient lands on argmax frames only") {
  const Matrix seq(3, 2, {1, 9, 7, 2, 3, 4});
  const auto fwd = encode(seq, PyramidConfig::with_levels(1, PoolKernel::max));
  const auto g = encode_backward(Matrix(1, 2, {1.5, 2.5}), fwd);
  CHECK(g == Matrix(3, 2, {0, 2.5, 1.5, 0, 0, 0}));
}

TEST_CASE("backward, max ties route to the lowest frame") {
  const Matrix seq(4, 1, {2, 5, 5, 1});
  const auto fwd = encode(seq, PyramidConfig::with_levels(1, PoolKernel::max));
  CHECK(encode_backward(Matrix(1, 1, {1.0}), fwd) == Matrix(4, 1, {0, 1, 0, 0}));
}

TEST_CASE("backward matches finite differences (K=3, T=8, tie-free)") {
  std::mt19937_64 rng(6);
  for (auto kernel : {PoolKernel::max, PoolKernel::average}) {
    const auto cfg = PyramidConfig::with_levels(3, kernel);
    const auto seq = tie_free_sequence(8, 5, cfg, 0.01, rng);
    // Linear functional L = <G, encode(S)> so dL/dP = G.
    const auto G = random_matrix(7, 5, rng);
    const auto analytic = encode_backward(G, encode(seq, cfg));
    const auto fd = finite_diff(
        [&](std::span<const double> x) {
          const auto rep = encode(Matrix(8, 5, {x.begin(), x.end()}), cfg);
          double acc = 0.0;
          for (std::size_t i = 0; i < G.size(); ++i) acc += G.flat()[i] * rep.flat()[i];
          return acc;
        },
        seq.flat());
    CHECK(relative_error(analytic.flat(), fd) < 1e-6);
  }
}

TEST_CASE("average kernel conserves gradient mass per level") {
  std::mt19937_64 rng(7);
  for (std::size_t T : {4u, 7u, 25u}) {
    for (const auto& bins : std::vector<std::vector<std::size_t>>{{1}, {2}, {4}, {3}}) {
      const PyramidConfig cfg{bins, PoolKernel::average};
      const auto seq = random_matrix(T, 3, rng);
      const auto G = random_matrix(cfg.total_bins(), 3, rng);
      const auto g = encode_backward(G, encode(seq, cfg));
      for (std::size_t k = 0; k < 3; ++k) {
        double frames = 0.0, bins_sum = 0.0;
        for (std::size_t f = 0; f < T; ++f) frames += g(f, k);
        for (std::size_t b = 0; b < G.rows(); ++b) bins_sum += G(b, k);
        CHECK(frames == doctest::Approx(bins_sum).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("backward rejects mismatched gradients and configs") {
  const auto cfg = PyramidConfig::with_levels(2);
  const auto fwd = encode(Matrix(4, 2, 1.0), cfg);
  CHECK_THROWS_AS(encode_backward(Matrix(2, 2), fwd), DataError);
  CHECK_THROWS_AS(encode_backward(Matrix(3, 2), fwd, PyramidConfig::with_levels(3), 4),
                  DataError);
  CHECK_THROWS_AS(encode_backward(Matrix(3, 2), fwd, cfg, 5), DataError);
  CHECK_NOTHROW(encode_backward(Matrix(3, 2), fwd, cfg, 4));
}

TEST_CASE("pyramid labels follow the ablation naming") {
  CHECK(PyramidConfig::with_levels(3).label() == "1,2,4");
  CHECK(PyramidConfig::with_levels(3, PoolKernel::average).label() == "1,2,4(Ave)");
  CHECK(PyramidConfig{{3}, PoolKernel::max}.label() == "3");
}
