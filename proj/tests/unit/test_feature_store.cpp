#include <cstring>
#include <fstream>
#include <random>

#include "doctest.h"
#include "test_util.hpp"
#include "tpp/checkpoint.hpp"
#include "tpp/error.hpp"
#include "tpp/feature_store.hpp"
#include "tpp/io_bytes.hpp"

using namespace tpp;
using tpp::test::TempDir;

namespace {

void write_bytes(const std::filesystem::path& p, const std::vector<unsigned char>& b) {
  write_file(p, b);
}

std::string error_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

void write_lines(const std::filesystem::path& p, const std::vector<std::string>& lines) {
  std::ofstream out(p);
  for (const auto& l : lines) out << l << "\n";
}

}  // namespace

TEST_CASE("feature file round-trips a 3x1x4 matrix") {
  TempDir dir("fs");
  Matrix seq(3, 4, {0.5, -1.25, 3.0, 7.0, 0.125, 2.0, -0.0, 42.0, 9.0, 8.0, 7.0, 6.0});
  write_features(FeatureTensor::from_sequence(seq), dir / "a.dtpf");
  const auto back = read_features(dir / "a.dtpf");
  CHECK(back.frames() == 3);
  CHECK(back.variants() == 1);
  CHECK(back.dim() == 4);
  CHECK(back.variant(0) == seq);
}

TEST_CASE("payload length for d=1024, t=25, v=1 is 102400 bytes") {
  TempDir dir("fs");
  write_features(FeatureTensor(25, 1, 1024), dir / "big.dtpf");
  CHECK(std::filesystem::file_size(dir / "big.dtpf") == kFeatureHeaderBytes + 102400);
}

TEST_CASE("degenerate dimensions are rejected") {
  CHECK(error_of([] { FeatureTensor(3, 1, 0); }).find("invalid dimension") == 0);
  CHECK(error_of([] { FeatureTensor(0, 1, 4); }).find("invalid dimension") == 0);
  CHECK(error_of([] { FeatureTensor::from_sequence(Matrix(3, 0)); })
            .find("invalid dimension") == 0);
}

TEST_CASE("header layout is little-endian regardless of host") {
  TempDir dir("fs");
  // "DTPF", version 1, d=2, t=1, v=1, payload {1.0f, -2.0f}
  write_bytes(dir / "h.dtpf", {'D', 'T', 'P', 'F', 1, 0, 2, 0, 0, 0, 1, 0, 0, 0, 1, 0,
                               0x00, 0x00, 0x80, 0x3F, 0x00, 0x00, 0x00, 0xC0});
  const auto f = read_features(dir / "h.dtpf");
  CHECK(f.dim() == 2);
  CHECK(f.at(0, 0, 0) == 1.0f);
  CHECK(f.at(0, 0, 1) == -2.0f);

  write_features(f, dir / "h2.dtpf");
  CHECK(read_file(dir / "h2.dtpf") == read_file(dir / "h.dtpf"));
}

TEST_CASE("reader rejects bad magic, truncation and unknown versions") {
  TempDir dir("fs");
  write_features(FeatureTensor::from_sequence(Matrix(2, 3, 1.0)), dir / "ok.dtpf");
  auto bytes = read_file(dir / "ok.dtpf");

  auto bad = bytes;
  bad[0] = 'X';
  write_bytes(dir / "magic.dtpf", bad);
  CHECK(error_of([&] { read_features(dir / "magic.dtpf"); }).find("bad magic") == 0);

  auto shorter = bytes;
  shorter.resize(shorter.size() - 4);
  write_bytes(dir / "short.dtpf", shorter);
  CHECK(error_of([&] { read_features(dir / "short.dtpf"); }).find("truncated") == 0);

  auto version = bytes;
  version[4] = 2;
  write_bytes(dir / "ver.dtpf", version);
  CHECK(error_of([&] { read_features(dir / "ver.dtpf"); }).find("version mismatch") == 0);

  CHECK_THROWS_AS(read_features(dir / "absent.dtpf"), DataError);
}

TEST_CASE("round-trip is bit-exact for random shapes and values") {
  TempDir dir("fs");
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<std::uint32_t> size(1, 9);
  std::uniform_int_distribution<std::uint32_t> bits;
  for (int trial = 0; trial < 50; ++trial) {
    const auto t = size(rng), d = size(rng);
    const auto v = static_cast<std::uint16_t>(size(rng) % 3 + 1);
    std::vector<float> values(std::size_t{t} * v * d);
    // arbitrary bit patterns, NaNs and denormals included
    for (auto& x : values) x = std::bit_cast<float>(bits(rng));
    const FeatureTensor tensor(t, v, d, values);
    write_features(tensor, dir / "r.dtpf");
    const auto back = read_features(dir / "r.dtpf");
    REQUIRE(back.values().size() == values.size());
    CHECK(std::memcmp(back.values().data(), values.data(), values.size() * 4) == 0);
  }
}

TEST_CASE("variants are stored frame-major") {
  Matrix a(2, 2, {1, 2, 3, 4});
  Matrix b(2, 2, {5, 6, 7, 8});
  const std::vector<Matrix> vs{a, b};
  const auto t = FeatureTensor::from_variants(vs);
  const std::vector<float> expected{1, 2, 5, 6, 3, 4, 7, 8};
  CHECK(std::vector<float>(t.values().begin(), t.values().end()) == expected);
  CHECK(t.variant(1) == b);
}

TEST_CASE("manifest loading") {
  TempDir dir("manifest");
  write_features(FeatureTensor::from_sequence(Matrix(5, 2, 0.0)), dir / "v1.dtpf");
  write_features(FeatureTensor::from_sequence(Matrix(7, 2, 0.0)), dir / "v2.dtpf");
  const std::string header = R"({"n_classes": 101, "split": "test"})";

  SUBCASE("valid records, unknown fields ignored") {
    write_lines(dir / "m.jsonl",
                {header,
                 R"({"video_id":"a","label":3,"stream":"spatial","path":"v1.dtpf","frames":5,"extra":1})",
                 R"({"video_id":"a","label":3,"stream":"temporal","path":"v2.dtpf","frames":7})"});
    const auto m = load_manifest(dir / "m.jsonl");
    CHECK(m.n_classes == 101);
    CHECK(m.split == Split::test);
    REQUIRE(m.records.size() == 2);
    CHECK(m.records[0].path == dir / "v1.dtpf");
    CHECK(m.stream_records(Stream::temporal).size() == 1);
  }
  SUBCASE("label bound is exclusive") {
    write_lines(dir / "m.jsonl",
                {header,
                 R"({"video_id":"a","label":101,"stream":"spatial","path":"v1.dtpf","frames":5})"});
    CHECK(error_of([&] { load_manifest(dir / "m.jsonl"); }).find("label out of range") !=
          std::string::npos);
  }
  SUBCASE("duplicate id within a stream") {
    write_lines(dir / "m.jsonl",
                {header,
                 R"({"video_id":"a","label":1,"stream":"spatial","path":"v1.dtpf","frames":5})",
                 R"({"video_id":"a","label":1,"stream":"spatial","path":"v1.dtpf","frames":5})"});
    CHECK(error_of([&] { load_manifest(dir / "m.jsonl"); }).find("duplicate") !=
          std::string::npos);
  }
  SUBCASE("missing feature file") {
    write_lines(dir / "m.jsonl",
                {header,
                 R"({"video_id":"a","label":1,"stream":"spatial","path":"nope.dtpf","frames":5})"});
    CHECK(error_of([&] { load_manifest(dir / "m.jsonl"); }).find("missing feature file") !=
          std::string::npos);
  }
  SUBCASE("frame count must match the file header") {
    write_lines(dir / "m.jsonl",
                {header,
                 R"({"video_id":"a","label":1,"stream":"spatial","path":"v1.dtpf","frames":6})"});
    CHECK(error_of([&] { load_manifest(dir / "m.jsonl"); }).find("frame-count mismatch") !=
          std::string::npos);
  }
  SUBCASE("empty manifest is valid") {
    write_lines(dir / "m.jsonl", {});
    CHECK(load_manifest(dir / "m.jsonl").records.empty());
    write_lines(dir / "m.jsonl", {header});
    CHECK(load_manifest(dir / "m.jsonl").records.empty());
  }
  SUBCASE("save then load") {
    DatasetManifest m{4, Split::train, {{"x", 2, Stream::spatial, dir / "v2.dtpf", 7}}};
    save_manifest(m, dir / "out.jsonl");
    const auto back = load_manifest(dir / "out.jsonl");
    CHECK(back.n_classes == 4);
    REQUIRE(back.records.size() == 1);
    CHECK(back.records[0].path == dir / "v2.dtpf");
    CHECK(back.records[0].frames == 7);
  }
}

TEST_CASE("checkpoint round-trip reproduces predictions bit-exactly") {
  TempDir dir("ckpt");
  Checkpoint c;
  c.pyramid = PyramidConfig::with_levels(2, PoolKernel::average);
  c.dim = 3;
  c.classes = 4;
  c.head = HeadParams::init(4, c.input_size(), 0.8, 11);
  c.head.bias = {0.1, -0.2, 1.0 / 3.0, 1e-300};
  c.optimizer.learning_rate = 0.001;
  c.optimizer.iteration = 17;
  c.optimizer.evals_since_improvement = 2;
  c.optimizer.weight_momentum = Matrix(4, c.input_size(), 0.25);
  c.optimizer.bias_momentum = {1, 2, 3, 4};
  save_checkpoint(c, dir / "m.dtpc");
  const auto back = load_checkpoint(dir / "m.dtpc");
  CHECK(back == c);

  std::mt19937_64 rng(3);
  const auto seq = tpp::test::random_matrix(6, 3, rng);
  const auto p1 = predict(encode(seq, c.pyramid).flat(), c.head).raw_scores;
  const auto p2 = predict(encode(seq, back.pyramid).flat(), back.head).raw_scores;
  CHECK(std::memcmp(p1.data(), p2.data(), p1.size() * sizeof(double)) == 0);

  auto bytes = read_file(dir / "m.dtpc");
  bytes[1] = 'X';
  write_bytes(dir / "bad.dtpc", bytes);
  CHECK(error_of([&] { load_checkpoint(dir / "bad.dtpc"); }).find("bad magic") == 0);
}

TEST_CASE("checkpoint head must match pyramid width") {
  Checkpoint c;
  c.pyramid = PyramidConfig::with_levels(3);
  c.dim = 2;
  c.classes = 2;
  c.head = HeadParams::init(2, 7, 0.0, 1);  // 7 != 7*2
  CHECK_THROWS_AS(c.validate(), DataError);
  c.head = HeadParams::init(2, 14, 0.0, 1);
  CHECK_NOTHROW(c.validate());
}
