#include "tpp/synthetic.hpp"

#include <cstdio>
#include <random>

#include "tpp/error.hpp"
#include "tpp/random.hpp"

namespace tpp {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kPrototypeSalt = 0xC1A55;
constexpr std::uint64_t kVideoSalt = 0x71DE0;

Matrix standard_normal(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, cols);
  for (auto& x : m.flat()) x = normal(rng);
  return m;
}

std::uint64_t stream_salt(Stream s) { return s == Stream::spatial ? 0 : 1; }

std::size_t split_count(const SyntheticSpec& spec, Split split) {
  switch (split) {
    case Split::train: return spec.train_per_class;
    case Split::validation: return spec.validation_per_class;
    case Split::test: return spec.test_per_class;
  }
  return 0;
}

Matrix repeat_rows(const Matrix& vec, std::size_t rows) {
  Matrix m(rows, vec.cols());
  for (std::size_t f = 0; f < rows; ++f)
    for (std::size_t k = 0; k < vec.cols(); ++k) m(f, k) = vec(0, k);
  return m;
}

// Own-class content. Every segment is one prototype vector held for the
// segment's duration, so any within-segment sampling sees the same content.
// Covers all frames for separable/order_pairs, the second half for confuser.
Matrix own_content(const SyntheticSpec& spec, Stream stream, std::size_t label) {
  const auto base = derive_seed(spec.seed, {kPrototypeSalt, stream_salt(stream)});
  switch (spec.structure) {
    case Structure::separable:
      return repeat_rows(standard_normal(1, spec.dim, derive_seed(base, {label})), spec.frames);
    case Structure::order_pairs: {
      const auto pair = derive_seed(base, {label / 2});
      const auto a = standard_normal(1, spec.dim, derive_seed(pair, {0}));
      const auto b = standard_normal(1, spec.dim, derive_seed(pair, {1}));
      const auto half = spec.frames / 2;
      Matrix forward(spec.frames, spec.dim);
      for (std::size_t f = 0; f < spec.frames; ++f)
        for (std::size_t k = 0; k < spec.dim; ++k) forward(f, k) = f < half ? a(0, k) : b(0, k);
      if (label % 2 == 0) return forward;
      Matrix reversed(spec.frames, spec.dim);
      for (std::size_t f = 0; f < spec.frames; ++f)
        for (std::size_t k = 0; k < spec.dim; ++k)
          reversed(f, k) = forward(spec.frames - 1 - f, k);
      return reversed;
    }
    case Structure::confuser:
      return repeat_rows(standard_normal(1, spec.dim, derive_seed(base, {label})),
                         spec.frames - spec.frames / 2);
  }
  return {};
}

}  // namespace

std::string to_string(Structure s) {
  switch (s) {
    case Structure::separable: return "separable";
    case Structure::order_pairs: return "order_pairs";
    case Structure::confuser: return "confuser";
  }
  return "?";
}

Structure parse_structure(const std::string& s) {
  if (s == "separable") return Structure::separable;
  if (s == "order_pairs" || s == "order-pairs") return Structure::order_pairs;
  if (s == "confuser") return Structure::confuser;
  throw UsageError("unknown synthetic structure '" + s + "'");
}

void SyntheticSpec::validate() const {
  auto fail = [](const std::string& m) { throw UsageError("invalid synthetic spec: " + m); };
  if (n_classes == 0 || dim == 0 || frames == 0) fail("classes, dim and frames must be >= 1");
  if (variants == 0) fail("variants must be >= 1");
  if (!(noise >= 0.0)) fail("noise must be >= 0");
  if (structure == Structure::order_pairs && n_classes % 2 != 0) {
    fail("order_pairs needs an even class count");
  }
  if (structure == Structure::confuser && (n_classes < 2 || frames < 2)) {
    fail("confuser needs at least 2 classes and 2 frames");
  }
}

Matrix class_template(const SyntheticSpec& spec, Stream stream, std::size_t label) {
  spec.validate();
  if (label >= spec.n_classes) throw DataError("label out of range");
  return own_content(spec, stream, label);
}

std::vector<SyntheticVideo> generate_videos(const SyntheticSpec& spec) {
  spec.validate();
  std::vector<SyntheticVideo> out;
  for (auto stream : {Stream::spatial, Stream::temporal}) {
    std::vector<Matrix> own;
    for (std::size_t c = 0; c < spec.n_classes; ++c) own.push_back(own_content(spec, stream, c));

    for (auto split : {Split::train, Split::validation, Split::test}) {
      for (std::size_t c = 0; c < spec.n_classes; ++c) {
        for (std::size_t i = 0; i < split_count(spec, split); ++i) {
          std::mt19937_64 rng(derive_seed(
              spec.seed, {kVideoSalt, stream_salt(stream), static_cast<std::uint64_t>(split),
                          c, i}));
          Matrix clean(spec.frames, spec.dim);
          if (spec.structure == Structure::confuser) {
            std::uniform_int_distribution<std::size_t> other(0, spec.n_classes - 2);
            auto look_alike = other(rng);
            if (look_alike >= c) ++look_alike;
            const auto half = spec.frames / 2;
            // Look-alike half: the other class's own segment, trimmed to fit.
            for (std::size_t f = 0; f < half; ++f)
              for (std::size_t k = 0; k < spec.dim; ++k)
                clean(f, k) = own[look_alike](f % own[look_alike].rows(), k);
            for (std::size_t f = half; f < spec.frames; ++f)
              for (std::size_t k = 0; k < spec.dim; ++k) clean(f, k) = own[c](f - half, k);
          } else {
            clean = own[c];
          }

          std::normal_distribution<double> normal(0.0, 1.0);
          std::vector<Matrix> variants;
          for (std::uint16_t v = 0; v < spec.variants; ++v) {
            Matrix noisy = clean;
            if (spec.noise > 0.0) {
              for (auto& x : noisy.flat()) x += spec.noise * normal(rng);
            }
            variants.push_back(std::move(noisy));
          }

          char id[64];
          std::snprintf(id, sizeof id, "%s_c%03zu_%04zu", to_string(split).c_str(), c, i);
          out.push_back({id, c, stream, split, FeatureTensor::from_variants(variants)});
        }
      }
    }
  }
  return out;
}

VideoSet select_videos(const std::vector<SyntheticVideo>& videos, std::size_t n_classes,
                       Stream stream, Split split) {
  VideoSet set;
  set.classes = n_classes;
  for (const auto& v : videos) {
    if (v.stream != stream || v.split != split) continue;
    set.dim = v.features.dim();
    set.videos.push_back({v.video_id, v.label, v.features});
  }
  return set;
}

GeneratedDataset generate(const SyntheticSpec& spec, const fs::path& out_dir) {
  const auto videos = generate_videos(spec);
  DatasetManifest manifests[3];
  for (auto split : {Split::train, Split::validation, Split::test}) {
    manifests[static_cast<int>(split)].n_classes = spec.n_classes;
    manifests[static_cast<int>(split)].split = split;
  }
  for (const auto& v : videos) {
    const auto path = out_dir / "features" / to_string(v.stream) / (v.video_id + ".dtpf");
    write_features(v.features, path);
    manifests[static_cast<int>(v.split)].records.push_back(
        {v.video_id, v.label, v.stream, path, v.features.frames()});
  }
  GeneratedDataset out;
  out.train = out_dir / "train.jsonl";
  out.test = out_dir / "test.jsonl";
  save_manifest(manifests[0], out.train);
  save_manifest(manifests[2], out.test);
  if (spec.validation_per_class > 0) {
    out.validation = out_dir / "validation.jsonl";
    save_manifest(manifests[1], out.validation);
  }
  return out;
}

}  // namespace tpp
