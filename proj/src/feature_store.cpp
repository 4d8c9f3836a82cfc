#include "tpp/feature_store.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <utility>

#include <nlohmann/json.hpp>

#include "tpp/error.hpp"
#include "tpp/io_bytes.hpp"

namespace tpp {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::size_t checked_payload_bytes(std::uint64_t frames, std::uint64_t variants,
                                  std::uint64_t dim) {
  if (frames == 0 || variants == 0 || dim == 0) {
    std::ostringstream msg;
    msg << "invalid dimension: frames=" << frames << " variants=" << variants
        << " dim=" << dim;
    throw DataError(msg.str());
  }
  constexpr std::uint64_t limit = std::numeric_limits<std::size_t>::max() / 4;
  if (frames > limit / variants || frames * variants > limit / dim) {
    throw DataError("dimension overflow: feature payload too large");
  }
  return static_cast<std::size_t>(frames * variants * dim) * 4;
}

}  // namespace

FeatureTensor::FeatureTensor(std::uint32_t frames, std::uint16_t variants,
                             std::uint32_t dim)
    : frames_(frames), variants_(variants), dim_(dim) {
  values_.assign(checked_payload_bytes(frames, variants, dim) / 4, 0.0f);
}

FeatureTensor::FeatureTensor(std::uint32_t frames, std::uint16_t variants,
                             std::uint32_t dim, std::vector<float> values)
    : frames_(frames), variants_(variants), dim_(dim), values_(std::move(values)) {
  if (values_.size() * 4 != checked_payload_bytes(frames, variants, dim)) {
    throw DataError("invalid dimension: value count does not match shape");
  }
}

FeatureTensor FeatureTensor::from_sequence(const Matrix& seq) {
  return from_variants(std::span<const Matrix>(&seq, 1));
}

FeatureTensor FeatureTensor::from_variants(std::span<const Matrix> variants) {
  if (variants.empty()) throw DataError("invalid dimension: no variants");
  const auto rows = variants[0].rows();
  const auto cols = variants[0].cols();
  if (rows > std::numeric_limits<std::uint32_t>::max() ||
      cols > std::numeric_limits<std::uint32_t>::max() ||
      variants.size() > std::numeric_limits<std::uint16_t>::max()) {
    throw DataError("dimension overflow: sequence does not fit the file header");
  }
  FeatureTensor out(static_cast<std::uint32_t>(rows),
                    static_cast<std::uint16_t>(variants.size()),
                    static_cast<std::uint32_t>(cols));
  for (std::size_t v = 0; v < variants.size(); ++v) {
    if (variants[v].rows() != rows || variants[v].cols() != cols) {
      throw DataError("invalid dimension: variants differ in shape");
    }
    for (std::size_t f = 0; f < rows; ++f)
      for (std::size_t k = 0; k < cols; ++k)
        out.at(f, v, k) = static_cast<float>(variants[v](f, k));
  }
  return out;
}

Matrix FeatureTensor::variant(std::size_t v) const {
  if (v >= variants_) throw DataError("variant index out of range");
  Matrix out(frames_, dim_);
  for (std::size_t f = 0; f < frames_; ++f)
    for (std::size_t k = 0; k < dim_; ++k) out(f, k) = at(f, v, k);
  return out;
}

void write_features(const FeatureTensor& features, const fs::path& path) {
  const auto payload = checked_payload_bytes(features.frames(), features.variants(),
                                             features.dim());
  std::vector<unsigned char> bytes;
  bytes.reserve(kFeatureHeaderBytes + payload);
  bytes.insert(bytes.end(), kFeatureMagic, kFeatureMagic + 4);
  put_le(bytes, kFeatureVersion);
  put_le(bytes, features.dim());
  put_le(bytes, features.frames());
  put_le(bytes, features.variants());
  for (float x : features.values()) put_le(bytes, std::bit_cast<std::uint32_t>(x));
  write_file(path, bytes);
}

namespace {

FeatureHeader parse_header(ByteReader& in) {
  const auto magic = in.take(4, "bad magic: file shorter than header");
  if (std::memcmp(magic.data(), kFeatureMagic, 4) != 0) {
    throw DataError("bad magic: not a feature file: " + in.name());
  }
  FeatureHeader h;
  h.version = in.get<std::uint16_t>();
  if (h.version != kFeatureVersion) {
    throw DataError("version mismatch: feature file version " +
                    std::to_string(h.version) + ", expected " +
                    std::to_string(kFeatureVersion));
  }
  h.dim = in.get<std::uint32_t>();
  h.frames = in.get<std::uint32_t>();
  h.variants = in.get<std::uint16_t>();
  checked_payload_bytes(h.frames, h.variants, h.dim);
  return h;
}

}  // namespace

FeatureHeader read_feature_header(const fs::path& path) {
  auto bytes = read_file(path, kFeatureHeaderBytes);
  ByteReader in(bytes, path.string());
  return parse_header(in);
}

FeatureTensor read_features(const fs::path& path) {
  const auto bytes = read_file(path);
  ByteReader in(bytes, path.string());
  const auto h = parse_header(in);
  const auto payload = checked_payload_bytes(h.frames, h.variants, h.dim);
  if (in.remaining() < payload) {
    throw DataError("truncated payload in " + path.string() + ": expected " +
                    std::to_string(payload) + " bytes, found " +
                    std::to_string(in.remaining()));
  }
  if (in.remaining() > payload) {
    throw DataError("trailing bytes after payload in " + path.string());
  }
  std::vector<float> values(payload / 4);
  for (auto& x : values) x = std::bit_cast<float>(in.get<std::uint32_t>());
  return FeatureTensor(h.frames, h.variants, h.dim, std::move(values));
}

std::string to_string(Stream s) {
  return s == Stream::spatial ? "spatial" : "temporal";
}

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
  }
  return "?";
}

Stream parse_stream(const std::string& s) {
  if (s == "spatial") return Stream::spatial;
  if (s == "temporal") return Stream::temporal;
  throw DataError("unknown stream '" + s + "'");
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "validation") return Split::validation;
  if (s == "test") return Split::test;
  throw DataError("unknown split '" + s + "'");
}

std::vector<VideoRecord> DatasetManifest::stream_records(Stream s) const {
  std::vector<VideoRecord> out;
  std::copy_if(records.begin(), records.end(), std::back_inserter(out),
               [s](const VideoRecord& r) { return r.stream == s; });
  return out;
}

DatasetManifest load_manifest(const fs::path& path, const fs::path& base_dir) {
  std::ifstream in(path);
  if (!in) throw DataError("missing file: cannot open manifest " + path.string());
  const fs::path base = base_dir.empty() ? path.parent_path() : base_dir;

  DatasetManifest manifest;
  bool have_classes = false;
  std::set<std::pair<std::string, Stream>> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto where = path.string() + ":" + std::to_string(line_no);
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError(where + ": malformed record: " + e.what());
    }
    if (!obj.is_object()) throw DataError(where + ": record is not an object");
    try {
      if (!obj.contains("video_id")) {
        if (!obj.contains("n_classes")) {
          throw DataError(where + ": neither a header nor a record");
        }
        if (have_classes || !manifest.records.empty()) {
          throw DataError(where + ": header must be the first line");
        }
        manifest.n_classes = obj.at("n_classes").get<std::size_t>();
        if (obj.contains("split")) manifest.split = parse_split(obj.at("split"));
        have_classes = true;
        continue;
      }
      if (!have_classes) throw DataError(where + ": record before header line");
      VideoRecord r;
      r.video_id = obj.at("video_id").get<std::string>();
      const auto label = obj.at("label").get<std::int64_t>();
      r.stream = parse_stream(obj.at("stream").get<std::string>());
      fs::path p = obj.at("path").get<std::string>();
      r.path = p.is_absolute() ? p : base / p;
      r.frames = obj.at("frames").get<std::size_t>();
      if (label < 0 || static_cast<std::size_t>(label) >= manifest.n_classes) {
        throw DataError(where + ": label out of range: " + std::to_string(label) +
                        " with n_classes=" + std::to_string(manifest.n_classes));
      }
      r.label = static_cast<std::size_t>(label);
      if (!seen.emplace(r.video_id, r.stream).second) {
        throw DataError(where + ": duplicate video_id '" + r.video_id +
                        "' in stream " + to_string(r.stream));
      }
      if (!fs::exists(r.path)) {
        throw DataError(where + ": missing feature file " + r.path.string());
      }
      const auto header = read_feature_header(r.path);
      if (header.frames != r.frames) {
        throw DataError(where + ": frame-count mismatch: record says " +
                        std::to_string(r.frames) + ", file has " +
                        std::to_string(header.frames));
      }
      manifest.records.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw DataError(where + ": bad field: " + e.what());
    }
  }
  return manifest;
}

void save_manifest(const DatasetManifest& manifest, const fs::path& path,
                   const fs::path& base_dir) {
  const fs::path base = base_dir.empty() ? path.parent_path() : base_dir;
  std::ostringstream out;
  out << json{{"n_classes", manifest.n_classes}, {"split", to_string(manifest.split)}}
             .dump()
      << '\n';
  for (const auto& r : manifest.records) {
    auto rel = r.path.lexically_relative(base);
    const bool under = !rel.empty() && *rel.begin() != "..";
    json obj = {{"video_id", r.video_id},
                {"label", r.label},
                {"stream", to_string(r.stream)},
                {"path", (under ? rel : r.path).generic_string()},
                {"frames", r.frames}};
    out << obj.dump() << '\n';
  }
  const auto text = out.str();
  write_file(path, std::vector<unsigned char>(text.begin(), text.end()));
}

}  // namespace tpp
