#include "tpp/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tpp/error.hpp"
#include "tpp/io_bytes.hpp"

namespace tpp {

using json = nlohmann::json;

std::string to_string(Aggregation a) {
  return a == Aggregation::tpp ? "tpp" : "frame-average";
}

Aggregation parse_aggregation(const std::string& s) {
  if (s == "tpp") return Aggregation::tpp;
  if (s == "frame-average" || s == "frame_average") return Aggregation::frame_average;
  throw UsageError("unknown aggregation mode '" + s + "'");
}

std::size_t Checkpoint::input_size() const {
  return mode == Aggregation::tpp ? pyramid.representation_size(dim) : dim;
}

void Checkpoint::validate() const {
  pyramid.validate();
  if (dim == 0 || classes == 0) throw DataError("invalid dimension in checkpoint");
  if (head.weights.rows() != classes || head.weights.cols() != input_size() ||
      head.bias.size() != classes) {
    std::ostringstream msg;
    msg << "checkpoint head is " << head.weights.rows() << "x" << head.weights.cols()
        << ", expected " << classes << "x" << input_size();
    throw DataError(msg.str());
  }
  const auto& opt = optimizer;
  if (!opt.weight_momentum.empty() &&
      (opt.weight_momentum.rows() != classes || opt.weight_momentum.cols() != input_size() ||
       opt.bias_momentum.size() != classes)) {
    throw DataError("checkpoint momentum buffers do not match the head shape");
  }
}

namespace {

void put_f64(std::vector<unsigned char>& out, double x) {
  put_le(out, std::bit_cast<std::uint64_t>(x));
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  ckpt.validate();
  const bool has_momentum = !ckpt.optimizer.weight_momentum.empty();
  json header = {
      {"format", "tpp-checkpoint"},
      {"mode", to_string(ckpt.mode)},
      {"kernel", to_string(ckpt.pyramid.kernel)},
      {"level_bins", ckpt.pyramid.level_bins},
      {"dim", ckpt.dim},
      {"classes", ckpt.classes},
      {"input_size", ckpt.input_size()},
      {"iteration", ckpt.optimizer.iteration},
      {"evals_since_improvement", ckpt.optimizer.evals_since_improvement},
      {"has_momentum", has_momentum},
      {"payload",
       {"dropout_rate", "learning_rate", "best_val_loss", "weights[classes][input_size]",
        "bias[classes]", "weight_momentum[classes][input_size]?",
        "bias_momentum[classes]?"}},
  };
  const auto text = header.dump();

  std::vector<unsigned char> bytes(kCheckpointMagic, kCheckpointMagic + 4);
  put_le(bytes, kCheckpointVersion);
  put_le(bytes, static_cast<std::uint32_t>(text.size()));
  bytes.insert(bytes.end(), text.begin(), text.end());
  put_f64(bytes, ckpt.head.dropout_rate);
  put_f64(bytes, ckpt.optimizer.learning_rate);
  put_f64(bytes, ckpt.optimizer.best_val_loss);
  for (double w : ckpt.head.weights.flat()) put_f64(bytes, w);
  for (double b : ckpt.head.bias) put_f64(bytes, b);
  if (has_momentum) {
    for (double w : ckpt.optimizer.weight_momentum.flat()) put_f64(bytes, w);
    for (double b : ckpt.optimizer.bias_momentum) put_f64(bytes, b);
  }
  write_file(path, bytes);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  ByteReader in(bytes, path.string());
  const auto magic = in.take(4, "bad magic: file shorter than header");
  if (std::memcmp(magic.data(), kCheckpointMagic, 4) != 0) {
    throw DataError("bad magic: not a checkpoint file: " + path.string());
  }
  const auto version = in.get<std::uint16_t>();
  if (version != kCheckpointVersion) {
    throw DataError("version mismatch: checkpoint version " + std::to_string(version));
  }
  const auto header_len = in.get<std::uint32_t>();
  const auto header_bytes = in.take(header_len, "truncated checkpoint header");

  Checkpoint ckpt;
  bool has_momentum = false;
  try {
    const auto header = json::parse(header_bytes.begin(), header_bytes.end());
    ckpt.mode = parse_aggregation(header.at("mode").get<std::string>());
    ckpt.pyramid.kernel = parse_kernel(header.at("kernel").get<std::string>());
    ckpt.pyramid.level_bins = header.at("level_bins").get<std::vector<std::size_t>>();
    ckpt.dim = header.at("dim").get<std::size_t>();
    ckpt.classes = header.at("classes").get<std::size_t>();
    ckpt.optimizer.iteration = header.at("iteration").get<std::uint64_t>();
    ckpt.optimizer.evals_since_improvement =
        header.at("evals_since_improvement").get<std::uint64_t>();
    has_momentum = header.at("has_momentum").get<bool>();
  } catch (const json::exception& e) {
    throw DataError("malformed checkpoint header in " + path.string() + ": " + e.what());
  }
  ckpt.pyramid.validate();
  const auto cols = ckpt.input_size();
  const auto n = ckpt.classes;
  const std::size_t expected =
      8 * (3 + (n * cols + n) * (has_momentum ? 2 : 1));
  if (in.remaining() != expected) {
    throw DataError("truncated checkpoint payload in " + path.string());
  }
  auto f64 = [&in] { return std::bit_cast<double>(in.get<std::uint64_t>()); };
  ckpt.head.dropout_rate = f64();
  ckpt.optimizer.learning_rate = f64();
  ckpt.optimizer.best_val_loss = f64();
  ckpt.head.weights = Matrix(n, cols);
  for (auto& w : ckpt.head.weights.flat()) w = f64();
  ckpt.head.bias.resize(n);
  for (auto& b : ckpt.head.bias) b = f64();
  if (has_momentum) {
    ckpt.optimizer.weight_momentum = Matrix(n, cols);
    for (auto& w : ckpt.optimizer.weight_momentum.flat()) w = f64();
    ckpt.optimizer.bias_momentum.resize(n);
    for (auto& b : ckpt.optimizer.bias_momentum) b = f64();
  }
  ckpt.validate();
  return ckpt;
}

}  // namespace tpp
