#include "tpp/inference.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tpp/encoder.hpp"
#include "tpp/error.hpp"
#include "tpp/head.hpp"
#include "tpp/io_bytes.hpp"
#include "tpp/parallel.hpp"
#include "tpp/sampler.hpp"

namespace tpp {

using json = nlohmann::json;

Matrix gather_frames(const Matrix& seq, std::span<const std::size_t> indices) {
  Matrix out(indices.size(), seq.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto src = seq.row(indices[i] - 1);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

std::vector<double> sequence_scores(const Matrix& sampled, const Checkpoint& ckpt) {
  if (ckpt.mode == Aggregation::frame_average) {
    return frame_average_predict(sampled, ckpt.head).raw_scores;
  }
  const auto rep = encode(sampled, ckpt.pyramid);
  return predict(rep.flat(), ckpt.head).raw_scores;
}

std::vector<double> predict_video(const FeatureTensor& features, const Checkpoint& ckpt,
                                  std::size_t segments) {
  if (features.dim() != ckpt.dim) {
    throw DataError("dimension mismatch: checkpoint d=" + std::to_string(ckpt.dim) +
                    ", features d=" + std::to_string(features.dim()));
  }
  if (ckpt.mode == Aggregation::tpp && segments < ckpt.pyramid.min_frames()) {
    throw DataError("sequence too short: " + std::to_string(segments) +
                    " segments for a pyramid needing " +
                    std::to_string(ckpt.pyramid.min_frames()));
  }
  const auto indices = segment_indices(
      {.frames = features.frames(), .segments = segments, .mode = SampleMode::center});
  std::vector<double> mean(ckpt.classes, 0.0);
  for (std::size_t v = 0; v < features.variants(); ++v) {
    const auto scores = sequence_scores(gather_frames(features.variant(v), indices), ckpt);
    for (std::size_t c = 0; c < mean.size(); ++c) mean[c] += scores[c];
  }
  if (features.variants() > 1) {
    for (auto& x : mean) x /= static_cast<double>(features.variants());
  }
  return mean;
}

void FusionWeights::validate() const {
  if (!(spatial >= 0.0 && temporal >= 0.0 && spatial + temporal > 0.0)) {
    throw UsageError("fusion weights must be nonnegative with a positive sum");
  }
}

std::vector<double> fuse_streams(std::span<const double> spatial,
                                 std::span<const double> temporal,
                                 const FusionWeights& weights) {
  weights.validate();
  if (spatial.size() != temporal.size()) {
    throw DataError("length mismatch: spatial scores " + std::to_string(spatial.size()) +
                    " vs temporal " + std::to_string(temporal.size()));
  }
  std::vector<double> out(spatial.size());
  for (std::size_t c = 0; c < out.size(); ++c) {
    out[c] = weights.spatial * spatial[c] + weights.temporal * temporal[c];
  }
  return out;
}

std::size_t argmax(std::span<const double> scores) {
  if (scores.empty()) throw DataError("argmax of an empty score vector");
  std::size_t best = 0;
  for (std::size_t c = 1; c < scores.size(); ++c) {
    if (scores[c] > scores[best]) best = c;
  }
  return best;
}

ScoreTable score_videos(const DatasetManifest& manifest, Stream stream,
                        const Checkpoint& ckpt, std::size_t segments,
                        std::size_t threads) {
  if (manifest.n_classes != ckpt.classes) {
    throw DataError("dimension mismatch: checkpoint has " + std::to_string(ckpt.classes) +
                    " classes, manifest has " + std::to_string(manifest.n_classes));
  }
  const auto records = manifest.stream_records(stream);
  ScoreTable table;
  table.classes = ckpt.classes;
  table.videos.resize(records.size());
  parallel_for(records.size(), threads, [&](std::size_t i) {
    const auto& r = records[i];
    table.videos[i] = {r.video_id, r.label,
                       predict_video(read_features(r.path), ckpt, segments)};
  });
  return table;
}

ScoreTable fuse_tables(const ScoreTable& spatial, const ScoreTable& temporal,
                       const FusionWeights& weights) {
  if (spatial.classes != temporal.classes) {
    throw DataError("dimension mismatch: spatial scores have " +
                    std::to_string(spatial.classes) + " classes, temporal " +
                    std::to_string(temporal.classes));
  }
  std::map<std::string, const ScoredVideo*> by_id;
  for (const auto& v : temporal.videos) by_id.emplace(v.video_id, &v);
  if (by_id.size() != spatial.videos.size()) {
    throw DataError("missing stream scores: spatial has " +
                    std::to_string(spatial.videos.size()) + " videos, temporal " +
                    std::to_string(by_id.size()));
  }
  ScoreTable out;
  out.classes = spatial.classes;
  for (const auto& s : spatial.videos) {
    auto it = by_id.find(s.video_id);
    if (it == by_id.end()) {
      throw DataError("missing stream scores: no temporal scores for '" + s.video_id + "'");
    }
    if (it->second->label != s.label) {
      throw DataError("label disagreement between streams for '" + s.video_id + "'");
    }
    out.videos.push_back({s.video_id, s.label, fuse_streams(s.scores, it->second->scores,
                                                             weights)});
  }
  return out;
}

void write_scores(const ScoreTable& table, const std::filesystem::path& path) {
  std::ostringstream out;
  out << json{{"n_classes", table.classes}}.dump() << '\n';
  for (const auto& v : table.videos) {
    out << json{{"video_id", v.video_id}, {"label", v.label}, {"scores", v.scores}}.dump()
        << '\n';
  }
  const auto text = out.str();
  write_file(path, std::vector<unsigned char>(text.begin(), text.end()));
}

ScoreTable read_scores(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("missing file: cannot open scores file " + path.string());
  ScoreTable table;
  bool header = false;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto obj = json::parse(line);
      if (!header) {
        table.classes = obj.at("n_classes").get<std::size_t>();
        header = true;
        continue;
      }
      ScoredVideo v{obj.at("video_id").get<std::string>(),
                    obj.at("label").get<std::size_t>(),
                    obj.at("scores").get<std::vector<double>>()};
      if (v.scores.size() != table.classes || v.label >= table.classes) {
        throw DataError("scores file " + path.string() + ": record '" + v.video_id +
                        "' does not match n_classes=" + std::to_string(table.classes));
      }
      table.videos.push_back(std::move(v));
    } catch (const json::exception& e) {
      throw DataError("malformed scores file " + path.string() + ": " + e.what());
    }
  }
  if (!header) throw DataError("scores file " + path.string() + " has no header line");
  return table;
}

EvalReport build_report(const ScoreTable& table, std::span<const std::size_t> top_k) {
  const auto n = table.classes;
  EvalReport r;
  r.classes = n;
  r.videos = table.videos.size();
  r.class_counts.assign(n, 0);
  r.confusion.assign(n, std::vector<std::size_t>(n, 0));
  r.top_k.assign(top_k.begin(), top_k.end());
  std::vector<std::size_t> hits(top_k.size(), 0);
  std::size_t correct = 0;
  for (const auto& v : table.videos) {
    if (v.label >= n || v.scores.size() != n) {
      throw DataError("score vector for '" + v.video_id + "' does not match " +
                      std::to_string(n) + " classes");
    }
    const auto pred = argmax(v.scores);
    ++r.class_counts[v.label];
    ++r.confusion[v.label][pred];
    if (pred == v.label) ++correct;
    std::size_t rank = 0;
    for (std::size_t c = 0; c < n; ++c) {
      const double s = v.scores[c];
      const double own = v.scores[v.label];
      if (s > own || (s == own && c < v.label)) ++rank;
    }
    for (std::size_t i = 0; i < top_k.size(); ++i) {
      if (rank < top_k[i]) ++hits[i];
    }
  }
  const double total = static_cast<double>(r.videos);
  r.overall_accuracy = r.videos ? static_cast<double>(correct) / total : 0.0;
  r.per_class_accuracy.assign(n, 0.0);
  for (std::size_t c = 0; c < n; ++c) {
    if (r.class_counts[c]) {
      r.per_class_accuracy[c] = static_cast<double>(r.confusion[c][c]) /
                                static_cast<double>(r.class_counts[c]);
    }
  }
  for (auto h : hits) r.top_k_accuracy.push_back(r.videos ? h / total : 0.0);
  return r;
}

EvalReport evaluate(const DatasetManifest& test, const Checkpoint* spatial,
                    const Checkpoint* temporal, const FusionWeights& weights,
                    std::size_t segments, std::span<const std::size_t> top_k,
                    std::size_t threads) {
  if (!spatial && !temporal) throw UsageError("evaluate needs at least one checkpoint");
  if (spatial && temporal) {
    const auto s = score_videos(test, Stream::spatial, *spatial, segments, threads);
    const auto t = score_videos(test, Stream::temporal, *temporal, segments, threads);
    return build_report(fuse_tables(s, t, weights), top_k);
  }
  const auto stream = spatial ? Stream::spatial : Stream::temporal;
  return build_report(score_videos(test, stream, spatial ? *spatial : *temporal, segments,
                                   threads),
                      top_k);
}

std::string format_report(const EvalReport& r) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(4);
  out << "videos: " << r.videos << "\n";
  out << "overall accuracy: " << r.overall_accuracy << "\n";
  for (std::size_t i = 0; i < r.top_k.size(); ++i) {
    out << "top-" << r.top_k[i] << " accuracy: " << r.top_k_accuracy[i] << "\n";
  }
  out << "\nper-class accuracy\n";
  out << "class  count  accuracy\n";
  for (std::size_t c = 0; c < r.classes; ++c) {
    out << std::setw(5) << c << "  " << std::setw(5) << r.class_counts[c] << "  "
        << r.per_class_accuracy[c] << "\n";
  }
  out << "\nconfusion matrix (rows: true class, columns: predicted)\n";
  for (std::size_t c = 0; c < r.classes; ++c) {
    for (std::size_t p = 0; p < r.classes; ++p) {
      out << (p ? " " : "") << std::setw(5) << r.confusion[c][p];
    }
    out << "\n";
  }
  return out.str();
}

std::string report_json(const EvalReport& r) {
  json top = json::object();
  for (std::size_t i = 0; i < r.top_k.size(); ++i) {
    top[std::to_string(r.top_k[i])] = r.top_k_accuracy[i];
  }
  return json{{"videos", r.videos},
              {"n_classes", r.classes},
              {"overall_accuracy", r.overall_accuracy},
              {"per_class_accuracy", r.per_class_accuracy},
              {"class_counts", r.class_counts},
              {"confusion", r.confusion},
              {"top_k_accuracy", top}}
      .dump(2);
}

}  // namespace tpp
