#include "cli.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <vector>

#include <CLI11.hpp>

#include "tpp/checkpoint.hpp"
#include "tpp/error.hpp"
#include "tpp/feature_store.hpp"
#include "tpp/inference.hpp"
#include "tpp/synthetic.hpp"
#include "tpp/trainer.hpp"
#include "tpp/verification.hpp"

namespace tpp::cli {

namespace fs = std::filesystem;

namespace {

struct Globals {
  std::string workdir = ".";
  std::size_t threads = 1;
  std::uint64_t seed = 0;

  fs::path resolve(const std::string& p) const {
    if (p.empty()) return {};
    fs::path path(p);
    return path.is_absolute() ? path : fs::path(workdir) / path;
  }
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("I/O failure: cannot write " + path.string());
  out << text;
}

// Options shared by `train` and `ablate`.
struct TrainFlags {
  std::string stream = "spatial";
  std::size_t segments = 25;
  std::size_t levels = 3;
  std::vector<std::size_t> bins;
  std::string kernel = "max";
  std::optional<double> lr;
  double final_lr = 1e-5;
  double momentum = 0.9;
  double clip_norm = 40.0;
  double dropout = 0.8;
  std::size_t batch_size = 128;
  std::size_t accumulation = 1;
  std::uint64_t iters = 1000;
  std::uint64_t eval_interval = 50;
  std::size_t patience = 3;
  double min_delta = 1e-4;
  std::string mode = "tpp";
  std::string features_dir;

  void add_to(CLI::App* app) {
    app->add_option("--stream", stream, "Stream to train: spatial|temporal")
        ->check(CLI::IsMember({"spatial", "temporal"}));
    app->add_option("--segments", segments, "Frames sampled per video (T)");
    app->add_option("--levels", levels, "Pyramid levels K (bins 1,2,..,2^(K-1))");
    app->add_option("--bins", bins, "Explicit bins per level, e.g. 1,2,4 (overrides --levels)")
        ->delimiter(',');
    app->add_option("--kernel", kernel, "Pooling kernel: max|average");
    app->add_option("--lr", lr, "Initial learning rate (default 0.01 spatial, 0.001 temporal)");
    app->add_option("--final-lr", final_lr, "Stop once the learning rate decays below this");
    app->add_option("--momentum", momentum);
    app->add_option("--clip-norm", clip_norm, "Global L2 gradient clipping threshold");
    app->add_option("--dropout", dropout, "Dropout rate on the video representation");
    app->add_option("--batch-size", batch_size, "Videos per update");
    app->add_option("--accumulation", accumulation, "Micro-batches accumulated per update");
    app->add_option("--iters", iters, "Maximum iterations");
    app->add_option("--eval-interval", eval_interval);
    app->add_option("--patience", patience, "Plateau patience, in evaluations");
    app->add_option("--min-delta", min_delta);
    app->add_option("--mode", mode, "Aggregation: tpp|frame-average");
    app->add_option("--features-dir", features_dir,
                    "Base directory for relative feature paths in manifests");
  }

  TrainConfig config(const Globals& g) const {
    TrainConfig c;
    c.segments = segments;
    const auto k = parse_kernel(kernel);
    c.pyramid = bins.empty() ? PyramidConfig::with_levels(levels, k) : PyramidConfig{bins, k};
    c.mode = parse_aggregation(mode);
    c.batch_size = batch_size;
    c.accumulation_steps = accumulation;
    c.initial_lr = lr.value_or(parse_stream(stream) == Stream::spatial ? 0.01 : 0.001);
    c.final_lr = final_lr;
    c.momentum = momentum;
    c.clip_norm = clip_norm;
    c.dropout_rate = dropout;
    c.max_iterations = iters;
    c.eval_interval = eval_interval;
    c.patience = patience;
    c.min_delta = min_delta;
    c.seed = g.seed;
    c.threads = g.threads;
    c.validate();
    return c;
  }
};

DatasetManifest load(const Globals& g, const std::string& manifest,
                     const std::string& features_dir) {
  return load_manifest(g.resolve(manifest), g.resolve(features_dir));
}

void write_log(const fs::path& path, const std::vector<LogRecord>& log) {
  std::ostringstream out;
  for (const auto& r : log) out << to_json_line(r) << '\n';
  write_text(path, out.str());
}

int cmd_gen_synthetic(const Globals& g, const SyntheticSpec& spec, const std::string& out) {
  const auto dir = g.resolve(out);
  const auto ds = generate(spec, dir);
  std::cerr << "wrote " << to_string(spec.structure) << " dataset to " << dir.string()
            << " (train: " << ds.train.filename().string()
            << ", test: " << ds.test.filename().string() << ")\n";
  return kOk;
}

int cmd_train(const Globals& g, const TrainFlags& flags, const std::string& manifest,
              const std::string& val_manifest, const std::string& out,
              const std::string& log_path) {
  const auto config = flags.config(g);
  const auto stream = parse_stream(flags.stream);
  const auto train_set = VideoSet::load(load(g, manifest, flags.features_dir), stream);
  VideoSet val;
  if (!val_manifest.empty()) val = VideoSet::load(load(g, val_manifest, flags.features_dir), stream);
  std::cerr << "training " << to_string(config.mode) << " [" << config.pyramid.label()
            << "] on " << train_set.videos.size() << " " << flags.stream << " videos\n";
  const auto result = train(train_set, val, config);
  for (const auto& r : result.log) std::cerr << to_json_line(r) << '\n';
  save_checkpoint(result.checkpoint, g.resolve(out));
  write_log(g.resolve(log_path), result.log);
  return kOk;
}

std::vector<std::size_t> clean_top_k(std::vector<std::size_t> ks, std::size_t classes) {
  std::vector<std::size_t> out;
  for (auto k : ks) {
    if (k >= 1 && k <= classes) out.push_back(k);
  }
  return out;
}

void write_report(const Globals& g, const std::string& report, const EvalReport& r) {
  const auto path = g.resolve(report);
  write_text(path, format_report(r));
  auto json_path = path;
  json_path.replace_extension(".json");
  write_text(json_path, report_json(r) + "\n");
  std::cerr << "overall accuracy " << r.overall_accuracy << " -> " << path.string() << "\n";
}

int cmd_eval(const Globals& g, const std::string& spatial, const std::string& temporal,
             const std::string& manifest, const std::string& features_dir,
             std::size_t segments, FusionWeights weights, std::vector<std::size_t> top_k,
             const std::string& report, const std::string& scores_prefix) {
  if (spatial.empty() && temporal.empty()) {
    throw UsageError("eval needs --spatial and/or --temporal checkpoint");
  }
  weights.validate();
  const auto test = load(g, manifest, features_dir);
  std::optional<Checkpoint> s, t;
  if (!spatial.empty()) s = load_checkpoint(g.resolve(spatial));
  if (!temporal.empty()) t = load_checkpoint(g.resolve(temporal));

  std::optional<ScoreTable> ss, ts;
  if (s) {
    ss = score_videos(test, Stream::spatial, *s, segments, g.threads);
    write_scores(*ss, g.resolve(scores_prefix + "_spatial.jsonl"));
  }
  if (t) {
    ts = score_videos(test, Stream::temporal, *t, segments, g.threads);
    write_scores(*ts, g.resolve(scores_prefix + "_temporal.jsonl"));
  }
  ScoreTable final_table;
  if (ss && ts) {
    final_table = fuse_tables(*ss, *ts, weights);
    write_scores(final_table, g.resolve(scores_prefix + "_fused.jsonl"));
  } else {
    final_table = ss ? *ss : *ts;
  }
  const auto ks = clean_top_k(std::move(top_k), final_table.classes);
  write_report(g, report, build_report(final_table, ks));
  return kOk;
}

int cmd_fuse(const Globals& g, const std::string& spatial, const std::string& temporal,
             FusionWeights weights, std::vector<std::size_t> top_k, const std::string& report,
             const std::string& scores_out) {
  weights.validate();
  const auto fused =
      fuse_tables(read_scores(g.resolve(spatial)), read_scores(g.resolve(temporal)), weights);
  write_scores(fused, g.resolve(scores_out));
  write_report(g, report, build_report(fused, clean_top_k(std::move(top_k), fused.classes)));
  return kOk;
}

int cmd_gradcheck(const Globals& g, GradCheckOptions opt, const std::string& report) {
  opt.seed = g.seed;
  const auto r = run_gradcheck(opt);
  write_text(g.resolve(report), r.summary() + "\n");
  std::cerr << r.summary() << "\n";
  return r.passed() ? kOk : kNumeric;
}

// Fixed ablation rows: pyramid layouts and kernels, in reporting order.
std::vector<PyramidConfig> ablation_rows() {
  return {
      {{1}, PoolKernel::max},
      {{1, 2}, PoolKernel::max},
      {{1, 2, 4}, PoolKernel::max},
      {{1, 2, 4, 8}, PoolKernel::max},
      {{3}, PoolKernel::max},
      {{1, 2, 4}, PoolKernel::average},
  };
}

int cmd_ablate(const Globals& g, const TrainFlags& flags, const std::string& manifest,
               const std::string& val_manifest, const std::string& test_manifest,
               FusionWeights weights, const std::string& report) {
  weights.validate();
  const auto train_m = load(g, manifest, flags.features_dir);
  const auto test_m = load(g, test_manifest, flags.features_dir);
  std::optional<DatasetManifest> val_m;
  if (!val_manifest.empty()) val_m = load(g, val_manifest, flags.features_dir);

  std::vector<Stream> streams;
  for (auto s : {Stream::spatial, Stream::temporal}) {
    if (!train_m.stream_records(s).empty() && !test_m.stream_records(s).empty()) {
      streams.push_back(s);
    }
  }
  if (streams.empty()) throw DataError("ablate: no stream has both train and test videos");

  std::ostringstream table;
  table << std::fixed << std::setprecision(1);
  table << std::left << std::setw(12) << "levels";
  for (auto s : streams) table << std::right << std::setw(12) << to_string(s);
  if (streams.size() == 2) table << std::setw(12) << "two-stream";
  table << "\n";

  for (const auto& pyramid : ablation_rows()) {
    table << std::left << std::setw(12) << pyramid.label() << std::right;
    std::vector<ScoreTable> tables;
    for (auto s : streams) {
      TrainFlags f = flags;
      f.stream = to_string(s);
      auto config = f.config(g);
      config.pyramid = pyramid;
      config.mode = Aggregation::tpp;
      const auto train_set = VideoSet::load(train_m, s);
      VideoSet val;
      if (val_m) val = VideoSet::load(*val_m, s);
      std::cerr << "ablate: " << pyramid.label() << " " << to_string(s) << "\n";
      const auto result = train(train_set, val, config);
      tables.push_back(score_videos(test_m, s, result.checkpoint, config.segments, g.threads));
      table << std::setw(12) << 100.0 * build_report(tables.back()).overall_accuracy;
    }
    if (tables.size() == 2) {
      table << std::setw(12)
            << 100.0 * build_report(fuse_tables(tables[0], tables[1], weights)).overall_accuracy;
    }
    table << "\n";
  }
  write_text(g.resolve(report), table.str());
  std::cerr << table.str();
  return kOk;
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"Temporal pyramid pooling over per-frame video features"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--workdir", g.workdir, "Base directory for all relative paths");
  app.add_option("--threads", g.threads, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--seed", g.seed, "Random seed");

  // gen-synthetic
  SyntheticSpec spec;
  std::string structure = "order_pairs", gen_out = "data";
  auto* gen = app.add_subcommand("gen-synthetic", "Generate a synthetic feature dataset");
  gen->add_option("--structure", structure, "separable|order_pairs|confuser");
  gen->add_option("--classes", spec.n_classes);
  gen->add_option("--dim", spec.dim);
  gen->add_option("--frames", spec.frames);
  gen->add_option("--train-per-class", spec.train_per_class);
  gen->add_option("--val-per-class", spec.validation_per_class);
  gen->add_option("--test-per-class", spec.test_per_class);
  gen->add_option("--noise", spec.noise, "Standard deviation of the frame noise");
  gen->add_option("--variants", spec.variants, "Noisy variants per frame (test-time crops)");
  gen->add_option("--out", gen_out, "Output directory");

  // train
  TrainFlags train_flags;
  std::string train_manifest, train_val, train_out = "model.dtpc", train_log = "train_log.jsonl";
  auto* tr = app.add_subcommand("train", "Train a classifier head");
  tr->add_option("--manifest", train_manifest, "Training manifest")->required();
  tr->add_option("--val-manifest", train_val, "Validation manifest (drives lr decay)");
  tr->add_option("--out", train_out, "Checkpoint path");
  tr->add_option("--log", train_log, "Training log path");
  train_flags.add_to(tr);

  // eval
  std::string ev_spatial, ev_temporal, ev_manifest, ev_features, ev_report = "report.txt",
                                                               ev_scores = "scores";
  std::size_t ev_segments = 25;
  FusionWeights ev_weights;
  std::vector<std::size_t> ev_topk{1, 5};
  auto* ev = app.add_subcommand("eval", "Evaluate checkpoints on a test manifest");
  ev->add_option("--spatial", ev_spatial, "Spatial stream checkpoint");
  ev->add_option("--temporal", ev_temporal, "Temporal stream checkpoint");
  ev->add_option("--manifest", ev_manifest, "Test manifest")->required();
  ev->add_option("--features-dir", ev_features);
  ev->add_option("--segments", ev_segments, "Frames sampled per video at test time");
  ev->add_option("--w-spatial", ev_weights.spatial);
  ev->add_option("--w-temporal", ev_weights.temporal);
  ev->add_option("--top-k", ev_topk)->delimiter(',');
  ev->add_option("--report", ev_report);
  ev->add_option("--scores", ev_scores, "Prefix for the per-stream scores files");

  // fuse
  std::string fu_spatial, fu_temporal, fu_report = "fused_report.txt",
                                       fu_scores = "scores_fused.jsonl";
  FusionWeights fu_weights;
  std::vector<std::size_t> fu_topk{1, 5};
  auto* fu = app.add_subcommand("fuse", "Fuse two scores files");
  fu->add_option("--spatial-scores", fu_spatial)->required();
  fu->add_option("--temporal-scores", fu_temporal)->required();
  fu->add_option("--w-spatial", fu_weights.spatial);
  fu->add_option("--w-temporal", fu_weights.temporal);
  fu->add_option("--top-k", fu_topk)->delimiter(',');
  fu->add_option("--report", fu_report);
  fu->add_option("--scores-out", fu_scores);

  // gradcheck
  GradCheckOptions gc;
  std::string gc_report = "gradcheck.txt";
  auto* gcs = app.add_subcommand("gradcheck", "Check analytic gradients by finite differences");
  gcs->add_option("--instances", gc.instances);
  gcs->add_option("--eps", gc.eps);
  gcs->add_option("--tolerance", gc.tolerance);
  gcs->add_option("--report", gc_report);

  // ablate
  TrainFlags ab_flags;
  std::string ab_manifest, ab_val, ab_test, ab_report = "ablation.txt";
  FusionWeights ab_weights;
  auto* ab = app.add_subcommand("ablate", "Sweep pyramid layouts and kernels");
  ab->add_option("--manifest", ab_manifest, "Training manifest")->required();
  ab->add_option("--val-manifest", ab_val);
  ab->add_option("--test-manifest", ab_test)->required();
  ab->add_option("--w-spatial", ab_weights.spatial);
  ab->add_option("--w-temporal", ab_weights.temporal);
  ab->add_option("--report", ab_report);
  ab_flags.add_to(ab);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    spec.seed = g.seed;
    if (*gen) {
      spec.structure = parse_structure(structure);
      return cmd_gen_synthetic(g, spec, gen_out);
    }
    if (*tr) return cmd_train(g, train_flags, train_manifest, train_val, train_out, train_log);
    if (*ev) {
      return cmd_eval(g, ev_spatial, ev_temporal, ev_manifest, ev_features, ev_segments,
                      ev_weights, ev_topk, ev_report, ev_scores);
    }
    if (*fu) return cmd_fuse(g, fu_spatial, fu_temporal, fu_weights, fu_topk, fu_report, fu_scores);
    if (*gcs) return cmd_gradcheck(g, gc, gc_report);
    if (*ab) return cmd_ablate(g, ab_flags, ab_manifest, ab_val, ab_test, ab_weights, ab_report);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
  return kUsage;
}

}  // namespace tpp::cli
