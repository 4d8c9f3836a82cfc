#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "cli.hpp"
#include "doctest.h"
#include "test_util.hpp"
#include "tpp/checkpoint.hpp"
#include "tpp/io_bytes.hpp"

#include <nlohmann/json.hpp>

using tpp::test::TempDir;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string err;
};

Outcome tpp_run(const fs::path& workdir, std::vector<std::string> args) {
  args.insert(args.begin(), {"tpp", "--workdir", workdir.string()});
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream captured;
  auto* old = std::cerr.rdbuf(captured.rdbuf());
  const int code = tpp::cli::run(static_cast<int>(argv.size()), argv.data());
  std::cerr.rdbuf(old);
  return {code, captured.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), {}};
}

const std::vector<std::string> kFastTrain{"--segments", "6",      "--batch-size", "16",
                                          "--iters",    "120",    "--dropout",    "0.5",
                                          "--lr",       "0.01",   "--eval-interval", "20"};

std::vector<std::string> with(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

TEST_CASE("separable data: generate, train both streams, evaluate") {
  TempDir dir("cli");
  REQUIRE(tpp_run(dir.path(), {"gen-synthetic", "--structure", "separable", "--classes", "3",
                               "--dim", "8", "--frames", "10", "--train-per-class", "20",
                               "--val-per-class", "5", "--test-per-class", "10"})
              .code == 0);
  for (std::string stream : {"spatial", "temporal"}) {
    const auto r = tpp_run(dir.path(),
                           with({"train", "--manifest", "data/train.jsonl", "--val-manifest",
                                 "data/validation.jsonl", "--stream", stream, "--out",
                                 stream + ".dtpc", "--log", stream + ".log", "--levels", "2"},
                                kFastTrain));
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(fs::exists(dir / (stream + ".dtpc")));
    std::istringstream log(slurp(dir / (stream + ".log")));
    std::string line;
    std::size_t lines = 0;
    while (std::getline(log, line)) {
      const auto j = nlohmann::json::parse(line);
      CHECK(j.contains("iteration"));
      CHECK(j.contains("lr"));
      ++lines;
    }
    CHECK(lines > 0);
  }

  const auto r = tpp_run(dir.path(), {"eval", "--spatial", "spatial.dtpc", "--temporal",
                                      "temporal.dtpc", "--manifest", "data/test.jsonl",
                                      "--segments", "6", "--report", "report.txt"});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto report = nlohmann::json::parse(slurp(dir / "report.json"));
  CHECK(report["overall_accuracy"].get<double>() >= 0.99);
  CHECK(report["videos"].get<std::size_t>() == 30);
  CHECK(fs::exists(dir / "scores_spatial.jsonl"));
  CHECK(fs::exists(dir / "scores_fused.jsonl"));

  SUBCASE("fuse reproduces the fused scores from the per-stream files") {
    const auto f = tpp_run(dir.path(), {"fuse", "--spatial-scores", "scores_spatial.jsonl",
                                        "--temporal-scores", "scores_temporal.jsonl",
                                        "--scores-out", "refused.jsonl"});
    REQUIRE(f.code == 0);
    CHECK(slurp(dir / "refused.jsonl") == slurp(dir / "scores_fused.jsonl"));
  }

  SUBCASE("feature dimension mismatch names both values") {
    REQUIRE(tpp_run(dir.path(), {"gen-synthetic", "--structure", "separable", "--classes", "3",
                                 "--dim", "6", "--frames", "10", "--out", "other"})
                .code == 0);
    const auto bad = tpp_run(dir.path(), {"eval", "--spatial", "spatial.dtpc", "--manifest",
                                          "other/test.jsonl"});
    CHECK(bad.code == 3);
    CHECK(bad.err.find("d=8") != std::string::npos);
    CHECK(bad.err.find("d=6") != std::string::npos);
  }

  SUBCASE("checkpoints load as written") {
    const auto c = tpp::load_checkpoint(dir / "spatial.dtpc");
    CHECK(c.dim == 8);
    CHECK(c.classes == 3);
    CHECK(c.pyramid.level_bins == std::vector<std::size_t>{1, 2});
  }
}

TEST_CASE("training is reproducible byte for byte") {
  TempDir dir("cli_det");
  REQUIRE(tpp_run(dir.path(), {"--seed", "4", "gen-synthetic", "--classes", "4", "--dim", "6",
                               "--frames", "8", "--train-per-class", "8"})
              .code == 0);
  for (std::string name : {"a", "b"}) {
    REQUIRE(tpp_run(dir.path(),
                    with({"--seed", "11", "--threads", name == "a" ? "1" : "3", "train",
                          "--manifest", "data/train.jsonl", "--out", name + ".dtpc", "--log",
                          name + ".log"},
                         kFastTrain))
                .code == 0);
  }
  CHECK(tpp::read_file(dir / "a.dtpc") == tpp::read_file(dir / "b.dtpc"));
  CHECK(slurp(dir / "a.log") == slurp(dir / "b.log"));
}

TEST_CASE("ablation rows come out in a fixed order") {
  TempDir dir("cli_ablate");
  REQUIRE(tpp_run(dir.path(), {"gen-synthetic", "--structure", "order_pairs", "--dim", "6",
                               "--frames", "16", "--train-per-class", "6",
                               "--test-per-class", "3"})
              .code == 0);
  const auto r = tpp_run(dir.path(), {"ablate", "--manifest", "data/train.jsonl",
                                      "--test-manifest", "data/test.jsonl", "--segments", "8",
                                      "--iters", "10", "--batch-size", "8"});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  std::istringstream table(slurp(dir / "ablation.txt"));
  std::vector<std::string> rows;
  std::string line;
  std::getline(table, line);
  CHECK(line.find("two-stream") != std::string::npos);
  while (std::getline(table, line)) rows.push_back(line.substr(0, line.find(' ')));
  CHECK(rows == std::vector<std::string>{"1", "1,2", "1,2,4", "1,2,4,8", "3", "1,2,4(Ave)"});
}

TEST_CASE("gradcheck subcommand") {
  TempDir dir("cli_gc");
  CHECK(tpp_run(dir.path(), {"gradcheck", "--instances", "10"}).code == 0);
  CHECK(slurp(dir / "gradcheck.txt").find("PASS") == 11);
  CHECK(tpp_run(dir.path(), {"gradcheck", "--instances", "4", "--tolerance", "1e-30"}).code == 4);
}

TEST_CASE("usage and data errors map to exit codes") {
  TempDir dir("cli_err");
  CHECK(tpp_run(dir.path(), {"train", "--bogus"}).code == 2);
  CHECK(tpp_run(dir.path(), {}).code == 2);
  CHECK(tpp_run(dir.path(), {"train", "--manifest", "missing.jsonl"}).code == 3);
  CHECK(tpp_run(dir.path(), {"eval", "--manifest", "missing.jsonl"}).code == 2);
  CHECK(tpp_run(dir.path(), {"gen-synthetic", "--structure", "spiral"}).code == 2);
  CHECK(tpp_run(dir.path(), {"gen-synthetic", "--classes", "3"}).code == 2);
  CHECK(tpp_run(dir.path(), {"train", "--manifest", "x.jsonl", "--dropout", "1.0"}).code == 2);
}

#ifdef TPP_BINARY
TEST_CASE("installed binary reports exit codes") {
  TempDir dir("cli_bin");
  const std::string bin = TPP_BINARY;
  const auto quiet = " >/dev/null 2>&1";
  auto status = [](int s) { return WIFEXITED(s) ? WEXITSTATUS(s) : -1; };
  CHECK(status(std::system((bin + " --help" + quiet).c_str())) == 0);
  CHECK(status(std::system((bin + " train --nope" + quiet).c_str())) == 2);
  CHECK(status(std::system((bin + " --workdir " + dir.path().string() +
                            " train --manifest none.jsonl" + quiet)
                               .c_str())) == 3);
}
#endif
