#include <gtest/gtest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "json.hpp"
#include "support.hpp"

using testing_support::TempDir;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = -1;
  std::string output;
};

Outcome run(const std::string& binary, const std::string& args) {
  const std::string command = binary + " " + args + " 2>&1";
  Outcome r;
  FILE* pipe = popen(command.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buffer{};
  while (std::fgets(buffer.data(), buffer.size(), pipe)) r.output += buffer.data();
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

Outcome cli(const std::string& args) { return run(SEQMASKS_CLI, args); }
Outcome synth(const std::string& args) { return run(SEQMASKS_SYNTH, args); }

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

nlohmann::json read_json(const fs::path& p) {
  std::ifstream in(p);
  return nlohmann::json::parse(in);
}

std::size_t line_count(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) n += line.empty() ? 0 : 1;
  return n;
}

// A desk config pointing at `data` and writing to `out`.
fs::path write_desk_config(const fs::path& dir, const fs::path& data, const fs::path& out,
                           const std::function<void(nlohmann::json&)>& edit = {}) {
  auto j = read_json(fs::path(SEQMASKS_SOURCE_DIR) / "configs" / "desk.json");
  j["data"]["root"] = data.string();
  j["output"]["dir"] = out.string();
  if (edit) edit(j);
  const auto path = dir / "config.json";
  std::ofstream(path) << j.dump(2);
  return path;
}

// Shared fixture: one synthetic dataset and one trained desk checkpoint.
class CliPipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = new TempDir("seqmasks_cli");
    const auto& d = *root_;
    ASSERT_EQ(synth("raw --frames " + q(d / "raw_frames") + " --masks " + q(d / "raw_masks") +
                    " --ids 6 --seqs 3 --test-ids 2")
                  .code,
              0);
    build_ = cli("build-dataset --frames " + q(d / "raw_frames") + " --masks " + q(d / "raw_masks") + " --out " +
                 q(d / "data"));
    const auto config = write_desk_config(d.path(), d / "data", d / "run");
    train_ = cli("train --config " + q(config));
    checkpoint_ = d / "run" / "checkpoints" / "epoch_002.pt";
  }
  static void TearDownTestSuite() {
    delete root_;
    root_ = nullptr;
  }

  static TempDir* root_;
  static Outcome build_, train_;
  static fs::path checkpoint_;
};

TempDir* CliPipeline::root_ = nullptr;
Outcome CliPipeline::build_;
Outcome CliPipeline::train_;
fs::path CliPipeline::checkpoint_;

}  // namespace

TEST(Cli, HelpListsFlagsWithDefaults) {
  const auto top = cli("--help");
  EXPECT_EQ(top.code, 0);
  for (const char* sub : {"build-dataset", "train", "extract", "evaluate", "report"})
    EXPECT_NE(top.output.find(sub), std::string::npos) << sub;
  const auto build = cli("build-dataset --help");
  EXPECT_EQ(build.code, 0);
  for (const char* s : {"--frames", "--masks", "--out", "--min-frames", "--min-fg-ratio", "8", "0.15"})
    EXPECT_NE(build.output.find(s), std::string::npos) << s;
  const auto evaluate = cli("evaluate --help");
  for (const char* s : {"--checkpoint", "--data", "--protocol", "--out", "mars", "32", "64"})
    EXPECT_NE(evaluate.output.find(s), std::string::npos) << s;
  const auto train = cli("train --help");
  for (const char* s : {"--config", "--resume", "--out"}) EXPECT_NE(train.output.find(s), std::string::npos) << s;
}

TEST(Cli, UnknownFlagIsConfigError) { EXPECT_EQ(cli("train --bogus").code, 2); }

TEST(Cli, MissingConfigNamesPath) {
  const auto r = cli("train --config /nonexistent/where/cfg.json");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("/nonexistent/where/cfg.json"), std::string::npos) << r.output;
}

TEST(Cli, ThresholdAboveOneFailsBeforeIo) {
  TempDir dir;
  const auto out = dir / "never";
  const auto r = cli("build-dataset --frames /nonexistent/f --masks /nonexistent/m --out " + q(out) +
                     " --min-fg-ratio 1.1");
  EXPECT_EQ(r.code, 2) << r.output;
  EXPECT_FALSE(fs::exists(out));
}

TEST(Cli, EmptyInputGivesEmptyManifest) {
  TempDir dir;
  fs::create_directories(dir / "f");
  fs::create_directories(dir / "m");
  const auto r = cli("build-dataset --frames " + q(dir / "f") + " --masks " + q(dir / "m") + " --out " + q(dir / "o"));
  EXPECT_EQ(r.code, 0) << r.output;
  EXPECT_TRUE(fs::exists(dir / "o" / "manifest.jsonl"));
  EXPECT_EQ(line_count(dir / "o" / "manifest.jsonl"), 0u);
  EXPECT_EQ(read_json(dir / "o" / "stats.json").at("sequences"), 0);
}

TEST(Cli, MalformedInputWritesValidationReport) {
  TempDir dir;
  fs::create_directories(dir / "f" / "train" / "abc" / "C1T0001");
  fs::create_directories(dir / "m" / "train" / "abc" / "C1T0001");
  const auto r = cli("build-dataset --frames " + q(dir / "f") + " --masks " + q(dir / "m") + " --out " + q(dir / "o"));
  EXPECT_EQ(r.code, 3) << r.output;
  EXPECT_TRUE(fs::exists(dir / "o" / "validation.jsonl"));
}

TEST(Cli, BuildDatasetKeepsFourOfTen) {
  TempDir dir;
  ASSERT_EQ(synth("raw --frames " + q(dir / "f") + " --masks " + q(dir / "m") +
                  " --ids 5 --seqs 2 --effective 8,7,9,3,12,0,8,7,5,2")
                .code,
            0);
  const auto r = cli("build-dataset --frames " + q(dir / "f") + " --masks " + q(dir / "m") + " --out " + q(dir / "o"));
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_EQ(line_count(dir / "o" / "manifest.jsonl"), 4u);
  EXPECT_EQ(read_json(dir / "o" / "stats.json").at("sequences"), 4);
  EXPECT_NE(r.output.find("\"sequences\": 4"), std::string::npos) << r.output;
}

TEST_F(CliPipeline, BuildDatasetStats) {
  ASSERT_EQ(build_.code, 0) << build_.output;
  const auto stats = read_json(root_->path() / "data" / "stats.json");
  EXPECT_EQ(stats.at("ids"), 6);
  for (const char* k : {"sequences", "splits", "length"}) EXPECT_TRUE(stats.contains(k)) << k;
  EXPECT_EQ(stats.at("splits").at("query").at("ids"), 2);
}

TEST_F(CliPipeline, DeskTrainWritesCheckpoints) {
  ASSERT_EQ(train_.code, 0) << train_.output;
  EXPECT_TRUE(fs::exists(checkpoint_));
  EXPECT_TRUE(fs::exists(root_->path() / "run" / "train_log.csv"));
  EXPECT_EQ(line_count(root_->path() / "run" / "train_log.csv"), 11u);
}

TEST_F(CliPipeline, ResumeWithMismatchedDimsNamesComponent) {
  TempDir dir;
  const auto config = write_desk_config(dir.path(), root_->path() / "data", dir / "run", [](nlohmann::json& j) {
    j["model"]["embedding_dim"] = 256;
  });
  const auto r = cli("train --config " + q(config) + " --resume " + q(checkpoint_));
  EXPECT_EQ(r.code, 2) << r.output;
  EXPECT_NE(r.output.find("global_bottleneck"), std::string::npos) << r.output;
}

TEST_F(CliPipeline, SeedOverrideFromEnvironment) {
  const auto& d = *root_;
  TempDir dir;
  const auto config = write_desk_config(dir.path(), d / "data", dir / "run", [](nlohmann::json& j) {
    j["epochs"] = 1;
    j["steps_per_epoch"] = 1;
  });
  ASSERT_EQ(run("SEQMASKS_SEED=41 " + std::string(SEQMASKS_CLI), "train --config " + q(config)).code, 0);
  EXPECT_EQ(read_json(dir / "run" / "config.json").at("seed"), 41);
}

TEST_F(CliPipeline, EvaluateMarsReportKeys) {
  const auto out = root_->path() / "eval_mars";
  const auto r = cli("evaluate --checkpoint " + q(checkpoint_) + " --data " + q(root_->path() / "data") +
                     " --protocol mars --out " + q(out));
  ASSERT_EQ(r.code, 0) << r.output;
  const auto report = read_json(out / "report.json");
  for (const char* k : {"rank1", "rank5", "rank10", "rank20", "map"}) {
    ASSERT_TRUE(report.contains(k)) << k;
    EXPECT_GE(report.at(k).get<double>(), 0.0);
    EXPECT_LE(report.at(k).get<double>(), 1.0);
  }
  EXPECT_NE(r.output.find("Rank1"), std::string::npos);
  EXPECT_TRUE(fs::exists(out / "features.jsonl"));
  const auto summary = cli("report --in " + q(out) + " --out " + q(out));
  EXPECT_EQ(summary.code, 0) << summary.output;
  EXPECT_TRUE(fs::exists(out / "summary.txt"));
}

TEST_F(CliPipeline, ExtractWritesOneRowPerSequence) {
  const auto out = root_->path() / "extract";
  const auto r = cli("extract --checkpoint " + q(checkpoint_) + " --data " + q(root_->path() / "data") +
                     " --split gallery --out " + q(out));
  ASSERT_EQ(r.code, 0) << r.output;
  const auto stats = read_json(root_->path() / "data" / "stats.json");
  EXPECT_EQ(line_count(out / "features.jsonl"), stats.at("splits").at("gallery").at("sequences").get<std::size_t>());
}

TEST_F(CliPipeline, CasiaProtocolOnMarsDataFails) {
  const auto r = cli("evaluate --checkpoint " + q(checkpoint_) + " --data " + q(root_->path() / "data") +
                     " --protocol casia --out " + q(root_->path() / "eval_bad"));
  EXPECT_EQ(r.code, 2) << r.output;
  EXPECT_NE(r.output.find("casia"), std::string::npos) << r.output;
}

TEST_F(CliPipeline, EvaluateCasiaEmitsThreeMatrices) {
  const auto tree = root_->path() / "casia";
  ASSERT_EQ(synth("casia --out " + q(tree) + " --first-id 75 --ids 2 --length 4").code, 0);
  const auto out = root_->path() / "eval_casia";
  const auto r = cli("evaluate --checkpoint " + q(checkpoint_) + " --data " + q(tree) + " --protocol casia --out " +
                     q(out) + " --max-silhouettes 4");
  ASSERT_EQ(r.code, 0) << r.output;
  const auto report = read_json(out / "report.json");
  ASSERT_TRUE(report.contains("casia"));
  for (const char* c : {"NM", "BG", "CL"}) {
    const auto& m = report.at("casia").at(c).at("matrix");
    ASSERT_EQ(m.size(), 11u) << c;
    for (const auto& row : m) EXPECT_EQ(row.size(), 11u);
    EXPECT_EQ(report.at("casia").at(c).at("absent_cells"), 0);
  }
  EXPECT_NE(r.output.find("Excluding"), std::string::npos);
}
