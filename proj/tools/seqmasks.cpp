// seqmasks command-line entry point.
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "seqmasks/dataset/build.hpp"
#include "seqmasks/error.hpp"
#include "seqmasks/evaluator.hpp"
#include "seqmasks/log.hpp"
#include "seqmasks/train/checkpoint.hpp"
#include "seqmasks/train/config.hpp"
#include "seqmasks/train/features.hpp"
#include "seqmasks/train/trainer.hpp"

namespace fs = std::filesystem;
using namespace seqmasks;

namespace {

enum ExitCode { kOk = 0, kConfig = 2, kData = 3, kRuntime = 4 };

struct Corpus {
  DatasetIndex index;
  DataFormat format;
};

DataFormat detect_format(const fs::path& root) {
  if (!fs::is_directory(root)) throw DataError("data directory not found: " + root.string());
  return fs::exists(root / "manifest.jsonl") ? DataFormat::kMaskMars : DataFormat::kCasiaB;
}

// CASIA-B silhouettes are taken as they are; Mask-MARS sequences get their
// effective frame lists (and the filter) applied.
Corpus load_corpus(const fs::path& root, DataFormat format, const FilterRules& rules,
                   const SequenceLoader& loader, SkipReport* skips) {
  if (format == DataFormat::kMaskMars) {
    return {filter_corpus(parse_mask_mars(root), loader, rules, skips), format};
  }
  auto index = parse_casia_b(root, skips);
  if (!index.casia_shaped()) throw ConfigError(root.string() + " is not a CASIA-B tree (no views)");
  return {std::move(index), format};
}

std::optional<std::uint64_t> seed_from_env() {
  const char* text = std::getenv("SEQMASKS_SEED");
  if (!text || !*text) return std::nullopt;
  try {
    std::size_t used = 0;
    const auto value = std::stoull(text, &used);
    if (used != std::string(text).size()) throw std::invalid_argument(text);
    return value;
  } catch (const std::exception&) {
    throw ConfigError(std::string("SEQMASKS_SEED is not an unsigned integer: ") + text);
  }
}

// ---------------------------------------------------------------- build-dataset

struct BuildArgs {
  std::string frames, masks, out;
  int min_frames = 8;
  double min_fg_ratio = kEffectiveRatio;
};

int run_build(const BuildArgs& a) {
  const FilterRules rules{a.min_frames, a.min_fg_ratio};
  rules.validate();
  SkipReport problems;
  const auto raw = scan_raw_layout(a.frames, a.masks, problems);
  if (!problems.empty()) {
    fs::create_directories(a.out);
    problems.write_jsonl(fs::path(a.out) / "validation.jsonl");
    throw DataError(std::to_string(problems.size()) + " malformed input entries; see " +
                    (fs::path(a.out) / "validation.jsonl").string());
  }
  if (raw.sequence_count() == 0) log::warn() << "input contains no sequences";
  DiskLoader loader;
  const auto summary = build_dataset(raw, loader, rules, a.out);
  std::cout << stats_to_json(summary.stats) << '\n';
  return kOk;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string config, resume, out;
};

int run_train(const TrainArgs& a) {
  auto config = load_config(a.config);
  if (auto seed = seed_from_env()) {
    log::info() << "SEQMASKS_SEED overrides the config seed: " << *seed;
    config.seed = *seed;
  }
  if (!a.out.empty()) config.output_dir = a.out;
  if (config.data_root.empty()) throw ConfigError("data.root is not set in " + a.config);
  DiskLoader loader;
  SkipReport skips;
  auto corpus = load_corpus(config.data_root, config.data_format, config.filter, loader, &skips);
  if (!skips.empty()) {
    fs::create_directories(config.output_dir);
    skips.write_jsonl(fs::path(config.output_dir) / "skipped.jsonl");
  }
  Trainer trainer(config, std::move(corpus.index), loader);
  if (!a.resume.empty()) trainer.resume(a.resume);
  const auto result = trainer.run();
  for (const auto& path : result.checkpoints) std::cout << path.string() << '\n';
  return kOk;
}

// ---------------------------------------------------------------- extract / evaluate

struct ExtractArgs {
  std::string checkpoint, data, out, split = "all";
  int chunk = 32;
  int max_silhouettes = 64;
};

ExtractOptions extract_options(const CheckpointManifest& manifest, int chunk, int max_silhouettes) {
  ExtractOptions options;
  options.chunk = chunk;
  options.max_silhouettes = max_silhouettes;
  options.geometry = manifest_geometry(manifest);
  if (chunk < 1 || max_silhouettes < 1) throw ConfigError("--chunk and --max-silhouettes must be >= 1");
  return options;
}

void extract_into(const fs::path& checkpoint, const Corpus& corpus, const SequenceLoader& loader,
                  const ExtractOptions& options, std::optional<Split> split, const fs::path& out) {
  auto model = model_from_checkpoint(checkpoint);
  SkipReport skips;
  auto embeddings = extract_features(*model, corpus.index, loader, options, split, &skips);
  fs::create_directories(out);
  save_embeddings(embeddings, out / "features.jsonl");
  if (!skips.empty()) skips.write_jsonl(out / "skipped.jsonl");
  log::info() << "wrote " << embeddings.size() << " embeddings to " << (out / "features.jsonl").string();
}

int run_extract(const ExtractArgs& a) {
  const auto manifest = read_checkpoint_manifest(a.checkpoint);
  const auto options = extract_options(manifest, a.chunk, a.max_silhouettes);
  std::optional<Split> split;
  if (a.split != "all") {
    try {
      split = parse_split(a.split);
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
  }
  DiskLoader loader;
  const auto format = detect_format(a.data);
  const auto corpus = load_corpus(a.data, format, FilterRules{1, kEffectiveRatio}, loader, nullptr);
  extract_into(a.checkpoint, corpus, loader, options, split, a.out);
  return kOk;
}

struct EvaluateArgs {
  std::string checkpoint, data, protocol = "mars", out;
  int chunk = 32;
  int max_silhouettes = 64;
};

int run_evaluate(const EvaluateArgs& a) {
  if (a.protocol != "mars" && a.protocol != "casia") {
    throw ConfigError("--protocol must be mars or casia");
  }
  const auto format = detect_format(a.data);
  if (a.protocol == "casia" && format != DataFormat::kCasiaB) {
    throw ConfigError("--protocol casia needs a CASIA-B tree with views; " + a.data +
                      " is a Mask-MARS layout");
  }
  if (a.protocol == "mars" && format != DataFormat::kMaskMars) {
    throw ConfigError("--protocol mars needs a Mask-MARS layout with manifest.jsonl; " + a.data +
                      " has none");
  }
  const auto manifest = read_checkpoint_manifest(a.checkpoint);
  const auto options = extract_options(manifest, a.chunk, a.max_silhouettes);
  DiskLoader loader;
  const auto corpus = load_corpus(a.data, format, FilterRules{1, kEffectiveRatio}, loader, nullptr);
  auto model = model_from_checkpoint(a.checkpoint);
  SkipReport skips;
  auto query = extract_features(*model, corpus.index, loader, options, Split::kQuery, &skips);
  auto gallery = extract_features(*model, corpus.index, loader, options, Split::kGallery, &skips);
  fs::create_directories(a.out);
  {
    Embeddings merged(query.dim());
    for (std::size_t i = 0; i < query.size(); ++i) merged.add(query.meta(i), query.row(i));
    for (std::size_t i = 0; i < gallery.size(); ++i) merged.add(gallery.meta(i), gallery.row(i));
    save_embeddings(merged, fs::path(a.out) / "features.jsonl");
  }
  if (!skips.empty()) skips.write_jsonl(fs::path(a.out) / "skipped.jsonl");
  RetrievalProblem problem{std::move(query), std::move(gallery)};
  problem.validate();
  EvalReport report;
  if (a.protocol == "mars") {
    report.cmc = cmc_map(problem);
  } else {
    report.casia = casia_eval(problem);
  }
  write_report(report, a.out);
  std::cout << format_report_table(report, fs::path(a.checkpoint).stem().string());
  return kOk;
}

// ---------------------------------------------------------------- report

struct ReportArgs {
  std::vector<std::string> inputs;
  std::string out;
};

int run_report(const ReportArgs& a) {
  std::string table;
  for (const auto& input : a.inputs) {
    fs::path path = input;
    if (fs::is_directory(path)) path /= "report.json";
    std::ifstream in(path);
    if (!in) throw DataError("cannot read report " + path.string());
    std::stringstream text;
    text << in.rdbuf();
    const auto report = report_from_json(text.str());
    const auto label = fs::path(input).filename().empty() ? fs::path(input).parent_path().filename().string()
                                                         : fs::path(input).filename().string();
    table += format_report_table(report, label);
  }
  std::cout << table;
  if (!a.out.empty()) {
    fs::create_directories(a.out);
    std::ofstream(fs::path(a.out) / "summary.txt") << table;
  }
  return kOk;
}

template <typename F>
int guarded(F&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    log::error() << "config error: " << e.what();
    return kConfig;
  } catch (const DataError& e) {
    log::error() << "data error: " << e.what();
    return kData;
  } catch (const std::exception& e) {
    log::error() << "runtime error: " << e.what();
    return kRuntime;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"seqmasks: appearance + gait video re-identification"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Expand help for every subcommand");
  std::string level = "info";
  app.add_option("--log-level", level, "debug|info|warn|error")->capture_default_str();

  BuildArgs build;
  auto* build_cmd = app.add_subcommand("build-dataset", "Filter raw frame/mask trees into the normalized layout");
  build_cmd->add_option("--frames", build.frames, "Frame root: <split>/<id>/<tracklet>/<frame>")->required();
  build_cmd->add_option("--masks", build.masks, "Mask root with the same tree, single-channel")->required();
  build_cmd->add_option("--out", build.out, "Output directory")->required();
  build_cmd->add_option("--min-frames", build.min_frames, "Minimum effective masks per sequence")
      ->capture_default_str();
  build_cmd->add_option("--min-fg-ratio", build.min_fg_ratio, "Foreground share for an effective mask")
      ->capture_default_str();

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train from a JSON config (SEQMASKS_SEED overrides the seed)");
  train_cmd->add_option("--config", train.config, "Config file")->required();
  train_cmd->add_option("--resume", train.resume, "Checkpoint to continue from")->capture_default_str();
  train_cmd->add_option("--out", train.out, "Output directory (overrides output.dir)")->capture_default_str();

  ExtractArgs extract;
  auto* extract_cmd = app.add_subcommand("extract", "Write fused descriptors for a dataset");
  extract_cmd->add_option("--checkpoint", extract.checkpoint, "Checkpoint file")->required();
  extract_cmd->add_option("--data", extract.data, "Mask-MARS layout or CASIA-B tree")->required();
  extract_cmd->add_option("--out", extract.out, "Output directory")->required();
  extract_cmd->add_option("--split", extract.split, "all|train|query|gallery")->capture_default_str();
  extract_cmd->add_option("--chunk", extract.chunk, "Frames per backbone pass")->capture_default_str();
  extract_cmd->add_option("--max-silhouettes", extract.max_silhouettes, "Gait frames per sequence")
      ->capture_default_str();

  EvaluateArgs evaluate;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Extract query/gallery descriptors and score them");
  evaluate_cmd->add_option("--checkpoint", evaluate.checkpoint, "Checkpoint file")->required();
  evaluate_cmd->add_option("--data", evaluate.data, "Mask-MARS layout or CASIA-B tree")->required();
  evaluate_cmd->add_option("--protocol", evaluate.protocol, "mars|casia")->capture_default_str();
  evaluate_cmd->add_option("--out", evaluate.out, "Output directory")->required();
  evaluate_cmd->add_option("--chunk", evaluate.chunk, "Frames per backbone pass")->capture_default_str();
  evaluate_cmd->add_option("--max-silhouettes", evaluate.max_silhouettes, "Gait frames per sequence")
      ->capture_default_str();

  ReportArgs report;
  auto* report_cmd = app.add_subcommand("report", "Print result tables from evaluate outputs");
  report_cmd->add_option("--in", report.inputs, "report.json files or evaluate output directories")
      ->required();
  report_cmd->add_option("--out", report.out, "Also write summary.txt here")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }

  return guarded([&] {
    if (level == "debug") log::set_level(log::Level::kDebug);
    else if (level == "info") log::set_level(log::Level::kInfo);
    else if (level == "warn") log::set_level(log::Level::kWarning);
    else if (level == "error") log::set_level(log::Level::kError);
    else throw ConfigError("--log-level must be debug|info|warn|error");

    if (*build_cmd) return run_build(build);
    if (*train_cmd) return run_train(train);
    if (*extract_cmd) return run_extract(extract);
    if (*evaluate_cmd) return run_evaluate(evaluate);
    return run_report(report);
  });
}
