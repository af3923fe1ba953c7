#include "seqmasks/dataset/build.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <regex>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "seqmasks/error.hpp"
#include "seqmasks/log.hpp"

namespace seqmasks {

namespace fs = std::filesystem;

namespace {

bool all_digits(const std::string& s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
}

std::vector<fs::path> sorted_dirs(const fs::path& root) {
  std::vector<fs::path> out;
  if (!fs::is_directory(root)) return out;
  for (const auto& d : fs::directory_iterator(root)) {
    if (d.is_directory()) out.push_back(d.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::map<std::string, fs::path> files_by_stem(const fs::path& dir) {
  std::map<std::string, fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& f : fs::directory_iterator(dir)) {
    if (f.is_regular_file()) out.emplace(f.path().stem().string(), f.path());
  }
  return out;
}

}  // namespace

DatasetIndex scan_raw_layout(const fs::path& frames_root, const fs::path& masks_root,
                             SkipReport& problems) {
  for (const auto& root : {frames_root, masks_root}) {
    if (!fs::is_directory(root)) throw DataError("input directory not found: " + root.string());
  }
  static const std::regex camera_token(R"(C(\d+))");
  std::vector<SequenceEntry> entries;
  for (const auto& split_dir : sorted_dirs(masks_root)) {
    const std::string split_name = split_dir.filename().string();
    Split split;
    try {
      split = parse_split(split_name);
    } catch (const Error&) {
      problems.add(split_name, "top-level directory is not a split (train|query|gallery)");
      continue;
    }
    for (const auto& id_dir : sorted_dirs(split_dir)) {
      const std::string id = id_dir.filename().string();
      if (!all_digits(id)) {
        problems.add(split_name + "/" + id, "identity directory is not numeric");
        continue;
      }
      for (const auto& tracklet_dir : sorted_dirs(id_dir)) {
        const std::string tracklet = tracklet_dir.filename().string();
        const std::string key = id + "/" + tracklet;
        std::smatch match;
        if (!std::regex_search(tracklet, match, camera_token)) {
          problems.add(key, "tracklet name has no C<camera> token");
          continue;
        }
        const auto masks = files_by_stem(tracklet_dir);
        const auto frames = files_by_stem(frames_root / split_name / id / tracklet);
        if (masks.empty()) {
          problems.add(key, "no mask files");
          continue;
        }
        std::vector<std::string> unpaired;
        for (const auto& [stem, path] : masks) {
          if (!frames.count(stem)) unpaired.push_back("mask " + stem);
        }
        for (const auto& [stem, path] : frames) {
          if (!masks.count(stem)) unpaired.push_back("frame " + stem);
        }
        if (!unpaired.empty()) {
          std::string what = "unpaired files:";
          for (const auto& u : unpaired) what += " " + u;
          problems.add(key, what);
          continue;
        }
        SequenceEntry e;
        e.key = key;
        e.identity = std::stoll(id);
        e.camera = std::stoi(match[1].str());
        e.split = split;
        for (const auto& [stem, path] : masks) {
          e.mask_paths.push_back(path.string());
          e.frame_paths.push_back(frames.at(stem).string());
        }
        e.frame_count = static_cast<int>(e.mask_paths.size());
        entries.push_back(std::move(e));
      }
    }
  }
  return DatasetIndex(std::move(entries));
}

void write_normalized_layout(const DatasetIndex& index, const SequenceLoader& loader,
                             const fs::path& root) {
  std::vector<ManifestRecord> records;
  for (const auto& e : index.entries()) {
    const auto slash = e.key.find('/');
    ManifestRecord r;
    r.id = slash == std::string::npos ? std::to_string(e.identity) : e.key.substr(0, slash);
    r.tracklet = slash == std::string::npos ? e.key : e.key.substr(slash + 1);
    r.camera = e.camera;
    r.split = e.split;
    r.frame_count = e.frame_count;
    const fs::path frame_dir = root / "frames" / r.id / r.tracklet;
    const fs::path mask_dir = root / "masks" / r.id / r.tracklet;
    fs::create_directories(frame_dir);
    fs::create_directories(mask_dir);
    for (int t = 0; t < e.frame_count; ++t) {
      char stem[16];
      std::snprintf(stem, sizeof stem, "%04d", t);
      cv::Mat bgr;
      cv::cvtColor(loader.load_frame(e, t), bgr, cv::COLOR_RGB2BGR);
      const cv::Mat mask = loader.load_mask(e, t).mat() * 255;
      if (!cv::imwrite((frame_dir / (std::string(stem) + ".jpg")).string(), bgr) ||
          !cv::imwrite((mask_dir / (std::string(stem) + ".png")).string(), mask)) {
        throw DataError("failed to write " + e.key + " under " + root.string());
      }
    }
    records.push_back(std::move(r));
  }
  fs::create_directories(root);
  write_manifest(root / "manifest.jsonl", records);
}

BuildSummary build_dataset(const DatasetIndex& index, const SequenceLoader& loader,
                           const FilterRules& rules, const fs::path& out) {
  rules.validate();
  BuildSummary summary;
  summary.kept = filter_corpus(index, loader, rules, &summary.skipped);
  if (summary.kept.sequence_count() == 0) {
    log::warn() << "no sequence passed the filter (" << index.sequence_count() << " scanned)";
  }
  write_normalized_layout(summary.kept, loader, out);
  summary.stats = compute_stats(summary.kept);
  std::ofstream(out / "stats.json") << stats_to_json(summary.stats) << '\n';
  if (!summary.skipped.empty()) summary.skipped.write_jsonl(out / "skipped.jsonl");
  log::info() << "kept " << summary.kept.sequence_count() << " of " << index.sequence_count()
              << " sequences";
  return summary;
}

}  // namespace seqmasks
