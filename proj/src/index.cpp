#include "seqmasks/dataset/index.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <regex>
#include <set>
#include <sstream>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "json.hpp"
#include "seqmasks/error.hpp"
#include "seqmasks/log.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace seqmasks {

const char* to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kQuery: return "query";
    case Split::kGallery: return "gallery";
  }
  return "?";
}

const char* to_string(Condition condition) {
  switch (condition) {
    case Condition::kNM: return "NM";
    case Condition::kBG: return "BG";
    case Condition::kCL: return "CL";
  }
  return "?";
}

Split parse_split(const std::string& text) {
  if (text == "train") return Split::kTrain;
  if (text == "query") return Split::kQuery;
  if (text == "gallery") return Split::kGallery;
  throw InvalidInput("unknown split '" + text + "'");
}

Condition parse_condition(const std::string& text) {
  std::string lower = text;
  std::transform(lower.begin(), lower.end(), lower.begin(), ::tolower);
  if (lower == "nm") return Condition::kNM;
  if (lower == "bg") return Condition::kBG;
  if (lower == "cl") return Condition::kCL;
  throw InvalidInput("unknown walking condition '" + text + "'");
}

void SequenceSample::validate() const {
  if (masks.empty()) throw InvalidInput("SequenceSample: needs at least one frame");
  if (frames.size() != masks.size()) {
    throw InvalidInput("SequenceSample: frame and mask counts differ");
  }
  for (std::size_t t = 0; t < frames.size(); ++t) {
    if (frames[t].rows != masks[t].height() || frames[t].cols != masks[t].width()) {
      throw InvalidInput("SequenceSample: frame and mask sizes differ at index " +
                         std::to_string(t));
    }
  }
}

DatasetIndex::DatasetIndex(std::vector<SequenceEntry> entries, std::int64_t sequence_slots)
    : entries_(std::move(entries)), sequence_slots_(sequence_slots) {
  std::set<std::int64_t> ids;
  std::set<std::string> keys;
  for (const auto& e : entries_) {
    if (!keys.insert(e.key).second) throw InvalidInput("DatasetIndex: duplicate key " + e.key);
    ids.insert(e.identity);
  }
  id_count_ = static_cast<std::int64_t>(ids.size());
}

SplitCounts DatasetIndex::counts(Split split) const {
  SplitCounts c;
  std::set<std::int64_t> ids;
  for (const auto& e : entries_) {
    if (e.split != split) continue;
    ++c.sequences;
    ids.insert(e.identity);
  }
  c.ids = static_cast<std::int64_t>(ids.size());
  return c;
}

bool DatasetIndex::casia_shaped() const {
  return !entries_.empty() &&
         std::all_of(entries_.begin(), entries_.end(),
                     [](const SequenceEntry& e) { return e.view && e.condition; });
}

std::vector<std::int64_t> DatasetIndex::identities(Split split) const {
  std::set<std::int64_t> ids;
  for (const auto& e : entries_) {
    if (e.split == split) ids.insert(e.identity);
  }
  return {ids.begin(), ids.end()};
}

std::map<std::int64_t, std::vector<std::size_t>> DatasetIndex::by_identity(Split split) const {
  std::map<std::int64_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].split == split) groups[entries_[i].identity].push_back(i);
  }
  return groups;
}

void SkipReport::add(std::string key, std::string reason) {
  log::warn() << "skipping " << key << ": " << reason;
  records.push_back({std::move(key), std::move(reason)});
}

void SkipReport::write_jsonl(const fs::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write skip report " + path.string());
  for (const auto& r : records) out << json{{"key", r.key}, {"reason", r.reason}}.dump() << '\n';
}

std::vector<RawMask> SequenceLoader::load_masks(const SequenceEntry& entry) const {
  std::vector<RawMask> masks;
  masks.reserve(entry.frame_count);
  for (int i = 0; i < entry.frame_count; ++i) masks.push_back(load_mask(entry, i));
  return masks;
}

SequenceSample SequenceLoader::load(const SequenceEntry& entry) const {
  SequenceSample s;
  s.identity = entry.identity;
  s.camera = entry.camera;
  s.view = entry.view;
  s.condition = entry.condition;
  s.split = entry.split;
  for (int i = 0; i < entry.frame_count; ++i) {
    s.frames.push_back(load_frame(entry, i));
    s.masks.push_back(load_mask(entry, i));
  }
  s.validate();
  return s;
}

namespace {

void check_frame_index(const SequenceEntry& entry, int index) {
  if (index < 0 || index >= entry.frame_count) {
    throw InvalidInput(entry.key + ": frame index " + std::to_string(index) + " out of range");
  }
}

cv::Mat render_mask_frame(const RawMask& mask) {
  cv::Mat gray = mask.mat() * 255;
  cv::Mat rgb;
  cv::cvtColor(gray, rgb, cv::COLOR_GRAY2RGB);
  return rgb;
}

}  // namespace

RawMask DiskLoader::load_mask(const SequenceEntry& entry, int index) const {
  check_frame_index(entry, index);
  const auto& path = entry.mask_paths.at(index);
  cv::Mat image = cv::imread(path, cv::IMREAD_UNCHANGED);
  if (image.empty()) throw DataError("unreadable mask " + path);
  return RawMask::from_image(image);
}

cv::Mat DiskLoader::load_frame(const SequenceEntry& entry, int index) const {
  check_frame_index(entry, index);
  if (entry.frame_paths.empty()) return render_mask_frame(load_mask(entry, index));
  const auto& path = entry.frame_paths.at(index);
  cv::Mat bgr = cv::imread(path, cv::IMREAD_COLOR);
  if (bgr.empty()) throw DataError("unreadable frame " + path);
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  return rgb;
}

void MemoryLoader::add(const std::string& key, SequenceSample sample) {
  sample.validate();
  samples_[key] = std::move(sample);
}

const SequenceSample& MemoryLoader::sample(const std::string& key) const {
  auto it = samples_.find(key);
  if (it == samples_.end()) throw DataError("no in-memory sample for " + key);
  return it->second;
}

cv::Mat MemoryLoader::load_frame(const SequenceEntry& entry, int index) const {
  check_frame_index(entry, index);
  const auto& s = sample(entry.key);
  if (s.frames.empty()) return render_mask_frame(s.masks.at(index));
  return s.frames.at(index);
}

RawMask MemoryLoader::load_mask(const SequenceEntry& entry, int index) const {
  check_frame_index(entry, index);
  return sample(entry.key).masks.at(index);
}

void FilterRules::validate() const {
  if (min_effective < 1) throw ConfigError("min_effective must be >= 1");
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw ConfigError("foreground ratio threshold must lie in (0, 1)");
  }
}

DatasetIndex filter_corpus(const DatasetIndex& index, const SequenceLoader& loader,
                           const FilterRules& rules, SkipReport* skips) {
  rules.validate();
  std::vector<SequenceEntry> kept;
  for (const auto& entry : index.entries()) {
    std::vector<int> effective;
    try {
      for (int i = 0; i < entry.frame_count; ++i) {
        if (is_effective(loader.load_mask(entry, i), rules.threshold)) effective.push_back(i);
      }
    } catch (const Error& e) {
      if (skips) skips->add(entry.key, e.what());
      continue;
    }
    if (static_cast<int>(effective.size()) < rules.min_effective) continue;
    SequenceEntry copy = entry;
    copy.effective_frames = std::move(effective);
    kept.push_back(std::move(copy));
  }
  return DatasetIndex(std::move(kept), index.sequence_slots());
}

namespace {

std::vector<fs::path> sorted_children(const fs::path& dir, bool directories) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& item : fs::directory_iterator(dir)) {
    if (directories ? item.is_directory() : item.is_regular_file()) out.push_back(item.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<fs::path> image_files(const fs::path& dir) {
  std::vector<fs::path> out;
  for (auto& p : sorted_children(dir, false)) {
    auto ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
    if (ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp") out.push_back(p);
  }
  return out;
}

bool all_digits(const std::string& s, std::size_t n) {
  return s.size() == n && std::all_of(s.begin(), s.end(), ::isdigit);
}

int casia_condition_limit(Condition c) { return c == Condition::kNM ? 6 : 2; }

}  // namespace

DatasetIndex parse_casia_b(const fs::path& root, SkipReport* skips) {
  if (!fs::exists(root)) throw DataError("CASIA-B root does not exist: " + root.string());
  SkipReport local;
  SkipReport& report = skips ? *skips : local;
  const std::regex seq_pattern("(nm|bg|cl)-([0-9]{2})");

  std::vector<SequenceEntry> entries;
  std::set<std::int64_t> ids;
  for (const auto& id_dir : sorted_children(root, true)) {
    const std::string id_name = id_dir.filename().string();
    if (!all_digits(id_name, 3)) {
      report.add(id_name, "malformed identity folder name");
      continue;
    }
    const std::int64_t identity = std::stoll(id_name);
    ids.insert(identity);
    std::size_t found = 0;
    for (const auto& seq_dir : sorted_children(id_dir, true)) {
      const std::string seq_name = seq_dir.filename().string();
      std::smatch m;
      if (!std::regex_match(seq_name, m, seq_pattern)) {
        report.add(id_name + "/" + seq_name, "malformed condition folder name");
        continue;
      }
      const Condition condition = parse_condition(m[1].str());
      const int seq_number = std::stoi(m[2].str());
      if (seq_number < 1 || seq_number > casia_condition_limit(condition)) {
        report.add(id_name + "/" + seq_name, "sequence number outside the protocol range");
        continue;
      }
      for (const auto& view_dir : sorted_children(seq_dir, true)) {
        const std::string view_name = view_dir.filename().string();
        const std::string key = id_name + "/" + seq_name + "/" + view_name;
        if (!all_digits(view_name, 3) || std::stoi(view_name) % 18 != 0 ||
            std::stoi(view_name) > 180) {
          report.add(key, "malformed view folder name");
          continue;
        }
        auto files = image_files(view_dir);
        if (files.empty()) {
          report.add(key, "no silhouette frames");
          continue;
        }
        SequenceEntry e;
        e.key = key;
        e.identity = identity;
        e.view = std::stoi(view_name);
        e.camera = *e.view;
        e.condition = condition;
        e.seq_number = seq_number;
        if (identity <= kCasiaTrainIds) {
          e.split = Split::kTrain;
        } else {
          e.split = (condition == Condition::kNM && seq_number <= 4) ? Split::kGallery
                                                                     : Split::kQuery;
        }
        for (const auto& f : files) e.mask_paths.push_back(f.string());
        e.frame_count = static_cast<int>(files.size());
        entries.push_back(std::move(e));
        ++found;
      }
    }
    if (found < static_cast<std::size_t>(kCasiaSequencesPerId)) {
      log::warn() << "CASIA-B id " << id_name << ": " << found << " of "
                  << kCasiaSequencesPerId << " sequences present";
    }
  }
  return DatasetIndex(std::move(entries),
                      static_cast<std::int64_t>(ids.size()) * kCasiaSequencesPerId);
}

std::vector<ManifestRecord> read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  std::vector<ManifestRecord> records;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      ManifestRecord r;
      const auto& id = j.at("id");
      r.id = id.is_string() ? id.get<std::string>() : std::to_string(id.get<std::int64_t>());
      r.tracklet = j.at("tracklet").get<std::string>();
      r.camera = j.at("camera").get<int>();
      r.split = parse_split(j.at("split").get<std::string>());
      r.frame_count = j.at("frame_count").get<int>();
      records.push_back(std::move(r));
    } catch (const std::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return records;
}

void write_manifest(const fs::path& path, const std::vector<ManifestRecord>& records) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest " + path.string());
  for (const auto& r : records) {
    out << json{{"id", r.id},
                {"tracklet", r.tracklet},
                {"camera", r.camera},
                {"split", to_string(r.split)},
                {"frame_count", r.frame_count}}
               .dump()
        << '\n';
  }
}

DatasetIndex parse_mask_mars(const fs::path& root) {
  const auto records = read_manifest(root / "manifest.jsonl");
  std::vector<SequenceEntry> entries;
  std::vector<std::string> problems;
  for (const auto& r : records) {
    const std::string key = r.id + "/" + r.tracklet;
    const fs::path frame_dir = root / "frames" / r.id / r.tracklet;
    const fs::path mask_dir = root / "masks" / r.id / r.tracklet;
    if (!fs::is_directory(frame_dir)) {
      problems.push_back(key + ": missing directory " + frame_dir.string());
      continue;
    }
    if (!fs::is_directory(mask_dir)) {
      problems.push_back(key + ": missing directory " + mask_dir.string());
      continue;
    }
    const auto frames = image_files(frame_dir);
    const auto masks = image_files(mask_dir);
    if (static_cast<int>(frames.size()) != r.frame_count ||
        static_cast<int>(masks.size()) != r.frame_count) {
      problems.push_back(key + ": manifest frame_count " + std::to_string(r.frame_count) +
                         " but found " + std::to_string(frames.size()) + " frames and " +
                         std::to_string(masks.size()) + " masks");
      continue;
    }
    bool stems_match = true;
    for (std::size_t i = 0; i < frames.size(); ++i) {
      stems_match = stems_match && frames[i].stem() == masks[i].stem();
    }
    if (!stems_match) {
      problems.push_back(key + ": frame and mask file names do not pair up");
      continue;
    }
    if (!std::all_of(r.id.begin(), r.id.end(), ::isdigit) || r.id.empty()) {
      problems.push_back(key + ": identity must be numeric");
      continue;
    }
    SequenceEntry e;
    e.key = key;
    e.identity = std::stoll(r.id);
    e.camera = r.camera;
    e.split = r.split;
    e.frame_count = r.frame_count;
    for (const auto& f : frames) e.frame_paths.push_back(f.string());
    for (const auto& m : masks) e.mask_paths.push_back(m.string());
    entries.push_back(std::move(e));
  }
  if (!problems.empty()) {
    std::ostringstream msg;
    msg << "manifest does not match the tree under " << root.string() << ":";
    for (const auto& p : problems) msg << "\n  " << p;
    throw DataError(msg.str());
  }
  return DatasetIndex(std::move(entries));
}

DatasetStats compute_stats(const DatasetIndex& index) {
  DatasetStats s;
  s.ids = index.id_count();
  s.sequences = index.sequence_count();
  for (Split split : {Split::kTrain, Split::kQuery, Split::kGallery}) {
    s.per_split[to_string(split)] = index.counts(split);
  }
  if (!index.entries().empty()) {
    s.min_length = std::numeric_limits<int>::max();
    double total = 0.0;
    for (const auto& e : index.entries()) {
      s.min_length = std::min(s.min_length, e.frame_count);
      s.max_length = std::max(s.max_length, e.frame_count);
      total += e.frame_count;
    }
    s.mean_length = total / static_cast<double>(index.entries().size());
  }
  return s;
}

std::string stats_to_json(const DatasetStats& stats) {
  json j;
  j["ids"] = stats.ids;
  j["sequences"] = stats.sequences;
  for (const auto& [name, c] : stats.per_split) {
    j["splits"][name] = {{"ids", c.ids}, {"sequences", c.sequences}};
  }
  j["length"] = {{"min", stats.min_length}, {"mean", stats.mean_length}, {"max", stats.max_length}};
  return j.dump(2);
}

}  // namespace seqmasks
