#ifndef SEQMASKS_DATASET_INDEX_HPP_
#define SEQMASKS_DATASET_INDEX_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <opencv2/core.hpp>

#include "seqmasks/dataset/mask.hpp"

namespace seqmasks {

enum class Split { kTrain, kQuery, kGallery };
enum class Condition { kNM, kBG, kCL };

const char* to_string(Split split);
const char* to_string(Condition condition);
Split parse_split(const std::string& text);
Condition parse_condition(const std::string& text);

/// Descriptor of one tracklet; pixel data is loaded lazily through a SequenceLoader.
struct SequenceEntry {
  std::string key;  // unique within an index, also the relative directory
  std::int64_t identity = 0;
  int camera = 0;
  std::optional<int> view;             // CASIA-B only
  std::optional<Condition> condition;  // CASIA-B only
  int seq_number = 0;                  // CASIA-B sequence number within its condition
  Split split = Split::kTrain;
  std::vector<std::string> frame_paths;  // empty: frames are rendered from masks
  std::vector<std::string> mask_paths;
  std::vector<int> effective_frames;     // filled by filter_corpus
  int frame_count = 0;
};

struct SequenceSample {
  std::vector<cv::Mat> frames;  // CV_8UC3, RGB
  std::vector<RawMask> masks;
  std::int64_t identity = 0;
  int camera = 0;
  std::optional<int> view;
  std::optional<Condition> condition;
  Split split = Split::kTrain;

  void validate() const;
};

struct SplitCounts {
  std::int64_t ids = 0;
  std::int64_t sequences = 0;
};

/// Immutable collection of sequence descriptors with derived counts.
class DatasetIndex {
 public:
  DatasetIndex() = default;
  explicit DatasetIndex(std::vector<SequenceEntry> entries, std::int64_t sequence_slots = 0);

  const std::vector<SequenceEntry>& entries() const { return entries_; }
  std::int64_t id_count() const { return id_count_; }
  std::int64_t sequence_count() const { return static_cast<std::int64_t>(entries_.size()); }
  /// Nominal sequences for a fixed protocol (CASIA-B: 110 per id); 0 when not applicable.
  std::int64_t sequence_slots() const { return sequence_slots_; }
  SplitCounts counts(Split split) const;
  bool casia_shaped() const;

  /// Sorted identities occurring in a split.
  std::vector<std::int64_t> identities(Split split) const;
  /// Entry positions grouped by identity for one split.
  std::map<std::int64_t, std::vector<std::size_t>> by_identity(Split split) const;

 private:
  std::vector<SequenceEntry> entries_;
  std::int64_t id_count_ = 0;
  std::int64_t sequence_slots_ = 0;
};

/// Entry-level problems collected instead of aborting a whole corpus scan.
struct SkipReport {
  struct Record {
    std::string key;
    std::string reason;
  };
  std::vector<Record> records;

  void add(std::string key, std::string reason);
  bool empty() const { return records.empty(); }
  std::size_t size() const { return records.size(); }
  /// One JSON object per line: {"key": ..., "reason": ...}.
  void write_jsonl(const std::filesystem::path& path) const;
};

class SequenceLoader {
 public:
  virtual ~SequenceLoader() = default;
  virtual cv::Mat load_frame(const SequenceEntry& entry, int index) const = 0;
  virtual RawMask load_mask(const SequenceEntry& entry, int index) const = 0;

  std::vector<RawMask> load_masks(const SequenceEntry& entry) const;
  SequenceSample load(const SequenceEntry& entry) const;
};

/// Reads frames (RGB) and masks (nonzero = foreground) from the entry's file paths.
/// Entries without frame paths get a grey rendering of their mask as the frame.
class DiskLoader final : public SequenceLoader {
 public:
  cv::Mat load_frame(const SequenceEntry& entry, int index) const override;
  RawMask load_mask(const SequenceEntry& entry, int index) const override;
};

/// Keeps samples in memory, keyed by SequenceEntry::key.
class MemoryLoader final : public SequenceLoader {
 public:
  void add(const std::string& key, SequenceSample sample);
  bool contains(const std::string& key) const { return samples_.count(key) != 0; }
  const SequenceSample& sample(const std::string& key) const;

  cv::Mat load_frame(const SequenceEntry& entry, int index) const override;
  RawMask load_mask(const SequenceEntry& entry, int index) const override;

 private:
  std::unordered_map<std::string, SequenceSample> samples_;
};

struct FilterRules {
  int min_effective = 8;
  double threshold = kEffectiveRatio;
  void validate() const;
};

/**
 * Keeps the sequences with at least `min_effective` effective masks and
 * records the effective frame indices on each kept entry. Entries whose masks
 * cannot be read are left out and reported in `skips`.
 */
DatasetIndex filter_corpus(const DatasetIndex& index, const SequenceLoader& loader,
                           const FilterRules& rules = {}, SkipReport* skips = nullptr);

inline constexpr int kCasiaViews = 11;
inline constexpr int kCasiaSequencesPerId = 110;
inline constexpr int kCasiaTrainIds = 74;

/// root/<id:3>/<cond>-<seq:2>/<view:3>/<frame>.png; malformed names go to `skips`.
DatasetIndex parse_casia_b(const std::filesystem::path& root, SkipReport* skips = nullptr);

/// root/{frames,masks}/<id>/<tracklet>/ plus root/manifest.jsonl.
/// Throws DataError listing every manifest entry that disagrees with the tree.
DatasetIndex parse_mask_mars(const std::filesystem::path& root);

struct ManifestRecord {
  std::string id;
  std::string tracklet;
  int camera = 0;
  Split split = Split::kTrain;
  int frame_count = 0;
};

std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRecord>& records);

struct DatasetStats {
  std::int64_t ids = 0;
  std::int64_t sequences = 0;
  std::map<std::string, SplitCounts> per_split;
  int min_length = 0;
  double mean_length = 0.0;
  int max_length = 0;
};

DatasetStats compute_stats(const DatasetIndex& index);
std::string stats_to_json(const DatasetStats& stats);

}  // namespace seqmasks

#endif  // SEQMASKS_DATASET_INDEX_HPP_
