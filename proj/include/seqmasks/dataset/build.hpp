#ifndef SEQMASKS_DATASET_BUILD_HPP_
#define SEQMASKS_DATASET_BUILD_HPP_

#include <filesystem>

#include "seqmasks/dataset/index.hpp"

namespace seqmasks {

/**
 * Scans `<split>/<id>/<tracklet>/<frame>` trees under the frame and mask roots.
 * The id directory is numeric and the camera comes from a `C<digits>` token in
 * the tracklet name. Frames and masks are paired by file stem. Structural
 * problems are collected in `problems` instead of aborting the scan.
 */
DatasetIndex scan_raw_layout(const std::filesystem::path& frames_root,
                             const std::filesystem::path& masks_root, SkipReport& problems);

/// Writes frames/, masks/ and manifest.jsonl for every entry of `index`.
void write_normalized_layout(const DatasetIndex& index, const SequenceLoader& loader,
                             const std::filesystem::path& root);

struct BuildSummary {
  DatasetIndex kept;
  DatasetStats stats;
  SkipReport skipped;  // unreadable entries
};

/// Filters `index`, writes the survivors in the normalized layout under `out`
/// together with stats.json (and skipped.jsonl when something was skipped).
BuildSummary build_dataset(const DatasetIndex& index, const SequenceLoader& loader,
                           const FilterRules& rules, const std::filesystem::path& out);

}  // namespace seqmasks

#endif  // SEQMASKS_DATASET_BUILD_HPP_
