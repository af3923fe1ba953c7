#ifndef SEQMASKS_DATASET_SYNTHETIC_HPP_
#define SEQMASKS_DATASET_SYNTHETIC_HPP_

#include <cstdint>
#include <filesystem>
#include <vector>

#include "seqmasks/dataset/index.hpp"

namespace seqmasks {

/**
 * Generator for walking-figure corpora with known ground truth.
 *
 * Each identity has its own clothing colors, stripe period, body width and
 * gait period; each sequence adds a phase, drift and lighting change. Frames
 * whose figure is rendered at reduced scale fall under the effective-mask
 * ratio, which lets tests pin exact filter outcomes.
 */
struct SyntheticOptions {
  int identities = 8;
  int sequences_per_identity = 4;
  int min_length = 10;
  int max_length = 14;
  int height = 128;
  int width = 64;
  int cameras = 4;
  // The last `test_identities` identities go to query (first sequence) / gallery (rest).
  int test_identities = 0;
  // Optional exact number of effective frames per sequence, row-major over
  // (identity, sequence). Sequences are lengthened as needed.
  std::vector<int> effective_counts;
  std::uint64_t seed = 7;
};

struct SyntheticCorpus {
  DatasetIndex index;
  MemoryLoader loader;
  std::vector<int> effective_counts;  // ground truth, aligned with index.entries()
};

SyntheticCorpus make_synthetic_corpus(const SyntheticOptions& options);

/// CASIA-B-shaped silhouettes: every (id, condition, sequence, view) slot, masks only.
struct SyntheticCasiaOptions {
  int first_id = 1;
  int identities = 3;
  int length = 10;
  int height = 96;
  int width = 64;
  // Drop this many slots (from the end) per identity to exercise missing folders.
  int missing_per_identity = 0;
  std::uint64_t seed = 11;
};

SyntheticCorpus make_synthetic_casia(const SyntheticCasiaOptions& options);

/// Writes frames/, masks/ and manifest.jsonl in the normalized layout.
void write_normalized_layout(const SyntheticCorpus& corpus, const std::filesystem::path& root);

/// Writes <split>/<id>/<tracklet>/ frame and mask trees, the build-dataset input.
void write_raw_layout(const SyntheticCorpus& corpus, const std::filesystem::path& frames_root,
                      const std::filesystem::path& masks_root);

/// Writes root/<id>/<cond>-<seq>/<view>/<frame>.png silhouettes.
void write_casia_tree(const SyntheticCorpus& corpus, const std::filesystem::path& root);

/// "C<camera>T<sequence:4>" tracklet name used by the writers.
std::string tracklet_name(int camera, int sequence);

}  // namespace seqmasks

#endif  // SEQMASKS_DATASET_SYNTHETIC_HPP_
