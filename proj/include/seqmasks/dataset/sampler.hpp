#ifndef SEQMASKS_DATASET_SAMPLER_HPP_
#define SEQMASKS_DATASET_SAMPLER_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include <torch/types.h>

#include "seqmasks/dataset/augment.hpp"
#include "seqmasks/dataset/index.hpp"
#include "seqmasks/rng.hpp"

namespace seqmasks {

struct BatchShape {
  int identities = 2;      // P
  int sequences = 2;       // Kseq per identity
  int frames = 8;          // T appearance frames per sequence
  int silhouettes = 8;     // K gait masks per sequence
  bool shared_frames = false;  // gait reuses the appearance frame sample

  int rows() const { return identities * sequences; }
  void validate() const;
};

struct PlannedSequence {
  std::size_t entry = 0;            // position in DatasetIndex::entries()
  std::vector<int> appearance_frames;
  std::vector<int> gait_frames;
};

struct BatchPlan {
  std::vector<PlannedSequence> rows;
};

/// P x Kseq batch for triplet mining. Tensors are row-aligned.
struct TrainBatch {
  torch::Tensor appearance_frames;  // N x T x 3 x H x W, normalized
  torch::Tensor appearance_masks;   // N x T x h x w, soft in [0,1]
  torch::Tensor gait_masks;         // N x K x 64 x 44
  torch::Tensor labels;             // N identity ids (int64)
  std::vector<std::string> keys;    // entry key per row, for diagnostics
  BatchShape shape;

  std::int64_t size() const { return static_cast<std::int64_t>(keys.size()); }
};

/// Frames eligible for sampling: the effective ones if filtering ran, else all.
std::vector<int> sampling_pool(const SequenceEntry& entry);

/// `count` frame indices from `pool`, without replacement when possible, sorted.
std::vector<int> sample_frames(const std::vector<int>& pool, int count, Rng& rng);

/// Chooses P distinct train identities and Kseq sequences each.
BatchPlan plan_pk_batch(const DatasetIndex& index, const BatchShape& shape, Rng& rng);

TrainBatch materialize_batch(const BatchPlan& plan, const DatasetIndex& index,
                             const SequenceLoader& loader, const BatchShape& shape,
                             const AugmentOptions& augment, Rng& rng);

TrainBatch pk_sample(const DatasetIndex& index, const SequenceLoader& loader,
                     const BatchShape& shape, const AugmentOptions& augment, Rng& rng);

/// Aligned 64x44 silhouettes for the given frames, as a K x 64 x 44 tensor.
torch::Tensor gait_tensor(const SequenceEntry& entry, const SequenceLoader& loader,
                          const std::vector<int>& frames);

}  // namespace seqmasks

#endif  // SEQMASKS_DATASET_SAMPLER_HPP_
