#ifndef SEQMASKS_TRAIN_FEATURES_HPP_
#define SEQMASKS_TRAIN_FEATURES_HPP_

#include <filesystem>
#include <optional>
#include <vector>

#include <torch/torch.h>

#include "seqmasks/dataset/augment.hpp"
#include "seqmasks/dataset/index.hpp"
#include "seqmasks/evaluator.hpp"
#include "seqmasks/model/fusion.hpp"

namespace seqmasks {

struct ExtractOptions {
  int chunk = 32;
  int max_silhouettes = 64;
  AugmentOptions geometry;  // only the frame/mask sizes are used
};

/// Evenly spaced subset of at most `limit` frames of `pool`, order kept.
std::vector<int> even_subset(const std::vector<int>& pool, int limit);

/// Whole-sequence descriptor (1 x D). Appearance frames run through the
/// backbone `chunk` at a time; pooled vectors are summed across chunks and
/// averaged before the bottlenecks, so the result does not depend on `chunk`.
torch::Tensor sequence_descriptor(SeqMasksModelImpl& model, const SequenceEntry& entry,
                                  const SequenceLoader& loader, const ExtractOptions& options);

/// Descriptors for every entry (optionally one split). Entries that fail to
/// load are reported in `skips` and left out.
Embeddings extract_features(SeqMasksModelImpl& model, const DatasetIndex& index,
                            const SequenceLoader& loader, const ExtractOptions& options,
                            std::optional<Split> split = std::nullopt, SkipReport* skips = nullptr);

/// One JSON object per line with the sequence metadata and its embedding.
void save_embeddings(const Embeddings& embeddings, const std::filesystem::path& path);
Embeddings load_embeddings(const std::filesystem::path& path);

/// Query and gallery splits of a feature store.
RetrievalProblem split_problem(const Embeddings& all);

}  // namespace seqmasks

#endif  // SEQMASKS_TRAIN_FEATURES_HPP_
