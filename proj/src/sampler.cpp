#include "seqmasks/dataset/sampler.hpp"

#include <algorithm>
#include <numeric>

#include <torch/torch.h>

#include "seqmasks/error.hpp"

namespace seqmasks {

void BatchShape::validate() const {
  if (identities < 1 || sequences < 1 || frames < 1 || silhouettes < 1) {
    throw ConfigError("batch shape entries (P, Kseq, T, K) must all be >= 1");
  }
}

std::vector<int> sampling_pool(const SequenceEntry& entry) {
  if (!entry.effective_frames.empty()) return entry.effective_frames;
  std::vector<int> all(entry.frame_count);
  std::iota(all.begin(), all.end(), 0);
  return all;
}

std::vector<int> sample_frames(const std::vector<int>& pool, int count, Rng& rng) {
  if (pool.empty()) throw InvalidInput("sample_frames: empty frame pool");
  std::vector<int> picked;
  if (static_cast<int>(pool.size()) >= count) {
    std::vector<int> order(pool);
    std::shuffle(order.begin(), order.end(), rng);
    picked.assign(order.begin(), order.begin() + count);
  } else {
    for (int i = 0; i < count; ++i) {
      picked.push_back(pool[uniform_int(rng, 0, static_cast<int>(pool.size()) - 1)]);
    }
  }
  std::sort(picked.begin(), picked.end());
  return picked;
}

BatchPlan plan_pk_batch(const DatasetIndex& index, const BatchShape& shape, Rng& rng) {
  shape.validate();
  const auto groups = index.by_identity(Split::kTrain);
  if (static_cast<int>(groups.size()) < shape.identities) {
    throw ConfigError("pk_sample: train split has " + std::to_string(groups.size()) +
                      " identities, need P = " + std::to_string(shape.identities));
  }
  std::vector<std::int64_t> ids;
  for (const auto& [id, _] : groups) ids.push_back(id);
  std::shuffle(ids.begin(), ids.end(), rng);
  ids.resize(shape.identities);

  BatchPlan plan;
  for (std::int64_t id : ids) {
    const auto& members = groups.at(id);
    std::vector<std::size_t> chosen;
    if (static_cast<int>(members.size()) >= shape.sequences) {
      std::vector<std::size_t> order(members);
      std::shuffle(order.begin(), order.end(), rng);
      chosen.assign(order.begin(), order.begin() + shape.sequences);
    } else {
      for (int k = 0; k < shape.sequences; ++k) {
        chosen.push_back(members[uniform_int(rng, 0, static_cast<int>(members.size()) - 1)]);
      }
    }
    for (std::size_t e : chosen) {
      PlannedSequence row;
      row.entry = e;
      const auto pool = sampling_pool(index.entries()[e]);
      row.appearance_frames = sample_frames(pool, shape.frames, rng);
      row.gait_frames = shape.shared_frames ? row.appearance_frames
                                            : sample_frames(pool, shape.silhouettes, rng);
      plan.rows.push_back(std::move(row));
    }
  }
  return plan;
}

torch::Tensor gait_tensor(const SequenceEntry& entry, const SequenceLoader& loader,
                          const std::vector<int>& frames) {
  auto out = torch::empty({static_cast<int64_t>(frames.size()), kAlignedSize, kSilhouetteWidth},
                          torch::kFloat32);
  for (std::size_t k = 0; k < frames.size(); ++k) {
    cv::Mat1f s = prepare_silhouette(loader.load_mask(entry, frames[k]));
    if (!s.isContinuous()) s = s.clone();
    std::memcpy(out[static_cast<int64_t>(k)].data_ptr<float>(), s.ptr<float>(),
                sizeof(float) * kAlignedSize * kSilhouetteWidth);
  }
  return out;
}

TrainBatch materialize_batch(const BatchPlan& plan, const DatasetIndex& index,
                             const SequenceLoader& loader, const BatchShape& shape,
                             const AugmentOptions& augment, Rng& rng) {
  std::vector<torch::Tensor> frames, masks, gait;
  std::vector<std::int64_t> labels;
  TrainBatch batch;
  batch.shape = shape;
  for (const auto& row : plan.rows) {
    const auto& entry = index.entries().at(row.entry);
    std::vector<cv::Mat> rgb;
    std::vector<RawMask> raw;
    for (int f : row.appearance_frames) {
      rgb.push_back(loader.load_frame(entry, f));
      raw.push_back(loader.load_mask(entry, f));
    }
    const auto pair = augment_pair(rgb, raw, augment, rng);
    frames.push_back(normalize_frames(pair.frames));
    masks.push_back(stack_masks(pair.masks));
    gait.push_back(gait_tensor(entry, loader, row.gait_frames));
    labels.push_back(entry.identity);
    batch.keys.push_back(entry.key);
  }
  batch.appearance_frames = torch::stack(frames);
  batch.appearance_masks = torch::stack(masks);
  batch.gait_masks = torch::stack(gait);
  batch.labels = torch::tensor(labels, torch::kInt64);
  return batch;
}

TrainBatch pk_sample(const DatasetIndex& index, const SequenceLoader& loader,
                     const BatchShape& shape, const AugmentOptions& augment, Rng& rng) {
  const auto plan = plan_pk_batch(index, shape, rng);
  return materialize_batch(plan, index, loader, shape, augment, rng);
}

}  // namespace seqmasks
