#ifndef SEQMASKS_TRAIN_TRAINER_HPP_
#define SEQMASKS_TRAIN_TRAINER_HPP_

#include <array>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "seqmasks/dataset/index.hpp"
#include "seqmasks/losses.hpp"
#include "seqmasks/model/fusion.hpp"
#include "seqmasks/rng.hpp"
#include "seqmasks/train/config.hpp"

namespace seqmasks {

/// Dense class indices for the identities of the train split.
class LabelMap {
 public:
  explicit LabelMap(const DatasetIndex& index);
  std::int64_t classes() const { return static_cast<std::int64_t>(to_class_.size()); }
  /// Identity ids -> class indices (int64 tensor of the same shape).
  torch::Tensor map(const torch::Tensor& identities) const;

 private:
  std::map<std::int64_t, std::int64_t> to_class_;
};

struct StepRecord {
  int step = 0;
  int epoch = 0;
  std::array<double, LossBreakdown::kTerms> losses{};
  double lr = 0.0;
  double wall_time = 0.0;
};

struct TrainResult {
  int steps = 0;
  std::vector<std::filesystem::path> checkpoints;
  StepRecord last;
};

class Trainer {
 public:
  /// `index` should already be filtered; `loader` must outlive the trainer.
  Trainer(TrainConfig config, DatasetIndex index, const SequenceLoader& loader);

  /// One optimization step on a fresh P x Kseq batch.
  StepRecord step();
  /// Runs the remaining epochs, writing the CSV log and one checkpoint per epoch.
  TrainResult run();
  /// Restores every parameter group from a checkpoint and continues after its epoch.
  void resume(const std::filesystem::path& checkpoint);

  SeqMasksModel& model() { return model_; }
  const TrainConfig& config() const { return config_; }
  const LabelMap& labels() const { return labels_; }
  int epoch() const { return epoch_; }
  int steps_done() const { return steps_; }
  /// Head learning rate in effect during `epoch` (0-based).
  double lr_at(int epoch) const;
  bool backbone_pretrained() const { return backbone_pretrained_; }

 private:
  void begin_epoch(int epoch);
  void apply_lr(int epoch);
  [[noreturn]] void abort_non_finite(const LossBreakdown& losses, const std::vector<std::string>& keys);

  TrainConfig config_;
  DatasetIndex index_;
  const SequenceLoader& loader_;
  LabelMap labels_;
  SeqMasksModel model_{nullptr};
  std::unique_ptr<torch::optim::Adam> optimizer_;
  bool backbone_pretrained_ = false;
  Rng rng_;
  int epoch_ = 0;
  int steps_ = 0;
  std::chrono::steady_clock::time_point started_;
};

}  // namespace seqmasks

#endif  // SEQMASKS_TRAIN_TRAINER_HPP_
