#ifndef SEQMASKS_TRAIN_CONFIG_HPP_
#define SEQMASKS_TRAIN_CONFIG_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "seqmasks/dataset/augment.hpp"
#include "seqmasks/dataset/index.hpp"
#include "seqmasks/dataset/sampler.hpp"
#include "seqmasks/losses.hpp"
#include "seqmasks/model/fusion.hpp"

namespace seqmasks {

inline constexpr int kConfigVersion = 1;

enum class Regime { kEnd2End, kFinetune };
enum class DataFormat { kMaskMars, kCasiaB };

Regime parse_regime(const std::string& text);
std::string to_string(Regime regime);
DataFormat parse_data_format(const std::string& text);
std::string to_string(DataFormat format);

struct OptimConfig {
  double lr_heads = 3e-4;
  double lr_backbone = 3e-5;  // used only when the backbone starts from pretrained weights
  std::vector<double> decay_at{0.6, 0.8};  // fractions of the epoch budget
  double decay_factor = 0.1;
  double weight_decay = 0.0;
};

struct ExtractConfig {
  int chunk = 32;             // frames per appearance forward
  int max_silhouettes = 64;   // evenly spaced gait frames per sequence
};

/// Everything a training run needs. Parsed from a JSON document whose keys
/// mirror the member names; unknown keys are rejected.
struct TrainConfig {
  int spec_version = kConfigVersion;
  Regime regime = Regime::kEnd2End;
  std::uint64_t seed = 0;
  bool deterministic = true;
  int epochs = 10;
  int steps_per_epoch = 100;

  std::string data_root;
  DataFormat data_format = DataFormat::kMaskMars;
  FilterRules filter;

  BatchShape batch{8, 4, 8, 8, false};
  AugmentOptions augment;
  ModelOptions model;
  OptimConfig optim;
  LossWeights loss;
  ExtractConfig extract;

  std::string appearance_checkpoint;  // finetune regime
  std::string gait_checkpoint;        // finetune regime
  std::string output_dir = "runs/default";
  int log_every = 10;

  /// Throws ConfigError on the first violated constraint.
  void validate() const;
};

nlohmann::json config_to_json(const TrainConfig& config);
/// Strict parse: every key must be known, every value well-typed.
TrainConfig config_from_json(const nlohmann::json& document);
TrainConfig load_config(const std::filesystem::path& path);

nlohmann::json model_options_to_json(const ModelOptions& options);
ModelOptions model_options_from_json(const nlohmann::json& document);

/// Stable 64-bit FNV-1a hash (hex) of the architecture-defining settings.
std::string config_hash(const ModelOptions& options);

}  // namespace seqmasks

#endif  // SEQMASKS_TRAIN_CONFIG_HPP_
