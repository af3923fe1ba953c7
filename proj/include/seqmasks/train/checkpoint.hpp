#ifndef SEQMASKS_TRAIN_CHECKPOINT_HPP_
#define SEQMASKS_TRAIN_CHECKPOINT_HPP_

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "seqmasks/model/fusion.hpp"
#include "seqmasks/train/config.hpp"

namespace seqmasks {

struct CheckpointManifest {
  int spec_version = kConfigVersion;
  std::string config_hash;
  std::string regime;
  int epoch = 0;
  std::vector<std::string> components;
  nlohmann::json dims = nlohmann::json::object();   // per component
  nlohmann::json model = nlohmann::json::object();  // options to rebuild the network
  nlohmann::json input = nlohmann::json::object();  // frame geometry used in training
  nlohmann::json metrics = nlohmann::json::object();

  nlohmann::json to_json() const;
  static CheckpointManifest from_json(const nlohmann::json& document);
};

/// Shape-defining numbers of every parameter group present in the model.
nlohmann::json component_dims(SeqMasksModelImpl& model);

CheckpointManifest make_manifest(SeqMasksModelImpl& model, Regime regime, int epoch,
                                 const AugmentOptions& geometry,
                                 nlohmann::json metrics = nlohmann::json::object());

/// Frame geometry recorded in a manifest (defaults when absent).
AugmentOptions manifest_geometry(const CheckpointManifest& manifest);

void save_checkpoint(const std::filesystem::path& path, SeqMasksModelImpl& model,
                     const CheckpointManifest& manifest);

CheckpointManifest read_checkpoint_manifest(const std::filesystem::path& path);

/// Restores the listed groups (all groups when empty). A group whose stored
/// dimensions differ from the model's raises ConfigError naming it; a group
/// missing from the file raises DataError.
void load_checkpoint(const std::filesystem::path& path, SeqMasksModelImpl& model,
                     const std::vector<std::string>& groups = {});

/// Builds a network from the manifest's model options and loads every group.
SeqMasksModel model_from_checkpoint(const std::filesystem::path& path);

}  // namespace seqmasks

#endif  // SEQMASKS_TRAIN_CHECKPOINT_HPP_
