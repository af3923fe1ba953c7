#include "seqmasks/train/checkpoint.hpp"

#include <algorithm>

#include "seqmasks/error.hpp"
#include "seqmasks/log.hpp"

namespace seqmasks {

using nlohmann::json;

json CheckpointManifest::to_json() const {
  return json{{"spec_version", spec_version}, {"config_hash", config_hash},
              {"regime", regime},             {"epoch", epoch},
              {"components", components},     {"dims", dims},
              {"model", model},               {"input", input},
              {"metrics", metrics}};
}

CheckpointManifest CheckpointManifest::from_json(const json& d) {
  CheckpointManifest m;
  try {
    m.spec_version = d.at("spec_version").get<int>();
    m.config_hash = d.at("config_hash").get<std::string>();
    m.regime = d.at("regime").get<std::string>();
    m.epoch = d.at("epoch").get<int>();
    m.components = d.at("components").get<std::vector<std::string>>();
    m.dims = d.at("dims");
    m.model = d.at("model");
    m.input = d.value("input", json::object());
    m.metrics = d.value("metrics", json::object());
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed checkpoint manifest: ") + e.what());
  }
  return m;
}

namespace {

json bottleneck_dims(const BottleneckImpl& b) {
  const auto& o = b.options();
  return json{{"in", o.in_dim}, {"mid", o.mid_dim}, {"out", o.out_dim}, {"norm", to_string(o.norm)}};
}

}  // namespace

json component_dims(SeqMasksModelImpl& model) {
  const auto& o = model.options();
  json d = json::object();
  d["backbone"] = {{"kind", to_string(o.appearance.backbone.kind)},
                   {"channels", model.appearance->feature_channels()}};
  d["global_bottleneck"] = bottleneck_dims(*model.appearance->global_bottleneck);
  if (model.appearance->foreground_bottleneck) {
    d["fg_bottleneck"] = bottleneck_dims(*model.appearance->foreground_bottleneck);
  }
  d["gait_main"] = {{"channels", o.gait.channels}};
  d["gait_mgp"] = {{"channels", o.gait.channels}};
  d["gait_heads"] = {{"in", o.gait.channels[2]}, {"out", o.gait.head_dim}};
  if (model.ffm) d["ffm"] = {{"dim", o.descriptor_dim()}, {"ratio", o.fusion_ratio}};
  if (model.classifiers) {
    d["classifiers"] = {{"num_classes", o.num_classes},
                        {"appearance_dim", o.appearance.embedding_dim},
                        {"gait_dim", o.gait.head_dim}};
  }
  return d;
}

CheckpointManifest make_manifest(SeqMasksModelImpl& model, Regime regime, int epoch,
                                 const AugmentOptions& geometry, json metrics) {
  CheckpointManifest m;
  m.config_hash = config_hash(model.options());
  m.regime = to_string(regime);
  m.epoch = epoch;
  for (auto& [name, module] : model.groups()) m.components.push_back(name);
  m.dims = component_dims(model);
  m.model = model_options_to_json(model.options());
  m.input = {{"frame_height", geometry.frame_height}, {"frame_width", geometry.frame_width}};
  m.metrics = std::move(metrics);
  return m;
}

AugmentOptions manifest_geometry(const CheckpointManifest& manifest) {
  AugmentOptions geometry;
  geometry.frame_height = manifest.input.value("frame_height", geometry.frame_height);
  geometry.frame_width = manifest.input.value("frame_width", geometry.frame_width);
  geometry.mask_height = geometry.frame_height / BackboneImpl::kStride;
  geometry.mask_width = geometry.frame_width / BackboneImpl::kStride;
  geometry.validate();
  return geometry;
}

void save_checkpoint(const std::filesystem::path& path, SeqMasksModelImpl& model,
                     const CheckpointManifest& manifest) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  torch::serialize::OutputArchive root;
  for (auto& [name, module] : model.groups()) {
    torch::serialize::OutputArchive group;
    module->save(group);
    root.write(name, group);
  }
  root.write("manifest", c10::IValue(manifest.to_json().dump()));
  const auto tmp = path.string() + ".tmp";
  root.save_to(tmp);
  std::filesystem::rename(tmp, path);
}

namespace {

torch::serialize::InputArchive open_archive(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw DataError("checkpoint not found: " + path.string());
  torch::serialize::InputArchive archive;
  try {
    archive.load_from(path.string());
  } catch (const c10::Error& e) {
    throw DataError("cannot read checkpoint " + path.string() + ": " + e.what_without_backtrace());
  }
  return archive;
}

CheckpointManifest manifest_of(torch::serialize::InputArchive& archive, const std::string& where) {
  c10::IValue value;
  if (!archive.try_read("manifest", value) || !value.isString()) {
    throw DataError("checkpoint " + where + " has no manifest");
  }
  json document;
  try {
    document = json::parse(value.toStringRef());
  } catch (const json::exception& e) {
    throw DataError("checkpoint " + where + " manifest is not JSON: " + e.what());
  }
  return CheckpointManifest::from_json(document);
}

}  // namespace

CheckpointManifest read_checkpoint_manifest(const std::filesystem::path& path) {
  auto archive = open_archive(path);
  return manifest_of(archive, path.string());
}

void load_checkpoint(const std::filesystem::path& path, SeqMasksModelImpl& model,
                     const std::vector<std::string>& wanted) {
  auto archive = open_archive(path);
  const auto manifest = manifest_of(archive, path.string());
  const json expected = component_dims(model);
  for (auto& [name, module] : model.groups()) {
    if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), name) == wanted.end()) continue;
    if (!manifest.dims.contains(name)) {
      throw DataError("checkpoint " + path.string() + " has no component '" + name + "'");
    }
    if (manifest.dims.at(name) != expected.at(name)) {
      throw ConfigError("checkpoint " + path.string() + ": component '" + name +
                        "' has dimensions " + manifest.dims.at(name).dump() + " but the model expects " +
                        expected.at(name).dump());
    }
    torch::serialize::InputArchive group;
    if (!archive.try_read(name, group)) {
      throw DataError("checkpoint " + path.string() + " lacks tensors for '" + name + "'");
    }
    try {
      module->load(group);
    } catch (const c10::Error& e) {
      throw DataError("checkpoint " + path.string() + ": cannot restore '" + name +
                      "': " + e.what_without_backtrace());
    }
  }
  for (const auto& name : wanted) {
    if (!expected.contains(name)) {
      throw ConfigError("model has no component '" + name + "' to restore");
    }
  }
}

SeqMasksModel model_from_checkpoint(const std::filesystem::path& path) {
  const auto manifest = read_checkpoint_manifest(path);
  auto options = model_options_from_json(manifest.model);
  options.appearance.backbone.weights_path.clear();
  SeqMasksModel model(options);
  load_checkpoint(path, *model);
  log::info() << "loaded " << manifest.regime << " checkpoint (epoch " << manifest.epoch << ") from "
              << path.string();
  return model;
}

}  // namespace seqmasks
