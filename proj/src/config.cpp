#include "seqmasks/train/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "seqmasks/error.hpp"

namespace seqmasks {

using nlohmann::json;

Regime parse_regime(const std::string& text) {
  if (text == "end2end") return Regime::kEnd2End;
  if (text == "finetune") return Regime::kFinetune;
  throw ConfigError("unknown regime '" + text + "' (expected end2end or finetune)");
}

std::string to_string(Regime regime) {
  return regime == Regime::kEnd2End ? "end2end" : "finetune";
}

DataFormat parse_data_format(const std::string& text) {
  if (text == "mask-mars") return DataFormat::kMaskMars;
  if (text == "casia-b") return DataFormat::kCasiaB;
  throw ConfigError("unknown data format '" + text + "' (expected mask-mars or casia-b)");
}

std::string to_string(DataFormat format) {
  return format == DataFormat::kMaskMars ? "mask-mars" : "casia-b";
}

json model_options_to_json(const ModelOptions& options) {
  const auto& a = options.appearance;
  return json{
      {"backbone", to_string(a.backbone.kind)},
      {"backbone_channels", a.backbone.channels},
      {"backbone_weights", a.backbone.weights_path},
      {"bottleneck_mid", a.bottleneck_mid},
      {"embedding_dim", a.embedding_dim},
      {"norm", to_string(a.norm)},
      {"gait_channels", options.gait.channels},
      {"gait_head_dim", options.gait.head_dim},
      {"leaky_slope", options.gait.leaky_slope},
      {"variant", to_string(options.variant)},
      {"fusion_ratio", options.fusion_ratio},
      {"num_classes", options.num_classes},
  };
}

namespace {

json default_document() { return config_to_json(TrainConfig{}); }

// Every key of `document` must exist in `reference`, recursively for objects.
void check_keys(const json& document, const json& reference, const std::string& where) {
  if (!document.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, value] : document.items()) {
    const std::string path = where.empty() ? key : where + "." + key;
    if (!reference.contains(key)) throw ConfigError("unknown config key '" + path + "'");
    if (reference.at(key).is_object()) check_keys(value, reference.at(key), path);
  }
}

template <typename T>
void read(const json& object, const char* key, T& out, const std::string& where) {
  if (!object.contains(key)) return;
  try {
    out = object.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + where + key + "' has the wrong type");
  }
}

template <typename Parse, typename T>
void read_enum(const json& object, const char* key, T& out, Parse parse, const std::string& where) {
  std::string text;
  bool present = object.contains(key);
  read(object, key, text, where);
  if (present) out = parse(text);
}

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t hash = 14695981039346656037ULL;
  for (unsigned char c : text) {
    hash ^= c;
    hash *= 1099511628211ULL;
  }
  char buffer[17];
  std::snprintf(buffer, sizeof buffer, "%016llx", static_cast<unsigned long long>(hash));
  return buffer;
}

}  // namespace

ModelOptions model_options_from_json(const json& document) {
  const json reference = model_options_to_json(ModelOptions{});
  check_keys(document, reference, "model");
  ModelOptions options;
  auto& a = options.appearance;
  const std::string w = "model.";
  read_enum(document, "backbone", a.backbone.kind, parse_backbone_kind, w);
  read(document, "backbone_channels", a.backbone.channels, w);
  read(document, "backbone_weights", a.backbone.weights_path, w);
  read(document, "bottleneck_mid", a.bottleneck_mid, w);
  read(document, "embedding_dim", a.embedding_dim, w);
  read_enum(document, "norm", a.norm, parse_norm_kind, w);
  read(document, "gait_channels", options.gait.channels, w);
  read(document, "gait_head_dim", options.gait.head_dim, w);
  read(document, "leaky_slope", options.gait.leaky_slope, w);
  read_enum(document, "variant", options.variant, parse_variant, w);
  read(document, "fusion_ratio", options.fusion_ratio, w);
  read(document, "num_classes", options.num_classes, w);
  a.foreground_branch = uses_foreground(options.variant);
  return options;
}

json config_to_json(const TrainConfig& c) {
  return json{
      {"spec_version", c.spec_version},
      {"regime", to_string(c.regime)},
      {"seed", c.seed},
      {"deterministic", c.deterministic},
      {"epochs", c.epochs},
      {"steps_per_epoch", c.steps_per_epoch},
      {"data",
       {{"root", c.data_root},
        {"format", to_string(c.data_format)},
        {"min_effective", c.filter.min_effective},
        {"threshold", c.filter.threshold}}},
      {"batch",
       {{"identities", c.batch.identities},
        {"sequences", c.batch.sequences},
        {"frames", c.batch.frames},
        {"silhouettes", c.batch.silhouettes},
        {"shared_frames", c.batch.shared_frames}}},
      {"augment",
       {{"frame_height", c.augment.frame_height},
        {"frame_width", c.augment.frame_width},
        {"crop_probability", c.augment.crop_probability},
        {"flip_probability", c.augment.flip_probability},
        {"crop_margin", c.augment.crop_margin}}},
      {"model", model_options_to_json(c.model)},
      {"optim",
       {{"lr_heads", c.optim.lr_heads},
        {"lr_backbone", c.optim.lr_backbone},
        {"decay_at", c.optim.decay_at},
        {"decay_factor", c.optim.decay_factor},
        {"weight_decay", c.optim.weight_decay}}},
      {"loss",
       {{"lambda_fusion", c.loss.lambda_fusion},
        {"lambda_appearance", c.loss.lambda_appearance},
        {"lambda_gait", c.loss.lambda_gait},
        {"margin_hard", c.loss.margin_hard},
        {"margin_all", c.loss.margin_all},
        {"lsr_eps", c.loss.lsr_eps}}},
      {"extract", {{"chunk", c.extract.chunk}, {"max_silhouettes", c.extract.max_silhouettes}}},
      {"finetune",
       {{"appearance_checkpoint", c.appearance_checkpoint},
        {"gait_checkpoint", c.gait_checkpoint}}},
      {"output", {{"dir", c.output_dir}, {"log_every", c.log_every}}},
  };
}

TrainConfig config_from_json(const json& document) {
  json reference = default_document();
  if (document.is_object() && document.contains("model") && document.at("model").is_object()) {
    // model keys are checked by model_options_from_json with a precise message
    reference["model"] = document.at("model");
  }
  check_keys(document, reference, "");
  TrainConfig c;
  read(document, "spec_version", c.spec_version, "");
  if (c.spec_version != kConfigVersion) {
    throw ConfigError("unsupported spec_version " + std::to_string(c.spec_version) +
                      " (this build reads " + std::to_string(kConfigVersion) + ")");
  }
  read_enum(document, "regime", c.regime, parse_regime, "");
  read(document, "seed", c.seed, "");
  read(document, "deterministic", c.deterministic, "");
  read(document, "epochs", c.epochs, "");
  read(document, "steps_per_epoch", c.steps_per_epoch, "");

  static const json kEmpty = json::object();
  auto section = [&](const char* name) -> const json& {
    return document.contains(name) ? document.at(name) : kEmpty;
  };

  const json& data = section("data");
  read(data, "root", c.data_root, "data.");
  read_enum(data, "format", c.data_format, parse_data_format, "data.");
  read(data, "min_effective", c.filter.min_effective, "data.");
  read(data, "threshold", c.filter.threshold, "data.");

  const json& batch = section("batch");
  read(batch, "identities", c.batch.identities, "batch.");
  read(batch, "sequences", c.batch.sequences, "batch.");
  read(batch, "frames", c.batch.frames, "batch.");
  read(batch, "silhouettes", c.batch.silhouettes, "batch.");
  read(batch, "shared_frames", c.batch.shared_frames, "batch.");

  const json& augment = section("augment");
  read(augment, "frame_height", c.augment.frame_height, "augment.");
  read(augment, "frame_width", c.augment.frame_width, "augment.");
  read(augment, "crop_probability", c.augment.crop_probability, "augment.");
  read(augment, "flip_probability", c.augment.flip_probability, "augment.");
  read(augment, "crop_margin", c.augment.crop_margin, "augment.");
  c.augment.mask_height = c.augment.frame_height / BackboneImpl::kStride;
  c.augment.mask_width = c.augment.frame_width / BackboneImpl::kStride;

  if (document.contains("model")) c.model = model_options_from_json(document.at("model"));

  const json& optim = section("optim");
  read(optim, "lr_heads", c.optim.lr_heads, "optim.");
  read(optim, "lr_backbone", c.optim.lr_backbone, "optim.");
  read(optim, "decay_at", c.optim.decay_at, "optim.");
  read(optim, "decay_factor", c.optim.decay_factor, "optim.");
  read(optim, "weight_decay", c.optim.weight_decay, "optim.");

  const json& loss = section("loss");
  read(loss, "lambda_fusion", c.loss.lambda_fusion, "loss.");
  read(loss, "lambda_appearance", c.loss.lambda_appearance, "loss.");
  read(loss, "lambda_gait", c.loss.lambda_gait, "loss.");
  read(loss, "margin_hard", c.loss.margin_hard, "loss.");
  read(loss, "margin_all", c.loss.margin_all, "loss.");
  read(loss, "lsr_eps", c.loss.lsr_eps, "loss.");

  const json& extract = section("extract");
  read(extract, "chunk", c.extract.chunk, "extract.");
  read(extract, "max_silhouettes", c.extract.max_silhouettes, "extract.");

  const json& finetune = section("finetune");
  read(finetune, "appearance_checkpoint", c.appearance_checkpoint, "finetune.");
  read(finetune, "gait_checkpoint", c.gait_checkpoint, "finetune.");

  const json& output = section("output");
  read(output, "dir", c.output_dir, "output.");
  read(output, "log_every", c.log_every, "output.");

  c.validate();
  return c;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (steps_per_epoch < 1) throw ConfigError("steps_per_epoch must be >= 1");
  if (log_every < 1) throw ConfigError("output.log_every must be >= 1");
  filter.validate();
  batch.validate();
  if (batch.identities < 2 || batch.rows() < 4) {
    throw ConfigError("triplet mining needs batch.identities >= 2 and identities * sequences >= 4");
  }
  try {
    augment.validate();
  } catch (const InvalidInput& e) {
    throw ConfigError(e.what());
  }
  if (augment.frame_height % BackboneImpl::kStride != 0 || augment.frame_width % BackboneImpl::kStride != 0) {
    throw ConfigError("augment frame size must be a multiple of 16");
  }
  loss.validate();
  if (model.appearance.backbone.channels < 1) throw ConfigError("model.backbone_channels must be >= 1");
  if (model.appearance.bottleneck_mid < 1 || model.appearance.embedding_dim < 1) {
    throw ConfigError("bottleneck widths must be >= 1");
  }
  for (auto c : model.gait.channels) {
    if (c < 1) throw ConfigError("model.gait_channels entries must be >= 1");
  }
  if (model.gait.head_dim < 1) throw ConfigError("model.gait_head_dim must be >= 1");
  if (model.fusion_ratio < 1) throw ConfigError("model.fusion_ratio must be >= 1");
  if (optim.lr_heads <= 0 || optim.lr_backbone <= 0) throw ConfigError("learning rates must be > 0");
  if (optim.decay_factor <= 0 || optim.decay_factor > 1) {
    throw ConfigError("optim.decay_factor must lie in (0, 1]");
  }
  for (double f : optim.decay_at) {
    if (f <= 0 || f >= 1) throw ConfigError("optim.decay_at entries must lie in (0, 1)");
  }
  if (optim.weight_decay < 0) throw ConfigError("optim.weight_decay must be >= 0");
  if (extract.chunk < 1) throw ConfigError("extract.chunk must be >= 1");
  if (extract.max_silhouettes < 1) throw ConfigError("extract.max_silhouettes must be >= 1");
  if (regime == Regime::kFinetune &&
      (appearance_checkpoint.empty() || gait_checkpoint.empty())) {
    throw ConfigError("finetune regime needs finetune.appearance_checkpoint and finetune.gait_checkpoint");
  }
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json document;
  try {
    document = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(document);
}

std::string config_hash(const ModelOptions& options) {
  json canonical = model_options_to_json(options);
  // Weights location does not change the architecture.
  canonical.erase("backbone_weights");
  return fnv1a_hex(canonical.dump());
}

}  // namespace seqmasks
