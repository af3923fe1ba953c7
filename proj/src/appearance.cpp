#include "seqmasks/model/appearance.hpp"

#include <filesystem>

#include "seqmasks/error.hpp"
#include "seqmasks/log.hpp"

namespace seqmasks {

NormKind parse_norm_kind(const std::string& text) {
  if (text == "batch") return NormKind::kBatch;
  if (text == "layer") return NormKind::kLayer;
  throw ConfigError("unknown normalization '" + text + "' (expected batch|layer)");
}

BackboneKind parse_backbone_kind(const std::string& text) {
  if (text == "reference") return BackboneKind::kReference;
  if (text == "resnet50") return BackboneKind::kResNet50;
  throw ConfigError("unknown backbone '" + text + "' (expected reference|resnet50)");
}

std::string to_string(NormKind kind) { return kind == NormKind::kBatch ? "batch" : "layer"; }

std::string to_string(BackboneKind kind) {
  return kind == BackboneKind::kReference ? "reference" : "resnet50";
}

void BackboneImpl::check_input(const torch::Tensor& frames) {
  if (frames.dim() != 4 || frames.size(1) != 3) {
    throw ShapeError("backbone expects N x 3 x H x W frames");
  }
  if (frames.size(2) % kStride != 0 || frames.size(3) % kStride != 0 || frames.size(2) == 0 ||
      frames.size(3) == 0) {
    throw ShapeError("backbone input " + std::to_string(frames.size(2)) + "x" +
                     std::to_string(frames.size(3)) + " is not a positive multiple of 16");
  }
}

namespace {

torch::nn::Conv2dOptions conv(std::int64_t in, std::int64_t out, std::int64_t k,
                              std::int64_t stride = 1) {
  return torch::nn::Conv2dOptions(in, out, k).stride(stride).padding(k / 2).bias(false);
}

void conv_bn_relu(torch::nn::Sequential& seq, std::int64_t in, std::int64_t out, std::int64_t stride) {
  seq->push_back(torch::nn::Conv2d(conv(in, out, 3, stride)));
  seq->push_back(torch::nn::BatchNorm2d(out));
  seq->push_back(torch::nn::ReLU());
}

class ResidualUnitImpl : public torch::nn::Module {
 public:
  ResidualUnitImpl(std::int64_t in, std::int64_t mid, std::int64_t stride) {
    const std::int64_t out = mid * 4;
    body_ = register_module(
        "body", torch::nn::Sequential(torch::nn::Conv2d(conv(in, mid, 1)),
                                      torch::nn::BatchNorm2d(mid), torch::nn::ReLU(),
                                      torch::nn::Conv2d(conv(mid, mid, 3, stride)),
                                      torch::nn::BatchNorm2d(mid), torch::nn::ReLU(),
                                      torch::nn::Conv2d(conv(mid, out, 1)),
                                      torch::nn::BatchNorm2d(out)));
    if (stride != 1 || in != out) {
      shortcut_ = register_module(
          "shortcut", torch::nn::Sequential(torch::nn::Conv2d(conv(in, out, 1, stride)),
                                            torch::nn::BatchNorm2d(out)));
    }
  }

  torch::Tensor forward(torch::Tensor x) {
    auto identity = shortcut_ ? shortcut_->forward(x) : x;
    return torch::relu(body_->forward(x) + identity);
  }

 private:
  torch::nn::Sequential body_{nullptr};
  torch::nn::Sequential shortcut_{nullptr};
};
TORCH_MODULE(ResidualUnit);

torch::nn::Sequential resnet_layer(std::int64_t in, std::int64_t mid, int blocks,
                                   std::int64_t stride) {
  torch::nn::Sequential layer;
  layer->push_back(ResidualUnit(in, mid, stride));
  for (int i = 1; i < blocks; ++i) layer->push_back(ResidualUnit(mid * 4, mid, 1));
  return layer;
}

}  // namespace

ReferenceBackboneImpl::ReferenceBackboneImpl(std::int64_t channels) : channels_(channels) {
  if (channels < 1) throw ConfigError("reference backbone channels must be >= 1");
  torch::nn::Sequential stages;
  conv_bn_relu(stages, 3, 32, 2);
  conv_bn_relu(stages, 32, 64, 2);
  conv_bn_relu(stages, 64, 96, 2);
  conv_bn_relu(stages, 96, channels, 2);
  conv_bn_relu(stages, channels, channels, 1);
  stages_ = register_module("stages", stages);
}

torch::Tensor ReferenceBackboneImpl::forward(torch::Tensor frames) {
  check_input(frames);
  return stages_->forward(frames);
}

ResNet50BackboneImpl::ResNet50BackboneImpl() {
  stem_ = register_module(
      "stem", torch::nn::Sequential(
                  torch::nn::Conv2d(torch::nn::Conv2dOptions(3, 64, 7).stride(2).padding(3).bias(false)),
                  torch::nn::BatchNorm2d(64), torch::nn::ReLU(),
                  torch::nn::MaxPool2d(torch::nn::MaxPool2dOptions(3).stride(2).padding(1))));
  layer1_ = register_module("layer1", resnet_layer(64, 64, 3, 1));
  layer2_ = register_module("layer2", resnet_layer(256, 128, 4, 2));
  layer3_ = register_module("layer3", resnet_layer(512, 256, 6, 2));
  // Last stride 1 keeps a 16x8 map for 256x128 input.
  layer4_ = register_module("layer4", resnet_layer(1024, 512, 3, 1));
}

torch::Tensor ResNet50BackboneImpl::forward(torch::Tensor frames) {
  check_input(frames);
  auto x = stem_->forward(frames);
  x = layer1_->forward(x);
  x = layer2_->forward(x);
  x = layer3_->forward(x);
  return layer4_->forward(x);
}

std::shared_ptr<BackboneImpl> make_backbone(const BackboneOptions& options) {
  std::shared_ptr<BackboneImpl> backbone;
  if (options.kind == BackboneKind::kResNet50) {
    backbone = std::make_shared<ResNet50BackboneImpl>();
  } else {
    backbone = std::make_shared<ReferenceBackboneImpl>(options.channels);
  }
  load_backbone_weights(*backbone, options.weights_path);
  return backbone;
}

bool load_backbone_weights(BackboneImpl& backbone, const std::string& path) {
  if (path.empty() || !std::filesystem::exists(path)) {
    log::info() << "backbone weights " << (path.empty() ? "not configured" : "not found at " + path)
                << "; using random initialization";
    return false;
  }
  torch::serialize::InputArchive archive;
  try {
    archive.load_from(path);
    backbone.load(archive);
  } catch (const c10::Error& e) {
    throw DataError("cannot load backbone weights from " + path + ": " + e.what_without_backtrace());
  }
  log::info() << "loaded backbone weights from " << path;
  return true;
}

BottleneckImpl::BottleneckImpl(const BottleneckOptions& options) : options_(options) {
  fc1 = register_module("fc1", torch::nn::Linear(options.in_dim, options.mid_dim));
  fc2 = register_module("fc2", torch::nn::Linear(options.mid_dim, options.out_dim));
  if (options.norm == NormKind::kBatch) {
    bn1_ = register_module("norm1", torch::nn::BatchNorm1d(options.mid_dim));
    bn2_ = register_module("norm2", torch::nn::BatchNorm1d(options.out_dim));
  } else {
    ln1_ = register_module("norm1", torch::nn::LayerNorm(torch::nn::LayerNormOptions({options.mid_dim})));
    ln2_ = register_module("norm2", torch::nn::LayerNorm(torch::nn::LayerNormOptions({options.out_dim})));
  }
}

torch::Tensor BottleneckImpl::normalize(int which, const torch::Tensor& x) {
  if (options_.norm == NormKind::kBatch) return which == 1 ? bn1_->forward(x) : bn2_->forward(x);
  return which == 1 ? ln1_->forward(x) : ln2_->forward(x);
}

torch::Tensor BottleneckImpl::forward(const torch::Tensor& x) {
  if (x.dim() != 2 || x.size(1) != options_.in_dim) {
    throw ShapeError("bottleneck expects N x " + std::to_string(options_.in_dim));
  }
  auto h = torch::relu(normalize(1, fc1->forward(x)));
  return torch::relu(normalize(2, fc2->forward(h)));
}

std::int64_t BottleneckImpl::weight_count() const {
  return fc1->weight.numel() + fc2->weight.numel();
}

torch::Tensor spatial_mean(const torch::Tensor& maps) {
  if (maps.dim() != 4) throw ShapeError("spatial_mean expects N x C x H x W");
  // Same reduction as masked_avg_pool with an all-ones mask, so both agree bit for bit.
  const auto cells = maps.size(2) * maps.size(3);
  auto denom = torch::full({maps.size(0), 1}, static_cast<double>(cells), maps.options());
  return maps.sum({2, 3}) / denom;
}

torch::Tensor masked_avg_pool(const torch::Tensor& maps, const torch::Tensor& masks,
                              std::int64_t* fallbacks) {
  if (maps.dim() != 4 || masks.dim() != 3 || masks.size(0) != maps.size(0) ||
      masks.size(1) != maps.size(2) || masks.size(2) != maps.size(3)) {
    throw ShapeError("masked_avg_pool expects maps N x C x H x W and masks N x H x W");
  }
  auto weights = masks.to(maps.scalar_type());
  auto mass = weights.sum({1, 2}).unsqueeze(1);  // N x 1
  auto empty = mass < kEmptyMaskEpsilon;
  auto safe = torch::where(empty, torch::ones_like(mass), mass);
  auto pooled = (maps * weights.unsqueeze(1)).sum({2, 3}) / safe;
  const auto n_empty = empty.sum().item<std::int64_t>();
  if (n_empty == 0) return pooled;
  if (fallbacks) *fallbacks += n_empty;
  return torch::where(empty, spatial_mean(maps), pooled);
}

torch::Tensor temporal_mean(const torch::Tensor& per_frame, std::int64_t frames) {
  if (frames < 1 || per_frame.dim() != 2 || per_frame.size(0) % frames != 0) {
    throw ShapeError("temporal_mean: rows must be a multiple of T");
  }
  return per_frame.view({per_frame.size(0) / frames, frames, per_frame.size(1)}).mean(1);
}

AppearanceNetImpl::AppearanceNetImpl(const AppearanceOptions& options) : options_(options) {
  backbone = register_module("backbone", make_backbone(options.backbone));
  BottleneckOptions b{backbone->out_channels(), options.bottleneck_mid, options.embedding_dim,
                      options.norm};
  global_bottleneck = register_module("global_bottleneck", Bottleneck(b));
  if (options.foreground_branch) {
    foreground_bottleneck = register_module("foreground_bottleneck", Bottleneck(b));
  }
}

torch::Tensor AppearanceNetImpl::backbone_forward(const torch::Tensor& frames) {
  return backbone->forward(frames);
}

void AppearanceNetImpl::check_masks(const torch::Tensor& maps, const torch::Tensor& masks) const {
  if (masks.dim() != 3 || masks.size(0) != maps.size(0) || masks.size(1) != maps.size(2) ||
      masks.size(2) != maps.size(3)) {
    throw ShapeError("appearance masks must match the backbone output (" +
                     std::to_string(maps.size(2)) + "x" + std::to_string(maps.size(3)) + ")");
  }
}

std::pair<torch::Tensor, torch::Tensor> AppearanceNetImpl::global_branch(const torch::Tensor& maps,
                                                                         std::int64_t frames) {
  auto pre = temporal_mean(spatial_mean(maps), frames);
  return {pre, global_bottleneck->forward(pre)};
}

std::pair<torch::Tensor, torch::Tensor> AppearanceNetImpl::foreground_branch(
    const torch::Tensor& maps, const torch::Tensor& masks, std::int64_t frames) {
  if (!foreground_bottleneck) throw ConfigError("foreground branch is disabled");
  check_masks(maps, masks);
  std::int64_t fallback = 0;
  auto pre = temporal_mean(masked_avg_pool(maps, masks, &fallback), frames);
  if (fallback > 0) {
    fallbacks_ += fallback;
    log::debug() << fallback << " empty masks fell back to the plain spatial mean";
  }
  return {pre, foreground_bottleneck->forward(pre)};
}

FramePooling AppearanceNetImpl::pool_frames(const torch::Tensor& frames, const torch::Tensor& masks) {
  auto maps = backbone_forward(frames);
  FramePooling out;
  out.global = spatial_mean(maps);
  if (foreground_bottleneck) {
    check_masks(maps, masks);
    std::int64_t fallback = 0;
    out.foreground = masked_avg_pool(maps, masks, &fallback);
    fallbacks_ += fallback;
  }
  return out;
}

AppearanceFeatures AppearanceNetImpl::embed(const torch::Tensor& global_pre,
                                            const torch::Tensor& foreground_pre) {
  AppearanceFeatures f;
  f.global_pre = global_pre;
  f.global = global_bottleneck->forward(global_pre);
  if (foreground_bottleneck) {
    f.foreground_pre = foreground_pre;
    f.foreground = foreground_bottleneck->forward(foreground_pre);
  }
  return f;
}

AppearanceFeatures AppearanceNetImpl::forward(const torch::Tensor& frames,
                                              const torch::Tensor& masks) {
  if (frames.dim() != 5 || masks.dim() != 4 || masks.size(0) != frames.size(0) ||
      masks.size(1) != frames.size(1)) {
    throw ShapeError("appearance expects frames N x T x 3 x H x W and masks N x T x h x w");
  }
  const auto n = frames.size(0);
  const auto t = frames.size(1);
  auto maps = backbone_forward(frames.reshape({n * t, frames.size(2), frames.size(3), frames.size(4)}));
  AppearanceFeatures f;
  std::tie(f.global_pre, f.global) = global_branch(maps, t);
  if (foreground_bottleneck) {
    auto flat = masks.reshape({n * t, masks.size(2), masks.size(3)});
    std::tie(f.foreground_pre, f.foreground) = foreground_branch(maps, flat, t);
  }
  return f;
}

}  // namespace seqmasks
