#include "seqmasks/model/fusion.hpp"

#include "seqmasks/error.hpp"

namespace seqmasks {

FeatureFusionImpl::FeatureFusionImpl(std::int64_t dim, std::int64_t ratio) {
  if (ratio < 1 || dim % ratio != 0) throw ConfigError("FFM: dim must be divisible by the ratio");
  fc1 = register_module("fc1", torch::nn::Linear(dim, dim / ratio));
  fc2 = register_module("fc2", torch::nn::Linear(dim / ratio, dim));
}

torch::Tensor FeatureFusionImpl::gate(const torch::Tensor& x) {
  return torch::sigmoid(fc2->forward(torch::relu(fc1->forward(x))));
}

torch::Tensor FeatureFusionImpl::forward(const torch::Tensor& x) { return x + x * gate(x); }

Variant parse_variant(const std::string& text) {
  if (text == "GGConcat") return Variant::kGGConcat;
  if (text == "GGFusion") return Variant::kGGFusion;
  if (text == "AGConcat") return Variant::kAGConcat;
  if (text == "AGFusion") return Variant::kAGFusion;
  throw ConfigError("unknown variant '" + text + "' (expected GGConcat|GGFusion|AGConcat|AGFusion)");
}

std::string to_string(Variant variant) {
  switch (variant) {
    case Variant::kGGConcat: return "GGConcat";
    case Variant::kGGFusion: return "GGFusion";
    case Variant::kAGConcat: return "AGConcat";
    case Variant::kAGFusion: return "AGFusion";
  }
  return "?";
}

bool uses_foreground(Variant v) { return v == Variant::kAGConcat || v == Variant::kAGFusion; }
bool uses_fusion(Variant v) { return v == Variant::kGGFusion || v == Variant::kAGFusion; }

std::int64_t ModelOptions::descriptor_dim() const {
  const std::int64_t branches = uses_foreground(variant) ? 2 : 1;
  return branches * appearance.embedding_dim + 2 * gait.head_dim;
}

ClassifiersImpl::ClassifiersImpl(std::int64_t num_classes, std::int64_t appearance_dim,
                                 std::int64_t gait_dim, bool with_foreground) {
  global = register_module("global_id", torch::nn::Linear(appearance_dim, num_classes));
  if (with_foreground) {
    foreground = register_module("foreground", torch::nn::Linear(appearance_dim, num_classes));
  }
  gait_main = register_module("gait_main", torch::nn::Linear(gait_dim, num_classes));
  gait_mgp = register_module("gait_mgp", torch::nn::Linear(gait_dim, num_classes));
}

SeqMasksModelImpl::SeqMasksModelImpl(const ModelOptions& options) : options_(options) {
  options_.appearance.foreground_branch = uses_foreground(options.variant);
  appearance = register_module("appearance", AppearanceNet(options_.appearance));
  gait = register_module("gait", GaitNet(options_.gait));
  if (uses_fusion(options_.variant)) {
    ffm = register_module("ffm", FeatureFusion(options_.descriptor_dim(), options_.fusion_ratio));
  }
  if (options_.num_classes > 0) {
    classifiers = register_module(
        "classifiers", Classifiers(options_.num_classes, options_.appearance.embedding_dim,
                                   options_.gait.head_dim, options_.appearance.foreground_branch));
  }
}

FeatureBundle SeqMasksModelImpl::assemble(const AppearanceFeatures& a, const GaitFeatures& g,
                                          Mode mode) {
  FeatureBundle b;
  b.global_pre = a.global_pre;
  b.global = a.global;
  b.foreground_pre = a.foreground_pre;
  b.foreground = a.foreground;
  b.gait_main = g.main_head;
  b.gait_mgp = g.mgp_head;
  b.gait = g.inference;
  std::vector<torch::Tensor> parts{b.global};
  if (b.foreground.defined()) parts.push_back(b.foreground);
  parts.push_back(b.gait);
  b.concat = torch::cat(parts, 1);
  b.fused = ffm ? ffm->forward(b.concat) : b.concat;
  if (mode == Mode::kTrain) {
    if (!classifiers) throw ConfigError("train mode needs classifiers (num_classes > 0)");
    b.logits_global = classifiers->global->forward(b.global);
    if (classifiers->foreground) b.logits_foreground = classifiers->foreground->forward(b.foreground);
    b.logits_gait_main = classifiers->gait_main->forward(b.gait_main);
    b.logits_gait_mgp = classifiers->gait_mgp->forward(b.gait_mgp);
  }
  return b;
}

FeatureBundle SeqMasksModelImpl::forward(const torch::Tensor& frames, const torch::Tensor& masks,
                                         const torch::Tensor& silhouettes, Mode mode) {
  if (frames.size(0) != silhouettes.size(0)) {
    throw ShapeError("appearance and gait inputs disagree on the batch size");
  }
  if (mode == Mode::kTrain && !classifiers) {
    throw ConfigError("train mode needs classifiers (num_classes > 0)");
  }
  return assemble(appearance->forward(frames, masks), gait->forward(silhouettes), mode);
}

std::vector<std::pair<std::string, std::shared_ptr<torch::nn::Module>>> SeqMasksModelImpl::groups() {
  std::vector<std::pair<std::string, std::shared_ptr<torch::nn::Module>>> g;
  g.emplace_back("backbone", appearance->backbone);
  g.emplace_back("global_bottleneck", appearance->global_bottleneck.ptr());
  if (appearance->foreground_bottleneck) {
    g.emplace_back("fg_bottleneck", appearance->foreground_bottleneck.ptr());
  }
  g.emplace_back("gait_main", gait->main.ptr());
  g.emplace_back("gait_mgp", gait->mgp.ptr());
  g.emplace_back("gait_heads", gait->heads.ptr());
  if (ffm) g.emplace_back("ffm", ffm.ptr());
  if (classifiers) g.emplace_back("classifiers", classifiers.ptr());
  return g;
}

}  // namespace seqmasks
