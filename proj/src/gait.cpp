#include "seqmasks/model/gait.hpp"

#include "seqmasks/dataset/mask.hpp"
#include "seqmasks/error.hpp"

namespace seqmasks {
namespace {

torch::nn::Conv2d gait_conv(std::int64_t in, std::int64_t out, std::int64_t k) {
  return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, k).padding(k / 2).bias(false));
}

torch::nn::LeakyReLU leaky(double slope) {
  return torch::nn::LeakyReLU(torch::nn::LeakyReLUOptions().negative_slope(slope));
}

torch::nn::Sequential conv_pair(std::int64_t in, std::int64_t out, double slope, bool pool) {
  torch::nn::Sequential s(gait_conv(in, out, 3), leaky(slope), gait_conv(out, out, 3), leaky(slope));
  if (pool) s->push_back(torch::nn::MaxPool2d(2));
  return s;
}

}  // namespace

SetStatistics set_statistics(const torch::Tensor& features) {
  if (features.dim() != 5) throw ShapeError("set pooling expects N x K x C x H x W");
  const auto k = features.size(1);
  if (k < 1) throw InvalidInput("set pooling needs K >= 1");
  auto sorted = std::get<0>(features.sort(1));
  SetStatistics s;
  s.max = sorted.select(1, k - 1);
  s.median = sorted.select(1, (k - 1) / 2);
  s.mean = sorted.sum(1) / static_cast<double>(k);
  return s;
}

SetPoolImpl::SetPoolImpl(std::int64_t channels) {
  fuse = register_module("fuse", torch::nn::Conv2d(torch::nn::Conv2dOptions(3 * channels, channels, 1)));
}

torch::Tensor SetPoolImpl::forward(const torch::Tensor& features) {
  const auto s = set_statistics(features);
  auto gate = torch::sigmoid(fuse->forward(torch::cat({s.max, s.mean, s.median}, 1)));
  return s.max + s.max * gate;
}

FrameEncoderImpl::FrameEncoderImpl(const GaitOptions& o) {
  const auto [c1, c2, c3] = o.channels;
  stage1 = register_module(
      "stage1", torch::nn::Sequential(gait_conv(1, c1, 5), leaky(o.leaky_slope), gait_conv(c1, c1, 3),
                                      leaky(o.leaky_slope), torch::nn::MaxPool2d(2)));
  stage2 = register_module("stage2", conv_pair(c1, c2, o.leaky_slope, true));
  stage3 = register_module("stage3", conv_pair(c2, c3, o.leaky_slope, false));
}

GaitStageMaps FrameEncoderImpl::forward(const torch::Tensor& silhouettes) {
  if (silhouettes.dim() != 4 || silhouettes.size(1) != 1 || silhouettes.size(2) != kAlignedSize ||
      silhouettes.size(3) != kSilhouetteWidth) {
    throw ShapeError("gait frame encoder expects M x 1 x 64 x 44 silhouettes");
  }
  GaitStageMaps m;
  m.stage1 = stage1->forward(silhouettes);
  m.stage2 = stage2->forward(m.stage1);
  m.stage3 = stage3->forward(m.stage2);
  return m;
}

GaitMainImpl::GaitMainImpl(const GaitOptions& o) {
  encoder = register_module("encoder", FrameEncoder(o));
  pool1 = register_module("pool1", SetPool(o.channels[0]));
  pool2 = register_module("pool2", SetPool(o.channels[1]));
  pool3 = register_module("pool3", SetPool(o.channels[2]));
}

MgpImpl::MgpImpl(const GaitOptions& o) {
  stage2 = register_module("stage2", conv_pair(o.channels[0], o.channels[1], o.leaky_slope, true));
  stage3 = register_module("stage3", conv_pair(o.channels[1], o.channels[2], o.leaky_slope, false));
}

torch::Tensor MgpImpl::forward(const torch::Tensor& sp1, const torch::Tensor& sp2,
                               const torch::Tensor& sp3) {
  auto x = stage2->forward(sp1);
  if (x.sizes() != sp2.sizes()) throw ShapeError("MGP stage 2 output does not match sp2");
  x = stage3->forward(x + sp2);
  if (x.sizes() != sp3.sizes()) throw ShapeError("MGP stage 3 output does not match sp3");
  return x + sp3;
}

torch::Tensor global_pool(const torch::Tensor& maps) {
  if (maps.dim() != 4 || maps.size(2) < 1 || maps.size(3) < 1) {
    throw ShapeError("global_pool expects N x C x H x W with H, W >= 1");
  }
  auto flat = maps.flatten(2);
  return flat.mean(2) + std::get<0>(flat.max(2));
}

GaitHeadsImpl::GaitHeadsImpl(const GaitOptions& o) {
  main_fc = register_module("main_fc", torch::nn::Linear(o.channels[2], o.head_dim));
  mgp_fc = register_module("mgp_fc", torch::nn::Linear(o.channels[2], o.head_dim));
}

GaitFeatures GaitHeadsImpl::forward(const torch::Tensor& main_pooled,
                                    const torch::Tensor& mgp_pooled) {
  GaitFeatures f;
  f.main_pooled = main_pooled;
  f.mgp_pooled = mgp_pooled;
  f.main_head = main_fc->forward(main_pooled);
  f.mgp_head = mgp_fc->forward(mgp_pooled);
  f.inference = torch::cat({f.main_head, f.mgp_head}, 1);
  return f;
}

GaitNetImpl::GaitNetImpl(const GaitOptions& options) : options_(options) {
  main = register_module("main", GaitMain(options));
  mgp = register_module("mgp", Mgp(options));
  heads = register_module("heads", GaitHeads(options));
}

GaitFeatures GaitNetImpl::forward(const torch::Tensor& silhouettes) {
  if (silhouettes.dim() != 4) throw ShapeError("gait net expects N x K x 64 x 44");
  const auto n = silhouettes.size(0);
  const auto k = silhouettes.size(1);
  if (k < 1) throw InvalidInput("gait net needs K >= 1 silhouettes per set");
  auto maps = main->encoder->forward(silhouettes.reshape({n * k, 1, silhouettes.size(2), silhouettes.size(3)}));
  auto as_set = [n, k](const torch::Tensor& m) {
    return m.view({n, k, m.size(1), m.size(2), m.size(3)});
  };
  auto sp1 = main->pool1->forward(as_set(maps.stage1));
  auto sp2 = main->pool2->forward(as_set(maps.stage2));
  auto sp3 = main->pool3->forward(as_set(maps.stage3));
  auto pipeline = mgp->forward(sp1, sp2, sp3);
  return heads->forward(global_pool(sp3), global_pool(pipeline));
}

}  // namespace seqmasks
