#ifndef SEQMASKS_MODEL_GAIT_HPP_
#define SEQMASKS_MODEL_GAIT_HPP_

#include <array>
#include <cstdint>

#include <torch/torch.h>

namespace seqmasks {

/// Order-free statistics over the set dimension (dim 1) of N x K x C x H x W.
struct SetStatistics {
  torch::Tensor max;
  torch::Tensor mean;
  torch::Tensor median;  // lower median: sorted index (K-1)/2
};

/**
 * Computes max, mean and lower median from one sort along the set axis.
 * Every reduction runs over sorted values, so the result does not depend on
 * the order of the set, bit for bit.
 */
SetStatistics set_statistics(const torch::Tensor& features);

/// out = m + m * sigmoid(conv1x1([max, mean, median])) with m the set max.
class SetPoolImpl : public torch::nn::Module {
 public:
  explicit SetPoolImpl(std::int64_t channels);
  /// N x K x C x H x W -> N x C x H x W.
  torch::Tensor forward(const torch::Tensor& features);

  torch::nn::Conv2d fuse{nullptr};
};
TORCH_MODULE(SetPool);

struct GaitOptions {
  std::array<std::int64_t, 3> channels{32, 64, 128};
  std::int64_t head_dim = 256;
  double leaky_slope = 0.01;
};

struct GaitStageMaps {
  torch::Tensor stage1;  // M x c1 x 32 x 22
  torch::Tensor stage2;  // M x c2 x 16 x 11
  torch::Tensor stage3;  // M x c3 x 16 x 11
};

/// Per-silhouette convolution stack shared by all frames of a set.
class FrameEncoderImpl : public torch::nn::Module {
 public:
  explicit FrameEncoderImpl(const GaitOptions& options);
  /// M x 1 x 64 x 44 -> stage maps.
  GaitStageMaps forward(const torch::Tensor& silhouettes);

  torch::nn::Sequential stage1{nullptr}, stage2{nullptr}, stage3{nullptr};
};
TORCH_MODULE(FrameEncoder);

/// Frame encoder plus one set pool per stage.
class GaitMainImpl : public torch::nn::Module {
 public:
  explicit GaitMainImpl(const GaitOptions& options);

  FrameEncoder encoder{nullptr};
  SetPool pool1{nullptr}, pool2{nullptr}, pool3{nullptr};
};
TORCH_MODULE(GaitMain);

/// Multilayer global pipeline: mirrors stages 2-3 with its own parameters and
/// injects each stage's set feature: sp1 -> stage2 -> +sp2 -> stage3 -> +sp3.
class MgpImpl : public torch::nn::Module {
 public:
  explicit MgpImpl(const GaitOptions& options);
  torch::Tensor forward(const torch::Tensor& sp1, const torch::Tensor& sp2,
                        const torch::Tensor& sp3);

  torch::nn::Sequential stage2{nullptr}, stage3{nullptr};
};
TORCH_MODULE(Mgp);

/// Global average pooling plus global max pooling: N x C x H x W -> N x C.
torch::Tensor global_pool(const torch::Tensor& maps);

struct GaitFeatures {
  torch::Tensor main_pooled;  // N x c3
  torch::Tensor mgp_pooled;   // N x c3
  torch::Tensor main_head;    // N x 256
  torch::Tensor mgp_head;     // N x 256
  torch::Tensor inference;    // N x 512 = [main_head | mgp_head]
};

/// Two unshared FC layers c3 -> 256.
class GaitHeadsImpl : public torch::nn::Module {
 public:
  explicit GaitHeadsImpl(const GaitOptions& options);
  GaitFeatures forward(const torch::Tensor& main_pooled, const torch::Tensor& mgp_pooled);

  torch::nn::Linear main_fc{nullptr}, mgp_fc{nullptr};
};
TORCH_MODULE(GaitHeads);

class GaitNetImpl : public torch::nn::Module {
 public:
  explicit GaitNetImpl(const GaitOptions& options = {});
  /// N x K x 64 x 44 silhouette sets -> features.
  GaitFeatures forward(const torch::Tensor& silhouettes);

  std::int64_t embedding_dim() const { return 2 * options_.head_dim; }
  const GaitOptions& options() const { return options_; }

  GaitMain main{nullptr};
  Mgp mgp{nullptr};
  GaitHeads heads{nullptr};

 private:
  GaitOptions options_;
};
TORCH_MODULE(GaitNet);

}  // namespace seqmasks

#endif  // SEQMASKS_MODEL_GAIT_HPP_
