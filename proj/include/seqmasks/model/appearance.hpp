#ifndef SEQMASKS_MODEL_APPEARANCE_HPP_
#define SEQMASKS_MODEL_APPEARANCE_HPP_

#include <atomic>
#include <cstdint>
#include <memory>
#include <string>

#include <torch/torch.h>

namespace seqmasks {

enum class NormKind { kBatch, kLayer };
enum class BackboneKind { kReference, kResNet50 };

NormKind parse_norm_kind(const std::string& text);
BackboneKind parse_backbone_kind(const std::string& text);
std::string to_string(NormKind kind);
std::string to_string(BackboneKind kind);

/// Pluggable per-frame feature extractor: 3 x H x W -> C x H/16 x W/16.
class BackboneImpl : public torch::nn::Module {
 public:
  static constexpr int kStride = 16;
  virtual torch::Tensor forward(torch::Tensor frames) = 0;
  virtual std::int64_t out_channels() const = 0;

 protected:
  /// Throws ShapeError unless the input is N x 3 x H x W with H, W multiples of 16.
  static void check_input(const torch::Tensor& frames);
};

/// Four stride-2 conv stages; small enough for CPU tests without pretrained weights.
class ReferenceBackboneImpl : public BackboneImpl {
 public:
  explicit ReferenceBackboneImpl(std::int64_t channels = 128);
  torch::Tensor forward(torch::Tensor frames) override;
  std::int64_t out_channels() const override { return channels_; }

 private:
  std::int64_t channels_;
  torch::nn::Sequential stages_{nullptr};
};

/// ResNet-50 without the classifier and with the last stage at stride 1 (2048 channels).
class ResNet50BackboneImpl : public BackboneImpl {
 public:
  ResNet50BackboneImpl();
  torch::Tensor forward(torch::Tensor frames) override;
  std::int64_t out_channels() const override { return 2048; }

 private:
  torch::nn::Sequential stem_{nullptr};
  torch::nn::Sequential layer1_{nullptr}, layer2_{nullptr}, layer3_{nullptr}, layer4_{nullptr};
};

struct BackboneOptions {
  BackboneKind kind = BackboneKind::kReference;
  std::int64_t channels = 128;  // reference backbone only
  std::string weights_path;     // optional torch::save archive of the backbone
};

std::shared_ptr<BackboneImpl> make_backbone(const BackboneOptions& options);

/// Loads backbone parameters saved with torch::save. Returns false (and logs)
/// when the path is empty or missing, leaving the random initialization.
bool load_backbone_weights(BackboneImpl& backbone, const std::string& path);

struct BottleneckOptions {
  std::int64_t in_dim = 2048;
  std::int64_t mid_dim = 256;
  std::int64_t out_dim = 512;
  NormKind norm = NormKind::kBatch;
};

/// FC -> norm -> ReLU -> FC -> norm -> ReLU.
class BottleneckImpl : public torch::nn::Module {
 public:
  explicit BottleneckImpl(const BottleneckOptions& options);
  torch::Tensor forward(const torch::Tensor& x);
  /// Weights of the two fully connected layers (no biases or norm affines).
  std::int64_t weight_count() const;
  const BottleneckOptions& options() const { return options_; }

  torch::nn::Linear fc1{nullptr}, fc2{nullptr};

 private:
  torch::Tensor normalize(int which, const torch::Tensor& x);

  BottleneckOptions options_;
  torch::nn::BatchNorm1d bn1_{nullptr}, bn2_{nullptr};
  torch::nn::LayerNorm ln1_{nullptr}, ln2_{nullptr};
};
TORCH_MODULE(Bottleneck);

/// Per-map spatial mean: N x C x H x W -> N x C.
torch::Tensor spatial_mean(const torch::Tensor& maps);

/// Masked spatial mean sum(map * mask) / sum(mask). Maps whose mask sums to
/// less than kEmptyMaskEpsilon fall back to spatial_mean; `fallbacks` (if
/// given) is incremented once per such map.
torch::Tensor masked_avg_pool(const torch::Tensor& maps, const torch::Tensor& masks,
                              std::int64_t* fallbacks = nullptr);

inline constexpr double kEmptyMaskEpsilon = 1e-6;

/// (N*T) x C -> N x C arithmetic mean over consecutive groups of T rows.
torch::Tensor temporal_mean(const torch::Tensor& per_frame, std::int64_t frames);

struct AppearanceFeatures {
  torch::Tensor global_pre;      // N x C
  torch::Tensor global;          // N x 512
  torch::Tensor foreground_pre;  // N x C (undefined when the branch is off)
  torch::Tensor foreground;      // N x 512
};

/// Per-frame pooled vectors before temporal aggregation.
struct FramePooling {
  torch::Tensor global;      // M x C
  torch::Tensor foreground;  // M x C
};

struct AppearanceOptions {
  BackboneOptions backbone;
  std::int64_t bottleneck_mid = 256;
  std::int64_t embedding_dim = 512;
  NormKind norm = NormKind::kBatch;
  bool foreground_branch = true;
};

class AppearanceNetImpl : public torch::nn::Module {
 public:
  explicit AppearanceNetImpl(const AppearanceOptions& options);

  /// frames: N x T x 3 x H x W, masks: N x T x H/16 x W/16.
  AppearanceFeatures forward(const torch::Tensor& frames, const torch::Tensor& masks);

  /// Backbone over M frames: M x C x H/16 x W/16.
  torch::Tensor backbone_forward(const torch::Tensor& frames);

  /// maps: (N*T) x C x h x w -> (global_pre, global).
  std::pair<torch::Tensor, torch::Tensor> global_branch(const torch::Tensor& maps,
                                                        std::int64_t frames);
  /// maps as above, masks: (N*T) x h x w -> (foreground_pre, foreground).
  std::pair<torch::Tensor, torch::Tensor> foreground_branch(const torch::Tensor& maps,
                                                            const torch::Tensor& masks,
                                                            std::int64_t frames);

  /// Spatially pooled per-frame vectors; chunked extraction averages these itself.
  FramePooling pool_frames(const torch::Tensor& frames, const torch::Tensor& masks);
  /// Applies the two bottlenecks to already aggregated vectors.
  AppearanceFeatures embed(const torch::Tensor& global_pre, const torch::Tensor& foreground_pre);

  std::int64_t feature_channels() const { return backbone->out_channels(); }
  bool has_foreground() const { return options_.foreground_branch; }
  std::int64_t empty_mask_fallbacks() const { return fallbacks_.load(); }
  const AppearanceOptions& options() const { return options_; }

  std::shared_ptr<BackboneImpl> backbone;
  Bottleneck global_bottleneck{nullptr};
  Bottleneck foreground_bottleneck{nullptr};

 private:
  void check_masks(const torch::Tensor& maps, const torch::Tensor& masks) const;

  AppearanceOptions options_;
  std::atomic<std::int64_t> fallbacks_{0};
};
TORCH_MODULE(AppearanceNet);

}  // namespace seqmasks

#endif  // SEQMASKS_MODEL_APPEARANCE_HPP_
