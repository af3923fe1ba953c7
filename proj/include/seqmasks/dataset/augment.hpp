#ifndef SEQMASKS_DATASET_AUGMENT_HPP_
#define SEQMASKS_DATASET_AUGMENT_HPP_

#include <array>
#include <vector>

#include <opencv2/core.hpp>
#include <torch/types.h>

#include "seqmasks/dataset/mask.hpp"
#include "seqmasks/rng.hpp"

namespace seqmasks {

struct AugmentOptions {
  int frame_height = 256;
  int frame_width = 128;
  // Backbone output resolution: masks are pooled to frame size / 16.
  int mask_height = 16;
  int mask_width = 8;
  double crop_probability = 0.5;
  double flip_probability = 0.5;
  // Frames are upscaled by (1 + margin) before a random crop window is taken.
  double crop_margin = 0.05;

  int padded_height() const;
  int padded_width() const;
  void validate() const;
};

/// One geometric decision shared by every frame of a sequence.
struct AugmentDecision {
  bool crop = false;
  int top = 0;
  int left = 0;
  bool flip = false;

  bool operator==(const AugmentDecision&) const = default;
};

struct AugmentedPair {
  std::vector<cv::Mat> frames;      // CV_8UC3, frame_height x frame_width
  std::vector<cv::Mat1f> masks;     // mask_height x mask_width, soft values in [0,1]
};

AugmentDecision draw_augment(const AugmentOptions& options, Rng& rng);

/// Deterministic half of augment_pair. A default decision is the evaluation path.
AugmentedPair apply_augment(const std::vector<cv::Mat>& frames,
                            const std::vector<RawMask>& masks,
                            const AugmentOptions& options,
                            const AugmentDecision& decision);

AugmentedPair augment_pair(const std::vector<cv::Mat>& frames,
                           const std::vector<RawMask>& masks,
                           const AugmentOptions& options, Rng& rng);

/// Mean pooling onto a coarser grid (fractional source blocks are weighted by coverage).
cv::Mat1f area_downsample(const cv::Mat1f& grid, int rows, int cols);

inline constexpr std::array<double, 3> kChannelMean{0.485, 0.456, 0.406};
inline constexpr std::array<double, 3> kChannelStd{0.229, 0.224, 0.225};

/// RGB 8-bit frames -> T x 3 x H x W float tensor, (x/255 - mean_c) / std_c.
torch::Tensor normalize_frames(const std::vector<cv::Mat>& frames);

/// Inverse of normalize_frames, returning values in the x/255 scale.
torch::Tensor denormalize_frames(const torch::Tensor& normalized);

/// Stacks soft masks into a T x h x w float tensor.
torch::Tensor stack_masks(const std::vector<cv::Mat1f>& masks);

}  // namespace seqmasks

#endif  // SEQMASKS_DATASET_AUGMENT_HPP_
