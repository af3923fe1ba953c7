#include "seqmasks/dataset/augment.hpp"

#include <cmath>
#include <string>

#include <opencv2/imgproc.hpp>
#include <torch/torch.h>

#include "seqmasks/error.hpp"

namespace seqmasks {

int AugmentOptions::padded_height() const {
  return static_cast<int>(std::lround(frame_height * (1.0 + crop_margin)));
}

int AugmentOptions::padded_width() const {
  return static_cast<int>(std::lround(frame_width * (1.0 + crop_margin)));
}

void AugmentOptions::validate() const {
  if (frame_height < 1 || frame_width < 1 || mask_height < 1 || mask_width < 1) {
    throw InvalidInput("AugmentOptions: sizes must be positive");
  }
  if (mask_height > frame_height || mask_width > frame_width) {
    throw InvalidInput("AugmentOptions: mask grid larger than the frame");
  }
  if (crop_probability < 0.0 || crop_probability > 1.0 || flip_probability < 0.0 ||
      flip_probability > 1.0) {
    throw InvalidInput("AugmentOptions: probabilities must lie in [0, 1]");
  }
  if (crop_margin < 0.0) throw InvalidInput("AugmentOptions: crop margin must be >= 0");
}

AugmentDecision draw_augment(const AugmentOptions& options, Rng& rng) {
  AugmentDecision d;
  d.crop = bernoulli(rng, options.crop_probability);
  if (d.crop) {
    d.top = uniform_int(rng, 0, options.padded_height() - options.frame_height);
    d.left = uniform_int(rng, 0, options.padded_width() - options.frame_width);
  }
  d.flip = bernoulli(rng, options.flip_probability);
  return d;
}

cv::Mat1f area_downsample(const cv::Mat1f& grid, int rows, int cols) {
  if (grid.empty()) throw InvalidInput("area_downsample: empty grid");
  if (grid.rows == rows && grid.cols == cols) return grid.clone();
  cv::Mat1f out;
  cv::resize(grid, out, cv::Size(cols, rows), 0, 0, cv::INTER_AREA);
  return out;
}

namespace {

cv::Mat resize_to(const cv::Mat& image, int rows, int cols, int interpolation) {
  if (image.rows == rows && image.cols == cols) return image.clone();
  cv::Mat out;
  cv::resize(image, out, cv::Size(cols, rows), 0, 0, interpolation);
  return out;
}

}  // namespace

AugmentedPair apply_augment(const std::vector<cv::Mat>& frames,
                            const std::vector<RawMask>& masks,
                            const AugmentOptions& options,
                            const AugmentDecision& decision) {
  options.validate();
  if (frames.size() != masks.size()) {
    throw InvalidInput("augment: frame/mask count mismatch");
  }
  const int ph = options.padded_height();
  const int pw = options.padded_width();
  if (decision.crop &&
      (decision.top < 0 || decision.left < 0 || decision.top + options.frame_height > ph ||
       decision.left + options.frame_width > pw)) {
    throw InvalidInput("augment: crop window outside the padded frame");
  }

  AugmentedPair out;
  out.frames.reserve(frames.size());
  out.masks.reserve(masks.size());
  const cv::Rect window(decision.left, decision.top, options.frame_width, options.frame_height);
  for (std::size_t t = 0; t < frames.size(); ++t) {
    const cv::Mat& frame = frames[t];
    if (frame.empty() || frame.type() != CV_8UC3) {
      throw InvalidInput("augment: frames must be non-empty 8-bit RGB images");
    }
    if (frame.rows != masks[t].height() || frame.cols != masks[t].width()) {
      throw InvalidInput("augment: mask " + std::to_string(t) + " does not match its frame size");
    }
    cv::Mat1f mask;
    masks[t].mat().convertTo(mask, CV_32F);

    cv::Mat image;
    if (decision.crop) {
      image = resize_to(frame, ph, pw, cv::INTER_LINEAR)(window).clone();
      mask = cv::Mat1f(resize_to(mask, ph, pw, cv::INTER_LINEAR)(window).clone());
    } else {
      image = resize_to(frame, options.frame_height, options.frame_width, cv::INTER_LINEAR);
    }
    if (decision.flip) {
      cv::flip(image, image, 1);
      cv::flip(mask, mask, 1);
    }
    cv::Mat1f pooled = area_downsample(mask, options.mask_height, options.mask_width);
    cv::min(pooled, 1.0f, pooled);
    cv::max(pooled, 0.0f, pooled);
    out.frames.push_back(std::move(image));
    out.masks.push_back(std::move(pooled));
  }
  return out;
}

AugmentedPair augment_pair(const std::vector<cv::Mat>& frames,
                           const std::vector<RawMask>& masks,
                           const AugmentOptions& options, Rng& rng) {
  return apply_augment(frames, masks, options, draw_augment(options, rng));
}

torch::Tensor normalize_frames(const std::vector<cv::Mat>& frames) {
  if (frames.empty()) throw ShapeError("normalize_frames: no frames");
  const int rows = frames.front().rows;
  const int cols = frames.front().cols;
  auto out = torch::empty({static_cast<int64_t>(frames.size()), 3, rows, cols}, torch::kFloat32);
  auto acc = out.accessor<float, 4>();
  for (std::size_t t = 0; t < frames.size(); ++t) {
    const cv::Mat& f = frames[t];
    if (f.type() != CV_8UC3 || f.rows != rows || f.cols != cols) {
      throw ShapeError("normalize_frames: frames must share one size and be 8-bit RGB");
    }
    for (int r = 0; r < rows; ++r) {
      const auto* px = f.ptr<cv::Vec3b>(r);
      for (int c = 0; c < cols; ++c) {
        for (int ch = 0; ch < 3; ++ch) {
          acc[t][ch][r][c] = static_cast<float>(
              (px[c][ch] / 255.0 - kChannelMean[ch]) / kChannelStd[ch]);
        }
      }
    }
  }
  return out;
}

torch::Tensor denormalize_frames(const torch::Tensor& normalized) {
  if (normalized.dim() != 4 || normalized.size(1) != 3) {
    throw ShapeError("denormalize_frames: expected T x 3 x H x W");
  }
  auto x = normalized.to(torch::kFloat64);
  auto mean = torch::tensor({kChannelMean[0], kChannelMean[1], kChannelMean[2]}, torch::kFloat64)
                  .view({1, 3, 1, 1});
  auto std = torch::tensor({kChannelStd[0], kChannelStd[1], kChannelStd[2]}, torch::kFloat64)
                 .view({1, 3, 1, 1});
  return x * std + mean;
}

torch::Tensor stack_masks(const std::vector<cv::Mat1f>& masks) {
  if (masks.empty()) throw ShapeError("stack_masks: no masks");
  const int rows = masks.front().rows;
  const int cols = masks.front().cols;
  auto out = torch::empty({static_cast<int64_t>(masks.size()), rows, cols}, torch::kFloat32);
  for (std::size_t t = 0; t < masks.size(); ++t) {
    if (masks[t].rows != rows || masks[t].cols != cols) {
      throw ShapeError("stack_masks: masks must share one size");
    }
    cv::Mat1f m = masks[t].isContinuous() ? masks[t] : masks[t].clone();
    std::memcpy(out[t].data_ptr<float>(), m.ptr<float>(), sizeof(float) * rows * cols);
  }
  return out;
}

}  // namespace seqmasks
