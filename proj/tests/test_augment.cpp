#include <gtest/gtest.h>

#include <random>

#include "seqmasks/dataset/augment.hpp"
#include "seqmasks/error.hpp"

using namespace seqmasks;

namespace {

cv::Mat random_frame(std::mt19937_64& rng, int h, int w) {
  cv::Mat f(h, w, CV_8UC3);
  std::uniform_int_distribution<int> u(0, 255);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) f.at<cv::Vec3b>(r, c) = cv::Vec3b(u(rng), u(rng), u(rng));
  return f;
}

RawMask random_mask(std::mt19937_64& rng, int h, int w) {
  cv::Mat1b m(h, w);
  std::bernoulli_distribution b(0.4);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) m(r, c) = b(rng) ? 1 : 0;
  return RawMask(m);
}

}  // namespace

TEST(Augment, NoCropNoFlipResizesAndBlockAverages) {
  std::mt19937_64 rng(1);
  AugmentOptions o;
  const auto frame = random_frame(rng, 256, 128);
  const auto mask = random_mask(rng, 256, 128);
  const auto out = apply_augment({frame}, {mask}, o, AugmentDecision{});
  ASSERT_EQ(out.frames[0].rows, 256);
  ASSERT_EQ(out.frames[0].cols, 128);
  EXPECT_EQ(cv::norm(out.frames[0], frame, cv::NORM_INF), 0.0);
  ASSERT_EQ(out.masks[0].rows, 16);
  ASSERT_EQ(out.masks[0].cols, 8);
  for (int br = 0; br < 16; ++br)
    for (int bc = 0; bc < 8; ++bc) {
      double sum = 0;
      for (int r = 0; r < 16; ++r)
        for (int c = 0; c < 16; ++c) sum += mask.at(br * 16 + r, bc * 16 + c);
      EXPECT_NEAR(out.masks[0](br, bc), sum / 256.0, 1e-6);
    }
}

TEST(Augment, SmallerFramesAreResizedToTarget) {
  std::mt19937_64 rng(2);
  const auto out = apply_augment({random_frame(rng, 100, 40)}, {random_mask(rng, 100, 40)}, AugmentOptions{},
                                 AugmentDecision{});
  EXPECT_EQ(out.frames[0].rows, 256);
  EXPECT_EQ(out.frames[0].cols, 128);
}

TEST(Augment, FlipMirrorsColumns) {
  std::mt19937_64 rng(3);
  const auto frame = random_frame(rng, 256, 128);
  const auto mask = random_mask(rng, 256, 128);
  AugmentDecision d;
  d.flip = true;
  const auto out = apply_augment({frame}, {mask}, AugmentOptions{}, d);
  for (int r = 0; r < 256; ++r)
    for (int c = 0; c < 128; ++c)
      ASSERT_EQ(out.frames[0].at<cv::Vec3b>(r, c), frame.at<cv::Vec3b>(r, 127 - c));
  const auto plain = apply_augment({frame}, {mask}, AugmentOptions{}, AugmentDecision{});
  for (int r = 0; r < 16; ++r)
    for (int c = 0; c < 8; ++c) EXPECT_NEAR(out.masks[0](r, c), plain.masks[0](r, 7 - c), 1e-6);
}

TEST(Augment, ConstantMaskStaysConstantUnderAnyDecision) {
  std::mt19937_64 rng(4);
  AugmentOptions o;
  for (int trial = 0; trial < 20; ++trial) {
    const auto d = draw_augment(o, rng);
    const auto ones = apply_augment({random_frame(rng, 200, 100)}, {RawMask::ones(200, 100)}, o, d);
    const auto zeros = apply_augment({random_frame(rng, 200, 100)}, {RawMask::zeros(200, 100)}, o, d);
    for (int r = 0; r < 16; ++r)
      for (int c = 0; c < 8; ++c) {
        ASSERT_NEAR(ones.masks[0](r, c), 1.0f, 1e-6);
        ASSERT_EQ(zeros.masks[0](r, c), 0.0f);
      }
  }
}

TEST(Augment, OneDecisionForTheWholeSequence) {
  // Identical frames must come out identical whatever the decision.
  std::mt19937_64 rng(5);
  const auto frame = random_frame(rng, 256, 128);
  const auto mask = random_mask(rng, 256, 128);
  AugmentOptions o;
  o.crop_probability = 1.0;
  for (int trial = 0; trial < 10; ++trial) {
    const auto out = augment_pair({frame, frame, frame}, {mask, mask, mask}, o, rng);
    for (int t = 1; t < 3; ++t) {
      EXPECT_EQ(cv::norm(out.frames[t], out.frames[0], cv::NORM_INF), 0.0);
      EXPECT_EQ(cv::norm(out.masks[t], out.masks[0], cv::NORM_INF), 0.0);
    }
  }
}

TEST(Augment, DrawMatchesApply) {
  AugmentOptions o;
  std::mt19937_64 rng(6);
  const auto frame = random_frame(rng, 256, 128);
  const auto mask = random_mask(rng, 256, 128);
  Rng a(42), b(42);
  const auto via_pair = augment_pair({frame}, {mask}, o, a);
  const auto decision = draw_augment(o, b);
  const auto direct = apply_augment({frame}, {mask}, o, decision);
  EXPECT_EQ(cv::norm(via_pair.frames[0], direct.frames[0], cv::NORM_INF), 0.0);
}

TEST(Augment, CropWindowWithinPaddedFrame) {
  AugmentOptions o;
  EXPECT_EQ(o.padded_height(), 269);
  EXPECT_EQ(o.padded_width(), 134);
  Rng rng(7);
  int crops = 0, flips = 0;
  const int trials = 4000;
  for (int i = 0; i < trials; ++i) {
    const auto d = draw_augment(o, rng);
    crops += d.crop;
    flips += d.flip;
    if (d.crop) {
      ASSERT_GE(d.top, 0);
      ASSERT_LE(d.top, 269 - 256);
      ASSERT_GE(d.left, 0);
      ASSERT_LE(d.left, 134 - 128);
    }
  }
  // p = 0.5 each; 5 sigma band.
  EXPECT_NEAR(crops / double(trials), 0.5, 5 * 0.5 / std::sqrt(trials));
  EXPECT_NEAR(flips / double(trials), 0.5, 5 * 0.5 / std::sqrt(trials));
}

TEST(Augment, RejectsMismatchedInputs) {
  std::mt19937_64 rng(8);
  EXPECT_THROW(apply_augment({random_frame(rng, 10, 10)}, {}, AugmentOptions{}, {}), InvalidInput);
  EXPECT_THROW(apply_augment({random_frame(rng, 10, 10)}, {RawMask::ones(10, 11)}, AugmentOptions{}, {}),
               InvalidInput);
  AugmentDecision outside{true, 100, 0, false};
  EXPECT_THROW(apply_augment({random_frame(rng, 10, 10)}, {RawMask::ones(10, 10)}, AugmentOptions{}, outside),
               InvalidInput);
}

TEST(AreaDownsample, CellsWithinSourceBlockRange) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<float> u(0, 1);
  cv::Mat1f grid(64, 32);
  for (int r = 0; r < 64; ++r)
    for (int c = 0; c < 32; ++c) grid(r, c) = u(rng);
  const auto out = area_downsample(grid, 16, 8);
  for (int br = 0; br < 16; ++br)
    for (int bc = 0; bc < 8; ++bc) {
      double lo = 1, hi = 0;
      for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) {
          lo = std::min<double>(lo, grid(br * 4 + r, bc * 4 + c));
          hi = std::max<double>(hi, grid(br * 4 + r, bc * 4 + c));
        }
      EXPECT_GE(out(br, bc), lo - 1e-6);
      EXPECT_LE(out(br, bc), hi + 1e-6);
    }
}

TEST(NormalizeFrames, CenteringAndZero) {
  cv::Mat f(1, 2, CV_8UC3);
  f.at<cv::Vec3b>(0, 0) = cv::Vec3b(0, 0, 0);
  for (int ch = 0; ch < 3; ++ch) {
    f.at<cv::Vec3b>(0, 1)[ch] = static_cast<unsigned char>(std::lround(255.0 * kChannelMean[ch]));
  }
  const auto out = normalize_frames({f});
  for (int ch = 0; ch < 3; ++ch) {
    EXPECT_NEAR(out[0][ch][0][0].item<double>(), -kChannelMean[ch] / kChannelStd[ch], 1e-6);
    // 255 * mean_c is not an integer; the nearest byte lands within half a step of 0.
    EXPECT_NEAR(out[0][ch][0][1].item<double>(), 0.0, 0.5 / 255.0 / kChannelStd[ch] + 1e-7);
  }
}

TEST(NormalizeFrames, RoundTrip) {
  std::mt19937_64 rng(10);
  std::vector<cv::Mat> frames{random_frame(rng, 12, 7), random_frame(rng, 12, 7)};
  const auto back = denormalize_frames(normalize_frames(frames));
  for (int t = 0; t < 2; ++t)
    for (int r = 0; r < 12; ++r)
      for (int c = 0; c < 7; ++c)
        for (int ch = 0; ch < 3; ++ch)
          ASSERT_NEAR(back[t][ch][r][c].item<double>(), frames[t].at<cv::Vec3b>(r, c)[ch] / 255.0, 1e-6);
}

TEST(NormalizeFrames, RejectsMixedSizes) {
  std::mt19937_64 rng(11);
  EXPECT_THROW(normalize_frames({random_frame(rng, 4, 4), random_frame(rng, 4, 5)}), ShapeError);
  EXPECT_THROW(normalize_frames({}), ShapeError);
}
