#ifndef SEQMASKS_DATASET_MASK_HPP_
#define SEQMASKS_DATASET_MASK_HPP_

#include <cstdint>
#include <vector>

#include <opencv2/core.hpp>

namespace seqmasks {

/// Binary foreground mask. Every pixel is exactly 0 or 1.
class RawMask {
 public:
  RawMask() = default;
  /// Takes ownership of a CV_8UC1 grid; throws InvalidInput if any value is not 0/1.
  explicit RawMask(cv::Mat1b pixels);
  RawMask(int height, int width, const std::vector<std::uint8_t>& pixels);

  static RawMask zeros(int height, int width);
  static RawMask ones(int height, int width);
  /// Binarizes a single-channel image: nonzero pixels become foreground.
  static RawMask from_image(const cv::Mat& image);

  int height() const { return pixels_.rows; }
  int width() const { return pixels_.cols; }
  bool empty() const { return pixels_.empty(); }
  std::uint8_t at(int row, int col) const { return pixels_(row, col); }
  void set(int row, int col, bool on) { pixels_(row, col) = on ? 1 : 0; }
  const cv::Mat1b& mat() const { return pixels_; }
  std::int64_t foreground_count() const;

 private:
  cv::Mat1b pixels_;
};

inline constexpr int kAlignedSize = 64;
inline constexpr int kSilhouetteCrop = 10;
inline constexpr int kSilhouetteWidth = kAlignedSize - 2 * kSilhouetteCrop;  // 44
inline constexpr double kEffectiveRatio = 0.15;

/// Fraction of pixels that are foreground.
double foreground_ratio(const RawMask& mask);

/// True iff foreground_ratio(mask) >= threshold. The boundary counts as effective.
bool is_effective(const RawMask& mask, double threshold = kEffectiveRatio);

/// Column index of the horizontal mass center of a non-negative grid.
double column_mass_center(const cv::Mat1f& grid);

/**
 * Height-normalizes a silhouette into a 64x64 canvas.
 *
 * The tight foreground bounding box is scaled to 64 rows with its aspect
 * ratio kept, then translated horizontally (sub-pixel) so that the column
 * mass center of the visible result sits at column 32. Wide silhouettes are
 * truncated at the canvas border; the translation is then solved on the
 * truncated result so the centering still holds.
 */
cv::Mat1f align_silhouette(const RawMask& mask);

/// Drops 10 columns on each side of a 64x64 aligned silhouette, giving 64x44.
cv::Mat1f crop_silhouette(const cv::Mat1f& aligned);

/// align_silhouette followed by crop_silhouette.
cv::Mat1f prepare_silhouette(const RawMask& mask);

/// K aligned 64x44 silhouettes, order-free.
class AlignedMaskSet {
 public:
  explicit AlignedMaskSet(std::vector<cv::Mat1f> silhouettes);
  std::size_t size() const { return silhouettes_.size(); }
  const std::vector<cv::Mat1f>& silhouettes() const { return silhouettes_; }

 private:
  std::vector<cv::Mat1f> silhouettes_;
};

}  // namespace seqmasks

#endif  // SEQMASKS_DATASET_MASK_HPP_
