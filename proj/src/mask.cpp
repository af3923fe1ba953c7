#include "seqmasks/dataset/mask.hpp"

#include <cmath>
#include <string>

#include <opencv2/imgproc.hpp>

#include "seqmasks/error.hpp"

namespace seqmasks {
namespace {

// out(r, c) = src(r, c - shift), linear in the fractional part, zero outside.
cv::Mat1f translate_columns(const cv::Mat1f& src, double shift, int out_width) {
  cv::Mat1f out = cv::Mat1f::zeros(src.rows, out_width);
  const double whole = std::floor(shift);
  const int k = static_cast<int>(whole);
  const float frac = static_cast<float>(shift - whole);
  for (int r = 0; r < src.rows; ++r) {
    const float* in = src.ptr<float>(r);
    float* dst = out.ptr<float>(r);
    for (int c = 0; c < out_width; ++c) {
      const int j0 = c - k;      // weight (1 - frac)
      const int j1 = c - k - 1;  // weight frac
      float v = 0.f;
      if (j0 >= 0 && j0 < src.cols) v += (1.f - frac) * in[j0];
      if (frac > 0.f && j1 >= 0 && j1 < src.cols) v += frac * in[j1];
      dst[c] = v;
    }
  }
  return out;
}

double column_mass(const cv::Mat1f& grid, double* moment) {
  double mass = 0.0;
  double first = 0.0;
  for (int r = 0; r < grid.rows; ++r) {
    const float* row = grid.ptr<float>(r);
    for (int c = 0; c < grid.cols; ++c) {
      mass += row[c];
      first += static_cast<double>(c) * row[c];
    }
  }
  if (moment) *moment = first;
  return mass;
}

}  // namespace

RawMask::RawMask(cv::Mat1b pixels) : pixels_(std::move(pixels)) {
  if (pixels_.rows < 1 || pixels_.cols < 1) {
    throw InvalidInput("RawMask: height and width must be >= 1");
  }
  double max_value = 0.0;
  cv::minMaxLoc(pixels_, nullptr, &max_value);
  if (max_value > 1.0) throw InvalidInput("RawMask: pixel values must be 0 or 1");
}

RawMask::RawMask(int height, int width, const std::vector<std::uint8_t>& pixels) {
  if (height < 1 || width < 1) throw InvalidInput("RawMask: height and width must be >= 1");
  if (pixels.size() != static_cast<std::size_t>(height) * width) {
    throw InvalidInput("RawMask: pixel buffer size does not match height*width");
  }
  pixels_ = cv::Mat1b(height, width);
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      const auto v = pixels[static_cast<std::size_t>(r) * width + c];
      if (v > 1) throw InvalidInput("RawMask: pixel values must be 0 or 1");
      pixels_(r, c) = v;
    }
  }
}

RawMask RawMask::zeros(int height, int width) {
  if (height < 1 || width < 1) throw InvalidInput("RawMask: height and width must be >= 1");
  return RawMask(cv::Mat1b::zeros(height, width));
}

RawMask RawMask::ones(int height, int width) {
  if (height < 1 || width < 1) throw InvalidInput("RawMask: height and width must be >= 1");
  return RawMask(cv::Mat1b::ones(height, width));
}

RawMask RawMask::from_image(const cv::Mat& image) {
  if (image.empty()) throw InvalidInput("RawMask: empty image");
  cv::Mat gray = image;
  if (image.channels() != 1) cv::cvtColor(image, gray, cv::COLOR_BGR2GRAY);
  cv::Mat1b binary;
  cv::compare(gray, 0, binary, cv::CMP_NE);  // 0 / 255
  binary /= 255;
  return RawMask(binary);
}

std::int64_t RawMask::foreground_count() const { return cv::countNonZero(pixels_); }

double foreground_ratio(const RawMask& mask) {
  const double area = static_cast<double>(mask.height()) * mask.width();
  if (mask.empty() || area <= 0.0) throw InvalidInput("foreground_ratio: zero-area mask");
  return static_cast<double>(mask.foreground_count()) / area;
}

bool is_effective(const RawMask& mask, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw InvalidInput("is_effective: threshold must lie in (0, 1)");
  }
  // Integer comparison avoids 1500/10000 rounding below 0.15.
  const double area = static_cast<double>(mask.height()) * mask.width();
  if (mask.empty() || area <= 0.0) throw InvalidInput("foreground_ratio: zero-area mask");
  const auto needed = static_cast<std::int64_t>(std::ceil(threshold * area - 1e-9 * area));
  return mask.foreground_count() >= needed;
}

double column_mass_center(const cv::Mat1f& grid) {
  double moment = 0.0;
  const double mass = column_mass(grid, &moment);
  if (mass <= 0.0) throw InvalidInput("column_mass_center: grid has no mass");
  return moment / mass;
}

cv::Mat1f align_silhouette(const RawMask& mask) {
  if (mask.empty() || mask.foreground_count() == 0) {
    throw InvalidInput("align_silhouette: mask has no foreground pixels");
  }
  std::vector<cv::Point> points;
  cv::findNonZero(mask.mat(), points);
  const cv::Rect box = cv::boundingRect(points);

  cv::Mat1f crop;
  mask.mat()(box).convertTo(crop, CV_32F);
  const double scale = static_cast<double>(kAlignedSize) / box.height;
  const int new_width = std::max(1, static_cast<int>(std::lround(box.width * scale)));
  cv::Mat1f body;
  if (box.height == kAlignedSize && new_width == box.width) {
    body = crop;
  } else {
    // Area averaging when shrinking so that thin structures never vanish.
    const int interpolation = scale < 1.0 ? cv::INTER_AREA : cv::INTER_LINEAR;
    cv::resize(crop, body, cv::Size(new_width, kAlignedSize), 0, 0, interpolation);
  }
  cv::min(body, 1.0f, body);
  cv::max(body, 0.0f, body);

  const double target = kAlignedSize / 2.0;
  const double shift0 = target - column_mass_center(body);
  auto error_at = [&](double shift, cv::Mat1f* out) {
    cv::Mat1f placed = translate_columns(body, shift, kAlignedSize);
    double moment = 0.0;
    const double mass = column_mass(placed, &moment);
    if (out) *out = placed;
    if (mass <= 0.0) return shift < target ? -target : target;
    return moment / mass - target;
  };

  cv::Mat1f result;
  if (std::abs(error_at(shift0, &result)) <= 0.25) return result;

  // Truncated silhouette: the visible mass center moves monotonically enough
  // with the shift for bisection between the two "sliver visible" extremes.
  double lo = -(body.cols - 1) + 0.5;
  double hi = kAlignedSize - 1.5;
  for (int iter = 0; iter < 64; ++iter) {
    const double mid = 0.5 * (lo + hi);
    const double err = error_at(mid, nullptr);
    if (err < 0.0) lo = mid; else hi = mid;
  }
  error_at(0.5 * (lo + hi), &result);
  return result;
}

cv::Mat1f crop_silhouette(const cv::Mat1f& aligned) {
  if (aligned.rows != kAlignedSize || aligned.cols != kAlignedSize) {
    throw InvalidInput("crop_silhouette: expected a 64x64 grid, got " +
                       std::to_string(aligned.rows) + "x" + std::to_string(aligned.cols));
  }
  return aligned(cv::Rect(kSilhouetteCrop, 0, kSilhouetteWidth, kAlignedSize)).clone();
}

cv::Mat1f prepare_silhouette(const RawMask& mask) {
  return crop_silhouette(align_silhouette(mask));
}

AlignedMaskSet::AlignedMaskSet(std::vector<cv::Mat1f> silhouettes)
    : silhouettes_(std::move(silhouettes)) {
  if (silhouettes_.empty()) throw InvalidInput("AlignedMaskSet: K must be >= 1");
  for (const auto& s : silhouettes_) {
    if (s.rows != kAlignedSize || s.cols != kSilhouetteWidth) {
      throw ShapeError("AlignedMaskSet: every silhouette must be 64x44");
    }
  }
}

}  // namespace seqmasks
