#include "seqmasks/dataset/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <set>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "seqmasks/dataset/build.hpp"
#include "seqmasks/error.hpp"
#include "seqmasks/rng.hpp"

namespace fs = std::filesystem;

namespace seqmasks {
namespace {

struct Style {
  cv::Vec3b shirt;
  cv::Vec3b stripe;
  cv::Vec3b pants;
  int stripe_period = 4;
  double width_factor = 1.0;
  double gait_period = 8.0;
  double swing = 0.45;  // radians
};

struct Pose {
  double scale = 1.0;
  double center_x = 0.0;
  double phase = 0.0;
  double t = 0.0;
  double view_swing = 1.0;   // visible fraction of the leg swing
  double view_width = 1.0;   // torso widening for frontal views
  std::optional<Condition> condition;
};

Style identity_style(std::int64_t identity) {
  Rng rng(0x5eed0000ULL + static_cast<std::uint64_t>(identity) * 7919ULL);
  std::uniform_int_distribution<int> channel(20, 235);
  Style s;
  // Spread hues so neighbouring identities differ clearly.
  cv::Mat3b hsv(1, 3);
  const int hue = static_cast<int>((identity * 47) % 180);
  hsv(0, 0) = cv::Vec3b(static_cast<uchar>(hue), 200, 220);
  hsv(0, 1) = cv::Vec3b(static_cast<uchar>((hue + 90) % 180), 160, 120 + channel(rng) / 3);
  hsv(0, 2) = cv::Vec3b(static_cast<uchar>((hue * 3 + 30) % 180), 120, 60 + channel(rng) / 2);
  cv::Mat3b rgb;
  cv::cvtColor(hsv, rgb, cv::COLOR_HSV2RGB);
  s.shirt = rgb(0, 0);
  s.stripe = rgb(0, 1);
  s.pants = rgb(0, 2);
  s.stripe_period = 3 + static_cast<int>(identity % 6);
  s.width_factor = 0.9 + 0.08 * static_cast<double>(identity % 5);
  s.gait_period = 6.0 + static_cast<double>((identity * 3) % 7);
  s.swing = 0.3 + 0.05 * static_cast<double>(identity % 4);
  return s;
}

// Renders body parts into separate 0/255 layers.
void draw_figure(int height, const Style& style, const Pose& pose, cv::Mat1b& upper,
                 cv::Mat1b& lower) {
  const double h = 0.9 * height * pose.scale;
  const double angle = 2.0 * std::numbers::pi * pose.t / style.gait_period + pose.phase;
  const double swing = style.swing * std::sin(angle) * pose.view_swing;
  const double bob = 0.01 * h * std::cos(2.0 * angle);
  const double y0 = (height - h) / 2.0 + bob;
  const double cx = pose.center_x;
  auto pt = [](double x, double y) { return cv::Point(cvRound(x), cvRound(y)); };

  double torso_w = 0.11 * h * style.width_factor * pose.view_width;
  double torso_h = 0.2 * h;
  double torso_y = y0 + 0.35 * h;
  if (pose.condition == Condition::kCL) {
    torso_w *= 1.35;
    torso_h *= 1.2;
    torso_y += 0.04 * h;
  }
  cv::circle(upper, pt(cx, y0 + 0.08 * h), std::max(1, cvRound(0.08 * h)), 255, cv::FILLED);
  cv::ellipse(upper, pt(cx, torso_y), cv::Size(std::max(1, cvRound(torso_w)), cvRound(torso_h)),
              0, 0, 360, 255, cv::FILLED);
  const double arm = 0.35 * h;
  const int arm_thick = std::max(1, cvRound(0.05 * h));
  for (double sign : {1.0, -1.0}) {
    const double a = -sign * swing * 0.8;
    cv::line(upper, pt(cx, y0 + 0.22 * h),
             pt(cx + std::sin(a) * arm, y0 + 0.22 * h + std::cos(a) * arm), 255, arm_thick);
  }
  if (pose.condition == Condition::kBG) {
    cv::ellipse(upper, pt(cx + torso_w + 0.05 * h, y0 + 0.45 * h),
                cv::Size(std::max(1, cvRound(0.07 * h)), std::max(1, cvRound(0.09 * h))), 0, 0,
                360, 255, cv::FILLED);
  }
  const double leg = 0.45 * h;
  const int leg_thick = std::max(1, cvRound(0.07 * h));
  for (double sign : {1.0, -1.0}) {
    const double a = sign * swing;
    cv::line(lower, pt(cx, y0 + 0.52 * h),
             pt(cx + std::sin(a) * leg, y0 + 0.52 * h + std::cos(a) * leg), 255, leg_thick);
  }
}

void render(int height, int width, const Style& style, const Pose& pose, int background,
            Rng& rng, cv::Mat& frame, RawMask& mask) {
  cv::Mat1b upper = cv::Mat1b::zeros(height, width);
  cv::Mat1b lower = cv::Mat1b::zeros(height, width);
  draw_figure(height, style, pose, upper, lower);

  frame = cv::Mat(height, width, CV_8UC3);
  std::uniform_int_distribution<int> noise(-12, 12);
  cv::Mat1b binary(height, width);
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      cv::Vec3b px;
      const bool top = upper(r, c) != 0;
      const bool bottom = lower(r, c) != 0;
      if (top) {
        px = ((r / style.stripe_period) % 2 == 0) ? style.shirt : style.stripe;
      } else if (bottom) {
        px = style.pants;
      } else {
        const int g = std::clamp(background + noise(rng), 0, 255);
        px = cv::Vec3b(static_cast<uchar>(g), static_cast<uchar>(g), static_cast<uchar>(g));
      }
      if (top || bottom) {
        for (int ch = 0; ch < 3; ++ch) {
          px[ch] = static_cast<uchar>(std::clamp(px[ch] + noise(rng) / 3, 0, 255));
        }
      }
      frame.at<cv::Vec3b>(r, c) = px;
      binary(r, c) = (top || bottom) ? 1 : 0;
    }
  }
  mask = RawMask(binary);
}

std::string casia_folder(Condition c, int seq) {
  char buf[16];
  const char* name = c == Condition::kNM ? "nm" : c == Condition::kBG ? "bg" : "cl";
  std::snprintf(buf, sizeof(buf), "%s-%02d", name, seq);
  return buf;
}

std::string padded(std::int64_t value, int width) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%0*lld", width, static_cast<long long>(value));
  return buf;
}

}  // namespace

std::string tracklet_name(int camera, int sequence) {
  return "C" + std::to_string(camera) + "T" + padded(sequence, 4);
}

SyntheticCorpus make_synthetic_corpus(const SyntheticOptions& options) {
  if (options.identities < 1 || options.sequences_per_identity < 1 || options.min_length < 1 ||
      options.max_length < options.min_length || options.cameras < 1) {
    throw InvalidInput("SyntheticOptions: invalid sizes");
  }
  if (!options.effective_counts.empty() &&
      options.effective_counts.size() !=
          static_cast<std::size_t>(options.identities) * options.sequences_per_identity) {
    throw InvalidInput("SyntheticOptions: effective_counts must cover every sequence");
  }
  Rng rng(options.seed);
  SyntheticCorpus corpus;
  std::vector<SequenceEntry> entries;
  const int first_test = options.identities - options.test_identities;
  for (int i = 0; i < options.identities; ++i) {
    const std::int64_t identity = i + 1;
    const Style style = identity_style(identity);
    for (int s = 0; s < options.sequences_per_identity; ++s) {
      const std::size_t row = static_cast<std::size_t>(i) * options.sequences_per_identity + s;
      int length = uniform_int(rng, options.min_length, options.max_length);
      std::vector<bool> effective(length, true);
      if (!options.effective_counts.empty()) {
        const int want = options.effective_counts[row];
        length = std::max(length, want);
        effective.assign(length, false);
        std::vector<int> order(length);
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        for (int k = 0; k < want; ++k) effective[order[k]] = true;
      }
      const int camera = s % options.cameras;
      SequenceEntry e;
      e.identity = identity;
      e.camera = camera;
      e.key = padded(identity, 4) + "/" + tracklet_name(camera, s);
      e.frame_count = length;
      if (i >= first_test) e.split = s == 0 ? Split::kQuery : Split::kGallery;

      SequenceSample sample;
      sample.identity = identity;
      sample.camera = camera;
      sample.split = e.split;
      Pose pose;
      pose.phase = std::uniform_real_distribution<double>(0, 2 * std::numbers::pi)(rng);
      const double start_x = options.width * std::uniform_real_distribution<double>(0.4, 0.6)(rng);
      const double drift = std::uniform_real_distribution<double>(-0.6, 0.6)(rng);
      const int background = uniform_int(rng, 70, 190);
      int n_effective = 0;
      for (int t = 0; t < length; ++t) {
        pose.t = t;
        pose.scale = effective[t] ? std::uniform_real_distribution<double>(0.92, 1.0)(rng) : 0.45;
        pose.center_x = std::clamp(start_x + drift * t, 0.3 * options.width, 0.7 * options.width);
        cv::Mat frame;
        RawMask mask;
        render(options.height, options.width, style, pose, background, rng, frame, mask);
        n_effective += is_effective(mask) ? 1 : 0;
        sample.frames.push_back(std::move(frame));
        sample.masks.push_back(std::move(mask));
      }
      corpus.effective_counts.push_back(n_effective);
      corpus.loader.add(e.key, std::move(sample));
      entries.push_back(std::move(e));
    }
  }
  corpus.index = DatasetIndex(std::move(entries));
  return corpus;
}

SyntheticCorpus make_synthetic_casia(const SyntheticCasiaOptions& options) {
  if (options.identities < 1 || options.length < 1) throw InvalidInput("invalid CASIA options");
  Rng rng(options.seed);
  SyntheticCorpus corpus;
  std::vector<SequenceEntry> entries;
  const std::pair<Condition, int> plan[] = {{Condition::kNM, 6}, {Condition::kBG, 2},
                                            {Condition::kCL, 2}};
  std::set<std::int64_t> ids;
  for (int i = 0; i < options.identities; ++i) {
    const std::int64_t identity = options.first_id + i;
    ids.insert(identity);
    const Style style = identity_style(identity);
    int slot = 0;
    for (const auto& [condition, count] : plan) {
      for (int seq = 1; seq <= count; ++seq) {
        for (int v = 0; v < kCasiaViews; ++v, ++slot) {
          if (slot >= kCasiaSequencesPerId - options.missing_per_identity) continue;
          const int view = v * 18;
          const double rad = view * std::numbers::pi / 180.0;
          SequenceEntry e;
          e.identity = identity;
          e.view = view;
          e.camera = view;
          e.condition = condition;
          e.seq_number = seq;
          e.key = padded(identity, 3) + "/" + casia_folder(condition, seq) + "/" + padded(view, 3);
          if (identity <= kCasiaTrainIds) {
            e.split = Split::kTrain;
          } else {
            e.split = (condition == Condition::kNM && seq <= 4) ? Split::kGallery : Split::kQuery;
          }
          e.frame_count = options.length;
          SequenceSample sample;
          sample.identity = identity;
          sample.camera = view;
          sample.view = view;
          sample.condition = condition;
          sample.split = e.split;
          Pose pose;
          pose.condition = condition;
          pose.view_swing = std::abs(std::sin(rad));
          pose.view_width = 1.0 + 0.3 * std::abs(std::cos(rad));
          pose.phase = std::uniform_real_distribution<double>(0, 2 * std::numbers::pi)(rng);
          for (int t = 0; t < options.length; ++t) {
            pose.t = t;
            pose.center_x = options.width / 2.0;
            cv::Mat frame;
            RawMask mask;
            render(options.height, options.width, style, pose, 0, rng, frame, mask);
            cv::Mat gray = mask.mat() * 255;
            cv::cvtColor(gray, frame, cv::COLOR_GRAY2RGB);
            sample.frames.push_back(frame);
            sample.masks.push_back(std::move(mask));
          }
          corpus.effective_counts.push_back(options.length);
          corpus.loader.add(e.key, std::move(sample));
          entries.push_back(std::move(e));
        }
      }
    }
  }
  corpus.index = DatasetIndex(std::move(entries),
                              static_cast<std::int64_t>(ids.size()) * kCasiaSequencesPerId);
  return corpus;
}

namespace {

void write_sample(const SequenceSample& sample, const fs::path& frame_dir,
                  const fs::path& mask_dir, const std::string& frame_ext) {
  fs::create_directories(frame_dir);
  fs::create_directories(mask_dir);
  for (std::size_t t = 0; t < sample.masks.size(); ++t) {
    const std::string stem = padded(static_cast<std::int64_t>(t), 4);
    cv::Mat bgr;
    cv::cvtColor(sample.frames[t], bgr, cv::COLOR_RGB2BGR);
    if (!cv::imwrite((frame_dir / (stem + frame_ext)).string(), bgr) ||
        !cv::imwrite((mask_dir / (stem + ".png")).string(), sample.masks[t].mat() * 255)) {
      throw DataError("failed to write sample under " + frame_dir.string());
    }
  }
}

}  // namespace

void write_normalized_layout(const SyntheticCorpus& corpus, const fs::path& root) {
  write_normalized_layout(corpus.index, corpus.loader, root);
}

void write_raw_layout(const SyntheticCorpus& corpus, const fs::path& frames_root,
                      const fs::path& masks_root) {
  for (const auto& e : corpus.index.entries()) {
    const fs::path rel = fs::path(to_string(e.split)) / e.key;
    write_sample(corpus.loader.sample(e.key), frames_root / rel, masks_root / rel, ".png");
  }
  fs::create_directories(frames_root);
  fs::create_directories(masks_root);
}

void write_casia_tree(const SyntheticCorpus& corpus, const fs::path& root) {
  fs::create_directories(root);
  for (const auto& e : corpus.index.entries()) {
    const auto& sample = corpus.loader.sample(e.key);
    const fs::path dir = root / e.key;
    fs::create_directories(dir);
    for (std::size_t t = 0; t < sample.masks.size(); ++t) {
      const auto name = padded(static_cast<std::int64_t>(t), 4) + ".png";
      if (!cv::imwrite((dir / name).string(), sample.masks[t].mat() * 255)) {
        throw DataError("failed to write " + (dir / name).string());
      }
    }
  }
}

}  // namespace seqmasks
