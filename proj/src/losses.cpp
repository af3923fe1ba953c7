#include "seqmasks/losses.hpp"

#include <cmath>
#include <limits>

#include "seqmasks/error.hpp"
#include "seqmasks/log.hpp"

namespace seqmasks {
namespace {

void check_batch(const torch::Tensor& embeddings, const torch::Tensor& labels) {
  if (embeddings.dim() != 2 || labels.dim() != 1 || labels.size(0) != embeddings.size(0)) {
    throw ShapeError("triplet losses expect N x D embeddings and N labels");
  }
}

struct Masks {
  torch::Tensor positive;  // same label, different index
  torch::Tensor negative;  // different label
};

Masks pair_masks(const torch::Tensor& labels) {
  auto same = labels.unsqueeze(0) == labels.unsqueeze(1);
  auto eye = torch::eye(labels.size(0), torch::TensorOptions().dtype(torch::kBool));
  return {same & ~eye, ~same};
}

}  // namespace

torch::Tensor pairwise_dist(const torch::Tensor& embeddings) {
  if (embeddings.dim() != 2) throw ShapeError("pairwise_dist expects N x D");
  auto diff = embeddings.unsqueeze(1) - embeddings.unsqueeze(0);
  auto squared = diff.pow(2).sum(2);
  auto zero = squared <= 0;
  auto safe = torch::where(zero, torch::ones_like(squared), squared);
  return torch::where(zero, torch::zeros_like(squared), safe.sqrt());
}

torch::Tensor batch_hard_triplet(const torch::Tensor& embeddings, const torch::Tensor& labels,
                                 double margin, TripletStats* stats) {
  check_batch(embeddings, labels);
  TripletStats local;
  TripletStats& st = stats ? *stats : local;
  const auto m = pair_masks(labels);
  auto has_pos = m.positive.any(1);
  auto has_neg = m.negative.any(1);
  st.skipped_anchors = (~has_pos).sum().item<std::int64_t>();
  if (!has_neg.any().item<bool>()) {
    st.no_negatives = true;
    log::warn() << "batch-hard triplet: single-class batch, loss defined as 0";
    return embeddings.sum() * 0.0;
  }
  if (st.skipped_anchors > 0) {
    log::debug() << "batch-hard triplet: " << st.skipped_anchors << " anchors without positives";
  }
  const auto inf = std::numeric_limits<double>::infinity();
  auto dist = pairwise_dist(embeddings);
  auto hardest_pos = std::get<0>(dist.masked_fill(~m.positive, -inf).max(1));
  auto hardest_neg = std::get<0>(dist.masked_fill(~m.negative, inf).min(1));
  auto valid = has_pos & has_neg;
  st.anchors = valid.sum().item<std::int64_t>();
  if (st.anchors == 0) return embeddings.sum() * 0.0;
  auto hinge = torch::relu(hardest_pos.index({valid}) - hardest_neg.index({valid}) + margin);
  st.active = (hinge > 0).sum().item<std::int64_t>();
  st.valid = st.anchors;
  return hinge.mean();
}

torch::Tensor batch_all_triplet(const torch::Tensor& embeddings, const torch::Tensor& labels,
                                double margin, TripletStats* stats) {
  check_batch(embeddings, labels);
  TripletStats local;
  TripletStats& st = stats ? *stats : local;
  const auto m = pair_masks(labels);
  st.skipped_anchors = (~m.positive.any(1)).sum().item<std::int64_t>();
  if (!m.negative.any().item<bool>()) {
    st.no_negatives = true;
    log::warn() << "batch-all triplet: single-class batch, loss defined as 0";
    return embeddings.sum() * 0.0;
  }
  auto dist = pairwise_dist(embeddings);
  // [a, p, n]
  auto valid = m.positive.unsqueeze(2) & m.negative.unsqueeze(1);
  auto raw = dist.unsqueeze(2) - dist.unsqueeze(1) + margin;
  auto hinge = torch::relu(raw) * valid.to(raw.scalar_type());
  st.valid = valid.sum().item<std::int64_t>();
  st.active = (hinge > 0).sum().item<std::int64_t>();
  st.anchors = (valid.flatten(1).any(1)).sum().item<std::int64_t>();
  const double denom = st.active > 0 ? static_cast<double>(st.active) : 1.0;
  return hinge.sum() / denom;
}

torch::Tensor lsr_softmax(const torch::Tensor& logits, const torch::Tensor& labels, double eps) {
  if (logits.dim() != 2 || labels.dim() != 1 || labels.size(0) != logits.size(0)) {
    throw ShapeError("lsr_softmax expects N x C logits and N labels");
  }
  const auto classes = logits.size(1);
  if (classes < 2) throw InvalidInput("lsr_softmax needs at least 2 classes");
  if (!(eps >= 0.0 && eps < 1.0)) throw InvalidInput("lsr_softmax: eps must lie in [0, 1)");
  if (labels.numel() > 0 &&
      (labels.min().item<std::int64_t>() < 0 || labels.max().item<std::int64_t>() >= classes)) {
    throw InvalidInput("lsr_softmax: label out of range [0, " + std::to_string(classes) + ")");
  }
  auto log_p = torch::log_softmax(logits, 1);
  auto targets = torch::full_like(log_p, eps / static_cast<double>(classes));
  targets.scatter_(1, labels.unsqueeze(1), 1.0 - eps + eps / static_cast<double>(classes));
  return -(targets * log_p).sum(1).mean();
}

void LossWeights::validate() const {
  for (double w : {lambda_fusion, lambda_appearance, lambda_gait, margin_hard, margin_all}) {
    if (!std::isfinite(w) || w < 0.0) throw ConfigError("loss weights and margins must be finite and >= 0");
  }
  if (!(lsr_eps >= 0.0 && lsr_eps < 1.0)) throw ConfigError("lsr_eps must lie in [0, 1)");
}

const std::array<const char*, LossBreakdown::kTerms>& LossBreakdown::columns() {
  static const std::array<const char*, kTerms> names{
      "triplet_hard_global",   "softmax_global",       "triplet_hard_fg",
      "softmax_fg",            "triplet_all_gait_main", "triplet_all_gait_mgp",
      "softmax_gait_main",     "softmax_gait_mgp",     "triplet_hard_fusion",
      "L_appearance",          "L_gait",               "L_fusion",
      "L_total"};
  return names;
}

std::array<double, LossBreakdown::kTerms> LossBreakdown::values() const {
  auto v = [](const torch::Tensor& t) { return t.defined() ? t.item<double>() : 0.0; };
  return {v(triplet_hard_global),   v(softmax_global),     v(triplet_hard_fg),
          v(softmax_fg),            v(triplet_all_gait_main), v(triplet_all_gait_mgp),
          v(softmax_gait_main),     v(softmax_gait_mgp),   v(triplet_hard_fusion),
          v(appearance),            v(gait),               v(fusion),
          v(total)};
}

LossBreakdown total_loss(const FeatureBundle& bundle, const torch::Tensor& labels,
                         const LossWeights& weights) {
  weights.validate();
  if (!bundle.logits_global.defined() || !bundle.logits_gait_main.defined() ||
      !bundle.logits_gait_mgp.defined() || !bundle.fused.defined()) {
    throw ConfigError("total_loss needs train-mode features and classifier logits");
  }
  if (bundle.foreground.defined() != bundle.logits_foreground.defined()) {
    throw ConfigError("foreground branch active but its classifier output is missing");
  }
  LossBreakdown b;

  // Terms whose weight is zero are evaluated for logging only, outside the graph.
  auto scoped = [](double weight, auto&& compute) {
    if (weight > 0.0) return compute();
    torch::NoGradGuard no_grad;
    return compute();
  };

  b.appearance = scoped(weights.lambda_appearance, [&] {
    b.triplet_hard_global = batch_hard_triplet(bundle.global, labels, weights.margin_hard);
    b.softmax_global = lsr_softmax(bundle.logits_global, labels, weights.lsr_eps);
    auto sum = b.triplet_hard_global + b.softmax_global;
    if (bundle.foreground.defined()) {
      b.triplet_hard_fg = batch_hard_triplet(bundle.foreground, labels, weights.margin_hard);
      b.softmax_fg = lsr_softmax(bundle.logits_foreground, labels, weights.lsr_eps);
      sum = sum + b.triplet_hard_fg + b.softmax_fg;
    }
    return sum;
  });
  b.gait = scoped(weights.lambda_gait, [&] {
    b.triplet_all_gait_main = batch_all_triplet(bundle.gait_main, labels, weights.margin_all);
    b.triplet_all_gait_mgp = batch_all_triplet(bundle.gait_mgp, labels, weights.margin_all);
    b.softmax_gait_main = lsr_softmax(bundle.logits_gait_main, labels, weights.lsr_eps);
    b.softmax_gait_mgp = lsr_softmax(bundle.logits_gait_mgp, labels, weights.lsr_eps);
    return b.triplet_all_gait_main + b.softmax_gait_main + b.triplet_all_gait_mgp +
           b.softmax_gait_mgp;
  });
  b.fusion = scoped(weights.lambda_fusion, [&] {
    b.triplet_hard_fusion = batch_hard_triplet(bundle.fused, labels, weights.margin_hard);
    return b.triplet_hard_fusion;
  });

  b.total = torch::zeros({}, bundle.fused.options());
  if (weights.lambda_fusion > 0.0) b.total = b.total + weights.lambda_fusion * b.fusion;
  if (weights.lambda_appearance > 0.0) b.total = b.total + weights.lambda_appearance * b.appearance;
  if (weights.lambda_gait > 0.0) b.total = b.total + weights.lambda_gait * b.gait;
  return b;
}

}  // namespace seqmasks
