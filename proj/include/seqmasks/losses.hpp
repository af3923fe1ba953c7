#ifndef SEQMASKS_LOSSES_HPP_
#define SEQMASKS_LOSSES_HPP_

#include <array>
#include <cstdint>
#include <string>

#include <torch/torch.h>

#include "seqmasks/model/fusion.hpp"

namespace seqmasks {

/// Euclidean distance matrix of N x D embeddings. Exactly zero on the diagonal
/// and for identical rows; the square root has a zero subgradient at 0.
torch::Tensor pairwise_dist(const torch::Tensor& embeddings);

/// Mining diagnostics; a nonzero `skipped_anchors` or `no_negatives` is logged as a warning.
struct TripletStats {
  std::int64_t anchors = 0;          // anchors that contributed
  std::int64_t skipped_anchors = 0;  // no positive partner in the batch
  bool no_negatives = false;         // single-class batch
  std::int64_t active = 0;           // triplets with positive hinge
  std::int64_t valid = 0;            // all (a, p, n) triplets considered
};

/// Mean over anchors of relu(max_p d(a,p) - min_n d(a,n) + margin).
torch::Tensor batch_hard_triplet(const torch::Tensor& embeddings, const torch::Tensor& labels,
                                 double margin, TripletStats* stats = nullptr);

/// Sum of relu(d(a,p) - d(a,n) + margin) over all valid triplets divided by
/// the number of triplets with a positive hinge (0 when none are active).
torch::Tensor batch_all_triplet(const torch::Tensor& embeddings, const torch::Tensor& labels,
                                double margin, TripletStats* stats = nullptr);

/// Cross-entropy against label-smoothed targets: q_true = 1 - eps + eps/C, q_other = eps/C.
torch::Tensor lsr_softmax(const torch::Tensor& logits, const torch::Tensor& labels, double eps);

struct LossWeights {
  double lambda_fusion = 1.0;      // lambda1
  double lambda_appearance = 1.0;  // lambda2
  double lambda_gait = 1.0;        // lambda3
  double margin_hard = 0.3;
  double margin_all = 0.3;
  double lsr_eps = 0.1;

  void validate() const;
};

/// Per-term values plus the weighted totals. Tensors keep the autograd graph
/// for terms that enter `total` (weight > 0); the rest are detached.
struct LossBreakdown {
  static constexpr std::size_t kTerms = 13;
  static const std::array<const char*, kTerms>& columns();

  torch::Tensor triplet_hard_global, softmax_global;
  torch::Tensor triplet_hard_fg, softmax_fg;  // zero for GG variants
  torch::Tensor triplet_all_gait_main, triplet_all_gait_mgp;
  torch::Tensor softmax_gait_main, softmax_gait_mgp;
  torch::Tensor triplet_hard_fusion;
  torch::Tensor appearance, gait, fusion, total;

  /// Values in columns() order.
  std::array<double, kTerms> values() const;
};

/**
 * L_appearance = hard-triplet + softmax on the global and foreground vectors;
 * L_gait = batch-all triplet + softmax on each of the two gait heads, summed;
 * L_fusion = hard-triplet on the fused descriptor;
 * L_total = lambda1 L_fusion + lambda2 L_appearance + lambda3 L_gait.
 * `labels` are class indices into the classifier outputs.
 */
LossBreakdown total_loss(const FeatureBundle& bundle, const torch::Tensor& labels,
                         const LossWeights& weights);

}  // namespace seqmasks

#endif  // SEQMASKS_LOSSES_HPP_
