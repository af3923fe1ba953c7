#ifndef SEQMASKS_MODEL_FUSION_HPP_
#define SEQMASKS_MODEL_FUSION_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "seqmasks/model/appearance.hpp"
#include "seqmasks/model/gait.hpp"

namespace seqmasks {

/// Channel gate with residual: y = x + x * sigmoid(fc2(relu(fc1(x)))).
class FeatureFusionImpl : public torch::nn::Module {
 public:
  explicit FeatureFusionImpl(std::int64_t dim, std::int64_t ratio = 8);
  torch::Tensor forward(const torch::Tensor& x);
  /// The sigmoid gate alone, in (0, 1).
  torch::Tensor gate(const torch::Tensor& x);

  torch::nn::Linear fc1{nullptr}, fc2{nullptr};
};
TORCH_MODULE(FeatureFusion);

/// Branch/fusion combinations: global+gait or global+foreground+gait, with or without FFM.
enum class Variant { kGGConcat, kGGFusion, kAGConcat, kAGFusion };

Variant parse_variant(const std::string& text);
std::string to_string(Variant variant);
bool uses_foreground(Variant variant);
bool uses_fusion(Variant variant);

struct ModelOptions {
  AppearanceOptions appearance;
  GaitOptions gait;
  Variant variant = Variant::kAGFusion;
  std::int64_t fusion_ratio = 8;
  std::int64_t num_classes = 0;  // 0: no classifiers (inference only)

  std::int64_t descriptor_dim() const;
};

enum class Mode { kTrain, kEval };

/// Per-sequence embeddings for a batch (row i = sequence i).
struct FeatureBundle {
  torch::Tensor global_pre;       // N x C
  torch::Tensor global;           // N x 512
  torch::Tensor foreground_pre;   // N x C  (AG variants)
  torch::Tensor foreground;       // N x 512 (AG variants)
  torch::Tensor gait_main;        // N x 256
  torch::Tensor gait_mgp;         // N x 256
  torch::Tensor gait;             // N x 512
  torch::Tensor concat;           // [global | foreground | gait]
  torch::Tensor fused;            // FFM(concat), or concat for *Concat variants
  // Train mode only.
  torch::Tensor logits_global, logits_foreground, logits_gait_main, logits_gait_mgp;

  /// Retrieval descriptor.
  const torch::Tensor& descriptor() const { return fused; }
};

/// One linear softmax classifier per supervised feature.
class ClassifiersImpl : public torch::nn::Module {
 public:
  ClassifiersImpl(std::int64_t num_classes, std::int64_t appearance_dim, std::int64_t gait_dim,
                  bool foreground);

  torch::nn::Linear global{nullptr}, foreground{nullptr}, gait_main{nullptr}, gait_mgp{nullptr};
};
TORCH_MODULE(Classifiers);

/// Appearance module + gait module + fusion, end to end.
class SeqMasksModelImpl : public torch::nn::Module {
 public:
  explicit SeqMasksModelImpl(const ModelOptions& options);

  /// frames N x T x 3 x H x W, masks N x T x H/16 x W/16, silhouettes N x K x 64 x 44.
  FeatureBundle forward(const torch::Tensor& frames, const torch::Tensor& masks,
                        const torch::Tensor& silhouettes, Mode mode);

  /// Combines branch outputs; shared by forward and chunked feature extraction.
  FeatureBundle assemble(const AppearanceFeatures& appearance, const GaitFeatures& gait,
                         Mode mode);

  const ModelOptions& options() const { return options_; }

  /// Named parameter groups as stored in checkpoints. Absent groups are skipped.
  std::vector<std::pair<std::string, std::shared_ptr<torch::nn::Module>>> groups();

  AppearanceNet appearance{nullptr};
  GaitNet gait{nullptr};
  FeatureFusion ffm{nullptr};
  Classifiers classifiers{nullptr};

 private:
  ModelOptions options_;
};
TORCH_MODULE(SeqMasksModel);

}  // namespace seqmasks

#endif  // SEQMASKS_MODEL_FUSION_HPP_
