#include <gtest/gtest.h>

#include "seqmasks/error.hpp"
#include "seqmasks/model/fusion.hpp"
#include "support.hpp"

using namespace seqmasks;
using testing_support::max_abs_diff;

namespace {

ModelOptions small_model(Variant variant, std::int64_t classes = 0) {
  ModelOptions o;
  o.appearance.backbone.channels = 16;
  o.appearance.bottleneck_mid = 32;
  o.variant = variant;
  o.num_classes = classes;
  return o;
}

struct Inputs {
  torch::Tensor frames, masks, silhouettes;
};

Inputs random_inputs(int n, int t = 2, int k = 3) {
  return {torch::randn({n, t, 3, 64, 32}), torch::rand({n, t, 4, 2}),
          (torch::rand({n, k, 64, 44}) > 0.5).to(torch::kFloat32)};
}

}  // namespace

TEST(FeatureFusion, ZeroParametersGiveOnePointFive) {
  FeatureFusion ffm(1536, 8);
  EXPECT_EQ(ffm->fc1->weight.size(0), 192);
  torch::NoGradGuard guard;
  for (auto& p : ffm->parameters()) p.zero_();
  auto x = torch::randn({3, 1536});
  EXPECT_LT(max_abs_diff(ffm->forward(x), 1.5 * x), 1e-6);
}

TEST(FeatureFusion, ZeroInputGivesZero) {
  torch::manual_seed(50);
  FeatureFusion ffm(1536, 8);
  torch::NoGradGuard guard;
  EXPECT_EQ(ffm->forward(torch::zeros({2, 1536})).abs().max().item<float>(), 0.f);
}

TEST(FeatureFusion, MatchesTwoMatrixOracle) {
  for (int seed = 0; seed < 5; ++seed) {
    torch::manual_seed(60 + seed);
    FeatureFusion ffm(64, 8);
    torch::NoGradGuard guard;
    auto x = torch::randn({4, 64});
    auto xd = x.to(torch::kFloat64);
    auto w1 = ffm->fc1->weight.to(torch::kFloat64), b1 = ffm->fc1->bias.to(torch::kFloat64);
    auto w2 = ffm->fc2->weight.to(torch::kFloat64), b2 = ffm->fc2->bias.to(torch::kFloat64);
    auto hidden = torch::clamp_min(xd.matmul(w1.t()) + b1, 0.0);
    auto g = 1.0 / (1.0 + torch::exp(-(hidden.matmul(w2.t()) + b2)));
    EXPECT_LT(max_abs_diff(ffm->forward(x), xd + xd * g), 1e-6);
  }
}

TEST(FeatureFusion, OutputIsInputTimesOnePlusGate) {
  torch::manual_seed(70);
  FeatureFusion ffm(1536, 8);
  torch::NoGradGuard guard;
  auto x = torch::randn({5, 1536});
  auto g = ffm->gate(x);
  EXPECT_GT(g.min().item<float>(), 0.f);
  EXPECT_LT(g.max().item<float>(), 1.f);
  EXPECT_LT(max_abs_diff(ffm->forward(x), x * (1 + g)), 1e-6);
  EXPECT_THROW(FeatureFusion(100, 8), ConfigError);
}

TEST(SeqMasksModel, DimensionContract) {
  torch::manual_seed(71);
  SeqMasksModel model(small_model(Variant::kAGFusion));
  model->eval();
  torch::NoGradGuard guard;
  const auto in = random_inputs(3);
  const auto b = model->forward(in.frames, in.masks, in.silhouettes, Mode::kEval);
  EXPECT_EQ(b.global.sizes(), (std::vector<int64_t>{3, 512}));
  EXPECT_EQ(b.foreground.sizes(), (std::vector<int64_t>{3, 512}));
  EXPECT_EQ(b.gait.sizes(), (std::vector<int64_t>{3, 512}));
  EXPECT_EQ(b.concat.sizes(), (std::vector<int64_t>{3, 1536}));
  EXPECT_EQ(b.fused.sizes(), (std::vector<int64_t>{3, 1536}));
  EXPECT_EQ(model->options().descriptor_dim(), 1536);
}

TEST(SeqMasksModel, ConcatLayout) {
  torch::manual_seed(72);
  SeqMasksModel model(small_model(Variant::kAGFusion));
  model->eval();
  torch::NoGradGuard guard;
  const auto in = random_inputs(2);
  const auto b = model->forward(in.frames, in.masks, in.silhouettes, Mode::kEval);
  EXPECT_TRUE(torch::equal(b.concat.slice(1, 0, 512), b.global));
  EXPECT_TRUE(torch::equal(b.concat.slice(1, 512, 1024), b.foreground));
  EXPECT_TRUE(torch::equal(b.concat.slice(1, 1024, 1536), b.gait));
  EXPECT_TRUE(torch::equal(b.fused, model->ffm->forward(b.concat)));
  EXPECT_TRUE(torch::equal(b.descriptor(), b.fused));
}

TEST(SeqMasksModel, DuplicatedSequenceGivesIdenticalBundles) {
  torch::manual_seed(73);
  SeqMasksModel model(small_model(Variant::kAGFusion));
  model->eval();
  torch::NoGradGuard guard;
  auto in = random_inputs(1);
  const auto b = model->forward(torch::cat({in.frames, in.frames}), torch::cat({in.masks, in.masks}),
                                torch::cat({in.silhouettes, in.silhouettes}), Mode::kEval);
  EXPECT_LT(max_abs_diff(b.fused[0], b.fused[1]), 1e-6);
}

TEST(SeqMasksModel, GaitPermutationLeavesFusedUnchanged) {
  torch::manual_seed(74);
  SeqMasksModel model(small_model(Variant::kAGFusion));
  model->eval();
  torch::NoGradGuard guard;
  auto in = random_inputs(2, 2, 5);
  const auto a = model->forward(in.frames, in.masks, in.silhouettes, Mode::kEval);
  const auto b = model->forward(in.frames, in.masks,
                                in.silhouettes.index_select(1, torch::tensor({4, 2, 0, 3, 1})), Mode::kEval);
  EXPECT_LT(max_abs_diff(a.fused, b.fused), 1e-6);
}

TEST(SeqMasksModel, VariantDimensionsAndFfmPresence) {
  const std::vector<std::tuple<Variant, int64_t, bool>> cases{
      {Variant::kGGConcat, 1024, false},
      {Variant::kGGFusion, 1024, true},
      {Variant::kAGConcat, 1536, false},
      {Variant::kAGFusion, 1536, true}};
  for (const auto& [variant, dim, has_ffm] : cases) {
    torch::manual_seed(75);
    SeqMasksModel model(small_model(variant, 4));
    model->eval();
    torch::NoGradGuard guard;
    const auto in = random_inputs(2);
    const auto b = model->forward(in.frames, in.masks, in.silhouettes, Mode::kTrain);
    EXPECT_EQ(b.fused.size(1), dim) << to_string(variant);
    EXPECT_EQ(static_cast<bool>(model->ffm), has_ffm);
    EXPECT_EQ(b.foreground.defined(), uses_foreground(variant));
    EXPECT_EQ(b.logits_foreground.defined(), uses_foreground(variant));
    EXPECT_EQ(b.logits_global.sizes(), (std::vector<int64_t>{2, 4}));
    EXPECT_EQ(b.logits_gait_main.sizes(), (std::vector<int64_t>{2, 4}));
    EXPECT_EQ(b.logits_gait_mgp.sizes(), (std::vector<int64_t>{2, 4}));
    if (!has_ffm) EXPECT_TRUE(torch::equal(b.fused, b.concat));
  }
}

TEST(SeqMasksModel, FfmChangesDescriptors) {
  torch::manual_seed(76);
  SeqMasksModel model(small_model(Variant::kAGFusion));
  model->eval();
  torch::NoGradGuard guard;
  const auto in = random_inputs(2);
  const auto b = model->forward(in.frames, in.masks, in.silhouettes, Mode::kEval);
  EXPECT_GT(max_abs_diff(b.fused, b.concat), 1e-4);
}

TEST(SeqMasksModel, TrainModeNeedsClassifiers) {
  SeqMasksModel model(small_model(Variant::kAGFusion));
  const auto in = random_inputs(1);
  EXPECT_THROW(model->forward(in.frames, in.masks, in.silhouettes, Mode::kTrain), ConfigError);
  EXPECT_THROW(model->forward(in.frames, in.masks, random_inputs(2).silhouettes, Mode::kEval), ShapeError);
}

TEST(SeqMasksModel, GroupsNameEveryParameterOnce) {
  SeqMasksModel model(small_model(Variant::kAGFusion, 3));
  std::set<const void*> seen;
  std::vector<std::string> names;
  for (const auto& [name, module] : model->groups()) {
    names.push_back(name);
    for (const auto& p : module->parameters()) EXPECT_TRUE(seen.insert(p.data_ptr()).second) << name;
  }
  EXPECT_EQ(names, (std::vector<std::string>{"backbone", "global_bottleneck", "fg_bottleneck", "gait_main",
                                             "gait_mgp", "gait_heads", "ffm", "classifiers"}));
  EXPECT_EQ(seen.size(), model->parameters().size());
}

TEST(Variant, ParseRoundTrip) {
  for (auto v : {Variant::kGGConcat, Variant::kGGFusion, Variant::kAGConcat, Variant::kAGFusion})
    EXPECT_EQ(parse_variant(to_string(v)), v);
  EXPECT_THROW(parse_variant("AGSum"), ConfigError);
}
