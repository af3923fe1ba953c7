#include <gtest/gtest.h>

#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "seqmasks/dataset/synthetic.hpp"
#include "seqmasks/error.hpp"
#include "seqmasks/train/checkpoint.hpp"
#include "seqmasks/train/config.hpp"
#include "seqmasks/train/features.hpp"
#include "seqmasks/train/trainer.hpp"
#include "support.hpp"

using namespace seqmasks;
using testing_support::TempDir;
namespace fs = std::filesystem;

namespace {

struct Corpus {
  SyntheticCorpus corpus;
  DatasetIndex filtered;
};

Corpus small_corpus(int ids = 4, int seqs = 2, int test_ids = 0) {
  SyntheticOptions o;
  o.identities = ids;
  o.sequences_per_identity = seqs;
  o.test_identities = test_ids;
  Corpus c{make_synthetic_corpus(o), {}};
  c.filtered = filter_corpus(c.corpus.index, c.corpus.loader);
  return c;
}

TrainConfig small_config(const fs::path& out) {
  TrainConfig c;
  c.epochs = 1;
  c.steps_per_epoch = 2;
  c.batch = BatchShape{2, 2, 4, 4, false};
  c.augment.frame_height = 128;
  c.augment.frame_width = 64;
  c.augment.mask_height = 8;
  c.augment.mask_width = 4;
  c.model.appearance.backbone.channels = 16;
  c.model.appearance.bottleneck_mid = 32;
  c.model.gait.channels = {8, 16, 32};
  c.output_dir = out.string();
  c.log_every = 1000;
  return c;
}

std::vector<torch::Tensor> snapshot(torch::nn::Module& m) {
  std::vector<torch::Tensor> out;
  for (const auto& p : m.parameters()) out.push_back(p.detach().clone());
  return out;
}

bool same_parameters(const std::vector<torch::Tensor>& a, torch::nn::Module& m) {
  const auto b = m.parameters();
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!torch::equal(a[i], b[i])) return false;
  return true;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// CSV without the trailing wall_time column.
std::vector<std::string> log_without_time(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> rows;
  for (std::string line; std::getline(in, line);) rows.push_back(line.substr(0, line.rfind(',')));
  return rows;
}

ExtractOptions extract_options(const TrainConfig& c, int chunk = 32) {
  ExtractOptions o;
  o.chunk = chunk;
  o.geometry = c.augment;
  return o;
}

bool embeddings_equal(const Embeddings& a, const Embeddings& b) {
  if (a.size() != b.size() || a.dim() != b.dim()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto x = a.row(i), y = b.row(i);
    if (!std::equal(x.begin(), x.end(), y.begin())) return false;
  }
  return true;
}

}  // namespace

TEST(Config, JsonRoundTripAndStrictness) {
  TempDir dir;
  auto c = small_config(dir.path());
  c.model.variant = Variant::kGGFusion;
  c.loss.lambda_gait = 0.5;
  const auto j = config_to_json(c);
  const auto back = config_from_json(j);
  EXPECT_EQ(config_to_json(back), j);

  auto unknown = j;
  unknown["model"]["dropout"] = 0.5;
  EXPECT_THROW(config_from_json(unknown), ConfigError);
  auto top = j;
  top["colour"] = "red";
  EXPECT_THROW(config_from_json(top), ConfigError);
  auto typed = j;
  typed["epochs"] = "ten";
  EXPECT_THROW(config_from_json(typed), ConfigError);
  auto version = j;
  version["spec_version"] = 2;
  EXPECT_THROW(config_from_json(version), ConfigError);
}

TEST(Config, ValidationRules) {
  TempDir dir;
  auto c = small_config(dir.path());
  EXPECT_NO_THROW(c.validate());
  auto p1 = c;
  p1.batch.identities = 1;
  p1.batch.sequences = 4;
  EXPECT_THROW(p1.validate(), ConfigError);
  auto tiny = c;
  tiny.batch = BatchShape{2, 1, 4, 4, false};
  EXPECT_THROW(tiny.validate(), ConfigError);
  auto odd = c;
  odd.augment.frame_height = 120;
  EXPECT_THROW(odd.validate(), ConfigError);
  auto ft = c;
  ft.regime = Regime::kFinetune;
  EXPECT_THROW(ft.validate(), ConfigError);
  ft.appearance_checkpoint = "a.pt";
  ft.gait_checkpoint = "g.pt";
  EXPECT_NO_THROW(ft.validate());
  auto thr = c;
  thr.filter.threshold = 1.1;
  EXPECT_THROW(thr.validate(), ConfigError);
}

TEST(Config, MissingFileNamesPath) {
  try {
    load_config("/nonexistent/dir/train.json");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/dir/train.json"), std::string::npos);
  }
}

TEST(Config, HashTracksArchitectureOnly) {
  ModelOptions a;
  const auto h = config_hash(a);
  EXPECT_EQ(h, config_hash(a));
  EXPECT_EQ(h.size(), 16u);
  ModelOptions weights = a;
  weights.appearance.backbone.weights_path = "/some/file.pt";
  EXPECT_EQ(config_hash(weights), h);
  ModelOptions variant = a;
  variant.variant = Variant::kGGConcat;
  EXPECT_NE(config_hash(variant), h);
  ModelOptions classes = a;
  classes.num_classes = 7;
  EXPECT_NE(config_hash(classes), h);
}

TEST(LabelMap, DenseSortedIndices) {
  const auto c = small_corpus(5, 2, 2);
  LabelMap labels(c.filtered);
  EXPECT_EQ(labels.classes(), 3);
  const auto ids = c.filtered.identities(Split::kTrain);
  auto mapped = labels.map(torch::tensor({ids[2], ids[0], ids[1]}, torch::kInt64));
  EXPECT_TRUE(torch::equal(mapped, torch::tensor({2, 0, 1}, torch::kInt64)));
  EXPECT_THROW(labels.map(torch::tensor({999}, torch::kInt64)), InvalidInput);
}

TEST(Trainer, LearningRateSchedule) {
  TempDir dir;
  const auto c = small_corpus();
  auto cfg = small_config(dir.path());
  cfg.epochs = 10;
  Trainer t(cfg, c.filtered, c.corpus.loader);
  EXPECT_DOUBLE_EQ(t.lr_at(0), 3e-4);
  EXPECT_DOUBLE_EQ(t.lr_at(5), 3e-4);
  EXPECT_NEAR(t.lr_at(6), 3e-5, 1e-18);
  EXPECT_NEAR(t.lr_at(7), 3e-5, 1e-18);
  EXPECT_NEAR(t.lr_at(8), 3e-6, 1e-18);
  EXPECT_FALSE(t.backbone_pretrained());
}

TEST(Trainer, ZeroWeightsLeaveParametersUnchanged) {
  TempDir dir;
  const auto c = small_corpus();
  auto cfg = small_config(dir.path());
  cfg.loss.lambda_fusion = cfg.loss.lambda_appearance = cfg.loss.lambda_gait = 0.0;
  Trainer t(cfg, c.filtered, c.corpus.loader);
  const auto before = snapshot(*t.model());
  const auto r1 = t.step();
  t.step();
  EXPECT_TRUE(same_parameters(before, *t.model()));
  EXPECT_EQ(r1.losses.back(), 0.0);
  EXPECT_GT(r1.losses[0] + r1.losses[1], 0.0);
}

TEST(Trainer, StepChangesParameters) {
  TempDir dir;
  const auto c = small_corpus();
  Trainer t(small_config(dir.path()), c.filtered, c.corpus.loader);
  const auto before = snapshot(*t.model());
  const auto r = t.step();
  EXPECT_FALSE(same_parameters(before, *t.model()));
  EXPECT_TRUE(std::isfinite(r.losses.back()));
  EXPECT_EQ(r.step, 1);
}

TEST(Trainer, SeededRunsAreBitIdentical) {
  TempDir a, b;
  const auto c = small_corpus();
  auto ca = small_config(a.path());
  auto cb = small_config(b.path());
  ca.steps_per_epoch = cb.steps_per_epoch = 3;
  Trainer ta(ca, c.filtered, c.corpus.loader);
  ta.run();
  Trainer tb(cb, c.filtered, c.corpus.loader);
  tb.run();
  const auto la = log_without_time(a / "train_log.csv");
  EXPECT_EQ(la.size(), 4u);
  EXPECT_EQ(la, log_without_time(b / "train_log.csv"));
  const auto pb = tb.model()->parameters();
  const auto pa = ta.model()->parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_TRUE(torch::equal(pa[i], pb[i]));
}

TEST(Trainer, RunWritesLogCheckpointsAndConfig) {
  TempDir dir;
  const auto c = small_corpus();
  auto cfg = small_config(dir.path());
  cfg.epochs = 2;
  Trainer t(cfg, c.filtered, c.corpus.loader);
  const auto result = t.run();
  EXPECT_EQ(result.steps, 4);
  ASSERT_EQ(result.checkpoints.size(), 2u);
  EXPECT_TRUE(fs::exists(dir / "checkpoints/epoch_001.pt"));
  EXPECT_TRUE(fs::exists(dir / "checkpoints/epoch_002.optim.pt"));
  EXPECT_TRUE(fs::exists(dir / "config.json"));
  std::ifstream log(dir / "train_log.csv");
  std::string header;
  std::getline(log, header);
  EXPECT_EQ(header.rfind("step,epoch,triplet_hard_global", 0), 0u);
  EXPECT_NE(header.find(",L_total,lr,wall_time"), std::string::npos);
  const auto m = read_checkpoint_manifest(result.checkpoints[1]);
  EXPECT_EQ(m.epoch, 2);
  EXPECT_EQ(m.regime, "end2end");
  EXPECT_EQ(m.config_hash, config_hash(t.model()->options()));
  EXPECT_TRUE(m.metrics.contains("L_total"));
}

TEST(Trainer, ResumeContinuesBitIdentically) {
  TempDir straight, split;
  const auto c = small_corpus();
  auto cs = small_config(straight.path());
  cs.epochs = 2;
  Trainer full(cs, c.filtered, c.corpus.loader);
  full.run();

  auto c1 = small_config(split.path());
  c1.epochs = 2;
  {
    auto first = c1;
    first.epochs = 1;
    Trainer t(first, c.filtered, c.corpus.loader);
    t.run();
  }
  Trainer resumed(c1, c.filtered, c.corpus.loader);
  resumed.resume(split / "checkpoints/epoch_001.pt");
  EXPECT_EQ(resumed.epoch(), 1);
  resumed.run();
  const auto pa = full.model()->parameters();
  const auto pb = resumed.model()->parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_TRUE(torch::equal(pa[i], pb[i])) << i;
}

TEST(Trainer, NonFiniteLossAbortsWithDump) {
  TempDir dir;
  const auto c = small_corpus();
  Trainer t(small_config(dir.path()), c.filtered, c.corpus.loader);
  {
    torch::NoGradGuard guard;
    t.model()->ffm->fc1->weight.fill_(std::numeric_limits<float>::quiet_NaN());
  }
  EXPECT_THROW(t.step(), RuntimeFailure);
  ASSERT_TRUE(fs::exists(dir / "nonfinite_batch.json"));
  const auto dump = nlohmann::json::parse(read_file(dir / "nonfinite_batch.json"));
  EXPECT_EQ(dump.at("keys").size(), 4u);
}

TEST(Trainer, TooFewIdentitiesIsConfigError) {
  TempDir dir;
  const auto c = small_corpus(3, 2, 2);
  auto cfg = small_config(dir.path());
  EXPECT_THROW(Trainer(cfg, c.filtered, c.corpus.loader), ConfigError);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  TempDir dir;
  const auto c = small_corpus(4, 2);
  auto cfg = small_config(dir.path());
  Trainer t(cfg, c.filtered, c.corpus.loader);
  t.step();
  const auto path = dir / "model.pt";
  save_checkpoint(path, *t.model(), make_manifest(*t.model(), Regime::kEnd2End, 1, cfg.augment));
  auto restored = model_from_checkpoint(path);
  const auto opts = extract_options(cfg);
  const auto a = extract_features(*t.model(), c.filtered, c.corpus.loader, opts);
  const auto b = extract_features(*restored, c.filtered, c.corpus.loader, opts);
  EXPECT_EQ(a.size(), 8u);
  EXPECT_TRUE(embeddings_equal(a, b));
  const auto m = read_checkpoint_manifest(path);
  EXPECT_EQ(manifest_geometry(m).frame_height, 128);
  EXPECT_EQ(m.components.size(), t.model()->groups().size());
}

TEST(Checkpoint, DimensionMismatchNamesComponent) {
  TempDir dir;
  ModelOptions a;
  a.appearance.backbone.channels = 16;
  a.num_classes = 3;
  SeqMasksModel source(a);
  const auto path = dir / "a.pt";
  save_checkpoint(path, *source, make_manifest(*source, Regime::kEnd2End, 1, AugmentOptions{}));
  ModelOptions b = a;
  b.gait.channels = {16, 32, 128};
  SeqMasksModel target(b);
  try {
    load_checkpoint(path, *target);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("gait_main"), std::string::npos) << e.what();
  }
  ModelOptions d = a;
  d.num_classes = 5;
  SeqMasksModel classes(d);
  try {
    load_checkpoint(path, *classes);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("classifiers"), std::string::npos) << e.what();
  }
  EXPECT_NO_THROW(load_checkpoint(path, *classes, {"backbone", "gait_main"}));
  EXPECT_THROW(load_checkpoint(path, *classes, {"nonsense"}), ConfigError);
}

TEST(Checkpoint, ResumeWithMismatchedDimsIsConfigError) {
  TempDir dir, other;
  const auto c = small_corpus();
  {
    Trainer t(small_config(dir.path()), c.filtered, c.corpus.loader);
    t.run();
  }
  auto wide = small_config(other.path());
  wide.model.appearance.embedding_dim = 256;
  Trainer t(wide, c.filtered, c.corpus.loader);
  try {
    t.resume(dir / "checkpoints/epoch_001.pt");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("global_bottleneck"), std::string::npos) << e.what();
  }
}

TEST(Checkpoint, FinetuneAndEnd2EndManifestsDifferOnlyInRegime) {
  TempDir e2e, ft;
  const auto c = small_corpus();
  auto ce = small_config(e2e.path());
  Trainer te(ce, c.filtered, c.corpus.loader);
  const auto pe = te.run().checkpoints.back();

  auto cf = small_config(ft.path());
  cf.regime = Regime::kFinetune;
  cf.appearance_checkpoint = pe.string();
  cf.gait_checkpoint = pe.string();
  Trainer tf(cf, c.filtered, c.corpus.loader);
  EXPECT_TRUE(tf.backbone_pretrained());
  // Restored groups start from the end2end weights.
  const auto a = te.model()->appearance->global_bottleneck->fc1->weight;
  EXPECT_TRUE(torch::equal(tf.model()->appearance->global_bottleneck->fc1->weight, a));
  EXPECT_TRUE(torch::equal(tf.model()->gait->heads->main_fc->weight, te.model()->gait->heads->main_fc->weight));
  const auto pf = tf.run().checkpoints.back();

  auto je = read_checkpoint_manifest(pe).to_json();
  auto jf = read_checkpoint_manifest(pf).to_json();
  EXPECT_EQ(je.at("regime"), "end2end");
  EXPECT_EQ(jf.at("regime"), "finetune");
  std::vector<std::string> ke, kf;
  for (auto& [k, _] : je.at("metrics").items()) ke.push_back(k);
  for (auto& [k, _] : jf.at("metrics").items()) kf.push_back(k);
  EXPECT_EQ(ke, kf);
  for (auto* j : {&je, &jf}) {
    j->erase("regime");
    j->erase("metrics");
  }
  EXPECT_EQ(je, jf);
}

TEST(Features, EvenSubset) {
  std::vector<int> pool(10);
  std::iota(pool.begin(), pool.end(), 100);
  EXPECT_EQ(even_subset(pool, 20), pool);
  EXPECT_EQ(even_subset(pool, 5), (std::vector<int>{100, 102, 104, 106, 108}));
  EXPECT_EQ(even_subset(pool, 3), (std::vector<int>{100, 103, 106}));
  EXPECT_THROW(even_subset(pool, 0), InvalidInput);
}

TEST(Features, ChunkingMatchesSingleChunk) {
  const auto c = small_corpus(2, 1);
  auto cfg = small_config("unused");
  ModelOptions o = cfg.model;
  torch::manual_seed(3);
  SeqMasksModel model(o);
  model->eval();
  auto entry = c.corpus.index.entries()[0];
  entry.frame_count = 8;
  entry.effective_frames.clear();
  const auto whole = sequence_descriptor(*model, entry, c.corpus.loader, extract_options(cfg, 8));
  const auto halves = sequence_descriptor(*model, entry, c.corpus.loader, extract_options(cfg, 4));
  const auto odd = sequence_descriptor(*model, entry, c.corpus.loader, extract_options(cfg, 3));
  EXPECT_LT(testing_support::max_abs_diff(whole, halves), 1e-5);
  EXPECT_LT(testing_support::max_abs_diff(whole, odd), 1e-5);
  EXPECT_EQ(whole.sizes(), (std::vector<int64_t>{1, 1536}));
}

TEST(Features, ExtractionIsDeterministicAndCountsSkips) {
  const auto c = small_corpus(4, 2, 2);
  auto cfg = small_config("unused");
  torch::manual_seed(4);
  SeqMasksModel model(cfg.model);
  auto entries = c.filtered.entries();
  SequenceEntry ghost = entries.back();
  ghost.key = "ghost/C1T9999";
  entries.push_back(ghost);
  DatasetIndex index(entries);
  SkipReport skips;
  const auto opts = extract_options(cfg);
  const auto a = extract_features(*model, index, c.corpus.loader, opts, Split::kGallery, &skips);
  SkipReport again;
  const auto b = extract_features(*model, index, c.corpus.loader, opts, Split::kGallery, &again);
  EXPECT_TRUE(embeddings_equal(a, b));
  EXPECT_THROW(extract_features(*model, index, c.corpus.loader, opts, Split::kGallery), DataError);
  EXPECT_EQ(static_cast<std::int64_t>(a.size()), index.counts(Split::kGallery).sequences - 1);
  ASSERT_EQ(skips.size(), 1u);
  EXPECT_EQ(skips.records[0].key, "ghost/C1T9999");
}

TEST(Features, SameSequenceTwiceGivesIdenticalVectors) {
  const auto c = small_corpus(2, 1);
  auto cfg = small_config("unused");
  torch::manual_seed(5);
  SeqMasksModel model(cfg.model);
  model->eval();
  const auto& e = c.filtered.entries()[0];
  const auto x = sequence_descriptor(*model, e, c.corpus.loader, extract_options(cfg));
  const auto y = sequence_descriptor(*model, e, c.corpus.loader, extract_options(cfg));
  EXPECT_TRUE(torch::equal(x, y));
}

TEST(Features, EmbeddingStoreRoundTrip) {
  TempDir dir;
  Embeddings e(3);
  SequenceMeta m;
  m.key = "0001/C1T0001";
  m.identity = 1;
  m.camera = 1;
  m.split = Split::kQuery;
  e.add(m, std::vector<float>{0.1f, -2.5f, 3e-8f});
  SequenceMeta n;
  n.key = "001/nm-05/090";
  n.identity = 1;
  n.view = 90;
  n.condition = Condition::kNM;
  n.seq_number = 5;
  n.split = Split::kGallery;
  e.add(n, std::vector<float>{1.f, 2.f, 3.f});
  save_embeddings(e, dir / "features.jsonl");
  const auto back = load_embeddings(dir / "features.jsonl");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_TRUE(embeddings_equal(e, back));
  EXPECT_EQ(back.meta(1).view, 90);
  EXPECT_EQ(back.meta(1).condition, Condition::kNM);
  EXPECT_FALSE(back.meta(0).view.has_value());
  const auto problem = split_problem(back);
  EXPECT_EQ(problem.query.size(), 1u);
  EXPECT_EQ(problem.gallery.size(), 1u);
}

TEST(Trainer, LossDecreasesOnToyDataInMostSeeds) {
  // Mean L_total over the last ten of 50 steps below the first ten.
  SyntheticOptions o;
  o.identities = 8;
  o.sequences_per_identity = 4;
  auto corpus = make_synthetic_corpus(o);
  const auto filtered = filter_corpus(corpus.index, corpus.loader);
  int decreased = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    TempDir dir;
    auto cfg = small_config(dir.path());
    cfg.seed = seed;
    cfg.batch = BatchShape{4, 2, 4, 4, false};
    Trainer t(cfg, filtered, corpus.loader);
    double head = 0, tail = 0;
    for (int s = 0; s < 50; ++s) {
      const double total = t.step().losses.back();
      if (s < 10) head += total;
      if (s >= 40) tail += total;
    }
    decreased += tail < head ? 1 : 0;
    std::cout << "seed " << seed << ": first-10 mean " << head / 10 << ", last-10 mean " << tail / 10 << '\n';
  }
  EXPECT_GE(decreased, 5) << "need >= 90% of 5 seeds";
}
