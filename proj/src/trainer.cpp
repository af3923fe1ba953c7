#include "seqmasks/train/trainer.hpp"

#include <cmath>
#include <iomanip>

#include "json.hpp"
#include "seqmasks/dataset/sampler.hpp"
#include "seqmasks/error.hpp"
#include "seqmasks/log.hpp"
#include "seqmasks/train/checkpoint.hpp"

namespace seqmasks {

using nlohmann::json;

LabelMap::LabelMap(const DatasetIndex& index) {
  for (auto id : index.identities(Split::kTrain)) {
    const auto next = static_cast<std::int64_t>(to_class_.size());
    to_class_.emplace(id, next);
  }
}

torch::Tensor LabelMap::map(const torch::Tensor& identities) const {
  auto flat = identities.to(torch::kInt64).contiguous();
  auto out = torch::empty_like(flat);
  const auto* src = flat.data_ptr<std::int64_t>();
  auto* dst = out.data_ptr<std::int64_t>();
  for (std::int64_t i = 0; i < flat.numel(); ++i) {
    auto it = to_class_.find(src[i]);
    if (it == to_class_.end()) {
      throw InvalidInput("identity " + std::to_string(src[i]) + " is not in the train split");
    }
    dst[i] = it->second;
  }
  return out;
}

namespace {

std::vector<torch::Tensor> parameters_of(const std::shared_ptr<torch::nn::Module>& module) {
  return module->parameters(/*recurse=*/true);
}

}  // namespace

Trainer::Trainer(TrainConfig config, DatasetIndex index, const SequenceLoader& loader)
    : config_(std::move(config)), index_(std::move(index)), loader_(loader), labels_(index_) {
  config_.validate();
  if (config_.deterministic) at::set_num_threads(1);
  torch::manual_seed(config_.seed);
  rng_.seed(config_.seed);

  if (labels_.classes() < config_.batch.identities) {
    throw ConfigError("train split has " + std::to_string(labels_.classes()) +
                      " identities but a batch needs " + std::to_string(config_.batch.identities));
  }
  ModelOptions options = config_.model;
  options.num_classes = labels_.classes();
  const auto& weights = options.appearance.backbone.weights_path;
  backbone_pretrained_ = !weights.empty() && std::filesystem::exists(weights);
  model_ = SeqMasksModel(options);

  if (config_.regime == Regime::kFinetune) {
    std::vector<std::string> appearance_groups{"backbone", "global_bottleneck"};
    if (model_->appearance->foreground_bottleneck) {
      const auto m = read_checkpoint_manifest(config_.appearance_checkpoint);
      if (m.dims.contains("fg_bottleneck")) {
        appearance_groups.push_back("fg_bottleneck");
      } else {
        log::warn() << "appearance checkpoint has no foreground bottleneck; it starts from scratch";
      }
    }
    load_checkpoint(config_.appearance_checkpoint, *model_, appearance_groups);
    load_checkpoint(config_.gait_checkpoint, *model_, {"gait_main", "gait_mgp", "gait_heads"});
    backbone_pretrained_ = true;
    log::info() << "finetune: restored appearance from " << config_.appearance_checkpoint
                << " and gait from " << config_.gait_checkpoint;
  }

  std::vector<torch::Tensor> backbone_params = parameters_of(model_->appearance->backbone);
  std::vector<torch::Tensor> head_params;
  for (auto& [name, module] : model_->groups()) {
    if (name == "backbone") continue;
    for (auto& p : parameters_of(module)) head_params.push_back(p);
  }
  const double backbone_lr = backbone_pretrained_ ? config_.optim.lr_backbone : config_.optim.lr_heads;
  std::vector<torch::optim::OptimizerParamGroup> groups;
  groups.emplace_back(backbone_params, std::make_unique<torch::optim::AdamOptions>(
                                           torch::optim::AdamOptions(backbone_lr).weight_decay(
                                               config_.optim.weight_decay)));
  groups.emplace_back(head_params, std::make_unique<torch::optim::AdamOptions>(
                                       torch::optim::AdamOptions(config_.optim.lr_heads).weight_decay(
                                           config_.optim.weight_decay)));
  optimizer_ = std::make_unique<torch::optim::Adam>(
      std::move(groups), torch::optim::AdamOptions(config_.optim.lr_heads));
  started_ = std::chrono::steady_clock::now();
  log::info() << "trainer ready: " << labels_.classes() << " classes, " << to_string(options.variant)
              << ", backbone lr " << backbone_lr << ", head lr " << config_.optim.lr_heads;
}

double Trainer::lr_at(int epoch) const {
  double lr = config_.optim.lr_heads;
  for (double fraction : config_.optim.decay_at) {
    if (epoch >= static_cast<int>(std::lround(fraction * config_.epochs))) lr *= config_.optim.decay_factor;
  }
  return lr;
}

void Trainer::apply_lr(int epoch) {
  const double scale = lr_at(epoch) / config_.optim.lr_heads;
  const double backbone_base = backbone_pretrained_ ? config_.optim.lr_backbone : config_.optim.lr_heads;
  auto& groups = optimizer_->param_groups();
  static_cast<torch::optim::AdamOptions&>(groups[0].options()).lr(backbone_base * scale);
  static_cast<torch::optim::AdamOptions&>(groups[1].options()).lr(config_.optim.lr_heads * scale);
}

void Trainer::begin_epoch(int epoch) {
  epoch_ = epoch;
  apply_lr(epoch);
  // Per-epoch data stream so a resumed run samples the same batches.
  std::seed_seq seq{static_cast<std::uint32_t>(config_.seed), static_cast<std::uint32_t>(config_.seed >> 32),
                    static_cast<std::uint32_t>(epoch)};
  rng_.seed(seq);
}

void Trainer::abort_non_finite(const LossBreakdown& losses, const std::vector<std::string>& keys) {
  json dump{{"step", steps_}, {"epoch", epoch_}, {"keys", keys}};
  const auto values = losses.values();
  const auto& columns = LossBreakdown::columns();
  for (std::size_t i = 0; i < values.size(); ++i) {
    dump["losses"][columns[i]] = std::isfinite(values[i]) ? json(values[i]) : json(std::to_string(values[i]));
  }
  const auto path = std::filesystem::path(config_.output_dir) / "nonfinite_batch.json";
  try {
    std::filesystem::create_directories(config_.output_dir);
    std::ofstream(path) << dump.dump(2) << '\n';
  } catch (const std::exception&) {
  }
  std::string joined;
  for (const auto& k : keys) joined += (joined.empty() ? "" : ", ") + k;
  throw RuntimeFailure("non-finite loss at step " + std::to_string(steps_) + "; batch: " + joined +
                       " (details in " + path.string() + ")");
}

StepRecord Trainer::step() {
  model_->train();
  const auto batch = pk_sample(index_, loader_, config_.batch, config_.augment, rng_);
  const auto bundle = model_->forward(batch.appearance_frames, batch.appearance_masks,
                                      batch.gait_masks, Mode::kTrain);
  const auto losses = total_loss(bundle, labels_.map(batch.labels), config_.loss);
  if (!std::isfinite(losses.total.item<double>())) abort_non_finite(losses, batch.keys);

  optimizer_->zero_grad();
  if (losses.total.requires_grad()) losses.total.backward();
  optimizer_->step();
  ++steps_;

  StepRecord record;
  record.step = steps_;
  record.epoch = epoch_;
  record.losses = losses.values();
  record.lr = static_cast<torch::optim::AdamOptions&>(optimizer_->param_groups()[1].options()).lr();
  record.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
  return record;
}

void Trainer::resume(const std::filesystem::path& checkpoint) {
  const auto manifest = read_checkpoint_manifest(checkpoint);
  load_checkpoint(checkpoint, *model_);
  if (manifest.config_hash != config_hash(model_->options())) {
    throw ConfigError("checkpoint " + checkpoint.string() + " was trained with a different model configuration");
  }
  epoch_ = manifest.epoch;
  steps_ = epoch_ * config_.steps_per_epoch;
  const auto optim_path = std::filesystem::path(checkpoint).replace_extension(".optim.pt");
  if (std::filesystem::exists(optim_path)) {
    torch::load(*optimizer_, optim_path.string());
  } else {
    log::warn() << "no optimizer state next to " << checkpoint.string() << "; Adam moments restart";
  }
  log::info() << "resumed after epoch " << epoch_;
}

TrainResult Trainer::run() {
  const std::filesystem::path out_dir(config_.output_dir);
  std::filesystem::create_directories(out_dir / "checkpoints");
  {
    std::ofstream(out_dir / "config.json") << config_to_json(config_).dump(2) << '\n';
  }
  const auto log_path = out_dir / "train_log.csv";
  const bool fresh = !std::filesystem::exists(log_path) || epoch_ == 0;
  std::ofstream csv(log_path, fresh ? std::ios::trunc : std::ios::app);
  if (!csv) throw DataError("cannot write " + log_path.string());
  if (fresh) {
    csv << "step,epoch";
    for (const char* column : LossBreakdown::columns()) csv << ',' << column;
    csv << ",lr,wall_time\n";
  }
  csv << std::setprecision(8);

  TrainResult result;
  for (int epoch = epoch_; epoch < config_.epochs; ++epoch) {
    begin_epoch(epoch);
    for (int s = 0; s < config_.steps_per_epoch; ++s) {
      result.last = step();
      const auto& r = result.last;
      csv << r.step << ',' << r.epoch;
      for (double v : r.losses) csv << ',' << v;
      csv << ',' << r.lr << ',' << r.wall_time << '\n';
      if (r.step % config_.log_every == 0) {
        log::info() << "epoch " << epoch + 1 << "/" << config_.epochs << " step " << r.step
                    << " L_total " << r.losses.back() << " lr " << r.lr;
      }
    }
    csv.flush();
    json metrics = json::object();
    const auto& columns = LossBreakdown::columns();
    for (std::size_t i = 0; i < columns.size(); ++i) metrics[columns[i]] = result.last.losses[i];
    char name[32];
    std::snprintf(name, sizeof name, "epoch_%03d.pt", epoch + 1);
    const auto path = out_dir / "checkpoints" / name;
    save_checkpoint(path, *model_, make_manifest(*model_, config_.regime, epoch + 1, config_.augment, metrics));
    torch::save(*optimizer_, std::filesystem::path(path).replace_extension(".optim.pt").string());
    result.checkpoints.push_back(path);
    epoch_ = epoch + 1;
  }
  result.steps = steps_;
  return result;
}

}  // namespace seqmasks
