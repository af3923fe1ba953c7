#include "seqmasks/train/features.hpp"

#include <fstream>

#include "json.hpp"
#include "seqmasks/dataset/sampler.hpp"
#include "seqmasks/error.hpp"
#include "seqmasks/log.hpp"

namespace seqmasks {

using nlohmann::json;

std::vector<int> even_subset(const std::vector<int>& pool, int limit) {
  if (limit < 1) throw InvalidInput("even_subset: limit must be >= 1");
  const auto n = static_cast<std::int64_t>(pool.size());
  if (n <= limit) return pool;
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(limit));
  for (std::int64_t i = 0; i < limit; ++i) out.push_back(pool[static_cast<std::size_t>(i * n / limit)]);
  return out;
}

torch::Tensor sequence_descriptor(SeqMasksModelImpl& model, const SequenceEntry& entry,
                                  const SequenceLoader& loader, const ExtractOptions& options) {
  if (options.chunk < 1) throw InvalidInput("extract: chunk must be >= 1");
  if (entry.frame_count < 1) throw DataError("sequence " + entry.key + " has no frames");
  torch::NoGradGuard no_grad;
  auto& appearance = *model.appearance;

  torch::Tensor global_sum, fg_sum;
  for (int start = 0; start < entry.frame_count; start += options.chunk) {
    const int stop = std::min(entry.frame_count, start + options.chunk);
    std::vector<cv::Mat> frames;
    std::vector<RawMask> masks;
    for (int i = start; i < stop; ++i) {
      frames.push_back(loader.load_frame(entry, i));
      masks.push_back(loader.load_mask(entry, i));
    }
    const auto pair = apply_augment(frames, masks, options.geometry, AugmentDecision{});
    const auto pooled = appearance.pool_frames(normalize_frames(pair.frames), stack_masks(pair.masks));
    auto g = pooled.global.sum(0, true);
    global_sum = global_sum.defined() ? global_sum + g : g;
    if (pooled.foreground.defined()) {
      auto f = pooled.foreground.sum(0, true);
      fg_sum = fg_sum.defined() ? fg_sum + f : f;
    }
  }
  const double count = entry.frame_count;
  auto features = appearance.embed(global_sum / count, fg_sum.defined() ? fg_sum / count : fg_sum);

  const auto gait_frames = even_subset(sampling_pool(entry), options.max_silhouettes);
  auto silhouettes = gait_tensor(entry, loader, gait_frames).unsqueeze(0);
  auto gait = model.gait->forward(silhouettes);
  return model.assemble(features, gait, Mode::kEval).descriptor();
}

Embeddings extract_features(SeqMasksModelImpl& model, const DatasetIndex& index,
                            const SequenceLoader& loader, const ExtractOptions& options,
                            std::optional<Split> split, SkipReport* skips) {
  const bool was_training = model.is_training();
  model.eval();
  Embeddings out;
  std::size_t done = 0;
  for (const auto& entry : index.entries()) {
    if (split && entry.split != *split) continue;
    torch::Tensor row;
    try {
      row = sequence_descriptor(model, entry, loader, options).contiguous().to(torch::kFloat32);
    } catch (const DataError& e) {
      if (!skips) throw;
      skips->add(entry.key, e.what());
      continue;
    }
    out.add(meta_of(entry), {row.data_ptr<float>(), static_cast<std::size_t>(row.numel())});
    if (++done % 100 == 0) log::info() << "extracted " << done << " sequences";
  }
  model.train(was_training);
  return out;
}

void save_embeddings(const Embeddings& embeddings, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    const auto& m = embeddings.meta(i);
    const auto row = embeddings.row(i);
    json line{{"key", m.key},
              {"identity", m.identity},
              {"camera", m.camera},
              {"seq_number", m.seq_number},
              {"split", to_string(m.split)},
              {"embedding", std::vector<float>(row.begin(), row.end())}};
    if (m.view) line["view"] = *m.view;
    if (m.condition) line["condition"] = to_string(*m.condition);
    out << line.dump() << '\n';
  }
}

Embeddings load_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read feature store " + path.string());
  Embeddings out;
  std::string text;
  int line_number = 0;
  while (std::getline(in, text)) {
    ++line_number;
    if (text.empty()) continue;
    try {
      const auto line = json::parse(text);
      SequenceMeta m;
      m.key = line.at("key").get<std::string>();
      m.identity = line.at("identity").get<std::int64_t>();
      m.camera = line.at("camera").get<int>();
      m.seq_number = line.value("seq_number", 0);
      m.split = parse_split(line.at("split").get<std::string>());
      if (line.contains("view")) m.view = line.at("view").get<int>();
      if (line.contains("condition")) m.condition = parse_condition(line.at("condition").get<std::string>());
      const auto values = line.at("embedding").get<std::vector<float>>();
      out.add(std::move(m), values);
    } catch (const json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(line_number) + ": " + e.what());
    }
  }
  return out;
}

RetrievalProblem split_problem(const Embeddings& all) {
  RetrievalProblem problem{all.select(Split::kQuery), all.select(Split::kGallery)};
  problem.validate();
  return problem;
}

}  // namespace seqmasks
