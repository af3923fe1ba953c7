#ifndef SEQMASKS_EVALUATOR_HPP_
#define SEQMASKS_EVALUATOR_HPP_

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "seqmasks/dataset/index.hpp"

namespace seqmasks {

struct SequenceMeta {
  std::string key;
  std::int64_t identity = 0;
  int camera = 0;
  std::optional<int> view;
  std::optional<Condition> condition;
  int seq_number = 0;
  Split split = Split::kTrain;
};

SequenceMeta meta_of(const SequenceEntry& entry);

/// Row-major embedding matrix with one metadata record per row.
class Embeddings {
 public:
  Embeddings() = default;
  explicit Embeddings(std::int64_t dim) : dim_(dim) {}

  void add(SequenceMeta meta, std::span<const float> row);
  std::int64_t dim() const { return dim_; }
  std::size_t size() const { return meta_.size(); }
  std::span<const float> row(std::size_t i) const;
  const SequenceMeta& meta(std::size_t i) const { return meta_.at(i); }
  const std::vector<SequenceMeta>& metas() const { return meta_; }

  /// Rows whose split matches.
  Embeddings select(Split split) const;

 private:
  std::int64_t dim_ = 0;
  std::vector<float> values_;
  std::vector<SequenceMeta> meta_;
};

struct RetrievalProblem {
  Embeddings query;
  Embeddings gallery;
  void validate() const;
};

/// Mean of precision@k over the ranks k of relevant items; nullopt when nothing is relevant.
std::optional<double> average_precision(std::span<const bool> sorted_relevance);

inline constexpr std::array<int, 4> kCmcRanks{1, 5, 10, 20};

struct CmcMapReport {
  std::array<double, kCmcRanks.size()> cmc{};  // hit rates at kCmcRanks
  std::vector<double> curve;                   // curve[k-1] = hit rate at rank k
  double map = 0.0;
  std::int64_t evaluated = 0;
  std::int64_t excluded = 0;  // queries without any valid gallery match
};

/**
 * Ranks the gallery by ascending Euclidean distance (ties by gallery index)
 * for every query. Gallery items sharing both identity and camera with the
 * query are removed from its ranking.
 */
CmcMapReport cmc_map(const RetrievalProblem& problem);

inline constexpr std::array<int, 11> kCasiaViewAngles{0, 18, 36, 54, 72, 90, 108, 126, 144, 162, 180};

struct CasiaConditionReport {
  Condition condition = Condition::kNM;
  // matrix[probe_view][gallery_view]; nullopt when that view pair has no data.
  std::array<std::array<std::optional<double>, 11>, 11> matrix{};
  double including = 0.0;  // mean over present cells
  double excluding = 0.0;  // mean over present off-diagonal cells
  int absent_cells = 0;
};

/// Cross-view rank-1: gallery NM1-4, probes split by condition into NM5-6 / BG1-2 / CL1-2.
std::vector<CasiaConditionReport> casia_eval(const RetrievalProblem& problem);

struct EvalReport {
  std::optional<CmcMapReport> cmc;
  std::vector<CasiaConditionReport> casia;
};

std::string report_to_json(const EvalReport& report);
EvalReport report_from_json(const std::string& text);
/// report.json, cmc.csv (mars) and casia_<cond>.csv (casia) under `dir`.
void write_report(const EvalReport& report, const std::filesystem::path& dir);
/// Human-readable table in the usual Rank1/5/10/20/mAP or NM/BG/CL layout.
std::string format_report_table(const EvalReport& report, const std::string& label);

}  // namespace seqmasks

#endif  // SEQMASKS_EVALUATOR_HPP_
