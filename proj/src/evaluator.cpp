#include "seqmasks/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <memory>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "seqmasks/error.hpp"
#include "seqmasks/log.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace seqmasks {

SequenceMeta meta_of(const SequenceEntry& e) {
  return {e.key, e.identity, e.camera, e.view, e.condition, e.seq_number, e.split};
}

void Embeddings::add(SequenceMeta meta, std::span<const float> row) {
  if (dim_ == 0 && meta_.empty()) dim_ = static_cast<std::int64_t>(row.size());
  if (static_cast<std::int64_t>(row.size()) != dim_) {
    throw ShapeError("Embeddings: row has " + std::to_string(row.size()) + " values, expected " +
                     std::to_string(dim_));
  }
  values_.insert(values_.end(), row.begin(), row.end());
  meta_.push_back(std::move(meta));
}

std::span<const float> Embeddings::row(std::size_t i) const {
  if (i >= meta_.size()) throw InvalidInput("Embeddings: row out of range");
  return {values_.data() + i * dim_, static_cast<std::size_t>(dim_)};
}

Embeddings Embeddings::select(Split split) const {
  Embeddings out(dim_);
  for (std::size_t i = 0; i < size(); ++i) {
    if (meta_[i].split == split) out.add(meta_[i], row(i));
  }
  return out;
}

void RetrievalProblem::validate() const {
  if (query.size() == 0 || gallery.size() == 0) {
    throw InvalidInput("retrieval problem needs at least one query and one gallery item");
  }
  if (query.dim() != gallery.dim()) throw ShapeError("query and gallery dimensions differ");
}

std::optional<double> average_precision(std::span<const bool> sorted_relevance) {
  std::int64_t hits = 0;
  double sum = 0.0;
  for (std::size_t k = 0; k < sorted_relevance.size(); ++k) {
    if (!sorted_relevance[k]) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(k + 1);
  }
  if (hits == 0) return std::nullopt;
  return sum / static_cast<double>(hits);
}

namespace {

double euclidean(std::span<const float> a, std::span<const float> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    s += d * d;
  }
  return std::sqrt(s);
}

// Gallery positions ordered by (distance, index).
std::vector<std::size_t> rank_gallery(std::span<const float> query, const Embeddings& gallery,
                                      const std::vector<std::size_t>& candidates) {
  std::vector<std::pair<double, std::size_t>> scored;
  scored.reserve(candidates.size());
  for (std::size_t g : candidates) scored.emplace_back(euclidean(query, gallery.row(g)), g);
  std::stable_sort(scored.begin(), scored.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<std::size_t> order;
  order.reserve(scored.size());
  for (const auto& [_, g] : scored) order.push_back(g);
  return order;
}

}  // namespace

CmcMapReport cmc_map(const RetrievalProblem& problem) {
  problem.validate();
  const auto& q = problem.query;
  const auto& g = problem.gallery;
  CmcMapReport report;
  std::vector<std::int64_t> first_hit_counts(g.size(), 0);
  double ap_sum = 0.0;
  std::vector<std::size_t> all(g.size());
  std::iota(all.begin(), all.end(), 0);

  for (std::size_t i = 0; i < q.size(); ++i) {
    const auto& qm = q.meta(i);
    std::vector<std::size_t> candidates;
    for (std::size_t j : all) {
      const auto& gm = g.meta(j);
      if (gm.identity == qm.identity && gm.camera == qm.camera) continue;
      candidates.push_back(j);
    }
    const auto order = rank_gallery(q.row(i), g, candidates);
    // std::vector<bool> has no contiguous storage to view as a span.
    const std::size_t n = order.size();
    std::unique_ptr<bool[]> relevance(new bool[n]);
    for (std::size_t k = 0; k < n; ++k) {
      relevance[k] = g.meta(order[k]).identity == qm.identity;
    }
    const auto ap = average_precision({relevance.get(), n});
    if (!ap) {
      ++report.excluded;
      continue;
    }
    ++report.evaluated;
    ap_sum += *ap;
    const auto first = std::find(relevance.get(), relevance.get() + n, true) - relevance.get();
    ++first_hit_counts[static_cast<std::size_t>(first)];
  }
  if (report.excluded > 0) {
    log::warn() << report.excluded << " queries have no valid gallery match and were excluded";
  }
  report.curve.assign(g.size(), 0.0);
  if (report.evaluated > 0) {
    std::int64_t cumulative = 0;
    for (std::size_t k = 0; k < g.size(); ++k) {
      cumulative += first_hit_counts[k];
      report.curve[k] = static_cast<double>(cumulative) / static_cast<double>(report.evaluated);
    }
    report.map = ap_sum / static_cast<double>(report.evaluated);
  }
  for (std::size_t r = 0; r < kCmcRanks.size(); ++r) {
    const auto k = static_cast<std::size_t>(kCmcRanks[r]);
    report.cmc[r] = report.curve.empty() ? 0.0 : report.curve[std::min(k, report.curve.size()) - 1];
  }
  return report;
}

std::vector<CasiaConditionReport> casia_eval(const RetrievalProblem& problem) {
  problem.validate();
  const auto& q = problem.query;
  const auto& g = problem.gallery;
  auto view_slot = [](const SequenceMeta& m) -> int {
    if (!m.view) throw ConfigError("CASIA-B evaluation needs view metadata on every sequence");
    const auto it = std::find(kCasiaViewAngles.begin(), kCasiaViewAngles.end(), *m.view);
    if (it == kCasiaViewAngles.end()) throw InvalidInput("view " + std::to_string(*m.view) + " is not a CASIA-B angle");
    return static_cast<int>(it - kCasiaViewAngles.begin());
  };
  std::array<std::vector<std::size_t>, 11> gallery_by_view;
  for (std::size_t j = 0; j < g.size(); ++j) {
    const auto& m = g.meta(j);
    if (m.condition != Condition::kNM) {
      throw InvalidInput("CASIA-B gallery must hold NM sequences only (" + m.key + ")");
    }
    gallery_by_view[view_slot(m)].push_back(j);
  }

  std::vector<CasiaConditionReport> reports;
  for (Condition c : {Condition::kNM, Condition::kBG, Condition::kCL}) {
    CasiaConditionReport rep;
    rep.condition = c;
    std::array<std::vector<std::size_t>, 11> probes_by_view;
    for (std::size_t i = 0; i < q.size(); ++i) {
      const auto& m = q.meta(i);
      if (!m.condition) throw ConfigError("CASIA-B evaluation needs condition metadata");
      if (*m.condition == c) probes_by_view[view_slot(m)].push_back(i);
    }
    double inc_sum = 0.0, exc_sum = 0.0;
    int inc_n = 0, exc_n = 0;
    for (int pv = 0; pv < 11; ++pv) {
      for (int gv = 0; gv < 11; ++gv) {
        if (probes_by_view[pv].empty() || gallery_by_view[gv].empty()) {
          ++rep.absent_cells;
          continue;
        }
        std::int64_t hits = 0;
        for (std::size_t i : probes_by_view[pv]) {
          const auto order = rank_gallery(q.row(i), g, gallery_by_view[gv]);
          hits += g.meta(order.front()).identity == q.meta(i).identity ? 1 : 0;
        }
        const double acc = static_cast<double>(hits) / static_cast<double>(probes_by_view[pv].size());
        rep.matrix[pv][gv] = acc;
        inc_sum += acc;
        ++inc_n;
        if (pv != gv) {
          exc_sum += acc;
          ++exc_n;
        }
      }
    }
    if (rep.absent_cells > 0) {
      log::warn() << "CASIA-B " << to_string(c) << ": " << rep.absent_cells
                  << " view pairs without data omitted from the averages";
    }
    rep.including = inc_n ? inc_sum / inc_n : 0.0;
    rep.excluding = exc_n ? exc_sum / exc_n : 0.0;
    reports.push_back(rep);
  }
  return reports;
}

std::string report_to_json(const EvalReport& report) {
  json j = json::object();
  if (report.cmc) {
    const auto& c = *report.cmc;
    for (std::size_t r = 0; r < kCmcRanks.size(); ++r) {
      j["rank" + std::to_string(kCmcRanks[r])] = c.cmc[r];
    }
    j["map"] = c.map;
    j["evaluated_queries"] = c.evaluated;
    j["excluded_queries"] = c.excluded;
    j["cmc_curve"] = c.curve;
  }
  if (!report.casia.empty()) {
    json casia = json::object();
    for (const auto& rep : report.casia) {
      json matrix = json::array();
      for (const auto& row : rep.matrix) {
        json r = json::array();
        for (const auto& cell : row) r.push_back(cell ? json(*cell) : json(nullptr));
        matrix.push_back(r);
      }
      casia[to_string(rep.condition)] = {{"including_same_view", rep.including},
                                         {"excluding_same_view", rep.excluding},
                                         {"absent_cells", rep.absent_cells},
                                         {"matrix", matrix}};
    }
    j["casia"] = casia;
    j["views"] = kCasiaViewAngles;
  }
  return j.dump(2);
}

EvalReport report_from_json(const std::string& text) {
  EvalReport report;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed report: ") + e.what());
  }
  if (j.contains("map")) {
    CmcMapReport c;
    for (std::size_t r = 0; r < kCmcRanks.size(); ++r) {
      c.cmc[r] = j.at("rank" + std::to_string(kCmcRanks[r])).get<double>();
    }
    c.map = j.at("map").get<double>();
    c.evaluated = j.value("evaluated_queries", 0);
    c.excluded = j.value("excluded_queries", 0);
    c.curve = j.value("cmc_curve", std::vector<double>{});
    report.cmc = c;
  }
  if (j.contains("casia")) {
    for (Condition cond : {Condition::kNM, Condition::kBG, Condition::kCL}) {
      const auto key = to_string(cond);
      if (!j["casia"].contains(key)) continue;
      const auto& c = j["casia"][key];
      CasiaConditionReport rep;
      rep.condition = cond;
      rep.including = c.at("including_same_view").get<double>();
      rep.excluding = c.at("excluding_same_view").get<double>();
      rep.absent_cells = c.value("absent_cells", 0);
      const auto& m = c.at("matrix");
      for (std::size_t p = 0; p < 11; ++p) {
        for (std::size_t q = 0; q < 11; ++q) {
          if (!m.at(p).at(q).is_null()) rep.matrix[p][q] = m[p][q].get<double>();
        }
      }
      report.casia.push_back(rep);
    }
  }
  return report;
}

void write_report(const EvalReport& report, const fs::path& dir) {
  fs::create_directories(dir);
  std::ofstream(dir / "report.json") << report_to_json(report) << '\n';
  if (report.cmc) {
    std::ofstream csv(dir / "cmc.csv");
    csv << "rank1,rank5,rank10,rank20,map\n" << std::setprecision(10);
    for (double v : report.cmc->cmc) csv << v << ',';
    csv << report.cmc->map << '\n';
  }
  for (const auto& rep : report.casia) {
    std::string name = to_string(rep.condition);
    std::transform(name.begin(), name.end(), name.begin(), ::tolower);
    std::ofstream csv(dir / ("casia_" + name + ".csv"));
    csv << "probe_view";
    for (int v : kCasiaViewAngles) csv << ',' << v;
    csv << '\n' << std::setprecision(10);
    for (std::size_t p = 0; p < 11; ++p) {
      csv << kCasiaViewAngles[p];
      for (std::size_t g = 0; g < 11; ++g) {
        csv << ',';
        if (rep.matrix[p][g]) csv << *rep.matrix[p][g];
      }
      csv << '\n';
    }
  }
}

std::string format_report_table(const EvalReport& report, const std::string& label) {
  std::ostringstream out;
  out << std::fixed;
  if (report.cmc) {
    out << std::left << std::setw(24) << "Model" << std::right << std::setw(8) << "Rank1"
        << std::setw(8) << "Rank5" << std::setw(8) << "Rank10" << std::setw(8) << "Rank20"
        << std::setw(8) << "mAP" << '\n';
    out << std::left << std::setw(24) << label << std::right << std::setprecision(1);
    for (double v : report.cmc->cmc) out << std::setw(8) << 100.0 * v;
    out << std::setw(8) << 100.0 * report.cmc->map << '\n';
  }
  if (!report.casia.empty()) {
    out << std::left << std::setw(24) << "Model" << std::right << "  Including same angle  |"
        << "  Excluding same angle\n";
    out << std::left << std::setw(24) << "" << std::right;
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& rep : report.casia) out << std::setw(8) << to_string(rep.condition);
      out << (pass == 0 ? " |" : "");
    }
    out << '\n' << std::left << std::setw(24) << label << std::right << std::setprecision(3);
    for (const auto& rep : report.casia) out << std::setw(8) << 100.0 * rep.including;
    out << " |";
    for (const auto& rep : report.casia) out << std::setw(8) << 100.0 * rep.excluding;
    out << '\n';
  }
  return out.str();
}

}  // namespace seqmasks
