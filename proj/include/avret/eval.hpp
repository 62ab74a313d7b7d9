#pragma once

// Retrieval evaluation over embedding matrices: cosine ranking with
// deterministic tie-breaking, average precision and mAP, 101-point
// interpolated precision-recall curves, per-category AP, and top-1
// confusion matrices, plus CSV/JSON report writers.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "avret/data.hpp"
#include "avret/tensor.hpp"

namespace avret {

enum class Direction { audio2visual, visual2audio };

inline std::string to_string(Direction d) {
  return d == Direction::audio2visual ? "audio2visual" : "visual2audio";
}

// One query's ranked gallery. `ranking` is a permutation of gallery indices
// by descending cosine (ties by ascending index); `relevant` is aligned with
// it and flags same-category items.
struct RankedRetrieval {
  std::size_t query = 0;
  Direction direction = Direction::audio2visual;
  std::vector<std::size_t> ranking;
  std::vector<int> relevant;
};

// Zero vectors score 0 so an untrained all-zero model still evaluates.
inline double cosine(const double* u, const double* v, std::size_t n) {
  double dot = 0.0, uu = 0.0, vv = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    dot += u[i] * v[i];
    uu += u[i] * u[i];
    vv += v[i] * v[i];
  }
  if (uu == 0.0 || vv == 0.0) return 0.0;
  return dot / (std::sqrt(uu) * std::sqrt(vv));
}

inline double cosine(const std::vector<double>& u, const std::vector<double>& v) {
  if (u.size() != v.size())
    throw std::invalid_argument("cosine: vectors have lengths " + std::to_string(u.size()) +
                                " and " + std::to_string(v.size()));
  return cosine(u.data(), v.data(), u.size());
}

inline std::vector<RankedRetrieval> rank_all(const Tensor& queries, const Tensor& gallery,
                                             const std::vector<int>& query_labels,
                                             const std::vector<int>& gallery_labels,
                                             Direction direction) {
  if (queries.rows() == 0 || gallery.rows() == 0)
    throw std::invalid_argument("rank_all: empty query or gallery set");
  if (queries.cols() != gallery.cols())
    throw std::invalid_argument("rank_all: query dim " + std::to_string(queries.cols()) +
                                " does not match gallery dim " + std::to_string(gallery.cols()));
  if (query_labels.size() != queries.rows() || gallery_labels.size() != gallery.rows())
    throw std::invalid_argument("rank_all: label counts do not match embedding rows");

  std::size_t k = queries.cols();
  std::size_t m = gallery.rows();
  std::vector<RankedRetrieval> out;
  out.reserve(queries.rows());
  std::vector<double> scores(m);
  for (std::size_t q = 0; q < queries.rows(); ++q) {
    const double* qv = queries.data().data() + q * k;
    for (std::size_t g = 0; g < m; ++g)
      scores[g] = cosine(qv, gallery.data().data() + g * k, k);
    RankedRetrieval r;
    r.query = q;
    r.direction = direction;
    r.ranking.resize(m);
    for (std::size_t g = 0; g < m; ++g) r.ranking[g] = g;
    std::sort(r.ranking.begin(), r.ranking.end(), [&](std::size_t a, std::size_t b) {
      if (scores[a] != scores[b]) return scores[a] > scores[b];
      return a < b;
    });
    r.relevant.resize(m);
    for (std::size_t pos = 0; pos < m; ++pos)
      r.relevant[pos] = query_labels[q] == gallery_labels[r.ranking[pos]] ? 1 : 0;
    out.push_back(std::move(r));
  }
  return out;
}

// AP = (1/R) * sum over relevant ranks k of precision@k, full ranking.
inline double average_precision(const std::vector<int>& relevant) {
  std::size_t total = 0;
  for (int f : relevant) total += f ? 1u : 0u;
  if (total == 0)
    throw std::invalid_argument("average_precision: ranking contains no relevant items");
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t kpos = 0; kpos < relevant.size(); ++kpos) {
    if (!relevant[kpos]) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(kpos + 1);
  }
  return sum / static_cast<double>(total);
}

struct MeanAp {
  double value = 0.0;
  std::size_t used = 0;
  std::size_t skipped = 0;  // queries with no relevant gallery item
};

inline MeanAp mean_ap(const std::vector<RankedRetrieval>& retrievals) {
  if (retrievals.empty()) throw std::invalid_argument("mean_ap: no retrievals");
  MeanAp r;
  double sum = 0.0;
  for (const RankedRetrieval& q : retrievals) {
    bool any = std::find(q.relevant.begin(), q.relevant.end(), 1) != q.relevant.end();
    if (!any) {
      ++r.skipped;
      continue;
    }
    sum += average_precision(q.relevant);
    ++r.used;
  }
  if (r.used == 0)
    throw std::invalid_argument("mean_ap: every query was skipped (no relevant gallery items)");
  r.value = sum / static_cast<double>(r.used);
  return r;
}

inline MeanAp mean_ap(const Tensor& queries, const Tensor& gallery,
                      const std::vector<int>& labels, Direction direction) {
  return mean_ap(rank_all(queries, gallery, labels, labels, direction));
}

// 101-point interpolated precision-recall curve averaged over queries:
// p(r) = max precision at any cutoff whose recall is >= r, r = 0.00..1.00.
inline std::vector<std::pair<double, double>> prc(const std::vector<RankedRetrieval>& retrievals) {
  if (retrievals.empty()) throw std::invalid_argument("prc: no retrievals");
  std::vector<double> acc(101, 0.0);
  std::size_t used = 0;
  std::vector<double> recall, best;
  for (const RankedRetrieval& q : retrievals) {
    std::size_t total = 0;
    for (int f : q.relevant) total += f ? 1u : 0u;
    if (total == 0) continue;
    ++used;
    std::size_t n = q.relevant.size();
    recall.assign(n, 0.0);
    best.assign(n, 0.0);
    std::size_t hits = 0;
    for (std::size_t kpos = 0; kpos < n; ++kpos) {
      hits += q.relevant[kpos] ? 1u : 0u;
      recall[kpos] = static_cast<double>(hits) / static_cast<double>(total);
      best[kpos] = static_cast<double>(hits) / static_cast<double>(kpos + 1);
    }
    for (std::size_t kpos = n - 1; kpos-- > 0;)
      best[kpos] = std::max(best[kpos], best[kpos + 1]);
    std::size_t kpos = 0;
    for (int i = 0; i <= 100; ++i) {
      double r = static_cast<double>(i) / 100.0;
      while (kpos < n && recall[kpos] < r) ++kpos;
      acc[i] += best[kpos];  // recall reaches exactly 1.0 at the full cutoff
    }
  }
  if (used == 0)
    throw std::invalid_argument("prc: every query was skipped (no relevant gallery items)");
  std::vector<std::pair<double, double>> points(101);
  for (int i = 0; i <= 100; ++i)
    points[i] = {static_cast<double>(i) / 100.0, acc[i] / static_cast<double>(used)};
  return points;
}

// Top-1 confusion counts: row = query's class, column = class of the first
// ranked gallery item. Every query is counted, skipped or not.
inline std::vector<std::vector<std::size_t>> confusion(
    const std::vector<RankedRetrieval>& retrievals, const std::vector<int>& query_labels,
    const std::vector<int>& gallery_labels, int classes) {
  if (retrievals.empty()) throw std::invalid_argument("confusion: no retrievals");
  if (classes <= 0) throw std::invalid_argument("confusion: classes must be positive");
  std::vector<std::vector<std::size_t>> counts(
      static_cast<std::size_t>(classes), std::vector<std::size_t>(static_cast<std::size_t>(classes), 0));
  for (const RankedRetrieval& q : retrievals) {
    if (q.ranking.empty()) throw std::invalid_argument("confusion: empty ranking");
    int truth = query_labels.at(q.query);
    int pred = gallery_labels.at(q.ranking[0]);
    if (truth < 0 || truth >= classes || pred < 0 || pred >= classes)
      throw std::invalid_argument("confusion: label outside [0, classes)");
    ++counts[static_cast<std::size_t>(truth)][static_cast<std::size_t>(pred)];
  }
  return counts;
}

struct CategoryAp {
  int category = 0;
  double ap = 0.0;
  std::size_t queries = 0;  // queries of this class that had a relevant item
};

// Classes whose queries all lack relevant items are omitted, not zeroed.
inline std::vector<CategoryAp> per_category_ap(const std::vector<RankedRetrieval>& retrievals,
                                               const std::vector<int>& query_labels) {
  if (retrievals.empty()) throw std::invalid_argument("per_category_ap: no retrievals");
  std::map<int, std::pair<double, std::size_t>> sums;
  for (const RankedRetrieval& q : retrievals) {
    bool any = std::find(q.relevant.begin(), q.relevant.end(), 1) != q.relevant.end();
    if (!any) continue;
    auto& slot = sums[query_labels.at(q.query)];
    slot.first += average_precision(q.relevant);
    slot.second += 1;
  }
  std::vector<CategoryAp> table;
  table.reserve(sums.size());
  for (const auto& [cat, slot] : sums)
    table.push_back({cat, slot.first / static_cast<double>(slot.second), slot.second});
  return table;
}

struct DirectionEval {
  Direction direction = Direction::audio2visual;
  double map = 0.0;
  std::size_t queries_used = 0;
  std::size_t queries_skipped = 0;
  std::vector<std::pair<double, double>> prc_points;
  std::vector<CategoryAp> category_ap;
  std::vector<std::vector<std::size_t>> confusion_counts;
};

struct EvalReport {
  std::size_t classes = 0;
  DirectionEval audio2visual;
  DirectionEval visual2audio;
  double average_map = 0.0;
};

namespace detail {

inline DirectionEval eval_direction(const Tensor& queries, const Tensor& gallery,
                                    const std::vector<int>& labels, int classes,
                                    Direction direction) {
  std::vector<RankedRetrieval> rs = rank_all(queries, gallery, labels, labels, direction);
  DirectionEval ev;
  ev.direction = direction;
  MeanAp m = mean_ap(rs);
  ev.map = m.value;
  ev.queries_used = m.used;
  ev.queries_skipped = m.skipped;
  ev.prc_points = prc(rs);
  ev.category_ap = per_category_ap(rs, labels);
  ev.confusion_counts = confusion(rs, labels, labels, classes);
  return ev;
}

}  // namespace detail

// Paired embeddings share one label vector; both retrieval directions are
// cross-modal, so the paired counterpart stays in the gallery.
inline EvalReport evaluate_retrieval(const Tensor& emb_audio, const Tensor& emb_visual,
                                     const std::vector<int>& labels, int classes) {
  if (emb_audio.rows() != emb_visual.rows())
    throw std::invalid_argument("evaluate_retrieval: embedding row counts differ");
  EvalReport report;
  report.classes = static_cast<std::size_t>(classes);
  report.audio2visual =
      detail::eval_direction(emb_audio, emb_visual, labels, classes, Direction::audio2visual);
  report.visual2audio =
      detail::eval_direction(emb_visual, emb_audio, labels, classes, Direction::visual2audio);
  report.average_map = 0.5 * (report.audio2visual.map + report.visual2audio.map);
  return report;
}

namespace detail {

inline void write_prc_csv(const std::string& path,
                          const std::vector<std::pair<double, double>>& points) {
  std::ofstream out = open_out(path, std::ios::binary);
  out << "recall,precision\n";
  for (const auto& [r, p] : points) out << fmt_double(r) << "," << fmt_double(p) << "\n";
}

inline void write_confusion_csv(const std::string& path,
                                const std::vector<std::vector<std::size_t>>& counts) {
  std::ofstream out = open_out(path, std::ios::binary);
  out << "true_category";
  for (std::size_t c = 0; c < counts.size(); ++c) out << ",pred_" << c;
  out << "\n";
  for (std::size_t r = 0; r < counts.size(); ++r) {
    out << r;
    for (std::size_t c = 0; c < counts[r].size(); ++c) out << "," << counts[r][c];
    out << "\n";
  }
}

inline nlohmann::json direction_json(const DirectionEval& ev) {
  nlohmann::json j;
  j["map"] = ev.map;
  j["queries_used"] = ev.queries_used;
  j["queries_skipped"] = ev.queries_skipped;
  nlohmann::json cats = nlohmann::json::array();
  for (const CategoryAp& c : ev.category_ap)
    cats.push_back({{"category", c.category}, {"ap", c.ap}, {"queries", c.queries}});
  j["per_category_ap"] = cats;
  j["confusion"] = ev.confusion_counts;
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& [r, p] : ev.prc_points) pts.push_back({r, p});
  j["prc"] = pts;
  return j;
}

}  // namespace detail

// Writes map.csv, prc_<direction>.csv, per_category_ap.csv,
// confusion_<direction>.csv, and report.json into `dir`.
inline void write_eval_report(const std::string& dir, const EvalReport& report) {
  std::filesystem::create_directories(dir);
  auto join = [&dir](const char* name) { return (std::filesystem::path(dir) / name).string(); };

  {
    std::ofstream out = detail::open_out(join("map.csv"), std::ios::binary);
    out << "audio2visual,visual2audio,average\n";
    out << detail::fmt_double(report.audio2visual.map) << ","
        << detail::fmt_double(report.visual2audio.map) << ","
        << detail::fmt_double(report.average_map) << "\n";
  }

  detail::write_prc_csv(join("prc_audio2visual.csv"), report.audio2visual.prc_points);
  detail::write_prc_csv(join("prc_visual2audio.csv"), report.visual2audio.prc_points);
  detail::write_confusion_csv(join("confusion_audio2visual.csv"),
                              report.audio2visual.confusion_counts);
  detail::write_confusion_csv(join("confusion_visual2audio.csv"),
                              report.visual2audio.confusion_counts);

  {
    // merge the two per-direction tables on category id
    std::map<int, std::pair<const CategoryAp*, const CategoryAp*>> merged;
    for (const CategoryAp& c : report.audio2visual.category_ap) merged[c.category].first = &c;
    for (const CategoryAp& c : report.visual2audio.category_ap) merged[c.category].second = &c;
    std::ofstream out = detail::open_out(join("per_category_ap.csv"), std::ios::binary);
    out << "category,audio2visual,visual2audio,average\n";
    for (const auto& [cat, pair] : merged) {
      out << cat << ",";
      if (pair.first) out << detail::fmt_double(pair.first->ap);
      out << ",";
      if (pair.second) out << detail::fmt_double(pair.second->ap);
      out << ",";
      if (pair.first && pair.second)
        out << detail::fmt_double(0.5 * (pair.first->ap + pair.second->ap));
      out << "\n";
    }
  }

  {
    nlohmann::json j;
    j["classes"] = report.classes;
    j["average_map"] = report.average_map;
    j["audio2visual"] = detail::direction_json(report.audio2visual);
    j["visual2audio"] = detail::direction_json(report.visual2audio);
    std::ofstream out = detail::open_out(join("report.json"), std::ios::binary);
    out << j.dump(2) << "\n";
  }
}

}  // namespace avret
