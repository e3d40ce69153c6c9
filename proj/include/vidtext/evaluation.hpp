#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vidtext/common.hpp"
#include "vidtext/corpus.hpp"
#include "vidtext/fusion.hpp"
#include "vidtext/model.hpp"
#include "vidtext/training.hpp"

namespace vidtext {

struct RetrievalMetrics {
  double r1 = 0.0;
  double r5 = 0.0;
  double r10 = 0.0;
  double median_rank = 0.0;
  double mean_rank = 0.0;
};

// Recall percentages plus median and mean rank. The median is the lower
// median for even counts.
inline RetrievalMetrics metrics_from_ranks(std::vector<int> ranks) {
  if (ranks.empty()) throw ValidationError("metrics_from_ranks: no ranks");
  const double n = static_cast<double>(ranks.size());
  RetrievalMetrics m;
  double sum = 0.0;
  for (int r : ranks) {
    if (r < 1) throw ValidationError("metrics_from_ranks: rank below 1");
    if (r <= 1) m.r1 += 1.0;
    if (r <= 5) m.r5 += 1.0;
    if (r <= 10) m.r10 += 1.0;
    sum += r;
  }
  m.r1 *= 100.0 / n;
  m.r5 *= 100.0 / n;
  m.r10 *= 100.0 / n;
  std::sort(ranks.begin(), ranks.end());
  m.median_rank = ranks[(ranks.size() - 1) / 2];
  m.mean_rank = sum / n;
  return m;
}

// Rank of each query's own clip among all clips, scored down a similarity
// column. Ties count against the true clip: equal-scoring competitors all
// rank ahead of it.
inline std::vector<int> text_to_video_ranks(const Mat& sim,
                                            const std::vector<int>& clip_of_query) {
  if (static_cast<Eigen::Index>(clip_of_query.size()) != sim.cols())
    throw ValidationError("text_to_video_ranks: column count mismatch");
  std::vector<int> ranks(clip_of_query.size());
  for (std::size_t j = 0; j < clip_of_query.size(); ++j) {
    const int g = clip_of_query[j];
    if (g < 0 || g >= sim.rows())
      throw ValidationError("text_to_video_ranks: clip index out of range");
    const double s = sim(g, static_cast<Eigen::Index>(j));
    int rank = 1;
    for (Eigen::Index i = 0; i < sim.rows(); ++i)
      if (i != g && sim(i, static_cast<Eigen::Index>(j)) >= s) ++rank;
    ranks[j] = rank;
  }
  return ranks;
}

// Rank of the best-scoring matching query per clip, scored along a
// similarity row. Ties count against the matching query.
inline std::vector<int> video_to_text_ranks(
    const Mat& sim, const std::vector<std::vector<int>>& queries_of_clip) {
  if (static_cast<Eigen::Index>(queries_of_clip.size()) != sim.rows())
    throw ValidationError("video_to_text_ranks: row count mismatch");
  std::vector<int> ranks;
  ranks.reserve(queries_of_clip.size());
  for (std::size_t i = 0; i < queries_of_clip.size(); ++i) {
    const std::vector<int>& mine = queries_of_clip[i];
    if (mine.empty())
      throw ValidationError("video_to_text_ranks: clip row " + std::to_string(i) +
                            " has no matching query");
    std::vector<char> matching(static_cast<std::size_t>(sim.cols()), 0);
    double best = -std::numeric_limits<double>::infinity();
    for (int j : mine) {
      if (j < 0 || j >= sim.cols())
        throw ValidationError("video_to_text_ranks: query index out of range");
      matching[static_cast<std::size_t>(j)] = 1;
      best = std::max(best, sim(static_cast<Eigen::Index>(i), j));
    }
    int rank = 1;
    for (Eigen::Index j = 0; j < sim.cols(); ++j)
      if (!matching[static_cast<std::size_t>(j)] &&
          sim(static_cast<Eigen::Index>(i), j) >= best)
        ++rank;
    ranks.push_back(rank);
  }
  return ranks;
}

struct EvalResult {
  RetrievalMetrics text_to_video;
  RetrievalMetrics video_to_text;
  std::vector<std::string> video_ids;  // similarity row order
  std::vector<int> query_indices;      // similarity column order, into corpus.queries
  Mat similarity;
  EmbeddingIndex index;  // clip embeddings, same order as video_ids
};

// Embed every clip and query of a split, score all pairs, rank both
// directions. The token budget caps scene-text tracks per clip the same
// way it does during training.
inline EvalResult evaluate(const Corpus& corpus, const ModelParams& params,
                           const Vocabulary& vocab, Split split, Mode mode,
                           int token_budget = -1) {
  EvalResult out;
  out.video_ids = corpus.video_ids(split);
  out.query_indices = corpus.query_indices(split);
  if (out.video_ids.empty() || out.query_indices.empty())
    throw ValidationError(std::string("evaluate: split \"") + split_name(split) +
                          "\" has no videos or no queries");

  Mat clips(static_cast<Eigen::Index>(out.video_ids.size()), params.config.embed_dim);
  for (std::size_t i = 0; i < out.video_ids.size(); ++i) {
    const VideoClip& clip = corpus.videos.at(out.video_ids[i]);
    const std::vector<TextTrack> tracks =
        apply_token_budget(corpus.tracks_for(clip.id), token_budget);
    const Vec v = encode_clip(params, vocab, clip, tracks, mode);
    clips.row(static_cast<Eigen::Index>(i)) = v.transpose();
    out.index.add(clip.id, v);
  }

  Mat queries(static_cast<Eigen::Index>(out.query_indices.size()), params.config.embed_dim);
  for (std::size_t j = 0; j < out.query_indices.size(); ++j)
    queries.row(static_cast<Eigen::Index>(j)) =
        encode_query(params, vocab,
                     corpus.queries[static_cast<std::size_t>(out.query_indices[j])].text)
            .transpose();

  out.similarity = similarity_matrix(clips, queries);

  std::map<std::string, int> row_of;
  for (std::size_t i = 0; i < out.video_ids.size(); ++i)
    row_of[out.video_ids[i]] = static_cast<int>(i);
  std::vector<int> clip_of_query(out.query_indices.size());
  std::vector<std::vector<int>> queries_of_clip(out.video_ids.size());
  for (std::size_t j = 0; j < out.query_indices.size(); ++j) {
    const Query& q = corpus.queries[static_cast<std::size_t>(out.query_indices[j])];
    const int row = row_of.at(q.video_id);
    clip_of_query[j] = row;
    queries_of_clip[static_cast<std::size_t>(row)].push_back(static_cast<int>(j));
  }

  out.text_to_video = metrics_from_ranks(text_to_video_ranks(out.similarity, clip_of_query));
  out.video_to_text =
      metrics_from_ranks(video_to_text_ranks(out.similarity, queries_of_clip));
  return out;
}

struct AblationRow {
  std::string section;  // "modality" or "token_budget"
  std::string label;
  Mode mode = Mode::Fusion;
  int token_budget = -1;
  RetrievalMetrics text_to_video;
  RetrievalMetrics video_to_text;
};

struct AblationReport {
  std::vector<AblationRow> rows;
};

// Retrain and evaluate across the comparison grid: one row per modality at
// an unlimited token budget, then fusion at each listed budget. Every run
// shares the base seed and schedule; the fusion row with an unlimited
// budget is trained once and reported in both sections.
inline AblationReport ablate(const Corpus& corpus, const ModelConfig& mcfg,
                             const TrainConfig& base,
                             const std::vector<int>& budgets = {10, 20, -1},
                             std::ostream* log = nullptr) {
  auto run = [&](Mode mode, int budget) {
    TrainConfig t = base;
    t.mode = mode;
    t.token_budget = budget;
    if (log)
      *log << "ablation: training mode=" << mode_name(mode) << " budget="
           << (budget < 0 ? std::string("all") : std::to_string(budget)) << "\n";
    TrainResult r = train(corpus, mcfg, t, nullptr);
    return evaluate(corpus, r.params, r.vocab, Split::Test, mode, budget);
  };
  auto budget_label = [](int b) { return b < 0 ? std::string("all") : std::to_string(b); };

  AblationReport report;
  EvalResult fusion_all;
  for (Mode mode : {Mode::Vision, Mode::Text, Mode::Fusion}) {
    EvalResult r = run(mode, -1);
    if (mode == Mode::Fusion) fusion_all = r;
    report.rows.push_back({"modality", mode_name(mode), mode, -1, r.text_to_video,
                           r.video_to_text});
  }
  for (int b : budgets) {
    if (b < 0) {
      report.rows.push_back({"token_budget", "all", Mode::Fusion, -1,
                             fusion_all.text_to_video, fusion_all.video_to_text});
    } else {
      EvalResult r = run(Mode::Fusion, b);
      report.rows.push_back({"token_budget", budget_label(b), Mode::Fusion, b,
                             r.text_to_video, r.video_to_text});
    }
  }
  return report;
}

inline json metrics_to_json(const RetrievalMetrics& m) {
  return json{{"R1", m.r1},
              {"R5", m.r5},
              {"R10", m.r10},
              {"median_rank", m.median_rank},
              {"mean_rank", m.mean_rank}};
}

inline json eval_to_json(const EvalResult& r) {
  return json{{"text_to_video", metrics_to_json(r.text_to_video)},
              {"video_to_text", metrics_to_json(r.video_to_text)},
              {"videos", r.video_ids.size()},
              {"queries", r.query_indices.size()}};
}

inline json ablation_to_json(const AblationReport& report) {
  json rows = json::array();
  for (const AblationRow& r : report.rows)
    rows.push_back({{"section", r.section},
                    {"label", r.label},
                    {"mode", mode_name(r.mode)},
                    {"token_budget", r.token_budget},
                    {"text_to_video", metrics_to_json(r.text_to_video)},
                    {"video_to_text", metrics_to_json(r.video_to_text)}});
  return json{{"rows", rows}};
}

inline std::string format_metrics_line(const std::string& label, const RetrievalMetrics& m) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-16s R@1 %6.1f  R@5 %6.1f  R@10 %6.1f  MdR %6.1f  MnR %7.1f",
                label.c_str(), m.r1, m.r5, m.r10, m.median_rank, m.mean_rank);
  return buf;
}

inline void print_eval(std::ostream& os, const EvalResult& r) {
  os << format_metrics_line("text->video", r.text_to_video) << "\n";
  os << format_metrics_line("video->text", r.video_to_text) << "\n";
}

inline void print_ablation(std::ostream& os, const AblationReport& report) {
  std::string section;
  for (const AblationRow& r : report.rows) {
    if (r.section != section) {
      section = r.section;
      os << "[" << section << "]\n";
    }
    os << format_metrics_line(r.label + " t2v", r.text_to_video) << "\n";
    os << format_metrics_line(r.label + " v2t", r.video_to_text) << "\n";
  }
}

}  // namespace vidtext
