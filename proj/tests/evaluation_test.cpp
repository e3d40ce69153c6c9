#include <algorithm>
#include <utility>

#include <gtest/gtest.h>

#include <vidtext/evaluation.hpp>
#include <vidtext/synthetic.hpp>

#include "test_util.hpp"

using namespace vidtext;
using testutil::expect_error;

namespace {

ModelConfig tiny_model() {
  ModelConfig cfg;
  cfg.embed_dim = 16;
  cfg.heads = 2;
  cfg.layers = 1;
  cfg.fusion_layers = 1;
  cfg.ffn_mult = 2;
  cfg.patch_size = 8;
  cfg.frames_sampled = 2;
  cfg.max_text_len = 12;
  cfg.frame_height = 16;
  cfg.frame_width = 16;
  return cfg;
}

Corpus micro_corpus(double test_fraction = 0.2) {
  SyntheticConfig cfg;
  cfg.video_count = 10;
  cfg.frame_width = 16;
  cfg.frame_height = 16;
  cfg.frame_count = 3;
  cfg.queries_per_video = 4;
  cfg.tracks_per_video = 2;
  cfg.ocr_vocab_size = 40;
  cfg.attribute_vocab_size = 4;
  cfg.test_fraction = test_fraction;
  return generate_synthetic(cfg, 91);
}

// Sort-based rank oracle, deliberately structured unlike the counting
// implementation: order candidates by score with ties resolved against
// the ground truth, then locate it.
int oracle_rank(const std::vector<double>& scores, std::size_t truth, double truth_score) {
  std::vector<std::pair<double, int>> order;
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (i != truth) order.emplace_back(scores[i], 0);
  order.emplace_back(truth_score, 1);
  std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (std::size_t pos = 0; pos < order.size(); ++pos)
    if (order[pos].second == 1) return static_cast<int>(pos) + 1;
  return -1;
}

}  // namespace

TEST(Metrics, FrozenRankSet) {
  const RetrievalMetrics m = metrics_from_ranks({1, 2, 6});
  EXPECT_NEAR(m.r1, 100.0 / 3.0, 1e-12);
  EXPECT_NEAR(m.r5, 200.0 / 3.0, 1e-12);
  EXPECT_DOUBLE_EQ(m.r10, 100.0);
  EXPECT_DOUBLE_EQ(m.median_rank, 2.0);
  EXPECT_DOUBLE_EQ(m.mean_rank, 3.0);
}

TEST(Metrics, LowerMedianForEvenCounts) {
  EXPECT_DOUBLE_EQ(metrics_from_ranks({4, 1, 3, 2}).median_rank, 2.0);
  EXPECT_DOUBLE_EQ(metrics_from_ranks({7, 7}).median_rank, 7.0);
  EXPECT_DOUBLE_EQ(metrics_from_ranks({5}).median_rank, 5.0);
}

TEST(Metrics, RejectsEmptyAndInvalidRanks) {
  EXPECT_THROW(metrics_from_ranks({}), ValidationError);
  EXPECT_THROW(metrics_from_ranks({1, 0}), ValidationError);
}

TEST(Ranks, TextToVideoCountsTiesAgainstTruth) {
  Mat sim(3, 2);
  sim << 0.5, 0.1,
         0.5, 0.3,
         0.2, 0.9;
  const std::vector<int> ranks = text_to_video_ranks(sim, {0, 2});
  ASSERT_EQ(ranks.size(), 2u);
  EXPECT_EQ(ranks[0], 2);  // clip 1 ties at 0.5 and wins the tie
  EXPECT_EQ(ranks[1], 1);
}

TEST(Ranks, VideoToTextUsesBestMatchingQuery) {
  Mat sim(2, 3);
  sim << 0.9, 0.2, 0.4,
         0.8, 0.5, 0.5;
  const std::vector<int> ranks = video_to_text_ranks(sim, {{0, 1}, {2}});
  ASSERT_EQ(ranks.size(), 2u);
  EXPECT_EQ(ranks[0], 1);  // best matching score 0.9 beats the lone foreign 0.4
  // Clip 1: best matching is query 2 at 0.5; query 0 scores higher and
  // query 1 ties, both count ahead.
  EXPECT_EQ(ranks[1], 3);
}

TEST(Ranks, ValidatesShapesAndCoverage) {
  Mat sim = Mat::Zero(2, 2);
  EXPECT_THROW(text_to_video_ranks(sim, {0}), ValidationError);
  EXPECT_THROW(text_to_video_ranks(sim, {0, 5}), ValidationError);
  EXPECT_EQ(expect_error<ValidationError>(
                [&] { video_to_text_ranks(sim, {{0, 1}, {}}); }, "no matching query"),
            "");
  EXPECT_THROW(video_to_text_ranks(sim, {{0}}), ValidationError);
  EXPECT_THROW(video_to_text_ranks(sim, {{0}, {3}}), ValidationError);
}

TEST(Ranks, MatchSortOracleOnRandomTiedMatrices) {
  Rng rng(2024);
  for (int trial = 0; trial < 20; ++trial) {
    const int clips = static_cast<int>(rng.uniform_int(1, 8));
    const int queries = static_cast<int>(rng.uniform_int(1, 10));
    Mat sim(clips, queries);
    for (Eigen::Index i = 0; i < sim.rows(); ++i)
      for (Eigen::Index j = 0; j < sim.cols(); ++j)
        sim(i, j) = static_cast<double>(rng.uniform_int(0, 4)) / 4.0;  // forces ties

    std::vector<int> clip_of_query(static_cast<std::size_t>(queries));
    std::vector<std::vector<int>> queries_of_clip(static_cast<std::size_t>(clips));
    for (int j = 0; j < queries; ++j) {
      const int g = static_cast<int>(rng.uniform_int(0, clips - 1));
      clip_of_query[static_cast<std::size_t>(j)] = g;
      queries_of_clip[static_cast<std::size_t>(g)].push_back(j);
    }

    const std::vector<int> t2v = text_to_video_ranks(sim, clip_of_query);
    for (int j = 0; j < queries; ++j) {
      std::vector<double> col(static_cast<std::size_t>(clips));
      for (int i = 0; i < clips; ++i) col[static_cast<std::size_t>(i)] = sim(i, j);
      const auto g = static_cast<std::size_t>(clip_of_query[static_cast<std::size_t>(j)]);
      EXPECT_EQ(t2v[static_cast<std::size_t>(j)], oracle_rank(col, g, col[g]))
          << "trial " << trial << " query " << j;
    }

    std::vector<std::vector<int>> covered;
    std::vector<int> covered_rows;
    for (int i = 0; i < clips; ++i)
      if (!queries_of_clip[static_cast<std::size_t>(i)].empty()) {
        covered.push_back(queries_of_clip[static_cast<std::size_t>(i)]);
        covered_rows.push_back(i);
      }
    if (covered.empty()) continue;
    Mat covered_sim(static_cast<Eigen::Index>(covered_rows.size()), queries);
    for (std::size_t r = 0; r < covered_rows.size(); ++r)
      covered_sim.row(static_cast<Eigen::Index>(r)) = sim.row(covered_rows[r]);
    const std::vector<int> v2t = video_to_text_ranks(covered_sim, covered);
    for (std::size_t r = 0; r < covered.size(); ++r) {
      double best = -1.0;
      std::vector<double> scores;
      std::vector<char> is_mine(static_cast<std::size_t>(queries), 0);
      for (int j : covered[r]) {
        is_mine[static_cast<std::size_t>(j)] = 1;
        best = std::max(best, covered_sim(static_cast<Eigen::Index>(r), j));
      }
      for (int j = 0; j < queries; ++j)
        if (!is_mine[static_cast<std::size_t>(j)])
          scores.push_back(covered_sim(static_cast<Eigen::Index>(r), j));
      scores.push_back(best);
      EXPECT_EQ(v2t[r], oracle_rank(scores, scores.size() - 1, best))
          << "trial " << trial << " clip row " << r;
    }
  }
}

TEST(Evaluate, UntrainedModelProducesCoherentReport) {
  const Corpus c = micro_corpus();
  const Vocabulary vocab = Vocabulary::build(c);
  const ModelConfig cfg = tiny_model();
  ModelParams params;
  params.init(cfg, vocab.size(), 3);

  const EvalResult r = evaluate(c, params, vocab, Split::Test, Mode::Fusion);
  const auto clips = r.video_ids.size();
  const auto queries = r.query_indices.size();
  EXPECT_EQ(clips, 2u);
  EXPECT_EQ(queries, 8u);
  EXPECT_EQ(r.similarity.rows(), static_cast<Eigen::Index>(clips));
  EXPECT_EQ(r.similarity.cols(), static_cast<Eigen::Index>(queries));
  EXPECT_TRUE(std::is_sorted(r.video_ids.begin(), r.video_ids.end()));

  for (const RetrievalMetrics& m : {r.text_to_video, r.video_to_text}) {
    EXPECT_LE(m.r1, m.r5);
    EXPECT_LE(m.r5, m.r10);
    EXPECT_LE(m.r10, 100.0);
    EXPECT_GE(m.r1, 0.0);
    EXPECT_GE(m.median_rank, 1.0);
    EXPECT_LE(m.mean_rank, static_cast<double>(clips));
  }

  ASSERT_EQ(r.index.size(), static_cast<int>(clips));
  for (std::size_t i = 0; i < clips; ++i) {
    EXPECT_EQ(r.index.ids()[i], r.video_ids[i]);
    EXPECT_NEAR(r.index.vector_at(static_cast<int>(i)).norm(), 1.0, 1e-6);
  }
  // Cosine of unit vectors stays in [-1, 1].
  EXPECT_LE(r.similarity.maxCoeff(), 1.0 + 1e-9);
  EXPECT_GE(r.similarity.minCoeff(), -1.0 - 1e-9);
}

TEST(Evaluate, TokenBudgetChangesTextEmbeddings) {
  const Corpus c = micro_corpus();
  const Vocabulary vocab = Vocabulary::build(c);
  ModelParams params;
  params.init(tiny_model(), vocab.size(), 3);
  const EvalResult all = evaluate(c, params, vocab, Split::Test, Mode::Text, -1);
  const EvalResult none = evaluate(c, params, vocab, Split::Test, Mode::Text, 0);
  EXPECT_GT((all.similarity - none.similarity).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Evaluate, RejectsEmptySplit) {
  const Corpus c = micro_corpus(0.0);
  const Vocabulary vocab = Vocabulary::build(c);
  ModelParams params;
  params.init(tiny_model(), vocab.size(), 3);
  EXPECT_EQ(expect_error<ValidationError>(
                [&] { evaluate(c, params, vocab, Split::Test, Mode::Fusion); },
                "split \"test\""),
            "");
}

TEST(Ablate, GridCoversModalitiesAndBudgets) {
  const Corpus c = micro_corpus();
  TrainConfig base;
  base.batch_size = 4;
  base.epochs = 1;
  base.lr_initial = 1e-3;
  base.lr_after_decay = 1e-4;
  base.decay_epoch = 1;
  base.sigma = 0.1;
  base.seed = 11;

  const AblationReport report = ablate(c, tiny_model(), base, {1, -1});
  ASSERT_EQ(report.rows.size(), 5u);
  EXPECT_EQ(report.rows[0].section, "modality");
  EXPECT_EQ(report.rows[0].label, "vision");
  EXPECT_EQ(report.rows[0].mode, Mode::Vision);
  EXPECT_EQ(report.rows[1].label, "text");
  EXPECT_EQ(report.rows[2].label, "fusion");
  EXPECT_EQ(report.rows[3].section, "token_budget");
  EXPECT_EQ(report.rows[3].label, "1");
  EXPECT_EQ(report.rows[3].token_budget, 1);
  EXPECT_EQ(report.rows[4].label, "all");
  EXPECT_EQ(report.rows[4].token_budget, -1);
  // The unlimited fusion run is trained once and reported in both sections.
  EXPECT_DOUBLE_EQ(report.rows[4].text_to_video.r1, report.rows[2].text_to_video.r1);
  EXPECT_DOUBLE_EQ(report.rows[4].video_to_text.mean_rank,
                   report.rows[2].video_to_text.mean_rank);

  const json j = ablation_to_json(report);
  ASSERT_TRUE(j.contains("rows"));
  EXPECT_EQ(j["rows"].size(), 5u);
  EXPECT_EQ(j["rows"][0]["section"], "modality");
  EXPECT_TRUE(j["rows"][0].contains("text_to_video"));
}
