#include <cstring>

#include <gtest/gtest.h>

#include <vidtext/encoders.hpp>
#include <vidtext/synthetic.hpp>

#include "test_util.hpp"

using namespace vidtext;
using testutil::expect_error;
using testutil::make_track;
using testutil::solid_clip;
using testutil::TempDir;

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
  cfg.max_text_len = 8;
  cfg.frame_height = 16;
  cfg.frame_width = 16;
  return cfg;
}

Corpus word_corpus() {
  Corpus c;
  c.videos.emplace("v0", solid_clip("v0", 16, 16, 4));
  c.tracks["v0"] = {make_track("exit", 0.9, 0, 3, {2, 2, 8, 4}),
                    make_track("food", 0.8, 1, 2, {4, 4, 8, 4})};
  c.queries.push_back({"the exit sign", "v0", Split::Train});
  c.queries.push_back({"street food stall", "v0", Split::Train});
  return c;
}

}  // namespace

TEST(FrameSampling, MatchesExpectedIndices) {
  EXPECT_EQ(sampled_frame_indices(10, 4), (std::vector<int>{0, 3, 6, 9}));
  EXPECT_EQ(sampled_frame_indices(10, 1), (std::vector<int>{0}));
  EXPECT_EQ(sampled_frame_indices(1, 3), (std::vector<int>{0, 0, 0}));
  EXPECT_EQ(sampled_frame_indices(2, 4), (std::vector<int>{0, 0, 1, 1}));
  EXPECT_EQ(sampled_frame_indices(5, 5), (std::vector<int>{0, 1, 2, 3, 4}));
  EXPECT_THROW(sampled_frame_indices(0, 2), ConfigError);
  EXPECT_THROW(sampled_frame_indices(3, 0), ConfigError);
}

TEST(Patchify, ShapeAndFlattenOrder) {
  ModelConfig cfg = tiny_model();
  cfg.patch_size = 2;
  cfg.frames_sampled = 1;
  cfg.frame_width = 4;
  cfg.frame_height = 4;
  VideoClip clip = solid_clip("c", 4, 4, 1, 0.0f);
  // Mark pixel (y=2, x=3) red: lands in patch (row 1, col 1), offset y=0,x=1.
  clip.frames[0].at(2, 3, 0) = 1.0f;
  const Mat p = patchify(clip, cfg);
  ASSERT_EQ(p.rows(), 4);
  ASSERT_EQ(p.cols(), 12);
  const Eigen::Index patch = 1 * 2 + 1;
  const Eigen::Index col = (0 * 2 + 1) * 3 + 0;
  EXPECT_DOUBLE_EQ(p(patch, col), 1.0);
  EXPECT_DOUBLE_EQ(p.sum(), 1.0);
}

TEST(Patchify, FrameMajorTokenOrder) {
  ModelConfig cfg = tiny_model();
  cfg.patch_size = 2;
  cfg.frames_sampled = 2;
  cfg.frame_width = 2;
  cfg.frame_height = 2;
  VideoClip clip = solid_clip("c", 2, 2, 2, 0.0f);
  clip.frames[1].at(0, 0, 2) = 1.0f;  // only the second sampled frame lights up
  const Mat p = patchify(clip, cfg);
  ASSERT_EQ(p.rows(), 2);
  EXPECT_DOUBLE_EQ(p.row(0).sum(), 0.0);
  EXPECT_DOUBLE_EQ(p(1, 2), 1.0);
}

TEST(Patchify, DiscardsPartialBorder) {
  ModelConfig cfg = tiny_model();
  cfg.patch_size = 8;
  cfg.frames_sampled = 1;
  cfg.frame_width = 20;  // 20 = 2*8 + 4 leftover columns
  cfg.frame_height = 11;
  VideoClip clip = solid_clip("c", 20, 11, 1);
  const Mat p = patchify(clip, cfg);
  EXPECT_EQ(p.rows(), 2);  // 1 grid row x 2 grid cols
}

TEST(Patchify, RejectsMismatchedFrameSize) {
  ModelConfig cfg = tiny_model();
  VideoClip clip = solid_clip("wrong", 8, 8, 2);
  EXPECT_EQ(expect_error<ValidationError>([&] { patchify(clip, cfg); }, "wrong"), "");
}

TEST(Descriptor, WorkedExample) {
  // 100x100 clip, 10 frames; box center moves (10,10) -> (30,10) at size
  // 20x10; live frames 2..6; trajectory averages (10,5) and (30,15).
  TextTrack t;
  t.word = "x";
  t.box_start = BoxF{0, 5, 20, 10};
  t.box_end = BoxF{20, 5, 20, 10};
  t.avg_tl_x = 10;
  t.avg_tl_y = 5;
  t.avg_br_x = 30;
  t.avg_br_y = 15;
  t.t_start = 2;
  t.t_end = 6;
  const Vec v = spacetime_descriptor(t, 100, 100, 10);
  const double expected[11] = {0.1, 0.05, 0.3, 0.15, 0.2, 0, 0, 0, 0.2, 0.6, 0.4};
  for (int i = 0; i < 11; ++i) EXPECT_NEAR(v(i), expected[i], 1e-12) << "entry " << i;
}

TEST(Descriptor, StaticFullFrame) {
  const int f = 8;
  TextTrack t = make_track("x", 1.0, 0, f - 1, {0, 0, 64, 48});
  const Vec v = spacetime_descriptor(t, 64, 48, f);
  const double ff = static_cast<double>(f - 1) / f;
  const double expected[11] = {0, 0, 1, 1, 0, 0, 0, 0, 0, ff, ff};
  for (int i = 0; i < 11; ++i) EXPECT_NEAR(v(i), expected[i], 1e-12) << "entry " << i;
}

TEST(Descriptor, ScaleInvariance) {
  Rng rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    TextTrack t;
    t.box_start = BoxF{rng.uniform(0, 50), rng.uniform(0, 50), rng.uniform(5, 30),
                       rng.uniform(5, 30)};
    t.box_end = BoxF{rng.uniform(0, 50), rng.uniform(0, 50), rng.uniform(5, 30),
                     rng.uniform(5, 30)};
    t.avg_tl_x = rng.uniform(0, 60);
    t.avg_tl_y = rng.uniform(0, 60);
    t.avg_br_x = t.avg_tl_x + rng.uniform(1, 30);
    t.avg_br_y = t.avg_tl_y + rng.uniform(1, 30);
    t.t_start = 1;
    t.t_end = 5;
    const Vec a = spacetime_descriptor(t, 100, 100, 10);
    TextTrack s = t;
    const double k = 3.0;
    for (BoxF* b : {&s.box_start, &s.box_end}) {
      b->x *= k;
      b->y *= k;
      b->w *= k;
      b->h *= k;
    }
    s.avg_tl_x *= k;
    s.avg_tl_y *= k;
    s.avg_br_x *= k;
    s.avg_br_y *= k;
    const Vec b = spacetime_descriptor(s, 300, 300, 10);
    for (int i = 0; i < 11; ++i) EXPECT_NEAR(a(i), b(i), 1e-9);
  }
}

TEST(Descriptor, ClampsOutOfFrameGeometry) {
  TextTrack t = make_track("x", 1.0, 0, 1, {-50, -50, 500, 500});
  t.avg_tl_x = -50;
  t.avg_tl_y = -50;
  t.avg_br_x = 450;
  t.avg_br_y = 450;
  const Vec v = spacetime_descriptor(t, 100, 100, 4);
  for (int i = 0; i < 4; ++i) {
    EXPECT_GE(v(i), 0.0);
    EXPECT_LE(v(i), 1.0);
  }
  for (int i = 4; i < 8; ++i) {
    EXPECT_GE(v(i), -1.0);
    EXPECT_LE(v(i), 1.0);
  }
}

TEST(Vocabulary, ReservedIdsAndFrequencyOrder) {
  const Corpus c = word_corpus();
  const Vocabulary v = Vocabulary::build(c);
  EXPECT_EQ(v.word(Vocabulary::kPad), "[PAD]");
  EXPECT_EQ(v.word(Vocabulary::kUnk), "[UNK]");
  EXPECT_EQ(v.word(Vocabulary::kEos), "[EOS]");
  // "exit" and "food" each appear twice (track + query); "the" once.
  EXPECT_LT(v.lookup("exit"), v.lookup("the"));
  EXPECT_LT(v.lookup("food"), v.lookup("the"));
  EXPECT_EQ(v.lookup("exit"), 3);  // alphabetical among count-2 words
  EXPECT_EQ(v.lookup("food"), 4);
  EXPECT_EQ(v.lookup("nonexistent"), Vocabulary::kUnk);
}

TEST(Vocabulary, CapDropsRarestWords) {
  const Corpus c = word_corpus();
  const Vocabulary v = Vocabulary::build(c, 5);
  EXPECT_EQ(v.size(), 5);
  EXPECT_NE(v.lookup("exit"), Vocabulary::kUnk);
  EXPECT_EQ(v.lookup("street"), Vocabulary::kUnk);
}

TEST(Vocabulary, EncodeAppendsEosAndTruncates) {
  const Corpus c = word_corpus();
  const Vocabulary v = Vocabulary::build(c);
  const auto ids = v.encode("the exit sign", 8);
  ASSERT_EQ(ids.size(), 4u);
  EXPECT_EQ(ids.back(), Vocabulary::kEos);
  EXPECT_EQ(ids[1], v.lookup("exit"));
  const auto truncated = v.encode("the exit sign", 3);
  ASSERT_EQ(truncated.size(), 3u);
  EXPECT_EQ(truncated.back(), Vocabulary::kEos);
  const auto empty = v.encode("", 8);
  ASSERT_EQ(empty.size(), 1u);
  EXPECT_EQ(empty[0], Vocabulary::kEos);
}

TEST(ModelParams, InitIsDeterministicPerSeed) {
  const ModelConfig cfg = tiny_model();
  ModelParams a, b, c;
  a.init(cfg, 20, 5);
  b.init(cfg, 20, 5);
  c.init(cfg, 20, 6);
  bool same_ab = true, same_ac = true;
  a.for_each([&](const std::string& name, const Mat& m) {
    Mat mb, mc;
    b.for_each([&](const std::string& n2, const Mat& m2) {
      if (n2 == name) mb = m2;
    });
    c.for_each([&](const std::string& n2, const Mat& m2) {
      if (n2 == name) mc = m2;
    });
    if ((m - mb).cwiseAbs().maxCoeff() != 0.0) same_ab = false;
    if (m.size() && mc.size() && (m - mc).cwiseAbs().maxCoeff() != 0.0) same_ac = false;
  });
  EXPECT_TRUE(same_ab);
  EXPECT_FALSE(same_ac);
}

TEST(ModelParams, LayerNormGainsStartAtOneBiasesAtZero) {
  ModelParams p;
  p.init(tiny_model(), 10, 1);
  EXPECT_DOUBLE_EQ(p.video_ln_g.minCoeff(), 1.0);
  EXPECT_DOUBLE_EQ(p.video_ln_g.maxCoeff(), 1.0);
  EXPECT_DOUBLE_EQ(p.patch_proj_b.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_DOUBLE_EQ(p.video_blocks[0].q_b.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_GT(p.token_emb.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Checkpoint, RoundTripsBitwise) {
  const Corpus c = word_corpus();
  const Vocabulary vocab = Vocabulary::build(c);
  ModelParams p;
  p.init(tiny_model(), vocab.size(), 42);
  TempDir dir;
  const std::string path = (dir.path() / "model.ckpt").string();
  save_checkpoint(path, p, vocab);
  const Checkpoint ck = load_checkpoint(path);

  EXPECT_EQ(ck.vocab.size(), vocab.size());
  for (int i = 0; i < vocab.size(); ++i) EXPECT_EQ(ck.vocab.word(i), vocab.word(i));
  EXPECT_EQ(ck.params.config.embed_dim, 16);
  std::vector<const Mat*> orig, loaded;
  p.for_each([&orig](const std::string&, const Mat& m) { orig.push_back(&m); });
  ck.params.for_each([&loaded](const std::string&, const Mat& m) { loaded.push_back(&m); });
  ASSERT_EQ(orig.size(), loaded.size());
  for (std::size_t i = 0; i < orig.size(); ++i) {
    ASSERT_EQ(orig[i]->rows(), loaded[i]->rows());
    ASSERT_EQ(orig[i]->cols(), loaded[i]->cols());
    EXPECT_EQ(std::memcmp(orig[i]->data(), loaded[i]->data(),
                          sizeof(double) * static_cast<std::size_t>(orig[i]->size())),
              0);
  }
}

TEST(Checkpoint, RejectsGarbageAndTruncation) {
  TempDir dir;
  const std::string bad = (dir.path() / "bad.ckpt").string();
  {
    std::ofstream out(bad, std::ios::binary);
    out << "not a checkpoint at all";
  }
  EXPECT_EQ(expect_error<ValidationError>([&] { load_checkpoint(bad); }, "not a checkpoint"),
            "");

  const Corpus c = word_corpus();
  const Vocabulary vocab = Vocabulary::build(c);
  ModelParams p;
  p.init(tiny_model(), vocab.size(), 1);
  const std::string good = (dir.path() / "good.ckpt").string();
  save_checkpoint(good, p, vocab);
  const auto size = std::filesystem::file_size(good);
  std::filesystem::resize_file(good, size - 64);
  EXPECT_EQ(expect_error<ValidationError>([&] { load_checkpoint(good); }, "truncated"), "");
}

TEST(Encoders, VideoTokensShape) {
  const ModelConfig cfg = tiny_model();
  ModelParams p;
  p.init(cfg, 10, 3);
  const VideoClip clip = solid_clip("v", 16, 16, 5);
  const Mat toks = encode_video_tokens(p, clip);
  EXPECT_EQ(toks.rows(), cfg.video_tokens());  // 2 frames x 4 patches
  EXPECT_EQ(toks.cols(), cfg.embed_dim);
}

TEST(Encoders, QueryEmbeddingIsUnitNorm) {
  const Corpus c = word_corpus();
  const Vocabulary vocab = Vocabulary::build(c);
  ModelParams p;
  p.init(tiny_model(), vocab.size(), 3);
  const Vec q = encode_query(p, vocab, "the exit sign");
  EXPECT_EQ(q.size(), 16);
  EXPECT_NEAR(q.norm(), 1.0, 1e-12);
}

TEST(Encoders, PaddedMaskedTextMatchesUnpadded) {
  // The text tower runs unpadded sequences; verify that padding plus an
  // attention mask over the real tokens would give bitwise-identical rows,
  // which is what makes padding unnecessary.
  const Corpus c = word_corpus();
  const Vocabulary vocab = Vocabulary::build(c);
  const ModelConfig cfg = tiny_model();
  ModelParams p;
  p.init(cfg, vocab.size(), 3);

  const std::vector<int> ids = vocab.encode("the exit sign", cfg.max_text_len);
  std::vector<int> padded = ids;
  std::vector<char> mask(ids.size(), 1);
  while (padded.size() < static_cast<std::size_t>(cfg.max_text_len)) {
    padded.push_back(Vocabulary::kPad);
    mask.push_back(0);
  }

  Tape t1;
  BoundParams b1 = bind_params(t1, p, nullptr);
  Tape::NodeId x1 = t1.gather_rows(b1("token_emb"), ids);
  x1 = t1.add_positional(x1, b1("pos_text"));
  x1 = transformer_block(t1, b1, "text.block0", x1, cfg.heads);
  const Mat plain = t1.value(x1);

  Tape t2;
  BoundParams b2 = bind_params(t2, p, nullptr);
  Tape::NodeId x2 = t2.gather_rows(b2("token_emb"), padded);
  x2 = t2.add_positional(x2, b2("pos_text"));
  x2 = transformer_block(t2, b2, "text.block0", x2, cfg.heads, mask);
  const Mat wide = t2.value(x2);

  for (Eigen::Index r = 0; r < plain.rows(); ++r)
    for (Eigen::Index col = 0; col < plain.cols(); ++col)
      EXPECT_EQ(plain(r, col), wide(r, col));
}

TEST(Encoders, SceneTextRowsCountTracksOrNoTextToken) {
  const Corpus c = word_corpus();
  const Vocabulary vocab = Vocabulary::build(c);
  const ModelConfig cfg = tiny_model();
  ModelParams p;
  p.init(cfg, vocab.size(), 3);
  const VideoClip& clip = c.videos.at("v0");

  Tape t;
  BoundParams b = bind_params(t, p, nullptr);
  Tape::NodeId rows = scene_text_rows(t, b, cfg, vocab, c.tracks_for("v0"), clip.width(),
                                      clip.height(), clip.frame_count);
  EXPECT_EQ(t.value(rows).rows(), 2);

  Tape::NodeId empty_rows =
      scene_text_rows(t, b, cfg, vocab, {}, clip.width(), clip.height(), clip.frame_count);
  EXPECT_EQ(t.value(empty_rows).rows(), 1);
  EXPECT_DOUBLE_EQ((t.value(empty_rows) - p.no_text).cwiseAbs().maxCoeff(), 0.0);
}
