#include <algorithm>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include <vidtext/cli.hpp>

#include "test_util.hpp"

using namespace vidtext;
using testutil::TempDir;
namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  EXPECT_TRUE(in) << p;
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& body) {
  std::ofstream out(p);
  out << body;
}

// Relative path -> file bytes for every regular file under root.
std::map<std::string, std::string> snapshot_tree(const fs::path& root) {
  std::map<std::string, std::string> snap;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file())
      snap[fs::relative(e.path(), root).string()] = read_file(e.path());
  return snap;
}

json tiny_generate_config() {
  return json{{"video_count", 10},      {"frame_width", 16},       {"frame_height", 16},
              {"frame_count", 3},       {"queries_per_video", 4},  {"tracks_per_video", 2},
              {"ocr_vocab_size", 40},   {"attribute_vocab_size", 4}, {"test_fraction", 0.2}};
}

json tiny_run_config() {
  json model = {{"embed_dim", 16},   {"heads", 2},          {"layers", 1},
                {"fusion_layers", 1}, {"ffn_mult", 2},       {"patch_size", 8},
                {"frames_sampled", 2}, {"max_text_len", 12}, {"frame_height", 16},
                {"frame_width", 16}};
  json train = {{"batch_size", 4},   {"epochs", 2},           {"lr_initial", 1e-3},
                {"lr_after_decay", 1e-4}, {"decay_epoch", 1}, {"sigma", 0.1},
                {"seed", 5}};
  return json{{"model", model}, {"train", train}};
}

struct CliFixture : ::testing::Test {
  TempDir dir;

  fs::path make_corpus(const std::string& name = "corpus") {
    const fs::path cfg = dir.path() / (name + "_gen.json");
    write_file(cfg, tiny_generate_config().dump());
    const fs::path out = dir.path() / name;
    std::ostringstream so, se;
    EXPECT_EQ(cmd_generate({cfg.string(), out.string(), 7}, so, se), 0) << se.str();
    return out;
  }

  fs::path make_checkpoint(const fs::path& corpus, const std::string& name = "run") {
    const fs::path cfg = dir.path() / (name + "_cfg.json");
    write_file(cfg, tiny_run_config().dump());
    TrainArgs args;
    args.corpus_dir = corpus.string();
    args.config_path = cfg.string();
    args.out_dir = (dir.path() / name).string();
    std::ostringstream so, se;
    EXPECT_EQ(cmd_train(args, so, se), 0) << se.str();
    return dir.path() / name;
  }
};

}  // namespace

TEST_F(CliFixture, GenerateWritesCorpusManifestAndSummary) {
  const fs::path cfg = dir.path() / "gen.json";
  write_file(cfg, tiny_generate_config().dump());
  const fs::path out = dir.path() / "corpus";
  std::ostringstream so, se;
  ASSERT_EQ(cmd_generate({cfg.string(), out.string(), 7}, so, se), 0) << se.str();
  for (const char* f : {"videos.jsonl", "tracks.jsonl", "queries.jsonl", "manifest.json"})
    EXPECT_TRUE(fs::exists(out / f)) << f;
  EXPECT_TRUE(fs::is_directory(out / "frames"));
  EXPECT_NE(so.str().find("generated 10 videos"), std::string::npos) << so.str();

  const json manifest = load_json_file((out / "manifest.json").string());
  EXPECT_EQ(manifest.at("command"), "generate");
  EXPECT_EQ(manifest.at("seed"), 7);
  EXPECT_TRUE(manifest.contains("config_hash"));
}

TEST_F(CliFixture, GenerateIsByteDeterministicPerSeed) {
  const fs::path cfg = dir.path() / "gen.json";
  write_file(cfg, tiny_generate_config().dump());
  std::ostringstream so, se;
  ASSERT_EQ(cmd_generate({cfg.string(), (dir.path() / "a").string(), 7}, so, se), 0);
  ASSERT_EQ(cmd_generate({cfg.string(), (dir.path() / "b").string(), 7}, so, se), 0);
  ASSERT_EQ(cmd_generate({cfg.string(), (dir.path() / "c").string(), 8}, so, se), 0);

  auto a = snapshot_tree(dir.path() / "a");
  auto b = snapshot_tree(dir.path() / "b");
  auto c = snapshot_tree(dir.path() / "c");
  a.erase("manifest.json");  // timestamps differ
  b.erase("manifest.json");
  c.erase("manifest.json");
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
}

TEST_F(CliFixture, GenerateRejectsEmptyVocabulary) {
  const fs::path cfg = dir.path() / "gen.json";
  json bad = tiny_generate_config();
  bad.erase("ocr_vocab_size");
  write_file(cfg, bad.dump());
  std::ostringstream so, se;
  EXPECT_EQ(cmd_generate({cfg.string(), (dir.path() / "x").string(), 7}, so, se), 2);
  EXPECT_NE(se.str().find("ocr_vocab"), std::string::npos) << se.str();
}

TEST_F(CliFixture, TrainWritesCheckpointTraceManifest) {
  const fs::path corpus = make_corpus();
  const fs::path run = make_checkpoint(corpus);
  EXPECT_TRUE(fs::exists(run / "model.ckpt"));
  EXPECT_TRUE(fs::exists(run / "trace.csv"));
  EXPECT_TRUE(fs::exists(run / "manifest.json"));

  const Checkpoint ck = load_checkpoint((run / "model.ckpt").string());
  EXPECT_EQ(ck.params.config.embed_dim, 16);
  EXPECT_GT(ck.vocab.size(), 4);
  const std::string trace = read_file(run / "trace.csv");
  EXPECT_EQ(trace.rfind("epoch,step,loss,lr\n", 0), 0u);
}

TEST_F(CliFixture, TrainTwiceIsBitIdentical) {
  const fs::path corpus = make_corpus();
  const fs::path r1 = make_checkpoint(corpus, "run1");
  const fs::path r2 = make_checkpoint(corpus, "run2");
  EXPECT_EQ(read_file(r1 / "trace.csv"), read_file(r2 / "trace.csv"));
  EXPECT_EQ(read_file(r1 / "model.ckpt"), read_file(r2 / "model.ckpt"));
}

TEST_F(CliFixture, TrainDivergenceExitsOne) {
  const fs::path corpus = make_corpus();
  json cfg = tiny_run_config();
  cfg["train"]["lr_initial"] = 1e200;
  cfg["train"]["lr_after_decay"] = 1e200;
  cfg["train"]["clip_norm"] = 0.0;
  const fs::path cfg_path = dir.path() / "bad.json";
  write_file(cfg_path, cfg.dump());
  TrainArgs args;
  args.corpus_dir = corpus.string();
  args.config_path = cfg_path.string();
  args.out_dir = (dir.path() / "bad_run").string();
  std::ostringstream so, se;
  EXPECT_EQ(cmd_train(args, so, se), 1);
  EXPECT_NE(se.str().find("diverged"), std::string::npos) << se.str();
}

TEST_F(CliFixture, TrainRejectsUnknownModeAndConfigKey) {
  const fs::path corpus = make_corpus();
  TrainArgs args;
  args.corpus_dir = corpus.string();
  args.out_dir = (dir.path() / "r").string();
  args.mode = "psychic";
  {
    std::ostringstream so, se;
    EXPECT_EQ(cmd_train(args, so, se), 2);
    EXPECT_NE(se.str().find("psychic"), std::string::npos) << se.str();
  }
  json cfg = tiny_run_config();
  cfg["train"]["learning_rate"] = 1e-3;
  const fs::path cfg_path = dir.path() / "unknown.json";
  write_file(cfg_path, cfg.dump());
  args.mode.clear();
  args.config_path = cfg_path.string();
  {
    std::ostringstream so, se;
    EXPECT_EQ(cmd_train(args, so, se), 2);
    EXPECT_NE(se.str().find("learning_rate"), std::string::npos) << se.str();
  }
}

TEST_F(CliFixture, EvalPrintsTableAndWritesArtifacts) {
  const fs::path corpus = make_corpus();
  const fs::path run = make_checkpoint(corpus);
  EvalArgs args;
  args.corpus_dir = corpus.string();
  args.checkpoint = (run / "model.ckpt").string();
  args.out_dir = (dir.path() / "eval").string();
  std::ostringstream so, se;
  ASSERT_EQ(cmd_eval(args, so, se), 0) << se.str();
  EXPECT_NE(so.str().find("text->video"), std::string::npos) << so.str();
  EXPECT_NE(so.str().find("video->text"), std::string::npos);

  const std::string csv = read_file(dir.path() / "eval" / "metrics.csv");
  EXPECT_EQ(csv.rfind("direction,R1,R5,R10,MdR,MnR\n", 0), 0u);
  EXPECT_NE(csv.find("text_to_video,"), std::string::npos);

  const json mj = load_json_file((dir.path() / "eval" / "metrics.json").string());
  EXPECT_TRUE(mj.contains("text_to_video"));
  EXPECT_TRUE(mj.at("text_to_video").contains("R1"));

  const EmbeddingIndex index = EmbeddingIndex::load((dir.path() / "eval" / "index.json").string());
  EXPECT_EQ(index.size(), 2);  // test split of the 10-video corpus
  EXPECT_EQ(index.checkpoint_path(), args.checkpoint);
}

TEST_F(CliFixture, EvalRejectsBadModeAndTopk) {
  const fs::path corpus = make_corpus();
  const fs::path run = make_checkpoint(corpus);
  EvalArgs args;
  args.corpus_dir = corpus.string();
  args.checkpoint = (run / "model.ckpt").string();
  args.mode = "audio";
  std::ostringstream so, se;
  EXPECT_EQ(cmd_eval(args, so, se), 2);
  args.mode = "fusion";
  args.topk = "-3";
  std::ostringstream so2, se2;
  EXPECT_EQ(cmd_eval(args, so2, se2), 2);
  EXPECT_NE(se2.str().find("--topk"), std::string::npos) << se2.str();
}

TEST_F(CliFixture, SearchRanksAgainstSavedIndex) {
  const fs::path corpus = make_corpus();
  const fs::path run = make_checkpoint(corpus);
  EvalArgs eval;
  eval.corpus_dir = corpus.string();
  eval.checkpoint = (run / "model.ckpt").string();
  eval.out_dir = (dir.path() / "eval").string();
  std::ostringstream so, se;
  ASSERT_EQ(cmd_eval(eval, so, se), 0) << se.str();

  SearchArgs args;
  args.index_path = (dir.path() / "eval" / "index.json").string();
  args.query = "find the exit sign";
  args.k = 10;
  std::ostringstream so2, se2;
  ASSERT_EQ(cmd_search(args, so2, se2), 0) << se2.str();
  const std::string table = so2.str();
  EXPECT_EQ(table.rfind("rank\tscore\tvideo_id\n", 0), 0u);
  // Two indexed clips, so exactly two result rows after the header.
  EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 3);
  EXPECT_NE(table.find("1\t"), std::string::npos);
}

TEST_F(CliFixture, SearchNeedsCheckpointRecordedOrPassed) {
  EmbeddingIndex index;
  index.add("v0", Vec::Ones(4) / 2.0);
  const fs::path path = dir.path() / "bare_index.json";
  index.save(path.string());
  SearchArgs args;
  args.index_path = path.string();
  args.query = "anything";
  std::ostringstream so, se;
  EXPECT_EQ(cmd_search(args, so, se), 2);
  EXPECT_NE(se.str().find("records no checkpoint"), std::string::npos) << se.str();
}

TEST_F(CliFixture, StatsPrintsJsonAndWritesPlots) {
  const fs::path corpus = make_corpus();
  StatsArgs args;
  args.corpus_dir = corpus.string();
  std::ostringstream so, se;
  ASSERT_EQ(cmd_stats(args, so, se), 0) << se.str();
  const json report = json::parse(so.str());
  EXPECT_TRUE(report.contains("recall_of_correlation"));
  EXPECT_TRUE(report.contains("tokens_per_video"));
  EXPECT_DOUBLE_EQ(report.at("recall_of_correlation").get<double>(), 100.0);

  args.out_dir = (dir.path() / "stats").string();
  std::ostringstream so2, se2;
  ASSERT_EQ(cmd_stats(args, so2, se2), 0) << se2.str();
  EXPECT_TRUE(fs::exists(dir.path() / "stats" / "stats.json"));
  const std::string svg = read_file(dir.path() / "stats" / "tokens_per_video.svg");
  EXPECT_NE(svg.find("<svg"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir.path() / "stats" / "words_per_query.svg"));
}

TEST_F(CliFixture, AblateWritesReport) {
  const fs::path corpus = make_corpus();
  json cfg = tiny_run_config();
  cfg["train"]["epochs"] = 1;
  const fs::path cfg_path = dir.path() / "ablate.json";
  write_file(cfg_path, cfg.dump());
  AblateArgs args;
  args.corpus_dir = corpus.string();
  args.config_path = cfg_path.string();
  args.out_dir = (dir.path() / "ablation").string();
  std::ostringstream so, se;
  ASSERT_EQ(cmd_ablate(args, so, se), 0) << se.str();
  EXPECT_NE(so.str().find("[modality]"), std::string::npos) << so.str();
  EXPECT_NE(so.str().find("[token_budget]"), std::string::npos);
  const json report = load_json_file((args.out_dir + "/ablation.json"));
  ASSERT_TRUE(report.contains("rows"));
  EXPECT_EQ(report.at("rows").size(), 6u);
}
