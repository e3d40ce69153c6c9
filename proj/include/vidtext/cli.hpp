#pragma once

#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vidtext/common.hpp"
#include "vidtext/corpus.hpp"
#include "vidtext/evaluation.hpp"
#include "vidtext/fusion.hpp"
#include "vidtext/manifest.hpp"
#include "vidtext/model.hpp"
#include "vidtext/stats.hpp"
#include "vidtext/synthetic.hpp"
#include "vidtext/training.hpp"

namespace vidtext {

// In-process command implementations behind the CLI front end. Each throws
// on failure; run_command translates exceptions into the exit code
// contract: 0 success, 1 runtime error, 2 config or validation error.
template <class Fn>
int run_command(Fn&& fn, std::ostream& err) {
  try {
    fn();
    return 0;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

inline json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path);
  try {
    json j;
    in >> j;
    return j;
  } catch (const json::exception& e) {
    throw ConfigError("bad JSON in " + path + ": " + e.what());
  }
}

// --topk accepts a non-negative integer or "all".
inline int parse_topk(const std::string& s) {
  if (s == "all") return -1;
  try {
    std::size_t pos = 0;
    const int v = std::stoi(s, &pos);
    if (pos != s.size() || v < 0) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("bad --topk value \"" + s + "\" (expected a non-negative integer or all)");
  }
}

// Optional "model" and "train" sections; either may be omitted.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
};

inline RunConfig parse_run_config(const json& j) {
  RunConfig rc;
  for (auto it = j.begin(); it != j.end(); ++it)
    if (it.key() != "model" && it.key() != "train")
      throw ConfigError("unknown config section: " + it.key());
  if (j.contains("model")) rc.model = j.at("model").get<ModelConfig>();
  if (j.contains("train")) rc.train = j.at("train").get<TrainConfig>();
  return rc;
}

inline json run_config_json(const RunConfig& rc) {
  return json{{"model", rc.model}, {"train", rc.train}};
}

struct GenerateArgs {
  std::string config_path;  // empty uses generator defaults
  std::string out_dir;
  std::uint64_t seed = 7;
};

inline int cmd_generate(const GenerateArgs& args, std::ostream& out, std::ostream& err) {
  return run_command(
      [&] {
        RunManifest manifest;
        manifest.command = "generate";
        manifest.seed = args.seed;
        manifest.started = iso_timestamp_utc();
        SyntheticConfig cfg;
        if (!args.config_path.empty()) cfg = load_json_file(args.config_path).get<SyntheticConfig>();
        cfg.validate();
        const Corpus corpus = generate_synthetic(cfg, args.seed);
        save_corpus(corpus, args.out_dir);
        manifest.config = cfg;
        manifest.corpus_path = args.out_dir;
        for (const char* f : {"videos.jsonl", "tracks.jsonl", "queries.jsonl"})
          manifest.artifacts.push_back((std::filesystem::path(args.out_dir) / f).string());
        manifest.finished = iso_timestamp_utc();
        write_manifest((std::filesystem::path(args.out_dir) / "manifest.json").string(),
                       manifest);
        std::size_t track_count = 0;
        for (const auto& [id, ts] : corpus.tracks) track_count += ts.size();
        out << "generated " << corpus.videos.size() << " videos, " << track_count
            << " tracks, " << corpus.queries.size() << " queries into " << args.out_dir
            << "\n";
      },
      err);
}

struct TrainArgs {
  std::string corpus_dir;
  std::string config_path;  // empty uses defaults
  std::string out_dir;
  bool seed_set = false;
  std::uint64_t seed = 0;
  std::string mode;  // empty keeps the config value
  std::string topk;  // empty keeps the config value
};

inline int cmd_train(const TrainArgs& args, std::ostream& out, std::ostream& err) {
  return run_command(
      [&] {
        RunConfig rc;
        if (!args.config_path.empty()) rc = parse_run_config(load_json_file(args.config_path));
        if (args.seed_set) rc.train.seed = args.seed;
        if (!args.mode.empty()) rc.train.mode = parse_mode(args.mode);
        if (!args.topk.empty()) rc.train.token_budget = parse_topk(args.topk);

        RunManifest manifest;
        manifest.command = "train";
        manifest.seed = rc.train.seed;
        manifest.corpus_path = args.corpus_dir;
        manifest.config = run_config_json(rc);
        manifest.started = iso_timestamp_utc();

        const Corpus corpus = load_corpus(args.corpus_dir);
        const TrainResult result = train(corpus, rc.model, rc.train, &out);

        std::filesystem::create_directories(args.out_dir);
        const auto ckpt = std::filesystem::path(args.out_dir) / "model.ckpt";
        const auto trace = std::filesystem::path(args.out_dir) / "trace.csv";
        save_checkpoint(ckpt.string(), result.params, result.vocab);
        write_trace_csv(trace.string(), result.trace);
        manifest.checkpoint_path = ckpt.string();
        manifest.artifacts = {ckpt.string(), trace.string()};
        manifest.finished = iso_timestamp_utc();
        write_manifest((std::filesystem::path(args.out_dir) / "manifest.json").string(),
                       manifest);
        out << "trained " << result.trace.size() << " steps; checkpoint " << ckpt.string()
            << "\n";
      },
      err);
}

struct EvalArgs {
  std::string corpus_dir;
  std::string checkpoint;
  std::string out_dir;  // empty skips artifact output
  std::string mode = "fusion";
  std::string topk = "all";
  std::string split = "test";
};

inline void write_metrics_csv(const std::string& path, const EvalResult& r) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write metrics: " + path);
  out << "direction,R1,R5,R10,MdR,MnR\n";
  char buf[160];
  const auto row = [&](const char* name, const RetrievalMetrics& m) {
    std::snprintf(buf, sizeof(buf), "%s,%.17g,%.17g,%.17g,%.17g,%.17g\n", name, m.r1, m.r5,
                  m.r10, m.median_rank, m.mean_rank);
    out << buf;
  };
  row("text_to_video", r.text_to_video);
  row("video_to_text", r.video_to_text);
  if (!out) throw IoError("write failed for metrics: " + path);
}

inline int cmd_eval(const EvalArgs& args, std::ostream& out, std::ostream& err) {
  return run_command(
      [&] {
        RunManifest manifest;
        manifest.command = "eval";
        manifest.corpus_path = args.corpus_dir;
        manifest.checkpoint_path = args.checkpoint;
        manifest.started = iso_timestamp_utc();

        const Corpus corpus = load_corpus(args.corpus_dir);
        const Checkpoint ck = load_checkpoint(args.checkpoint);
        const Mode mode = parse_mode(args.mode);
        const int budget = parse_topk(args.topk);
        const Split split = parse_split(args.split);
        manifest.config = json{{"mode", mode_name(mode)},
                               {"topk", budget},
                               {"split", split_name(split)},
                               {"model", ck.params.config}};

        EvalResult result = evaluate(corpus, ck.params, ck.vocab, split, mode, budget);
        print_eval(out, result);

        if (!args.out_dir.empty()) {
          std::filesystem::create_directories(args.out_dir);
          const auto metrics_csv = std::filesystem::path(args.out_dir) / "metrics.csv";
          const auto metrics_json = std::filesystem::path(args.out_dir) / "metrics.json";
          const auto index_path = std::filesystem::path(args.out_dir) / "index.json";
          write_metrics_csv(metrics_csv.string(), result);
          std::ofstream mj(metrics_json.string());
          if (!mj) throw IoError("cannot write metrics: " + metrics_json.string());
          mj << eval_to_json(result).dump(2) << "\n";
          result.index.set_checkpoint_path(args.checkpoint);
          result.index.save(index_path.string());
          manifest.artifacts = {metrics_csv.string(), metrics_json.string(),
                                index_path.string()};
          manifest.finished = iso_timestamp_utc();
          write_manifest((std::filesystem::path(args.out_dir) / "manifest.json").string(),
                         manifest);
        }
      },
      err);
}

struct AblateArgs {
  std::string corpus_dir;
  std::string config_path;  // empty uses defaults
  std::string out_dir;
  bool seed_set = false;
  std::uint64_t seed = 0;
};

inline int cmd_ablate(const AblateArgs& args, std::ostream& out, std::ostream& err) {
  return run_command(
      [&] {
        RunConfig rc;
        if (!args.config_path.empty()) rc = parse_run_config(load_json_file(args.config_path));
        if (args.seed_set) rc.train.seed = args.seed;

        RunManifest manifest;
        manifest.command = "ablate";
        manifest.seed = rc.train.seed;
        manifest.corpus_path = args.corpus_dir;
        manifest.config = run_config_json(rc);
        manifest.started = iso_timestamp_utc();

        const Corpus corpus = load_corpus(args.corpus_dir);
        const AblationReport report = ablate(corpus, rc.model, rc.train, {10, 20, -1}, &out);
        print_ablation(out, report);

        std::filesystem::create_directories(args.out_dir);
        const auto path = std::filesystem::path(args.out_dir) / "ablation.json";
        std::ofstream aj(path.string());
        if (!aj) throw IoError("cannot write ablation report: " + path.string());
        aj << ablation_to_json(report).dump(2) << "\n";
        manifest.artifacts = {path.string()};
        manifest.finished = iso_timestamp_utc();
        write_manifest((std::filesystem::path(args.out_dir) / "manifest.json").string(),
                       manifest);
      },
      err);
}

struct StatsArgs {
  std::string corpus_dir;
  std::string out_dir;  // empty prints JSON only
};

inline int cmd_stats(const StatsArgs& args, std::ostream& out, std::ostream& err) {
  return run_command(
      [&] {
        const Corpus corpus = load_corpus(args.corpus_dir);
        const StatsReport report = corpus_stats(corpus);
        out << stats_to_json(report).dump(2) << "\n";
        if (!args.out_dir.empty()) {
          RunManifest manifest;
          manifest.command = "stats";
          manifest.corpus_path = args.corpus_dir;
          manifest.started = iso_timestamp_utc();
          std::filesystem::create_directories(args.out_dir);
          const auto stats_path = std::filesystem::path(args.out_dir) / "stats.json";
          std::ofstream sj(stats_path.string());
          if (!sj) throw IoError("cannot write stats: " + stats_path.string());
          sj << stats_to_json(report).dump(2) << "\n";
          const auto tokens_svg = std::filesystem::path(args.out_dir) / "tokens_per_video.svg";
          const auto words_svg = std::filesystem::path(args.out_dir) / "words_per_query.svg";
          std::ofstream ts(tokens_svg.string());
          ts << histogram_svg(report.tokens_per_video, "tracks per video");
          std::ofstream ws(words_svg.string());
          ws << histogram_svg(report.words_per_query, "words per query");
          manifest.artifacts = {stats_path.string(), tokens_svg.string(), words_svg.string()};
          manifest.finished = iso_timestamp_utc();
          write_manifest((std::filesystem::path(args.out_dir) / "manifest.json").string(),
                         manifest);
        }
      },
      err);
}

struct SearchArgs {
  std::string index_path;
  std::string query;
  int k = 10;
  std::string checkpoint;  // empty uses the path recorded in the index
};

inline int cmd_search(const SearchArgs& args, std::ostream& out, std::ostream& err) {
  return run_command(
      [&] {
        const EmbeddingIndex index = EmbeddingIndex::load(args.index_path);
        std::string ckpt = args.checkpoint.empty() ? index.checkpoint_path() : args.checkpoint;
        if (ckpt.empty())
          throw ConfigError("index records no checkpoint; pass --checkpoint");
        const Checkpoint ck = load_checkpoint(ckpt);
        const Vec q = encode_query(ck.params, ck.vocab, args.query);
        const std::vector<SearchHit> hits = index.search(q, args.k);
        out << "rank\tscore\tvideo_id\n";
        char buf[160];
        for (std::size_t i = 0; i < hits.size(); ++i) {
          std::snprintf(buf, sizeof(buf), "%zu\t%.6f\t%s\n", i + 1, hits[i].score,
                        hits[i].id.c_str());
          out << buf;
        }
      },
      err);
}

}  // namespace vidtext
