#include <iostream>
#include <string>

#include <CLI11.hpp>

#include <vidtext/vidtext.hpp>

int main(int argc, char** argv) {
  CLI::App app{"scene-text-aware video retrieval toolkit"};
  app.require_subcommand(1);

  vidtext::GenerateArgs gen;
  CLI::App* generate = app.add_subcommand("generate", "write a synthetic corpus");
  generate->add_option("--config", gen.config_path, "generator config JSON");
  generate->add_option("--seed", gen.seed, "random seed");
  generate->add_option("--out", gen.out_dir, "corpus output directory")->required();

  vidtext::TrainArgs tr;
  bool tr_seed_set = false;
  CLI::App* train = app.add_subcommand("train", "train a retrieval model");
  train->add_option("--corpus", tr.corpus_dir, "corpus directory")->required();
  train->add_option("--config", tr.config_path, "model/train config JSON");
  train->add_option("--out", tr.out_dir, "run output directory")->required();
  train->add_option("--seed", tr.seed, "random seed (overrides config)")
      ->each([&tr_seed_set](const std::string&) { tr_seed_set = true; });
  train->add_option("--mode", tr.mode, "vision, text or fusion (overrides config)");
  train->add_option("--topk", tr.topk, "track budget per video, integer or all");

  vidtext::EvalArgs ev;
  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--corpus", ev.corpus_dir, "corpus directory")->required();
  eval->add_option("--checkpoint", ev.checkpoint, "model checkpoint")->required();
  eval->add_option("--out", ev.out_dir, "artifact output directory");
  eval->add_option("--mode", ev.mode, "vision, text or fusion");
  eval->add_option("--topk", ev.topk, "track budget per video, integer or all");
  eval->add_option("--split", ev.split, "train or test");

  vidtext::AblateArgs ab;
  bool ab_seed_set = false;
  CLI::App* ablate = app.add_subcommand("ablate", "train and evaluate the comparison grid");
  ablate->add_option("--corpus", ab.corpus_dir, "corpus directory")->required();
  ablate->add_option("--config", ab.config_path, "model/train config JSON");
  ablate->add_option("--out", ab.out_dir, "artifact output directory")->required();
  ablate->add_option("--seed", ab.seed, "random seed (overrides config)")
      ->each([&ab_seed_set](const std::string&) { ab_seed_set = true; });

  vidtext::StatsArgs st;
  CLI::App* stats = app.add_subcommand("stats", "corpus statistics report");
  stats->add_option("--corpus", st.corpus_dir, "corpus directory")->required();
  stats->add_option("--out", st.out_dir, "artifact output directory");

  vidtext::SearchArgs se;
  CLI::App* search = app.add_subcommand("search", "query an embedding index");
  search->add_option("--index", se.index_path, "index file from eval")->required();
  search->add_option("--query", se.query, "query text")->required();
  search->add_option("--k", se.k, "results to return");
  search->add_option("--checkpoint", se.checkpoint, "checkpoint override");

  CLI11_PARSE(app, argc, argv);

  if (generate->parsed()) return vidtext::cmd_generate(gen, std::cout, std::cerr);
  if (train->parsed()) {
    tr.seed_set = tr_seed_set;
    return vidtext::cmd_train(tr, std::cout, std::cerr);
  }
  if (eval->parsed()) return vidtext::cmd_eval(ev, std::cout, std::cerr);
  if (ablate->parsed()) {
    ab.seed_set = ab_seed_set;
    return vidtext::cmd_ablate(ab, std::cout, std::cerr);
  }
  if (stats->parsed()) return vidtext::cmd_stats(st, std::cout, std::cerr);
  if (search->parsed()) return vidtext::cmd_search(se, std::cout, std::cerr);
  return 1;
}
