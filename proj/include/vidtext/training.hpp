#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vidtext/autodiff.hpp"
#include "vidtext/common.hpp"
#include "vidtext/corpus.hpp"
#include "vidtext/encoders.hpp"
#include "vidtext/fusion.hpp"
#include "vidtext/model.hpp"
#include "vidtext/optimizer.hpp"
#include "vidtext/rng.hpp"

namespace vidtext {

struct TrainConfig {
  int batch_size = 16;
  int epochs = 50;
  double lr_initial = 3e-5;
  double lr_after_decay = 3e-6;
  int decay_epoch = 30;
  double sigma = 0.05;
  std::uint64_t seed = 0;
  Mode mode = Mode::Fusion;
  int token_budget = -1;  // < 0 keeps every track
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double clip_norm = 1.0;
  int vocab_max = -1;  // < 0 keeps the full vocabulary

  void validate() const {
    auto require = [](bool ok, const char* what) {
      if (!ok) throw ConfigError(std::string("train config: ") + what);
    };
    require(batch_size >= 2, "batch_size must be >= 2");
    require(epochs >= 1, "epochs must be >= 1");
    require(lr_initial > 0.0 && lr_after_decay > 0.0, "learning rates must be > 0");
    require(decay_epoch >= 0, "decay_epoch must be >= 0");
    require(sigma > 0.0, "sigma must be > 0");
    require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0,
            "betas must lie in [0, 1)");
    require(weight_decay >= 0.0, "weight_decay must be >= 0");
    require(vocab_max < 0 || vocab_max >= 4, "vocab_max must leave room for words");
  }
};

inline void to_json(json& j, const TrainConfig& c) {
  j = json{{"batch_size", c.batch_size},
           {"epochs", c.epochs},
           {"lr_initial", c.lr_initial},
           {"lr_after_decay", c.lr_after_decay},
           {"decay_epoch", c.decay_epoch},
           {"sigma", c.sigma},
           {"seed", c.seed},
           {"mode", mode_name(c.mode)},
           {"token_budget", c.token_budget},
           {"weight_decay", c.weight_decay},
           {"beta1", c.beta1},
           {"beta2", c.beta2},
           {"clip_norm", c.clip_norm},
           {"vocab_max", c.vocab_max}};
}

inline void from_json(const json& j, TrainConfig& c) {
  static const std::set<std::string> known = {
      "batch_size", "epochs",     "lr_initial", "lr_after_decay", "decay_epoch",
      "sigma",      "seed",       "mode",       "token_budget",   "weight_decay",
      "beta1",      "beta2",      "clip_norm",  "vocab_max"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key()))
      throw ConfigError("unknown train config key: " + it.key());
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.lr_initial = j.value("lr_initial", c.lr_initial);
  c.lr_after_decay = j.value("lr_after_decay", c.lr_after_decay);
  c.decay_epoch = j.value("decay_epoch", c.decay_epoch);
  c.sigma = j.value("sigma", c.sigma);
  c.seed = j.value("seed", c.seed);
  if (j.contains("mode")) c.mode = parse_mode(j.at("mode").get<std::string>());
  c.token_budget = j.value("token_budget", c.token_budget);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  c.vocab_max = j.value("vocab_max", c.vocab_max);
}

// Step schedule: the initial rate up to decay_epoch, the decayed rate from
// decay_epoch on (epochs counted from zero).
inline double epoch_lr(const TrainConfig& c, int epoch) {
  return epoch >= c.decay_epoch ? c.lr_after_decay : c.lr_initial;
}

inline std::vector<TextTrack> apply_token_budget(const std::vector<TextTrack>& tracks,
                                                 int budget) {
  return budget < 0 ? tracks : select_topk_tokens(tracks, budget);
}

// Symmetric InfoNCE value for matched embedding rows, as a plain number.
inline double contrastive_loss(const Mat& x, const Mat& y, double sigma) {
  Tape t;
  return t.value(t.info_nce(t.constant(x), t.constant(y), sigma))(0, 0);
}

struct Batch {
  std::vector<std::string> video_ids;
  std::vector<int> query_index;  // into corpus.queries, parallel to video_ids
};

// Shuffle the training videos, draw one of each video's training queries
// uniformly, then cut into full batches; a trailing partial batch is
// dropped. Deterministic in (seed, epoch).
inline std::vector<Batch> make_batches(const Corpus& corpus, int batch_size,
                                       std::uint64_t seed, int epoch) {
  if (batch_size < 1) throw ConfigError("make_batches: batch_size must be >= 1");
  std::map<std::string, std::vector<int>> queries_of;
  for (int i = 0; i < static_cast<int>(corpus.queries.size()); ++i)
    if (corpus.queries[static_cast<std::size_t>(i)].split == Split::Train)
      queries_of[corpus.queries[static_cast<std::size_t>(i)].video_id].push_back(i);
  std::vector<std::string> ids = corpus.video_ids(Split::Train);

  Rng rng(mix_seed(seed, 0xBA7C'0000ull + static_cast<std::uint64_t>(epoch)));
  rng.shuffle(ids);

  std::vector<Batch> batches;
  Batch cur;
  for (const std::string& id : ids) {
    const std::vector<int>& qs = queries_of.at(id);
    cur.video_ids.push_back(id);
    cur.query_index.push_back(qs[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(qs.size()) - 1))]);
    if (static_cast<int>(cur.video_ids.size()) == batch_size) {
      batches.push_back(std::move(cur));
      cur = {};
    }
  }
  return batches;
}

struct TraceRow {
  int epoch = 0;
  int step = 0;  // global step counter across epochs
  double loss = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  ModelParams params;
  Vocabulary vocab;
  std::vector<TraceRow> trace;
};

// One optimization step over a prepared batch; returns the loss.
inline double train_step(const Corpus& corpus, const Batch& batch, ModelParams& params,
                         const Vocabulary& vocab, AdamW& opt, const TrainConfig& tcfg,
                         double lr) {
  Tape tape;
  ModelParams grads = zero_like(params);
  BoundParams b = bind_params(tape, params, &grads);
  std::vector<Tape::NodeId> clip_rows, query_rows;
  clip_rows.reserve(batch.video_ids.size());
  query_rows.reserve(batch.video_ids.size());
  for (std::size_t i = 0; i < batch.video_ids.size(); ++i) {
    const VideoClip& clip = corpus.videos.at(batch.video_ids[i]);
    const std::vector<TextTrack> tracks =
        apply_token_budget(corpus.tracks_for(clip.id), tcfg.token_budget);
    clip_rows.push_back(
        clip_embedding(tape, b, params.config, vocab, clip, tracks, tcfg.mode));
    const Query& q = corpus.queries.at(static_cast<std::size_t>(batch.query_index[i]));
    query_rows.push_back(query_embedding(tape, b, params.config, vocab, q.text));
  }
  Tape::NodeId loss = tape.info_nce(tape.concat_rows(clip_rows),
                                    tape.concat_rows(query_rows), tcfg.sigma);
  const double value = tape.value(loss)(0, 0);
  if (!std::isfinite(value)) return value;
  tape.backward(loss);
  AdamWConfig acfg;
  acfg.lr = lr;
  acfg.beta1 = tcfg.beta1;
  acfg.beta2 = tcfg.beta2;
  acfg.weight_decay = tcfg.weight_decay;
  acfg.clip_norm = tcfg.clip_norm;
  opt.step(params, grads, acfg);
  return value;
}

inline TrainResult train(const Corpus& corpus, const ModelConfig& mcfg,
                         const TrainConfig& tcfg, std::ostream* log = nullptr) {
  mcfg.validate();
  tcfg.validate();
  validate(corpus);

  TrainResult out;
  out.vocab = Vocabulary::build(corpus, tcfg.vocab_max);
  out.params.init(mcfg, out.vocab.size(), tcfg.seed);
  AdamW opt(out.params);

  int step = 0;
  for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
    const double lr = epoch_lr(tcfg, epoch);
    const std::vector<Batch> batches = make_batches(corpus, tcfg.batch_size, tcfg.seed, epoch);
    if (batches.empty())
      throw ConfigError("train: batch_size " + std::to_string(tcfg.batch_size) +
                        " exceeds the " +
                        std::to_string(corpus.video_ids(Split::Train).size()) +
                        " training videos");
    double epoch_loss = 0.0;
    for (const Batch& batch : batches) {
      const double value = train_step(corpus, batch, out.params, out.vocab, opt, tcfg, lr);
      if (!std::isfinite(value))
        throw NumericError("training diverged: non-finite loss at epoch " +
                           std::to_string(epoch) + " step " + std::to_string(step));
      out.trace.push_back({epoch, step, value, lr});
      epoch_loss += value;
      ++step;
    }
    if (log)
      *log << "epoch " << epoch << ": mean loss "
           << epoch_loss / static_cast<double>(batches.size()) << ", lr " << lr << "\n";
  }
  return out;
}

inline void write_trace_csv(const std::string& path, const std::vector<TraceRow>& trace) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write trace: " + path);
  out << "epoch,step,loss,lr\n";
  char buf[128];
  for (const TraceRow& r : trace) {
    std::snprintf(buf, sizeof(buf), "%d,%d,%.17g,%.17g\n", r.epoch, r.step, r.loss, r.lr);
    out << buf;
  }
  if (!out) throw IoError("write failed for trace: " + path);
}

}  // namespace vidtext
