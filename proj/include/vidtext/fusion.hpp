#pragma once

#include <algorithm>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "vidtext/autodiff.hpp"
#include "vidtext/common.hpp"
#include "vidtext/corpus.hpp"
#include "vidtext/encoders.hpp"
#include "vidtext/model.hpp"

namespace vidtext {

// Which token set feeds the shared fusion transformer before pooling.
enum class Mode { Vision, Text, Fusion };

inline const char* mode_name(Mode m) {
  switch (m) {
    case Mode::Vision: return "vision";
    case Mode::Text: return "text";
    case Mode::Fusion: return "fusion";
  }
  return "fusion";
}

inline Mode parse_mode(const std::string& s) {
  if (s == "vision") return Mode::Vision;
  if (s == "text") return Mode::Text;
  if (s == "fusion") return Mode::Fusion;
  throw ConfigError("unknown mode \"" + s + "\" (expected vision, text or fusion)");
}

// Mean-pool token rows and scale to unit length.
inline Tape::NodeId pool_normalize(Tape& t, Tape::NodeId tokens) {
  return t.l2_normalize_rows(t.mean_rows(tokens));
}

// Fusion transformer over an already-assembled token matrix. The optional
// mask marks which positions may be attended to; it exists so callers can
// verify that a masked placeholder row leaves the other tokens untouched.
inline Tape::NodeId fusion_tokens(Tape& t, const BoundParams& b, const ModelConfig& cfg,
                                  Tape::NodeId tokens, const std::vector<char>& mask = {}) {
  Tape::NodeId x = tokens;
  for (int i = 0; i < cfg.fusion_layers; ++i)
    x = transformer_block(t, b, "fusion.block" + std::to_string(i), x, cfg.heads, mask);
  return t.layer_norm(x, b("fusion.ln_g"), b("fusion.ln_b"));
}

// Unit-length clip embedding. All three modes run the same fusion stack;
// the mode only chooses which token rows enter it: contextual patch tokens,
// scene-text rows, or their concatenation.
inline Tape::NodeId clip_embedding(Tape& t, const BoundParams& b, const ModelConfig& cfg,
                                   const Vocabulary& vocab, const VideoClip& clip,
                                   const std::vector<TextTrack>& tracks, Mode mode) {
  Tape::NodeId toks;
  switch (mode) {
    case Mode::Vision:
      toks = video_tokens(t, b, cfg, clip);
      break;
    case Mode::Text:
      toks = scene_text_rows(t, b, cfg, vocab, tracks, clip.width(), clip.height(),
                             clip.frame_count);
      break;
    case Mode::Fusion: {
      Tape::NodeId v = video_tokens(t, b, cfg, clip);
      Tape::NodeId s = scene_text_rows(t, b, cfg, vocab, tracks, clip.width(), clip.height(),
                                       clip.frame_count);
      toks = t.concat_rows({v, s});
      break;
    }
  }
  return pool_normalize(t, fusion_tokens(t, b, cfg, toks));
}

inline Vec encode_clip(const ModelParams& params, const Vocabulary& vocab,
                       const VideoClip& clip, const std::vector<TextTrack>& tracks,
                       Mode mode) {
  Tape t;
  BoundParams b = bind_params(t, params, nullptr);
  return t.value(clip_embedding(t, b, params.config, vocab, clip, tracks, mode))
      .row(0)
      .transpose();
}

// S(i, j) = clip_i . query_j. Rows follow the clip embedding order, columns
// the query order.
inline Mat similarity_matrix(const Mat& clip_embs, const Mat& query_embs) {
  if (clip_embs.cols() != query_embs.cols())
    throw ConfigError("similarity_matrix: dimension mismatch");
  Mat s(clip_embs.rows(), query_embs.rows());
  for (Eigen::Index i = 0; i < clip_embs.rows(); ++i)
    for (Eigen::Index j = 0; j < query_embs.rows(); ++j)
      s(i, j) = clip_embs.row(i).dot(query_embs.row(j));
  return s;
}

struct SearchHit {
  std::string id;
  double score = 0.0;
};

// Flat in-memory embedding store with exhaustive cosine search. Entries
// keep insertion order; equal scores rank in that order.
class EmbeddingIndex {
 public:
  void add(const std::string& id, const Vec& v) {
    if (dim_ == 0) dim_ = static_cast<int>(v.size());
    if (static_cast<int>(v.size()) != dim_)
      throw ConfigError("index: vector for \"" + id + "\" has dimension " +
                        std::to_string(v.size()) + ", index holds " + std::to_string(dim_));
    ids_.push_back(id);
    vectors_.push_back(v);
  }

  int size() const { return static_cast<int>(ids_.size()); }
  int dim() const { return dim_; }
  const std::vector<std::string>& ids() const { return ids_; }
  const Vec& vector_at(int i) const { return vectors_.at(static_cast<std::size_t>(i)); }

  const std::string& checkpoint_path() const { return checkpoint_path_; }
  void set_checkpoint_path(std::string p) { checkpoint_path_ = std::move(p); }

  std::vector<SearchHit> search(const Vec& query, int k) const {
    if (k < 1) throw ConfigError("search: k must be >= 1");
    if (ids_.empty()) return {};
    if (static_cast<int>(query.size()) != dim_)
      throw ConfigError("search: query dimension " + std::to_string(query.size()) +
                        " does not match index dimension " + std::to_string(dim_));
    std::vector<int> order(ids_.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> score(ids_.size());
    for (std::size_t i = 0; i < ids_.size(); ++i) score[i] = vectors_[i].dot(query);
    std::stable_sort(order.begin(), order.end(),
                     [&score](int a, int b) { return score[static_cast<std::size_t>(a)] >
                                                     score[static_cast<std::size_t>(b)]; });
    const int n = std::min<int>(k, static_cast<int>(order.size()));
    std::vector<SearchHit> hits;
    hits.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
      hits.push_back({ids_[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])],
                      score[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])]});
    return hits;
  }

  void save(const std::string& path) const {
    json j;
    j["checkpoint"] = checkpoint_path_;
    j["dim"] = dim_;
    json entries = json::array();
    for (std::size_t i = 0; i < ids_.size(); ++i) {
      json vec = json::array();
      for (Eigen::Index d = 0; d < vectors_[i].size(); ++d) vec.push_back(vectors_[i](d));
      entries.push_back({{"id", ids_[i]}, {"vector", std::move(vec)}});
    }
    j["entries"] = std::move(entries);
    std::ofstream out(path);
    if (!out) throw IoError("cannot write index: " + path);
    out << j.dump() << "\n";
    if (!out) throw IoError("write failed for index: " + path);
  }

  static EmbeddingIndex load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open index: " + path);
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw ValidationError("bad index file " + path + ": " + e.what());
    }
    EmbeddingIndex idx;
    idx.checkpoint_path_ = j.value("checkpoint", std::string());
    const int dim = j.at("dim").get<int>();
    for (const json& e : j.at("entries")) {
      const auto& arr = e.at("vector");
      if (static_cast<int>(arr.size()) != dim)
        throw ValidationError("index entry \"" + e.at("id").get<std::string>() +
                              "\" has wrong dimension");
      Vec v(dim);
      for (int d = 0; d < dim; ++d) v(d) = arr[static_cast<std::size_t>(d)].get<double>();
      idx.add(e.at("id").get<std::string>(), v);
    }
    return idx;
  }

 private:
  std::vector<std::string> ids_;
  std::vector<Vec> vectors_;
  int dim_ = 0;
  std::string checkpoint_path_;
};

}  // namespace vidtext
