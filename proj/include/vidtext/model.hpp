#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "vidtext/common.hpp"
#include "vidtext/corpus.hpp"
#include "vidtext/rng.hpp"
#include "vidtext/textnorm.hpp"

namespace vidtext {

using nlohmann::json;

struct ModelConfig {
  int embed_dim = 64;
  int heads = 4;
  int layers = 2;         // depth of the video and text encoder stacks
  int fusion_layers = 1;
  int ffn_mult = 4;
  int patch_size = 16;
  int frames_sampled = 4;
  int max_text_len = 32;
  int frame_height = 64;
  int frame_width = 64;

  int patch_dim() const { return patch_size * patch_size * 3; }
  int grid_rows() const { return frame_height / patch_size; }
  int grid_cols() const { return frame_width / patch_size; }
  int num_patches() const { return grid_rows() * grid_cols(); }
  int video_tokens() const { return frames_sampled * num_patches(); }

  void validate() const {
    auto require = [](bool ok, const char* what) {
      if (!ok) throw ConfigError(std::string("model config: ") + what);
    };
    require(embed_dim >= 1, "embed_dim must be >= 1");
    require(heads >= 1, "heads must be >= 1");
    require(embed_dim % heads == 0, "embed_dim must be divisible by heads");
    require(layers >= 1, "layers must be >= 1");
    require(fusion_layers >= 1, "fusion_layers must be >= 1");
    require(ffn_mult >= 1, "ffn_mult must be >= 1");
    require(patch_size >= 1, "patch_size must be >= 1");
    require(frames_sampled >= 1, "frames_sampled must be >= 1");
    require(max_text_len >= 2, "max_text_len must be >= 2");
    require(frame_height >= patch_size && frame_width >= patch_size,
            "frame size must fit at least one patch");
  }
};

inline void to_json(json& j, const ModelConfig& c) {
  j = json{{"embed_dim", c.embed_dim},
           {"heads", c.heads},
           {"layers", c.layers},
           {"fusion_layers", c.fusion_layers},
           {"ffn_mult", c.ffn_mult},
           {"patch_size", c.patch_size},
           {"frames_sampled", c.frames_sampled},
           {"max_text_len", c.max_text_len},
           {"frame_height", c.frame_height},
           {"frame_width", c.frame_width}};
}

inline void from_json(const json& j, ModelConfig& c) {
  static const std::set<std::string> known = {
      "embed_dim",     "heads",         "layers",       "fusion_layers",
      "ffn_mult",      "patch_size",    "frames_sampled", "max_text_len",
      "frame_height",  "frame_width"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key()))
      throw ConfigError("unknown model config key: " + it.key());
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.heads = j.value("heads", c.heads);
  c.layers = j.value("layers", c.layers);
  c.fusion_layers = j.value("fusion_layers", c.fusion_layers);
  c.ffn_mult = j.value("ffn_mult", c.ffn_mult);
  c.patch_size = j.value("patch_size", c.patch_size);
  c.frames_sampled = j.value("frames_sampled", c.frames_sampled);
  c.max_text_len = j.value("max_text_len", c.max_text_len);
  c.frame_height = j.value("frame_height", c.frame_height);
  c.frame_width = j.value("frame_width", c.frame_width);
}

// Word-level vocabulary shared by the scene-text encoder and the query
// encoder. Ids 0..2 are reserved; out-of-vocabulary words map to [UNK].
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kEos = 2;

  Vocabulary() {
    for (const char* w : {"[PAD]", "[UNK]", "[EOS]"}) add(w);
  }

  // Frequency-ranked over every track word and query word in the corpus,
  // both splits included. max_size < 0 means unbounded; otherwise the total
  // size including the three reserved ids is capped at max_size.
  static Vocabulary build(const Corpus& corpus, int max_size = -1) {
    std::map<std::string, long> counts;
    for (const auto& [vid, tracks] : corpus.tracks)
      for (const TextTrack& t : tracks)
        for (const std::string& w : normalized_words(t.word)) ++counts[w];
    for (const Query& q : corpus.queries)
      for (const std::string& w : normalized_words(q.text)) ++counts[w];
    std::vector<std::pair<std::string, long>> ranked(counts.begin(), counts.end());
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    Vocabulary v;
    for (const auto& [word, count] : ranked) {
      if (max_size >= 0 && v.size() >= max_size) break;
      v.add(word);
    }
    return v;
  }

  int size() const { return static_cast<int>(words_.size()); }
  const std::string& word(int id) const { return words_.at(static_cast<std::size_t>(id)); }

  int lookup(const std::string& normalized) const {
    auto it = index_.find(normalized);
    return it == index_.end() ? kUnk : it->second;
  }

  // Token ids for a text: normalized words truncated to max_len - 1, then
  // [EOS]. Never padded; sequences keep their natural length.
  std::vector<int> encode(const std::string& text, int max_len) const {
    if (max_len < 2) throw ConfigError("encode: max_len must be >= 2");
    std::vector<int> ids;
    for (const std::string& w : normalized_words(text)) {
      if (static_cast<int>(ids.size()) == max_len - 1) break;
      ids.push_back(lookup(w));
    }
    ids.push_back(kEos);
    return ids;
  }

  json to_json_array() const {
    json arr = json::array();
    for (std::size_t i = 3; i < words_.size(); ++i) arr.push_back(words_[i]);
    return arr;
  }

  static Vocabulary from_json_array(const json& arr) {
    Vocabulary v;
    for (const auto& w : arr) v.add(w.get<std::string>());
    return v;
  }

 private:
  void add(const std::string& w) {
    index_.emplace(w, static_cast<int>(words_.size()));
    words_.push_back(w);
  }

  std::vector<std::string> words_;
  std::unordered_map<std::string, int> index_;
};

// Pre-norm transformer block: x += attn(LN(x)); x += ffn(LN(x)).
struct TransformerBlock {
  Mat ln1_g, ln1_b;
  Mat q_w, q_b, k_w, k_b, v_w, v_b, o_w, o_b;
  Mat ln2_g, ln2_b;
  Mat ffn1_w, ffn1_b, ffn2_w, ffn2_b;

  void allocate(int d, int ffn_mult) {
    ln1_g.resize(1, d);
    ln1_b.resize(1, d);
    q_w.resize(d, d);
    q_b.resize(1, d);
    k_w.resize(d, d);
    k_b.resize(1, d);
    v_w.resize(d, d);
    v_b.resize(1, d);
    o_w.resize(d, d);
    o_b.resize(1, d);
    ln2_g.resize(1, d);
    ln2_b.resize(1, d);
    ffn1_w.resize(d, d * ffn_mult);
    ffn1_b.resize(1, d * ffn_mult);
    ffn2_w.resize(d * ffn_mult, d);
    ffn2_b.resize(1, d);
  }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".ln1_g", ln1_g);
    f(prefix + ".ln1_b", ln1_b);
    f(prefix + ".q_w", q_w);
    f(prefix + ".q_b", q_b);
    f(prefix + ".k_w", k_w);
    f(prefix + ".k_b", k_b);
    f(prefix + ".v_w", v_w);
    f(prefix + ".v_b", v_b);
    f(prefix + ".o_w", o_w);
    f(prefix + ".o_b", o_b);
    f(prefix + ".ln2_g", ln2_g);
    f(prefix + ".ln2_b", ln2_b);
    f(prefix + ".ffn1_w", ffn1_w);
    f(prefix + ".ffn1_b", ffn1_b);
    f(prefix + ".ffn2_w", ffn2_w);
    f(prefix + ".ffn2_b", ffn2_b);
  }
};

// Every learned tensor in the model. for_each() visits them in a fixed
// order under stable dotted names; initialization, the optimizer and the
// checkpoint format all run off that one registry.
struct ModelParams {
  ModelConfig config;
  int vocab_size = 0;

  Mat patch_proj_w, patch_proj_b;
  Mat pos_temporal, pos_spatial;
  std::vector<TransformerBlock> video_blocks;
  Mat video_ln_g, video_ln_b;

  Mat token_emb;
  Mat pos_text;
  std::vector<TransformerBlock> text_blocks;
  Mat text_ln_g, text_ln_b;

  Mat st_proj_w, st_proj_b;
  Mat no_text;
  std::vector<TransformerBlock> fusion_blocks;
  Mat fusion_ln_g, fusion_ln_b;

  void allocate(const ModelConfig& cfg, int vocab) {
    cfg.validate();
    if (vocab < 3) throw ConfigError("model: vocabulary too small");
    config = cfg;
    vocab_size = vocab;
    const int d = cfg.embed_dim;
    patch_proj_w.resize(cfg.patch_dim(), d);
    patch_proj_b.resize(1, d);
    pos_temporal.resize(cfg.frames_sampled, d);
    pos_spatial.resize(cfg.num_patches(), d);
    video_blocks.assign(static_cast<std::size_t>(cfg.layers), {});
    for (auto& b : video_blocks) b.allocate(d, cfg.ffn_mult);
    video_ln_g.resize(1, d);
    video_ln_b.resize(1, d);
    token_emb.resize(vocab, d);
    pos_text.resize(cfg.max_text_len, d);
    text_blocks.assign(static_cast<std::size_t>(cfg.layers), {});
    for (auto& b : text_blocks) b.allocate(d, cfg.ffn_mult);
    text_ln_g.resize(1, d);
    text_ln_b.resize(1, d);
    st_proj_w.resize(11, d);
    st_proj_b.resize(1, d);
    no_text.resize(1, d);
    fusion_blocks.assign(static_cast<std::size_t>(cfg.fusion_layers), {});
    for (auto& b : fusion_blocks) b.allocate(d, cfg.ffn_mult);
    fusion_ln_g.resize(1, d);
    fusion_ln_b.resize(1, d);
  }

  template <class F>
  void for_each(F&& f) {
    f("patch_proj_w", patch_proj_w);
    f("patch_proj_b", patch_proj_b);
    f("pos_temporal", pos_temporal);
    f("pos_spatial", pos_spatial);
    for (std::size_t i = 0; i < video_blocks.size(); ++i)
      video_blocks[i].visit("video.block" + std::to_string(i), f);
    f("video.ln_g", video_ln_g);
    f("video.ln_b", video_ln_b);
    f("token_emb", token_emb);
    f("pos_text", pos_text);
    for (std::size_t i = 0; i < text_blocks.size(); ++i)
      text_blocks[i].visit("text.block" + std::to_string(i), f);
    f("text.ln_g", text_ln_g);
    f("text.ln_b", text_ln_b);
    f("st_proj_w", st_proj_w);
    f("st_proj_b", st_proj_b);
    f("no_text", no_text);
    for (std::size_t i = 0; i < fusion_blocks.size(); ++i)
      fusion_blocks[i].visit("fusion.block" + std::to_string(i), f);
    f("fusion.ln_g", fusion_ln_g);
    f("fusion.ln_b", fusion_ln_b);
  }

  template <class F>
  void for_each(F&& f) const {
    const_cast<ModelParams*>(this)->for_each(
        [&f](const std::string& name, Mat& m) { f(name, static_cast<const Mat&>(m)); });
  }

  // Gaussian(0, 0.02) weights, unit layer-norm gains, zero offsets and
  // biases. Fill order follows the registry, so a given seed always yields
  // the same parameters.
  void init(const ModelConfig& cfg, int vocab, std::uint64_t seed) {
    allocate(cfg, vocab);
    Rng rng(mix_seed(seed, 0x9A7A'511Full));
    for_each([&rng](const std::string& name, Mat& m) {
      if (name.size() >= 2 && name.compare(name.size() - 2, 2, "_g") == 0) {
        m.setOnes();
      } else if (name.size() >= 2 && name.compare(name.size() - 2, 2, "_b") == 0) {
        m.setZero();
      } else {
        for (Eigen::Index r = 0; r < m.rows(); ++r)
          for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = rng.normal() * 0.02;
      }
    });
  }

  std::size_t tensor_count() const {
    std::size_t n = 0;
    for_each([&n](const std::string&, const Mat&) { ++n; });
    return n;
  }
};

// Same tensor shapes as p, every entry zero. Used for gradients and
// optimizer moments.
inline ModelParams zero_like(const ModelParams& p) {
  ModelParams z;
  z.allocate(p.config, p.vocab_size);
  z.for_each([](const std::string&, Mat& m) { m.setZero(); });
  return z;
}

// Binary checkpoint: magic, format version, a JSON header (config, vocab,
// tensor shapes) and the tensor data as row-major doubles in header order.
inline constexpr char kCheckpointMagic[8] = {'V', 'T', 'X', 'C', 'K', 'P', 'T', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelParams params;
  Vocabulary vocab;
};

inline void save_checkpoint(const std::string& path, const ModelParams& params,
                            const Vocabulary& vocab) {
  json header;
  header["config"] = params.config;
  header["vocab"] = vocab.to_json_array();
  json tensors = json::array();
  params.for_each([&tensors](const std::string& name, const Mat& m) {
    tensors.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}});
  });
  header["tensors"] = tensors;
  const std::string header_str = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  const std::uint32_t version = kCheckpointVersion;
  out.write(reinterpret_cast<const char*>(&version), sizeof(version));
  const std::uint64_t len = header_str.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  params.for_each([&out](const std::string&, const Mat& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        const double v = m(r, c);
        out.write(reinterpret_cast<const char*>(&v), sizeof(v));
      }
  });
  if (!out) throw IoError("write failed for checkpoint: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw ValidationError("not a checkpoint file: " + path);
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (!in || version != kCheckpointVersion)
    throw ValidationError("unsupported checkpoint version in " + path);
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in) throw ValidationError("truncated checkpoint header: " + path);
  std::string header_str(len, '\0');
  in.read(header_str.data(), static_cast<std::streamsize>(len));
  if (!in) throw ValidationError("truncated checkpoint header: " + path);

  json header;
  try {
    header = json::parse(header_str);
  } catch (const json::exception& e) {
    throw ValidationError("bad checkpoint header in " + path + ": " + e.what());
  }

  Checkpoint ck;
  ck.vocab = Vocabulary::from_json_array(header.at("vocab"));
  ModelConfig cfg = header.at("config").get<ModelConfig>();
  ck.params.allocate(cfg, ck.vocab.size());

  std::unordered_map<std::string, Mat*> registry;
  ck.params.for_each([&registry](const std::string& name, Mat& m) { registry[name] = &m; });
  const json& tensors = header.at("tensors");
  if (tensors.size() != registry.size())
    throw ValidationError("checkpoint lists " + std::to_string(tensors.size()) +
                          " tensors, model has " + std::to_string(registry.size()));
  for (const json& t : tensors) {
    const std::string name = t.at("name").get<std::string>();
    auto it = registry.find(name);
    if (it == registry.end())
      throw ValidationError("checkpoint tensor not in model: " + name);
    Mat& m = *it->second;
    const auto rows = t.at("rows").get<Eigen::Index>();
    const auto cols = t.at("cols").get<Eigen::Index>();
    if (rows != m.rows() || cols != m.cols())
      throw ValidationError("checkpoint tensor " + name + ": expected " +
                            std::to_string(m.rows()) + " x " + std::to_string(m.cols()) +
                            ", found " + std::to_string(rows) + " x " +
                            std::to_string(cols));
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) {
        double v = 0.0;
        in.read(reinterpret_cast<char*>(&v), sizeof(v));
        if (!in) throw ValidationError("truncated checkpoint data: " + path);
        m(r, c) = v;
      }
  }
  return ck;
}

}  // namespace vidtext
