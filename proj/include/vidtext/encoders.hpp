#pragma once

#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "vidtext/autodiff.hpp"
#include "vidtext/common.hpp"
#include "vidtext/corpus.hpp"
#include "vidtext/model.hpp"

namespace vidtext {

// Evenly spaced frame indices over [0, frame_count). With a single sample
// the first frame is taken; indices repeat when the clip is shorter than
// the sample count.
inline std::vector<int> sampled_frame_indices(int frame_count, int k) {
  if (frame_count < 1) throw ConfigError("sampled_frame_indices: empty clip");
  if (k < 1) throw ConfigError("sampled_frame_indices: k must be >= 1");
  std::vector<int> out(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) {
    if (k == 1) {
      out[0] = 0;
    } else {
      const double pos = static_cast<double>(i) * (frame_count - 1) / (k - 1);
      out[static_cast<std::size_t>(i)] = static_cast<int>(std::lround(pos));
    }
  }
  return out;
}

// Flattened non-overlapping patches from the sampled frames, one row per
// patch, frame-major then grid row-major. Pixels flatten as (y, x, channel).
// Border pixels that do not fill a whole patch are dropped.
inline Mat patchify(const VideoClip& clip, const ModelConfig& cfg) {
  if (clip.frames.empty()) throw ValidationError("patchify: video has no frames");
  if (clip.width() != cfg.frame_width || clip.height() != cfg.frame_height)
    throw ValidationError("patchify: video \"" + clip.id + "\" is " +
                          std::to_string(clip.width()) + "x" + std::to_string(clip.height()) +
                          ", model expects " + std::to_string(cfg.frame_width) + "x" +
                          std::to_string(cfg.frame_height));
  const int p = cfg.patch_size;
  const int gy = cfg.grid_rows();
  const int gx = cfg.grid_cols();
  const std::vector<int> idx = sampled_frame_indices(clip.frame_count, cfg.frames_sampled);
  Mat out(static_cast<Eigen::Index>(idx.size()) * gy * gx, cfg.patch_dim());
  Eigen::Index row = 0;
  for (int fi : idx) {
    const Image& frame = clip.frames[static_cast<std::size_t>(fi)];
    for (int py = 0; py < gy; ++py)
      for (int px = 0; px < gx; ++px) {
        Eigen::Index col = 0;
        for (int y = 0; y < p; ++y)
          for (int x = 0; x < p; ++x)
            for (int c = 0; c < 3; ++c)
              out(row, col++) = static_cast<double>(frame.at(py * p + y, px * p + x, c));
        ++row;
      }
  }
  return out;
}

// 11-number track geometry summary. The first four entries are the
// trajectory-averaged top-left and bottom-right corners over frame size,
// then center displacement and size change between the first and last live
// frame, then start, end and duration over the clip length. Spatial entries
// clamp to [0, 1], displacement and size change to [-1, 1].
inline Vec spacetime_descriptor(const TextTrack& t, int width, int height, int frame_count) {
  if (width < 1 || height < 1 || frame_count < 1)
    throw ConfigError("spacetime_descriptor: bad clip dimensions");
  const double w = width, h = height, f = frame_count;
  auto clamp01 = [](double v) { return std::min(1.0, std::max(0.0, v)); };
  auto clamp1 = [](double v) { return std::min(1.0, std::max(-1.0, v)); };
  const double cx_s = t.box_start.x + t.box_start.w / 2.0;
  const double cy_s = t.box_start.y + t.box_start.h / 2.0;
  const double cx_e = t.box_end.x + t.box_end.w / 2.0;
  const double cy_e = t.box_end.y + t.box_end.h / 2.0;
  Vec v(11);
  v(0) = clamp01(t.avg_tl_x / w);
  v(1) = clamp01(t.avg_tl_y / h);
  v(2) = clamp01(t.avg_br_x / w);
  v(3) = clamp01(t.avg_br_y / h);
  v(4) = clamp1((cx_e - cx_s) / w);
  v(5) = clamp1((cy_e - cy_s) / h);
  v(6) = clamp1((t.box_end.w - t.box_start.w) / w);
  v(7) = clamp1((t.box_end.h - t.box_start.h) / h);
  v(8) = clamp01(t.t_start / f);
  v(9) = clamp01(t.t_end / f);
  v(10) = clamp01((t.t_end - t.t_start) / f);
  return v;
}

// Parameter leaves registered on a tape, looked up by registry name. Bind
// once per tape so each tensor is a single node and gradients from every
// use accumulate into it.
struct BoundParams {
  std::unordered_map<std::string, Tape::NodeId> id;

  Tape::NodeId operator()(const std::string& name) const {
    auto it = id.find(name);
    if (it == id.end()) throw ConfigError("unbound parameter: " + name);
    return it->second;
  }
};

// grads == nullptr binds constants (inference); otherwise gradients flush
// into the same-shaped matrices of *grads after Tape::backward().
inline BoundParams bind_params(Tape& tape, const ModelParams& params, ModelParams* grads) {
  BoundParams b;
  if (grads) {
    std::vector<Mat*> sinks;
    grads->for_each([&sinks](const std::string&, Mat& m) { sinks.push_back(&m); });
    std::size_t i = 0;
    params.for_each([&](const std::string& name, const Mat& m) {
      b.id[name] = tape.param(m, sinks[i]);
      ++i;
    });
  } else {
    params.for_each([&](const std::string& name, const Mat& m) {
      b.id[name] = tape.constant(m);
    });
  }
  return b;
}

inline Tape::NodeId transformer_block(Tape& t, const BoundParams& b, const std::string& prefix,
                                      Tape::NodeId x, int heads,
                                      const std::vector<char>& mask = {}) {
  Tape::NodeId n1 = t.layer_norm(x, b(prefix + ".ln1_g"), b(prefix + ".ln1_b"));
  Tape::NodeId q = t.linear(n1, b(prefix + ".q_w"), b(prefix + ".q_b"));
  Tape::NodeId k = t.linear(n1, b(prefix + ".k_w"), b(prefix + ".k_b"));
  Tape::NodeId v = t.linear(n1, b(prefix + ".v_w"), b(prefix + ".v_b"));
  Tape::NodeId a = t.attention(q, k, v, heads, mask);
  x = t.add(x, t.linear(a, b(prefix + ".o_w"), b(prefix + ".o_b")));
  Tape::NodeId n2 = t.layer_norm(x, b(prefix + ".ln2_g"), b(prefix + ".ln2_b"));
  Tape::NodeId hmid = t.gelu(t.linear(n2, b(prefix + ".ffn1_w"), b(prefix + ".ffn1_b")));
  return t.add(x, t.linear(hmid, b(prefix + ".ffn2_w"), b(prefix + ".ffn2_b")));
}

// Contextual patch tokens for a clip: patch projection, temporal and
// spatial position embeddings, transformer stack, final layer norm.
// Returns a (frames_sampled * num_patches) x embed_dim node.
inline Tape::NodeId video_tokens(Tape& t, const BoundParams& b, const ModelConfig& cfg,
                                 const VideoClip& clip) {
  Tape::NodeId x = t.constant(patchify(clip, cfg));
  x = t.linear(x, b("patch_proj_w"), b("patch_proj_b"));
  x = t.add_spacetime_pos(x, b("pos_temporal"), b("pos_spatial"));
  for (int i = 0; i < cfg.layers; ++i)
    x = transformer_block(t, b, "video.block" + std::to_string(i), x, cfg.heads);
  return t.layer_norm(x, b("video.ln_g"), b("video.ln_b"));
}

// Text transformer over a token id sequence; shared by track context and
// query encoding. Returns a T x embed_dim node of contextual token states.
inline Tape::NodeId text_tokens(Tape& t, const BoundParams& b, const ModelConfig& cfg,
                                const std::vector<int>& ids) {
  if (ids.empty()) throw ConfigError("text_tokens: empty id sequence");
  if (static_cast<int>(ids.size()) > cfg.max_text_len)
    throw ConfigError("text_tokens: sequence longer than max_text_len");
  Tape::NodeId x = t.gather_rows(b("token_emb"), ids);
  x = t.add_positional(x, b("pos_text"));
  for (int i = 0; i < cfg.layers; ++i)
    x = transformer_block(t, b, "text.block" + std::to_string(i), x, cfg.heads);
  return t.layer_norm(x, b("text.ln_g"), b("text.ln_b"));
}

// Combined scene-text rows for a clip: one row per selected track, each the
// sum of its projected space-time descriptor and the [EOS] state of its
// recognized word run through the shared text tower. A clip with no tracks
// contributes the single learned no-text row instead.
inline Tape::NodeId scene_text_rows(Tape& t, const BoundParams& b, const ModelConfig& cfg,
                                    const Vocabulary& vocab,
                                    const std::vector<TextTrack>& tracks, int width,
                                    int height, int frame_count) {
  if (tracks.empty()) return b("no_text");
  Mat desc(static_cast<Eigen::Index>(tracks.size()), 11);
  for (std::size_t i = 0; i < tracks.size(); ++i)
    desc.row(static_cast<Eigen::Index>(i)) =
        spacetime_descriptor(tracks[i], width, height, frame_count).transpose();
  Tape::NodeId st = t.linear(t.constant(std::move(desc)), b("st_proj_w"), b("st_proj_b"));
  std::vector<Tape::NodeId> ctx;
  ctx.reserve(tracks.size());
  for (const TextTrack& tr : tracks) {
    Tape::NodeId toks = text_tokens(t, b, cfg, vocab.encode(tr.word, cfg.max_text_len));
    ctx.push_back(t.slice_row(toks, t.value(toks).rows() - 1));
  }
  return t.add(st, t.concat_rows(ctx));
}

// Normalized query embedding: shared text tower, [EOS] state, unit length.
inline Tape::NodeId query_embedding(Tape& t, const BoundParams& b, const ModelConfig& cfg,
                                    const Vocabulary& vocab, const std::string& text) {
  Tape::NodeId toks = text_tokens(t, b, cfg, vocab.encode(text, cfg.max_text_len));
  Tape::NodeId eos = t.slice_row(toks, t.value(toks).rows() - 1);
  return t.l2_normalize_rows(eos);
}

// Convenience plain-value wrappers for callers outside a training step.

inline Mat encode_video_tokens(const ModelParams& params, const VideoClip& clip) {
  Tape t;
  BoundParams b = bind_params(t, params, nullptr);
  return t.value(video_tokens(t, b, params.config, clip));
}

inline Vec encode_query(const ModelParams& params, const Vocabulary& vocab,
                        const std::string& text) {
  Tape t;
  BoundParams b = bind_params(t, params, nullptr);
  return t.value(query_embedding(t, b, params.config, vocab, text)).row(0).transpose();
}

}  // namespace vidtext
