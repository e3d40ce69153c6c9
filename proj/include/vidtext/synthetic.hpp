#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include <json.hpp>

#include "vidtext/corpus.hpp"
#include "vidtext/font5x7.hpp"
#include "vidtext/rng.hpp"

namespace vidtext {

// Deterministic synthetic corpus: each video renders its planted OCR words as
// pixel glyphs over a background color coded by a visual-attribute word; each
// query is a sentence built from the attribute word and, for the configured
// fraction of queries, one planted OCR word. Tracks carry exact ground-truth
// boxes and time slots.
struct SyntheticConfig {
  int video_count = 20;
  int frame_width = 32;
  int frame_height = 32;
  int frame_count = 8;
  int queries_per_video = 4;
  int tracks_per_video = 3;
  double ocr_fraction = 1.0;   // fraction of queries carrying a planted word
  double test_fraction = 0.25;
  bool render_glyphs = true;
  bool attribute_in_query = true;

  // Vocabularies: explicit word lists, or generated ("sign000"... /
  // palette color names) when only a size is given.
  std::vector<std::string> ocr_vocab;
  int ocr_vocab_size = 0;
  std::vector<std::string> attribute_vocab;
  int attribute_vocab_size = 0;

  std::vector<std::string> effective_ocr_vocab() const {
    if (!ocr_vocab.empty()) return ocr_vocab;
    std::vector<std::string> v;
    v.reserve(static_cast<std::size_t>(ocr_vocab_size));
    for (int i = 0; i < ocr_vocab_size; ++i) {
      char buf[16];
      std::snprintf(buf, sizeof(buf), "sign%03d", i);
      v.emplace_back(buf);
    }
    return v;
  }

  std::vector<std::string> effective_attribute_vocab() const {
    if (!attribute_vocab.empty()) return attribute_vocab;
    static const std::vector<std::string> kPalette = {
        "red",  "blue", "green", "olive", "teal", "navy",  "coral", "amber",
        "plum", "slate", "mint", "rust",  "gold", "ivory", "jade",  "onyx"};
    std::vector<std::string> v;
    v.reserve(static_cast<std::size_t>(attribute_vocab_size));
    for (int i = 0; i < attribute_vocab_size; ++i) {
      if (i < static_cast<int>(kPalette.size())) {
        v.push_back(kPalette[i]);
      } else {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "attr%02d", i);
        v.emplace_back(buf);
      }
    }
    return v;
  }

  void validate() const {
    if (video_count < 1) throw ConfigError("video_count must be >= 1");
    if (frame_width < 1 || frame_height < 1) throw ConfigError("frame size must be positive");
    if (frame_count < 1) throw ConfigError("frame_count must be >= 1");
    if (queries_per_video < 1) throw ConfigError("queries_per_video must be >= 1");
    if (tracks_per_video < 0) throw ConfigError("tracks_per_video must be >= 0");
    if (ocr_fraction < 0.0 || ocr_fraction > 1.0)
      throw ConfigError("ocr_fraction must be in [0,1]");
    if (test_fraction < 0.0 || test_fraction > 1.0)
      throw ConfigError("test_fraction must be in [0,1]");
    if (ocr_vocab.empty() && ocr_vocab_size <= 0)
      throw ConfigError("empty OCR vocabulary: set \"ocr_vocab\" or \"ocr_vocab_size\"");
    if (attribute_vocab.empty() && attribute_vocab_size <= 0)
      throw ConfigError(
          "empty attribute vocabulary: set \"attribute_vocab\" or \"attribute_vocab_size\"");
  }
};

inline void from_json(const nlohmann::json& j, SyntheticConfig& c) {
  c = SyntheticConfig{};
  c.ocr_vocab.clear();
  c.attribute_vocab.clear();
  if (j.contains("video_count")) j.at("video_count").get_to(c.video_count);
  if (j.contains("frame_width")) j.at("frame_width").get_to(c.frame_width);
  if (j.contains("frame_height")) j.at("frame_height").get_to(c.frame_height);
  if (j.contains("frame_count")) j.at("frame_count").get_to(c.frame_count);
  if (j.contains("queries_per_video")) j.at("queries_per_video").get_to(c.queries_per_video);
  if (j.contains("tracks_per_video")) j.at("tracks_per_video").get_to(c.tracks_per_video);
  if (j.contains("ocr_fraction")) j.at("ocr_fraction").get_to(c.ocr_fraction);
  if (j.contains("test_fraction")) j.at("test_fraction").get_to(c.test_fraction);
  if (j.contains("render_glyphs")) j.at("render_glyphs").get_to(c.render_glyphs);
  if (j.contains("attribute_in_query")) j.at("attribute_in_query").get_to(c.attribute_in_query);
  if (j.contains("ocr_vocab")) j.at("ocr_vocab").get_to(c.ocr_vocab);
  if (j.contains("ocr_vocab_size")) j.at("ocr_vocab_size").get_to(c.ocr_vocab_size);
  if (j.contains("attribute_vocab")) j.at("attribute_vocab").get_to(c.attribute_vocab);
  if (j.contains("attribute_vocab_size")) j.at("attribute_vocab_size").get_to(c.attribute_vocab_size);
}

inline void to_json(nlohmann::json& j, const SyntheticConfig& c) {
  j = nlohmann::json{{"video_count", c.video_count},
                     {"frame_width", c.frame_width},
                     {"frame_height", c.frame_height},
                     {"frame_count", c.frame_count},
                     {"queries_per_video", c.queries_per_video},
                     {"tracks_per_video", c.tracks_per_video},
                     {"ocr_fraction", c.ocr_fraction},
                     {"test_fraction", c.test_fraction},
                     {"render_glyphs", c.render_glyphs},
                     {"attribute_in_query", c.attribute_in_query},
                     {"ocr_vocab", c.ocr_vocab},
                     {"ocr_vocab_size", c.ocr_vocab_size},
                     {"attribute_vocab", c.attribute_vocab},
                     {"attribute_vocab_size", c.attribute_vocab_size}};
}

namespace detail {

// Attribute index -> background RGB via an HSV hue wheel, value kept dark so
// white glyphs stay readable.
inline std::array<float, 3> attribute_color(int index, int count) {
  const double h = 6.0 * static_cast<double>(index) / std::max(1, count);
  const int sector = static_cast<int>(h) % 6;
  const double f = h - std::floor(h);
  const double v = 0.55, s = 0.85;
  const double p = v * (1.0 - s), q = v * (1.0 - s * f), t = v * (1.0 - s * (1.0 - f));
  double r = 0, g = 0, b = 0;
  switch (sector) {
    case 0: r = v; g = t; b = p; break;
    case 1: r = q; g = v; b = p; break;
    case 2: r = p; g = v; b = t; break;
    case 3: r = p; g = q; b = v; break;
    case 4: r = t; g = p; b = v; break;
    default: r = v; g = p; b = q; break;
  }
  return {static_cast<float>(r), static_cast<float>(g), static_cast<float>(b)};
}

inline void render_word(Image& img, const std::string& word, const BoxF& box) {
  if (word.empty()) return;
  const int n = static_cast<int>(word.size());
  const int x0 = static_cast<int>(std::lround(box.x));
  const int y0 = static_cast<int>(std::lround(box.y));
  const int bw = std::max(1, static_cast<int>(std::lround(box.w)));
  const int bh = std::max(1, static_cast<int>(std::lround(box.h)));
  const double cell_w = static_cast<double>(bw) / n;
  for (int ci = 0; ci < n; ++ci) {
    const auto& rows = glyph5x7(word[static_cast<std::size_t>(ci)]);
    for (int py = 0; py < bh; ++py) {
      const int gy = py * 7 / bh;  // nearest-neighbor scale into the box
      const int y = y0 + py;
      if (y < 0 || y >= img.height) continue;
      for (int px = 0; px < static_cast<int>(cell_w); ++px) {
        const int gx = static_cast<int>(px * 5 / cell_w);
        if (gx > 4) continue;
        const int x = x0 + static_cast<int>(ci * cell_w) + px;
        if (x < 0 || x >= img.width) continue;
        if (rows[static_cast<std::size_t>(gy)] & (0x10 >> gx)) {
          img.at(y, x, 0) = 1.0f;
          img.at(y, x, 1) = 1.0f;
          img.at(y, x, 2) = 1.0f;
        }
      }
    }
  }
}

inline BoxF lerp_box(const BoxF& a, const BoxF& b, double alpha) {
  return BoxF{a.x + (b.x - a.x) * alpha, a.y + (b.y - a.y) * alpha,
              a.w + (b.w - a.w) * alpha, a.h + (b.h - a.h) * alpha};
}

}  // namespace detail

inline Corpus generate_synthetic(const SyntheticConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const std::vector<std::string> ocr_words = cfg.effective_ocr_vocab();
  const std::vector<std::string> attr_words = cfg.effective_attribute_vocab();
  Rng rng(mix_seed(seed, 0xC0B5'11D1));

  // Deal OCR words without replacement while the vocabulary lasts, then fall
  // back to uniform reuse.
  std::vector<std::string> deck = ocr_words;
  rng.shuffle(deck);
  std::size_t deck_pos = 0;
  auto next_word = [&]() -> std::string {
    if (deck_pos < deck.size()) return deck[deck_pos++];
    return rng.pick(ocr_words);
  };

  // Split assignment: shuffle video ordinals, first train_count are train.
  const int train_count =
      cfg.video_count - static_cast<int>(std::lround(cfg.test_fraction * cfg.video_count));
  std::vector<int> ordinals(static_cast<std::size_t>(cfg.video_count));
  for (int i = 0; i < cfg.video_count; ++i) ordinals[static_cast<std::size_t>(i)] = i;
  rng.shuffle(ordinals);
  std::vector<Split> split_of(static_cast<std::size_t>(cfg.video_count), Split::Test);
  for (int r = 0; r < train_count; ++r)
    split_of[static_cast<std::size_t>(ordinals[static_cast<std::size_t>(r)])] = Split::Train;

  const int planted_per_video =
      static_cast<int>(std::lround(cfg.ocr_fraction * cfg.queries_per_video));

  Corpus corpus;
  for (int vi = 0; vi < cfg.video_count; ++vi) {
    char idbuf[16];
    std::snprintf(idbuf, sizeof(idbuf), "v%04d", vi);
    VideoClip clip;
    clip.id = idbuf;
    clip.frame_count = cfg.frame_count;
    const int attr_idx = static_cast<int>(rng.uniform_int(0, static_cast<std::int64_t>(attr_words.size()) - 1));
    clip.scenario = attr_words[static_cast<std::size_t>(attr_idx)];

    std::vector<TextTrack> tracks;
    for (int ti = 0; ti < cfg.tracks_per_video; ++ti) {
      TextTrack t;
      t.word = next_word();
      t.confidence = rng.uniform(0.3, 1.0);
      t.t_start = static_cast<int>(rng.uniform_int(0, cfg.frame_count - 1));
      t.t_end = static_cast<int>(rng.uniform_int(t.t_start, cfg.frame_count - 1));
      const double bw = rng.uniform(0.45, 0.75) * cfg.frame_width;
      const double bh = rng.uniform(0.22, 0.38) * cfg.frame_height;
      const double x0 = rng.uniform(0.0, cfg.frame_width - bw);
      const double y0 = rng.uniform(0.0, cfg.frame_height - bh);
      double dx = rng.uniform(-3.0, 3.0);
      double dy = rng.uniform(-2.0, 2.0);
      dx = std::clamp(dx, -x0, cfg.frame_width - bw - x0);
      dy = std::clamp(dy, -y0, cfg.frame_height - bh - y0);
      t.box_start = BoxF{x0, y0, bw, bh};
      t.box_end = BoxF{x0 + dx, y0 + dy, bw, bh};
      // Exact trajectory averages over the live frames.
      const int span = t.t_end - t.t_start;
      double sx = 0, sy = 0, ex = 0, ey = 0;
      for (int f = 0; f <= span; ++f) {
        const double alpha = span == 0 ? 0.0 : static_cast<double>(f) / span;
        const BoxF b = detail::lerp_box(t.box_start, t.box_end, alpha);
        sx += b.x;
        sy += b.y;
        ex += b.x + b.w;
        ey += b.y + b.h;
      }
      const double n = static_cast<double>(span + 1);
      t.avg_tl_x = sx / n;
      t.avg_tl_y = sy / n;
      t.avg_br_x = ex / n;
      t.avg_br_y = ey / n;
      tracks.push_back(std::move(t));
    }

    // Frames: attribute-colored background with a mild vertical gradient,
    // glyphs burned in over each track's live span.
    const auto bg = detail::attribute_color(attr_idx, static_cast<int>(attr_words.size()));
    for (int f = 0; f < cfg.frame_count; ++f) {
      Image img(cfg.frame_width, cfg.frame_height);
      for (int y = 0; y < cfg.frame_height; ++y) {
        const float shade =
            0.85f + 0.15f * static_cast<float>(y) / static_cast<float>(cfg.frame_height);
        for (int x = 0; x < cfg.frame_width; ++x)
          for (int ch = 0; ch < 3; ++ch) img.at(y, x, ch) = bg[static_cast<std::size_t>(ch)] * shade;
      }
      if (cfg.render_glyphs) {
        for (const TextTrack& t : tracks) {
          if (f < t.t_start || f > t.t_end) continue;
          const int span = t.t_end - t.t_start;
          const double alpha = span == 0 ? 0.0 : static_cast<double>(f - t.t_start) / span;
          detail::render_word(img, t.word, detail::lerp_box(t.box_start, t.box_end, alpha));
        }
      }
      clip.frames.push_back(std::move(img));
    }

    // Queries: first planted_per_video get a planted word, the rest do not.
    for (int qi = 0; qi < cfg.queries_per_video; ++qi) {
      Query q;
      q.video_id = clip.id;
      q.split = split_of[static_cast<std::size_t>(vi)];
      const bool planted = qi < planted_per_video && !tracks.empty();
      const std::string& attr = clip.scenario;
      if (planted) {
        const TextTrack& t =
            tracks[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(tracks.size()) - 1))];
        q.text = cfg.attribute_in_query
                     ? "a " + attr + " colored scene where the sign " + t.word +
                           " is clearly visible"
                     : "a scene where the sign " + t.word + " is clearly visible on screen";
      } else {
        q.text = cfg.attribute_in_query
                     ? "a " + attr + " colored scene with no readable signs anywhere in view"
                     : "a plain scene with no readable signs anywhere in this view";
      }
      corpus.queries.push_back(std::move(q));
    }

    if (!tracks.empty()) corpus.tracks[clip.id] = std::move(tracks);
    corpus.videos.emplace(clip.id, std::move(clip));
  }

  validate(corpus);
  return corpus;
}

}  // namespace vidtext
