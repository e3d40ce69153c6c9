#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "vidtext/common.hpp"
#include "vidtext/image.hpp"
#include "vidtext/textnorm.hpp"

namespace vidtext {

struct BoxF {
  double x = 0, y = 0, w = 0, h = 0;
};

// One tracked scene-text instance: the highest-confidence recognized word,
// its box trajectory endpoints plus trajectory averages, and a time slot.
struct TextTrack {
  std::string word;
  double confidence = 0.0;
  BoxF box_start;
  BoxF box_end;
  double avg_tl_x = 0, avg_tl_y = 0;
  double avg_br_x = 0, avg_br_y = 0;
  int t_start = 0;
  int t_end = 0;
};

struct VideoClip {
  std::string id;
  std::vector<Image> frames;
  int frame_count = 0;
  std::string scenario;  // empty means unset

  int width() const { return frames.empty() ? 0 : frames.front().width; }
  int height() const { return frames.empty() ? 0 : frames.front().height; }
};

enum class Split { Train, Test };

inline const char* split_name(Split s) { return s == Split::Train ? "train" : "test"; }

inline Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "test") return Split::Test;
  throw ValidationError("unknown split value: \"" + s + "\"");
}

struct Query {
  std::string text;
  std::string video_id;
  Split split = Split::Train;
};

struct Corpus {
  std::map<std::string, VideoClip> videos;            // keyed by id, sorted
  std::map<std::string, std::vector<TextTrack>> tracks;  // may be empty per video
  std::vector<Query> queries;

  const std::vector<TextTrack>& tracks_for(const std::string& video_id) const {
    static const std::vector<TextTrack> kEmpty;
    auto it = tracks.find(video_id);
    return it == tracks.end() ? kEmpty : it->second;
  }

  std::vector<std::string> video_ids(Split split) const {
    std::set<std::string> ids;
    for (const Query& q : queries)
      if (q.split == split) ids.insert(q.video_id);
    return {ids.begin(), ids.end()};
  }

  std::vector<int> query_indices(Split split) const {
    std::vector<int> out;
    for (int i = 0; i < static_cast<int>(queries.size()); ++i)
      if (queries[i].split == split) out.push_back(i);
    return out;
  }
};

// ---------------------------------------------------------------------------
// Validation

inline void validate_track(const TextTrack& t, const VideoClip& v, const std::string& where) {
  if (t.word.empty()) throw ValidationError(where + ": empty word");
  if (t.confidence < 0.0 || t.confidence > 1.0)
    throw ValidationError(where + ": confidence " + std::to_string(t.confidence) +
                          " outside [0,1]");
  if (t.t_start < 0 || t.t_end < t.t_start || t.t_end >= v.frame_count)
    throw ValidationError(where + ": time slot [" + std::to_string(t.t_start) + "," +
                          std::to_string(t.t_end) + "] invalid for frame_count " +
                          std::to_string(v.frame_count));
}

inline void validate(const Corpus& c) {
  for (const auto& [id, v] : c.videos) {
    if (v.frame_count < 1)
      throw ValidationError("video \"" + id + "\": frame_count must be >= 1");
    if (static_cast<int>(v.frames.size()) != v.frame_count)
      throw ValidationError("video \"" + id + "\": frame_count " +
                            std::to_string(v.frame_count) + " != loaded frames " +
                            std::to_string(v.frames.size()));
    for (const Image& f : v.frames)
      if (f.width != v.width() || f.height != v.height())
        throw ValidationError("video \"" + id + "\": frames have mixed dimensions");
  }
  for (const auto& [vid, ts] : c.tracks) {
    auto it = c.videos.find(vid);
    if (it == c.videos.end())
      throw ValidationError("tracks reference unknown video \"" + vid + "\"");
    for (std::size_t i = 0; i < ts.size(); ++i)
      validate_track(ts[i], it->second, "track " + std::to_string(i) + " of video \"" + vid + "\"");
  }
  std::map<std::string, Split> split_of;
  for (std::size_t i = 0; i < c.queries.size(); ++i) {
    const Query& q = c.queries[i];
    if (q.text.empty())
      throw ValidationError("query " + std::to_string(i) + ": empty text");
    if (c.videos.find(q.video_id) == c.videos.end())
      throw ValidationError("query " + std::to_string(i) +
                            " references unknown video \"" + q.video_id + "\"");
    auto [it, inserted] = split_of.emplace(q.video_id, q.split);
    if (!inserted && it->second != q.split)
      throw ValidationError("video \"" + q.video_id + "\" appears in both splits");
  }
}

// ---------------------------------------------------------------------------
// JSONL corpus format: three files per corpus root (videos.jsonl,
// tracks.jsonl, queries.jsonl), frames as per-video directories of PPM files.

namespace detail {

inline nlohmann::json parse_line(const std::string& line, const std::string& file, int lineno) {
  nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
  if (j.is_discarded())
    throw ValidationError(file + ":" + std::to_string(lineno) + ": malformed json");
  return j;
}

template <typename T>
T get_field(const nlohmann::json& j, const char* key, const std::string& where) {
  if (!j.contains(key))
    throw ValidationError(where + ": missing field \"" + key + "\"");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ValidationError(where + ": field \"" + key + "\" has wrong type");
  }
}

inline BoxF get_box(const nlohmann::json& j, const char* key, const std::string& where) {
  auto arr = get_field<std::vector<double>>(j, key, where);
  if (arr.size() != 4)
    throw ValidationError(where + ": field \"" + key + "\" must be [x,y,w,h]");
  return BoxF{arr[0], arr[1], arr[2], arr[3]};
}

inline std::pair<double, double> get_point(const nlohmann::json& j, const char* key,
                                           const std::string& where) {
  auto arr = get_field<std::vector<double>>(j, key, where);
  if (arr.size() != 2)
    throw ValidationError(where + ": field \"" + key + "\" must be [x,y]");
  return {arr[0], arr[1]};
}

inline std::string frame_file_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%05d.ppm", index);
  return buf;
}

// For-each over lines of a jsonl file with line numbers.
template <typename Fn>
void each_line(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream is(path);
  if (!is) throw IoError("missing file: " + path.string());
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    fn(line, lineno);
  }
}

}  // namespace detail

inline Corpus load_corpus(const std::filesystem::path& root) {
  if (!std::filesystem::exists(root))
    throw IoError("corpus root does not exist: " + root.string());
  Corpus c;

  detail::each_line(root / "videos.jsonl", [&](const std::string& line, int lineno) {
    const std::string where = "videos.jsonl:" + std::to_string(lineno);
    nlohmann::json j = detail::parse_line(line, "videos.jsonl", lineno);
    VideoClip v;
    v.id = detail::get_field<std::string>(j, "id", where);
    const auto frames_dir = detail::get_field<std::string>(j, "frames_dir", where);
    const int width = detail::get_field<int>(j, "width", where);
    const int height = detail::get_field<int>(j, "height", where);
    v.frame_count = detail::get_field<int>(j, "frame_count", where);
    if (j.contains("scenario") && !j.at("scenario").is_null())
      v.scenario = detail::get_field<std::string>(j, "scenario", where);
    if (v.frame_count < 1)
      throw ValidationError(where + ": field \"frame_count\" must be >= 1");
    v.frames.reserve(static_cast<std::size_t>(v.frame_count));
    for (int f = 0; f < v.frame_count; ++f) {
      Image img = read_ppm(root / frames_dir / detail::frame_file_name(f));
      if (img.width != width || img.height != height)
        throw ValidationError(where + ": frame " + std::to_string(f) +
                              " dimensions disagree with declared width/height");
      v.frames.push_back(std::move(img));
    }
    if (!c.videos.emplace(v.id, std::move(v)).second)
      throw ValidationError(where + ": duplicate video id");
  });

  detail::each_line(root / "tracks.jsonl", [&](const std::string& line, int lineno) {
    const std::string where = "tracks.jsonl:" + std::to_string(lineno);
    nlohmann::json j = detail::parse_line(line, "tracks.jsonl", lineno);
    const auto vid = detail::get_field<std::string>(j, "video_id", where);
    TextTrack t;
    t.word = detail::get_field<std::string>(j, "word", where);
    t.confidence = detail::get_field<double>(j, "confidence", where);
    t.t_start = detail::get_field<int>(j, "t_start", where);
    t.t_end = detail::get_field<int>(j, "t_end", where);
    if (j.contains("boxes")) {
      // Per-frame boxes: reduced to endpoints + trajectory averages at load.
      auto boxes = detail::get_field<std::vector<std::vector<double>>>(j, "boxes", where);
      if (boxes.empty())
        throw ValidationError(where + ": field \"boxes\" must be non-empty");
      if (static_cast<int>(boxes.size()) != t.t_end - t.t_start + 1)
        throw ValidationError(where + ": field \"boxes\" length must equal t_end-t_start+1");
      double sx = 0, sy = 0, bx = 0, by = 0;
      for (const auto& b : boxes) {
        if (b.size() != 4)
          throw ValidationError(where + ": field \"boxes\" entries must be [x,y,w,h]");
        sx += b[0];
        sy += b[1];
        bx += b[0] + b[2];
        by += b[1] + b[3];
      }
      const double n = static_cast<double>(boxes.size());
      t.box_start = BoxF{boxes.front()[0], boxes.front()[1], boxes.front()[2], boxes.front()[3]};
      t.box_end = BoxF{boxes.back()[0], boxes.back()[1], boxes.back()[2], boxes.back()[3]};
      t.avg_tl_x = sx / n;
      t.avg_tl_y = sy / n;
      t.avg_br_x = bx / n;
      t.avg_br_y = by / n;
    } else {
      t.box_start = detail::get_box(j, "box_start", where);
      t.box_end = detail::get_box(j, "box_end", where);
      std::tie(t.avg_tl_x, t.avg_tl_y) = detail::get_point(j, "avg_tl", where);
      std::tie(t.avg_br_x, t.avg_br_y) = detail::get_point(j, "avg_br", where);
    }
    c.tracks[vid].push_back(std::move(t));
  });

  detail::each_line(root / "queries.jsonl", [&](const std::string& line, int lineno) {
    const std::string where = "queries.jsonl:" + std::to_string(lineno);
    nlohmann::json j = detail::parse_line(line, "queries.jsonl", lineno);
    Query q;
    q.video_id = detail::get_field<std::string>(j, "video_id", where);
    q.text = detail::get_field<std::string>(j, "text", where);
    q.split = parse_split(detail::get_field<std::string>(j, "split", where));
    c.queries.push_back(std::move(q));
  });

  validate(c);
  return c;
}

inline void save_corpus(const Corpus& c, const std::filesystem::path& root) {
  std::filesystem::create_directories(root);
  {
    std::ofstream os(root / "videos.jsonl", std::ios::binary);
    if (!os) throw IoError("cannot write videos.jsonl under " + root.string());
    for (const auto& [id, v] : c.videos) {
      const std::string frames_dir = "frames/" + id;
      nlohmann::json j{{"id", id},
                       {"frames_dir", frames_dir},
                       {"width", v.width()},
                       {"height", v.height()},
                       {"frame_count", v.frame_count},
                       {"scenario", v.scenario.empty() ? nlohmann::json(nullptr)
                                                       : nlohmann::json(v.scenario)}};
      os << j.dump() << "\n";
      std::filesystem::create_directories(root / frames_dir);
      for (int f = 0; f < v.frame_count; ++f)
        write_ppm(root / frames_dir / detail::frame_file_name(f), v.frames[f]);
    }
  }
  {
    std::ofstream os(root / "tracks.jsonl", std::ios::binary);
    if (!os) throw IoError("cannot write tracks.jsonl under " + root.string());
    for (const auto& [vid, ts] : c.tracks) {
      for (const TextTrack& t : ts) {
        nlohmann::json j{{"video_id", vid},
                         {"word", t.word},
                         {"confidence", t.confidence},
                         {"t_start", t.t_start},
                         {"t_end", t.t_end},
                         {"box_start", {t.box_start.x, t.box_start.y, t.box_start.w, t.box_start.h}},
                         {"box_end", {t.box_end.x, t.box_end.y, t.box_end.w, t.box_end.h}},
                         {"avg_tl", {t.avg_tl_x, t.avg_tl_y}},
                         {"avg_br", {t.avg_br_x, t.avg_br_y}}};
        os << j.dump() << "\n";
      }
    }
  }
  {
    std::ofstream os(root / "queries.jsonl", std::ios::binary);
    if (!os) throw IoError("cannot write queries.jsonl under " + root.string());
    for (const Query& q : c.queries) {
      nlohmann::json j{{"video_id", q.video_id},
                       {"text", q.text},
                       {"split", split_name(q.split)}};
      os << j.dump() << "\n";
    }
  }
}

// ---------------------------------------------------------------------------
// Token / query matching

// Track words that appear (case-folded, punctuation-stripped, whole-word) in
// the query sentence. Multi-word track entries are split and matched word by
// word. Result is deduplicated, in first-occurrence order.
inline std::vector<std::string> match_tokens_to_query(const std::string& query_text,
                                                      const std::vector<TextTrack>& tracks) {
  const std::vector<std::string> qwords_v = normalized_words(query_text);
  const std::unordered_set<std::string> qwords(qwords_v.begin(), qwords_v.end());
  std::vector<std::string> matched;
  std::unordered_set<std::string> seen;
  for (const TextTrack& t : tracks) {
    for (const std::string& w : normalized_words(t.word)) {
      if (qwords.count(w) && seen.insert(w).second) matched.push_back(w);
    }
  }
  return matched;
}

// The K highest-confidence tracks; ties broken by ascending t_start, then by
// insertion order. K >= n returns everything.
inline std::vector<TextTrack> select_topk_tokens(const std::vector<TextTrack>& tracks, int k) {
  if (k < 0) throw ConfigError("top-k token budget must be >= 0");
  std::vector<std::size_t> order(tracks.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (tracks[a].confidence != tracks[b].confidence)
      return tracks[a].confidence > tracks[b].confidence;
    return tracks[a].t_start < tracks[b].t_start;
  });
  const std::size_t keep = std::min<std::size_t>(static_cast<std::size_t>(k), tracks.size());
  std::vector<TextTrack> out;
  out.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) out.push_back(tracks[order[i]]);
  return out;
}

}  // namespace vidtext
