#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "vidtext/corpus.hpp"

namespace vidtext {

// A query is a "true correlation" iff at least one of its video's track words
// appears in the sentence. Result is 100 * true / total over the given split
// (or the whole corpus when no split is given).
inline double recall_of_correlation(const Corpus& c, std::optional<Split> split = std::nullopt) {
  int total = 0;
  int correlated = 0;
  for (const Query& q : c.queries) {
    if (split && q.split != *split) continue;
    ++total;
    if (!match_tokens_to_query(q.text, c.tracks_for(q.video_id)).empty()) ++correlated;
  }
  if (total == 0) throw ValidationError("recall_of_correlation: no queries in scope");
  return 100.0 * static_cast<double>(correlated) / static_cast<double>(total);
}

struct StatsReport {
  std::map<int, int> tokens_per_video;
  std::map<int, int> words_per_query;
  std::map<int, int> matched_tokens_per_query;
  std::vector<std::pair<std::string, int>> top_tokens;
  double recall = 0.0;  // recall of correlation, percent
};

inline StatsReport corpus_stats(const Corpus& c, std::size_t top_token_limit = 20) {
  StatsReport r;
  std::map<std::string, int> counts;
  for (const auto& [id, v] : c.videos) {
    const auto& ts = c.tracks_for(id);
    r.tokens_per_video[static_cast<int>(ts.size())]++;
    for (const TextTrack& t : ts)
      for (const std::string& w : normalized_words(t.word)) counts[w]++;
  }
  for (const Query& q : c.queries) {
    r.words_per_query[static_cast<int>(split_whitespace(q.text).size())]++;
    r.matched_tokens_per_query[static_cast<int>(
        match_tokens_to_query(q.text, c.tracks_for(q.video_id)).size())]++;
  }
  std::vector<std::pair<std::string, int>> ranked(counts.begin(), counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (ranked.size() > top_token_limit) ranked.resize(top_token_limit);
  r.top_tokens = std::move(ranked);
  r.recall = recall_of_correlation(c);
  return r;
}

inline nlohmann::json stats_to_json(const StatsReport& r) {
  auto hist = [](const std::map<int, int>& h) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [k, v] : h) j[std::to_string(k)] = v;
    return j;
  };
  nlohmann::json top = nlohmann::json::array();
  for (const auto& [w, n] : r.top_tokens) top.push_back(nlohmann::json::array({w, n}));
  return nlohmann::json{{"tokens_per_video", hist(r.tokens_per_video)},
                        {"words_per_query", hist(r.words_per_query)},
                        {"matched_tokens_per_query", hist(r.matched_tokens_per_query)},
                        {"top_tokens", top},
                        {"recall_of_correlation", r.recall}};
}

// Minimal SVG bar chart; plots are a convenience output, never load-bearing.
inline std::string histogram_svg(const std::map<int, int>& hist, const std::string& title) {
  const int bar_w = 18, gap = 4, plot_h = 160, margin = 30;
  int max_count = 1;
  for (const auto& [k, v] : hist) max_count = std::max(max_count, v);
  const int n = static_cast<int>(hist.size());
  const int width = margin * 2 + n * (bar_w + gap);
  const int height = plot_h + margin * 2;
  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) +
         "\" height=\"" + std::to_string(height) + "\">\n";
  svg += "<text x=\"" + std::to_string(margin) + "\" y=\"18\" font-size=\"13\">" + title +
         "</text>\n";
  int i = 0;
  for (const auto& [k, v] : hist) {
    const int h = v * plot_h / max_count;
    const int x = margin + i * (bar_w + gap);
    const int y = margin + plot_h - h;
    svg += "<rect x=\"" + std::to_string(x) + "\" y=\"" + std::to_string(y) + "\" width=\"" +
           std::to_string(bar_w) + "\" height=\"" + std::to_string(h) +
           "\" fill=\"#4878a8\"/>\n";
    svg += "<text x=\"" + std::to_string(x) + "\" y=\"" + std::to_string(margin + plot_h + 14) +
           "\" font-size=\"9\">" + std::to_string(k) + "</text>\n";
    ++i;
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace vidtext
