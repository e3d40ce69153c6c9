#pragma once

#include <cctype>
#include <string>
#include <string_view>
#include <vector>

namespace vidtext {

inline bool is_word_char(unsigned char c) {
  // Non-ASCII bytes pass through so UTF-8 words survive untouched.
  return std::isalnum(c) != 0 || c >= 0x80;
}

inline std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    const unsigned char u = static_cast<unsigned char>(c);
    if (u < 0x80) c = static_cast<char>(std::tolower(u));
  }
  return out;
}

// Strip leading/trailing punctuation, keep interior characters ("don't",
// "020773491" untouched).
inline std::string strip_punct(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && !is_word_char(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && !is_word_char(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

// Case-fold + punctuation-strip; the single normalization used by both the
// token matcher and the tokenizer so they can never disagree.
inline std::string normalize_word(std::string_view s) {
  return ascii_lower(strip_punct(s));
}

inline std::vector<std::string> split_whitespace(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    std::size_t j = i;
    while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
    if (j > i) out.emplace_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

// Whitespace-split then normalize; empty results (pure punctuation) dropped.
inline std::vector<std::string> normalized_words(std::string_view text) {
  std::vector<std::string> out;
  for (const std::string& raw : split_whitespace(text)) {
    std::string w = normalize_word(raw);
    if (!w.empty()) out.push_back(std::move(w));
  }
  return out;
}

}  // namespace vidtext
