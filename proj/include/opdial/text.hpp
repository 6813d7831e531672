#pragma once

// Text utilities shared by every stage: tokenization with byte offsets,
// case folding, normalization and content digests.

#include <cctype>
#include <cstdint>
#include <cstdio>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace opdial {

// A token with its [begin, end) byte range in the source string.
struct Token {
  std::string text;
  std::size_t begin = 0;
  std::size_t end = 0;
};

namespace detail {

// Bytes >= 0x80 belong to multi-byte UTF-8 sequences; they are treated as
// letters so that accented names stay inside one word.
inline bool is_word_byte(unsigned char c) { return std::isalnum(c) || c >= 0x80; }

inline bool is_space_byte(unsigned char c) { return std::isspace(c) != 0; }

}  // namespace detail

// ASCII case folding. Non-ASCII bytes pass through unchanged.
inline std::string to_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

inline std::string_view trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && detail::is_space_byte(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && detail::is_space_byte(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

// Lowercased words; punctuation is dropped. An apostrophe between two word
// characters stays inside the word ("don't").
inline std::vector<Token> word_tokens(std::string_view text) {
  std::vector<Token> out;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    auto c = static_cast<unsigned char>(text[i]);
    if (!detail::is_word_byte(c)) {
      ++i;
      continue;
    }
    std::size_t b = i;
    while (i < n) {
      auto d = static_cast<unsigned char>(text[i]);
      if (detail::is_word_byte(d)) {
        ++i;
      } else if (d == '\'' && i + 1 < n &&
                 detail::is_word_byte(static_cast<unsigned char>(text[i + 1]))) {
        ++i;
      } else {
        break;
      }
    }
    out.push_back({to_lower(text.substr(b, i - b)), b, i});
  }
  return out;
}

// Whitespace + punctuation surface tokenizer: words as in word_tokens (but
// case preserved), every punctuation byte becomes its own token.
inline std::vector<Token> surface_tokens(std::string_view text) {
  std::vector<Token> out;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    auto c = static_cast<unsigned char>(text[i]);
    if (detail::is_space_byte(c)) {
      ++i;
      continue;
    }
    if (!detail::is_word_byte(c)) {
      out.push_back({std::string(1, text[i]), i, i + 1});
      ++i;
      continue;
    }
    std::size_t b = i;
    while (i < n) {
      auto d = static_cast<unsigned char>(text[i]);
      if (detail::is_word_byte(d)) {
        ++i;
      } else if (d == '\'' && i + 1 < n &&
                 detail::is_word_byte(static_cast<unsigned char>(text[i + 1]))) {
        ++i;
      } else {
        break;
      }
    }
    out.push_back({std::string(text.substr(b, i - b)), b, i});
  }
  return out;
}

inline std::vector<std::string> token_texts(const std::vector<Token>& tokens) {
  std::vector<std::string> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(t.text);
  return out;
}

inline std::string join(std::span<const std::string> parts, std::string_view sep = " ") {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

// Lowercase word tokens joined by single spaces.
inline std::string normalize_words(std::string_view text) {
  auto toks = token_texts(word_tokens(text));
  return join(toks);
}

// Lowercase, whitespace collapsed, trimmed. Punctuation is kept.
inline std::string normalize_space(std::string_view text) {
  std::string out;
  bool pending = false;
  for (char c : trim(text)) {
    if (detail::is_space_byte(static_cast<unsigned char>(c))) {
      pending = true;
      continue;
    }
    if (pending) out += ' ';
    pending = false;
    out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

inline std::uint64_t fnv1a64(std::string_view data, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t b = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      out.emplace_back(trim(s.substr(b, i - b)));
      b = i + 1;
    }
  }
  return out;
}

}  // namespace opdial
