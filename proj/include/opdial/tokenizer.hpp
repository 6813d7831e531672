#pragma once

// Byte-level BPE. Ids 0..255 are raw bytes, 256.. are merges in rank order,
// special tokens follow the merges. Special token strings occurring in the
// input text (e.g. "<movie>") encode to their special id.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "opdial/corpus_io.hpp"
#include "opdial/error.hpp"
#include "opdial/text.hpp"
#include "opdial/types.hpp"

namespace opdial {

class Tokenizer {
 public:
  virtual ~Tokenizer() = default;
  virtual std::vector<int> encode(std::string_view text) const = 0;
  virtual std::string decode(const std::vector<int>& ids) const = 0;
  virtual int vocab_size() const = 0;
  virtual int pad_id() const = 0;
  virtual int clf_id() const = 0;
  // Placeholder token string -> id.
  virtual const std::map<std::string, int>& specials() const = 0;

  int special_id(const std::string& name) const {
    auto it = specials().find(name);
    if (it == specials().end()) throw Error("tokenizer has no special token '" + name + "'");
    return it->second;
  }
  bool is_special(int id) const {
    for (const auto& [k, v] : specials())
      if (v == id) return true;
    return false;
  }
};

inline const std::vector<std::string>& default_specials() {
  static const std::vector<std::string> s = {
      "<pad>", "<clf>",         "<movie>", "<actor>",   "<director>", "<writer>",       "<person>",
      "<budget>", "<certificate>", "<genre>", "<country>", "<release_year>", "<other>"};
  return s;
}

// GPT-2 style pre-tokenization without regex: an optional single leading
// space followed by a run of letters, a run of digits, or a run of other
// non-space bytes; remaining whitespace forms its own chunk.
inline std::vector<std::string> pretokenize(std::string_view text) {
  auto cls = [](unsigned char c) {
    if (std::isalpha(c) || c >= 0x80) return 0;
    if (std::isdigit(c)) return 1;
    if (std::isspace(c)) return 3;
    return 2;
  };
  std::vector<std::string> out;
  std::size_t i = 0, n = text.size();
  while (i < n) {
    std::size_t start = i;
    int c = cls(static_cast<unsigned char>(text[i]));
    if (c == 3) {
      std::size_t j = i;
      while (j < n && cls(static_cast<unsigned char>(text[j])) == 3) ++j;
      if (j == n || text[j - 1] != ' ') {
        out.emplace_back(text.substr(i, j - i));
        i = j;
        continue;
      }
      if (j - 1 > i) out.emplace_back(text.substr(i, j - 1 - i));
      start = j - 1;
      c = cls(static_cast<unsigned char>(text[j]));
      i = j;
    }
    while (i < n && cls(static_cast<unsigned char>(text[i])) == c) ++i;
    out.emplace_back(text.substr(start, i - start));
  }
  return out;
}

class BpeTokenizer : public Tokenizer {
 public:
  BpeTokenizer(std::vector<std::pair<int, int>> merges, std::vector<std::string> specials = default_specials())
      : merges_(std::move(merges)) {
    for (std::size_t i = 0; i < merges_.size(); ++i) {
      auto [a, b] = merges_[i];
      int id = 256 + static_cast<int>(i);
      if (a < 0 || b < 0 || a >= id || b >= id) throw SchemaError("bpe merge " + std::to_string(i) + " is invalid");
      rank_[key(a, b)] = id;
    }
    bytes_.resize(256 + merges_.size());
    for (int i = 0; i < 256; ++i) bytes_[i] = std::string(1, static_cast<char>(i));
    for (std::size_t i = 0; i < merges_.size(); ++i)
      bytes_[256 + i] = bytes_[merges_[i].first] + bytes_[merges_[i].second];
    int next = 256 + static_cast<int>(merges_.size());
    for (const auto& s : specials) {
      if (specials_.count(s)) throw SchemaError("duplicate special token '" + s + "'");
      specials_[s] = next;
      special_text_[next] = s;
      ++next;
    }
    if (!specials_.count("<pad>") || !specials_.count("<clf>"))
      throw SchemaError("bpe specials must include <pad> and <clf>");
    vocab_ = next;
  }

  std::vector<int> encode(std::string_view text) const override {
    std::vector<int> out;
    std::size_t i = 0;
    std::size_t plain = 0;
    while (i < text.size()) {
      if (text[i] == '<') {
        auto close = text.find('>', i);
        if (close != std::string_view::npos) {
          auto it = specials_.find(std::string(text.substr(i, close - i + 1)));
          if (it != specials_.end()) {
            encode_plain(text.substr(plain, i - plain), out);
            out.push_back(it->second);
            i = close + 1;
            plain = i;
            continue;
          }
        }
      }
      ++i;
    }
    encode_plain(text.substr(plain), out);
    return out;
  }

  std::string decode(const std::vector<int>& ids) const override {
    std::string out;
    for (int id : ids) {
      if (id >= 0 && id < static_cast<int>(bytes_.size())) {
        out += bytes_[id];
      } else if (auto it = special_text_.find(id); it != special_text_.end()) {
        out += it->second;
      } else {
        throw Error("token id out of range: " + std::to_string(id));
      }
    }
    return out;
  }

  int vocab_size() const override { return vocab_; }
  int pad_id() const override { return specials_.at("<pad>"); }
  int clf_id() const override { return specials_.at("<clf>"); }
  const std::map<std::string, int>& specials() const override { return specials_; }
  const std::vector<std::pair<int, int>>& merges() const { return merges_; }

  std::vector<std::string> special_names() const {
    std::vector<std::string> names(special_text_.size());
    int base = 256 + static_cast<int>(merges_.size());
    for (const auto& [id, s] : special_text_) names[id - base] = s;
    return names;
  }

 private:
  static std::uint64_t key(int a, int b) { return (std::uint64_t(std::uint32_t(a)) << 32) | std::uint32_t(b); }

  void encode_plain(std::string_view text, std::vector<int>& out) const {
    for (const auto& chunk : pretokenize(text)) {
      std::vector<int> ids;
      for (unsigned char c : chunk) ids.push_back(c);
      while (ids.size() > 1) {
        int best = -1;
        for (std::size_t k = 0; k + 1 < ids.size(); ++k) {
          auto it = rank_.find(key(ids[k], ids[k + 1]));
          if (it != rank_.end() && (best < 0 || it->second < best)) {
            best = it->second;
          }
        }
        if (best < 0) break;
        std::vector<int> merged;
        merged.reserve(ids.size());
        for (std::size_t k = 0; k < ids.size(); ++k) {
          if (k + 1 < ids.size() && key(ids[k], ids[k + 1]) == key(merges_[best - 256].first, merges_[best - 256].second)) {
            merged.push_back(best);
            ++k;
          } else {
            merged.push_back(ids[k]);
          }
        }
        ids = std::move(merged);
      }
      out.insert(out.end(), ids.begin(), ids.end());
    }
  }

  std::vector<std::pair<int, int>> merges_;
  std::unordered_map<std::uint64_t, int> rank_;
  std::vector<std::string> bytes_;
  std::map<std::string, int> specials_;
  std::map<int, std::string> special_text_;
  int vocab_ = 0;
};

// Learns `num_merges` merges from `texts`. Most frequent pair first, smaller
// (a, b) on ties. Stops early when no pair occurs twice.
inline std::vector<std::pair<int, int>> train_bpe(const std::vector<std::string>& texts, std::size_t num_merges) {
  std::map<std::string, std::size_t> chunk_counts;
  for (const auto& t : texts)
    for (auto& c : pretokenize(t)) ++chunk_counts[c];
  std::vector<std::pair<std::vector<int>, std::size_t>> words;
  for (const auto& [c, n] : chunk_counts) {
    std::vector<int> ids;
    for (unsigned char b : c) ids.push_back(b);
    words.emplace_back(std::move(ids), n);
  }
  std::vector<std::pair<int, int>> merges;
  while (merges.size() < num_merges) {
    std::map<std::pair<int, int>, std::size_t> pairs;
    for (const auto& [ids, n] : words)
      for (std::size_t k = 0; k + 1 < ids.size(); ++k) pairs[{ids[k], ids[k + 1]}] += n;
    std::pair<int, int> best{-1, -1};
    std::size_t best_n = 1;
    for (const auto& [p, n] : pairs)
      if (n > best_n) {
        best = p;
        best_n = n;
      }
    if (best.first < 0) break;
    int id = 256 + static_cast<int>(merges.size());
    merges.push_back(best);
    for (auto& [ids, n] : words) {
      std::vector<int> merged;
      for (std::size_t k = 0; k < ids.size(); ++k) {
        if (k + 1 < ids.size() && ids[k] == best.first && ids[k + 1] == best.second) {
          merged.push_back(id);
          ++k;
        } else {
          merged.push_back(ids[k]);
        }
      }
      ids = std::move(merged);
    }
  }
  return merges;
}

// {"type":"byte_bpe","version":1,"merges":[[a,b],...],"specials":[...]}
inline Json to_json(const BpeTokenizer& t) {
  Json merges = Json::array();
  for (auto [a, b] : t.merges()) merges.push_back({a, b});
  return {{"type", "byte_bpe"}, {"version", 1}, {"merges", merges}, {"specials", t.special_names()}};
}

inline BpeTokenizer bpe_from_json(const Json& j) {
  if (j.value("type", "") != "byte_bpe") throw SchemaError("tokenizer: type must be 'byte_bpe'");
  if (j.value("version", 0) != 1) throw SchemaError("tokenizer: unsupported version");
  try {
    std::vector<std::pair<int, int>> merges;
    for (const auto& m : j.at("merges")) merges.emplace_back(m.at(0).get<int>(), m.at(1).get<int>());
    std::vector<std::string> specials =
        j.contains("specials") ? j["specials"].get<std::vector<std::string>>() : default_specials();
    return BpeTokenizer(std::move(merges), std::move(specials));
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("tokenizer: ") + e.what());
  }
}

inline BpeTokenizer load_bpe(const std::filesystem::path& path) { return bpe_from_json(read_json_file(path)); }

}  // namespace opdial
