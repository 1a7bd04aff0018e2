#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "c2w2c/errors.hpp"
#include "c2w2c/utf8.hpp"

namespace c2w2c {

/// Sentence boundary pseudo-words. Ordinary words at the LM level; at the
/// character level each one encodes as its single dedicated symbol.
inline constexpr const char* kSentStart = "<s>";
inline constexpr const char* kSentEnd = "</s>";

inline bool is_marker(const std::string& token) { return token == kSentStart || token == kSentEnd; }

/// A word as a bounded character-index sequence. Positions 0..true_length-1
/// hold character ids; when true_length < char_ids.size() the next position
/// is EOW and the rest PAD.
struct EncodedWord {
  std::vector<int> char_ids;
  int true_length = 0;

  int max_len() const { return static_cast<int>(char_ids.size()); }
  bool has_eow() const { return true_length < max_len(); }
};

/// Character index space V_C. Specials occupy fixed low indices, then corpus
/// characters in order of first occurrence.
class CharVocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kEow = 1;
  static constexpr int kUnkChar = 2;
  static constexpr int kSentStartChar = 3;
  static constexpr int kSentEndChar = 4;
  static constexpr int kNumSpecials = 5;

  CharVocab() = default;

  explicit CharVocab(const std::vector<char32_t>& chars_in_order) {
    for (char32_t c : chars_in_order) add_char(c);
  }

  void add_char(char32_t c) {
    if (!index_.count(c)) {
      index_[c] = kNumSpecials + static_cast<int>(chars_.size());
      chars_.push_back(c);
    }
  }

  int size() const { return kNumSpecials + static_cast<int>(chars_.size()); }

  bool contains(char32_t c) const { return index_.count(c) > 0; }

  int char_id(char32_t c) const {
    auto it = index_.find(c);
    return it == index_.end() ? kUnkChar : it->second;
  }

  /// Encodes a token into the bounded character budget. Longer words are
  /// truncated to max_len with no EOW; unknown characters map to UNK-CHAR.
  /// Marker pseudo-words encode as their dedicated single symbol.
  EncodedWord encode(const std::string& token, int max_len = 20) const {
    if (token.empty()) throw CorpusError("encode: empty word");
    if (max_len < 1) throw CorpusError("encode: max_len must be positive");
    EncodedWord w;
    w.char_ids.assign(static_cast<std::size_t>(max_len), kPad);
    if (is_marker(token)) {
      w.char_ids[0] = token == std::string(kSentStart) ? kSentStartChar : kSentEndChar;
      w.true_length = 1;
    } else {
      const auto cps = utf8::decode(token);
      w.true_length = static_cast<int>(std::min<std::size_t>(cps.size(), static_cast<std::size_t>(max_len)));
      for (int i = 0; i < w.true_length; ++i) w.char_ids[static_cast<std::size_t>(i)] = char_id(cps[static_cast<std::size_t>(i)]);
    }
    if (w.true_length < max_len) w.char_ids[static_cast<std::size_t>(w.true_length)] = kEow;
    return w;
  }

  /// Inverse of encode for words of known characters within the budget.
  std::string decode(const EncodedWord& w) const {
    std::string out;
    for (int i = 0; i < w.true_length; ++i) {
      const int id = w.char_ids[static_cast<std::size_t>(i)];
      out += symbol_string(id);
    }
    return out;
  }

  std::string symbol_string(int id) const {
    if (id < 0 || id >= size()) throw IndexError("character id " + std::to_string(id) + " out of range");
    switch (id) {
      case kPad: return "<pad>";
      case kEow: return "<eow>";
      case kUnkChar: return "\xEF\xBF\xBD";  // U+FFFD
      case kSentStartChar: return kSentStart;
      case kSentEndChar: return kSentEnd;
      default: {
        std::string s;
        utf8::append(s, chars_[static_cast<std::size_t>(id - kNumSpecials)]);
        return s;
      }
    }
  }

  /// True when every character of the token is in the vocabulary; markers are
  /// always encodable.
  bool fully_known(const std::string& token) const {
    if (is_marker(token)) return true;
    for (char32_t c : utf8::decode(token)) {
      if (!contains(c)) return false;
    }
    return true;
  }

  /// One symbol per line, line number = index, specials first.
  std::string to_text() const {
    std::string out = "<pad>\n<eow>\n<unk>\n<s>\n</s>\n";
    for (char32_t c : chars_) {
      utf8::append(out, c);
      out.push_back('\n');
    }
    return out;
  }

  static CharVocab from_text(const std::string& text) {
    std::vector<std::string> lines;
    std::string cur;
    for (char ch : text) {
      if (ch == '\n') {
        lines.push_back(cur);
        cur.clear();
      } else {
        cur.push_back(ch);
      }
    }
    if (!cur.empty()) lines.push_back(cur);
    static const char* kExpected[] = {"<pad>", "<eow>", "<unk>", "<s>", "</s>"};
    if (lines.size() < kNumSpecials) throw CorpusError("character vocab file too short");
    for (int i = 0; i < kNumSpecials; ++i) {
      if (lines[static_cast<std::size_t>(i)] != kExpected[i]) {
        throw CorpusError("character vocab file: line " + std::to_string(i + 1) + " must be " + kExpected[i]);
      }
    }
    CharVocab v;
    for (std::size_t i = kNumSpecials; i < lines.size(); ++i) {
      const auto cps = utf8::decode(lines[i]);
      if (cps.size() != 1) throw CorpusError("character vocab file: line " + std::to_string(i + 1) + " is not a single character");
      v.add_char(cps[0]);
    }
    return v;
  }

  std::uint64_t hash() const { return fnv1a(to_text()); }

  static std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    return h;
  }

 private:
  std::vector<char32_t> chars_;
  std::unordered_map<char32_t, int> index_;
};

/// Word index space for the word-level baseline. UNK plus the sentence
/// markers sit at fixed indices, then corpus types by descending frequency
/// (lexicographic tie order).
class WordVocab {
 public:
  static constexpr int kUnkWord = 0;
  static constexpr int kSentStartWord = 1;
  static constexpr int kSentEndWord = 2;
  static constexpr int kNumSpecials = 3;

  WordVocab() = default;

  explicit WordVocab(const std::vector<std::string>& types_in_order) {
    for (const auto& t : types_in_order) add_word(t);
  }

  void add_word(const std::string& w) {
    if (!index_.count(w)) {
      index_[w] = kNumSpecials + static_cast<int>(words_.size());
      words_.push_back(w);
    }
  }

  int size() const { return kNumSpecials + static_cast<int>(words_.size()); }

  int word_id(const std::string& w) const {
    if (w == std::string(kSentStart)) return kSentStartWord;
    if (w == std::string(kSentEnd)) return kSentEndWord;
    auto it = index_.find(w);
    return it == index_.end() ? kUnkWord : it->second;
  }

  const std::string& word_string(int id) const {
    static const std::string kSpecials[] = {"<unk>", kSentStart, kSentEnd};
    if (id < 0 || id >= size()) throw IndexError("word id " + std::to_string(id) + " out of range");
    if (id < kNumSpecials) return kSpecials[id];
    return words_[static_cast<std::size_t>(id - kNumSpecials)];
  }

  std::string to_text() const {
    std::string out = "<unk>\n<s>\n</s>\n";
    for (const auto& w : words_) {
      out += w;
      out.push_back('\n');
    }
    return out;
  }

  static WordVocab from_text(const std::string& text) {
    WordVocab v;
    std::string cur;
    std::size_t line = 0;
    static const char* kExpected[] = {"<unk>", "<s>", "</s>"};
    for (std::size_t i = 0; i <= text.size(); ++i) {
      if (i == text.size() || text[i] == '\n') {
        if (i == text.size() && cur.empty()) break;
        if (line < kNumSpecials) {
          if (cur != kExpected[line]) {
            throw CorpusError("word vocab file: line " + std::to_string(line + 1) + " must be " + kExpected[line]);
          }
        } else {
          v.add_word(cur);
        }
        ++line;
        cur.clear();
      } else {
        cur.push_back(text[i]);
      }
    }
    if (line < kNumSpecials) throw CorpusError("word vocab file too short");
    return v;
  }

  std::uint64_t hash() const { return CharVocab::fnv1a(to_text()); }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace c2w2c
