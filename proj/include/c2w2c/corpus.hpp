#pragma once

#include <algorithm>
#include <array>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "c2w2c/random.hpp"
#include "c2w2c/vocab.hpp"

namespace c2w2c {

using Sentence = std::vector<std::string>;

/// Splits one line into whitespace-separated tokens (runs of spaces/tabs
/// collapse) and wraps them in sentence markers.
inline Sentence wrap_sentence(const std::string& line, bool lowercase) {
  Sentence s;
  s.push_back(kSentStart);
  std::string token;
  auto flush = [&] {
    if (!token.empty()) {
      s.push_back(lowercase ? utf8::lowercase(token) : token);
      token.clear();
    }
  };
  for (char ch : line) {
    if (ch == ' ' || ch == '\t' || ch == '\r') {
      flush();
    } else {
      token.push_back(ch);
    }
  }
  flush();
  s.push_back(kSentEnd);
  return s;
}

/// Reads a sentence-per-line UTF-8 corpus. Empty lines are skipped; each
/// sentence comes back wrapped with the <s> ... </s> pseudo-words.
inline std::vector<Sentence> load_sentences(const std::string& path, bool lowercase = true) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorpusError("cannot open corpus file: " + path);
  std::vector<Sentence> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    try {
      utf8::decode(line);  // validate before any splitting
    } catch (const CorpusError& e) {
      throw CorpusError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
    Sentence s = wrap_sentence(line, lowercase);
    if (s.size() > 2) out.push_back(std::move(s));  // markers only = empty line
  }
  if (in.bad()) throw CorpusError("I/O error while reading " + path);
  return out;
}

/// Characters of every content word, in order of first occurrence. Marker
/// pseudo-words contribute nothing; they live on dedicated special symbols.
inline CharVocab build_char_vocab(const std::vector<Sentence>& sentences) {
  if (sentences.empty()) throw CorpusError("build_char_vocab: empty corpus");
  CharVocab v;
  for (const auto& s : sentences) {
    for (const auto& tok : s) {
      if (is_marker(tok)) continue;
      for (char32_t c : utf8::decode(tok)) v.add_char(c);
    }
  }
  return v;
}

/// Content word types by descending frequency, ties lexicographic.
inline WordVocab build_word_vocab(const std::vector<Sentence>& sentences) {
  if (sentences.empty()) throw CorpusError("build_word_vocab: empty corpus");
  std::map<std::string, std::size_t> freq;
  for (const auto& s : sentences) {
    for (const auto& tok : s) {
      if (!is_marker(tok)) ++freq[tok];
    }
  }
  std::vector<std::pair<std::string, std::size_t>> types(freq.begin(), freq.end());
  std::stable_sort(types.begin(), types.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  WordVocab v;
  for (const auto& [w, n] : types) v.add_word(w);
  return v;
}

/// Word-length histogram buckets (characters): 1-5, 6-10, ..., 31-35, 36+.
inline constexpr std::array<const char*, 8> kLengthBucketLabels = {"1-5",   "6-10",  "11-15", "16-20",
                                                                   "21-25", "26-30", "31-35", "35+"};

struct CorpusStats {
  std::size_t total_tokens = 0;   // content words; markers excluded
  std::size_t unique_tokens = 0;
  std::array<std::size_t, 8> length_histogram{};
  std::vector<std::size_t> cumulative_frequency;  // descending-frequency prefix sums

  /// Fraction of tokens covered by the k most frequent types.
  double coverage(std::size_t k) const {
    if (total_tokens == 0) return 0.0;
    if (k == 0) return 0.0;
    k = std::min(k, cumulative_frequency.size());
    return static_cast<double>(cumulative_frequency[k - 1]) / static_cast<double>(total_tokens);
  }
};

inline CorpusStats compute_stats(const std::vector<Sentence>& sentences) {
  if (sentences.empty()) throw CorpusError("compute_stats: empty corpus");
  CorpusStats st;
  std::map<std::string, std::size_t> freq;
  for (const auto& s : sentences) {
    for (const auto& tok : s) {
      if (is_marker(tok)) continue;
      ++st.total_tokens;
      ++freq[tok];
      const std::size_t len = utf8::length(tok);
      const std::size_t bucket = len == 0 ? 0 : std::min<std::size_t>((len - 1) / 5, 7);
      ++st.length_histogram[bucket];
    }
  }
  st.unique_tokens = freq.size();
  std::vector<std::pair<std::string, std::size_t>> types(freq.begin(), freq.end());
  std::stable_sort(types.begin(), types.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  st.cumulative_frequency.reserve(types.size());
  std::size_t acc = 0;
  for (const auto& [w, n] : types) {
    acc += n;
    st.cumulative_frequency.push_back(acc);
  }
  return st;
}

/// Parallel contiguous token streams for stateful batching. Within a stream,
/// the sample at step t is the textual predecessor of the sample at t+1;
/// streams partition the shuffled sentence list with no overlap and never cut
/// a sentence in half.
struct StreamBatch {
  std::vector<std::vector<std::string>> streams;

  std::size_t total_tokens() const {
    std::size_t n = 0;
    for (const auto& s : streams) n += s.size();
    return n;
  }
};

inline StreamBatch make_streams(const std::vector<Sentence>& sentences, int batch_size, std::uint64_t shuffle_seed) {
  if (batch_size < 1) throw CorpusError("make_streams: batch size must be positive");
  if (sentences.size() < static_cast<std::size_t>(batch_size)) {
    throw CorpusError("make_streams: " + std::to_string(sentences.size()) + " sentences cannot fill " +
                      std::to_string(batch_size) + " streams; use a smaller batch size");
  }

  std::vector<std::size_t> order(sentences.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(shuffle_seed);
  shuffle_vector(order, rng);

  std::size_t total = 0;
  for (const auto& s : sentences) total += s.size();

  StreamBatch batch;
  batch.streams.resize(static_cast<std::size_t>(batch_size));
  std::size_t next_sentence = 0;
  std::size_t consumed_tokens = 0;
  for (int b = 0; b < batch_size; ++b) {
    auto& stream = batch.streams[static_cast<std::size_t>(b)];
    // Token-count boundary for this stream, adjusted so every remaining
    // stream still gets at least one sentence.
    const std::size_t boundary = total * static_cast<std::size_t>(b + 1) / static_cast<std::size_t>(batch_size);
    while (next_sentence < sentences.size()) {
      const std::size_t sentences_left = sentences.size() - next_sentence;
      const std::size_t streams_left = static_cast<std::size_t>(batch_size - b);
      if (!stream.empty() && (consumed_tokens >= boundary || sentences_left <= streams_left - 1)) break;
      const Sentence& s = sentences[order[next_sentence]];
      stream.insert(stream.end(), s.begin(), s.end());
      consumed_tokens += s.size();
      ++next_sentence;
    }
  }
  // Tail sentences (boundary rounding) go to the last stream.
  while (next_sentence < sentences.size()) {
    const Sentence& s = sentences[order[next_sentence]];
    batch.streams.back().insert(batch.streams.back().end(), s.begin(), s.end());
    ++next_sentence;
  }
  return batch;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorpusError("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CorpusError("cannot open file for writing: " + path);
  out << content;
  if (!out) throw CorpusError("I/O error while writing " + path);
}

}  // namespace c2w2c
