#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "c2w2c/corpus.hpp"
#include "c2w2c/model.hpp"

namespace c2w2c {

struct ScoreOptions {
  int max_word_len = 20;
  bool include_sentence_end = false;  // also score the closing </s> as a target
};

struct WordScore {
  std::string token;
  double nll = 0;       // raw character-sum (not length-normalized)
  int char_count = 0;   // characters incl. EOW for c2w2c; 1 for the baseline
};

struct ScoreReport {
  std::vector<WordScore> words;
  double total_nll = 0;
  std::size_t total_chars = 0;

  double sentence_score() const {
    return words.empty() ? 0.0 : total_nll / static_cast<double>(words.size());
  }
};

namespace detail {

inline void check_wrapped(const Sentence& sentence) {
  if (sentence.size() < 2 || sentence.front() != kSentStart || sentence.back() != kSentEnd) {
    throw ScoringError("sentence must be wrapped in " + std::string(kSentStart) + " ... " + std::string(kSentEnd));
  }
}

inline void check_characters_known(const CharVocab& vocab, const Sentence& sentence) {
  std::string offenders;
  for (const auto& tok : sentence) {
    if (!vocab.fully_known(tok)) offenders += (offenders.empty() ? "" : ", ") + ("\"" + tok + "\"");
  }
  if (!offenders.empty()) throw ScoringError("unknown character in word(s): " + offenders);
}

/// Stable log-softmax of a logits vector.
template <typename T>
std::vector<double> log_probs(const Tensor<T>& logits) {
  const auto& x = logits.data();
  double mx = static_cast<double>(x[0]);
  for (T v : x) mx = std::max(mx, static_cast<double>(v));
  double denom = 0;
  for (T v : x) denom += std::exp(static_cast<double>(v) - mx);
  const double lse = mx + std::log(denom);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = static_cast<double>(x[i]) - lse;
  return out;
}

}  // namespace detail

/// Word-by-word NLL of one wrapped sentence: word i conditions on words
/// 0..i-1; the leading <s> is context only; the closing </s> is scored only
/// when requested. Per-word NLL is the raw character-sum including EOW.
template <typename T>
ScoreReport score_sentence(const C2w2cModel<T>& model, const CharVocab& vocab, const Sentence& sentence,
                           const ScoreOptions& opt = {}) {
  detail::check_wrapped(sentence);
  detail::check_characters_known(vocab, sentence);
  NoGradGuard guard;

  ScoreReport report;
  LmState<T> state = zero_lm_state(model.lm);
  Tensor<T> context;
  const std::size_t last = sentence.size() - 1;
  for (std::size_t i = 0; i + 1 < sentence.size(); ++i) {
    Tensor<T> embedding = c2w_embed(vocab.encode(sentence[i], opt.max_word_len), model.c2w);
    auto [next_state, ctx] = lm_advance(state, embedding, model.lm);
    state = std::move(next_state);
    context = std::move(ctx);

    const std::size_t target = i + 1;
    if (target == last && !opt.include_sentence_end) break;
    WordNllResult<T> res = word_nll_detail(context, vocab.encode(sentence[target], opt.max_word_len), model.w2c);
    report.words.push_back({sentence[target], res.nll_sum.item(), res.char_count});
    report.total_nll += res.nll_sum.item();
    report.total_chars += static_cast<std::size_t>(res.char_count);
  }
  return report;
}

/// Baseline scoring: unknown words fall back to the UNK type, so it never
/// fails on characters.
template <typename T>
ScoreReport score_sentence(const WordLstmModel<T>& model, const WordVocab& vocab, const Sentence& sentence,
                           const ScoreOptions& opt = {}) {
  detail::check_wrapped(sentence);
  NoGradGuard guard;

  ScoreReport report;
  LmState<T> state = zero_lm_state(model.lm);
  const std::size_t last = sentence.size() - 1;
  for (std::size_t i = 0; i + 1 < sentence.size(); ++i) {
    Tensor<T> embedding = ops::lookup(model.embed, vocab.word_id(sentence[i]));
    auto [next_state, context] = lm_advance(state, embedding, model.lm);
    state = std::move(next_state);

    const std::size_t target = i + 1;
    if (target == last && !opt.include_sentence_end) break;
    const double nll = wordlstm_nll(context, vocab.word_id(sentence[target]), model).item();
    report.words.push_back({sentence[target], nll, 1});
    report.total_nll += nll;
    report.total_chars += 1;
  }
  return report;
}

struct PerplexityReport {
  double nll_sum = 0;
  std::size_t words = 0;
  std::size_t chars = 0;

  double perplexity() const { return std::exp(nll_sum / static_cast<double>(words)); }
  double char_perplexity() const { return std::exp(nll_sum / static_cast<double>(chars)); }
};

/// PP = exp(mean word NLL) over every scored word of the test set.
template <typename Model, typename Vocab>
PerplexityReport corpus_perplexity(const Model& model, const Vocab& vocab, const std::vector<Sentence>& sentences,
                                   const ScoreOptions& opt = {}) {
  if (sentences.empty()) throw ScoringError("perplexity of an empty test set is undefined");
  PerplexityReport report;
  for (const auto& s : sentences) {
    ScoreReport sr = score_sentence(model, vocab, s, opt);
    report.nll_sum += sr.total_nll;
    report.words += sr.words.size();
    report.chars += sr.total_chars;
  }
  if (report.words == 0) throw ScoringError("test set contains no scorable words");
  return report;
}

// ---------------------------------------------------------------------------
// Sampling

struct DecodedWord {
  std::vector<int> char_ids;  // no EOW, no PAD
  double logp = 0;            // summed character log-probs, incl. the EOW step when taken
};

struct SampledSentence {
  Sentence words;
  double logp = 0;
};

struct BeamConfig {
  int word_k = 20;
  int sentence_k = 10;
  int max_words = 50;
  int max_word_len = 20;
  bool length_normalize_words = false;  // divide word scores by char count inside the inner beam

  void validate() const {
    if (word_k < 1 || sentence_k < 1) throw ConfigError("beam widths must be positive");
    if (max_words < 0) throw ConfigError("max words must be nonnegative");
    if (max_word_len < 1) throw ConfigError("max word length must be positive");
  }
};

inline EncodedWord encoded_from_char_ids(const std::vector<int>& ids, int max_len) {
  if (ids.size() > static_cast<std::size_t>(max_len)) throw ScoringError("decoded word exceeds the character budget");
  EncodedWord w;
  w.char_ids.assign(static_cast<std::size_t>(max_len), CharVocab::kPad);
  w.true_length = static_cast<int>(ids.size());
  std::copy(ids.begin(), ids.end(), w.char_ids.begin());
  if (w.has_eow()) w.char_ids[ids.size()] = CharVocab::kEow;
  return w;
}

/// Inner beam over characters for one context. Hypotheses terminate at EOW or
/// at the character budget; terminated hypotheses occupy beam slots unchanged
/// until every survivor has terminated. Results come back sorted by score,
/// best first, at most `width` of them. width 1 reproduces greedy decoding.
template <typename T>
std::vector<DecodedWord> beam_decode_words(const W2CParams<T>& params, const Tensor<T>& context, int width,
                                           int max_word_len, bool length_normalize = false) {
  NoGradGuard guard;
  struct Hyp {
    std::vector<int> chars;
    double logp = 0;
    bool done = false;
    Tensor<T> h;
    int prev = kDecoderStart;
  };
  auto score = [length_normalize](const Hyp& h) {
    if (!length_normalize || h.chars.empty()) return h.logp;
    return h.logp / static_cast<double>(h.chars.size());
  };

  std::vector<Hyp> beam;
  beam.push_back({{}, 0.0, false, w2c_init(context, params), kDecoderStart});

  bool any_live = true;
  while (any_live) {
    std::vector<Hyp> candidates;
    for (const Hyp& hyp : beam) {
      if (hyp.done) {
        candidates.push_back(hyp);
        continue;
      }
      auto [h_next, logits] = w2c_step(hyp.h, context, hyp.prev, params);
      const std::vector<double> lp = detail::log_probs(logits);
      for (int sym = 0; sym < params.vocab_size; ++sym) {
        if (sym == CharVocab::kPad) continue;
        if (sym == CharVocab::kEow) {
          if (hyp.chars.empty()) continue;
          Hyp ended = hyp;
          ended.logp += lp[static_cast<std::size_t>(sym)];
          ended.done = true;
          candidates.push_back(std::move(ended));
          continue;
        }
        Hyp extended = hyp;
        extended.chars.push_back(sym);
        extended.logp += lp[static_cast<std::size_t>(sym)];
        extended.h = h_next;
        extended.prev = sym;
        extended.done = extended.chars.size() >= static_cast<std::size_t>(max_word_len);
        candidates.push_back(std::move(extended));
      }
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [&score](const Hyp& a, const Hyp& b) { return score(a) > score(b); });
    if (candidates.size() > static_cast<std::size_t>(width)) candidates.resize(static_cast<std::size_t>(width));
    beam = std::move(candidates);
    any_live = false;
    for (const Hyp& h : beam) any_live = any_live || !h.done;
  }

  std::vector<DecodedWord> out;
  out.reserve(beam.size());
  for (Hyp& h : beam) out.push_back({std::move(h.chars), h.logp});
  return out;
}

namespace detail {

template <typename T>
struct SeededContext {
  LmState<T> state;
  Tensor<T> context;
};

template <typename T>
SeededContext<T> consume_seed(const C2w2cModel<T>& model, const CharVocab& vocab, const Sentence& seed,
                              int max_word_len) {
  if (seed.empty()) throw ScoringError("sampling needs at least one seed word");
  check_characters_known(vocab, seed);
  SeededContext<T> out;
  out.state = zero_lm_state(model.lm);
  for (const auto& tok : seed) {
    Tensor<T> embedding = c2w_embed(vocab.encode(tok, max_word_len), model.c2w);
    auto [next_state, context] = lm_advance(out.state, embedding, model.lm);
    out.state = std::move(next_state);
    out.context = std::move(context);
  }
  return out;
}

inline bool is_sentence_end_word(const std::vector<int>& char_ids) {
  return char_ids.size() == 1 && char_ids[0] == CharVocab::kSentEndChar;
}

}  // namespace detail

/// Greedy generation: per word, per character, takes the argmax symbol until
/// EOW or the budget; appends words until </s> or max_words.
template <typename T>
SampledSentence sample_stochastic(const C2w2cModel<T>& model, const CharVocab& vocab, const Sentence& seed,
                                  int max_words, int max_word_len = 20) {
  NoGradGuard guard;
  detail::SeededContext<T> sc = detail::consume_seed(model, vocab, seed, max_word_len);

  SampledSentence out;
  out.words = seed;
  for (int i = 0; i < max_words; ++i) {
    DecodedWord word = beam_decode_words(model.w2c, sc.context, 1, max_word_len).front();
    out.words.push_back(vocab.decode(encoded_from_char_ids(word.char_ids, max_word_len)));
    out.logp += word.logp;
    if (detail::is_sentence_end_word(word.char_ids)) break;
    Tensor<T> embedding = c2w_embed(encoded_from_char_ids(word.char_ids, max_word_len), model.c2w);
    auto [next_state, context] = lm_advance(sc.state, embedding, model.lm);
    sc.state = std::move(next_state);
    sc.context = std::move(context);
  }
  return out;
}

/// Two-level beam search: the inner beam proposes up to word_k words per live
/// hypothesis; the outer beam keeps the sentence_k best word sequences by
/// total log-probability (word scores unnormalized over the candidate set).
/// Hypotheses terminate at </s>; max_words bounds the expansion. Returns the
/// surviving sentences ranked best first.
template <typename T>
std::vector<SampledSentence> sample_beam(const C2w2cModel<T>& model, const CharVocab& vocab, const Sentence& seed,
                                         const BeamConfig& cfg) {
  cfg.validate();
  NoGradGuard guard;
  detail::SeededContext<T> start = detail::consume_seed(model, vocab, seed, cfg.max_word_len);

  struct Hyp {
    Sentence words;
    double logp = 0;
    bool done = false;
    LmState<T> state;
    Tensor<T> context;
  };
  std::vector<Hyp> beam;
  beam.push_back({seed, 0.0, false, start.state, start.context});

  for (int round = 0; round < cfg.max_words; ++round) {
    bool any_live = false;
    for (const Hyp& h : beam) any_live = any_live || !h.done;
    if (!any_live) break;

    struct Candidate {
      std::size_t parent;
      DecodedWord word;   // empty char_ids for a carried-over terminated parent
      double logp;
      bool done;
      bool carried;
    };
    std::vector<Candidate> candidates;
    for (std::size_t pi = 0; pi < beam.size(); ++pi) {
      const Hyp& parent = beam[pi];
      if (parent.done) {
        candidates.push_back({pi, {}, parent.logp, true, true});
        continue;
      }
      for (DecodedWord& w : beam_decode_words(model.w2c, parent.context, cfg.word_k, cfg.max_word_len,
                                              cfg.length_normalize_words)) {
        const bool ends = detail::is_sentence_end_word(w.char_ids);
        const double total = parent.logp + w.logp;
        candidates.push_back({pi, std::move(w), total, ends, false});
      }
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Candidate& a, const Candidate& b) { return a.logp > b.logp; });
    if (candidates.size() > static_cast<std::size_t>(cfg.sentence_k)) {
      candidates.resize(static_cast<std::size_t>(cfg.sentence_k));
    }

    // Materialize survivors only; the LM advance is the expensive part.
    std::vector<Hyp> next;
    next.reserve(candidates.size());
    for (Candidate& c : candidates) {
      const Hyp& parent = beam[c.parent];
      if (c.carried) {
        next.push_back(parent);
        continue;
      }
      Hyp h;
      h.words = parent.words;
      h.words.push_back(vocab.decode(encoded_from_char_ids(c.word.char_ids, cfg.max_word_len)));
      h.logp = c.logp;
      h.done = c.done;
      if (c.done) {
        h.state = parent.state;
        h.context = parent.context;
      } else {
        Tensor<T> embedding = c2w_embed(encoded_from_char_ids(c.word.char_ids, cfg.max_word_len), model.c2w);
        auto [next_state, context] = lm_advance(parent.state, embedding, model.lm);
        h.state = std::move(next_state);
        h.context = std::move(context);
      }
      next.push_back(std::move(h));
    }
    beam = std::move(next);
  }

  std::vector<SampledSentence> out;
  out.reserve(beam.size());
  for (Hyp& h : beam) out.push_back({std::move(h.words), h.logp});
  return out;
}

}  // namespace c2w2c
