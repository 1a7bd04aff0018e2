#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "c2w2c/lstm.hpp"
#include "c2w2c/ops.hpp"
#include "c2w2c/random.hpp"
#include "c2w2c/vocab.hpp"

namespace c2w2c {

/// Model width settings. Defaults are the full-scale values; tests override
/// them with toy sizes through the same fields.
struct ModelDims {
  int d_c = 50;        // character feature size
  int d_wi = 150;      // C2W Bi-LSTM hidden size, per direction
  int d_w = 50;        // word embedding size
  int d_l = 500;       // LM LSTM hidden size, both layers
  int d_dec = 500;     // W2C decoder hidden size
  int d_bottleneck = 150;  // word-level baseline output bottleneck
  int max_word_len = 20;

  void validate() const {
    if (d_c < 1 || d_wi < 1 || d_w < 1 || d_l < 1 || d_dec < 1 || d_bottleneck < 1 || max_word_len < 1) {
      throw ConfigError("model dimensions must be positive");
    }
  }
};

inline const ModelDims& validated(const ModelDims& d) {
  d.validate();
  return d;
}

/// Character-to-word encoder: character lookup table, Bi-LSTM over the
/// character sequence, affine projection of the concatenated final states.
template <typename T>
struct C2WParams {
  int vocab_size = 0;
  Tensor<T> char_table;  // [|V_C| x d_c]
  LstmCellParams<T> fwd;
  LstmCellParams<T> bwd;
  Tensor<T> proj;    // [2*d_wi x d_w]
  Tensor<T> proj_b;  // [d_w]

  C2WParams() = default;
  C2WParams(int vc, const ModelDims& d)
      : vocab_size(vc),
        char_table(Tensor<T>::zeros({vc, d.d_c}, true)),
        fwd(d.d_c, d.d_wi),
        bwd(d.d_c, d.d_wi),
        proj(Tensor<T>::zeros({2 * d.d_wi, d.d_w}, true)),
        proj_b(Tensor<T>::zeros({d.d_w}, true)) {}

  template <typename F>
  void for_each(F&& f) {
    f("c2w.char_table", char_table);
    f("c2w.fwd.w_x", fwd.w_x);
    f("c2w.fwd.w_h", fwd.w_h);
    f("c2w.fwd.b", fwd.b);
    f("c2w.bwd.w_x", bwd.w_x);
    f("c2w.bwd.w_h", bwd.w_h);
    f("c2w.bwd.b", bwd.b);
    f("c2w.proj", proj);
    f("c2w.proj_b", proj_b);
  }
};

/// Two stacked LSTM layers; the context embedding is the layer-2 hidden state.
template <typename T>
struct LMParams {
  LstmCellParams<T> l1;
  LstmCellParams<T> l2;

  LMParams() = default;
  LMParams(int input_size, int d_l) : l1(input_size, d_l), l2(d_l, d_l) {}

  template <typename F>
  void for_each(F&& f) {
    f("lm.l1.w_x", l1.w_x);
    f("lm.l1.w_h", l1.w_h);
    f("lm.l1.b", l1.b);
    f("lm.l2.w_x", l2.w_x);
    f("lm.l2.w_h", l2.w_h);
    f("lm.l2.b", l2.b);
  }
};

template <typename T>
struct LmState {
  LstmState<T> l1;
  LstmState<T> l2;

  LmState detached() const { return {{l1.h.detach(), l1.c.detach()}, {l2.h.detach(), l2.c.detach()}}; }
};

template <typename T>
LmState<T> zero_lm_state(const LMParams<T>& p) {
  return {zero_lstm_state(p.l1), zero_lstm_state(p.l2)};
}

/// Word-to-character decoder: gated recurrence over the previous character
/// embedding, the previous hidden state and the context vector, plus a
/// two-feature maxout readout projected to character logits. Gates carry no
/// biases; the readout has the single shared bias; the output projection has
/// its own bias.
template <typename T>
struct W2CParams {
  int vocab_size = 0;
  Tensor<T> w_z, w_r, w_h;  // [d_c x d_dec]
  Tensor<T> u_z, u_r, u_h;  // [d_dec x d_dec]
  Tensor<T> c_z, c_r, c_h;  // [d_ctx x d_dec]
  Tensor<T> v;              // [d_ctx x d_dec], initial state projection
  Tensor<T> char_table;     // [|V_C| x d_c], decoder's own embeddings
  Tensor<T> o1_h, o2_h;     // [d_dec x d_c]
  Tensor<T> o1_e, o2_e;     // [d_c x d_c]
  Tensor<T> o1_c, o2_c;     // [d_ctx x d_c]
  Tensor<T> maxout_b;       // [d_c], shared by both features
  Tensor<T> out_proj;       // [d_c x |V_C|]
  Tensor<T> out_b;          // [|V_C|]

  W2CParams() = default;
  W2CParams(int vc, const ModelDims& d, int d_ctx)
      : vocab_size(vc),
        w_z(Tensor<T>::zeros({d.d_c, d.d_dec}, true)),
        w_r(Tensor<T>::zeros({d.d_c, d.d_dec}, true)),
        w_h(Tensor<T>::zeros({d.d_c, d.d_dec}, true)),
        u_z(Tensor<T>::zeros({d.d_dec, d.d_dec}, true)),
        u_r(Tensor<T>::zeros({d.d_dec, d.d_dec}, true)),
        u_h(Tensor<T>::zeros({d.d_dec, d.d_dec}, true)),
        c_z(Tensor<T>::zeros({d_ctx, d.d_dec}, true)),
        c_r(Tensor<T>::zeros({d_ctx, d.d_dec}, true)),
        c_h(Tensor<T>::zeros({d_ctx, d.d_dec}, true)),
        v(Tensor<T>::zeros({d_ctx, d.d_dec}, true)),
        char_table(Tensor<T>::zeros({vc, d.d_c}, true)),
        o1_h(Tensor<T>::zeros({d.d_dec, d.d_c}, true)),
        o2_h(Tensor<T>::zeros({d.d_dec, d.d_c}, true)),
        o1_e(Tensor<T>::zeros({d.d_c, d.d_c}, true)),
        o2_e(Tensor<T>::zeros({d.d_c, d.d_c}, true)),
        o1_c(Tensor<T>::zeros({d_ctx, d.d_c}, true)),
        o2_c(Tensor<T>::zeros({d_ctx, d.d_c}, true)),
        maxout_b(Tensor<T>::zeros({d.d_c}, true)),
        out_proj(Tensor<T>::zeros({d.d_c, vc}, true)),
        out_b(Tensor<T>::zeros({vc}, true)) {}

  template <typename F>
  void for_each(F&& f) {
    f("w2c.w_z", w_z);
    f("w2c.w_r", w_r);
    f("w2c.w_h", w_h);
    f("w2c.u_z", u_z);
    f("w2c.u_r", u_r);
    f("w2c.u_h", u_h);
    f("w2c.c_z", c_z);
    f("w2c.c_r", c_r);
    f("w2c.c_h", c_h);
    f("w2c.v", v);
    f("w2c.char_table", char_table);
    f("w2c.o1_h", o1_h);
    f("w2c.o2_h", o2_h);
    f("w2c.o1_e", o1_e);
    f("w2c.o2_e", o2_e);
    f("w2c.o1_c", o1_c);
    f("w2c.o2_c", o2_c);
    f("w2c.maxout_b", maxout_b);
    f("w2c.out_proj", out_proj);
    f("w2c.out_b", out_b);
  }
};

/// The complete compositional model.
template <typename T>
struct C2w2cModel {
  ModelDims dims;
  int char_vocab_size = 0;
  C2WParams<T> c2w;
  LMParams<T> lm;
  W2CParams<T> w2c;

  C2w2cModel() = default;
  C2w2cModel(int vc, const ModelDims& d)
      : dims(validated(d)), char_vocab_size(vc), c2w(vc, dims), lm(d.d_w, d.d_l), w2c(vc, dims, d.d_l) {
    if (vc <= CharVocab::kNumSpecials) {
      throw ConfigError("character vocabulary size must exceed the " + std::to_string(CharVocab::kNumSpecials) +
                        " special symbols, got " + std::to_string(vc));
    }
  }

  template <typename F>
  void for_each(F&& f) {
    c2w.for_each(f);
    lm.for_each(f);
    w2c.for_each(f);
  }
};

/// Word-level baseline: embedding input, the same 2-layer LSTM, then a
/// bottleneck and an output projection (both bias-free, matching the
/// softmax(P.(B.c)) output path).
template <typename T>
struct WordLstmModel {
  ModelDims dims;
  int word_vocab_size = 0;
  Tensor<T> embed;  // [|V_W| x d_w]
  LMParams<T> lm;
  Tensor<T> bottleneck;  // [d_l x d_bottleneck]
  Tensor<T> out_proj;    // [d_bottleneck x |V_W|]

  WordLstmModel() = default;
  WordLstmModel(int vw, const ModelDims& d)
      : dims(validated(d)),
        word_vocab_size(vw),
        embed(Tensor<T>::zeros({vw, d.d_w}, true)),
        lm(d.d_w, d.d_l),
        bottleneck(Tensor<T>::zeros({d.d_l, d.d_bottleneck}, true)),
        out_proj(Tensor<T>::zeros({d.d_bottleneck, vw}, true)) {
    if (vw <= WordVocab::kNumSpecials) {
      throw ConfigError("word vocabulary size must exceed the " + std::to_string(WordVocab::kNumSpecials) +
                        " special symbols, got " + std::to_string(vw));
    }
  }

  template <typename F>
  void for_each(F&& f) {
    f("wlstm.embed", embed);
    lm.for_each(f);
    f("wlstm.bottleneck", bottleneck);
    f("wlstm.out_proj", out_proj);
  }
};

// ---------------------------------------------------------------------------
// Initialization

/// Fills matrices with the scale-balanced uniform +-sqrt(6/(fan_in+fan_out)),
/// leaves biases at zero, then sets every LSTM forget-gate bias slice to 1.
template <typename Model>
void initialize_params(Model& model, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  model.for_each([&rng](const std::string&, auto& t) {
    if (t.rank() == 2) {
      using Scalar = std::decay_t<decltype(t.mutable_data()[0])>;
      const double bound = std::sqrt(6.0 / (t.dim(0) + t.dim(1)));
      for (auto& v : t.mutable_data()) v = static_cast<Scalar>(uniform_range(rng, -bound, bound));
    }
  });
  model.for_each([](const std::string& name, auto& t) {
    using Scalar = std::decay_t<decltype(t.mutable_data()[0])>;
    if (t.rank() == 1 && name.size() > 2 && name.compare(name.size() - 2, 2, ".b") == 0) {
      const int h = t.dim(0) / 4;
      for (int j = h; j < 2 * h; ++j) t.mutable_data()[static_cast<std::size_t>(j)] = Scalar(1);
    }
  });
}

// ---------------------------------------------------------------------------
// C2W encoder

inline constexpr int kDecoderStart = -1;  // sentinel: previous-character embedding is the zero vector

/// Composes a word embedding from its characters: forward LSTM over positions
/// 1..true_length, backward LSTM over true_length..1 (EOW and PAD positions
/// excluded), concatenation of the two final states, affine projection.
template <typename T>
Tensor<T> c2w_embed(const EncodedWord& word, const C2WParams<T>& p) {
  using namespace ops;
  std::vector<Tensor<T>> chars;
  chars.reserve(static_cast<std::size_t>(word.true_length));
  for (int i = 0; i < word.true_length; ++i) {
    chars.push_back(lookup(p.char_table, word.char_ids[static_cast<std::size_t>(i)]));
  }
  LstmState<T> f = zero_lstm_state(p.fwd);
  for (int i = 0; i < word.true_length; ++i) f = lstm_step(p.fwd, chars[static_cast<std::size_t>(i)], f);
  LstmState<T> b = zero_lstm_state(p.bwd);
  for (int i = word.true_length - 1; i >= 0; --i) b = lstm_step(p.bwd, chars[static_cast<std::size_t>(i)], b);
  return add(matmul(concat(f.h, b.h), p.proj), p.proj_b);
}

// ---------------------------------------------------------------------------
// Language model

/// One step of the 2-layer LSTM. The returned context embedding is the
/// layer-2 hidden state after this step; calling it on the final context word
/// yields the last state of the sequence.
template <typename T>
std::pair<LmState<T>, Tensor<T>> lm_advance(const LmState<T>& state, const Tensor<T>& word_embedding,
                                            const LMParams<T>& p) {
  LmState<T> next;
  next.l1 = lstm_step(p.l1, word_embedding, state.l1);
  next.l2 = lstm_step(p.l2, next.l1.h, state.l2);
  Tensor<T> context = next.l2.h;
  return {std::move(next), std::move(context)};
}

// ---------------------------------------------------------------------------
// W2C decoder

template <typename T>
Tensor<T> w2c_init(const Tensor<T>& context, const W2CParams<T>& p) {
  return ops::tanh_(ops::matmul(context, p.v));
}

template <typename T>
Tensor<T> w2c_char_embedding(int prev_char, const W2CParams<T>& p) {
  if (prev_char == kDecoderStart) return Tensor<T>::zeros({p.char_table.dim(1)});
  return ops::lookup(p.char_table, prev_char);
}

/// Gated recurrence:
///   z = sigmoid(e.W_z + h.U_z + c.C_z)
///   r = sigmoid(e.W_r + h.U_r + c.C_r)
///   h_cand = tanh(e.W_h + r*(h.U_h + c.C_h))
///   h' = z*h + (1-z)*h_cand
template <typename T>
Tensor<T> w2c_recurrence(const Tensor<T>& h_prev, const Tensor<T>& context, const Tensor<T>& prev_embedding,
                         const W2CParams<T>& p) {
  using namespace ops;
  Tensor<T> z = sigmoid(add(add(matmul(prev_embedding, p.w_z), matmul(h_prev, p.u_z)), matmul(context, p.c_z)));
  Tensor<T> r = sigmoid(add(add(matmul(prev_embedding, p.w_r), matmul(h_prev, p.u_r)), matmul(context, p.c_r)));
  Tensor<T> gated = mul(r, add(matmul(h_prev, p.u_h), matmul(context, p.c_h)));
  Tensor<T> h_cand = tanh_(add(matmul(prev_embedding, p.w_h), gated));
  return add(mul(z, h_prev), mul(one_minus(z), h_cand));
}

/// Maxout readout of a decoder state:
///   s_i = h.O_h^i + e.O_e^i + c.O_c^i + b,  logits = max(s_1, s_2).P + b_out
template <typename T>
Tensor<T> w2c_readout(const Tensor<T>& h, const Tensor<T>& context, const Tensor<T>& prev_embedding,
                      const W2CParams<T>& p) {
  using namespace ops;
  Tensor<T> s1 = add(add(add(matmul(h, p.o1_h), matmul(prev_embedding, p.o1_e)), matmul(context, p.o1_c)), p.maxout_b);
  Tensor<T> s2 = add(add(add(matmul(h, p.o2_h), matmul(prev_embedding, p.o2_e)), matmul(context, p.o2_c)), p.maxout_b);
  return add(matmul(pairwise_max(s1, s2), p.out_proj), p.out_b);
}

/// One decoder step: next hidden state and the character logits read out of
/// it. prev_char may be kDecoderStart.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> w2c_step(const Tensor<T>& h_prev, const Tensor<T>& context, int prev_char,
                                         const W2CParams<T>& p) {
  Tensor<T> e = w2c_char_embedding(prev_char, p);
  Tensor<T> h = w2c_recurrence(h_prev, context, e, p);
  Tensor<T> logits = w2c_readout(h, context, e, p);
  return {std::move(h), std::move(logits)};
}

template <typename T>
using DropoutFn = std::function<Tensor<T>(const Tensor<T>&)>;

template <typename T>
struct WordNllResult {
  Tensor<T> nll_sum;  // scalar graph node
  int char_count = 0;
};

/// Teacher-forced negative log-likelihood of a word under a context: the sum
/// over its characters (plus EOW when the word fits the budget) of the fused
/// softmax cross-entropy. PAD positions contribute nothing.
template <typename T>
WordNllResult<T> word_nll_detail(const Tensor<T>& context, const EncodedWord& target, const W2CParams<T>& p,
                                 const DropoutFn<T>& readout_dropout = nullptr) {
  using namespace ops;
  std::vector<int> targets(target.char_ids.begin(), target.char_ids.begin() + target.true_length);
  if (target.has_eow()) targets.push_back(CharVocab::kEow);

  Tensor<T> h = w2c_init(context, p);
  Tensor<T> total = Tensor<T>::scalar(0);
  int prev = kDecoderStart;
  for (int tgt : targets) {
    Tensor<T> e = w2c_char_embedding(prev, p);
    h = w2c_recurrence(h, context, e, p);
    Tensor<T> h_read = readout_dropout ? readout_dropout(h) : h;
    Tensor<T> logits = w2c_readout(h_read, context, e, p);
    total = add(total, cross_entropy(softmax(logits), tgt));
    prev = tgt;
  }
  return {std::move(total), static_cast<int>(targets.size())};
}

template <typename T>
Tensor<T> word_nll(const Tensor<T>& context, const EncodedWord& target, const W2CParams<T>& p) {
  return word_nll_detail(context, target, p).nll_sum;
}

// ---------------------------------------------------------------------------
// Word-level baseline

/// -ln softmax(out_proj . (bottleneck . c))[target]
template <typename T>
Tensor<T> wordlstm_nll(const Tensor<T>& context, int target_word_id, const WordLstmModel<T>& m) {
  using namespace ops;
  if (target_word_id < 0 || target_word_id >= m.word_vocab_size) {
    throw IndexError("wordlstm_nll: target word id " + std::to_string(target_word_id) + " out of range");
  }
  Tensor<T> logits = matmul(matmul(context, m.bottleneck), m.out_proj);
  return cross_entropy(softmax(logits), target_word_id);
}

// ---------------------------------------------------------------------------
// Parameter counting

struct ParamCount {
  std::vector<std::pair<std::string, std::size_t>> items;       // per tensor, registry order
  std::vector<std::pair<std::string, std::size_t>> components;  // per sub-model
  std::size_t total = 0;

  std::size_t component(const std::string& name) const {
    for (const auto& [n, c] : components) {
      if (n == name) return c;
    }
    throw ConfigError("unknown component: " + name);
  }
};

template <typename Model>
ParamCount count_params(Model& model) {
  ParamCount pc;
  model.for_each([&pc](const std::string& name, auto& t) {
    pc.items.emplace_back(name, t.size());
    const std::string comp = name.substr(0, name.find('.'));
    if (pc.components.empty() || pc.components.back().first != comp) {
      pc.components.emplace_back(comp, 0);
    }
    pc.components.back().second += t.size();
    pc.total += t.size();
  });
  return pc;
}

}  // namespace c2w2c
