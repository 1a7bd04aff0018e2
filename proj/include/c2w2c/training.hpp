#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "c2w2c/corpus.hpp"
#include "c2w2c/model.hpp"

namespace c2w2c {

struct TrainConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double clip_norm = 2.0;
  double dropout = 0.5;
  int batch_size = 150;
  int bptt_window = 1;  // steps between gradient updates
  int max_word_len = 20;
  int epochs = 1;
  std::uint64_t seed = 1;

  void validate() const {
    if (learning_rate <= 0) throw ConfigError("learning rate must be positive");
    if (beta1 <= 0 || beta1 >= 1 || beta2 <= 0 || beta2 >= 1) throw ConfigError("Adam betas must be in (0, 1)");
    if (adam_eps <= 0) throw ConfigError("Adam epsilon must be positive");
    if (clip_norm <= 0) throw ConfigError("clip norm must be positive");
    if (dropout < 0 || dropout >= 1) throw ConfigError("dropout must be in [0, 1)");
    if (batch_size < 1) throw ConfigError("batch size must be positive");
    if (bptt_window < 1) throw ConfigError("bptt window must be positive");
    if (max_word_len < 1) throw ConfigError("max word length must be positive");
    if (epochs < 1) throw ConfigError("epoch count must be positive");
  }
};

template <typename T>
struct AdamMoments {
  std::vector<T> m;
  std::vector<T> v;
};

/// Optimizer state keyed by parameter registry name, so it survives
/// checkpointing while tensors get fresh storage on load.
template <typename T>
struct AdamState {
  std::int64_t step = 0;
  std::map<std::string, AdamMoments<T>> moments;
};

/// Inverted dropout: training mode zeroes entries with probability `rate` and
/// scales survivors by 1/(1-rate); inference mode is the identity.
template <typename T>
Tensor<T> apply_dropout(const Tensor<T>& x, double rate, bool training, std::mt19937_64& rng) {
  if (rate < 0 || rate >= 1) throw ConfigError("dropout rate must be in [0, 1)");
  if (!training || rate == 0) return x;
  const T survivor = static_cast<T>(1.0 / (1.0 - rate));
  Tensor<T> mask = Tensor<T>::zeros(x.shape());
  for (auto& v : mask.mutable_data()) v = uniform_unit(rng) < rate ? T(0) : survivor;
  return ops::mul(x, mask);
}

struct UpdateStats {
  double grad_norm = 0;     // global norm before clipping
  double applied_norm = 0;  // norm of the gradient actually fed to Adam
};

/// Clips the global gradient norm to cfg.clip_norm, then applies one
/// bias-corrected Adam update to every parameter reached by the loss.
template <typename T, typename Model>
UpdateStats clipped_adam_update(Model& model, const GradContext<T>& ctx, AdamState<T>& adam, const TrainConfig& cfg) {
  double sumsq = 0;
  model.for_each([&](const std::string&, Tensor<T>& t) {
    if (!ctx.has_grad(t)) return;
    for (T g : ctx.grad(t)) sumsq += static_cast<double>(g) * static_cast<double>(g);
  });
  UpdateStats stats;
  stats.grad_norm = std::sqrt(sumsq);
  const double scale = stats.grad_norm > cfg.clip_norm ? cfg.clip_norm / stats.grad_norm : 1.0;
  stats.applied_norm = stats.grad_norm * scale;

  adam.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(adam.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(adam.step));
  model.for_each([&](const std::string& name, Tensor<T>& t) {
    if (!ctx.has_grad(t)) return;
    const std::vector<T>& grad = ctx.grad(t);
    AdamMoments<T>& mom = adam.moments[name];
    if (mom.m.empty()) {
      mom.m.assign(t.size(), T(0));
      mom.v.assign(t.size(), T(0));
    } else if (mom.m.size() != t.size() || mom.v.size() != t.size()) {
      throw TrainingError("optimizer moments for " + name + " do not match the parameter shape");
    }
    auto& data = t.mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double g = static_cast<double>(grad[i]) * scale;
      const double m = cfg.beta1 * static_cast<double>(mom.m[i]) + (1.0 - cfg.beta1) * g;
      const double v = cfg.beta2 * static_cast<double>(mom.v[i]) + (1.0 - cfg.beta2) * g * g;
      mom.m[i] = static_cast<T>(m);
      mom.v[i] = static_cast<T>(v);
      data[i] -= static_cast<T>(cfg.learning_rate * (m / bc1) / (std::sqrt(v / bc2) + cfg.adam_eps));
    }
  });
  return stats;
}

struct StepLog {
  int epoch = 0;
  std::int64_t step = 0;  // 1-based within the epoch
  double loss = 0;        // mean NLL per prediction in this window
  double words_per_sec = 0;
};

using StepLogger = std::function<void(const StepLog&)>;

struct EpochMetrics {
  double nll_sum = 0;            // summed NLL over all predictions
  std::size_t item_count = 0;    // prediction terms (characters incl. EOW, or words for the baseline)
  std::size_t words_scored = 0;  // word transitions consumed
  std::size_t tokens_covered = 0;
  std::int64_t steps = 0;
  double seconds = 0;

  double mean_loss() const { return item_count ? nll_sum / static_cast<double>(item_count) : 0.0; }
  double perplexity() const { return std::exp(mean_loss()); }
};

namespace detail {

template <typename T>
struct C2w2cAdapter {
  C2w2cModel<T>& model;
  const CharVocab& vocab;
  int max_word_len;
  using Sample = EncodedWord;

  std::vector<Sample> encode(const std::vector<std::string>& stream) const {
    std::vector<Sample> out;
    out.reserve(stream.size());
    for (const auto& tok : stream) out.push_back(vocab.encode(tok, max_word_len));
    return out;
  }
  Tensor<T> input(const Sample& s) const { return c2w_embed(s, model.c2w); }
  WordNllResult<T> target_nll(const Tensor<T>& context, const Sample& s, const DropoutFn<T>& readout_dropout) const {
    return word_nll_detail(context, s, model.w2c, readout_dropout);
  }
};

template <typename T>
struct WordLstmAdapter {
  WordLstmModel<T>& model;
  const WordVocab& vocab;
  using Sample = int;

  std::vector<Sample> encode(const std::vector<std::string>& stream) const {
    std::vector<Sample> out;
    out.reserve(stream.size());
    for (const auto& tok : stream) out.push_back(vocab.word_id(tok));
    return out;
  }
  Tensor<T> input(const Sample& s) const { return ops::lookup(model.embed, s); }
  WordNllResult<T> target_nll(const Tensor<T>& context, const Sample& s, const DropoutFn<T>&) const {
    return {wordlstm_nll(context, s, model), 1};
  }
};

/// One epoch over stateful streams. States start at zero, persist across
/// sentence boundaries within a stream, and are detached (not reset) at every
/// update boundary; gradients therefore span at most cfg.bptt_window steps.
template <typename T, typename Model, typename Adapter>
EpochMetrics train_epoch_impl(Model& model, const Adapter& adapter, const std::vector<Sentence>& sentences,
                              AdamState<T>& adam, const TrainConfig& cfg, int epoch, std::mt19937_64& dropout_rng,
                              const StepLogger& logger) {
  cfg.validate();
  const StreamBatch batch = make_streams(sentences, cfg.batch_size, derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));

  using Sample = typename Adapter::Sample;
  std::vector<std::vector<Sample>> enc;
  enc.reserve(batch.streams.size());
  std::size_t longest = 0;
  for (const auto& stream : batch.streams) {
    enc.push_back(adapter.encode(stream));
    longest = std::max(longest, enc.back().size());
  }

  std::vector<LmState<T>> states(enc.size());
  for (auto& s : states) s = zero_lm_state(model.lm);

  EpochMetrics met;
  met.tokens_covered = batch.total_tokens();
  const auto epoch_start = std::chrono::steady_clock::now();

  DropoutFn<T> readout_dropout;
  if (cfg.dropout > 0) {
    readout_dropout = [&cfg, &dropout_rng](const Tensor<T>& h) {
      return apply_dropout(h, cfg.dropout, true, dropout_rng);
    };
  }

  std::size_t t = 0;
  while (t + 1 < longest) {
    const auto step_start = std::chrono::steady_clock::now();
    Tensor<T> window_nll = Tensor<T>::scalar(0);
    std::size_t items = 0;
    std::size_t words = 0;
    for (int w = 0; w < cfg.bptt_window && t + static_cast<std::size_t>(w) + 1 < longest; ++w) {
      const std::size_t pos = t + static_cast<std::size_t>(w);
      for (std::size_t b = 0; b < enc.size(); ++b) {
        if (pos + 1 >= enc[b].size()) continue;
        Tensor<T> x = adapter.input(enc[b][pos]);
        x = apply_dropout(x, cfg.dropout, true, dropout_rng);
        auto [next_state, context] = lm_advance(states[b], x, model.lm);
        states[b] = std::move(next_state);
        Tensor<T> context_d = apply_dropout(context, cfg.dropout, true, dropout_rng);
        WordNllResult<T> res = adapter.target_nll(context_d, enc[b][pos + 1], readout_dropout);
        window_nll = ops::add(window_nll, res.nll_sum);
        items += static_cast<std::size_t>(res.char_count);
        words += 1;
      }
    }

    const double window_total = window_nll.item();
    if (!std::isfinite(window_total)) {
      const auto culprit = ops::first_nonfinite(window_nll);
      throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + " step " + std::to_string(met.steps + 1) +
                          "; first non-finite value came from " + culprit.value_or("an unknown tensor"));
    }

    Tensor<T> loss = ops::scale(window_nll, static_cast<T>(1.0 / static_cast<double>(items)));
    GradContext<T> ctx;
    ctx.backward(loss);
    clipped_adam_update(model, ctx, adam, cfg);
    for (auto& s : states) s = s.detached();

    met.steps += 1;
    met.nll_sum += window_total;
    met.item_count += items;
    met.words_scored += words;
    t += static_cast<std::size_t>(cfg.bptt_window);

    if (logger) {
      const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - step_start).count();
      StepLog log;
      log.epoch = epoch;
      log.step = met.steps;
      log.loss = window_total / static_cast<double>(items);
      log.words_per_sec = static_cast<double>(words) / std::max(sec, 1e-9);
      logger(log);
    }
  }

  met.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch_start).count();
  return met;
}

}  // namespace detail

template <typename T>
EpochMetrics run_train_epoch(C2w2cModel<T>& model, const std::vector<Sentence>& sentences, const CharVocab& vocab,
                             AdamState<T>& adam, const TrainConfig& cfg, int epoch, std::mt19937_64& dropout_rng,
                             const StepLogger& logger = nullptr) {
  detail::C2w2cAdapter<T> adapter{model, vocab, cfg.max_word_len};
  return detail::train_epoch_impl<T>(model, adapter, sentences, adam, cfg, epoch, dropout_rng, logger);
}

template <typename T>
EpochMetrics run_train_epoch(WordLstmModel<T>& model, const std::vector<Sentence>& sentences, const WordVocab& vocab,
                             AdamState<T>& adam, const TrainConfig& cfg, int epoch, std::mt19937_64& dropout_rng,
                             const StepLogger& logger = nullptr) {
  detail::WordLstmAdapter<T> adapter{model, vocab};
  return detail::train_epoch_impl<T>(model, adapter, sentences, adam, cfg, epoch, dropout_rng, logger);
}

}  // namespace c2w2c
