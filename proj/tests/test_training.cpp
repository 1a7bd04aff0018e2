#include "c2w2c/training.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <string>
#include <vector>

#include "c2w2c/model.hpp"
#include "oracles.hpp"

namespace {

using c2w2c::AdamState;
using c2w2c::CharVocab;
using c2w2c::GradContext;
using c2w2c::Sentence;
using c2w2c::Tensor;
using c2w2c::TrainConfig;

struct OneParam {
  Tensor<double> w;

  template <typename F>
  void for_each(F&& f) {
    f(std::string("w"), w);
  }
};

c2w2c::ModelDims toy_dims() {
  c2w2c::ModelDims d;
  d.d_c = 3;
  d.d_wi = 4;
  d.d_w = 3;
  d.d_l = 5;
  d.d_dec = 4;
  d.d_bottleneck = 3;
  d.max_word_len = 6;
  return d;
}

Tensor<double> weighted_sum(const Tensor<double>& x, const std::vector<double>& weights) {
  Tensor<double> w = Tensor<double>::from(x.shape(), weights);
  return c2w2c::ops::sum(c2w2c::ops::mul(x, w));
}

struct TwoParams {
  Tensor<double> a{Tensor<double>::from({1}, {1.0}, true)};
  Tensor<double> b{Tensor<double>::from({1}, {2.0}, true)};
  template <typename F>
  void for_each(F&& f) {
    f(std::string("a"), a);
    f(std::string("b"), b);
  }
};

TEST(Config, RejectsBadValues) {
  TrainConfig good;
  EXPECT_NO_THROW(good.validate());
  TrainConfig c = good;
  c.learning_rate = 0;
  EXPECT_THROW(c.validate(), c2w2c::ConfigError);
  c = good;
  c.dropout = 1.0;
  EXPECT_THROW(c.validate(), c2w2c::ConfigError);
  c = good;
  c.dropout = -0.1;
  EXPECT_THROW(c.validate(), c2w2c::ConfigError);
  c = good;
  c.clip_norm = 0;
  EXPECT_THROW(c.validate(), c2w2c::ConfigError);
  c = good;
  c.bptt_window = 0;
  EXPECT_THROW(c.validate(), c2w2c::ConfigError);
  c = good;
  c.beta2 = 1.0;
  EXPECT_THROW(c.validate(), c2w2c::ConfigError);
}

TEST(Clip, RescalesGlobalNormToClipValue) {
  OneParam model{Tensor<double>::zeros({4}, true)};
  Tensor<double> loss = weighted_sum(model.w, {6, 8, 0, 0});
  GradContext<double> ctx;
  ctx.backward(loss);

  AdamState<double> adam;
  TrainConfig cfg;
  cfg.clip_norm = 2.0;
  const auto stats = c2w2c::clipped_adam_update(model, ctx, adam, cfg);
  EXPECT_NEAR(stats.grad_norm, 10.0, 1e-12);
  EXPECT_NEAR(stats.applied_norm, 2.0, 1e-6);
  EXPECT_EQ(adam.step, 1);
}

TEST(Clip, LeavesSmallGradientsAlone) {
  OneParam model{Tensor<double>::zeros({2}, true)};
  Tensor<double> loss = weighted_sum(model.w, {0.3, -0.4});
  GradContext<double> ctx;
  ctx.backward(loss);

  AdamState<double> adam;
  TrainConfig cfg;
  const auto stats = c2w2c::clipped_adam_update(model, ctx, adam, cfg);
  EXPECT_NEAR(stats.grad_norm, 0.5, 1e-12);
  EXPECT_DOUBLE_EQ(stats.applied_norm, stats.grad_norm);
}

TEST(Adam, FirstUpdateMatchesOracle) {
  const std::vector<double> grads = {0.04, -0.02, 1.5};
  OneParam model{Tensor<double>::from({3}, {0.5, -0.3, 0.25}, true)};
  const std::vector<double> before = model.w.data();
  Tensor<double> loss = weighted_sum(model.w, grads);
  GradContext<double> ctx;
  ctx.backward(loss);

  AdamState<double> adam;
  TrainConfig cfg;
  c2w2c::clipped_adam_update(model, ctx, adam, cfg);
  for (int i = 0; i < 3; ++i) {
    const double expected =
        oracles::adam_first_update(grads[static_cast<std::size_t>(i)], cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps);
    const double actual = model.w.data()[static_cast<std::size_t>(i)] - before[static_cast<std::size_t>(i)];
    EXPECT_LE(std::abs(actual - expected), 1e-9 * std::abs(expected)) << "component " << i;
  }
}

TEST(Adam, SecondUpdateMatchesClosedForm) {
  const double g = 0.7;
  OneParam model{Tensor<double>::from({1}, {1.0}, true)};
  AdamState<double> adam;
  TrainConfig cfg;

  double w = 1.0;
  for (int step = 1; step <= 2; ++step) {
    Tensor<double> loss = weighted_sum(model.w, {g});
    GradContext<double> ctx;
    ctx.backward(loss);
    c2w2c::clipped_adam_update(model, ctx, adam, cfg);

    const double m = (1.0 - std::pow(cfg.beta1, step)) / (1.0 - cfg.beta1) * (1.0 - cfg.beta1) * g;
    const double v = (1.0 - std::pow(cfg.beta2, step)) / (1.0 - cfg.beta2) * (1.0 - cfg.beta2) * g * g;
    const double bc1 = 1.0 - std::pow(cfg.beta1, step);
    const double bc2 = 1.0 - std::pow(cfg.beta2, step);
    w -= cfg.learning_rate * (m / bc1) / (std::sqrt(v / bc2) + cfg.adam_eps);
    EXPECT_NEAR(model.w.data()[0], w, 1e-15) << "after step " << step;
  }
  EXPECT_EQ(adam.step, 2);
}

TEST(Adam, MomentShapeMismatchThrows) {
  OneParam model{Tensor<double>::zeros({2}, true)};
  Tensor<double> loss = weighted_sum(model.w, {1, 1});
  GradContext<double> ctx;
  ctx.backward(loss);

  AdamState<double> adam;
  adam.moments["w"].m.assign(3, 0.0);
  adam.moments["w"].v.assign(3, 0.0);
  TrainConfig cfg;
  EXPECT_THROW(c2w2c::clipped_adam_update(model, ctx, adam, cfg), c2w2c::TrainingError);
}

TEST(Adam, SkipsParametersWithoutGradients) {
  TwoParams model;

  Tensor<double> loss = weighted_sum(model.a, {1.0});
  GradContext<double> ctx;
  ctx.backward(loss);

  AdamState<double> adam;
  TrainConfig cfg;
  c2w2c::clipped_adam_update(model, ctx, adam, cfg);
  EXPECT_NE(model.a.data()[0], 1.0);
  EXPECT_DOUBLE_EQ(model.b.data()[0], 2.0);
  EXPECT_EQ(adam.moments.count("b"), 0u);
}

TEST(Dropout, DisabledModesReturnInputUnchanged) {
  std::mt19937_64 rng(9);
  Tensor<double> x = Tensor<double>::from({3}, {1, 2, 3});
  EXPECT_EQ(c2w2c::apply_dropout(x, 0.0, true, rng).id(), x.id());
  EXPECT_EQ(c2w2c::apply_dropout(x, 0.5, false, rng).id(), x.id());
  EXPECT_THROW(c2w2c::apply_dropout(x, 1.0, true, rng), c2w2c::ConfigError);
}

TEST(Dropout, InvertedScalingKeepsExpectationAndRate) {
  std::mt19937_64 rng(123);
  const int n = 100000;
  Tensor<double> x = Tensor<double>::full({n}, 1.0);
  Tensor<double> y = c2w2c::apply_dropout(x, 0.5, true, rng);

  int kept = 0;
  double sum = 0;
  for (double v : y.data()) {
    ASSERT_TRUE(v == 0.0 || v == 2.0);
    kept += v != 0.0;
    sum += v;
  }
  EXPECT_NEAR(static_cast<double>(kept) / n, 0.5, 0.01);
  EXPECT_NEAR(sum / n, 1.0, 0.02);

  Tensor<double> y2 = c2w2c::apply_dropout(x, 0.5, true, rng);
  EXPECT_NE(y.data(), y2.data());
}

TEST(Dropout, GradientFollowsMask) {
  std::mt19937_64 rng(5);
  Tensor<double> x = Tensor<double>::full({64}, 1.0, true);
  Tensor<double> y = c2w2c::apply_dropout(x, 0.5, true, rng);
  GradContext<double> ctx;
  ctx.backward(c2w2c::ops::sum(y));
  const auto& grad = ctx.grad(x);
  for (std::size_t i = 0; i < grad.size(); ++i) {
    EXPECT_DOUBLE_EQ(grad[i], y.data()[i]) << "position " << i;
  }
}

TEST(States, DetachStopsGradientAtUpdateBoundary) {
  auto dims = toy_dims();
  c2w2c::C2w2cModel<double> model(7, dims);
  c2w2c::initialize_params(model, 3);

  Tensor<double> x1 = Tensor<double>::from({3}, {0.1, -0.2, 0.3}, true);
  Tensor<double> x2 = Tensor<double>::from({3}, {-0.4, 0.5, 0.6}, true);

  auto s0 = c2w2c::zero_lm_state(model.lm);
  auto [s1, ctx1] = c2w2c::lm_advance(s0, x1, model.lm);
  auto [s2, ctx2] = c2w2c::lm_advance(s1, x2, model.lm);
  {
    GradContext<double> ctx;
    ctx.backward(c2w2c::ops::sum(ctx2));
    EXPECT_TRUE(ctx.has_grad(x1));
    EXPECT_TRUE(ctx.has_grad(x2));
  }

  auto detached = s1.detached();
  auto [s3, ctx3] = c2w2c::lm_advance(detached, x2, model.lm);
  {
    GradContext<double> ctx;
    ctx.backward(c2w2c::ops::sum(ctx3));
    EXPECT_FALSE(ctx.has_grad(x1));
    EXPECT_TRUE(ctx.has_grad(x2));
  }
}

std::vector<Sentence> tiny_corpus() {
  return {c2w2c::wrap_sentence("aa b", true), c2w2c::wrap_sentence("c", true)};
}

CharVocab tiny_char_vocab() { return c2w2c::build_char_vocab(tiny_corpus()); }

TEST(Epoch, MetricsCountEveryPredictionTerm) {
  auto sentences = tiny_corpus();
  auto vocab = tiny_char_vocab();
  auto dims = toy_dims();
  c2w2c::C2w2cModel<double> model(vocab.size(), dims);
  c2w2c::initialize_params(model, 17);

  TrainConfig cfg;
  cfg.batch_size = 1;
  cfg.dropout = 0.0;
  cfg.max_word_len = dims.max_word_len;
  std::mt19937_64 rng(cfg.seed);
  AdamState<double> adam;
  const auto met = c2w2c::run_train_epoch(model, sentences, vocab, adam, cfg, 0, rng);

  // Stream: <s> aa b </s> <s> c </s>  (7 tokens, 6 transitions).
  // Target words contribute chars + EOW: aa=3, b=2, </s>=2, <s>=2, c=2, </s>=2.
  EXPECT_EQ(met.tokens_covered, 7u);
  EXPECT_EQ(met.steps, 6u);
  EXPECT_EQ(met.words_scored, 6u);
  EXPECT_EQ(met.item_count, 13u);
  EXPECT_GT(met.nll_sum, 0.0);
  EXPECT_NEAR(met.perplexity(), std::exp(met.nll_sum / 13.0), 1e-12);
  EXPECT_EQ(adam.step, 6);
}

TEST(Epoch, WiderBpttWindowCoversSameTerms) {
  auto sentences = tiny_corpus();
  auto vocab = tiny_char_vocab();
  auto dims = toy_dims();

  c2w2c::C2w2cModel<double> model(vocab.size(), dims);
  c2w2c::initialize_params(model, 17);
  TrainConfig cfg;
  cfg.batch_size = 1;
  cfg.dropout = 0.0;
  cfg.bptt_window = 4;
  cfg.max_word_len = dims.max_word_len;
  std::mt19937_64 rng(cfg.seed);
  AdamState<double> adam;
  const auto met = c2w2c::run_train_epoch(model, sentences, vocab, adam, cfg, 0, rng);

  EXPECT_EQ(met.steps, 2u);  // windows of 4 and 2 transitions
  EXPECT_EQ(met.words_scored, 6u);
  EXPECT_EQ(met.item_count, 13u);
}

TEST(Epoch, LoggerSeesEveryStepInOrder) {
  auto sentences = tiny_corpus();
  auto vocab = tiny_char_vocab();
  c2w2c::C2w2cModel<double> model(vocab.size(), toy_dims());
  c2w2c::initialize_params(model, 2);

  TrainConfig cfg;
  cfg.batch_size = 1;
  cfg.dropout = 0.0;
  cfg.max_word_len = 6;
  std::mt19937_64 rng(1);
  AdamState<double> adam;

  std::vector<c2w2c::StepLog> logs;
  const auto met =
      c2w2c::run_train_epoch(model, sentences, vocab, adam, cfg, 3, rng, [&](const c2w2c::StepLog& log) { logs.push_back(log); });

  ASSERT_EQ(logs.size(), met.steps);
  double total = 0;
  for (std::size_t i = 0; i < logs.size(); ++i) {
    EXPECT_EQ(logs[i].epoch, 3);
    EXPECT_EQ(logs[i].step, i + 1);
    EXPECT_TRUE(std::isfinite(logs[i].loss));
    EXPECT_GE(logs[i].words_per_sec, 0.0);
    total += logs[i].loss;  // bptt_window 1: each step's loss is its char mean
  }
  EXPECT_GT(total, 0.0);
}

TEST(Epoch, LossDecreasesOnRepeatedData) {
  auto sentences = std::vector<Sentence>{c2w2c::wrap_sentence("ab ba ab", true)};
  auto vocab = c2w2c::build_char_vocab(sentences);
  c2w2c::C2w2cModel<double> model(vocab.size(), toy_dims());
  c2w2c::initialize_params(model, 5);

  TrainConfig cfg;
  cfg.batch_size = 1;
  cfg.dropout = 0.0;
  cfg.learning_rate = 3e-3;
  cfg.max_word_len = 6;
  std::mt19937_64 rng(1);
  AdamState<double> adam;

  const double first = c2w2c::run_train_epoch(model, sentences, vocab, adam, cfg, 0, rng).mean_loss();
  double last = first;
  for (int e = 1; e < 30; ++e) last = c2w2c::run_train_epoch(model, sentences, vocab, adam, cfg, e, rng).mean_loss();
  EXPECT_LT(last, first * 0.8);
}

TEST(Epoch, BaselineLossDecreasesToo) {
  auto sentences = std::vector<Sentence>{c2w2c::wrap_sentence("ab ba ab", true), c2w2c::wrap_sentence("ba ab ba", true)};
  auto wv = c2w2c::build_word_vocab(sentences);
  auto dims = toy_dims();
  c2w2c::WordLstmModel<double> model(wv.size(), dims);
  c2w2c::initialize_params(model, 5);

  TrainConfig cfg;
  cfg.batch_size = 1;
  cfg.dropout = 0.0;
  cfg.learning_rate = 1e-2;
  std::mt19937_64 rng(1);
  AdamState<double> adam;

  const auto first = c2w2c::run_train_epoch(model, sentences, wv, adam, cfg, 0, rng);
  EXPECT_EQ(first.item_count, first.words_scored);
  double last = first.mean_loss();
  for (int e = 1; e < 30; ++e) last = c2w2c::run_train_epoch(model, sentences, wv, adam, cfg, e, rng).mean_loss();
  EXPECT_LT(last, first.mean_loss() * 0.8);
}

TEST(Epoch, FullyDeterministicGivenSeeds) {
  auto sentences = std::vector<Sentence>{c2w2c::wrap_sentence("aa bb", true), c2w2c::wrap_sentence("cc aa", true),
                                         c2w2c::wrap_sentence("bb cc aa", true)};
  auto vocab = c2w2c::build_char_vocab(sentences);
  auto dims = toy_dims();

  auto run = [&](std::uint64_t seed) {
    c2w2c::C2w2cModel<double> model(vocab.size(), dims);
    c2w2c::initialize_params(model, 42);
    TrainConfig cfg;
    cfg.batch_size = 2;
    cfg.dropout = 0.3;
    cfg.seed = seed;
    cfg.max_word_len = 6;
    std::mt19937_64 rng(seed);
    AdamState<double> adam;
    for (int e = 0; e < 3; ++e) c2w2c::run_train_epoch(model, sentences, vocab, adam, cfg, e, rng);
    std::vector<double> flat;
    model.for_each([&](const std::string&, Tensor<double>& t) {
      flat.insert(flat.end(), t.data().begin(), t.data().end());
    });
    return flat;
  };

  const auto a = run(7);
  const auto b = run(7);
  const auto c = run(8);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
}

TEST(Epoch, ShuffleDependsOnEpochIndex) {
  std::vector<Sentence> sentences;
  for (int i = 0; i < 12; ++i) {
    sentences.push_back(c2w2c::wrap_sentence(std::string(1, static_cast<char>('a' + i)), true));
  }
  const auto e0 = c2w2c::make_streams(sentences, 3, c2w2c::derive_seed(9, 0));
  const auto e1 = c2w2c::make_streams(sentences, 3, c2w2c::derive_seed(9, 1));
  EXPECT_NE(e0.streams, e1.streams);
}

TEST(Epoch, NonFiniteLossAbortsWithDiagnostic) {
  auto sentences = tiny_corpus();
  auto vocab = tiny_char_vocab();
  c2w2c::C2w2cModel<double> model(vocab.size(), toy_dims());
  c2w2c::initialize_params(model, 1);
  for (auto& v : model.lm.l1.w_x.mutable_data()) v = std::numeric_limits<double>::quiet_NaN();

  TrainConfig cfg;
  cfg.batch_size = 1;
  cfg.dropout = 0.0;
  cfg.max_word_len = 6;
  std::mt19937_64 rng(1);
  AdamState<double> adam;
  try {
    c2w2c::run_train_epoch(model, sentences, vocab, adam, cfg, 0, rng);
    FAIL() << "expected TrainingError";
  } catch (const c2w2c::TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("non-finite loss at epoch 0 step 1"), std::string::npos) << e.what();
  }
}

}  // namespace
