#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "c2w2c/checkpoint.hpp"
#include "c2w2c/corpus.hpp"
#include "c2w2c/inference.hpp"
#include "c2w2c/model.hpp"
#include "c2w2c/training.hpp"

namespace {

using Real = double;

struct Options {
  std::string corpus;
  std::string vocab;
  std::string checkpoint;
  std::string validation;
  std::string model = "c2w2c";

  int d_c = 50;
  int d_wi = 150;
  int d_w = 50;
  int d_l = 500;
  int d_dec = 500;
  int d_bottleneck = 150;

  c2w2c::TrainConfig train;

  int char_vocab_size = 100;
  int word_vocab_size = 88000;

  std::string strategy = "greedy";
  std::string seed_words = "<s>";
  int word_k = 20;
  int sentence_k = 10;
  int max_words = 50;

  bool deterministic = false;
  bool keep_case = false;
  bool include_sentence_end = false;
  int log_every = 1;
  std::string manifest;

  c2w2c::ModelDims dims() const {
    c2w2c::ModelDims d;
    d.d_c = d_c;
    d.d_wi = d_wi;
    d.d_w = d_w;
    d.d_l = d_l;
    d.d_dec = d_dec;
    d.d_bottleneck = d_bottleneck;
    d.max_word_len = train.max_word_len;
    return d;
  }
};

std::string fixed6(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(6) << v;
  return os.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw c2w2c::CorpusError("cannot open " + path + " for writing");
  out << text;
  if (!out) throw c2w2c::CorpusError("I/O error while writing " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw c2w2c::CorpusError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Effective-config echo in the config-file dialect: rerunning the same
/// subcommand with `--config <manifest>` reproduces the run.
struct Manifest {
  std::string section;
  std::vector<std::pair<std::string, std::string>> entries;
  std::vector<std::pair<std::string, std::string>> notes;

  explicit Manifest(std::string name) : section(std::move(name)) {}

  void add(const std::string& key, const std::string& v) { entries.push_back({key, '"' + v + '"'}); }
  void add(const std::string& key, const char* v) { add(key, std::string(v)); }
  void add(const std::string& key, double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    entries.push_back({key, os.str()});
  }
  void add(const std::string& key, bool v) { entries.push_back({key, v ? "true" : "false"}); }
  template <typename Int, typename = std::enable_if_t<std::is_integral_v<Int>>>
  void add(const std::string& key, Int v) {
    entries.push_back({key, std::to_string(v)});
  }
  void note(const std::string& key, const std::string& v) { notes.push_back({key, v}); }

  std::string text() const {
    std::ostringstream os;
    os << '[' << section << "]\n";
    for (const auto& [key, value] : entries) os << key << '=' << value << '\n';
    os << "# command=" << section << '\n';
    os << "# artifact_version=1\n";
    for (const auto& [key, value] : notes) os << "# " << key << '=' << value << '\n';
    return os.str();
  }
};

void emit_manifest(const Manifest& manifest, const std::string& path) {
  if (!path.empty()) write_text_file(path, manifest.text());
  std::cerr << "-- run manifest --\n" << manifest.text() << "-- end manifest --\n";
}

std::string manifest_path(const Options& opt, const std::string& fallback) {
  return opt.manifest.empty() ? fallback : opt.manifest;
}

void add_dims(Manifest& m, const c2w2c::ModelDims& d) {
  m.add("d-c", d.d_c);
  m.add("d-wi", d.d_wi);
  m.add("d-w", d.d_w);
  m.add("d-l", d.d_l);
  m.add("decoder-hidden", d.d_dec);
  m.add("bottleneck", d.d_bottleneck);
  m.add("max-word-len", d.max_word_len);
}

c2w2c::CharVocab load_char_vocab(const std::string& path) {
  const std::string text = read_text_file(path);
  if (text.rfind("<pad>\n", 0) != 0) {
    throw c2w2c::CorpusError(path + " is not a character vocabulary file");
  }
  return c2w2c::CharVocab::from_text(text);
}

c2w2c::WordVocab load_word_vocab(const std::string& path) {
  const std::string text = read_text_file(path);
  if (text.rfind("<unk>\n", 0) != 0) {
    throw c2w2c::CorpusError(path + " is not a word vocabulary file");
  }
  return c2w2c::WordVocab::from_text(text);
}

std::string default_vocab_path(const Options& opt) {
  if (!opt.vocab.empty()) return opt.vocab;
  if (!opt.checkpoint.empty()) return opt.checkpoint + ".vocab";
  return "";
}

void print_stats(const c2w2c::CorpusStats& st) {
  std::cout << "total_tokens " << st.total_tokens << '\n';
  std::cout << "unique_tokens " << st.unique_tokens << '\n';
  for (std::size_t k : {5000u, 10000u, 20000u}) {
    std::cout << "coverage_" << k << ' ' << fixed6(st.coverage(k)) << '\n';
  }
  static const char* kBuckets[8] = {"1_5", "6_10", "11_15", "16_20", "21_25", "26_30", "31_35", "36_plus"};
  for (int i = 0; i < 8; ++i) {
    std::cout << "length_" << kBuckets[i] << ' ' << st.length_histogram[static_cast<std::size_t>(i)] << '\n';
  }
}

int cmd_build_vocab(const Options& opt) {
  const auto sentences = c2w2c::load_sentences(opt.corpus, !opt.keep_case);
  const auto stats = c2w2c::compute_stats(sentences);
  print_stats(stats);

  std::string text;
  std::uint64_t hash = 0;
  int size = 0;
  if (opt.model == "c2w2c") {
    const auto vocab = c2w2c::build_char_vocab(sentences);
    text = vocab.to_text();
    hash = vocab.hash();
    size = vocab.size();
  } else {
    const auto vocab = c2w2c::build_word_vocab(sentences);
    text = vocab.to_text();
    hash = vocab.hash();
    size = vocab.size();
  }
  write_text_file(opt.vocab, text);
  std::cout << "vocab_size " << size << '\n';
  std::cout << "vocab_hash " << c2w2c::detail::hex64(hash) << '\n';

  Manifest manifest("build-vocab");
  manifest.add("corpus", opt.corpus);
  manifest.add("vocab", opt.vocab);
  manifest.add("model", opt.model);
  manifest.add("keep-case", opt.keep_case);
  manifest.note("vocab_hash", c2w2c::detail::hex64(hash));
  emit_manifest(manifest, manifest_path(opt, opt.vocab + ".manifest"));
  return 0;
}

template <typename Model>
void print_param_table(Model& model, std::map<std::string, std::size_t>& groups) {
  model.for_each([&](const std::string& name, c2w2c::Tensor<Real>& t) {
    std::cout << name << ' ' << t.size() << '\n';
    groups[name.substr(0, name.find('.'))] += t.size();
  });
}

int cmd_params(const Options& opt) {
  if (opt.char_vocab_size <= 0 || opt.word_vocab_size <= 0) {
    throw c2w2c::ConfigError("vocabulary sizes must be positive");
  }
  const auto dims = opt.dims();

  c2w2c::C2w2cModel<Real> composed(opt.char_vocab_size, dims);
  std::cout << "model c2w2c\n";
  std::cout << "char_vocab_size " << opt.char_vocab_size << '\n';
  std::map<std::string, std::size_t> groups;
  print_param_table(composed, groups);
  std::cout << "c2w_total " << groups["c2w"] << '\n';
  std::cout << "lm_total " << groups["lm"] << '\n';
  std::cout << "w2c_total " << groups["w2c"] << '\n';
  std::cout << "total " << groups["c2w"] + groups["lm"] + groups["w2c"] << '\n';

  c2w2c::WordLstmModel<Real> baseline(opt.word_vocab_size, dims);
  std::cout << "model wordlstm\n";
  std::cout << "word_vocab_size " << opt.word_vocab_size << '\n';
  groups.clear();
  std::size_t input_total = 0;
  std::size_t output_total = 0;
  baseline.for_each([&](const std::string& name, c2w2c::Tensor<Real>& t) {
    std::cout << name << ' ' << t.size() << '\n';
    groups[name.substr(0, name.find('.'))] += t.size();
    if (name == "wlstm.embed") input_total += t.size();
    if (name == "wlstm.bottleneck" || name == "wlstm.out_proj") output_total += t.size();
  });
  std::cout << "input_total " << input_total << '\n';
  std::cout << "lm_total " << groups["lm"] << '\n';
  std::cout << "output_total " << output_total << '\n';
  std::cout << "total " << groups["lm"] + groups["wlstm"] << '\n';

  Manifest manifest("params");
  add_dims(manifest, dims);
  manifest.add("char-vocab-size", opt.char_vocab_size);
  manifest.add("word-vocab-size", opt.word_vocab_size);
  emit_manifest(manifest, manifest_path(opt, "params.manifest"));
  return 0;
}

struct ResumeCheck {
  const CLI::App* sub;
  const c2w2c::TrainConfig& requested;
  const c2w2c::TrainConfig& stored;

  void flag(const std::string& name, double a, double b) const {
    if (sub->count(name) > 0 && a != b) {
      throw c2w2c::ConfigError("cannot resume: " + name + " was " + fixed6(b) + " at save time, " + fixed6(a) +
                               " requested (drop the flag or start a fresh checkpoint)");
    }
  }

  void run() const {
    flag("--lr", requested.learning_rate, stored.learning_rate);
    flag("--clip-norm", requested.clip_norm, stored.clip_norm);
    flag("--dropout", requested.dropout, stored.dropout);
    flag("--batch-size", requested.batch_size, stored.batch_size);
    flag("--bptt-window", requested.bptt_window, stored.bptt_window);
    flag("--max-word-len", requested.max_word_len, stored.max_word_len);
    flag("--seed", static_cast<double>(requested.seed), static_cast<double>(stored.seed));
  }
};

c2w2c::StepLogger make_logger(const Options& opt) {
  if (opt.log_every < 1) return nullptr;
  return [&opt](const c2w2c::StepLog& log) {
    if (log.step % static_cast<std::size_t>(opt.log_every) != 0) return;
    std::cout << "epoch " << log.epoch << " step " << log.step << " loss " << fixed6(log.loss) << " words_per_sec "
              << fixed6(opt.deterministic ? 0.0 : log.words_per_sec) << '\n';
  };
}

template <typename Model, typename Vocab>
int train_loop(const CLI::App* sub, const Options& opt, Model& model, const Vocab& vocab,
               c2w2c::TrainingSnapshot<Real>& snap, const std::vector<c2w2c::Sentence>& sentences, bool resumed) {
  c2w2c::TrainConfig cfg = resumed ? snap.config : opt.train;
  cfg.epochs = opt.train.epochs;
  if (resumed) ResumeCheck{sub, opt.train, snap.config}.run();

  std::mt19937_64 dropout_rng =
      snap.dropout_rng.empty() ? std::mt19937_64(cfg.seed) : c2w2c::rng_from_string(snap.dropout_rng);

  std::vector<c2w2c::Sentence> val;
  if (!opt.validation.empty()) val = c2w2c::load_sentences(opt.validation, !opt.keep_case);

  Manifest manifest("train");
  manifest.add("corpus", opt.corpus);
  manifest.add("vocab", default_vocab_path(opt));
  if (!opt.checkpoint.empty()) manifest.add("checkpoint", opt.checkpoint);
  if (!opt.validation.empty()) manifest.add("validation", opt.validation);
  manifest.add("model", opt.model);
  add_dims(manifest, model.dims);
  manifest.add("lr", cfg.learning_rate);
  manifest.add("clip-norm", cfg.clip_norm);
  manifest.add("dropout", cfg.dropout);
  manifest.add("batch-size", cfg.batch_size);
  manifest.add("bptt-window", cfg.bptt_window);
  manifest.add("epochs", cfg.epochs);
  manifest.add("seed", cfg.seed);
  manifest.add("log-every", opt.log_every);
  manifest.add("deterministic", opt.deterministic);
  manifest.add("keep-case", opt.keep_case);
  manifest.note("vocab_hash", c2w2c::detail::hex64(vocab.hash()));
  manifest.note("resumed", resumed ? "true" : "false");
  emit_manifest(manifest, manifest_path(opt, opt.checkpoint.empty() ? "train.manifest" : opt.checkpoint + ".manifest"));

  if (snap.epochs_completed >= cfg.epochs) {
    std::cout << "nothing to do: " << snap.epochs_completed << " epochs already completed\n";
    return 0;
  }

  const auto logger = make_logger(opt);
  for (int e = snap.epochs_completed; e < cfg.epochs; ++e) {
    const auto met = c2w2c::run_train_epoch(model, sentences, vocab, snap.adam, cfg, e, dropout_rng, logger);
    std::cout << "epoch " << e << " done mean_loss " << fixed6(met.mean_loss()) << " train_ppl "
              << fixed6(met.perplexity()) << " words " << met.words_scored << " seconds "
              << fixed6(opt.deterministic ? 0.0 : met.seconds) << '\n';
    if (!val.empty()) {
      c2w2c::ScoreOptions so;
      so.max_word_len = cfg.max_word_len;
      const auto pp = c2w2c::corpus_perplexity(model, vocab, val, so);
      std::cout << "epoch " << e << " validation_ppl " << fixed6(pp.perplexity()) << '\n';
    }
    if (!opt.checkpoint.empty()) {
      snap.epochs_completed = e + 1;
      snap.config = cfg;
      snap.dropout_rng = c2w2c::rng_to_string(dropout_rng);
      c2w2c::save_checkpoint(opt.checkpoint, model, vocab, snap);
      std::cout << "checkpoint " << opt.checkpoint << " epochs " << snap.epochs_completed << '\n';
    }
  }
  return 0;
}

int cmd_train(const CLI::App* sub, const Options& opt) {
  opt.train.validate();
  const auto sentences = c2w2c::load_sentences(opt.corpus, !opt.keep_case);
  const std::string vocab_path = default_vocab_path(opt);
  const bool have_vocab_file = !vocab_path.empty() && std::filesystem::exists(vocab_path);
  const bool resume = !opt.checkpoint.empty() && std::filesystem::exists(opt.checkpoint);

  if (opt.model == "c2w2c") {
    c2w2c::CharVocab vocab = have_vocab_file ? load_char_vocab(vocab_path) : c2w2c::build_char_vocab(sentences);
    if (!have_vocab_file && !vocab_path.empty()) {
      write_text_file(vocab_path, vocab.to_text());
      std::cerr << "wrote vocabulary to " << vocab_path << '\n';
    }
    c2w2c::TrainingSnapshot<Real> snap;
    snap.config = opt.train;
    if (resume) {
      auto model = c2w2c::load_c2w2c_checkpoint<Real>(opt.checkpoint, vocab, &snap);
      return train_loop(sub, opt, model, vocab, snap, sentences, true);
    }
    c2w2c::C2w2cModel<Real> model(vocab.size(), opt.dims());
    c2w2c::initialize_params(model, opt.train.seed);
    return train_loop(sub, opt, model, vocab, snap, sentences, false);
  }

  c2w2c::WordVocab vocab = have_vocab_file ? load_word_vocab(vocab_path) : c2w2c::build_word_vocab(sentences);
  if (!have_vocab_file && !vocab_path.empty()) {
    write_text_file(vocab_path, vocab.to_text());
    std::cerr << "wrote vocabulary to " << vocab_path << '\n';
  }
  c2w2c::TrainingSnapshot<Real> snap;
  snap.config = opt.train;
  if (resume) {
    auto model = c2w2c::load_wordlstm_checkpoint<Real>(opt.checkpoint, vocab, &snap);
    return train_loop(sub, opt, model, vocab, snap, sentences, true);
  }
  c2w2c::WordLstmModel<Real> model(vocab.size(), opt.dims());
  c2w2c::initialize_params(model, opt.train.seed);
  return train_loop(sub, opt, model, vocab, snap, sentences, false);
}

c2w2c::ScoreOptions score_options(const Options& opt) {
  c2w2c::ScoreOptions so;
  so.max_word_len = opt.train.max_word_len;
  so.include_sentence_end = opt.include_sentence_end;
  return so;
}

int cmd_eval(const Options& opt) {
  const auto sentences = c2w2c::load_sentences(opt.corpus, !opt.keep_case);
  if (sentences.empty()) throw c2w2c::ScoringError("no sentences to evaluate in " + opt.corpus);
  const std::string kind = c2w2c::checkpoint_model_kind(opt.checkpoint);
  const std::string vocab_path = default_vocab_path(opt);
  if (vocab_path.empty()) throw c2w2c::ConfigError("provide --vocab (the file written at training time)");

  c2w2c::PerplexityReport pp;
  std::uint64_t hash = 0;
  if (kind == "c2w2c") {
    const auto vocab = load_char_vocab(vocab_path);
    const auto model = c2w2c::load_c2w2c_checkpoint<Real>(opt.checkpoint, vocab);
    pp = c2w2c::corpus_perplexity(model, vocab, sentences, score_options(opt));
    hash = vocab.hash();
  } else {
    const auto vocab = load_word_vocab(vocab_path);
    const auto model = c2w2c::load_wordlstm_checkpoint<Real>(opt.checkpoint, vocab);
    pp = c2w2c::corpus_perplexity(model, vocab, sentences, score_options(opt));
    hash = vocab.hash();
  }
  std::cout << "perplexity " << fixed6(pp.perplexity()) << '\n';
  std::cout << "char_perplexity " << fixed6(pp.char_perplexity()) << '\n';
  std::cout << "nll " << fixed6(pp.nll_sum) << '\n';
  std::cout << "words " << pp.words << '\n';
  std::cout << "chars " << pp.chars << '\n';

  Manifest manifest("eval");
  manifest.add("checkpoint", opt.checkpoint);
  manifest.add("corpus", opt.corpus);
  manifest.add("vocab", vocab_path);
  manifest.add("max-word-len", opt.train.max_word_len);
  manifest.add("include-sentence-end", opt.include_sentence_end);
  manifest.add("keep-case", opt.keep_case);
  manifest.note("model", kind);
  manifest.note("vocab_hash", c2w2c::detail::hex64(hash));
  emit_manifest(manifest, manifest_path(opt, opt.checkpoint + ".eval.manifest"));
  return 0;
}

void print_score_line(const c2w2c::ScoreReport& report) {
  std::cout << fixed6(report.sentence_score());
  for (const auto& w : report.words) std::cout << '\t' << w.token << ':' << fixed6(w.nll);
  std::cout << '\n';
}

int cmd_score(const Options& opt) {
  const auto sentences = c2w2c::load_sentences(opt.corpus, !opt.keep_case);
  if (sentences.empty()) throw c2w2c::ScoringError("no sentences to score in " + opt.corpus);
  const std::string kind = c2w2c::checkpoint_model_kind(opt.checkpoint);
  const std::string vocab_path = default_vocab_path(opt);
  if (vocab_path.empty()) throw c2w2c::ConfigError("provide --vocab (the file written at training time)");

  std::uint64_t hash = 0;
  if (kind == "c2w2c") {
    const auto vocab = load_char_vocab(vocab_path);
    const auto model = c2w2c::load_c2w2c_checkpoint<Real>(opt.checkpoint, vocab);
    for (const auto& s : sentences) print_score_line(c2w2c::score_sentence(model, vocab, s, score_options(opt)));
    hash = vocab.hash();
  } else {
    const auto vocab = load_word_vocab(vocab_path);
    const auto model = c2w2c::load_wordlstm_checkpoint<Real>(opt.checkpoint, vocab);
    for (const auto& s : sentences) print_score_line(c2w2c::score_sentence(model, vocab, s, score_options(opt)));
    hash = vocab.hash();
  }

  Manifest manifest("score");
  manifest.add("checkpoint", opt.checkpoint);
  manifest.add("corpus", opt.corpus);
  manifest.add("vocab", vocab_path);
  manifest.add("max-word-len", opt.train.max_word_len);
  manifest.add("include-sentence-end", opt.include_sentence_end);
  manifest.add("keep-case", opt.keep_case);
  manifest.note("model", kind);
  manifest.note("vocab_hash", c2w2c::detail::hex64(hash));
  emit_manifest(manifest, manifest_path(opt, opt.checkpoint + ".score.manifest"));
  return 0;
}

int cmd_sample(const Options& opt) {
  const std::string kind = c2w2c::checkpoint_model_kind(opt.checkpoint);
  if (kind != "c2w2c") {
    throw c2w2c::ConfigError("sampling generates characters and needs a c2w2c checkpoint, not " + kind);
  }
  const std::string vocab_path = default_vocab_path(opt);
  if (vocab_path.empty()) throw c2w2c::ConfigError("provide --vocab (the file written at training time)");
  const auto vocab = load_char_vocab(vocab_path);
  const auto model = c2w2c::load_c2w2c_checkpoint<Real>(opt.checkpoint, vocab);

  c2w2c::Sentence seed;
  {
    std::istringstream words(opt.keep_case ? opt.seed_words : c2w2c::utf8::lowercase(opt.seed_words));
    std::string tok;
    while (words >> tok) seed.push_back(tok);
  }

  auto print_line = [](int rank, const c2w2c::SampledSentence& s) {
    std::cout << rank << '\t' << fixed6(s.logp) << '\t';
    for (std::size_t i = 0; i < s.words.size(); ++i) {
      if (i) std::cout << ' ';
      std::cout << s.words[i];
    }
    std::cout << '\n';
  };

  if (opt.strategy == "greedy" || opt.strategy == "stochastic") {
    print_line(1, c2w2c::sample_stochastic(model, vocab, seed, opt.max_words, opt.train.max_word_len));
  } else if (opt.strategy == "beam") {
    c2w2c::BeamConfig cfg;
    cfg.word_k = opt.word_k;
    cfg.sentence_k = opt.sentence_k;
    cfg.max_words = opt.max_words;
    cfg.max_word_len = opt.train.max_word_len;
    const auto ranked = c2w2c::sample_beam(model, vocab, seed, cfg);
    for (std::size_t i = 0; i < ranked.size(); ++i) print_line(static_cast<int>(i) + 1, ranked[i]);
  } else {
    throw c2w2c::ConfigError("unknown sampling strategy: " + opt.strategy + " (use greedy or beam)");
  }

  Manifest manifest("sample");
  manifest.add("checkpoint", opt.checkpoint);
  manifest.add("vocab", vocab_path);
  manifest.add("seed-words", opt.seed_words);
  manifest.add("strategy", opt.strategy);
  manifest.add("word-k", opt.word_k);
  manifest.add("sentence-k", opt.sentence_k);
  manifest.add("max-words", opt.max_words);
  manifest.add("max-word-len", opt.train.max_word_len);
  manifest.add("keep-case", opt.keep_case);
  manifest.note("vocab_hash", c2w2c::detail::hex64(vocab.hash()));
  emit_manifest(manifest, manifest_path(opt, opt.checkpoint + ".sample.manifest"));
  return 0;
}

void add_dim_flags(CLI::App* sub, Options& opt) {
  sub->add_option("--d-c", opt.d_c, "Character embedding size");
  sub->add_option("--d-wi", opt.d_wi, "C2W Bi-LSTM hidden size per direction");
  sub->add_option("--d-w", opt.d_w, "Word embedding size");
  sub->add_option("--d-l", opt.d_l, "Language-model LSTM hidden size");
  sub->add_option("--decoder-hidden", opt.d_dec, "W2C decoder hidden size");
  sub->add_option("--bottleneck", opt.d_bottleneck, "Baseline output bottleneck size");
}

void add_train_flags(CLI::App* sub, Options& opt) {
  sub->add_option("--lr", opt.train.learning_rate, "Adam learning rate");
  sub->add_option("--clip-norm", opt.train.clip_norm, "Global gradient-norm clip");
  sub->add_option("--dropout", opt.train.dropout, "Dropout rate");
  sub->add_option("--batch-size", opt.train.batch_size, "Parallel stream count");
  sub->add_option("--bptt-window", opt.train.bptt_window, "Word transitions per update");
  sub->add_option("--epochs", opt.train.epochs, "Target epoch count");
  sub->add_option("--seed", opt.train.seed, "Base seed (init, shuffle, dropout)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Compositional character-level language modeling"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Read options from a config file (a run manifest works)");

  Options opt;

  CLI::App* build = app.add_subcommand("build-vocab", "Build a vocabulary file and print corpus statistics");
  build->add_option("--corpus", opt.corpus, "UTF-8 corpus, one sentence per line")->required();
  build->add_option("--vocab", opt.vocab, "Output vocabulary path")->required();
  build->add_option("--model", opt.model, "c2w2c (character vocab) or wordlstm (word vocab)")
      ->check(CLI::IsMember({"c2w2c", "wordlstm"}));
  build->add_flag("--keep-case", opt.keep_case, "Skip lowercasing");

  CLI::App* params = app.add_subcommand("params", "Print parameter counts for both models");
  add_dim_flags(params, opt);
  params->add_option("--max-word-len", opt.train.max_word_len, "Character budget per word");
  params->add_option("--char-vocab-size", opt.char_vocab_size, "Character vocabulary size");
  params->add_option("--word-vocab-size", opt.word_vocab_size, "Word vocabulary size");

  CLI::App* train = app.add_subcommand("train", "Train a model, checkpointing per epoch");
  train->add_option("--corpus", opt.corpus, "Training corpus")->required();
  train->add_option("--vocab", opt.vocab, "Vocabulary file (loaded if present, else built and saved)");
  train->add_option("--checkpoint", opt.checkpoint, "Checkpoint path (resumes if the file exists)");
  train->add_option("--validation", opt.validation, "Held-out corpus scored after each epoch");
  train->add_option("--model", opt.model, "c2w2c or wordlstm")->check(CLI::IsMember({"c2w2c", "wordlstm"}));
  add_dim_flags(train, opt);
  add_train_flags(train, opt);
  train->add_option("--max-word-len", opt.train.max_word_len, "Character budget per word");
  train->add_option("--log-every", opt.log_every, "Print every Nth step (0 silences steps)");
  train->add_flag("--deterministic", opt.deterministic, "Zero timing fields for byte-stable logs");
  train->add_flag("--keep-case", opt.keep_case, "Skip lowercasing");

  CLI::App* eval = app.add_subcommand("eval", "Perplexity of a checkpoint on a test corpus");
  eval->add_option("--checkpoint", opt.checkpoint, "Trained checkpoint")->required();
  eval->add_option("--corpus", opt.corpus, "Test corpus")->required();
  eval->add_option("--vocab", opt.vocab, "Vocabulary file (defaults to <checkpoint>.vocab)");
  eval->add_option("--max-word-len", opt.train.max_word_len, "Character budget per word");
  eval->add_flag("--include-sentence-end", opt.include_sentence_end, "Score the closing </s> too");
  eval->add_flag("--keep-case", opt.keep_case, "Skip lowercasing");

  CLI::App* score = app.add_subcommand("score", "Per-word NLL of each sentence in a file");
  score->add_option("--checkpoint", opt.checkpoint, "Trained checkpoint")->required();
  score->add_option("--corpus", opt.corpus, "Sentences to score")->required();
  score->add_option("--vocab", opt.vocab, "Vocabulary file (defaults to <checkpoint>.vocab)");
  score->add_option("--max-word-len", opt.train.max_word_len, "Character budget per word");
  score->add_flag("--include-sentence-end", opt.include_sentence_end, "Score the closing </s> too");
  score->add_flag("--keep-case", opt.keep_case, "Skip lowercasing");

  CLI::App* sample = app.add_subcommand("sample", "Generate sentences from a c2w2c checkpoint");
  sample->add_option("--checkpoint", opt.checkpoint, "Trained checkpoint")->required();
  sample->add_option("--vocab", opt.vocab, "Vocabulary file (defaults to <checkpoint>.vocab)");
  sample->add_option("--seed-words", opt.seed_words, "Whitespace-separated seed words");
  sample->add_option("--strategy", opt.strategy, "greedy or beam")->check(CLI::IsMember({"greedy", "stochastic", "beam"}));
  sample->add_option("--word-k", opt.word_k, "Inner (character) beam width");
  sample->add_option("--sentence-k", opt.sentence_k, "Outer (sentence) beam width");
  sample->add_option("--max-words", opt.max_words, "Word budget per sentence");
  sample->add_option("--max-word-len", opt.train.max_word_len, "Character budget per word");
  sample->add_flag("--keep-case", opt.keep_case, "Skip lowercasing the seed");

  for (CLI::App* sub : {build, params, train, eval, score, sample}) {
    sub->fallthrough();
    sub->add_option("--manifest", opt.manifest, "Manifest output path (defaults next to the primary artifact)");
  }

  CLI11_PARSE(app, argc, argv);

  try {
    if (build->parsed()) return cmd_build_vocab(opt);
    if (params->parsed()) return cmd_params(opt);
    if (train->parsed()) return cmd_train(train, opt);
    if (eval->parsed()) return cmd_eval(opt);
    if (score->parsed()) return cmd_score(opt);
    if (sample->parsed()) return cmd_sample(opt);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
