#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "c2w2c/corpus.hpp"
#include "c2w2c/model.hpp"
#include "c2w2c/training.hpp"

namespace c2w2c {

/// Checkpoint container: one magic line, one single-line JSON manifest
/// (format tag, hyperparameters, vocab sizes and hashes, tensor names with
/// shapes in order), then raw little-endian float payloads in manifest order.

template <typename T>
struct TrainingSnapshot {
  int epochs_completed = 0;
  TrainConfig config;
  AdamState<T> adam;
  std::string dropout_rng;  // textual mt19937_64 state; empty means freshly seeded
};

inline std::string rng_to_string(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

inline std::mt19937_64 rng_from_string(const std::string& text) {
  std::mt19937_64 rng;
  std::istringstream is(text);
  is >> rng;
  if (!is) throw CheckpointError("malformed RNG state in checkpoint");
  return rng;
}

namespace detail {

inline constexpr const char* kCheckpointMagic = "c2w2c checkpoint v1";

template <typename T>
const char* precision_name() {
  if constexpr (sizeof(T) == 8) return "float64";
  return "float32";
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

template <typename T>
void put_scalar_le(std::string& out, T value) {
  std::uint64_t bits = 0;
  static_assert(sizeof(T) == 4 || sizeof(T) == 8);
  std::memcpy(&bits, &value, sizeof(T));
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

template <typename T>
T get_scalar_le(const std::string& in, std::size_t& cursor) {
  if (cursor + sizeof(T) > in.size()) throw CheckpointError("checkpoint payload is truncated");
  std::uint64_t bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[cursor + i])) << (8 * i);
  }
  cursor += sizeof(T);
  T value;
  std::memcpy(&value, &bits, sizeof(T));
  return value;
}

inline nlohmann::ordered_json dims_to_json(const ModelDims& d) {
  return {{"d_c", d.d_c},           {"d_wi", d.d_wi}, {"d_w", d.d_w},
          {"d_l", d.d_l},           {"d_dec", d.d_dec}, {"d_bottleneck", d.d_bottleneck},
          {"max_word_len", d.max_word_len}};
}

inline ModelDims dims_from_json(const nlohmann::json& j) {
  ModelDims d;
  d.d_c = j.at("d_c").get<int>();
  d.d_wi = j.at("d_wi").get<int>();
  d.d_w = j.at("d_w").get<int>();
  d.d_l = j.at("d_l").get<int>();
  d.d_dec = j.at("d_dec").get<int>();
  d.d_bottleneck = j.at("d_bottleneck").get<int>();
  d.max_word_len = j.at("max_word_len").get<int>();
  return d;
}

inline nlohmann::ordered_json config_to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"adam_eps", c.adam_eps},
          {"clip_norm", c.clip_norm},
          {"dropout", c.dropout},
          {"batch_size", c.batch_size},
          {"bptt_window", c.bptt_window},
          {"max_word_len", c.max_word_len},
          {"seed", c.seed}};
}

inline TrainConfig config_from_json(const nlohmann::json& j, int epochs) {
  TrainConfig c;
  c.learning_rate = j.at("learning_rate").get<double>();
  c.beta1 = j.at("beta1").get<double>();
  c.beta2 = j.at("beta2").get<double>();
  c.adam_eps = j.at("adam_eps").get<double>();
  c.clip_norm = j.at("clip_norm").get<double>();
  c.dropout = j.at("dropout").get<double>();
  c.batch_size = j.at("batch_size").get<int>();
  c.bptt_window = j.at("bptt_window").get<int>();
  c.max_word_len = j.at("max_word_len").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.epochs = epochs;
  return c;
}

template <typename T, typename Model>
void save_impl(const std::string& path, const char* kind, Model& model, nlohmann::ordered_json vocab_fields,
               const TrainingSnapshot<T>& snap) {
  nlohmann::ordered_json manifest;
  manifest["format"] = 1;
  manifest["model"] = kind;
  manifest["precision"] = precision_name<T>();
  manifest["dims"] = dims_to_json(model.dims);
  for (auto& [key, value] : vocab_fields.items()) manifest[key] = value;
  manifest["epochs_completed"] = snap.epochs_completed;
  manifest["train_config"] = config_to_json(snap.config);
  manifest["adam_step"] = snap.adam.step;
  manifest["dropout_rng"] = snap.dropout_rng;

  std::string payload;
  nlohmann::ordered_json tensors = nlohmann::ordered_json::array();
  model.for_each([&](const std::string& name, Tensor<T>& t) {
    tensors.push_back({{"name", name}, {"shape", t.shape()}});
    for (T v : t.data()) put_scalar_le(payload, v);
  });
  manifest["tensors"] = std::move(tensors);

  nlohmann::ordered_json moment_names = nlohmann::ordered_json::array();
  for (const auto& [name, mom] : snap.adam.moments) {
    moment_names.push_back(name);
    for (T v : mom.m) put_scalar_le(payload, v);
    for (T v : mom.v) put_scalar_le(payload, v);
  }
  manifest["adam_moments"] = std::move(moment_names);
  manifest["payload_bytes"] = payload.size();
  manifest["payload_hash"] = hex64(CharVocab::fnv1a(payload));

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot open " + tmp + " for writing");
    out << kCheckpointMagic << '\n' << manifest.dump() << '\n' << payload;
    if (!out) throw CheckpointError("I/O error while writing " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw CheckpointError("cannot move " + tmp + " into place at " + path);
  }
}

struct ParsedCheckpoint {
  nlohmann::json manifest;
  std::string payload;
};

template <typename T>
ParsedCheckpoint parse_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string blob = ss.str();

  const std::size_t magic_end = blob.find('\n');
  if (magic_end == std::string::npos) throw CheckpointError(path + " is not a checkpoint file");
  const std::string magic = blob.substr(0, magic_end);
  if (magic != kCheckpointMagic) {
    if (magic.rfind("c2w2c checkpoint", 0) == 0) {
      throw CheckpointError("unsupported checkpoint version: \"" + magic + "\"");
    }
    throw CheckpointError(path + " is not a checkpoint file");
  }
  const std::size_t manifest_end = blob.find('\n', magic_end + 1);
  if (manifest_end == std::string::npos) throw CheckpointError(path + " is missing its manifest");

  ParsedCheckpoint parsed;
  try {
    parsed.manifest = nlohmann::json::parse(blob.substr(magic_end + 1, manifest_end - magic_end - 1));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("corrupt checkpoint manifest: " + std::string(e.what()));
  }
  parsed.payload = blob.substr(manifest_end + 1);

  try {
    if (parsed.manifest.at("format").get<int>() != 1) {
      throw CheckpointError("unsupported checkpoint format tag");
    }
    if (parsed.manifest.at("precision").get<std::string>() != precision_name<T>()) {
      throw CheckpointError("checkpoint precision " + parsed.manifest.at("precision").get<std::string>() +
                            " does not match this build's " + precision_name<T>());
    }
    const std::size_t expected = parsed.manifest.at("payload_bytes").get<std::size_t>();
    if (parsed.payload.size() != expected) {
      throw CheckpointError("checkpoint payload is " + std::to_string(parsed.payload.size()) + " bytes, manifest says " +
                            std::to_string(expected));
    }
    if (parsed.manifest.at("payload_hash").get<std::string>() != hex64(CharVocab::fnv1a(parsed.payload))) {
      throw CheckpointError("checkpoint payload hash mismatch (file corrupted?)");
    }
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("corrupt checkpoint manifest: " + std::string(e.what()));
  }
  return parsed;
}

inline void check_kind(const nlohmann::json& manifest, const char* kind) {
  const std::string actual = manifest.at("model").get<std::string>();
  if (actual != kind) {
    throw CheckpointError("checkpoint holds a " + actual + " model, not " + kind);
  }
}

inline void check_vocab(const nlohmann::json& manifest, const char* size_key, const char* hash_key, int size,
                        std::uint64_t hash) {
  if (manifest.at(size_key).get<int>() != size) {
    throw CheckpointError("checkpoint expects a vocabulary of " + manifest.at(size_key).dump() + " symbols, got " +
                          std::to_string(size));
  }
  if (manifest.at(hash_key).get<std::string>() != hex64(hash)) {
    throw CheckpointError("vocabulary hash mismatch; the checkpoint was trained with a different vocabulary");
  }
}

template <typename T, typename Model>
void load_payload(const ParsedCheckpoint& parsed, Model& model, TrainingSnapshot<T>& snap) {
  const nlohmann::json& tensors = parsed.manifest.at("tensors");
  std::size_t cursor = 0;
  std::size_t index = 0;
  std::map<std::string, std::size_t> sizes;
  model.for_each([&](const std::string& name, Tensor<T>& t) {
    if (index >= tensors.size()) throw CheckpointError("checkpoint lists too few tensors");
    const nlohmann::json& entry = tensors.at(index++);
    if (entry.at("name").get<std::string>() != name) {
      throw CheckpointError("checkpoint tensor order mismatch: expected " + name + ", found " +
                            entry.at("name").get<std::string>());
    }
    if (entry.at("shape").get<std::vector<int>>() != t.shape()) {
      throw CheckpointError("checkpoint tensor " + name + " has shape " +
                            Tensor<T>::shape_string(entry.at("shape").get<std::vector<int>>()) + ", expected " +
                            t.shape_string());
    }
    auto& data = t.mutable_data();
    for (auto& v : data) v = get_scalar_le<T>(parsed.payload, cursor);
    sizes[name] = t.size();
  });
  if (index != tensors.size()) throw CheckpointError("checkpoint lists extra tensors");

  snap.epochs_completed = parsed.manifest.at("epochs_completed").get<int>();
  snap.config = config_from_json(parsed.manifest.at("train_config"), std::max(1, snap.epochs_completed));
  snap.dropout_rng = parsed.manifest.at("dropout_rng").get<std::string>();
  snap.adam.step = parsed.manifest.at("adam_step").get<std::int64_t>();
  snap.adam.moments.clear();
  for (const auto& name_json : parsed.manifest.at("adam_moments")) {
    const std::string name = name_json.get<std::string>();
    auto it = sizes.find(name);
    if (it == sizes.end()) throw CheckpointError("checkpoint has optimizer moments for unknown tensor " + name);
    AdamMoments<T>& mom = snap.adam.moments[name];
    mom.m.resize(it->second);
    mom.v.resize(it->second);
    for (auto& v : mom.m) v = get_scalar_le<T>(parsed.payload, cursor);
    for (auto& v : mom.v) v = get_scalar_le<T>(parsed.payload, cursor);
  }
  if (cursor != parsed.payload.size()) {
    throw CheckpointError("checkpoint payload has " + std::to_string(parsed.payload.size() - cursor) +
                          " unread trailing bytes");
  }
}

}  // namespace detail

template <typename T>
void save_checkpoint(const std::string& path, C2w2cModel<T>& model, const CharVocab& vocab,
                     const TrainingSnapshot<T>& snap) {
  if (model.char_vocab_size != vocab.size()) {
    throw CheckpointError("model was built for " + std::to_string(model.char_vocab_size) +
                          " characters, vocabulary has " + std::to_string(vocab.size()));
  }
  nlohmann::ordered_json vocab_fields = {{"char_vocab_size", vocab.size()},
                                         {"char_vocab_hash", detail::hex64(vocab.hash())}};
  detail::save_impl(path, "c2w2c", model, std::move(vocab_fields), snap);
}

template <typename T>
void save_checkpoint(const std::string& path, WordLstmModel<T>& model, const WordVocab& vocab,
                     const TrainingSnapshot<T>& snap) {
  if (model.word_vocab_size != vocab.size()) {
    throw CheckpointError("model was built for " + std::to_string(model.word_vocab_size) + " words, vocabulary has " +
                          std::to_string(vocab.size()));
  }
  nlohmann::ordered_json vocab_fields = {{"word_vocab_size", vocab.size()},
                                         {"word_vocab_hash", detail::hex64(vocab.hash())}};
  detail::save_impl(path, "wordlstm", model, std::move(vocab_fields), snap);
}

inline std::string checkpoint_model_kind(const std::string& path) {
  return detail::parse_checkpoint<double>(path).manifest.at("model").get<std::string>();
}

template <typename T>
C2w2cModel<T> load_c2w2c_checkpoint(const std::string& path, const CharVocab& vocab,
                                    TrainingSnapshot<T>* snapshot = nullptr) {
  detail::ParsedCheckpoint parsed = detail::parse_checkpoint<T>(path);
  detail::check_kind(parsed.manifest, "c2w2c");
  detail::check_vocab(parsed.manifest, "char_vocab_size", "char_vocab_hash", vocab.size(), vocab.hash());
  C2w2cModel<T> model(vocab.size(), detail::dims_from_json(parsed.manifest.at("dims")));
  TrainingSnapshot<T> snap;
  detail::load_payload(parsed, model, snap);
  if (snapshot) *snapshot = std::move(snap);
  return model;
}

template <typename T>
WordLstmModel<T> load_wordlstm_checkpoint(const std::string& path, const WordVocab& vocab,
                                          TrainingSnapshot<T>* snapshot = nullptr) {
  detail::ParsedCheckpoint parsed = detail::parse_checkpoint<T>(path);
  detail::check_kind(parsed.manifest, "wordlstm");
  detail::check_vocab(parsed.manifest, "word_vocab_size", "word_vocab_hash", vocab.size(), vocab.hash());
  WordLstmModel<T> model(vocab.size(), detail::dims_from_json(parsed.manifest.at("dims")));
  TrainingSnapshot<T> snap;
  detail::load_payload(parsed, model, snap);
  if (snapshot) *snapshot = std::move(snap);
  return model;
}

}  // namespace c2w2c
