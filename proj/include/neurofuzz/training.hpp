// Copyright 2026 The neurofuzz Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Adam training loop with step-halving learning rate, validation tracking,
// and the checkpoint file format.

#ifndef NEUROFUZZ_TRAINING_HPP
#define NEUROFUZZ_TRAINING_HPP

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "neurofuzz/byte_io.hpp"
#include "neurofuzz/corpus_gen.hpp"
#include "neurofuzz/error.hpp"
#include "neurofuzz/hash.hpp"
#include "neurofuzz/neural_core.hpp"
#include "neurofuzz/random.hpp"
#include "neurofuzz/seq_data.hpp"

namespace neurofuzz {

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch = 512;
  std::size_t seq_len = 150;
  double base_lr = 0.001;
  std::size_t lr_halving_period = 10;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double clip_norm = 5.0;  // global gradient norm; <= 0 disables clipping
  std::size_t n_splits = 5;
  std::size_t n_restarts = 3;
  std::uint64_t seed = 0;

  void validate() const {
    if (batch < 1 || seq_len < 1) throw Error(ErrorCode::InvalidConfig, "batch and seq_len must be >= 1");
    if (!(base_lr > 0)) throw Error(ErrorCode::InvalidConfig, "base_lr must be positive");
    if (lr_halving_period < 1) throw Error(ErrorCode::InvalidConfig, "lr_halving_period must be >= 1");
    if (!(adam_beta1 > 0 && adam_beta1 < 1 && adam_beta2 > 0 && adam_beta2 < 1))
      throw Error(ErrorCode::InvalidConfig, "Adam betas must lie in (0, 1)");
    if (!(adam_epsilon > 0)) throw Error(ErrorCode::InvalidConfig, "adam_epsilon must be positive");
    if (n_splits < 1 || n_restarts < 1) throw Error(ErrorCode::InvalidConfig, "n_splits and n_restarts must be >= 1");
  }

  bool operator==(const TrainConfig&) const = default;
};

inline double lr_at(std::size_t epoch, const TrainConfig& cfg) {
  return std::ldexp(cfg.base_lr, -static_cast<int>(epoch / cfg.lr_halving_period));
}

template <class S>
struct AdamState {
  std::vector<std::vector<S>> m;
  std::vector<std::vector<S>> v;
  std::uint64_t t = 0;

  static AdamState for_model(const Model<S>& model) {
    AdamState st;
    for (const auto& tensor : model.tensors()) {
      st.m.emplace_back(tensor.data.size(), S(0));
      st.v.emplace_back(tensor.data.size(), S(0));
    }
    return st;
  }
};

/// One bias-corrected Adam update of `params` in place.
template <class S>
void adam_step(Model<S>& params, const Model<S>& grads, AdamState<S>& state, double lr, const TrainConfig& cfg) {
  auto p = params.tensors();
  const auto g = grads.tensors();
  if (p.size() != g.size() || p.size() != state.m.size())
    throw Error(ErrorCode::ShapeMismatch, "Adam: parameter, gradient and state tensor counts differ");
  ++state.t;
  const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (p[k].data.size() != g[k].data.size() || p[k].data.size() != state.m[k].size())
      throw Error(ErrorCode::ShapeMismatch, "Adam: shape mismatch in " + p[k].name);
    auto& m = state.m[k];
    auto& v = state.v[k];
    for (std::size_t i = 0; i < p[k].data.size(); ++i) {
      const double gi = static_cast<double>(g[k].data[i]);
      const double mi = b1 * static_cast<double>(m[i]) + (1.0 - b1) * gi;
      const double vi = b2 * static_cast<double>(v[i]) + (1.0 - b2) * gi * gi;
      m[i] = static_cast<S>(mi);
      v[i] = static_cast<S>(vi);
      const double step = lr * (mi / c1) / (std::sqrt(vi / c2) + cfg.adam_epsilon);
      p[k].data[i] = static_cast<S>(static_cast<double>(p[k].data[i]) - step);
    }
  }
}

/// Rescales `grads` so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
template <class S>
double clip_global_norm(Model<S>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& t : grads.tensors())
    for (S x : t.data) sq += static_cast<double>(x) * static_cast<double>(x);
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const S scale = static_cast<S>(max_norm / norm);
    for (auto& t : grads.tensors())
      for (S& x : t.data) x *= scale;
  }
  return norm;
}

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0;
  double val_loss = 0;
  double lr = 0;
  double seconds = 0;  // wall time; excluded from determinism checks
};

using TrainingHistory = std::vector<EpochRecord>;

inline std::string history_csv(const TrainingHistory& h) {
  std::string out = "epoch,train_loss,val_loss,lr,seconds\n";
  char buf[160];
  for (const auto& r : h) {
    std::snprintf(buf, sizeof buf, "%zu,%.6g,%.6g,%.6g,%.6g\n", r.epoch, r.train_loss, r.val_loss, r.lr, r.seconds);
    out += buf;
  }
  return out;
}

struct Checkpoint {
  Alphabet alphabet;
  Model<float> model;
  TrainConfig train_config;
  TrainingHistory history;
  std::string split_id;
  std::size_t restart = 0;
  std::uint64_t seed = 0;

  const ModelConfig& model_config() const { return model.config; }
};

/// Mean loss of `model` over `text` cut into consecutive windows of at most
/// seq_len inputs, without dropout.
template <class S>
double validate(const Model<S>& model, std::span<const std::int32_t> text, std::size_t seq_len, std::size_t batch) {
  if (text.size() < 2) throw Error(ErrorCode::TextTooShort, "validation text needs at least two characters");
  const std::size_t len = std::min(seq_len, text.size() - 1);
  const std::size_t windows = (text.size() - 1) / len;
  double total = 0.0;
  std::size_t positions = 0;
  std::vector<std::size_t> starts;
  for (std::size_t w = 0; w < windows; w += batch) {
    starts.clear();
    for (std::size_t k = w; k < std::min(windows, w + batch); ++k) starts.push_back(k * len);
    const auto b = SequenceBatch::from_windows(text, starts, len);
    const double n = static_cast<double>(b.batch * b.seq_len);
    total += static_cast<double>(loss(stacked_forward(b, model), b, model.config.loss)) * n;
    positions += b.batch * b.seq_len;
  }
  return total / static_cast<double>(positions);
}

inline double validate(const Checkpoint& cp, std::string_view validation_text) {
  const auto encoded = cp.alphabet.encode(validation_text);
  return validate(cp.model, encoded, cp.train_config.seq_len, cp.train_config.batch);
}

/// Text of a line-aligned byte interval.
inline std::string_view slice(std::string_view text, const ByteRange& r) {
  if (r.end > text.size() || r.begin > r.end) throw Error(ErrorCode::InvalidConfig, "byte range outside the corpus");
  return text.substr(r.begin, r.size());
}

struct TrainOptions {
  std::string split_id;
  std::size_t restart = 0;
  std::function<void(const EpochRecord&)> on_epoch;
};

/// Trains one model. Initial weights, batch order and dropout masks are all
/// drawn from streams derived from `train_cfg.seed`, so a run is
/// reproducible bit for bit.
inline Checkpoint train(ModelConfig model_cfg, const TrainConfig& train_cfg, const Alphabet& alphabet,
                        std::string_view train_text, std::string_view val_text, const TrainOptions& opts = {}) {
  train_cfg.validate();
  model_cfg.vocab = alphabet.size();
  model_cfg.validate();
  const auto train_ids = alphabet.encode(train_text);
  const auto val_ids = alphabet.encode(val_text);

  Checkpoint cp;
  cp.alphabet = alphabet;
  cp.train_config = train_cfg;
  cp.split_id = opts.split_id;
  cp.restart = opts.restart;
  cp.seed = train_cfg.seed;
  RandomStream init_rng(derive_seed(train_cfg.seed, "init"));
  cp.model = Model<float>::initialized(model_cfg, init_rng);
  if (train_cfg.epochs == 0) return cp;

  auto stream = make_batches(train_ids, train_cfg.seq_len, train_cfg.batch, derive_seed(train_cfg.seed, "batches"));
  RandomStream dropout_rng(derive_seed(train_cfg.seed, "dropout"));
  auto adam = AdamState<float>::for_model(cp.model);
  ForwardCache<float> cache;
  SequenceBatch batch;

  for (std::size_t epoch = 0; epoch < train_cfg.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    const double lr = lr_at(epoch, train_cfg);
    double sum = 0.0;
    std::size_t steps = 0;
    stream.start_epoch();
    while (stream.next(batch)) {
      stacked_forward(batch, cp.model, &dropout_rng, &cache);
      const double l = static_cast<double>(loss(cache.probs, batch, model_cfg.loss));
      if (!std::isfinite(l)) {
        throw Error(ErrorCode::NonFiniteLoss, "loss became " + std::to_string(l) + " at epoch " +
                                                  std::to_string(epoch + 1) + ", step " + std::to_string(steps + 1));
      }
      auto grads = backward(batch, cp.model, cache);
      clip_global_norm(grads, train_cfg.clip_norm);
      adam_step(cp.model, grads, adam, lr, train_cfg);
      sum += l;
      ++steps;
    }
    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.train_loss = sum / static_cast<double>(steps);
    rec.val_loss = validate(cp.model, val_ids, train_cfg.seq_len, train_cfg.batch);
    rec.lr = lr;
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    if (!std::isfinite(rec.val_loss))
      throw Error(ErrorCode::NonFiniteLoss, "validation loss is not finite after epoch " + std::to_string(rec.epoch));
    cp.history.push_back(rec);
    if (opts.on_epoch) opts.on_epoch(rec);
  }
  return cp;
}

// ---- JSON forms -------------------------------------------------------------

inline nlohmann::json to_json(const ModelConfig& c) {
  return {{"cell", std::string(to_string(c.cell))}, {"layers", c.layers},   {"hidden", c.hidden},
          {"vocab", c.vocab},                       {"dropout", c.dropout}, {"loss", std::string(to_string(c.loss))}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.cell = cell_type_from_string(j.at("cell").get<std::string>());
  c.layers = j.at("layers").get<std::size_t>();
  c.hidden = j.at("hidden").get<std::size_t>();
  c.vocab = j.value("vocab", std::size_t{0});
  c.dropout = j.value("dropout", c.dropout);
  c.loss = loss_kind_from_string(j.value("loss", std::string(to_string(c.loss))));
  return c;
}

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch", c.batch},
          {"seq_len", c.seq_len},
          {"base_lr", c.base_lr},
          {"lr_halving_period", c.lr_halving_period},
          {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2},
          {"adam_epsilon", c.adam_epsilon},
          {"clip_norm", c.clip_norm},
          {"n_splits", c.n_splits},
          {"n_restarts", c.n_restarts},
          {"seed", c.seed}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.batch = j.value("batch", c.batch);
  c.seq_len = j.value("seq_len", c.seq_len);
  c.base_lr = j.value("base_lr", c.base_lr);
  c.lr_halving_period = j.value("lr_halving_period", c.lr_halving_period);
  c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
  c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
  c.adam_epsilon = j.value("adam_epsilon", c.adam_epsilon);
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  c.n_splits = j.value("n_splits", c.n_splits);
  c.n_restarts = j.value("n_restarts", c.n_restarts);
  c.seed = j.value("seed", c.seed);
  return c;
}

// ---- checkpoint file ----------------------------------------------------------
//
//   "NFCK" | u32 version | u64 header length | JSON header
//   | u32 tensor count | per tensor: u32 name length, name, u32 rank,
//     u64 dims[rank], f32 data[prod(dims)]
// All integers little-endian.

inline constexpr std::string_view kCheckpointMagic = "NFCK";
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// `include_wall_time = false` zeroes the per-epoch seconds, giving the
/// canonical bytes used for determinism comparisons.
inline std::string serialize_checkpoint(const Checkpoint& cp, bool include_wall_time = true) {
  nlohmann::json header;
  header["model"] = to_json(cp.model.config);
  header["train"] = to_json(cp.train_config);
  std::vector<std::uint32_t> chars(cp.alphabet.chars().begin(), cp.alphabet.chars().end());
  header["alphabet"] = chars;
  nlohmann::json hist = nlohmann::json::array();
  for (const auto& r : cp.history) {
    hist.push_back({{"epoch", r.epoch},
                    {"train_loss", r.train_loss},
                    {"val_loss", r.val_loss},
                    {"lr", r.lr},
                    {"seconds", include_wall_time ? r.seconds : 0.0}});
  }
  header["history"] = hist;
  header["split_id"] = cp.split_id;
  header["restart"] = cp.restart;
  header["seed"] = cp.seed;
  const std::string text = header.dump();

  std::string out(kCheckpointMagic);
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint64_t>(out, text.size());
  out += text;
  const auto tensors = cp.model.tensors();
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out += t.name;
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) put_le<std::uint64_t>(out, d);
    for (float v : t.data) put_f32(out, v);
  }
  return out;
}

inline Checkpoint deserialize_checkpoint(std::string_view bytes) {
  ByteReader in(bytes, ErrorCode::CorruptCheckpoint);
  if (in.bytes(4, "magic") != kCheckpointMagic) throw Error(ErrorCode::CorruptCheckpoint, "bad magic", 0);
  const auto version = in.get_le<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::CorruptCheckpoint,
                "unsupported version " + std::to_string(version) + " (expected " +
                    std::to_string(kCheckpointVersion) + ")",
                4);
  }
  const auto header_len = in.get_le<std::uint64_t>("header length");
  const std::size_t header_at = in.pos();
  if (header_len > in.remaining()) throw Error(ErrorCode::CorruptCheckpoint, "header runs past end of file", header_at);
  const auto header_text = in.bytes(header_len, "header");

  Checkpoint cp;
  try {
    const auto header = nlohmann::json::parse(header_text);
    auto model_cfg = model_config_from_json(header.at("model"));
    model_cfg.validate();
    cp.train_config = train_config_from_json(header.at("train"));
    std::u32string chars;
    for (const auto& c : header.at("alphabet")) chars.push_back(static_cast<char32_t>(c.get<std::uint32_t>()));
    cp.alphabet = Alphabet::from_chars(chars);
    if (cp.alphabet.size() != model_cfg.vocab) throw Error(ErrorCode::CorruptCheckpoint, "alphabet size differs from vocab");
    for (const auto& r : header.at("history")) {
      cp.history.push_back({r.at("epoch").get<std::size_t>(), r.at("train_loss").get<double>(),
                            r.at("val_loss").get<double>(), r.at("lr").get<double>(), r.at("seconds").get<double>()});
    }
    cp.split_id = header.at("split_id").get<std::string>();
    cp.restart = header.at("restart").get<std::size_t>();
    cp.seed = header.at("seed").get<std::uint64_t>();
    cp.model = Model<float>::zeros(model_cfg);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CorruptCheckpoint, std::string("bad header: ") + e.what(), header_at);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::CorruptCheckpoint) throw;
    throw Error(ErrorCode::CorruptCheckpoint, std::string("bad header: ") + e.what(), header_at);
  }

  auto tensors = cp.model.tensors();
  const std::size_t count_at = in.pos();
  if (in.get_le<std::uint32_t>("tensor count") != tensors.size())
    throw Error(ErrorCode::CorruptCheckpoint, "tensor count does not match the model", count_at);
  for (auto& t : tensors) {
    const std::size_t at = in.pos();
    const auto name_len = in.get_le<std::uint32_t>("tensor name length");
    if (in.bytes(name_len, "tensor name") != t.name)
      throw Error(ErrorCode::CorruptCheckpoint, "expected tensor " + t.name, at);
    const auto rank = in.get_le<std::uint32_t>("tensor rank");
    if (rank != t.shape.size()) throw Error(ErrorCode::CorruptCheckpoint, "rank mismatch in " + t.name, at);
    for (auto d : t.shape)
      if (in.get_le<std::uint64_t>("tensor dims") != d)
        throw Error(ErrorCode::CorruptCheckpoint, "shape mismatch in " + t.name, at);
    for (float& v : t.data) v = in.get_f32("tensor data");
  }
  if (!in.at_end()) throw Error(ErrorCode::CorruptCheckpoint, "trailing bytes after tensors", in.pos());
  return cp;
}

inline void save_checkpoint(const Checkpoint& cp, const std::filesystem::path& path) {
  write_file(path, serialize_checkpoint(cp));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return deserialize_checkpoint(read_file(path));
}

/// Content digest that ignores wall-time fields.
inline std::string checkpoint_digest(const Checkpoint& cp) {
  return sha256_hex(serialize_checkpoint(cp, false));
}

}  // namespace neurofuzz

#endif  // NEUROFUZZ_TRAINING_HPP
