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

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <string>

#include "neurofuzz/corpus_gen.hpp"
#include "neurofuzz/training.hpp"

namespace neurofuzz {
namespace {

TEST(LearningRate, Schedule) {
  TrainConfig cfg;
  EXPECT_DOUBLE_EQ(lr_at(0, cfg), 0.001);
  EXPECT_DOUBLE_EQ(lr_at(9, cfg), 0.001);
  EXPECT_DOUBLE_EQ(lr_at(10, cfg), 0.0005);
  EXPECT_DOUBLE_EQ(lr_at(49, cfg), 0.0000625);
  for (std::size_t e = 1; e < 100; ++e) {
    EXPECT_LE(lr_at(e, cfg), lr_at(e - 1, cfg));
    if (e % cfg.lr_halving_period == 0) EXPECT_DOUBLE_EQ(lr_at(e, cfg), lr_at(e - 1, cfg) / 2);
    else EXPECT_EQ(lr_at(e, cfg), lr_at(e - 1, cfg));
  }
}

TEST(TrainConfigTest, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.base_lr = 0;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.adam_beta1 = 1.0;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.batch = 0;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.seed = 77;
  c.epochs = 3;
  EXPECT_EQ(train_config_from_json(to_json(c)), c);
}

Model<double> scalar_model() {
  // The smallest model: one GRU layer of width 1 over a 1-symbol vocabulary.
  return Model<double>::zeros({CellType::Gru, 1, 1, 1, 0.0, LossKind::ElementwiseBinary});
}

TEST(Adam, FirstStepCollapsesBiasCorrection) {
  auto p = scalar_model();
  auto g = Model<double>::zeros(p.config);
  p.output.bias[0] = 1.0;
  g.output.bias[0] = 0.5;
  auto st = AdamState<double>::for_model(p);
  TrainConfig cfg;
  adam_step(p, g, st, 0.001, cfg);
  EXPECT_EQ(st.t, 1u);
  EXPECT_NEAR(p.output.bias[0], 1.0 - 0.001 * 0.5 / (0.5 + 1e-8), 1e-15);
  EXPECT_NEAR(p.output.bias[0], 0.999, 1e-9);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  RandomStream rng(1);
  auto p = Model<double>::initialized({CellType::Lstm, 2, 3, 4, 0.0, LossKind::ElementwiseBinary}, rng);
  const auto before = p;
  const auto g = Model<double>::zeros(p.config);
  auto st = AdamState<double>::for_model(p);
  for (int i = 0; i < 50; ++i) adam_step(p, g, st, 0.01, TrainConfig{});
  const auto a = p.tensors();
  const auto b = before.tensors();
  for (std::size_t k = 0; k < a.size(); ++k)
    for (std::size_t i = 0; i < a[k].data.size(); ++i) EXPECT_EQ(a[k].data[i], b[k].data[i]);
}

TEST(Adam, MatchesReferenceOverRandomSteps) {
  RandomStream rng(2);
  const ModelConfig cfg{CellType::Gru, 2, 3, 5, 0.0, LossKind::ElementwiseBinary};
  auto p = Model<double>::initialized(cfg, rng);
  auto ref = p.cast<double>();
  auto st = AdamState<double>::for_model(p);
  TrainConfig tc;
  tc.adam_beta1 = 0.8;
  tc.adam_beta2 = 0.95;
  tc.adam_epsilon = 1e-6;
  const auto n = p.allocated_parameters();
  std::vector<double> m(n, 0.0), v(n, 0.0);
  for (int step = 1; step <= 100; ++step) {
    auto g = Model<double>::zeros(cfg);
    for (auto& t : g.tensors())
      for (auto& x : t.data) x = rng.symmetric(2.0);
    const double lr = 0.01 / step;
    adam_step(p, g, st, lr, tc);
    // Textbook form with explicit m-hat and v-hat.
    std::size_t i = 0;
    auto gt = g.tensors();
    auto rt = ref.tensors();
    for (std::size_t k = 0; k < rt.size(); ++k) {
      for (std::size_t j = 0; j < rt[k].data.size(); ++j, ++i) {
        const double gi = gt[k].data[j];
        m[i] = tc.adam_beta1 * m[i] + (1 - tc.adam_beta1) * gi;
        v[i] = tc.adam_beta2 * v[i] + (1 - tc.adam_beta2) * gi * gi;
        const double mh = m[i] / (1 - std::pow(tc.adam_beta1, step));
        const double vh = v[i] / (1 - std::pow(tc.adam_beta2, step));
        rt[k].data[j] -= lr * mh / (std::sqrt(vh) + tc.adam_epsilon);
      }
    }
  }
  const auto a = p.tensors();
  const auto b = ref.tensors();
  for (std::size_t k = 0; k < a.size(); ++k)
    for (std::size_t i = 0; i < a[k].data.size(); ++i) EXPECT_NEAR(a[k].data[i], b[k].data[i], 1e-10);
}

TEST(Adam, ShapeMismatch) {
  auto p = scalar_model();
  auto g = Model<double>::zeros({CellType::Gru, 1, 2, 1, 0.0, LossKind::ElementwiseBinary});
  auto st = AdamState<double>::for_model(p);
  try {
    adam_step(p, g, st, 0.1, TrainConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ShapeMismatch);
  }
}

TEST(Clip, GlobalNorm) {
  auto g = scalar_model();
  g.output.bias[0] = 3.0;
  g.output.weights(0, 0) = 4.0;
  EXPECT_DOUBLE_EQ(clip_global_norm(g, 1.0), 5.0);
  EXPECT_NEAR(g.output.bias[0], 0.6, 1e-15);
  EXPECT_NEAR(g.output.weights(0, 0), 0.8, 1e-15);
  EXPECT_NEAR(clip_global_norm(g, 10.0), 1.0, 1e-15);
  EXPECT_NEAR(g.output.bias[0], 0.6, 1e-15);
}

struct TinyData {
  Alphabet alphabet;
  std::string train, val;
};

TinyData tiny_data() {
  const auto c = generate_corpus(default_grammar(), 300, 3);
  const auto text = c.text();
  const auto split = make_splits(c, 1, 12000, 3000, 4).splits[0];
  return {Alphabet::from_text(text), std::string(slice(text, split.train)), std::string(slice(text, split.validation))};
}

TrainConfig tiny_train(std::size_t epochs) {
  TrainConfig t;
  t.epochs = epochs;
  t.batch = 8;
  t.seq_len = 40;
  t.base_lr = 0.01;
  t.seed = 5;
  return t;
}

TEST(Train, ZeroEpochsGivesInitializedWeights) {
  const auto d = tiny_data();
  const ModelConfig mc{CellType::Gru, 1, 8, 0, 0.3, LossKind::ElementwiseBinary};
  const auto cp = train(mc, tiny_train(0), d.alphabet, d.train, d.val);
  EXPECT_TRUE(cp.history.empty());
  RandomStream rng(derive_seed(5, "init"));
  auto cfg = mc;
  cfg.vocab = d.alphabet.size();
  const auto init = Model<float>::initialized(cfg, rng);
  EXPECT_EQ(cp.model.output.weights, init.output.weights);
  EXPECT_EQ(cp.model.layers[0].weights, init.layers[0].weights);
}

TEST(Train, UntrainedLossIsNearUniform) {
  const auto d = tiny_data();
  const ModelConfig mc{CellType::Lstm, 2, 16, 0, 0.3, LossKind::ElementwiseBinary};
  const auto cp = train(mc, tiny_train(0), d.alphabet, d.train, d.val);
  const double I = static_cast<double>(d.alphabet.size());
  const double uniform = -(std::log(1 / I) + (I - 1) * std::log(1 - 1 / I));
  EXPECT_NEAR(validate(cp, d.val), uniform, 0.02 * uniform);
  EXPECT_EQ(validate(cp, d.val), validate(cp, d.val));
  EXPECT_THROW(validate(cp, "\x01\x02"), Error);
}

TEST(Train, LearnsAndIsDeterministic) {
  const auto d = tiny_data();
  const ModelConfig mc{CellType::Gru, 2, 16, 0, 0.3, LossKind::ElementwiseBinary};
  std::vector<EpochRecord> seen;
  TrainOptions opts;
  opts.split_id = "s0";
  opts.on_epoch = [&](const EpochRecord& r) { seen.push_back(r); };
  const auto a = train(mc, tiny_train(4), d.alphabet, d.train, d.val, opts);
  const auto b = train(mc, tiny_train(4), d.alphabet, d.train, d.val, opts);
  ASSERT_EQ(a.history.size(), 4u);
  EXPECT_EQ(seen.size(), 8u);
  EXPECT_EQ(checkpoint_digest(a), checkpoint_digest(b));
  EXPECT_LT(a.history.back().val_loss, a.history.front().val_loss);
  const double I = static_cast<double>(d.alphabet.size());
  EXPECT_LT(a.history.front().train_loss, -(std::log(1 / I) + (I - 1) * std::log(1 - 1 / I)));
  EXPECT_EQ(a.history[0].epoch, 1u);
  EXPECT_EQ(a.split_id, "s0");
  auto other = tiny_train(4);
  other.seed = 6;
  EXPECT_NE(checkpoint_digest(train(mc, other, d.alphabet, d.train, d.val)), checkpoint_digest(a));
}

TEST(Train, DivergenceIsReported) {
  const auto d = tiny_data();
  const ModelConfig mc{CellType::Gru, 1, 8, 0, 0.0, LossKind::ElementwiseBinary};
  auto t = tiny_train(1);
  t.base_lr = std::numeric_limits<double>::infinity();
  t.clip_norm = 0;
  try {
    train(mc, t, d.alphabet, d.train, d.val);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonFiniteLoss);
  }
}

class CheckpointFile : public ::testing::Test {
 protected:
  static Checkpoint sample() {
    const auto d = tiny_data();
    TrainOptions o;
    o.split_id = "split-1";
    o.restart = 2;
    return train({CellType::Lstm, 2, 6, 0, 0.3, LossKind::Categorical}, tiny_train(1), d.alphabet, d.train, d.val, o);
  }
};

TEST_F(CheckpointFile, RoundTripIsBitIdentical) {
  const auto cp = sample();
  const auto bytes = serialize_checkpoint(cp);
  const auto back = deserialize_checkpoint(bytes);
  EXPECT_EQ(serialize_checkpoint(back), bytes);
  EXPECT_EQ(back.model.config, cp.model.config);
  EXPECT_EQ(back.alphabet.chars(), cp.alphabet.chars());
  EXPECT_EQ(back.split_id, "split-1");
  EXPECT_EQ(back.restart, 2u);
  EXPECT_EQ(back.history[0].val_loss, cp.history[0].val_loss);
  const auto path = std::filesystem::temp_directory_path() / ("nf_cp_" + std::to_string(::getpid()) + ".bin");
  save_checkpoint(cp, path);
  EXPECT_EQ(serialize_checkpoint(load_checkpoint(path)), bytes);
  std::filesystem::remove(path);
}

TEST_F(CheckpointFile, CorruptionIsTyped) {
  const auto bytes = serialize_checkpoint(sample());
  auto expect_corrupt = [](const std::string& b, std::optional<std::uint64_t> at = std::nullopt) {
    try {
      deserialize_checkpoint(b);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::CorruptCheckpoint) << e.what();
      if (at) EXPECT_EQ(e.offset(), at);
    }
  };
  expect_corrupt(bytes.substr(0, bytes.size() - 1));
  expect_corrupt(bytes.substr(0, 10));
  auto v = bytes;
  v[4] = 9;
  expect_corrupt(v, 4);
  auto m = bytes;
  m[0] = 'X';
  expect_corrupt(m, 0);
  expect_corrupt(bytes + "x");
  RandomStream rng(6);
  for (int i = 0; i < 300; ++i) {
    auto f = bytes;
    f[rng.below(40 + f.size() / 20)] ^= static_cast<char>(1u << rng.below(8));
    try {
      deserialize_checkpoint(f);
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::CorruptCheckpoint);
    }
  }
}

TEST(HistoryCsv, Format) {
  const TrainingHistory h = {{1, 2.5, 2.25, 0.001, 1.5}};
  EXPECT_EQ(history_csv(h), "epoch,train_loss,val_loss,lr,seconds\n1,2.5,2.25,0.001,1.5\n");
}

}  // namespace
}  // namespace neurofuzz
