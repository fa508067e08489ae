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

#include "neurofuzz/generator.hpp"

namespace neurofuzz {
namespace {

// A GRU whose hidden state copies the current input, with an output layer
// that maps '<' -> 'b' -> '>' -> '\n' with near certainty.
Checkpoint chain_checkpoint(double confidence) {
  Checkpoint cp;
  cp.alphabet = Alphabet::from_text("\n<>b");  // indices: \n 0, < 1, > 2, b 3
  const std::size_t I = 4;
  cp.model = Model<float>::zeros({CellType::Gru, 1, I, I, 0.0, LossKind::ElementwiseBinary});
  auto& layer = cp.model.layers[0];
  for (std::size_t j = 0; j < I; ++j) {
    layer.bias[static_cast<Eigen::Index>(j)] = 30.0f;  // update gate open: h = candidate
    layer.weights(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(2 * I + j)) = 10.0f;
  }
  auto& out = cp.model.output.weights;
  out(1, 3) = static_cast<float>(confidence);  // '<' -> 'b'
  out(3, 2) = static_cast<float>(confidence);  // 'b' -> '>'
  out(2, 0) = static_cast<float>(confidence);  // '>' -> '\n'
  return cp;
}

TEST(Sampling, DeterministicChain) {
  const auto cp = chain_checkpoint(40);
  RandomStream rng(1);
  for (int i = 0; i < 20; ++i) EXPECT_EQ(sample_tag(cp, rng), "<b>");
}

TEST(Sampling, SameSeedSameTags) {
  const auto cp = chain_checkpoint(2);
  EXPECT_EQ(sample_tags(cp, 50, 7).tags, sample_tags(cp, 50, 7).tags);
  EXPECT_TRUE(sample_tags(cp, 0, 7).tags.empty());
  const auto r = sample_tags(cp, 64, 8, 200);
  EXPECT_EQ(r.tags.size(), 64u);
  for (const auto& t : r.tags) {
    EXPECT_EQ(t.front(), '<');
    EXPECT_EQ(t.find('\n'), std::string::npos);
    EXPECT_LE(t.size(), 200u);
  }
}

TEST(Sampling, MaxLengthAndRetryBudget) {
  // Never emits a newline.
  auto cp = chain_checkpoint(0);
  cp.model.output.bias[0] = -100.0f;
  RandomStream rng(2);
  try {
    sample_tag(cp, rng, 16);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MaxLenExceeded);
  }
  try {
    sample_tags(cp, 4, 3, 16);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::RetryBudgetExhausted);
  }
}

TEST(Sampling, EmpiricalFrequenciesMatchSoftmax) {
  RandomStream init(4);
  Checkpoint cp;
  cp.alphabet = Alphabet::from_text("\n<abcdefg");
  cp.model = Model<float>::initialized({CellType::Lstm, 2, 8, cp.alphabet.size(), 0.0, LossKind::ElementwiseBinary}, init);
  cp.model.output.bias.setRandom();
  auto state = StepState<float>::zeros(cp.model.config);
  const auto probs = next_distribution(step_logits(cp.model, state, cp.alphabet.index_of(U'<')));
  RandomStream rng(5);
  const std::size_t n = 200000;
  std::vector<std::size_t> counts(probs.size(), 0);
  for (std::size_t i = 0; i < n; ++i) ++counts[sample_index(probs, rng)];
  for (std::size_t j = 0; j < probs.size(); ++j) {
    const double sigma = std::sqrt(static_cast<double>(n) * probs[j] * (1 - probs[j]));
    EXPECT_LE(std::abs(static_cast<double>(counts[j]) - static_cast<double>(n) * probs[j]), 3 * sigma + 1) << j;
  }
}

TEST(Sampling, TemperatureSharpens) {
  RowVector<float> logits(3);
  logits << 1.0f, 2.0f, 3.0f;
  const auto p1 = next_distribution(logits, 1.0);
  const auto p01 = next_distribution(logits, 0.1);
  EXPECT_NEAR(p1[0] + p1[1] + p1[2], 1.0, 1e-15);
  EXPECT_GT(p01[2], p1[2]);
  EXPECT_THROW(next_distribution(logits, 0.0), Error);
}

TEST(Assembly, BlankTemplateAndOrder) {
  const auto& tpl = default_template();
  EXPECT_EQ(assemble_case({}).rendered_html, tpl.head + tpl.tail);
  const auto c = assemble_case({"<b> x </b>", "<i> y </i>"});
  const auto a = c.rendered_html.find("<b> x </b>"), b = c.rendered_html.find("<i> y </i>");
  EXPECT_LT(c.rendered_html.find("<body>"), a);
  EXPECT_LT(a, b);
  EXPECT_LT(b, c.rendered_html.find("</body>"));
  EXPECT_EQ(tpl.hash(), default_template().hash());
  EXPECT_EQ(tpl.hash(), "dfc7c4c016b80876cbb29f74a418386fd8343043c527e93e45204712d8873646");
  EXPECT_THROW(assemble_case({"a\nb"}), Error);
}

TEST(CaseSets, SizesAndDivisibility) {
  std::vector<std::string> tags;
  for (int i = 0; i < 16384; ++i) tags.push_back("<b id=\"id" + std::to_string(i) + "\"> x </b>");
  const auto sets = make_case_sets(tags, {128, 256}, "model-gru-l2");
  ASSERT_EQ(sets.size(), 2u);
  EXPECT_EQ(sets[0].cases.size(), 128u);
  EXPECT_EQ(sets[1].cases.size(), 64u);
  EXPECT_EQ(sets[1].name(), "model-gru-l2_t256");
  EXPECT_EQ(sets[0].cases[3].id, "model-gru-l2_t128_0003");
  std::size_t k = 0;
  for (const auto& c : sets[1].cases)
    for (const auto& t : c.tags) EXPECT_EQ(t, tags[k++]);
  EXPECT_EQ(make_case_sets(std::vector<std::string>(tags.begin(), tags.begin() + 256), {256}, "x")[0].cases.size(), 1u);
  try {
    make_case_sets(std::vector<std::string>(100, "<b>"), {128}, "x");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NotDivisible);
  }
}

TEST(CaseSets, WriteAndRead) {
  const auto dir = std::filesystem::temp_directory_path() / ("nf_cases_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::vector<std::string> tags = {"<b> x </b>", "<p> größe </p>", "<br>", "<zz"};
  const auto set = make_case_sets(tags, {2}, "dataset-0", {{"seed", 3}})[0];
  write_case_set(set, dir);
  const auto back = read_case_set(dir);
  EXPECT_EQ(back.provenance, "dataset-0");
  ASSERT_EQ(back.cases.size(), 2u);
  EXPECT_EQ(back.cases[1].id, set.cases[1].id);
  EXPECT_EQ(back.cases[1].tags, set.cases[1].tags);
  EXPECT_EQ(back.cases[0].rendered_html, set.cases[0].rendered_html);
  EXPECT_EQ(back.metadata.at("seed"), 3);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace neurofuzz
