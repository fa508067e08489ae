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
#include <string>

#include "neurofuzz/mutation.hpp"

namespace neurofuzz {
namespace {

Alphabet test_alphabet() { return Alphabet::from_text("<>/=\" abcdefghijklmnopqrstuvwxyz0123456789\nß"); }

TEST(Mutation, ZeroProbabilityIsIdentity) {
  const std::string text = "<b id=\"x\"> größ </b>\n<p>\n";
  const auto ab = Alphabet::from_text(text);
  MutationStats st;
  EXPECT_EQ(mutate_text(text, {0.0, ab, 1}, &st), text);
  EXPECT_EQ(st.replacements, 0u);
  const std::vector<std::string> tags = {"<b> x </b>", "<p> y </p>"};
  const auto sets = make_mutation_sets(tags, {0.0}, {1, 2}, Alphabet::from_text("<b> x </b><p> y </p>"), 5);
  ASSERT_EQ(sets.size(), 2u);
  EXPECT_EQ(sets[0].cases[0].tags[0], tags[0]);
  EXPECT_EQ(sets[1].cases[0].tags, tags);
}

TEST(Mutation, PreservesLengthAndNewlines) {
  const auto a = test_alphabet();
  RandomStream rng(2);
  for (int k = 0; k < 300; ++k) {
    std::u32string cps(rng.below(60), U'a');
    for (auto& c : cps) c = a.char_at(rng.below(a.size()));
    const auto text = utf8::encode(cps);
    const double p = rng.uniform01();
    const auto out = mutate_text(text, {p, a, rng.next_u64()});
    const auto out_cps = utf8::decode(out);
    ASSERT_EQ(out_cps.size(), cps.size());
    for (std::size_t i = 0; i < cps.size(); ++i) {
      ASSERT_EQ(cps[i] == U'\n', out_cps[i] == U'\n');
      ASSERT_TRUE(a.contains(out_cps[i]));
    }
  }
}

TEST(Mutation, FullProbabilityKeepsOriginalAboutOnceInPool) {
  const auto a = test_alphabet();
  const std::size_t pool = a.size() - 1;  // newline is never drawn
  const std::string text(200000, 'q');
  MutationStats st;
  const auto out = mutate_text(text, {1.0, a, 3}, &st);
  EXPECT_EQ(st.replacements, text.size());
  const double same = static_cast<double>(text.size() - st.changed) / static_cast<double>(text.size());
  const double expect = 1.0 / static_cast<double>(pool);
  const double sigma = std::sqrt(expect * (1 - expect) / static_cast<double>(text.size()));
  EXPECT_NEAR(same, expect, 4 * sigma);
}

TEST(Mutation, ReplacementCountIsBinomial) {
  const auto a = test_alphabet();
  const std::string text(1000000, 'a');
  MutationStats st;
  mutate_text(text, {0.016, a, 4}, &st);
  const double n = 1e6, p = 0.016;
  EXPECT_LE(std::abs(static_cast<double>(st.replacements) - n * p), 3 * std::sqrt(n * p * (1 - p)));
}

TEST(Mutation, Errors) {
  const auto a = Alphabet::from_text("ab");
  EXPECT_THROW(mutate_text("abc", {0.1, a, 0}), Error);
  EXPECT_THROW(mutate_text("ab", {1.5, a, 0}), Error);
  EXPECT_THROW(make_mutation_sets({"ab"}, {}, {1}, a, 0), Error);
  EXPECT_THROW(make_mutation_sets({"ab", "ab", "ab"}, {0.1}, {2}, a, 0), Error);
}

TEST(Mutation, DefaultLadderAndSets) {
  const auto ladder = default_mutation_ladder();
  ASSERT_EQ(ladder.size(), 10u);
  EXPECT_DOUBLE_EQ(ladder.front(), 0.001);
  EXPECT_DOUBLE_EQ(ladder.back(), 0.512);
  const std::vector<std::string> tags(512, "<b id=\"x\"> abc </b>");
  const auto a = Alphabet::from_text(tags[0]);
  const auto sets = make_mutation_sets(tags, ladder, {128, 256}, a, 6);
  ASSERT_EQ(sets.size(), 20u);
  EXPECT_EQ(sets[0].provenance, "mutation-p0.001");
  EXPECT_EQ(sets[19].provenance, "mutation-p0.512");
  EXPECT_DOUBLE_EQ(sets[19].metadata.at("probability").get<double>(), 0.512);
  EXPECT_EQ(sets[0].cases.size(), 4u);
  EXPECT_EQ(sets[1].cases.size(), 2u);
}

TEST(Mutation, Deterministic) {
  const auto a = test_alphabet();
  const std::vector<std::string> tags(50, "<abc def=\"ghi\">");
  EXPECT_EQ(mutate_tags(tags, 0.2, a, 7), mutate_tags(tags, 0.2, a, 7));
  EXPECT_NE(mutate_tags(tags, 0.2, a, 7), mutate_tags(tags, 0.2, a, 8));
}

}  // namespace
}  // namespace neurofuzz
