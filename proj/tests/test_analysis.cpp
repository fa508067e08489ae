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

#include <string>
#include <vector>

#include "neurofuzz/analysis.hpp"
#include "neurofuzz/corpus_gen.hpp"
#include "neurofuzz/mutation.hpp"

namespace neurofuzz {
namespace {

constexpr std::string_view kOneLayerSample =
    R"(<war id="id55804" scellcheck="false" tpalleaeck="false" class="style_class_0" title="50000000"> null</sab>)";
constexpr std::string_view kThreeLayerGood = R"(<p id="id38564" lang="mk"> BBBBBBBBBBBBBBBBBBBBBBBBBBBBBBBBBBBBBBBB</p>)";
constexpr std::string_view kThreeLayerBad =
    R"(<head id="id240801" sang="al" style="style" class="style_class_0" dir="rtl"> 7500000000</pre>)";

TEST(Validator, OneLayerSampleHasFourErrors) {
  const auto r = validate_tag(kOneLayerSample, default_grammar());
  EXPECT_EQ(r.count(), 4u);
  EXPECT_EQ(r.count(FindingKind::UnknownTagName), 1u);
  EXPECT_EQ(r.count(FindingKind::UnknownAttributeName), 2u);
  EXPECT_EQ(r.count(FindingKind::UnknownClosingTagName), 1u);
}

TEST(Validator, ThreeLayerSamples) {
  const auto g = default_grammar();
  EXPECT_EQ(validate_tag(kThreeLayerGood, g).count(), 0u);
  const auto r = validate_tag(kThreeLayerBad, g);
  EXPECT_EQ(r.count(), 2u);
  EXPECT_EQ(r.count(FindingKind::UnknownAttributeName), 1u);
  EXPECT_EQ(r.count(FindingKind::MismatchedClosingTag), 1u);
  const std::vector<std::string> both = {std::string(kThreeLayerGood), std::string(kThreeLayerBad)};
  EXPECT_DOUBLE_EQ(error_rate(both, g), 1.0);
}

TEST(Validator, TrainingSetLinesAreClean) {
  const auto g = default_grammar();
  EXPECT_EQ(validate_tag(R"x(<h2 id="id0" style="style" spellcheck="false" dir="rtl" title="eval(n1, $)"> 2e100 </h2>)x", g)
                .count(),
            0u);
  EXPECT_EQ(validate_tag(R"(<ul id="id3" style="style" translate="no" contenteditable="true" tabindex="4400000000"> 4400000000 </ul>)",
                         g)
                .count(),
            0u);
}

TEST(Validator, TypedFindings) {
  const auto g = default_grammar();
  struct Case {
    std::string tag;
    FindingKind kind;
  };
  const std::vector<Case> cases = {
      {"<zz> x </zz>", FindingKind::UnknownTagName},
      {"<p foo=\"1\"> x </p>", FindingKind::UnknownAttributeName},
      {"<p id=1> x </p>", FindingKind::MalformedAttributeSyntax},
      {"<p id='1'> x </p>", FindingKind::MalformedAttributeSyntax},
      {"<p hidden> x </p>", FindingKind::MalformedAttributeSyntax},
      {"<p id=\"1\"dir=\"rtl\"> x </p>", FindingKind::MalformedAttributeSyntax},
      {"<p> x </b>", FindingKind::MismatchedClosingTag},
      {"<p id=\"1\" x", FindingKind::MissingClosingDelimiter},
      {"<p> x </zz>", FindingKind::UnknownClosingTagName},
      {"p> x </p>", FindingKind::UnknownTagName},
  };
  for (const auto& c : cases) {
    const auto r = validate_tag(c.tag, g);
    EXPECT_GE(r.count(c.kind), 1u) << c.tag;
    EXPECT_EQ(r.count(), r.errors.size());
  }
}

TEST(Validator, NestingIsNotAnError) {
  EXPECT_EQ(validate_tag("<p> <b> x </b> </p>", default_grammar()).count(), 0u);
}

TEST(Validator, TotalOverRandomBytes) {
  const auto g = default_grammar();
  RandomStream rng(1);
  for (int i = 0; i < 100000; ++i) {
    std::string s(rng.below(80), '\0');
    for (auto& c : s) c = rng.bernoulli(0.5) ? "<>/=\" 'abpi"[rng.below(11)] : static_cast<char>(rng.below(256));
    const auto r = validate_tag(s, g);
    ASSERT_EQ(r.count(), r.errors.size());
  }
}

TEST(ErrorRate, EmptyInputAndCleanDataset) {
  const auto g = default_grammar();
  EXPECT_THROW(error_rate(std::vector<std::string>{}, g), Error);
  const auto c = generate_corpus(g, 2000, 2);
  EXPECT_EQ(error_rate(c.lines, g), 0.0);
}

// The rate climbs with p until the tags lose their structure: at the top
// rung most quotes and delimiters are gone and whole lines collapse into a
// single finding, so that point is reported rather than asserted.
TEST(ErrorRate, NonDecreasingOverMutationLadder) {
  const auto g = default_grammar();
  const auto c = generate_corpus(g, 4000, 3);
  const auto alphabet = Alphabet::from_text(c.text());
  double previous = 0.0;
  for (double p : default_mutation_ladder()) {
    const double rate = error_rate(mutate_tags(c.lines, p, alphabet, 4), g);
    ::testing::Test::RecordProperty("rate_p" + probability_label(p), std::to_string(rate));
    if (p <= 0.256) {
      EXPECT_GT(rate, previous) << "p=" << p;
      previous = rate;
    }
  }
  EXPECT_GT(previous, 1.0);
}

}  // namespace
}  // namespace neurofuzz
