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

#include <algorithm>
#include <filesystem>
#include <set>
#include <string>

#include "neurofuzz/analysis.hpp"
#include "neurofuzz/corpus_gen.hpp"
#include "neurofuzz/hash.hpp"
#include "neurofuzz/seq_data.hpp"

namespace neurofuzz {
namespace {

// A random sub-grammar of the default one, for duality checks.
TagGrammar random_grammar(RandomStream& rng) {
  const auto full = default_grammar();
  TagGrammar g;
  for (const auto& t : full.tags)
    if (rng.bernoulli(0.3)) g.tags.push_back(t);
  if (g.tags.empty()) g.tags.push_back(full.tags[rng.below(full.tags.size())]);
  for (const auto& a : full.attributes)
    if (rng.bernoulli(0.5)) g.attributes.push_back(a);
  for (const auto& x : full.inner_text)
    if (rng.bernoulli(0.5)) g.inner_text.push_back(x);
  if (g.inner_text.empty()) g.inner_text.push_back(full.inner_text[0]);
  g.excluded_tags = full.excluded_tags;
  g.max_attributes_per_tag = rng.below(8);
  return g;
}

TEST(Grammar, DefaultIsValidAndKeepsExclusionsApart) {
  const auto g = default_grammar();
  EXPECT_NO_THROW(g.validate());
  for (const auto& x : g.excluded_tags) EXPECT_EQ(g.find_tag(x), nullptr) << x;
  for (std::string_view t : {"td", "th"})
    EXPECT_NE(std::find(g.excluded_tags.begin(), g.excluded_tags.end(), t), g.excluded_tags.end());
  for (std::string_view a : {"id", "style", "spellcheck", "dir", "title", "lang", "translate", "contenteditable",
                             "tabindex", "class"})
    EXPECT_NE(g.find_attribute(a), nullptr) << a;
}

TEST(Grammar, JsonRoundTrip) {
  const auto g = default_grammar();
  const auto back = TagGrammar::from_json(g.to_json());
  EXPECT_EQ(back.to_json(), g.to_json());
  EXPECT_EQ(back.hash(), g.hash());
}

TEST(Grammar, ShippedDataFileMatchesDefault) {
  const auto path = std::filesystem::path(NEUROFUZZ_SOURCE_DIR) / "data" / "default_grammar.json";
  const auto g = TagGrammar::from_json(nlohmann::json::parse(read_file(path)));
  EXPECT_EQ(g.hash(), default_grammar().hash());
}

TEST(Grammar, RejectsInvalidGrammars) {
  auto g = default_grammar();
  g.excluded_tags.push_back("p");
  EXPECT_THROW(g.validate(), Error);
  g = default_grammar();
  g.attributes[1].value.pool.push_back("a\nb");
  EXPECT_THROW(g.validate(), Error);
  g = default_grammar();
  g.inner_text[0].pool.push_back("fish & chips");
  EXPECT_THROW(g.validate(), Error);
  g = default_grammar();
  g.attributes[1].value.pool.push_back("");
  EXPECT_THROW(g.validate(), Error);
  g = default_grammar();
  g.tags.clear();
  EXPECT_THROW(g.validate(), Error);
  EXPECT_THROW(TagGrammar::from_json(nlohmann::json{{"tags", 3}}), Error);
}

TEST(GenerateTag, SingleTagGrammarShape) {
  TagGrammar g;
  g.tags = {{"h2", false}};
  ValueGenerator id;
  id.kind = ValueKind::IdCounter;
  ValueGenerator dir;
  dir.kind = ValueKind::DirectionPair;
  dir.pool = {"rtl"};
  g.attributes = {{"id", id}, {"dir", dir}};
  ValueGenerator text;
  text.pool = {"2e100"};
  g.inner_text = {text};
  g.max_attributes_per_tag = 2;
  RandomStream rng(1);
  std::set<std::string> seen;
  for (int i = 0; i < 50; ++i) seen.insert(generate_tag(g, rng, 0));
  EXPECT_EQ(seen, (std::set<std::string>{"<h2 id=\"id0\"> 2e100 </h2>", "<h2 id=\"id0\" dir=\"rtl\"> 2e100 </h2>"}));
}

TEST(GenerateTag, DegenerateVoidGrammar) {
  TagGrammar g;
  g.tags = {{"input", true}};
  g.max_attributes_per_tag = 0;
  g.attributes = default_grammar().attributes;
  RandomStream rng(2);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(generate_tag(g, rng, i), "<input>");
}

TEST(GenerateTag, DefaultGrammarTagsValidateCleanly) {
  const auto g = default_grammar();
  RandomStream rng(3);
  std::set<std::string> names;
  for (std::uint64_t i = 0; i < 10000; ++i) {
    const auto tag = generate_tag(g, rng, i);
    ASSERT_EQ(tag.find('\n'), std::string::npos);
    ASSERT_LE(tag.size(), g.max_line_length);
    const auto report = validate_tag(tag, g);
    ASSERT_EQ(report.count(), 0u) << tag;
    names.insert(tag.substr(1, tag.find_first_of(" >") - 1));
  }
  EXPECT_EQ(names.size(), g.tags.size());
}

TEST(GenerateTag, RandomGrammarsValidateCleanly) {
  RandomStream rng(4);
  for (int k = 0; k < 200; ++k) {
    const auto g = random_grammar(rng);
    g.validate();
    for (std::uint64_t i = 0; i < 200; ++i) {
      const auto tag = generate_tag(g, rng, i);
      ASSERT_EQ(validate_tag(tag, g).count(), 0u) << tag;
    }
  }
}

TEST(Corpus, ExactCountAndDeterminism) {
  const auto g = default_grammar();
  const auto a = generate_corpus(g, 3000, 42);
  const auto b = generate_corpus(g, 3000, 42);
  const auto c = generate_corpus(g, 3000, 43);
  EXPECT_EQ(a.lines.size(), 3000u);
  EXPECT_EQ(sha256_hex(a.text()), sha256_hex(b.text()));
  EXPECT_NE(sha256_hex(a.text()), sha256_hex(c.text()));
  EXPECT_EQ(a.byte_size, a.text().size());
  const auto one = generate_corpus(g, 1, 5);
  ASSERT_EQ(one.lines.size(), 1u);
  const auto one_text = one.text();
  EXPECT_EQ(one_text.back(), '\n');
  EXPECT_EQ(std::count(one_text.begin(), one_text.end(), '\n'), 1);
  const auto parsed = Corpus::from_text(a.text());
  EXPECT_EQ(parsed.lines, a.lines);
  EXPECT_EQ(parsed.byte_size, a.byte_size);
}

TEST(Corpus, FullScaleSizeIsNearReference) {
  // 409,000 tags should land near 36 MB; extrapolate from a 40,000 tag sample.
  const auto c = generate_corpus(default_grammar(), 40000, 6);
  const double projected = static_cast<double>(c.byte_size) / 40000.0 * 409000.0;
  EXPECT_GT(projected, 36e6 * 0.8);
  EXPECT_LT(projected, 36e6 * 1.2);
}

TEST(Corpus, DefaultAlphabetHas107Characters) {
  const auto c = generate_corpus(default_grammar(), 12700, 7);
  EXPECT_EQ(Alphabet::from_text(c.text()).size(), 107u);
}

TEST(Splits, DisjointDistinctAndLineAligned) {
  const auto c = generate_corpus(default_grammar(), 4000, 8);
  const auto text = c.text();
  const auto s = make_splits(c, 5, c.byte_size / 2, c.byte_size / 10, 9);
  ASSERT_EQ(s.n_splits(), 5u);
  for (std::size_t i = 0; i < s.splits.size(); ++i) {
    const auto& sp = s.splits[i];
    EXPECT_FALSE(sp.train.overlaps(sp.validation));
    EXPECT_GE(sp.train.size(), c.byte_size / 2);
    EXPECT_GE(sp.validation.size(), c.byte_size / 10);
    for (auto r : {sp.train, sp.validation}) {
      EXPECT_TRUE(r.begin == 0 || text[r.begin - 1] == '\n');
      EXPECT_EQ(text[r.end - 1], '\n');
    }
    for (std::size_t j = 0; j < i; ++j) EXPECT_NE(s.splits[i], s.splits[j]);
  }
  const auto again = make_splits(c, 5, c.byte_size / 2, c.byte_size / 10, 9);
  EXPECT_EQ(again.splits, s.splits);
}

TEST(Splits, ForcedSingleSplit) {
  const auto c = generate_corpus(default_grammar(), 50, 10);
  const std::uint64_t val = c.lines[0].size() + 1;
  const auto s = make_splits(c, 1, c.byte_size - val, val, 11);
  ASSERT_EQ(s.n_splits(), 1u);
  EXPECT_EQ(s.splits[0].validation, (ByteRange{0, val}));
  EXPECT_EQ(s.splits[0].train, (ByteRange{val, c.byte_size}));
}

TEST(Splits, TooSmall) {
  const auto c = generate_corpus(default_grammar(), 50, 12);
  try {
    make_splits(c, 1, c.byte_size, 1, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::CorpusTooSmall);
  }
}

}  // namespace
}  // namespace neurofuzz
