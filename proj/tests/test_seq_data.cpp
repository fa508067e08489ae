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

#include <numeric>
#include <set>

#include "neurofuzz/seq_data.hpp"

namespace neurofuzz {
namespace {

TEST(Alphabet, CodePointOrder) {
  const auto a = Alphabet::from_text("ab\n");
  ASSERT_EQ(a.size(), 3u);
  EXPECT_EQ(a.index_of(U'\n'), 0);
  EXPECT_EQ(a.index_of(U'a'), 1);
  EXPECT_EQ(a.index_of(U'b'), 2);
  EXPECT_EQ(Alphabet::from_text("zzzz\n").size(), 2u);
  EXPECT_EQ(Alphabet::from_text("größe\n").index_of(U'ß'), 4);
}

TEST(Alphabet, Errors) {
  EXPECT_THROW(Alphabet::from_text(""), Error);
  const auto a = Alphabet::from_text("ab");
  try {
    a.encode("abc");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::IndexOutOfAlphabet);
  }
}

TEST(Alphabet, EncodeDecodeRoundTrip) {
  const std::string text = "<p lang=\"de\"> die Größe €100 </p>\n";
  const auto a = Alphabet::from_text(text);
  RandomStream rng(1);
  for (int k = 0; k < 200; ++k) {
    IndexSeq ids(rng.below(50));
    for (auto& i : ids) i = static_cast<std::int32_t>(rng.below(a.size()));
    EXPECT_EQ(a.encode(a.decode(ids)), ids);
  }
  EXPECT_EQ(a.decode(a.encode(text)), text);
}

TEST(OneHot, Basics) {
  const auto v = one_hot(17, 107);
  ASSERT_EQ(v.size(), 107u);
  EXPECT_EQ(v[17], 1.0f);
  EXPECT_EQ(std::accumulate(v.begin(), v.end(), 0.0f), 1.0f);
  for (float x : v) EXPECT_TRUE(x == 0.0f || x == 1.0f);
  EXPECT_EQ(one_hot(0, 1), std::vector<float>{1.0f});
  EXPECT_THROW(one_hot(107, 107), Error);
}

TEST(Batches, SmallestShift) {
  const IndexSeq text = {0, 1, 2, 3};
  auto s = make_batches(text, 3, 1, 0);
  s.start_epoch();
  SequenceBatch b;
  ASSERT_TRUE(s.next(b));
  EXPECT_EQ(b.inputs, (IndexSeq{0, 1, 2}));
  EXPECT_EQ(b.targets, (IndexSeq{1, 2, 3}));
  EXPECT_FALSE(s.next(b));
}

TEST(Batches, TooShort) {
  const IndexSeq text = {0, 1, 2};
  EXPECT_THROW(make_batches(text, 3, 1, 0), Error);
  const IndexSeq longer(10, 0);
  EXPECT_THROW(make_batches(longer, 3, 4, 0), Error);
}

TEST(Batches, CountFormulaCoverageAndShift) {
  RandomStream rng(2);
  IndexSeq text(100003);
  for (auto& c : text) c = static_cast<std::int32_t>(rng.below(50));
  const std::size_t seq = 150, batch = 16;
  auto s = make_batches(text, seq, batch, 3);
  EXPECT_EQ(s.batches_per_epoch(), (text.size() - 1) / seq / batch);
  EXPECT_EQ(s.batches_per_epoch(), text.size() / (seq * batch));
  for (int epoch = 0; epoch < 2; ++epoch) {
    s.start_epoch();
    SequenceBatch b;
    std::size_t n = 0;
    while (s.next(b)) {
      ++n;
      ASSERT_EQ(b.inputs.size(), seq * batch);
    }
    EXPECT_EQ(n, s.batches_per_epoch());
  }
}

TEST(Batches, WindowsAreDistinctAndShifted) {
  IndexSeq text(2000);
  std::iota(text.begin(), text.end(), 0);  // unique values identify positions
  auto s = make_batches(text, 7, 5, 4);
  s.start_epoch();
  SequenceBatch b;
  std::set<std::int32_t> starts;
  while (s.next(b)) {
    for (std::size_t i = 0; i < b.batch; ++i) {
      ASSERT_EQ(b.input(i, 0) % 7, 0);
      ASSERT_TRUE(starts.insert(b.input(i, 0)).second);
      for (std::size_t t = 0; t < b.seq_len; ++t) {
        ASSERT_EQ(b.target(i, t), b.input(i, t) + 1);
        if (t > 0) ASSERT_EQ(b.input(i, t), b.input(i, t - 1) + 1);
      }
    }
  }
  EXPECT_EQ(starts.size(), s.batches_per_epoch() * 5);
}

TEST(Batches, SameSeedSameOrder) {
  IndexSeq text(5000);
  std::iota(text.begin(), text.end(), 0);
  auto a = make_batches(text, 10, 8, 5), b = make_batches(text, 10, 8, 5), c = make_batches(text, 10, 8, 6);
  a.start_epoch();
  b.start_epoch();
  c.start_epoch();
  SequenceBatch x, y, z;
  a.next(x);
  b.next(y);
  c.next(z);
  EXPECT_EQ(x.inputs, y.inputs);
  EXPECT_NE(x.inputs, z.inputs);
}

}  // namespace
}  // namespace neurofuzz
