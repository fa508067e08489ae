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

#ifndef NEUROFUZZ_SEQ_DATA_HPP
#define NEUROFUZZ_SEQ_DATA_HPP

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "neurofuzz/error.hpp"
#include "neurofuzz/random.hpp"
#include "neurofuzz/utf8.hpp"

namespace neurofuzz {

using IndexSeq = std::vector<std::int32_t>;

/// Dense character <-> index mapping, ordered by ascending code point.
class Alphabet {
 public:
  Alphabet() = default;

  static Alphabet from_chars(std::u32string chars) {
    std::sort(chars.begin(), chars.end());
    chars.erase(std::unique(chars.begin(), chars.end()), chars.end());
    Alphabet a;
    a.chars_ = std::move(chars);
    return a;
  }

  static Alphabet from_text(std::string_view utf8_text) {
    if (utf8_text.empty()) throw Error(ErrorCode::EmptyCorpus, "cannot build an alphabet from empty text");
    return from_chars(utf8::decode(utf8_text));
  }

  std::size_t size() const { return chars_.size(); }
  const std::u32string& chars() const { return chars_; }
  char32_t char_at(std::size_t index) const { return chars_.at(index); }

  bool contains(char32_t c) const { return std::binary_search(chars_.begin(), chars_.end(), c); }

  std::int32_t index_of(char32_t c) const {
    const auto it = std::lower_bound(chars_.begin(), chars_.end(), c);
    if (it == chars_.end() || *it != c) {
      throw Error(ErrorCode::IndexOutOfAlphabet, "character U+" + hex(c) + " is not in the alphabet");
    }
    return static_cast<std::int32_t>(it - chars_.begin());
  }

  IndexSeq encode(std::string_view utf8_text) const {
    const auto cps = utf8::decode(utf8_text);
    IndexSeq out;
    out.reserve(cps.size());
    for (char32_t c : cps) out.push_back(index_of(c));
    return out;
  }

  std::string decode(std::span<const std::int32_t> indices) const {
    std::string out;
    out.reserve(indices.size());
    for (auto i : indices) {
      if (i < 0 || static_cast<std::size_t>(i) >= chars_.size())
        throw Error(ErrorCode::IndexOutOfAlphabet, "index " + std::to_string(i) + " out of range");
      utf8::append(out, chars_[static_cast<std::size_t>(i)]);
    }
    return out;
  }

  bool operator==(const Alphabet&) const = default;

 private:
  static std::string hex(char32_t c) {
    static constexpr char kHex[] = "0123456789ABCDEF";
    std::string s;
    for (int shift = 20; shift >= 0; shift -= 4) s.push_back(kHex[(c >> shift) & 15]);
    s.erase(0, std::min(s.find_first_not_of('0'), s.size() - 4));
    return s;
  }

  std::u32string chars_;
};

template <class Scalar = float>
std::vector<Scalar> one_hot(std::size_t index, std::size_t vocab) {
  if (index >= vocab) {
    throw Error(ErrorCode::IndexOutOfAlphabet,
                "index " + std::to_string(index) + " outside vocabulary of " + std::to_string(vocab));
  }
  std::vector<Scalar> v(vocab, Scalar(0));
  v[index] = Scalar(1);
  return v;
}

/// `batch` windows of `seq_len` characters; targets are the inputs shifted
/// by one. Storage is row-major by window: element (b, t) at b * seq_len + t.
struct SequenceBatch {
  std::size_t batch = 0;
  std::size_t seq_len = 0;
  IndexSeq inputs;
  IndexSeq targets;

  std::int32_t input(std::size_t b, std::size_t t) const { return inputs[b * seq_len + t]; }
  std::int32_t target(std::size_t b, std::size_t t) const { return targets[b * seq_len + t]; }

  static SequenceBatch from_windows(std::span<const std::int32_t> text, std::span<const std::size_t> starts,
                                    std::size_t seq_len) {
    SequenceBatch out;
    out.batch = starts.size();
    out.seq_len = seq_len;
    out.inputs.reserve(starts.size() * seq_len);
    out.targets.reserve(starts.size() * seq_len);
    for (std::size_t s : starts) {
      out.inputs.insert(out.inputs.end(), text.begin() + static_cast<std::ptrdiff_t>(s),
                        text.begin() + static_cast<std::ptrdiff_t>(s + seq_len));
      out.targets.insert(out.targets.end(), text.begin() + static_cast<std::ptrdiff_t>(s + 1),
                         text.begin() + static_cast<std::ptrdiff_t>(s + seq_len + 1));
    }
    return out;
  }
};

/// Per-epoch stream of full batches. The text is cut into non-overlapping
/// windows of seq_len inputs (plus one successor character each); every
/// epoch shuffles the window order and emits floor(windows / batch)
/// batches, so no window is seen twice within an epoch.
class BatchStream {
 public:
  BatchStream(std::span<const std::int32_t> text, std::size_t seq_len, std::size_t batch, std::uint64_t seed)
      : text_(text), seq_len_(seq_len), batch_(batch), rng_(seed) {
    if (seq_len == 0 || batch == 0) throw Error(ErrorCode::InvalidConfig, "seq_len and batch must be positive");
    if (text.size() <= seq_len) {
      throw Error(ErrorCode::TextTooShort, "text of " + std::to_string(text.size()) +
                                               " characters cannot fill a window of " + std::to_string(seq_len));
    }
    const std::size_t windows = (text.size() - 1) / seq_len;
    if (windows < batch) {
      throw Error(ErrorCode::TextTooShort, std::to_string(windows) + " windows cannot fill a batch of " +
                                               std::to_string(batch));
    }
    order_.resize(windows);
  }

  std::size_t windows() const { return order_.size(); }
  std::size_t batches_per_epoch() const { return order_.size() / batch_; }

  /// Reshuffles the window order; must be called before each epoch.
  void start_epoch() {
    for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i * seq_len_;
    rng_.shuffle(std::span<std::size_t>(order_));
    cursor_ = 0;
  }

  bool next(SequenceBatch& out) {
    if (cursor_ + batch_ > order_.size()) return false;
    out = SequenceBatch::from_windows(text_, std::span<const std::size_t>(order_).subspan(cursor_, batch_),
                                      seq_len_);
    cursor_ += batch_;
    return true;
  }

 private:
  std::span<const std::int32_t> text_;
  std::size_t seq_len_;
  std::size_t batch_;
  RandomStream rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = SIZE_MAX / 2;
};

inline BatchStream make_batches(std::span<const std::int32_t> text, std::size_t seq_len, std::size_t batch,
                                std::uint64_t seed) {
  return BatchStream(text, seq_len, batch, seed);
}

}  // namespace neurofuzz

#endif  // NEUROFUZZ_SEQ_DATA_HPP
