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

// Little-endian encoding helpers for the binary file formats (checkpoints,
// drcov block tables).

#ifndef NEUROFUZZ_BYTE_IO_HPP
#define NEUROFUZZ_BYTE_IO_HPP

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>

#include "neurofuzz/error.hpp"

namespace neurofuzz {

template <class T>
void put_le(std::string& out, T value) {
  static_assert(std::is_integral_v<T>);
  using U = std::make_unsigned_t<T>;
  auto u = static_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<char>(u & 0xFF));
    u = static_cast<U>(u >> 8);
  }
}

inline void put_f32(std::string& out, float value) { put_le(out, std::bit_cast<std::uint32_t>(value)); }

/// Bounds-checked cursor. Running off the end raises `truncation` with the
/// offset at which the missing field starts.
class ByteReader {
 public:
  ByteReader(std::string_view data, ErrorCode truncation, std::size_t start = 0)
      : data_(data), pos_(start), truncation_(truncation) {}

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }
  bool at_end() const { return pos_ == data_.size(); }

  template <class T>
  T get_le(const char* what) {
    need(sizeof(T), what);
    using U = std::make_unsigned_t<T>;
    U u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
      u = static_cast<U>(u | static_cast<U>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i));
    pos_ += sizeof(T);
    return static_cast<T>(u);
  }

  float get_f32(const char* what) { return std::bit_cast<float>(get_le<std::uint32_t>(what)); }

  std::string_view bytes(std::size_t n, const char* what) {
    need(n, what);
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n, const char* what) const {
    if (remaining() < n) {
      throw Error(truncation_, std::string("unexpected end of data reading ") + what, pos_);
    }
  }

  std::string_view data_;
  std::size_t pos_;
  ErrorCode truncation_;
};

}  // namespace neurofuzz

#endif  // NEUROFUZZ_BYTE_IO_HPP
