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

#ifndef NEUROFUZZ_HTML_LEXICON_HPP
#define NEUROFUZZ_HTML_LEXICON_HPP

#include <algorithm>
#include <array>
#include <string>
#include <string_view>

namespace neurofuzz::html {

constexpr bool is_ascii_alpha(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}
constexpr bool is_ascii_digit(char c) { return c >= '0' && c <= '9'; }
constexpr bool is_ascii_alnum(char c) { return is_ascii_alpha(c) || is_ascii_digit(c); }
constexpr bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\f' || c == '\r';
}
constexpr char to_lower(char c) { return c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : c; }

inline std::string lowercase(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), to_lower);
  return out;
}

// Named character references recognised by the surrogate tokenizer and
// permitted in generated text.
inline constexpr std::array<std::string_view, 7> kNamedEntities = {
    "amp", "apos", "copy", "gt", "lt", "nbsp", "quot"};

inline bool is_named_entity(std::string_view name) {
  return std::find(kNamedEntities.begin(), kNamedEntities.end(), name) != kNamedEntities.end();
}

/// Length of a well-formed character reference ("&amp;", "&#169;") starting
/// at `text[pos]`, or 0 if there is none.
inline std::size_t charref_length(std::string_view text, std::size_t pos) {
  if (pos >= text.size() || text[pos] != '&') return 0;
  std::size_t i = pos + 1;
  if (i < text.size() && text[i] == '#') {
    ++i;
    const std::size_t digits = i;
    while (i < text.size() && is_ascii_digit(text[i])) ++i;
    if (i == digits || i >= text.size() || text[i] != ';') return 0;
    return i + 1 - pos;
  }
  const std::size_t start = i;
  while (i < text.size() && is_ascii_alnum(text[i])) ++i;
  if (i == start || i >= text.size() || text[i] != ';') return 0;
  if (!is_named_entity(text.substr(start, i - start))) return 0;
  return i + 1 - pos;
}

}  // namespace neurofuzz::html

#endif  // NEUROFUZZ_HTML_LEXICON_HPP
