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

// Grammar-driven generator for the training corpus: one flat HTML tag per
// line, no nesting, no CSS, no script payloads.

#ifndef NEUROFUZZ_CORPUS_GEN_HPP
#define NEUROFUZZ_CORPUS_GEN_HPP

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "neurofuzz/error.hpp"
#include "neurofuzz/hash.hpp"
#include "neurofuzz/html_lexicon.hpp"
#include "neurofuzz/random.hpp"

namespace neurofuzz {

enum class ValueKind {
  IdCounter,
  FixedStringPool,
  BooleanPair,
  DirectionPair,
  LanguageCodePool,
  IntegerPool,
  FloatPool,
  ScriptSnippetPool,
};

inline constexpr std::string_view to_string(ValueKind kind) {
  switch (kind) {
    case ValueKind::IdCounter: return "id-counter";
    case ValueKind::FixedStringPool: return "fixed-string-pool";
    case ValueKind::BooleanPair: return "boolean-pair";
    case ValueKind::DirectionPair: return "direction-pair";
    case ValueKind::LanguageCodePool: return "language-code-pool";
    case ValueKind::IntegerPool: return "integer-pool";
    case ValueKind::FloatPool: return "float-pool";
    case ValueKind::ScriptSnippetPool: return "script-snippet-pool";
  }
  return "?";
}

inline ValueKind value_kind_from_string(std::string_view s) {
  for (auto k : {ValueKind::IdCounter, ValueKind::FixedStringPool, ValueKind::BooleanPair,
                 ValueKind::DirectionPair, ValueKind::LanguageCodePool, ValueKind::IntegerPool,
                 ValueKind::FloatPool, ValueKind::ScriptSnippetPool}) {
    if (to_string(k) == s) return k;
  }
  throw Error(ErrorCode::InvalidGrammar, "unknown value kind '" + std::string(s) + "'");
}

/// Pool used when a grammar file names a kind without listing values.
/// Fixed-string pools have no default.
inline std::vector<std::string> default_pool(ValueKind kind) {
  switch (kind) {
    case ValueKind::BooleanPair: return {"true", "false"};
    case ValueKind::DirectionPair: return {"ltr", "rtl"};
    case ValueKind::LanguageCodePool:
      return {"en", "de", "fr", "mk", "al", "zh", "ja", "ru", "es", "it", "pt",
              "nl", "sv", "pl", "tr", "ko", "uk", "cs", "el", "he", "vi"};
    case ValueKind::IntegerPool:
      return {"4400000000", "7500000000", "50000000",   "0",          "-1",
              "65535",      "2147483647", "-2147483648", "4294967296", "9007199254740993"};
    case ValueKind::FloatPool:
      return {"2e100", "1e-7", "-0.0", "3.14159", "1.7976931348623157e308", "5e-324",
              "0.1",   "-2.5E+10", "NaN", "Infinity", "-Infinity"};
    case ValueKind::ScriptSnippetPool:
      return {"eval(n1, $)",
              "alert(1)",
              "document.getElementById('id0').focus()",
              "window.setTimeout(f, 1000)",
              "x[0] = y",
              "f(a, b)",
              "n1 + n2 * 3",
              "confirm('ok')",
              "void 0",
              "new Array(4294967295).fill(0)",
              "String.fromCharCode(65, 66, 67)",
              "Math.pow(2, 53) + 1",
              "a || b",
              "!x",
              "~y",
              "x ^ y",
              "x % 2",
              "obj?.prop",
              "`tpl`",
              "{a: 1}",
              "arr[-1]",
              "s.split(';')",
              "#hash",
              "@media",
              "C:\\temp"};
    case ValueKind::IdCounter:
    case ValueKind::FixedStringPool:
      break;
  }
  return {};
}

struct ValueGenerator {
  ValueKind kind = ValueKind::FixedStringPool;
  std::vector<std::string> pool;  // unused for IdCounter
  std::string prefix = "id";      // IdCounter only

  std::string generate(RandomStream& rng, std::uint64_t serial) const {
    if (kind == ValueKind::IdCounter) return prefix + std::to_string(serial);
    return pool[rng.below(pool.size())];
  }

  std::size_t max_length() const {
    if (kind == ValueKind::IdCounter) return prefix.size() + 20;
    std::size_t n = 0;
    for (const auto& v : pool) n = std::max(n, v.size());
    return n;
  }
};

struct TagSpec {
  std::string name;
  bool is_void = false;
};

struct AttributeSpec {
  std::string name;
  ValueGenerator value;
};

/// The controllable tag grammar. Names are lowercase ASCII.
struct TagGrammar {
  std::vector<TagSpec> tags;
  std::vector<std::string> excluded_tags;
  std::vector<AttributeSpec> attributes;
  std::vector<ValueGenerator> inner_text;
  std::size_t max_attributes_per_tag = 6;
  std::size_t max_line_length = 512;

  const TagSpec* find_tag(std::string_view lowercase_name) const {
    for (const auto& t : tags)
      if (t.name == lowercase_name) return &t;
    return nullptr;
  }

  const AttributeSpec* find_attribute(std::string_view lowercase_name) const {
    for (const auto& a : attributes)
      if (a.name == lowercase_name) return &a;
    return nullptr;
  }

  /// Index of the id-counter attribute, which always leads the attribute list.
  std::optional<std::size_t> id_attribute() const {
    for (std::size_t i = 0; i < attributes.size(); ++i)
      if (attributes[i].value.kind == ValueKind::IdCounter) return i;
    return std::nullopt;
  }

  // Longest line the grammar can emit, assuming ids below 10^20.
  std::size_t worst_case_line_length() const {
    std::size_t tag_name = 0;
    bool any_non_void = false;
    for (const auto& t : tags) {
      tag_name = std::max(tag_name, t.name.size());
      any_non_void |= !t.is_void;
    }
    std::vector<std::size_t> attr_lengths;
    for (const auto& a : attributes) attr_lengths.push_back(a.name.size() + a.value.max_length() + 4);
    std::sort(attr_lengths.rbegin(), attr_lengths.rend());
    std::size_t attrs = 0;
    for (std::size_t i = 0; i < std::min(max_attributes_per_tag, attr_lengths.size()); ++i)
      attrs += attr_lengths[i];
    std::size_t text = 0;
    for (const auto& g : inner_text) text = std::max(text, g.max_length());
    std::size_t total = 1 + tag_name + attrs + 1;
    if (any_non_void) total += 2 + text + 3 + tag_name;
    return total;
  }

  void validate() const;
  nlohmann::json to_json() const;
  static TagGrammar from_json(const nlohmann::json& j);
  std::string hash() const { return sha256_hex(to_json().dump()); }
};

namespace detail {

inline bool valid_name(std::string_view name, bool allow_dash) {
  if (name.empty() || !(name[0] >= 'a' && name[0] <= 'z')) return false;
  return std::all_of(name.begin(), name.end(), [&](char c) {
    return (c >= 'a' && c <= 'z') || html::is_ascii_digit(c) || (allow_dash && c == '-');
  });
}

inline bool has_control(std::string_view s) {
  return std::any_of(s.begin(), s.end(), [](char c) {
    return static_cast<unsigned char>(c) < 0x20 || c == 0x7F;
  });
}

inline void check_value_generator(const ValueGenerator& g, bool is_text, const std::string& where) {
  if (g.kind == ValueKind::IdCounter) {
    if (is_text) throw Error(ErrorCode::InvalidGrammar, where + ": id-counter cannot generate text");
    if (!detail::valid_name(g.prefix, true))
      throw Error(ErrorCode::InvalidGrammar, where + ": bad id prefix '" + g.prefix + "'");
    return;
  }
  if (g.pool.empty()) throw Error(ErrorCode::InvalidGrammar, where + ": empty value pool");
  for (const auto& v : g.pool) {
    if (v.empty()) throw Error(ErrorCode::InvalidGrammar, where + ": empty value in pool");
    if (has_control(v)) throw Error(ErrorCode::InvalidGrammar, where + ": control character in '" + v + "'");
    if (v.find('<') != std::string::npos)
      throw Error(ErrorCode::InvalidGrammar, where + ": '<' in '" + v + "'");
    if (is_text) {
      for (std::size_t i = v.find('&'); i != std::string::npos; i = v.find('&', i + 1)) {
        if (html::charref_length(v, i) == 0)
          throw Error(ErrorCode::InvalidGrammar, where + ": bare '&' in '" + v + "'");
      }
    } else if (v.find_first_of("\"&>") != std::string::npos) {
      throw Error(ErrorCode::InvalidGrammar, where + ": attribute value '" + v + "' needs escaping");
    }
  }
}

}  // namespace detail

inline void TagGrammar::validate() const {
  if (tags.empty()) throw Error(ErrorCode::InvalidGrammar, "no tags");
  std::set<std::string> seen;
  bool any_non_void = false;
  for (const auto& t : tags) {
    if (!detail::valid_name(t.name, false))
      throw Error(ErrorCode::InvalidGrammar, "bad tag name '" + t.name + "'");
    if (!seen.insert(t.name).second)
      throw Error(ErrorCode::InvalidGrammar, "duplicate tag '" + t.name + "'");
    any_non_void |= !t.is_void;
  }
  for (const auto& x : excluded_tags) {
    if (seen.count(x)) throw Error(ErrorCode::InvalidGrammar, "excluded tag '" + x + "' is also usable");
  }
  std::set<std::string> attr_seen;
  std::size_t id_counters = 0;
  for (const auto& a : attributes) {
    if (!detail::valid_name(a.name, true))
      throw Error(ErrorCode::InvalidGrammar, "bad attribute name '" + a.name + "'");
    if (!attr_seen.insert(a.name).second)
      throw Error(ErrorCode::InvalidGrammar, "duplicate attribute '" + a.name + "'");
    if (a.value.kind == ValueKind::IdCounter) ++id_counters;
    detail::check_value_generator(a.value, false, "attribute " + a.name);
  }
  if (id_counters > 1) throw Error(ErrorCode::InvalidGrammar, "more than one id-counter attribute");
  if (any_non_void && inner_text.empty())
    throw Error(ErrorCode::InvalidGrammar, "non-void tags need an inner text pool");
  for (const auto& g : inner_text) detail::check_value_generator(g, true, "inner text");
  if (worst_case_line_length() > max_line_length) {
    throw Error(ErrorCode::InvalidGrammar,
                "worst-case line length " + std::to_string(worst_case_line_length()) +
                    " exceeds max_line_length " + std::to_string(max_line_length));
  }
}

namespace detail {

inline nlohmann::json generator_to_json(const ValueGenerator& g) {
  nlohmann::json j{{"kind", std::string(to_string(g.kind))}};
  if (g.kind == ValueKind::IdCounter) {
    j["prefix"] = g.prefix;
  } else {
    j["pool"] = g.pool;
  }
  return j;
}

inline ValueGenerator generator_from_json(const nlohmann::json& j) {
  ValueGenerator g;
  g.kind = value_kind_from_string(j.at("kind").get<std::string>());
  if (g.kind == ValueKind::IdCounter) {
    g.prefix = j.value("prefix", std::string("id"));
  } else if (j.contains("pool")) {
    g.pool = j.at("pool").get<std::vector<std::string>>();
  } else {
    g.pool = default_pool(g.kind);
  }
  return g;
}

}  // namespace detail

inline nlohmann::json TagGrammar::to_json() const {
  nlohmann::json j;
  j["format"] = "neurofuzz-grammar";
  j["version"] = 1;
  j["max_attributes_per_tag"] = max_attributes_per_tag;
  j["max_line_length"] = max_line_length;
  auto& jt = j["tags"] = nlohmann::json::array();
  for (const auto& t : tags) jt.push_back({{"name", t.name}, {"void", t.is_void}});
  j["excluded_tags"] = excluded_tags;
  auto& ja = j["attributes"] = nlohmann::json::array();
  for (const auto& a : attributes) {
    auto entry = detail::generator_to_json(a.value);
    entry["name"] = a.name;
    ja.push_back(entry);
  }
  auto& jx = j["inner_text"] = nlohmann::json::array();
  for (const auto& g : inner_text) jx.push_back(detail::generator_to_json(g));
  return j;
}

inline TagGrammar TagGrammar::from_json(const nlohmann::json& j) {
  try {
    if (j.value("version", 1) != 1)
      throw Error(ErrorCode::InvalidGrammar, "unsupported grammar version");
    TagGrammar g;
    g.max_attributes_per_tag = j.value("max_attributes_per_tag", std::size_t{6});
    g.max_line_length = j.value("max_line_length", std::size_t{512});
    for (const auto& t : j.at("tags")) g.tags.push_back({t.at("name").get<std::string>(), t.value("void", false)});
    g.excluded_tags = j.value("excluded_tags", std::vector<std::string>{});
    for (const auto& a : j.value("attributes", nlohmann::json::array()))
      g.attributes.push_back({a.at("name").get<std::string>(), detail::generator_from_json(a)});
    for (const auto& x : j.value("inner_text", nlohmann::json::array()))
      g.inner_text.push_back(detail::generator_from_json(x));
    g.validate();
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidGrammar, e.what());
  }
}

/// Default grammar: the tag and attribute inventory of the reference corpus
/// plus common HTML5 elements that need no enclosing context. Its character
/// set is printable ASCII, LF and eleven non-ASCII code points (107 total).
inline TagGrammar default_grammar() {
  TagGrammar g;
  for (std::string_view name :
       {"a",       "abbr",   "address", "article", "aside",  "b",       "bdi",    "bdo",
        "blockquote", "button", "cite",  "code",    "data",   "del",     "details", "dfn",
        "div",     "dl",     "em",      "fieldset", "figure", "footer", "form",   "h1",
        "h2",      "h3",     "h4",      "h5",      "h6",     "head",    "header", "i",
        "ins",     "kbd",    "label",   "main",    "mark",   "nav",     "ol",     "p",
        "pre",     "q",      "s",       "samp",    "section", "small",  "span",   "strong",
        "sub",     "summary", "sup",    "u",       "ul",     "var"}) {
    g.tags.push_back({std::string(name), false});
  }
  for (std::string_view name : {"br", "hr", "img", "input", "wbr"}) g.tags.push_back({std::string(name), true});

  g.excluded_tags = {"area", "caption", "col", "colgroup", "dd", "dt", "figcaption", "legend",
                     "li", "optgroup", "option", "param", "script", "source", "style", "tbody",
                     "td", "textarea", "tfoot", "th", "thead", "title", "tr", "track"};

  auto pool = [](ValueKind k, std::vector<std::string> values = {}) {
    ValueGenerator v;
    v.kind = k;
    v.pool = values.empty() ? default_pool(k) : std::move(values);
    return v;
  };
  ValueGenerator id;
  id.kind = ValueKind::IdCounter;
  g.attributes = {
      {"id", id},
      {"style", pool(ValueKind::FixedStringPool, {"style"})},
      {"class", pool(ValueKind::FixedStringPool,
                     {"style_class_0", "style_class_1", "style_class_2", "style_class_3", "style_class_4"})},
      {"title", pool(ValueKind::ScriptSnippetPool)},
      {"lang", pool(ValueKind::LanguageCodePool)},
      {"dir", pool(ValueKind::DirectionPair)},
      {"spellcheck", pool(ValueKind::BooleanPair)},
      {"translate", pool(ValueKind::FixedStringPool, {"yes", "no"})},
      {"contenteditable", pool(ValueKind::BooleanPair)},
      {"tabindex", pool(ValueKind::IntegerPool)},
      {"draggable", pool(ValueKind::BooleanPair)},
      {"accesskey", pool(ValueKind::FixedStringPool, {"a", "k", "q", "x", "z", "7"})},
  };

  g.inner_text = {
      pool(ValueKind::IntegerPool),
      pool(ValueKind::FloatPool),
      pool(ValueKind::FixedStringPool,
           {"null", "undefined", "true", "false", "BBBBBBBBBBBBBBBBBBBB", "AAAA",
            "Lorem ipsum dolor sit amet", "Lorem ipsum dolor sit amet, consectetur adipiscing elit",
            "The quick brown fox jumps over the lazy dog",
            "The five boxing wizards jump quickly over the lazy dog",
            "PACK MY BOX WITH FIVE DOZEN LIQUOR JUGS", "Sphinx of black quartz, judge my vow",
            "javascript:void(0)", "size: 100%", "\"quoted\"", "x > y", "a | b"}),
      pool(ValueKind::FixedStringPool,
           {"größe", "die Größe des Fensters", "ñandú", "el ñandú corre", "déjà vu", "čšž", "€100",
            "©2018", "&amp;", "&lt;", "&gt;", "&#169;", "&quot;"}),
      pool(ValueKind::ScriptSnippetPool),
  };
  return g;
}

/// Emits one tag. `serial` feeds the id-counter attribute; generate_corpus
/// passes the line index.
inline std::string generate_tag(const TagGrammar& grammar, RandomStream& rng, std::uint64_t serial = 0) {
  const TagSpec& tag = grammar.tags[rng.below(grammar.tags.size())];
  std::string out = "<" + tag.name;

  const std::size_t available = grammar.attributes.size();
  const std::size_t cap = std::min(grammar.max_attributes_per_tag, available);
  if (cap > 0) {
    const std::size_t count = 1 + rng.below(cap);
    std::vector<std::size_t> order(available);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::size_t fixed = 0;
    if (auto id = grammar.id_attribute()) {
      std::swap(order[0], order[*id]);
      fixed = 1;
    }
    // Partial Fisher-Yates over the non-id attributes.
    for (std::size_t i = fixed; i < count; ++i) {
      const std::size_t j = i + rng.below(available - i);
      std::swap(order[i], order[j]);
    }
    for (std::size_t i = 0; i < count; ++i) {
      const auto& attr = grammar.attributes[order[i]];
      out += ' ';
      out += attr.name;
      out += "=\"";
      out += attr.value.generate(rng, serial);
      out += '"';
    }
  }
  out += '>';
  if (!tag.is_void) {
    const auto& text = grammar.inner_text[rng.below(grammar.inner_text.size())];
    out += ' ';
    out += text.generate(rng, serial);
    out += " </";
    out += tag.name;
    out += '>';
  }
  return out;
}

struct Corpus {
  std::vector<std::string> lines;
  std::uint64_t byte_size = 0;
  std::string grammar_hash;
  std::uint64_t seed = 0;

  /// The corpus file: every line LF-terminated.
  std::string text() const {
    std::string out;
    out.reserve(byte_size);
    for (const auto& l : lines) {
      out += l;
      out += '\n';
    }
    return out;
  }

  static Corpus from_text(std::string_view text) {
    Corpus c;
    std::size_t pos = 0;
    while (pos < text.size()) {
      const std::size_t nl = text.find('\n', pos);
      const std::size_t end = nl == std::string_view::npos ? text.size() : nl;
      c.lines.emplace_back(text.substr(pos, end - pos));
      c.byte_size += end - pos + 1;
      pos = end + 1;
    }
    return c;
  }
};

inline Corpus generate_corpus(const TagGrammar& grammar, std::uint64_t n_tags, std::uint64_t seed) {
  grammar.validate();
  Corpus c;
  c.seed = seed;
  c.grammar_hash = grammar.hash();
  c.lines.reserve(n_tags);
  RandomStream rng(seed);
  for (std::uint64_t i = 0; i < n_tags; ++i) {
    c.lines.push_back(generate_tag(grammar, rng, i));
    c.byte_size += c.lines.back().size() + 1;
  }
  return c;
}

struct ByteRange {
  std::uint64_t begin = 0;
  std::uint64_t end = 0;

  std::uint64_t size() const { return end - begin; }
  bool overlaps(const ByteRange& o) const { return begin < o.end && o.begin < end; }
  auto operator<=>(const ByteRange&) const = default;
};

struct Split {
  ByteRange train;
  ByteRange validation;
  auto operator<=>(const Split&) const = default;
};

struct SplitSet {
  std::vector<Split> splits;
  std::size_t n_splits() const { return splits.size(); }
};

/// Draws `n_splits` distinct (train, validation) pairs of line-aligned byte
/// intervals. Each interval is the shortest run of whole lines holding at
/// least the requested number of bytes; within a split the two never overlap.
inline SplitSet make_splits(const Corpus& corpus, std::size_t n_splits, std::uint64_t train_bytes,
                            std::uint64_t val_bytes, std::uint64_t seed) {
  if (train_bytes + val_bytes > corpus.byte_size) {
    throw Error(ErrorCode::CorpusTooSmall, "train " + std::to_string(train_bytes) + " + validation " +
                                               std::to_string(val_bytes) + " bytes exceed corpus of " +
                                               std::to_string(corpus.byte_size));
  }
  const std::size_t n_lines = corpus.lines.size();
  std::vector<std::uint64_t> offset(n_lines + 1, 0);
  for (std::size_t i = 0; i < n_lines; ++i) offset[i + 1] = offset[i] + corpus.lines[i].size() + 1;

  // First line index e such that [start, e) holds at least `bytes`, or npos.
  auto run_end = [&](std::size_t start, std::uint64_t bytes) -> std::size_t {
    const auto it = std::lower_bound(offset.begin() + static_cast<std::ptrdiff_t>(start), offset.end(),
                                     offset[start] + bytes);
    if (it == offset.end()) return std::string::npos;
    return static_cast<std::size_t>(it - offset.begin());
  };
  // Last start s with run_end(s, bytes) <= limit, or npos when none exists.
  auto last_start_before = [&](std::size_t lo, std::size_t limit, std::uint64_t bytes) -> std::size_t {
    if (limit < lo || offset[limit] - offset[lo] < bytes) return std::string::npos;
    const auto it = std::upper_bound(offset.begin() + static_cast<std::ptrdiff_t>(lo),
                                     offset.begin() + static_cast<std::ptrdiff_t>(limit) + 1,
                                     offset[limit] - bytes);
    return static_cast<std::size_t>(it - offset.begin()) - 1;
  };

  struct Placement {
    std::size_t val_start, val_end, before_last, after_first, after_last;
    std::uint64_t options() const {
      std::uint64_t n = 0;
      if (before_last != std::string::npos) n += before_last + 1;
      if (after_last != std::string::npos) n += after_last - after_first + 1;
      return n;
    }
  };
  auto place = [&](std::size_t a) -> std::optional<Placement> {
    const std::size_t e = run_end(a, val_bytes);
    if (e == std::string::npos || e == a) return std::nullopt;
    Placement p{a, e, last_start_before(0, a, train_bytes), e, last_start_before(e, n_lines, train_bytes)};
    if (p.options() == 0) return std::nullopt;
    return p;
  };

  std::vector<std::size_t> eligible;
  for (std::size_t a = 0; a < n_lines; ++a)
    if (place(a)) eligible.push_back(a);
  if (eligible.empty()) throw Error(ErrorCode::CorpusTooSmall, "no line-aligned placement fits");

  RandomStream rng(seed);
  SplitSet set;
  const std::size_t max_attempts = 64 * (n_splits + 1);
  for (std::size_t attempt = 0; set.splits.size() < n_splits; ++attempt) {
    if (attempt >= max_attempts)
      throw Error(ErrorCode::CorpusTooSmall, "cannot draw " + std::to_string(n_splits) + " distinct splits");
    const Placement p = *place(eligible[rng.below(eligible.size())]);
    std::uint64_t pick = rng.below(p.options());
    std::size_t train_start;
    const std::uint64_t before = p.before_last == std::string::npos ? 0 : p.before_last + 1;
    if (pick < before) {
      train_start = static_cast<std::size_t>(pick);
    } else {
      train_start = p.after_first + static_cast<std::size_t>(pick - before);
    }
    const std::size_t train_end = run_end(train_start, train_bytes);
    Split s{{offset[train_start], offset[train_end]}, {offset[p.val_start], offset[p.val_end]}};
    if (std::find(set.splits.begin(), set.splits.end(), s) == set.splits.end()) set.splits.push_back(s);
  }
  return set;
}

}  // namespace neurofuzz

#endif  // NEUROFUZZ_CORPUS_GEN_HPP
