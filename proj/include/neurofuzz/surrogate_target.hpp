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

// Surrogate render target: a small instrumented HTML tokenizer that records
// which of its branch arms ran and reports them as basic blocks in a drcov
// log, plus a runner for external drcov-producing targets.

#ifndef NEUROFUZZ_SURROGATE_TARGET_HPP
#define NEUROFUZZ_SURROGATE_TARGET_HPP

#include <fcntl.h>
#include <signal.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <utility>
#include <vector>

#include "neurofuzz/corpus_gen.hpp"
#include "neurofuzz/coverage.hpp"
#include "neurofuzz/error.hpp"
#include "neurofuzz/generator.hpp"
#include "neurofuzz/hash.hpp"
#include "neurofuzz/html_lexicon.hpp"

namespace neurofuzz {

enum class TokState {
  Data,
  TagOpen,
  TagName,
  BeforeAttrName,
  AttrName,
  BeforeAttrValue,
  AttrValueQuoted,
  AttrValueUnquoted,
  AfterAttrValue,
  EndTagOpen,
  EndTagName,
  CharRef,
  BogusTag,
};
inline constexpr std::size_t kTokStateCount = 13;

inline constexpr std::string_view to_string(TokState s) {
  constexpr std::string_view names[] = {"Data",          "TagOpen",         "TagName",         "BeforeAttrName",
                                        "AttrName",      "BeforeAttrValue", "AttrValueQuoted", "AttrValueUnquoted",
                                        "AfterAttrValue", "EndTagOpen",     "EndTagName",      "CharRef",
                                        "BogusTag"};
  return names[static_cast<std::size_t>(s)];
}

enum class CharClass {
  Space, Lt, Gt, Slash, Bang, Question, Equals, DoubleQuote, SingleQuote,
  Ampersand, Hash, Semicolon, Backtick, Upper, Lower, Digit, OtherAscii, NonAscii,
};
inline constexpr std::size_t kCharClassCount = 18;

inline constexpr std::string_view to_string(CharClass c) {
  constexpr std::string_view names[] = {"space", "lt",    "gt",        "slash",    "bang",  "question",
                                        "equals", "dquote", "squote",  "amp",      "hash",  "semicolon",
                                        "backtick", "upper", "lower",  "digit",    "other", "nonascii"};
  return names[static_cast<std::size_t>(c)];
}

inline CharClass classify(unsigned char c) {
  switch (c) {
    case ' ': case '\t': case '\n': case '\f': case '\r': return CharClass::Space;
    case '<': return CharClass::Lt;
    case '>': return CharClass::Gt;
    case '/': return CharClass::Slash;
    case '!': return CharClass::Bang;
    case '?': return CharClass::Question;
    case '=': return CharClass::Equals;
    case '"': return CharClass::DoubleQuote;
    case '\'': return CharClass::SingleQuote;
    case '&': return CharClass::Ampersand;
    case '#': return CharClass::Hash;
    case ';': return CharClass::Semicolon;
    case '`': return CharClass::Backtick;
    default: break;
  }
  if (c >= 0x80) return CharClass::NonAscii;
  if (c >= 'A' && c <= 'Z') return CharClass::Upper;
  if (c >= 'a' && c <= 'z') return CharClass::Lower;
  if (c >= '0' && c <= '9') return CharClass::Digit;
  return CharClass::OtherAscii;
}

enum class ArmKind { Entry, Eof, Transition, Dispatch, Structure, Recovery };

struct SurrogateArm {
  std::string name;
  ArmKind kind;
  bool at_eof = false;  // only reachable when the input ends
};

/// The frozen arm table. Arm i lives at offset 0x1000 + 16 * i.
class StaticBlockMap {
 public:
  static constexpr std::uint32_t kVersion = 1;
  static constexpr std::uint32_t kBaseOffset = 0x1000;
  static constexpr std::uint16_t kBlockSize = 16;
  static constexpr std::string_view kModule = "surrogate_renderer";

  static const StaticBlockMap& instance() {
    static const StaticBlockMap map;
    return map;
  }

  std::size_t size() const { return arms_.size(); }
  const SurrogateArm& arm(std::size_t i) const { return arms_.at(i); }
  std::uint32_t offset(std::size_t i) const { return kBaseOffset + static_cast<std::uint32_t>(16 * i); }

  std::size_t id(std::string_view name) const {
    const auto it = index_.find(std::string(name));
    if (it == index_.end()) throw Error(ErrorCode::InvalidConfig, "no surrogate arm named " + std::string(name));
    return it->second;
  }
  std::size_t find(std::string_view name, std::size_t fallback) const {
    const auto it = index_.find(std::string(name));
    return it == index_.end() ? fallback : it->second;
  }
  std::size_t transition(TokState s, CharClass c) const {
    return transitions_ + static_cast<std::size_t>(s) * kCharClassCount + static_cast<std::size_t>(c);
  }
  std::size_t eof_in(TokState s) const { return eof_states_ + static_cast<std::size_t>(s); }

  /// Order-sensitive digest of the table, pinned by tests.
  std::string digest() const {
    Sha256 h;
    for (const auto& a : arms_) h.update_field(a.name);
    return h.finish_hex();
  }

  const TagGrammar& grammar() const { return grammar_; }

 private:
  StaticBlockMap() : grammar_(default_grammar()) {
    add("entry", ArmKind::Entry);
    add("eof", ArmKind::Eof, true);
    eof_states_ = arms_.size();
    for (std::size_t s = 0; s < kTokStateCount; ++s)
      add("eof." + std::string(to_string(static_cast<TokState>(s))), ArmKind::Eof, true);
    transitions_ = arms_.size();
    for (std::size_t s = 0; s < kTokStateCount; ++s)
      for (std::size_t c = 0; c < kCharClassCount; ++c)
        add("trans." + std::string(to_string(static_cast<TokState>(s))) + "." +
                std::string(to_string(static_cast<CharClass>(c))),
            ArmKind::Transition);

    for (std::string_view n : {"data.text", "data.whitespace", "data.ampersand", "attr.value.ampersand", "attr.structural",
                               "tag.start", "tag.end", "endtag.match", "tag.push", "tag.void"})
      add(std::string(n), ArmKind::Dispatch);
    for (const auto& t : grammar_.tags) add("tag." + t.name, ArmKind::Dispatch);
    for (const auto& t : grammar_.tags) add("endtag." + t.name, ArmKind::Dispatch);
    for (const auto& a : grammar_.attributes) {
      add("attr." + a.name, ArmKind::Dispatch);
      const auto k = a.value.kind;
      if (k == ValueKind::FixedStringPool || k == ValueKind::BooleanPair || k == ValueKind::DirectionPair ||
          k == ValueKind::LanguageCodePool) {
        for (const auto& v : a.value.pool) add("attr." + a.name + ".value." + v, ArmKind::Dispatch);
        add("attr." + a.name + ".value.other", ArmKind::Dispatch);
      }
    }
    for (auto e : html::kNamedEntities) add("charref.named." + std::string(e), ArmKind::Dispatch);
    add("charref.numeric", ArmKind::Dispatch);

    for (std::string_view n : {"structure.html.open", "structure.head.open", "structure.meta",
                               "structure.head.close", "structure.body.open", "structure.body.close",
                               "structure.html.close"})
      add(std::string(n), ArmKind::Structure);

    for (const auto& t : grammar_.excluded_tags) add("recovery.context_tag." + t, ArmKind::Recovery);
    for (std::string_view n :
         {"recovery.unknown_tag", "recovery.unknown_end_tag", "recovery.unknown_attribute",
          "recovery.duplicate_attribute", "recovery.valueless_attribute", "recovery.missing_attribute_value",
          "recovery.unquoted_value", "recovery.single_quoted_value", "recovery.space_around_equals",
          "recovery.unexpected_equals", "recovery.unexpected_char_in_attr_name",
          "recovery.unexpected_char_in_unquoted_value", "recovery.missing_whitespace_between_attributes",
          "recovery.solidus_in_tag", "recovery.end_tag_with_attributes", "recovery.missing_end_tag_name",
          "recovery.bogus_end_tag", "recovery.markup_declaration", "recovery.processing_instruction",
          "recovery.invalid_first_char_of_tag_name", "recovery.stray_end_tag", "recovery.implied_close",
          "recovery.bare_text", "recovery.unknown_named_charref", "recovery.invalid_numeric_charref",
          "recovery.misplaced_html", "recovery.misplaced_body", "recovery.misplaced_meta",
          "recovery.misplaced_end_html", "recovery.misplaced_end_body", "recovery.body_close_with_open_elements",
          "recovery.stack_overflow", "recovery.nul_character"})
      add(std::string(n), ArmKind::Recovery);
    add("recovery.eof_in_tag", ArmKind::Recovery, true);
    add("recovery.eof_with_open_elements", ArmKind::Recovery, true);
  }

  void add(std::string name, ArmKind kind, bool at_eof = false) {
    if (!index_.emplace(name, arms_.size()).second) return;  // duplicate pool values map to one arm
    arms_.push_back({std::move(name), kind, at_eof});
  }

  TagGrammar grammar_;
  std::vector<SurrogateArm> arms_;
  std::unordered_map<std::string, std::size_t> index_;
  std::size_t transitions_ = 0;
  std::size_t eof_states_ = 0;
};

enum class TokenKind { StartTag, EndTag, Text, CharRef, Bogus };

struct Token {
  TokenKind kind;
  std::string name;  // tag name, or the reference text for CharRef
  std::vector<std::pair<std::string, std::string>> attributes;
  std::string text;
};

struct TokenizeResult {
  std::vector<Token> tokens;
  std::vector<std::size_t> arms;  // distinct arm ids in first-hit order
  std::size_t streaming_arms = 0;  // arms[0, streaming_arms) were hit before end of input
  TokState final_state = TokState::Data;
  std::size_t open_elements = 0;
  bool document_started = false;  // an html/head/body structure token was seen

  BlockSet blocks() const {
    const auto& map = StaticBlockMap::instance();
    std::vector<BlockId> ids;
    for (auto a : arms) ids.push_back({std::string(StaticBlockMap::kModule), map.offset(a)});
    return BlockSet(std::move(ids));
  }
  bool hit(std::string_view arm) const {
    const auto id = StaticBlockMap::instance().id(arm);
    return std::find(arms.begin(), arms.end(), id) != arms.end();
  }
};

namespace detail {

class SurrogateTokenizer {
 public:
  explicit SurrogateTokenizer(std::string_view input) : in_(input), map_(StaticBlockMap::instance()) {
    seen_.assign(map_.size(), 0);
  }

  TokenizeResult run() {
    mark("entry");
    while (pos_ < in_.size()) {
      const auto c = static_cast<unsigned char>(in_[pos_]);
      hit(map_.transition(state_, classify(c)));
      if (c == 0) mark("recovery.nul_character");
      if (step(c)) ++pos_;
    }
    finish();
    res_.final_state = final_state_;
    res_.open_elements = stack_.size();
    res_.document_started = phase_ != Phase::Initial;
    return std::move(res_);
  }

 private:
  enum class Phase { Initial, InHtml, InHead, AfterHead, InBody, AfterBody, AfterHtml };
  static constexpr std::size_t kMaxDepth = 256;
  static constexpr std::size_t kMaxCharRef = 32;

  void hit(std::size_t id) {
    if (!seen_[id]) {
      seen_[id] = 1;
      res_.arms.push_back(id);
    }
  }
  void mark(std::string_view name) { hit(map_.id(name)); }

  static bool is_space(unsigned char c) { return classify(c) == CharClass::Space; }

  void flush_text() {
    if (!text_.empty()) {
      res_.tokens.push_back({TokenKind::Text, "", {}, std::move(text_)});
      text_.clear();
    }
  }

  // Returns true when the character was consumed, false to reprocess it in
  // the new state.
  bool step(unsigned char c) {
    switch (state_) {
      case TokState::Data:
        if (c == '<') {
          state_ = TokState::TagOpen;
        } else if (c == '&') {
          begin_charref(TokState::Data);
        } else {
          if (is_space(c)) {
            mark("data.whitespace");
          } else {
            mark("data.text");
            if (stack_.empty()) mark("recovery.bare_text");
          }
          text_.push_back(static_cast<char>(c));
        }
        return true;

      case TokState::TagOpen:
        if (html::is_ascii_alpha(static_cast<char>(c))) {
          begin_tag(false);
          state_ = TokState::TagName;
          return false;
        }
        if (c == '/') {
          state_ = TokState::EndTagOpen;
        } else if (c == '!') {
          mark("recovery.markup_declaration");
          state_ = TokState::BogusTag;
        } else if (c == '?') {
          mark("recovery.processing_instruction");
          state_ = TokState::BogusTag;
        } else {
          mark("recovery.invalid_first_char_of_tag_name");
          if (stack_.empty()) mark("recovery.bare_text");
          text_.push_back('<');
          state_ = TokState::Data;
          return false;
        }
        return true;

      case TokState::EndTagOpen:
        if (html::is_ascii_alpha(static_cast<char>(c))) {
          begin_tag(true);
          state_ = TokState::EndTagName;
          return false;
        }
        if (c == '>') {
          mark("recovery.missing_end_tag_name");
          state_ = TokState::Data;
        } else {
          mark("recovery.bogus_end_tag");
          state_ = TokState::BogusTag;
        }
        return true;

      case TokState::TagName:
      case TokState::EndTagName:
        if (is_space(c)) {
          state_ = TokState::BeforeAttrName;
        } else if (c == '/') {
          mark("recovery.solidus_in_tag");
          state_ = TokState::BeforeAttrName;
        } else if (c == '>') {
          emit_tag();
        } else {
          tag_.name.push_back(html::to_lower(static_cast<char>(c)));
        }
        return true;

      case TokState::BeforeAttrName:
        if (is_space(c)) return true;
        if (c == '=' && pending_valueless_) {
          mark("recovery.space_around_equals");
          pending_valueless_ = false;
          state_ = TokState::BeforeAttrValue;
          return true;
        }
        if (pending_valueless_) {
          mark("recovery.valueless_attribute");
          pending_valueless_ = false;
        }
        if (c == '>') {
          emit_tag();
        } else if (c == '/') {
          mark("recovery.solidus_in_tag");
        } else {
          if (c == '=') mark("recovery.unexpected_equals");
          if (c == '"' || c == '\'' || c == '<') mark("recovery.unexpected_char_in_attr_name");
          attr_name_.assign(1, html::to_lower(static_cast<char>(c)));
          attr_value_.clear();
          state_ = TokState::AttrName;
        }
        return true;

      case TokState::AttrName:
        if (is_space(c)) {
          finish_attr_name();
          pending_valueless_ = true;
          state_ = TokState::BeforeAttrName;
        } else if (c == '/' || c == '>') {
          finish_attr_name();
          mark("recovery.valueless_attribute");
          commit_attr(false);
          state_ = TokState::BeforeAttrName;
          return false;
        } else if (c == '=') {
          finish_attr_name();
          state_ = TokState::BeforeAttrValue;
        } else {
          if (c == '"' || c == '\'' || c == '<') mark("recovery.unexpected_char_in_attr_name");
          attr_name_.push_back(html::to_lower(static_cast<char>(c)));
        }
        return true;

      case TokState::BeforeAttrValue:
        if (is_space(c)) {
          mark("recovery.space_around_equals");
        } else if (c == '"') {
          quote_ = '"';
          state_ = TokState::AttrValueQuoted;
        } else if (c == '\'') {
          mark("recovery.single_quoted_value");
          quote_ = '\'';
          state_ = TokState::AttrValueQuoted;
        } else if (c == '>') {
          mark("recovery.missing_attribute_value");
          commit_attr(false);
          emit_tag();
        } else {
          mark("recovery.unquoted_value");
          state_ = TokState::AttrValueUnquoted;
          return false;
        }
        return true;

      case TokState::AttrValueQuoted:
        if (c == static_cast<unsigned char>(quote_)) {
          commit_attr(true);
          state_ = TokState::AfterAttrValue;
        } else if (c == '&') {
          begin_charref(TokState::AttrValueQuoted);
        } else {
          attr_value_.push_back(static_cast<char>(c));
        }
        return true;

      case TokState::AttrValueUnquoted:
        if (is_space(c)) {
          commit_attr(true);
          state_ = TokState::BeforeAttrName;
        } else if (c == '>') {
          commit_attr(true);
          emit_tag();
        } else if (c == '&') {
          begin_charref(TokState::AttrValueUnquoted);
        } else {
          if (c == '"' || c == '\'' || c == '<' || c == '=' || c == '`')
            mark("recovery.unexpected_char_in_unquoted_value");
          attr_value_.push_back(static_cast<char>(c));
        }
        return true;

      case TokState::AfterAttrValue:
        if (is_space(c)) {
          state_ = TokState::BeforeAttrName;
        } else if (c == '>') {
          emit_tag();
        } else if (c == '/') {
          mark("recovery.solidus_in_tag");
          state_ = TokState::BeforeAttrName;
        } else {
          mark("recovery.missing_whitespace_between_attributes");
          state_ = TokState::BeforeAttrName;
          return false;
        }
        return true;

      case TokState::CharRef:
        return charref_step(c);

      case TokState::BogusTag:
        if (c == '>') {
          res_.tokens.push_back({TokenKind::Bogus, "", {}, std::move(bogus_)});
          bogus_.clear();
          state_ = TokState::Data;
        } else {
          bogus_.push_back(static_cast<char>(c));
        }
        return true;
    }
    return true;
  }

  // ---- character references ----

  void begin_charref(TokState back) {
    ref_return_ = back;
    ref_.clear();
    state_ = TokState::CharRef;
  }

  bool charref_step(unsigned char c) {
    const bool numeric = !ref_.empty() && ref_[0] == '#';
    if (c == ';' && !ref_.empty() && ref_ != "#") {
      resolve_charref();
      state_ = ref_return_;
      return true;
    }
    const bool ok = (ref_.empty() && c == '#') || (numeric && html::is_ascii_digit(static_cast<char>(c))) ||
                    (!numeric && html::is_ascii_alnum(static_cast<char>(c)));
    if (ok && ref_.size() < kMaxCharRef) {
      ref_.push_back(static_cast<char>(c));
      return true;
    }
    abandon_charref();
    return false;
  }

  void resolve_charref() {
    if (ref_[0] == '#') {
      std::uint64_t v = 0;
      for (std::size_t i = 1; i < ref_.size() && v <= 0x10FFFF; ++i) v = v * 10 + static_cast<unsigned>(ref_[i] - '0');
      if (v == 0 || v > 0x10FFFF || (v >= 0xD800 && v <= 0xDFFF)) {
        mark("recovery.invalid_numeric_charref");
      } else {
        mark("charref.numeric");
      }
    } else if (html::is_named_entity(ref_)) {
      mark("charref.named." + ref_);
    } else {
      mark("recovery.unknown_named_charref");
    }
    if (ref_return_ == TokState::Data) {
      flush_text();
      res_.tokens.push_back({TokenKind::CharRef, "&" + ref_ + ";", {}, {}});
    } else {
      attr_value_ += "&" + ref_ + ";";
    }
  }

  // '&' that does not start a reference: keep it as literal text.
  void abandon_charref() {
    if (ref_return_ == TokState::Data) {
      mark("data.ampersand");
      if (stack_.empty()) mark("recovery.bare_text");
      text_ += "&" + ref_;
    } else {
      mark("attr.value.ampersand");
      attr_value_ += "&" + ref_;
    }
    state_ = ref_return_;
  }

  // ---- tags ----

  void begin_tag(bool end) {
    flush_text();
    tag_ = Token{end ? TokenKind::EndTag : TokenKind::StartTag, "", {}, {}};
    pending_valueless_ = false;
  }

  void finish_attr_name() {
    if (tag_.kind == TokenKind::EndTag) mark("recovery.end_tag_with_attributes");
    const auto& g = map_.grammar();
    if (tag_.kind == TokenKind::StartTag && is_structural(tag_.name)) {
      mark("attr.structural");
      return;
    }
    if (!g.find_attribute(attr_name_)) mark("recovery.unknown_attribute");
    else mark("attr." + attr_name_);
    for (const auto& a : tag_.attributes)
      if (a.first == attr_name_) mark("recovery.duplicate_attribute");
  }

  static bool is_structural(std::string_view name) {
    return name == "html" || name == "meta" || name == "body";
  }

  void commit_attr(bool has_value) {
    if (has_value && map_.grammar().find_attribute(attr_name_)) {
      const auto generic = map_.find("attr." + attr_name_ + ".value.other", SIZE_MAX);
      if (generic != SIZE_MAX) hit(map_.find("attr." + attr_name_ + ".value." + attr_value_, generic));
    }
    tag_.attributes.emplace_back(std::move(attr_name_), std::move(attr_value_));
    attr_name_.clear();
    attr_value_.clear();
  }

  void emit_tag() {
    if (pending_valueless_) {
      mark("recovery.valueless_attribute");
      pending_valueless_ = false;
    }
    state_ = TokState::Data;
    if (tag_.kind == TokenKind::StartTag) {
      mark("tag.start");
      start_tag(tag_.name);
    } else {
      mark("tag.end");
      end_tag(tag_.name);
    }
    res_.tokens.push_back(std::move(tag_));
    tag_ = Token{TokenKind::StartTag, "", {}, {}};
  }

  void push(const std::string& name) {
    if (stack_.size() >= kMaxDepth) {
      mark("recovery.stack_overflow");
      return;
    }
    mark("tag.push");
    stack_.push_back(name);
  }

  void start_tag(const std::string& name) {
    const auto& g = map_.grammar();
    if (name == "html") {
      if (phase_ == Phase::Initial) {
        mark("structure.html.open");
        phase_ = Phase::InHtml;
      } else {
        mark("recovery.misplaced_html");
      }
      return;
    }
    if (name == "head" && phase_ == Phase::InHtml) {
      mark("structure.head.open");
      phase_ = Phase::InHead;
      return;
    }
    if (name == "meta") {
      mark(phase_ == Phase::InHead ? "structure.meta" : "recovery.misplaced_meta");
      return;
    }
    if (name == "body") {
      if (phase_ == Phase::AfterHead) {
        mark("structure.body.open");
        phase_ = Phase::InBody;
      } else {
        mark("recovery.misplaced_body");
      }
      return;
    }
    if (const TagSpec* spec = g.find_tag(name)) {
      mark("tag." + name);
      if (spec->is_void) {
        mark("tag.void");
      } else {
        push(name);
      }
      return;
    }
    if (std::find(g.excluded_tags.begin(), g.excluded_tags.end(), name) != g.excluded_tags.end()) {
      mark("recovery.context_tag." + name);
    } else {
      mark("recovery.unknown_tag");
    }
    push(name);
  }

  void end_tag(const std::string& name) {
    const auto& g = map_.grammar();
    if (name == "html") {
      if (phase_ == Phase::AfterBody) {
        mark("structure.html.close");
        phase_ = Phase::AfterHtml;
      } else {
        mark("recovery.misplaced_end_html");
      }
      return;
    }
    if (name == "body") {
      if (phase_ == Phase::InBody) {
        if (!stack_.empty()) mark("recovery.body_close_with_open_elements");
        stack_.clear();
        mark("structure.body.close");
        phase_ = Phase::AfterBody;
      } else {
        mark("recovery.misplaced_end_body");
      }
      return;
    }
    if (name == "head" && phase_ == Phase::InHead) {
      mark("structure.head.close");
      phase_ = Phase::AfterHead;
      return;
    }
    if (!g.find_tag(name)) {
      mark("recovery.unknown_end_tag");
      pop_to(name);
      return;
    }
    mark("endtag." + name);
    if (!stack_.empty() && stack_.back() == name) {
      mark("endtag.match");
      stack_.pop_back();
    } else if (pop_to(name)) {
      mark("recovery.implied_close");
    } else {
      mark("recovery.stray_end_tag");
    }
  }

  bool pop_to(const std::string& name) {
    for (std::size_t i = stack_.size(); i-- > 0;) {
      if (stack_[i] == name) {
        stack_.resize(i);
        return true;
      }
    }
    return false;
  }

  void finish() {
    res_.streaming_arms = res_.arms.size();
    final_state_ = state_;
    hit(map_.eof_in(state_));
    switch (state_) {
      case TokState::Data:
        break;
      case TokState::CharRef:
        abandon_charref();
        break;
      case TokState::TagOpen:
        text_.push_back('<');
        break;
      default:
        mark("recovery.eof_in_tag");
        break;
    }
    flush_text();
    if (!stack_.empty()) mark("recovery.eof_with_open_elements");
    mark("eof");
  }

  std::string_view in_;
  const StaticBlockMap& map_;
  std::vector<std::uint8_t> seen_;
  TokenizeResult res_;
  std::size_t pos_ = 0;
  TokState state_ = TokState::Data;
  TokState final_state_ = TokState::Data;
  Phase phase_ = Phase::Initial;
  std::vector<std::string> stack_;
  Token tag_{TokenKind::StartTag, "", {}, {}};
  std::string attr_name_, attr_value_, text_, bogus_, ref_;
  bool pending_valueless_ = false;
  char quote_ = '"';
  TokState ref_return_ = TokState::Data;
};

}  // namespace detail

/// Tokenizes arbitrary bytes and records the arms taken. Never throws on
/// malformed input.
inline TokenizeResult tokenize_instrumented(std::string_view html) {
  return detail::SurrogateTokenizer(html).run();
}

inline bool is_recovery_arm(std::size_t id) {
  return StaticBlockMap::instance().arm(id).kind == ArmKind::Recovery;
}

/// Fixed blocks of a second module present in every surrogate log, so that
/// module filtering is exercised.
inline constexpr std::string_view kSurrogateRuntimeModule = "/lib/x86_64-linux-gnu/libc.so.6";

inline CoverageLog surrogate_log(const TokenizeResult& r) {
  const auto& map = StaticBlockMap::instance();
  CoverageLog log;
  log.flavor = "drcov";
  ModuleEntry renderer;
  renderer.id = 0;
  renderer.base = 0x00007f3a10000000ULL;
  renderer.end = renderer.base + map.offset(map.size()) + 0x1000;
  renderer.path = std::string(StaticBlockMap::kModule);
  ModuleEntry libc;
  libc.id = 1;
  libc.base = 0x00007f3a20000000ULL;
  libc.end = libc.base + 0x1d8000;
  libc.path = std::string(kSurrogateRuntimeModule);
  log.modules = {renderer, libc};
  for (std::uint32_t off : {0x28000u, 0x28040u, 0x2a3f0u, 0x9a110u}) log.blocks.push_back({off, 32, 1});
  for (auto a : r.arms) log.blocks.push_back({map.offset(a), StaticBlockMap::kBlockSize, 0});
  return log;
}

/// Runs the surrogate on one HTML document; returns drcov bytes.
inline std::string run_case(std::string_view html) { return write_drcov(surrogate_log(tokenize_instrumented(html))); }
inline std::string run_case(const TestCase& c) { return run_case(c.rendered_html); }

// ---- external targets --------------------------------------------------------

inline std::string shell_quote(std::string_view s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') out += "'\\''";
    else out.push_back(c);
  }
  return out + "'";
}

/// Substitutes {case} and {out} with shell-quoted paths.
inline std::string expand_command(std::string tpl, const std::filesystem::path& case_path,
                                  const std::filesystem::path& out_dir) {
  auto replace_all = [&](std::string_view key, const std::string& value) {
    for (std::size_t p = tpl.find(key); p != std::string::npos; p = tpl.find(key, p + value.size()))
      tpl.replace(p, key.size(), value);
  };
  replace_all("{case}", shell_quote(case_path.string()));
  replace_all("{out}", shell_quote(out_dir.string()));
  return tpl;
}

namespace detail {

inline bool looks_like_drcov(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  char buf[13] = {};
  in.read(buf, 13);
  return in.gcount() == 13 && std::string_view(buf, 13) == "DRCOV VERSION";
}

inline std::vector<std::filesystem::path> drcov_files_since(const std::filesystem::path& dir,
                                                            std::filesystem::file_time_type since) {
  std::vector<std::filesystem::path> out;
  std::error_code ec;
  for (const auto& e : std::filesystem::directory_iterator(dir, ec)) {
    if (!e.is_regular_file()) continue;
    if (e.last_write_time() < since) continue;
    if (looks_like_drcov(e.path())) out.push_back(e.path());
  }
  return out;
}

}  // namespace detail

/// Spawns `command_template` through /bin/sh in its own process group,
/// waits up to `timeout`, and parses the newest drcov log it left in
/// `drcov_output_dir`. On timeout the whole group is killed and any logs
/// it wrote are removed.
inline CoverageLog run_external(const std::string& command_template, const std::filesystem::path& case_path,
                                const std::filesystem::path& drcov_output_dir, std::chrono::milliseconds timeout) {
  if (command_template.empty()) throw Error(ErrorCode::InvalidConfig, "empty external command");
  std::filesystem::create_directories(drcov_output_dir);
  const auto since = std::filesystem::file_time_type::clock::now() - std::chrono::seconds(1);
  const auto before = detail::drcov_files_since(drcov_output_dir, std::filesystem::file_time_type::min());
  const std::string command = expand_command(command_template, case_path, drcov_output_dir);

  const pid_t pid = fork();
  if (pid < 0) throw Error(ErrorCode::SpawnFailed, "fork failed");
  if (pid == 0) {
    setpgid(0, 0);
    const int devnull = open("/dev/null", O_RDWR);
    if (devnull >= 0) {
      dup2(devnull, STDIN_FILENO);
      dup2(devnull, STDOUT_FILENO);
    }
    execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }
  setpgid(pid, pid);
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  int status = 0;
  for (;;) {
    const pid_t w = waitpid(pid, &status, WNOHANG);
    if (w == pid) break;
    if (w < 0) throw Error(ErrorCode::SpawnFailed, "waitpid failed");
    if (std::chrono::steady_clock::now() >= deadline) {
      kill(-pid, SIGKILL);
      kill(pid, SIGKILL);
      waitpid(pid, &status, 0);
      for (const auto& f : detail::drcov_files_since(drcov_output_dir, since))
        if (std::find(before.begin(), before.end(), f) == before.end()) std::filesystem::remove(f);
      throw Error(ErrorCode::Timeout, "command exceeded " + std::to_string(timeout.count()) + " ms: " + command);
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  if (WIFEXITED(status) && WEXITSTATUS(status) == 127)
    throw Error(ErrorCode::SpawnFailed, "command could not be executed: " + command);

  auto logs = detail::drcov_files_since(drcov_output_dir, since);
  std::erase_if(logs, [&](const auto& f) { return std::find(before.begin(), before.end(), f) != before.end(); });
  if (logs.empty()) throw Error(ErrorCode::NoLogProduced, "no drcov log appeared in " + drcov_output_dir.string());
  const auto newest = *std::max_element(logs.begin(), logs.end(), [](const auto& a, const auto& b) {
    const auto ta = std::filesystem::last_write_time(a), tb = std::filesystem::last_write_time(b);
    return ta < tb || (ta == tb && a < b);
  });
  return parse_drcov(read_file(newest));
}

}  // namespace neurofuzz

#endif  // NEUROFUZZ_SURROGATE_TARGET_HPP
