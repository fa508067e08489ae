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

// Tag validator and the per-tag error-rate metric.
//
// A line is read the way the corpus writes it: an opening tag, attributes of
// the form name="value", optional text, and closing tags. Each independent
// defect yields one finding. Nesting by itself is not a defect; a closing tag
// that does not close the innermost open element is.

#ifndef NEUROFUZZ_ANALYSIS_HPP
#define NEUROFUZZ_ANALYSIS_HPP

#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "neurofuzz/corpus_gen.hpp"
#include "neurofuzz/error.hpp"
#include "neurofuzz/html_lexicon.hpp"

namespace neurofuzz {

enum class FindingKind {
  UnknownTagName,
  UnknownAttributeName,
  MalformedAttributeSyntax,
  MismatchedClosingTag,
  MissingClosingDelimiter,
  UnknownClosingTagName,
};

inline constexpr std::string_view to_string(FindingKind k) {
  switch (k) {
    case FindingKind::UnknownTagName: return "UnknownTagName";
    case FindingKind::UnknownAttributeName: return "UnknownAttributeName";
    case FindingKind::MalformedAttributeSyntax: return "MalformedAttributeSyntax";
    case FindingKind::MismatchedClosingTag: return "MismatchedClosingTag";
    case FindingKind::MissingClosingDelimiter: return "MissingClosingDelimiter";
    case FindingKind::UnknownClosingTagName: return "UnknownClosingTagName";
  }
  return "?";
}

struct TagFinding {
  FindingKind kind;
  std::string subject;  // offending name, if any
  std::size_t position;  // byte offset in the tag
};

struct TagErrorReport {
  std::string tag;
  std::vector<TagFinding> errors;

  std::size_t count() const { return errors.size(); }
  std::size_t count(FindingKind k) const {
    std::size_t n = 0;
    for (const auto& e : errors) n += e.kind == k;
    return n;
  }
};

namespace detail {

class TagValidator {
 public:
  TagValidator(std::string_view line, const TagGrammar& grammar) : s_(line), g_(grammar) {}

  std::vector<TagFinding> run() {
    if (!(s_.size() >= 2 && s_[0] == '<' && html::is_ascii_alpha(s_[1]))) {
      add(FindingKind::UnknownTagName, "", 0);
    }
    while (pos_ < s_.size()) {
      const std::size_t lt = s_.find('<', pos_);
      if (lt == std::string_view::npos) break;
      pos_ = lt;
      if (lt + 1 < s_.size() && html::is_ascii_alpha(s_[lt + 1])) {
        if (!open_tag()) break;
      } else if (lt + 1 < s_.size() && s_[lt + 1] == '/') {
        if (!close_tag()) break;
      } else {
        ++pos_;  // literal '<' in text
      }
    }
    return std::move(findings_);
  }

 private:
  static bool name_end(char c) { return html::is_space(c) || c == '/' || c == '>'; }

  void add(FindingKind k, std::string subject, std::size_t at) {
    findings_.push_back({k, std::move(subject), at});
  }

  std::string read_name(bool stop_at_equals) {
    const std::size_t start = pos_;
    if (stop_at_equals && pos_ < s_.size() && s_[pos_] == '=') ++pos_;
    while (pos_ < s_.size() && !name_end(s_[pos_]) && !(stop_at_equals && s_[pos_] == '=')) ++pos_;
    return html::lowercase(s_.substr(start, pos_ - start));
  }

  // Returns false once the rest of the line has been consumed.
  bool open_tag() {
    const std::size_t at = pos_;
    ++pos_;
    const std::string name = read_name(false);
    const TagSpec* spec = g_.find_tag(name);
    if (!spec) add(FindingKind::UnknownTagName, name, at + 1);

    bool separated = true;
    while (true) {
      const std::size_t before_ws = pos_;
      while (pos_ < s_.size() && html::is_space(s_[pos_])) ++pos_;
      if (pos_ > before_ws) separated = true;
      if (pos_ >= s_.size()) {
        add(FindingKind::MissingClosingDelimiter, name, pos_);
        return false;
      }
      const char c = s_[pos_];
      if (c == '>') {
        ++pos_;
        break;
      }
      if (c == '/') {
        add(FindingKind::MalformedAttributeSyntax, "/", pos_);
        ++pos_;
        separated = true;
        continue;
      }
      if (!separated) add(FindingKind::MalformedAttributeSyntax, "", pos_);
      if (!attribute()) return false;
      separated = false;
    }
    if (!spec || !spec->is_void) stack_.push_back(name);
    return true;
  }

  // One attribute starting at pos_. Returns false if an unterminated quote
  // swallowed the rest of the line.
  bool attribute() {
    const std::size_t at = pos_;
    const std::string name = read_name(true);
    if (!g_.find_attribute(name)) add(FindingKind::UnknownAttributeName, name, at);
    if (pos_ >= s_.size() || s_[pos_] != '=') {
      add(FindingKind::MalformedAttributeSyntax, name, pos_);
      return true;
    }
    ++pos_;
    if (pos_ < s_.size() && s_[pos_] == '"') {
      const std::size_t close = s_.find('"', pos_ + 1);
      if (close == std::string_view::npos) {
        add(FindingKind::MalformedAttributeSyntax, name, pos_);
        pos_ = s_.size();
        return false;
      }
      pos_ = close + 1;
      return true;
    }
    add(FindingKind::MalformedAttributeSyntax, name, pos_);
    if (pos_ < s_.size() && s_[pos_] == '\'') {
      const std::size_t close = s_.find('\'', pos_ + 1);
      if (close == std::string_view::npos) {
        pos_ = s_.size();
        return false;
      }
      pos_ = close + 1;
    } else {
      while (pos_ < s_.size() && !html::is_space(s_[pos_]) && s_[pos_] != '>') ++pos_;
    }
    return true;
  }

  bool close_tag() {
    const std::size_t at = pos_;
    pos_ += 2;
    const std::string name = read_name(false);
    if (name.empty()) {
      add(FindingKind::UnknownClosingTagName, "", at + 2);
    } else if (!g_.find_tag(name)) {
      add(FindingKind::UnknownClosingTagName, name, at + 2);
      pop_to(name);
    } else if (!stack_.empty() && stack_.back() == name) {
      stack_.pop_back();
    } else {
      add(FindingKind::MismatchedClosingTag, name, at + 2);
      pop_to(name);
    }
    while (pos_ < s_.size() && html::is_space(s_[pos_])) ++pos_;
    if (pos_ < s_.size() && s_[pos_] == '>') {
      ++pos_;
      return true;
    }
    const std::size_t gt = s_.find('>', pos_);
    if (gt == std::string_view::npos) {
      add(FindingKind::MissingClosingDelimiter, name, s_.size());
      pos_ = s_.size();
      return false;
    }
    add(FindingKind::MalformedAttributeSyntax, name, pos_);  // junk inside end tag
    pos_ = gt + 1;
    return true;
  }

  void pop_to(const std::string& name) {
    for (std::size_t i = stack_.size(); i-- > 0;) {
      if (stack_[i] == name) {
        stack_.resize(i);
        return;
      }
    }
  }

  std::string_view s_;
  const TagGrammar& g_;
  std::size_t pos_ = 0;
  std::vector<std::string> stack_;
  std::vector<TagFinding> findings_;
};

}  // namespace detail

/// Validates one line against the grammar. Total over arbitrary bytes; a
/// trailing LF or CR is ignored.
inline TagErrorReport validate_tag(std::string_view tag, const TagGrammar& grammar) {
  while (!tag.empty() && (tag.back() == '\n' || tag.back() == '\r')) tag.remove_suffix(1);
  TagErrorReport report;
  report.tag = std::string(tag);
  report.errors = detail::TagValidator(tag, grammar).run();
  return report;
}

/// Mean number of findings per tag.
inline double error_rate(std::span<const std::string> tags, const TagGrammar& grammar) {
  if (tags.empty()) throw Error(ErrorCode::EmptyInput, "error rate of an empty tag list");
  double total = 0.0;
  for (const auto& t : tags) total += static_cast<double>(validate_tag(t, grammar).count());
  return total / static_cast<double>(tags.size());
}

}  // namespace neurofuzz

#endif  // NEUROFUZZ_ANALYSIS_HPP
