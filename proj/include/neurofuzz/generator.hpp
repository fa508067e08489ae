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

// Tag sampling from trained checkpoints and assembly of tags into HTML test
// case files.

#ifndef NEUROFUZZ_GENERATOR_HPP
#define NEUROFUZZ_GENERATOR_HPP

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "neurofuzz/error.hpp"
#include "neurofuzz/hash.hpp"
#include "neurofuzz/neural_core.hpp"
#include "neurofuzz/random.hpp"
#include "neurofuzz/training.hpp"
#include "neurofuzz/utf8.hpp"

namespace neurofuzz {

inline constexpr std::size_t kDefaultMaxTagLength = 1024;

/// Softmax of logits / temperature in double precision.
template <class S>
std::vector<double> next_distribution(const RowVector<S>& logits, double temperature = 1.0) {
  if (!(temperature > 0)) throw Error(ErrorCode::InvalidConfig, "temperature must be positive");
  std::vector<double> p(static_cast<std::size_t>(logits.size()));
  double max = -HUGE_VAL;
  for (Eigen::Index j = 0; j < logits.size(); ++j) max = std::max(max, static_cast<double>(logits[j]) / temperature);
  double sum = 0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    p[j] = std::exp(static_cast<double>(logits[static_cast<Eigen::Index>(j)]) / temperature - max);
    sum += p[j];
  }
  for (auto& v : p) v /= sum;
  return p;
}

/// Inverse-CDF draw of one index from a probability vector.
inline std::size_t sample_index(const std::vector<double>& probs, RandomStream& rng) {
  const double u = rng.uniform01();
  double cum = 0;
  std::size_t last = 0;
  for (std::size_t j = 0; j < probs.size(); ++j) {
    if (probs[j] <= 0) continue;
    cum += probs[j];
    last = j;
    if (u < cum) return j;
  }
  return last;
}

/// Samples one tag: seeded with '<', threads the hidden state through every
/// character and stops at the first newline (not included). Hitting
/// `max_len` characters without a newline raises MaxLenExceeded.
inline std::string sample_tag(const Checkpoint& cp, RandomStream& rng, std::size_t max_len = kDefaultMaxTagLength,
                              double temperature = 1.0) {
  const auto& alphabet = cp.alphabet;
  if (!alphabet.contains(U'<') || !alphabet.contains(U'\n'))
    throw Error(ErrorCode::IndexOutOfAlphabet, "checkpoint alphabet lacks '<' or newline");
  const auto newline = alphabet.index_of(U'\n');
  auto state = StepState<float>::zeros(cp.model.config);
  std::int32_t input = alphabet.index_of(U'<');
  std::string out = "<";
  std::size_t length = 1;
  for (;;) {
    const auto probs = next_distribution(step_logits(cp.model, state, input), temperature);
    input = static_cast<std::int32_t>(sample_index(probs, rng));
    if (input == newline) return out;
    if (length >= max_len) {
      throw Error(ErrorCode::MaxLenExceeded, "no newline within " + std::to_string(max_len) + " characters");
    }
    utf8::append(out, alphabet.char_at(static_cast<std::size_t>(input)));
    ++length;
  }
}

struct SampleResult {
  std::vector<std::string> tags;
  std::size_t discarded = 0;  // truncated samples thrown away
};

/// Exactly `n` complete tags. Truncated samples are discarded and redrawn;
/// more than n + 16 discards raises RetryBudgetExhausted.
inline SampleResult sample_tags(const Checkpoint& cp, std::size_t n, std::uint64_t seed,
                                std::size_t max_len = kDefaultMaxTagLength, double temperature = 1.0) {
  SampleResult r;
  r.tags.reserve(n);
  RandomStream rng(seed);
  const std::size_t budget = n + 16;
  while (r.tags.size() < n) {
    try {
      r.tags.push_back(sample_tag(cp, rng, max_len, temperature));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::MaxLenExceeded) throw;
      if (++r.discarded > budget) {
        throw Error(ErrorCode::RetryBudgetExhausted,
                    std::to_string(r.discarded) + " truncated samples while drawing " + std::to_string(n) + " tags");
      }
    }
  }
  return r;
}

struct HtmlTemplate {
  std::string version;
  std::string head;  // everything up to and including the body open tag line
  std::string tail;  // from the body close tag

  std::string hash() const { return sha256_hex(head + '\x00' + tail); }
};

inline const HtmlTemplate& default_template() {
  static const HtmlTemplate t{"1",
                              "<html>\n<head>\n<meta charset=\"utf-8\">\n</head>\n<body>\n",
                              "</body>\n</html>\n"};
  return t;
}

struct TestCase {
  std::string id;
  std::vector<std::string> tags;
  std::string rendered_html;
};

/// Places the tags, one per line and in order, inside the template body.
inline TestCase assemble_case(const std::vector<std::string>& tags, const HtmlTemplate& tpl = default_template(),
                              std::string id = {}) {
  TestCase c;
  c.id = std::move(id);
  c.tags = tags;
  c.rendered_html = tpl.head;
  for (const auto& t : tags) {
    if (t.find('\n') != std::string::npos) throw Error(ErrorCode::InvalidConfig, "tag contains a newline");
    c.rendered_html += t;
    c.rendered_html += '\n';
  }
  c.rendered_html += tpl.tail;
  return c;
}

struct CaseSet {
  std::string provenance;  // e.g. "dataset-0", "model-gru-l2", "mutation-p0.016"
  std::size_t tags_per_case = 0;
  std::vector<TestCase> cases;
  nlohmann::json metadata = nlohmann::json::object();

  std::string name() const { return provenance + "_t" + std::to_string(tags_per_case); }
};

inline std::string case_id(const std::string& provenance, std::size_t tags_per_case, std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04zu", index);
  return provenance + "_t" + std::to_string(tags_per_case) + "_" + buf;
}

/// Splits `tags` into one CaseSet per entry of `sizes`.
inline std::vector<CaseSet> make_case_sets(const std::vector<std::string>& tags, const std::vector<std::size_t>& sizes,
                                           const std::string& provenance, const nlohmann::json& metadata = {},
                                           const HtmlTemplate& tpl = default_template()) {
  std::vector<CaseSet> sets;
  for (std::size_t size : sizes) {
    if (size == 0 || tags.size() % size != 0) {
      throw Error(ErrorCode::NotDivisible,
                  std::to_string(tags.size()) + " tags do not divide into cases of " + std::to_string(size));
    }
  }
  for (std::size_t size : sizes) {
    CaseSet set;
    set.provenance = provenance;
    set.tags_per_case = size;
    set.metadata = metadata.is_null() ? nlohmann::json::object() : metadata;
    for (std::size_t i = 0; i * size < tags.size(); ++i) {
      std::vector<std::string> chunk(tags.begin() + static_cast<std::ptrdiff_t>(i * size),
                                     tags.begin() + static_cast<std::ptrdiff_t>((i + 1) * size));
      set.cases.push_back(assemble_case(chunk, tpl, case_id(provenance, size, i)));
    }
    sets.push_back(std::move(set));
  }
  return sets;
}

/// Writes {id}.html files plus manifest.json into `dir`.
inline void write_case_set(const CaseSet& set, const std::filesystem::path& dir,
                           const HtmlTemplate& tpl = default_template()) {
  nlohmann::json files = nlohmann::json::array();
  for (const auto& c : set.cases) {
    const auto name = c.id + ".html";
    write_file(dir / name, c.rendered_html);
    files.push_back({{"file", name}, {"sha256", sha256_hex(c.rendered_html)}});
  }
  nlohmann::json manifest = {{"provenance", set.provenance},
                             {"tags_per_case", set.tags_per_case},
                             {"cases", set.cases.size()},
                             {"total_tags", set.cases.size() * set.tags_per_case},
                             {"template_version", tpl.version},
                             {"template_sha256", tpl.hash()},
                             {"metadata", set.metadata},
                             {"files", files}};
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

/// Reads a directory written by write_case_set; only ids and documents are
/// restored (tags are recovered from the body lines).
inline CaseSet read_case_set(const std::filesystem::path& dir, const HtmlTemplate& tpl = default_template()) {
  const auto manifest = nlohmann::json::parse(read_file(dir / "manifest.json"));
  CaseSet set;
  set.provenance = manifest.at("provenance").get<std::string>();
  set.tags_per_case = manifest.at("tags_per_case").get<std::size_t>();
  set.metadata = manifest.value("metadata", nlohmann::json::object());
  for (const auto& f : manifest.at("files")) {
    const auto file = f.at("file").get<std::string>();
    TestCase c;
    c.id = file.substr(0, file.size() - 5);
    c.rendered_html = read_file(dir / file);
    if (c.rendered_html.starts_with(tpl.head) && c.rendered_html.ends_with(tpl.tail)) {
      std::string_view body(c.rendered_html);
      body = body.substr(tpl.head.size(), body.size() - tpl.head.size() - tpl.tail.size());
      while (!body.empty()) {
        const auto nl = body.find('\n');
        c.tags.emplace_back(body.substr(0, nl));
        body = nl == std::string_view::npos ? std::string_view{} : body.substr(nl + 1);
      }
    }
    set.cases.push_back(std::move(c));
  }
  return set;
}

}  // namespace neurofuzz

#endif  // NEUROFUZZ_GENERATOR_HPP
