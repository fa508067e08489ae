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

// Naive mutation baseline: each character of a tag is independently
// replaced, with a fixed probability, by a random alphabet character.

#ifndef NEUROFUZZ_MUTATION_HPP
#define NEUROFUZZ_MUTATION_HPP

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "neurofuzz/error.hpp"
#include "neurofuzz/generator.hpp"
#include "neurofuzz/random.hpp"
#include "neurofuzz/seq_data.hpp"
#include "neurofuzz/utf8.hpp"

namespace neurofuzz {

struct MutationConfig {
  double probability = 0.0;
  Alphabet alphabet;
  std::uint64_t seed = 0;
};

struct MutationStats {
  std::size_t positions = 0;     // characters eligible for replacement
  std::size_t replacements = 0;  // replacement draws made
  std::size_t changed = 0;       // positions whose character actually changed
};

/// Newlines are never replaced and never drawn, so a mutated tag stays on
/// its own line. Replacement characters come uniformly from the rest of the
/// alphabet, the original character included.
inline std::string mutate_text(std::string_view text, const MutationConfig& cfg, MutationStats* stats = nullptr) {
  if (!(cfg.probability >= 0.0 && cfg.probability <= 1.0))
    throw Error(ErrorCode::InvalidConfig, "mutation probability must lie in [0, 1]");
  std::u32string pool;
  for (char32_t c : cfg.alphabet.chars())
    if (c != U'\n') pool.push_back(c);
  auto cps = utf8::decode(text);
  for (char32_t c : cps) cfg.alphabet.index_of(c);  // throws IndexOutOfAlphabet
  MutationStats st;
  RandomStream rng(cfg.seed);
  for (char32_t& c : cps) {
    if (c == U'\n') continue;
    ++st.positions;
    if (!rng.bernoulli(cfg.probability)) continue;
    if (pool.empty()) continue;
    ++st.replacements;
    const char32_t r = pool[rng.below(pool.size())];
    st.changed += r != c;
    c = r;
  }
  if (stats) *stats = st;
  return utf8::encode(cps);
}

/// 0.1% doubling to 51.2%.
inline std::vector<double> default_mutation_ladder() {
  std::vector<double> ladder;
  for (int k = 0; k < 10; ++k) ladder.push_back(0.001 * std::ldexp(1.0, k));
  return ladder;
}

inline std::string probability_label(double p) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", p);
  return buf;
}

/// Mutates every tag with a seed derived from (seed, p, tag index).
inline std::vector<std::string> mutate_tags(const std::vector<std::string>& tags, double p, const Alphabet& alphabet,
                                            std::uint64_t seed, MutationStats* total = nullptr) {
  std::vector<std::string> out;
  out.reserve(tags.size());
  MutationStats sum;
  const std::string stage = "mutation:" + probability_label(p);
  for (std::size_t i = 0; i < tags.size(); ++i) {
    MutationStats st;
    out.push_back(mutate_text(tags[i], {p, alphabet, derive_seed(seed, stage, i)}, &st));
    sum.positions += st.positions;
    sum.replacements += st.replacements;
    sum.changed += st.changed;
  }
  if (total) *total = sum;
  return out;
}

/// One CaseSet per (probability, size) pair, provenance "mutation-p<p>".
inline std::vector<CaseSet> make_mutation_sets(const std::vector<std::string>& dataset_tags,
                                               const std::vector<double>& probabilities,
                                               const std::vector<std::size_t>& sizes, const Alphabet& alphabet,
                                               std::uint64_t seed) {
  if (probabilities.empty()) throw Error(ErrorCode::InvalidConfig, "mutation ladder is empty");
  std::vector<CaseSet> sets;
  for (double p : probabilities) {
    MutationStats st;
    const auto mutated = mutate_tags(dataset_tags, p, alphabet, seed, &st);
    const nlohmann::json meta = {{"probability", p},
                                 {"seed", seed},
                                 {"positions", st.positions},
                                 {"replacements", st.replacements},
                                 {"changed", st.changed}};
    for (auto& s : make_case_sets(mutated, sizes, "mutation-p" + probability_label(p), meta)) sets.push_back(std::move(s));
  }
  return sets;
}

}  // namespace neurofuzz

#endif  // NEUROFUZZ_MUTATION_HPP
