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


// Acceptance suite: one PASS/FAIL line per criterion. Arguments select
// criteria by number; no arguments runs all eight. Exit status is nonzero
// when any selected criterion fails.
//
//   acceptance [--work DIR] [N ...]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "neurofuzz/neurofuzz.hpp"

namespace nf = neurofuzz;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

fs::path g_work = fs::temp_directory_path() / "neurofuzz_acceptance";

std::string num(double v) { return nf::fmt6(v); }

nf::ExperimentConfig desk_config() { return nf::ExperimentConfig::load(fs::path(NEUROFUZZ_SOURCE_DIR) / "configs" / "desk.json"); }

// ---- 1 ------------------------------------------------------------------------------

Outcome parameter_counts() {
  const auto lstm = nf::count_parameters({nf::CellType::Lstm, 6, 256, 107});
  const auto gru = nf::count_parameters({nf::CellType::Gru, 6, 256, 107});
  return {lstm == 3'026'795 && gru == 2'276'971, "lstm=" + std::to_string(lstm) + " gru=" + std::to_string(gru)};
}

// ---- 2 ------------------------------------------------------------------------------

Outcome validator_counts() {
  const auto g = nf::default_grammar();
  const auto a = nf::validate_tag(
      R"(<war id="id55804" scellcheck="false" tpalleaeck="false" class="style_class_0" title="50000000"> null</sab>)", g);
  const auto b = nf::validate_tag(
      R"(<head id="id240801" sang="al" style="style" class="style_class_0" dir="rtl"> 7500000000</pre>)", g);
  const bool ok = a.count() == 4 && a.count(nf::FindingKind::UnknownAttributeName) == 2 && b.count() == 2 &&
                  b.count(nf::FindingKind::UnknownAttributeName) == 1 &&
                  b.count(nf::FindingKind::MismatchedClosingTag) == 1;
  return {ok, "one-layer sample: " + std::to_string(a.count()) + " errors (" +
                  std::to_string(a.count(nf::FindingKind::UnknownAttributeName)) +
                  " unknown attributes); three-layer sample: " + std::to_string(b.count()) + " errors"};
}

// ---- 3 ------------------------------------------------------------------------------

double gradient_error(nf::CellType cell, std::size_t layers, nf::LossKind kind) {
  using LD = long double;
  nf::RandomStream rng(1000 + layers * 7 + (cell == nf::CellType::Gru ? 1 : 0));
  const std::size_t hidden = 6, vocab = 7, steps = 8, batch = 2;
  auto m = nf::Model<LD>::initialized({cell, layers, hidden, vocab, 0.0, kind}, rng);
  for (auto& p : m.layers)
    for (Eigen::Index i = 0; i < p.bias.size(); ++i) p.bias[i] = rng.symmetric(0.5);
  for (Eigen::Index i = 0; i < m.output.bias.size(); ++i) m.output.bias[i] = rng.symmetric(0.5);
  nf::IndexSeq text(batch * (steps + 1));
  for (auto& c : text) c = static_cast<std::int32_t>(rng.below(vocab));
  const std::vector<std::size_t> starts = {0, steps + 1};
  const auto b = nf::SequenceBatch::from_windows(text, starts, steps);

  nf::ForwardCache<LD> cache;
  nf::stacked_forward(b, m, nullptr, &cache);
  auto grads = nf::backward(b, m, cache);
  auto params = m.tensors();
  auto g = grads.tensors();
  const LD eps = 1e-5L;
  double worst = 0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    for (std::size_t i = 0; i < params[k].data.size(); ++i) {
      const LD saved = params[k].data[i];
      params[k].data[i] = saved + eps;
      const LD up = nf::loss(nf::stacked_forward(b, m), b, kind);
      params[k].data[i] = saved - eps;
      const LD down = nf::loss(nf::stacked_forward(b, m), b, kind);
      params[k].data[i] = saved;
      const double numeric = static_cast<double>((up - down) / (2 * eps));
      const double analytic = static_cast<double>(g[k].data[i]);
      worst = std::max(worst, std::abs(numeric - analytic) / std::max({std::abs(numeric), std::abs(analytic), 1e-12}));
    }
  }
  return worst;
}

Outcome gradient_check() {
  double worst = 0;
  std::string where;
  for (auto cell : {nf::CellType::Lstm, nf::CellType::Gru})
    for (auto kind : {nf::LossKind::ElementwiseBinary, nf::LossKind::Categorical})
      for (std::size_t l = 1; l <= 3; ++l) {
        const double e = gradient_error(cell, l, kind);
        if (e >= worst) {
          worst = e;
          where = std::string(nf::to_string(cell)) + " depth " + std::to_string(l) + " " + std::string(nf::to_string(kind));
        }
      }
  return {worst < 1e-4, "max relative error " + num(worst) + " (" + where + "), bound 1e-4"};
}

// ---- 4 ------------------------------------------------------------------------------

Outcome learning_progress() {
  const auto desk = desk_config();
  const auto grammar = nf::default_grammar();
  const std::uint64_t master = desk.master_seed;
  const auto corpus = nf::generate_corpus(grammar, desk.corpus.n_tags, nf::derive_seed(master, "corpus"));
  const auto text = corpus.text();
  const auto splits =
      nf::make_splits(corpus, 1, desk.corpus.train_bytes, desk.corpus.val_bytes, nf::derive_seed(master, "splits"));
  const auto alphabet = nf::Alphabet::from_text(text);
  nf::ModelConfig mc{nf::CellType::Gru, 2, 64, 0, desk.models.dropout, desk.models.loss};
  nf::TrainConfig tc = desk.training;
  tc.epochs = 5;
  tc.seed = nf::derive_seed(master, "acceptance:learning");
  const auto t0 = std::chrono::steady_clock::now();
  const auto trained = nf::train(mc, tc, alphabet, nf::slice(text, splits.splits[0].train),
                                 nf::slice(text, splits.splits[0].validation));
  tc.epochs = 0;
  const auto untrained = nf::train(mc, tc, alphabet, "", "");

  bool decreasing = trained.history.size() == 5;
  std::string losses;
  for (std::size_t i = 0; i < trained.history.size(); ++i) {
    losses += (i ? " " : "") + num(trained.history[i].val_loss);
    if (i > 0 && !(trained.history[i].val_loss < trained.history[i - 1].val_loss)) decreasing = false;
  }
  const std::size_t n = desk.sampling.n_tags;
  const auto sample_seed = nf::derive_seed(master, "acceptance:sample");
  const auto sampled = nf::sample_tags(trained, n, sample_seed);
  const auto noise = nf::sample_tags(untrained, n, sample_seed);
  std::vector<std::string> dataset(corpus.lines.begin(), corpus.lines.begin() + static_cast<std::ptrdiff_t>(n));
  const auto mutated = nf::mutate_tags(dataset, 0.256, alphabet, nf::derive_seed(master, "acceptance:mutation"));
  const double r_model = nf::error_rate(sampled.tags, grammar);
  const double r_untrained = nf::error_rate(noise.tags, grammar);
  const double r_mutation = nf::error_rate(mutated, grammar);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool ok = decreasing && r_model < r_untrained && r_model < r_mutation;
  return {ok, "val loss by epoch [" + losses + "]; error rate trained " + num(r_model) + " < untrained " +
                  num(r_untrained) + " and < mutation p=0.256 " + num(r_mutation) + "; " + num(secs) + " s"};
}

// ---- 5 ------------------------------------------------------------------------------

nf::CoverageLog random_log(nf::RandomStream& rng) {
  nf::CoverageLog log;
  const std::size_t n_modules = 1 + rng.below(6);
  for (std::size_t i = 0; i < n_modules; ++i) {
    nf::ModuleEntry m;
    m.id = static_cast<std::uint32_t>(i);
    m.base = 0x7f0000000000ULL + (rng.next_u64() & 0xffffff000ULL);
    m.end = m.base + 0x1000 + rng.below(1 << 24);
    m.path = "/opt/target/lib" + std::to_string(rng.below(1000)) + (rng.bernoulli(0.5) ? " dir/x.so" : ".so");
    log.modules.push_back(m);
  }
  const std::size_t n_blocks = rng.below(2000);
  for (std::size_t i = 0; i < n_blocks; ++i)
    log.blocks.push_back({static_cast<std::uint32_t>(rng.next_u64()), static_cast<std::uint16_t>(1 + rng.below(400)),
                          static_cast<std::uint16_t>(rng.below(n_modules))});
  return log;
}

nf::BlockSet random_set(nf::RandomStream& rng, std::size_t n, std::set<std::pair<std::string, std::uint32_t>>& naive) {
  std::vector<nf::BlockId> ids;
  for (std::size_t i = 0; i < n; ++i) {
    nf::BlockId id{rng.bernoulli(0.5) ? "a.so" : "b.so", static_cast<std::uint32_t>(rng.below(150'000))};
    naive.insert({id.module, id.offset});
    ids.push_back(id);
  }
  return nf::BlockSet(std::move(ids));
}

Outcome coverage_fidelity() {
  nf::RandomStream rng(5);
  std::size_t identical = 0;
  for (int i = 0; i < 100; ++i) {
    const auto bytes = nf::write_drcov(random_log(rng));
    if (nf::write_drcov(nf::parse_drcov(bytes)) == bytes) ++identical;
  }
  std::size_t agree = 0, trials = 0;
  for (std::size_t n : {0, 1, 10, 1000, 30'000, 100'000}) {
    for (int rep = 0; rep < 2; ++rep) {
      ++trials;
      std::set<std::pair<std::string, std::uint32_t>> na, nb;
      const auto a = random_set(rng, n, na);
      const auto b = random_set(rng, n / 2 + rng.below(n + 1), nb);
      std::size_t inter = 0, diff = 0;
      for (const auto& x : na) {
        if (nb.count(x)) ++inter;
        else ++diff;
      }
      const std::size_t uni = na.size() + nb.size() - inter;
      const auto o = nf::overlap(a, b);
      bool ok = a.size() == na.size() && set_difference(a, b).size() == diff &&
                set_intersection(a, b).size() == inter && set_union(a, b).size() == uni && o.intersection == inter;
      if (!na.empty()) ok = ok && std::abs(*o.containment_ab - double(inter) / double(na.size())) < 1e-15;
      if (uni > 0) ok = ok && std::abs(*o.jaccard - double(inter) / double(uni)) < 1e-15;
      const auto m = nf::similarity_matrix({{"a", a}, {"b", b}});
      ok = ok && m[0][1] == m[1][0] && m[0][0] == 1.0 && (uni == 0 || std::abs(m[0][1] - double(inter) / double(uni)) < 1e-15);
      const auto d = nf::diff_to_best({{"a", a}}, {{"b", b}});
      ok = ok && d.novel[0].second == diff;
      agree += ok;
    }
  }
  return {identical == 100 && agree == trials, std::to_string(identical) + "/100 byte-identical round trips; " +
                                                    std::to_string(agree) + "/" + std::to_string(trials) +
                                                    " set-operation trials agree with std::set oracles (up to 1e5 blocks)"};
}

// ---- 6 and 7 ----------------------------------------------------------------------

std::vector<std::map<std::string, std::string>> read_csv(const fs::path& p) {
  std::vector<std::map<std::string, std::string>> rows;
  const auto lines = nf::split_lines(nf::read_file(p));
  if (lines.empty()) return rows;
  auto split = [](const std::string& l) {
    std::vector<std::string> f;
    std::stringstream ss(l);
    std::string x;
    while (std::getline(ss, x, ',')) f.push_back(x);
    if (!l.empty() && l.back() == ',') f.push_back("");
    return f;
  };
  const auto head = split(lines[0]);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = split(lines[i]);
    std::map<std::string, std::string> row;
    for (std::size_t k = 0; k < head.size() && k < f.size(); ++k) row[head[k]] = f[k];
    rows.push_back(row);
  }
  return rows;
}

double g_desk_seconds = 0;

Outcome desk_run(const fs::path& dir, double* seconds) {
  fs::remove_all(dir);
  const auto t0 = std::chrono::steady_clock::now();
  nf::Experiment(desk_config(), dir, 1).run_all();
  *seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {true, ""};
}

Outcome coverage_claim() {
  const auto dir = g_work / "desk-a";
  desk_run(dir, &g_desk_seconds);
  std::size_t models = 0, models_novel = 0, models_recover = 0, datasets = 0, datasets_clean = 0;
  std::size_t mutation_recover_max = 0;
  std::size_t min_novel = SIZE_MAX;
  for (const auto& r : read_csv(dir / "reports" / "diff_to_best.csv")) {
    if (r.at("family") != "model") continue;
    ++models;
    const auto novel = std::stoull(r.at("novel_blocks"));
    min_novel = std::min<std::size_t>(min_novel, novel);
    models_novel += novel > 0;
  }
  for (const auto& r : read_csv(dir / "reports" / "unique_blocks.csv")) {
    const auto& fam = r.at("family");
    if (fam == "dataset-band") continue;
    const auto rec = std::stoull(r.at("recovery_blocks"));
    if (fam == "dataset") {
      ++datasets;
      datasets_clean += rec == 0;
    } else if (fam == "model") {
      models_recover += rec > 0;
    } else if (fam == "mutation") {
      mutation_recover_max = std::max<std::size_t>(mutation_recover_max, rec);
    }
  }
  const bool in_budget = g_desk_seconds <= 300.0;
  const bool ok = models > 0 && models_novel == models && datasets > 0 && datasets_clean == datasets &&
                  models_recover == models && mutation_recover_max > 0 && in_budget;
  return {ok, std::to_string(models_novel) + "/" + std::to_string(models) +
                  " model sets reach blocks outside the best dataset set (min " + std::to_string(min_novel) + "); " +
                  std::to_string(datasets_clean) + "/" + std::to_string(datasets) +
                  " dataset sets hit no recovery block; " + std::to_string(models_recover) + "/" +
                  std::to_string(models) + " model sets and mutation sets (max " +
                  std::to_string(mutation_recover_max) + ") do; run-all " + num(g_desk_seconds) + " s (budget 300 s)"};
}

Outcome determinism() {
  const auto a = g_work / "desk-a";
  double secs_a = 0, secs_b = 0;
  if (!fs::exists(a / "reports")) desk_run(a, &secs_a);
  const auto b = g_work / "desk-b";
  desk_run(b, &secs_b);
  const auto ha = nf::artifact_hashes(a), hb = nf::artifact_hashes(b);
  std::size_t differing = 0;
  std::string first;
  std::set<std::string> names;
  for (const auto& [k, v] : ha) names.insert(k);
  for (const auto& [k, v] : hb) names.insert(k);
  for (const auto& k : names) {
    const auto ia = ha.find(k), ib = hb.find(k);
    if (ia == ha.end() || ib == hb.end() || ia->second != ib->second) {
      if (!differing++) first = k;
    }
  }
  return {differing == 0 && !ha.empty(),
          std::to_string(names.size()) + " artifacts compared, " + std::to_string(differing) + " differ" +
              (first.empty() ? "" : " (first: " + first + ")") + "; second run " + num(secs_b) + " s"};
}

// ---- 8 ------------------------------------------------------------------------------

Outcome mutation_statistics() {
  const auto alphabet = nf::Alphabet::from_text(nf::generate_corpus(nf::default_grammar(), 2000, 1).text());
  std::u32string chars;
  for (char32_t c : alphabet.chars())
    if (c != U'\n') chars.push_back(c);
  nf::RandomStream rng(8);
  std::u32string cps(1'000'000, U'a');
  for (auto& c : cps) c = chars[rng.below(chars.size())];
  const auto text = nf::utf8::encode(cps);
  nf::MutationStats st;
  nf::mutate_text(text, {0.016, alphabet, 99}, &st);
  const double n = static_cast<double>(st.positions), p = 0.016;
  const double z = (static_cast<double>(st.replacements) - n * p) / std::sqrt(n * p * (1 - p));
  const bool identity = nf::mutate_text(text, {0.0, alphabet, 99}) == text;
  return {st.positions == 1'000'000 && std::abs(z) <= 3.0 && identity,
          std::to_string(st.replacements) + " replacements over " + std::to_string(st.positions) +
              " characters (expected " + num(n * p) + ", z=" + num(z) + "); p=0 identity " +
              (identity ? "holds" : "broken")};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--work" && i + 1 < argc) {
      g_work = argv[++i];
    } else {
      selected.insert(std::stoi(a));
    }
  }
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"parameter counts", parameter_counts},
      {"validator error counts", validator_counts},
      {"gradient correctness", gradient_check},
      {"learning progress", learning_progress},
      {"coverage pipeline fidelity", coverage_fidelity},
      {"coverage claim at desk scale", coverage_claim},
      {"determinism", determinism},
      {"mutation statistics", mutation_statistics}};
  fs::create_directories(g_work);
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!selected.empty() && !selected.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "[PASS] " : "[FAIL] ") << id << ". " << criteria[i].first << ": " << o.detail << std::endl;
  }
  std::cout << (failed ? std::to_string(failed) + " criteria failed" : std::string("all selected criteria passed"))
            << std::endl;
  return failed ? 1 : 0;
}
