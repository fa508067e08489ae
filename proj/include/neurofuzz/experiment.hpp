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

// Experiment configuration and the staged pipeline behind the CLI.
//
// Stages: gen-corpus, train, sample, mutate, make-cases, run-target,
// analyze. Each stage writes a stamp holding a key (hash of its config slice
// and its upstream outputs) and digests of what it produced; a stage whose
// key matches and whose outputs are intact is skipped.

#ifndef NEUROFUZZ_EXPERIMENT_HPP
#define NEUROFUZZ_EXPERIMENT_HPP

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "neurofuzz/analysis.hpp"
#include "neurofuzz/corpus_gen.hpp"
#include "neurofuzz/coverage.hpp"
#include "neurofuzz/error.hpp"
#include "neurofuzz/generator.hpp"
#include "neurofuzz/hash.hpp"
#include "neurofuzz/mutation.hpp"
#include "neurofuzz/random.hpp"
#include "neurofuzz/report.hpp"
#include "neurofuzz/surrogate_target.hpp"
#include "neurofuzz/training.hpp"

namespace neurofuzz {

inline constexpr std::string_view kToolVersion = "0.1.0";

// ---- configuration ----------------------------------------------------------------

struct CorpusSection {
  std::string grammar;  // path to a grammar JSON; empty selects the built-in grammar
  std::uint64_t n_tags = 12'700;
  std::uint64_t train_bytes = 880'000;
  std::uint64_t val_bytes = 100'000;
};

struct ModelSection {
  std::vector<CellType> cells = {CellType::Gru, CellType::Lstm};
  std::size_t min_depth = 1;
  std::size_t max_depth = 3;
  std::size_t hidden = 64;
  double dropout = 0.3;
  LossKind loss = LossKind::ElementwiseBinary;
};

struct SamplingSection {
  std::size_t n_tags = 1024;
  std::vector<std::size_t> case_sizes = {128, 256};
  std::size_t max_len = kDefaultMaxTagLength;
  double temperature = 1.0;
  std::size_t dataset_sets = 5;
};

struct TargetSection {
  std::string kind = "surrogate";  // surrogate | external
  std::string command;             // external only; {case} and {out} are substituted
  double timeout_s = 60.0;
  std::string module_filter;       // empty keeps every module
  std::size_t blank_runs = 3;
};

struct ExperimentConfig {
  std::string output_root = "experiment";
  std::uint64_t master_seed = 1;
  CorpusSection corpus;
  ModelSection models;
  TrainConfig training;
  SamplingSection sampling;
  std::vector<double> mutation_ladder = default_mutation_ladder();
  TargetSection target;

  void validate() const;
  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::filesystem::path& path);
};

namespace detail {

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<std::string_view> allowed,
                           const std::string& where) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw Error(ErrorCode::InvalidConfig, "unknown key " + where + "." + key);
  }
}

}  // namespace detail

inline void ExperimentConfig::validate() const {
  auto bad = [](const std::string& m) { throw Error(ErrorCode::InvalidConfig, m); };
  if (corpus.n_tags < 1) bad("corpus.n_tags must be >= 1");
  if (corpus.train_bytes < 2 || corpus.val_bytes < 2) bad("corpus.train_bytes and corpus.val_bytes must be >= 2");
  if (models.cells.empty()) bad("models.cells is empty");
  if (models.min_depth < 1 || models.max_depth > 8 || models.min_depth > models.max_depth)
    bad("depth range [" + std::to_string(models.min_depth) + ", " + std::to_string(models.max_depth) +
        "] must lie within [1, 8]");
  if (models.hidden < 1) bad("models.hidden must be >= 1");
  if (!(models.dropout >= 0.0 && models.dropout < 1.0)) bad("models.dropout must be in [0, 1)");
  training.validate();
  if (sampling.n_tags < 1) bad("sampling.n_tags must be >= 1");
  if (sampling.case_sizes.empty()) bad("sampling.case_sizes is empty");
  for (auto s : sampling.case_sizes) {
    if (s == 0 || sampling.n_tags % s != 0)
      throw Error(ErrorCode::NotDivisible, std::to_string(sampling.n_tags) + " sampled tags do not divide into cases of " +
                                               std::to_string(s));
  }
  if (sampling.max_len < 1) bad("sampling.max_len must be >= 1");
  if (!(sampling.temperature > 0)) bad("sampling.temperature must be positive");
  if (sampling.dataset_sets < 1) bad("sampling.dataset_sets must be >= 1");
  if (mutation_ladder.empty()) bad("mutation.ladder is empty");
  for (double p : mutation_ladder)
    if (!(p >= 0.0 && p <= 1.0)) bad("mutation probabilities must lie in [0, 1]");
  if (target.kind != "surrogate" && target.kind != "external") bad("target.kind must be surrogate or external");
  if (target.kind == "external" && target.command.empty()) bad("target.command is required for external targets");
  if (!(target.timeout_s > 0)) bad("target.timeout_s must be positive");
  if (target.blank_runs < 1) bad("target.blank_runs must be >= 1");
}

inline nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json cells = nlohmann::json::array();
  for (auto c : models.cells) cells.push_back(std::string(to_string(c)));
  auto train = neurofuzz::to_json(training);
  train.erase("seed");
  return {{"output_root", output_root},
          {"master_seed", master_seed},
          {"corpus",
           {{"grammar", corpus.grammar},
            {"n_tags", corpus.n_tags},
            {"train_bytes", corpus.train_bytes},
            {"val_bytes", corpus.val_bytes}}},
          {"models",
           {{"cells", cells},
            {"min_depth", models.min_depth},
            {"max_depth", models.max_depth},
            {"hidden", models.hidden},
            {"dropout", models.dropout},
            {"loss", std::string(to_string(models.loss))}}},
          {"training", train},
          {"sampling",
           {{"n_tags", sampling.n_tags},
            {"case_sizes", sampling.case_sizes},
            {"max_len", sampling.max_len},
            {"temperature", sampling.temperature},
            {"dataset_sets", sampling.dataset_sets}}},
          {"mutation", {{"ladder", mutation_ladder}}},
          {"target",
           {{"kind", target.kind},
            {"command", target.command},
            {"timeout_s", target.timeout_s},
            {"module_filter", target.module_filter},
            {"blank_runs", target.blank_runs}}}};
}

inline ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  try {
    detail::reject_unknown(j, {"output_root", "master_seed", "corpus", "models", "training", "sampling", "mutation",
                               "target"},
                           "config");
    c.output_root = j.value("output_root", c.output_root);
    c.master_seed = j.value("master_seed", c.master_seed);
    if (j.contains("corpus")) {
      const auto& s = j["corpus"];
      detail::reject_unknown(s, {"grammar", "n_tags", "train_bytes", "val_bytes"}, "corpus");
      c.corpus.grammar = s.contains("grammar") && !s["grammar"].is_null() ? s["grammar"].get<std::string>() : "";
      c.corpus.n_tags = s.value("n_tags", c.corpus.n_tags);
      c.corpus.train_bytes = s.value("train_bytes", c.corpus.train_bytes);
      c.corpus.val_bytes = s.value("val_bytes", c.corpus.val_bytes);
    }
    if (j.contains("models")) {
      const auto& s = j["models"];
      detail::reject_unknown(s, {"cells", "min_depth", "max_depth", "hidden", "dropout", "loss"}, "models");
      if (s.contains("cells")) {
        c.models.cells.clear();
        for (const auto& x : s["cells"]) c.models.cells.push_back(cell_type_from_string(x.get<std::string>()));
      }
      c.models.min_depth = s.value("min_depth", c.models.min_depth);
      c.models.max_depth = s.value("max_depth", c.models.max_depth);
      c.models.hidden = s.value("hidden", c.models.hidden);
      c.models.dropout = s.value("dropout", c.models.dropout);
      if (s.contains("loss")) c.models.loss = loss_kind_from_string(s["loss"].get<std::string>());
    }
    if (j.contains("training")) {
      detail::reject_unknown(j["training"],
                             {"epochs", "batch", "seq_len", "base_lr", "lr_halving_period", "adam_beta1", "adam_beta2",
                              "adam_epsilon", "clip_norm", "n_splits", "n_restarts"},
                             "training");
      c.training = train_config_from_json(j["training"]);
    }
    if (j.contains("sampling")) {
      const auto& s = j["sampling"];
      detail::reject_unknown(s, {"n_tags", "case_sizes", "max_len", "temperature", "dataset_sets"}, "sampling");
      c.sampling.n_tags = s.value("n_tags", c.sampling.n_tags);
      if (s.contains("case_sizes")) c.sampling.case_sizes = s["case_sizes"].get<std::vector<std::size_t>>();
      c.sampling.max_len = s.value("max_len", c.sampling.max_len);
      c.sampling.temperature = s.value("temperature", c.sampling.temperature);
      c.sampling.dataset_sets = s.value("dataset_sets", c.sampling.dataset_sets);
    }
    if (j.contains("mutation")) {
      detail::reject_unknown(j["mutation"], {"ladder"}, "mutation");
      if (j["mutation"].contains("ladder")) c.mutation_ladder = j["mutation"]["ladder"].get<std::vector<double>>();
    }
    if (j.contains("target")) {
      const auto& s = j["target"];
      detail::reject_unknown(s, {"kind", "command", "timeout_s", "module_filter", "blank_runs"}, "target");
      c.target.kind = s.value("kind", c.target.kind);
      c.target.command = s.value("command", c.target.command);
      c.target.timeout_s = s.value("timeout_s", c.target.timeout_s);
      c.target.module_filter = s.value("module_filter", c.target.module_filter);
      c.target.blank_runs = s.value("blank_runs", c.target.blank_runs);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("malformed config: ") + e.what());
  }
  c.validate();
  return c;
}

inline ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error(ErrorCode::InvalidConfig, "config file not found: " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, path.string() + ": " + e.what());
  }
  return from_json(j);
}

// ---- helpers ------------------------------------------------------------------------

/// Runs fn(0..n-1) on up to `jobs` threads. If any call throws, the error
/// from the lowest index is rethrown after all workers stop.
inline void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::mutex mu;
  std::exception_ptr error;
  std::size_t error_index = std::numeric_limits<std::size_t>::max();
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < jobs; ++w) {
      pool.emplace_back([&] {
        for (;;) {
          const std::size_t i = next++;
          if (i >= n || failed) return;
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(mu);
            if (i < error_index) {
              error_index = i;
              error = std::current_exception();
            }
            failed = true;
          }
        }
      });
    }
  }
  if (error) std::rethrow_exception(error);
}

/// Digest of a file that ignores wall-time fields: checkpoints hash their
/// canonical serialization, history CSVs have the seconds column zeroed.
inline std::string artifact_digest(const fs::path& path) {
  const auto name = path.filename().string();
  if (name.ends_with(".nfck")) return checkpoint_digest(load_checkpoint(path));
  if (name.ends_with(".history.csv")) {
    std::string canon;
    for (const auto& line : split_lines(read_file(path))) {
      const auto comma = line.rfind(',');
      canon += (line.starts_with("epoch") || comma == std::string::npos ? line : line.substr(0, comma + 1) + "0") + "\n";
    }
    return sha256_hex(canon);
  }
  return sha256_file(path);
}

/// Relative path -> canonical digest for every file under `root`.
inline std::map<std::string, std::string> artifact_hashes(const fs::path& root) {
  std::map<std::string, std::string> out;
  if (!fs::is_directory(root)) return out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).generic_string()] = artifact_digest(e.path());
  return out;
}

struct StageResult {
  std::string stage;
  bool skipped = false;
  std::string key;
};

// ---- pipeline -------------------------------------------------------------------------

class Experiment {
 public:
  using Logger = std::function<void(const std::string&)>;

  Experiment(ExperimentConfig cfg, fs::path root, std::size_t jobs = 1, Logger log = {})
      : cfg_(std::move(cfg)), root_(std::move(root)), jobs_(std::max<std::size_t>(1, jobs)), log_(std::move(log)) {
    cfg_.validate();
  }

  const ExperimentConfig& config() const { return cfg_; }
  const fs::path& root() const { return root_; }

  static const std::vector<std::string>& stage_names() {
    static const std::vector<std::string> names = {"gen-corpus", "train",      "sample", "mutate",
                                                   "make-cases", "run-target", "analyze"};
    return names;
  }

  StageResult run_stage(const std::string& name) {
    if (name == "gen-corpus") return gen_corpus();
    if (name == "train") return train();
    if (name == "sample") return sample();
    if (name == "mutate") return mutate();
    if (name == "make-cases") return make_cases();
    if (name == "run-target") return run_target();
    if (name == "analyze") return analyze();
    throw Error(ErrorCode::InvalidConfig, "unknown stage " + name);
  }

  std::vector<StageResult> run_all() {
    std::vector<StageResult> out;
    for (const auto& s : stage_names()) out.push_back(run_stage(s));
    return out;
  }

  /// Per-stage seeds, derived from the master seed.
  std::uint64_t seed(std::string_view stage, std::uint64_t index = 0) const {
    return derive_seed(cfg_.master_seed, stage, index);
  }

  struct TrainingRun {
    CellType cell;
    std::size_t depth;
    std::size_t split;
    std::size_t restart;
    std::string model() const { return layout::model_name(cell, depth); }
    fs::path checkpoint(const fs::path& root) const {
      return layout::checkpoints_dir(root) / model() /
             ("split" + std::to_string(split) + "-restart" + std::to_string(restart) + ".nfck");
    }
  };

  std::vector<TrainingRun> training_runs() const {
    std::vector<TrainingRun> runs;
    for (auto cell : cfg_.models.cells)
      for (std::size_t d = cfg_.models.min_depth; d <= cfg_.models.max_depth; ++d)
        for (std::size_t s = 0; s < cfg_.training.n_splits; ++s)
          for (std::size_t r = 0; r < cfg_.training.n_restarts; ++r) runs.push_back({cell, d, s, r});
    return runs;
  }

  StageResult gen_corpus() {
    return stage("gen-corpus", {}, config_slice({"corpus", "training"}), [&](Outputs& out) {
      const auto grammar = load_config_grammar();
      const auto corpus = generate_corpus(grammar, cfg_.corpus.n_tags, seed("corpus"));
      const auto splits = make_splits(corpus, cfg_.training.n_splits, cfg_.corpus.train_bytes, cfg_.corpus.val_bytes,
                                      seed("splits"));
      const auto text = corpus.text();
      nlohmann::json sj = {{"corpus_sha256", sha256_hex(text)},
                           {"grammar_sha256", grammar.hash()},
                           {"n_tags", corpus.lines.size()},
                           {"byte_size", corpus.byte_size},
                           {"corpus_seed", corpus.seed},
                           {"split_seed", seed("splits")},
                           {"splits", nlohmann::json::array()}};
      for (std::size_t i = 0; i < splits.splits.size(); ++i) {
        const auto& s = splits.splits[i];
        sj["splits"].push_back({{"id", "split" + std::to_string(i)},
                                {"train", {s.train.begin, s.train.end}},
                                {"validation", {s.validation.begin, s.validation.end}}});
      }
      out.write("corpus/corpus.txt", text);
      out.write("corpus/grammar.json", grammar.to_json().dump(2) + "\n");
      out.write("corpus/splits.json", sj.dump(2) + "\n");
      log("gen-corpus: " + std::to_string(corpus.lines.size()) + " tags, " + std::to_string(corpus.byte_size) +
          " bytes");
    });
  }

  StageResult train() {
    return stage("train", {"gen-corpus"}, config_slice({"models", "training"}), [&](Outputs& out) {
      fs::remove_all(layout::checkpoints_dir(root_));
      const auto text = read_file(layout::corpus_dir(root_) / "corpus.txt");
      const auto sj = nlohmann::json::parse(read_file(layout::corpus_dir(root_) / "splits.json"));
      const auto alphabet = Alphabet::from_text(text);
      const auto runs = training_runs();
      std::mutex mu;
      parallel_for(runs.size(), jobs_, [&](std::size_t i) {
        const auto& run = runs[i];
        const auto& split = sj.at("splits").at(run.split);
        const ByteRange tr{split.at("train")[0].get<std::uint64_t>(), split.at("train")[1].get<std::uint64_t>()};
        const ByteRange va{split.at("validation")[0].get<std::uint64_t>(),
                           split.at("validation")[1].get<std::uint64_t>()};
        ModelConfig mc;
        mc.cell = run.cell;
        mc.layers = run.depth;
        mc.hidden = cfg_.models.hidden;
        mc.dropout = cfg_.models.dropout;
        mc.loss = cfg_.models.loss;
        TrainConfig tc = cfg_.training;
        tc.seed = seed("train:" + run.model(), run.split * cfg_.training.n_restarts + run.restart);
        TrainOptions opts;
        opts.split_id = split.at("id").get<std::string>();
        opts.restart = run.restart;
        opts.on_epoch = [&](const EpochRecord& r) {
          log("train " + run.model() + " " + opts.split_id + "/r" + std::to_string(run.restart) + ": epoch " +
              std::to_string(r.epoch) + " train " + fmt6(r.train_loss) + " val " + fmt6(r.val_loss));
        };
        const auto cp = neurofuzz::train(mc, tc, alphabet, slice(text, tr), slice(text, va), opts);
        const auto path = run.checkpoint(root_);
        auto history = path;
        history.replace_extension(".history.csv");
        std::lock_guard lock(mu);
        out.write(rel(path), serialize_checkpoint(cp));
        out.write(rel(history), history_csv(cp.history));
      });
    });
  }

  StageResult sample() {
    return stage("sample", {"gen-corpus", "train"}, config_slice({"sampling"}), [&](Outputs& out) {
      clear_tag_lists([](const std::string& fam) { return fam == "dataset" || fam == "model"; });
      const auto corpus = Corpus::from_text(read_file(layout::corpus_dir(root_) / "corpus.txt"));
      const std::size_t n = cfg_.sampling.n_tags;
      if (n > corpus.lines.size())
        throw Error(ErrorCode::CorpusTooSmall, "cannot draw " + std::to_string(n) + " dataset tags from " +
                                                   std::to_string(corpus.lines.size()) + " corpus lines");
      for (std::size_t k = 0; k < cfg_.sampling.dataset_sets; ++k) {
        std::vector<std::size_t> idx(corpus.lines.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        RandomStream rng(seed("dataset", k));
        rng.shuffle(std::span<std::size_t>(idx));
        std::vector<std::string> tags;
        for (std::size_t i = 0; i < n; ++i) tags.push_back(corpus.lines[idx[i]]);
        const std::string prov = "dataset-" + std::to_string(k);
        write_tag_list(out, prov, tags, {{"seed", seed("dataset", k)}, {"source", "corpus"}});
      }

      std::vector<std::pair<CellType, std::size_t>> models;
      for (auto cell : cfg_.models.cells)
        for (std::size_t d = cfg_.models.min_depth; d <= cfg_.models.max_depth; ++d) models.emplace_back(cell, d);
      std::mutex mu;
      parallel_for(models.size(), jobs_, [&](std::size_t i) {
        const auto [cell, depth] = models[i];
        const auto name = layout::model_name(cell, depth);
        const auto [best, cp] = best_checkpoint(name);
        const auto s = seed("sample:" + name);
        const auto r = sample_tags(cp, n, s, cfg_.sampling.max_len, cfg_.sampling.temperature);
        nlohmann::json meta = {{"cell", std::string(to_string(cell))},
                               {"depth", depth},
                               {"checkpoint", rel(best)},
                               {"val_loss", cp.history.empty() ? nlohmann::json() : nlohmann::json(cp.history.back().val_loss)},
                               {"seed", s},
                               {"discarded", r.discarded},
                               {"max_len", cfg_.sampling.max_len},
                               {"temperature", cfg_.sampling.temperature}};
        std::lock_guard lock(mu);
        write_tag_list(out, "model-" + name, r.tags, meta);
        log("sample model-" + name + ": " + std::to_string(r.tags.size()) + " tags, " + std::to_string(r.discarded) +
            " discarded");
      });
    });
  }

  StageResult mutate() {
    return stage("mutate", {"gen-corpus", "sample"}, config_slice({"mutation"}), [&](Outputs& out) {
      clear_tag_lists([](const std::string& fam) { return fam == "mutation"; });
      const auto alphabet = Alphabet::from_text(read_file(layout::corpus_dir(root_) / "corpus.txt"));
      const auto tags = split_lines(read_file(layout::tag_list(root_, "dataset-0")));
      const auto s = seed("mutation");
      for (double p : cfg_.mutation_ladder) {
        MutationStats st;
        const auto mutated = mutate_tags(tags, p, alphabet, s, &st);
        write_tag_list(out, "mutation-p" + probability_label(p), mutated,
                       {{"probability", p},
                        {"seed", s},
                        {"source", "dataset-0"},
                        {"positions", st.positions},
                        {"replacements", st.replacements},
                        {"changed", st.changed}});
      }
    });
  }

  StageResult make_cases() {
    return stage("make-cases", {"sample", "mutate"}, config_slice({"sampling"}), [&](Outputs& out) {
      for (const auto& group : sorted_entries(layout::cases_dir(root_), [](auto& e) { return e.is_directory(); }))
        for (const auto& d : sorted_entries(group, [](auto& e) { return e.is_directory(); })) fs::remove_all(d);
      const auto& tpl = default_template();
      for (const auto& list : tag_lists()) {
        const auto prov = list.stem().string();
        auto meta_path = list;
        meta_path.replace_extension(".json");
        const auto meta = nlohmann::json::parse(read_file(meta_path));
        const auto tags = split_lines(read_file(list));
        for (const auto& set : make_case_sets(tags, cfg_.sampling.case_sizes, prov, meta, tpl)) {
          const auto dir = layout::group_dir(root_, prov) / set.name();
          write_case_set(set, dir, tpl);
          for (const auto& e : sorted_entries(dir, [](auto& x) { return x.is_regular_file(); })) out.record(rel(e));
        }
      }
    });
  }

  /// `cases_root` overrides where case sets are read from (default cases/).
  StageResult run_target(std::optional<fs::path> cases_root = std::nullopt) {
    const fs::path cases = cases_root.value_or(layout::cases_dir(root_));
    auto extra = config_slice({"target"});
    extra["cases"] = cases_root ? fs::absolute(*cases_root).string() : std::string();
    return stage("run-target", {"make-cases"}, extra, [&](Outputs& out) {
      fs::remove_all(layout::coverage_dir(root_));
      const auto& tpl = default_template();
      struct Job {
        fs::path html;  // empty: blank template
        std::string id;
        fs::path log;
      };
      std::vector<Job> jobs;
      for (std::size_t k = 0; k < cfg_.target.blank_runs; ++k) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "blank_%04zu", k);
        jobs.push_back({{}, buf, layout::blank_dir(root_) / (std::string(buf) + ".drcov.log")});
      }
      std::vector<fs::path> set_dirs;
      for (const auto& group : sorted_entries(cases, [](auto& e) { return e.is_directory(); }))
        for (const auto& d : sorted_entries(group, [](auto& e) { return e.is_directory(); }))
          if (fs::exists(d / "manifest.json")) set_dirs.push_back(d);
      if (set_dirs.empty()) throw Error(ErrorCode::MissingArtifacts, "no case sets under " + cases.string());
      for (const auto& d : set_dirs) {
        const auto manifest = nlohmann::json::parse(read_file(d / "manifest.json"));
        for (const auto& f : manifest.at("files")) {
          const auto file = f.at("file").get<std::string>();
          const auto id = file.substr(0, file.size() - 5);
          jobs.push_back({d / file, id, layout::coverage_dir(root_) / d.filename() / (id + ".drcov.log")});
        }
      }
      const fs::path work = root_ / ".work";
      if (cfg_.target.kind == "external") write_file(work / "blank.html", assemble_case({}, tpl).rendered_html);
      const auto timeout = std::chrono::milliseconds(static_cast<std::int64_t>(cfg_.target.timeout_s * 1000.0));
      std::mutex mu;
      nlohmann::json failures = nlohmann::json::array();
      std::atomic<std::size_t> done{0};
      parallel_for(jobs.size(), jobs_, [&](std::size_t i) {
        const auto& job = jobs[i];
        std::string bytes;
        if (cfg_.target.kind == "surrogate") {
          bytes = run_case(job.html.empty() ? assemble_case({}, tpl).rendered_html : read_file(job.html));
        } else {
          const auto input = job.html.empty() ? work / "blank.html" : job.html;
          try {
            bytes = write_drcov(run_external(cfg_.target.command, fs::absolute(input), fs::absolute(work / job.id),
                                             timeout));
          } catch (const Error& e) {
            // A blank run that fails leaves no baseline at all.
            if (job.html.empty()) throw;
            std::lock_guard lock(mu);
            failures.push_back({{"case", job.id}, {"error", std::string(to_string(e.code()))}, {"message", e.what()}});
            return;
          }
        }
        std::lock_guard lock(mu);
        out.write(rel(job.log), bytes);
        if (++done % 256 == 0) log("run-target: " + std::to_string(done.load()) + "/" + std::to_string(jobs.size()));
      });
      fs::remove_all(work);
      if (!failures.empty()) {
        std::sort(failures.begin(), failures.end(),
                  [](const auto& a, const auto& b) { return a.at("case") < b.at("case"); });
        out.write("coverage/failures.json", failures.dump(2) + "\n");
        log("run-target: " + std::to_string(failures.size()) + " cases failed; see coverage/failures.json");
      }
    });
  }

  /// Reads only stored artifacts, so deleting reports/ and rerunning
  /// reproduces it.
  StageResult analyze() {
    return stage("analyze", {"train", "make-cases", "run-target"}, nlohmann::json::object(), [&](Outputs& out) {
      fs::remove_all(layout::reports_dir(root_));
      for (const auto& [name, text] : aggregate(root_)) out.write("reports/" + name, text);
    });
  }

 private:
  /// Records every file a stage writes, with its canonical digest.
  class Outputs {
   public:
    explicit Outputs(const fs::path& root) : root_(root) {}
    void write(const std::string& rel, std::string_view bytes) {
      write_file(root_ / rel, bytes);
      record(rel);
    }
    void record(const std::string& rel) { files_[rel] = artifact_digest(root_ / rel); }
    const std::map<std::string, std::string>& files() const { return files_; }

   private:
    fs::path root_;
    std::map<std::string, std::string> files_;
  };

  fs::path stamp_path(const std::string& stage) const { return root_ / ".stamps" / (stage + ".json"); }

  std::optional<nlohmann::json> read_stamp(const std::string& stage) const {
    const auto p = stamp_path(stage);
    if (!fs::exists(p)) return std::nullopt;
    try {
      return nlohmann::json::parse(read_file(p));
    } catch (const nlohmann::json::exception&) {
      return std::nullopt;
    }
  }

  bool outputs_intact(const nlohmann::json& stamp) const {
    for (const auto& [file, digest] : stamp.at("outputs").items()) {
      const auto p = root_ / file;
      if (!fs::exists(p)) return false;
      try {
        if (artifact_digest(p) != digest.get<std::string>()) return false;
      } catch (const Error&) {
        return false;
      }
    }
    return true;
  }

  nlohmann::json config_slice(std::initializer_list<const char*> keys) const {
    const auto j = cfg_.to_json();
    nlohmann::json s = {{"master_seed", cfg_.master_seed}};
    for (const char* k : keys) s[k] = j.at(k);
    return s;
  }

  StageResult stage(const std::string& name, std::vector<std::string> upstream, nlohmann::json inputs,
                    const std::function<void(Outputs&)>& body) {
    nlohmann::json up = nlohmann::json::object();
    for (const auto& u : upstream) {
      const auto s = read_stamp(u);
      if (!s) throw Error(ErrorCode::MissingArtifacts, "stage " + name + " needs the output of " + u + " under " +
                                                           root_.string());
      up[u] = s->at("outputs");
    }
    if (name == "gen-corpus" && !cfg_.corpus.grammar.empty()) inputs["grammar_sha256"] = load_config_grammar().hash();
    const nlohmann::json key_doc = {{"stage", name},      {"tool_version", kToolVersion}, {"inputs", inputs},
                                    {"upstream", up},     {"template", default_template().hash()},
                                    {"surrogate_map", StaticBlockMap::instance().digest()}};
    const std::string key = sha256_hex(key_doc.dump());
    if (const auto s = read_stamp(name); s && s->value("key", "") == key && outputs_intact(*s)) {
      log(name + ": up to date, skipped");
      return {name, true, key};
    }
    fs::remove(stamp_path(name));
    Outputs out(root_);
    body(out);
    write_file(stamp_path(name), nlohmann::json({{"stage", name}, {"key", key}, {"outputs", out.files()}}).dump(2) + "\n");
    write_manifest();
    return {name, false, key};
  }

  void write_manifest() const {
    auto cfg = cfg_.to_json();
    cfg.erase("output_root");  // the tree must not depend on where it lives
    nlohmann::json stages = nlohmann::json::object();
    for (const auto& s : stage_names())
      if (const auto st = read_stamp(s)) stages[s] = {{"key", st->at("key")}, {"outputs", st->at("outputs")}};
    nlohmann::json seeds = {{"corpus", seed("corpus")}, {"splits", seed("splits")}, {"mutation", seed("mutation")}};
    for (std::size_t k = 0; k < cfg_.sampling.dataset_sets; ++k) seeds["dataset-" + std::to_string(k)] = seed("dataset", k);
    for (const auto& run : training_runs()) {
      const auto name = run.model();
      seeds["sample:" + name] = seed("sample:" + name);
      seeds["train:" + name + "/split" + std::to_string(run.split) + "-restart" + std::to_string(run.restart)] =
          seed("train:" + name, run.split * cfg_.training.n_restarts + run.restart);
    }
    const nlohmann::json m = {
        {"format", "neurofuzz-experiment"},
        {"tool_version", kToolVersion},
        {"checkpoint_version", kCheckpointVersion},
        {"template", {{"version", default_template().version}, {"sha256", default_template().hash()}}},
        {"surrogate_map",
         {{"version", StaticBlockMap::kVersion}, {"digest", StaticBlockMap::instance().digest()}}},
        {"master_seed", cfg_.master_seed},
        {"seeds", seeds},
        {"config", cfg},
        {"stages", stages}};
    write_file(layout::manifest(root_), m.dump(2) + "\n");
  }

  TagGrammar load_config_grammar() const {
    if (cfg_.corpus.grammar.empty()) return default_grammar();
    if (!fs::exists(cfg_.corpus.grammar))
      throw Error(ErrorCode::InvalidConfig, "grammar file not found: " + cfg_.corpus.grammar);
    TagGrammar g;
    try {
      g = TagGrammar::from_json(nlohmann::json::parse(read_file(cfg_.corpus.grammar)));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::InvalidGrammar, cfg_.corpus.grammar + ": " + e.what());
    }
    g.validate();
    return g;
  }

  std::string rel(const fs::path& p) const { return fs::relative(p, root_).generic_string(); }

  std::vector<fs::path> tag_lists() const {
    std::vector<fs::path> out;
    for (const auto& group : sorted_entries(layout::cases_dir(root_), [](auto& e) { return e.is_directory(); }))
      for (const auto& f : sorted_entries(group, [](auto& e) { return has_suffix(e.path(), ".tags"); })) out.push_back(f);
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.stem() < b.stem(); });
    return out;
  }

  void clear_tag_lists(const std::function<bool(const std::string&)>& family_matches) {
    for (const auto& group : sorted_entries(layout::cases_dir(root_), [](auto& e) { return e.is_directory(); })) {
      if (group.filename() == "dataset") {
        if (family_matches("dataset")) fs::remove_all(group);
      } else if (family_matches(layout::family(group.filename().string()))) {
        fs::remove_all(group);
      }
    }
  }

  void write_tag_list(Outputs& out, const std::string& prov, const std::vector<std::string>& tags,
                      nlohmann::json meta) {
    meta["provenance"] = prov;
    meta["family"] = layout::family(prov);
    meta["n_tags"] = tags.size();
    out.write(rel(layout::tag_list(root_, prov)), join_lines(tags));
    out.write(rel(layout::tag_metadata(root_, prov)), meta.dump(2) + "\n");
  }

  /// Lowest final validation loss among a model's checkpoints; ties keep
  /// the first in file order.
  std::pair<fs::path, Checkpoint> best_checkpoint(const std::string& model) const {
    const auto files =
        sorted_entries(layout::checkpoints_dir(root_) / model, [](auto& e) { return has_suffix(e.path(), ".nfck"); });
    if (files.empty()) throw Error(ErrorCode::MissingArtifacts, "no checkpoints for " + model);
    std::optional<std::pair<fs::path, Checkpoint>> best;
    double best_loss = 0;
    for (const auto& f : files) {
      auto cp = load_checkpoint(f);
      const double l = cp.history.empty() ? std::numeric_limits<double>::infinity() : cp.history.back().val_loss;
      if (!best || l < best_loss) {
        best_loss = l;
        best.emplace(f, std::move(cp));
      }
    }
    return std::move(*best);
  }

  void log(const std::string& msg) const {
    if (!log_) return;
    std::lock_guard lock(log_mu_);
    log_(msg);
  }

  ExperimentConfig cfg_;
  fs::path root_;
  std::size_t jobs_;
  Logger log_;
  mutable std::mutex log_mu_;
};

}  // namespace neurofuzz

#endif  // NEUROFUZZ_EXPERIMENT_HPP
