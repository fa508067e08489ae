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


// neurofuzz command line: one subcommand per pipeline stage plus run-all.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "neurofuzz/neurofuzz.hpp"

namespace {

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::size_t jobs = 1;
  bool quiet = false;
};

struct TargetOverrides {
  std::string target;
  std::string cmd;
  std::string cases;
  std::optional<double> timeout;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "Experiment config JSON")->required();
  sub->add_option("--out", c.out, "Artifact root (default: the config's output_root)");
  sub->add_option("--seed", c.seed, "Override the master seed");
  sub->add_option("--jobs", c.jobs, "Parallel workers for training and target runs")->check(CLI::PositiveNumber);
  sub->add_flag("--quiet", c.quiet, "Suppress progress lines");
}

int fail(const std::string& code, const std::string& message, std::optional<std::uint64_t> offset = {}) {
  nlohmann::json j = {{"error", code}, {"message", message}};
  if (offset) j["offset"] = *offset;
  std::cerr << j.dump() << std::endl;
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"neurofuzz: neural test-case generation and coverage experiments"};
  app.require_subcommand(1);
  Common common;
  TargetOverrides target;

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"gen-corpus", "Generate the tag corpus and train/validation splits"},
      {"train", "Train every model of the sweep"},
      {"sample", "Sample tags from each model's best checkpoint and draw dataset tag sets"},
      {"mutate", "Build the mutation baseline tag sets"},
      {"make-cases", "Assemble HTML test cases from all tag sets"},
      {"run-target", "Run every test case and the blank template through the target"},
      {"analyze", "Write the report CSVs"},
      {"run-all", "Run every stage in order"}};
  std::vector<CLI::App*> subs;
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    add_common(sub, common);
    subs.push_back(sub);
  }
  for (auto* sub : {app.get_subcommand("run-target"), app.get_subcommand("run-all")}) {
    sub->add_option("--target", target.target, "surrogate or external")->check(CLI::IsMember({"surrogate", "external"}));
    sub->add_option("--cmd", target.cmd, "External command template; {case} and {out} are substituted");
    sub->add_option("--timeout", target.timeout, "Per-case timeout in seconds");
  }
  app.get_subcommand("run-target")->add_option("--cases", target.cases, "Case-set root (default: <out>/cases)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::Error& e) {
    fail("Usage", e.what());
    return 64;
  }

  std::string command;
  for (auto* sub : subs)
    if (sub->parsed()) command = sub->get_name();

  try {
    auto cfg = neurofuzz::ExperimentConfig::load(common.config);
    if (common.seed) cfg.master_seed = *common.seed;
    if (!target.target.empty()) cfg.target.kind = target.target;
    if (!target.cmd.empty()) cfg.target.command = target.cmd;
    if (target.timeout) cfg.target.timeout_s = *target.timeout;
    const std::filesystem::path root = common.out.empty() ? std::filesystem::path(cfg.output_root) : std::filesystem::path(common.out);
    neurofuzz::Experiment::Logger logger;
    if (!common.quiet) logger = [](const std::string& m) { std::cout << m << std::endl; };
    neurofuzz::Experiment exp(cfg, root, common.jobs, logger);

    std::vector<neurofuzz::StageResult> results;
    if (command == "run-all") {
      results = exp.run_all();
    } else if (command == "run-target") {
      std::optional<std::filesystem::path> cases;
      if (!target.cases.empty()) cases = target.cases;
      results.push_back(exp.run_target(cases));
    } else {
      results.push_back(exp.run_stage(command));
    }
    for (const auto& r : results)
      std::cout << nlohmann::json({{"stage", r.stage}, {"status", r.skipped ? "skipped" : "done"}, {"key", r.key}}).dump()
                << std::endl;
    return 0;
  } catch (const neurofuzz::Error& e) {
    return fail(std::string(neurofuzz::to_string(e.code())), e.what(), e.offset());
  } catch (const std::exception& e) {
    return fail("Internal", e.what());
  }
}
