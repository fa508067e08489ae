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

// Experiment directory layout and the serial reduce that turns checkpoints,
// tag lists and coverage logs into the report CSVs.

#ifndef NEUROFUZZ_REPORT_HPP
#define NEUROFUZZ_REPORT_HPP

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "neurofuzz/analysis.hpp"
#include "neurofuzz/corpus_gen.hpp"
#include "neurofuzz/coverage.hpp"
#include "neurofuzz/error.hpp"
#include "neurofuzz/hash.hpp"
#include "neurofuzz/surrogate_target.hpp"
#include "neurofuzz/training.hpp"

namespace neurofuzz {

namespace fs = std::filesystem;

namespace layout {

inline fs::path corpus_dir(const fs::path& root) { return root / "corpus"; }
inline fs::path checkpoints_dir(const fs::path& root) { return root / "checkpoints"; }
inline fs::path cases_dir(const fs::path& root) { return root / "cases"; }
inline fs::path coverage_dir(const fs::path& root) { return root / "coverage"; }
inline fs::path reports_dir(const fs::path& root) { return root / "reports"; }
inline fs::path blank_dir(const fs::path& root) { return coverage_dir(root) / "blank"; }
inline fs::path manifest(const fs::path& root) { return root / "manifest.json"; }

inline std::string model_name(CellType cell, std::size_t depth) {
  return std::string(to_string(cell)) + "-l" + std::to_string(depth);
}

/// "dataset", "model" or "mutation": the text before the first dash.
inline std::string family(std::string_view provenance) {
  return std::string(provenance.substr(0, provenance.find('-')));
}

/// All dataset sets share cases/dataset; every other provenance has its own
/// directory.
inline fs::path group_dir(const fs::path& root, const std::string& provenance) {
  return cases_dir(root) / (family(provenance) == "dataset" ? std::string("dataset") : provenance);
}
inline fs::path tag_list(const fs::path& root, const std::string& provenance) {
  return group_dir(root, provenance) / (provenance + ".tags");
}
inline fs::path tag_metadata(const fs::path& root, const std::string& provenance) {
  return group_dir(root, provenance) / (provenance + ".json");
}

/// Splits a set name "prov_tN" into provenance and tags per case.
inline std::pair<std::string, std::size_t> parse_set_name(const std::string& name) {
  const auto at = name.rfind("_t");
  if (at == std::string::npos) throw Error(ErrorCode::MissingArtifacts, "unrecognized set directory " + name);
  return {name.substr(0, at), static_cast<std::size_t>(std::stoull(name.substr(at + 2)))};
}

}  // namespace layout

inline std::string join_lines(const std::vector<std::string>& lines) {
  std::string out;
  for (const auto& l : lines) {
    out += l;
    out += '\n';
  }
  return out;
}

inline std::vector<std::string> split_lines(std::string_view text) {
  std::vector<std::string> out;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    out.emplace_back(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
  }
  return out;
}

/// Six significant digits; an absent value is an empty field.
inline std::string fmt6(std::optional<double> v) {
  if (!v) return "";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", *v);
  return buf;
}

/// Sorted entries of `dir` passing `keep`; empty when `dir` is missing.
template <class Pred>
std::vector<fs::path> sorted_entries(const fs::path& dir, Pred keep) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir))
    if (keep(e)) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

inline bool has_suffix(const fs::path& p, std::string_view suffix) { return p.filename().string().ends_with(suffix); }

// ---- report rows --------------------------------------------------------------

struct LossRow {
  std::string cell;
  std::size_t depth = 0;
  std::size_t runs = 0;
  double mean = 0;
  std::optional<double> stddev;  // sample standard deviation; needs two runs
};

struct ErrorRateRow {
  std::string provenance;
  std::string family;
  std::size_t tags = 0;
  double mean = 0;
  nlohmann::json metadata;
};

struct CoverageSet {
  std::string name;
  std::string provenance;
  std::string family;
  std::size_t tags_per_case = 0;
  std::size_t cases = 0;
  BlockSet all;        // union over the set's cases, module-filtered
  BlockSet effective;  // minus the blank baseline
};

/// Final-epoch validation loss of every checkpoint, grouped by (cell, depth).
/// Checkpoints without history (never trained) are ignored.
inline std::vector<LossRow> val_loss_rows(const fs::path& root) {
  std::map<std::pair<std::string, std::size_t>, std::vector<double>> groups;
  for (const auto& model_dir : sorted_entries(layout::checkpoints_dir(root), [](auto& e) { return e.is_directory(); })) {
    for (const auto& f : sorted_entries(model_dir, [](auto& e) { return has_suffix(e.path(), ".nfck"); })) {
      const auto cp = load_checkpoint(f);
      if (cp.history.empty()) continue;
      groups[{std::string(to_string(cp.model.config.cell)), cp.model.config.layers}].push_back(cp.history.back().val_loss);
    }
  }
  std::vector<LossRow> rows;
  for (const auto& [key, values] : groups) {
    LossRow r{key.first, key.second, values.size(), 0.0, std::nullopt};
    for (double v : values) r.mean += v;
    r.mean /= static_cast<double>(values.size());
    if (values.size() > 1) {
      double ss = 0;
      for (double v : values) ss += (v - r.mean) * (v - r.mean);
      r.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    rows.push_back(r);
  }
  return rows;
}

inline TagGrammar load_grammar(const fs::path& root) {
  const auto path = layout::corpus_dir(root) / "grammar.json";
  if (!fs::exists(path)) throw Error(ErrorCode::MissingArtifacts, "missing " + path.string());
  return TagGrammar::from_json(nlohmann::json::parse(read_file(path)));
}

/// Error rate of every stored tag list, ordered by provenance.
inline std::vector<ErrorRateRow> error_rate_rows(const fs::path& root, const TagGrammar& grammar) {
  std::vector<ErrorRateRow> rows;
  for (const auto& group : sorted_entries(layout::cases_dir(root), [](auto& e) { return e.is_directory(); })) {
    for (const auto& f : sorted_entries(group, [](auto& e) { return has_suffix(e.path(), ".tags"); })) {
      const auto tags = split_lines(read_file(f));
      ErrorRateRow r;
      r.provenance = f.stem().string();
      r.family = layout::family(r.provenance);
      r.tags = tags.size();
      r.mean = error_rate(tags, grammar);
      auto meta = f;
      meta.replace_extension(".json");
      r.metadata = fs::exists(meta) ? nlohmann::json::parse(read_file(meta)) : nlohmann::json::object();
      rows.push_back(std::move(r));
    }
  }
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.provenance < b.provenance; });
  return rows;
}

inline std::vector<CoverageLog> read_logs(const fs::path& dir) {
  std::vector<CoverageLog> logs;
  for (const auto& f : sorted_entries(dir, [](auto& e) { return has_suffix(e.path(), ".drcov.log"); }))
    logs.push_back(parse_drcov(read_file(f)));
  return logs;
}

/// Module filter recorded in the experiment manifest, empty if absent.
inline std::string recorded_module_filter(const fs::path& root) {
  if (!fs::exists(layout::manifest(root))) return "";
  const auto m = nlohmann::json::parse(read_file(layout::manifest(root)));
  if (!m.contains("config")) return "";
  return m["config"].value(nlohmann::json::json_pointer("/target/module_filter"), std::string());
}

/// Effective blocks in the surrogate renderer that belong to recovery arms.
inline std::size_t recovery_block_count(const BlockSet& blocks) {
  const auto& map = StaticBlockMap::instance();
  std::size_t n = 0;
  for (const auto& b : blocks) {
    if (b.module != StaticBlockMap::kModule || b.offset < StaticBlockMap::kBaseOffset) continue;
    const std::size_t id = (b.offset - StaticBlockMap::kBaseOffset) / StaticBlockMap::kBlockSize;
    if (id < map.size() && is_recovery_arm(id)) ++n;
  }
  return n;
}

inline std::vector<CoverageSet> coverage_sets(const fs::path& root, const BlockSet& baseline,
                                              const std::string& module_filter) {
  std::vector<CoverageSet> out;
  for (const auto& dir : sorted_entries(layout::coverage_dir(root), [](auto& e) { return e.is_directory(); })) {
    if (dir.filename() == "blank") continue;
    const auto logs = read_logs(dir);
    if (logs.empty()) continue;
    CoverageSet s;
    s.name = dir.filename().string();
    std::tie(s.provenance, s.tags_per_case) = layout::parse_set_name(s.name);
    s.family = layout::family(s.provenance);
    s.cases = logs.size();
    s.all = union_of(logs, module_filter);
    s.effective = set_difference(s.all, baseline);
    out.push_back(std::move(s));
  }
  return out;
}

// ---- CSV rendering --------------------------------------------------------------

inline std::string loss_csv(const std::vector<LossRow>& rows) {
  std::string out = "cell,depth,runs,mean_val_loss,stddev_val_loss\n";
  for (const auto& r : rows)
    out += r.cell + "," + std::to_string(r.depth) + "," + std::to_string(r.runs) + "," + fmt6(r.mean) + "," +
           fmt6(r.stddev) + "\n";
  return out;
}

inline std::string error_rate_by_depth_csv(const std::vector<ErrorRateRow>& rows) {
  std::string out = "cell,depth,tags,mean_error_rate\n";
  std::vector<const ErrorRateRow*> models;
  for (const auto& r : rows)
    if (r.family == "model") models.push_back(&r);
  std::sort(models.begin(), models.end(), [](const auto* a, const auto* b) {
    const auto ka = std::make_pair(a->metadata.value("cell", ""), a->metadata.value("depth", std::size_t{0}));
    const auto kb = std::make_pair(b->metadata.value("cell", ""), b->metadata.value("depth", std::size_t{0}));
    return ka < kb;
  });
  for (const auto* r : models)
    out += r->metadata.value("cell", "") + "," + std::to_string(r->metadata.value("depth", std::size_t{0})) + "," +
           std::to_string(r->tags) + "," + fmt6(r->mean) + "\n";
  return out;
}

inline std::string error_rate_by_set_csv(const std::vector<ErrorRateRow>& rows) {
  std::string out = "provenance,family,tags,mean_error_rate\n";
  for (const auto& r : rows)
    out += r.provenance + "," + r.family + "," + std::to_string(r.tags) + "," + fmt6(r.mean) + "\n";
  return out;
}

/// One row per set, then min/mean/max of the dataset band per case size.
inline std::string unique_blocks_csv(const std::vector<CoverageSet>& sets, const std::string& module_filter) {
  std::string out = "set,family,provenance,tags_per_case,cases,blocks,effective_blocks,recovery_blocks\n";
  const bool surrogate = std::string(StaticBlockMap::kModule).find(module_filter) != std::string::npos;
  std::map<std::size_t, std::vector<double>> band;
  for (const auto& s : sets) {
    out += s.name + "," + s.family + "," + s.provenance + "," + std::to_string(s.tags_per_case) + "," +
           std::to_string(s.cases) + "," + std::to_string(s.all.size()) + "," + std::to_string(s.effective.size()) +
           "," + (surrogate ? std::to_string(recovery_block_count(s.effective)) : std::string()) + "\n";
    if (s.family == "dataset") band[s.tags_per_case].push_back(static_cast<double>(s.effective.size()));
  }
  for (const auto& [size, values] : band) {
    double mean = 0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    const std::string t = std::to_string(size);
    out += "dataset-band-min_t" + t + ",dataset-band,min," + t + ",,," + fmt6(*lo) + ",\n";
    out += "dataset-band-mean_t" + t + ",dataset-band,mean," + t + ",,," + fmt6(mean) + ",\n";
    out += "dataset-band-max_t" + t + ",dataset-band,max," + t + ",,," + fmt6(*hi) + ",\n";
  }
  return out;
}

/// Per case size: blocks each non-dataset set reaches that the largest
/// dataset set does not.
inline std::string diff_to_best_csv(const std::vector<CoverageSet>& sets) {
  std::string out = "tags_per_case,candidate,family,best_dataset,candidate_blocks,novel_blocks\n";
  std::map<std::size_t, std::pair<std::vector<NamedBlockSet>, std::vector<NamedBlockSet>>> by_size;
  for (const auto& s : sets) {
    auto& [candidates, references] = by_size[s.tags_per_case];
    (s.family == "dataset" ? references : candidates).emplace_back(s.name, s.effective);
  }
  for (const auto& [size, pair] : by_size) {
    const auto& [candidates, references] = pair;
    if (references.empty() || candidates.empty()) continue;
    const auto d = diff_to_best(candidates, references);
    for (std::size_t i = 0; i < candidates.size(); ++i)
      out += std::to_string(size) + "," + candidates[i].first + "," + layout::family(candidates[i].first) + "," +
             d.best + "," + std::to_string(candidates[i].second.size()) + "," + std::to_string(d.novel[i].second) +
             "\n";
  }
  return out;
}

/// Jaccard matrix over the model sets (every set when fewer than two
/// model sets exist).
inline std::string similarity_csv(const std::vector<CoverageSet>& sets) {
  std::vector<NamedBlockSet> chosen;
  for (const auto& s : sets)
    if (s.family == "model") chosen.emplace_back(s.name, s.effective);
  if (chosen.size() < 2) {
    chosen.clear();
    for (const auto& s : sets) chosen.emplace_back(s.name, s.effective);
  }
  std::string out = "set";
  for (const auto& c : chosen) out += "," + c.first;
  out += "\n";
  if (chosen.size() < 2) return out;
  const auto m = similarity_matrix(chosen);
  for (std::size_t i = 0; i < chosen.size(); ++i) {
    out += chosen[i].first;
    for (double v : m[i]) out += "," + fmt6(v);
    out += "\n";
  }
  return out;
}

/// Per case size, every unordered pair among the model sets and the best
/// dataset set.
inline std::string overlaps_csv(const std::vector<CoverageSet>& sets) {
  std::string out = "tags_per_case,set_a,set_b,size_a,size_b,intersection,containment_ab,containment_ba,jaccard\n";
  std::map<std::size_t, std::vector<const CoverageSet*>> by_size;
  std::map<std::size_t, const CoverageSet*> best;
  for (const auto& s : sets) {
    if (s.family == "model") by_size[s.tags_per_case].push_back(&s);
    if (s.family != "dataset") continue;
    auto& b = best[s.tags_per_case];
    if (!b || s.effective.size() > b->effective.size() ||
        (s.effective.size() == b->effective.size() && s.name < b->name))
      b = &s;
  }
  for (auto& [size, members] : by_size) {
    if (best.contains(size)) members.push_back(best[size]);
    for (std::size_t i = 0; i < members.size(); ++i) {
      for (std::size_t j = i + 1; j < members.size(); ++j) {
        const auto& a = *members[i];
        const auto& b = *members[j];
        const auto o = overlap(a.effective, b.effective);
        out += std::to_string(size) + "," + a.name + "," + b.name + "," + std::to_string(a.effective.size()) + "," +
               std::to_string(b.effective.size()) + "," + std::to_string(o.intersection) + "," +
               fmt6(o.containment_ab) + "," + fmt6(o.containment_ba) + "," + fmt6(o.jaccard) + "\n";
      }
    }
  }
  return out;
}

// ---- aggregate ------------------------------------------------------------------

/// File name -> CSV text.
using ReportBundle = std::map<std::string, std::string>;

/// Reads checkpoints/, cases/ (tag lists) and coverage/ and builds every
/// report. Absent inputs are listed together in one MissingArtifacts error.
inline ReportBundle aggregate(const fs::path& root) {
  std::vector<std::string> missing;
  auto any = [](const fs::path& dir, std::string_view suffix, bool recurse) {
    if (!fs::is_directory(dir)) return false;
    if (recurse) {
      for (const auto& e : fs::recursive_directory_iterator(dir))
        if (has_suffix(e.path(), suffix)) return true;
      return false;
    }
    for (const auto& e : fs::directory_iterator(dir))
      if (has_suffix(e.path(), suffix)) return true;
    return false;
  };
  if (!fs::exists(layout::corpus_dir(root) / "grammar.json")) missing.push_back("corpus/grammar.json");
  if (!any(layout::checkpoints_dir(root), ".nfck", true)) missing.push_back("checkpoints/*/*.nfck");
  if (!any(layout::cases_dir(root), ".tags", true)) missing.push_back("cases/*/*.tags");
  if (!any(layout::blank_dir(root), ".drcov.log", false)) missing.push_back("coverage/blank/*.drcov.log");
  bool set_logs = false;
  for (const auto& d : sorted_entries(layout::coverage_dir(root), [](auto& e) { return e.is_directory(); }))
    if (d.filename() != "blank" && any(d, ".drcov.log", false)) set_logs = true;
  if (!set_logs) missing.push_back("coverage/<set>/*.drcov.log");
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    throw Error(ErrorCode::MissingArtifacts, root.string() + " lacks " + list);
  }

  const auto grammar = load_grammar(root);
  const auto filter = recorded_module_filter(root);
  const auto baseline = blank_baseline(read_logs(layout::blank_dir(root)), filter);
  const auto sets = coverage_sets(root, baseline, filter);
  const auto errors = error_rate_rows(root, grammar);

  ReportBundle b;
  b["val_loss_by_depth.csv"] = loss_csv(val_loss_rows(root));
  b["error_rate_by_depth.csv"] = error_rate_by_depth_csv(errors);
  b["error_rate_by_set.csv"] = error_rate_by_set_csv(errors);
  b["unique_blocks.csv"] = unique_blocks_csv(sets, filter);
  b["diff_to_best.csv"] = diff_to_best_csv(sets);
  b["similarity.csv"] = similarity_csv(sets);
  b["overlaps.csv"] = overlaps_csv(sets);
  return b;
}

inline void write_reports(const ReportBundle& bundle, const fs::path& dir) {
  fs::create_directories(dir);
  for (const auto& [name, text] : bundle) write_file(dir / name, text);
}

}  // namespace neurofuzz

#endif  // NEUROFUZZ_REPORT_HPP
