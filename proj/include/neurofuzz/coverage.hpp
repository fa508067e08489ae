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

// drcov (version 2) coverage logs and set algebra over basic-block
// identities.
//
// File layout:
//   DRCOV VERSION: 2
//   DRCOV FLAVOR: <text>
//   Module Table: version <v>, count <m>
//   Columns: id, base, end, ..., path
//   <m module lines>
//   BB Table: <n> bbs
//   <n binary records: u32 start, u16 size, u16 module id, little-endian>

#ifndef NEUROFUZZ_COVERAGE_HPP
#define NEUROFUZZ_COVERAGE_HPP

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "neurofuzz/byte_io.hpp"
#include "neurofuzz/error.hpp"

namespace neurofuzz {

struct ModuleEntry {
  std::uint32_t id = 0;
  std::uint64_t base = 0;
  std::uint64_t end = 0;
  std::string path;
  std::string raw_line;  // exact text as read; empty for entries built in code
};

struct BlockRecord {
  std::uint32_t start = 0;  // offset from module base
  std::uint16_t size = 0;
  std::uint16_t module_id = 0;
  auto operator<=>(const BlockRecord&) const = default;
};

struct CoverageLog {
  std::uint32_t version = 2;
  std::string flavor = "drcov";
  std::uint32_t module_table_version = 2;
  std::vector<std::string> columns = {"id", "base", "end", "entry", "checksum", "timestamp", "path"};
  std::vector<ModuleEntry> modules;
  std::vector<BlockRecord> blocks;
};

namespace detail {

inline std::string join_columns(const std::vector<std::string>& cols) {
  std::string s;
  for (std::size_t i = 0; i < cols.size(); ++i) s += (i ? ", " : "") + cols[i];
  return s;
}

inline std::string hex16(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "0x%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string format_module_line(const ModuleEntry& m, const std::vector<std::string>& columns) {
  std::string line;
  char idbuf[16];
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (i) line += ", ";
    const auto& c = columns[i];
    if (c == "id") {
      std::snprintf(idbuf, sizeof idbuf, "%2u", m.id);
      line += idbuf;
    } else if (c == "base" || c == "start") {
      line += hex16(m.base);
    } else if (c == "end") {
      line += hex16(m.end);
    } else if (c == "path") {
      line += m.path;
    } else if (c == "checksum" || c == "timestamp") {
      line += "0x00000000";
    } else {
      line += hex16(0);
    }
  }
  return line;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::optional<std::uint64_t> parse_number(std::string_view s) {
  s = trim(s);
  int base = 10;
  if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
    s.remove_prefix(2);
    base = 16;
  }
  if (s.empty()) return std::nullopt;
  std::uint64_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v, base);
  if (ec != std::errc() || p != s.data() + s.size()) return std::nullopt;
  return v;
}

// Reads text lines while tracking byte offsets.
class LineReader {
 public:
  explicit LineReader(std::string_view data) : data_(data) {}
  std::size_t pos() const { return pos_; }

  std::string_view next(const char* what) {
    const std::size_t nl = data_.find('\n', pos_);
    if (nl == std::string_view::npos) {
      throw Error(ErrorCode::MalformedHeader, std::string("missing ") + what + " line", pos_);
    }
    auto line = data_.substr(pos_, nl - pos_);
    pos_ = nl + 1;
    return line;
  }

 private:
  std::string_view data_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/// Serializes a log. Module lines parsed from a file are written back
/// verbatim, so write_drcov(parse_drcov(f)) == f.
inline std::string write_drcov(const CoverageLog& log) {
  std::string out = "DRCOV VERSION: " + std::to_string(log.version) + "\n";
  out += "DRCOV FLAVOR: " + log.flavor + "\n";
  out += "Module Table: version " + std::to_string(log.module_table_version) + ", count " +
         std::to_string(log.modules.size()) + "\n";
  out += "Columns: " + detail::join_columns(log.columns) + "\n";
  for (const auto& m : log.modules) {
    out += m.raw_line.empty() ? detail::format_module_line(m, log.columns) : m.raw_line;
    out += '\n';
  }
  out += "BB Table: " + std::to_string(log.blocks.size()) + " bbs\n";
  for (const auto& b : log.blocks) {
    put_le<std::uint32_t>(out, b.start);
    put_le<std::uint16_t>(out, b.size);
    put_le<std::uint16_t>(out, b.module_id);
  }
  return out;
}

inline CoverageLog parse_drcov(std::string_view data) {
  using detail::parse_number;
  CoverageLog log;
  detail::LineReader lines(data);

  std::size_t at = lines.pos();
  auto line = lines.next("version");
  if (line != "DRCOV VERSION: 2") {
    throw Error(ErrorCode::MalformedHeader, "expected 'DRCOV VERSION: 2', found '" + std::string(line.substr(0, 64)) + "'",
                at);
  }
  at = lines.pos();
  line = lines.next("flavor");
  if (!line.starts_with("DRCOV FLAVOR: ")) throw Error(ErrorCode::MalformedHeader, "expected flavor line", at);
  log.flavor = std::string(line.substr(14));

  at = lines.pos();
  line = lines.next("module table");
  constexpr std::string_view kTable = "Module Table: version ";
  const auto comma = line.find(", count ");
  if (!line.starts_with(kTable) || comma == std::string_view::npos)
    throw Error(ErrorCode::MalformedHeader, "expected 'Module Table: version V, count N'", at);
  const auto table_version = parse_number(line.substr(kTable.size(), comma - kTable.size()));
  const auto module_count = parse_number(line.substr(comma + 8));
  if (!table_version || !module_count || *table_version > UINT32_MAX)
    throw Error(ErrorCode::MalformedHeader, "bad module table header", at);
  log.module_table_version = static_cast<std::uint32_t>(*table_version);
  if (line != "Module Table: version " + std::to_string(*table_version) + ", count " + std::to_string(*module_count))
    throw Error(ErrorCode::MalformedHeader, "non-canonical module table header", at);

  at = lines.pos();
  line = lines.next("columns");
  if (!line.starts_with("Columns: ")) throw Error(ErrorCode::MalformedHeader, "expected 'Columns:' line", at);
  log.columns.clear();
  for (auto rest = line.substr(9);;) {
    const auto c = rest.find(',');
    log.columns.emplace_back(detail::trim(rest.substr(0, c)));
    if (c == std::string_view::npos) break;
    rest = rest.substr(c + 1);
  }
  if (line != "Columns: " + detail::join_columns(log.columns))
    throw Error(ErrorCode::MalformedHeader, "non-canonical column list", at);
  auto column = [&](std::initializer_list<std::string_view> names) -> std::size_t {
    for (std::size_t i = 0; i < log.columns.size(); ++i)
      for (auto n : names)
        if (log.columns[i] == n) return i;
    return SIZE_MAX;
  };
  const std::size_t c_id = column({"id"}), c_base = column({"base", "start"}), c_end = column({"end"}),
                    c_path = column({"path"});
  if (c_id == SIZE_MAX || c_base == SIZE_MAX || c_end == SIZE_MAX || c_path != log.columns.size() - 1)
    throw Error(ErrorCode::MalformedHeader, "module columns must include id, base/start, end and end with path", at);

  for (std::uint64_t i = 0; i < *module_count; ++i) {
    at = lines.pos();
    line = lines.next("module");
    std::vector<std::string_view> fields;
    auto rest = line;
    for (std::size_t k = 0; k + 1 < log.columns.size(); ++k) {
      const auto c = rest.find(',');
      if (c == std::string_view::npos) throw Error(ErrorCode::MalformedHeader, "module line has too few fields", at);
      fields.push_back(rest.substr(0, c));
      rest = rest.substr(c + 1);
    }
    fields.push_back(rest);
    ModuleEntry m;
    const auto id = parse_number(fields[c_id]);
    const auto base = parse_number(fields[c_base]);
    const auto end = parse_number(fields[c_end]);
    if (!id || !base || !end || *id > UINT32_MAX) throw Error(ErrorCode::MalformedHeader, "bad module field", at);
    if (*base >= *end) throw Error(ErrorCode::MalformedHeader, "module base not below end", at);
    m.id = static_cast<std::uint32_t>(*id);
    m.base = *base;
    m.end = *end;
    m.path = std::string(detail::trim(fields[c_path]));
    m.raw_line = std::string(line);
    log.modules.push_back(std::move(m));
  }

  at = lines.pos();
  line = lines.next("block table");
  if (!line.starts_with("BB Table: ") || !line.ends_with(" bbs"))
    throw Error(ErrorCode::MalformedHeader, "expected 'BB Table: N bbs'", at);
  const auto n_blocks = parse_number(line.substr(10, line.size() - 14));
  if (!n_blocks || line != "BB Table: " + std::to_string(*n_blocks) + " bbs")
    throw Error(ErrorCode::MalformedHeader, "bad block count", at);

  const std::size_t table = lines.pos();
  const std::size_t available = (data.size() - table) / 8;
  if (available < *n_blocks) {
    throw Error(ErrorCode::TruncatedBlockTable,
                "declared " + std::to_string(*n_blocks) + " blocks, found " + std::to_string(available),
                table + available * 8);
  }
  ByteReader in(data, ErrorCode::TruncatedBlockTable, table);
  log.blocks.resize(static_cast<std::size_t>(*n_blocks));
  for (auto& b : log.blocks) {
    const std::size_t rec = in.pos();
    b.start = in.get_le<std::uint32_t>("block start");
    b.size = in.get_le<std::uint16_t>("block size");
    b.module_id = in.get_le<std::uint16_t>("block module");
    if (b.module_id >= log.modules.size()) {
      throw Error(ErrorCode::BadModuleIndex,
                  "block refers to module " + std::to_string(b.module_id) + " of " + std::to_string(log.modules.size()),
                  rec + 6);
    }
  }
  if (!in.at_end()) throw Error(ErrorCode::MalformedHeader, "trailing data after block table", in.pos());
  return log;
}

// ---- block sets ---------------------------------------------------------------

struct BlockId {
  std::string module;
  std::uint32_t offset = 0;
  auto operator<=>(const BlockId&) const = default;
};

/// Sorted, duplicate-free set of block identities. Size is not part of a
/// block's identity.
class BlockSet {
 public:
  BlockSet() = default;
  explicit BlockSet(std::vector<BlockId> ids) : ids_(std::move(ids)) {
    std::sort(ids_.begin(), ids_.end());
    ids_.erase(std::unique(ids_.begin(), ids_.end()), ids_.end());
  }

  std::size_t size() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }
  bool contains(const BlockId& id) const { return std::binary_search(ids_.begin(), ids_.end(), id); }
  const std::vector<BlockId>& ids() const { return ids_; }
  auto begin() const { return ids_.begin(); }
  auto end() const { return ids_.end(); }
  bool operator==(const BlockSet&) const = default;

  friend BlockSet set_union(const BlockSet& a, const BlockSet& b) {
    BlockSet r;
    std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(r.ids_));
    return r;
  }
  friend BlockSet set_intersection(const BlockSet& a, const BlockSet& b) {
    BlockSet r;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(r.ids_));
    return r;
  }
  friend BlockSet set_difference(const BlockSet& a, const BlockSet& b) {
    BlockSet r;
    std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(r.ids_));
    return r;
  }

 private:
  std::vector<BlockId> ids_;
};

inline std::size_t intersection_size(const BlockSet& a, const BlockSet& b) {
  std::size_t n = 0;
  auto i = a.begin(), j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (*i < *j) {
      ++i;
    } else if (*j < *i) {
      ++j;
    } else {
      ++n, ++i, ++j;
    }
  }
  return n;
}

/// Blocks of modules whose path contains `module_filter` (empty matches all).
inline BlockSet block_set(const CoverageLog& log, std::string_view module_filter) {
  std::vector<BlockId> ids;
  for (const auto& b : log.blocks) {
    const auto& path = log.modules.at(b.module_id).path;
    if (path.find(module_filter) != std::string::npos) ids.push_back({path, b.start});
  }
  return BlockSet(std::move(ids));
}

inline BlockSet union_of(const std::vector<CoverageLog>& logs, std::string_view module_filter) {
  std::vector<BlockId> ids;
  for (const auto& log : logs)
    for (auto& id : block_set(log, module_filter)) ids.push_back(id);
  return BlockSet(std::move(ids));
}

/// Union over repeated runs of the blank template.
inline BlockSet blank_baseline(const std::vector<CoverageLog>& logs, std::string_view module_filter) {
  if (logs.empty()) throw Error(ErrorCode::EmptyInput, "blank baseline needs at least one run");
  return union_of(logs, module_filter);
}

/// Blocks reached by any case and never by the blank template.
inline BlockSet effective_blocks(const std::vector<CoverageLog>& case_logs, const BlockSet& baseline,
                                 std::string_view module_filter) {
  return set_difference(union_of(case_logs, module_filter), baseline);
}

/// Ratios are empty when their denominator set is empty.
struct Overlap {
  std::size_t intersection = 0;
  std::optional<double> containment_ab;  // |A n B| / |A|
  std::optional<double> containment_ba;  // |A n B| / |B|
  std::optional<double> jaccard;         // |A n B| / |A u B|
};

inline Overlap overlap(const BlockSet& a, const BlockSet& b) {
  Overlap o;
  o.intersection = intersection_size(a, b);
  const double n = static_cast<double>(o.intersection);
  if (!a.empty()) o.containment_ab = n / static_cast<double>(a.size());
  if (!b.empty()) o.containment_ba = n / static_cast<double>(b.size());
  const std::size_t uni = a.size() + b.size() - o.intersection;
  if (uni > 0) o.jaccard = n / static_cast<double>(uni);
  return o;
}

using NamedBlockSet = std::pair<std::string, BlockSet>;

struct DiffToBest {
  std::string best;
  std::vector<std::pair<std::string, std::size_t>> novel;  // per candidate: |candidate \ best|
};

/// The best reference is the largest one; equal sizes go to the
/// lexicographically smallest name.
inline DiffToBest diff_to_best(const std::vector<NamedBlockSet>& candidates,
                               const std::vector<NamedBlockSet>& references) {
  if (references.empty()) throw Error(ErrorCode::EmptyInput, "diff_to_best needs at least one reference set");
  const NamedBlockSet* best = &references.front();
  for (const auto& r : references) {
    if (r.second.size() > best->second.size() || (r.second.size() == best->second.size() && r.first < best->first))
      best = &r;
  }
  DiffToBest d;
  d.best = best->first;
  for (const auto& [name, set] : candidates) d.novel.emplace_back(name, set.size() - intersection_size(set, best->second));
  return d;
}

/// Pairwise Jaccard similarity; the diagonal is 1 and two empty sets count
/// as identical.
inline std::vector<std::vector<double>> similarity_matrix(const std::vector<NamedBlockSet>& sets) {
  if (sets.size() < 2) throw Error(ErrorCode::EmptyInput, "similarity matrix needs at least two sets");
  const std::size_t n = sets.size();
  std::vector<std::vector<double>> m(n, std::vector<double>(n, 1.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) m[i][j] = m[j][i] = overlap(sets[i].second, sets[j].second).jaccard.value_or(1.0);
  return m;
}

}  // namespace neurofuzz

#endif  // NEUROFUZZ_COVERAGE_HPP
