#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace vbd::experiment {

struct Summary {
  double mean = 0;
  double sd = 0;  // sample standard deviation, 0 for a single run
  int n = 0;
};

Summary summarize(const std::vector<double>& xs);

/// One table row: a variant averaged over runs.
struct ReportRow {
  std::string variant;
  std::map<std::string, Summary> metrics;  // sr, asr, f1bt, ftr, activation, ood_activation, ood_asr
};

struct SweepRow {
  double k = 0;
  std::string variant;
  std::map<std::string, Summary> metrics;
};

struct Report {
  std::vector<ReportRow> rows;   // in the fixed variant order, absent variants skipped
  std::vector<SweepRow> sweep;   // sorted by k, then variant
  std::string scenario_hash;
  std::vector<std::string> config_hashes;
};

/// Collects every eval/*/metrics.json (and sweep/k_*/eval/*/metrics.json)
/// under the run directories. Throws ConfigError when the runs were evaluated
/// on different scenario sets and MissingArtifactError when nothing is found.
Report collect_report(const std::vector<std::filesystem::path>& runs);

/// Writes report.json, report.md, ftr.svg and, when sweep data exists,
/// ksweep.svg into `out`.
void write_report(const Report& r, const std::filesystem::path& out);

nlohmann::json to_json(const Report& r);
std::string markdown_table(const Report& r);
std::string ftr_bar_svg(const Report& r);
std::string ksweep_svg(const Report& r);

}  // namespace vbd::experiment
