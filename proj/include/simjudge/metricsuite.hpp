// Copyright 2026 The simjudge Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "simjudge/corpus.hpp"
#include "simjudge/rewardlab.hpp"
#include "simjudge/videocheck.hpp"

namespace simjudge {

struct ResponseRecord {
  std::string scenario_id;
  int slot = 0;
  StageFlags flags;
  std::optional<RewardResult> reward;
  std::map<std::string, std::string> provenance;  // stage -> content hash
};

// Percentages in [0, 100].
struct StageRates {
  double executable = 0.0;
  double rendered = 0.0;
  double playable = 0.0;
  double accurate = 0.0;

  bool monotone() const noexcept {
    return executable >= rendered && rendered >= playable && playable >= accurate;
  }
  bool operator==(const StageRates&) const = default;
};

// Mean over scenarios of the mean over k slots. Slots without a record count
// as all-false; the denominator is always k * #scenarios. Throws
// Error(kEmptyRun) for no scenarios, Error(kUnknownScenario) for a record
// outside `scenario_ids`, Error(kInvalidArgument) for a slot outside [0, k)
// or a repeated (scenario, slot).
StageRates stage_rates_avg(std::span<const ResponseRecord> records,
                           std::span<const std::string> scenario_ids, int k);

// Percent of scenarios with at least one slot passing each stage.
StageRates stage_rates_pass(std::span<const ResponseRecord> records,
                            std::span<const std::string> scenario_ids, int k);

struct DomainRow {
  Domain domain = Domain::kMechanics;
  std::size_t scenarios = 0;
  StageRates avg;
  StageRates pass;
};

// One row per domain present, in canonical domain order. Throws
// Error(kUnknownScenario) for ids missing from `domains`.
std::vector<DomainRow> per_domain_breakdown(std::span<const ResponseRecord> records,
                                            std::span<const std::string> scenario_ids,
                                            const std::map<std::string, Domain, std::less<>>& domains,
                                            int k);

struct ConfusionCounts {
  std::uint64_t tt = 0;  // judge true, human true
  std::uint64_t ff = 0;
  std::uint64_t tf = 0;  // judge true, human false
  std::uint64_t ft = 0;
};

// 100 * (tt + ff) / total. Throws Error(kEmptyCounts).
double agreement_rate(const ConfusionCounts& counts);

// Round half away from zero to one decimal.
double round1(double value);

struct ModelRow {
  std::string model;
  StageRates avg;
  StageRates pass;
  std::vector<DomainRow> domains;
};

struct BenchmarkReport {
  int k = 0;
  std::vector<ModelRow> rows;
  nlohmann::json metadata = nlohmann::json::object();

  // Throws Error(kInternal) when any aggregate breaks the stage ladder.
  void check_ladder() const;
};

nlohmann::json to_json(const BenchmarkReport& r);
BenchmarkReport report_from_json(const nlohmann::json& j);

enum class ReportFormat { kTable, kCsv, kMarkdown };

std::optional<ReportFormat> parse_report_format(std::string_view s);

// Deterministic; numbers at one decimal.
std::string emit_report(const BenchmarkReport& report, ReportFormat format);

// Inverse of the CSV form (values come back rounded to one decimal).
BenchmarkReport parse_report_csv(std::string_view csv);

}  // namespace simjudge
