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

#include "simjudge/metricsuite.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <unordered_map>

#include <fmt/format.h>

#include "simjudge/error.hpp"

namespace simjudge {

using nlohmann::json;

namespace {

// scenario index -> per-slot flags (missing slots stay all-false).
std::vector<std::vector<StageFlags>> slot_matrix(std::span<const ResponseRecord> records,
                                                 std::span<const std::string> scenario_ids, int k) {
  if (scenario_ids.empty()) throw Error(ErrorCode::kEmptyRun, "no scenarios in run");
  if (k < 1) throw Error(ErrorCode::kInvalidArgument, "k must be >= 1");
  std::unordered_map<std::string_view, std::size_t> index;
  for (std::size_t i = 0; i < scenario_ids.size(); ++i) {
    if (!index.emplace(scenario_ids[i], i).second) {
      throw Error(ErrorCode::kInvalidArgument, "duplicate scenario id " + scenario_ids[i]);
    }
  }
  std::vector<std::vector<StageFlags>> m(scenario_ids.size(),
                                         std::vector<StageFlags>(static_cast<std::size_t>(k)));
  std::vector<std::vector<bool>> seen(scenario_ids.size(), std::vector<bool>(static_cast<std::size_t>(k)));
  for (const auto& r : records) {
    auto it = index.find(r.scenario_id);
    if (it == index.end()) throw Error(ErrorCode::kUnknownScenario, "record for unknown scenario " + r.scenario_id);
    if (r.slot < 0 || r.slot >= k) {
      throw Error(ErrorCode::kInvalidArgument, fmt::format("slot {} outside [0, {})", r.slot, k));
    }
    const auto s = static_cast<std::size_t>(r.slot);
    if (seen[it->second][s]) {
      throw Error(ErrorCode::kInvalidArgument,
                  fmt::format("duplicate record for ({}, {})", r.scenario_id, r.slot));
    }
    seen[it->second][s] = true;
    m[it->second][s] = r.flags;
  }
  return m;
}

struct Tally {
  double e = 0, r = 0, p = 0, a = 0;
  void add(const StageFlags& f, double w) {
    e += f.executable() * w;
    r += f.rendered() * w;
    p += f.playable() * w;
    a += f.accurate() * w;
  }
};

StageRates percent(const Tally& t, double n) {
  return {100.0 * t.e / n, 100.0 * t.r / n, 100.0 * t.p / n, 100.0 * t.a / n};
}

}  // namespace

StageRates stage_rates_avg(std::span<const ResponseRecord> records,
                           std::span<const std::string> scenario_ids, int k) {
  const auto m = slot_matrix(records, scenario_ids, k);
  Tally scenario_sum;
  for (const auto& slots : m) {
    Tally per;
    for (const auto& f : slots) per.add(f, 1.0);
    scenario_sum.e += per.e / k;
    scenario_sum.r += per.r / k;
    scenario_sum.p += per.p / k;
    scenario_sum.a += per.a / k;
  }
  return percent(scenario_sum, static_cast<double>(m.size()));
}

StageRates stage_rates_pass(std::span<const ResponseRecord> records,
                            std::span<const std::string> scenario_ids, int k) {
  const auto m = slot_matrix(records, scenario_ids, k);
  Tally t;
  for (const auto& slots : m) {
    auto any = [&](auto pred) { return std::any_of(slots.begin(), slots.end(), pred); };
    t.e += any([](const StageFlags& f) { return f.executable(); });
    t.r += any([](const StageFlags& f) { return f.rendered(); });
    t.p += any([](const StageFlags& f) { return f.playable(); });
    t.a += any([](const StageFlags& f) { return f.accurate(); });
  }
  return percent(t, static_cast<double>(m.size()));
}

std::vector<DomainRow> per_domain_breakdown(std::span<const ResponseRecord> records,
                                            std::span<const std::string> scenario_ids,
                                            const std::map<std::string, Domain, std::less<>>& domains,
                                            int k) {
  std::map<Domain, std::vector<std::string>> ids;
  std::unordered_map<std::string, Domain> of;
  for (const auto& id : scenario_ids) {
    auto it = domains.find(id);
    if (it == domains.end()) throw Error(ErrorCode::kUnknownScenario, "no domain for scenario " + id);
    ids[it->second].push_back(id);
    of.emplace(id, it->second);
  }
  std::map<Domain, std::vector<ResponseRecord>> recs;
  for (const auto& r : records) {
    auto it = of.find(r.scenario_id);
    if (it == of.end()) throw Error(ErrorCode::kUnknownScenario, "record for unknown scenario " + r.scenario_id);
    recs[it->second].push_back(r);
  }
  std::vector<DomainRow> rows;
  for (Domain d : kAllDomains) {
    auto it = ids.find(d);
    if (it == ids.end()) continue;
    const auto& part = recs[d];
    rows.push_back({d, it->second.size(), stage_rates_avg(part, it->second, k),
                    stage_rates_pass(part, it->second, k)});
  }
  return rows;
}

double agreement_rate(const ConfusionCounts& c) {
  const auto total = c.tt + c.ff + c.tf + c.ft;
  if (total == 0) throw Error(ErrorCode::kEmptyCounts, "agreement needs at least one labelled item");
  return 100.0 * static_cast<double>(c.tt + c.ff) / static_cast<double>(total);
}

double round1(double value) { return std::round(value * 10.0) / 10.0; }

void BenchmarkReport::check_ladder() const {
  for (const auto& row : rows) {
    auto check = [&](const StageRates& r, std::string_view what) {
      if (!r.monotone()) {
        throw Error(ErrorCode::kInternal,
                    fmt::format("report row '{}' ({}) breaks the stage ladder", row.model, what));
      }
    };
    check(row.avg, "avg");
    check(row.pass, "pass");
    for (const auto& d : row.domains) {
      check(d.avg, domain_label(d.domain));
      check(d.pass, domain_label(d.domain));
    }
  }
}

namespace {

json rates_json(const StageRates& r) {
  return {{"executable", r.executable}, {"rendered", r.rendered},
          {"playable", r.playable},     {"accurate", r.accurate}};
}

StageRates rates_from(const json& j) {
  return {j.at("executable").get<double>(), j.at("rendered").get<double>(),
          j.at("playable").get<double>(), j.at("accurate").get<double>()};
}

}  // namespace

json to_json(const BenchmarkReport& r) {
  json rows = json::array();
  for (const auto& row : r.rows) {
    json domains = json::array();
    for (const auto& d : row.domains) {
      domains.push_back({{"domain", domain_label(d.domain)},
                         {"scenarios", d.scenarios},
                         {"avg", rates_json(d.avg)},
                         {"pass", rates_json(d.pass)}});
    }
    rows.push_back({{"model", row.model},
                    {"avg", rates_json(row.avg)},
                    {"pass", rates_json(row.pass)},
                    {"domains", std::move(domains)}});
  }
  return {{"k", r.k}, {"rows", std::move(rows)}, {"metadata", r.metadata}};
}

BenchmarkReport report_from_json(const json& j) {
  BenchmarkReport r;
  try {
    r.k = j.at("k").get<int>();
    for (const auto& row : j.at("rows")) {
      ModelRow m;
      m.model = row.at("model").get<std::string>();
      m.avg = rates_from(row.at("avg"));
      m.pass = rates_from(row.at("pass"));
      for (const auto& d : row.value("domains", json::array())) {
        auto dom = parse_domain(d.at("domain").get<std::string>());
        if (!dom) throw Error(ErrorCode::kMalformedRecord, "unknown domain in report");
        m.domains.push_back({*dom, d.at("scenarios").get<std::size_t>(), rates_from(d.at("avg")),
                             rates_from(d.at("pass"))});
      }
      r.rows.push_back(std::move(m));
    }
    r.metadata = j.value("metadata", json::object());
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformedRecord, std::string("report: ") + e.what());
  }
  return r;
}

std::optional<ReportFormat> parse_report_format(std::string_view s) {
  if (s == "table" || s == "txt") return ReportFormat::kTable;
  if (s == "csv") return ReportFormat::kCsv;
  if (s == "md" || s == "markdown") return ReportFormat::kMarkdown;
  return std::nullopt;
}

namespace {

std::string f1(double v) { return fmt::format("{:.1f}", round1(v)); }

std::vector<std::string> rate_cells(const StageRates& r) {
  return {f1(r.executable), f1(r.rendered), f1(r.playable), f1(r.accurate)};
}

std::string markdown(const BenchmarkReport& report) {
  const auto k = report.k;
  std::string out = fmt::format("## Benchmark (k={})\n\n", k);
  const auto header = fmt::format(
      "| Model | Avg@{0} E.R. | Avg@{0} R.R. | Avg@{0} P.R. | Avg@{0} Acc. | Pass@{0} E.R. | "
      "Pass@{0} R.R. | Pass@{0} P.R. | Pass@{0} Acc. |\n"
      "|---|---:|---:|---:|---:|---:|---:|---:|---:|\n",
      k);
  auto line = [](std::string_view label, const StageRates& a, const StageRates& p) {
    auto cells = rate_cells(a);
    auto more = rate_cells(p);
    cells.insert(cells.end(), more.begin(), more.end());
    return fmt::format("| {} | {} |\n", label, fmt::join(cells, " | "));
  };
  out += header;
  for (const auto& row : report.rows) out += line(row.model, row.avg, row.pass);
  for (Domain d : kAllDomains) {
    std::string body;
    for (const auto& row : report.rows) {
      for (const auto& dr : row.domains) {
        if (dr.domain == d) body += line(row.model, dr.avg, dr.pass);
      }
    }
    if (body.empty()) continue;
    out += fmt::format("\n### {}\n\n", domain_label(d));
    out += header + body;
  }
  return out;
}

std::string csv(const BenchmarkReport& report) {
  std::string out = "model,aggregation,scope,scenarios,executable,rendered,playable,accurate\n";
  auto line = [&](const std::string& model, std::string_view agg, std::string_view scope,
                  std::string scenarios, const StageRates& r) {
    out += fmt::format("{},{}@{},{},{},{}\n", model, agg, report.k, scope, scenarios,
                       fmt::join(rate_cells(r), ","));
  };
  for (const auto& row : report.rows) {
    line(row.model, "avg", "all", "", row.avg);
    line(row.model, "pass", "all", "", row.pass);
    for (const auto& d : row.domains) {
      line(row.model, "avg", domain_label(d.domain), std::to_string(d.scenarios), d.avg);
      line(row.model, "pass", domain_label(d.domain), std::to_string(d.scenarios), d.pass);
    }
  }
  return out;
}

std::string table(const BenchmarkReport& report) {
  std::string out = fmt::format("{:<24} {:>9} {:>6} {:>6} {:>6} {:>6}\n", "model", "agg", "E.R.",
                                "R.R.", "P.R.", "Acc.");
  auto line = [&](const std::string& label, std::string agg, const StageRates& r) {
    out += fmt::format("{:<24} {:>9} {:>6} {:>6} {:>6} {:>6}\n", label, agg, f1(r.executable),
                       f1(r.rendered), f1(r.playable), f1(r.accurate));
  };
  for (const auto& row : report.rows) {
    line(row.model, fmt::format("avg@{}", report.k), row.avg);
    line(row.model, fmt::format("pass@{}", report.k), row.pass);
    for (const auto& d : row.domains) {
      const auto label = fmt::format("  {} ({})", domain_label(d.domain), d.scenarios);
      line(label, fmt::format("avg@{}", report.k), d.avg);
      line(label, fmt::format("pass@{}", report.k), d.pass);
    }
  }
  return out;
}

std::vector<std::string> split(std::string_view line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    auto at = line.find(sep, start);
    out.emplace_back(line.substr(start, at == std::string_view::npos ? line.npos : at - start));
    if (at == std::string_view::npos) break;
    start = at + 1;
  }
  return out;
}

}  // namespace

std::string emit_report(const BenchmarkReport& report, ReportFormat format) {
  switch (format) {
    case ReportFormat::kMarkdown: return markdown(report);
    case ReportFormat::kCsv: return csv(report);
    case ReportFormat::kTable: return table(report);
  }
  return {};
}

BenchmarkReport parse_report_csv(std::string_view text) {
  BenchmarkReport report;
  std::istringstream in{std::string(text)};
  std::string line;
  std::getline(in, line);
  if (line.rfind("model,aggregation,scope", 0) != 0) {
    throw Error(ErrorCode::kMalformedRecord, "report csv: bad header");
  }
  auto row_for = [&](const std::string& model) -> ModelRow& {
    for (auto& r : report.rows) {
      if (r.model == model) return r;
    }
    report.rows.push_back({model, {}, {}, {}});
    return report.rows.back();
  };
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split(line, ',');
    if (cells.size() != 8) throw Error(ErrorCode::kMalformedRecord, "report csv: bad row " + line);
    const auto at = cells[1].find('@');
    if (at == std::string::npos) throw Error(ErrorCode::kMalformedRecord, "report csv: bad aggregation");
    report.k = std::stoi(cells[1].substr(at + 1));
    const bool avg = cells[1].substr(0, at) == "avg";
    const StageRates rates{std::stod(cells[4]), std::stod(cells[5]), std::stod(cells[6]),
                           std::stod(cells[7])};
    auto& row = row_for(cells[0]);
    if (cells[2] == "all") {
      (avg ? row.avg : row.pass) = rates;
      continue;
    }
    auto dom = parse_domain(cells[2]);
    if (!dom) throw Error(ErrorCode::kMalformedRecord, "report csv: unknown domain " + cells[2]);
    auto it = std::find_if(row.domains.begin(), row.domains.end(),
                           [&](const DomainRow& d) { return d.domain == *dom; });
    if (it == row.domains.end()) {
      row.domains.push_back({*dom, static_cast<std::size_t>(std::stoul(cells[3])), {}, {}});
      it = std::prev(row.domains.end());
    }
    (avg ? it->avg : it->pass) = rates;
  }
  return report;
}

}  // namespace simjudge
