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

#include <doctest.h>

#include <chrono>
#include <random>

#include "simjudge/metricsuite.hpp"

using namespace simjudge;

namespace {

struct SyntheticRun {
  std::vector<std::string> ids;
  std::map<std::string, Domain, std::less<>> domains;
  std::vector<ResponseRecord> records;
  int k = 1;
};

SyntheticRun random_run(std::mt19937_64& rng, std::size_t scenarios) {
  SyntheticRun run;
  run.k = 1 + static_cast<int>(rng() % 8);
  for (std::size_t s = 0; s < scenarios; ++s) {
    const auto id = "s" + std::to_string(s);
    run.ids.push_back(id);
    run.domains[id] = kAllDomains[rng() % kAllDomains.size()];
    const double skill = std::uniform_real_distribution<double>(0, 1)(rng);
    for (int slot = 0; slot < run.k; ++slot) {
      if (rng() % 10 == 0) continue;  // missing slot counts as all-false
      auto coin = [&] { return std::uniform_real_distribution<double>(0, 1)(rng) < skill + 0.2; };
      run.records.push_back({id, slot, StageFlags::from_gates(coin(), coin(), coin(), coin()), std::nullopt, {}});
    }
  }
  return run;
}

// Brute-force per-stage aggregation straight from the flags.
std::array<double, 4> flag_values(const StageFlags& f) {
  return {double(f.executable()), double(f.rendered()), double(f.playable()), double(f.accurate())};
}

std::array<double, 4> oracle_avg(const SyntheticRun& run) {
  std::array<double, 4> total{};
  for (const auto& r : run.records) {
    const auto v = flag_values(r.flags);
    for (int i = 0; i < 4; ++i) total[i] += v[i];
  }
  for (auto& t : total) t = 100.0 * t / (double(run.k) * double(run.ids.size()));
  return total;
}

std::array<double, 4> oracle_pass(const SyntheticRun& run) {
  std::array<double, 4> total{};
  for (const auto& id : run.ids) {
    std::array<bool, 4> any{};
    for (const auto& r : run.records) {
      if (r.scenario_id != id) continue;
      const auto v = flag_values(r.flags);
      for (int i = 0; i < 4; ++i) any[i] = any[i] || v[i] > 0;
    }
    for (int i = 0; i < 4; ++i) total[i] += any[i];
  }
  for (auto& t : total) t = 100.0 * t / double(run.ids.size());
  return total;
}

std::array<double, 4> as_array(const StageRates& r) { return {r.executable, r.rendered, r.playable, r.accurate}; }

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::kOk;
}

BenchmarkReport sample_report(std::mt19937_64& rng) {
  const auto run = random_run(rng, 40);
  BenchmarkReport report;
  report.k = run.k;
  ModelRow row;
  row.model = "stub-model";
  row.avg = stage_rates_avg(run.records, run.ids, run.k);
  row.pass = stage_rates_pass(run.records, run.ids, run.k);
  row.domains = per_domain_breakdown(run.records, run.ids, run.domains, run.k);
  report.rows.push_back(row);
  report.metadata = {{"run_id", "r1"}};
  return report;
}

}  // namespace

TEST_CASE("hand-built three-scenario matrices") {
  const std::vector<std::string> ids = {"a", "b", "c"};
  const auto T = StageFlags::from_gates(true, true, true, true);
  const auto E = StageFlags::from_gates(true, false, false, false);
  const auto R = StageFlags::from_gates(true, true, true, false);
  // a: (T, E); b: (E, missing); c: (R, R)
  const std::vector<ResponseRecord> recs = {
      {"a", 0, T, {}, {}}, {"a", 1, E, {}, {}}, {"b", 0, E, {}, {}}, {"c", 0, R, {}, {}}, {"c", 1, R, {}, {}}};
  const auto avg = stage_rates_avg(recs, ids, 2);
  CHECK(avg.executable == doctest::Approx(100.0 * 5 / 6));
  CHECK(avg.rendered == doctest::Approx(100.0 * 3 / 6));
  CHECK(avg.playable == doctest::Approx(100.0 * 3 / 6));
  CHECK(avg.accurate == doctest::Approx(100.0 * 1 / 6));
  const auto pass = stage_rates_pass(recs, ids, 2);
  CHECK(pass.executable == doctest::Approx(100.0));
  CHECK(pass.rendered == doctest::Approx(200.0 / 3));
  CHECK(pass.playable == doctest::Approx(200.0 / 3));
  CHECK(pass.accurate == doctest::Approx(100.0 / 3));
}

TEST_CASE("two domains with disjoint pass sets") {
  const std::vector<std::string> ids = {"m1", "m2", "o1"};
  std::map<std::string, Domain, std::less<>> domains = {
      {"m1", Domain::kMechanics}, {"m2", Domain::kMechanics}, {"o1", Domain::kOptics}};
  const auto T = StageFlags::from_gates(true, true, true, true);
  const std::vector<ResponseRecord> recs = {{"m1", 0, T, {}, {}}, {"m2", 0, T, {}, {}}, {"o1", 0, StageFlags{}, {}, {}}};
  const auto rows = per_domain_breakdown(recs, ids, domains, 1);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].domain == Domain::kMechanics);
  CHECK(rows[0].scenarios == 2);
  CHECK(rows[0].avg.accurate == 100.0);
  CHECK(rows[1].domain == Domain::kOptics);
  CHECK(rows[1].avg.accurate == 0.0);
  domains.erase("o1");
  CHECK(code_of([&] { per_domain_breakdown(recs, ids, domains, 1); }) == ErrorCode::kUnknownScenario);
}

TEST_CASE("aggregators match brute force on random runs and keep their properties") {
  std::mt19937_64 rng(1234);
  for (int t = 0; t < 1000; ++t) {
    const auto run = random_run(rng, 1 + rng() % 30);
    const auto avg = stage_rates_avg(run.records, run.ids, run.k);
    const auto pass = stage_rates_pass(run.records, run.ids, run.k);
    const auto oa = oracle_avg(run), op = oracle_pass(run), ga = as_array(avg), gp = as_array(pass);
    for (int i = 0; i < 4; ++i) {
      REQUIRE(std::abs(ga[i] - oa[i]) < 1e-9);
      REQUIRE(std::abs(gp[i] - op[i]) < 1e-9);
      REQUIRE(gp[i] >= ga[i] - 1e-12);
    }
    REQUIRE(avg.monotone());
    REQUIRE(pass.monotone());

    const auto rows = per_domain_breakdown(run.records, run.ids, run.domains, run.k);
    double weighted_avg = 0, weighted_pass = 0;
    std::size_t n = 0;
    for (const auto& row : rows) {
      weighted_avg += row.avg.accurate * double(row.scenarios);
      weighted_pass += row.pass.accurate * double(row.scenarios);
      n += row.scenarios;
      REQUIRE(row.avg.monotone());
    }
    REQUIRE(n == run.ids.size());
    REQUIRE(std::abs(weighted_avg / double(n) - avg.accurate) <= 1e-9);
    REQUIRE(std::abs(weighted_pass / double(n) - pass.accurate) <= 1e-9);
  }
}

TEST_CASE("thousand-scenario run keeps pass above average") {
  std::mt19937_64 rng(77);
  const auto run = random_run(rng, 1000);
  const auto avg = as_array(stage_rates_avg(run.records, run.ids, run.k));
  const auto pass = as_array(stage_rates_pass(run.records, run.ids, run.k));
  for (int i = 0; i < 4; ++i) CHECK(pass[i] >= avg[i]);
}

TEST_CASE("slot matrix validation") {
  const std::vector<std::string> ids = {"a"};
  const std::vector<std::string> none;
  std::vector<ResponseRecord> recs = {{"a", 0, StageFlags{}, {}, {}}};
  CHECK(code_of([&] { stage_rates_avg(recs, none, 1); }) == ErrorCode::kEmptyRun);
  CHECK(code_of([&] { stage_rates_avg(recs, ids, 0); }) == ErrorCode::kInvalidArgument);
  auto outside = recs;
  outside[0].slot = 1;
  CHECK(code_of([&] { stage_rates_avg(outside, ids, 1); }) == ErrorCode::kInvalidArgument);
  auto dup = recs;
  dup.push_back(recs[0]);
  CHECK(code_of([&] { stage_rates_pass(dup, ids, 2); }) == ErrorCode::kInvalidArgument);
  auto stranger = recs;
  stranger[0].scenario_id = "zzz";
  CHECK(code_of([&] { stage_rates_avg(stranger, ids, 1); }) == ErrorCode::kUnknownScenario);
}

TEST_CASE("agreement arithmetic") {
  const auto t0 = std::chrono::steady_clock::now();
  const double vlm = agreement_rate({613, 1263, 108, 152});
  const double llm = agreement_rate({266, 1209, 162, 499});
  const auto elapsed = std::chrono::steady_clock::now() - t0;
  CHECK(round1(vlm) == 87.8);
  CHECK(round1(llm) == 69.1);
  // Independent evaluation of the same ratios.
  CHECK(vlm == doctest::Approx(100.0 * (613 + 1263) / (613 + 1263 + 108 + 152)));
  CHECK(llm == doctest::Approx(100.0 * (266 + 1209) / (266 + 1209 + 162 + 499)));
  CHECK(elapsed < std::chrono::milliseconds(1));
  CHECK(code_of([] { agreement_rate({}); }) == ErrorCode::kEmptyCounts);
}

TEST_CASE("round1 rounds half away from zero") {
  CHECK(round1(0.25) == 0.3);
  CHECK(round1(-0.25) == -0.3);
  CHECK(round1(87.84) == 87.8);
  CHECK(round1(100.0) == 100.0);
}

TEST_CASE("csv round trip") {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 50; ++t) {
    const auto report = sample_report(rng);
    const auto back = parse_report_csv(emit_report(report, ReportFormat::kCsv));
    REQUIRE(back.k == report.k);
    REQUIRE(back.rows.size() == 1);
    const auto& a = report.rows[0];
    const auto& b = back.rows[0];
    CHECK(b.model == a.model);
    for (int i = 0; i < 4; ++i) {
      CHECK(as_array(b.avg)[i] == round1(as_array(a.avg)[i]));
      CHECK(as_array(b.pass)[i] == round1(as_array(a.pass)[i]));
    }
    REQUIRE(b.domains.size() == a.domains.size());
    for (std::size_t d = 0; d < a.domains.size(); ++d) {
      CHECK(b.domains[d].domain == a.domains[d].domain);
      CHECK(b.domains[d].scenarios == a.domains[d].scenarios);
      CHECK(b.domains[d].avg.accurate == round1(a.domains[d].avg.accurate));
    }
  }
}

TEST_CASE("every emitted report respects the ladder and renders deterministically") {
  std::mt19937_64 rng(6);
  for (int t = 0; t < 20; ++t) {
    const auto report = sample_report(rng);
    CHECK_NOTHROW(report.check_ladder());
    for (auto f : {ReportFormat::kTable, ReportFormat::kCsv, ReportFormat::kMarkdown}) {
      CHECK(emit_report(report, f) == emit_report(report, f));
    }
    const auto back = report_from_json(to_json(report));
    CHECK(to_json(back) == to_json(report));
  }
  auto broken = sample_report(rng);
  broken.rows[0].avg = {10, 20, 5, 1};
  CHECK(code_of([&] { broken.check_ladder(); }) == ErrorCode::kInternal);
}

TEST_CASE("markdown and table layouts") {
  std::mt19937_64 rng(8);
  const auto report = sample_report(rng);
  const auto md = emit_report(report, ReportFormat::kMarkdown);
  CHECK(md.rfind("## Benchmark (k=" + std::to_string(report.k) + ")", 0) == 0);
  CHECK(md.find("| stub-model |") != std::string::npos);
  CHECK(md.find("### " + std::string(domain_label(report.rows[0].domains[0].domain))) != std::string::npos);
  const auto table = emit_report(report, ReportFormat::kTable);
  CHECK(table.find("stub-model") != std::string::npos);
  CHECK(parse_report_format("md") == ReportFormat::kMarkdown);
  CHECK(parse_report_format("csv") == ReportFormat::kCsv);
  CHECK(parse_report_format("table") == ReportFormat::kTable);
  CHECK_FALSE(parse_report_format("pdf").has_value());
}
