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

#include <random>
#include <sstream>

#include "simjudge/corpus.hpp"
#include "test_support.hpp"

using namespace simjudge;
using nlohmann::json;

namespace {

json record(const std::string& id, std::size_t m, const std::string& domain = "optics") {
  json qs = json::array();
  for (std::size_t i = 1; i <= m; ++i) qs.push_back({{"index", i}, {"text", "question " + std::to_string(i)}});
  return {{"id", id}, {"domain", domain}, {"concept", "refraction"}, {"description", "light bends at a boundary"},
          {"questions", qs}};
}

ErrorCode code_of(const std::string& line, const std::optional<QuestionBounds>& bounds = std::nullopt) {
  try {
    parse_scenario_record(line, bounds);
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::kOk;
}

std::string field_of(const std::string& line) {
  try {
    parse_scenario_record(line);
  } catch (const Error& e) {
    return e.field();
  }
  return {};
}

}  // namespace

TEST_CASE("seven-question electromagnetism record parses with M=7") {
  const auto line = testing::read_file(testing::data_path("seven_question_scenario.jsonl"));
  const auto s = parse_scenario_record(line.substr(0, line.find('\n')), QuestionBounds{});
  CHECK(s.tag.domain == Domain::kElectromagnetism);
  CHECK(s.tag.concept_name == "Electric Potential");
  CHECK(s.question_count() == 7);
  CHECK(s.questions.front().index == 1);
  CHECK(s.questions.back().index == 7);
  CHECK(s.conditions.size() == 2);
}

TEST_CASE("fixture corpus loads strictly") {
  const auto corpus = load_corpus(testing::data_path("corpus_fixture.jsonl"), Strictness::kStrict);
  CHECK(corpus.size() == 10);
  CHECK(corpus.rejections().empty());
  REQUIRE(corpus.find("em-002") != nullptr);
  CHECK(corpus.find("em-002")->tag.domain == Domain::kElectromagnetism);
  CHECK(corpus.find("nope") == nullptr);
}

TEST_CASE("schema violations name the field") {
  auto base = record("a", 5);
  auto without = [&](const char* key) {
    auto r = base;
    r.erase(key);
    return r.dump();
  };
  CHECK(code_of(without("id")) == ErrorCode::kSchemaViolation);
  CHECK(field_of(without("id")) == "id");
  CHECK(field_of(without("description")) == "description");
  CHECK(field_of(without("questions")) == "questions");

  auto bad_domain = base;
  bad_domain["domain"] = "astrology";
  CHECK(field_of(bad_domain.dump()) == "domain");

  auto gap = base;
  gap["questions"][2]["index"] = 9;
  CHECK(field_of(gap.dump()) == "questions.index");

  auto empty_q = base;
  empty_q["questions"] = json::array();
  CHECK(code_of(empty_q.dump()) == ErrorCode::kSchemaViolation);

  CHECK(code_of("{not json") == ErrorCode::kMalformedRecord);
  CHECK(code_of("[1,2]") != ErrorCode::kOk);
}

TEST_CASE("question bounds are enforced only when requested") {
  CHECK(code_of(record("a", 3).dump()) == ErrorCode::kOk);
  CHECK(code_of(record("a", 3).dump(), QuestionBounds{}) == ErrorCode::kSchemaViolation);
  CHECK(code_of(record("a", 13).dump(), QuestionBounds{}) == ErrorCode::kSchemaViolation);
  CHECK(code_of(record("a", 4).dump(), QuestionBounds{}) == ErrorCode::kOk);
  CHECK(code_of(record("a", 12).dump(), QuestionBounds{}) == ErrorCode::kOk);
}

TEST_CASE("parse_domain accepts label variants") {
  CHECK(parse_domain("Fluid Mechanics") == Domain::kFluidMechanics);
  CHECK(parse_domain("fluid_mechanics") == Domain::kFluidMechanics);
  CHECK(parse_domain("OPTICS") == Domain::kOptics);
  CHECK_FALSE(parse_domain("chemistry").has_value());
  for (Domain d : kAllDomains) CHECK(parse_domain(domain_label(d)) == d);
}

TEST_CASE("lenient duplicate id yields one rejection") {
  std::stringstream in;
  in << record("dup", 5).dump() << "\n" << record("dup", 6).dump() << "\n" << record("other", 4).dump() << "\n";
  const auto corpus = Corpus::from_stream(in, Strictness::kLenient);
  CHECK(corpus.size() == 2);
  REQUIRE(corpus.rejections().size() == 1);
  CHECK(corpus.rejections()[0].line == 2);
  CHECK(corpus.rejections()[0].code == ErrorCode::kDuplicateId);
}

TEST_CASE("strict mode stops at the first bad record with its line number") {
  std::stringstream in;
  in << record("a", 5).dump() << "\n\n" << "garbage\n";
  try {
    Corpus::from_stream(in, Strictness::kStrict);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kMalformedRecord);
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
}

TEST_CASE("serialize then parse round-trips and keeps unknown fields") {
  auto r = record("x", 6, "thermodynamics");
  r["source"] = {{"batch", 3}};
  const auto s = parse_scenario_record(r.dump());
  CHECK(s.extensions.at("source").at("batch") == 3);
  const auto again = parse_scenario_record(serialize_scenario(s));
  CHECK(again == s);
}

TEST_CASE("stats totals match a synthetic corpus") {
  std::mt19937 rng(7);
  std::uniform_int_distribution<std::size_t> m(4, 12);
  std::map<std::size_t, std::size_t> expected;
  std::stringstream in;
  const char* domains[] = {"mechanics", "optics"};
  for (int i = 0; i < 10; ++i) {
    const auto n = m(rng);
    ++expected[n];
    in << record("s" + std::to_string(i), n, domains[i % 2]).dump() << "\n";
  }
  const auto corpus = Corpus::from_stream(in, Strictness::kStrict);
  const auto stats = corpus_stats(corpus);
  CHECK(stats.total == 10);
  CHECK(stats.question_histogram == expected);
  std::size_t hist_total = 0;
  for (const auto& [k, v] : stats.question_histogram) hist_total += v;
  CHECK(hist_total == 10);
  CHECK(stats.count(Domain::kMechanics) == 5);
  CHECK(stats.count(Domain::kOptics) == 5);
  std::size_t desc_total = 0;
  for (const auto& b : stats.description_histogram) desc_total += b.count;
  CHECK(desc_total == 10);
  CHECK(stats.concept_counts.at("refraction") == 10);
  CHECK(stats.render().find("mechanics") != std::string::npos);
}

TEST_CASE("split manifests are validated against the corpus") {
  const auto corpus = load_corpus(testing::data_path("corpus_fixture.jsonl"), Strictness::kStrict);
  const auto manifest = load_split_manifest(testing::data_path("splits.json"));
  CHECK_NOTHROW(validate_split_manifest(manifest, corpus));
  REQUIRE(manifest.find("test") != nullptr);
  CHECK(manifest.find("test")->scenario_ids.size() == 5);

  auto overlap = parse_split_manifest(json{{"splits", {{"a", {"mech-001"}}, {"b", {"mech-001"}}}}});
  CHECK_THROWS_AS(validate_split_manifest(overlap, corpus), Error);

  auto unknown = parse_split_manifest(json{{"splits", {{"a", {"ghost"}}}}});
  try {
    validate_split_manifest(unknown, corpus);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kUnknownScenario);
  }
  CHECK_THROWS_AS(parse_split_manifest(json{{"nothing", 1}}), Error);
}
