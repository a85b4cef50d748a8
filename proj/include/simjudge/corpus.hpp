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

#include <array>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "simjudge/error.hpp"

namespace simjudge {

enum class Domain {
  kMechanics,
  kElectromagnetism,
  kOptics,
  kFluidMechanics,
  kThermodynamics,
};

inline constexpr std::array<Domain, 5> kAllDomains = {
    Domain::kMechanics, Domain::kElectromagnetism, Domain::kOptics,
    Domain::kFluidMechanics, Domain::kThermodynamics};

std::string_view domain_label(Domain domain) noexcept;
// Accepts the canonical label plus case/space variants ("Fluid Mechanics").
std::optional<Domain> parse_domain(std::string_view text);

struct DomainTag {
  Domain domain = Domain::kMechanics;
  std::string concept_name;

  bool operator==(const DomainTag&) const = default;
};

struct VerificationQuestion {
  int index = 0;  // 1-based
  std::string text;

  bool operator==(const VerificationQuestion&) const = default;
};

struct Scenario {
  std::string id;
  DomainTag tag;
  std::string basic;
  std::vector<std::string> conditions;
  std::string description;
  std::vector<VerificationQuestion> questions;
  // Unknown top-level fields of the source record, preserved verbatim.
  nlohmann::json extensions = nlohmann::json::object();

  std::size_t question_count() const noexcept { return questions.size(); }
  bool operator==(const Scenario&) const = default;
};

struct QuestionBounds {
  std::size_t min = 4;
  std::size_t max = 12;
};

enum class Strictness { kLenient, kStrict };

// Parses one corpus line. Throws Error(kMalformedRecord) on syntax problems
// and Error(kSchemaViolation, field) on invariant violations. `bounds`, when
// set, additionally enforces the question-count range.
Scenario parse_scenario_record(std::string_view line,
                               const std::optional<QuestionBounds>& bounds = std::nullopt);
std::string serialize_scenario(const Scenario& scenario);

struct Rejection {
  std::size_t line = 0;  // 1-based
  ErrorCode code = ErrorCode::kOk;
  std::string field;
  std::string message;
};

// Immutable after construction.
class Corpus {
 public:
  Corpus() = default;

  std::size_t size() const noexcept { return scenarios_.size(); }
  bool empty() const noexcept { return scenarios_.empty(); }
  const Scenario& operator[](std::size_t i) const { return scenarios_[i]; }
  auto begin() const noexcept { return scenarios_.begin(); }
  auto end() const noexcept { return scenarios_.end(); }

  const Scenario* find(std::string_view id) const;
  // concept name -> scenario count, derived from the loaded records.
  const std::map<std::string, std::size_t>& concept_table() const noexcept { return concepts_; }
  const std::vector<Rejection>& rejections() const noexcept { return rejections_; }

  static Corpus from_stream(std::istream& in, Strictness strictness,
                            const QuestionBounds& bounds = {});

 private:
  void add(Scenario scenario);

  std::vector<Scenario> scenarios_;
  std::unordered_map<std::string, std::size_t> by_id_;
  std::map<std::string, std::size_t> concepts_;
  std::vector<Rejection> rejections_;
};

// Strict mode throws on the first bad record (message carries the line
// number); lenient mode skips it and records a Rejection.
Corpus load_corpus(const std::filesystem::path& path, Strictness strictness,
                   const QuestionBounds& bounds = {});

struct HistogramBucket {
  std::size_t lo = 0;  // inclusive
  std::size_t hi = 0;  // inclusive
  std::size_t count = 0;
};

struct StatsReport {
  std::size_t total = 0;
  std::array<std::size_t, kAllDomains.size()> domain_counts{};
  std::map<std::string, std::size_t> concept_counts;
  // question count M -> scenarios
  std::map<std::size_t, std::size_t> question_histogram;
  // whitespace-delimited word counts of the description, fixed-width buckets
  std::vector<HistogramBucket> description_histogram;

  std::size_t count(Domain d) const { return domain_counts[static_cast<std::size_t>(d)]; }
  std::string render() const;
};

inline constexpr std::size_t kDescriptionBucketWidth = 25;

StatsReport corpus_stats(const Corpus& corpus);

struct Split {
  std::string name;
  std::vector<std::string> scenario_ids;
};

struct SplitManifest {
  std::vector<Split> splits;
  std::string provenance;

  const Split* find(std::string_view name) const;
};

SplitManifest parse_split_manifest(const nlohmann::json& doc);
SplitManifest load_split_manifest(const std::filesystem::path& path);
// Checks id distinctness, resolvability against `corpus`, and pairwise
// disjointness of splits. Throws Error(kSchemaViolation / kUnknownScenario).
void validate_split_manifest(const SplitManifest& manifest, const Corpus& corpus);

}  // namespace simjudge
