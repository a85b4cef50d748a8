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

#include "simjudge/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <istream>
#include <set>
#include <sstream>

#include <fmt/format.h>

namespace simjudge {
namespace {

using nlohmann::json;

const std::set<std::string, std::less<>> kKnownFields = {
    "id", "domain", "concept", "basic", "conditions", "description", "questions"};

[[noreturn]] void schema(const std::string& field, const std::string& what) {
  throw Error(ErrorCode::kSchemaViolation, fmt::format("{}: {}", field, what), field);
}

std::string require_string(const json& obj, const char* field, bool non_empty) {
  auto it = obj.find(field);
  if (it == obj.end()) schema(field, "missing");
  if (!it->is_string()) schema(field, "must be a string");
  auto value = it->get<std::string>();
  if (non_empty && value.find_first_not_of(" \t\r\n") == std::string::npos) {
    schema(field, "must be non-empty");
  }
  return value;
}

int question_index(const json& value) {
  if (value.is_number_integer()) return value.get<int>();
  if (value.is_string()) {
    const auto& s = value.get_ref<const std::string&>();
    if (!s.empty() && s.size() < 9 &&
        std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); })) {
      return std::stoi(s);
    }
  }
  schema("questions.index", "must be a positive integer");
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

std::string_view domain_label(Domain domain) noexcept {
  switch (domain) {
    case Domain::kMechanics: return "mechanics";
    case Domain::kElectromagnetism: return "electromagnetism";
    case Domain::kOptics: return "optics";
    case Domain::kFluidMechanics: return "fluid-mechanics";
    case Domain::kThermodynamics: return "thermodynamics";
  }
  return "unknown";
}

std::optional<Domain> parse_domain(std::string_view text) {
  std::string norm;
  for (char c : trim(text)) {
    if (c == ' ' || c == '_') c = '-';
    norm.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  for (Domain d : kAllDomains) {
    if (domain_label(d) == norm) return d;
  }
  return std::nullopt;
}

Scenario parse_scenario_record(std::string_view line,
                               const std::optional<QuestionBounds>& bounds) {
  json doc;
  try {
    doc = json::parse(line);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kMalformedRecord, e.what());
  }
  if (!doc.is_object()) throw Error(ErrorCode::kMalformedRecord, "record is not an object");

  Scenario s;
  s.id = require_string(doc, "id", true);
  const auto domain_text = require_string(doc, "domain", true);
  auto domain = parse_domain(domain_text);
  if (!domain) schema("domain", "unknown domain label '" + domain_text + "'");
  s.tag.domain = *domain;
  s.tag.concept_name = require_string(doc, "concept", true);
  if (doc.contains("basic")) s.basic = require_string(doc, "basic", false);
  if (auto it = doc.find("conditions"); it != doc.end()) {
    if (!it->is_array()) schema("conditions", "must be a list of strings");
    for (const auto& c : *it) {
      if (!c.is_string()) schema("conditions", "must be a list of strings");
      s.conditions.push_back(c.get<std::string>());
    }
  }
  s.description = require_string(doc, "description", true);

  auto qs = doc.find("questions");
  if (qs == doc.end()) schema("questions", "missing");
  if (!qs->is_array()) schema("questions", "must be a list");
  if (qs->empty()) schema("questions", "must contain at least one question");
  int expected = 1;
  for (const auto& q : *qs) {
    if (!q.is_object()) schema("questions", "entries must be objects");
    auto idx = q.find("index");
    if (idx == q.end()) schema("questions.index", "missing");
    VerificationQuestion vq;
    vq.index = question_index(*idx);
    if (vq.index != expected) {
      schema("questions.index",
             fmt::format("indices must be contiguous from 1 (expected {}, got {})", expected,
                         vq.index));
    }
    ++expected;
    vq.text = require_string(q, "text", true);
    s.questions.push_back(std::move(vq));
  }
  if (bounds && (s.questions.size() < bounds->min || s.questions.size() > bounds->max)) {
    schema("questions", fmt::format("question count {} outside [{}, {}]", s.questions.size(),
                                    bounds->min, bounds->max));
  }

  for (auto it = doc.begin(); it != doc.end(); ++it) {
    if (!kKnownFields.contains(it.key())) s.extensions[it.key()] = it.value();
  }
  return s;
}

std::string serialize_scenario(const Scenario& scenario) {
  json doc = scenario.extensions.is_object() ? scenario.extensions : json::object();
  doc["id"] = scenario.id;
  doc["domain"] = domain_label(scenario.tag.domain);
  doc["concept"] = scenario.tag.concept_name;
  doc["basic"] = scenario.basic;
  doc["conditions"] = scenario.conditions;
  doc["description"] = scenario.description;
  json qs = json::array();
  for (const auto& q : scenario.questions) qs.push_back({{"index", q.index}, {"text", q.text}});
  doc["questions"] = std::move(qs);
  return doc.dump();
}

const Scenario* Corpus::find(std::string_view id) const {
  auto it = by_id_.find(std::string(id));
  return it == by_id_.end() ? nullptr : &scenarios_[it->second];
}

void Corpus::add(Scenario scenario) {
  by_id_.emplace(scenario.id, scenarios_.size());
  ++concepts_[scenario.tag.concept_name];
  scenarios_.push_back(std::move(scenario));
}

Corpus Corpus::from_stream(std::istream& in, Strictness strictness, const QuestionBounds& bounds) {
  Corpus corpus;
  const bool strict = strictness == Strictness::kStrict;
  const std::optional<QuestionBounds> enforced =
      strict ? std::optional<QuestionBounds>(bounds) : std::nullopt;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      Scenario s = parse_scenario_record(line, enforced);
      if (corpus.by_id_.contains(s.id)) {
        throw Error(ErrorCode::kDuplicateId, "duplicate id '" + s.id + "'", "id");
      }
      corpus.add(std::move(s));
    } catch (const Error& e) {
      if (strict) {
        throw Error(e.code(), fmt::format("line {}: {}", line_no, e.what()), e.field());
      }
      corpus.rejections_.push_back({line_no, e.code(), e.field(), e.what()});
    }
  }
  return corpus;
}

Corpus load_corpus(const std::filesystem::path& path, Strictness strictness,
                   const QuestionBounds& bounds) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open corpus " + path.string());
  return Corpus::from_stream(in, strictness, bounds);
}

StatsReport corpus_stats(const Corpus& corpus) {
  StatsReport report;
  report.total = corpus.size();
  std::map<std::size_t, std::size_t> words_by_bucket;
  for (const auto& s : corpus) {
    ++report.domain_counts[static_cast<std::size_t>(s.tag.domain)];
    ++report.concept_counts[s.tag.concept_name];
    ++report.question_histogram[s.question_count()];
    std::istringstream words(s.description);
    std::size_t n = 0;
    for (std::string w; words >> w;) ++n;
    ++words_by_bucket[n / kDescriptionBucketWidth];
  }
  for (const auto& [bucket, count] : words_by_bucket) {
    report.description_histogram.push_back(
        {bucket * kDescriptionBucketWidth, (bucket + 1) * kDescriptionBucketWidth - 1, count});
  }
  return report;
}

std::string StatsReport::render() const {
  std::string out;
  out += fmt::format("# corpus stats: {} scenarios\n", total);
  out += fmt::format(
      "# question histogram: one bucket per question count; description histogram: "
      "whitespace-delimited words in buckets of {}\n",
      kDescriptionBucketWidth);
  out += "\n[domains]\n";
  for (Domain d : kAllDomains) out += fmt::format("{:<18} {}\n", domain_label(d), count(d));
  out += fmt::format("\n[concepts] ({} distinct)\n", concept_counts.size());
  for (const auto& [name, n] : concept_counts) out += fmt::format("{:<32} {}\n", name, n);
  out += "\n[questions per scenario]\n";
  for (const auto& [m, n] : question_histogram) out += fmt::format("{:>3} {}\n", m, n);
  out += "\n[description words]\n";
  for (const auto& b : description_histogram) {
    out += fmt::format("{:>4}-{:<4} {}\n", b.lo, b.hi, b.count);
  }
  return out;
}

const Split* SplitManifest::find(std::string_view name) const {
  for (const auto& s : splits) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

SplitManifest parse_split_manifest(const json& doc) {
  if (!doc.is_object() || !doc.contains("splits") || !doc["splits"].is_object()) {
    throw Error(ErrorCode::kSchemaViolation, "manifest must contain a 'splits' object", "splits");
  }
  SplitManifest m;
  if (doc.contains("provenance") && doc["provenance"].is_string()) {
    m.provenance = doc["provenance"].get<std::string>();
  }
  for (const auto& [name, ids] : doc["splits"].items()) {
    if (!ids.is_array()) schema("splits." + name, "must be a list of ids");
    Split split{name, {}};
    for (const auto& id : ids) {
      if (!id.is_string()) schema("splits." + name, "ids must be strings");
      split.scenario_ids.push_back(id.get<std::string>());
    }
    m.splits.push_back(std::move(split));
  }
  return m;
}

SplitManifest load_split_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open manifest " + path.string());
  try {
    return parse_split_manifest(json::parse(in));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kMalformedRecord, e.what());
  }
}

void validate_split_manifest(const SplitManifest& manifest, const Corpus& corpus) {
  std::unordered_map<std::string, std::string> owner;
  for (const auto& split : manifest.splits) {
    std::set<std::string, std::less<>> seen;
    for (const auto& id : split.scenario_ids) {
      if (!seen.insert(id).second) {
        schema("splits." + split.name, "duplicate id '" + id + "'");
      }
      if (!corpus.find(id)) {
        throw Error(ErrorCode::kUnknownScenario,
                    fmt::format("split '{}' references unknown id '{}'", split.name, id));
      }
      auto [it, fresh] = owner.emplace(id, split.name);
      if (!fresh) {
        schema("splits." + split.name,
               fmt::format("id '{}' also appears in split '{}'", id, it->second));
      }
    }
  }
}

}  // namespace simjudge
