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

#include <cstddef>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "simjudge/corpus.hpp"
#include "simjudge/llm_gateway.hpp"
#include "simjudge/messages.hpp"
#include "simjudge/sandbox.hpp"

namespace simjudge {

enum class MediaTransport { kFrames, kNative };

struct TransportConfig {
  MediaTransport mode = MediaTransport::kFrames;
  int frames = 16;
  // argv template with {input}, {time} (seconds) and {output} tokens; must
  // write one image to {output}.
  std::vector<std::string> decoder_command;
  std::string frame_mime = "image/jpeg";
  std::string frame_extension = "jpg";
  ExecutionLimits decoder_limits;
};

TransportConfig transport_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TransportConfig& t);

struct JudgePayload {
  std::vector<Attachment> media;  // frames in timestamp order, or one video
  std::vector<double> frame_timestamps;
  std::string question_block;
  std::string scenario_id;
};

// Endpoint-inclusive uniform spacing over [0, duration]; n == 1 gives the
// midpoint.
std::vector<double> frame_timestamps(double duration, int n);

// Throws Error(kDecodeFailure) when the artifact cannot be read or a frame
// cannot be decoded. Frames are written under `work_dir`.
JudgePayload build_payload(const ArtifactRef& artifact, double duration,
                           std::string question_block, std::string scenario_id,
                           const TransportConfig& transport,
                           const std::filesystem::path& work_dir);

struct Verdict {
  int index = 0;
  std::string question;
  std::string analysis;
  bool result = false;

  bool operator==(const Verdict&) const = default;
};

// Accepts a bare JSON list, or one wrapped in a single fenced block; prose
// around the list is tolerated only when exactly one list is present.
// Results are true/false/yes/no in any case. Throws Error(kParseFailure).
std::vector<Verdict> parse_verdicts(std::string_view raw, std::size_t expected);

enum class JudgeFailure { kNone, kParse, kTransport, kUnusable, kDecode };

std::string_view to_string(JudgeFailure f) noexcept;

struct JudgmentSet {
  std::string judge_name;
  std::vector<Verdict> verdicts;
  std::vector<bool> resolved;  // length M; all false when failure != kNone
  JudgeFailure failure = JudgeFailure::kNone;
  std::string failure_detail;
  std::string transcript;            // raw judge output, if any
  std::vector<JudgmentSet> members;  // ensemble inputs, for audit

  bool failed() const noexcept { return failure != JudgeFailure::kNone; }
  static JudgmentSet failed_set(std::string judge, std::size_t m, JudgeFailure why,
                                std::string detail);
};

nlohmann::json to_json(const JudgmentSet& s);
JudgmentSet judgment_from_json(const nlohmann::json& j);

// Never throws for judge misbehaviour: transport and parse problems come
// back as fail-closed sets.
JudgmentSet judge_once(ChatClient& judge, const JudgePayload& payload, std::size_t m,
                       const SamplingProfile& profile = {1, 0.0, 4096, std::nullopt});

enum class VoteMode { kPerQuestion, kWholeReward };

struct EnsembleConfig {
  std::vector<std::string> judges;  // training judges
  std::string evaluation_judge;
  VoteMode vote = VoteMode::kPerQuestion;

  // >= 1 training judge, and the evaluation judge is not among them.
  void validate() const;
};

EnsembleConfig ensemble_from_json(const nlohmann::json& j);
nlohmann::json to_json(const EnsembleConfig& e);

// Per-question majority; failed members count as false everywhere and ties
// resolve false. Order of `members` does not matter.
JudgmentSet combine_majority(std::vector<JudgmentSet> members, std::size_t m);

// Queries every judge concurrently, then combines by majority.
JudgmentSet judge_ensemble(std::span<ChatClient* const> judges, const JudgePayload& payload,
                           std::size_t m);

}  // namespace simjudge
