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
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "simjudge/error.hpp"
#include "simjudge/sandbox.hpp"

namespace simjudge {

enum class ParseDepth { kFull, kPartial };

struct ContainerSummary {
  std::vector<std::string> brands;  // major brand first, then compatible brands
  double duration = 0.0;            // seconds
  int video_track_count = 0;
  std::uint64_t sample_count = 0;   // frames of the first video track
  std::optional<std::uint32_t> width;
  std::optional<std::uint32_t> height;
  ParseDepth parse_depth = ParseDepth::kFull;

  bool operator==(const ContainerSummary&) const = default;
};

nlohmann::json to_json(const ContainerSummary& s);
ContainerSummary summary_from_json(const nlohmann::json& j);

// Thrown for kNotAContainer and kTruncated; `partial()` holds whatever was
// recovered before the damage (parse_depth = kPartial).
class ContainerError : public Error {
 public:
  ContainerError(ErrorCode code, const std::string& message, ContainerSummary partial = {})
      : Error(code, message), partial_(std::move(partial)) {}
  const ContainerSummary& partial() const noexcept { return partial_; }

 private:
  ContainerSummary partial_;
};

// Walks the ISO base-media box tree. Never reads past `bytes`, recursion is
// bounded, and every size field is sanity-checked.
ContainerSummary parse_container(std::span<const std::byte> bytes);
ContainerSummary parse_container_file(const std::filesystem::path& path);

enum class ProbeMode { kOff, kExternal };

struct PlayabilityPolicy {
  double min_duration = 1.0;
  double max_duration = 60.0;
  std::uint64_t min_samples = 2;
  bool require_dims = true;
  ProbeMode pixel_probe = ProbeMode::kOff;
  // argv template with an {input} token. Contract: exit 0 and a positive
  // decoded-frame count on the last non-empty stdout line.
  std::vector<std::string> probe_command;
  ExecutionLimits probe_limits;

  void validate() const;
  // The generation prompt's own contract: 10-20 s at 30 fps.
  static PlayabilityPolicy prompt_conformance();
};

PlayabilityPolicy playability_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PlayabilityPolicy& p);

namespace reason {
inline constexpr const char* kVideoTrack = "video_track";
inline constexpr const char* kDuration = "duration";
inline constexpr const char* kSamples = "samples";
inline constexpr const char* kDimensions = "dimensions";
inline constexpr const char* kTruncated = "truncated";
inline constexpr const char* kProbe = "probe";
}  // namespace reason

struct PlayabilityVerdict {
  bool playable = false;
  std::vector<std::string> reasons;  // empty iff playable
};

// Pure in (summary, policy) unless the external probe is enabled, in which
// case `artifact` is handed to the probe command.
PlayabilityVerdict assess_playability(const ContainerSummary& summary,
                                      const PlayabilityPolicy& policy,
                                      const std::optional<std::filesystem::path>& artifact = std::nullopt);

// executable => rendered => playable => accurate, enforced by construction.
class StageFlags {
 public:
  StageFlags() = default;

  // Each gate is ANDed with every gate above it.
  static StageFlags from_gates(bool executable, bool rendered, bool playable, bool accurate) {
    StageFlags f;
    f.executable_ = executable;
    f.rendered_ = f.executable_ && rendered;
    f.playable_ = f.rendered_ && playable;
    f.accurate_ = f.playable_ && accurate;
    return f;
  }

  bool executable() const noexcept { return executable_; }
  bool rendered() const noexcept { return rendered_; }
  bool playable() const noexcept { return playable_; }
  bool accurate() const noexcept { return accurate_; }

  bool operator==(const StageFlags&) const = default;

 private:
  bool executable_ = false;
  bool rendered_ = false;
  bool playable_ = false;
  bool accurate_ = false;
};

nlohmann::json to_json(const StageFlags& f);
// Rejects a non-monotone flag set with Error(kLedgerCorrupt).
StageFlags stage_flags_from_json(const nlohmann::json& j);

// `container` is the parse result when the artifact parsed (fully or
// partially) as a container. Missing upstream evidence forces every
// downstream flag false.
StageFlags stage_flags(const ExecutionOutcome& outcome,
                       const std::optional<ContainerSummary>& container,
                       std::optional<bool> playable, std::optional<bool> accurate);

}  // namespace simjudge
