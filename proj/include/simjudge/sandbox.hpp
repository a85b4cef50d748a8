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

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "simjudge/promptkit.hpp"

namespace simjudge {

using Millis = std::chrono::milliseconds;

enum class NetworkPolicy { kAllowed, kDenied };

// Caps are independent of each other; every cap must be > 0.
struct ExecutionLimits {
  Millis wall_timeout{120000};
  Millis cpu_timeout{120000};
  std::uint64_t memory_cap = 4ull << 30;
  std::size_t output_cap = 1u << 20;  // per captured stream
  NetworkPolicy network = NetworkPolicy::kDenied;
  std::uint64_t workdir_quota = 1ull << 30;  // enforced as the per-file size limit

  void validate() const;
};

ExecutionLimits limits_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ExecutionLimits& l);

enum class ExecStatus { kSuccess, kRuntimeError, kTimeout, kResourceKill, kLaunchFailure };

std::string_view to_string(ExecStatus s) noexcept;
std::optional<ExecStatus> parse_exec_status(std::string_view s);

struct ArtifactRef {
  std::filesystem::path path;
  std::uint64_t size = 0;
  std::string content_hash;  // sha256 hex of the file bytes
};

// Present only for an existing regular file with size > 0.
std::optional<ArtifactRef> make_artifact_ref(const std::filesystem::path& path);

struct ExecutionOutcome {
  ExecStatus status = ExecStatus::kLaunchFailure;
  std::optional<int> exit_code;
  std::optional<int> signal;
  Millis wall_time{0};
  std::string captured_stdout;
  std::string captured_stderr;
  std::optional<ArtifactRef> artifact;
  std::string detail;
  bool network_isolated = false;
};

nlohmann::json to_json(const ExecutionOutcome& o);
ExecutionOutcome outcome_from_json(const nlohmann::json& j);

// executable <=> exit status 0.
bool classify_outcome(const ExecutionOutcome& outcome) noexcept;

struct SandboxConfig {
  std::vector<std::string> interpreter{"python3"};
  std::string program_filename = "main.py";
  ExecutionLimits limits;
  std::map<std::string, std::string> extra_env;
};

SandboxConfig sandbox_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SandboxConfig& c);

// Runs `<interpreter> <program_filename> <scratch_dir>/<output_name>` inside
// `scratch_dir`, which is wiped and recreated first. The whole process group
// is killed and reaped before returning. Never throws for program failures;
// launch problems come back as kLaunchFailure. Throws Error(kInvalidArgument)
// for an unsafe output_name.
ExecutionOutcome execute_program(const ExtractedProgram& program, const SandboxConfig& config,
                                 const std::filesystem::path& scratch_dir,
                                 std::string_view output_name);

// Lower-level process supervision, shared with the external probe and frame
// decoder commands.
struct ProcessSpec {
  std::vector<std::string> argv;
  std::filesystem::path cwd;
  std::map<std::string, std::string> env;  // merged over a minimal base environment
  ExecutionLimits limits;
};

struct ProcessResult {
  enum class End { kExited, kSignaled, kWallTimeout, kLaunchFailed };
  End end = End::kLaunchFailed;
  int exit_code = -1;
  int signal = 0;
  int process_group = 0;
  Millis wall_time{0};
  std::string out;
  std::string err;
  std::string launch_error;
  bool network_isolated = false;
};

ProcessResult run_process(const ProcessSpec& spec);

// Substitutes `{name}` tokens inside each argv element.
std::vector<std::string> expand_command(const std::vector<std::string>& tmpl,
                                        const std::map<std::string, std::string, std::less<>>& values);

}  // namespace simjudge
