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
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "simjudge/corpus.hpp"
#include "simjudge/judgecore.hpp"
#include "simjudge/ledger.hpp"
#include "simjudge/llm_gateway.hpp"
#include "simjudge/metricsuite.hpp"
#include "simjudge/promptkit.hpp"
#include "simjudge/rewardlab.hpp"
#include "simjudge/sandbox.hpp"
#include "simjudge/videocheck.hpp"

namespace simjudge {

struct TemplateConfig {
  std::filesystem::path dir;  // empty: the installed template directory
  std::string generation_system = "generation_system.txt";
  std::string generation_user = "generation_user.txt";
  std::string judge = "judge_vlm.txt";
  std::string llm_judge = "judge_llm.txt";
};

struct WorkerWidths {
  int generate = 4;
  int execute = 2;
  int validate = 2;
  int judge = 4;
};

struct RunConfig {
  std::string run_id;
  std::filesystem::path ledger_root = "runs";
  std::filesystem::path corpus_path;
  std::optional<std::filesystem::path> split_manifest;
  std::string split;  // empty: every scenario in the corpus
  Strictness strictness = Strictness::kStrict;
  TemplateConfig templates;
  std::map<std::string, EndpointConfig> endpoints;
  std::string generator;
  SamplingProfile sampling;
  EnsembleConfig judges;
  TransportConfig judge_transport;
  SandboxConfig sandbox;
  PlayabilityPolicy playability;
  RewardKind reward_kind = RewardKind::kBinary;
  KernelDefaults kernel;
  WorkerWidths workers;
  int service_concurrency = 8;
  std::string output_name = "output.mp4";

  // Throws Error(kConfig) naming the offending key.
  void validate() const;
};

// Relative paths resolve against `base_dir`.
RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& c);

// sha256 of the canonical config document. Worker widths and service
// concurrency are excluded: they never change results.
std::string config_digest(const RunConfig& c);

// Injection points for transports, time and test hooks.
struct RuntimeEnv {
  std::function<std::shared_ptr<Transport>(const EndpointConfig&)> transport_for;
  std::shared_ptr<Clock> clock;
  BackoffPolicy backoff;
  std::function<void(const LedgerEntry&)> on_append;
  // Invoked when a worker starts (+1) and finishes (-1) an item in a stage.
  std::function<void(Stage, int)> on_stage_activity;
};

// Everything a run needs besides the ledger: corpus, prompts, clients.
class RunContext {
 public:
  RunContext(RunConfig config, RuntimeEnv env);

  const RunConfig& config() const noexcept { return config_; }
  const Corpus& corpus() const noexcept { return corpus_; }
  const std::vector<std::string>& scenario_ids() const noexcept { return scenario_ids_; }
  const PromptTemplate& generation_template() const noexcept { return generation_; }
  const PromptTemplate& judge_template() const noexcept { return judge_; }
  const PromptTemplate& llm_judge_template() const noexcept { return llm_judge_; }
  const RuntimeEnv& env() const noexcept { return env_; }

  ChatClient& client(const std::string& endpoint);
  std::vector<ChatClient*> clients(const std::vector<std::string>& names);

 private:
  RunConfig config_;
  RuntimeEnv env_;
  Corpus corpus_;
  std::vector<std::string> scenario_ids_;
  PromptTemplate generation_;
  PromptTemplate judge_;
  PromptTemplate llm_judge_;
  std::map<std::string, std::unique_ptr<ChatClient>> clients_;
};

// Which judges score an item. Evaluation runs use the held-out evaluation
// judge when configured; the reward service always uses the training set.
enum class JudgeRole { kEvaluation, kTraining };

// Per-item stage steps shared by batch runs and the reward service. Each
// reads the upstream entry, does the work, and appends one entry.
class StageRunner {
 public:
  StageRunner(RunContext& ctx, RunLedger& ledger, JudgeRole role);

  LedgerEntry generate(const Scenario& s, int slot, const std::string& key);
  LedgerEntry record_response(const Scenario& s, int slot, const std::string& key,
                              const std::string& text, RewardKind kind);
  LedgerEntry execute(const Scenario& s, const LedgerEntry& response);
  LedgerEntry validate(const Scenario& s, const LedgerEntry& execution);
  // Returns nullopt instead of appending when `require_available` is set and
  // every judge failed on transport.
  std::optional<LedgerEntry> judge(const Scenario& s, const LedgerEntry& validation,
                                   bool require_available = false);
  struct Scored {
    RewardResult reward;
    StageFlags flags;
    std::string judge_failure;
  };
  // Reward and final flags for a judgment, without touching the ledger.
  Scored reward_preview(const Scenario& s, const LedgerEntry& judgment) const;
  // `reply` is stored alongside when given (reward service answers).
  LedgerEntry reward(const Scenario& s, const LedgerEntry& judgment,
                     nlohmann::json reply = nullptr);

  // Reward kind recorded on the response entry (run default otherwise).
  RewardKind kind_of(const LedgerEntry& response) const;

 private:
  std::optional<LedgerEntry> upstream_of(Stage stage, const LedgerEntry& e) const;

  RunContext& ctx_;
  RunLedger& ledger_;
  JudgeRole role_;
};

// Generates, executes, validates, judges and rewards every (scenario, slot)
// of the configured split, skipping keys already in the ledger, then writes
// <run>/metrics.json. An existing run with the same config digest resumes.
BenchmarkReport run_evaluation(const RunConfig& config, const RuntimeEnv& env = {});

// Reloads the config from the run manifest and continues.
BenchmarkReport resume_run(const std::filesystem::path& ledger_root, const std::string& run_id,
                           const RuntimeEnv& env = {});

// Builds the report from ledger contents only.
BenchmarkReport report_from_ledger(const RunLedger& ledger);

// Rereads <run>/metrics.json.
BenchmarkReport load_run_report(const std::filesystem::path& ledger_root, const std::string& run_id);

std::string render_metrics(const BenchmarkReport& report);

}  // namespace simjudge
