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
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace simjudge {

enum class Stage { kResponse, kExecution, kValidation, kJudgment, kReward };

inline constexpr std::array<Stage, 5> kAllStages = {Stage::kResponse, Stage::kExecution,
                                                    Stage::kValidation, Stage::kJudgment,
                                                    Stage::kReward};

std::string_view stage_name(Stage s) noexcept;       // "response", ...
std::string_view stage_file_name(Stage s) noexcept;  // "responses.jsonl", ...

struct LedgerEntry {
  Stage stage = Stage::kResponse;
  std::string key;  // unique per stage
  std::string scenario_id;
  int slot = -1;         // -1 for entries not tied to a sampling slot
  std::string upstream;  // hash of the previous stage's entry; empty for responses
  nlohmann::json data;
  std::string hash;  // sha256 over the canonical entry without this field
};

std::string entry_hash(const LedgerEntry& e);
std::string item_key(std::string_view scenario_id, int slot);

// Append-only, hash-chained stage files under <root>/<run_id>/ plus a
// manifest. Appends are serialized per stage file and written with a single
// write(2) each, so a kill leaves at most one torn trailing line, which is
// dropped on the next open.
class RunLedger {
 public:
  // Creates the run directory and manifest, or opens an existing run whose
  // manifest carries the same config digest. A different digest throws
  // Error(kConfig).
  static std::unique_ptr<RunLedger> create_or_open(const std::filesystem::path& root,
                                                   const std::string& run_id,
                                                   const nlohmann::json& manifest);
  // Throws Error(kIo) when the run does not exist.
  static std::unique_ptr<RunLedger> open(const std::filesystem::path& root,
                                         const std::string& run_id);

  ~RunLedger();
  RunLedger(const RunLedger&) = delete;
  RunLedger& operator=(const RunLedger&) = delete;

  const std::filesystem::path& dir() const noexcept { return dir_; }
  const nlohmann::json& manifest() const noexcept { return manifest_; }

  // Copy of the entry, if present.
  std::optional<LedgerEntry> find(Stage stage, std::string_view key) const;
  std::optional<LedgerEntry> find_by_hash(Stage stage, std::string_view hash) const;
  std::vector<LedgerEntry> entries(Stage stage) const;

  // Throws Error(kLedgerCorrupt) for a duplicate key or a missing upstream.
  LedgerEntry append(Stage stage, std::string key, std::string scenario_id, int slot,
                     std::string upstream, nlohmann::json data);

  // Called after every successful append (test hook; may throw to abort).
  void set_append_hook(std::function<void(const LedgerEntry&)> hook) { hook_ = std::move(hook); }
  std::size_t appended_this_session() const;

 private:
  RunLedger(std::filesystem::path dir, nlohmann::json manifest);
  void load();

  struct StageFile {
    int fd = -1;
    std::vector<LedgerEntry> entries;
    std::map<std::string, std::size_t, std::less<>> by_key;
    std::map<std::string, std::size_t, std::less<>> by_hash;
  };

  std::filesystem::path dir_;
  nlohmann::json manifest_;
  std::array<StageFile, 5> files_;
  mutable std::array<std::mutex, 5> mu_;
  std::function<void(const LedgerEntry&)> hook_;
  mutable std::mutex count_mu_;
  std::size_t appended_ = 0;
};

// Atomic replace: write to a sibling temp file, then rename.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

}  // namespace simjudge
