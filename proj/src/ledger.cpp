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

#include "simjudge/ledger.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "simjudge/error.hpp"
#include "simjudge/hash.hpp"

namespace simjudge {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string dump(const json& j) { return j.dump(-1, ' ', false, json::error_handler_t::replace); }

json canonical(const LedgerEntry& e) {
  return {{"stage", stage_name(e.stage)}, {"key", e.key},           {"scenario_id", e.scenario_id},
          {"slot", e.slot},               {"upstream", e.upstream}, {"data", e.data}};
}

std::optional<Stage> parse_stage(std::string_view s) {
  for (Stage st : kAllStages) {
    if (stage_name(st) == s) return st;
  }
  return std::nullopt;
}

std::string read_all(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_all(int fd, std::string_view data, const fs::path& what) {
  while (!data.empty()) {
    const auto n = ::write(fd, data.data(), data.size());
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorCode::kIo, fmt::format("write {}: {}", what.string(), std::strerror(errno)));
    }
    data.remove_prefix(static_cast<std::size_t>(n));
  }
}

}  // namespace

std::string_view stage_name(Stage s) noexcept {
  switch (s) {
    case Stage::kResponse: return "response";
    case Stage::kExecution: return "execution";
    case Stage::kValidation: return "validation";
    case Stage::kJudgment: return "judgment";
    case Stage::kReward: return "reward";
  }
  return "unknown";
}

std::string_view stage_file_name(Stage s) noexcept {
  switch (s) {
    case Stage::kResponse: return "responses.jsonl";
    case Stage::kExecution: return "executions.jsonl";
    case Stage::kValidation: return "validations.jsonl";
    case Stage::kJudgment: return "judgments.jsonl";
    case Stage::kReward: return "rewards.jsonl";
  }
  return "unknown.jsonl";
}

std::string entry_hash(const LedgerEntry& e) { return sha256_hex(dump(canonical(e))); }

std::string item_key(std::string_view scenario_id, int slot) {
  return fmt::format("{}#{}", scenario_id, slot);
}

void write_file_atomic(const fs::path& path, std::string_view contents) {
  const auto tmp = path.string() + ".tmp";
  const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
  if (fd < 0) throw Error(ErrorCode::kIo, fmt::format("open {}: {}", tmp, std::strerror(errno)));
  try {
    write_all(fd, contents, tmp);
  } catch (...) {
    ::close(fd);
    throw;
  }
  ::fsync(fd);
  ::close(fd);
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::kIo, fmt::format("rename {}: {}", tmp, ec.message()));
}

RunLedger::RunLedger(fs::path dir, json manifest) : dir_(std::move(dir)), manifest_(std::move(manifest)) {}

RunLedger::~RunLedger() {
  for (auto& f : files_) {
    if (f.fd >= 0) ::close(f.fd);
  }
}

std::unique_ptr<RunLedger> RunLedger::create_or_open(const fs::path& root, const std::string& run_id,
                                                     const json& manifest) {
  if (run_id.empty() || run_id.find('/') != std::string::npos || run_id == "." || run_id == "..") {
    throw Error(ErrorCode::kConfig, "invalid run_id '" + run_id + "'", "run_id");
  }
  const auto dir = root / run_id;
  const auto manifest_path = dir / "manifest.json";
  if (fs::exists(manifest_path)) {
    auto ledger = open(root, run_id);
    if (ledger->manifest().value("config_digest", "") != manifest.value("config_digest", "")) {
      throw Error(ErrorCode::kConfig,
                  "run '" + run_id + "' already exists with a different configuration", "run_id");
    }
    return ledger;
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIo, fmt::format("create {}: {}", dir.string(), ec.message()));
  write_file_atomic(manifest_path, manifest.dump(2) + "\n");
  std::unique_ptr<RunLedger> ledger(new RunLedger(dir, manifest));
  ledger->load();
  return ledger;
}

std::unique_ptr<RunLedger> RunLedger::open(const fs::path& root, const std::string& run_id) {
  const auto dir = root / run_id;
  const auto manifest_path = dir / "manifest.json";
  if (!fs::exists(manifest_path)) throw Error(ErrorCode::kIo, "no run ledger at " + dir.string());
  json manifest;
  try {
    manifest = json::parse(read_all(manifest_path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kLedgerCorrupt, fmt::format("{}: {}", manifest_path.string(), e.what()));
  }
  std::unique_ptr<RunLedger> ledger(new RunLedger(dir, std::move(manifest)));
  ledger->load();
  return ledger;
}

void RunLedger::load() {
  for (Stage stage : kAllStages) {
    auto& file = files_[static_cast<std::size_t>(stage)];
    const auto path = dir_ / stage_file_name(stage);
    std::string text = fs::exists(path) ? read_all(path) : std::string{};
    const auto end = text.rfind('\n');
    const std::size_t keep = end == std::string::npos ? 0 : end + 1;
    if (keep != text.size()) {
      // Torn trailing line from an interrupted append.
      fs::resize_file(path, keep);
      text.resize(keep);
    }
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
      const auto nl = text.find('\n', pos);
      const std::string_view line(text.data() + pos, nl - pos);
      pos = nl + 1;
      ++line_no;
      auto corrupt = [&](std::string_view why) {
        return Error(ErrorCode::kLedgerCorrupt,
                     fmt::format("{}:{}: {}", path.filename().string(), line_no, why));
      };
      LedgerEntry e;
      try {
        auto j = json::parse(line);
        auto st = parse_stage(j.at("stage").get<std::string>());
        if (!st || *st != stage) throw corrupt("entry in the wrong stage file");
        e.stage = stage;
        e.key = j.at("key").get<std::string>();
        e.scenario_id = j.at("scenario_id").get<std::string>();
        e.slot = j.at("slot").get<int>();
        e.upstream = j.at("upstream").get<std::string>();
        e.data = j.at("data");
        e.hash = j.at("hash").get<std::string>();
      } catch (const json::exception& ex) {
        throw corrupt(ex.what());
      }
      if (entry_hash(e) != e.hash) throw corrupt("content hash mismatch");
      if (file.by_key.contains(e.key)) throw corrupt("duplicate key " + e.key);
      if (stage != Stage::kResponse) {
        const auto& prev = files_[static_cast<std::size_t>(stage) - 1];
        if (!prev.by_hash.contains(e.upstream)) throw corrupt("upstream entry missing for " + e.key);
      } else if (!e.upstream.empty()) {
        throw corrupt("response entry with an upstream");
      }
      file.by_key.emplace(e.key, file.entries.size());
      file.by_hash.emplace(e.hash, file.entries.size());
      file.entries.push_back(std::move(e));
    }
    file.fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
    if (file.fd < 0) throw Error(ErrorCode::kIo, fmt::format("open {}: {}", path.string(), std::strerror(errno)));
  }
}

std::optional<LedgerEntry> RunLedger::find(Stage stage, std::string_view key) const {
  const auto i = static_cast<std::size_t>(stage);
  std::lock_guard lock(mu_[i]);
  const auto& f = files_[i];
  auto it = f.by_key.find(key);
  if (it == f.by_key.end()) return std::nullopt;
  return f.entries[it->second];
}

std::optional<LedgerEntry> RunLedger::find_by_hash(Stage stage, std::string_view hash) const {
  const auto i = static_cast<std::size_t>(stage);
  std::lock_guard lock(mu_[i]);
  const auto& f = files_[i];
  auto it = f.by_hash.find(hash);
  if (it == f.by_hash.end()) return std::nullopt;
  return f.entries[it->second];
}

std::vector<LedgerEntry> RunLedger::entries(Stage stage) const {
  const auto i = static_cast<std::size_t>(stage);
  std::lock_guard lock(mu_[i]);
  return files_[i].entries;
}

LedgerEntry RunLedger::append(Stage stage, std::string key, std::string scenario_id, int slot,
                              std::string upstream, json data) {
  const auto i = static_cast<std::size_t>(stage);
  if (stage != Stage::kResponse) {
    std::lock_guard lock(mu_[i - 1]);
    if (!files_[i - 1].by_hash.contains(upstream)) {
      throw Error(ErrorCode::kLedgerCorrupt,
                  fmt::format("{} entry for {} has no upstream entry", stage_name(stage), key));
    }
  }
  LedgerEntry e;
  e.stage = stage;
  e.key = std::move(key);
  e.scenario_id = std::move(scenario_id);
  e.slot = slot;
  e.upstream = std::move(upstream);
  // Normalize once so the stored form and the hashed form agree byte for byte.
  e.data = json::parse(dump(data));
  e.hash = entry_hash(e);
  auto line = canonical(e);
  line["hash"] = e.hash;
  const auto text = dump(line) + "\n";
  {
    std::lock_guard lock(mu_[i]);
    auto& f = files_[i];
    if (f.by_key.contains(e.key)) {
      throw Error(ErrorCode::kLedgerCorrupt,
                  fmt::format("duplicate {} entry for {}", stage_name(stage), e.key));
    }
    write_all(f.fd, text, dir_ / stage_file_name(stage));
    f.by_key.emplace(e.key, f.entries.size());
    f.by_hash.emplace(e.hash, f.entries.size());
    f.entries.push_back(e);
  }
  {
    std::lock_guard lock(count_mu_);
    ++appended_;
  }
  if (hook_) hook_(e);
  return e;
}

std::size_t RunLedger::appended_this_session() const {
  std::lock_guard lock(count_mu_);
  return appended_;
}

}  // namespace simjudge
