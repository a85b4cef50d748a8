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
#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "simjudge/pipeline.hpp"

namespace simjudge {

struct ServiceReply {
  int status = 200;
  nlohmann::json body;
  bool cache_hit = false;
};

// Synchronous reward scoring over HTTP:
//   POST /v1/rewards        {scenario_id, response_text, kind?}
//   POST /v1/rewards/batch  {items: [...]}
//   GET  /healthz
// Identical (scenario_id, response hash, kind) requests are answered from
// the ledger without new work.
class RewardService {
 public:
  RewardService(const RunConfig& config, const RuntimeEnv& env = {});
  ~RewardService();

  // Core handler, also usable without HTTP.
  ServiceReply score(const nlohmann::json& request);
  ServiceReply score_batch(const nlohmann::json& request);

  // Binds and serves on a background thread; returns the bound port
  // (port 0 picks a free one). Throws Error(kIo) when binding fails.
  int start(const std::string& host, int port);
  void wait();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace simjudge
