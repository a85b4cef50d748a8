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

#include "simjudge/service.hpp"

#include <map>
#include <mutex>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>

#include "simjudge/error.hpp"
#include "simjudge/hash.hpp"

namespace simjudge {

using nlohmann::json;

namespace {

json error_body(std::string_view code, std::string_view message) {
  return {{"error", {{"code", code}, {"message", message}}}};
}

ServiceReply reply(int status, json body, bool hit = false) { return {status, std::move(body), hit}; }

}  // namespace

struct RewardService::Impl {
  Impl(const RunConfig& config, const RuntimeEnv& env) : ctx(config, env) {
    json manifest = {{"run_id", config.run_id},
                     {"config_digest", config_digest(config)},
                     {"config", to_json(config)},
                     {"scenario_ids", json::array()},
                     {"domains", json::object()},
                     {"k", config.sampling.k},
                     {"model", "external"},
                     {"scoring_judges", config.judges.judges},
                     {"reward_kind", to_string(config.reward_kind)},
                     {"kernel", to_json(config.kernel)},
                     {"service", true}};
    ledger = RunLedger::create_or_open(config.ledger_root, config.run_id, manifest);
    if (env.on_append) ledger->set_append_hook(env.on_append);
    runner = std::make_unique<StageRunner>(ctx, *ledger, JudgeRole::kTraining);
  }

  std::mutex& key_mutex(const std::string& key) {
    std::lock_guard lock(keys_mu);
    auto& slot = key_locks[key];
    if (!slot) slot = std::make_unique<std::mutex>();
    return *slot;
  }

  // Body shared by fresh and cached answers.
  json body_from(const LedgerEntry& reward) const {
    json body = reward.data.at("reply");
    body["provenance_hashes"]["reward"] = reward.hash;
    return body;
  }

  ServiceReply score(const json& request) {
    if (!request.is_object() || !request.contains("scenario_id") || !request["scenario_id"].is_string() ||
        !request.contains("response_text") || !request["response_text"].is_string()) {
      return reply(422, error_body("malformed_body", "expected {scenario_id, response_text, kind?}"));
    }
    RewardKind kind = ctx.config().reward_kind;
    if (request.contains("kind")) {
      const auto& k = request["kind"];
      auto parsed = k.is_string() ? parse_reward_kind(k.get<std::string>()) : std::nullopt;
      if (!parsed) return reply(422, error_body("malformed_body", "kind must be binary, ratio or llm_binary"));
      kind = *parsed;
    }
    const auto id = request["scenario_id"].get<std::string>();
    const auto text = request["response_text"].get<std::string>();
    const auto* scenario = ctx.corpus().find(id);
    if (!scenario) return reply(404, error_body("unknown_scenario", "no scenario '" + id + "'"));

    const auto key = fmt::format("{}#{}#{}", id, to_string(kind), sha256_hex(text));
    std::lock_guard key_lock(key_mutex(key));
    if (auto done = ledger->find(Stage::kReward, key)) return reply(200, body_from(*done), true);

    auto response = ledger->find(Stage::kResponse, key);
    if (!response) response = runner->record_response(*scenario, -1, key, text, kind);
    auto execution = ledger->find(Stage::kExecution, key);
    if (!execution) execution = runner->execute(*scenario, *response);
    auto validation = ledger->find(Stage::kValidation, key);
    if (!validation) validation = runner->validate(*scenario, *execution);
    auto judgment = ledger->find(Stage::kJudgment, key);
    if (!judgment) judgment = runner->judge(*scenario, *validation, /*require_available=*/true);
    if (!judgment) {
      return reply(503, error_body("judges_unavailable", "no judge in the ensemble could be reached"));
    }
    // The reply is stored with the reward entry so repeats are byte-identical.
    const auto preview = runner->reward_preview(*scenario, *judgment);
    json stored = {
        {"scenario_id", id},
        {"kind", to_string(kind)},
        {"reward", preview.reward.value},
        {"per_question", preview.reward.per_question},
        {"gated_zero", preview.reward.gated_zero},
        {"stage_flags", to_json(preview.flags)},
        {"judge_failure", preview.judge_failure},
        {"provenance_hashes",
         {{"response", response->hash},
          {"execution", execution->hash},
          {"validation", validation->hash},
          {"judgment", judgment->hash}}},
    };
    const auto entry = runner->reward(*scenario, *judgment, std::move(stored));
    return reply(200, body_from(entry), false);
  }

  ServiceReply score_batch(const json& request) {
    if (!request.is_object() || !request.contains("items") || !request["items"].is_array()) {
      return reply(422, error_body("malformed_body", "expected {items: [...]}"));
    }
    json results = json::array();
    for (const auto& item : request["items"]) {
      auto r = safe_score(item);
      results.push_back({{"status", r.status}, {"cached", r.cache_hit}, {"body", std::move(r.body)}});
    }
    return reply(200, {{"results", std::move(results)}});
  }

  ServiceReply safe_score(const json& request) {
    try {
      return score(request);
    } catch (const Error& e) {
      const int status = e.code() == ErrorCode::kUnknownScenario ? 404 : 500;
      return reply(status, error_body(to_string(e.code()), e.what()));
    } catch (const std::exception& e) {
      return reply(500, error_body("internal", e.what()));
    }
  }

  RunContext ctx;
  std::unique_ptr<RunLedger> ledger;
  std::unique_ptr<StageRunner> runner;
  std::mutex keys_mu;
  std::map<std::string, std::unique_ptr<std::mutex>> key_locks;
  httplib::Server server;
  std::thread thread;
  std::mutex join_mu;
};

RewardService::RewardService(const RunConfig& config, const RuntimeEnv& env)
    : impl_(std::make_unique<Impl>(config, env)) {
  auto& svr = impl_->server;
  const auto cap = static_cast<std::size_t>(config.service_concurrency);
  svr.new_task_queue = [cap] { return new httplib::ThreadPool(cap); };

  auto respond = [](httplib::Response& res, const ServiceReply& r) {
    res.status = r.status;
    res.set_header("X-Cache", r.cache_hit ? "hit" : "miss");
    res.set_content(r.body.dump(-1, ' ', false, json::error_handler_t::replace), "application/json");
  };
  auto parse = [](const httplib::Request& req) -> std::optional<json> {
    try {
      return json::parse(req.body);
    } catch (const json::exception&) {
      return std::nullopt;
    }
  };
  svr.Post("/v1/rewards", [this, respond, parse](const httplib::Request& req, httplib::Response& res) {
    auto body = parse(req);
    respond(res, body ? impl_->safe_score(*body)
                      : ServiceReply{422, error_body("malformed_body", "body is not JSON"), false});
  });
  svr.Post("/v1/rewards/batch", [this, respond, parse](const httplib::Request& req, httplib::Response& res) {
    auto body = parse(req);
    respond(res, body ? impl_->score_batch(*body)
                      : ServiceReply{422, error_body("malformed_body", "body is not JSON"), false});
  });
  svr.Get("/healthz", [this](const httplib::Request&, httplib::Response& res) {
    json body = {{"status", "ok"},
                 {"run_id", impl_->ctx.config().run_id},
                 {"scenarios", impl_->ctx.corpus().size()}};
    res.set_content(body.dump(), "application/json");
  });
}

RewardService::~RewardService() { stop(); }

ServiceReply RewardService::score(const json& request) { return impl_->safe_score(request); }

ServiceReply RewardService::score_batch(const json& request) { return impl_->score_batch(request); }

int RewardService::start(const std::string& host, int port) {
  auto& svr = impl_->server;
  const int bound = port == 0 ? svr.bind_to_any_port(host) : (svr.bind_to_port(host, port) ? port : -1);
  if (bound <= 0) throw Error(ErrorCode::kIo, fmt::format("cannot bind {}:{}", host, port));
  impl_->thread = std::thread([&svr] { svr.listen_after_bind(); });
  return bound;
}

void RewardService::wait() {
  std::lock_guard lock(impl_->join_mu);
  if (impl_->thread.joinable()) impl_->thread.join();
}

void RewardService::stop() {
  if (!impl_) return;
  impl_->server.stop();
  wait();
}

}  // namespace simjudge
