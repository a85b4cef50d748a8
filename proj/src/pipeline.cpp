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

#include "simjudge/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <deque>
#include <exception>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "simjudge/error.hpp"
#include "simjudge/hash.hpp"

#ifndef SIMJUDGE_TEMPLATE_DIR
#define SIMJUDGE_TEMPLATE_DIR "share/templates"
#endif

namespace simjudge {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

Error config_error(const std::string& field, const std::string& message) {
  return Error(ErrorCode::kConfig, field + ": " + message, field);
}

fs::path resolve(const fs::path& base, const fs::path& p) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return (base / p).lexically_normal();
}

fs::path default_template_dir() {
  if (const char* env = std::getenv("SIMJUDGE_TEMPLATE_DIR"); env && *env) return env;
  return SIMJUDGE_TEMPLATE_DIR;
}

bool plain_name(std::string_view name) {
  return !name.empty() && name != "." && name != ".." && name.find('/') == std::string_view::npos &&
         name.find('\0') == std::string_view::npos;
}

std::string file_token(std::string_view name) {
  std::string out;
  for (char c : name) {
    const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '_' || c == '-';
    out.push_back(ok ? c : '_');
  }
  return out;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const std::set<std::string, std::less<>> kConfigKeys = {
    "run_id",  "ledger_root", "corpus",      "templates", "endpoints", "generator",  "judges",
    "sandbox", "playability", "reward",      "workers",   "service",   "output_name"};

}  // namespace

void RunConfig::validate() const {
  if (!plain_name(run_id)) throw config_error("run_id", "must be a plain, non-empty name");
  if (corpus_path.empty()) throw config_error("corpus.path", "is required");
  if (split_manifest && split.empty()) throw config_error("corpus.split", "is required with a split manifest");
  if (!endpoints.contains(generator)) {
    throw config_error("generator.endpoint", "'" + generator + "' is not a configured endpoint");
  }
  for (const auto& [name, ep] : endpoints) ep.validate();
  sampling.validate();
  judges.validate();
  std::vector<std::string> all = judges.judges;
  if (!judges.evaluation_judge.empty()) all.push_back(judges.evaluation_judge);
  for (const auto& j : all) {
    auto it = endpoints.find(j);
    if (it == endpoints.end()) throw config_error("judges", "'" + j + "' is not a configured endpoint");
    if (judge_transport.mode == MediaTransport::kNative && !it->second.supports_video) {
      throw config_error("judges.transport.mode",
                         "native video needs endpoints that accept video; '" + j + "' does not");
    }
  }
  sandbox.limits.validate();
  playability.validate();
  for (auto [name, w] : {std::pair{"workers.generate", workers.generate},
                         std::pair{"workers.execute", workers.execute},
                         std::pair{"workers.validate", workers.validate},
                         std::pair{"workers.judge", workers.judge},
                         std::pair{"service.concurrency", service_concurrency}}) {
    if (w < 1) throw config_error(name, "must be >= 1");
  }
  if (!plain_name(output_name)) throw config_error("output_name", "must be a plain file name");
}

RunConfig run_config_from_json(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw Error(ErrorCode::kConfig, "run config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!kConfigKeys.contains(key)) throw config_error(key, "unknown key");
  }
  RunConfig c;
  try {
    c.run_id = j.at("run_id").get<std::string>();
    c.ledger_root = resolve(base_dir, j.value("ledger_root", std::string("runs")));

    const auto& corpus = j.at("corpus");
    c.corpus_path = resolve(base_dir, corpus.at("path").get<std::string>());
    if (corpus.contains("split_manifest") && !corpus["split_manifest"].is_null()) {
      c.split_manifest = resolve(base_dir, corpus["split_manifest"].get<std::string>());
    }
    c.split = corpus.value("split", std::string{});
    c.strictness = corpus.value("strict", true) ? Strictness::kStrict : Strictness::kLenient;

    const auto templates = j.value("templates", json::object());
    c.templates.dir = templates.contains("dir") ? resolve(base_dir, templates["dir"].get<std::string>())
                                                : default_template_dir();
    c.templates.generation_system = templates.value("generation_system", c.templates.generation_system);
    c.templates.generation_user = templates.value("generation_user", c.templates.generation_user);
    c.templates.judge = templates.value("judge", c.templates.judge);
    c.templates.llm_judge = templates.value("llm_judge", c.templates.llm_judge);

    for (const auto& [name, ep] : j.at("endpoints").items()) {
      c.endpoints.emplace(name, endpoint_from_json(name, ep));
    }

    const auto& gen = j.at("generator");
    c.generator = gen.at("endpoint").get<std::string>();
    c.sampling = sampling_from_json(gen.value("sampling", json::object()));

    const auto& judges = j.at("judges");
    c.judges = ensemble_from_json(judges);
    if (judges.contains("transport")) {
      c.judge_transport = transport_from_json(judges["transport"]);
    } else {
      // Frames through the bundled OpenCV-based decoder.
      c.judge_transport.decoder_command = {"python3", (c.templates.dir.parent_path() / "decoders" / "frame_at.py").string(),
                                           "{input}", "{time}", "{output}"};
    }

    c.sandbox = sandbox_from_json(j.value("sandbox", json::object()));
    c.playability = playability_from_json(j.value("playability", json::object()));

    const auto reward = j.value("reward", json::object());
    const auto kind = reward.value("kind", std::string("binary"));
    auto parsed = parse_reward_kind(kind);
    if (!parsed) throw config_error("reward.kind", "unknown reward kind '" + kind + "'");
    c.reward_kind = *parsed;
    c.kernel = kernel_defaults_from_json(reward);

    const auto workers = j.value("workers", json::object());
    c.workers.generate = workers.value("generate", c.workers.generate);
    c.workers.execute = workers.value("execute", c.workers.execute);
    c.workers.validate = workers.value("validate", c.workers.validate);
    c.workers.judge = workers.value("judge", c.workers.judge);
    c.service_concurrency = j.value("service", json::object()).value("concurrency", c.service_concurrency);
    c.output_name = j.value("output_name", c.output_name);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfig, std::string("run config: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfig, fmt::format("{}: {}", path.string(), e.what()));
  }
  return run_config_from_json(j, fs::absolute(path).parent_path());
}

json to_json(const RunConfig& c) {
  json endpoints = json::object();
  for (const auto& [name, ep] : c.endpoints) endpoints[name] = to_json(ep);
  auto judges = to_json(c.judges);
  judges["transport"] = to_json(c.judge_transport);
  auto reward = to_json(c.kernel);
  reward["kind"] = to_string(c.reward_kind);
  return {
      {"run_id", c.run_id},
      {"ledger_root", c.ledger_root.string()},
      {"corpus",
       {{"path", c.corpus_path.string()},
        {"split_manifest", c.split_manifest ? json(c.split_manifest->string()) : json(nullptr)},
        {"split", c.split},
        {"strict", c.strictness == Strictness::kStrict}}},
      {"templates",
       {{"dir", c.templates.dir.string()},
        {"generation_system", c.templates.generation_system},
        {"generation_user", c.templates.generation_user},
        {"judge", c.templates.judge},
        {"llm_judge", c.templates.llm_judge}}},
      {"endpoints", std::move(endpoints)},
      {"generator", {{"endpoint", c.generator}, {"sampling", to_json(c.sampling)}}},
      {"judges", std::move(judges)},
      {"sandbox", to_json(c.sandbox)},
      {"playability", to_json(c.playability)},
      {"reward", std::move(reward)},
      {"workers",
       {{"generate", c.workers.generate},
        {"execute", c.workers.execute},
        {"validate", c.workers.validate},
        {"judge", c.workers.judge}}},
      {"service", {{"concurrency", c.service_concurrency}}},
      {"output_name", c.output_name},
  };
}

std::string config_digest(const RunConfig& c) {
  auto j = to_json(c);
  j.erase("workers");
  j.erase("service");
  j.erase("ledger_root");
  return sha256_hex(j.dump());
}

// ---------------------------------------------------------------------------

RunContext::RunContext(RunConfig config, RuntimeEnv env) : config_(std::move(config)), env_(std::move(env)) {
  config_.validate();
  if (!env_.clock) env_.clock = system_clock();
  corpus_ = load_corpus(config_.corpus_path, config_.strictness);
  if (config_.split_manifest) {
    const auto manifest = load_split_manifest(*config_.split_manifest);
    validate_split_manifest(manifest, corpus_);
    const auto* split = manifest.find(config_.split);
    if (!split) throw config_error("corpus.split", "no split named '" + config_.split + "'");
    scenario_ids_ = split->scenario_ids;
  } else {
    for (const auto& s : corpus_) scenario_ids_.push_back(s.id);
  }
  const auto& t = config_.templates;
  generation_ = load_template(t.dir / t.generation_user, t.dir / t.generation_system);
  judge_ = load_template(t.dir / t.judge);
  llm_judge_ = load_template(t.dir / t.llm_judge);
  for (const auto& [name, ep] : config_.endpoints) {
    auto transport = env_.transport_for ? env_.transport_for(ep) : make_http_transport();
    clients_.emplace(name, std::make_unique<ChatClient>(ep, std::move(transport), env_.clock, env_.backoff));
  }
}

ChatClient& RunContext::client(const std::string& endpoint) {
  auto it = clients_.find(endpoint);
  if (it == clients_.end()) throw config_error("endpoints", "'" + endpoint + "' is not configured");
  return *it->second;
}

std::vector<ChatClient*> RunContext::clients(const std::vector<std::string>& names) {
  std::vector<ChatClient*> out;
  for (const auto& n : names) out.push_back(&client(n));
  return out;
}

// ---------------------------------------------------------------------------

StageRunner::StageRunner(RunContext& ctx, RunLedger& ledger, JudgeRole role)
    : ctx_(ctx), ledger_(ledger), role_(role) {}

RewardKind StageRunner::kind_of(const LedgerEntry& response) const {
  auto k = parse_reward_kind(response.data.value("kind", std::string{}));
  return k.value_or(ctx_.config().reward_kind);
}

std::optional<LedgerEntry> StageRunner::upstream_of(Stage stage, const LedgerEntry& e) const {
  return ledger_.find_by_hash(stage, e.upstream);
}

LedgerEntry StageRunner::generate(const Scenario& s, int slot, const std::string& key) {
  const auto& cfg = ctx_.config();
  const auto messages = render_generation_prompt(ctx_.generation_template(), s);
  std::optional<std::int64_t> seed;
  if (cfg.sampling.seed) seed = *cfg.sampling.seed + slot;
  json data = {{"kind", to_string(cfg.reward_kind)}, {"endpoint", cfg.generator}};
  try {
    auto c = ctx_.client(cfg.generator).complete(messages, cfg.sampling, seed);
    data["ok"] = true;
    data["text"] = c.text;
    data["finish_reason"] = c.finish_reason;
    data["usage"] = {{"prompt_tokens", c.usage.prompt_tokens},
                     {"completion_tokens", c.usage.completion_tokens},
                     {"total_tokens", c.usage.total_tokens}};
    data["attempts"] = c.attempts.size();
  } catch (const Error& e) {
    data["ok"] = false;
    data["error"] = {{"code", to_string(e.code())}, {"message", e.what()}};
  }
  return ledger_.append(Stage::kResponse, key, s.id, slot, "", std::move(data));
}

LedgerEntry StageRunner::record_response(const Scenario& s, int slot, const std::string& key,
                                         const std::string& text, RewardKind kind) {
  json data = {{"kind", to_string(kind)}, {"ok", true}, {"text", text}, {"endpoint", "external"}};
  return ledger_.append(Stage::kResponse, key, s.id, slot, "", std::move(data));
}

LedgerEntry StageRunner::execute(const Scenario& s, const LedgerEntry& response) {
  const auto& cfg = ctx_.config();
  ExecutionOutcome outcome;
  json data = json::object();
  if (!response.data.value("ok", false)) {
    outcome.detail = "no_response";
  } else {
    const auto text = response.data.at("text").get<std::string>();
    try {
      const auto program = extract_code_block(text);
      data["program_sha256"] = sha256_hex(program.source);
      const auto scratch_id = sha256_hex(fmt::format("{}\n{}\n{}", response.scenario_id, response.key, text));
      const auto scratch = ledger_.dir() / "exec" / scratch_id;
      data["scratch"] = fs::relative(scratch, ledger_.dir()).string();
      outcome = execute_program(program, cfg.sandbox, scratch, cfg.output_name);
    } catch (const Error& e) {
      outcome = ExecutionOutcome{};
      outcome.detail = e.code() == ErrorCode::kNoCodeBlock ? "no_code_block" : e.what();
    }
  }
  data["outcome"] = to_json(outcome);
  return ledger_.append(Stage::kExecution, response.key, s.id, response.slot, response.hash, std::move(data));
}

LedgerEntry StageRunner::validate(const Scenario& s, const LedgerEntry& execution) {
  const auto outcome = outcome_from_json(execution.data.at("outcome"));
  std::optional<ContainerSummary> container;
  json data = json::object();
  data["container_error"] = nullptr;
  if (outcome.artifact) {
    try {
      container = parse_container_file(outcome.artifact->path);
    } catch (const ContainerError& e) {
      data["container_error"] = to_string(e.code());
      if (e.code() == ErrorCode::kTruncated) container = e.partial();
    } catch (const Error& e) {
      data["container_error"] = to_string(e.code());
    }
  }
  std::optional<bool> playable;
  json reasons = json::array();
  // Probe and policy only apply past the executable gate.
  if (classify_outcome(outcome) && container) {
    auto verdict = assess_playability(*container, ctx_.config().playability, outcome.artifact->path);
    playable = verdict.playable;
    reasons = verdict.reasons;
  }
  const auto flags = stage_flags(outcome, container, playable, std::nullopt);
  data["container"] = container ? to_json(*container) : json(nullptr);
  data["reasons"] = std::move(reasons);
  data["flags"] = to_json(flags);
  return ledger_.append(Stage::kValidation, execution.key, s.id, execution.slot, execution.hash,
                        std::move(data));
}

std::optional<LedgerEntry> StageRunner::judge(const Scenario& s, const LedgerEntry& validation,
                                              bool require_available) {
  const auto& cfg = ctx_.config();
  const auto execution = upstream_of(Stage::kExecution, validation);
  const auto response = execution ? upstream_of(Stage::kResponse, *execution) : std::nullopt;
  if (!response) throw Error(ErrorCode::kLedgerCorrupt, "broken chain for " + validation.key);
  const auto kind = kind_of(*response);
  const auto flags = stage_flags_from_json(validation.data.at("flags"));

  std::vector<std::string> names = cfg.judges.judges;
  if (role_ == JudgeRole::kEvaluation && !cfg.judges.evaluation_judge.empty()) {
    names = {cfg.judges.evaluation_judge};
  }
  std::string label = names.size() == 1 ? names.front() : [&] {
    auto sorted = names;
    std::sort(sorted.begin(), sorted.end());
    std::string joined;
    for (const auto& n : sorted) joined += (joined.empty() ? "" : ",") + n;
    return "majority(" + joined + ")";
  }();

  std::size_t m = s.question_count();
  if (kind == RewardKind::kLlmBinary) m += 2;

  JudgmentSet set;
  if (!flags.playable()) {
    set = JudgmentSet::failed_set(label, m, JudgeFailure::kUnusable, "output video is not playable");
  } else {
    std::optional<JudgePayload> payload;
    try {
      if (kind == RewardKind::kLlmBinary) {
        const auto program = extract_code_block(response->data.at("text").get<std::string>());
        payload = JudgePayload{{}, {}, render_llm_judge_prompt(ctx_.llm_judge_template(), s.description,
                                                                s.questions, program),
                               s.id};
      } else {
        const auto outcome = outcome_from_json(execution->data.at("outcome"));
        const auto summary = summary_from_json(validation.data.at("container"));
        payload = build_payload(*outcome.artifact, summary.duration,
                                render_judge_prompt(ctx_.judge_template(), s.questions), s.id,
                                cfg.judge_transport, ledger_.dir() / "judge" / "frames" / execution->hash);
      }
    } catch (const Error& e) {
      set = JudgmentSet::failed_set(label, m, JudgeFailure::kDecode, e.what());
    }
    if (payload) {
      auto clients = ctx_.clients(names);
      set = clients.size() == 1 ? judge_once(*clients.front(), *payload, m)
                                : judge_ensemble(clients, *payload, m);
    }
  }

  const auto& members = set.members.empty() ? std::vector<JudgmentSet>{set} : set.members;
  if (require_available && set.failure == JudgeFailure::kTransport &&
      std::all_of(members.begin(), members.end(),
                  [](const JudgmentSet& j) { return j.failure == JudgeFailure::kTransport; })) {
    return std::nullopt;
  }

  std::error_code ec;
  fs::create_directories(ledger_.dir() / "judge", ec);
  for (const auto& member : members) {
    if (member.failure == JudgeFailure::kUnusable) continue;
    const auto path = ledger_.dir() / "judge" /
                      fmt::format("{}.{}.json", response->hash, file_token(member.judge_name));
    write_file_atomic(path, to_json(member).dump(2, ' ', false, json::error_handler_t::replace) + "\n");
  }

  json member_labels = json::array();
  if (!set.members.empty()) {
    for (const auto& member : set.members) member_labels.push_back(member.resolved);
  }
  json data = {{"judgment", to_json(set)}, {"m", m}, {"member_labels", std::move(member_labels)}};
  return ledger_.append(Stage::kJudgment, validation.key, s.id, validation.slot, validation.hash,
                        std::move(data));
}

StageRunner::Scored StageRunner::reward_preview(const Scenario&, const LedgerEntry& judgment) const {
  const auto validation = upstream_of(Stage::kValidation, judgment);
  const auto execution = validation ? upstream_of(Stage::kExecution, *validation) : std::nullopt;
  const auto response = execution ? upstream_of(Stage::kResponse, *execution) : std::nullopt;
  if (!response) throw Error(ErrorCode::kLedgerCorrupt, "broken chain for " + judgment.key);
  const auto kind = kind_of(*response);
  const auto gates = stage_flags_from_json(validation->data.at("flags"));
  const auto set = judgment_from_json(judgment.data.at("judgment"));
  const bool gated = !gates.playable();

  Scored out;
  const auto& member_labels = judgment.data.at("member_labels");
  if (ctx_.config().judges.vote == VoteMode::kWholeReward && !member_labels.empty()) {
    out.reward = vote_rewards(kind, member_labels.get<std::vector<std::vector<bool>>>(), gated);
  } else {
    out.reward = compute_reward(kind, set.resolved, gated);
  }
  const bool all_true = !set.failed() && !set.resolved.empty() &&
                        std::all_of(set.resolved.begin(), set.resolved.end(), [](bool b) { return b; });
  out.flags = StageFlags::from_gates(gates.executable(), gates.rendered(), gates.playable(), all_true);
  out.judge_failure = std::string(to_string(set.failure));
  return out;
}

LedgerEntry StageRunner::reward(const Scenario& s, const LedgerEntry& judgment, json reply) {
  const auto scored = reward_preview(s, judgment);
  json data = {{"reward", to_json(scored.reward)}, {"flags", to_json(scored.flags)}};
  if (!reply.is_null()) data["reply"] = std::move(reply);
  return ledger_.append(Stage::kReward, judgment.key, s.id, judgment.slot, judgment.hash, std::move(data));
}

// ---------------------------------------------------------------------------

namespace {

template <class T>
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t capacity) : capacity_(std::max<std::size_t>(1, capacity)) {}

  bool push(T item) {
    std::unique_lock lock(mu_);
    not_full_.wait(lock, [&] { return closed_ || items_.size() < capacity_; });
    if (closed_) return false;
    items_.push_back(std::move(item));
    not_empty_.notify_one();
    return true;
  }

  std::optional<T> pop() {
    std::unique_lock lock(mu_);
    not_empty_.wait(lock, [&] { return closed_ || !items_.empty(); });
    if (items_.empty()) return std::nullopt;
    T item = std::move(items_.front());
    items_.pop_front();
    not_full_.notify_one();
    return item;
  }

  // Already queued items are still delivered; new pushes fail.
  void close() {
    std::lock_guard lock(mu_);
    closed_ = true;
    not_empty_.notify_all();
    not_full_.notify_all();
  }

  // Drops queued items too (abort path).
  void cancel() {
    std::lock_guard lock(mu_);
    closed_ = true;
    items_.clear();
    not_empty_.notify_all();
    not_full_.notify_all();
  }

 private:
  std::size_t capacity_;
  std::mutex mu_;
  std::condition_variable not_empty_, not_full_;
  std::deque<T> items_;
  bool closed_ = false;
};

struct WorkItem {
  const Scenario* scenario = nullptr;
  int slot = 0;
  std::string key;
  Stage next = Stage::kResponse;
  std::optional<LedgerEntry> last;
};

enum Pool { kGenerate, kExecute, kValidate, kJudge, kPoolCount };

Pool pool_for(Stage next) {
  switch (next) {
    case Stage::kResponse: return kGenerate;
    case Stage::kExecution: return kExecute;
    case Stage::kValidation: return kValidate;
    case Stage::kJudgment:
    case Stage::kReward: return kJudge;
  }
  return kJudge;
}

json build_manifest(const RunContext& ctx) {
  const auto& cfg = ctx.config();
  json domains = json::object();
  for (const auto& id : ctx.scenario_ids()) {
    const auto* s = ctx.corpus().find(id);
    domains[id] = domain_label(s->tag.domain);
  }
  const auto& gen = cfg.endpoints.at(cfg.generator);
  std::vector<std::string> judges = cfg.judges.judges;
  if (!cfg.judges.evaluation_judge.empty()) judges = {cfg.judges.evaluation_judge};
  return {{"run_id", cfg.run_id},
          {"config_digest", config_digest(cfg)},
          {"config", to_json(cfg)},
          {"scenario_ids", ctx.scenario_ids()},
          {"domains", std::move(domains)},
          {"k", cfg.sampling.k},
          {"model", gen.model.empty() ? gen.name : gen.model},
          {"scoring_judges", judges},
          {"reward_kind", to_string(cfg.reward_kind)},
          {"kernel", to_json(cfg.kernel)}};
}

void run_items(RunContext& ctx, RunLedger& ledger) {
  const auto& cfg = ctx.config();
  const auto& env = ctx.env();
  StageRunner runner(ctx, ledger, JudgeRole::kEvaluation);

  const std::array<int, kPoolCount> widths = {cfg.workers.generate, cfg.workers.execute,
                                               cfg.workers.validate, cfg.workers.judge};
  std::array<std::unique_ptr<BoundedQueue<WorkItem>>, kPoolCount> queues;
  for (int p = 0; p < kPoolCount; ++p) {
    queues[p] = std::make_unique<BoundedQueue<WorkItem>>(static_cast<std::size_t>(widths[p]));
  }

  std::mutex error_mu;
  std::exception_ptr first_error;
  std::atomic<bool> failed{false};
  auto abort_all = [&](std::exception_ptr e) {
    {
      std::lock_guard lock(error_mu);
      if (!first_error) first_error = e;
    }
    failed = true;
    for (auto& q : queues) q->cancel();
  };

  auto activity = [&](Stage st, int delta) {
    if (env.on_stage_activity) env.on_stage_activity(st, delta);
  };

  auto step = [&](WorkItem& item) {
    const auto& s = *item.scenario;
    switch (item.next) {
      case Stage::kResponse:
        activity(Stage::kResponse, +1);
        item.last = runner.generate(s, item.slot, item.key);
        activity(Stage::kResponse, -1);
        item.next = Stage::kExecution;
        break;
      case Stage::kExecution:
        activity(Stage::kExecution, +1);
        item.last = runner.execute(s, *item.last);
        activity(Stage::kExecution, -1);
        item.next = Stage::kValidation;
        break;
      case Stage::kValidation:
        activity(Stage::kValidation, +1);
        item.last = runner.validate(s, *item.last);
        activity(Stage::kValidation, -1);
        item.next = Stage::kJudgment;
        break;
      case Stage::kJudgment:
        activity(Stage::kJudgment, +1);
        item.last = runner.judge(s, *item.last);
        activity(Stage::kJudgment, -1);
        item.next = Stage::kReward;
        [[fallthrough]];
      case Stage::kReward:
        activity(Stage::kReward, +1);
        item.last = runner.reward(s, *item.last);
        activity(Stage::kReward, -1);
        break;
    }
  };

  std::array<std::vector<std::thread>, kPoolCount> pools;
  for (int p = 0; p < kPoolCount; ++p) {
    for (int w = 0; w < widths[p]; ++w) {
      pools[p].emplace_back([&, p] {
        while (auto item = queues[p]->pop()) {
          if (failed) break;
          try {
            step(*item);
          } catch (...) {
            abort_all(std::current_exception());
            break;
          }
          if (p + 1 < kPoolCount) {
            if (!queues[p + 1]->push(std::move(*item))) break;
          }
        }
      });
    }
  }

  // Feed every unfinished item into the pool for its next stage.
  try {
    for (const auto& id : ctx.scenario_ids()) {
      const auto* s = ctx.corpus().find(id);
      for (int slot = 0; slot < cfg.sampling.k && !failed; ++slot) {
        WorkItem item{s, slot, item_key(id, slot), Stage::kResponse, std::nullopt};
        if (ledger.find(Stage::kReward, item.key)) continue;
        for (Stage st : {Stage::kJudgment, Stage::kValidation, Stage::kExecution, Stage::kResponse}) {
          if (auto e = ledger.find(st, item.key)) {
            item.last = std::move(e);
            item.next = static_cast<Stage>(static_cast<int>(st) + 1);
            break;
          }
        }
        if (!queues[pool_for(item.next)]->push(std::move(item))) break;
      }
    }
  } catch (...) {
    abort_all(std::current_exception());
  }

  for (int p = 0; p < kPoolCount; ++p) {
    queues[p]->close();
    for (auto& t : pools[p]) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace

BenchmarkReport report_from_ledger(const RunLedger& ledger) {
  const auto& m = ledger.manifest();
  BenchmarkReport report;
  try {
    report.k = m.at("k").get<int>();
    const auto ids = m.at("scenario_ids").get<std::vector<std::string>>();
    std::map<std::string, Domain, std::less<>> domains;
    for (const auto& [id, label] : m.at("domains").items()) {
      auto d = parse_domain(label.get<std::string>());
      if (!d) throw Error(ErrorCode::kLedgerCorrupt, "manifest: unknown domain " + label.dump());
      domains.emplace(id, *d);
    }
    const std::set<std::string, std::less<>> wanted(ids.begin(), ids.end());
    std::vector<ResponseRecord> records;
    double reward_sum = 0.0;
    for (const auto& e : ledger.entries(Stage::kReward)) {
      if (e.slot < 0 || e.slot >= report.k || !wanted.contains(e.scenario_id)) continue;
      ResponseRecord r;
      r.scenario_id = e.scenario_id;
      r.slot = e.slot;
      r.flags = stage_flags_from_json(e.data.at("flags"));
      r.reward = reward_from_json(e.data.at("reward"));
      records.push_back(std::move(r));
    }
    // Canonical order so that nothing depends on completion order.
    std::sort(records.begin(), records.end(), [](const ResponseRecord& a, const ResponseRecord& b) {
      return std::tie(a.scenario_id, a.slot) < std::tie(b.scenario_id, b.slot);
    });
    for (const auto& r : records) reward_sum += r.reward->value;
    if (ids.empty()) throw Error(ErrorCode::kEmptyRun, "run has no scenarios");
    ModelRow row;
    row.model = m.at("model").get<std::string>();
    row.avg = stage_rates_avg(records, ids, report.k);
    row.pass = stage_rates_pass(records, ids, report.k);
    row.domains = per_domain_breakdown(records, ids, domains, report.k);
    report.rows.push_back(std::move(row));
    const double slots = static_cast<double>(ids.size()) * report.k;
    report.metadata = {{"run_id", m.at("run_id")},
                       {"config_digest", m.at("config_digest")},
                       {"scoring_judges", m.at("scoring_judges")},
                       {"reward_kind", m.at("reward_kind")},
                       {"kernel", m.at("kernel")},
                       {"scenarios", ids.size()},
                       {"responses_expected", static_cast<std::uint64_t>(slots)},
                       {"responses_scored", records.size()},
                       {"mean_reward", reward_sum / slots}};
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kLedgerCorrupt, std::string("ledger: ") + e.what());
  }
  report.check_ladder();
  return report;
}

std::string render_metrics(const BenchmarkReport& report) { return to_json(report).dump(2) + "\n"; }

BenchmarkReport run_evaluation(const RunConfig& config, const RuntimeEnv& env) {
  RunContext ctx(config, env);
  if (ctx.scenario_ids().empty()) throw Error(ErrorCode::kEmptyRun, "the selected split has no scenarios");
  auto ledger = RunLedger::create_or_open(config.ledger_root, config.run_id, build_manifest(ctx));
  if (env.on_append) ledger->set_append_hook(env.on_append);
  run_items(ctx, *ledger);
  auto report = report_from_ledger(*ledger);
  write_file_atomic(ledger->dir() / "metrics.json", render_metrics(report));
  return report;
}

BenchmarkReport resume_run(const fs::path& ledger_root, const std::string& run_id, const RuntimeEnv& env) {
  auto ledger = RunLedger::open(ledger_root, run_id);
  auto config = run_config_from_json(ledger->manifest().at("config"));
  config.ledger_root = ledger_root;
  ledger.reset();
  return run_evaluation(config, env);
}

BenchmarkReport load_run_report(const fs::path& ledger_root, const std::string& run_id) {
  const auto path = ledger_root / run_id / "metrics.json";
  if (!fs::exists(path)) throw Error(ErrorCode::kIo, "no metrics at " + path.string());
  try {
    return report_from_json(json::parse(read_text(path)));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kLedgerCorrupt, fmt::format("{}: {}", path.string(), e.what()));
  }
}

}  // namespace simjudge
