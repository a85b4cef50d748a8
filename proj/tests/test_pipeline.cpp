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

#include <doctest.h>

#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <set>
#include <thread>

#include "simjudge/pipeline.hpp"
#include "test_support.hpp"

using namespace simjudge;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json endpoint_json(const std::string& name, bool video = true) {
  return {{"base_url", "http://" + name + ".invalid/v1"},
          {"model", name == "gen" ? "stub-generator" : name},
          {"max_retries", 0},
          {"rate_limit_rpm", 100000},
          {"supports_video", video}};
}

json base_config(const fs::path& root, int width = 2) {
  return {
      {"run_id", "det"},
      {"ledger_root", root.string()},
      {"corpus", {{"path", testing::data_path("corpus_fixture.jsonl").string()}}},
      {"endpoints",
       {{"gen", endpoint_json("gen")}, {"j1", endpoint_json("j1")}, {"j2", endpoint_json("j2")}, {"j3", endpoint_json("j3")}}},
      {"generator", {{"endpoint", "gen"}, {"sampling", {{"k", 2}, {"temperature", 0.0}, {"seed", 7}}}}},
      {"judges", {{"training", {"j1", "j2", "j3"}}, {"transport", {{"mode", "native"}}}}},
      {"sandbox", {{"limits", {{"wall_timeout_s", 30}, {"cpu_timeout_s", 30}}}}},
      {"workers", {{"generate", width}, {"execute", width}, {"validate", width}, {"judge", width}}},
  };
}

// Stub transports keyed by endpoint name; call counts are kept per endpoint.
struct StubWorld {
  std::map<std::string, std::shared_ptr<testing::FnTransport>> transports;
  std::function<simjudge::HttpResponse(const std::string&, const HttpRequest&)> override_fn;

  RuntimeEnv env() {
    RuntimeEnv e;
    e.clock = std::make_shared<VirtualClock>();
    e.transport_for = [this](const EndpointConfig& ep) {
      const auto name = ep.name;
      auto t = std::make_shared<testing::FnTransport>([this, name](const HttpRequest& r) -> HttpResponse {
        if (override_fn) {
          auto resp = override_fn(name, r);
          if (resp.status != 0 || !resp.error.empty()) return resp;
        }
        if (name == "gen") return testing::ok(testing::stub_generation(r.body));
        if (name == "yes") return testing::judge_reply(r, [](int, const std::string&) { return true; });
        return testing::ok(testing::stub_judgment(r.body, std::stoi(name.substr(1))));
      });
      transports[name] = t;
      return t;
    };
    return e;
  }
};

std::string metrics_bytes(const fs::path& root) { return testing::read_file(root / "det" / "metrics.json"); }

std::size_t line_count(const fs::path& p) {
  const auto s = testing::read_file(p);
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

BenchmarkReport run(const json& cfg, RuntimeEnv env) { return run_evaluation(run_config_from_json(cfg), env); }

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::kOk;
}

// Control run shared by the determinism cases.
const std::string& control_metrics() {
  static testing::TempDir dir;
  static std::string bytes = [] {
    StubWorld world;
    run(base_config(dir.path(), 1), world.env());
    return metrics_bytes(dir.path());
  }();
  return bytes;
}

}  // namespace

TEST_CASE("ledger flags agree with an independent model of the stubs") {
  testing::TempDir dir;
  StubWorld world;
  const auto report = run(base_config(dir.path()), world.env());
  const auto corpus = load_corpus(testing::data_path("corpus_fixture.jsonl"), Strictness::kStrict);
  auto ledger = RunLedger::open(dir.path(), "det");
  const auto rewards = ledger->entries(Stage::kReward);
  REQUIRE(rewards.size() == 20);

  std::set<std::string> variants;
  for (const auto& r : rewards) {
    const auto* s = corpus.find(r.scenario_id);
    REQUIRE(s != nullptr);
    const auto response = ledger->find(Stage::kResponse, r.key);
    REQUIRE(response.has_value());
    const auto text = response->data.at("text").get<std::string>();
    bool e = false, rendered = false, p = false, a = false;
    if (text == testing::fenced_python(testing::canned_program_with_frames(1))) {
      variants.insert("one_frame");
      e = rendered = true;
    } else if (text.find("canned") != std::string::npos || text.find("FRAMES = 60") != std::string::npos) {
      variants.insert("passing");
      e = rendered = p = true;
      a = true;
      for (const auto& q : s->questions) {
        int yes = 0;
        for (int j = 1; j <= 3; ++j) yes += testing::fnv1a(q.text + "#" + std::to_string(j)) % 4 != 0;
        a = a && yes >= 2;
      }
    } else if (text.find("```") == std::string::npos) {
      variants.insert("prose");
    } else {
      variants.insert("crash");
    }
    const auto flags = stage_flags_from_json(r.data.at("flags"));
    CHECK(flags == StageFlags::from_gates(e, rendered, p, a));
    CHECK(r.data.at("reward").at("value").get<double>() == (a ? 1.0 : 0.0));
  }
  CHECK(variants.size() == 4);
  CHECK(report.metadata.at("responses_scored") == 20);
  CHECK(report.metadata.at("scoring_judges") == json{"j1", "j2", "j3"});
  CHECK(report.rows.at(0).model == "stub-generator");
  CHECK(report.rows[0].avg.executable > report.rows[0].avg.accurate);
  CHECK(testing::read_file(dir / "det" / "metrics.json") == render_metrics(report));
  CHECK(to_json(load_run_report(dir.path(), "det")) == to_json(report));
}

TEST_CASE("metrics are byte-identical at worker widths 1 and 8") {
  const auto t0 = std::chrono::steady_clock::now();
  const auto& control = control_metrics();
  testing::TempDir dir;
  StubWorld world;
  run(base_config(dir.path(), 8), world.env());
  CHECK(metrics_bytes(dir.path()) == control);
  CHECK(std::chrono::steady_clock::now() - t0 < std::chrono::seconds(60));
}

TEST_CASE("aborted run resumes to the same metrics") {
  testing::TempDir dir;
  StubWorld world;
  auto env = world.env();
  std::atomic<int> appends{0};
  env.on_append = [&](const LedgerEntry&) {
    if (++appends == 43) throw Error(ErrorCode::kAborted, "test abort");
  };
  CHECK(code_of([&] { run(base_config(dir.path(), 4), env); }) == ErrorCode::kAborted);
  CHECK_FALSE(fs::exists(dir / "det" / "metrics.json"));

  StubWorld again;
  resume_run(dir.path(), "det", again.env());
  CHECK(metrics_bytes(dir.path()) == control_metrics());
  // Items finished before the abort are not regenerated.
  CHECK(again.transports.at("gen")->calls < 20);
}

TEST_CASE("killed run resumes to the same metrics") {
  testing::TempDir dir;
  const auto cfg = base_config(dir.path(), 1);
  const pid_t child = ::fork();
  REQUIRE(child >= 0);
  if (child == 0) {
    StubWorld world;
    auto env = world.env();
    env.on_append = [](const LedgerEntry&) { std::this_thread::sleep_for(std::chrono::milliseconds(20)); };
    try {
      run(cfg, env);
    } catch (...) {
      ::_exit(3);
    }
    ::_exit(0);
  }
  const auto executions = dir / "det" / "executions.jsonl";
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(60);
  while (line_count(executions) < 10 && std::chrono::steady_clock::now() < deadline) {
    std::this_thread::sleep_for(std::chrono::milliseconds(2));
  }
  ::kill(child, SIGKILL);
  int status = 0;
  ::waitpid(child, &status, 0);
  CHECK(WIFSIGNALED(status));
  CHECK(line_count(executions) < 20);
  CHECK_FALSE(fs::exists(dir / "det" / "metrics.json"));

  StubWorld world;
  resume_run(dir.path(), "det", world.env());
  CHECK(metrics_bytes(dir.path()) == control_metrics());
}

TEST_CASE("torn trailing line is dropped on resume") {
  testing::TempDir dir;
  StubWorld world;
  auto env = world.env();
  std::atomic<int> appends{0};
  env.on_append = [&](const LedgerEntry&) {
    if (++appends == 25) throw Error(ErrorCode::kAborted, "stop");
  };
  CHECK(code_of([&] { run(base_config(dir.path(), 1), env); }) == ErrorCode::kAborted);
  {
    std::ofstream out(dir / "det" / "judgments.jsonl", std::ios::app | std::ios::binary);
    out << "{\"stage\":\"judgment\",\"key\":\"half";
  }
  StubWorld again;
  resume_run(dir.path(), "det", again.env());
  CHECK(metrics_bytes(dir.path()) == control_metrics());
}

TEST_CASE("resuming a finished run appends nothing") {
  testing::TempDir dir;
  StubWorld world;
  run(base_config(dir.path()), world.env());
  const auto before = metrics_bytes(dir.path());
  StubWorld again;
  auto env = again.env();
  int appends = 0;
  env.on_append = [&](const LedgerEntry&) { ++appends; };
  resume_run(dir.path(), "det", env);
  CHECK(appends == 0);
  CHECK(again.transports.at("gen")->calls == 0);
  CHECK(metrics_bytes(dir.path()) == before);
}

TEST_CASE("tampered ledger entry is detected") {
  testing::TempDir dir;
  StubWorld world;
  run(base_config(dir.path()), world.env());
  const auto path = dir / "det" / "validations.jsonl";
  auto bytes = testing::read_file(path);
  const auto at = bytes.find("\"playable\":");
  REQUIRE(at != std::string::npos);
  bytes[at + 1] = 'q';
  testing::write_file(path, bytes);
  CHECK(code_of([&] { RunLedger::open(dir.path(), "det"); }) == ErrorCode::kLedgerCorrupt);
  StubWorld again;
  CHECK(code_of([&] { resume_run(dir.path(), "det", again.env()); }) == ErrorCode::kLedgerCorrupt);
}

TEST_CASE("a changed config cannot reuse a run id") {
  testing::TempDir dir;
  StubWorld world;
  run(base_config(dir.path()), world.env());
  auto changed = base_config(dir.path());
  changed["generator"]["sampling"]["seed"] = 8;
  StubWorld again;
  CHECK(code_of([&] { run(changed, again.env()); }) == ErrorCode::kConfig);
  // Worker widths are not part of the identity.
  CHECK_NOTHROW(run(base_config(dir.path(), 3), again.env()));
}

TEST_CASE("stage pools respect their widths") {
  testing::TempDir dir;
  StubWorld world;
  auto env = world.env();
  std::mutex mu;
  std::map<Stage, int> active, peak;
  env.on_stage_activity = [&](Stage s, int delta) {
    std::lock_guard lock(mu);
    active[s] += delta;
    peak[s] = std::max(peak[s], active[s]);
  };
  auto cfg = base_config(dir.path());
  cfg["workers"] = {{"generate", 3}, {"execute", 1}, {"validate", 1}, {"judge", 2}};
  run(cfg, env);
  CHECK(peak[Stage::kResponse] <= 3);
  CHECK(peak[Stage::kExecution] == 1);
  CHECK(peak[Stage::kValidation] == 1);
  CHECK(peak[Stage::kJudgment] <= 2);
  for (const auto& [s, n] : active) CHECK(n == 0);
}

TEST_CASE("generator failures become failed slots") {
  testing::TempDir dir;
  StubWorld world;
  world.override_fn = [](const std::string& name, const HttpRequest& r) -> HttpResponse {
    if (name == "gen" && json::parse(r.body).at("seed") == 8) return {400, "bad request", ""};
    return {};
  };
  const auto report = run(base_config(dir.path()), world.env());
  auto ledger = RunLedger::open(dir.path(), "det");
  int failed = 0;
  for (const auto& e : ledger->entries(Stage::kResponse)) {
    if (!e.data.at("ok").get<bool>()) {
      ++failed;
      CHECK(e.slot == 1);
      CHECK(e.data.at("error").at("code") == "NonRetryable");
      const auto reward = ledger->find(Stage::kReward, e.key);
      REQUIRE(reward.has_value());
      CHECK(stage_flags_from_json(reward->data.at("flags")) == StageFlags{});
    }
  }
  CHECK(failed == 10);
  CHECK(report.metadata.at("responses_scored") == 20);
}

TEST_CASE("held-out evaluation judge replaces the training ensemble") {
  testing::TempDir dir;
  StubWorld world;
  auto cfg = base_config(dir.path());
  cfg["endpoints"]["yes"] = endpoint_json("yes");
  cfg["judges"]["evaluation"] = "yes";
  const auto report = run(cfg, world.env());
  CHECK(world.transports.at("j1")->calls == 0);
  CHECK(world.transports.at("yes")->calls > 0);
  CHECK(report.metadata.at("scoring_judges") == json{"yes"});
  // The yes-judge accepts every playable video.
  CHECK(report.rows[0].avg.accurate == report.rows[0].avg.playable);
}

TEST_CASE("code-aware reward judges the program with two extra questions") {
  testing::TempDir dir;
  StubWorld world;
  auto cfg = base_config(dir.path());
  cfg["endpoints"]["yes"] = endpoint_json("yes", false);
  cfg["judges"] = {{"training", {"yes"}}, {"transport", {{"mode", "frames"}, {"decoder_command", {"false"}}}}};
  cfg["reward"] = {{"kind", "llm_binary"}};
  const auto report = run(cfg, world.env());
  const auto& judge = world.transports.at("yes");
  REQUIRE(judge->calls > 0);
  const auto prompt = testing::user_text(judge->requests.front());
  const auto qs = testing::prompt_questions(prompt);
  REQUIRE(qs.size() >= 6);
  CHECK(qs[qs.size() - 2].second == std::string(kExecutionCheck));
  CHECK(qs.back().second == std::string(kVideoCheck));
  CHECK(prompt.find("FRAMES = ") != std::string::npos);
  CHECK(report.metadata.at("reward_kind") == "llm_binary");
  CHECK(report.rows[0].avg.accurate == report.rows[0].avg.playable);
}

TEST_CASE("frame transport failures fail closed as decode errors") {
  testing::TempDir dir;
  StubWorld world;
  auto cfg = base_config(dir.path());
  for (auto name : {"j1", "j2", "j3"}) cfg["endpoints"][name]["supports_video"] = false;
  cfg["judges"]["transport"] = {{"mode", "frames"}, {"frames", 2}, {"decoder_command", {"false"}}};
  const auto report = run(cfg, world.env());
  CHECK(report.rows[0].avg.accurate == 0.0);
  CHECK(report.rows[0].avg.playable > 0.0);
  CHECK(world.transports.at("j1")->calls == 0);
  auto ledger = RunLedger::open(dir.path(), "det");
  bool saw_decode = false;
  for (const auto& e : ledger->entries(Stage::kJudgment)) {
    saw_decode = saw_decode || e.data.at("judgment").at("failure") == "decode";
  }
  CHECK(saw_decode);
}

TEST_CASE("empty split is an empty run") {
  testing::TempDir dir;
  testing::write_file(dir / "splits.json", R"({"splits": {"none": [], "all": ["mech-001"]}})");
  auto cfg = base_config(dir / "runs");
  cfg["corpus"]["split_manifest"] = (dir / "splits.json").string();
  cfg["corpus"]["split"] = "none";
  StubWorld world;
  CHECK(code_of([&] { run(cfg, world.env()); }) == ErrorCode::kEmptyRun);
  cfg["corpus"]["split"] = "missing";
  CHECK(code_of([&] { run(cfg, world.env()); }) == ErrorCode::kConfig);
  cfg["corpus"]["split"] = "all";
  const auto report = run(cfg, world.env());
  CHECK(report.metadata.at("scenarios") == 1);
}

TEST_CASE("config parsing") {
  testing::TempDir dir;
  auto cfg = base_config(dir.path());
  CHECK_NOTHROW(run_config_from_json(cfg));

  auto unknown = cfg;
  unknown["colour"] = "blue";
  CHECK(code_of([&] { run_config_from_json(unknown); }) == ErrorCode::kConfig);

  auto no_video = cfg;
  no_video["endpoints"]["j2"]["supports_video"] = false;
  CHECK(code_of([&] { run_config_from_json(no_video); }) == ErrorCode::kConfig);

  auto bad_gen = cfg;
  bad_gen["generator"]["endpoint"] = "nobody";
  CHECK(code_of([&] { run_config_from_json(bad_gen); }) == ErrorCode::kConfig);

  auto bad_id = cfg;
  bad_id["run_id"] = "../escape";
  CHECK(code_of([&] { run_config_from_json(bad_id); }) == ErrorCode::kConfig);

  auto bad_width = cfg;
  bad_width["workers"]["execute"] = 0;
  CHECK(code_of([&] { run_config_from_json(bad_width); }) == ErrorCode::kConfig);

  CHECK(config_digest(run_config_from_json(base_config(dir.path(), 1))) ==
        config_digest(run_config_from_json(base_config(dir.path(), 8))));
  auto renamed = cfg;
  renamed["run_id"] = "other";
  CHECK(config_digest(run_config_from_json(cfg)) != config_digest(run_config_from_json(renamed)));

  // Relative paths resolve against the config file.
  auto rel = cfg;
  rel["ledger_root"] = "runs";
  fs::copy_file(testing::data_path("corpus_fixture.jsonl"), dir / "corpus.jsonl");
  rel["corpus"]["path"] = "corpus.jsonl";
  testing::write_file(dir / "cfg" / "run.json", rel.dump());
  fs::rename(dir / "corpus.jsonl", dir / "cfg" / "corpus.jsonl");
  const auto loaded = load_run_config(dir / "cfg" / "run.json");
  CHECK(loaded.ledger_root == fs::absolute(dir / "cfg" / "runs"));
  CHECK(loaded.corpus_path == fs::absolute(dir / "cfg" / "corpus.jsonl"));
  CHECK(code_of([&] { load_run_config(dir / "missing.json"); }) == ErrorCode::kIo);

  // The default transport decodes frames with the bundled decoder.
  auto frames = cfg;
  frames["judges"].erase("transport");
  const auto fc = run_config_from_json(frames);
  CHECK(fc.judge_transport.mode == MediaTransport::kFrames);
  REQUIRE(fc.judge_transport.decoder_command.size() == 5);
  CHECK(fs::exists(fc.judge_transport.decoder_command[1]));
}
