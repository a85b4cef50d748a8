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

#include "simjudge/judgecore.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <future>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "simjudge/promptkit.hpp"

namespace simjudge {

using nlohmann::json;
namespace fs = std::filesystem;

TransportConfig transport_from_json(const json& j) {
  TransportConfig t;
  try {
    const auto mode = j.value("mode", std::string("frames"));
    if (mode == "frames") {
      t.mode = MediaTransport::kFrames;
    } else if (mode == "native") {
      t.mode = MediaTransport::kNative;
    } else {
      throw Error(ErrorCode::kConfig, "judge transport mode must be 'frames' or 'native'");
    }
    t.frames = j.value("frames", t.frames);
    if (j.contains("decoder_command")) {
      t.decoder_command = j["decoder_command"].get<std::vector<std::string>>();
    }
    t.frame_mime = j.value("frame_mime", t.frame_mime);
    t.frame_extension = j.value("frame_extension", t.frame_extension);
    if (j.contains("decoder_limits")) t.decoder_limits = limits_from_json(j["decoder_limits"]);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfig, std::string("judge transport: ") + e.what());
  }
  if (t.mode == MediaTransport::kFrames && (t.frames < 1 || t.decoder_command.empty())) {
    throw Error(ErrorCode::kConfig, "frame transport needs frames >= 1 and a decoder_command");
  }
  return t;
}

json to_json(const TransportConfig& t) {
  json j = {{"mode", t.mode == MediaTransport::kFrames ? "frames" : "native"},
            {"frames", t.frames},
            {"frame_mime", t.frame_mime},
            {"frame_extension", t.frame_extension}};
  if (!t.decoder_command.empty()) j["decoder_command"] = t.decoder_command;
  return j;
}

std::vector<double> frame_timestamps(double duration, int n) {
  if (n < 1) throw Error(ErrorCode::kInvalidArgument, "frame count must be >= 1");
  if (n == 1) return {duration / 2.0};
  std::vector<double> ts(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) ts[static_cast<std::size_t>(i)] = duration * i / (n - 1);
  return ts;
}

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return {};
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

JudgePayload build_payload(const ArtifactRef& artifact, double duration,
                           std::string question_block, std::string scenario_id,
                           const TransportConfig& transport, const fs::path& work_dir) {
  JudgePayload payload;
  payload.question_block = std::move(question_block);
  payload.scenario_id = std::move(scenario_id);
  std::error_code ec;
  if (!fs::is_regular_file(artifact.path, ec) || fs::file_size(artifact.path, ec) == 0) {
    throw Error(ErrorCode::kDecodeFailure, "artifact unreadable: " + artifact.path.string());
  }
  if (transport.mode == MediaTransport::kNative) {
    auto bytes = slurp(artifact.path);
    if (bytes.empty()) throw Error(ErrorCode::kDecodeFailure, "artifact unreadable");
    payload.media.push_back({"video/mp4", std::move(bytes)});
    return payload;
  }
  if (!(duration > 0) && transport.frames > 1) {
    throw Error(ErrorCode::kDecodeFailure, "cannot sample frames from a zero-length video");
  }
  payload.frame_timestamps = frame_timestamps(duration, transport.frames);
  fs::create_directories(work_dir, ec);
  for (std::size_t i = 0; i < payload.frame_timestamps.size(); ++i) {
    const auto out = work_dir / fmt::format("frame_{:03d}.{}", i, transport.frame_extension);
    fs::remove(out, ec);
    ProcessSpec spec;
    spec.argv = expand_command(transport.decoder_command,
                               {{"input", artifact.path.string()},
                                {"time", fmt::format("{:.3f}", payload.frame_timestamps[i])},
                                {"output", out.string()}});
    spec.cwd = work_dir;
    spec.limits = transport.decoder_limits;
    const auto r = run_process(spec);
    auto bytes = slurp(out);
    if (r.end != ProcessResult::End::kExited || r.exit_code != 0 || bytes.empty()) {
      throw Error(ErrorCode::kDecodeFailure,
                  fmt::format("frame decoder failed at t={:.3f}s: {}", payload.frame_timestamps[i],
                              r.launch_error.empty() ? r.err.substr(0, 200) : r.launch_error));
    }
    payload.media.push_back({transport.frame_mime, std::move(bytes)});
  }
  return payload;
}

namespace {

[[noreturn]] void parse_fail(const std::string& why) {
  throw Error(ErrorCode::kParseFailure, "verdicts: " + why);
}

std::string lower_trim(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (!std::isspace(static_cast<unsigned char>(c))) {
      out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  return out;
}

// Balanced [...] spans that parse as JSON arrays whose elements are objects.
std::vector<json> find_object_lists(std::string_view text) {
  std::vector<json> lists;
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] != '[') {
      ++i;
      continue;
    }
    int depth = 0;
    bool in_str = false, esc = false;
    std::size_t j = i;
    for (; j < text.size(); ++j) {
      const char c = text[j];
      if (in_str) {
        if (esc) {
          esc = false;
        } else if (c == '\\') {
          esc = true;
        } else if (c == '"') {
          in_str = false;
        }
        continue;
      }
      if (c == '"') {
        in_str = true;
      } else if (c == '[') {
        ++depth;
      } else if (c == ']' && --depth == 0) {
        break;
      }
    }
    if (j >= text.size()) {
      ++i;
      continue;
    }
    auto doc = json::parse(text.substr(i, j - i + 1), nullptr, false);
    if (!doc.is_discarded() && doc.is_array() && !doc.empty() &&
        std::all_of(doc.begin(), doc.end(), [](const json& e) { return e.is_object(); })) {
      lists.push_back(std::move(doc));
      i = j + 1;
    } else {
      ++i;
    }
  }
  return lists;
}

int verdict_index(const json& v) {
  if (v.is_number_integer()) return v.get<int>();
  if (v.is_string()) {
    const auto s = lower_trim(v.get<std::string>());
    if (!s.empty() && s.size() < 9 &&
        std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); })) {
      return std::stoi(s);
    }
  }
  parse_fail("index is not an integer");
}

bool verdict_result(const json& v) {
  if (v.is_boolean()) return v.get<bool>();
  if (v.is_string()) {
    const auto s = lower_trim(v.get<std::string>());
    if (s == "true" || s == "yes") return true;
    if (s == "false" || s == "no") return false;
  }
  parse_fail("unparseable result " + v.dump());
}

}  // namespace

std::vector<Verdict> parse_verdicts(std::string_view raw, std::size_t expected) {
  const auto blocks = find_fenced_blocks(raw);
  const std::string_view scope = blocks.size() == 1 ? std::string_view(blocks[0].body) : raw;
  auto lists = find_object_lists(scope);
  if (lists.empty()) parse_fail("no JSON list found");
  if (lists.size() > 1) parse_fail(fmt::format("{} JSON lists found, expected one", lists.size()));

  std::vector<std::optional<Verdict>> slots(expected);
  for (const auto& item : lists.front()) {
    auto idx = item.find("index");
    if (idx == item.end()) parse_fail("item without index");
    auto res = item.find("result");
    if (res == item.end()) parse_fail("item without result");
    Verdict v;
    v.index = verdict_index(*idx);
    if (v.index < 1 || static_cast<std::size_t>(v.index) > expected) {
      parse_fail(fmt::format("index {} outside [1, {}]", v.index, expected));
    }
    v.result = verdict_result(*res);
    if (auto q = item.find("question"); q != item.end() && q->is_string()) v.question = q->get<std::string>();
    if (auto a = item.find("analysis"); a != item.end() && a->is_string()) v.analysis = a->get<std::string>();
    auto& slot = slots[static_cast<std::size_t>(v.index - 1)];
    if (slot) parse_fail(fmt::format("duplicate index {}", v.index));
    slot = std::move(v);
  }
  std::vector<Verdict> out;
  out.reserve(expected);
  for (std::size_t i = 0; i < expected; ++i) {
    if (!slots[i]) parse_fail(fmt::format("missing index {}", i + 1));
    out.push_back(std::move(*slots[i]));
  }
  return out;
}

std::string_view to_string(JudgeFailure f) noexcept {
  switch (f) {
    case JudgeFailure::kNone: return "none";
    case JudgeFailure::kParse: return "parse";
    case JudgeFailure::kTransport: return "transport";
    case JudgeFailure::kUnusable: return "unusable";
    case JudgeFailure::kDecode: return "decode";
  }
  return "none";
}

namespace {

JudgeFailure parse_failure(std::string_view s) {
  for (auto f : {JudgeFailure::kNone, JudgeFailure::kParse, JudgeFailure::kTransport,
                 JudgeFailure::kUnusable, JudgeFailure::kDecode}) {
    if (to_string(f) == s) return f;
  }
  throw Error(ErrorCode::kLedgerCorrupt, "unknown judge failure kind");
}

}  // namespace

JudgmentSet JudgmentSet::failed_set(std::string judge, std::size_t m, JudgeFailure why,
                                    std::string detail) {
  JudgmentSet s;
  s.judge_name = std::move(judge);
  s.resolved.assign(m, false);
  s.failure = why;
  s.failure_detail = std::move(detail);
  return s;
}

json to_json(const JudgmentSet& s) {
  json verdicts = json::array();
  for (const auto& v : s.verdicts) {
    verdicts.push_back({{"index", v.index}, {"question", v.question},
                        {"analysis", v.analysis}, {"result", v.result}});
  }
  json members = json::array();
  for (const auto& m : s.members) members.push_back(to_json(m));
  json resolved = json::array();
  for (bool b : s.resolved) resolved.push_back(b);
  return {{"judge", s.judge_name},
          {"verdicts", std::move(verdicts)},
          {"resolved", std::move(resolved)},
          {"failure", to_string(s.failure)},
          {"failure_detail", s.failure_detail},
          {"members", std::move(members)}};
}

JudgmentSet judgment_from_json(const json& j) {
  JudgmentSet s;
  s.judge_name = j.at("judge").get<std::string>();
  for (const auto& v : j.at("verdicts")) {
    s.verdicts.push_back({v.at("index").get<int>(), v.value("question", std::string{}),
                          v.value("analysis", std::string{}), v.at("result").get<bool>()});
  }
  for (const auto& b : j.at("resolved")) s.resolved.push_back(b.get<bool>());
  s.failure = parse_failure(j.at("failure").get<std::string>());
  s.failure_detail = j.value("failure_detail", std::string{});
  for (const auto& m : j.value("members", json::array())) s.members.push_back(judgment_from_json(m));
  if (s.failed() && std::any_of(s.resolved.begin(), s.resolved.end(), [](bool b) { return b; })) {
    throw Error(ErrorCode::kLedgerCorrupt, "failed judgment with positive labels");
  }
  return s;
}

JudgmentSet judge_once(ChatClient& judge, const JudgePayload& payload, std::size_t m,
                       const SamplingProfile& profile) {
  const auto& name = judge.endpoint().name;
  ChatMessage msg{"user", payload.question_block, payload.media};
  std::string raw;
  try {
    raw = judge.complete(std::span<const ChatMessage>(&msg, 1), profile).text;
  } catch (const std::exception& e) {
    return JudgmentSet::failed_set(name, m, JudgeFailure::kTransport, e.what());
  }
  try {
    JudgmentSet s;
    s.judge_name = name;
    s.verdicts = parse_verdicts(raw, m);
    for (const auto& v : s.verdicts) s.resolved.push_back(v.result);
    s.transcript = std::move(raw);
    return s;
  } catch (const Error& e) {
    auto s = JudgmentSet::failed_set(name, m, JudgeFailure::kParse, e.what());
    s.transcript = std::move(raw);
    return s;
  }
}

void EnsembleConfig::validate() const {
  if (judges.empty()) throw Error(ErrorCode::kConfig, "ensemble needs at least one training judge");
  std::set<std::string> seen;
  for (const auto& j : judges) {
    if (!seen.insert(j).second) throw Error(ErrorCode::kConfig, "duplicate training judge '" + j + "'");
  }
  if (!evaluation_judge.empty() && seen.contains(evaluation_judge)) {
    throw Error(ErrorCode::kConfig,
                "evaluation judge '" + evaluation_judge + "' must not be a training judge");
  }
}

EnsembleConfig ensemble_from_json(const json& j) {
  EnsembleConfig e;
  try {
    e.judges = j.at("training").get<std::vector<std::string>>();
    e.evaluation_judge = j.value("evaluation", std::string{});
    const auto vote = j.value("vote", std::string("per_question"));
    if (vote == "per_question") {
      e.vote = VoteMode::kPerQuestion;
    } else if (vote == "whole_reward") {
      e.vote = VoteMode::kWholeReward;
    } else {
      throw Error(ErrorCode::kConfig, "judges.vote must be 'per_question' or 'whole_reward'");
    }
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::kConfig, std::string("judges: ") + ex.what());
  }
  e.validate();
  return e;
}

json to_json(const EnsembleConfig& e) {
  return {{"training", e.judges},
          {"evaluation", e.evaluation_judge},
          {"vote", e.vote == VoteMode::kPerQuestion ? "per_question" : "whole_reward"}};
}

JudgmentSet combine_majority(std::vector<JudgmentSet> members, std::size_t m) {
  std::stable_sort(members.begin(), members.end(),
                   [](const JudgmentSet& a, const JudgmentSet& b) { return a.judge_name < b.judge_name; });
  JudgmentSet out;
  std::string names;
  for (const auto& s : members) names += (names.empty() ? "" : ",") + s.judge_name;
  out.judge_name = "majority(" + names + ")";
  const auto n = members.size();
  out.resolved.assign(m, false);
  for (std::size_t i = 0; i < m; ++i) {
    std::size_t yes = 0;
    for (const auto& s : members) {
      if (!s.failed() && i < s.resolved.size() && s.resolved[i]) ++yes;
    }
    out.resolved[i] = 2 * yes > n;
    out.verdicts.push_back({static_cast<int>(i + 1), {},
                            fmt::format("{}/{} judges true", yes, n), out.resolved[i]});
  }
  if (n > 0 && std::all_of(members.begin(), members.end(), [](const JudgmentSet& s) { return s.failed(); })) {
    out.failure = members.front().failure;
    out.failure_detail = "every ensemble member failed";
    out.verdicts.clear();
  }
  out.members = std::move(members);
  return out;
}

JudgmentSet judge_ensemble(std::span<ChatClient* const> judges, const JudgePayload& payload,
                           std::size_t m) {
  if (judges.empty()) throw Error(ErrorCode::kConfig, "ensemble needs at least one judge");
  std::vector<std::future<JudgmentSet>> pending;
  for (ChatClient* j : judges) {
    pending.push_back(std::async(std::launch::async, [j, &payload, m] { return judge_once(*j, payload, m); }));
  }
  std::vector<JudgmentSet> members;
  for (auto& f : pending) members.push_back(f.get());
  return combine_majority(std::move(members), m);
}

}  // namespace simjudge
