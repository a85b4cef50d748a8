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

#include "simjudge/llm_gateway.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <future>
#include <thread>

#include <fmt/format.h>

#include "simjudge/hash.hpp"

namespace simjudge {

using nlohmann::json;

void EndpointConfig::validate() const {
  if (base_url.empty()) throw Error(ErrorCode::kConfig, "endpoint '" + name + "': base_url is empty");
  if (timeout.count() <= 0) throw Error(ErrorCode::kConfig, "endpoint '" + name + "': timeout must be > 0");
  if (max_retries < 0) throw Error(ErrorCode::kConfig, "endpoint '" + name + "': max_retries must be >= 0");
  if (!(rate_limit_rpm > 0)) {
    throw Error(ErrorCode::kConfig, "endpoint '" + name + "': rate_limit_rpm must be > 0");
  }
}

EndpointConfig endpoint_from_json(const std::string& name, const json& j) {
  EndpointConfig e;
  e.name = name;
  try {
    e.base_url = j.at("base_url").get<std::string>();
    e.model = j.value("model", std::string{});
    e.api_key_env = j.value("api_key_env", std::string{});
    e.timeout = Millis(static_cast<std::int64_t>(j.value("timeout_s", 120.0) * 1000));
    e.max_retries = j.value("max_retries", 3);
    e.rate_limit_rpm = j.value("rate_limit_rpm", 60.0);
    e.supports_video = j.value("supports_video", false);
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::kConfig, "endpoint '" + name + "': " + ex.what());
  }
  e.validate();
  return e;
}

json to_json(const EndpointConfig& e) {
  return {{"base_url", e.base_url},       {"model", e.model},
          {"api_key_env", e.api_key_env}, {"timeout_s", e.timeout.count() / 1000.0},
          {"max_retries", e.max_retries}, {"rate_limit_rpm", e.rate_limit_rpm},
          {"supports_video", e.supports_video}};
}

void SamplingProfile::validate() const {
  if (k < 1) throw Error(ErrorCode::kConfig, "sampling: k must be >= 1");
  if (max_tokens < 1) throw Error(ErrorCode::kConfig, "sampling: max_tokens must be >= 1");
  if (temperature && *temperature < 0) throw Error(ErrorCode::kConfig, "sampling: temperature < 0");
}

SamplingProfile sampling_from_json(const json& j) {
  SamplingProfile p;
  try {
    p.k = j.value("k", p.k);
    p.max_tokens = j.value("max_tokens", p.max_tokens);
    if (j.contains("temperature") && !j["temperature"].is_null()) p.temperature = j["temperature"].get<double>();
    if (j.contains("seed") && !j["seed"].is_null()) p.seed = j["seed"].get<std::int64_t>();
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::kConfig, std::string("sampling: ") + ex.what());
  }
  p.validate();
  return p;
}

json to_json(const SamplingProfile& p) {
  json j = {{"k", p.k}, {"max_tokens", p.max_tokens}};
  j["temperature"] = p.temperature ? json(*p.temperature) : json(nullptr);
  j["seed"] = p.seed ? json(*p.seed) : json(nullptr);
  return j;
}

namespace {

class SteadyClock final : public Clock {
 public:
  time_point now() override { return std::chrono::steady_clock::now(); }
  void sleep_for(Millis d) override {
    if (d.count() > 0) std::this_thread::sleep_for(d);
  }
};

bool retryable_status(int status) { return status == 0 || status == 429 || status >= 500; }

}  // namespace

std::shared_ptr<Clock> system_clock() {
  static auto clock = std::make_shared<SteadyClock>();
  return clock;
}

Clock::time_point VirtualClock::now() {
  std::lock_guard lock(mu_);
  return now_;
}

void VirtualClock::sleep_for(Millis d) {
  std::lock_guard lock(mu_);
  if (d.count() > 0) now_ += d;
}

RateLimiter::RateLimiter(double per_minute, std::shared_ptr<Clock> clock)
    : limit_(static_cast<std::size_t>(std::max(1.0, std::floor(per_minute)))),
      clock_(std::move(clock)) {}

void RateLimiter::acquire() {
  constexpr auto kWindow = std::chrono::seconds(60);
  for (;;) {
    Millis wait{0};
    {
      std::lock_guard lock(mu_);
      const auto now = clock_->now();
      while (!stamps_.empty() && now - stamps_.front() >= kWindow) stamps_.pop_front();
      if (stamps_.size() < limit_) {
        stamps_.push_back(now);
        return;
      }
      wait = std::chrono::ceil<Millis>(stamps_.front() + kWindow - now);
    }
    clock_->sleep_for(std::max(wait, Millis(1)));
  }
}

Millis backoff_delay(int attempt, const BackoffPolicy& policy) {
  if (attempt < 1) return Millis(0);
  const int shift = std::min(attempt - 1, 30);
  const auto raw = policy.base.count() * (std::int64_t{1} << shift);
  return Millis(std::min<std::int64_t>(raw, policy.cap.count()));
}

json build_chat_request(const EndpointConfig& endpoint, std::span<const ChatMessage> messages,
                        const SamplingProfile& profile, std::optional<std::int64_t> seed) {
  json msgs = json::array();
  for (const auto& m : messages) {
    if (m.attachments.empty()) {
      msgs.push_back({{"role", m.role}, {"content", m.content}});
      continue;
    }
    json parts = json::array();
    parts.push_back({{"type", "text"}, {"text", m.content}});
    for (const auto& a : m.attachments) {
      const auto url = "data:" + a.mime + ";base64," + base64_encode(a.data);
      if (a.mime.rfind("video/", 0) == 0) {
        parts.push_back({{"type", "video_url"}, {"video_url", {{"url", url}}}});
      } else {
        parts.push_back({{"type", "image_url"}, {"image_url", {{"url", url}}}});
      }
    }
    msgs.push_back({{"role", m.role}, {"content", std::move(parts)}});
  }
  json body = {{"model", endpoint.model},
               {"messages", std::move(msgs)},
               {"max_tokens", profile.max_tokens},
               {"n", 1}};
  if (profile.temperature) body["temperature"] = *profile.temperature;
  if (seed) body["seed"] = *seed;
  return body;
}

ChatClient::ChatClient(EndpointConfig endpoint, std::shared_ptr<Transport> transport,
                       std::shared_ptr<Clock> clock, BackoffPolicy backoff,
                       std::uint64_t jitter_seed)
    : endpoint_(std::move(endpoint)),
      transport_(std::move(transport)),
      clock_(std::move(clock)),
      backoff_(backoff),
      limiter_(endpoint_.rate_limit_rpm, clock_),
      rng_(jitter_seed) {
  endpoint_.validate();
}

Millis ChatClient::jitter(Millis base) {
  if (base.count() <= 1) return Millis(0);
  std::lock_guard lock(rng_mu_);
  std::uniform_int_distribution<std::int64_t> dist(0, base.count() / 2);
  return Millis(dist(rng_));
}

Completion ChatClient::complete(std::span<const ChatMessage> messages,
                                const SamplingProfile& profile) {
  return complete(messages, profile, profile.seed);
}

Completion ChatClient::complete(std::span<const ChatMessage> messages,
                                const SamplingProfile& profile,
                                std::optional<std::int64_t> seed) {
  auto result = call(messages, profile, seed);
  if (auto* err = std::get_if<SlotError>(&result)) throw Error(err->code, err->message);
  return std::get<Completion>(std::move(result));
}

SlotResult ChatClient::call(std::span<const ChatMessage> messages, const SamplingProfile& profile,
                            std::optional<std::int64_t> seed) {
  std::vector<Attempt> attempts;
  auto fail = [&](ErrorCode code, std::string msg) -> SlotError {
    return SlotError{code,
                     fmt::format("endpoint '{}': {} ({} attempt{})", endpoint_.name, msg,
                                 attempts.size(), attempts.size() == 1 ? "" : "s"),
                     attempts};
  };

  HttpRequest req;
  req.url = endpoint_.base_url;
  while (!req.url.empty() && req.url.back() == '/') req.url.pop_back();
  req.url += "/chat/completions";
  req.timeout = endpoint_.timeout;
  req.headers.emplace_back("Content-Type", "application/json");
  if (!endpoint_.api_key_env.empty()) {
    const char* key = std::getenv(endpoint_.api_key_env.c_str());
    if (key == nullptr || *key == '\0') {
      return fail(ErrorCode::kAuthFailure,
                  "environment variable " + endpoint_.api_key_env + " is not set");
    }
    req.headers.emplace_back("Authorization", std::string("Bearer ") + key);
  }
  req.body = build_chat_request(endpoint_, messages, profile, seed).dump();

  std::string last_error;
  for (int n = 1; n <= endpoint_.max_retries + 1; ++n) {
    Attempt attempt;
    attempt.number = n;
    if (n > 1) {
      const auto base = backoff_delay(n - 1, backoff_);
      attempt.delay_before = base + jitter(base);
      clock_->sleep_for(attempt.delay_before);
    }
    limiter_.acquire();
    const auto resp = transport_->post(req);
    attempt.http_status = resp.status;
    attempt.error = resp.error;

    if (resp.status == 200) {
      try {
        const auto doc = json::parse(resp.body);
        const auto& choice = doc.at("choices").at(0);
        Completion c;
        const auto& content = choice.at("message").at("content");
        c.text = content.is_string() ? content.get<std::string>() : std::string{};
        c.finish_reason = choice.value("finish_reason", std::string{});
        if (doc.contains("usage") && doc["usage"].is_object()) {
          const auto& u = doc["usage"];
          c.usage.prompt_tokens = u.value("prompt_tokens", std::int64_t{0});
          c.usage.completion_tokens = u.value("completion_tokens", std::int64_t{0});
          c.usage.total_tokens = u.value("total_tokens", std::int64_t{0});
        }
        if (doc.contains("model")) c.server_model = doc["model"];
        attempts.push_back(attempt);
        if (sink_) sink_(endpoint_.name, attempt);
        c.attempts = std::move(attempts);
        return c;
      } catch (const json::exception& ex) {
        attempt.error = std::string("malformed completion body: ") + ex.what();
      }
    }
    attempts.push_back(attempt);
    if (sink_) sink_(endpoint_.name, attempt);

    if (resp.status == 401 || resp.status == 403) {
      return fail(ErrorCode::kAuthFailure, fmt::format("HTTP {}", resp.status));
    }
    if (resp.status != 200 && !retryable_status(resp.status)) {
      return fail(ErrorCode::kNonRetryable, fmt::format("HTTP {}: {}", resp.status, resp.body.substr(0, 200)));
    }
    last_error = resp.status == 0 ? resp.error : attempt.error.empty() ? fmt::format("HTTP {}", resp.status) : attempt.error;
  }
  return fail(ErrorCode::kExhausted, "retries exhausted, last error: " + last_error);
}

std::vector<SlotResult> ChatClient::sample_k(std::span<const ChatMessage> messages,
                                             const SamplingProfile& profile) {
  if (profile.k < 1) throw Error(ErrorCode::kInvalidArgument, "sample_k: k must be >= 1");
  std::vector<std::future<SlotResult>> futures;
  futures.reserve(static_cast<std::size_t>(profile.k));
  for (int i = 0; i < profile.k; ++i) {
    std::optional<std::int64_t> seed;
    if (profile.seed) seed = *profile.seed + i;
    futures.push_back(std::async(std::launch::async, [this, messages, &profile, seed] {
      return call(messages, profile, seed);
    }));
  }
  std::vector<SlotResult> slots;
  slots.reserve(futures.size());
  for (auto& f : futures) slots.push_back(f.get());
  return slots;
}

}  // namespace simjudge
