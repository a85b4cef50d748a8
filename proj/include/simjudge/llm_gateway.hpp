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
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "simjudge/error.hpp"
#include "simjudge/messages.hpp"

namespace simjudge {

using Millis = std::chrono::milliseconds;

struct EndpointConfig {
  std::string name;
  std::string base_url;  // e.g. http://host:8000/v1 ; "/chat/completions" is appended
  std::string model;
  std::string api_key_env;  // empty: no Authorization header
  Millis timeout{120000};
  int max_retries = 3;
  double rate_limit_rpm = 60.0;
  bool supports_video = false;

  void validate() const;  // throws Error(kConfig)
};

EndpointConfig endpoint_from_json(const std::string& name, const nlohmann::json& j);
nlohmann::json to_json(const EndpointConfig& e);

struct SamplingProfile {
  int k = 8;
  std::optional<double> temperature;  // unset: server default
  int max_tokens = 16384;
  std::optional<std::int64_t> seed;

  void validate() const;
};

SamplingProfile sampling_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SamplingProfile& p);

// Wire layer. status == 0 means the request never produced an HTTP response
// (connect failure, timeout); `error` then describes why.
struct HttpRequest {
  std::string url;
  std::string body;
  std::vector<std::pair<std::string, std::string>> headers;
  Millis timeout{0};
};

struct HttpResponse {
  int status = 0;
  std::string body;
  std::string error;
};

class Transport {
 public:
  virtual ~Transport() = default;
  virtual HttpResponse post(const HttpRequest& request) = 0;
};

std::shared_ptr<Transport> make_http_transport();

class Clock {
 public:
  using time_point = std::chrono::steady_clock::time_point;
  virtual ~Clock() = default;
  virtual time_point now() = 0;
  virtual void sleep_for(Millis d) = 0;
};

std::shared_ptr<Clock> system_clock();

// Deterministic clock for tests: sleeping advances time instantly.
class VirtualClock final : public Clock {
 public:
  time_point now() override;
  void sleep_for(Millis d) override;
  void advance(Millis d) { sleep_for(d); }

 private:
  std::mutex mu_;
  time_point now_{};
};

// Sliding 60 s window: at most `per_minute` acquisitions in any window.
class RateLimiter {
 public:
  RateLimiter(double per_minute, std::shared_ptr<Clock> clock);
  void acquire();

 private:
  std::size_t limit_;
  std::shared_ptr<Clock> clock_;
  std::mutex mu_;
  std::deque<Clock::time_point> stamps_;
};

struct BackoffPolicy {
  Millis base{500};
  Millis cap{30000};
};

// Delay before retry number `attempt` (1-based), without jitter:
// min(cap, base * 2^(attempt-1)).
Millis backoff_delay(int attempt, const BackoffPolicy& policy);

struct Attempt {
  int number = 0;  // 1-based
  int http_status = 0;
  std::string error;
  Millis delay_before{0};
};

struct Usage {
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
  std::int64_t total_tokens = 0;
};

struct Completion {
  std::string text;
  std::string finish_reason;
  Usage usage;
  std::vector<Attempt> attempts;
  nlohmann::json server_model;  // model name the server reports, if any
};

struct SlotError {
  ErrorCode code = ErrorCode::kExhausted;
  std::string message;
  std::vector<Attempt> attempts;
};

using SlotResult = std::variant<Completion, SlotError>;

// Receives every attempt as it happens (endpoint name, attempt).
using AttemptSink = std::function<void(const std::string&, const Attempt&)>;

// OpenAI-compatible chat-completions body.
nlohmann::json build_chat_request(const EndpointConfig& endpoint,
                                  std::span<const ChatMessage> messages,
                                  const SamplingProfile& profile, std::optional<std::int64_t> seed);

// Thread-safe. Requests share one rate limiter per client.
class ChatClient {
 public:
  ChatClient(EndpointConfig endpoint, std::shared_ptr<Transport> transport,
             std::shared_ptr<Clock> clock = system_clock(), BackoffPolicy backoff = {},
             std::uint64_t jitter_seed = 0);

  const EndpointConfig& endpoint() const noexcept { return endpoint_; }
  void set_attempt_sink(AttemptSink sink) { sink_ = std::move(sink); }

  // First choice of one request. Throws Error(kExhausted | kAuthFailure |
  // kNonRetryable).
  Completion complete(std::span<const ChatMessage> messages, const SamplingProfile& profile);
  Completion complete(std::span<const ChatMessage> messages, const SamplingProfile& profile,
                      std::optional<std::int64_t> seed);

  // Exactly profile.k slots in order; failed slots carry SlotError. Slot i
  // uses seed + i when the profile has a seed.
  std::vector<SlotResult> sample_k(std::span<const ChatMessage> messages,
                                   const SamplingProfile& profile);

 private:
  SlotResult call(std::span<const ChatMessage> messages, const SamplingProfile& profile,
                  std::optional<std::int64_t> seed);
  Millis jitter(Millis base);

  EndpointConfig endpoint_;
  std::shared_ptr<Transport> transport_;
  std::shared_ptr<Clock> clock_;
  BackoffPolicy backoff_;
  RateLimiter limiter_;
  AttemptSink sink_;
  std::mutex rng_mu_;
  std::mt19937_64 rng_;
};

}  // namespace simjudge
