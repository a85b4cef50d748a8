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

#include <cstdlib>
#include <thread>

#include <httplib.h>

#include "simjudge/llm_gateway.hpp"
#include "test_support.hpp"

using namespace simjudge;
using nlohmann::json;

namespace {

EndpointConfig endpoint(int max_retries = 3) {
  EndpointConfig e;
  e.name = "stub";
  e.base_url = "http://stub.invalid/v1/";
  e.model = "stub-model";
  e.max_retries = max_retries;
  e.rate_limit_rpm = 100000;
  return e;
}

const std::vector<ChatMessage> kMessages = {{"user", "hello", {}}};

// Replies with the scripted statuses in order, then 200.
std::shared_ptr<testing::FnTransport> scripted(std::vector<int> statuses) {
  auto idx = std::make_shared<std::atomic<std::size_t>>(0);
  return std::make_shared<testing::FnTransport>([statuses, idx](const HttpRequest&) -> HttpResponse {
    const auto i = (*idx)++;
    if (i < statuses.size()) {
      const int s = statuses[i];
      if (s == 0) return {0, "", "connection refused"};
      if (s == -200) return {200, "{\"choices\": []}", ""};
      return {s, "{\"error\": \"scripted\"}", ""};
    }
    return testing::ok("done");
  });
}

ErrorCode complete_code(ChatClient& c) {
  try {
    c.complete(kMessages, SamplingProfile{});
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::kOk;
}

}  // namespace

TEST_CASE("two failures then success uses three attempts") {
  auto clock = std::make_shared<VirtualClock>();
  auto t = scripted({503, 0});
  ChatClient client(endpoint(3), t, clock);
  std::vector<Attempt> seen;
  client.set_attempt_sink([&](const std::string& name, const Attempt& a) {
    CHECK(name == "stub");
    seen.push_back(a);
  });
  const auto start = clock->now();
  const auto c = client.complete(kMessages, SamplingProfile{});
  CHECK(c.text == "done");
  CHECK(c.finish_reason == "stop");
  CHECK(c.usage.total_tokens == 30);
  REQUIRE(c.attempts.size() == 3);
  CHECK(seen.size() == 3);
  CHECK(c.attempts[0].http_status == 503);
  CHECK(c.attempts[1].http_status == 0);
  CHECK(c.attempts[1].error == "connection refused");
  CHECK(t->calls == 3);
  // Backoff with jitter in [0, d/2] for d = 500 ms and 1000 ms.
  CHECK(c.attempts[1].delay_before >= Millis(500));
  CHECK(c.attempts[1].delay_before <= Millis(750));
  CHECK(c.attempts[2].delay_before >= Millis(1000));
  CHECK(c.attempts[2].delay_before <= Millis(1500));
  CHECK(clock->now() - start == c.attempts[1].delay_before + c.attempts[2].delay_before);
}

TEST_CASE("retry classes") {
  auto clock = std::make_shared<VirtualClock>();
  {
    ChatClient c(endpoint(5), scripted({401}), clock);
    CHECK(complete_code(c) == ErrorCode::kAuthFailure);
  }
  {
    ChatClient c(endpoint(5), scripted({403}), clock);
    CHECK(complete_code(c) == ErrorCode::kAuthFailure);
  }
  {
    auto t = scripted({400});
    ChatClient c(endpoint(5), t, clock);
    CHECK(complete_code(c) == ErrorCode::kNonRetryable);
    CHECK(t->calls == 1);
  }
  {
    auto t = scripted({429, 500, 502, -200});
    ChatClient c(endpoint(5), t, clock);
    CHECK(complete_code(c) == ErrorCode::kOk);
    CHECK(t->calls == 5);
  }
  {
    auto t = scripted({503, 503, 503});
    ChatClient c(endpoint(2), t, clock);
    CHECK(complete_code(c) == ErrorCode::kExhausted);
    CHECK(t->calls == 3);
  }
}

TEST_CASE("missing API key environment variable is an auth failure without traffic") {
  auto e = endpoint();
  e.api_key_env = "SIMJUDGE_TEST_DEFINITELY_UNSET_KEY";
  ::unsetenv(e.api_key_env.c_str());
  auto t = scripted({});
  ChatClient c(e, t, std::make_shared<VirtualClock>());
  CHECK(complete_code(c) == ErrorCode::kAuthFailure);
  CHECK(t->calls == 0);

  ::setenv("SIMJUDGE_TEST_KEY", "sekrit", 1);
  e.api_key_env = "SIMJUDGE_TEST_KEY";
  ChatClient c2(e, t, std::make_shared<VirtualClock>());
  CHECK(complete_code(c2) == ErrorCode::kOk);
  bool has_auth = false;
  for (const auto& [k, v] : t->requests.back().headers) has_auth = has_auth || (k == "Authorization" && v == "Bearer sekrit");
  CHECK(has_auth);
  CHECK(t->requests.back().url == "http://stub.invalid/v1/chat/completions");
}

TEST_CASE("backoff delay doubles up to the cap") {
  BackoffPolicy p;
  CHECK(backoff_delay(1, p) == Millis(500));
  CHECK(backoff_delay(2, p) == Millis(1000));
  CHECK(backoff_delay(6, p) == Millis(16000));
  CHECK(backoff_delay(7, p) == Millis(30000));
  CHECK(backoff_delay(100, p) == Millis(30000));
  CHECK(backoff_delay(0, p) == Millis(0));
}

TEST_CASE("rate limiter admits at most N requests per sliding minute") {
  auto clock = std::make_shared<VirtualClock>();
  RateLimiter limiter(3, clock);
  const auto t0 = clock->now();
  for (int i = 0; i < 3; ++i) limiter.acquire();
  CHECK(clock->now() == t0);
  limiter.acquire();
  CHECK(clock->now() - t0 >= std::chrono::seconds(60));
  CHECK(clock->now() - t0 < std::chrono::seconds(61));
}

TEST_CASE("sample_k returns k ordered slots with per-slot seeds and errors") {
  std::mutex mu;
  std::map<std::int64_t, int> seen;
  auto t = std::make_shared<testing::FnTransport>([&](const HttpRequest& r) -> HttpResponse {
    const auto seed = json::parse(r.body).at("seed").get<std::int64_t>();
    std::lock_guard lock(mu);
    ++seen[seed];
    if (seed == 102 || seed == 105) return {400, "bad", ""};
    return testing::ok("slot " + std::to_string(seed - 100));
  });
  ChatClient client(endpoint(0), t, std::make_shared<VirtualClock>());
  SamplingProfile p;
  p.k = 8;
  p.seed = 100;
  p.temperature = 0.7;
  const auto slots = client.sample_k(kMessages, p);
  REQUIRE(slots.size() == 8);
  int texts = 0, errors = 0;
  for (int i = 0; i < 8; ++i) {
    if (const auto* c = std::get_if<Completion>(&slots[i])) {
      ++texts;
      CHECK(c->text == "slot " + std::to_string(i));
    } else {
      ++errors;
      CHECK((i == 2 || i == 5));
      CHECK(std::get<SlotError>(slots[i]).code == ErrorCode::kNonRetryable);
    }
  }
  CHECK(texts == 6);
  CHECK(errors == 2);
  CHECK(seen.size() == 8);
  const auto body = json::parse(t->requests.front().body);
  CHECK(body.at("model") == "stub-model");
  CHECK(body.at("temperature") == 0.7);
}

TEST_CASE("attachments become multimodal content parts") {
  std::vector<ChatMessage> msgs = {{"user", "look", {{"image/png", "abc"}, {"video/mp4", "xyz"}}}};
  const auto body = build_chat_request(endpoint(), msgs, SamplingProfile{}, std::nullopt);
  const auto& parts = body.at("messages").at(0).at("content");
  REQUIRE(parts.size() == 3);
  CHECK(parts[0].at("text") == "look");
  CHECK(parts[1].at("image_url").at("url") == "data:image/png;base64,YWJj");
  CHECK(parts[2].at("video_url").at("url") == "data:video/mp4;base64,eHl6");
  CHECK_FALSE(body.contains("seed"));
  CHECK_FALSE(body.contains("temperature"));
}

TEST_CASE("endpoint config validation and json round trip") {
  auto e = endpoint();
  CHECK_NOTHROW(e.validate());
  const auto back = endpoint_from_json("stub", to_json(e));
  CHECK(back.base_url == e.base_url);
  CHECK(back.rate_limit_rpm == e.rate_limit_rpm);
  auto bad = e;
  bad.base_url = "";
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = e;
  bad.max_retries = -1;
  CHECK_THROWS_AS(bad.validate(), Error);
  SamplingProfile p;
  p.k = 0;
  CHECK_THROWS_AS(p.validate(), Error);
}

TEST_CASE("http transport talks to a local server") {
  httplib::Server server;
  server.Post("/v1/chat/completions", [](const httplib::Request& req, httplib::Response& res) {
    const auto body = json::parse(req.body);
    res.set_content(testing::chat_reply("echo " + body.at("messages").at(0).at("content").get<std::string>()),
                    "application/json");
  });
  server.Post("/v1/fail/chat/completions",
              [](const httplib::Request&, httplib::Response& res) { res.status = 418; });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  auto e = endpoint(0);
  e.base_url = "http://127.0.0.1:" + std::to_string(port) + "/v1";
  e.timeout = Millis(5000);
  ChatClient client(e, make_http_transport());
  CHECK(client.complete(kMessages, SamplingProfile{}).text == "echo hello");

  e.base_url = "http://127.0.0.1:" + std::to_string(port) + "/v1/fail";
  ChatClient failing(e, make_http_transport());
  CHECK(complete_code(failing) == ErrorCode::kNonRetryable);

  server.stop();
  th.join();

  e.base_url = "http://127.0.0.1:" + std::to_string(port) + "/v1";
  ChatClient gone(e, make_http_transport(), std::make_shared<VirtualClock>());
  CHECK(complete_code(gone) == ErrorCode::kExhausted);
}
