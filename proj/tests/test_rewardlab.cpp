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

#include <bit>
#include <cmath>
#include <random>

#include "simjudge/error.hpp"
#include "simjudge/rewardlab.hpp"

using namespace simjudge;

namespace {

std::vector<bool> labels_of(unsigned bits, int m) {
  std::vector<bool> out(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) out[static_cast<std::size_t>(i)] = (bits >> i) & 1u;
  return out;
}

// Piecewise form: positive advantages are capped above, negative ones below.
double piecewise_term(double r, double a, double lo, double hi) {
  if (a >= 0) return (r < 1 + hi ? r : 1 + hi) * a;
  return (r > 1 - lo ? r : 1 - lo) * a;
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::kOk;
}

}  // namespace

TEST_CASE("binary and ratio rewards over every label vector up to twelve questions") {
  for (int m = 1; m <= 12; ++m) {
    for (unsigned bits = 0; bits < (1u << m); ++bits) {
      const auto labels = labels_of(bits, m);
      const int pop = std::popcount(bits);
      const double b = reward_binary(labels, false).value;
      const double r = reward_ratio(labels, false).value;
      REQUIRE((b == 1.0) == (pop == m));
      REQUIRE((b == 0.0 || b == 1.0));
      REQUIRE(std::abs(r * m - pop) < 1e-9);
      REQUIRE(b <= r);
    }
  }
}

TEST_CASE("gating forces zero for every kind") {
  for (int m = 1; m <= 8; ++m) {
    for (unsigned bits = 0; bits < (1u << m); ++bits) {
      const auto labels = labels_of(bits, m);
      for (auto kind : {RewardKind::kBinary, RewardKind::kRatio, RewardKind::kLlmBinary}) {
        if (kind == RewardKind::kLlmBinary && m < 3) continue;
        const auto r = compute_reward(kind, labels, true);
        REQUIRE(r.value == 0.0);
        REQUIRE(r.gated_zero);
      }
    }
  }
}

TEST_CASE("code-aware reward needs every check including the video check") {
  std::vector<bool> labels(9, true);
  CHECK(reward_llm_binary(labels, false).value == 1.0);
  labels.back() = false;
  CHECK(reward_llm_binary(labels, false).value == 0.0);
  labels.back() = true;
  labels[7] = false;
  CHECK(reward_llm_binary(labels, false).value == 0.0);
  CHECK(code_of([] { reward_llm_binary({true, true}, false); }) == ErrorCode::kEmptyLabels);
  CHECK(code_of([] { reward_binary({}, false); }) == ErrorCode::kEmptyLabels);
  CHECK(code_of([] { reward_ratio({}, false); }) == ErrorCode::kEmptyLabels);
}

TEST_CASE("whole-reward voting") {
  CHECK(vote_rewards(RewardKind::kBinary, {{true, true}, {true, true}, {true, false}}, false).value == 1.0);
  CHECK(vote_rewards(RewardKind::kBinary, {{true, true}, {true, false}, {false, true}}, false).value == 0.0);
  CHECK(vote_rewards(RewardKind::kBinary, {{true}, {false}}, false).value == 0.0);
  CHECK(vote_rewards(RewardKind::kRatio, {{true, true}, {true, false}, {false, false}}, false).value == 0.5);
  CHECK(vote_rewards(RewardKind::kRatio, {{true, true}, {false, false}}, false).value == 0.0);
  CHECK(vote_rewards(RewardKind::kBinary, {{true}, {true}, {true}}, true).value == 0.0);
  CHECK(code_of([] { vote_rewards(RewardKind::kBinary, {}, false); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("reward kinds and results round-trip") {
  for (auto k : {RewardKind::kBinary, RewardKind::kRatio, RewardKind::kLlmBinary}) {
    CHECK(parse_reward_kind(to_string(k)) == k);
  }
  CHECK_FALSE(parse_reward_kind("bogus").has_value());
  const auto r = reward_ratio({true, false, true, true}, false);
  const auto back = reward_from_json(to_json(r));
  CHECK(back.value == r.value);
  CHECK(back.per_question == r.per_question);
  CHECK(back.kind == r.kind);
}

TEST_CASE("single winner in a group of eight") {
  RolloutGroup g{{1, 0, 0, 0, 0, 0, 0, 0}, 1e-4};
  const auto adv = group_advantages(g);
  // Independent evaluation: mean 1/8, population variance 7/64.
  const double mu = 0.125, sigma = std::sqrt(7.0 / 64.0);
  CHECK(adv.mean == doctest::Approx(mu));
  CHECK(adv.stddev == doctest::Approx(sigma));
  CHECK(std::abs(adv.values[0] - 2.64495) < 1e-5);
  CHECK(std::abs(adv.values[0] - (1 - mu) / (sigma + 1e-4)) < 1e-12);
  for (int i = 1; i < 8; ++i) CHECK(std::abs(adv.values[i] - (-0.37785)) < 1e-5);
}

TEST_CASE("pair group and degenerate groups") {
  const auto pair = group_advantages({{1, 0}, 1e-4});
  CHECK(pair.values[0] == doctest::Approx(0.5 / 0.5001).epsilon(1e-12));
  CHECK(pair.values[1] == doctest::Approx(-0.5 / 0.5001).epsilon(1e-12));
  for (double v : {0.0, 1.0, 0.375}) {
    const auto flat = group_advantages({std::vector<double>(8, v), 1e-4});
    for (double a : flat.values) CHECK(a == 0.0);
  }
  CHECK(code_of([] { group_advantages({{1.0}, 1e-4}); }) == ErrorCode::kGroupTooSmall);
  CHECK(code_of([] { group_advantages({{1.0, 0.0}, 0.0}); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("advantages are centered for random groups") {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> size(2, 16);
  std::uniform_real_distribution<double> reward(0, 1);
  int checked = 0;
  for (int t = 0; t < 10000; ++t) {
    RolloutGroup g;
    g.rewards.resize(static_cast<std::size_t>(size(rng)));
    const bool binary = t % 2 == 0;
    for (auto& r : g.rewards) r = binary ? double(rng() % 2) : reward(rng);
    const auto adv = group_advantages(g);
    if (adv.stddev > 0) {
      double sum = 0;
      for (double a : adv.values) sum += a;
      REQUIRE(std::abs(sum / adv.values.size()) <= 1e-9);
      ++checked;
    }
  }
  CHECK(checked > 9000);
}

TEST_CASE("surrogate term against independent oracles") {
  CHECK(surrogate_term(2.0, 1.0, 0.2, 0.28) == doctest::Approx(1.28));
  std::mt19937_64 rng(4242);
  std::uniform_real_distribution<double> ratio(0.01, 3.0), adv(-5.0, 5.0), margin(0.01, 0.99);
  for (int t = 0; t < 10000; ++t) {
    const double r = ratio(rng), a = adv(rng), lo = margin(rng), hi = margin(rng);
    const double first = r * a;
    const double clipped = std::min(std::max(r, 1 - lo), 1 + hi) * a;
    const double literal = first < clipped ? first : clipped;
    const double got = surrogate_term(r, a, lo, hi);
    REQUIRE(std::abs(got - literal) <= 1e-12);
    REQUIRE(std::abs(got - piecewise_term(r, a, lo, hi)) <= 1e-12);
  }
}

TEST_CASE("symmetric bounds reproduce standard clipping") {
  const double eps = 0.2;
  for (double r : {0.5, 0.8, 0.9, 1.0, 1.1, 1.2, 1.5}) {
    for (double a : {-1.0, 1.0}) {
      const double standard = std::min(r * a, std::clamp(r, 1 - eps, 1 + eps) * a);
      CHECK(surrogate_term(r, a, eps, eps) == doctest::Approx(standard).epsilon(1e-15));
    }
  }
}

TEST_CASE("batched surrogate averages tokens then sequences") {
  SurrogateBatch b;
  b.sequences = {{{1.0, 2.0}, 1.0}, {{0.5}, -1.0}};
  const double s1 = (1.0 + 1.28) / 2.0;
  const double s2 = -0.8;
  CHECK(clipped_surrogate(b) == doctest::Approx((s1 + s2) / 2.0).epsilon(1e-15));

  auto bad = b;
  bad.clip_low = 0.0;
  CHECK(code_of([&] { clipped_surrogate(bad); }) == ErrorCode::kInvalidClipBounds);
  bad = b;
  bad.clip_high = 1.0;
  CHECK(code_of([&] { clipped_surrogate(bad); }) == ErrorCode::kInvalidClipBounds);
  CHECK(code_of([] { clipped_surrogate(SurrogateBatch{}); }) == ErrorCode::kInvalidArgument);
  bad = b;
  bad.sequences[0].ratios[0] = -1;
  CHECK(code_of([&] { clipped_surrogate(bad); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("kernel defaults") {
  const auto k = kernel_defaults_from_json(nlohmann::json::object());
  CHECK(k.epsilon == 1e-4);
  CHECK(k.clip_low == 0.2);
  CHECK(k.clip_high == 0.28);
  CHECK_THROWS_AS(kernel_defaults_from_json({{"clip_low", 1.5}}), Error);
}
