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

#include <algorithm>
#include <optional>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace simjudge {

enum class RewardKind { kBinary, kRatio, kLlmBinary };

std::string_view to_string(RewardKind k) noexcept;
std::optional<RewardKind> parse_reward_kind(std::string_view s);

struct RewardResult {
  double value = 0.0;
  RewardKind kind = RewardKind::kBinary;
  std::vector<bool> per_question;
  bool gated_zero = false;  // the unusable-output rule forced the value to 0
};

nlohmann::json to_json(const RewardResult& r);
RewardResult reward_from_json(const nlohmann::json& j);

// 1 iff not gated and every label is true. Throws Error(kEmptyLabels).
RewardResult reward_binary(const std::vector<bool>& labels, bool gated);

// (#true)/M, or 0 when gated. Throws Error(kEmptyLabels).
RewardResult reward_ratio(const std::vector<bool>& labels, bool gated);

// Labels cover the scenario questions followed by the execution and video
// checks, so at least three are required. Throws Error(kEmptyLabels).
RewardResult reward_llm_binary(const std::vector<bool>& labels, bool gated);

RewardResult compute_reward(RewardKind kind, const std::vector<bool>& labels, bool gated);

// Whole-reward voting across judges: each member's label vector is scored on
// its own, then binary/llm rewards take the strict majority (ties 0) and
// ratio rewards take the lower median.
RewardResult vote_rewards(RewardKind kind, const std::vector<std::vector<bool>>& member_labels,
                          bool gated);

struct KernelDefaults {
  double epsilon = 1e-4;
  double clip_low = 0.2;
  double clip_high = 0.28;
};

nlohmann::json to_json(const KernelDefaults& k);
KernelDefaults kernel_defaults_from_json(const nlohmann::json& j);

struct RolloutGroup {
  std::vector<double> rewards;
  double epsilon = 1e-4;
};

struct AdvantageVector {
  std::vector<double> values;
  double mean = 0.0;
  double stddev = 0.0;  // population (divide by K)
};

// (r_k - mean) / (stddev + epsilon). Throws Error(kGroupTooSmall) for K < 2
// and Error(kInvalidArgument) for epsilon <= 0.
AdvantageVector group_advantages(const RolloutGroup& group);

inline double clip(double u, double lo, double hi) { return std::min(std::max(u, lo), hi); }

// One sequence of a rollout group: per-token probability ratios and the
// sequence advantage shared by all of its tokens.
struct SequenceRatios {
  std::vector<double> ratios;
  double advantage = 0.0;
};

struct SurrogateBatch {
  std::vector<SequenceRatios> sequences;
  double clip_low = 0.2;
  double clip_high = 0.28;
};

// min(ratio * adv, clip(ratio, 1 - clip_low, 1 + clip_high) * adv)
double surrogate_term(double ratio, double advantage, double clip_low, double clip_high);

// Token terms averaged within each sequence, then across sequences. Throws
// Error(kInvalidClipBounds) unless both margins lie in (0, 1), and
// Error(kInvalidArgument) for empty input or non-positive ratios.
double clipped_surrogate(const SurrogateBatch& batch);

}  // namespace simjudge
