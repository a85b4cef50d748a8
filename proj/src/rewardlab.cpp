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

#include "simjudge/rewardlab.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "simjudge/error.hpp"

namespace simjudge {

using nlohmann::json;

std::string_view to_string(RewardKind k) noexcept {
  switch (k) {
    case RewardKind::kBinary: return "binary";
    case RewardKind::kRatio: return "ratio";
    case RewardKind::kLlmBinary: return "llm_binary";
  }
  return "binary";
}

std::optional<RewardKind> parse_reward_kind(std::string_view s) {
  for (auto k : {RewardKind::kBinary, RewardKind::kRatio, RewardKind::kLlmBinary}) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

json to_json(const RewardResult& r) {
  json labels = json::array();
  for (bool b : r.per_question) labels.push_back(b);
  return {{"value", r.value}, {"kind", to_string(r.kind)}, {"per_question", labels},
          {"gated_zero", r.gated_zero}};
}

RewardResult reward_from_json(const json& j) {
  RewardResult r;
  r.value = j.at("value").get<double>();
  auto kind = parse_reward_kind(j.at("kind").get<std::string>());
  if (!kind) throw Error(ErrorCode::kLedgerCorrupt, "unknown reward kind");
  r.kind = *kind;
  for (const auto& b : j.at("per_question")) r.per_question.push_back(b.get<bool>());
  r.gated_zero = j.at("gated_zero").get<bool>();
  return r;
}

namespace {

void require_labels(const std::vector<bool>& labels, std::size_t min) {
  if (labels.size() < min) {
    throw Error(ErrorCode::kEmptyLabels,
                fmt::format("reward needs at least {} label(s), got {}", min, labels.size()));
  }
}

bool all_true(const std::vector<bool>& labels) {
  return std::all_of(labels.begin(), labels.end(), [](bool b) { return b; });
}

}  // namespace

RewardResult reward_binary(const std::vector<bool>& labels, bool gated) {
  require_labels(labels, 1);
  const bool pass = !gated && all_true(labels);
  return {pass ? 1.0 : 0.0, RewardKind::kBinary, labels, gated};
}

RewardResult reward_ratio(const std::vector<bool>& labels, bool gated) {
  require_labels(labels, 1);
  const auto yes = std::count(labels.begin(), labels.end(), true);
  const double value = gated ? 0.0 : static_cast<double>(yes) / static_cast<double>(labels.size());
  return {value, RewardKind::kRatio, labels, gated};
}

RewardResult reward_llm_binary(const std::vector<bool>& labels, bool gated) {
  require_labels(labels, 3);
  const bool pass = !gated && all_true(labels);
  return {pass ? 1.0 : 0.0, RewardKind::kLlmBinary, labels, gated};
}

RewardResult compute_reward(RewardKind kind, const std::vector<bool>& labels, bool gated) {
  switch (kind) {
    case RewardKind::kBinary: return reward_binary(labels, gated);
    case RewardKind::kRatio: return reward_ratio(labels, gated);
    case RewardKind::kLlmBinary: return reward_llm_binary(labels, gated);
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown reward kind");
}

RewardResult vote_rewards(RewardKind kind, const std::vector<std::vector<bool>>& member_labels,
                          bool gated) {
  if (member_labels.empty()) throw Error(ErrorCode::kInvalidArgument, "no ensemble members");
  std::vector<double> values;
  for (const auto& labels : member_labels) values.push_back(compute_reward(kind, labels, gated).value);
  std::sort(values.begin(), values.end());
  double value = 0.0;
  if (kind == RewardKind::kRatio) {
    value = values[(values.size() - 1) / 2];
  } else {
    const auto passes = std::count(values.begin(), values.end(), 1.0);
    value = 2 * static_cast<std::size_t>(passes) > values.size() ? 1.0 : 0.0;
  }
  // Per-question record: strict majority per label position.
  std::vector<bool> labels(member_labels.front().size(), false);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    std::size_t yes = 0;
    for (const auto& m : member_labels) yes += i < m.size() && m[i];
    labels[i] = 2 * yes > member_labels.size();
  }
  return {value, kind, std::move(labels), gated};
}

json to_json(const KernelDefaults& k) {
  return {{"epsilon", k.epsilon}, {"clip_low", k.clip_low}, {"clip_high", k.clip_high}};
}

KernelDefaults kernel_defaults_from_json(const json& j) {
  KernelDefaults k;
  k.epsilon = j.value("epsilon", k.epsilon);
  k.clip_low = j.value("clip_low", k.clip_low);
  k.clip_high = j.value("clip_high", k.clip_high);
  if (!(k.epsilon > 0)) throw Error(ErrorCode::kConfig, "kernel epsilon must be > 0");
  if (!(k.clip_low > 0 && k.clip_low < 1 && k.clip_high > 0 && k.clip_high < 1)) {
    throw Error(ErrorCode::kConfig, "clip bounds must lie in (0, 1)");
  }
  return k;
}

AdvantageVector group_advantages(const RolloutGroup& group) {
  const auto k = group.rewards.size();
  if (k < 2) throw Error(ErrorCode::kGroupTooSmall, fmt::format("group of {} < 2", k));
  if (!(group.epsilon > 0)) throw Error(ErrorCode::kInvalidArgument, "epsilon must be > 0");
  AdvantageVector out;
  double sum = 0.0;
  for (double r : group.rewards) sum += r;
  out.mean = sum / static_cast<double>(k);
  double sq = 0.0;
  for (double r : group.rewards) sq += (r - out.mean) * (r - out.mean);
  out.stddev = std::sqrt(sq / static_cast<double>(k));
  out.values.reserve(k);
  for (double r : group.rewards) out.values.push_back((r - out.mean) / (out.stddev + group.epsilon));
  return out;
}

double surrogate_term(double ratio, double advantage, double clip_low, double clip_high) {
  const double unclipped = ratio * advantage;
  const double clipped = clip(ratio, 1.0 - clip_low, 1.0 + clip_high) * advantage;
  return std::min(unclipped, clipped);
}

double clipped_surrogate(const SurrogateBatch& batch) {
  if (!(batch.clip_low > 0 && batch.clip_low < 1 && batch.clip_high > 0 && batch.clip_high < 1)) {
    throw Error(ErrorCode::kInvalidClipBounds,
                fmt::format("clip margins ({}, {}) must lie in (0, 1)", batch.clip_low, batch.clip_high));
  }
  if (batch.sequences.empty()) throw Error(ErrorCode::kInvalidArgument, "empty surrogate batch");
  double total = 0.0;
  for (const auto& seq : batch.sequences) {
    if (seq.ratios.empty()) throw Error(ErrorCode::kInvalidArgument, "sequence without tokens");
    double s = 0.0;
    for (double rho : seq.ratios) {
      if (!(rho > 0)) throw Error(ErrorCode::kInvalidArgument, "probability ratios must be > 0");
      s += surrogate_term(rho, seq.advantage, batch.clip_low, batch.clip_high);
    }
    total += s / static_cast<double>(seq.ratios.size());
  }
  return total / static_cast<double>(batch.sequences.size());
}

}  // namespace simjudge
