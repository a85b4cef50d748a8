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

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "simjudge/corpus.hpp"
#include "simjudge/messages.hpp"

namespace simjudge {

// A text template with `{name}` placeholders. Braces that do not enclose an
// identifier (JSON examples, code) are left alone.
struct PromptTemplate {
  std::string name;
  std::string body;
  std::optional<std::string> role_header;  // system message, if any

  std::vector<std::string> placeholders() const;
};

PromptTemplate load_template(const std::filesystem::path& body_path,
                             const std::optional<std::filesystem::path>& system_path = std::nullopt);

// Substitutes every placeholder; throws Error(kUnboundPlaceholder) naming the
// first placeholder without a binding.
std::string render_template(std::string_view body,
                            const std::map<std::string, std::string, std::less<>>& bindings);

// System message (when the template has a role header) followed by the user
// message with {content} bound to the scenario description.
std::vector<ChatMessage> render_generation_prompt(const PromptTemplate& tmpl,
                                                  const Scenario& scenario);

// "index. text" lines, one per question, in order.
std::string format_question_list(std::span<const VerificationQuestion> questions);

std::string render_judge_prompt(const PromptTemplate& tmpl,
                                std::span<const VerificationQuestion> questions);

inline constexpr std::string_view kExecutionCheck = "Does the code execute without errors?";
inline constexpr std::string_view kVideoCheck = "Does the code generate and save a video?";

// Q followed by the execution and video checks, indexed M+1 and M+2.
std::vector<VerificationQuestion> with_code_checks(std::span<const VerificationQuestion> questions);

struct ExtractedProgram {
  std::string source;
  std::size_t block_index = 0;  // 0-based among all fenced blocks in the response
  std::string language_hint;
};

// Binds {content}, {all_questions} (Q plus the two code checks) and {code}
// (the program wrapped in a fence long enough to survive any backtick run in
// the source).
std::string render_llm_judge_prompt(const PromptTemplate& tmpl, std::string_view description,
                                    std::span<const VerificationQuestion> questions,
                                    const ExtractedProgram& program);

// Wraps `source` in a backtick fence strictly longer than any backtick run it
// contains.
std::string fence_block(std::string_view source, std::string_view info);

struct FencedBlock {
  std::string info;
  std::string body;
};

// All fenced code blocks in document order (``` or ~~~ fences, up to three
// spaces of indentation; an unclosed fence runs to end of input).
std::vector<FencedBlock> find_fenced_blocks(std::string_view text);

// Picks the last non-empty block tagged with `language` (case-insensitive;
// "py"/"python3" count as python), else the last non-empty block of any tag.
// Throws Error(kNoCodeBlock).
ExtractedProgram extract_code_block(std::string_view response, std::string_view language = "python");

}  // namespace simjudge
