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

#include "simjudge/promptkit.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "simjudge/error.hpp"

namespace simjudge {
namespace {

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

// Calls fn(offset, length, name) for every {identifier} occurrence.
template <typename Fn>
void scan_placeholders(std::string_view body, Fn&& fn) {
  for (std::size_t i = 0; i < body.size(); ++i) {
    if (body[i] != '{' || i + 1 >= body.size() || !ident_start(body[i + 1])) continue;
    std::size_t j = i + 2;
    while (j < body.size() && ident_char(body[j])) ++j;
    if (j < body.size() && body[j] == '}') {
      fn(i, j + 1 - i, body.substr(i + 1, j - i - 1));
      i = j;
    }
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open template " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

bool language_matches(std::string_view info, std::string_view language) {
  auto end = info.find_first_of(" \t{");
  auto tag = lower(info.substr(0, end));
  auto want = lower(language);
  if (tag == want) return true;
  if (want == "python") return tag == "py" || tag == "python3";
  return false;
}

std::size_t longest_run(std::string_view s, char c) {
  std::size_t best = 0, cur = 0;
  for (char ch : s) {
    cur = ch == c ? cur + 1 : 0;
    best = std::max(best, cur);
  }
  return best;
}

bool blank(std::string_view s) { return s.find_first_not_of(" \t\r\n") == std::string_view::npos; }

}  // namespace

std::vector<std::string> PromptTemplate::placeholders() const {
  std::vector<std::string> out;
  scan_placeholders(body, [&](std::size_t, std::size_t, std::string_view name) {
    if (std::find(out.begin(), out.end(), name) == out.end()) out.emplace_back(name);
  });
  return out;
}

PromptTemplate load_template(const std::filesystem::path& body_path,
                             const std::optional<std::filesystem::path>& system_path) {
  PromptTemplate t;
  t.name = body_path.stem().string();
  t.body = read_file(body_path);
  if (system_path) {
    auto header = read_file(*system_path);
    while (!header.empty() && (header.back() == '\n' || header.back() == '\r')) header.pop_back();
    t.role_header = std::move(header);
  }
  while (!t.body.empty() && (t.body.back() == '\n' || t.body.back() == '\r')) t.body.pop_back();
  return t;
}

std::string render_template(std::string_view body,
                            const std::map<std::string, std::string, std::less<>>& bindings) {
  std::string out;
  out.reserve(body.size());
  std::size_t copied = 0;
  scan_placeholders(body, [&](std::size_t at, std::size_t len, std::string_view name) {
    auto it = bindings.find(name);
    if (it == bindings.end()) {
      throw Error(ErrorCode::kUnboundPlaceholder,
                  fmt::format("template placeholder {{{}}} has no binding", name),
                  std::string(name));
    }
    out.append(body.substr(copied, at - copied));
    out.append(it->second);
    copied = at + len;
  });
  out.append(body.substr(copied));
  return out;
}

std::vector<ChatMessage> render_generation_prompt(const PromptTemplate& tmpl,
                                                  const Scenario& scenario) {
  std::vector<ChatMessage> messages;
  if (tmpl.role_header) messages.push_back({"system", *tmpl.role_header, {}});
  messages.push_back({"user", render_template(tmpl.body, {{"content", scenario.description}}), {}});
  return messages;
}

std::string format_question_list(std::span<const VerificationQuestion> questions) {
  std::string out;
  for (const auto& q : questions) {
    if (!out.empty()) out.push_back('\n');
    out += fmt::format("{}. {}", q.index, q.text);
  }
  return out;
}

std::string render_judge_prompt(const PromptTemplate& tmpl,
                                std::span<const VerificationQuestion> questions) {
  if (questions.empty()) throw Error(ErrorCode::kEmptyQuestionSet, "judge prompt needs questions");
  return render_template(tmpl.body, {{"all_questions", format_question_list(questions)}});
}

std::vector<VerificationQuestion> with_code_checks(std::span<const VerificationQuestion> questions) {
  std::vector<VerificationQuestion> out(questions.begin(), questions.end());
  const int m = static_cast<int>(questions.size());
  out.push_back({m + 1, std::string(kExecutionCheck)});
  out.push_back({m + 2, std::string(kVideoCheck)});
  return out;
}

std::string render_llm_judge_prompt(const PromptTemplate& tmpl, std::string_view description,
                                    std::span<const VerificationQuestion> questions,
                                    const ExtractedProgram& program) {
  if (questions.empty()) throw Error(ErrorCode::kEmptyQuestionSet, "judge prompt needs questions");
  const auto extended = with_code_checks(questions);
  return render_template(tmpl.body, {{"content", std::string(description)},
                                     {"all_questions", format_question_list(extended)},
                                     {"code", fence_block(program.source, "python")}});
}

std::string fence_block(std::string_view source, std::string_view info) {
  const std::string fence(std::max<std::size_t>(3, longest_run(source, '`') + 1), '`');
  std::string out = fence;
  out.append(info);
  out.push_back('\n');
  out.append(source);
  if (!source.empty() && source.back() != '\n') out.push_back('\n');
  out += fence;
  return out;
}

std::vector<FencedBlock> find_fenced_blocks(std::string_view text) {
  std::vector<std::string_view> lines;
  for (std::size_t pos = 0; pos <= text.size();) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) {
      if (pos < text.size()) lines.push_back(text.substr(pos));
      break;
    }
    lines.push_back(text.substr(pos, nl - pos));
    pos = nl + 1;
  }
  for (auto& l : lines) {
    if (!l.empty() && l.back() == '\r') l.remove_suffix(1);
  }

  struct Fence {
    std::size_t indent;
    char ch;
    std::size_t len;
    std::string_view rest;
  };
  auto fence_of = [](std::string_view line) -> std::optional<Fence> {
    std::size_t indent = 0;
    while (indent < line.size() && indent < 4 && line[indent] == ' ') ++indent;
    if (indent > 3 || indent >= line.size()) return std::nullopt;
    const char ch = line[indent];
    if (ch != '`' && ch != '~') return std::nullopt;
    std::size_t len = 0;
    while (indent + len < line.size() && line[indent + len] == ch) ++len;
    if (len < 3) return std::nullopt;
    return Fence{indent, ch, len, line.substr(indent + len)};
  };

  std::vector<FencedBlock> blocks;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    auto open = fence_of(lines[i]);
    if (!open) continue;
    if (open->ch == '`' && open->rest.find('`') != std::string_view::npos) continue;
    FencedBlock block;
    auto info = open->rest;
    const auto b = info.find_first_not_of(" \t");
    info = b == std::string_view::npos ? std::string_view{} : info.substr(b);
    while (!info.empty() && (info.back() == ' ' || info.back() == '\t')) info.remove_suffix(1);
    block.info = std::string(info);
    std::size_t j = i + 1;
    for (; j < lines.size(); ++j) {
      auto close = fence_of(lines[j]);
      if (close && close->ch == open->ch && close->len >= open->len && blank(close->rest)) break;
      auto content = lines[j];
      std::size_t strip = 0;
      while (strip < open->indent && strip < content.size() && content[strip] == ' ') ++strip;
      block.body.append(content.substr(strip));
      block.body.push_back('\n');
    }
    blocks.push_back(std::move(block));
    i = j;
  }
  return blocks;
}

ExtractedProgram extract_code_block(std::string_view response, std::string_view language) {
  const auto blocks = find_fenced_blocks(response);
  std::optional<std::size_t> tagged, any;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (blank(blocks[i].body)) continue;
    any = i;
    if (language_matches(blocks[i].info, language)) tagged = i;
  }
  auto chosen = tagged ? tagged : any;
  if (!chosen) throw Error(ErrorCode::kNoCodeBlock, "response contains no fenced code block");
  const auto& b = blocks[*chosen];
  return {b.body, *chosen, b.info};
}

}  // namespace simjudge
