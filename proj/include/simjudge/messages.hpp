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

#include <string>
#include <vector>

namespace simjudge {

// Binary media sent alongside a chat message (frames or a whole video).
struct Attachment {
  std::string mime;
  std::string data;

  bool operator==(const Attachment&) const = default;
};

struct ChatMessage {
  std::string role;
  std::string content;
  std::vector<Attachment> attachments;

  bool operator==(const ChatMessage&) const = default;
};

}  // namespace simjudge
