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

#include "simjudge/videocheck.hpp"

#include <fcntl.h>
#include <sys/mman.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <map>
#include <set>
#include <string_view>

#include <fmt/format.h>

namespace simjudge {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr int kMaxDepth = 12;
constexpr std::uint64_t kMaxTableEntries = 1ull << 26;

using FourCC = std::array<char, 4>;

constexpr FourCC fourcc(const char (&s)[5]) { return {s[0], s[1], s[2], s[3]}; }

struct ShortRead {};

// Bounds-checked big-endian reader over one box payload.
class Reader {
 public:
  explicit Reader(std::span<const std::byte> data) : data_(data) {}

  std::size_t remaining() const { return data_.size() - pos_; }
  void skip(std::size_t n) {
    need(n);
    pos_ += n;
  }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(data_[pos_++]);
  }
  std::uint16_t u16() { return static_cast<std::uint16_t>(be(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(be(4)); }
  std::uint64_t u64() { return be(8); }
  FourCC cc() {
    need(4);
    FourCC c{};
    for (auto& ch : c) ch = static_cast<char>(data_[pos_++]);
    return c;
  }

 private:
  void need(std::size_t n) const {
    if (remaining() < n) throw ShortRead{};
  }
  std::uint64_t be(std::size_t n) {
    need(n);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < n; ++i) v = (v << 8) | static_cast<std::uint8_t>(data_[pos_++]);
    return v;
  }

  std::span<const std::byte> data_;
  std::size_t pos_ = 0;
};

bool printable(const FourCC& c) {
  return std::all_of(c.begin(), c.end(), [](char ch) {
    const auto u = static_cast<unsigned char>(ch);
    return u >= 0x20 && u < 0x7f;
  });
}

std::string to_str(const FourCC& c) { return std::string(c.data(), c.size()); }

const std::set<std::string, std::less<>> kTopLevel = {
    "ftyp", "styp", "moov", "mdat", "moof", "mfra", "free", "skip", "wide",
    "uuid", "meta", "pdin", "sidx", "ssix", "prft", "emsg", "pnot"};

const std::set<std::string, std::less<>> kContainers = {
    "moov", "trak", "mdia", "minf", "stbl", "edts", "dinf", "mvex", "moof", "traf"};

struct BoxHeader {
  FourCC type{};
  std::size_t header_size = 0;
  std::uint64_t size = 0;  // including header
};

enum class HeaderResult { kOk, kShort, kInvalid };

// Reads a box header at `at` within `region`. A size of 0 extends to the
// end of the region.
HeaderResult read_header(std::span<const std::byte> region, std::size_t at, BoxHeader& h) {
  if (region.size() - at < 8) return HeaderResult::kShort;
  Reader r(region.subspan(at));
  std::uint64_t size = r.u32();
  h.type = r.cc();
  h.header_size = 8;
  if (size == 1) {
    if (r.remaining() < 8) return HeaderResult::kShort;
    size = r.u64();
    h.header_size = 16;
  } else if (size == 0) {
    size = region.size() - at;
  }
  if (h.type == fourcc("uuid")) h.header_size += 16;
  if (size < h.header_size) return HeaderResult::kInvalid;
  h.size = size;
  return HeaderResult::kOk;
}

struct Track {
  std::uint32_t id = 0;
  bool is_video = false;
  std::uint32_t timescale = 0;
  std::uint64_t duration = 0;
  std::optional<std::uint64_t> stsz_count;
  std::uint64_t stts_count = 0;
  std::uint32_t tkhd_width = 0, tkhd_height = 0;
  std::uint32_t entry_width = 0, entry_height = 0;
  std::uint64_t frag_samples = 0;
  std::uint64_t frag_duration = 0;
};

struct TrackDefaults {
  std::uint32_t duration = 0;
};

struct State {
  std::vector<std::string> brands;
  std::uint32_t movie_timescale = 0;
  std::uint64_t movie_duration = 0;
  std::uint64_t fragment_duration = 0;  // mehd, movie timescale
  std::vector<Track> tracks;
  std::map<std::uint32_t, TrackDefaults> trex;
  bool damaged = false;
  std::string damage;

  // traf parsing context
  std::uint32_t traf_track = 0;
  std::uint32_t traf_default_duration = 0;
  bool traf_has_default = false;

  Track* track_by_id(std::uint32_t id) {
    for (auto& t : tracks) {
      if (t.id == id) return &t;
    }
    return nullptr;
  }
  void mark(std::string why) {
    if (!damaged) damage = std::move(why);
    damaged = true;
  }
};

void parse_payload(const FourCC& type, std::span<const std::byte> payload, State& st);
void walk(std::span<const std::byte> region, int depth, State& st);

void parse_ftyp(Reader r, State& st) {
  st.brands.push_back(to_str(r.cc()));
  r.skip(4);
  while (r.remaining() >= 4) st.brands.push_back(to_str(r.cc()));
}

void parse_mvhd(Reader r, State& st) {
  const auto version = r.u8();
  r.skip(3);
  if (version == 1) {
    r.skip(16);
    st.movie_timescale = r.u32();
    st.movie_duration = r.u64();
  } else {
    r.skip(8);
    st.movie_timescale = r.u32();
    st.movie_duration = r.u32();
  }
}

void parse_tkhd(Reader r, Track& t) {
  const auto version = r.u8();
  r.skip(3);
  if (version == 1) {
    r.skip(16);
    t.id = r.u32();
    r.skip(4 + 8);
  } else {
    r.skip(8);
    t.id = r.u32();
    r.skip(4 + 4);
  }
  r.skip(8 + 2 + 2 + 2 + 2 + 36);
  t.tkhd_width = r.u32() >> 16;
  t.tkhd_height = r.u32() >> 16;
}

void parse_mdhd(Reader r, Track& t) {
  const auto version = r.u8();
  r.skip(3);
  if (version == 1) {
    r.skip(16);
    t.timescale = r.u32();
    t.duration = r.u64();
  } else {
    r.skip(8);
    t.timescale = r.u32();
    const auto d = r.u32();
    t.duration = d == 0xffffffffu ? 0 : d;
  }
}

void parse_stsd(std::span<const std::byte> payload, Track& t) {
  Reader r(payload);
  r.skip(4);
  const auto count = r.u32();
  if (count == 0 || !t.is_video) return;
  BoxHeader h;
  if (read_header(payload, 8, h) != HeaderResult::kOk) return;
  Reader e(payload.subspan(8 + h.header_size));
  e.skip(6 + 2 + 2 + 2 + 12);
  t.entry_width = e.u16();
  t.entry_height = e.u16();
}

void parse_stts(Reader r, Track& t) {
  r.skip(4);
  const std::uint64_t entries = r.u32();
  if (entries > kMaxTableEntries || entries * 8 > r.remaining()) throw ShortRead{};
  for (std::uint64_t i = 0; i < entries; ++i) {
    t.stts_count += r.u32();
    r.skip(4);
  }
}

void parse_trun(Reader r, State& st) {
  const auto version_flags = r.u32();
  const auto flags = version_flags & 0xffffffu;
  const std::uint64_t count = r.u32();
  if (flags & 0x1) r.skip(4);
  if (flags & 0x4) r.skip(4);
  const std::size_t per_sample = ((flags & 0x100) ? 4 : 0) + ((flags & 0x200) ? 4 : 0) +
                                 ((flags & 0x400) ? 4 : 0) + ((flags & 0x800) ? 4 : 0);
  if (count > kMaxTableEntries || count * per_sample > r.remaining()) throw ShortRead{};
  std::uint64_t duration = 0;
  std::uint32_t fallback = st.traf_has_default ? st.traf_default_duration : 0;
  if (!st.traf_has_default) {
    if (auto it = st.trex.find(st.traf_track); it != st.trex.end()) fallback = it->second.duration;
  }
  for (std::uint64_t i = 0; i < count; ++i) {
    if (flags & 0x100) {
      duration += r.u32();
    } else {
      duration += fallback;
    }
    if (flags & 0x200) r.skip(4);
    if (flags & 0x400) r.skip(4);
    if (flags & 0x800) r.skip(4);
  }
  if (Track* t = st.track_by_id(st.traf_track)) {
    t->frag_samples += count;
    t->frag_duration += duration;
  }
}

void parse_payload(const FourCC& type, std::span<const std::byte> payload, State& st) {
  const auto name = to_str(type);
  Track* cur = st.tracks.empty() ? nullptr : &st.tracks.back();
  if (name == "ftyp" || name == "styp") {
    if (st.brands.empty()) parse_ftyp(Reader(payload), st);
  } else if (name == "mvhd") {
    parse_mvhd(Reader(payload), st);
  } else if (name == "tkhd" && cur) {
    parse_tkhd(Reader(payload), *cur);
  } else if (name == "mdhd" && cur) {
    parse_mdhd(Reader(payload), *cur);
  } else if (name == "hdlr" && cur) {
    Reader r(payload);
    r.skip(8);
    cur->is_video = r.cc() == fourcc("vide");
  } else if (name == "stsd" && cur) {
    parse_stsd(payload, *cur);
  } else if (name == "stsz" && cur) {
    Reader r(payload);
    r.skip(8);
    cur->stsz_count = r.u32();
  } else if (name == "stz2" && cur) {
    Reader r(payload);
    r.skip(8);
    cur->stsz_count = r.u32();
  } else if (name == "stts" && cur) {
    parse_stts(Reader(payload), *cur);
  } else if (name == "mehd") {
    Reader r(payload);
    const auto version = r.u8();
    r.skip(3);
    st.fragment_duration = version == 1 ? r.u64() : r.u32();
  } else if (name == "trex") {
    Reader r(payload);
    r.skip(4);
    const auto id = r.u32();
    r.skip(4);
    st.trex[id].duration = r.u32();
  } else if (name == "tfhd") {
    Reader r(payload);
    const auto flags = r.u32() & 0xffffffu;
    st.traf_track = r.u32();
    st.traf_has_default = false;
    if (flags & 0x1) r.skip(8);
    if (flags & 0x2) r.skip(4);
    if (flags & 0x8) {
      st.traf_default_duration = r.u32();
      st.traf_has_default = true;
    }
  } else if (name == "trun") {
    parse_trun(Reader(payload), st);
  }
}

void walk(std::span<const std::byte> region, int depth, State& st) {
  if (depth > kMaxDepth) {
    st.mark("box nesting too deep");
    return;
  }
  std::size_t at = 0;
  while (at < region.size()) {
    BoxHeader h;
    const auto hr = read_header(region, at, h);
    if (hr != HeaderResult::kOk || !printable(h.type)) {
      st.mark(fmt::format("bad box header at depth {}", depth));
      return;
    }
    const std::uint64_t avail = region.size() - at;
    const bool cut = h.size > avail;
    const auto end = cut ? region.size() : at + static_cast<std::size_t>(h.size);
    if (cut) st.mark(fmt::format("'{}' box runs past end of data", to_str(h.type)));
    if (at + h.header_size > end) return;
    const auto payload = region.subspan(at + h.header_size, end - at - h.header_size);
    const auto name = to_str(h.type);
    if (name == "trak") st.tracks.emplace_back();
    if (kContainers.contains(name)) {
      walk(payload, depth + 1, st);
    } else {
      try {
        parse_payload(h.type, payload, st);
      } catch (const ShortRead&) {
        st.mark(fmt::format("'{}' box payload too short", name));
      }
    }
    if (cut) return;
    at = end;
  }
}

ContainerSummary summarize(const State& st) {
  ContainerSummary s;
  s.brands = st.brands;
  const Track* video = nullptr;
  for (const auto& t : st.tracks) {
    if (!t.is_video) continue;
    ++s.video_track_count;
    if (!video) video = &t;
  }
  double movie = st.movie_timescale ? static_cast<double>(st.movie_duration) / st.movie_timescale : 0.0;
  if (st.movie_timescale && st.fragment_duration) {
    movie = std::max(movie, static_cast<double>(st.fragment_duration) / st.movie_timescale);
  }
  if (video) {
    s.sample_count = (video->stsz_count ? *video->stsz_count : video->stts_count) + video->frag_samples;
    double track = 0.0;
    if (video->timescale) {
      track = static_cast<double>(video->duration + video->frag_duration) / video->timescale;
    }
    s.duration = track > 0 ? track : movie;
    const auto w = video->tkhd_width ? video->tkhd_width : video->entry_width;
    const auto h = video->tkhd_height ? video->tkhd_height : video->entry_height;
    if (w && h) {
      s.width = w;
      s.height = h;
    }
  } else {
    s.duration = movie;
  }
  s.parse_depth = st.damaged ? ParseDepth::kPartial : ParseDepth::kFull;
  return s;
}

class MappedFile {
 public:
  explicit MappedFile(const fs::path& path) {
    fd_ = ::open(path.c_str(), O_RDONLY | O_CLOEXEC);
    if (fd_ < 0) throw Error(ErrorCode::kIo, "cannot open " + path.string());
    struct stat sb {};
    if (::fstat(fd_, &sb) != 0) throw Error(ErrorCode::kIo, "cannot stat " + path.string());
    size_ = static_cast<std::size_t>(sb.st_size);
    if (size_ > 0) {
      void* p = ::mmap(nullptr, size_, PROT_READ, MAP_PRIVATE, fd_, 0);
      if (p == MAP_FAILED) throw Error(ErrorCode::kIo, "cannot map " + path.string());
      data_ = static_cast<const std::byte*>(p);
    }
  }
  ~MappedFile() {
    if (data_) ::munmap(const_cast<std::byte*>(data_), size_);
    if (fd_ >= 0) ::close(fd_);
  }
  MappedFile(const MappedFile&) = delete;
  MappedFile& operator=(const MappedFile&) = delete;

  std::span<const std::byte> bytes() const { return {data_, size_}; }

 private:
  int fd_ = -1;
  const std::byte* data_ = nullptr;
  std::size_t size_ = 0;
};

}  // namespace

ContainerSummary parse_container(std::span<const std::byte> bytes) {
  if (bytes.empty()) throw ContainerError(ErrorCode::kNotAContainer, "empty file");
  BoxHeader first;
  if (read_header(bytes, 0, first) != HeaderResult::kOk || !printable(first.type) ||
      !kTopLevel.contains(to_str(first.type))) {
    throw ContainerError(ErrorCode::kNotAContainer, "no ISO base-media box structure");
  }
  State st;
  walk(bytes, 0, st);
  auto summary = summarize(st);
  if (st.damaged) throw ContainerError(ErrorCode::kTruncated, st.damage, summary);
  return summary;
}

ContainerSummary parse_container_file(const fs::path& path) {
  MappedFile file(path);
  return parse_container(file.bytes());
}

json to_json(const ContainerSummary& s) {
  json j = {{"brands", s.brands},
            {"duration", s.duration},
            {"video_track_count", s.video_track_count},
            {"sample_count", s.sample_count},
            {"parse_depth", s.parse_depth == ParseDepth::kFull ? "full" : "partial"}};
  j["width"] = s.width ? json(*s.width) : json(nullptr);
  j["height"] = s.height ? json(*s.height) : json(nullptr);
  return j;
}

ContainerSummary summary_from_json(const json& j) {
  ContainerSummary s;
  s.brands = j.at("brands").get<std::vector<std::string>>();
  s.duration = j.at("duration").get<double>();
  s.video_track_count = j.at("video_track_count").get<int>();
  s.sample_count = j.at("sample_count").get<std::uint64_t>();
  s.parse_depth = j.at("parse_depth").get<std::string>() == "full" ? ParseDepth::kFull : ParseDepth::kPartial;
  if (!j.at("width").is_null()) s.width = j["width"].get<std::uint32_t>();
  if (!j.at("height").is_null()) s.height = j["height"].get<std::uint32_t>();
  return s;
}

void PlayabilityPolicy::validate() const {
  if (!(min_duration > 0) || !(min_duration <= max_duration)) {
    throw Error(ErrorCode::kConfig, "playability: need 0 < min_duration <= max_duration");
  }
  if (min_samples < 1) throw Error(ErrorCode::kConfig, "playability: min_samples must be >= 1");
  if (pixel_probe == ProbeMode::kExternal && probe_command.empty()) {
    throw Error(ErrorCode::kConfig, "playability: external probe needs probe_command");
  }
}

PlayabilityPolicy PlayabilityPolicy::prompt_conformance() {
  PlayabilityPolicy p;
  p.min_duration = 10.0;
  p.max_duration = 20.0;
  p.min_samples = 300;
  p.require_dims = true;
  return p;
}

PlayabilityPolicy playability_from_json(const json& j) {
  PlayabilityPolicy p = j.value("preset", std::string{}) == "prompt_conformance"
                            ? PlayabilityPolicy::prompt_conformance()
                            : PlayabilityPolicy{};
  try {
    p.min_duration = j.value("min_duration_s", p.min_duration);
    p.max_duration = j.value("max_duration_s", p.max_duration);
    p.min_samples = j.value("min_samples", p.min_samples);
    p.require_dims = j.value("require_dims", p.require_dims);
    if (j.contains("probe_command")) {
      p.probe_command = j["probe_command"].get<std::vector<std::string>>();
      p.pixel_probe = ProbeMode::kExternal;
    }
    if (j.value("pixel_probe", std::string("off")) == "off" && !j.contains("probe_command")) {
      p.pixel_probe = ProbeMode::kOff;
    }
    if (j.contains("probe_limits")) p.probe_limits = limits_from_json(j["probe_limits"]);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfig, std::string("playability: ") + e.what());
  }
  p.validate();
  return p;
}

json to_json(const PlayabilityPolicy& p) {
  json j = {{"min_duration_s", p.min_duration},
            {"max_duration_s", p.max_duration},
            {"min_samples", p.min_samples},
            {"require_dims", p.require_dims},
            {"pixel_probe", p.pixel_probe == ProbeMode::kOff ? "off" : "external"}};
  if (p.pixel_probe == ProbeMode::kExternal) j["probe_command"] = p.probe_command;
  return j;
}

namespace {

// Frame count reported by the probe, or nullopt when the contract is broken.
std::optional<long long> run_probe(const PlayabilityPolicy& policy, const fs::path& input,
                                   std::string& why) {
  ProcessSpec spec;
  try {
    spec.argv = expand_command(policy.probe_command, {{"input", input.string()}});
  } catch (const Error& e) {
    why = e.what();
    return std::nullopt;
  }
  spec.cwd = input.parent_path();
  spec.limits = policy.probe_limits;
  const auto r = run_process(spec);
  if (r.end != ProcessResult::End::kExited || r.exit_code != 0) {
    why = r.launch_error.empty() ? fmt::format("probe exited abnormally (code {}, signal {})",
                                               r.exit_code, r.signal)
                                 : r.launch_error;
    return std::nullopt;
  }
  std::string_view out = r.out;
  while (!out.empty() && std::isspace(static_cast<unsigned char>(out.back()))) out.remove_suffix(1);
  const auto nl = out.find_last_of('\n');
  auto last = nl == std::string_view::npos ? out : out.substr(nl + 1);
  while (!last.empty() && std::isspace(static_cast<unsigned char>(last.front()))) last.remove_prefix(1);
  long long frames = 0;
  auto [p, ec] = std::from_chars(last.data(), last.data() + last.size(), frames);
  if (ec != std::errc{} || p != last.data() + last.size()) {
    why = "probe did not report a frame count";
    return std::nullopt;
  }
  return frames;
}

}  // namespace

PlayabilityVerdict assess_playability(const ContainerSummary& summary,
                                      const PlayabilityPolicy& policy,
                                      const std::optional<fs::path>& artifact) {
  PlayabilityVerdict v;
  if (summary.parse_depth != ParseDepth::kFull) v.reasons.emplace_back(reason::kTruncated);
  if (summary.video_track_count < 1) v.reasons.emplace_back(reason::kVideoTrack);
  if (!(summary.duration >= policy.min_duration && summary.duration <= policy.max_duration)) {
    v.reasons.emplace_back(reason::kDuration);
  }
  if (summary.sample_count < policy.min_samples) v.reasons.emplace_back(reason::kSamples);
  if (policy.require_dims && (!summary.width || !summary.height)) {
    v.reasons.emplace_back(reason::kDimensions);
  }
  if (policy.pixel_probe == ProbeMode::kExternal && v.reasons.empty()) {
    std::string why;
    const auto frames = artifact ? run_probe(policy, *artifact, why) : std::nullopt;
    if (!frames || *frames < 1) v.reasons.emplace_back(reason::kProbe);
  }
  v.playable = v.reasons.empty();
  return v;
}

json to_json(const StageFlags& f) {
  return {{"executable", f.executable()},
          {"rendered", f.rendered()},
          {"playable", f.playable()},
          {"accurate", f.accurate()}};
}

StageFlags stage_flags_from_json(const json& j) {
  const bool e = j.at("executable").get<bool>(), r = j.at("rendered").get<bool>(),
             p = j.at("playable").get<bool>(), a = j.at("accurate").get<bool>();
  auto f = StageFlags::from_gates(e, r, p, a);
  if (f.rendered() != r || f.playable() != p || f.accurate() != a) {
    throw Error(ErrorCode::kLedgerCorrupt, "stage flags violate the gate ladder");
  }
  return f;
}

StageFlags stage_flags(const ExecutionOutcome& outcome,
                       const std::optional<ContainerSummary>& container,
                       std::optional<bool> playable, std::optional<bool> accurate) {
  const bool executable = classify_outcome(outcome);
  const bool rendered = outcome.artifact.has_value() && container.has_value();
  return StageFlags::from_gates(executable, rendered, playable.value_or(false),
                                accurate.value_or(false));
}

}  // namespace simjudge
