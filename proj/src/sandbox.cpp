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

#include "simjudge/sandbox.hpp"

#include <fcntl.h>
#include <poll.h>
#include <sched.h>
#include <signal.h>
#include <sys/resource.h>
#include <sys/stat.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <cerrno>
#include <cstring>
#include <fstream>

#include <fmt/format.h>

#include "simjudge/error.hpp"
#include "simjudge/hash.hpp"

extern char** environ;

namespace simjudge {

using nlohmann::json;
namespace fs = std::filesystem;

void ExecutionLimits::validate() const {
  if (wall_timeout.count() <= 0 || cpu_timeout.count() <= 0 || memory_cap == 0 ||
      output_cap == 0 || workdir_quota == 0) {
    throw Error(ErrorCode::kConfig, "sandbox limits must all be > 0");
  }
}

ExecutionLimits limits_from_json(const json& j) {
  ExecutionLimits l;
  try {
    if (j.contains("wall_timeout_s")) l.wall_timeout = Millis(static_cast<std::int64_t>(j["wall_timeout_s"].get<double>() * 1000));
    if (j.contains("cpu_timeout_s")) l.cpu_timeout = Millis(static_cast<std::int64_t>(j["cpu_timeout_s"].get<double>() * 1000));
    l.memory_cap = j.value("memory_cap_bytes", l.memory_cap);
    l.output_cap = j.value("output_cap_bytes", l.output_cap);
    l.workdir_quota = j.value("workdir_quota_bytes", l.workdir_quota);
    if (j.contains("network")) {
      const auto n = j["network"].get<std::string>();
      if (n == "allowed") {
        l.network = NetworkPolicy::kAllowed;
      } else if (n == "denied") {
        l.network = NetworkPolicy::kDenied;
      } else {
        throw Error(ErrorCode::kConfig, "sandbox.network must be 'allowed' or 'denied'");
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfig, std::string("sandbox limits: ") + e.what());
  }
  l.validate();
  return l;
}

json to_json(const ExecutionLimits& l) {
  return {{"wall_timeout_s", l.wall_timeout.count() / 1000.0},
          {"cpu_timeout_s", l.cpu_timeout.count() / 1000.0},
          {"memory_cap_bytes", l.memory_cap},
          {"output_cap_bytes", l.output_cap},
          {"workdir_quota_bytes", l.workdir_quota},
          {"network", l.network == NetworkPolicy::kAllowed ? "allowed" : "denied"}};
}

std::string_view to_string(ExecStatus s) noexcept {
  switch (s) {
    case ExecStatus::kSuccess: return "success";
    case ExecStatus::kRuntimeError: return "runtime_error";
    case ExecStatus::kTimeout: return "timeout";
    case ExecStatus::kResourceKill: return "resource_kill";
    case ExecStatus::kLaunchFailure: return "launch_failure";
  }
  return "launch_failure";
}

std::optional<ExecStatus> parse_exec_status(std::string_view s) {
  for (auto st : {ExecStatus::kSuccess, ExecStatus::kRuntimeError, ExecStatus::kTimeout,
                  ExecStatus::kResourceKill, ExecStatus::kLaunchFailure}) {
    if (to_string(st) == s) return st;
  }
  return std::nullopt;
}

std::optional<ArtifactRef> make_artifact_ref(const fs::path& path) {
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) return std::nullopt;
  const auto size = fs::file_size(path, ec);
  if (ec || size == 0) return std::nullopt;
  return ArtifactRef{path, size, sha256_file(path)};
}

json to_json(const ExecutionOutcome& o) {
  json j = {{"status", to_string(o.status)},
            {"wall_time_ms", o.wall_time.count()},
            {"stdout", o.captured_stdout},
            {"stderr", o.captured_stderr},
            {"detail", o.detail},
            {"network_isolated", o.network_isolated}};
  j["exit_code"] = o.exit_code ? json(*o.exit_code) : json(nullptr);
  j["signal"] = o.signal ? json(*o.signal) : json(nullptr);
  if (o.artifact) {
    j["artifact"] = {{"path", o.artifact->path.string()},
                     {"size", o.artifact->size},
                     {"content_hash", o.artifact->content_hash}};
  } else {
    j["artifact"] = nullptr;
  }
  return j;
}

ExecutionOutcome outcome_from_json(const json& j) {
  ExecutionOutcome o;
  auto st = parse_exec_status(j.at("status").get<std::string>());
  if (!st) throw Error(ErrorCode::kLedgerCorrupt, "unknown execution status");
  o.status = *st;
  o.wall_time = Millis(j.at("wall_time_ms").get<std::int64_t>());
  o.captured_stdout = j.value("stdout", std::string{});
  o.captured_stderr = j.value("stderr", std::string{});
  o.detail = j.value("detail", std::string{});
  o.network_isolated = j.value("network_isolated", false);
  if (!j.at("exit_code").is_null()) o.exit_code = j["exit_code"].get<int>();
  if (j.contains("signal") && !j["signal"].is_null()) o.signal = j["signal"].get<int>();
  if (!j.at("artifact").is_null()) {
    const auto& a = j["artifact"];
    o.artifact = ArtifactRef{a.at("path").get<std::string>(), a.at("size").get<std::uint64_t>(),
                             a.at("content_hash").get<std::string>()};
  }
  return o;
}

bool classify_outcome(const ExecutionOutcome& outcome) noexcept {
  return outcome.status == ExecStatus::kSuccess;
}

SandboxConfig sandbox_from_json(const json& j) {
  SandboxConfig c;
  try {
    if (j.contains("interpreter")) c.interpreter = j["interpreter"].get<std::vector<std::string>>();
    c.program_filename = j.value("program_filename", c.program_filename);
    if (j.contains("limits")) c.limits = limits_from_json(j["limits"]);
    if (j.contains("env")) c.extra_env = j["env"].get<std::map<std::string, std::string>>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfig, std::string("sandbox: ") + e.what());
  }
  if (c.interpreter.empty()) throw Error(ErrorCode::kConfig, "sandbox.interpreter is empty");
  return c;
}

json to_json(const SandboxConfig& c) {
  return {{"interpreter", c.interpreter},
          {"program_filename", c.program_filename},
          {"limits", to_json(c.limits)},
          {"env", c.extra_env}};
}

std::vector<std::string> expand_command(const std::vector<std::string>& tmpl,
                                        const std::map<std::string, std::string, std::less<>>& values) {
  std::vector<std::string> out;
  out.reserve(tmpl.size());
  for (const auto& arg : tmpl) out.push_back(render_template(arg, values));
  return out;
}

namespace {

class Fd {
 public:
  Fd() = default;
  explicit Fd(int fd) : fd_(fd) {}
  Fd(Fd&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Fd& operator=(Fd&& o) noexcept {
    if (this != &o) {
      reset();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  ~Fd() { reset(); }
  int get() const { return fd_; }
  void reset() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

 private:
  int fd_ = -1;
};

struct Pipe {
  Fd read, write;
};

Pipe make_pipe() {
  int fds[2];
  if (::pipe2(fds, O_CLOEXEC) != 0) {
    throw Error(ErrorCode::kInternal, std::string("pipe2: ") + std::strerror(errno));
  }
  return {Fd(fds[0]), Fd(fds[1])};
}

// Bounded capture; bytes beyond the cap are counted and dropped.
struct Capture {
  std::size_t cap;
  std::string data;
  std::size_t dropped = 0;

  void feed(const char* p, std::size_t n) {
    const auto room = cap > data.size() ? cap - data.size() : 0;
    const auto take = std::min(room, n);
    data.append(p, take);
    dropped += n - take;
  }
  std::string finish() {
    if (dropped > 0) data += fmt::format("\n[truncated {} bytes]", dropped);
    return std::move(data);
  }
};

std::vector<std::string> build_env(const std::map<std::string, std::string>& extra,
                                   const fs::path& home, bool proxy_block) {
  std::map<std::string, std::string> env;
  const char* path = std::getenv("PATH");
  env["PATH"] = path ? path : "/usr/local/bin:/usr/bin:/bin";
  env["HOME"] = home.string();
  env["TMPDIR"] = home.string();
  env["LANG"] = "C.UTF-8";
  env["LC_ALL"] = "C.UTF-8";
  env["PYTHONHASHSEED"] = "0";
  env["PYTHONDONTWRITEBYTECODE"] = "1";
  env["PYTHONUNBUFFERED"] = "1";
  env["MPLBACKEND"] = "Agg";
  env["OMP_NUM_THREADS"] = "1";
  if (proxy_block) {
    for (const char* k : {"http_proxy", "https_proxy", "HTTP_PROXY", "HTTPS_PROXY", "ALL_PROXY"}) {
      env[k] = "http://127.0.0.1:9";
    }
    env["PIP_NO_INDEX"] = "1";
  }
  for (const auto& [k, v] : extra) env[k] = v;
  std::vector<std::string> out;
  for (const auto& [k, v] : env) out.push_back(k + "=" + v);
  return out;
}

std::vector<char*> c_array(std::vector<std::string>& v) {
  std::vector<char*> out;
  for (auto& s : v) out.push_back(s.data());
  out.push_back(nullptr);
  return out;
}

rlim_t ceil_seconds(Millis m) { return static_cast<rlim_t>((m.count() + 999) / 1000); }

}  // namespace

ProcessResult run_process(const ProcessSpec& spec) {
  ProcessResult result;
  if (spec.argv.empty()) {
    result.launch_error = "empty argv";
    return result;
  }
  const auto& limits = spec.limits;
  const bool deny_net = limits.network == NetworkPolicy::kDenied;

  auto argv_store = spec.argv;
  auto argv = c_array(argv_store);
  auto env_plain = build_env(spec.env, spec.cwd, false);
  auto env_blocked = build_env(spec.env, spec.cwd, true);
  auto envp_plain = c_array(env_plain);
  auto envp_blocked = c_array(env_blocked);
  const std::string cwd = spec.cwd.string();

  Pipe out = make_pipe();
  Pipe err = make_pipe();
  Pipe status = make_pipe();

  const auto start = std::chrono::steady_clock::now();
  const pid_t pid = ::fork();
  if (pid < 0) {
    result.launch_error = std::string("fork: ") + std::strerror(errno);
    return result;
  }
  if (pid == 0) {
    // Child: async-signal-safe calls only.
    ::setsid();
    const int devnull = ::open("/dev/null", O_RDONLY);
    if (devnull >= 0) ::dup2(devnull, STDIN_FILENO);
    ::dup2(out.write.get(), STDOUT_FILENO);
    ::dup2(err.write.get(), STDERR_FILENO);
    char tag = 'n';
    if (deny_net && (::unshare(CLONE_NEWNET) == 0 || ::unshare(CLONE_NEWUSER | CLONE_NEWNET) == 0)) {
      tag = 'N';
    }
    [[maybe_unused]] auto w0 = ::write(status.write.get(), &tag, 1);
    auto fail = [&](char code) {
      const int e = errno;
      char msg[1 + sizeof(int)];
      msg[0] = code;
      std::memcpy(msg + 1, &e, sizeof(int));
      [[maybe_unused]] auto w = ::write(status.write.get(), msg, sizeof(msg));
      ::_exit(127);
    };
    if (!cwd.empty() && ::chdir(cwd.c_str()) != 0) fail('C');
    struct rlimit rl;
    rl.rlim_cur = ceil_seconds(limits.cpu_timeout);
    rl.rlim_max = rl.rlim_cur + 1;
    ::setrlimit(RLIMIT_CPU, &rl);
    rl.rlim_cur = rl.rlim_max = static_cast<rlim_t>(limits.memory_cap);
    ::setrlimit(RLIMIT_AS, &rl);
    rl.rlim_cur = rl.rlim_max = static_cast<rlim_t>(limits.workdir_quota);
    ::setrlimit(RLIMIT_FSIZE, &rl);
    rl.rlim_cur = rl.rlim_max = 0;
    ::setrlimit(RLIMIT_CORE, &rl);
    char** envp = (deny_net && tag != 'N') ? envp_blocked.data() : envp_plain.data();
    ::execvpe(argv[0], argv.data(), envp);
    fail('E');
  }

  result.process_group = pid;
  out.write.reset();
  err.write.reset();
  status.write.reset();

  // Child setup report: one tag byte, then (on failure) code + errno.
  {
    std::array<char, 1 + 1 + sizeof(int)> buf{};
    std::size_t got = 0;
    for (;;) {
      const auto n = ::read(status.read.get(), buf.data() + got, buf.size() - got);
      if (n > 0) {
        got += static_cast<std::size_t>(n);
        if (got == buf.size()) break;
        continue;
      }
      if (n < 0 && errno == EINTR) continue;
      break;
    }
    result.network_isolated = got >= 1 && buf[0] == 'N';
    if (got >= 2) {
      int e = 0;
      std::memcpy(&e, buf.data() + 2, sizeof(int));
      result.launch_error = fmt::format("{}: {}", buf[1] == 'C' ? "chdir" : "exec",
                                        std::strerror(e));
    }
  }

  Capture cap_out{limits.output_cap, {}};
  Capture cap_err{limits.output_cap, {}};
  const auto deadline = start + limits.wall_timeout;
  bool out_open = true, err_open = true, exited = false, timed_out = false;
  int wstatus = 0;
  std::optional<std::chrono::steady_clock::time_point> drain_deadline;
  std::array<char, 65536> buf{};

  while (out_open || err_open || !exited) {
    if (!exited) {
      const pid_t r = ::waitpid(pid, &wstatus, WNOHANG);
      if (r == pid) {
        exited = true;
        // Take down anything the program left running in its group.
        ::kill(-pid, SIGKILL);
        drain_deadline = std::chrono::steady_clock::now() + Millis(500);
      }
    }
    const auto now = std::chrono::steady_clock::now();
    if (!exited && now >= deadline) {
      timed_out = true;
      ::kill(-pid, SIGKILL);
      ::waitpid(pid, &wstatus, 0);
      exited = true;
      drain_deadline = std::chrono::steady_clock::now() + Millis(500);
    }
    if (drain_deadline && now >= *drain_deadline) break;
    if (!out_open && !err_open) {
      if (!exited) ::usleep(5000);
      continue;
    }
    std::array<pollfd, 2> fds{};
    nfds_t nfds = 0;
    if (out_open) fds[nfds++] = {out.read.get(), POLLIN, 0};
    if (err_open) fds[nfds++] = {err.read.get(), POLLIN, 0};
    const int rc = ::poll(fds.data(), nfds, 20);
    if (rc <= 0) continue;
    for (nfds_t i = 0; i < nfds; ++i) {
      if (!(fds[i].revents & (POLLIN | POLLHUP | POLLERR))) continue;
      const auto n = ::read(fds[i].fd, buf.data(), buf.size());
      const bool is_out = fds[i].fd == out.read.get();
      if (n > 0) {
        (is_out ? cap_out : cap_err).feed(buf.data(), static_cast<std::size_t>(n));
      } else if (n == 0 || (errno != EINTR && errno != EAGAIN)) {
        (is_out ? out_open : err_open) = false;
      }
    }
  }
  ::kill(-pid, SIGKILL);

  result.wall_time = std::chrono::duration_cast<Millis>(std::chrono::steady_clock::now() - start);
  result.out = cap_out.finish();
  result.err = cap_err.finish();
  if (!result.launch_error.empty()) {
    result.end = ProcessResult::End::kLaunchFailed;
  } else if (timed_out) {
    result.end = ProcessResult::End::kWallTimeout;
  } else if (WIFEXITED(wstatus)) {
    result.end = ProcessResult::End::kExited;
    result.exit_code = WEXITSTATUS(wstatus);
  } else if (WIFSIGNALED(wstatus)) {
    result.end = ProcessResult::End::kSignaled;
    result.signal = WTERMSIG(wstatus);
  }
  return result;
}

namespace {

bool safe_filename(std::string_view name) {
  if (name.empty() || name == "." || name == ".." || name.size() > 255) return false;
  for (char c : name) {
    if (c == '/' || c == '\0' || c == '\\') return false;
  }
  return true;
}

}  // namespace

ExecutionOutcome execute_program(const ExtractedProgram& program, const SandboxConfig& config,
                                 const fs::path& scratch_dir, std::string_view output_name) {
  if (!safe_filename(output_name)) {
    throw Error(ErrorCode::kInvalidArgument, fmt::format("unsafe output name '{}'", output_name));
  }
  config.limits.validate();

  ExecutionOutcome outcome;
  const auto dir = fs::absolute(scratch_dir);
  std::error_code ec;
  fs::remove_all(dir, ec);
  fs::create_directories(dir, ec);
  if (ec) {
    outcome.status = ExecStatus::kLaunchFailure;
    outcome.detail = "cannot create scratch directory: " + ec.message();
    return outcome;
  }
  {
    std::ofstream src(dir / config.program_filename, std::ios::binary);
    src << program.source;
    if (!src) {
      outcome.status = ExecStatus::kLaunchFailure;
      outcome.detail = "cannot write program file";
      return outcome;
    }
  }
  const auto output_path = dir / std::string(output_name);

  ProcessSpec spec;
  spec.argv = config.interpreter;
  spec.argv.push_back(config.program_filename);
  spec.argv.push_back(output_path.string());
  spec.cwd = dir;
  spec.env = config.extra_env;
  spec.limits = config.limits;
  const auto r = run_process(spec);

  outcome.wall_time = r.wall_time;
  outcome.captured_stdout = r.out;
  outcome.captured_stderr = r.err;
  outcome.network_isolated = r.network_isolated;
  switch (r.end) {
    case ProcessResult::End::kLaunchFailed:
      outcome.status = ExecStatus::kLaunchFailure;
      outcome.detail = r.launch_error;
      break;
    case ProcessResult::End::kWallTimeout:
      outcome.status = ExecStatus::kTimeout;
      outcome.detail = "wall timeout";
      break;
    case ProcessResult::End::kExited:
      outcome.exit_code = r.exit_code;
      outcome.status = r.exit_code == 0 ? ExecStatus::kSuccess : ExecStatus::kRuntimeError;
      break;
    case ProcessResult::End::kSignaled:
      outcome.signal = r.signal;
      if (r.signal == SIGXCPU || r.signal == SIGXFSZ || r.signal == SIGKILL) {
        outcome.status = ExecStatus::kResourceKill;
        outcome.detail = fmt::format("killed by signal {} (resource limit)", r.signal);
      } else {
        outcome.status = ExecStatus::kRuntimeError;
        outcome.detail = fmt::format("killed by signal {}", r.signal);
      }
      break;
  }
  outcome.artifact = make_artifact_ref(output_path);
  return outcome;
}

}  // namespace simjudge
