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

// Command-line front end. Links only the C API.
#include <pthread.h>
#include <signal.h>

#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "simjudge/simjudge.h"

namespace {

int report_failure(sj_status status) {
  std::fprintf(stderr, "error [%s]: %s\n", sj_status_name(status), sj_last_error());
  return status == SJ_OK ? 0 : 10 + static_cast<int>(status);
}

int print_owned(char* text) {
  std::fputs(text, stdout);
  sj_string_free(text);
  return 0;
}

int corpus_validate(const std::string& path, bool strict) {
  sj_corpus* corpus = nullptr;
  if (auto st = sj_corpus_load(path.c_str(), strict ? 1 : 0, &corpus); st != SJ_OK) return report_failure(st);
  const auto rejected = sj_corpus_rejection_count(corpus);
  char* rejections = nullptr;
  if (rejected > 0 && sj_corpus_rejections_json(corpus, &rejections) == SJ_OK) {
    std::fprintf(stderr, "%s\n", rejections);
    sj_string_free(rejections);
  }
  std::printf("%zu scenarios accepted, %zu rejected\n", sj_corpus_size(corpus), rejected);
  sj_corpus_free(corpus);
  return rejected == 0 ? 0 : 1;
}

int corpus_stats(const std::string& path) {
  sj_corpus* corpus = nullptr;
  if (auto st = sj_corpus_load(path.c_str(), 0, &corpus); st != SJ_OK) return report_failure(st);
  char* text = nullptr;
  const auto st = sj_corpus_stats_render(corpus, &text);
  sj_corpus_free(corpus);
  if (st != SJ_OK) return report_failure(st);
  return print_owned(text);
}

int render(sj_report* report, const std::string& format) {
  char* text = nullptr;
  const auto st = sj_report_render(report, format.c_str(), &text);
  sj_report_free(report);
  if (st != SJ_OK) return report_failure(st);
  return print_owned(text);
}

int serve(const std::string& config, const std::string& host, int port) {
  // Block termination signals before any thread starts, then wait for them here.
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  sj_service* service = nullptr;
  if (auto st = sj_service_start(config.c_str(), host.c_str(), port, &service); st != SJ_OK) {
    return report_failure(st);
  }
  std::printf("listening on %s:%d\n", host.c_str(), sj_service_port(service));
  std::fflush(stdout);
  int sig = 0;
  sigwait(&set, &sig);
  sj_service_free(service);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulation-video code generation benchmark and reward service"};
  app.require_subcommand(1);
  int rc = 0;

  auto* corpus = app.add_subcommand("corpus", "Inspect a scenario corpus");
  corpus->require_subcommand(1);
  std::string corpus_path;
  bool strict = false;
  auto* validate = corpus->add_subcommand("validate", "Check every record against the schema");
  validate->add_option("path", corpus_path, "Corpus file (JSON Lines)")->required();
  validate->add_flag("--strict", strict, "Stop at the first bad record");
  validate->callback([&] { rc = corpus_validate(corpus_path, strict); });
  auto* stats = corpus->add_subcommand("stats", "Domain, concept and length statistics");
  stats->add_option("path", corpus_path, "Corpus file (JSON Lines)")->required();
  stats->callback([&] { rc = corpus_stats(corpus_path); });

  std::string config;
  std::string format = "table";
  auto* evaluate = app.add_subcommand("evaluate", "Run (or continue) an evaluation");
  evaluate->add_option("--config", config, "Run config (JSON)")->required();
  evaluate->add_option("--format", format, "Summary format: table, md, csv or json");
  evaluate->callback([&] {
    sj_report* report = nullptr;
    auto st = sj_run_evaluate(config.c_str(), &report);
    rc = st == SJ_OK ? render(report, format) : report_failure(st);
  });

  std::string run_id;
  std::string root = "runs";
  auto* resume = app.add_subcommand("resume", "Continue an interrupted run");
  resume->add_option("run_id", run_id, "Run identifier")->required();
  resume->add_option("--root", root, "Ledger root directory");
  resume->add_option("--format", format, "Summary format: table, md, csv or json");
  resume->callback([&] {
    sj_report* report = nullptr;
    auto st = sj_run_resume(root.c_str(), run_id.c_str(), &report);
    rc = st == SJ_OK ? render(report, format) : report_failure(st);
  });

  auto* report = app.add_subcommand("report", "Render the metrics of a finished run");
  report->add_option("run_id", run_id, "Run identifier")->required();
  report->add_option("--root", root, "Ledger root directory");
  report->add_option("--format", format, "table, md, csv or json");
  report->callback([&] {
    sj_report* r = nullptr;
    auto st = sj_report_load(root.c_str(), run_id.c_str(), &r);
    rc = st == SJ_OK ? render(r, format) : report_failure(st);
  });

  std::string host = "127.0.0.1";
  int port = 8080;
  auto* srv = app.add_subcommand("serve", "Serve rewards over HTTP");
  srv->add_option("--config", config, "Run config (JSON)")->required();
  srv->add_option("--host", host, "Bind address");
  srv->add_option("--port", port, "Port (0 picks a free one)");
  srv->callback([&] { rc = serve(config, host, port); });

  CLI11_PARSE(app, argc, argv);
  return rc;
}
