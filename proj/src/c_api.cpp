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

#include "simjudge/simjudge.h"

#include <cstring>
#include <exception>
#include <memory>
#include <new>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "simjudge/corpus.hpp"
#include "simjudge/error.hpp"
#include "simjudge/metricsuite.hpp"
#include "simjudge/pipeline.hpp"
#include "simjudge/promptkit.hpp"
#include "simjudge/rewardlab.hpp"
#include "simjudge/service.hpp"
#include "simjudge/videocheck.hpp"

struct sj_corpus {
  simjudge::Corpus corpus;
};

struct sj_report {
  simjudge::BenchmarkReport report;
};

struct sj_service {
  std::unique_ptr<simjudge::RewardService> service;
  int port = 0;
};

namespace {

using simjudge::Error;
using simjudge::ErrorCode;
using nlohmann::json;

thread_local std::string g_last_error;

sj_status fail(sj_status status, std::string message) {
  g_last_error = std::move(message);
  return status;
}

// Runs `body`, mapping exceptions to status codes.
template <class F>
sj_status guarded(F&& body) {
  try {
    g_last_error.clear();
    body();
    return SJ_OK;
  } catch (const Error& e) {
    return fail(static_cast<sj_status>(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(SJ_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(SJ_INTERNAL, e.what());
  }
}

char* dup_string(const std::string& s) {
  auto* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.data(), s.size());
  out[s.size()] = '\0';
  return out;
}

void require(const void* p, const char* what) {
  if (!p) throw Error(ErrorCode::kInvalidArgument, std::string(what) + " must not be NULL");
}

}  // namespace

extern "C" {

const char* sj_version(void) { return "0.1.0"; }

const char* sj_status_name(sj_status status) {
  static thread_local std::string name;
  name = std::string(simjudge::to_string(static_cast<ErrorCode>(status)));
  return name.c_str();
}

const char* sj_last_error(void) { return g_last_error.c_str(); }

void sj_string_free(char* s) { std::free(s); }

sj_status sj_corpus_load(const char* path, int strict, sj_corpus** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    auto c = std::make_unique<sj_corpus>();
    c->corpus = simjudge::load_corpus(path, strict ? simjudge::Strictness::kStrict
                                                   : simjudge::Strictness::kLenient);
    *out = c.release();
  });
}

size_t sj_corpus_size(const sj_corpus* corpus) { return corpus ? corpus->corpus.size() : 0; }

size_t sj_corpus_rejection_count(const sj_corpus* corpus) {
  return corpus ? corpus->corpus.rejections().size() : 0;
}

sj_status sj_corpus_rejections_json(const sj_corpus* corpus, char** out) {
  return guarded([&] {
    require(corpus, "corpus");
    require(out, "out");
    json arr = json::array();
    for (const auto& r : corpus->corpus.rejections()) {
      arr.push_back({{"line", r.line},
                     {"code", simjudge::to_string(r.code)},
                     {"field", r.field},
                     {"message", r.message}});
    }
    *out = dup_string(arr.dump(-1, ' ', false, json::error_handler_t::replace));
  });
}

sj_status sj_corpus_stats_render(const sj_corpus* corpus, char** out) {
  return guarded([&] {
    require(corpus, "corpus");
    require(out, "out");
    *out = dup_string(simjudge::corpus_stats(corpus->corpus).render());
  });
}

void sj_corpus_free(sj_corpus* corpus) { delete corpus; }

sj_status sj_reward(const char* kind, const int* labels, size_t m, int gated, double* out) {
  return guarded([&] {
    require(kind, "kind");
    require(out, "out");
    if (m > 0) require(labels, "labels");
    auto k = simjudge::parse_reward_kind(kind);
    if (!k) throw Error(ErrorCode::kInvalidArgument, std::string("unknown reward kind '") + kind + "'");
    std::vector<bool> v;
    v.reserve(m);
    for (size_t i = 0; i < m; ++i) v.push_back(labels[i] != 0);
    *out = simjudge::compute_reward(*k, v, gated != 0).value;
  });
}

sj_status sj_group_advantages(const double* rewards, size_t k, double epsilon, double* out) {
  return guarded([&] {
    require(rewards, "rewards");
    require(out, "out");
    simjudge::RolloutGroup g{std::vector<double>(rewards, rewards + k), epsilon};
    const auto adv = simjudge::group_advantages(g);
    std::copy(adv.values.begin(), adv.values.end(), out);
  });
}

sj_status sj_clipped_surrogate(const double* ratios, const size_t* lengths, const double* advantages,
                               size_t n_sequences, double clip_low, double clip_high, double* out) {
  return guarded([&] {
    require(out, "out");
    if (n_sequences > 0) {
      require(ratios, "ratios");
      require(lengths, "lengths");
      require(advantages, "advantages");
    }
    simjudge::SurrogateBatch batch;
    batch.clip_low = clip_low;
    batch.clip_high = clip_high;
    size_t offset = 0;
    for (size_t i = 0; i < n_sequences; ++i) {
      simjudge::SequenceRatios seq;
      seq.ratios.assign(ratios + offset, ratios + offset + lengths[i]);
      seq.advantage = advantages[i];
      offset += lengths[i];
      batch.sequences.push_back(std::move(seq));
    }
    *out = simjudge::clipped_surrogate(batch);
  });
}

sj_status sj_agreement_rate(uint64_t tt, uint64_t ff, uint64_t tf, uint64_t ft, double* out) {
  return guarded([&] {
    require(out, "out");
    *out = simjudge::agreement_rate({tt, ff, tf, ft});
  });
}

sj_status sj_extract_code(const char* response, char** out) {
  return guarded([&] {
    require(response, "response");
    require(out, "out");
    *out = dup_string(simjudge::extract_code_block(response).source);
  });
}

sj_status sj_video_inspect(const char* path, char** out_json) {
  return guarded([&] {
    require(path, "path");
    require(out_json, "out_json");
    json doc;
    simjudge::ContainerSummary summary;
    try {
      summary = simjudge::parse_container_file(path);
    } catch (const simjudge::ContainerError& e) {
      if (e.code() != ErrorCode::kTruncated) throw;
      summary = e.partial();
    }
    const auto verdict = simjudge::assess_playability(summary, simjudge::PlayabilityPolicy{});
    doc["container"] = simjudge::to_json(summary);
    doc["playable"] = verdict.playable;
    doc["reasons"] = verdict.reasons;
    *out_json = dup_string(doc.dump());
  });
}

sj_status sj_run_evaluate(const char* config_path, sj_report** out) {
  return guarded([&] {
    require(config_path, "config_path");
    require(out, "out");
    auto r = std::make_unique<sj_report>();
    r->report = simjudge::run_evaluation(simjudge::load_run_config(config_path));
    *out = r.release();
  });
}

sj_status sj_run_resume(const char* ledger_root, const char* run_id, sj_report** out) {
  return guarded([&] {
    require(ledger_root, "ledger_root");
    require(run_id, "run_id");
    require(out, "out");
    auto r = std::make_unique<sj_report>();
    r->report = simjudge::resume_run(ledger_root, run_id);
    *out = r.release();
  });
}

sj_status sj_report_load(const char* ledger_root, const char* run_id, sj_report** out) {
  return guarded([&] {
    require(ledger_root, "ledger_root");
    require(run_id, "run_id");
    require(out, "out");
    auto r = std::make_unique<sj_report>();
    r->report = simjudge::load_run_report(ledger_root, run_id);
    *out = r.release();
  });
}

sj_status sj_report_render(const sj_report* report, const char* format, char** out) {
  return guarded([&] {
    require(report, "report");
    require(format, "format");
    require(out, "out");
    if (std::string_view(format) == "json") {
      *out = dup_string(simjudge::render_metrics(report->report));
      return;
    }
    auto f = simjudge::parse_report_format(format);
    if (!f) throw Error(ErrorCode::kInvalidArgument, std::string("unknown report format '") + format + "'");
    report->report.check_ladder();
    *out = dup_string(simjudge::emit_report(report->report, *f));
  });
}

void sj_report_free(sj_report* report) { delete report; }

sj_status sj_service_start(const char* config_path, const char* host, int port, sj_service** out) {
  return guarded([&] {
    require(config_path, "config_path");
    require(out, "out");
    auto s = std::make_unique<sj_service>();
    s->service = std::make_unique<simjudge::RewardService>(simjudge::load_run_config(config_path));
    s->port = s->service->start(host ? host : "127.0.0.1", port);
    *out = s.release();
  });
}

int sj_service_port(const sj_service* service) { return service ? service->port : -1; }

sj_status sj_service_wait(sj_service* service) {
  return guarded([&] {
    require(service, "service");
    service->service->wait();
  });
}

void sj_service_stop(sj_service* service) {
  if (service && service->service) service->service->stop();
}

void sj_service_free(sj_service* service) {
  if (!service) return;
  sj_service_stop(service);
  delete service;
}

}  // extern "C"
