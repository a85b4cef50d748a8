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

/* Stable C interface to simjudge. Every function returning sj_status stores a
 * message for failures, readable through sj_last_error() on the same thread.
 * Strings returned through char** are owned by the caller and released with
 * sj_string_free(). */
#ifndef SIMJUDGE_SIMJUDGE_H_
#define SIMJUDGE_SIMJUDGE_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define SJ_API __declspec(dllexport)
#else
#define SJ_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum sj_status {
  SJ_OK = 0,
  SJ_INVALID_ARGUMENT = 1,
  SJ_IO = 2,
  SJ_MALFORMED_RECORD = 3,
  SJ_SCHEMA_VIOLATION = 4,
  SJ_DUPLICATE_ID = 5,
  SJ_UNKNOWN_SCENARIO = 6,
  SJ_UNBOUND_PLACEHOLDER = 7,
  SJ_EMPTY_QUESTION_SET = 8,
  SJ_NO_CODE_BLOCK = 9,
  SJ_EXHAUSTED = 10,
  SJ_AUTH_FAILURE = 11,
  SJ_NON_RETRYABLE = 12,
  SJ_NOT_A_CONTAINER = 13,
  SJ_TRUNCATED = 14,
  SJ_PROBE_FAILURE = 15,
  SJ_DECODE_FAILURE = 16,
  SJ_PARSE_FAILURE = 17,
  SJ_EMPTY_LABELS = 18,
  SJ_GROUP_TOO_SMALL = 19,
  SJ_INVALID_CLIP_BOUNDS = 20,
  SJ_EMPTY_RUN = 21,
  SJ_EMPTY_COUNTS = 22,
  SJ_LEDGER_CORRUPT = 23,
  SJ_CONFIG = 24,
  SJ_ABORTED = 25,
  SJ_UNAVAILABLE = 26,
  SJ_INTERNAL = 27
} sj_status;

typedef struct sj_corpus sj_corpus;
typedef struct sj_report sj_report;
typedef struct sj_service sj_service;

SJ_API const char* sj_version(void);
SJ_API const char* sj_status_name(sj_status status);
/* Message of the last failure on the calling thread; never NULL. */
SJ_API const char* sj_last_error(void);
SJ_API void sj_string_free(char* s);

/* Scenario corpus (JSON Lines). strict != 0 fails on the first bad record;
 * otherwise bad records are collected as rejections. */
SJ_API sj_status sj_corpus_load(const char* path, int strict, sj_corpus** out);
SJ_API size_t sj_corpus_size(const sj_corpus* corpus);
SJ_API size_t sj_corpus_rejection_count(const sj_corpus* corpus);
/* JSON array of {line, code, field, message}. */
SJ_API sj_status sj_corpus_rejections_json(const sj_corpus* corpus, char** out);
SJ_API sj_status sj_corpus_stats_render(const sj_corpus* corpus, char** out);
SJ_API void sj_corpus_free(sj_corpus* corpus);

/* kind: "binary", "ratio" or "llm_binary". labels holds m values (0/1). */
SJ_API sj_status sj_reward(const char* kind, const int* labels, size_t m, int gated, double* out);
/* Writes k normalized advantages to out. */
SJ_API sj_status sj_group_advantages(const double* rewards, size_t k, double epsilon, double* out);
/* ratios holds the concatenated token ratios of n_sequences sequences whose
 * lengths are given in lengths; advantages has one value per sequence. */
SJ_API sj_status sj_clipped_surrogate(const double* ratios, const size_t* lengths,
                                      const double* advantages, size_t n_sequences,
                                      double clip_low, double clip_high, double* out);
/* Percent agreement between judge and human labels. */
SJ_API sj_status sj_agreement_rate(uint64_t tt, uint64_t ff, uint64_t tf, uint64_t ft, double* out);

/* Last Python block of a model response. */
SJ_API sj_status sj_extract_code(const char* response, char** out);
/* JSON {container, playable, reasons} for a video file under the default
 * playability policy. */
SJ_API sj_status sj_video_inspect(const char* path, char** out_json);

/* Runs (or resumes, when the run already exists) the evaluation described by
 * a JSON config file. */
SJ_API sj_status sj_run_evaluate(const char* config_path, sj_report** out);
SJ_API sj_status sj_run_resume(const char* ledger_root, const char* run_id, sj_report** out);
SJ_API sj_status sj_report_load(const char* ledger_root, const char* run_id, sj_report** out);
/* format: "md", "csv", "table" or "json". */
SJ_API sj_status sj_report_render(const sj_report* report, const char* format, char** out);
SJ_API void sj_report_free(sj_report* report);

/* HTTP reward service. port 0 picks a free port. */
SJ_API sj_status sj_service_start(const char* config_path, const char* host, int port,
                                  sj_service** out);
SJ_API int sj_service_port(const sj_service* service);
/* Blocks until the service stops. */
SJ_API sj_status sj_service_wait(sj_service* service);
/* Stops serving; safe to call from any thread. */
SJ_API void sj_service_stop(sj_service* service);
/* Stops serving if needed and releases the handle. */
SJ_API void sj_service_free(sj_service* service);

#ifdef __cplusplus
}
#endif

#endif  // SIMJUDGE_SIMJUDGE_H_
