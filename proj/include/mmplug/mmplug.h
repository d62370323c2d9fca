/* C interface to the mmplug core. All handles are opaque; every call that
 * can fail returns an mmp_status and leaves a message for mmp_last_error()
 * on the calling thread. Strings returned through char** are owned by the
 * caller and released with mmp_string_free(). */
#ifndef MMPLUG_H
#define MMPLUG_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define MMP_API __declspec(dllexport)
#else
#define MMP_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mmp_status {
  MMP_OK = 0,
  MMP_ERR_INVALID_ARGUMENT = 1,
  MMP_ERR_SIZE = 2,
  MMP_ERR_SCHEDULE = 3,
  MMP_ERR_ALIGNMENT = 4,
  MMP_ERR_STATE = 5,
  MMP_ERR_STRATIFICATION = 6,
  MMP_ERR_CONFIG = 7,
  MMP_ERR_IO = 8,
  MMP_ERR_NETWORK = 9,
  MMP_ERR_TIMEOUT = 10,
  MMP_ERR_NOT_CONNECTED = 11,
  MMP_ERR_PROTOCOL = 12,
  MMP_ERR_INTERNAL = 13
} mmp_status;

MMP_API const char* mmp_status_name(mmp_status status);
/* Message of the last failed call on this thread; "" when none. */
MMP_API const char* mmp_last_error(void);
MMP_API void mmp_string_free(char* s);

/* ---- experiment configuration ---- */

typedef struct mmp_config mmp_config;

MMP_API mmp_status mmp_config_new(mmp_config** out);
MMP_API mmp_status mmp_config_load(const char* path, mmp_config** out);
/* dotted_key is "section.key", e.g. "experiment.per_class". */
MMP_API mmp_status mmp_config_set(mmp_config* cfg, const char* dotted_key, const char* value);
MMP_API void mmp_config_free(mmp_config* cfg);

/* ---- datasets ---- */

typedef struct mmp_dataset mmp_dataset;

MMP_API mmp_status mmp_dataset_generate(const mmp_config* cfg, mmp_dataset** out);
MMP_API mmp_status mmp_dataset_load_csv(const char* path, double sample_rate_hz, mmp_dataset** out);
MMP_API mmp_status mmp_dataset_save_csv(const mmp_dataset* ds, const char* path);
MMP_API size_t mmp_dataset_size(const mmp_dataset* ds);
MMP_API void mmp_dataset_free(mmp_dataset* ds);

/* `segment_id,boundary_index,kind,frame_distance` for every segment. The
 * detector threshold comes from cfg ("auto" calibrates first). */
MMP_API mmp_status mmp_detect_events_csv(const mmp_dataset* ds, const mmp_config* cfg, char** out_csv);
/* Feature matrix for one set ("rms", "mad", "summation", "multiplication",
 * "concatenation"), normalised over the whole dataset. */
MMP_API mmp_status mmp_features_csv(const mmp_dataset* ds, const mmp_config* cfg, const char* set, char** out_csv);

/* ---- classifier benchmark ---- */

typedef struct mmp_bench mmp_bench;

typedef enum mmp_check_kind {
  MMP_CHECK_FUSION_GAIN = 0,
  MMP_CHECK_ENSEMBLE_DOMINANCE = 1,
  MMP_CHECK_SUMMATION_BEST = 2
} mmp_check_kind;

typedef struct mmp_check {
  int holds;
  double margin_points;
  char detail[256];
} mmp_check;

MMP_API mmp_status mmp_bench_run(const mmp_config* cfg, mmp_bench** out);
MMP_API mmp_status mmp_bench_table(const mmp_bench* b, char** out);
MMP_API mmp_status mmp_bench_csv(const mmp_bench* b, char** out);
MMP_API mmp_status mmp_bench_json(const mmp_bench* b, char** out);
MMP_API mmp_status mmp_bench_check(const mmp_bench* b, mmp_check_kind kind, mmp_check* out);
MMP_API double mmp_bench_runtime_s(const mmp_bench* b);
MMP_API void mmp_bench_free(mmp_bench* b);

/* ---- ingestion service ---- */

typedef struct mmp_server mmp_server;

typedef struct mmp_server_options {
  const char* host;        /* default "127.0.0.1" */
  uint16_t tcp_port;       /* 0 = ephemeral */
  uint16_t http_port;      /* 0 = ephemeral */
  int enable_http;
  const char* store_path;  /* NULL or "" = in-memory */
  int fsync_every_put;
  int command_timeout_ms;
} mmp_server_options;

typedef struct mmp_server_counters {
  uint64_t lines, readings, stored, rejected, malformed, store_errors, connections;
  uint64_t documents;
} mmp_server_counters;

typedef struct mmp_latency {
  size_t count;
  double mean_ms, p95_ms, max_ms;
} mmp_latency;

MMP_API void mmp_server_options_init(mmp_server_options* opt);
MMP_API mmp_status mmp_server_start(const mmp_server_options* opt, mmp_server** out);
MMP_API uint16_t mmp_server_tcp_port(const mmp_server* s);
MMP_API uint16_t mmp_server_http_port(const mmp_server* s);
MMP_API mmp_status mmp_server_counters_get(const mmp_server* s, mmp_server_counters* out);
MMP_API mmp_status mmp_server_latency(const mmp_server* s, const char* device, mmp_latency* out);
/* cmd: "relay_on", "relay_off" or "set_rate". *acked_ok receives the ack's ok flag. */
MMP_API mmp_status mmp_server_command(mmp_server* s, const char* device, const char* cmd, double value,
                                      int* acked_ok);
/* Stops and frees. */
MMP_API void mmp_server_stop(mmp_server* s);

/* ---- edge agent ---- */

typedef struct mmp_agent_options {
  const char* device_id;
  double sample_rate_hz;
  double duration_s;
  size_t smoothing_window;
  size_t downsample_factor;
  int round_decimals; /* < 0: none */
  double processing_delay_s;
  double network_latency_s;
  double jitter_s;
  double clock_skew_s;
  double time_scale;
  int env_every;
  int appliance_class;
  uint64_t seed;
  int relay_on;
  int max_retries;
} mmp_agent_options;

typedef struct mmp_agent_stats {
  size_t sent_power, sent_env, acked, rejected, commands, reconnects;
  int failed;
} mmp_agent_stats;

/* preset: "esp32", "mkr1010" or NULL for the esp32 defaults. */
MMP_API mmp_status mmp_agent_options_init(mmp_agent_options* opt, const char* preset);
/* Blocks for the session. endpoint is "host:port" of the TCP stream. */
MMP_API mmp_status mmp_agent_run(const mmp_agent_options* opt, const char* endpoint, mmp_agent_stats* out);

/* ---- HTTP admin client (endpoint is "host:port" of the HTTP port) ---- */

MMP_API mmp_status mmp_http_command(const char* endpoint, const char* device, const char* cmd, double value,
                                    char** out_json);
MMP_API mmp_status mmp_http_query(const char* endpoint, const char* device, const char* kind, int64_t t0, int64_t t1,
                                  char** out_json);
MMP_API mmp_status mmp_http_latency(const char* endpoint, const char* device, char** out_json);

/* ---- micro-moment report ---- */

typedef struct mmp_moment_summary {
  size_t slots;
  size_t counts[5]; /* good_usage, turn_on, turn_off, excessive_consumption, consumption_while_vacant */
  double wasted_fraction;
  size_t devices;
} mmp_moment_summary;

/* Reads the store log, classifies each device's power series into slots and
 * writes moments_<device>.csv and moments_<device>.svg into out_dir.
 * device may be NULL for every device in the store. */
MMP_API mmp_status mmp_report_from_store(const char* store_path, const char* device, double slot_len_s,
                                         double excessive_watts, const char* out_dir, mmp_moment_summary* out);

#ifdef __cplusplus
}
#endif

#endif
