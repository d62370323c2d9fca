#include "mmplug/mmplug.h"

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <memory>
#include <fstream>
#include <sstream>

#include "httplib.h"
#include "json.hpp"
#include "mmplug/bench.hpp"
#include "mmplug/common.hpp"
#include "mmplug/config.hpp"
#include "mmplug/edge_agent.hpp"
#include "mmplug/events.hpp"
#include "mmplug/features.hpp"
#include "mmplug/ingest.hpp"
#include "mmplug/micromoments.hpp"
#include "mmplug/net.hpp"
#include "mmplug/store.hpp"
#include "mmplug/tracegen.hpp"

using namespace mmplug;

struct mmp_config {
  config::ExperimentConfig cfg;
};

struct mmp_dataset {
  tracegen::Dataset data;
};

struct mmp_bench {
  bench::BenchResult result;
};

struct mmp_server {
  explicit mmp_server(ingest::ServerOptions opt) : server(std::move(opt)) {}
  ingest::IngestServer server;
};

namespace {

thread_local std::string last_error;

mmp_status code_of(ErrorCode c) {
  switch (c) {
    case ErrorCode::InvalidArgument: return MMP_ERR_INVALID_ARGUMENT;
    case ErrorCode::Size: return MMP_ERR_SIZE;
    case ErrorCode::Schedule: return MMP_ERR_SCHEDULE;
    case ErrorCode::Alignment: return MMP_ERR_ALIGNMENT;
    case ErrorCode::State: return MMP_ERR_STATE;
    case ErrorCode::Stratification: return MMP_ERR_STRATIFICATION;
    case ErrorCode::Config: return MMP_ERR_CONFIG;
    case ErrorCode::Io: return MMP_ERR_IO;
    case ErrorCode::Network: return MMP_ERR_NETWORK;
    case ErrorCode::Timeout: return MMP_ERR_TIMEOUT;
    case ErrorCode::NotConnected: return MMP_ERR_NOT_CONNECTED;
    case ErrorCode::Protocol: return MMP_ERR_PROTOCOL;
  }
  return MMP_ERR_INTERNAL;
}

mmp_status fail(mmp_status s, std::string msg) {
  last_error = std::move(msg);
  return s;
}

template <class F>
mmp_status guarded(F&& body) {
  try {
    last_error.clear();
    body();
    return MMP_OK;
  } catch (const Error& e) {
    return fail(code_of(e.code()), e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(MMP_ERR_IO, e.what());
  } catch (const std::bad_alloc&) {
    return fail(MMP_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(MMP_ERR_INTERNAL, e.what());
  }
}

void require(const void* p, const char* name) {
  if (!p) throw Error(ErrorCode::InvalidArgument, std::string(name) + " must not be NULL");
}

char* dup_string(const std::string& s) {
  auto* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.data(), s.size() + 1);
  return out;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << content;
  if (!out) throw Error(ErrorCode::Io, "write to " + path.string() + " failed");
}

events::DetectorConfig effective_detector(const config::ExperimentConfig& cfg) {
  auto det = cfg.detector;
  if (cfg.auto_threshold) {
    det.threshold = events::calibrate_threshold(events::make_validation_traces(40, mix_seed(cfg.seed, 77)), det);
  }
  return det;
}

std::optional<features::FeatureSet> parse_set(std::string_view name) {
  if (name == "rms") return features::FeatureSet::Rms;
  if (name == "mad") return features::FeatureSet::Mad;
  if (const auto s = features::parse_fusion(name)) return features::fused_set(*s);
  return std::nullopt;
}

httplib::Client make_client(const char* endpoint) {
  require(endpoint, "endpoint");
  const auto [host, port] = net::parse_endpoint(endpoint);
  httplib::Client cli(host, port);
  cli.set_connection_timeout(5);
  cli.set_read_timeout(30);
  return cli;
}

std::string http_result(const httplib::Result& res, const std::string& what) {
  if (!res) throw Error(ErrorCode::Network, what + ": " + httplib::to_string(res.error()));
  if (res->status == 200) return res->body;
  std::string detail = res->body;
  const auto j = nlohmann::json::parse(res->body, nullptr, false);
  if (j.is_object() && j.contains("detail")) detail = j["detail"].get<std::string>();
  else if (j.is_object() && j.contains("error")) detail = j["error"].get<std::string>();
  switch (res->status) {
    case 404: throw Error(ErrorCode::NotConnected, what + ": " + detail);
    case 504: throw Error(ErrorCode::Timeout, what + ": " + detail);
    case 400: throw Error(ErrorCode::InvalidArgument, what + ": " + detail);
    default: throw Error(ErrorCode::Network, what + ": HTTP " + std::to_string(res->status) + " " + detail);
  }
}

/// Turns one device's stored power series into a regularly indexed trace
/// plus occupancy carried forward from its env readings.
std::pair<tracegen::PowerTrace, std::unique_ptr<bool[]>> device_series(const store::DocumentStore& st,
                                                                const std::string& device) {
  const auto power = st.query(device, "power", INT64_MIN, INT64_MAX);
  const auto env = st.query(device, "env", INT64_MIN, INT64_MAX);
  tracegen::PowerTrace trace;
  trace.device_id = device;
  if (power.empty()) return {trace, nullptr};
  auto occupied = std::make_unique<bool[]>(power.size());
  trace.t0_ms = power.front().ts_ms();
  std::vector<std::int64_t> gaps;
  for (std::size_t i = 1; i < power.size(); ++i) gaps.push_back(power[i].ts_ms() - power[i - 1].ts_ms());
  if (!gaps.empty()) {
    std::nth_element(gaps.begin(), gaps.begin() + static_cast<std::ptrdiff_t>(gaps.size() / 2), gaps.end());
    trace.sample_rate_hz = 1000.0 / static_cast<double>(std::max<std::int64_t>(1, gaps[gaps.size() / 2]));
  }
  std::size_t e = 0;
  bool occ = true;
  for (const auto& d : power) {
    while (e < env.size() && env[e].ts_ms() <= d.ts_ms()) occ = env[e++].body.value("occupied", true);
    occupied[trace.samples.size()] = occ;
    trace.samples.push_back(d.body.value("watts", 0.0));
  }
  return {std::move(trace), std::move(occupied)};
}

std::string file_safe(std::string s) {
  for (auto& c : s) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_' && c != '.') c = '_';
  }
  return s;
}

}  // namespace

extern "C" {

const char* mmp_status_name(mmp_status status) {
  switch (status) {
    case MMP_OK: return "ok";
    case MMP_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case MMP_ERR_SIZE: return "size";
    case MMP_ERR_SCHEDULE: return "schedule";
    case MMP_ERR_ALIGNMENT: return "alignment";
    case MMP_ERR_STATE: return "state";
    case MMP_ERR_STRATIFICATION: return "stratification";
    case MMP_ERR_CONFIG: return "config";
    case MMP_ERR_IO: return "io";
    case MMP_ERR_NETWORK: return "network";
    case MMP_ERR_TIMEOUT: return "timeout";
    case MMP_ERR_NOT_CONNECTED: return "not_connected";
    case MMP_ERR_PROTOCOL: return "protocol";
    case MMP_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

const char* mmp_last_error(void) { return last_error.c_str(); }

void mmp_string_free(char* s) { std::free(s); }

mmp_status mmp_config_new(mmp_config** out) {
  return guarded([&] {
    require(out, "out");
    *out = new mmp_config{};
  });
}

mmp_status mmp_config_load(const char* path, mmp_config** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new mmp_config{config::load_config(path)};
  });
}

mmp_status mmp_config_set(mmp_config* cfg, const char* dotted_key, const char* value) {
  return guarded([&] {
    require(cfg, "cfg");
    require(dotted_key, "key");
    require(value, "value");
    auto copy = cfg->cfg;
    config::apply_setting(copy, dotted_key, value);
    cfg->cfg = std::move(copy);
  });
}

void mmp_config_free(mmp_config* cfg) { delete cfg; }

mmp_status mmp_dataset_generate(const mmp_config* cfg, mmp_dataset** out) {
  return guarded([&] {
    require(cfg, "cfg");
    require(out, "out");
    cfg->cfg.validate();
    const auto& c = cfg->cfg;
    *out = new mmp_dataset{tracegen::generate_dataset(c.fleet, c.per_class, c.segment, c.seed)};
  });
}

mmp_status mmp_dataset_load_csv(const char* path, double sample_rate_hz, mmp_dataset** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, std::string("cannot open ") + path);
    *out = new mmp_dataset{tracegen::read_dataset_csv(in, sample_rate_hz)};
  });
}

mmp_status mmp_dataset_save_csv(const mmp_dataset* ds, const char* path) {
  return guarded([&] {
    require(ds, "ds");
    require(path, "path");
    std::ostringstream out;
    tracegen::write_dataset_csv(out, ds->data);
    write_file(path, out.str());
  });
}

size_t mmp_dataset_size(const mmp_dataset* ds) { return ds ? ds->data.size() : 0; }

void mmp_dataset_free(mmp_dataset* ds) { delete ds; }

mmp_status mmp_detect_events_csv(const mmp_dataset* ds, const mmp_config* cfg, char** out_csv) {
  return guarded([&] {
    require(ds, "ds");
    require(cfg, "cfg");
    require(out_csv, "out_csv");
    const auto det = effective_detector(cfg->cfg);
    std::ostringstream out;
    out << "segment_id,boundary_index,kind,frame_distance\n";
    for (const auto& seg : ds->data) {
      for (const auto& e : events::detect_events(seg.trace, det)) {
        out << seg.segment_id << ',' << e.boundary_index << ',' << events::to_string(e.kind) << ','
            << format_double(e.frame_distance) << '\n';
      }
    }
    *out_csv = dup_string(out.str());
  });
}

mmp_status mmp_features_csv(const mmp_dataset* ds, const mmp_config* cfg, const char* set, char** out_csv) {
  return guarded([&] {
    require(ds, "ds");
    require(cfg, "cfg");
    require(set, "set");
    require(out_csv, "out_csv");
    const auto fs = parse_set(set);
    if (!fs) throw Error(ErrorCode::InvalidArgument, std::string("unknown feature set '") + set + "'");
    const auto table = features::build_table(ds->data, effective_detector(cfg->cfg), cfg->cfg.features);
    std::vector<std::size_t> all(table.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    std::ostringstream out;
    features::write_features_csv(out, table, features::assemble(table, *fs, all, all));
    *out_csv = dup_string(out.str());
  });
}

mmp_status mmp_bench_run(const mmp_config* cfg, mmp_bench** out) {
  return guarded([&] {
    require(cfg, "cfg");
    require(out, "out");
    *out = new mmp_bench{bench::run_bench(cfg->cfg)};
  });
}

mmp_status mmp_bench_table(const mmp_bench* b, char** out) {
  return guarded([&] {
    require(b, "bench");
    require(out, "out");
    *out = dup_string(bench::render_table(b->result));
  });
}

mmp_status mmp_bench_csv(const mmp_bench* b, char** out) {
  return guarded([&] {
    require(b, "bench");
    require(out, "out");
    *out = dup_string(bench::render_csv(b->result));
  });
}

mmp_status mmp_bench_json(const mmp_bench* b, char** out) {
  return guarded([&] {
    require(b, "bench");
    require(out, "out");
    *out = dup_string(bench::render_json(b->result));
  });
}

mmp_status mmp_bench_check(const mmp_bench* b, mmp_check_kind kind, mmp_check* out) {
  return guarded([&] {
    require(b, "bench");
    require(out, "out");
    bench::PropertyCheck c;
    switch (kind) {
      case MMP_CHECK_FUSION_GAIN: c = bench::fusion_gain(b->result); break;
      case MMP_CHECK_ENSEMBLE_DOMINANCE: c = bench::ensemble_dominance(b->result); break;
      case MMP_CHECK_SUMMATION_BEST: c = bench::summation_best(b->result); break;
      default: throw Error(ErrorCode::InvalidArgument, "unknown check kind");
    }
    out->holds = c.holds ? 1 : 0;
    out->margin_points = c.margin;
    std::snprintf(out->detail, sizeof out->detail, "%s", c.detail.c_str());
  });
}

double mmp_bench_runtime_s(const mmp_bench* b) { return b ? b->result.runtime_s : 0.0; }

void mmp_bench_free(mmp_bench* b) { delete b; }

void mmp_server_options_init(mmp_server_options* opt) {
  if (!opt) return;
  *opt = mmp_server_options{};
  opt->host = "127.0.0.1";
  opt->enable_http = 1;
  opt->command_timeout_ms = 5000;
}

mmp_status mmp_server_start(const mmp_server_options* opt, mmp_server** out) {
  return guarded([&] {
    require(opt, "opt");
    require(out, "out");
    ingest::ServerOptions o;
    if (opt->host && *opt->host) o.host = opt->host;
    o.tcp_port = opt->tcp_port;
    o.http_port = opt->http_port;
    o.enable_http = opt->enable_http != 0;
    if (opt->store_path) o.store_path = opt->store_path;
    o.fsync = opt->fsync_every_put ? store::FsyncPolicy::EveryPut : store::FsyncPolicy::None;
    if (opt->command_timeout_ms <= 0) throw Error(ErrorCode::InvalidArgument, "command_timeout_ms must be > 0");
    o.command_timeout = std::chrono::milliseconds(opt->command_timeout_ms);
    auto s = std::make_unique<mmp_server>(std::move(o));
    s->server.start();
    *out = s.release();
  });
}

uint16_t mmp_server_tcp_port(const mmp_server* s) { return s ? s->server.tcp_port() : 0; }
uint16_t mmp_server_http_port(const mmp_server* s) { return s ? s->server.http_port() : 0; }

mmp_status mmp_server_counters_get(const mmp_server* s, mmp_server_counters* out) {
  return guarded([&] {
    require(s, "server");
    require(out, "out");
    const auto c = s->server.counters();
    *out = {c.lines, c.readings, c.stored, c.rejected, c.malformed, c.store_errors, c.connections,
            s->server.store().document_count()};
  });
}

mmp_status mmp_server_latency(const mmp_server* s, const char* device, mmp_latency* out) {
  return guarded([&] {
    require(s, "server");
    require(device, "device");
    require(out, "out");
    const auto l = s->server.latency_report(device);
    *out = {l.count, l.mean_ms, l.p95_ms, l.max_ms};
  });
}

mmp_status mmp_server_command(mmp_server* s, const char* device, const char* cmd, double value, int* acked_ok) {
  return guarded([&] {
    require(s, "server");
    require(device, "device");
    require(cmd, "cmd");
    const auto ack = s->server.send_command(device, wire::make_command(cmd, value));
    if (acked_ok) *acked_ok = ack.ok ? 1 : 0;
  });
}

void mmp_server_stop(mmp_server* s) {
  if (!s) return;
  s->server.stop();
  delete s;
}

mmp_status mmp_agent_options_init(mmp_agent_options* opt, const char* preset) {
  return guarded([&] {
    require(opt, "opt");
    agent::AgentConfig c;
    if (preset) {
      const auto p = agent::find_preset(preset);
      if (!p) throw Error(ErrorCode::InvalidArgument, std::string("unknown preset '") + preset + "'");
      c.apply_preset(*p);
    }
    *opt = mmp_agent_options{};
    opt->device_id = "plug-0";
    opt->sample_rate_hz = c.sample_rate_hz;
    opt->duration_s = c.duration_s;
    opt->smoothing_window = c.preprocessing.smoothing_window;
    opt->downsample_factor = c.preprocessing.downsample_factor;
    opt->round_decimals = c.preprocessing.round_decimals;
    opt->processing_delay_s = c.processing_delay_s;
    opt->network_latency_s = c.network_latency_s;
    opt->jitter_s = c.jitter_s;
    opt->clock_skew_s = c.clock_skew_s;
    opt->time_scale = c.time_scale;
    opt->env_every = c.env_every;
    opt->appliance_class = c.appliance_class;
    opt->seed = c.seed;
    opt->relay_on = c.relay_on ? 1 : 0;
    opt->max_retries = c.max_retries;
  });
}

mmp_status mmp_agent_run(const mmp_agent_options* opt, const char* endpoint, mmp_agent_stats* out) {
  return guarded([&] {
    require(opt, "opt");
    require(endpoint, "endpoint");
    agent::AgentConfig c;
    if (opt->device_id) c.device_id = opt->device_id;
    c.sample_rate_hz = opt->sample_rate_hz;
    c.duration_s = opt->duration_s;
    c.preprocessing = {opt->smoothing_window, opt->downsample_factor, opt->round_decimals};
    c.processing_delay_s = opt->processing_delay_s;
    c.network_latency_s = opt->network_latency_s;
    c.jitter_s = opt->jitter_s;
    c.clock_skew_s = opt->clock_skew_s;
    c.time_scale = opt->time_scale;
    c.env_every = opt->env_every;
    c.appliance_class = opt->appliance_class;
    c.seed = opt->seed;
    c.relay_on = opt->relay_on != 0;
    c.max_retries = opt->max_retries;
    const auto [host, port] = net::parse_endpoint(endpoint);
    agent::EdgeAgent a(c);
    const auto st = a.run(host, port);
    if (out) {
      *out = {st.sent_power, st.sent_env, st.acked, st.rejected, st.commands, st.reconnects, st.failed ? 1 : 0};
    }
    if (st.failed) throw Error(ErrorCode::Network, "agent session failed: " + st.error);
  });
}

mmp_status mmp_http_command(const char* endpoint, const char* device, const char* cmd, double value,
                            char** out_json) {
  return guarded([&] {
    require(device, "device");
    require(cmd, "cmd");
    auto cli = make_client(endpoint);
    const nlohmann::json body{{"device", device}, {"cmd", cmd}, {"value", value}};
    const auto text = http_result(cli.Post("/cmd", body.dump(), "application/json"), "POST /cmd");
    const auto reply = nlohmann::json::parse(text, nullptr, false);
    if (out_json) *out_json = dup_string(text);
    if (reply.is_object() && !reply.value("ok", true)) {
      const std::string reason = reply.contains("ack") ? reply["ack"].value("reason", "rejected") : "rejected";
      throw Error(ErrorCode::InvalidArgument, std::string("device rejected ") + cmd + ": " + reason);
    }
  });
}

mmp_status mmp_http_query(const char* endpoint, const char* device, const char* kind, int64_t t0, int64_t t1,
                          char** out_json) {
  return guarded([&] {
    require(device, "device");
    require(out_json, "out_json");
    auto cli = make_client(endpoint);
    const httplib::Params params{{"device", device},
                                 {"kind", kind ? kind : "power"},
                                 {"t0", std::to_string(t0)},
                                 {"t1", std::to_string(t1)}};
    *out_json = dup_string(http_result(cli.Get("/query", params, httplib::Headers{}), "GET /query"));
  });
}

mmp_status mmp_http_latency(const char* endpoint, const char* device, char** out_json) {
  return guarded([&] {
    require(device, "device");
    require(out_json, "out_json");
    auto cli = make_client(endpoint);
    const httplib::Params params{{"device", device}};
    const auto res = cli.Get("/latency", params, httplib::Headers{});
    if (res && res->status == 404) {
      throw Error(ErrorCode::State, "no latency records for '" + std::string(device) + "'");
    }
    *out_json = dup_string(http_result(res, "GET /latency"));
  });
}

mmp_status mmp_report_from_store(const char* store_path, const char* device, double slot_len_s,
                                 double excessive_watts, const char* out_dir, mmp_moment_summary* out) {
  return guarded([&] {
    require(store_path, "store_path");
    require(out_dir, "out_dir");
    if (!std::filesystem::exists(store_path)) throw Error(ErrorCode::Io, std::string("no store at ") + store_path);
    const store::DocumentStore st(store_path);
    std::vector<std::string> devices;
    if (device) devices.emplace_back(device);
    else devices = st.devices();

    moments::MomentRules rules;
    if (slot_len_s > 0.0) rules.slot_len_s = slot_len_s;
    if (excessive_watts > 0.0) rules.excessive_threshold_watts = excessive_watts;
    std::filesystem::create_directories(out_dir);

    std::vector<moments::MicroMoment> all;
    std::size_t used = 0;
    for (const auto& d : devices) {
      const auto [trace, occupied] = device_series(st, d);
      if (trace.samples.empty()) continue;
      ++used;
      const auto slots = moments::classify_slots(trace, std::span<const bool>(occupied.get(), trace.samples.size()), rules);
      std::ostringstream csv, svg;
      moments::write_moments_csv(csv, slots);
      moments::write_moments_svg(svg, trace, slots);
      const std::filesystem::path dir(out_dir);
      write_file(dir / ("moments_" + file_safe(d) + ".csv"), csv.str());
      write_file(dir / ("moments_" + file_safe(d) + ".svg"), svg.str());
      all.insert(all.end(), slots.begin(), slots.end());
    }
    if (all.empty()) {
      throw Error(ErrorCode::State, device ? "no power readings for '" + std::string(device) + "'"
                                           : std::string("store holds no power readings"));
    }
    const auto summary = moments::moment_summary(all);
    if (out) {
      out->slots = summary.slots;
      for (std::size_t i = 0; i < moments::kMomentClassCount; ++i) out->counts[i] = summary.counts[i];
      out->wasted_fraction = summary.wasted_fraction;
      out->devices = used;
    }
  });
}

}  // extern "C"
