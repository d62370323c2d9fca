#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "mmplug/mmplug.h"

namespace fs = std::filesystem;

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitIo = 2;
constexpr int kExitProperty = 3;

struct Failure {
  int exit_code;
  std::string message;
};

int exit_code_for(mmp_status s) {
  switch (s) {
    case MMP_ERR_IO:
    case MMP_ERR_NETWORK:
    case MMP_ERR_TIMEOUT:
    case MMP_ERR_NOT_CONNECTED:
      return kExitIo;
    default:
      return kExitValidation;
  }
}

void check(mmp_status s, const std::string& what) {
  if (s == MMP_OK) return;
  throw Failure{exit_code_for(s), what + ": " + mmp_status_name(s) + ": " + mmp_last_error()};
}

struct StringDeleter {
  void operator()(char* p) const { mmp_string_free(p); }
};
using OwnedString = std::unique_ptr<char, StringDeleter>;

struct ConfigDeleter {
  void operator()(mmp_config* p) const { mmp_config_free(p); }
};
struct DatasetDeleter {
  void operator()(mmp_dataset* p) const { mmp_dataset_free(p); }
};
struct BenchDeleter {
  void operator()(mmp_bench* p) const { mmp_bench_free(p); }
};
using Config = std::unique_ptr<mmp_config, ConfigDeleter>;
using Dataset = std::unique_ptr<mmp_dataset, DatasetDeleter>;
using Bench = std::unique_ptr<mmp_bench, BenchDeleter>;

std::string take(char* p) {
  OwnedString owned(p);
  return owned ? std::string(owned.get()) : std::string();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw Failure{kExitIo, "cannot write " + path.string()};
}

struct Common {
  std::uint64_t seed = 42;
  bool seed_set = false;
  std::string config_path;
  std::string out_dir = ".";
  std::vector<std::string> overrides;
};

Config load_config(const Common& c) {
  mmp_config* raw = nullptr;
  if (c.config_path.empty()) check(mmp_config_new(&raw), "config");
  else check(mmp_config_load(c.config_path.c_str(), &raw), "config " + c.config_path);
  Config cfg(raw);
  if (c.seed_set) check(mmp_config_set(cfg.get(), "experiment.seed", std::to_string(c.seed).c_str()), "--seed");
  for (const auto& kv : c.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw Failure{kExitValidation, "--set expects section.key=value, got '" + kv + "'"};
    check(mmp_config_set(cfg.get(), kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str()), "--set " + kv);
  }
  return cfg;
}

Dataset dataset_for(const Config& cfg, const std::string& input, double rate) {
  mmp_dataset* raw = nullptr;
  if (input.empty()) check(mmp_dataset_generate(cfg.get(), &raw), "generate");
  else check(mmp_dataset_load_csv(input.c_str(), rate, &raw), "load " + input);
  return Dataset(raw);
}

std::atomic<bool> g_interrupted{false};
extern "C" void on_signal(int) { g_interrupted = true; }

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--seed", c.seed, "Experiment seed")->each([&c](const std::string&) { c.seed_set = true; });
  cmd->add_option("--config", c.config_path, "INI experiment config");
  cmd->add_option("--set", c.overrides, "Override one setting: section.key=value");
  cmd->add_option("--out", c.out_dir, "Output directory");
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Smart plug energy analytics: synthetic loads, event detection, appliance recognition, "
               "telemetry ingestion and micro-moment reports."};
  app.require_subcommand(1);
  Common common;

  auto* simulate = app.add_subcommand("simulate", "Generate a labelled appliance segment dataset");
  add_common(simulate, common);
  int classes = 0, per_class = 0;
  simulate->add_option("--classes", classes, "Number of appliance classes");
  simulate->add_option("--per-class", per_class, "Segments per class");

  auto* detect = app.add_subcommand("detect", "Detect on/off events in every segment");
  add_common(detect, common);
  std::string input;
  double input_rate = 2.0;
  detect->add_option("--input", input, "Dataset CSV (generated when omitted)");
  detect->add_option("--rate", input_rate, "Sample rate of --input in Hz");

  auto* feats = app.add_subcommand("features", "Extract descriptor features");
  add_common(feats, common);
  std::string set = "summation";
  feats->add_option("--input", input, "Dataset CSV (generated when omitted)");
  feats->add_option("--rate", input_rate, "Sample rate of --input in Hz");
  feats->add_option("--descriptor", set, "rms|mad|summation|multiplication|concatenation");

  auto* bench = app.add_subcommand("bench", "Cross-validated classifier benchmark over descriptor sets");
  add_common(bench, common);

  auto* serve = app.add_subcommand("serve", "Run the ingestion service until interrupted");
  std::string host = "127.0.0.1", store_path;
  std::uint16_t tcp_port = 7070, http_port = 8080;
  bool fsync = false;
  int command_timeout_ms = 5000;
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--tcp-port", tcp_port, "Agent stream port (0 = ephemeral)");
  serve->add_option("--http-port", http_port, "Admin HTTP port (0 = ephemeral)");
  serve->add_option("--store", store_path, "Document log path (in-memory when omitted)");
  serve->add_flag("--fsync", fsync, "fsync after every stored document");
  serve->add_option("--command-timeout-ms", command_timeout_ms, "Wait for a device ack this long");

  auto* agent = app.add_subcommand("agent", "Run simulated smart plugs against the service");
  std::string endpoint = "127.0.0.1:7070", presets = "esp32", device = "plug";
  int count = 1, appliance_class = -1, round_decimals = -2;
  double duration = 60.0, time_scale = 1.0, rate = 1.0, skew = 0.0;
  std::size_t smoothing = 1, downsample = 1;
  std::uint64_t agent_seed = 0;
  agent->add_option("--endpoint", endpoint, "Service stream host:port");
  agent->add_option("--count", count, "Number of agents")->check(CLI::Range(1, 256));
  agent->add_option("--preset", presets, "esp32|mkr1010, or a comma list cycled over agents");
  agent->add_option("--device", device, "Device id (suffixed with -i when --count > 1)");
  agent->add_option("--duration", duration, "Seconds of simulated sampling");
  agent->add_option("--time-scale", time_scale, "Sampling runs this many times faster than real time");
  agent->add_option("--rate", rate, "Sample rate in Hz");
  agent->add_option("--class", appliance_class, "Appliance class of the built-in trace (default cycles)");
  agent->add_option("--smoothing", smoothing, "Moving-average window");
  agent->add_option("--downsample", downsample, "Keep every n-th sample");
  agent->add_option("--round", round_decimals, "Round readings to this many decimals");
  agent->add_option("--clock-skew", skew, "Seconds added to every agent timestamp");
  agent->add_option("--seed", agent_seed, "Agent seed");

  auto* plug = app.add_subcommand("plug", "Switch a plug's relay through the admin API");
  std::string state, admin = "127.0.0.1:8080";
  plug->add_option("state", state, "on|off")->required()->check(CLI::IsMember({"on", "off"}));
  plug->add_option("--endpoint", admin, "Admin HTTP host:port");
  plug->add_option("--device", device, "Device id")->required();

  auto* query = app.add_subcommand("query", "Fetch stored documents");
  std::string kind = "power";
  std::int64_t t0 = INT64_MIN, t1 = INT64_MAX;
  query->add_option("--endpoint", admin, "Admin HTTP host:port");
  query->add_option("--device", device, "Device id")->required();
  query->add_option("--kind", kind, "power|env")->check(CLI::IsMember({"power", "env"}));
  query->add_option("--t0", t0, "Earliest agent timestamp (ms, inclusive)");
  query->add_option("--t1", t1, "Latest agent timestamp (ms, exclusive)");

  auto* latency = app.add_subcommand("latency", "End-to-end latency report for one device");
  latency->add_option("--endpoint", admin, "Admin HTTP host:port");
  latency->add_option("--device", device, "Device id")->required();

  auto* report = app.add_subcommand("report", "Micro-moment summary and plots from a store log");
  std::string report_device;
  double slot_len = 30.0, excessive = 1000.0;
  std::string report_out = ".";
  report->add_option("--store", store_path, "Document log path")->required();
  report->add_option("--device", report_device, "Device id (all devices when omitted)");
  report->add_option("--slot", slot_len, "Slot length in seconds");
  report->add_option("--excessive", excessive, "Excessive consumption threshold in watts");
  report->add_option("--out", report_out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*simulate) {
      auto cfg = load_config(common);
      if (classes > 0) check(mmp_config_set(cfg.get(), "experiment.classes", std::to_string(classes).c_str()), "--classes");
      if (per_class > 0) {
        check(mmp_config_set(cfg.get(), "experiment.per_class", std::to_string(per_class).c_str()), "--per-class");
      }
      auto ds = dataset_for(cfg, "", 0.0);
      const fs::path path = fs::path(common.out_dir) / "dataset.csv";
      fs::create_directories(common.out_dir);
      check(mmp_dataset_save_csv(ds.get(), path.string().c_str()), "save");
      std::cout << "wrote " << mmp_dataset_size(ds.get()) << " segments to " << path.string() << '\n';
    } else if (*detect) {
      auto cfg = load_config(common);
      auto ds = dataset_for(cfg, input, input_rate);
      char* csv = nullptr;
      check(mmp_detect_events_csv(ds.get(), cfg.get(), &csv), "detect");
      const auto text = take(csv);
      const fs::path path = fs::path(common.out_dir) / "events.csv";
      write_text(path, text);
      std::cout << "wrote events for " << mmp_dataset_size(ds.get()) << " segments to " << path.string() << '\n';
    } else if (*feats) {
      auto cfg = load_config(common);
      auto ds = dataset_for(cfg, input, input_rate);
      char* csv = nullptr;
      check(mmp_features_csv(ds.get(), cfg.get(), set.c_str(), &csv), "features");
      const fs::path path = fs::path(common.out_dir) / ("features_" + set + ".csv");
      write_text(path, take(csv));
      std::cout << "wrote " << set << " features to " << path.string() << '\n';
    } else if (*bench) {
      auto cfg = load_config(common);
      mmp_bench* raw = nullptr;
      check(mmp_bench_run(cfg.get(), &raw), "bench");
      Bench b(raw);
      char *table = nullptr, *csv = nullptr, *json = nullptr;
      check(mmp_bench_table(b.get(), &table), "table");
      check(mmp_bench_csv(b.get(), &csv), "csv");
      check(mmp_bench_json(b.get(), &json), "json");
      const auto table_text = take(table);
      write_text(fs::path(common.out_dir) / "bench.csv", take(csv));
      write_text(fs::path(common.out_dir) / "bench.json", take(json));
      write_text(fs::path(common.out_dir) / "bench.txt", table_text);
      std::cout << table_text << '\n';
      mmp_check gain{}, dom{}, sum{};
      check(mmp_bench_check(b.get(), MMP_CHECK_FUSION_GAIN, &gain), "check");
      check(mmp_bench_check(b.get(), MMP_CHECK_ENSEMBLE_DOMINANCE, &dom), "check");
      check(mmp_bench_check(b.get(), MMP_CHECK_SUMMATION_BEST, &sum), "check");
      std::printf("fusion gain:        %s (%+.2f points) %s\n", gain.holds ? "holds" : "FAILS", gain.margin_points,
                  gain.detail);
      std::printf("ensemble dominance: %s (%+.2f points) %s\n", dom.holds ? "holds" : "fails", dom.margin_points,
                  dom.detail);
      std::printf("summation best:     %s (%+.2f points) %s\n", sum.holds ? "holds" : "not observed",
                  sum.margin_points, sum.detail);
      std::printf("runtime: %.2f s\n", mmp_bench_runtime_s(b.get()));
      if (!gain.holds) return kExitProperty;
    } else if (*serve) {
      mmp_server_options opt;
      mmp_server_options_init(&opt);
      opt.host = host.c_str();
      opt.tcp_port = tcp_port;
      opt.http_port = http_port;
      opt.store_path = store_path.empty() ? nullptr : store_path.c_str();
      opt.fsync_every_put = fsync ? 1 : 0;
      opt.command_timeout_ms = command_timeout_ms;
      mmp_server* s = nullptr;
      check(mmp_server_start(&opt, &s), "serve");
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cout << "listening tcp=" << host << ':' << mmp_server_tcp_port(s) << " http=" << host << ':'
                << mmp_server_http_port(s) << std::endl;
      while (!g_interrupted) std::this_thread::sleep_for(std::chrono::milliseconds(100));
      mmp_server_counters c{};
      mmp_server_counters_get(s, &c);
      mmp_server_stop(s);
      std::cout << "stopped: lines=" << c.lines << " stored=" << c.stored << " rejected=" << c.rejected
                << " malformed=" << c.malformed << '\n';
    } else if (*agent) {
      const auto preset_list = split_list(presets);
      if (preset_list.empty()) throw Failure{kExitValidation, "--preset must name at least one preset"};
      std::vector<mmp_agent_options> opts(static_cast<std::size_t>(count));
      std::vector<std::string> ids(opts.size());
      for (std::size_t i = 0; i < opts.size(); ++i) {
        const auto& preset = preset_list[i % preset_list.size()];
        check(mmp_agent_options_init(&opts[i], preset.c_str()), "--preset " + preset);
        ids[i] = count > 1 ? device + "-" + std::to_string(i) : device;
        auto& o = opts[i];
        o.device_id = ids[i].c_str();
        o.duration_s = duration;
        o.time_scale = time_scale;
        o.sample_rate_hz = rate;
        o.smoothing_window = smoothing;
        o.downsample_factor = downsample;
        if (round_decimals >= -1) o.round_decimals = round_decimals;
        o.clock_skew_s = skew;
        o.appliance_class = appliance_class >= 0 ? appliance_class : static_cast<int>(i % 5);
        o.seed = agent_seed + i;
      }
      std::vector<mmp_agent_stats> stats(opts.size());
      std::vector<mmp_status> status(opts.size(), MMP_OK);
      std::vector<std::string> errors(opts.size());
      std::vector<std::thread> threads;
      for (std::size_t i = 0; i < opts.size(); ++i) {
        threads.emplace_back([&, i] {
          status[i] = mmp_agent_run(&opts[i], endpoint.c_str(), &stats[i]);
          if (status[i] != MMP_OK) errors[i] = mmp_last_error();
        });
      }
      for (auto& t : threads) t.join();
      int rc = 0;
      for (std::size_t i = 0; i < opts.size(); ++i) {
        const auto& s = stats[i];
        std::cout << ids[i] << ": power=" << s.sent_power << " env=" << s.sent_env << " acked=" << s.acked
                  << " rejected=" << s.rejected << " commands=" << s.commands << " reconnects=" << s.reconnects;
        if (status[i] != MMP_OK) {
          std::cout << " error=" << mmp_status_name(status[i]) << ": " << errors[i];
          rc = std::max(rc, exit_code_for(status[i]));
        }
        std::cout << '\n';
      }
      return rc;
    } else if (*plug) {
      char* json = nullptr;
      const auto s = mmp_http_command(admin.c_str(), device.c_str(), state == "on" ? "relay_on" : "relay_off", 0.0,
                                      &json);
      const auto body = take(json);
      if (!body.empty()) std::cout << body << '\n';
      check(s, "plug " + state);
    } else if (*query) {
      char* json = nullptr;
      check(mmp_http_query(admin.c_str(), device.c_str(), kind.c_str(), t0, t1, &json), "query");
      std::cout << take(json) << '\n';
    } else if (*latency) {
      char* json = nullptr;
      check(mmp_http_latency(admin.c_str(), device.c_str(), &json), "latency");
      std::cout << take(json) << '\n';
    } else if (*report) {
      mmp_moment_summary sum{};
      check(mmp_report_from_store(store_path.c_str(), report_device.empty() ? nullptr : report_device.c_str(),
                                  slot_len, excessive, report_out.c_str(), &sum),
            "report");
      static constexpr const char* names[] = {"good_usage", "turn_on", "turn_off", "excessive_consumption",
                                              "consumption_while_vacant"};
      std::cout << "devices: " << sum.devices << "\nslots: " << sum.slots << '\n';
      for (std::size_t i = 0; i < 5; ++i) std::cout << names[i] << ": " << sum.counts[i] << '\n';
      std::printf("wasted_fraction: %.4f\n", sum.wasted_fraction);
    }
  } catch (const Failure& f) {
    std::cerr << "error: " << f.message << '\n';
    return f.exit_code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  }
  return 0;
}
