#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mmplug/wire.hpp"

namespace mmplug::agent {

struct Preprocessing {
  std::size_t smoothing_window = 1;
  std::size_t downsample_factor = 1;
  int round_decimals = -1;  ///< negative: no rounding

  void validate() const;
};

/// Centered moving average, then every factor-th sample, then rounding.
/// Output length is ceil(n / factor).
std::vector<double> preprocess(std::span<const double> raw, const Preprocessing& cfg);

struct LatencyPreset {
  std::string_view name;
  double processing_delay_s;
  double network_latency_s;
};

/// Measured per micro-controller on the physical plug.
inline constexpr std::array<LatencyPreset, 2> kPresets{{
    {"esp32", 0.16, 3.19},
    {"mkr1010", 1.05, 2.25},
}};

std::optional<LatencyPreset> find_preset(std::string_view name);

struct AgentConfig {
  std::string device_id = "plug-0";
  double sample_rate_hz = 1.0;
  double duration_s = 60.0;
  Preprocessing preprocessing;
  double processing_delay_s = 0.16;
  double network_latency_s = 3.19;
  double jitter_s = 0.02;      ///< uniform +/- on each network delay
  double clock_skew_s = 0.0;   ///< added to every agent timestamp
  bool relay_on = true;
  /// Sampling cadence runs this many times faster than real time. Delays
  /// are never scaled.
  double time_scale = 1.0;
  int env_every = 5;  ///< one env reading per this many power readings; 0 disables
  int appliance_class = 1;  ///< index into the default fleet for the built-in trace
  std::uint64_t seed = 0;
  int max_retries = 5;
  int backoff_ms = 100;  ///< doubles after each failed attempt

  void apply_preset(const LatencyPreset& preset);
  void validate() const;
};

/// Synthetic room conditions: slow daily sinusoids plus noise and a
/// two-state occupancy chain.
class EnvSimulator {
 public:
  explicit EnvSimulator(std::uint64_t seed, double period_s = 86400.0);
  /// Advances the occupancy chain by one step.
  wire::EnvReading sample(const std::string& device, double t_s, std::int64_t ts_ms);

 private:
  std::mt19937_64 rng_;
  double period_s_;
  double phase_s_;
  bool occupied_ = true;
};

struct SessionStats {
  std::size_t sent_power = 0;
  std::size_t sent_env = 0;
  std::size_t acked = 0;     ///< readings acknowledged ok
  std::size_t rejected = 0;  ///< readings acknowledged with an error
  std::size_t commands = 0;
  std::size_t reconnects = 0;
  bool failed = false;
  std::string error;
};

/// One simulated plug. run() samples the trace at the configured cadence,
/// stamps each reading once its processing delay has elapsed, and delivers
/// it after the network delay. Commands from the server are applied under
/// the same lock the stamping uses and acknowledged at once.
class EdgeAgent {
 public:
  /// An empty trace selects a generated one for `appliance_class`.
  explicit EdgeAgent(AgentConfig config, std::vector<double> raw_power = {});
  ~EdgeAgent();
  EdgeAgent(const EdgeAgent&) = delete;
  EdgeAgent& operator=(const EdgeAgent&) = delete;

  /// Blocks until every reading is delivered and acknowledged, the session
  /// fails, or request_stop() is called.
  SessionStats run(const std::string& host, std::uint16_t port);
  void request_stop() noexcept;

  wire::Ack handle_command(const wire::Command& command);
  bool relay_on() const;
  double output_rate_hz() const;
  /// Power values the agent will emit, before relay gating.
  const std::vector<double>& reduced_power() const noexcept { return reduced_; }

 private:
  struct Session;

  AgentConfig cfg_;
  std::vector<double> reduced_;
  mutable std::mutex state_mu_;
  bool relay_;
  double out_rate_hz_;
  std::int64_t last_ts_ = INT64_MIN;
  std::atomic<bool> stop_{false};
};

}  // namespace mmplug::agent
