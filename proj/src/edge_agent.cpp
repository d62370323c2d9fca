#include "mmplug/edge_agent.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <deque>
#include <numbers>
#include <thread>

#include "mmplug/common.hpp"
#include "mmplug/net.hpp"
#include "mmplug/tracegen.hpp"

namespace mmplug::agent {

using Clock = std::chrono::steady_clock;

void Preprocessing::validate() const {
  if (smoothing_window < 1) throw Error(ErrorCode::InvalidArgument, "smoothing_window must be >= 1");
  if (downsample_factor < 1) throw Error(ErrorCode::InvalidArgument, "downsample_factor must be >= 1");
  if (round_decimals > 12) throw Error(ErrorCode::InvalidArgument, "round_decimals must be <= 12");
}

std::vector<double> preprocess(std::span<const double> raw, const Preprocessing& cfg) {
  cfg.validate();
  const std::size_t n = raw.size();
  const std::size_t w = cfg.smoothing_window;
  const std::size_t left = (w - 1) / 2;
  const std::size_t right = w / 2;

  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + raw[i];

  const double scale = cfg.round_decimals >= 0 ? std::pow(10.0, cfg.round_decimals) : 0.0;
  std::vector<double> out;
  out.reserve((n + cfg.downsample_factor - 1) / cfg.downsample_factor);
  for (std::size_t i = 0; i < n; i += cfg.downsample_factor) {
    // truncated at the edges
    const std::size_t lo = i >= left ? i - left : 0;
    const std::size_t hi = std::min(n, i + right + 1);
    double v = w == 1 ? raw[i] : (prefix[hi] - prefix[lo]) / static_cast<double>(hi - lo);
    if (scale > 0.0) v = std::round(v * scale) / scale;
    out.push_back(v);
  }
  return out;
}

std::optional<LatencyPreset> find_preset(std::string_view name) {
  for (const auto& p : kPresets) {
    if (p.name == name) return p;
  }
  return std::nullopt;
}

void AgentConfig::apply_preset(const LatencyPreset& preset) {
  processing_delay_s = preset.processing_delay_s;
  network_latency_s = preset.network_latency_s;
}

void AgentConfig::validate() const {
  preprocessing.validate();
  if (device_id.empty()) throw Error(ErrorCode::InvalidArgument, "device_id must not be empty");
  if (!(sample_rate_hz > 0.0) || !std::isfinite(sample_rate_hz)) {
    throw Error(ErrorCode::InvalidArgument, "sample_rate_hz must be positive");
  }
  if (!(duration_s > 0.0)) throw Error(ErrorCode::InvalidArgument, "duration_s must be positive");
  if (processing_delay_s < 0.0 || network_latency_s < 0.0 || jitter_s < 0.0) {
    throw Error(ErrorCode::InvalidArgument, "delays must be >= 0");
  }
  if (jitter_s > network_latency_s && network_latency_s > 0.0) {
    throw Error(ErrorCode::InvalidArgument, "jitter_s must not exceed network_latency_s");
  }
  if (!(time_scale > 0.0)) throw Error(ErrorCode::InvalidArgument, "time_scale must be positive");
  if (env_every < 0) throw Error(ErrorCode::InvalidArgument, "env_every must be >= 0");
  if (max_retries < 0 || backoff_ms < 0) throw Error(ErrorCode::InvalidArgument, "retry settings must be >= 0");
}

EnvSimulator::EnvSimulator(std::uint64_t seed, double period_s) : rng_(seed), period_s_(period_s) {
  std::uniform_real_distribution<double> phase(0.0, period_s);
  phase_s_ = phase(rng_);
}

wire::EnvReading EnvSimulator::sample(const std::string& device, double t_s, std::int64_t ts_ms) {
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double day = std::sin(2.0 * std::numbers::pi * (t_s + phase_s_) / period_s_);

  wire::EnvReading r;
  r.device = device;
  r.ts_ms = ts_ms;
  r.temp_c = std::clamp(22.0 + 4.0 * day + 0.2 * noise(rng_), -40.0, 80.0);
  r.hum_pct = std::clamp(45.0 - 10.0 * day + 1.0 * noise(rng_), 0.0, 100.0);
  if (day <= 0.0) {
    r.lux = 0.0;  // dark
  } else {
    r.lux = std::clamp(800.0 * day + 5.0 * noise(rng_), 0.1, 40000.0);
  }
  occupied_ = occupied_ ? u(rng_) < 0.98 : u(rng_) < 0.02;
  r.occupied = occupied_;
  return r;
}

namespace {

/// FIFO whose release times never decrease.
template <class T>
class DelayQueue {
 public:
  void push(T value, Clock::time_point due) {
    std::lock_guard lock(mu_);
    due = std::max(due, last_);
    last_ = due;
    items_.emplace_back(due, std::move(value));
    cv_.notify_all();
  }

  void close() {
    std::lock_guard lock(mu_);
    closed_ = true;
    cv_.notify_all();
  }

  /// nullopt once closed and drained, or when `abort` is raised.
  std::optional<T> pop(const std::atomic<bool>& abort) {
    std::unique_lock lock(mu_);
    for (;;) {
      if (abort) return std::nullopt;
      const auto now = Clock::now();
      if (items_.empty()) {
        if (closed_) return std::nullopt;
        cv_.wait_for(lock, std::chrono::milliseconds(50));
        continue;
      }
      if (now >= items_.front().first) {
        T v = std::move(items_.front().second);
        items_.pop_front();
        return v;
      }
      cv_.wait_until(lock, std::min(items_.front().first, now + std::chrono::milliseconds(50)));
    }
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<std::pair<Clock::time_point, T>> items_;
  Clock::time_point last_{};
  bool closed_ = false;
};

struct Tick {
  bool power = true;
  double watts = 0.0;
  double t_s = 0.0;
};

std::vector<double> default_trace(const AgentConfig& cfg) {
  const auto fleet = tracegen::default_fleet();
  if (cfg.appliance_class < 0 || cfg.appliance_class >= static_cast<int>(fleet.size())) {
    throw Error(ErrorCode::InvalidArgument, "appliance_class out of range");
  }
  const auto& model = fleet[static_cast<std::size_t>(cfg.appliance_class)];
  tracegen::TraceOptions opt;
  opt.duration_s = cfg.duration_s;
  opt.sample_rate_hz = cfg.sample_rate_hz;
  opt.seed = mix_seed(cfg.seed, 1);
  opt.device_id = cfg.device_id;
  const tracegen::ScheduleEntry entry{model.class_id, std::min(5.0, cfg.duration_s / 10.0), cfg.duration_s};
  return tracegen::generate_trace(model, entry, opt).samples;
}

}  // namespace

EdgeAgent::EdgeAgent(AgentConfig config, std::vector<double> raw_power) : cfg_(std::move(config)) {
  cfg_.validate();
  if (raw_power.empty()) raw_power = default_trace(cfg_);
  reduced_ = preprocess(raw_power, cfg_.preprocessing);
  relay_ = cfg_.relay_on;
  out_rate_hz_ = cfg_.sample_rate_hz / static_cast<double>(cfg_.preprocessing.downsample_factor);
}

EdgeAgent::~EdgeAgent() = default;

void EdgeAgent::request_stop() noexcept { stop_ = true; }

bool EdgeAgent::relay_on() const {
  std::lock_guard lock(state_mu_);
  return relay_;
}

double EdgeAgent::output_rate_hz() const {
  std::lock_guard lock(state_mu_);
  return out_rate_hz_;
}

wire::Ack EdgeAgent::handle_command(const wire::Command& command) {
  wire::Ack ack;
  ack.of = command.name.empty() ? wire::command_name(command.kind) : command.name;
  if (command.id != 0) ack.id = command.id;
  std::lock_guard lock(state_mu_);
  switch (command.kind) {
    case wire::CommandKind::RelayOn:
      relay_ = true;
      break;
    case wire::CommandKind::RelayOff:
      relay_ = false;
      break;
    case wire::CommandKind::SetRate:
      if (!(command.value > 0.0) || !std::isfinite(command.value)) {
        ack.ok = false;
        ack.reason = "invalid_rate";
      } else {
        out_rate_hz_ = command.value;
      }
      break;
    case wire::CommandKind::Unknown:
      ack.ok = false;
      ack.reason = "unknown_command";
      break;
  }
  return ack;
}

struct EdgeAgent::Session {
  std::mutex mu;
  std::shared_ptr<net::LineStream> stream;
  std::atomic<bool> broken{false};
  std::atomic<bool> abort{false};
  std::atomic<std::size_t> acked{0};
  std::atomic<std::size_t> rejected{0};
  std::atomic<std::size_t> commands{0};

  std::shared_ptr<net::LineStream> current() {
    std::lock_guard lock(mu);
    return stream;
  }
};

SessionStats EdgeAgent::run(const std::string& host, std::uint16_t port) {
  SessionStats stats;
  Session session;

  auto connect_once = [&]() -> bool {
    int delay = cfg_.backoff_ms;
    for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
      if (stop_) return false;
      try {
        auto s = net::LineStream::connect(host, port);
        if (s->write_line(wire::encode(wire::Hello{cfg_.device_id}))) {
          std::lock_guard lock(session.mu);
          if (session.stream) session.stream->shutdown();
          session.stream = std::move(s);
          session.broken = false;
          return true;
        }
      } catch (const Error& e) {
        stats.error = e.what();
      }
      if (attempt < cfg_.max_retries) {
        std::this_thread::sleep_for(std::chrono::milliseconds(delay));
        delay *= 2;
      }
    }
    return false;
  };

  if (!connect_once()) {
    stats.failed = true;
    if (stats.error.empty()) stats.error = "stopped before connecting";
    return stats;
  }
  stats.error.clear();

  std::thread reader([&] {
    while (!session.abort) {
      auto stream = session.current();
      bool timed_out = false;
      const auto line = stream ? stream->read_line(std::chrono::milliseconds(100), &timed_out) : std::nullopt;
      if (!line) {
        if (!timed_out) {
          session.broken = true;
          std::this_thread::sleep_for(std::chrono::milliseconds(20));
        }
        continue;
      }
      wire::Message msg;
      try {
        msg = wire::parse(*line);
      } catch (const Error&) {
        continue;
      }
      if (const auto* cmd = std::get_if<wire::Command>(&msg)) {
        ++session.commands;
        stream->write_line(wire::encode(handle_command(*cmd)));
      } else if (const auto* ack = std::get_if<wire::Ack>(&msg)) {
        if (!ack->id) ++(ack->ok ? session.acked : session.rejected);
      }
    }
  });

  DelayQueue<Tick> processing;
  DelayQueue<std::pair<bool, std::string>> network;
  std::atomic<std::size_t> sent_power{0};
  std::atomic<std::size_t> sent_env{0};

  std::thread stamper([&] {
    EnvSimulator env(mix_seed(cfg_.seed, 3));
    std::mt19937_64 rng(mix_seed(cfg_.seed, 2));
    std::uniform_real_distribution<double> jitter(-cfg_.jitter_s, cfg_.jitter_s);
    const auto skew_ms = static_cast<std::int64_t>(std::llround(cfg_.clock_skew_s * 1000.0));
    std::int64_t seq = 0;
    while (auto tick = processing.pop(session.abort)) {
      wire::Message msg;
      {
        std::lock_guard lock(state_mu_);
        last_ts_ = std::max(wall_clock_ms() + skew_ms, last_ts_ == INT64_MIN ? INT64_MIN : last_ts_ + 1);
        if (tick->power) {
          msg = wire::PowerReading{cfg_.device_id, last_ts_, relay_ ? tick->watts : 0.0, ++seq};
        } else {
          auto r = env.sample(cfg_.device_id, tick->t_s, last_ts_);
          r.seq = ++seq;
          msg = r;
        }
      }
      const auto delay = std::chrono::duration<double>(cfg_.network_latency_s + jitter(rng));
      network.push({tick->power, wire::encode(msg)}, Clock::now() + std::chrono::duration_cast<Clock::duration>(delay));
    }
    network.close();
  });

  std::atomic<std::size_t> delivered{0};
  std::atomic<std::size_t> reconnects{0};
  std::atomic<bool> failed{false};
  std::thread sender([&] {
    while (auto item = network.pop(session.abort)) {
      const auto& line = item->second;
      for (;;) {
        auto stream = session.current();
        if (stream && !session.broken && stream->write_line(line)) break;
        if (!connect_once()) {
          failed = true;
          session.abort = true;
          return;
        }
        ++reconnects;
      }
      ++delivered;
      ++(item->first ? sent_power : sent_env);
    }
  });

  // emission loop: one tick per reduced sample at the (possibly changed) output rate
  auto next = Clock::now();
  const auto proc = std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(cfg_.processing_delay_s));
  double t_s = 0.0;
  for (std::size_t i = 0; i < reduced_.size() && !stop_ && !session.abort; ++i) {
    while (Clock::now() < next && !stop_ && !session.abort) {
      std::this_thread::sleep_until(std::min(next, Clock::now() + std::chrono::milliseconds(50)));
    }
    if (stop_ || session.abort) break;
    const auto now = Clock::now();
    processing.push(Tick{true, reduced_[i], t_s}, now + proc);
    if (cfg_.env_every > 0 && i % static_cast<std::size_t>(cfg_.env_every) == 0) {
      processing.push(Tick{false, 0.0, t_s}, now + proc);
    }
    const double rate = output_rate_hz();
    t_s += 1.0 / rate;
    next += std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(1.0 / (rate * cfg_.time_scale)));
  }
  processing.close();
  if (stop_) session.abort = true;
  stamper.join();
  sender.join();

  // wait for the remaining acks
  const auto deadline = Clock::now() + std::chrono::seconds(3);
  while (!session.abort && session.acked + session.rejected < delivered && Clock::now() < deadline) {
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  session.abort = true;
  reader.join();
  if (auto s = session.current()) s->shutdown();

  stats.sent_power = sent_power;
  stats.sent_env = sent_env;
  stats.acked = session.acked;
  stats.rejected = session.rejected;
  stats.commands = session.commands;
  stats.reconnects = reconnects;
  stats.failed = failed;
  if (failed && stats.error.empty()) stats.error = "connection lost after retries";
  if (!failed) stats.error.clear();
  return stats;
}

}  // namespace mmplug::agent
