#pragma once

// Discrete-event model of multi-sensor acquisition.
//
// Hard sync: one trigger clock at `rate_hz`; every stream captures after a
// bounded trigger latency and the host stamps each event with its trigger time.
// Soft sync: free-running sensor clocks with random phase; the host only sees
// arrival times and stamps events with them.
//
// Frames are assembled on host stamps; skew is measured on true capture times.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "dexretarget/error.hpp"

namespace dexretarget::sync {

enum class Regime { hard, soft };
enum class JitterModel { uniform, truncated_gaussian };

inline const char* to_string(Regime r) { return r == Regime::hard ? "hard" : "soft"; }
inline const char* to_string(JitterModel j) { return j == JitterModel::uniform ? "uniform" : "truncated_gaussian"; }

struct StreamSpec {
  std::string name;
  /// Free-running capture period (soft regime only).
  double period_s = 0.04;
  /// Upper bound of the trigger-to-capture latency (hard regime).
  double capture_latency_max_s = 0.0;
  /// Symmetric capture-time jitter of a free-running clock (soft regime).
  double clock_jitter_s = 0.0;
  /// Capture-to-host transport latency range.
  double delivery_min_s = 0.0;
  double delivery_max_s = 0.0;
  double dropout = 0.0;
};

struct StreamConfig {
  Regime regime = Regime::hard;
  double rate_hz = 25.0;
  JitterModel jitter = JitterModel::uniform;
  std::uint64_t seed = 1;
  std::vector<StreamSpec> streams;
};

struct SyncEvent {
  int stream = 0;
  double emission = 0.0;
  double delivered = 0.0;
  /// Host-side timestamp used for grouping (trigger time or arrival time).
  double stamp = 0.0;
  /// Per-stream sequence number; -1 for dropped events.
  std::int64_t payload = -1;
  bool dropped = false;
};

struct SyncLog {
  StreamConfig config;
  double duration_s = 0.0;
  std::int64_t frame_count = 0;
  std::vector<SyncEvent> events;
};

inline const char* kStreamNames[] = {"camera", "tactile_0", "tactile_1", "tactile_2",
                                     "tactile_3", "tactile_4", "proprioception"};

/// Camera exposure within 2 ms of the trigger, tactile reads within 7 ms.
inline StreamConfig hard_sync_config(double dropout = 0.0, std::uint64_t seed = 1) {
  StreamConfig c;
  c.regime = Regime::hard;
  c.seed = seed;
  for (const char* name : kStreamNames) {
    StreamSpec s;
    s.name = name;
    s.period_s = 1.0 / c.rate_hz;
    const std::string n = name;
    s.capture_latency_max_s = n == "camera" ? 0.002 : (n.rfind("tactile", 0) == 0 ? 0.007 : 0.001);
    s.delivery_min_s = 0.0005;
    s.delivery_max_s = 0.0015;
    s.dropout = dropout;
    c.streams.push_back(s);
  }
  return c;
}

/// Free-running clocks with 15-100 ms host arrival latency.
inline StreamConfig soft_sync_config(double dropout = 0.0, std::uint64_t seed = 1) {
  StreamConfig c;
  c.regime = Regime::soft;
  c.seed = seed;
  for (const char* name : kStreamNames) {
    StreamSpec s;
    s.name = name;
    const std::string n = name;
    s.period_s = n == "camera" ? 1.0 / 30.0 : 0.01;
    s.clock_jitter_s = 0.001;
    s.delivery_min_s = 0.015;
    s.delivery_max_s = 0.100;
    s.dropout = dropout;
    c.streams.push_back(s);
  }
  return c;
}

inline StreamConfig ideal_config(std::uint64_t seed = 1) {
  StreamConfig c = hard_sync_config(0.0, seed);
  for (StreamSpec& s : c.streams) {
    s.capture_latency_max_s = 0.0;
    s.delivery_min_s = 0.0;
    s.delivery_max_s = 0.0;
  }
  return c;
}

inline void validate(const StreamConfig& c) {
  if (!(c.rate_hz > 0.0)) throw ConfigError("rate_hz must be positive");
  if (c.streams.empty()) throw ConfigError("streams must not be empty");
  for (const StreamSpec& s : c.streams) {
    const std::string p = "streams." + s.name + ".";
    if (!(s.period_s > 0.0)) throw ConfigError(p + "period_s must be positive");
    if (!(s.dropout >= 0.0 && s.dropout <= 1.0)) throw ConfigError(p + "dropout must lie in [0, 1]");
    if (!(s.capture_latency_max_s >= 0.0)) throw ConfigError(p + "capture_latency_max_s must be non-negative");
    if (!(s.clock_jitter_s >= 0.0)) throw ConfigError(p + "clock_jitter_s must be non-negative");
    if (!(s.delivery_min_s >= 0.0 && s.delivery_max_s >= s.delivery_min_s)) {
      throw ConfigError(p + "delivery range must satisfy 0 <= delivery_min_s <= delivery_max_s");
    }
  }
}

namespace detail {

inline std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

class Sampler {
 public:
  Sampler(std::uint64_t seed, JitterModel model) : rng_(seed), model_(model) {}

  double bounded(double lo, double hi) {
    if (!(hi > lo)) return lo;
    if (model_ == JitterModel::uniform) return lo + unit_(rng_) * (hi - lo);
    const double mean = 0.5 * (lo + hi);
    const double sigma = (hi - lo) / 6.0;
    std::normal_distribution<double> normal(mean, sigma);
    for (;;) {
      const double x = normal(rng_);
      if (x >= lo && x <= hi) return x;
    }
  }

  bool drop(double p) { return unit_(rng_) < p; }
  double unit() { return unit_(rng_); }

 private:
  std::mt19937_64 rng_;
  JitterModel model_;
  std::uniform_real_distribution<double> unit_{0.0, 1.0};
};

}  // namespace detail

/// Event log over `duration_s`, time-ordered by host stamp. Each stream
/// draws from its own seeded generator.
inline SyncLog simulate(const StreamConfig& config, double duration_s) {
  validate(config);
  if (!(duration_s > 0.0)) throw ConfigError("duration must be positive");
  SyncLog log;
  log.config = config;
  log.duration_s = duration_s;
  const double period = 1.0 / config.rate_hz;
  log.frame_count = static_cast<std::int64_t>(std::floor(duration_s * config.rate_hz + 1e-9));

  for (std::size_t sidx = 0; sidx < config.streams.size(); ++sidx) {
    const StreamSpec& s = config.streams[sidx];
    detail::Sampler rng(detail::mix(config.seed ^ detail::mix(sidx + 1)), config.jitter);
    std::int64_t payload = 0;
    auto emit = [&](double emission, double stamp_if_hard) {
      SyncEvent e;
      e.stream = static_cast<int>(sidx);
      e.emission = emission;
      const double delivery = rng.bounded(s.delivery_min_s, s.delivery_max_s);
      e.dropped = rng.drop(s.dropout);
      e.delivered = e.dropped ? emission : emission + delivery;
      e.stamp = config.regime == Regime::hard ? stamp_if_hard : e.delivered;
      e.payload = e.dropped ? -1 : payload++;
      log.events.push_back(e);
    };

    if (config.regime == Regime::hard) {
      for (std::int64_t k = 0; k < log.frame_count; ++k) {
        const double trigger = static_cast<double>(k) * period;
        emit(trigger + rng.bounded(0.0, s.capture_latency_max_s), trigger);
      }
    } else {
      const double phase = rng.unit() * s.period_s;
      for (std::int64_t m = 0;; ++m) {
        const double tick = phase + static_cast<double>(m) * s.period_s;
        if (tick >= duration_s) break;
        const double emission = std::max(0.0, tick + rng.bounded(-s.clock_jitter_s, s.clock_jitter_s));
        emit(emission, 0.0);
      }
    }
  }
  std::stable_sort(log.events.begin(), log.events.end(), [](const SyncEvent& a, const SyncEvent& b) {
    return a.stamp < b.stamp || (a.stamp == b.stamp && a.stream < b.stream);
  });
  return log;
}

// --- assembly ----------------------------------------------------------------

struct AssemblyPolicy {
  /// Width of the grouping window after each trigger; <= 0 means one period.
  double window_s = 0.0;
  /// Oldest hold-last member allowed, in frame periods.
  int max_hold_periods = 2;
};

struct FrameMember {
  /// Index into the log's events, -1 when missing.
  std::int64_t event = -1;
  bool held = false;
  double age_s = 0.0;
};

struct SyncedFrame {
  std::int64_t index = 0;
  double trigger_time = 0.0;
  std::vector<FrameMember> members;
  double skew_s = 0.0;
  bool complete = true;
};

enum class DiscardReason { out_of_range, outside_window, superseded };

inline const char* to_string(DiscardReason r) {
  switch (r) {
    case DiscardReason::out_of_range: return "out_of_range";
    case DiscardReason::outside_window: return "outside_window";
    case DiscardReason::superseded: return "superseded";
  }
  return "?";
}

struct Discarded {
  std::int64_t event = 0;
  DiscardReason reason = DiscardReason::out_of_range;
};

struct Assembly {
  double period_s = 0.04;
  std::vector<SyncedFrame> frames;
  std::vector<Discarded> discarded;
};

/// Groups events into one frame per trigger period. A stream with no event in
/// a frame's window repeats its last fresh event if that is at most
/// `max_hold_periods` old; otherwise the frame is incomplete.
inline Assembly assemble_frames(const SyncLog& log, const AssemblyPolicy& policy = {}) {
  if (policy.max_hold_periods < 0) throw ConfigError("max_hold_periods must be non-negative");
  const double period = 1.0 / log.config.rate_hz;
  const double window = policy.window_s > 0.0 ? policy.window_s : period;
  const std::size_t stream_count = log.config.streams.size();
  const std::int64_t n = log.frame_count;

  Assembly out;
  out.period_s = period;
  std::vector<std::int64_t> fresh(static_cast<std::size_t>(n) * stream_count, -1);
  double last_stamp = -std::numeric_limits<double>::infinity();
  for (std::size_t e = 0; e < log.events.size(); ++e) {
    const SyncEvent& ev = log.events[e];
    if (ev.stamp < last_stamp) throw ConfigError("event log is not time-ordered");
    last_stamp = ev.stamp;
    if (ev.dropped) continue;
    const auto idx = static_cast<std::int64_t>(e);
    const auto k = static_cast<std::int64_t>(std::floor(ev.stamp / period + 1e-9));
    if (k < 0 || k >= n) {
      out.discarded.push_back({idx, DiscardReason::out_of_range});
      continue;
    }
    if (ev.stamp - static_cast<double>(k) * period >= window) {
      out.discarded.push_back({idx, DiscardReason::outside_window});
      continue;
    }
    std::int64_t& slot = fresh[static_cast<std::size_t>(k) * stream_count + static_cast<std::size_t>(ev.stream)];
    if (slot < 0) {
      slot = idx;
    } else if (ev.emission > log.events[static_cast<std::size_t>(slot)].emission) {
      out.discarded.push_back({slot, DiscardReason::superseded});
      slot = idx;
    } else {
      out.discarded.push_back({idx, DiscardReason::superseded});
    }
  }

  std::vector<std::int64_t> last_frame(stream_count, -1);
  std::vector<std::int64_t> last_event(stream_count, -1);
  out.frames.reserve(static_cast<std::size_t>(n));
  for (std::int64_t k = 0; k < n; ++k) {
    SyncedFrame f;
    f.index = k;
    f.trigger_time = static_cast<double>(k) * period;
    f.members.resize(stream_count);
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t s = 0; s < stream_count; ++s) {
      FrameMember& m = f.members[s];
      const std::int64_t ev = fresh[static_cast<std::size_t>(k) * stream_count + s];
      if (ev >= 0) {
        m.event = ev;
        last_frame[s] = k;
        last_event[s] = ev;
        const double t = log.events[static_cast<std::size_t>(ev)].emission;
        lo = std::min(lo, t);
        hi = std::max(hi, t);
      } else if (last_frame[s] >= 0 && k - last_frame[s] <= policy.max_hold_periods) {
        m.event = last_event[s];
        m.held = true;
        m.age_s = static_cast<double>(k - last_frame[s]) * period;
      } else {
        f.complete = false;
      }
    }
    f.skew_s = hi >= lo ? hi - lo : 0.0;
    out.frames.push_back(std::move(f));
  }
  return out;
}

struct AlignmentReport {
  std::int64_t frames = 0;
  double mean_skew_ms = 0.0;
  double max_skew_ms = 0.0;
  /// Fraction of (frame, stream) slots without a fresh event.
  double dropout_rate = 0.0;
  double incomplete_rate = 0.0;
  double effective_hz = 0.0;
};

inline AlignmentReport alignment_report(const Assembly& assembly) {
  if (assembly.frames.empty()) throw ConfigError("cannot report on an empty frame sequence");
  AlignmentReport r;
  r.frames = static_cast<std::int64_t>(assembly.frames.size());
  std::int64_t slots = 0;
  std::int64_t missing = 0;
  std::int64_t incomplete = 0;
  double skew_sum = 0.0;
  for (const SyncedFrame& f : assembly.frames) {
    skew_sum += f.skew_s;
    r.max_skew_ms = std::max(r.max_skew_ms, f.skew_s * 1e3);
    for (const FrameMember& m : f.members) {
      ++slots;
      if (m.event < 0 || m.held) ++missing;
    }
    if (!f.complete) ++incomplete;
  }
  const auto frames = static_cast<double>(r.frames);
  r.mean_skew_ms = skew_sum / frames * 1e3;
  r.dropout_rate = slots > 0 ? static_cast<double>(missing) / static_cast<double>(slots) : 0.0;
  r.incomplete_rate = static_cast<double>(incomplete) / frames;
  r.effective_hz = static_cast<double>(r.frames - incomplete) / (frames * assembly.period_s);
  return r;
}

/// Fraction of dropped events in a raw log.
inline double log_dropout_rate(const SyncLog& log) {
  if (log.events.empty()) return 0.0;
  const auto dropped = std::count_if(log.events.begin(), log.events.end(), [](const SyncEvent& e) { return e.dropped; });
  return static_cast<double>(dropped) / static_cast<double>(log.events.size());
}

}  // namespace dexretarget::sync
