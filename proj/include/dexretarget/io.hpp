#pragma once

// Plain-text file formats.
//
// Keypoint trajectory (one frame per line, '#' lines are headers/comments):
//   # dexretarget keypoints v1
//   # landmarks 21
//   <t> <x y z valid> x landmarks          (wrist first, then finger by finger)
//
// Joint trajectory:
//   # dexretarget joints v1
//   # dof 20
//   <t> <q_0 ... q_{n-1}>
//
// Retarget output: one line per frame with the joint angles, the unweighted
// objective terms, the weighted total, converged flag, iterations and status.
//
// Calibration: JSON document holding every CalibrationData field.

#include <nlohmann/json.hpp>
#include <yaml-cpp/yaml.h>

#include <array>
#include <charconv>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "dexretarget/retargeting.hpp"
#include "dexretarget/sync_sim.hpp"

namespace dexretarget::io {

/// Shortest representation that parses back to the same double.
inline std::string fmt(double v) {
  std::array<char, 32> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return {buf.data(), res.ptr};
}

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  out << content;
}

namespace detail {

inline std::vector<std::string_view> tokens(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

inline double number(std::string_view tok, const std::string& field, int line) {
  if (tok == "nan") return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc{} || res.ptr != tok.data() + tok.size()) {
    throw ParseError(field, line, "not a number: '" + std::string(tok) + "'");
  }
  return v;
}

template <typename Fn>
void for_each_line(const std::string& text, Fn&& fn) {
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    fn(std::string_view(line), number);
  }
}

inline bool header_value(std::string_view line, std::string_view key, std::size_t& value) {
  const auto toks = tokens(line.substr(1));
  if (toks.size() == 2 && toks[0] == key) {
    const auto res = std::from_chars(toks[1].data(), toks[1].data() + toks[1].size(), value);
    return res.ec == std::errc{};
  }
  return false;
}

}  // namespace detail

// --- keypoint trajectories ---------------------------------------------------

struct LandmarkRecord {
  double timestamp = 0.0;
  std::vector<Vec3> landmarks;
  std::vector<std::uint8_t> valid;
};

inline std::vector<LandmarkRecord> parse_landmarks(const std::string& text) {
  std::vector<LandmarkRecord> out;
  std::size_t expected = 0;
  detail::for_each_line(text, [&](std::string_view line, int n) {
    if (line.empty() || line.find_first_not_of(" \t\r") == std::string_view::npos) return;
    if (line.front() == '#') {
      std::size_t v = 0;
      if (detail::header_value(line, "landmarks", v)) expected = v;
      return;
    }
    const auto toks = detail::tokens(line);
    if (toks.size() < 5 || (toks.size() - 1) % 4 != 0) {
      throw ParseError("landmarks", n, "expected timestamp followed by (x y z valid) groups");
    }
    const std::size_t count = (toks.size() - 1) / 4;
    if (expected == 0) expected = count;
    if (count != expected) {
      throw ParseError("landmarks", n,
                       "expected " + std::to_string(expected) + " landmarks, got " + std::to_string(count));
    }
    LandmarkRecord rec;
    rec.timestamp = detail::number(toks[0], "timestamp", n);
    for (std::size_t k = 0; k < count; ++k) {
      const std::string field = "landmark[" + std::to_string(k) + "]";
      Vec3 p{detail::number(toks[1 + 4 * k], field, n), detail::number(toks[2 + 4 * k], field, n),
             detail::number(toks[3 + 4 * k], field, n)};
      const double flag = detail::number(toks[4 + 4 * k], field + ".valid", n);
      if (flag != 0.0 && flag != 1.0) throw ParseError(field + ".valid", n, "validity flag must be 0 or 1");
      rec.landmarks.push_back(p);
      rec.valid.push_back(flag == 1.0 ? 1 : 0);
    }
    out.push_back(std::move(rec));
  });
  return out;
}

inline std::vector<KeypointFrame> parse_keypoint_frames(const HandModel& model, const std::string& text) {
  std::vector<KeypointFrame> frames;
  for (const LandmarkRecord& r : parse_landmarks(text)) {
    frames.push_back(frame_from_landmarks(model, r.landmarks, r.valid, r.timestamp));
  }
  return frames;
}

inline std::string format_keypoint_frames(std::span<const KeypointFrame> frames) {
  std::ostringstream out;
  out << "# dexretarget keypoints v1\n";
  std::vector<Vec3> lm;
  std::vector<std::uint8_t> valid;
  bool header = false;
  for (const KeypointFrame& f : frames) {
    landmarks_from_frame(f, lm, valid);
    if (!header) {
      out << "# landmarks " << lm.size() << "\n";
      header = true;
    }
    out << fmt(f.timestamp);
    for (std::size_t k = 0; k < lm.size(); ++k) {
      if (valid[k]) {
        out << ' ' << fmt(lm[k].x()) << ' ' << fmt(lm[k].y()) << ' ' << fmt(lm[k].z()) << " 1";
      } else {
        out << " nan nan nan 0";
      }
    }
    out << '\n';
  }
  return out.str();
}

// --- joint trajectories ------------------------------------------------------

struct JointSample {
  double timestamp = 0.0;
  VecX q;
};

inline std::vector<JointSample> parse_joint_trajectory(const std::string& text, int dof) {
  std::vector<JointSample> out;
  detail::for_each_line(text, [&](std::string_view line, int n) {
    if (line.empty() || line.front() == '#' || line.find_first_not_of(" \t\r") == std::string_view::npos) return;
    const auto toks = detail::tokens(line);
    if (static_cast<int>(toks.size()) != dof + 1) {
      throw ParseError("joints", n, "expected timestamp and " + std::to_string(dof) + " joint angles");
    }
    JointSample s;
    s.timestamp = detail::number(toks[0], "timestamp", n);
    s.q.resize(dof);
    for (int k = 0; k < dof; ++k) s.q[k] = detail::number(toks[static_cast<std::size_t>(k) + 1], "q", n);
    out.push_back(std::move(s));
  });
  return out;
}

inline std::string format_joint_trajectory(std::span<const JointSample> samples, int dof) {
  std::ostringstream out;
  out << "# dexretarget joints v1\n# dof " << dof << "\n";
  for (const JointSample& s : samples) {
    out << fmt(s.timestamp);
    for (Eigen::Index k = 0; k < s.q.size(); ++k) out << ' ' << fmt(s.q[k]);
    out << '\n';
  }
  return out.str();
}

/// Named joint configurations, one per line: `<name> q_0 ... q_{n-1}`.
struct NamedPose {
  std::string name;
  VecX q;
};

inline std::vector<NamedPose> parse_poses(const std::string& text, int dof) {
  std::vector<NamedPose> out;
  detail::for_each_line(text, [&](std::string_view line, int n) {
    if (line.empty() || line.front() == '#' || line.find_first_not_of(" \t\r") == std::string_view::npos) return;
    const auto toks = detail::tokens(line);
    if (static_cast<int>(toks.size()) != dof + 1) {
      throw ParseError("poses", n, "expected a name and " + std::to_string(dof) + " joint angles");
    }
    NamedPose p;
    p.name = std::string(toks[0]);
    p.q.resize(dof);
    for (int k = 0; k < dof; ++k) p.q[k] = detail::number(toks[static_cast<std::size_t>(k) + 1], "q", n);
    out.push_back(std::move(p));
  });
  return out;
}

// --- retarget output ---------------------------------------------------------------

inline std::string format_stream(std::span<const StreamStep> steps, int dof) {
  std::ostringstream out;
  out << "# dexretarget retarget v1\n# dof " << dof << "\n# t";
  for (int k = 0; k < dof; ++k) out << " q" << k;
  out << " alignment coupling smoothness total converged iterations status\n";
  for (const StreamStep& s : steps) {
    out << fmt(s.timestamp);
    for (Eigen::Index k = 0; k < s.result.q.size(); ++k) out << ' ' << fmt(s.result.q[k]);
    const ObjectiveTerms& t = s.result.terms;
    out << ' ' << fmt(t.alignment) << ' ' << fmt(t.coupling) << ' ' << fmt(t.smoothness) << ' ' << fmt(t.total)
        << ' ' << (s.result.converged ? 1 : 0) << ' ' << s.result.iterations << ' ' << to_string(s.status) << '\n';
  }
  return out.str();
}

// --- calibration -------------------------------------------------------------

inline nlohmann::json vec_json(const Vec3& v) { return nlohmann::json::array({v.x(), v.y(), v.z()}); }

inline Vec3 json_vec(const nlohmann::json& j, const std::string& field) {
  if (!j.is_array() || j.size() != 3) throw ParseError(field, 0, "expected [x, y, z]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline nlohmann::json calibration_to_json(const CalibrationData& cal, const std::string& model_name) {
  nlohmann::json j;
  j["format"] = "dexretarget-calibration";
  j["version"] = 1;
  j["model"] = model_name;
  j["thumb"] = cal.thumb;
  j["scale"] = cal.scale;
  j["offset"] = nlohmann::json::array();
  for (const Vec3& u : cal.offset) j["offset"].push_back(vec_json(u));
  j["q0"] = std::vector<double>(cal.q0.data(), cal.q0.data() + cal.q0.size());
  j["coupling"] = nlohmann::json::array();
  for (const CouplingBounds& b : cal.coupling) {
    j["coupling"].push_back({{"finger", b.finger}, {"d_min", b.d_min}, {"d_max", b.d_max}});
  }
  nlohmann::json ref;
  ref["timestamp"] = cal.reference.timestamp;
  ref["points"] = nlohmann::json::array();
  for (const auto& finger : cal.reference.points) {
    nlohmann::json pts = nlohmann::json::array();
    for (const Vec3& p : finger) pts.push_back(vec_json(p));
    ref["points"].push_back(pts);
  }
  ref["valid"] = cal.reference.valid;
  j["reference"] = ref;
  return j;
}

inline CalibrationData calibration_from_json(const nlohmann::json& j) {
  try {
    if (j.value("format", "") != "dexretarget-calibration") {
      throw ParseError("format", 0, "not a calibration document");
    }
    CalibrationData cal;
    cal.thumb = j.at("thumb").get<int>();
    cal.scale = j.at("scale").get<std::vector<std::vector<double>>>();
    for (const auto& u : j.at("offset")) cal.offset.push_back(json_vec(u, "offset"));
    const auto q0 = j.at("q0").get<std::vector<double>>();
    cal.q0 = Eigen::Map<const VecX>(q0.data(), static_cast<Eigen::Index>(q0.size()));
    for (const auto& b : j.at("coupling")) {
      cal.coupling.push_back({b.at("finger").get<int>(), b.at("d_min").get<double>(), b.at("d_max").get<double>()});
    }
    const auto& ref = j.at("reference");
    cal.reference.timestamp = ref.at("timestamp").get<double>();
    for (const auto& finger : ref.at("points")) {
      std::vector<Vec3> pts;
      for (const auto& p : finger) pts.push_back(json_vec(p, "reference.points"));
      cal.reference.points.push_back(std::move(pts));
    }
    cal.reference.valid = ref.at("valid").get<std::vector<std::vector<std::uint8_t>>>();
    validate_calibration(cal);
    return cal;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("calibration", 0, e.what());
  }
}

inline std::string format_calibration(const CalibrationData& cal, const std::string& model_name) {
  return calibration_to_json(cal, model_name).dump(2) + "\n";
}

inline CalibrationData parse_calibration(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("calibration", 0, e.what());
  }
  return calibration_from_json(j);
}

// --- sync simulation -----------------------------------------------------------

/// Sync config (YAML). Starts from the regime preset, then applies overrides:
///
///   regime: hard | soft | ideal
///   rate_hz: 25
///   duration_s: 10
///   seed: 7
///   jitter: uniform | truncated_gaussian
///   dropout: 0.044                # applied to every stream
///   streams:                      # per-stream overrides by name
///     - {name: camera, capture_latency_max_s: 0.002}
struct SyncRunConfig {
  sync::StreamConfig streams;
  double duration_s = 10.0;
  sync::AssemblyPolicy policy;
};

inline SyncRunConfig parse_sync_config(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ParseError("", e.mark.line + 1, e.msg);
  }
  if (!root.IsMap()) throw ParseError("", 1, "sync config must be a mapping");
  auto get = [](const YAML::Node& n, const std::string& field, auto fallback) {
    using T = decltype(fallback);
    if (!n) return fallback;
    try {
      return n.as<T>();
    } catch (const YAML::Exception&) {
      throw ConfigError("invalid config field '" + field + "'");
    }
  };
  static const std::vector<std::string> known = {"regime",  "rate_hz", "duration_s", "seed",   "jitter",
                                                 "dropout", "streams", "window_ms",  "max_hold_periods"};
  for (const auto& kv : root) {
    const auto key = kv.first.as<std::string>();
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ConfigError("invalid config field '" + key + "': unknown key");
    }
  }

  SyncRunConfig cfg;
  const std::string regime = get(root["regime"], "regime", std::string("hard"));
  const auto seed = get(root["seed"], "seed", std::uint64_t{1});
  const double dropout = get(root["dropout"], "dropout", 0.0);
  if (regime == "hard") {
    cfg.streams = sync::hard_sync_config(dropout, seed);
  } else if (regime == "soft") {
    cfg.streams = sync::soft_sync_config(dropout, seed);
  } else if (regime == "ideal") {
    cfg.streams = sync::ideal_config(seed);
    for (auto& s : cfg.streams.streams) s.dropout = dropout;
  } else {
    throw ConfigError("invalid config field 'regime': expected hard, soft or ideal");
  }
  cfg.streams.rate_hz = get(root["rate_hz"], "rate_hz", 25.0);
  if (cfg.streams.regime == sync::Regime::hard) {
    for (auto& s : cfg.streams.streams) s.period_s = 1.0 / cfg.streams.rate_hz;
  }
  cfg.duration_s = get(root["duration_s"], "duration_s", 10.0);
  if (!(cfg.duration_s > 0.0)) throw ConfigError("invalid config field 'duration_s': must be positive");
  const std::string jitter = get(root["jitter"], "jitter", std::string("uniform"));
  if (jitter == "uniform") {
    cfg.streams.jitter = sync::JitterModel::uniform;
  } else if (jitter == "truncated_gaussian") {
    cfg.streams.jitter = sync::JitterModel::truncated_gaussian;
  } else {
    throw ConfigError("invalid config field 'jitter': expected uniform or truncated_gaussian");
  }
  cfg.policy.window_s = get(root["window_ms"], "window_ms", 0.0) * 1e-3;
  cfg.policy.max_hold_periods = get(root["max_hold_periods"], "max_hold_periods", 2);

  if (const YAML::Node streams = root["streams"]) {
    for (std::size_t k = 0; k < streams.size(); ++k) {
      const YAML::Node sn = streams[k];
      const std::string base = "streams[" + std::to_string(k) + "].";
      const std::string name = get(sn["name"], base + "name", std::string());
      auto it = std::find_if(cfg.streams.streams.begin(), cfg.streams.streams.end(),
                             [&](const sync::StreamSpec& s) { return s.name == name; });
      if (it == cfg.streams.streams.end()) {
        throw ConfigError("invalid config field '" + base + "name': unknown stream '" + name + "'");
      }
      it->period_s = get(sn["period_s"], base + "period_s", it->period_s);
      it->capture_latency_max_s = get(sn["capture_latency_max_s"], base + "capture_latency_max_s",
                                      it->capture_latency_max_s);
      it->clock_jitter_s = get(sn["clock_jitter_s"], base + "clock_jitter_s", it->clock_jitter_s);
      it->delivery_min_s = get(sn["delivery_min_s"], base + "delivery_min_s", it->delivery_min_s);
      it->delivery_max_s = get(sn["delivery_max_s"], base + "delivery_max_s", it->delivery_max_s);
      it->dropout = get(sn["dropout"], base + "dropout", it->dropout);
    }
  }
  sync::validate(cfg.streams);
  return cfg;
}

inline std::string format_event_log(const sync::SyncLog& log) {
  std::ostringstream out;
  out << "# dexretarget sync-events v1\n# regime " << sync::to_string(log.config.regime) << "\n# rate_hz "
      << fmt(log.config.rate_hz) << "\n# seed " << log.config.seed << "\n# frames " << log.frame_count
      << "\n# stream emission delivered stamp payload dropped\n";
  for (const sync::SyncEvent& e : log.events) {
    out << log.config.streams[static_cast<std::size_t>(e.stream)].name << ' ' << fmt(e.emission) << ' '
        << fmt(e.delivered) << ' ' << fmt(e.stamp) << ' ' << e.payload << ' ' << (e.dropped ? 1 : 0) << '\n';
  }
  return out.str();
}

inline std::string format_frames(const sync::SyncLog& log, const sync::Assembly& assembly) {
  std::ostringstream out;
  out << "# dexretarget sync-frames v1\n# index trigger skew_ms complete";
  for (const auto& s : log.config.streams) out << ' ' << s.name;
  out << "\n# member: event index, h<age_ms> for hold-last, - for missing\n";
  for (const sync::SyncedFrame& f : assembly.frames) {
    out << f.index << ' ' << fmt(f.trigger_time) << ' ' << fmt(f.skew_s * 1e3) << ' ' << (f.complete ? 1 : 0);
    for (const sync::FrameMember& m : f.members) {
      if (m.event < 0) {
        out << " -";
      } else if (m.held) {
        out << ' ' << m.event << "h" << fmt(m.age_s * 1e3);
      } else {
        out << ' ' << m.event;
      }
    }
    out << '\n';
  }
  for (const sync::Discarded& d : assembly.discarded) out << "# discarded " << d.event << ' ' << to_string(d.reason) << '\n';
  return out.str();
}

inline nlohmann::json report_json(const sync::AlignmentReport& r) {
  return {{"frames", r.frames},
          {"mean_skew_ms", r.mean_skew_ms},
          {"max_skew_ms", r.max_skew_ms},
          {"dropout_rate", r.dropout_rate},
          {"incomplete_rate", r.incomplete_rate},
          {"effective_hz", r.effective_hz}};
}

}  // namespace dexretarget::io
