// dexretarget: batch front-end for calibration, retargeting, dexterity
// metrics and acquisition-sync simulation.
//
// Every run writes manifest.json next to its outputs; `dexretarget replay`
// reruns a manifest into a new directory.
//
// Exit codes: 0 success, 1 partial per-frame failures, 2 input/config error.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "dexretarget/io.hpp"
#include "dexretarget/metrics.hpp"
#include "dexretarget/model_io.hpp"
#include "dexretarget/retargeting.hpp"
#include "dexretarget/sync_sim.hpp"
#include "dexretarget/synthetic.hpp"

namespace fs = std::filesystem;
using namespace dexretarget;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

enum class Verbosity { quiet = 0, info = 1, debug = 2 };

Verbosity verbosity() {
  const char* env = std::getenv("DEXRETARGET_LOG");
  if (!env) return Verbosity::info;
  const std::string v = env;
  if (v == "quiet" || v == "0" || v == "off") return Verbosity::quiet;
  if (v == "debug" || v == "2") return Verbosity::debug;
  return Verbosity::info;
}

void log(Verbosity level, const std::string& msg) {
  if (static_cast<int>(level) <= static_cast<int>(verbosity())) std::cerr << msg << '\n';
}

class InputError : public Error {
 public:
  using Error::Error;
};

std::string absolute(const std::string& p) { return p.empty() ? p : fs::absolute(p).lexically_normal().string(); }

struct Manifest {
  Manifest(std::string sub, std::vector<std::string> args) : subcommand(std::move(sub)), argv(std::move(args)) {}

  std::string subcommand;
  std::vector<std::string> argv;
  json inputs = json::object();
  json options = json::object();
  std::optional<std::uint64_t> seed;
};

void write_manifest(const fs::path& out, const Manifest& m) {
  json j;
  j["tool"] = "dexretarget";
  j["version"] = kVersion;
  j["subcommand"] = m.subcommand;
  j["argv"] = m.argv;
  j["inputs"] = m.inputs;
  j["options"] = m.options;
  if (m.seed) j["seed"] = *m.seed;
  j["out"] = absolute(out.string());
  io::write_text((out / "manifest.json").string(), j.dump(2) + "\n");
}

fs::path prepare_out(const std::string& dir) {
  if (dir.empty()) throw InputError("--out is required");
  fs::create_directories(dir);
  return fs::path(dir);
}

std::string fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

VecX load_q0(const HandModel& model, const std::string& path) {
  if (path.empty()) return model.rest_pose();
  const auto samples = io::parse_joint_trajectory(io::read_text(path), model.dof());
  if (samples.empty()) throw InputError("'" + path + "' holds no joint configuration");
  return samples.front().q;
}

// --- calibrate -----------------------------------------------------------------

struct CalibrateArgs {
  std::string model, keypoints, q0, out;
};

int run_calibrate(const CalibrateArgs& a) {
  const HandModel model = load_hand_model_file(a.model);
  const auto frames = io::parse_keypoint_frames(model, io::read_text(a.keypoints));
  if (frames.empty()) throw InputError("'" + a.keypoints + "' holds no keypoint frame");
  const VecX q0 = load_q0(model, a.q0);
  const CalibrationData cal = calibrate(model, q0, frames.front());

  const fs::path out = prepare_out(a.out);
  io::write_text((out / "calibration.json").string(), io::format_calibration(cal, model.name()));
  Manifest m{"calibrate", {"calibrate", "--model", absolute(a.model), "--keypoints", absolute(a.keypoints)}};
  if (!a.q0.empty()) {
    m.argv.insert(m.argv.end(), {"--q0", absolute(a.q0)});
    m.inputs["q0"] = absolute(a.q0);
  }
  m.inputs["model"] = absolute(a.model);
  m.inputs["keypoints"] = absolute(a.keypoints);
  write_manifest(out, m);

  std::cout << "calibration for '" << model.name() << "'\n";
  for (int i = 0; i < model.finger_count(); ++i) {
    std::cout << "  " << model.finger(i).name << ": r =";
    for (double r : cal.scale[static_cast<std::size_t>(i)]) std::cout << ' ' << fixed(r);
    const Vec3& u = cal.offset[static_cast<std::size_t>(i)];
    std::cout << "  u = (" << fixed(u.x()) << ", " << fixed(u.y()) << ", " << fixed(u.z()) << ")\n";
  }
  return 0;
}

// --- retarget ------------------------------------------------------------------

struct RetargetArgs {
  std::string model, calibration, trajectory, truth, out;
  double lambda1 = 1.0, lambda2 = 1.0, lambda3 = 1.0;
  double k = 10.0, c = 0.5;
  double length_unit = kDefaultLengthUnit;
  std::vector<double> baseline;
  int max_iterations = 100;
  double tolerance = 1e-6;
};

struct StreamSummary {
  std::size_t frames = 0;
  std::size_t rejected = 0;
  std::size_t unconverged = 0;
  double mean_alignment = 0.0;
  double max_alignment = 0.0;
};

StreamSummary summarize(const std::vector<StreamStep>& steps) {
  StreamSummary s;
  s.frames = steps.size();
  std::size_t solved = 0;
  for (const StreamStep& st : steps) {
    if (st.status == FrameStatus::rejected) {
      ++s.rejected;
      continue;
    }
    if (!st.result.converged) ++s.unconverged;
    ++solved;
    s.mean_alignment += st.result.terms.alignment;
    s.max_alignment = std::max(s.max_alignment, st.result.terms.alignment);
  }
  if (solved) s.mean_alignment /= static_cast<double>(solved);
  return s;
}

json summary_json(const StreamSummary& s) {
  return {{"frames", s.frames},
          {"rejected", s.rejected},
          {"unconverged", s.unconverged},
          {"mean_alignment_residual", s.mean_alignment},
          {"max_alignment_residual", s.max_alignment}};
}

std::string alpha_tag(double alpha) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", alpha);
  return buf;
}

int run_retarget(const RetargetArgs& a) {
  const HandModel model = load_hand_model_file(a.model);
  const CalibrationData cal = io::parse_calibration(io::read_text(a.calibration));
  if (static_cast<int>(cal.scale.size()) != model.finger_count() || cal.q0.size() != model.dof()) {
    throw InputError("calibration does not match model '" + model.name() + "'");
  }
  const auto frames = io::parse_keypoint_frames(model, io::read_text(a.trajectory));
  if (frames.empty()) throw InputError("'" + a.trajectory + "' holds no keypoint frame");

  RetargetOptions opt;
  opt.weights = {a.lambda1, a.lambda2, a.lambda3};
  opt.k = a.k;
  opt.c = a.c;
  opt.length_unit = a.length_unit;
  opt.solver.max_iterations = a.max_iterations;
  opt.solver.step_tolerance = a.tolerance;
  opt.solver.objective_tolerance = a.tolerance;
  for (double alpha : a.baseline) {
    if (!(alpha > 0.0)) throw InputError("--baseline must be positive");
  }

  const fs::path out = prepare_out(a.out);
  const auto steps = retarget_stream(model, cal, frames, opt);
  io::write_text((out / "retarget.traj").string(), io::format_stream(steps, model.dof()));
  const StreamSummary main = summarize(steps);

  json summary;
  summary["conformal"] = summary_json(main);
  summary["weights"] = {{"lambda1", a.lambda1}, {"lambda2", a.lambda2}, {"lambda3", a.lambda3}};
  summary["sigmoid"] = {{"k", a.k}, {"c", a.c}};
  summary["length_unit_m"] = a.length_unit;

  std::cout << "retargeted " << main.frames << " frames (" << main.rejected << " rejected, " << main.unconverged
            << " not converged)\n";
  std::cout << "weights: lambda1=" << fixed(a.lambda1) << " lambda2=" << fixed(a.lambda2)
            << " lambda3=" << fixed(a.lambda3) << " k=" << fixed(a.k) << " c=" << fixed(a.c) << "\n";
  std::cout << "conformal mean alignment residual: " << fixed(main.mean_alignment) << "\n";

  if (!a.truth.empty()) {
    const auto truth = io::parse_joint_trajectory(io::read_text(a.truth), model.dof());
    if (truth.size() != steps.size()) throw InputError("truth trajectory length differs from keypoint trajectory");
    double total = 0.0;
    double worst = 0.0;
    for (std::size_t t = 0; t < steps.size(); ++t) {
      const double err = (steps[t].result.q - truth[t].q).cwiseAbs().maxCoeff();
      total += err;
      worst = std::max(worst, err);
    }
    const double mean = total / static_cast<double>(steps.size());
    summary["recovery"] = {{"mean_max_abs_error_rad", mean}, {"max_abs_error_rad", worst}};
    std::cout << "mean recovery error: " << fixed(mean) << " rad (max " << fixed(worst) << ")\n";
  }

  json baselines = json::array();
  for (double alpha : a.baseline) {
    const auto base_steps = retarget_stream(model, cal, frames, opt, TargetMapping{alpha});
    io::write_text((out / ("baseline_alpha" + alpha_tag(alpha) + ".traj")).string(),
                   io::format_stream(base_steps, model.dof()));
    const StreamSummary bs = summarize(base_steps);
    std::size_t worse_or_equal = 0;
    for (std::size_t t = 0; t < steps.size(); ++t) {
      if (base_steps[t].result.terms.alignment >= steps[t].result.terms.alignment) ++worse_or_equal;
    }
    json b = summary_json(bs);
    b["alpha"] = alpha;
    b["frames_baseline_residual_ge_conformal"] = worse_or_equal;
    baselines.push_back(b);
    std::cout << "baseline alpha=" << alpha_tag(alpha) << " mean alignment residual: " << fixed(bs.mean_alignment)
              << " (>= conformal on " << worse_or_equal << "/" << steps.size() << " frames)\n";
  }
  if (!a.baseline.empty()) summary["baseline"] = baselines;
  io::write_text((out / "summary.json").string(), summary.dump(2) + "\n");

  Manifest m{"retarget",
             {"retarget", "--model", absolute(a.model), "--calibration", absolute(a.calibration), "--trajectory",
              absolute(a.trajectory), "--lambda1", io::fmt(a.lambda1), "--lambda2", io::fmt(a.lambda2), "--lambda3",
              io::fmt(a.lambda3), "--k", io::fmt(a.k), "--c", io::fmt(a.c), "--length-unit", io::fmt(a.length_unit), "--max-iterations",
              std::to_string(a.max_iterations), "--tolerance", io::fmt(a.tolerance)}};
  for (double alpha : a.baseline) m.argv.insert(m.argv.end(), {"--baseline", io::fmt(alpha)});
  if (!a.truth.empty()) {
    m.argv.insert(m.argv.end(), {"--truth", absolute(a.truth)});
    m.inputs["truth"] = absolute(a.truth);
  }
  m.inputs["model"] = absolute(a.model);
  m.inputs["calibration"] = absolute(a.calibration);
  m.inputs["trajectory"] = absolute(a.trajectory);
  m.options = {{"lambda1", a.lambda1}, {"lambda2", a.lambda2}, {"lambda3", a.lambda3},
               {"k", a.k},             {"c", a.c},             {"length_unit", a.length_unit}, {"baseline", a.baseline},
               {"max_iterations", a.max_iterations}, {"tolerance", a.tolerance}};
  write_manifest(out, m);

  for (const StreamStep& s : steps) {
    if (s.status == FrameStatus::rejected) log(Verbosity::debug, "frame t=" + io::fmt(s.timestamp) + ": " + s.message);
  }
  if (main.rejected == 0) return 0;
  return 1;
}

// --- metrics -------------------------------------------------------------------

struct MetricsArgs {
  std::string model, poses, metric = "all", finger, out;
  std::uint64_t seed = 1;
  double voxel_mm = 2.0;
  std::int64_t samples = 100000;
  unsigned threads = 0;
};

int run_metrics(const MetricsArgs& a) {
  if (a.metric != "all" && a.metric != "manipulability" && a.metric != "opposability") {
    throw InputError("unknown metric '" + a.metric + "' (expected manipulability, opposability or all)");
  }
  const HandModel model = load_hand_model_file(a.model);
  std::vector<io::NamedPose> poses;
  if (!a.poses.empty()) {
    poses = io::parse_poses(io::read_text(a.poses), model.dof());
  } else {
    poses.push_back({"rest", model.rest_pose()});
  }

  int finger = model.thumb() == 0 && model.finger_count() > 1 ? 1 : 0;
  if (!a.finger.empty()) {
    finger = -1;
    for (int i = 0; i < model.finger_count(); ++i) {
      if (model.finger(i).name == a.finger) finger = i;
    }
    if (finger < 0) throw InputError("unknown finger '" + a.finger + "'");
  }

  const fs::path out = prepare_out(a.out);
  std::string table;
  json report;
  report["model"] = model.name();

  if (a.metric == "all" || a.metric == "manipulability") {
    table += "Manipulability Ellipsoid Volume (finger: " + model.finger(finger).name + ")\n";
    table += "| Hand/Finger Pose |";
    for (const auto& p : poses) table += " " + p.name + " |";
    table += "\n|---|";
    for (std::size_t k = 0; k < poses.size(); ++k) table += "---|";
    table += "\n";
    json rows = json::array();
    for (EllipsoidKind kind : {EllipsoidKind::linear, EllipsoidKind::angular}) {
      table += kind == EllipsoidKind::linear ? "| Linear (mm^3) |" : "| Angular |";
      for (const auto& p : poses) {
        if (!model.within_limits(p.q)) throw InputError("pose '" + p.name + "' violates joint limits");
        const double v = manipulability_report_value(
            manipulability_volume(model, p.q, model.tip(finger), kind), kind);
        table += " " + fixed(v, 4) + " |";
        rows.push_back({{"pose", p.name}, {"kind", to_string(kind)}, {"value", v},
                        {"unit", kind == EllipsoidKind::linear ? "mm^3" : "rad^3"}});
      }
      table += "\n";
    }
    table += "\n";
    report["manipulability"] = {{"finger", model.finger(finger).name}, {"rows", rows}};
  }

  if (a.metric == "all" || a.metric == "opposability") {
    OpposabilitySampling s{a.samples, a.voxel_mm, a.seed, a.threads};
    table += "Finger-to-Thumb Opposability Volume (mm^3)\n| Hand |";
    std::string row = "| " + model.name() + " |";
    json cols = json::array();
    for (int i = 0; i < model.finger_count(); ++i) {
      if (i == model.thumb()) continue;
      const MetricReport r = opposability_report(model, i, s);
      table += " " + r.subject + " |";
      row += " " + fixed(r.value, 7) + " |";
      cols.push_back({{"finger", r.subject}, {"value", r.value}, {"unit", r.unit}});
    }
    table += "\n|---|";
    for (int i = 1; i < model.finger_count(); ++i) table += "---|";
    table += "\n" + row + "\n";
    table += "samples per finger: " + std::to_string(a.samples) + ", voxel: " + fixed(a.voxel_mm) +
             " mm, seed: " + std::to_string(a.seed) + "\n";
    report["opposability"] = {{"samples", a.samples}, {"voxel_mm", a.voxel_mm}, {"seed", a.seed}, {"fingers", cols}};
  }

  io::write_text((out / "metrics.md").string(), table);
  io::write_text((out / "metrics.json").string(), report.dump(2) + "\n");
  std::cout << table;

  Manifest m{"metrics",
             {"metrics", "--model", absolute(a.model), "--metric", a.metric, "--seed", std::to_string(a.seed),
              "--voxel-mm", io::fmt(a.voxel_mm), "--samples", std::to_string(a.samples)}};
  if (!a.poses.empty()) {
    m.argv.insert(m.argv.end(), {"--poses", absolute(a.poses)});
    m.inputs["poses"] = absolute(a.poses);
  }
  if (!a.finger.empty()) m.argv.insert(m.argv.end(), {"--finger", a.finger});
  m.inputs["model"] = absolute(a.model);
  m.options = {{"metric", a.metric}, {"voxel_mm", a.voxel_mm}, {"samples", a.samples}, {"finger", a.finger}};
  m.seed = a.seed;
  write_manifest(out, m);
  return 0;
}

// --- syncsim -------------------------------------------------------------------

struct SyncArgs {
  std::string config, out;
  std::optional<std::uint64_t> seed;
};

int run_syncsim(const SyncArgs& a) {
  io::SyncRunConfig cfg = io::parse_sync_config(io::read_text(a.config));
  if (a.seed) cfg.streams.seed = *a.seed;
  const sync::SyncLog log_data = sync::simulate(cfg.streams, cfg.duration_s);
  const sync::Assembly assembly = sync::assemble_frames(log_data, cfg.policy);
  const sync::AlignmentReport report = sync::alignment_report(assembly);

  const fs::path out = prepare_out(a.out);
  io::write_text((out / "events.txt").string(), io::format_event_log(log_data));
  io::write_text((out / "frames.txt").string(), io::format_frames(log_data, assembly));
  json rep = io::report_json(report);
  rep["regime"] = sync::to_string(cfg.streams.regime);
  rep["events"] = log_data.events.size();
  rep["event_dropout_rate"] = sync::log_dropout_rate(log_data);
  rep["discarded_events"] = assembly.discarded.size();
  io::write_text((out / "report.json").string(), rep.dump(2) + "\n");

  double bound_ms = 0.0;
  for (const auto& s : cfg.streams.streams) bound_ms = std::max(bound_ms, s.capture_latency_max_s * 1e3);
  std::cout << "regime: " << sync::to_string(cfg.streams.regime) << "\n"
            << "frames: " << report.frames << "\n"
            << "mean skew: " << fixed(report.mean_skew_ms) << " ms\n"
            << "max skew: " << fixed(report.max_skew_ms) << " ms\n"
            << "dropout rate: " << fixed(report.dropout_rate) << "\n"
            << "incomplete-frame rate: " << fixed(report.incomplete_rate) << "\n"
            << "effective rate: " << fixed(report.effective_hz) << " Hz\n";
  if (cfg.streams.regime == sync::Regime::hard) {
    const bool ok = report.max_skew_ms <= bound_ms + 1e-9;
    std::cout << "max skew <= " << fixed(bound_ms) << " ms: " << (ok ? "yes" : "NO") << "\n";
  }

  Manifest m{"syncsim", {"syncsim", "--config", absolute(a.config)}};
  if (a.seed) m.argv.insert(m.argv.end(), {"--seed", std::to_string(*a.seed)});
  m.inputs["config"] = absolute(a.config);
  m.seed = cfg.streams.seed;
  write_manifest(out, m);
  return 0;
}

// --- synth ---------------------------------------------------------------------

struct SynthArgs {
  std::string model, human, out;
  std::uint64_t seed = 1;
  int frames = 40;
};

int run_synth(const SynthArgs& a) {
  const HandModel robot = load_hand_model_file(a.model);
  const fs::path out = prepare_out(a.out);
  std::mt19937_64 rng(a.seed);

  const KeypointFrame robot_static = synthetic::keypoints_of(robot, robot.rest_pose());
  io::write_text((out / "robot_static.kp").string(), io::format_keypoint_frames(std::span(&robot_static, 1)));
  const KeypointFrame half = synthetic::scaled_frame(robot_static, 0.5);
  io::write_text((out / "half_static.kp").string(), io::format_keypoint_frames(std::span(&half, 1)));

  // Smooth in-limit trajectory on the robot itself for inverse-consistency checks.
  const VecX qa = synthetic::random_configuration(robot, rng, 0.1);
  const VecX qb = synthetic::random_configuration(robot, rng, 0.1);
  std::vector<KeypointFrame> frames;
  std::vector<io::JointSample> truth;
  const auto traj = synthetic::smooth_trajectory(qa, qb, a.frames);
  for (std::size_t t = 0; t < traj.size(); ++t) {
    const double time = static_cast<double>(t) / 25.0;
    frames.push_back(synthetic::keypoints_of(robot, traj[t], time));
    truth.push_back({time, traj[t]});
  }
  io::write_text((out / "robot_trajectory.kp").string(), io::format_keypoint_frames(frames));
  io::write_text((out / "robot_trajectory.q").string(), io::format_joint_trajectory(truth, robot.dof()));

  Manifest m{"synth", {"synth", "--model", absolute(a.model), "--seed", std::to_string(a.seed), "--frames",
                       std::to_string(a.frames)}};
  m.inputs["model"] = absolute(a.model);
  if (!a.human.empty()) {
    const HandModel human = load_hand_model_file(a.human);
    const KeypointFrame human_static = synthetic::keypoints_of(human, human.rest_pose());
    io::write_text((out / "human_static.kp").string(), io::format_keypoint_frames(std::span(&human_static, 1)));
    std::vector<KeypointFrame> gestures;
    std::string names;
    double time = 0.0;
    for (const auto& g : synthetic::gesture_suite(human)) {
      gestures.push_back(synthetic::keypoints_of(human, g.q, time));
      names += g.name + "\n";
      time += 1.0;
    }
    io::write_text((out / "gestures.kp").string(), io::format_keypoint_frames(gestures));
    io::write_text((out / "gestures.names").string(), names);
    m.argv.insert(m.argv.end(), {"--human", absolute(a.human)});
    m.inputs["human"] = absolute(a.human);
  }
  m.seed = a.seed;
  write_manifest(out, m);
  std::cout << "wrote synthetic data set to " << out.string() << "\n";
  return 0;
}

// --- dispatch ------------------------------------------------------------------

int dispatch(std::vector<std::string> args);

int run_replay(const std::string& manifest_path, const std::string& out) {
  json j;
  try {
    j = json::parse(io::read_text(manifest_path));
  } catch (const json::parse_error& e) {
    throw InputError(std::string("manifest: ") + e.what());
  }
  if (j.value("tool", "") != "dexretarget") throw InputError("not a dexretarget manifest");
  if (j.value("version", "") != kVersion) {
    log(Verbosity::info, "warning: manifest written by version " + j.value("version", "?") + ", replaying with " +
                             kVersion);
  }
  auto argv = j.at("argv").get<std::vector<std::string>>();
  if (argv.empty() || argv.front() == "replay") throw InputError("manifest holds no replayable command");
  argv.insert(argv.end(), {"--out", out});
  return dispatch(argv);
}

int dispatch(std::vector<std::string> args) {
  CLI::App app{"Human-to-robot hand retargeting and dexterity tools", "dexretarget"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  CalibrateArgs cal;
  auto* c = app.add_subcommand("calibrate", "Derive per-segment calibration from static keypoints");
  c->add_option("--model", cal.model, "Hand model document")->required();
  c->add_option("--keypoints", cal.keypoints, "Static human keypoints (first frame is used)")->required();
  c->add_option("--q0", cal.q0, "Joint file with the robot calibration pose (default: model rest pose)");
  c->add_option("--out", cal.out, "Output directory")->required();

  RetargetArgs rt;
  auto* r = app.add_subcommand("retarget", "Retarget a keypoint trajectory onto the robot hand");
  r->add_option("--model", rt.model, "Hand model document")->required();
  r->add_option("--calibration", rt.calibration, "Calibration file")->required();
  r->add_option("--trajectory", rt.trajectory, "Keypoint trajectory")->required();
  r->add_option("--truth", rt.truth, "Ground-truth joint trajectory for recovery error");
  r->add_option("--lambda1", rt.lambda1, "Alignment weight")->capture_default_str();
  r->add_option("--lambda2", rt.lambda2, "Coupling weight")->capture_default_str();
  r->add_option("--lambda3", rt.lambda3, "Smoothness weight")->capture_default_str();
  r->add_option("--k", rt.k, "Coupling sigmoid steepness")->capture_default_str();
  r->add_option("--c", rt.c, "Coupling sigmoid threshold")->capture_default_str();
  r->add_option("--length-unit", rt.length_unit, "Length unit of position residuals, metres")->capture_default_str();
  r->add_option("--baseline", rt.baseline, "Also retarget with uniform scaling alpha (repeatable)");
  r->add_option("--max-iterations", rt.max_iterations, "Solver iteration budget")->capture_default_str();
  r->add_option("--tolerance", rt.tolerance, "Solver step/objective tolerance")->capture_default_str();
  r->add_option("--out", rt.out, "Output directory")->required();

  MetricsArgs mt;
  auto* mc = app.add_subcommand("metrics", "Manipulability and opposability volume tables");
  mc->add_option("--model", mt.model, "Hand model document")->required();
  mc->add_option("--poses", mt.poses, "Named pose file (default: rest pose)");
  mc->add_option("--metric", mt.metric, "manipulability | opposability | all")->capture_default_str();
  mc->add_option("--finger", mt.finger, "Finger for the manipulability table (default: first non-thumb)");
  mc->add_option("--seed", mt.seed, "Sampling seed")->capture_default_str();
  mc->add_option("--voxel-mm", mt.voxel_mm, "Voxel edge length in mm")->capture_default_str();
  mc->add_option("--samples", mt.samples, "Joint samples per finger")->capture_default_str();
  mc->add_option("--threads", mt.threads, "Sampling threads (0 = all cores; results do not depend on it)");
  mc->add_option("--out", mt.out, "Output directory")->required();

  SyncArgs sy;
  auto* sc = app.add_subcommand("syncsim", "Simulate multi-sensor acquisition and frame assembly");
  sc->add_option("--config", sy.config, "Sync config document")->required();
  std::uint64_t sync_seed = 0;
  auto* seed_opt = sc->add_option("--seed", sync_seed, "Override the config seed");
  sc->add_option("--out", sy.out, "Output directory")->required();

  SynthArgs sn;
  auto* snc = app.add_subcommand("synth", "Generate synthetic keypoint data sets");
  snc->add_option("--model", sn.model, "Robot hand model document")->required();
  snc->add_option("--human", sn.human, "Synthetic human hand model document");
  snc->add_option("--seed", sn.seed, "Random seed")->capture_default_str();
  snc->add_option("--frames", sn.frames, "Trajectory length")->capture_default_str();
  snc->add_option("--out", sn.out, "Output directory")->required();

  std::string manifest, replay_out;
  auto* rp = app.add_subcommand("replay", "Rerun the command recorded in a manifest");
  rp->add_option("manifest", manifest, "manifest.json of a previous run")->required();
  rp->add_option("--out", replay_out, "Output directory")->required();

  try {
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  if (*c) return run_calibrate(cal);
  if (*r) return run_retarget(rt);
  if (*mc) return run_metrics(mt);
  if (*sc) {
    if (*seed_opt) sy.seed = sync_seed;
    return run_syncsim(sy);
  }
  if (*snc) return run_synth(sn);
  if (*rp) return run_replay(manifest, replay_out);
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return dispatch(std::vector<std::string>(argv + 1, argv + argc));
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
