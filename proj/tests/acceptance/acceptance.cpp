// Acceptance suite: one PASS/FAIL line per criterion. Exit status is non-zero
// when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dexretarget/io.hpp"
#include "dexretarget/metrics.hpp"
#include "dexretarget/retargeting.hpp"
#include "dexretarget/sync_sim.hpp"
#include "dexretarget/synthetic.hpp"
#include "../test_support.hpp"

namespace fs = std::filesystem;
using namespace dexretarget;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

// 1. Conformal recursion with the shipped synthetic calibration.
Outcome conformal_recursion() {
  const HandModel& robot = test::reference_model();
  const HandModel& human = test::human_model();
  const CalibrationData cal =
      calibrate(robot, robot.rest_pose(), synthetic::keypoints_of(human, human.rest_pose()));
  const CalibrationData identity =
      calibrate(robot, robot.rest_pose(), synthetic::keypoints_of(robot, robot.rest_pose()));
  std::mt19937_64 rng(101);
  double worst = 0.0;
  bool bitwise = true;
  for (int t = 0; t < 1000; ++t) {
    const KeypointFrame w =
        synthetic::add_noise(synthetic::keypoints_of(human, synthetic::random_configuration(human, rng)), 0.002, rng);
    const KeypointSet v = adjust_keypoints(w, cal);
    for (std::size_t i = 0; i < w.points.size(); ++i) {
      for (std::size_t j = 2; j < w.points[i].size(); ++j) {
        const Vec3 expected = cal.scale[i][j - 1] * (w.points[i][j] - w.points[i][j - 1]);
        worst = std::max(worst, (v.points[i][j] - v.points[i][j - 1] - expected).norm() / expected.norm());
      }
    }
    bitwise = bitwise && adjust_keypoints(w, identity).points == w.points;
  }
  return {worst <= 1e-12 && bitwise,
          "max relative segment error " + num(worst) + ", identity bitwise: " + (bitwise ? "yes" : "no")};
}

// 2. Inverse consistency on the 20-DoF reference hand.
Outcome inverse_consistency() {
  const HandModel& m = test::reference_model();
  std::mt19937_64 rng(202);
  int recovered = 0;
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const VecX q_true = test::random_q(m, rng);
    const KeypointSet fk = forward_kinematics(m, q_true);
    RetargetProblem p;
    for (const KeypointId& id : default_alignment_set(m)) p.alignment.push_back({id, fk.at(id)});
    p.thumb = m.thumb();
    p.q_prev = m.rest_pose();
    p.weights = {1.0, 0.0, 0.0};
    const RetargetResult r = solve_retarget(m, p);
    const double err = (r.q - q_true).cwiseAbs().maxCoeff();
    if (err <= 1e-3) ++recovered;
    worst = std::max(worst, err);
  }
  return {recovered >= 95, std::to_string(recovered) + "/100 recovered within 1e-3 rad (worst " + num(worst) + ")"};
}

// 3. Exhaustive 0.002 rad grid on the planar chain.
Outcome grid_oracle() {
  const HandModel& m = test::planar2();
  std::mt19937_64 rng(303);
  int ok = 0;
  double worst_gap = -std::numeric_limits<double>::infinity();
  for (int t = 0; t < 50; ++t) {
    const RetargetProblem p = test::random_planar_problem(m, rng).problem;
    const RetargetResult r = solve_retarget(m, p);
    const test::GridMinimum g = test::planar_grid_minimum(m, p, 0.002);
    worst_gap = std::max(worst_gap, r.terms.total - g.value);
    if (r.terms.total <= g.value + 1e-6) ++ok;
  }
  return {ok == 50, std::to_string(ok) + "/50 at or below the grid minimum (max solver - grid " + num(worst_gap) + ")"};
}

// 4. Objective gradient against central differences.
Outcome gradient_check() {
  const HandModel& m = test::reference_model();
  std::mt19937_64 rng(404);
  double worst = 0.0;
  for (int t = 0; t < 50; ++t) {
    const test::RandomProblem rp = test::random_problem(m, rng);
    const VecX q = test::random_q_near(m, rp.q_ref, 0.2, rng);
    const MatX fd = test::central_difference(
        [&](const VecX& x) -> VecX { return VecX::Constant(1, objective(m, x, rp.problem).total); }, q, 1e-6);
    worst = std::max(worst, (objective_gradient(m, q, rp.problem) - fd.row(0).transpose()).cwiseAbs().maxCoeff());
  }
  return {worst < 1e-5, "max abs error " + num(worst)};
}

// 5. Coupling weight contract.
Outcome coupling_contract() {
  const double k = 10.0, c = 0.5;
  const CouplingBounds b{1, 0.0, 0.09};
  bool clamped = true;
  bool strictly_decreasing = true;
  double previous_w = 2.0;
  for (int s = -50; s <= 250; ++s) {
    const double dist = std::max(0.0, b.d_max * s / 200.0);
    const double d = normalized_proximity(dist, b);
    clamped = clamped && d >= 0.0 && d <= 1.0;
    if (s >= 0 && s <= 200) {
      const double w = sigmoid_weight(d, k, c);
      if (s > 0) strictly_decreasing = strictly_decreasing && w < previous_w;
      previous_w = w;
    }
  }
  clamped = clamped && normalized_proximity(10.0 * b.d_max, b) == 0.0 &&
            normalized_proximity(0.0, CouplingBounds{1, 0.02, 0.09}) == 1.0;

  // Frame level: a fingertip at half the calibrated range gives d = c.
  const HandModel& robot = test::reference_model();
  const HandModel& human = test::human_model();
  CalibrationData cal = calibrate(robot, robot.rest_pose(), synthetic::keypoints_of(human, human.rest_pose()));
  // Dyadic distances keep the proximity exact.
  cal.coupling[0].d_min = 0.0;
  cal.coupling[0].d_max = 0.5;
  KeypointFrame w = synthetic::keypoints_of(human, human.rest_pose());
  w.points[0].back() = Vec3(0.0, 0.0, 0.0);
  w.points[1].back() = Vec3(0.25, 0.0, 0.0);
  const CouplingTerm term = coupling_weights(w, cal, k, c)[0];
  const bool midpoint = sigmoid_weight(c, k, c) == 0.5 && term.proximity == c && term.weight == 0.5;
  return {clamped && strictly_decreasing && midpoint, std::string("clamped: ") + (clamped ? "yes" : "no") +
                                                          ", omega(d=c) = " + num(term.weight) +
                                                          ", strictly decreasing: " + (strictly_decreasing ? "yes" : "no")};
}

// 6. Conformal retargeting against uniform scaling on the gesture suite.
Outcome baseline_comparison() {
  const HandModel& robot = test::reference_model();
  const HandModel& human = test::human_model();
  const CalibrationData cal = calibrate(robot, robot.rest_pose(), synthetic::keypoints_of(human, human.rest_pose()));
  bool all = true;
  std::ostringstream detail;
  for (const synthetic::Gesture& g : synthetic::gesture_suite(human)) {
    const std::vector<KeypointFrame> frame{synthetic::keypoints_of(human, g.q)};
    const double conformal = retarget_stream(robot, cal, frame, RetargetOptions{})[0].result.terms.alignment;
    double best_baseline = std::numeric_limits<double>::infinity();
    for (double alpha : {1.25, 1.5, 1.75, 2.0}) {
      const double base =
          retarget_stream(robot, cal, frame, RetargetOptions{}, TargetMapping{alpha})[0].result.terms.alignment;
      best_baseline = std::min(best_baseline, base);
      all = all && conformal < base;
    }
    detail << g.name << " " << num(conformal) << " vs >= " << num(best_baseline) << "; ";
  }
  return {all, "alignment residual (mm^2) conformal vs best uniform: " + detail.str()};
}

// 7. Hard-sync skew bound and dropout measurement.
Outcome sync_contract() {
  const sync::StreamConfig clean = sync::hard_sync_config(0.0, 7);
  const double duration = 1e5 / clean.rate_hz;
  const sync::AlignmentReport r = sync::alignment_report(sync::assemble_frames(sync::simulate(clean, duration)));
  const sync::AlignmentReport d =
      sync::alignment_report(sync::assemble_frames(sync::simulate(sync::hard_sync_config(0.044, 8), duration)));
  const bool ok = r.frames == 100000 && r.max_skew_ms <= 7.0 && std::abs(d.max_skew_ms) <= 7.0 &&
                  std::abs(d.dropout_rate - 0.044) <= 0.005;
  return {ok, "max skew " + num(r.max_skew_ms) + " ms over " + std::to_string(r.frames) +
                  " frames; injected 0.044 dropout measured " + num(d.dropout_rate)};
}

double lens_area(double r1, double r2, double d) {
  if (d >= r1 + r2) return 0.0;
  if (d <= std::abs(r1 - r2)) return std::numbers::pi * std::min(r1, r2) * std::min(r1, r2);
  const double a1 = std::acos((d * d + r1 * r1 - r2 * r2) / (2 * d * r1));
  const double a2 = std::acos((d * d + r2 * r2 - r1 * r1) / (2 * d * r2));
  return r1 * r1 * (a1 - std::sin(2 * a1) / 2) + r2 * r2 * (a2 - std::sin(2 * a2) / 2);
}

// 8. Metric oracles.
Outcome metric_oracles() {
  const HandModel& toy = test::toy3();
  const VecX zero = VecX::Zero(3);
  // Tip (1, 2, 1); linear Jacobian columns z x (1,2,1), y x (0,2,1), x x (0,2,0):
  // det [[-2,1,0],[1,0,0],[0,0,2]] = -2, so sqrt(det(J J^T)) = 2.
  const double linear = manipulability_volume(toy, zero, toy.tip(0), EllipsoidKind::linear);
  const double angular = manipulability_volume(toy, zero, toy.tip(0), EllipsoidKind::angular);
  const double analytic_linear = 4.0 * std::numbers::pi / 3.0 * 2.0;
  const double analytic_angular = 4.0 * std::numbers::pi / 3.0;
  const bool analytic = std::abs(linear - analytic_linear) <= 1e-9 && std::abs(angular - analytic_angular) <= 1e-9;

  const HandModel& planar = test::planar2();
  const bool singular = manipulability_volume(planar, VecX::Zero(2), planar.tip(0), EllipsoidKind::linear) == 0.0;

  const VecX q = Eigen::Vector3d(0.4, -0.7, 1.1);
  const double ratio = manipulability_volume(toy.scaled(2.0), q, toy.tip(0), EllipsoidKind::linear) /
                       manipulability_volume(toy, q, toy.tip(0), EllipsoidKind::linear);
  const bool scaling = std::abs(ratio / 8.0 - 1.0) <= 1e-6;

  OpposabilitySampling s;
  s.samples = 1000000;
  s.voxel_mm = 1.0;
  s.seed = 5;
  const HandModel disjoint = load_hand_model_file(test::model_path("disjoint_pair.yaml"));
  const double disjoint_volume = opposability_volume(disjoint, disjoint.tip(0), disjoint.tip(1), s);

  // Annuli of radii 20 and 60 mm with centres 30 mm apart, one 1 mm voxel layer thick.
  const HandModel overlap = load_hand_model_file(test::model_path("overlap_pair.yaml"));
  const double d = 30.0;
  const double area = lens_area(60, 60, d) - lens_area(60, 20, d) - lens_area(20, 60, d) + lens_area(20, 20, d);
  const double closed_form = area * s.voxel_mm;
  const double sampled = opposability_volume(overlap, overlap.tip(0), overlap.tip(1), s);
  const bool overlap_ok = std::abs(sampled / closed_form - 1.0) <= 0.10;

  return {analytic && singular && scaling && disjoint_volume == 0.0 && overlap_ok,
          "toy linear " + num(linear) + " (analytic " + num(analytic_linear) + "), singular " +
              (singular ? "0" : "non-zero") + ", s=2 ratio " + num(ratio) + ", disjoint " + num(disjoint_volume) +
              " mm^3, overlap " + num(sampled) + " vs closed form " + num(closed_form) + " mm^3"};
}

// 9. Every subcommand replays bit-identically from its manifest.
int run_cli(const std::vector<std::string>& args, const fs::path& log) {
  std::string cmd = std::string("DEXRETARGET_LOG=quiet \"") + DEXRETARGET_CLI + "\"";
  for (const std::string& a : args) cmd += " \"" + a + "\"";
  cmd += " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

bool same_outputs(const fs::path& a, const fs::path& b, std::string& why) {
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(a)) names.push_back(e.path().filename().string());
  std::size_t count_b = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(b)) ++count_b;
  if (names.size() != count_b) {
    why = a.filename().string() + ": file count differs";
    return false;
  }
  for (const std::string& n : names) {
    if (!fs::exists(b / n)) {
      why = n + " missing on replay";
      return false;
    }
    std::string x = io::read_text((a / n).string());
    std::string y = io::read_text((b / n).string());
    if (n == "manifest.json") {
      auto jx = nlohmann::json::parse(x), jy = nlohmann::json::parse(y);
      jx.erase("out");
      jy.erase("out");
      x = jx.dump();
      y = jy.dump();
    }
    if (x != y) {
      why = a.filename().string() + "/" + n + " differs";
      return false;
    }
  }
  return true;
}

Outcome replay_determinism() {
  const fs::path root = fs::temp_directory_path() / ("dexretarget_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(root);
  fs::create_directories(root);
  const std::string model = test::model_path("reference_hand.yaml");
  const std::string human = test::model_path("synthetic_human.yaml");
  const fs::path log = root / "cli.log";

  const fs::path synth = root / "synth";
  const fs::path cal = root / "calibrate";
  const fs::path retarget = root / "retarget";
  const fs::path metrics = root / "metrics";
  const fs::path syncsim = root / "syncsim";
  const fs::path sync_cfg = root / "hard.yaml";
  io::write_text(sync_cfg.string(), "regime: hard\nrate_hz: 25\nduration_s: 20\nseed: 11\ndropout: 0.044\n");

  std::vector<std::pair<fs::path, std::vector<std::string>>> runs = {
      {synth, {"synth", "--model", model, "--human", human, "--seed", "3", "--frames", "20", "--out", synth.string()}},
      {cal, {"calibrate", "--model", model, "--keypoints", (synth / "human_static.kp").string(), "--out", cal.string()}},
      {retarget,
       {"retarget", "--model", model, "--calibration", (cal / "calibration.json").string(), "--trajectory",
        (synth / "gestures.kp").string(), "--baseline", "1.5", "--out", retarget.string()}},
      {metrics,
       {"metrics", "--model", model, "--poses", test::model_path("reference_poses.txt"), "--samples", "20000",
        "--seed", "9", "--out", metrics.string()}},
      {syncsim, {"syncsim", "--config", sync_cfg.string(), "--out", syncsim.string()}},
  };
  std::ostringstream detail;
  bool ok = true;
  for (const auto& [dir, args] : runs) {
    const int first = run_cli(args, log);
    if (first != 0) {
      ok = false;
      detail << args[0] << " exited " << first << "; ";
      continue;
    }
    const fs::path again = root / (dir.filename().string() + "_replay");
    const int second = run_cli({"replay", (dir / "manifest.json").string(), "--out", again.string()}, log);
    std::string why;
    if (second != 0) {
      ok = false;
      detail << args[0] << " replay exited " << second << "; ";
    } else if (!same_outputs(dir, again, why)) {
      ok = false;
      detail << why << "; ";
    } else {
      detail << args[0] << " identical; ";
    }
  }
  if (ok) fs::remove_all(root);
  return {ok, detail.str()};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double limit_s;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "conformal recursion oracle", 5.0, conformal_recursion},
      {2, "inverse consistency on the 20-DoF hand", 60.0, inverse_consistency},
      {3, "brute-force solver oracle", 120.0, grid_oracle},
      {4, "gradient check", 0.0, gradient_check},
      {5, "coupling-weight contract", 0.0, coupling_contract},
      {6, "baseline comparison", 0.0, baseline_comparison},
      {7, "sync contract", 0.0, sync_contract},
      {8, "metrics oracles", 0.0, metric_oracles},
      {9, "replay determinism", 0.0, replay_determinism},
  };
  int failures = 0;
  for (const Criterion& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (c.limit_s > 0.0 && secs >= c.limit_s) {
      o.pass = false;
      o.detail += " [runtime limit " + num(c.limit_s) + " s exceeded]";
    }
    if (!o.pass) ++failures;
    std::printf("%s criterion %d: %s (%.2f s) %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, secs, o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
