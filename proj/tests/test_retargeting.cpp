#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "dexretarget/retargeting.hpp"
#include "dexretarget/synthetic.hpp"
#include "test_support.hpp"

using namespace dexretarget;
using dexretarget::test::human_model;
using dexretarget::test::planar2;
using dexretarget::test::reference_model;

namespace {

KeypointFrame planar_frame(const Vec3& root, const Vec3& mcp, const Vec3& tip) {
  KeypointSet s;
  s.points = {{root, mcp, tip}};
  return make_frame(s);
}

CalibrationData identity_calibration(const HandModel& m) {
  return calibrate(m, m.rest_pose(), make_frame(forward_kinematics(m, m.rest_pose())));
}

CalibrationData synthetic_calibration() {
  const HandModel& robot = reference_model();
  return calibrate(robot, robot.rest_pose(), synthetic::keypoints_of(human_model(), human_model().rest_pose()));
}

RetargetProblem random_problem(const HandModel& m, std::mt19937_64& rng) {
  return test::random_problem(m, rng).problem;
}

}  // namespace

TEST_CASE("calibration", "[retargeting][calibrate]") {
  SECTION("identity pair gives unit scales and zero offsets") {
    const HandModel& m = reference_model();
    const CalibrationData cal = identity_calibration(m);
    for (const auto& finger : cal.scale) {
      for (double r : finger) CHECK(r == 1.0);
    }
    for (const Vec3& u : cal.offset) CHECK(u == Vec3::Zero());
    CHECK(cal.coupling.size() == 4);
    for (const CouplingBounds& b : cal.coupling) {
      CHECK(b.d_min == 0.0);
      CHECK(b.d_max > 0.0);
    }
  }

  SECTION("half-length human segments with coincident MCP") {
    // Robot keypoints at rest: (0,0,0), (1,0,0), (2,0,0).
    const KeypointFrame w = planar_frame({0.5, 0, 0}, {1, 0, 0}, {1.5, 0, 0});
    const CalibrationData cal = calibrate(planar2(), Eigen::Vector2d(0, 0), w);
    CHECK(cal.scale[0][0] == 2.0);
    CHECK(cal.scale[0][1] == 2.0);
    CHECK(cal.offset[0] == Vec3::Zero());
  }

  SECTION("zero-length segment names the finger and segment") {
    const KeypointFrame w = planar_frame({0, 0, 0}, {1, 0, 0}, {1, 0, 0});
    try {
      calibrate(planar2(), Eigen::Vector2d(0, 0), w);
      FAIL("expected a calibration error");
    } catch (const CalibrationError& e) {
      CHECK(e.finger() == 0);
      CHECK(e.segment() == 1);
      CHECK(std::string(e.what()).find("(0, 1)") != std::string::npos);
    }
  }

  SECTION("missing landmark") {
    KeypointFrame w = planar_frame({0, 0, 0}, {1, 0, 0}, {2, 0, 0});
    w.valid[0][2] = 0;
    CHECK_THROWS_AS(calibrate(planar2(), Eigen::Vector2d(0, 0), w), CalibrationError);
  }

  SECTION("calibration data invariants") {
    CalibrationData cal = synthetic_calibration();
    CHECK_NOTHROW(validate_calibration(cal));
    cal.scale[1][2] = -1.0;
    CHECK_THROWS_AS(validate_calibration(cal), CalibrationError);
    cal = synthetic_calibration();
    cal.coupling[0].d_max = cal.coupling[0].d_min;
    CHECK_THROWS_AS(validate_calibration(cal), ConfigError);
  }
}

TEST_CASE("conformal keypoint adjustment", "[retargeting][adjust]") {
  SECTION("identity calibration reproduces the input bitwise") {
    const HandModel& m = reference_model();
    const CalibrationData cal = identity_calibration(m);
    std::mt19937_64 rng(1);
    for (int t = 0; t < 100; ++t) {
      const KeypointFrame w = synthetic::add_noise(synthetic::keypoints_of(human_model(), test::random_q(human_model(), rng)), 0.003, rng);
      const KeypointSet v = adjust_keypoints(w, cal);
      REQUIRE(v.points == w.points);
    }
  }

  SECTION("doubling scale on a straight unit finger") {
    CalibrationData cal;
    cal.scale = {{2.0, 2.0}};
    cal.offset = {Vec3::Zero()};
    const KeypointSet v = adjust_keypoints(planar_frame({0, 0, 0}, {1, 0, 0}, {2, 0, 0}), cal);
    CHECK(v.points[0][0] == Vec3(0, 0, 0));
    CHECK(v.points[0][1] == Vec3(2, 0, 0));
    CHECK(v.points[0][2] == Vec3(4, 0, 0));
  }

  SECTION("offset applies at the MCP and propagates") {
    CalibrationData cal;
    cal.scale = {{1.0, 1.0}};
    cal.offset = {Vec3(0, 0.5, 0)};
    const KeypointSet v = adjust_keypoints(planar_frame({0, 0, 0}, {1, 0, 0}, {2, 0, 0}), cal);
    CHECK(v.points[0][1] == Vec3(1, 0.5, 0));
    CHECK(v.points[0][2] == Vec3(2, 0.5, 0));
  }

  SECTION("segment law with the synthetic calibration") {
    const CalibrationData cal = synthetic_calibration();
    std::mt19937_64 rng(2);
    double worst = 0.0;
    for (int t = 0; t < 200; ++t) {
      const KeypointFrame w = synthetic::keypoints_of(human_model(), test::random_q(human_model(), rng));
      const KeypointSet v = adjust_keypoints(w, cal);
      for (std::size_t i = 0; i < w.points.size(); ++i) {
        for (std::size_t j = 2; j < w.points[i].size(); ++j) {
          const Vec3 expected = cal.scale[i][j - 1] * (w.points[i][j] - w.points[i][j - 1]);
          const Vec3 got = v.points[i][j] - v.points[i][j - 1];
          worst = std::max(worst, (got - expected).norm() / expected.norm());
          CHECK(std::abs(got.norm() - cal.scale[i][j - 1] * (w.points[i][j] - w.points[i][j - 1]).norm()) <
                1e-12 * expected.norm());
        }
      }
    }
    CHECK(worst < 1e-12);
  }

  SECTION("missing landmark rejects the frame") {
    const CalibrationData cal = synthetic_calibration();
    KeypointFrame w = synthetic::keypoints_of(human_model(), human_model().rest_pose());
    w.valid[3][2] = 0;
    CHECK_THROWS_AS(adjust_keypoints(w, cal), FrameRejected);
  }

  SECTION("structure mismatch") {
    const CalibrationData cal = synthetic_calibration();
    CHECK_THROWS_AS(adjust_keypoints(planar_frame({0, 0, 0}, {1, 0, 0}, {2, 0, 0}), cal), DimensionError);
  }
}

TEST_CASE("uniform scaling baseline", "[retargeting][baseline]") {
  std::mt19937_64 rng(3);
  const KeypointFrame w = synthetic::keypoints_of(human_model(), test::random_q(human_model(), rng));
  SECTION("alpha 1 is the identity") {
    CHECK(baseline_uniform_scaling(w, 1.0).points == w.points);
  }
  SECTION("alpha 2 doubles wrist-relative norms") {
    const KeypointSet v = baseline_uniform_scaling(w, 2.0);
    for (std::size_t i = 0; i < w.points.size(); ++i) {
      for (std::size_t j = 0; j < w.points[i].size(); ++j) {
        const double raw = (w.points[i][j] - w.points[i][0]).norm();
        CHECK(std::abs((v.points[i][j] - v.points[i][0]).norm() - 2.0 * raw) < 1e-15);
      }
    }
  }
  SECTION("paper scale factors are accepted, non-positive ones are not") {
    for (double a : {1.25, 1.5, 1.75, 2.0}) CHECK_NOTHROW(baseline_uniform_scaling(w, a));
    CHECK_THROWS_AS(baseline_uniform_scaling(w, 0.0), ConfigError);
  }
}

TEST_CASE("coupling weights", "[retargeting][coupling]") {
  const double k = 10.0, c = 0.5;
  const CouplingBounds b{1, 0.0, 0.08};

  SECTION("contact end of the range") {
    const double d = normalized_proximity(b.d_min, b);
    CHECK(d == 1.0);
    CHECK(sigmoid_weight(d, k, c) == 1.0 / (1.0 + std::exp(-k * (1.0 - c))));
  }
  SECTION("fully extended end of the range") {
    CHECK(normalized_proximity(b.d_max, b) == 0.0);
  }
  SECTION("midpoint threshold gives one half exactly") {
    CHECK(sigmoid_weight(c, k, c) == 0.5);
    CHECK(sigmoid_weight(0.3, 4.0, 0.3) == 0.5);
  }
  SECTION("clamping outside the calibrated range") {
    CHECK(normalized_proximity(0.2, b) == 0.0);
    const CouplingBounds shifted{1, 0.01, 0.05};
    CHECK(normalized_proximity(0.0, shifted) == 1.0);
  }
  SECTION("degenerate bounds") {
    CHECK_THROWS_AS(normalized_proximity(0.01, CouplingBounds{1, 0.05, 0.05}), ConfigError);
  }
  SECTION("weight strictly decreases over the calibrated range and stays in (0, 1)") {
    double previous = 2.0;
    for (int s = 0; s <= 200; ++s) {
      const double dist = b.d_max * s / 200.0;
      const double w = sigmoid_weight(normalized_proximity(dist, b), k, c);
      CHECK(w < previous);
      CHECK(w > 0.0);
      CHECK(w < 1.0);
      previous = w;
    }
    for (int s = 0; s < 50; ++s) {
      const double w = sigmoid_weight(normalized_proximity(b.d_max + 0.001 * s, b), k, c);
      CHECK(w <= previous);
      previous = w;
    }
  }
  SECTION("frame-level weights use raw thumb-relative tip vectors") {
    const CalibrationData cal = synthetic_calibration();
    KeypointFrame w = synthetic::keypoints_of(human_model(), human_model().rest_pose());
    const auto terms = coupling_weights(w, cal, k, c);
    REQUIRE(terms.size() == 4);
    for (const CouplingTerm& t : terms) {
      const Vec3 delta = w.at(human_model().tip(t.finger)) - w.at(human_model().tip(0));
      CHECK(t.delta == delta);
      // The calibration pose is the fully extended reference: d = 0.
      CHECK(t.proximity == 0.0);
    }
    // Move the index tip onto the thumb tip: contact.
    w.points[1].back() = w.points[0].back();
    CHECK(coupling_weights(w, cal, k, c)[0].proximity == 1.0);
    w.valid[0].back() = 0;
    CHECK_THROWS_AS(coupling_weights(w, cal, k, c), FrameRejected);
  }
}

TEST_CASE("objective", "[retargeting][objective]") {
  const HandModel& m = reference_model();
  std::mt19937_64 rng(4);

  SECTION("perfect match has zero cost") {
    const VecX q = test::random_q(m, rng);
    const KeypointSet fk = forward_kinematics(m, q);
    RetargetProblem p;
    for (const KeypointId& id : default_alignment_set(m)) p.alignment.push_back({id, fk.at(id)});
    for (int i = 1; i < 5; ++i) p.coupling.push_back({i, fk.at(m.tip(i)) - fk.at(m.tip(0)), 0.0, 0.0, 0.7});
    p.q_prev = q;
    const ObjectiveTerms t = objective(m, q, p);
    CHECK(t.total == 0.0);
  }

  SECTION("term isolation") {
    RetargetProblem p = random_problem(m, rng);
    p.weights = {0.0, 0.0, 2.5};
    const VecX q = test::random_q(m, rng);
    CHECK(objective(m, q, p).total == Catch::Approx(2.5 * (q - p.q_prev).squaredNorm()).epsilon(1e-15));
  }

  SECTION("decomposition and non-negativity") {
    for (int t = 0; t < 50; ++t) {
      const RetargetProblem p = random_problem(m, rng);
      const ObjectiveTerms o = objective(m, test::random_q(m, rng), p);
      CHECK(o.alignment >= 0.0);
      CHECK(o.coupling >= 0.0);
      CHECK(o.smoothness >= 0.0);
      const double sum = p.weights.alignment * o.alignment + p.weights.coupling * o.coupling +
                         p.weights.smoothness * o.smoothness;
      CHECK(std::abs(o.total - sum) <= 1e-9 * std::max(1.0, std::abs(sum)));
    }
  }

  SECTION("position residuals are measured in the length unit") {
    RetargetProblem p = random_problem(m, rng);
    const VecX q = test::random_q(m, rng);
    const ObjectiveTerms mm = objective(m, q, p);
    p.length_unit = 1.0;
    const ObjectiveTerms metre = objective(m, q, p);
    CHECK(mm.alignment == Catch::Approx(1e6 * metre.alignment).epsilon(1e-12));
    CHECK(mm.coupling == Catch::Approx(1e6 * metre.coupling).epsilon(1e-12));
    CHECK(mm.smoothness == metre.smoothness);
  }

  SECTION("gradient matches central differences near the targets") {
    double worst = 0.0;
    for (int t = 0; t < 50; ++t) {
      const test::RandomProblem rp = test::random_problem(m, rng);
      const VecX q = test::random_q_near(m, rp.q_ref, 0.2, rng);
      const MatX fd = test::central_difference(
          [&](const VecX& x) -> VecX { return VecX::Constant(1, objective(m, x, rp.problem).total); }, q, 1e-6);
      worst = std::max(worst, (objective_gradient(m, q, rp.problem) - fd.row(0).transpose()).cwiseAbs().maxCoeff());
    }
    CHECK(worst < 1e-5);
  }

  SECTION("gradient matches central differences across the joint box, relative to its scale") {
    // Far from the targets the objective reaches 1e4-1e5 and the difference
    // quotient itself carries about eps * f / h of rounding noise.
    for (int t = 0; t < 50; ++t) {
      const RetargetProblem p = random_problem(m, rng);
      const VecX q = test::random_q(m, rng);
      const MatX fd = test::central_difference(
          [&](const VecX& x) -> VecX { return VecX::Constant(1, objective(m, x, p).total); }, q, 1e-6);
      const VecX g = objective_gradient(m, q, p);
      CHECK((g - fd.row(0).transpose()).cwiseAbs().maxCoeff() < 1e-8 * std::max(1.0, g.cwiseAbs().maxCoeff()));
    }
  }

  SECTION("problem validation") {
    RetargetProblem p = random_problem(m, rng);
    p.weights.coupling = -1.0;
    CHECK_THROWS_AS(validate_problem(m, p), ConfigError);
    p = random_problem(m, rng);
    p.coupling[0].weight = 1.5;
    CHECK_THROWS_AS(validate_problem(m, p), ConfigError);
    p = random_problem(m, rng);
    p.alignment[0].id = {2, 9};
    CHECK_THROWS_AS(validate_problem(m, p), Error);
    p = random_problem(m, rng);
    p.q_prev = VecX::Zero(3);
    CHECK_THROWS_AS(validate_problem(m, p), DimensionError);
  }

  SECTION("non-positive sigmoid steepness is rejected") {
    const CalibrationData cal = synthetic_calibration();
    const KeypointFrame w = synthetic::keypoints_of(human_model(), human_model().rest_pose());
    RetargetOptions opt;
    opt.k = 0.0;
    CHECK_THROWS_AS(build_problem(m, adjust_keypoints(w, cal), w, cal, cal.q0, opt), ConfigError);
  }
}

TEST_CASE("solve contract on the reference hand", "[retargeting][solve]") {
  const HandModel& m = reference_model();
  std::mt19937_64 rng(5);

  SECTION("feasible, decomposed and deterministic") {
    for (int t = 0; t < 20; ++t) {
      const RetargetProblem p = random_problem(m, rng);
      const RetargetResult a = solve_retarget(m, p);
      const RetargetResult b = solve_retarget(m, p);
      CHECK(m.within_limits(a.q));
      CHECK(a.q == b.q);
      CHECK(a.terms.total == b.terms.total);
      CHECK(a.iterations == b.iterations);
      CHECK(a.terms.total <= objective(m, p.q_prev, p).total);
    }
  }

  SECTION("iteration budget exhaustion is reported, not thrown") {
    RetargetProblem p = random_problem(m, rng);
    p.solver.max_iterations = 1;
    p.solver.step_tolerance = 0.0;
    p.solver.objective_tolerance = 0.0;
    const RetargetResult r = solve_retarget(m, p);
    CHECK(r.iterations == 1);
    CHECK_FALSE(r.converged);
    CHECK(m.within_limits(r.q));
  }
}

TEST_CASE("retargeting streams", "[retargeting][stream]") {
  const HandModel& m = reference_model();
  std::mt19937_64 rng(6);

  SECTION("stationary input reaches a fixed point within five frames") {
    const CalibrationData cal = synthetic_calibration();
    for (int trial = 0; trial < 5; ++trial) {
      const KeypointFrame w = synthetic::keypoints_of(human_model(), synthetic::random_configuration(human_model(), rng, 0.1));
      std::vector<KeypointFrame> frames;
      for (int t = 0; t < 8; ++t) {
        frames.push_back(w);
        frames.back().timestamp = t * 0.04;
      }
      const auto steps = retarget_stream(m, cal, frames, RetargetOptions{});
      bool settled = false;
      for (std::size_t t = 1; t <= 5; ++t) {
        if ((steps[t].result.q - steps[t - 1].result.q).norm() < 1e-6) settled = true;
      }
      CHECK(settled);
    }
  }

  SECTION("smooth robot trajectory is recovered without coupling or smoothing") {
    const CalibrationData cal = identity_calibration(m);
    const VecX a = synthetic::random_configuration(m, rng, 0.1);
    const VecX b = synthetic::random_configuration(m, rng, 0.1);
    const auto traj = synthetic::smooth_trajectory(a, b, 30);
    std::vector<KeypointFrame> frames;
    for (std::size_t t = 0; t < traj.size(); ++t) frames.push_back(synthetic::keypoints_of(m, traj[t], 0.04 * t));
    RetargetOptions opt;
    opt.weights = {1.0, 0.0, 0.0};
    const auto steps = retarget_stream(m, cal, frames, opt);
    for (std::size_t t = 0; t < traj.size(); ++t) {
      CHECK(steps[t].status == FrameStatus::solved);
      CHECK((steps[t].result.q - traj[t]).cwiseAbs().maxCoeff() < 1e-3);
    }
  }

  SECTION("heavier smoothing never increases mean joint motion") {
    const CalibrationData cal = synthetic_calibration();
    const VecX a = synthetic::random_configuration(human_model(), rng, 0.1);
    const VecX b = synthetic::random_configuration(human_model(), rng, 0.1);
    std::vector<KeypointFrame> frames;
    const auto traj = synthetic::smooth_trajectory(a, b, 25);
    for (std::size_t t = 0; t < traj.size(); ++t) {
      frames.push_back(synthetic::add_noise(synthetic::keypoints_of(human_model(), traj[t], 0.04 * t), 0.002, rng));
    }
    auto mean_motion = [&](double lambda3) {
      RetargetOptions opt;
      opt.weights.smoothness = lambda3;
      const auto steps = retarget_stream(m, cal, frames, opt);
      double sum = 0.0;
      VecX prev = cal.q0;
      for (const StreamStep& s : steps) {
        sum += (s.result.q - prev).norm();
        prev = s.result.q;
      }
      return sum / static_cast<double>(steps.size());
    };
    double previous = mean_motion(0.1);
    for (double lambda3 : {1.0, 10.0, 100.0}) {
      const double current = mean_motion(lambda3);
      CHECK(current <= previous);
      previous = current;
    }
  }

  SECTION("missing landmarks are held for three frames, then the frame is rejected") {
    const CalibrationData cal = synthetic_calibration();
    const KeypointFrame w = synthetic::keypoints_of(human_model(), human_model().rest_pose());
    std::vector<KeypointFrame> frames(6, w);
    for (std::size_t t = 1; t < frames.size(); ++t) {
      frames[t].timestamp = 0.04 * t;
      frames[t].valid[2][3] = 0;
      frames[t].points[2][3] = Vec3::Constant(std::nan(""));
    }
    const auto steps = retarget_stream(m, cal, frames, RetargetOptions{});
    CHECK(steps[0].status == FrameStatus::solved);
    for (std::size_t t = 1; t <= 3; ++t) CHECK(steps[t].status == FrameStatus::filled);
    CHECK(steps[4].status == FrameStatus::rejected);
    CHECK(steps[5].status == FrameStatus::rejected);
    CHECK(steps[4].result.q == steps[3].result.q);
    CHECK(steps[4].message.find("(2, 3)") != std::string::npos);
  }

  SECTION("first frame with a missing landmark is rejected and holds q0") {
    const CalibrationData cal = synthetic_calibration();
    KeypointFrame w = synthetic::keypoints_of(human_model(), human_model().rest_pose());
    w.valid[1][4] = 0;
    const std::vector<KeypointFrame> frames{w};
    const auto steps = retarget_stream(m, cal, frames, RetargetOptions{});
    CHECK(steps[0].status == FrameStatus::rejected);
    CHECK(steps[0].result.q == cal.q0);
  }

  SECTION("frames must be time-ordered") {
    const CalibrationData cal = synthetic_calibration();
    std::vector<KeypointFrame> frames(2, synthetic::keypoints_of(human_model(), human_model().rest_pose()));
    frames[0].timestamp = 1.0;
    CHECK_THROWS_AS(retarget_stream(m, cal, frames, RetargetOptions{}), ConfigError);
  }
}
