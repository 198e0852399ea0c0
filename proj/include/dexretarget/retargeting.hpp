#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dexretarget/box_sqp.hpp"
#include "dexretarget/kinematics.hpp"

namespace dexretarget {

/// Human hand landmarks in the wrist frame, grouped like the model keypoints:
/// `points[i][j]` is landmark j of finger i, j = 0 being the shared wrist root.
struct KeypointFrame {
  double timestamp = 0.0;
  std::vector<std::vector<Vec3>> points;
  std::vector<std::vector<std::uint8_t>> valid;

  const Vec3& at(KeypointId id) const {
    return points.at(static_cast<std::size_t>(id.finger)).at(static_cast<std::size_t>(id.index));
  }
  bool is_valid(KeypointId id) const {
    return valid.at(static_cast<std::size_t>(id.finger)).at(static_cast<std::size_t>(id.index)) != 0 &&
           at(id).allFinite();
  }
  bool all_valid() const {
    for (std::size_t i = 0; i < points.size(); ++i) {
      for (std::size_t j = 0; j < points[i].size(); ++j) {
        if (!is_valid({static_cast<int>(i), static_cast<int>(j)})) return false;
      }
    }
    return true;
  }
};

class FrameRejected : public Error {
 public:
  using Error::Error;
};

inline KeypointFrame make_frame(const KeypointSet& set, double timestamp = 0.0) {
  KeypointFrame f;
  f.timestamp = timestamp;
  f.points = set.points;
  for (const auto& finger : set.points) f.valid.emplace_back(finger.size(), std::uint8_t{1});
  return f;
}

/// Flat landmark count: one shared wrist plus the non-root keypoints of every
/// finger (21 for a five-finger hand with four keypoints per finger).
inline int landmark_count(const HandModel& model) {
  int n = 1;
  for (const Finger& f : model.fingers()) n += static_cast<int>(f.keypoints.size()) - 1;
  return n;
}

/// Builds a frame from flat landmarks ordered wrist, then finger by finger.
inline KeypointFrame frame_from_landmarks(const HandModel& model, std::span<const Vec3> landmarks,
                                          std::span<const std::uint8_t> valid, double timestamp) {
  const auto expected = static_cast<std::size_t>(landmark_count(model));
  if (landmarks.size() != expected || valid.size() != expected) {
    throw DimensionError("expected " + std::to_string(expected) + " landmarks, got " +
                         std::to_string(landmarks.size()));
  }
  KeypointFrame f;
  f.timestamp = timestamp;
  std::size_t next = 1;
  for (const Finger& finger : model.fingers()) {
    std::vector<Vec3> pts{landmarks[0]};
    std::vector<std::uint8_t> ok{valid[0]};
    for (std::size_t j = 1; j < finger.keypoints.size(); ++j, ++next) {
      pts.push_back(landmarks[next]);
      ok.push_back(valid[next]);
    }
    f.points.push_back(std::move(pts));
    f.valid.push_back(std::move(ok));
  }
  return f;
}

inline void landmarks_from_frame(const KeypointFrame& frame, std::vector<Vec3>& landmarks,
                                 std::vector<std::uint8_t>& valid) {
  landmarks.clear();
  valid.clear();
  if (frame.points.empty()) return;
  landmarks.push_back(frame.points[0][0]);
  valid.push_back(frame.valid[0][0]);
  for (std::size_t i = 0; i < frame.points.size(); ++i) {
    for (std::size_t j = 1; j < frame.points[i].size(); ++j) {
      landmarks.push_back(frame.points[i][j]);
      valid.push_back(frame.valid[i][j]);
    }
  }
}

inline void check_frame_layout(const HandModel& model, const KeypointFrame& w) {
  if (static_cast<int>(w.points.size()) != model.finger_count() || w.valid.size() != w.points.size()) {
    throw DimensionError("keypoint frame has " + std::to_string(w.points.size()) + " fingers, model has " +
                         std::to_string(model.finger_count()));
  }
  for (int i = 0; i < model.finger_count(); ++i) {
    const auto n = model.finger(i).keypoints.size();
    if (w.points[static_cast<std::size_t>(i)].size() != n || w.valid[static_cast<std::size_t>(i)].size() != n) {
      throw DimensionError("finger " + std::to_string(i) + " of keypoint frame does not match the model");
    }
  }
}

// --- calibration ------------------------------------------------------------

/// Thumb-to-finger distance range used to normalise the coupling proximity.
struct CouplingBounds {
  int finger = 0;
  double d_min = 0.0;
  double d_max = 0.0;
};

struct CalibrationData {
  /// scale[i][j] maps human segment (j, j+1) of finger i onto the robot.
  std::vector<std::vector<double>> scale;
  /// Per-finger translation applied at the MCP keypoint (j = 1).
  std::vector<Vec3> offset;
  KeypointFrame reference;
  VecX q0;
  int thumb = 0;
  std::vector<CouplingBounds> coupling;

  const CouplingBounds* bounds_for(int finger) const {
    for (const CouplingBounds& b : coupling) {
      if (b.finger == finger) return &b;
    }
    return nullptr;
  }
};

inline void validate_calibration(const CalibrationData& cal) {
  for (std::size_t i = 0; i < cal.scale.size(); ++i) {
    for (std::size_t j = 0; j < cal.scale[i].size(); ++j) {
      if (!(cal.scale[i][j] > 0.0) || !std::isfinite(cal.scale[i][j])) {
        throw CalibrationError(static_cast<int>(i), static_cast<int>(j), "scale factor must be positive");
      }
    }
  }
  for (const CouplingBounds& b : cal.coupling) {
    if (!(b.d_min >= 0.0) || !(b.d_max > b.d_min)) {
      throw ConfigError("coupling bounds of finger " + std::to_string(b.finger) +
                        " need d_max > d_min >= 0");
    }
  }
}

/// Per-segment scale factors and per-finger offsets that map static human
/// keypoints `w_star` onto the robot keypoints at `q0`.
inline CalibrationData calibrate(const HandModel& model, const VecX& q0, const KeypointFrame& w_star) {
  check_dimension(model, q0);
  check_frame_layout(model, w_star);
  const KeypointSet robot = forward_kinematics(model, q0);
  CalibrationData cal;
  cal.reference = w_star;
  cal.q0 = q0;
  cal.thumb = model.thumb();
  for (int i = 0; i < model.finger_count(); ++i) {
    const int n = static_cast<int>(model.finger(i).keypoints.size());
    for (int j = 0; j < n; ++j) {
      if (!w_star.is_valid({i, j})) throw CalibrationError(i, j, "static landmark is missing");
    }
    std::vector<double> r;
    for (int j = 0; j + 1 < n; ++j) {
      const double human = (w_star.at({i, j + 1}) - w_star.at({i, j})).norm();
      if (!(human > 0.0)) throw CalibrationError(i, j, "zero-length human segment");
      const double robot_len = (robot.at({i, j + 1}) - robot.at({i, j})).norm();
      if (!(robot_len > 0.0)) throw CalibrationError(i, j, "zero-length robot segment");
      r.push_back(robot_len / human);
    }
    cal.scale.push_back(std::move(r));
    cal.offset.push_back(robot.at({i, 1}) - w_star.at({i, 1}));
  }
  const KeypointId thumb_tip = model.tip(model.thumb());
  for (int i = 0; i < model.finger_count(); ++i) {
    if (i == model.thumb()) continue;
    const double d_max = (w_star.at(model.tip(i)) - w_star.at(thumb_tip)).norm();
    if (!(d_max > 0.0)) throw CalibrationError(i, model.tip(i).index, "fingertip coincides with thumb tip");
    cal.coupling.push_back({i, 0.0, d_max});
  }
  return cal;
}

// --- conformal keypoint adjustment ----------------------------------------------

inline KeypointSet adjust_keypoints(const KeypointFrame& w, const CalibrationData& cal) {
  if (w.points.size() != cal.scale.size() || cal.offset.size() != cal.scale.size()) {
    throw DimensionError("keypoint frame and calibration have different finger counts");
  }
  KeypointSet v;
  v.points.resize(w.points.size());
  for (std::size_t i = 0; i < w.points.size(); ++i) {
    const auto& wi = w.points[i];
    const auto& ri = cal.scale[i];
    if (wi.size() != ri.size() + 1) {
      throw DimensionError("finger " + std::to_string(i) + " has " + std::to_string(wi.size()) +
                           " landmarks, calibration expects " + std::to_string(ri.size() + 1));
    }
    for (std::size_t j = 0; j < wi.size(); ++j) {
      if (!w.is_valid({static_cast<int>(i), static_cast<int>(j)})) {
        throw FrameRejected("landmark (" + std::to_string(i) + ", " + std::to_string(j) + ") is missing");
      }
    }
    // v_j = v_{j-1} + r_{j-1} (w_j - w_{j-1}) (+ u at j = 1), written as w_j
    // plus an accumulated correction so identity calibration returns w exactly.
    auto& vi = v.points[i];
    vi.resize(wi.size());
    vi[0] = wi[0];
    Vec3 correction = cal.offset[i];
    for (std::size_t j = 1; j < wi.size(); ++j) {
      correction += (ri[j - 1] - 1.0) * (wi[j] - wi[j - 1]);
      vi[j] = wi[j] + correction;
    }
  }
  return v;
}

/// Global homothety about the wrist root, the usual alternative to per-segment calibration.
inline KeypointSet baseline_uniform_scaling(const KeypointFrame& w, double alpha) {
  if (!(alpha > 0.0)) throw ConfigError("uniform scaling factor must be positive");
  KeypointSet v;
  v.points = w.points;
  for (auto& finger : v.points) {
    const Vec3 root = finger.front();
    for (Vec3& p : finger) p = root + alpha * (p - root);
  }
  return v;
}

// --- contact-aware coupling -------------------------------------------------------

struct CouplingTerm {
  int finger = 0;
  Vec3 delta = Vec3::Zero();
  double distance = 0.0;
  /// Normalised proximity in [0, 1]; 1 at contact.
  double proximity = 0.0;
  double weight = 0.0;
};

inline double sigmoid_weight(double proximity, double k, double c) {
  return 1.0 / (1.0 + std::exp(-k * (proximity - c)));
}

inline double normalized_proximity(double distance, const CouplingBounds& b) {
  if (!(b.d_max > b.d_min)) {
    throw ConfigError("coupling bounds of finger " + std::to_string(b.finger) + " need d_max > d_min");
  }
  const double d = 1.0 - (distance - b.d_min) / (b.d_max - b.d_min);
  return std::clamp(d, 0.0, 1.0);
}

/// Thumb-relative fingertip vectors of the raw human landmarks and their
/// proximity weights, one per finger with calibrated bounds.
inline std::vector<CouplingTerm> coupling_weights(const KeypointFrame& w, const CalibrationData& cal, double k,
                                                  double c) {
  std::vector<CouplingTerm> out;
  const auto& thumb_pts = w.points.at(static_cast<std::size_t>(cal.thumb));
  const KeypointId thumb_tip{cal.thumb, static_cast<int>(thumb_pts.size()) - 1};
  if (!w.is_valid(thumb_tip)) throw FrameRejected("thumb tip landmark is missing");
  for (const CouplingBounds& b : cal.coupling) {
    const KeypointId tip{b.finger, static_cast<int>(w.points.at(static_cast<std::size_t>(b.finger)).size()) - 1};
    if (!w.is_valid(tip)) throw FrameRejected("fingertip landmark of finger " + std::to_string(b.finger) + " is missing");
    CouplingTerm t;
    t.finger = b.finger;
    t.delta = w.at(tip) - w.at(thumb_tip);
    t.distance = t.delta.norm();
    t.proximity = normalized_proximity(t.distance, b);
    t.weight = sigmoid_weight(t.proximity, k, c);
    out.push_back(t);
  }
  return out;
}

// --- objective ---------------------------------------------------------------

struct ObjectiveWeights {
  double alignment = 1.0;
  double coupling = 1.0;
  double smoothness = 1.0;
};

struct AlignmentTarget {
  KeypointId id;
  Vec3 target = Vec3::Zero();
};

/// Default length unit of the position residuals, in metres. Joint angles
/// enter the smoothness term in radians, so this fixes the relative scale of
/// the three terms under equal weights.
inline constexpr double kDefaultLengthUnit = 1e-3;

struct RetargetProblem {
  std::vector<AlignmentTarget> alignment;
  std::vector<CouplingTerm> coupling;
  int thumb = 0;
  VecX q_prev;
  ObjectiveWeights weights;
  /// Position residuals are measured in multiples of this many metres.
  double length_unit = kDefaultLengthUnit;
  SolverSettings solver;
};

struct ObjectiveTerms {
  double alignment = 0.0;
  double coupling = 0.0;
  double smoothness = 0.0;
  double total = 0.0;
};

struct RetargetResult {
  VecX q;
  ObjectiveTerms terms;
  int iterations = 0;
  bool converged = false;
};

struct RetargetOptions {
  ObjectiveWeights weights;
  double k = 10.0;
  double c = 0.5;
  /// Empty selects the intermediate (j = 2) and tip keypoint of every finger.
  std::vector<KeypointId> alignment_set;
  double length_unit = kDefaultLengthUnit;
  SolverSettings solver;
};

inline std::vector<KeypointId> default_alignment_set(const HandModel& model) {
  std::vector<KeypointId> ids;
  for (int i = 0; i < model.finger_count(); ++i) {
    const int tip = model.finger(i).tip_index();
    if (tip > 2) ids.push_back({i, 2});
    ids.push_back({i, tip});
  }
  return ids;
}

inline void validate_problem(const HandModel& model, const RetargetProblem& prob) {
  check_dimension(model, prob.q_prev);
  const ObjectiveWeights& w = prob.weights;
  if (!(w.alignment >= 0.0 && w.coupling >= 0.0 && w.smoothness >= 0.0)) {
    throw ConfigError("objective weights must be non-negative");
  }
  for (const AlignmentTarget& t : prob.alignment) {
    model.check_keypoint(t.id);
    if (!t.target.allFinite()) throw ConfigError("alignment target is not finite");
  }
  model.check_keypoint(model.tip(prob.thumb));
  for (const CouplingTerm& t : prob.coupling) {
    model.check_keypoint(model.tip(t.finger));
    if (!(t.weight >= 0.0 && t.weight <= 1.0)) throw ConfigError("coupling weight must lie in [0, 1]");
  }
  if (!(prob.length_unit > 0.0) || !std::isfinite(prob.length_unit)) {
    throw ConfigError("length unit must be positive");
  }
  if (prob.solver.max_iterations <= 0) throw ConfigError("solver needs a positive iteration budget");
}

/// Assembles one solve from targets that were already adjusted (conformal or
/// baseline) and the raw frame that drives the coupling term.
inline RetargetProblem build_problem(const HandModel& model, const KeypointSet& targets, const KeypointFrame& w,
                                     const CalibrationData& cal, const VecX& q_prev, const RetargetOptions& opt) {
  if (!(opt.k > 0.0)) throw ConfigError("sigmoid steepness k must be positive");
  RetargetProblem prob;
  const std::vector<KeypointId> ids = opt.alignment_set.empty() ? default_alignment_set(model) : opt.alignment_set;
  for (const KeypointId& id : ids) {
    model.check_keypoint(id);
    prob.alignment.push_back({id, targets.at(id)});
  }
  prob.coupling = coupling_weights(w, cal, opt.k, opt.c);
  prob.thumb = model.thumb();
  prob.q_prev = q_prev;
  prob.weights = opt.weights;
  prob.length_unit = opt.length_unit;
  prob.solver = opt.solver;
  validate_problem(model, prob);
  return prob;
}

inline ObjectiveTerms evaluate_terms(const HandModel& model, const LinkPoses& poses, const VecX& q,
                                     const RetargetProblem& prob) {
  ObjectiveTerms t;
  for (const AlignmentTarget& a : prob.alignment) {
    t.alignment += (a.target - keypoint_position(model, poses, a.id)).squaredNorm();
  }
  const Vec3 thumb_tip = keypoint_position(model, poses, model.tip(prob.thumb));
  for (const CouplingTerm& c : prob.coupling) {
    const Vec3 g = keypoint_position(model, poses, model.tip(c.finger)) - thumb_tip;
    t.coupling += c.weight * (c.delta - g).squaredNorm();
  }
  const double inv_unit2 = 1.0 / (prob.length_unit * prob.length_unit);
  t.alignment *= inv_unit2;
  t.coupling *= inv_unit2;
  t.smoothness = (q - prob.q_prev).squaredNorm();
  t.total = prob.weights.alignment * t.alignment + prob.weights.coupling * t.coupling +
            prob.weights.smoothness * t.smoothness;
  return t;
}

/// Weighted objective and its unweighted terms.
inline ObjectiveTerms objective(const HandModel& model, const VecX& q, const RetargetProblem& prob) {
  return evaluate_terms(model, link_poses(model, q), q, prob);
}

inline VecX objective_gradient(const HandModel& model, const VecX& q, const RetargetProblem& prob) {
  const LinkPoses poses = link_poses(model, q);
  const double inv_unit2 = 1.0 / (prob.length_unit * prob.length_unit);
  VecX grad = 2.0 * prob.weights.smoothness * (q - prob.q_prev);
  for (const AlignmentTarget& a : prob.alignment) {
    const Vec3 err = a.target - keypoint_position(model, poses, a.id);
    const Jacobian j = keypoint_jacobian(model, poses, a.id);
    grad -= 2.0 * prob.weights.alignment * inv_unit2 * j.topRows<3>().transpose() * err;
  }
  if (!prob.coupling.empty()) {
    const KeypointId thumb = model.tip(prob.thumb);
    const Vec3 thumb_tip = keypoint_position(model, poses, thumb);
    const Jacobian j_thumb = keypoint_jacobian(model, poses, thumb);
    for (const CouplingTerm& c : prob.coupling) {
      const KeypointId tip = model.tip(c.finger);
      const Vec3 err = c.delta - (keypoint_position(model, poses, tip) - thumb_tip);
      const MatX dg = keypoint_jacobian(model, poses, tip).topRows<3>() - j_thumb.topRows<3>();
      grad -= 2.0 * prob.weights.coupling * inv_unit2 * c.weight * dg.transpose() * err;
    }
  }
  return grad;
}

namespace detail {

/// Stacked residual whose squared norm equals the weighted objective.
struct RetargetResidual {
  const HandModel& model;
  const RetargetProblem& prob;

  void operator()(const VecX& q, VecX& r, MatX* jac) const {
    const auto n = static_cast<Eigen::Index>(model.dof());
    const auto rows = static_cast<Eigen::Index>(3 * (prob.alignment.size() + prob.coupling.size())) + n;
    r.resize(rows);
    if (jac) jac->setZero(rows, n);
    const LinkPoses poses = link_poses(model, q);
    const double sa = std::sqrt(prob.weights.alignment) / prob.length_unit;
    Eigen::Index row = 0;
    for (const AlignmentTarget& a : prob.alignment) {
      r.segment<3>(row) = sa * (a.target - keypoint_position(model, poses, a.id));
      if (jac) jac->middleRows<3>(row) = -sa * keypoint_jacobian(model, poses, a.id).topRows<3>();
      row += 3;
    }
    if (!prob.coupling.empty()) {
      const KeypointId thumb = model.tip(prob.thumb);
      const Vec3 thumb_tip = keypoint_position(model, poses, thumb);
      MatX j_thumb;
      if (jac) j_thumb = keypoint_jacobian(model, poses, thumb).topRows<3>();
      for (const CouplingTerm& c : prob.coupling) {
        const double sc = std::sqrt(prob.weights.coupling * c.weight) / prob.length_unit;
        const KeypointId tip = model.tip(c.finger);
        r.segment<3>(row) = sc * (c.delta - (keypoint_position(model, poses, tip) - thumb_tip));
        if (jac) jac->middleRows<3>(row) = -sc * (keypoint_jacobian(model, poses, tip).topRows<3>() - j_thumb);
        row += 3;
      }
    }
    const double ss = std::sqrt(prob.weights.smoothness);
    r.segment(row, n) = ss * (q - prob.q_prev);
    if (jac) jac->bottomRows(n).diagonal().setConstant(ss);
  }
};

}  // namespace detail

/// Box-constrained local minimiser of the objective, warm-started at q_prev.
inline RetargetResult solve_retarget(const HandModel& model, const RetargetProblem& prob) {
  validate_problem(model, prob);
  const detail::RetargetResidual residual{model, prob};
  const BoxSqpResult sol =
      minimize_box_least_squares(residual, prob.q_prev, model.lower_limits(), model.upper_limits(), prob.solver);
  RetargetResult out;
  out.q = sol.x;
  out.terms = objective(model, out.q, prob);
  out.iterations = sol.iterations;
  out.converged = sol.converged;
  return out;
}

// --- streams -------------------------------------------------------------------

enum class FrameStatus { solved, filled, rejected };

inline const char* to_string(FrameStatus s) {
  switch (s) {
    case FrameStatus::solved: return "solved";
    case FrameStatus::filled: return "filled";
    case FrameStatus::rejected: return "rejected";
  }
  return "?";
}

struct StreamStep {
  double timestamp = 0.0;
  RetargetResult result;
  FrameStatus status = FrameStatus::solved;
  std::string message;
};

/// Maximum number of consecutive frames a missing landmark may be replaced by
/// its last valid value before the frame is rejected.
inline constexpr int kMaxLandmarkHold = 3;

/// Where targets come from: the conformal adjustment or a uniform scale.
struct TargetMapping {
  std::optional<double> uniform_alpha;

  KeypointSet operator()(const KeypointFrame& w, const CalibrationData& cal) const {
    return uniform_alpha ? baseline_uniform_scaling(w, *uniform_alpha) : adjust_keypoints(w, cal);
  }
};

/// Sequential retargeting; each solve is warm-started at the previous output
/// (q0 for the first frame). Rejected frames repeat the last output.
inline std::vector<StreamStep> retarget_stream(const HandModel& model, const CalibrationData& cal,
                                               std::span<const KeypointFrame> frames, const RetargetOptions& opt,
                                               const TargetMapping& mapping = {}) {
  check_dimension(model, cal.q0);
  std::vector<StreamStep> out;
  out.reserve(frames.size());
  VecX q_prev = cal.q0;
  std::optional<KeypointFrame> last_valid;
  std::vector<std::vector<int>> hold_age;
  double last_time = -std::numeric_limits<double>::infinity();

  for (const KeypointFrame& raw : frames) {
    StreamStep step;
    step.timestamp = raw.timestamp;
    if (raw.timestamp < last_time) throw ConfigError("keypoint frames are not time-ordered");
    last_time = raw.timestamp;
    check_frame_layout(model, raw);
    if (hold_age.empty()) {
      for (const auto& f : raw.points) hold_age.emplace_back(f.size(), 0);
    }

    KeypointFrame w = raw;
    bool filled = false;
    bool reject = false;
    for (std::size_t i = 0; i < w.points.size() && !reject; ++i) {
      for (std::size_t j = 0; j < w.points[i].size(); ++j) {
        const KeypointId id{static_cast<int>(i), static_cast<int>(j)};
        if (raw.is_valid(id)) {
          hold_age[i][j] = 0;
          continue;
        }
        ++hold_age[i][j];
        if (!last_valid || hold_age[i][j] > kMaxLandmarkHold) {
          reject = true;
          step.message = "landmark (" + std::to_string(i) + ", " + std::to_string(j) + ") missing";
          break;
        }
        w.points[i][j] = last_valid->at(id);
        w.valid[i][j] = 1;
        filled = true;
      }
    }

    if (!reject) {
      try {
        const RetargetProblem prob = build_problem(model, mapping(w, cal), w, cal, q_prev, opt);
        step.result = solve_retarget(model, prob);
        step.status = filled ? FrameStatus::filled : FrameStatus::solved;
        last_valid = w;
        q_prev = step.result.q;
      } catch (const FrameRejected& e) {
        reject = true;
        step.message = e.what();
      }
    }
    if (reject) {
      step.status = FrameStatus::rejected;
      step.result.q = q_prev;
      step.result.converged = false;
    }
    out.push_back(std::move(step));
  }
  return out;
}

}  // namespace dexretarget
