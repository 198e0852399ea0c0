#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dexretarget/error.hpp"

namespace dexretarget {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;
using Iso3 = Eigen::Isometry3d;
using Jacobian = Eigen::Matrix<double, 6, Eigen::Dynamic>;

/// Link index of the hand base (wrist) frame. Every other link is the child
/// link of the joint with the same index.
inline constexpr int kBaseLink = -1;

struct JointLimits {
  double lower = 0.0;
  double upper = 0.0;
};

/// Revolute joint. The child link frame is `parent * origin * Rot(axis, q)`.
struct Joint {
  std::string name;
  int parent = kBaseLink;
  int finger = 0;
  Vec3 axis = Vec3::UnitZ();
  Iso3 origin = Iso3::Identity();
  JointLimits limits;
};

/// Identifies keypoint j of finger i.
struct KeypointId {
  int finger = 0;
  int index = 0;
  friend bool operator==(const KeypointId&, const KeypointId&) = default;
};

struct Keypoint {
  std::string name;
  int link = kBaseLink;
  Vec3 offset = Vec3::Zero();
};

/// Pitch/yaw joint pair driven by two motors through a bevel differential.
struct Differential {
  int pitch_joint = 0;
  int yaw_joint = 0;
  double yaw_sign = 1.0;
};

struct Finger {
  std::string name;
  std::vector<int> joints;
  std::vector<Keypoint> keypoints;
  std::optional<Differential> differential;

  int tip_index() const { return static_cast<int>(keypoints.size()) - 1; }
};

/// Fingertip taxel grid, row-major, positions in the frame of `link`.
struct TaxelLayout {
  int finger = 0;
  int link = kBaseLink;
  int rows = 0;
  int cols = 0;
  std::vector<Vec3> positions;

  std::size_t size() const { return positions.size(); }
};

/// Immutable kinematic description of a hand. Build through `HandModel::create`
/// (or the document loader) so the invariants are checked once.
class HandModel {
 public:
  HandModel() = default;

  static HandModel create(std::string name, std::vector<Joint> joints, std::vector<Finger> fingers,
                          std::vector<TaxelLayout> taxels, int thumb = 0,
                          std::optional<VecX> rest_pose = std::nullopt);

  const std::string& name() const { return name_; }
  int dof() const { return static_cast<int>(joints_.size()); }
  int finger_count() const { return static_cast<int>(fingers_.size()); }
  int thumb() const { return thumb_; }
  const std::vector<Joint>& joints() const { return joints_; }
  const std::vector<Finger>& fingers() const { return fingers_; }
  const Finger& finger(int i) const { return fingers_.at(static_cast<std::size_t>(i)); }
  const std::vector<TaxelLayout>& taxel_layouts() const { return taxels_; }
  const VecX& rest_pose() const { return rest_pose_; }

  VecX lower_limits() const;
  VecX upper_limits() const;
  VecX clamp(const VecX& q) const;
  bool within_limits(const VecX& q) const;

  /// Joints on the root-to-link path, root first. Empty for the base link.
  const std::vector<int>& chain(int link) const {
    return link == kBaseLink ? empty_chain_ : chains_.at(static_cast<std::size_t>(link));
  }
  /// Joints in an order where every parent precedes its children.
  const std::vector<int>& topological_order() const { return order_; }

  int keypoint_count() const { return static_cast<int>(flat_offsets_.back()); }
  /// Position of (finger, index) in the flat keypoint ordering.
  int flat_index(KeypointId id) const;
  KeypointId tip(int finger) const { return {finger, fingers_.at(static_cast<std::size_t>(finger)).tip_index()}; }
  const Keypoint& keypoint(KeypointId id) const;
  void check_keypoint(KeypointId id) const;

  int joint_index(const std::string& joint_name) const;

  /// Copy with every translation (joint origins, keypoint offsets, taxels)
  /// multiplied by `s`. Angles and limits are unchanged.
  HandModel scaled(double s) const;

 private:
  void finalize();

  std::string name_;
  std::vector<Joint> joints_;
  std::vector<Finger> fingers_;
  std::vector<TaxelLayout> taxels_;
  int thumb_ = 0;
  VecX rest_pose_;
  std::vector<std::vector<int>> chains_;
  std::vector<int> empty_chain_;
  std::vector<int> order_;
  std::vector<int> flat_offsets_{0};
};

/// Keypoint positions grouped by finger: `points[i][j]` is FK_{i,j}.
struct KeypointSet {
  std::vector<std::vector<Vec3>> points;

  const Vec3& at(KeypointId id) const {
    return points.at(static_cast<std::size_t>(id.finger)).at(static_cast<std::size_t>(id.index));
  }
};

/// World poses of every joint's child link at one configuration.
struct LinkPoses {
  std::vector<Iso3> link;
  /// Joint axis in the base frame (after the parent and origin rotations).
  std::vector<Vec3> axis;

  Iso3 pose(int link_index) const {
    return link_index == kBaseLink ? Iso3::Identity() : link[static_cast<std::size_t>(link_index)];
  }
};

inline Mat3 rpy_to_matrix(const Vec3& rpy) {
  return (Eigen::AngleAxisd(rpy.z(), Vec3::UnitZ()) * Eigen::AngleAxisd(rpy.y(), Vec3::UnitY()) *
          Eigen::AngleAxisd(rpy.x(), Vec3::UnitX()))
      .toRotationMatrix();
}

inline Iso3 make_transform(const Vec3& translation, const Vec3& rpy) {
  Iso3 t = Iso3::Identity();
  t.linear() = rpy_to_matrix(rpy);
  t.translation() = translation;
  return t;
}

inline void check_dimension(const HandModel& model, const VecX& q) {
  if (q.size() != model.dof()) {
    throw DimensionError("joint vector has " + std::to_string(q.size()) + " entries, model '" +
                         model.name() + "' has " + std::to_string(model.dof()) + " DoF");
  }
}

inline LinkPoses link_poses(const HandModel& model, const VecX& q) {
  check_dimension(model, q);
  LinkPoses out;
  const auto n = static_cast<std::size_t>(model.dof());
  out.link.assign(n, Iso3::Identity());
  out.axis.assign(n, Vec3::Zero());
  for (int k : model.topological_order()) {
    const Joint& joint = model.joints()[static_cast<std::size_t>(k)];
    const Iso3 frame = out.pose(joint.parent) * joint.origin;
    out.axis[static_cast<std::size_t>(k)] = frame.linear() * joint.axis;
    out.link[static_cast<std::size_t>(k)] = frame * Eigen::AngleAxisd(q[k], joint.axis);
  }
  return out;
}

inline Vec3 keypoint_position(const HandModel& model, const LinkPoses& poses, KeypointId id) {
  const Keypoint& kp = model.keypoint(id);
  return poses.pose(kp.link) * kp.offset;
}

/// Every declared keypoint in the hand base frame.
inline KeypointSet forward_kinematics(const HandModel& model, const VecX& q) {
  const LinkPoses poses = link_poses(model, q);
  KeypointSet out;
  out.points.resize(static_cast<std::size_t>(model.finger_count()));
  for (int i = 0; i < model.finger_count(); ++i) {
    const Finger& f = model.finger(i);
    auto& pts = out.points[static_cast<std::size_t>(i)];
    pts.reserve(f.keypoints.size());
    for (const Keypoint& kp : f.keypoints) pts.push_back(poses.pose(kp.link) * kp.offset);
  }
  return out;
}

/// Geometric Jacobian of a keypoint from precomputed link poses. Rows 0-2 are
/// linear velocity, rows 3-5 angular velocity. Off-chain columns stay zero.
inline Jacobian keypoint_jacobian(const HandModel& model, const LinkPoses& poses, KeypointId id) {
  const Keypoint& kp = model.keypoint(id);
  const Vec3 p = poses.pose(kp.link) * kp.offset;
  Jacobian jac = Jacobian::Zero(6, model.dof());
  for (int k : model.chain(kp.link)) {
    const auto ks = static_cast<std::size_t>(k);
    const Vec3& a = poses.axis[ks];
    jac.block<3, 1>(0, k) = a.cross(p - poses.link[ks].translation());
    jac.block<3, 1>(3, k) = a;
  }
  return jac;
}

inline Jacobian jacobian(const HandModel& model, const VecX& q, KeypointId id) {
  model.check_keypoint(id);
  return keypoint_jacobian(model, link_poses(model, q), id);
}

// --- differential MCP drive ------------------------------------------------

struct MotorPair {
  double theta1 = 0.0;
  double theta2 = 0.0;
};

struct PitchYaw {
  double pitch = 0.0;
  double yaw = 0.0;
};

/// Equal motor motion flexes, opposite motion abducts.
inline PitchYaw motor_to_joint(double theta1, double theta2, double yaw_sign = 1.0) {
  return {0.5 * (theta1 + theta2), yaw_sign * 0.5 * (theta1 - theta2)};
}

inline MotorPair joint_to_motor(double pitch, double yaw, double yaw_sign = 1.0) {
  const double y = yaw_sign * yaw;
  return {pitch + y, pitch - y};
}

/// Motor command vector for a full joint configuration. Joints outside a
/// differential pair map one-to-one; a pair (pitch, yaw) occupies the two
/// motor slots at the pitch and yaw joint indices respectively.
inline VecX motors_from_joints(const HandModel& model, const VecX& q) {
  check_dimension(model, q);
  VecX motors = q;
  for (const Finger& f : model.fingers()) {
    if (!f.differential) continue;
    const Differential& d = *f.differential;
    const MotorPair m = joint_to_motor(q[d.pitch_joint], q[d.yaw_joint], d.yaw_sign);
    motors[d.pitch_joint] = m.theta1;
    motors[d.yaw_joint] = m.theta2;
  }
  return motors;
}

inline VecX joints_from_motors(const HandModel& model, const VecX& motors) {
  check_dimension(model, motors);
  VecX q = motors;
  for (const Finger& f : model.fingers()) {
    if (!f.differential) continue;
    const Differential& d = *f.differential;
    const PitchYaw j = motor_to_joint(motors[d.pitch_joint], motors[d.yaw_joint], d.yaw_sign);
    q[d.pitch_joint] = j.pitch;
    q[d.yaw_joint] = j.yaw;
  }
  return q;
}

// --- tactile ---------------------------------------------------------------

struct TouchPoint {
  Vec3 position = Vec3::Zero();
  double pressure = 0.0;
  int finger = 0;
  int row = 0;
  int col = 0;
};

struct TouchPointCloud {
  std::vector<TouchPoint> points;
};

/// One pressure grid per taxel layout, row-major, same order as the model's
/// `taxel_layouts()`.
using TaxelReadings = std::vector<std::vector<double>>;

/// Lifts taxel readings into the hand base frame. With `filter_active` only
/// taxels whose reading exceeds `activation_threshold` are kept.
inline TouchPointCloud taxel_point_cloud(const HandModel& model, const VecX& q, const TaxelReadings& readings,
                                         bool filter_active = false, double activation_threshold = 0.0) {
  const auto& layouts = model.taxel_layouts();
  if (readings.size() != layouts.size()) {
    throw DimensionError("expected " + std::to_string(layouts.size()) + " taxel grids, got " +
                         std::to_string(readings.size()));
  }
  const LinkPoses poses = link_poses(model, q);
  TouchPointCloud cloud;
  for (std::size_t g = 0; g < layouts.size(); ++g) {
    const TaxelLayout& layout = layouts[g];
    if (readings[g].size() != layout.size()) {
      throw DimensionError("taxel grid " + std::to_string(g) + " expects " + std::to_string(layout.size()) +
                           " readings, got " + std::to_string(readings[g].size()));
    }
    const Iso3 pose = poses.pose(layout.link);
    for (std::size_t t = 0; t < layout.size(); ++t) {
      const double value = readings[g][t];
      if (filter_active && !(value > activation_threshold)) continue;
      const int col_count = std::max(layout.cols, 1);
      cloud.points.push_back({pose * layout.positions[t], value, layout.finger,
                              static_cast<int>(t) / col_count, static_cast<int>(t) % col_count});
    }
  }
  return cloud;
}

// --- HandModel implementation ---------------------------------------------

inline HandModel HandModel::create(std::string name, std::vector<Joint> joints, std::vector<Finger> fingers,
                                   std::vector<TaxelLayout> taxels, int thumb, std::optional<VecX> rest_pose) {
  HandModel m;
  m.name_ = std::move(name);
  m.joints_ = std::move(joints);
  m.fingers_ = std::move(fingers);
  m.taxels_ = std::move(taxels);
  m.thumb_ = thumb;
  m.finalize();
  if (rest_pose) {
    if (rest_pose->size() != m.dof()) {
      throw ValidationError("rest pose has " + std::to_string(rest_pose->size()) + " entries, expected " +
                            std::to_string(m.dof()));
    }
    if (!m.within_limits(*rest_pose)) throw ValidationError("rest pose violates joint limits");
    m.rest_pose_ = *rest_pose;
  } else {
    m.rest_pose_ = m.clamp(VecX::Zero(m.dof()));
  }
  return m;
}

inline void HandModel::finalize() {
  const int n = dof();
  if (fingers_.empty()) throw ValidationError("model has no fingers");
  if (thumb_ < 0 || thumb_ >= finger_count()) throw ValidationError("thumb index out of range");

  for (int k = 0; k < n; ++k) {
    const Joint& j = joints_[static_cast<std::size_t>(k)];
    if (!(j.limits.lower < j.limits.upper)) {
      throw ValidationError("joint '" + j.name + "': lower limit must be below upper limit");
    }
    if (std::abs(j.axis.norm() - 1.0) > 1e-9) {
      throw ValidationError("joint '" + j.name + "': axis must have unit norm");
    }
    if (j.parent < kBaseLink || j.parent >= n) {
      throw ValidationError("joint '" + j.name + "': parent link does not exist");
    }
    for (int other = 0; other < k; ++other) {
      if (joints_[static_cast<std::size_t>(other)].name == j.name) {
        throw ValidationError("duplicate joint name '" + j.name + "'");
      }
    }
  }

  // Root-to-link chains; a walk longer than n means the parent graph has a cycle.
  chains_.assign(static_cast<std::size_t>(n), {});
  for (int k = 0; k < n; ++k) {
    std::vector<int> path;
    int cur = k;
    while (cur != kBaseLink) {
      if (static_cast<int>(path.size()) > n) {
        throw ValidationError("joint '" + joints_[static_cast<std::size_t>(k)].name +
                              "' is part of a cyclic kinematic tree");
      }
      path.push_back(cur);
      cur = joints_[static_cast<std::size_t>(cur)].parent;
    }
    chains_[static_cast<std::size_t>(k)].assign(path.rbegin(), path.rend());
  }

  order_.clear();
  std::vector<bool> placed(static_cast<std::size_t>(n), false);
  for (int k = 0; k < n; ++k) {
    for (int c : chains_[static_cast<std::size_t>(k)]) {
      if (!placed[static_cast<std::size_t>(c)]) {
        placed[static_cast<std::size_t>(c)] = true;
        order_.push_back(c);
      }
    }
  }

  flat_offsets_.assign(1, 0);
  for (std::size_t i = 0; i < fingers_.size(); ++i) {
    const Finger& f = fingers_[i];
    if (f.keypoints.size() < 2) {
      throw ValidationError("finger '" + f.name + "' needs a root keypoint and at least one more");
    }
    for (std::size_t a = 0; a < f.keypoints.size(); ++a) {
      const Keypoint& kp = f.keypoints[a];
      if (kp.link < kBaseLink || kp.link >= n) {
        throw ValidationError("keypoint '" + kp.name + "' of finger '" + f.name + "' references a missing link");
      }
      for (std::size_t b = 0; b < a; ++b) {
        if (f.keypoints[b].name == kp.name) {
          throw ValidationError("finger '" + f.name + "' declares keypoint '" + kp.name + "' twice");
        }
      }
    }
    for (int j : f.joints) {
      if (j < 0 || j >= n) throw ValidationError("finger '" + f.name + "' lists a missing joint");
    }
    if (f.differential) {
      const Differential& d = *f.differential;
      if (d.pitch_joint < 0 || d.pitch_joint >= n || d.yaw_joint < 0 || d.yaw_joint >= n ||
          d.pitch_joint == d.yaw_joint) {
        throw ValidationError("finger '" + f.name + "': invalid differential joint pair");
      }
      if (std::abs(std::abs(d.yaw_sign) - 1.0) > 0.0) {
        throw ValidationError("finger '" + f.name + "': differential yaw_sign must be +1 or -1");
      }
    }
    flat_offsets_.push_back(flat_offsets_.back() + static_cast<int>(f.keypoints.size()));
  }

  for (const TaxelLayout& t : taxels_) {
    if (t.finger < 0 || t.finger >= finger_count()) throw ValidationError("taxel layout references a missing finger");
    if (t.link < kBaseLink || t.link >= n) throw ValidationError("taxel layout references a missing link");
    if (t.rows * t.cols != static_cast<int>(t.positions.size())) {
      throw ValidationError("taxel layout of finger '" + fingers_[static_cast<std::size_t>(t.finger)].name +
                            "' has " + std::to_string(t.positions.size()) + " positions for a " +
                            std::to_string(t.rows) + "x" + std::to_string(t.cols) + " grid");
    }
  }
}

inline VecX HandModel::lower_limits() const {
  VecX v(dof());
  for (int k = 0; k < dof(); ++k) v[k] = joints_[static_cast<std::size_t>(k)].limits.lower;
  return v;
}

inline VecX HandModel::upper_limits() const {
  VecX v(dof());
  for (int k = 0; k < dof(); ++k) v[k] = joints_[static_cast<std::size_t>(k)].limits.upper;
  return v;
}

inline VecX HandModel::clamp(const VecX& q) const {
  check_dimension(*this, q);
  return q.cwiseMax(lower_limits()).cwiseMin(upper_limits());
}

inline bool HandModel::within_limits(const VecX& q) const {
  if (q.size() != dof()) return false;
  for (int k = 0; k < dof(); ++k) {
    const JointLimits& l = joints_[static_cast<std::size_t>(k)].limits;
    if (!(q[k] >= l.lower && q[k] <= l.upper)) return false;
  }
  return true;
}

inline int HandModel::flat_index(KeypointId id) const {
  check_keypoint(id);
  return flat_offsets_[static_cast<std::size_t>(id.finger)] + id.index;
}

inline const Keypoint& HandModel::keypoint(KeypointId id) const {
  check_keypoint(id);
  return fingers_[static_cast<std::size_t>(id.finger)].keypoints[static_cast<std::size_t>(id.index)];
}

inline void HandModel::check_keypoint(KeypointId id) const {
  if (id.finger < 0 || id.finger >= finger_count() || id.index < 0 ||
      id.index >= static_cast<int>(fingers_[static_cast<std::size_t>(id.finger)].keypoints.size())) {
    throw Error("unknown keypoint (" + std::to_string(id.finger) + ", " + std::to_string(id.index) +
                ") in model '" + name_ + "'");
  }
}

inline int HandModel::joint_index(const std::string& joint_name) const {
  for (int k = 0; k < dof(); ++k) {
    if (joints_[static_cast<std::size_t>(k)].name == joint_name) return k;
  }
  return -2;
}

inline HandModel HandModel::scaled(double s) const {
  HandModel m = *this;
  for (Joint& j : m.joints_) j.origin.translation() *= s;
  for (Finger& f : m.fingers_) {
    for (Keypoint& kp : f.keypoints) kp.offset *= s;
  }
  for (TaxelLayout& t : m.taxels_) {
    for (Vec3& p : t.positions) p *= s;
  }
  return m;
}

}  // namespace dexretarget
