#pragma once

// Synthetic human keypoint data generated from a hand model: static
// calibration poses, a small gesture suite and smooth joint trajectories.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "dexretarget/retargeting.hpp"

namespace dexretarget::synthetic {

struct Gesture {
  std::string name;
  VecX q;
};

/// Per-finger joint values (4 per finger, thumb first) for a five-finger hand.
inline VecX five_finger_pose(const HandModel& model, const std::array<double, 4>& thumb,
                             const std::array<std::array<double, 4>, 4>& fingers) {
  if (model.dof() != 20 || model.finger_count() != 5) {
    throw DimensionError("gesture suite needs a five-finger, 20-DoF model");
  }
  VecX q(20);
  int k = 0;
  for (int i = 0; i < 5; ++i) {
    const auto& src = i == model.thumb() ? thumb : fingers[static_cast<std::size_t>(i < model.thumb() ? i : i - 1)];
    for (double v : src) q[k++] = v;
  }
  return model.clamp(q);
}

/// Open hand, fist, thumb-index pinch and index point.
inline std::vector<Gesture> gesture_suite(const HandModel& human) {
  using F = std::array<double, 4>;
  const F relaxed{0.0, 0.15, 0.2, 0.1};
  const F curled{0.0, 1.3, 1.5, 1.0};
  const F straight{0.0, 0.0, 0.05, 0.0};
  return {
      {"open", five_finger_pose(human, {0.1, 0.1, 0.1, 0.1}, {F{0.1, 0.1, 0.1, 0.05}, relaxed, relaxed, F{-0.1, 0.1, 0.1, 0.05}})},
      {"fist", five_finger_pose(human, {0.6, 0.7, 0.6, 0.5}, {curled, curled, curled, curled})},
      {"pinch", five_finger_pose(human, {0.9, 0.55, 0.35, 0.3}, {F{0.05, 0.75, 0.7, 0.4}, relaxed, relaxed, relaxed})},
      {"point", five_finger_pose(human, {0.6, 0.7, 0.6, 0.5}, {straight, curled, curled, curled})},
  };
}

/// Uniform random configuration inside the joint limits, shrunk towards the
/// box centre by `margin` (fraction of each range).
inline VecX random_configuration(const HandModel& model, std::mt19937_64& rng, double margin = 0.0) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  VecX q(model.dof());
  for (int k = 0; k < model.dof(); ++k) {
    const JointLimits& l = model.joints()[static_cast<std::size_t>(k)].limits;
    const double span = l.upper - l.lower;
    q[k] = l.lower + span * (margin + (1.0 - 2.0 * margin) * unit(rng));
  }
  return q;
}

/// Smooth periodic trajectory between two configurations.
inline std::vector<VecX> smooth_trajectory(const VecX& a, const VecX& b, int frames) {
  std::vector<VecX> out;
  for (int t = 0; t < frames; ++t) {
    const double s = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * t / std::max(frames - 1, 1));
    out.push_back(a + s * (b - a));
  }
  return out;
}

inline KeypointFrame keypoints_of(const HandModel& model, const VecX& q, double timestamp = 0.0) {
  return make_frame(forward_kinematics(model, q), timestamp);
}

/// Homothety of a frame about its wrist root.
inline KeypointFrame scaled_frame(const KeypointFrame& f, double s) {
  KeypointFrame out = f;
  for (auto& finger : out.points) {
    const Vec3 root = finger.front();
    for (Vec3& p : finger) p = root + s * (p - root);
  }
  return out;
}

inline KeypointFrame add_noise(const KeypointFrame& f, double sigma, std::mt19937_64& rng) {
  std::normal_distribution<double> noise(0.0, sigma);
  KeypointFrame out = f;
  // The wrist root is the frame origin; keep it shared and exact.
  for (auto& finger : out.points) {
    for (std::size_t j = 1; j < finger.size(); ++j) finger[j] += Vec3(noise(rng), noise(rng), noise(rng));
  }
  return out;
}

}  // namespace dexretarget::synthetic
