#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <thread>
#include <unordered_set>
#include <vector>

#include "dexretarget/kinematics.hpp"

namespace dexretarget {

enum class EllipsoidKind { linear, angular };

inline const char* to_string(EllipsoidKind k) { return k == EllipsoidKind::linear ? "linear" : "angular"; }

/// Gram determinants below this are treated as singular.
inline constexpr double kSingularGram = 1e-18;

inline constexpr double kCubicMetersToMm3 = 1e9;

/// (4 pi / 3) sqrt(det(J J^T)) for a 3 x n Jacobian block, in the block's own units.
inline double ellipsoid_volume(const Eigen::Matrix<double, 3, Eigen::Dynamic>& block) {
  const Mat3 gram = block * block.transpose();
  const double det = gram.determinant();
  if (!(det >= kSingularGram)) return 0.0;
  return 4.0 * std::numbers::pi / 3.0 * std::sqrt(det);
}

/// Manipulability ellipsoid volume of a keypoint. Linear volumes are in m^3
/// here; the report layer converts to mm^3. Angular volumes are unitless.
inline double manipulability_volume(const HandModel& model, const VecX& q, KeypointId frame, EllipsoidKind kind) {
  const Jacobian j = jacobian(model, q, frame);
  return ellipsoid_volume(kind == EllipsoidKind::linear ? j.topRows<3>() : j.bottomRows<3>());
}

inline double manipulability_report_value(double volume, EllipsoidKind kind) {
  return kind == EllipsoidKind::linear ? volume * kCubicMetersToMm3 : volume;
}

// --- opposability ------------------------------------------------------------

struct OpposabilitySampling {
  std::int64_t samples = 100000;
  double voxel_mm = 2.0;
  std::uint64_t seed = 1;
  /// 0 picks the hardware concurrency. The result does not depend on it.
  unsigned threads = 0;
};

struct MetricReport {
  std::string metric;
  std::string subject;
  double value = 0.0;
  std::string unit;
  OpposabilitySampling sampling;
};

using VoxelSet = std::unordered_set<std::uint64_t>;

namespace detail {

inline constexpr std::int64_t kSamplesPerBlock = 4096;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t pack_voxel(const Vec3& p, double voxel_m) {
  constexpr std::int64_t kBias = 1 << 20;
  std::uint64_t key = 0;
  for (int a = 0; a < 3; ++a) {
    const auto cell = static_cast<std::int64_t>(std::floor(p[a] / voxel_m)) + kBias;
    if (cell < 0 || cell >= (std::int64_t{1} << 21)) throw Error("workspace point outside voxel index range");
    key = (key << 21) | static_cast<std::uint64_t>(cell);
  }
  return key;
}

}  // namespace detail

/// Voxels touched by a keypoint when the joints of its chain are sampled
/// uniformly in their limit box. Off-chain joints stay at the rest pose.
///
/// Samples are drawn in fixed-size blocks, each from its own generator seeded
/// by (seed, keypoint, block), so the set is independent of the worker count.
inline VoxelSet workspace_voxels(const HandModel& model, KeypointId frame, const OpposabilitySampling& s) {
  if (!(s.voxel_mm > 0.0)) throw ConfigError("voxel size must be positive");
  if (s.samples <= 0) throw ConfigError("sample count must be positive");
  model.check_keypoint(frame);
  const std::vector<int>& chain = model.chain(model.keypoint(frame).link);
  const double voxel_m = s.voxel_mm * 1e-3;
  const std::int64_t blocks = (s.samples + detail::kSamplesPerBlock - 1) / detail::kSamplesPerBlock;
  const std::uint64_t stream = detail::splitmix64(s.seed ^ detail::splitmix64(
      (static_cast<std::uint64_t>(frame.finger) << 32) | static_cast<std::uint32_t>(frame.index)));

  unsigned workers = s.threads ? s.threads : std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::int64_t>(workers, blocks));
  std::vector<VoxelSet> partial(workers);

  auto run = [&](unsigned w) {
    VecX q = model.rest_pose();
    VoxelSet& out = partial[w];
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::int64_t b = w; b < blocks; b += workers) {
      std::mt19937_64 rng(detail::splitmix64(stream + static_cast<std::uint64_t>(b)));
      const std::int64_t n = std::min(detail::kSamplesPerBlock, s.samples - b * detail::kSamplesPerBlock);
      for (std::int64_t k = 0; k < n; ++k) {
        for (int jnt : chain) {
          const JointLimits& l = model.joints()[static_cast<std::size_t>(jnt)].limits;
          q[jnt] = l.lower + unit(rng) * (l.upper - l.lower);
        }
        const LinkPoses poses = link_poses(model, q);
        out.insert(detail::pack_voxel(keypoint_position(model, poses, frame), voxel_m));
      }
    }
  };

  if (workers == 1) {
    run(0);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(run, w);
    for (std::thread& t : pool) t.join();
  }
  VoxelSet merged = std::move(partial[0]);
  for (unsigned w = 1; w < workers; ++w) merged.insert(partial[w].begin(), partial[w].end());
  return merged;
}

inline double voxel_volume_mm3(std::size_t count, double voxel_mm) {
  return static_cast<double>(count) * voxel_mm * voxel_mm * voxel_mm;
}

/// Volume (mm^3) of positions reachable by both keypoints.
inline double opposability_volume(const HandModel& model, KeypointId thumb_tip, KeypointId finger_tip,
                                  const OpposabilitySampling& s) {
  const VoxelSet a = workspace_voxels(model, thumb_tip, s);
  const VoxelSet b = workspace_voxels(model, finger_tip, s);
  const VoxelSet& small = a.size() <= b.size() ? a : b;
  const VoxelSet& large = a.size() <= b.size() ? b : a;
  std::size_t shared = 0;
  for (std::uint64_t key : small) shared += large.count(key);
  return voxel_volume_mm3(shared, s.voxel_mm);
}

inline MetricReport opposability_report(const HandModel& model, int finger, const OpposabilitySampling& s) {
  MetricReport r;
  r.metric = "opposability";
  r.subject = model.finger(finger).name;
  r.value = opposability_volume(model, model.tip(model.thumb()), model.tip(finger), s);
  r.unit = "mm^3";
  r.sampling = s;
  return r;
}

}  // namespace dexretarget
