#pragma once

// Hand model documents (YAML). Layout:
//
//   name: <string>
//   thumb: <finger name or index>          # optional, default 0
//   rest_pose: [q...]                      # optional, default zeros clamped
//   fingers:
//     - name: index
//       joints:
//         - name: index_mcp_yaw
//           parent: base                   # optional; default previous joint or base
//           axis: [0, 0, 1]
//           origin_translation: [x, y, z]  # meters
//           origin_rotation: [r, p, y]     # radians, optional
//           limits: [lower, upper]         # radians
//       keypoints:
//         - {name: root, link: base, offset: [0, 0, 0]}
//       differential: {pitch: <joint>, yaw: <joint>, yaw_sign: 1}   # optional
//   taxel_layouts:
//     - finger: index
//       link: index_dip
//       rows: 12
//       cols: 8
//       origin: [x, y, z]                  # position of row 0, col 0
//       row_step: [dx, dy, dz]
//       col_step: [dx, dy, dz]
//       # or: positions: [[x, y, z], ...]  (row-major)

#include <yaml-cpp/yaml.h>

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "dexretarget/kinematics.hpp"

namespace dexretarget {

namespace detail {

inline int yaml_line(const YAML::Node& node) {
  const YAML::Mark mark = node.Mark();
  return mark.line >= 0 ? mark.line + 1 : 0;
}

inline const YAML::Node require(const YAML::Node& parent, const std::string& key, const std::string& path) {
  const YAML::Node child = parent[key];
  if (!child) throw ParseError(path + key, yaml_line(parent), "missing required field");
  return child;
}

template <typename T>
T scalar(const YAML::Node& node, const std::string& path) {
  try {
    return node.as<T>();
  } catch (const YAML::Exception& e) {
    throw ParseError(path, yaml_line(node), "bad value (" + std::string(e.what()) + ")");
  }
}

inline Vec3 vec3(const YAML::Node& node, const std::string& path) {
  if (!node.IsSequence() || node.size() != 3) throw ParseError(path, yaml_line(node), "expected [x, y, z]");
  return {scalar<double>(node[0], path), scalar<double>(node[1], path), scalar<double>(node[2], path)};
}

inline Vec3 optional_vec3(const YAML::Node& parent, const std::string& key, const std::string& path) {
  const YAML::Node child = parent[key];
  return child ? vec3(child, path + key) : Vec3::Zero();
}

}  // namespace detail

inline HandModel load_hand_model(const std::string& document) {
  using detail::require;
  using detail::scalar;
  using detail::vec3;
  YAML::Node root;
  try {
    root = YAML::Load(document);
  } catch (const YAML::ParserException& e) {
    throw ParseError("", e.mark.line + 1, e.msg);
  }
  if (!root.IsMap()) throw ParseError("", 1, "hand model document must be a mapping");

  const std::string name = scalar<std::string>(require(root, "name", ""), "name");
  const YAML::Node fingers_node = require(root, "fingers", "");
  if (!fingers_node.IsSequence()) throw ParseError("fingers", detail::yaml_line(fingers_node), "expected a list");

  struct PendingJoint {
    Joint joint;
    std::string parent_name;
    int line = 0;
  };
  std::vector<PendingJoint> pending;
  std::vector<Finger> fingers;
  std::map<std::string, int> finger_by_name;
  struct PendingKeypoint {
    int finger;
    std::string link;
    int line;
  };
  std::vector<PendingKeypoint> pending_kp;
  struct PendingDiff {
    int finger;
    std::string pitch, yaw;
    double sign;
    int line;
  };
  std::vector<PendingDiff> pending_diff;

  for (std::size_t i = 0; i < fingers_node.size(); ++i) {
    const YAML::Node fnode = fingers_node[i];
    const std::string fpath = "fingers[" + std::to_string(i) + "].";
    Finger finger;
    finger.name = scalar<std::string>(require(fnode, "name", fpath), fpath + "name");
    if (finger_by_name.count(finger.name)) {
      throw ParseError(fpath + "name", detail::yaml_line(fnode), "duplicate finger name '" + finger.name + "'");
    }
    finger_by_name[finger.name] = static_cast<int>(i);

    const YAML::Node jnodes = require(fnode, "joints", fpath);
    std::string previous = "base";
    for (std::size_t k = 0; k < jnodes.size(); ++k) {
      const YAML::Node jn = jnodes[k];
      const std::string jpath = fpath + "joints[" + std::to_string(k) + "].";
      PendingJoint pj;
      pj.line = detail::yaml_line(jn);
      pj.joint.name = scalar<std::string>(require(jn, "name", jpath), jpath + "name");
      pj.joint.finger = static_cast<int>(i);
      pj.joint.axis = vec3(require(jn, "axis", jpath), jpath + "axis");
      pj.joint.origin = make_transform(detail::optional_vec3(jn, "origin_translation", jpath),
                                       detail::optional_vec3(jn, "origin_rotation", jpath));
      const YAML::Node lim = require(jn, "limits", jpath);
      if (!lim.IsSequence() || lim.size() != 2) {
        throw ParseError(jpath + "limits", detail::yaml_line(lim), "expected [lower, upper]");
      }
      pj.joint.limits = {scalar<double>(lim[0], jpath + "limits"), scalar<double>(lim[1], jpath + "limits")};
      pj.parent_name = jn["parent"] ? scalar<std::string>(jn["parent"], jpath + "parent") : previous;
      previous = pj.joint.name;
      finger.joints.push_back(static_cast<int>(pending.size()));
      pending.push_back(std::move(pj));
    }

    const YAML::Node knodes = require(fnode, "keypoints", fpath);
    for (std::size_t k = 0; k < knodes.size(); ++k) {
      const YAML::Node kn = knodes[k];
      const std::string kpath = fpath + "keypoints[" + std::to_string(k) + "].";
      Keypoint kp;
      kp.name = scalar<std::string>(require(kn, "name", kpath), kpath + "name");
      kp.offset = detail::optional_vec3(kn, "offset", kpath);
      pending_kp.push_back({static_cast<int>(i), scalar<std::string>(require(kn, "link", kpath), kpath + "link"),
                            detail::yaml_line(kn)});
      finger.keypoints.push_back(std::move(kp));
    }

    if (const YAML::Node dn = fnode["differential"]) {
      const std::string dpath = fpath + "differential.";
      pending_diff.push_back({static_cast<int>(i), scalar<std::string>(require(dn, "pitch", dpath), dpath + "pitch"),
                              scalar<std::string>(require(dn, "yaw", dpath), dpath + "yaw"),
                              dn["yaw_sign"] ? scalar<double>(dn["yaw_sign"], dpath + "yaw_sign") : 1.0,
                              detail::yaml_line(dn)});
    }
    fingers.push_back(std::move(finger));
  }

  std::map<std::string, int> joint_by_name;
  for (std::size_t k = 0; k < pending.size(); ++k) {
    if (!joint_by_name.emplace(pending[k].joint.name, static_cast<int>(k)).second) {
      throw ValidationError("duplicate joint name '" + pending[k].joint.name + "'");
    }
  }
  auto resolve_link = [&](const std::string& link, const std::string& field, int line) {
    if (link == "base") return kBaseLink;
    const auto it = joint_by_name.find(link);
    if (it == joint_by_name.end()) throw ParseError(field, line, "unknown link '" + link + "'");
    return it->second;
  };

  std::vector<Joint> joints;
  joints.reserve(pending.size());
  for (PendingJoint& pj : pending) {
    pj.joint.parent = resolve_link(pj.parent_name, pj.joint.name + ".parent", pj.line);
    joints.push_back(pj.joint);
  }
  {
    std::vector<std::size_t> next(fingers.size(), 0);
    for (const PendingKeypoint& pk : pending_kp) {
      auto& kp = fingers[static_cast<std::size_t>(pk.finger)].keypoints[next[static_cast<std::size_t>(pk.finger)]++];
      kp.link = resolve_link(pk.link, "keypoint '" + kp.name + "'.link", pk.line);
    }
  }
  for (const PendingDiff& pd : pending_diff) {
    fingers[static_cast<std::size_t>(pd.finger)].differential =
        Differential{resolve_link(pd.pitch, "differential.pitch", pd.line),
                     resolve_link(pd.yaw, "differential.yaw", pd.line), pd.sign};
  }

  auto resolve_finger = [&](const YAML::Node& node, const std::string& field) {
    const std::string value = scalar<std::string>(node, field);
    const auto it = finger_by_name.find(value);
    if (it != finger_by_name.end()) return it->second;
    try {
      std::size_t used = 0;
      const int idx = std::stoi(value, &used);
      if (used == value.size() && idx >= 0 && idx < static_cast<int>(fingers.size())) return idx;
    } catch (const std::exception&) {
    }
    throw ParseError(field, detail::yaml_line(node), "unknown finger '" + value + "'");
  };

  std::vector<TaxelLayout> taxels;
  if (const YAML::Node tnodes = root["taxel_layouts"]) {
    for (std::size_t g = 0; g < tnodes.size(); ++g) {
      const YAML::Node tn = tnodes[g];
      const std::string tpath = "taxel_layouts[" + std::to_string(g) + "].";
      TaxelLayout layout;
      layout.finger = resolve_finger(require(tn, "finger", tpath), tpath + "finger");
      layout.link = resolve_link(scalar<std::string>(require(tn, "link", tpath), tpath + "link"), tpath + "link",
                                 detail::yaml_line(tn));
      layout.rows = scalar<int>(require(tn, "rows", tpath), tpath + "rows");
      layout.cols = scalar<int>(require(tn, "cols", tpath), tpath + "cols");
      if (layout.rows <= 0 || layout.cols <= 0) {
        throw ParseError(tpath + "rows", detail::yaml_line(tn), "grid dimensions must be positive");
      }
      if (const YAML::Node pn = tn["positions"]) {
        for (std::size_t t = 0; t < pn.size(); ++t) layout.positions.push_back(vec3(pn[t], tpath + "positions"));
      } else {
        const Vec3 origin = vec3(require(tn, "origin", tpath), tpath + "origin");
        const Vec3 row_step = vec3(require(tn, "row_step", tpath), tpath + "row_step");
        const Vec3 col_step = vec3(require(tn, "col_step", tpath), tpath + "col_step");
        for (int r = 0; r < layout.rows; ++r) {
          for (int c = 0; c < layout.cols; ++c) layout.positions.push_back(origin + r * row_step + c * col_step);
        }
      }
      taxels.push_back(std::move(layout));
    }
  }

  int thumb = 0;
  if (const YAML::Node tn = root["thumb"]) thumb = resolve_finger(tn, "thumb");

  std::optional<VecX> rest;
  if (const YAML::Node rn = root["rest_pose"]) {
    VecX r(static_cast<Eigen::Index>(rn.size()));
    for (std::size_t k = 0; k < rn.size(); ++k) r[static_cast<Eigen::Index>(k)] = scalar<double>(rn[k], "rest_pose");
    rest = r;
  }

  return HandModel::create(name, std::move(joints), std::move(fingers), std::move(taxels), thumb, rest);
}

inline HandModel load_hand_model_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open hand model '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return load_hand_model(ss.str());
}

}  // namespace dexretarget
