#!/usr/bin/env python3
"""Writes the rest-pose keypoints of a hand model document as a keypoint file.

Standalone forward kinematics (numpy), kept separate from the C++ library so
the golden file is an independent reference.
"""
import argparse

import numpy as np
import yaml


def rot(axis, angle):
    axis = np.asarray(axis, dtype=float)
    k = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
    return np.eye(3) + np.sin(angle) * k + (1 - np.cos(angle)) * (k @ k)


def rpy(r, p, y):
    return rot([0, 0, 1], y) @ rot([0, 1, 0], p) @ rot([1, 0, 0], r)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("model")
    ap.add_argument("out")
    args = ap.parse_args()
    doc = yaml.safe_load(open(args.model))

    joints = {}
    order = []
    for finger in doc["fingers"]:
        prev = "base"
        for j in finger["joints"]:
            joints[j["name"]] = dict(j, parent=j.get("parent", prev))
            order.append(j["name"])
            prev = j["name"]
    rest = doc.get("rest_pose", [0.0] * len(order))
    q = {name: min(max(rest[k], joints[name]["limits"][0]), joints[name]["limits"][1])
         for k, name in enumerate(order)}

    poses = {"base": (np.eye(3), np.zeros(3))}

    def pose(name):
        if name in poses:
            return poses[name]
        j = joints[name]
        pr, pt = pose(j["parent"])
        orr = rpy(*j.get("origin_rotation", [0, 0, 0]))
        ot = np.asarray(j.get("origin_translation", [0, 0, 0]), dtype=float)
        r = pr @ orr @ rot(j["axis"], q[name])
        t = pt + pr @ ot
        poses[name] = (r, t)
        return poses[name]

    def point(kp):
        r, t = pose(kp["link"])
        return t + r @ np.asarray(kp.get("offset", [0, 0, 0]), dtype=float)

    fingers = doc["fingers"]
    landmarks = [point(fingers[0]["keypoints"][0])]
    for finger in fingers:
        landmarks += [point(kp) for kp in finger["keypoints"][1:]]

    with open(args.out, "w") as f:
        f.write("# dexretarget keypoints v1\n")
        f.write(f"# landmarks {len(landmarks)}\n")
        f.write("0")
        for p in landmarks:
            f.write(" " + " ".join(repr(float(c)) for c in p) + " 1")
        f.write("\n")


if __name__ == "__main__":
    main()
