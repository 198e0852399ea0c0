#!/usr/bin/env python3
"""Writes the five-finger hand model documents under models/.

The robot model is a plausible 20-DoF stand-in: four joints per finger with a
differential MCP pair on the non-thumb fingers and a 12x8 taxel pad on every
distal link. The synthetic human model shares the topology with different
proportions and is used to generate test keypoints.
"""
import argparse


def fmt(v):
    return "[" + ", ".join(f"{x:.6g}" for x in v) + "]"


def finger_block(name, base, rpy, lengths, limits, thumb, differential, tip_link_pad):
    j = [f"{name}_{s}" for s in (("cmc_yaw", "cmc_pitch", "mcp", "ip") if thumb else
                                  ("mcp_yaw", "mcp_pitch", "pip", "dip"))]
    kp = (("root", "cmc", "mcp", "ip", "tip") if thumb else ("root", "mcp", "pip", "dip", "tip"))
    out = [f"  - name: {name}", "    joints:"]
    origins = [base, [0, 0, 0], [lengths[0], 0, 0], [lengths[1], 0, 0]]
    axes = [[0, 0, 1], [0, 1, 0], [0, 1, 0], [0, 1, 0]]
    for k in range(4):
        out.append(f"      - name: {j[k]}")
        if k == 0:
            out.append("        parent: base")
        out.append(f"        axis: {fmt(axes[k])}")
        out.append(f"        origin_translation: {fmt(origins[k])}")
        if k == 0 and any(rpy):
            out.append(f"        origin_rotation: {fmt(rpy)}")
        out.append(f"        limits: {fmt(limits[k])}")
    out.append("    keypoints:")
    out.append(f"      - {{name: {kp[0]}, link: base, offset: [0, 0, 0]}}")
    out.append(f"      - {{name: {kp[1]}, link: {j[1]}, offset: [0, 0, 0]}}")
    out.append(f"      - {{name: {kp[2]}, link: {j[2]}, offset: [0, 0, 0]}}")
    out.append(f"      - {{name: {kp[3]}, link: {j[3]}, offset: [0, 0, 0]}}")
    out.append(f"      - {{name: {kp[4]}, link: {j[3]}, offset: {fmt([lengths[2], 0, 0])}}}")
    if differential:
        out.append(f"    differential: {{pitch: {j[1]}, yaw: {j[0]}, yaw_sign: 1}}")
    return out, j[3]


ROBOT = {
    "name": "reference_hand",
    "fingers": [
        # name, base, rpy, (proximal, middle, distal), thumb
        ("thumb", [0.030, 0.028, -0.012], [-1.0, 0.0, 0.75], (0.046, 0.034, 0.030), True),
        ("index", [0.094, 0.030, 0.0], [0, 0, 0], (0.048, 0.030, 0.026), False),
        ("middle", [0.099, 0.008, 0.0], [0, 0, 0], (0.052, 0.033, 0.027), False),
        ("ring", [0.094, -0.014, 0.0], [0, 0, 0], (0.048, 0.031, 0.026), False),
        ("pinky", [0.084, -0.035, 0.0], [0, 0, 0], (0.039, 0.025, 0.023), False),
    ],
    "thumb_limits": [[-0.5, 1.3], [-0.3, 1.3], [-0.2, 1.3], [0.0, 1.5]],
    "finger_limits": [[-0.35, 0.35], [-0.3, 1.6], [0.0, 1.75], [0.0, 1.6]],
    "taxels": True,
}

HUMAN = {
    "name": "synthetic_human",
    "fingers": [
        ("thumb", [0.031, 0.027, -0.013], [-1.0, 0.0, 0.75], (0.038, 0.031, 0.024), True),
        ("index", [0.095, 0.031, 0.0], [0, 0, 0], (0.041, 0.024, 0.020), False),
        ("middle", [0.100, 0.009, 0.0], [0, 0, 0], (0.045, 0.027, 0.021), False),
        ("ring", [0.095, -0.013, 0.0], [0, 0, 0], (0.042, 0.027, 0.020), False),
        ("pinky", [0.085, -0.033, 0.0], [0, 0, 0], (0.032, 0.019, 0.018), False),
    ],
    "thumb_limits": [[-0.8, 1.5], [-0.5, 1.5], [-0.4, 1.5], [-0.2, 1.7]],
    "finger_limits": [[-0.5, 0.5], [-0.5, 1.8], [-0.1, 1.9], [-0.1, 1.8]],
    "taxels": False,
}


def render(spec, header):
    lines = [header, f"name: {spec['name']}", "thumb: thumb", "fingers:"]
    pads = []
    for name, base, rpy, lengths, thumb in spec["fingers"]:
        limits = spec["thumb_limits"] if thumb else spec["finger_limits"]
        block, distal = finger_block(name, base, rpy, lengths, limits, thumb, not thumb, spec["taxels"])
        lines += block
        pads.append((name, distal, lengths[2]))
    if spec["taxels"]:
        lines.append("taxel_layouts:")
        for name, distal, dist_len in pads:
            # 12 rows along the distal phalanx, 8 columns across the pad, 1.5 mm pitch,
            # on the palmar surface 6 mm below the link axis.
            x0 = dist_len - 0.004 - 11 * 0.0015
            lines += [f"  - finger: {name}", f"    link: {distal}", "    rows: 12", "    cols: 8",
                      f"    origin: {fmt([x0, -0.00525, -0.006])}",
                      "    row_step: [0.0015, 0, 0]", "    col_step: [0, 0.0015, 0]"]
    return "\n".join(lines) + "\n"


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="models")
    args = ap.parse_args()
    note = ("# Generated by scripts/gen_hand_model.py. Geometry is a plausible stand-in;\n"
            "# the real hardware dimensions are not published.")
    with open(f"{args.out}/reference_hand.yaml", "w") as f:
        f.write(render(ROBOT, note))
    with open(f"{args.out}/synthetic_human.yaml", "w") as f:
        f.write(render(HUMAN, note + "\n# Synthetic human hand: same topology, human proportions."))
