"""Independent forward-kinematics oracle for the bundled URDF chains.

Parses the URDF with the standard library, composes homogeneous transforms
with numpy, and writes role poses at fixed joint vectors to fk_oracle.json.
Run from this directory: python3 fk_oracle.py
"""

import json
import math
import pathlib
import xml.etree.ElementTree as ET

import numpy as np

ASSETS = pathlib.Path(__file__).resolve().parents[2] / "assets"


def rot_x(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]])


def rot_y(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])


def rot_z(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])


def axis_angle(axis, a):
    k = np.array(axis, dtype=float)
    k /= np.linalg.norm(k)
    K = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + math.sin(a) * K + (1 - math.cos(a)) * K @ K


def homogeneous(R, p):
    T = np.eye(4)
    T[:3, :3] = R
    T[:3, 3] = p
    return T


def floats(el, attr, default):
    if el is None or el.get(attr) is None:
        return list(default)
    return [float(v) for v in el.get(attr).split()]


def load(name):
    root = ET.parse(ASSETS / f"{name}.urdf").getroot()
    roles = json.loads((ASSETS / f"{name}.roles.json").read_text())["frames"]
    joints = []
    for j in root.findall("joint"):
        origin = j.find("origin")
        xyz = floats(origin, "xyz", [0, 0, 0])
        r, p, y = floats(origin, "rpy", [0, 0, 0])
        joints.append(
            {
                "type": j.get("type"),
                "parent": j.find("parent").get("link"),
                "child": j.find("child").get("link"),
                # URDF rpy: fixed-axis X, then Y, then Z.
                "origin": homogeneous(rot_z(y) @ rot_y(p) @ rot_x(r), xyz),
                "axis": floats(j.find("axis"), "xyz", [1, 0, 0]),
            }
        )
    return joints, roles


def fk(joints, q):
    """Link poses; actuated joints take values from q in declaration order."""
    by_parent = {}
    children = set()
    for j in joints:
        by_parent.setdefault(j["parent"], []).append(j)
        children.add(j["child"])
    index = {}
    for j in joints:
        if j["type"] == "revolute":
            index[id(j)] = len(index)
    root = next(j["parent"] for j in joints if j["parent"] not in children)
    poses = {root: np.eye(4)}
    stack = [root]
    while stack:
        link = stack.pop()
        for j in by_parent.get(link, []):
            T = poses[link] @ j["origin"]
            if j["type"] == "revolute":
                T = T @ homogeneous(axis_angle(j["axis"], q[index[id(j)]]), [0, 0, 0])
            poses[j["child"]] = T
            stack.append(j["child"])
    return poses, len(index)


def main():
    out = {}
    for name in ["panda_leap", "panda_shadow"]:
        joints, roles = load(name)
        _, m = fk(joints, np.zeros(64))
        cases = []
        for k in range(4):
            # Deterministic, non-symmetric joint vectors.
            q = [0.3 * math.sin(1.7 * j + 0.9 * k) + 0.05 * k for j in range(m)]
            poses, _ = fk(joints, q)
            frames = {}
            for role, link in sorted(roles.items()):
                T = poses[link]
                frames[role] = {"position": T[:3, 3].tolist(), "rotation": T[:3, :3].tolist()}
            cases.append({"q": q, "frames": frames})
        out[name] = {"actuated_count": m, "cases": cases}
    path = pathlib.Path(__file__).with_name("fk_oracle.json")
    path.write_text(json.dumps(out, indent=1) + "\n")


if __name__ == "__main__":
    main()
