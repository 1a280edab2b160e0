"""Smoke test for the Python bindings.

Build the extension first, e.g. `maturin develop -m crates/python/Cargo.toml`.
"""

import math
import tempfile
from pathlib import Path

import dexretarget as dr


def main() -> None:
    chain = dr.Chain.builtin("leap")
    assert chain.dof == 23 and chain.finger_count == 4
    lower, upper = chain.bounds()
    q = [0.5 * (lo + hi) for lo, hi in zip(lower, upper)]
    poses = chain.forward_kinematics(q)
    assert "wrist" in poses and "thumb_tip" in poses
    _, quat = poses["wrist"]
    assert abs(math.fsum(c * c for c in quat) - 1.0) < 1e-12

    traj = dr.Trajectory.synthetic("pinch:index", 2.0, rate=20.0, mismatch=0.3)
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "pinch.jsonl"
        traj.save(path)
        loaded = dr.Trajectory.load(path)
    assert len(loaded) == len(traj) == 40
    assert loaded.timestamps == traj.timestamps

    states = dr.retarget(chain, traj, "full", "offline")
    assert len(states) == len(traj) and all(len(s) == chain.dof for s in states)
    for s in states:
        assert all(lo - 1e-12 <= x <= hi + 1e-12 for x, lo, hi in zip(s, lower, upper))

    report = dr.evaluate_states(chain, traj, states, pinch_finger=1)
    direct = dr.ablate(chain, traj, "full")
    assert abs(report["fingertip_rel_thumb_err"]["mean"] - direct["fingertip_rel_thumb_err"]["mean"]) < 1e-12
    assert len(dr.presets()) == 11

    try:
        dr.Chain.builtin("unknown")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown chain accepted")

    print(f"ok: rel-thumb error {report['fingertip_rel_thumb_err']['mean']:.4f} m over {len(traj)} frames")


if __name__ == "__main__":
    main()
