"""Regenerate the files in assets/.

The demo robot, walking clip, and mapping config are synthetic and
deterministic; they double as the fixtures the test suite builds in
memory. Run from the repository root:

    python scripts/make_demo_assets.py
"""

import json
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "tests"))  # asset builders live with the tests

import _builders  # noqa: E402
from retargetkit import parse_bvh, parse_robot  # noqa: E402


def main(out_dir=ROOT / "assets"):
    out_dir.mkdir(exist_ok=True)

    walk_text = _builders.walk_bvh(frames=120)
    (out_dir / "walk.bvh").write_text(walk_text)

    robot_doc = _builders.humanoid_doc()
    (out_dir / "lab29.json").write_text(json.dumps(robot_doc, indent=1) + "\n")

    model = parse_robot(json.dumps(robot_doc), fmt="native")
    skeleton, _ = parse_bvh(walk_text)
    config = _builders.humanoid_config_doc(
        skeleton, model,
        solver={"stage1": {"dt": 0.5}, "stage2": {"dt": 0.5}})
    (out_dir / "config.json").write_text(json.dumps(config, indent=1) + "\n")

    # clearance radii go on bodies that should stay well off the floor;
    # the support feet sit at height zero after normalization, so giving
    # them a radius would flag every stance frame
    geometry = {
        "schema": "geometry/1",
        "clearance_radius": {
            "left_knee_link": 0.04,
            "right_knee_link": 0.04,
        },
        "capsules": [
            {"body": "left_knee_link", "p0": [0, 0, 0],
             "p1": [0, 0, -0.30], "radius": 0.05, "label": "left_shin"},
            {"body": "right_knee_link", "p0": [0, 0, 0],
             "p1": [0, 0, -0.30], "radius": 0.05, "label": "right_shin"},
            {"body": "left_elbow_link", "p0": [0, 0, 0],
             "p1": [0.22, 0, 0], "radius": 0.04, "label": "left_forearm"},
            {"body": "right_elbow_link", "p0": [0, 0, 0],
             "p1": [0.22, 0, 0], "radius": 0.04, "label": "right_forearm"},
        ],
        "foot_bodies": ["left_ankle_roll_link", "right_ankle_roll_link"],
    }
    (out_dir / "geometry.json").write_text(json.dumps(geometry, indent=1) + "\n")

    for name in ("walk.bvh", "lab29.json", "config.json", "geometry.json"):
        print(f"wrote {out_dir / name}")


if __name__ == "__main__":
    main()
