"""Reading and writing retargeted motions.

Two formats, both plain text and bit-reproducible (floats are written
with shortest-roundtrip repr, so identical motions serialize to
identical bytes):

* CSV: header row, then one row per frame with
  time, root x y z, root quaternion w x y z, joint values in model
  order. The frame time is recovered from the time column, so a
  single-frame CSV loads with frame_dt 0.
* JSON: versioned document that also stores frame_dt explicitly.
"""

import json

import numpy as np

from .errors import ParseError, ValidationError
from .retarget import RobotMotion

MOTION_SCHEMA = "robot-motion/1"

_FIXED_COLUMNS = ["time", "root_x", "root_y", "root_z",
                  "root_qw", "root_qx", "root_qy", "root_qz"]


def _fmt(v):
    return repr(float(v))


def motion_to_csv(motion, joint_names):
    lines = [",".join(_FIXED_COLUMNS + list(joint_names))]
    for t in range(motion.n_frames):
        row = [t * motion.frame_dt,
               *motion.root_position[t], *motion.root_orientation[t],
               *motion.joint_values[t]]
        lines.append(",".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def motion_from_csv(text, model):
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ParseError("empty motion CSV")
    header = lines[0].split(",")
    expected = _FIXED_COLUMNS + model.joint_names
    if header != expected:
        raise ValidationError(
            "motion CSV header does not match the model "
            f"(expected {len(expected)} columns, got {len(header)})"
        )
    rows = []
    for ln in lines[1:]:
        cells = ln.split(",")
        if len(cells) != len(expected):
            raise ParseError("ragged rows in motion CSV")
        try:
            rows.append([float(v) for v in cells])
        except ValueError:
            raise ParseError("non-numeric value in motion CSV") from None
    if not rows:
        raise ParseError("motion CSV has no frames")
    data = np.array(rows)
    frame_dt = float(data[1, 0] - data[0, 0]) if data.shape[0] > 1 else 0.0
    return RobotMotion(frame_dt, data[:, 1:4].copy(), data[:, 4:8].copy(),
                       data[:, 8:].copy())


def motion_to_json(motion, joint_names):
    doc = {
        "schema": MOTION_SCHEMA,
        "frame_dt": float(motion.frame_dt),
        "joint_names": list(joint_names),
        "root_position": [[float(v) for v in row] for row in motion.root_position],
        "root_orientation": [[float(v) for v in row] for row in motion.root_orientation],
        "joint_values": [[float(v) for v in row] for row in motion.joint_values],
    }
    return json.dumps(doc, indent=1) + "\n"


def motion_from_json(text, model):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed motion JSON ({exc})") from None
    if not isinstance(doc, dict) or doc.get("schema") != MOTION_SCHEMA:
        raise ParseError(f"motion JSON must declare schema '{MOTION_SCHEMA}'")
    if doc.get("joint_names") != model.joint_names:
        raise ValidationError("motion JSON joint names do not match the model")
    try:
        motion = RobotMotion(
            float(doc["frame_dt"]),
            np.asarray(doc["root_position"], dtype=float).reshape(-1, 3),
            np.asarray(doc["root_orientation"], dtype=float).reshape(-1, 4),
            np.asarray(doc["joint_values"], dtype=float).reshape(-1, model.n_joints),
        )
    except (KeyError, ValueError) as exc:
        raise ParseError(f"bad motion JSON ({exc})") from None
    if not (motion.root_position.shape[0] == motion.root_orientation.shape[0]
            == motion.joint_values.shape[0]):
        raise ParseError("motion JSON arrays disagree on frame count")
    return motion


def save_motion(motion, model, path, fmt="csv"):
    if fmt == "csv":
        text = motion_to_csv(motion, model.joint_names)
    elif fmt == "json":
        text = motion_to_json(motion, model.joint_names)
    else:
        raise ValueError(f"unknown motion format '{fmt}'")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def load_motion(path, model):
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    name = str(path).lower()
    if name.endswith(".json") or text.lstrip().startswith("{"):
        return motion_from_json(text, model)
    return motion_from_csv(text, model)
