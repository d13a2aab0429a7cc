"""BVH ingestion: skeleton hierarchy, motion channels, human FK.

Parsing notes
-------------
* Tokenization is whitespace-insensitive inside the HIERARCHY section;
  keywords (HIERARCHY, ROOT, JOINT, End Site, OFFSET, CHANNELS, MOTION)
  are case-sensitive per the common BVH dialect.
* Euler angles are stored in degrees in the file and applied as
  intrinsic rotations in the declared channel order. Internally
  everything is radians and rotation matrices.
* ``unit_scale`` multiplies offsets and root translations; the common
  mocap export is centimeters, hence the 0.01 default.
* ``axis="y-up-to-z-up"`` remaps the file's Y-up world to the Z-up
  convention used by the rest of the toolkit: positions (x, y, z) map
  to (x, -z, y) and rotations are conjugated by the same change of
  basis. ``axis="none"`` keeps the file frame.
* End Sites are kept as zero-channel joints named ``<parent>_end`` so
  they can serve as key bodies (toe tips, finger tips).

Only root joints may carry position channels; a translating inner
joint has no representation here and is rejected.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ParseError, ValidationError
from .kinematics import PoseSet
from .so3 import axis_angle_mat

AXIS_CONVENTIONS = {
    "none": np.eye(3),
    "y-up-to-z-up": np.array([[1.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]]),
}

_POSITION_CHANNELS = ("Xposition", "Yposition", "Zposition")
_ROTATION_CHANNELS = ("Xrotation", "Yrotation", "Zrotation")
_BASIS = np.eye(3)


@dataclass(eq=False)
class HumanJoint:
    name: str
    parent: int  # -1 for the root
    offset: np.ndarray  # (3,) in the parent frame, converted units/axes
    channels: tuple  # channel names in file order


@dataclass(eq=False)
class HumanSkeleton:
    joints: list

    def __post_init__(self):
        self._index = {j.name: i for i, j in enumerate(self.joints)}

    @property
    def n_joints(self):
        return len(self.joints)

    @property
    def names(self):
        return [j.name for j in self.joints]

    def index(self, name):
        try:
            return self._index[name]
        except KeyError:
            raise ValidationError(f"unknown human joint '{name}'") from None


@dataclass(eq=False)
class HumanMotion:
    """Converted channel data: per-frame root translation plus one local
    rotation matrix per joint (identity for zero-channel joints)."""

    frame_dt: float
    root_translation: np.ndarray  # (T, 3)
    rotations: np.ndarray  # (T, J, 3, 3)

    @property
    def n_frames(self):
        return self.root_translation.shape[0]

    def frame(self, t):
        return self.root_translation[t], self.rotations[t]


class _Cursor:
    def __init__(self, tokens):
        self.tokens = tokens
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos][0] if self.pos < len(self.tokens) else None

    def take(self, what="token"):
        if self.pos >= len(self.tokens):
            last = self.tokens[-1][1] if self.tokens else 0
            raise ParseError(f"line {last}: unexpected end of file while reading {what}")
        tok, line = self.tokens[self.pos]
        self.pos += 1
        return tok, line

    def expect(self, keyword):
        tok, line = self.take(f"'{keyword}'")
        if tok != keyword:
            raise ParseError(f"line {line}: expected '{keyword}', got '{tok}'")
        return line

    def floats(self, n, what):
        out = []
        for _ in range(n):
            tok, line = self.take(what)
            try:
                out.append(float(tok))
            except ValueError:
                raise ParseError(f"line {line}: expected a number for {what}, got '{tok}'") from None
        return np.array(out)


def _parse_joint_block(cur, name, parent, joints, used_names):
    cur.expect("{")
    cur.expect("OFFSET")
    offset = cur.floats(3, "OFFSET")

    if cur.peek() != "CHANNELS":
        line = cur.tokens[cur.pos][1] if cur.pos < len(cur.tokens) else 0
        raise ParseError(f"line {line}: joint '{name}' is missing a CHANNELS line")
    cur.take()
    count_tok, line = cur.take("channel count")
    try:
        count = int(count_tok)
    except ValueError:
        raise ParseError(f"line {line}: bad channel count '{count_tok}'") from None
    channels = []
    for _ in range(count):
        ch, ch_line = cur.take("channel name")
        if ch not in _POSITION_CHANNELS and ch not in _ROTATION_CHANNELS:
            raise ParseError(f"line {ch_line}: unknown channel '{ch}'")
        channels.append(ch)
    channels = tuple(channels)

    if parent != -1 and any(c in _POSITION_CHANNELS for c in channels):
        raise ParseError(
            f"position channels on non-root joint '{name}' are unsupported"
        )
    rot = [c for c in channels if c in _ROTATION_CHANNELS]
    if rot and (len(rot) != 3 or len({c[0] for c in rot}) != 3):
        raise ParseError(
            f"joint '{name}' must use three distinct rotation axes, got {rot}"
        )

    index = len(joints)
    joints.append(HumanJoint(name, parent, offset, channels))
    used_names.add(name)

    while True:
        tok = cur.peek()
        if tok == "JOINT":
            cur.take()
            child_name, line = cur.take("joint name")
            if child_name in used_names:
                raise ParseError(f"line {line}: duplicate joint name '{child_name}'")
            _parse_joint_block(cur, child_name, index, joints, used_names)
        elif tok == "End":
            cur.take()
            cur.expect("Site")
            end_name = f"{name}_end"
            while end_name in used_names:
                end_name += "_"
            cur.expect("{")
            cur.expect("OFFSET")
            end_offset = cur.floats(3, "OFFSET")
            cur.expect("}")
            joints.append(HumanJoint(end_name, index, end_offset, ()))
            used_names.add(end_name)
        elif tok == "}":
            cur.take()
            return
        else:
            tok, line = cur.take("joint body")
            raise ParseError(f"line {line}: unexpected token '{tok}' inside joint block")


def _euler_to_mat_stack(order, angles):
    """Intrinsic rotation product for (T, 3) angle columns, axes given as
    a string like 'zxy' in application order."""
    out = None
    for k, ax in enumerate(order):
        r = axis_angle_mat(_BASIS["xyz".index(ax)], angles[:, k])
        out = r if out is None else out @ r
    return out


def parse_bvh(text, unit_scale=0.01, axis="y-up-to-z-up"):
    """Parse BVH text into (HumanSkeleton, HumanMotion)."""
    if axis not in AXIS_CONVENTIONS:
        raise ValueError(f"unknown axis convention '{axis}'")
    conv = AXIS_CONVENTIONS[axis]

    lines = text.splitlines()
    tokens = []
    for ln, raw in enumerate(lines, 1):
        for tok in raw.split():
            tokens.append((tok, ln))
    cur = _Cursor(tokens)

    cur.expect("HIERARCHY")
    cur.expect("ROOT")
    root_name, _ = cur.take("root name")
    joints = []
    _parse_joint_block(cur, root_name, -1, joints, set())

    if cur.peek() == "ROOT":
        _, line = cur.take()
        raise ParseError(f"line {line}: only one ROOT is supported")
    cur.expect("MOTION")
    cur.expect("Frames:")
    count_tok, count_line = cur.take("frame count")
    try:
        n_frames = int(count_tok)
    except ValueError:
        raise ParseError(f"line {count_line}: bad frame count '{count_tok}'") from None
    cur.expect("Frame")
    line_dt = cur.expect("Time:")
    dt_tok, line_dt = cur.take("frame time")
    try:
        frame_dt = float(dt_tok)
    except ValueError:
        raise ParseError(f"line {line_dt}: bad frame time '{dt_tok}'") from None

    n_channels = sum(len(j.channels) for j in joints)
    rows = []
    for ln in range(line_dt, len(lines)):
        raw = lines[ln].split()
        if not raw:
            continue
        if len(raw) != n_channels:
            raise ParseError(
                f"line {ln + 1}: frame has {len(raw)} values, expected {n_channels}"
            )
        try:
            rows.append([float(v) for v in raw])
        except ValueError:
            raise ParseError(f"line {ln + 1}: non-numeric value in frame data") from None
    if len(rows) != n_frames:
        raise ParseError(
            f"MOTION declares Frames: {n_frames} but contains {len(rows)} data rows"
        )
    data = np.array(rows, dtype=float).reshape(n_frames, n_channels)

    skeleton = HumanSkeleton(joints)
    for j in joints:
        j.offset = conv @ (j.offset * unit_scale)
        j.offset.setflags(write=False)

    root_translation = np.zeros((n_frames, 3))
    rotations = np.broadcast_to(np.eye(3), (n_frames, len(joints), 3, 3)).copy()
    col = 0
    for i, j in enumerate(joints):
        rot_cols, rot_axes = [], ""
        for ch in j.channels:
            if ch in _POSITION_CHANNELS:
                root_translation[:, _POSITION_CHANNELS.index(ch)] = data[:, col] * unit_scale
            else:
                rot_cols.append(col)
                rot_axes += ch[0].lower()
            col += 1
        if rot_cols:
            angles = np.deg2rad(data[:, rot_cols])
            rotations[:, i] = _euler_to_mat_stack(rot_axes, angles)

    root_translation = root_translation @ conv.T
    rotations = conv @ rotations @ conv.T
    return skeleton, HumanMotion(frame_dt, root_translation, rotations)


def human_fk(skeleton, root_translation, rotations):
    """World pose of every joint for one frame.

    Joint pose = parent pose o (offset translation, local rotation); the
    root composes its offset with the frame's root translation.
    """
    n = skeleton.n_joints
    pos = np.empty((n, 3))
    rot = np.empty((n, 3, 3))
    for i, j in enumerate(skeleton.joints):
        if j.parent < 0:
            pos[i] = j.offset + root_translation
            rot[i] = rotations[i]
        else:
            pos[i] = pos[j.parent] + rot[j.parent] @ j.offset
            rot[i] = rot[j.parent] @ rotations[i]
    return PoseSet(pos, rot)


def rest_pose(skeleton):
    """FK of the zero pose (identity rotations, zero root translation)."""
    n = skeleton.n_joints
    return human_fk(skeleton, np.zeros(3), np.broadcast_to(np.eye(3), (n, 3, 3)))


def skeleton_height(skeleton):
    """Vertical extent of the rest pose, the `h` used by motion scaling."""
    z = rest_pose(skeleton).positions[:, 2]
    height = float(z.max() - z.min())
    if height <= 1e-6:
        raise ValidationError(
            f"skeleton rest pose has degenerate vertical extent ({height:g} m)"
        )
    return height


# ---------------------------------------------------------------------------
# serialization

_EULER_SIGN = {
    ("x", "y", "z"): 1.0, ("y", "z", "x"): 1.0, ("z", "x", "y"): 1.0,
    ("x", "z", "y"): -1.0, ("z", "y", "x"): -1.0, ("y", "x", "z"): -1.0,
}


def mat_to_euler(R, order):
    """Intrinsic Euler angles (radians) for a 3-axis order like 'zxy'.

    In the gimbal-degenerate case the third angle is set to zero and the
    first absorbs the remaining heading.
    """
    a, b, c = ("xyz".index(ax) for ax in order)
    sign = _EULER_SIGN[tuple(order)]
    sin_beta = np.clip(sign * R[a, c], -1.0, 1.0)
    beta = np.arcsin(sin_beta)
    if abs(sin_beta) < 1.0 - 1e-9:
        alpha = np.arctan2(-sign * R[b, c], R[c, c])
        gamma = np.arctan2(-sign * R[a, b], R[a, a])
    else:
        alpha = np.arctan2(np.sign(sin_beta) * R[b, a], R[b, b])
        gamma = 0.0
    return np.array([alpha, beta, gamma])


def _fmt(v):
    return f"{v:.12g}"


def serialize_bvh(skeleton, motion):
    """Write the in-memory representation back out as BVH text.

    Values are emitted in the internal convention (meters, Z-up), so a
    lossless reread uses ``parse_bvh(text, unit_scale=1.0, axis="none")``.
    """
    children = [[] for _ in skeleton.joints]
    for i, j in enumerate(skeleton.joints):
        if j.parent >= 0:
            children[j.parent].append(i)

    out = ["HIERARCHY"]

    def emit(i, depth):
        j = skeleton.joints[i]
        pad = "\t" * depth
        is_end_site = j.parent >= 0 and not j.channels and not children[i]
        if is_end_site:
            out.append(f"{pad}End Site")
            out.append(f"{pad}{{")
            out.append(f"{pad}\tOFFSET {' '.join(_fmt(v) for v in j.offset)}")
            out.append(f"{pad}}}")
            return
        kind = "ROOT" if j.parent < 0 else "JOINT"
        out.append(f"{pad}{kind} {j.name}")
        out.append(f"{pad}{{")
        out.append(f"{pad}\tOFFSET {' '.join(_fmt(v) for v in j.offset)}")
        out.append(f"{pad}\tCHANNELS {len(j.channels)} {' '.join(j.channels)}".rstrip())
        for ch in children[i]:
            emit(ch, depth + 1)
        out.append(f"{pad}}}")

    emit(0, 0)

    out.append("MOTION")
    out.append(f"Frames: {motion.n_frames}")
    out.append(f"Frame Time: {_fmt(motion.frame_dt)}")

    for t in range(motion.n_frames):
        row = []
        for i, j in enumerate(skeleton.joints):
            if not j.channels:
                continue
            rot_axes = "".join(c[0].lower() for c in j.channels if c in _ROTATION_CHANNELS)
            euler = np.rad2deg(mat_to_euler(motion.rotations[t, i], rot_axes)) \
                if rot_axes else None
            k = 0
            for ch in j.channels:
                if ch in _POSITION_CHANNELS:
                    row.append(_fmt(motion.root_translation[t, _POSITION_CHANNELS.index(ch)]))
                else:
                    row.append(_fmt(euler[k]))
                    k += 1
        out.append(" ".join(row))
    return "\n".join(out) + "\n"
