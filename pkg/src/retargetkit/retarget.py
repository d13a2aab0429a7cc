"""The retargeting pipeline: mapping, alignment, scaling, two-stage IK.

Per-frame flow:

1. Human FK gives world poses for the source joints.
2. Each mapped body gets a Cartesian target: positions are scaled
   non-uniformly about the source root (a global height ratio times a
   per-body local factor), orientations are the human orientations
   composed with rest-pose alignment offsets.
3. Stage one solves orientation tasks for every pair plus position
   tasks for the end-effectors only; stage two re-solves from there
   with position tasks on all pairs.

Across a sequence, frame 0 initializes the root from the scaled root
target (position plus yaw heading), and every later frame warm starts
from the previous solution. After the whole sequence is solved the
minimum body height over time is subtracted from the root translation,
which pins the lowest contact to the ground plane.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .bvh import human_fk, rest_pose, skeleton_height
from .errors import ParseError, SolverError, ValidationError
from .ik import IkTask, SolverParams, solve_to_convergence
from .kinematics import PoseSet, robot_fk
from .robot import GeneralizedCoords, default_coords, tighten_limits
from .so3 import mat_to_quat, quat_to_mat, rot_z, yaw_angle

CONFIG_SCHEMA = "retarget-config/1"

ROOT_FROM_TARGET = "root_from_target"
WARM_START = "warm_start"

# Starting-point weights; any per-pair value in the config wins.
STAGE1_ORIENTATION_WEIGHT = 1.0
STAGE1_POSITION_WEIGHT_EE = 5.0
STAGE2_ORIENTATION_WEIGHT = 1.0
STAGE2_POSITION_WEIGHT = 10.0
STAGE2_POSITION_WEIGHT_EE = 20.0

# Local scale profile that works as a first cut for adult-sized sources
# onto a roughly 1.3 m humanoid: shrink the root path more than the
# limbs so feet and hands still reach their targets.
DEFAULT_SCALE_PROFILE = {"root": 0.8, "legs": 0.9, "arms": 0.85, "h_ref": 1.75}


@dataclass
class PairSpec:
    """One mapped human-joint/robot-body pair, names resolved to indices."""

    human: str
    robot: str
    human_index: int
    body_index: int
    end_effector: bool
    scale: float
    stage1_position_weight: float
    stage1_orientation_weight: float
    stage2_position_weight: float
    stage2_orientation_weight: float
    rotation_offset: np.ndarray = None  # (3,3) explicit override, else rest alignment
    position_offset: np.ndarray = field(default_factory=lambda: np.zeros(3))


@dataclass
class RetargetConfig:
    pairs: list
    h_ref: float
    root_scale: float
    stage1: SolverParams
    stage2: SolverParams
    limit_overrides: dict
    base_pair_index: int = None  # pair that maps the robot base, if any


@dataclass(eq=False)
class RobotMotion:
    frame_dt: float
    root_position: np.ndarray  # (T, 3)
    root_orientation: np.ndarray  # (T, 4) wxyz
    joint_values: np.ndarray  # (T, n)

    @property
    def n_frames(self):
        return self.root_position.shape[0]

    def frame_coords(self, t):
        return GeneralizedCoords(
            self.root_position[t].copy(),
            self.root_orientation[t].copy(),
            self.joint_values[t].copy(),
        )


def parse_config(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed config JSON ({exc})") from None
    if not isinstance(doc, dict) or "schema" not in doc:
        raise ParseError("config JSON is missing the 'schema' field")
    if doc["schema"] != CONFIG_SCHEMA:
        raise ParseError(f"unsupported config schema '{doc['schema']}'")
    return doc


def _solver_params(raw, what):
    params = SolverParams()
    known = {"dt", "damping", "max_iterations", "value_change_threshold", "return_best"}
    for key, value in (raw or {}).items():
        if key not in known:
            raise ValidationError(f"unknown solver option '{key}' in {what}")
        setattr(params, key, value)
    if params.dt <= 0:
        raise ValidationError(f"{what}: dt must be positive")
    if params.max_iterations < 1:
        raise ValidationError(f"{what}: max_iterations must be at least 1")
    return params


def load_config(doc, skeleton, model):
    """Resolve and validate a config document against a skeleton and model.

    Name resolution is eager so typos surface before any solving
    starts. Stage-1 position weights are only meaningful on
    end-effector pairs and are rejected elsewhere.
    """
    raw_pairs = doc.get("pairs", [])
    if not raw_pairs:
        raise ValidationError("config maps no pairs")
    h_ref = float(doc.get("h_ref", DEFAULT_SCALE_PROFILE["h_ref"]))
    if h_ref <= 0:
        raise ValidationError("h_ref must be positive")
    root_scale = float(doc.get("root_scale", 1.0))
    if root_scale <= 0:
        raise ValidationError("root_scale must be positive")

    pairs = []
    seen_human, seen_robot = set(), set()
    for raw in raw_pairs:
        if "human" not in raw or "robot" not in raw:
            raise ValidationError("every pair needs 'human' and 'robot' names")
        human, robot = raw["human"], raw["robot"]
        if human in seen_human:
            raise ValidationError(f"human joint '{human}' mapped twice")
        if robot in seen_robot:
            raise ValidationError(f"robot body '{robot}' mapped twice")
        seen_human.add(human)
        seen_robot.add(robot)
        ee = bool(raw.get("end_effector", False))
        scale = float(raw.get("scale", 1.0))
        if scale <= 0:
            raise ValidationError(f"pair '{human}': scale must be positive")
        s1p = float(raw.get("stage1_position",
                            STAGE1_POSITION_WEIGHT_EE if ee else 0.0))
        s1r = float(raw.get("stage1_orientation", STAGE1_ORIENTATION_WEIGHT))
        s2p = float(raw.get("stage2_position",
                            STAGE2_POSITION_WEIGHT_EE if ee else STAGE2_POSITION_WEIGHT))
        s2r = float(raw.get("stage2_orientation", STAGE2_ORIENTATION_WEIGHT))
        if min(s1p, s1r, s2p, s2r) < 0:
            raise ValidationError(f"pair '{human}': weights must be non-negative")
        if s1p > 0 and not ee:
            raise ValidationError(
                f"pair '{human}': stage-1 position weight on a non-end-effector pair"
            )
        rot_off = raw.get("rotation_offset")
        if rot_off is not None:
            rot_off = quat_to_mat(np.asarray(rot_off, dtype=float))
        pos_off = np.asarray(raw.get("position_offset", [0.0, 0.0, 0.0]), dtype=float)
        try:
            human_index = skeleton.index(human)
            body_index = model.body_index(robot)
        except ValidationError as exc:
            raise ValidationError(f"pair '{human}' -> '{robot}': {exc}") from None
        pairs.append(PairSpec(
            human, robot, human_index, body_index,
            ee, scale, s1p, s1r, s2p, s2r, rot_off, pos_off,
        ))

    solver = doc.get("solver", {})
    for key in solver:
        if key not in ("stage1", "stage2"):
            raise ValidationError(f"unknown solver section '{key}'")
    stage1 = _solver_params(solver.get("stage1"), "solver.stage1")
    stage2 = _solver_params(solver.get("stage2"), "solver.stage2")

    overrides = {}
    for name, bounds in doc.get("limit_overrides", {}).items():
        model.joint_index(name)
        if len(bounds) != 2:
            raise ValidationError(f"limit override for '{name}' must be [lower, upper]")
        overrides[name] = (float(bounds[0]), float(bounds[1]))
    if overrides:
        tighten_limits(model, overrides)  # validates narrowing eagerly

    base_pair = next(
        (k for k, p in enumerate(pairs) if p.body_index == 0), None)
    return RetargetConfig(pairs, h_ref, root_scale, stage1, stage2,
                          overrides, base_pair)


def align_rest_pose(skeleton, model, config):
    """Per-pair rotation offsets that make the rest poses agree.

    offset = human_rest^-1 o robot_rest, so composing a frame's human
    orientation with its offset reproduces the robot rest orientation
    whenever the human sits in their rest pose. Pairs with an explicit
    offset in the config keep it.
    """
    human = rest_pose(skeleton)
    robot = robot_fk(model, default_coords(model))
    out = np.empty((len(config.pairs), 3, 3))
    for k, pair in enumerate(config.pairs):
        if pair.rotation_offset is not None:
            out[k] = pair.rotation_offset
        else:
            out[k] = human.rotations[pair.human_index].T @ robot.rotations[pair.body_index]
    return out


def scale_frame(pose, config, alignment, height):
    """Cartesian targets for one frame of human poses.

    Positions scale about the source root: a global height ratio
    (source height over the reference the local factors were tuned at)
    times the per-body factor on the root-relative part, and the root
    factor on the root path itself. For the root pair this collapses to
    the pure root scaling. Local position offsets apply in the target
    body frame.
    """
    ratio = height / config.h_ref
    root_src = pose.positions[0]
    n = len(config.pairs)
    positions = np.empty((n, 3))
    rotations = np.empty((n, 3, 3))
    for k, pair in enumerate(config.pairs):
        r = pose.rotations[pair.human_index] @ alignment[k]
        c_body = ratio * pair.scale
        # grouped so the root coefficient is exactly zero when all the
        # scales are one, keeping identity configs bitwise intact
        c_root = ratio * config.root_scale - c_body
        p = c_body * pose.positions[pair.human_index] + c_root * root_src
        positions[k] = p + r @ pair.position_offset
        rotations[k] = r
    return PoseSet(positions, rotations)


def _stage_tasks(targets, config, stage):
    tasks = []
    for k, pair in enumerate(config.pairs):
        if stage == 1:
            pw, ow = pair.stage1_position_weight, pair.stage1_orientation_weight
        else:
            pw, ow = pair.stage2_position_weight, pair.stage2_orientation_weight
        tasks.append(IkTask(
            body=pair.body_index,
            position_target=targets.positions[k],
            orientation_target=targets.rotations[k],
            position_weight=pw,
            orientation_weight=ow,
        ))
    return tasks


def _solve_frame(targets, config, model, q_init, init_mode):
    if init_mode == ROOT_FROM_TARGET:
        q_init = q_init.copy()
        k = config.base_pair_index
        if k is not None:
            prev_yaw = yaw_angle(quat_to_mat(q_init.root_orientation))
            yaw = yaw_angle(targets.rotations[k], fallback=prev_yaw)
            q_init.root_position = targets.positions[k].copy()
            q_init.root_orientation = mat_to_quat(rot_z(yaw))
    elif init_mode != WARM_START:
        raise ValueError(f"unknown init mode '{init_mode}'")

    q1, it1, _ = solve_to_convergence(
        model, q_init, _stage_tasks(targets, config, 1), config.stage1)
    q2, it2, _ = solve_to_convergence(
        model, q1, _stage_tasks(targets, config, 2), config.stage2)
    return q2, it1, it2


def retarget_frame(targets, config, model, q_init, init_mode=WARM_START):
    """Two-stage solve of a single frame; see `_solve_frame` for the
    initialization handling."""
    q, _, _ = _solve_frame(targets, config, model, q_init, init_mode)
    return q


def retarget_sequence(skeleton, motion, model, config, iteration_counts=None):
    """Retarget a whole motion, warm starting each frame from the last.

    Pass a list as `iteration_counts` to collect the (stage1, stage2)
    solver iterations per frame. Raises SolverError tagged with the
    frame index if any frame fails.
    """
    if config.limit_overrides:
        model = tighten_limits(model, config.limit_overrides)
    alignment = align_rest_pose(skeleton, model, config)
    height = skeleton_height(skeleton)

    n_frames = motion.n_frames
    root_position = np.empty((n_frames, 3))
    root_orientation = np.empty((n_frames, 4))
    joint_values = np.empty((n_frames, model.n_joints))

    q = default_coords(model)
    for t in range(n_frames):
        pose = human_fk(skeleton, *motion.frame(t))
        targets = scale_frame(pose, config, alignment, height)
        mode = ROOT_FROM_TARGET if t == 0 else WARM_START
        try:
            q, it1, it2 = _solve_frame(targets, config, model, q, mode)
        except SolverError as exc:
            raise SolverError(f"frame {t}: {exc}", residual=exc.residual) from exc
        if iteration_counts is not None:
            iteration_counts.append((it1, it2))
        root_position[t] = q.root_position
        root_orientation[t] = q.root_orientation
        joint_values[t] = q.joint_values

    out = RobotMotion(motion.frame_dt, root_position, root_orientation, joint_values)
    return height_normalize(model, out)


def height_normalize(model, motion):
    """Subtract the global minimum body height from the root translation.

    Fixes both floating and ground penetration in one move: after the
    shift the lowest body over the whole motion sits exactly at z = 0.
    """
    low = np.inf
    for t in range(motion.n_frames):
        poses = robot_fk(model, motion.frame_coords(t))
        low = min(low, float(poses.positions[:, 2].min()))
    shifted = motion.root_position.copy()
    shifted[:, 2] -= low
    return RobotMotion(motion.frame_dt, shifted,
                       motion.root_orientation.copy(),
                       motion.joint_values.copy())
