"""Robot description: floating-base rigid trees with revolute joints.

Two input formats are supported. A URDF subset covers the common
humanoid descriptions: revolute/continuous/fixed joints, one optional
floating joint marking the base, origins, axes and limits. The native
format is a small versioned JSON mirror of :class:`RobotModel` for
fixtures and for robots that never had a URDF.

Fixed joints are folded into the child body's fixed transform, so every
named link stays addressable (feet, palms and similar end bodies are
frequently fixed-mounted) without adding degrees of freedom.
"""

import json
import logging
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ParseError, ValidationError
from .so3 import mat_to_quat, quat_normalize, quat_to_mat, rot_x, rot_y, rot_z

log = logging.getLogger(__name__)

NATIVE_SCHEMA = "robot/1"

@dataclass(eq=False)
class Body:
    name: str
    parent: int  # -1 for the base
    translation: np.ndarray  # (3,) fixed offset in the parent frame
    rotation: np.ndarray  # (3, 3) fixed rotation in the parent frame


@dataclass(eq=False)
class Joint:
    name: str
    body: int  # index of the child body the joint drives
    axis: np.ndarray  # (3,) unit axis in the child body frame
    lower: float
    upper: float
    default: float | None = None  # unset resolves to 0 clamped into the limits


@dataclass(eq=False)
class GeneralizedCoords:
    """Floating-base configuration: root pose plus joint values.

    The tangent layout used by the solver is
    [linear velocity (3), angular velocity (3), joint rates (n)],
    both base parts in world frame.
    """

    root_position: np.ndarray  # (3,)
    root_orientation: np.ndarray  # (4,) quaternion wxyz
    joint_values: np.ndarray  # (n,)

    def copy(self):
        return GeneralizedCoords(
            self.root_position.copy(),
            self.root_orientation.copy(),
            self.joint_values.copy(),
        )


@dataclass(eq=False)
class RobotModel:
    name: str
    bodies: list
    joints: list
    default_root_height: float = 0.0

    # derived arrays, filled in __post_init__
    parent_index: np.ndarray = field(init=False, repr=False)
    body_translation: np.ndarray = field(init=False, repr=False)
    body_rotation: np.ndarray = field(init=False, repr=False)
    joint_body: np.ndarray = field(init=False, repr=False)
    joint_axis: np.ndarray = field(init=False, repr=False)
    lower: np.ndarray = field(init=False, repr=False)
    upper: np.ndarray = field(init=False, repr=False)
    joint_default: np.ndarray = field(init=False, repr=False)
    joint_of_body: np.ndarray = field(init=False, repr=False)
    ancestors: np.ndarray = field(init=False, repr=False)
    ancestor_joints: tuple = field(init=False, repr=False)

    def __post_init__(self):
        self._validate_tree()
        nb, nj = len(self.bodies), len(self.joints)
        self.parent_index = np.array([b.parent for b in self.bodies], dtype=int)
        self.body_translation = np.array([b.translation for b in self.bodies], dtype=float)
        self.body_rotation = np.array([b.rotation for b in self.bodies], dtype=float)
        self.joint_body = np.array([j.body for j in self.joints], dtype=int)
        self.joint_axis = np.array([j.axis for j in self.joints], dtype=float).reshape(nj, 3)
        self.lower = np.array([j.lower for j in self.joints], dtype=float)
        self.upper = np.array([j.upper for j in self.joints], dtype=float)
        self.joint_default = np.array([j.default for j in self.joints], dtype=float)

        self.joint_of_body = np.full(nb, -1, dtype=int)
        for k, j in enumerate(self.joints):
            self.joint_of_body[j.body] = k

        # ancestors[b, k]: joint k moves body b
        self.ancestors = np.zeros((nb, nj), dtype=bool)
        for b in range(1, nb):
            par = self.bodies[b].parent
            self.ancestors[b] = self.ancestors[par]
            k = self.joint_of_body[b]
            if k >= 0:
                self.ancestors[b, k] = True
        self.ancestor_joints = tuple(
            np.nonzero(row)[0] for row in self.ancestors)

        self._name_to_body = {b.name: i for i, b in enumerate(self.bodies)}
        self._name_to_joint = {j.name: i for i, j in enumerate(self.joints)}
        for arr in (self.parent_index, self.body_translation, self.body_rotation,
                    self.joint_body, self.joint_axis, self.lower, self.upper,
                    self.joint_default, self.joint_of_body, self.ancestors):
            arr.setflags(write=False)

    def _validate_tree(self):
        names = [b.name for b in self.bodies]
        if len(set(names)) != len(names):
            raise ValidationError("duplicate body names in model")
        jnames = [j.name for j in self.joints]
        if len(set(jnames)) != len(jnames):
            raise ValidationError("duplicate joint names in model")
        if not self.bodies or self.bodies[0].parent != -1:
            raise ValidationError("bodies must start with the base (parent -1)")
        for i, b in enumerate(self.bodies[1:], start=1):
            if not 0 <= b.parent < i:
                raise ValidationError(
                    f"body '{b.name}' must come after its parent (got parent {b.parent})"
                )
        seen = set()
        for j in self.joints:
            if not 1 <= j.body < len(self.bodies):
                raise ValidationError(f"joint '{j.name}' drives an invalid body index")
            if j.body in seen:
                raise ValidationError(
                    f"body '{self.bodies[j.body].name}' is driven by more than one joint"
                )
            seen.add(j.body)
            norm = float(np.linalg.norm(j.axis))
            if norm < 1e-9:
                raise ValidationError(f"joint '{j.name}' has a zero axis")
            j.axis = np.asarray(j.axis, dtype=float) / norm
            if not (np.isfinite(j.lower) and np.isfinite(j.upper)):
                raise ValidationError(f"joint '{j.name}' has non-finite limits")
            if not j.lower < j.upper:
                raise ValidationError(
                    f"joint '{j.name}' limits must satisfy lower < upper "
                    f"(got {j.lower} >= {j.upper})"
                )
            if j.default is None:
                j.default = min(max(0.0, j.lower), j.upper)
            if not j.lower <= j.default <= j.upper:
                raise ValidationError(
                    f"joint '{j.name}' default {j.default} outside limits"
                )

    @property
    def n_bodies(self):
        return len(self.bodies)

    @property
    def n_joints(self):
        return len(self.joints)

    @property
    def body_names(self):
        return [b.name for b in self.bodies]

    @property
    def joint_names(self):
        return [j.name for j in self.joints]

    def body_index(self, name):
        try:
            return self._name_to_body[name]
        except KeyError:
            raise ValidationError(f"unknown body '{name}'") from None

    def joint_index(self, name):
        try:
            return self._name_to_joint[name]
        except KeyError:
            raise ValidationError(f"unknown joint '{name}'") from None


def default_coords(model):
    """Rest configuration: root at the configured default height, identity
    orientation, declared joint defaults (zero clamped into limits when a
    joint declares none)."""
    return GeneralizedCoords(
        root_position=np.array([0.0, 0.0, model.default_root_height]),
        root_orientation=np.array([1.0, 0.0, 0.0, 0.0]),
        joint_values=model.joint_default.copy(),
    )


def tighten_limits(model, overrides):
    """Return a copy of `model` with narrower limits for the named joints.

    Widening either side or naming an unknown joint is an error; loosened
    limits defeat the point of running the solver inside hardware range.
    """
    new_joints = [replace(j, axis=j.axis.copy()) for j in model.joints]
    for name, (lo, hi) in overrides.items():
        k = model.joint_index(name)
        j = new_joints[k]
        if lo < j.lower - 1e-12 or hi > j.upper + 1e-12:
            raise ValidationError(
                f"override for joint '{name}' widens limits "
                f"([{lo}, {hi}] vs [{j.lower}, {j.upper}])"
            )
        if not lo < hi:
            raise ValidationError(f"override for joint '{name}' has lower >= upper")
        j.lower, j.upper = float(lo), float(hi)
        j.default = min(max(j.default, j.lower), j.upper)
    new_bodies = [
        replace(b, translation=b.translation.copy(), rotation=b.rotation.copy())
        for b in model.bodies
    ]
    return RobotModel(model.name, new_bodies, new_joints, model.default_root_height)


# ---------------------------------------------------------------------------
# parsing


def parse_robot(text, fmt):
    if fmt == "urdf":
        return _parse_urdf(text)
    if fmt == "native":
        return _parse_native(text)
    raise ValueError(f"unknown robot format '{fmt}'")


def load_robot(path):
    """Read a robot file, picking the format from extension or content."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    name = str(path).lower()
    if name.endswith(".json"):
        fmt = "native"
    elif name.endswith((".urdf", ".xml")):
        fmt = "urdf"
    else:
        fmt = "urdf" if text.lstrip().startswith("<") else "native"
    return parse_robot(text, fmt)


def _float3(attr, default=(0.0, 0.0, 0.0)):
    if attr is None:
        return np.array(default, dtype=float)
    parts = attr.split()
    if len(parts) != 3:
        raise ParseError(f"expected 3 values, got '{attr}'")
    return np.array([float(p) for p in parts])


def _origin_of(elem):
    origin = elem.find("origin")
    if origin is None:
        return np.zeros(3), np.eye(3)
    xyz = _float3(origin.get("xyz"))
    r, p, y = _float3(origin.get("rpy"))
    return xyz, rot_z(y) @ rot_y(p) @ rot_x(r)


def _parse_urdf(text):
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise ParseError(f"malformed URDF XML ({exc})") from None
    if root.tag != "robot":
        raise ParseError(f"URDF root element must be <robot>, got <{root.tag}>")

    link_names = []
    for link in root.findall("link"):
        name = link.get("name")
        if name is None:
            raise ParseError("URDF <link> without a name")
        link_names.append(name)
    if len(set(link_names)) != len(link_names):
        raise ParseError("duplicate link names in URDF")
    known = set(link_names)

    skipped = {child.tag for child in root if child.tag not in ("link", "joint")}

    floating = None
    by_child = {}
    for joint in root.findall("joint"):
        jname = joint.get("name", "<unnamed>")
        jtype = joint.get("type")
        if joint.find("mimic") is not None:
            raise ParseError(f"joint '{jname}': mimic joints are unsupported")
        if jtype not in ("revolute", "continuous", "fixed", "floating"):
            raise ParseError(f"joint '{jname}': unsupported joint type '{jtype}'")
        parent_el, child_el = joint.find("parent"), joint.find("child")
        if parent_el is None or child_el is None:
            raise ParseError(f"joint '{jname}' missing parent or child link")
        parent, child = parent_el.get("link"), child_el.get("link")
        if parent not in known or child not in known:
            raise ParseError(f"joint '{jname}' references an unknown link")
        if child in by_child:
            raise ParseError(
                f"link '{child}' has more than one parent joint (kinematic loop?)"
            )
        xyz, rot = _origin_of(joint)
        entry = {"name": jname, "type": jtype, "parent": parent, "xyz": xyz, "rot": rot}
        if jtype in ("revolute", "continuous"):
            axis = _float3(joint.find("axis").get("xyz")) if joint.find("axis") is not None \
                else np.array([1.0, 0.0, 0.0])
            entry["axis"] = axis
            if jtype == "continuous":
                entry["limits"] = (-np.pi, np.pi)
            else:
                limit = joint.find("limit")
                if limit is None or limit.get("lower") is None or limit.get("upper") is None:
                    raise ParseError(f"revolute joint '{jname}' is missing limits")
                entry["limits"] = (float(limit.get("lower")), float(limit.get("upper")))
        if jtype == "floating":
            if floating is not None:
                raise ParseError("more than one floating joint")
            floating = entry
            if np.any(xyz) or not np.allclose(rot, np.eye(3)):
                log.warning("origin on floating joint '%s' ignored; the base pose "
                            "comes from the configuration", jname)
        by_child[child] = entry

    roots = [n for n in link_names if n not in by_child]
    if len(roots) != 1:
        raise ParseError(f"expected exactly one root link, found {roots}")
    base = roots[0]
    if floating is not None:
        if floating["parent"] != base:
            raise ParseError("floating joint must hang off the root link")
        # the old root becomes a world anchor and is dropped
        base = next(c for c, e in by_child.items() if e is floating)
        del by_child[base]

    children = {}
    for child, entry in by_child.items():
        children.setdefault(entry["parent"], []).append(child)
    for kids in children.values():
        kids.sort(key=link_names.index)  # document order, deterministic

    bodies = [Body(base, -1, np.zeros(3), np.eye(3))]
    joints = []
    index_of = {base: 0}
    stack = list(reversed(children.get(base, [])))
    while stack:
        child = stack.pop()
        entry = by_child[child]
        bodies.append(Body(child, index_of[entry["parent"]], entry["xyz"], entry["rot"]))
        index_of[child] = len(bodies) - 1
        if entry["type"] in ("revolute", "continuous"):
            lo, hi = entry["limits"]
            joints.append(Joint(entry["name"], index_of[child], entry["axis"], lo, hi))
        stack.extend(reversed(children.get(child, [])))

    unreached = known - set(index_of) - ({roots[0]} if floating is not None else set())
    if unreached:
        raise ParseError(f"links not connected to the base: {sorted(unreached)}")
    if skipped:
        log.warning("ignoring unsupported URDF elements: %s", ", ".join(sorted(skipped)))

    return RobotModel(root.get("name", "robot"), bodies, joints)


def _parse_native(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed robot JSON ({exc})") from None
    if not isinstance(doc, dict) or "schema" not in doc:
        raise ParseError("robot JSON is missing the 'schema' field")
    if doc["schema"] != NATIVE_SCHEMA:
        raise ParseError(f"unsupported robot schema '{doc['schema']}'")

    raw_bodies = doc.get("bodies", [])
    if not raw_bodies:
        raise ParseError("robot JSON declares no bodies")
    by_name = {}
    for b in raw_bodies:
        name = b.get("name")
        if not name:
            raise ParseError("body without a name in robot JSON")
        if name in by_name:
            raise ParseError(f"duplicate body '{name}' in robot JSON")
        by_name[name] = b

    # stable topological order over the parent links
    order, placed = [], set()
    pending = list(raw_bodies)
    while pending:
        progressed = False
        remaining = []
        for b in pending:
            parent = b.get("parent")
            if parent is None or parent in placed:
                order.append(b)
                placed.add(b["name"])
                progressed = True
            else:
                if parent not in by_name:
                    raise ParseError(
                        f"body '{b['name']}' references unknown parent '{parent}'"
                    )
                remaining.append(b)
        if not progressed:
            raise ParseError("cycle in robot JSON body parents")
        pending = remaining

    roots = [b for b in order if b.get("parent") is None]
    if len(roots) != 1:
        raise ParseError(f"expected exactly one base body, found {len(roots)}")

    index_of = {}
    bodies = []
    for b in order:
        parent = -1 if b.get("parent") is None else index_of[b["parent"]]
        quat = quat_normalize(np.asarray(b.get("rotation", [1, 0, 0, 0]), dtype=float))
        bodies.append(Body(b["name"], parent,
                           np.asarray(b.get("translation", [0, 0, 0]), dtype=float),
                           quat_to_mat(quat)))
        index_of[b["name"]] = len(bodies) - 1

    joints = []
    for j in doc.get("joints", []):
        for key in ("name", "child", "axis", "lower", "upper"):
            if key not in j:
                raise ParseError(f"joint entry missing '{key}' in robot JSON")
        if j["child"] not in index_of:
            raise ParseError(f"joint '{j['name']}' drives unknown body '{j['child']}'")
        default = j.get("default")
        joints.append(Joint(j["name"], index_of[j["child"]],
                            np.asarray(j["axis"], dtype=float),
                            float(j["lower"]), float(j["upper"]),
                            None if default is None else float(default)))

    return RobotModel(doc.get("name", "robot"), bodies, joints,
                      float(doc.get("default_root_height", 0.0)))


def to_native_dict(model):
    """Inverse of the native parser, for writing fixtures and demo assets."""
    bodies = []
    for b in model.bodies:
        bodies.append({
            "name": b.name,
            "parent": None if b.parent < 0 else model.bodies[b.parent].name,
            "translation": [float(v) for v in b.translation],
            "rotation": [float(v) for v in mat_to_quat(b.rotation)],
        })
    joints = []
    for j in model.joints:
        joints.append({
            "name": j.name,
            "child": model.bodies[j.body].name,
            "axis": [float(v) for v in j.axis],
            "lower": float(j.lower),
            "upper": float(j.upper),
            "default": float(j.default),
        })
    return {
        "schema": NATIVE_SCHEMA,
        "name": model.name,
        "default_root_height": float(model.default_root_height),
        "bodies": bodies,
        "joints": joints,
    }
