"""Tracking-error metrics and retargeting-artifact detectors.

Metrics compare two motions for the same model:

* e_g_mpbpe: mean body position error in world frame, millimeters.
* e_mpbpe: same but with positions taken relative to the base body.
* e_mpjpe: mean absolute joint value difference, 1e-3 radians.

Detectors inspect a single motion for the artifact families that break
downstream tracking policies: ground penetration, capsule
self-intersection, foot sliding while in contact, and sudden per-frame
joint jumps. Geometry (clearance radii, capsules, foot bodies) and
thresholds live in a small JSON config; thresholds default to
conservative values when unspecified.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ParseError, ValidationError
from .kinematics import robot_fk

GEOMETRY_SCHEMA = "geometry/1"
REPORT_SCHEMA = "quality-report/1"


@dataclass(eq=False)
class Capsule:
    body: int
    p0: np.ndarray  # (3,) body-frame endpoint
    p1: np.ndarray
    radius: float
    label: str = ""


@dataclass(eq=False)
class GeometryConfig:
    clearance_radius: dict = field(default_factory=dict)  # body index -> meters
    capsules: list = field(default_factory=list)
    foot_bodies: list = field(default_factory=list)  # body indices
    penetration_eps: float = 0.005
    contact_height: float = 0.05
    slide_speed: float = 0.2
    spike_rate: float = 10.0


def load_geometry(text, model):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed geometry JSON ({exc})") from None
    if not isinstance(doc, dict) or doc.get("schema") != GEOMETRY_SCHEMA:
        raise ParseError(f"geometry JSON must declare schema '{GEOMETRY_SCHEMA}'")
    geom = GeometryConfig()
    for name, radius in doc.get("clearance_radius", {}).items():
        geom.clearance_radius[model.body_index(name)] = float(radius)
    for raw in doc.get("capsules", []):
        geom.capsules.append(Capsule(
            model.body_index(raw["body"]),
            np.asarray(raw["p0"], dtype=float),
            np.asarray(raw["p1"], dtype=float),
            float(raw["radius"]),
            raw.get("label", raw["body"]),
        ))
    geom.foot_bodies = [model.body_index(n) for n in doc.get("foot_bodies", [])]
    for key in ("penetration_eps", "contact_height", "slide_speed", "spike_rate"):
        if key in doc:
            setattr(geom, key, float(doc[key]))
    return geom


def fk_series(model, motion):
    """World body poses for every frame: (T, nb, 3) and (T, nb, 3, 3)."""
    nb = model.n_bodies
    positions = np.empty((motion.n_frames, nb, 3))
    rotations = np.empty((motion.n_frames, nb, 3, 3))
    for t in range(motion.n_frames):
        poses = robot_fk(model, motion.frame_coords(t))
        positions[t] = poses.positions
        rotations[t] = poses.rotations
    return positions, rotations


def tracking_errors(model, reference, actual):
    """Tracking error triple between two motions of the same model."""
    if reference.n_frames != actual.n_frames:
        raise ValidationError(
            f"frame count mismatch: {reference.n_frames} vs {actual.n_frames}"
        )
    p_ref, _ = fk_series(model, reference)
    p_act, _ = fk_series(model, actual)
    e_g = np.linalg.norm(p_ref - p_act, axis=-1).mean()
    rel_ref = p_ref - p_ref[:, :1]
    rel_act = p_act - p_act[:, :1]
    e_rel = np.linalg.norm(rel_ref - rel_act, axis=-1).mean()
    e_joint = np.abs(reference.joint_values - actual.joint_values).mean() \
        if model.n_joints else 0.0
    return {
        "e_g_mpbpe": float(e_g * 1000.0),  # mm
        "e_mpbpe": float(e_rel * 1000.0),  # mm
        "e_mpjpe": float(e_joint * 1000.0),  # 1e-3 rad
    }


def segment_distance(p0, p1, q0, q1):
    """Closest distance between segments [p0, p1] and [q0, q1].

    Clamped closed form; degenerate (point-like) segments are handled,
    so sphere-sphere is the zero-length special case.
    """
    d1 = np.asarray(p1, float) - p0
    d2 = np.asarray(q1, float) - q0
    r = np.asarray(p0, float) - q0
    a = float(d1 @ d1)
    e = float(d2 @ d2)
    f = float(d2 @ r)
    eps = 1e-12
    if a <= eps and e <= eps:
        return float(np.linalg.norm(r))
    if a <= eps:
        s, t = 0.0, min(max(f / e, 0.0), 1.0)
    else:
        c = float(d1 @ r)
        if e <= eps:
            t, s = 0.0, min(max(-c / a, 0.0), 1.0)
        else:
            b = float(d1 @ d2)
            denom = a * e - b * b
            s = min(max((b * f - c * e) / denom, 0.0), 1.0) if denom > 0.0 else 0.0
            t = (b * s + f) / e
            if t < 0.0:
                t, s = 0.0, min(max(-c / a, 0.0), 1.0)
            elif t > 1.0:
                t, s = 1.0, min(max((b - c) / a, 0.0), 1.0)
    closest = (np.asarray(p0, float) + s * d1) - (np.asarray(q0, float) + t * d2)
    return float(np.linalg.norm(closest))


def detect_ground_penetration(model, motion, geom, series=None):
    """Per-frame minimum ground clearance, flagged below -penetration_eps.

    Clearance of a body is its height minus the configured clearance
    radius (default 0, treating the body origin as the contact point).
    """
    positions = series[0] if series else fk_series(model, motion)[0]
    radius = np.zeros(model.n_bodies)
    for idx, r in geom.clearance_radius.items():
        radius[idx] = r
    clearance = (positions[:, :, 2] - radius).min(axis=1)
    flags = clearance < -geom.penetration_eps
    depth = np.maximum(0.0, -clearance)
    return {"min_clearance": clearance, "depth": depth, "flags": flags}


def detect_self_intersection(model, motion, geom, series=None):
    """Capsule-pair overlaps, skipping pairs on the same or adjacent bodies.

    Adjacent (parent/child) capsules overlap by construction around the
    shared joint and would drown real events in noise.
    """
    positions, rotations = series if series else fk_series(model, motion)
    caps = geom.capsules
    pairs = []
    for i in range(len(caps)):
        for j in range(i + 1, len(caps)):
            a, b = caps[i].body, caps[j].body
            adjacent = (a == b or model.parent_index[a] == b
                        or model.parent_index[b] == a)
            if not adjacent:
                pairs.append((i, j))
    flags = np.zeros(motion.n_frames, dtype=bool)
    depth = np.zeros(motion.n_frames)
    events = []
    for t in range(motion.n_frames):
        for i, j in pairs:
            ci, cj = caps[i], caps[j]
            pi = positions[t, ci.body]
            ri = rotations[t, ci.body]
            pj = positions[t, cj.body]
            rj = rotations[t, cj.body]
            dist = segment_distance(pi + ri @ ci.p0, pi + ri @ ci.p1,
                                    pj + rj @ cj.p0, pj + rj @ cj.p1)
            overlap = (ci.radius + cj.radius) - dist
            if overlap > 0.0:
                flags[t] = True
                depth[t] = max(depth[t], overlap)
                events.append((t, ci.label, cj.label, float(overlap)))
    return {"flags": flags, "depth": depth, "events": events}


def _check_rate_usable(motion):
    if motion.n_frames > 1 and motion.frame_dt <= 0.0:
        raise ValidationError("motion needs a positive frame_dt for rate detectors")


def detect_foot_sliding(model, motion, geom, series=None):
    """Horizontal foot speed while the foot stays in contact.

    Contact means the foot body sits below contact_height in two
    consecutive frames; sliding above slide_speed is flagged.
    """
    _check_rate_usable(motion)
    positions = series[0] if series else fk_series(model, motion)[0]
    flags = np.zeros(motion.n_frames, dtype=bool)
    events = []
    if motion.n_frames < 2:
        return {"flags": flags, "events": events}
    for body in geom.foot_bodies:
        p = positions[:, body]
        contact = p[:, 2] < geom.contact_height
        speed = np.linalg.norm(np.diff(p[:, :2], axis=0), axis=1) / motion.frame_dt
        sliding = contact[:-1] & contact[1:] & (speed > geom.slide_speed)
        for t in np.nonzero(sliding)[0]:
            flags[t + 1] = True
            events.append((int(t + 1), model.bodies[body].name, float(speed[t])))
    return {"flags": flags, "events": events}


def detect_velocity_spikes(model, motion, geom):
    """Per-frame joint value jumps above spike_rate (rad/s)."""
    _check_rate_usable(motion)
    flags = np.zeros(motion.n_frames, dtype=bool)
    events = []
    if motion.n_frames < 2 or model.n_joints == 0:
        return {"flags": flags, "events": events}
    rates = np.abs(np.diff(motion.joint_values, axis=0)) / motion.frame_dt
    hit_t, hit_j = np.nonzero(rates > geom.spike_rate)
    for t, j in zip(hit_t, hit_j):
        flags[t + 1] = True
        events.append((int(t + 1), model.joint_names[j], float(rates[t, j])))
    return {"flags": flags, "events": events}


def quality_report(model, motion, geom, reference=None):
    """Run every applicable detector (and tracking errors when a
    reference is given) and collect a JSON-ready report."""
    series = fk_series(model, motion)
    pen = detect_ground_penetration(model, motion, geom, series)
    inter = detect_self_intersection(model, motion, geom, series)
    slide = detect_foot_sliding(model, motion, geom, series)
    spikes = detect_velocity_spikes(model, motion, geom)

    report = {
        "schema": REPORT_SCHEMA,
        "frames": int(motion.n_frames),
        "frame_dt": float(motion.frame_dt),
        "tracking": None,
        "detectors": {
            "penetration": {
                "flagged_frames": int(pen["flags"].sum()),
                "worst_depth": float(pen["depth"].max(initial=0.0)),
                "min_clearance": [float(v) for v in pen["min_clearance"]],
                "flags": [int(v) for v in pen["flags"]],
            },
            "self_intersection": {
                "flagged_frames": int(inter["flags"].sum()),
                "worst_depth": float(inter["depth"].max(initial=0.0)),
                "events": [[t, a, b, d] for t, a, b, d in inter["events"]],
                "flags": [int(v) for v in inter["flags"]],
            },
            "foot_sliding": {
                "flagged_frames": int(slide["flags"].sum()),
                "events": [[t, n, s] for t, n, s in slide["events"]],
                "flags": [int(v) for v in slide["flags"]],
            },
            "velocity_spikes": {
                "flagged_frames": int(spikes["flags"].sum()),
                "events": [[t, n, r] for t, n, r in spikes["events"]],
                "flags": [int(v) for v in spikes["flags"]],
            },
        },
    }
    if reference is not None:
        report["tracking"] = tracking_errors(model, reference, motion)
    return report
