"""Rotation math on SO(3).

Conventions used throughout the toolkit:

* quaternions are scalar-first (w, x, y, z), unit norm,
* rotation matrices are world_from_local, applied to column vectors,
* tangent vectors are axis * angle in radians.

All functions broadcast over leading axes, so a (T, J, 3, 3) stack of
matrices works the same as a single (3, 3).
"""

import math

import numpy as np

_EPS_SMALL_ANGLE = 1e-8


def skew(v):
    """Cross-product matrix: skew(v) @ u == cross(v, u)."""
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (3, 3))
    x, y, z = v[..., 0], v[..., 1], v[..., 2]
    out[..., 0, 1] = -z
    out[..., 0, 2] = y
    out[..., 1, 0] = z
    out[..., 1, 2] = -x
    out[..., 2, 0] = -y
    out[..., 2, 1] = x
    return out


def quat_normalize(q):
    q = np.asarray(q, dtype=float)
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def quat_mul(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    aw, ax, ay, az = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    bw, bx, by, bz = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def quat_conj(q):
    q = np.asarray(q, dtype=float)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def quat_to_mat(q):
    q = quat_normalize(q)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    out = np.empty(q.shape[:-1] + (3, 3))
    out[..., 0, 0] = 1.0 - 2.0 * (y * y + z * z)
    out[..., 0, 1] = 2.0 * (x * y - w * z)
    out[..., 0, 2] = 2.0 * (x * z + w * y)
    out[..., 1, 0] = 2.0 * (x * y + w * z)
    out[..., 1, 1] = 1.0 - 2.0 * (x * x + z * z)
    out[..., 1, 2] = 2.0 * (y * z - w * x)
    out[..., 2, 0] = 2.0 * (x * z - w * y)
    out[..., 2, 1] = 2.0 * (y * z + w * x)
    out[..., 2, 2] = 1.0 - 2.0 * (x * x + y * y)
    return out


def _mat_to_quat_single(m):
    # scalar twin of the batched path below; same branch choice
    # (first maximum wins) and the same sign canonicalization
    m00 = m[0, 0]
    m11 = m[1, 1]
    m22 = m[2, 2]
    t = m00 + m11 + m22
    cand = (t, m00, m11, m22)
    best = 0
    for k in (1, 2, 3):
        if cand[k] > cand[best]:
            best = k
    if best == 0:
        s = math.sqrt(max(1.0 + t, 0.0)) * 2.0
        q = (0.25 * s, (m[2, 1] - m[1, 2]) / s,
             (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s)
    elif best == 1:
        s = math.sqrt(max(1.0 + m00 - m11 - m22, 0.0)) * 2.0
        q = ((m[2, 1] - m[1, 2]) / s, 0.25 * s,
             (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s)
    elif best == 2:
        s = math.sqrt(max(1.0 + m11 - m00 - m22, 0.0)) * 2.0
        q = ((m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s,
             0.25 * s, (m[1, 2] + m[2, 1]) / s)
    else:
        s = math.sqrt(max(1.0 + m22 - m00 - m11, 0.0)) * 2.0
        q = ((m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s,
             (m[1, 2] + m[2, 1]) / s, 0.25 * s)
    if q[0] < 0.0:
        q = (-q[0], -q[1], -q[2], -q[3])
    norm = math.sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3])
    return np.array(q) / norm


def mat_to_quat(R):
    """Rotation matrix to unit quaternion, branch chosen per element.

    The returned quaternion has w >= 0; for half-turns (w == 0) the sign
    is fixed by making the largest-magnitude vector component positive,
    which keeps the pi branch of the log deterministic.
    """
    m = np.asarray(R, dtype=float)
    if m.ndim == 2:
        return _mat_to_quat_single(m)
    m00, m11, m22 = m[..., 0, 0], m[..., 1, 1], m[..., 2, 2]
    t = m00 + m11 + m22
    cand = np.stack([t, m00, m11, m22], axis=-1)
    choice = np.argmax(cand, axis=-1)

    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.sqrt(np.maximum(1.0 + t, 0.0)) * 2.0
        q_w = np.stack(
            [
                0.25 * s,
                (m[..., 2, 1] - m[..., 1, 2]) / s,
                (m[..., 0, 2] - m[..., 2, 0]) / s,
                (m[..., 1, 0] - m[..., 0, 1]) / s,
            ],
            axis=-1,
        )
        s = np.sqrt(np.maximum(1.0 + m00 - m11 - m22, 0.0)) * 2.0
        q_x = np.stack(
            [
                (m[..., 2, 1] - m[..., 1, 2]) / s,
                0.25 * s,
                (m[..., 0, 1] + m[..., 1, 0]) / s,
                (m[..., 0, 2] + m[..., 2, 0]) / s,
            ],
            axis=-1,
        )
        s = np.sqrt(np.maximum(1.0 + m11 - m00 - m22, 0.0)) * 2.0
        q_y = np.stack(
            [
                (m[..., 0, 2] - m[..., 2, 0]) / s,
                (m[..., 0, 1] + m[..., 1, 0]) / s,
                0.25 * s,
                (m[..., 1, 2] + m[..., 2, 1]) / s,
            ],
            axis=-1,
        )
        s = np.sqrt(np.maximum(1.0 + m22 - m00 - m11, 0.0)) * 2.0
        q_z = np.stack(
            [
                (m[..., 1, 0] - m[..., 0, 1]) / s,
                (m[..., 0, 2] + m[..., 2, 0]) / s,
                (m[..., 1, 2] + m[..., 2, 1]) / s,
                0.25 * s,
            ],
            axis=-1,
        )

    stacked = np.stack([q_w, q_x, q_y, q_z], axis=-2)
    q = np.take_along_axis(stacked, choice[..., None, None], axis=-2)[..., 0, :]
    # canonical sign; strict < keeps the deterministic half-turn branch
    q = np.where((q[..., 0] < 0.0)[..., None], -q, q)
    return quat_normalize(q)


def so3_exp_quat(v):
    """Tangent vector to unit quaternion."""
    v = np.asarray(v, dtype=float)
    theta = np.linalg.norm(v, axis=-1)
    half = 0.5 * theta
    # sin(theta/2)/theta with a series fallback at small angles
    small = theta < _EPS_SMALL_ANGLE
    theta_safe = np.where(small, 1.0, theta)
    factor = np.where(small, 0.5 - theta * theta / 48.0, np.sin(half) / theta_safe)
    out = np.empty(v.shape[:-1] + (4,))
    out[..., 0] = np.cos(half)
    out[..., 1:] = v * factor[..., None]
    return out


def so3_exp(v):
    return quat_to_mat(so3_exp_quat(v))


def so3_log(R):
    """Rotation matrix to tangent vector, angle in [0, pi].

    At exactly pi the axis sign follows the mat_to_quat half-turn
    convention (largest component positive), so e.g. a half turn about
    +X or -X both map to (pi, 0, 0).
    """
    q = mat_to_quat(R)
    if q.ndim == 1:
        s = math.sqrt(q[1] * q[1] + q[2] * q[2] + q[3] * q[3])
        factor = 2.0 if s < _EPS_SMALL_ANGLE else 2.0 * math.atan2(s, q[0]) / s
        return q[1:] * factor
    vec = q[..., 1:]
    s = np.linalg.norm(vec, axis=-1)
    theta = 2.0 * np.arctan2(s, q[..., 0])
    small = s < _EPS_SMALL_ANGLE
    s_safe = np.where(small, 1.0, s)
    factor = np.where(small, 2.0, theta / s_safe)
    return vec * factor[..., None]


def rot_minus(ra, rb):
    """Tangent-space difference so3_log(ra^-1 @ rb)."""
    ra = np.asarray(ra, dtype=float)
    return so3_log(np.swapaxes(ra, -1, -2) @ rb)


def axis_angle_mat(axis, angle):
    """Rodrigues rotation about a unit axis; broadcasts over leading axes."""
    axis = np.asarray(axis, dtype=float)
    angle = np.asarray(angle, dtype=float)
    k = skew(axis)
    s = np.sin(angle)[..., None, None]
    c = np.cos(angle)[..., None, None]
    eye = np.broadcast_to(np.eye(3), k.shape)
    return eye + s * k + (1.0 - c) * (k @ k)


def rot_x(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def left_jacobian_inv(v):
    """Inverse left Jacobian of the log map.

    Maps a world-frame angular increment onto the induced change of the
    log-space error; used by the IK task stacking so the linear model
    stays first-order exact for large orientation errors.
    """
    v = np.asarray(v, dtype=float)
    theta = float(np.linalg.norm(v))
    k = skew(v)
    if theta < _EPS_SMALL_ANGLE:
        return np.eye(3) - 0.5 * k + k @ k / 12.0
    c = 1.0 / theta**2 - (1.0 + np.cos(theta)) / (2.0 * theta * np.sin(theta))
    return np.eye(3) - 0.5 * k + c * (k @ k)


def yaw_angle(R, fallback=0.0):
    """Heading of the rotated +X axis projected to the ground plane.

    Returns `fallback` when the rotated forward axis is within 1e-6 of
    vertical and the heading is therefore undefined.
    """
    f = np.asarray(R, dtype=float)[..., :, 0]
    if np.hypot(f[0], f[1]) < 1e-6:
        return float(fallback)
    return float(np.arctan2(f[1], f[0]))
