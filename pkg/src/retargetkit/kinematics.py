"""Forward kinematics and geometric Jacobians for floating-base trees."""

from dataclasses import dataclass

import numpy as np

from .so3 import axis_angle_mat, quat_to_mat, skew


@dataclass(eq=False)
class PoseSet:
    """World poses for an indexed set of bodies or joints."""

    positions: np.ndarray  # (n, 3)
    rotations: np.ndarray  # (n, 3, 3)


def robot_fk(model, q):
    """World pose of every body.

    Child pose = parent pose o fixed body transform o rotation about the
    joint axis, walking bodies in their stored parent-first order.
    """
    nb = model.n_bodies
    pos = np.empty((nb, 3))
    rot = np.empty((nb, 3, 3))
    pos[0] = q.root_position
    rot[0] = quat_to_mat(q.root_orientation)

    joint_rot = axis_angle_mat(model.joint_axis, q.joint_values) \
        if model.n_joints else None
    parents = model.parent_index
    joint_of = model.joint_of_body
    for b in range(1, nb):
        p = parents[b]
        r_par = rot[p]
        pos[b] = pos[p] + r_par @ model.body_translation[b]
        r = r_par @ model.body_rotation[b]
        k = joint_of[b]
        if k >= 0:
            r = r @ joint_rot[k]
        rot[b] = r
    return PoseSet(pos, rot)


def body_jacobian(model, q, body, poses=None):
    """World-frame geometric Jacobian of one body, shape (6, 6 + n).

    Rows 0:3 are linear velocity, rows 3:6 angular velocity. Columns
    follow the tangent layout [base linear, base angular, joint rates].
    Base angular columns couple into position through the lever arm
    about the root; a joint column is nonzero only if that joint lies
    on the path from the base to `body`.
    """
    if poses is None:
        poses = robot_fk(model, q)
    nj = model.n_joints
    J = np.zeros((6, 6 + nj))
    p_body = poses.positions[body]
    J[0:3, 0:3] = np.eye(3)
    J[0:3, 3:6] = -skew(p_body - poses.positions[0])
    J[3:6, 3:6] = np.eye(3)

    idx = model.ancestor_joints[body]
    if idx.size:
        child = model.joint_body[idx]
        # the joint axis expressed in world frame; rotation about the own
        # axis leaves it unchanged, so the child body rotation works
        axis_world = np.einsum("nij,nj->ni", poses.rotations[child], model.joint_axis[idx])
        lever = p_body - poses.positions[child]
        # cross(axis, lever) spelled out; np.cross is slow on small stacks
        a0, a1, a2 = axis_world[:, 0], axis_world[:, 1], axis_world[:, 2]
        l0, l1, l2 = lever[:, 0], lever[:, 1], lever[:, 2]
        J[0, 6 + idx] = a1 * l2 - a2 * l1
        J[1, 6 + idx] = a2 * l0 - a0 * l2
        J[2, 6 + idx] = a0 * l1 - a1 * l0
        J[3:6, 6 + idx] = axis_world.T
    return J
