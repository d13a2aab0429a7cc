"""Box-constrained differential IK.

One step solves, in the floating-base tangent,

    min_v  || e(q) + J v ||^2_W  +  damping * ||v||^2
    s.t.   (lower_k - q_k) / dt  <=  v_k  <=  (upper_k - q_k) / dt

for the revolute coordinates; base coordinates are unbounded. `J` maps
the tangent velocity to the error rate, signed so `e + J v` is the
error predicted after moving at `v` for one unit of time. The
unconstrained optimum therefore asks for the full linearized
correction, and `integrate(q, v, dt)` applies the `dt` fraction of it.
`dt` is a solver parameter, not the motion frame time: small values
damp the iteration (trading accuracy per step for stability on
conflicting task sets), `dt = 1` recovers a plain Gauss-Newton step,
and the bounds above keep `q + v dt` inside the joint limits either
way.

The loop repeats step + integrate until the weighted squared error
changes by less than a threshold (default 0.001) or a fixed iteration
cap (default 10) is hit.
"""

from dataclasses import dataclass

import numpy as np

from .errors import SolverError
from .kinematics import body_jacobian, robot_fk
from .robot import GeneralizedCoords
from .so3 import left_jacobian_inv, quat_mul, quat_normalize, rot_minus, so3_exp_quat


@dataclass
class IkTask:
    """Position and/or orientation target for one body.

    Zero-weight or absent targets contribute no rows to the stacked
    problem. The body may be given by index or by name.
    """

    body: int | str
    position_target: np.ndarray = None
    orientation_target: np.ndarray = None
    position_weight: float = 0.0
    orientation_weight: float = 0.0


@dataclass
class SolverParams:
    dt: float = 0.1
    damping: float = 1e-6
    max_iterations: int = 10
    value_change_threshold: float = 1e-3
    return_best: bool = False


def stack_tasks(model, q, tasks):
    """Stack task residuals into (e, J, weights).

    Returns the stacked error, the Jacobian mapping tangent velocity to
    error rate, and the diagonal of W (one weight per row). Position
    rows hold target - current, so their Jacobian rows are the negated
    linear body Jacobian. Orientation rows hold rot_minus(target,
    current), with the angular Jacobian transported into the target
    frame and through the log map so the linearization stays
    first-order exact away from zero error.
    """
    poses = robot_fk(model, q)
    e_rows, j_rows, w_rows = [], [], []
    for task in tasks:
        body = task.body if isinstance(task.body, int) else model.body_index(task.body)
        jac = None
        if task.position_target is not None and task.position_weight > 0.0:
            jac = body_jacobian(model, q, body, poses)
            e_rows.append(np.asarray(task.position_target, float) - poses.positions[body])
            j_rows.append(-jac[0:3])
            w_rows.extend([task.position_weight] * 3)
        if task.orientation_target is not None and task.orientation_weight > 0.0:
            if jac is None:
                jac = body_jacobian(model, q, body, poses)
            target = np.asarray(task.orientation_target, float)
            e_rot = rot_minus(target, poses.rotations[body])
            transport = left_jacobian_inv(e_rot) @ target.T
            e_rows.append(e_rot)
            j_rows.append(transport @ jac[3:6])
            w_rows.extend([task.orientation_weight] * 3)
    width = 6 + model.n_joints
    if not e_rows:
        return np.zeros(0), np.zeros((0, width)), np.zeros(0)
    return np.concatenate(e_rows), np.vstack(j_rows), np.array(w_rows)


def task_value(e, weights):
    return float(e @ (weights * e))


def step_bounds(model, q, dt):
    """Velocity bounds that keep `q + v dt` inside the joint limits."""
    n = 6 + model.n_joints
    lower = np.full(n, -np.inf)
    upper = np.full(n, np.inf)
    lower[6:] = (model.lower - q.joint_values) / dt
    upper[6:] = (model.upper - q.joint_values) / dt
    return lower, upper


def solve_step(e, jac, weights, lower, upper, damping):
    """One QP solve; deterministic for identical inputs."""
    jw = jac * weights[:, None]
    H = jw.T @ jac
    H[np.diag_indices_from(H)] += damping
    g = jw.T @ e
    return _solve_box_qp(H, g, lower, upper)


def _solve_box_qp(H, g, lower, upper):
    """min 1/2 x'Hx + g'x s.t. lower <= x <= upper, H positive definite.

    Primal active set: solve the equality-constrained problem on the
    free coordinates, walk toward it until a bound blocks, and release
    active bounds whose multiplier has the wrong sign. Iteration order
    is fixed, so ties break deterministically.
    """
    n = g.size
    x = np.clip(np.zeros(n), lower, upper)
    state = np.zeros(n, dtype=int)  # 0 free, -1 at lower, +1 at upper
    state[x <= lower] = -1
    state[x >= upper] = 1
    tol = 1e-10 * (1.0 + float(np.abs(g).max()) if n else 1.0)

    grad = g.copy()
    for _ in range(max(24, 4 * n)):
        free = state == 0
        target = x.copy()
        if free.any():
            clamped = ~free
            rhs = -(g[free] + H[np.ix_(free, clamped)] @ x[clamped])
            try:
                target[free] = np.linalg.solve(H[np.ix_(free, free)], rhs)
            except np.linalg.LinAlgError:
                raise SolverError(
                    "singular reduced system in box QP (damping too small?)",
                    residual=float(np.linalg.norm(grad)),
                ) from None
        d = target - x

        alpha, hit, hit_side = 1.0, -1, 0
        for i in np.nonzero(free)[0]:
            if d[i] > 0.0 and np.isfinite(upper[i]):
                a = (upper[i] - x[i]) / d[i]
                if a < alpha:
                    alpha, hit, hit_side = a, i, 1
            elif d[i] < 0.0 and np.isfinite(lower[i]):
                a = (lower[i] - x[i]) / d[i]
                if a < alpha:
                    alpha, hit, hit_side = a, i, -1
        x = x + alpha * d
        if hit >= 0:
            x[hit] = upper[hit] if hit_side > 0 else lower[hit]
            state[hit] = hit_side
            continue

        grad = H @ x + g
        worst, worst_v = -1, tol
        for i in np.nonzero(state != 0)[0]:
            v = -grad[i] if state[i] < 0 else grad[i]
            # at a lower bound the gradient must point up, at an upper
            # bound down; v > 0 means the bound is holding x back
            if v > worst_v:
                worst, worst_v = i, v
        if worst < 0:
            return x
        state[worst] = 0

    raise SolverError(
        "box QP active set exceeded its iteration budget",
        residual=float(np.linalg.norm(H @ x + g)),
    )


def integrate(model, q, qdot, dt):
    """Apply a tangent step: world-frame twist on the base, clamped
    increments on the joints. The clamp is a safety net; the step
    bounds already keep in-range motions inside the limits."""
    quat = quat_mul(so3_exp_quat(qdot[3:6] * dt), q.root_orientation)
    return GeneralizedCoords(
        root_position=q.root_position + qdot[0:3] * dt,
        root_orientation=quat_normalize(quat),
        joint_values=np.clip(q.joint_values + qdot[6:] * dt, model.lower, model.upper),
    )


def solve_to_convergence(model, q, tasks, params=None):
    """Iterate solve_step/integrate until the value change drops below
    the threshold or the iteration cap is reached.

    Returns (q, iterations_used, final_value). With `return_best` the
    lowest-value iterate seen is returned instead of the last one.
    """
    if params is None:
        params = SolverParams()
    e, jac, weights = stack_tasks(model, q, tasks)
    value = task_value(e, weights)
    best_q, best_value = q, value
    iterations = 0
    for it in range(1, params.max_iterations + 1):
        lower, upper = step_bounds(model, q, params.dt)
        qdot = solve_step(e, jac, weights, lower, upper, params.damping)
        q = integrate(model, q, qdot, params.dt)
        e, jac, weights = stack_tasks(model, q, tasks)
        new_value = task_value(e, weights)
        iterations = it
        if new_value < best_value:
            best_q, best_value = q, new_value
        if abs(new_value - value) < params.value_change_threshold:
            value = new_value
            break
        value = new_value
    if params.return_best and best_value < value:
        return best_q, iterations, best_value
    return q, iterations, value
