"""Human-to-humanoid motion retargeting toolkit.

Parses BVH motion capture and robot description files, retargets each
frame onto the robot with a two-stage differential IK solve under joint
limits, and scores the result with tracking metrics and artifact
detectors. See the README for the file formats and CLI.
"""

__version__ = "0.1.0"

from .bvh import (
    HumanJoint,
    HumanMotion,
    HumanSkeleton,
    human_fk,
    mat_to_euler,
    parse_bvh,
    rest_pose,
    serialize_bvh,
    skeleton_height,
)
from .errors import ParseError, SolverError, ValidationError
from .ik import (
    IkTask,
    SolverParams,
    integrate,
    solve_step,
    solve_to_convergence,
    stack_tasks,
    step_bounds,
    task_value,
)
from .kinematics import PoseSet, body_jacobian, robot_fk
from .metrics import (
    Capsule,
    GeometryConfig,
    detect_foot_sliding,
    detect_ground_penetration,
    detect_self_intersection,
    detect_velocity_spikes,
    load_geometry,
    quality_report,
    segment_distance,
    tracking_errors,
)
from .motionfile import load_motion, save_motion
from .retarget import (
    PairSpec,
    RetargetConfig,
    RobotMotion,
    align_rest_pose,
    height_normalize,
    load_config,
    parse_config,
    retarget_frame,
    retarget_sequence,
    scale_frame,
)
from .robot import (
    Body,
    GeneralizedCoords,
    Joint,
    RobotModel,
    default_coords,
    load_robot,
    parse_robot,
    tighten_limits,
)

__all__ = [name for name in dir() if not name.startswith("_")]
