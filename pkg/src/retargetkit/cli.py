"""Command-line front end for batch retargeting and motion analysis.

Three subcommands:

* retarget: BVH in, robot motion file out, with a run manifest next to
  the output recording inputs, config digest, and timing.
* analyze: run artifact detectors (and tracking errors against a
  reference) over a robot motion file, emit a quality report.
* info: one-screen summary of a BVH or robot file.

Exit codes are stable so CI can branch on them: 0 success, 2 validation,
3 parse or I/O, 4 solver failure, 5 quality gate tripped. Diagnostics go
to stderr; data only ever goes to the requested output.
"""

import argparse
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

from . import __version__
from .bvh import AXIS_CONVENTIONS, parse_bvh, skeleton_height
from .errors import ParseError, SolverError, ValidationError
from .metrics import GeometryConfig, load_geometry, quality_report
from .motionfile import load_motion, save_motion
from .retarget import load_config, parse_config, retarget_sequence
from .robot import load_robot

MANIFEST_SCHEMA = "run-manifest/1"

_DETECTORS = ("penetration", "self_intersection", "foot_sliding",
              "velocity_spikes")


def _read_text(path):
    with open(path, "r", encoding="utf-8") as fh:
        return fh.read()


def _read_bytes(path):
    with open(path, "rb") as fh:
        return fh.read()


def cmd_retarget(bvh_path, robot_path, config_path, out_path, flags):
    """Retarget one BVH file and write motion + manifest."""
    model = load_robot(robot_path)
    skeleton, motion = parse_bvh(_read_text(bvh_path),
                                 unit_scale=flags.unit_scale,
                                 axis=flags.axis)
    config_bytes = _read_bytes(config_path)
    config = load_config(parse_config(config_bytes.decode("utf-8")),
                         skeleton, model)

    iteration_counts = []
    start = time.perf_counter()
    result = retarget_sequence(skeleton, motion, model, config,
                               iteration_counts=iteration_counts)
    elapsed = time.perf_counter() - start

    save_motion(result, model, out_path, fmt=flags.format)
    manifest = {
        "schema": MANIFEST_SCHEMA,
        "tool_version": __version__,
        "inputs": {"bvh": bvh_path, "robot": robot_path,
                   "config": config_path},
        "output": out_path,
        "config_digest": hashlib.sha256(config_bytes).hexdigest(),
        "duration_s": elapsed,
        "frames": result.n_frames,
        "throughput_fps": result.n_frames / elapsed if elapsed > 0 else 0.0,
        "stage_iterations": [list(pair) for pair in iteration_counts],
    }
    with open(out_path + ".manifest.json", "w", encoding="utf-8",
              newline="\n") as fh:
        json.dump(manifest, fh, indent=1)
        fh.write("\n")
    print(f"{bvh_path}: {result.n_frames} frames -> {out_path} "
          f"({manifest['throughput_fps']:.1f} fps)", file=sys.stderr)
    return 0


def _retarget_job(job):
    """Worker for --jobs: returns (input path, exit code, message)."""
    bvh_path, robot_path, config_path, out_path, flags = job
    try:
        cmd_retarget(bvh_path, robot_path, config_path, out_path, flags)
        return bvh_path, 0, ""
    except (ValidationError, ParseError, SolverError, OSError) as exc:
        return bvh_path, _exit_code(exc), str(exc)


def cmd_analyze(ref_path, actual_path, robot_path, geom_path, out_path,
                fail_on):
    """Detector pass (and tracking errors when two motions are given)."""
    model = load_robot(robot_path)
    ref = load_motion(ref_path, model)
    geom = load_geometry(_read_text(geom_path), model) if geom_path \
        else GeometryConfig()
    if actual_path:
        actual = load_motion(actual_path, model)
        report = quality_report(model, actual, geom, reference=ref)
    else:
        report = quality_report(model, ref, geom)

    text = json.dumps(report, indent=1) + "\n"
    if out_path:
        with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)

    status = 0
    for name, budget in fail_on:
        count = report["detectors"][name]["flagged_frames"]
        if count > budget:
            print(f"gate: {name} flagged {count} frames (budget {budget})",
                  file=sys.stderr)
            status = 5
    return status


def cmd_info(path, flags):
    """Print a summary of a BVH or robot file."""
    if path.endswith(".bvh"):
        skeleton, motion = parse_bvh(_read_text(path),
                                     unit_scale=flags.unit_scale,
                                     axis=flags.axis)
        fps = 1.0 / motion.frame_dt if motion.frame_dt > 0 else 0.0
        print(f"BVH: {path}")
        print(f"  joints: {skeleton.n_joints}")
        print(f"  frames: {motion.n_frames}")
        print(f"  frame time: {motion.frame_dt:g} s ({fps:g} fps)")
        print(f"  duration: {motion.n_frames * motion.frame_dt:.1f} s")
        print(f"  rest height: {skeleton_height(skeleton):.3f} m")
        return 0
    model = load_robot(path)
    print(f"robot: {model.name}")
    print(f"  bodies: {model.n_bodies}")
    print(f"  joints: {model.n_joints}")
    if model.n_joints:
        width = max(len(n) for n in model.joint_names)
        for joint in model.joints:
            print(f"  {joint.name:<{width}}  "
                  f"[{joint.lower: .4f}, {joint.upper: .4f}]  "
                  f"default {joint.default: .4f}")
    return 0


def _exit_code(exc):
    if isinstance(exc, ValidationError):
        return 2
    if isinstance(exc, SolverError):
        return 4
    # ParseError and unreadable/missing files share the parse code
    return 3


def _parse_fail_on(values):
    parsed = []
    for raw in values or []:
        name, _, budget = raw.partition("=")
        name = name.replace("-", "_")
        if name not in _DETECTORS:
            raise ValidationError(
                f"unknown detector '{name}' (choose from "
                f"{', '.join(_DETECTORS)})")
        try:
            parsed.append((name, int(budget) if budget else 0))
        except ValueError:
            raise ValidationError(
                f"bad budget in '--fail-on {raw}'") from None
    return parsed


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="retargetkit",
        description="Retarget human BVH motion onto humanoid robots.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    ret = sub.add_parser("retarget", help="retarget BVH files to a robot")
    ret.add_argument("bvh", nargs="+", help="input BVH file(s)")
    ret.add_argument("--robot", required=True, help="robot description file")
    ret.add_argument("--config", required=True, help="retarget config JSON")
    ret.add_argument("--out", required=True,
                     help="output motion file, or directory when "
                          "retargeting several inputs")
    ret.add_argument("--format", choices=("csv", "json"), default="csv")
    ret.add_argument("--unit-scale", type=float, default=0.01,
                     help="BVH length unit in meters (default cm)")
    ret.add_argument("--axis", choices=sorted(AXIS_CONVENTIONS),
                     default="y-up-to-z-up")
    ret.add_argument("--jobs", type=int, default=1,
                     help="parallel workers across input files")
    ret.add_argument("--seedless", action="store_true",
                     help="assert the run uses no randomness (always true)")

    ana = sub.add_parser("analyze", help="quality report for a robot motion")
    ana.add_argument("motion", help="reference motion file")
    ana.add_argument("--actual",
                     help="actual motion; enables tracking errors and "
                          "runs detectors on it instead")
    ana.add_argument("--robot", required=True)
    ana.add_argument("--geometry", help="geometry JSON for detectors")
    ana.add_argument("--out", help="report path (default stdout)")
    ana.add_argument("--fail-on", action="append", metavar="DETECTOR[=N]",
                     help="exit 5 when the detector flags more than N "
                          "frames (N defaults to 0)")

    inf = sub.add_parser("info", help="summarize a BVH or robot file")
    inf.add_argument("path")
    inf.add_argument("--unit-scale", type=float, default=0.01)
    inf.add_argument("--axis", choices=sorted(AXIS_CONVENTIONS),
                     default="y-up-to-z-up")
    return parser


def _run_retarget(args):
    if args.jobs < 1:
        raise ValidationError("--jobs must be at least 1")
    multi = len(args.bvh) > 1
    if multi:
        os.makedirs(args.out, exist_ok=True)
    jobs = []
    for bvh_path in args.bvh:
        if multi:
            stem = os.path.splitext(os.path.basename(bvh_path))[0]
            out_path = os.path.join(args.out, stem + "." + args.format)
        else:
            out_path = args.out
        jobs.append((bvh_path, args.robot, args.config, out_path, args))

    if len(jobs) == 1 or args.jobs == 1:
        results = [_retarget_job(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_retarget_job, jobs))

    status = 0
    for path, code, message in results:
        if code != 0:
            print(f"error: {path}: {message}", file=sys.stderr)
            status = status or code
    return status


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "retarget":
            return _run_retarget(args)
        if args.command == "analyze":
            fail_on = _parse_fail_on(args.fail_on)
            return cmd_analyze(args.motion, args.actual, args.robot,
                               args.geometry, args.out, fail_on)
        return cmd_info(args.path, args)
    except (ValidationError, ParseError, SolverError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code(exc)


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
