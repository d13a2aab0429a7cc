"""Step-size sweep on the bundled walk.

The per-iteration step fraction trades wall-clock speed against how
far each frame descends before the iteration cap. This prints
throughput and tracking error across a few settings to ground the
shipped default of 0.5.

    python scripts/benchmark_solver.py [--frames N]
"""

import argparse
import json
import time
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parents[1]

from demo_retarget import tracking_summary  # noqa: E402
from retargetkit import (  # noqa: E402
    load_config,
    load_robot,
    parse_bvh,
    parse_config,
    retarget_sequence,
)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--assets", type=Path, default=ROOT / "assets")
    ap.add_argument("--frames", type=int, default=None,
                    help="truncate the clip for quicker sweeps")
    args = ap.parse_args()

    if not (args.assets / "walk.bvh").exists():
        import make_demo_assets
        make_demo_assets.main(args.assets)

    model = load_robot(args.assets / "lab29.json")
    skeleton, motion = parse_bvh((args.assets / "walk.bvh").read_text())
    if args.frames:
        motion.root_translation = motion.root_translation[:args.frames]
        motion.rotations = motion.rotations[:args.frames]
    base_doc = parse_config((args.assets / "config.json").read_text())

    print(f"{motion.n_frames} frames, {model.n_joints} joints")
    print(f"{'dt':>5} {'frames/s':>9} {'mean iters':>11} "
          f"{'mean err (mm)':>14} {'worst (mm)':>11}")
    for dt in (0.1, 0.25, 0.5, 1.0):
        doc = json.loads(json.dumps(base_doc))
        doc["solver"] = {"stage1": {"dt": dt}, "stage2": {"dt": dt}}
        config = load_config(doc, skeleton, model)
        counts = []
        start = time.perf_counter()
        result = retarget_sequence(skeleton, motion, model, config,
                                   iteration_counts=counts)
        elapsed = time.perf_counter() - start
        mean_err, max_err = tracking_summary(skeleton, motion, model,
                                             config, result)
        iters = float(np.mean(counts))
        print(f"{dt:>5.2f} {motion.n_frames / elapsed:>9.1f} {iters:>11.1f} "
              f"{mean_err * 1000:>14.2f} {max_err * 1000:>11.2f}")


if __name__ == "__main__":
    main()
