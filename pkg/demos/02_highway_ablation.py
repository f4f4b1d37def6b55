"""Full pipeline against its ablations on the highway preset.

Four configurations register the same ten frames:
  full    velocity filter + dynamic point prediction + Doppler residual
  w/o VF  every point treated as static
  w/o DPP moving points detected and thrown away
  w/o DR  geometry-only registration

    python3 demos/02_highway_ablation.py [n_seeds]
"""

import sys
import time

import numpy as np

from doppler_odom import PipelineConfig, Trajectory, relative_pose_errors, run_odometry
from doppler_odom.synth import generate_sequence, scene_preset

n_seeds = int(sys.argv[1]) if len(sys.argv) > 1 else 3
configs = {
    "full": PipelineConfig(),
    "w/o VF": PipelineConfig().ablate("vf"),
    "w/o DPP": PipelineConfig().ablate("dpp"),
    "w/o DR": PipelineConfig().ablate("dr"),
}
rows = {name: [] for name in configs}
warm, _ = generate_sequence(scene_preset("highway", 0).with_(points_per_scan=2000))
run_odometry(warm[:3])  # first-call overhead out of the timings
for seed in range(n_seeds):
    scans, gt = generate_sequence(scene_preset("highway", seed))
    truth = Trajectory(gt.timestamps, gt.poses)
    for name, cfg in configs.items():
        t0 = time.perf_counter()
        res = run_odometry(scans, cfg)
        elapsed = time.perf_counter() - t0
        rte, rre = relative_pose_errors(res.trajectory, truth)
        rows[name].append((rte.mean(), rre.mean(), np.mean([s.iterations for s in res.stats]),
                           (len(scans) - 1) / elapsed))

print(f"highway preset, {n_seeds} seed(s), 10 frames each\n")
print(f"{'config':8s} {'RTE [m]':>9s} {'RRE [deg]':>10s} {'iters':>6s} {'fps':>6s}")
for name, r in rows.items():
    r = np.array(r).mean(axis=0)
    print(f"{name:8s} {r[0]:9.4f} {r[1]:10.4f} {r[2]:6.1f} {r[3]:6.1f}")
print("\nThe vehicles travel with the ego car, so w/o VF treats points that barely")
print("move in the sensor frame as static scenery, and w/o DPP throws away up to")
print("half of each scan.  Single seeds are noisy; the acceptance suite runs 20.")
print("The Doppler residual (w/o DR) changes little on this preset.")
