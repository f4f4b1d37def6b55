"""Command-line front end.

    doppler-odom synth <preset|scene.yaml> --out DIR [--seed N] [--frames N]
    doppler-odom register SOURCE.ply TARGET.ply [--config F] [--init POSE] [--ablate vf|dpp|dr ...]
    doppler-odom odom SCAN_DIR --out traj.tum [--config F] [--ablate ...] [--stats stats.csv]
    doppler-odom eval EST.tum GT.tum --out report.csv [--summary summary.csv]

Exit codes: 0 success, 1 usage error, 2 data error, 3 registration did not
converge (``register`` only).
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import load_config
from .errors import ConfigError, DopplerOdomError, NoOverlapError
from .evaluation import Trajectory, relative_pose_errors, summarize
from .formats import (
    format_tum_line, parse_tum_line, read_doppler_ply, read_tum, write_csv, write_doppler_ply,
    write_summary_csv, write_tum,
)
from .geometry import Pose
from .pipeline import OdometryState, PipelineConfig, process_frame_pair, run_odometry, scan_paths
from .synth import generate_sequence, load_scene_spec, preset_names, scene_preset

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NOCONV = 0, 1, 2, 3

log = logging.getLogger("doppler_odom")


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}")


def _config(args) -> PipelineConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else PipelineConfig()
    if getattr(args, "ablate", None):
        cfg = cfg.ablate(*args.ablate)
    return cfg


def _parse_pose(text: str) -> Pose:
    tok = text.replace(",", " ").split()
    if len(tok) == 7:
        tok = ["0"] + tok
    try:
        return parse_tum_line(" ".join(tok))[1]
    except ValueError as exc:
        raise _UsageError(f"--init: {exc}") from None


def cmd_synth(args) -> int:
    if args.scene in preset_names():
        spec = scene_preset(args.scene, args.seed if args.seed is not None else 0)
    elif Path(args.scene).is_file():
        spec = load_scene_spec(args.scene)
        if args.seed is not None:
            spec = spec.with_(seed=args.seed)
    else:
        raise _UsageError(f"{args.scene!r} is neither a preset ({', '.join(preset_names())}) nor a scene file")
    if args.frames is not None:
        if args.frames < 1:
            raise _UsageError("--frames must be >= 1")
        spec = spec.with_(ego_segments=_truncate(spec.ego_segments, args.frames))
    scans, gt = generate_sequence(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for scan, labels in zip(scans, gt.labels):
        write_doppler_ply(scan, out / f"{round(scan.timestamp * 1e9):019d}.ply", labels=labels)
    write_tum(Trajectory(gt.timestamps, gt.poses), out / "groundtruth.tum")
    with open(out / "twists.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp", "wx", "wy", "wz", "vx", "vy", "vz"])
        for t, tw in zip(gt.timestamps, gt.twists):
            w.writerow([repr(float(t))] + [repr(float(x)) for x in tw.as_vector()])
    print(f"scene={spec.name} seed={spec.seed} frames={len(scans)} out={out}")
    return EXIT_OK


def _truncate(segments, n):
    out, left = [], n
    for count, tw in segments:
        take = min(count, left)
        if take > 0:
            out.append((take, tw))
        left -= take
    if left > 0:
        out.append((left, segments[-1][1]))
    return tuple(out)


def cmd_register(args) -> int:
    cfg = _config(args)
    init = _parse_pose(args.init) if args.init else None
    src = read_doppler_ply(args.source, range_min=cfg.range_min, range_max=cfg.range_max)
    tgt = read_doppler_ply(args.target, range_min=cfg.range_min, range_max=cfg.range_max)
    state = OdometryState()
    T, st = process_frame_pair(src, tgt, state, cfg, init=init)
    q = T.quaternion()
    lines = {
        "converged": str(st.converged).lower(),
        "iterations": st.iterations,
        "dt": repr(tgt.timestamp - src.timestamp),
        "translation": " ".join(repr(float(x)) for x in T.translation),
        "quaternion_xyzw": " ".join(repr(float(x)) for x in q),
        "matrix": " ".join(repr(float(x)) for x in T.matrix()[:3].ravel()),
        "translation_norm_m": repr(float(np.linalg.norm(T.translation))),
        "rotation_deg": repr(float(np.degrees(T.rotation_angle()))),
        "cost": repr(st.cost),
        "rms_geometry": repr(st.rms_geometry),
        "rms_doppler": repr(st.rms_doppler),
        "n_source": st.n_source,
        "n_static": st.n_static,
        "n_dynamic": st.n_dynamic,
        "n_clusters": st.n_clusters,
        "ego_velocity": " ".join(repr(x) for x in st.ego_velocity),
        "tum": format_tum_line(tgt.timestamp, T),
    }
    for k, v in lines.items():
        print(f"{k}={v}")
    if not st.converged:
        print("error: registration did not converge", file=sys.stderr)
        return EXIT_NOCONV
    return EXIT_OK


def cmd_odom(args) -> int:
    cfg = _config(args)
    d = Path(args.scan_dir)
    if not d.is_dir():
        raise _UsageError(f"{d} is not a directory")
    paths = scan_paths(d)
    if len(paths) < 2:
        print(f"error: {d} holds {len(paths)} .ply files; need at least 2", file=sys.stderr)
        return EXIT_DATA

    def loader(p):
        return read_doppler_ply(p, range_min=cfg.range_min, range_max=cfg.range_max)

    res = run_odometry(paths, cfg, loader=loader)
    if len(res.trajectory) < 2:
        print("error: fewer than 2 readable scans", file=sys.stderr)
        return EXIT_DATA
    write_tum(res.trajectory, args.out)
    if args.stats:
        _write_stats(res.stats, args.stats)
    n = len(res.stats)
    conv = np.mean([s.converged for s in res.stats])
    iters = np.mean([s.iterations for s in res.stats])
    print(f"frames={n + 1} converged_rate={conv:.4f} mean_iterations={iters:.2f} "
          f"fps={n / res.elapsed_s:.2f} out={args.out}")
    return EXIT_OK


def _write_stats(stats, path):
    keys = ["timestamp", "converged", "fallback", "iterations", "n_source", "n_static", "n_dynamic",
            "n_clusters", "n_noise", "ego_iterations", "cost", "rms_geometry", "rms_doppler"]
    tkeys = ["preprocess", "ego", "dynamics", "registration", "total"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(keys + [f"t_{k}" for k in tkeys])
        for s in stats:
            w.writerow([getattr(s, k) for k in keys] + [s.timings.get(k, "") for k in tkeys])


def cmd_eval(args) -> int:
    est = read_tum(args.est)
    gt = read_tum(args.gt)
    rte, rre = relative_pose_errors(est, gt)
    rep = summarize(rte, rre)
    write_csv(rep, args.out, timestamps=est.timestamps[1:len(rte) + 1])
    if args.summary:
        write_summary_csv(rep, args.summary)
    print(" ".join(f"{k}={v:.6g}" for k, v in rep.headline().items() if np.isfinite(v)))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="doppler-odom", description="Doppler-aided lidar odometry.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true", help="log per-frame warnings")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("synth", help="render a synthetic sequence")
    s.add_argument("scene", help=f"preset ({', '.join(preset_names())}) or scene YAML")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--frames", type=int, help="truncate or extend the ego schedule")
    s.set_defaults(func=cmd_synth)

    abl = dict(nargs="+", choices=["vf", "dpp", "dr"], metavar="{vf,dpp,dr}")

    r = sub.add_parser("register", help="register one scan pair")
    r.add_argument("source")
    r.add_argument("target")
    r.add_argument("--config")
    r.add_argument("--init", help="initial pose 'tx ty tz qx qy qz qw' (optionally led by a timestamp)")
    r.add_argument("--ablate", **abl)
    r.set_defaults(func=cmd_register)

    o = sub.add_parser("odom", help="run odometry over a directory of PLY scans")
    o.add_argument("scan_dir")
    o.add_argument("--out", required=True)
    o.add_argument("--config")
    o.add_argument("--ablate", **abl)
    o.add_argument("--stats", help="per-frame statistics CSV")
    o.set_defaults(func=cmd_odom)

    e = sub.add_parser("eval", help="frame-gap relative pose error")
    e.add_argument("est")
    e.add_argument("gt")
    e.add_argument("--out", required=True)
    e.add_argument("--summary", help="aggregate metrics CSV")
    e.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NoOverlapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOCONV
    except (DopplerOdomError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
