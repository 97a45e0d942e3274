"""Command-line entry point: ``lidarodom {odometry,ground,synth,eval}``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np
import yaml

from lidarodom import __version__
from lidarodom.errors import DegeneratePlaneError, InvalidInputError, LidarOdomError, ParseError
from lidarodom.evaluate import (
    Trajectory,
    final_drift,
    read_trajectory,
    write_metrics_csv,
    write_trajectory,
)
from lidarodom.ground import (
    extract_ground_clustered,
    extract_ground_gpf_image,
    extract_ground_lego,
    mask_metrics,
)
from lidarodom.io import read_scan, write_bin, write_pgm
from lidarodom.lidar_model import load_sensor, project
from lidarodom.pipeline import GROUND_METHODS, STAGES, Odometry, PipelineConfig, config_from_dict
from lidarodom.synth import (
    generate_trajectory_dataset,
    load_world,
    trajectory_from_dict,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
SCAN_SUFFIXES = (".bin", ".pcd")
SCAN_RATE_HZ = 10.0
GROUND_METRIC_FIELDS = ["scan_id", "method", "precision", "recall", "iou", "runtime_ms"]


class UsageError(Exception):
    pass


class NumericalError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# config
# ---------------------------------------------------------------------------


def _parse_override(text: str) -> tuple[list[str], object]:
    key, sep, value = text.partition("=")
    if not sep or not key:
        raise UsageError(f"--set expects key=value, got {text!r}")
    return key.split("."), yaml.safe_load(value)


def _nest(path: list[str], value) -> dict:
    out = value
    for k in reversed(path):
        out = {k: out}
    return out


def _merge(a: dict, b: dict) -> dict:
    out = dict(a)
    for k, v in b.items():
        out[k] = _merge(out[k], v) if isinstance(v, dict) and isinstance(out.get(k), dict) else v
    return out


def resolve_config(args) -> tuple[PipelineConfig, dict]:
    """Pipeline config from (in order) defaults, ``--config`` YAML, ``--sensor``, ``--ground``, ``--set``."""
    data: dict = {}
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise InvalidInputError(f"config file not found: {path}")
        try:
            data = yaml.safe_load(path.read_text()) or {}
        except yaml.YAMLError as exc:
            raise ParseError(f"invalid YAML: {exc}", path=path) from None
        if not isinstance(data, dict):
            raise ParseError("config must be a mapping", path=path)
    run = {k: data.pop(k) for k in ("seed", "timestamps") if k in data}
    sensor_spec = data.pop("sensor", None)
    if args.sensor:
        sensor_spec = args.sensor
    for text in args.set or []:
        data = _merge(data, _nest(*_parse_override(text)))
    if args.ground:
        data["ground_method"] = args.ground
    if isinstance(sensor_spec, str):
        data["sensor"] = load_sensor(sensor_spec)
    elif isinstance(sensor_spec, dict):
        data["sensor"] = sensor_spec
    try:
        cfg = config_from_dict(data)
    except (TypeError, InvalidInputError) as exc:
        raise UsageError(str(exc)) from None
    return cfg, run


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def list_scans(scan_dir: Path) -> list[Path]:
    if not scan_dir.is_dir():
        raise InvalidInputError(f"scan directory not found: {scan_dir}")
    return sorted(p for p in scan_dir.iterdir() if p.suffix.lower() in SCAN_SUFFIXES)


def read_timestamps(path: Path, n: int) -> np.ndarray:
    vals = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        try:
            vals.append(float(s.split()[0]))
        except ValueError:
            raise ParseError("bad timestamp", line=lineno, path=path) from None
    if len(vals) != n:
        raise ParseError(f"{len(vals)} timestamps for {n} scans", path=path)
    return np.array(vals)


def cmd_odometry(args) -> int:
    cfg, run = resolve_config(args)
    seed = args.seed if args.seed is not None else int(run.get("seed", 0))
    scans = list_scans(Path(args.scans))
    if len(scans) < 2:
        raise InvalidInputError(f"need at least 2 scans in {args.scans}, found {len(scans)}")
    ts_path = Path(args.timestamps) if args.timestamps else Path(args.scans) / "timestamps.txt"
    stamps = read_timestamps(ts_path, len(scans)) if ts_path.is_file() else np.arange(len(scans)) / SCAN_RATE_HZ
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    odo = Odometry(cfg)
    timing_rows = []
    for k, path in enumerate(scans):
        try:
            cloud = read_scan(path)
        except (OSError, ParseError) as exc:
            raise ParseError(f"cannot read scan: {exc}", path=path) from None
        t0 = time.perf_counter()
        pose = odo.process(cloud)
        total = time.perf_counter() - t0
        if not (np.all(np.isfinite(pose.translation)) and np.all(np.isfinite(pose.rotation))):
            raise NumericalError(f"non-finite pose at scan {path.name}")
        fr = odo.frames[-1]
        timing_rows.append({"scan": path.name, **{s: f"{fr.timings[s] * 1000:.3f}" for s in STAGES}, "total": f"{total * 1000:.3f}"})
    write_trajectory(Trajectory(stamps, odo.poses), out / "trajectory.txt")
    with open(out / "timing.csv", "w", newline="") as f:
        w = csv.DictWriter(f, ["scan", *STAGES, "total"])
        w.writeheader()
        w.writerows(timing_rows)
    if args.save_map:
        odo.fmap.to_pcd(out / "map.pcd")
    manifest = {
        "command": "odometry",
        "version": __version__,
        "seed": seed,
        "scans": [p.name for p in scans],
        "timestamps": "sidecar" if ts_path.is_file() else f"index / {SCAN_RATE_HZ:g} Hz",
        "config": cfg.to_dict(),
        "warnings": {
            "odometry_fallbacks": odo.n_odometry_fallbacks,
            "map_refinement_skipped": odo.n_map_warnings,
        },
        "keyframes": odo.fmap.n_keyframes,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    print(f"{len(scans)} poses -> {out / 'trajectory.txt'}")
    return EXIT_OK


def _truth_mask(truth_csv: Path, image) -> np.ndarray:
    """Ground truth per range-image cell from a per-point truth CSV (``ground`` column, point order)."""
    with open(truth_csv, newline="") as f:
        rows = list(csv.DictReader(f))
    if not rows or "ground" not in rows[0]:
        raise ParseError("truth CSV needs a 'ground' column", path=truth_csv)
    flags = np.array([r["ground"] in ("1", "true", "True") for r in rows])
    if len(flags) <= image.index.max():
        raise ParseError(f"truth CSV has {len(flags)} rows, fewer than the scan's points", path=truth_csv)
    mask = np.zeros(image.shape, dtype=bool)
    mask[image.valid] = flags[image.index[image.valid]]
    return mask


def cmd_ground(args) -> int:
    cfg, _ = resolve_config(args)
    scan = Path(args.scan)
    if not scan.is_file():
        raise ParseError("scan file not found", path=scan)
    image = project(read_scan(scan), cfg.sensor)
    t0 = time.perf_counter()
    if cfg.ground_method == "clustered":
        mask = extract_ground_clustered(image, cfg.ground)
    elif cfg.ground_method == "lego":
        mask = extract_ground_lego(image, cfg.lego_angle_threshold_deg)
    else:
        mask = extract_ground_gpf_image(image, cfg.gpf)
    runtime_ms = (time.perf_counter() - t0) * 1000
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_pgm(out / f"{scan.stem}_{cfg.ground_method}.pgm", mask)
    truth = Path(args.truth) if args.truth else None
    if truth is None:
        candidate = scan.with_name(scan.stem + "_truth.csv")
        truth = candidate if candidate.is_file() else None
    row = {"scan_id": scan.stem, "method": cfg.ground_method, "runtime_ms": f"{runtime_ms:.3f}"}
    if truth is not None:
        m = mask_metrics(mask, _truth_mask(truth, image))
        row.update({k: f"{m[k]:.6f}" for k in ("precision", "recall", "iou")})
        metrics = out / "ground_metrics.csv"
        new = not metrics.exists()
        with open(metrics, "a", newline="") as f:
            w = csv.DictWriter(f, GROUND_METRIC_FIELDS)
            if new:
                w.writeheader()
            w.writerow(row)
    print(f"n_ground={int(mask.sum())} " + " ".join(f"{k}={row[k]}" for k in GROUND_METRIC_FIELDS if k in row))
    return EXIT_OK


def write_point_truth(path: Path, st) -> None:
    """Per-point truth CSV aligned with the scan's point order."""
    table = np.empty((len(st.cloud), 7), dtype=object)
    table[:, 0] = np.arange(len(st.cloud))
    table[:, 1], table[:, 2], table[:, 3] = st.row, st.col, st.surface_id
    table[:, 4], table[:, 5], table[:, 6] = st.tag, st.is_ground.astype(int), st.range_true
    np.savetxt(path, table, fmt="%d,%d,%d,%d,%s,%d,%.9f", header="index,row,col,surface_id,tag,ground,range_true", comments="")


def cmd_synth(args) -> int:
    world = load_world(args.world)
    sensor = load_sensor(args.sensor or "vlp16")
    if args.waypoints:
        wp_path = Path(args.waypoints)
        if wp_path.suffix.lower() in (".yaml", ".yml"):
            waypoints = trajectory_from_dict(yaml.safe_load(wp_path.read_text()), source=wp_path)
        else:
            waypoints = read_trajectory(wp_path).poses
    else:
        if world.trajectory is None:
            raise UsageError(f"world {world.name!r} has no trajectory; pass --waypoints")
        traj = dict(world.trajectory)
        if args.n is not None:
            traj["n"] = args.n
        waypoints = trajectory_from_dict(traj)
    if len(waypoints) < 2:
        raise InvalidInputError("need at least 2 waypoints")
    out = Path(args.out)
    scan_dir = out / "scans"
    scan_dir.mkdir(parents=True, exist_ok=True)
    truths = generate_trajectory_dataset(world, waypoints, sensor, None, args.noise, args.seed)
    for k, st in enumerate(truths):
        name = f"{k:06d}"
        write_bin(scan_dir / f"{name}.bin", st.cloud)
        if not args.no_point_truth:
            write_point_truth(scan_dir / f"{name}_truth.csv", st)
    stamps = np.arange(len(truths)) / SCAN_RATE_HZ
    write_trajectory(Trajectory(stamps, [st.sensor_pose for st in truths]), out / "truth.txt")
    manifest = {
        "command": "synth",
        "version": __version__,
        "world": world.name,
        "seed": args.seed,
        "noise_sigma_m": args.noise,
        "sensor": sensor.to_dict(),
        "n_scans": len(truths),
        "seed_rule": "scan k draws its noise from numpy default_rng([seed, k])",
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    print(f"{len(truths)} scans -> {scan_dir}")
    return EXIT_OK


def cmd_eval(args) -> int:
    est = read_trajectory(args.estimate)
    truth = read_trajectory(args.truth)
    if len(est) == 0 or len(truth) == 0:
        raise InvalidInputError("empty trajectory")
    r = final_drift(est, truth, align=not args.no_align)
    print(f"DISTANCE (m)  {r.distance_m:.3f}")
    print(f"DRIFT (m)     {r.drift_m:.3f}")
    print(f"PERCENTAGE    {r.percentage:.4f}%")
    print(f"horizontal drift {r.drift_horizontal_m:.3f} m ({r.percentage_horizontal:.4f}%)")
    if r.n_unpaired:
        print(f"unpaired poses skipped: {r.n_unpaired}")
    if args.metrics:
        row = {"run_id": args.run_id, "method": args.method, "distance_m": f"{r.distance_m:.6f}", "drift_m": f"{r.drift_m:.6f}", "percentage": f"{r.percentage:.6f}"}
        write_metrics_csv(args.metrics, [row])
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _pipeline_flags(p):
    p.add_argument("--config", help="YAML file with pipeline parameters")
    p.add_argument("--sensor", help="sensor preset (vlp16, hdl64e) or YAML file")
    p.add_argument("--ground", choices=GROUND_METHODS, help="ground extraction method")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override, e.g. feature.c_threshold=0.03")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lidarodom", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)

    p = sub.add_parser("odometry", help="estimate a trajectory from a directory of scans")
    p.add_argument("--scans", required=True, help="directory of .bin/.pcd scans (filename order)")
    p.add_argument("--out", required=True)
    p.add_argument("--timestamps", help="one timestamp per scan (default: <scans>/timestamps.txt or index/10 Hz)")
    p.add_argument("--seed", type=int)
    p.add_argument("--save-map", action="store_true", help="also write the feature map as map.pcd")
    _pipeline_flags(p)
    p.set_defaults(func=cmd_odometry)

    p = sub.add_parser("ground", help="run one ground extractor on one scan")
    p.add_argument("--scan", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--truth", help="per-point truth CSV (default: <scan>_truth.csv when present)")
    _pipeline_flags(p)
    p.set_defaults(func=cmd_ground)

    p = sub.add_parser("synth", help="simulate a scan dataset from a scene")
    p.add_argument("--world", required=True, help="scene name or YAML file")
    p.add_argument("--out", required=True)
    p.add_argument("--waypoints", help="TUM trajectory or YAML trajectory spec (default: the scene's)")
    p.add_argument("--n", type=int, help="override the scene trajectory's pose count")
    p.add_argument("--noise", type=float, default=0.0, help="range noise sigma in meters")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sensor")
    p.add_argument("--no-point-truth", action="store_true", help="skip the per-point truth CSVs")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("eval", help="final drift of an estimate against ground truth")
    p.add_argument("--estimate", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--no-align", action="store_true", help="skip start-pose alignment")
    p.add_argument("--metrics", help="write a metrics CSV row here")
    p.add_argument("--run-id", default="run")
    p.add_argument("--method", default="clustered")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # --help and --version exit 0; parse errors exit with EXIT_USAGE
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"lidarodom: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalError, DegeneratePlaneError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"lidarodom: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (LidarOdomError, OSError, KeyError, ValueError) as exc:
        print(f"lidarodom: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
