"""Command-line frontend: normalize, generate, verify, condition, stats.

Machine-readable JSON lines go to stdout; progress, warnings, and human
tables go to stderr. Exit codes: 0 success, 1 partial or validation
failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import conditions, report
from .conservation import audit_record
from .errors import GeowalkError, ShardError
from .mesh import (
    DEFAULT_X_LENGTH,
    CATEGORIES,
    load_mesh_file,
    normalize_mesh,
    save_obj,
    validate_mesh,
)
from .sampling import (
    DEFAULT_N_DYN,
    DEFAULT_N_SURFACE,
    DEFAULT_N_VOLUME,
    DEFAULT_TAU,
    DEFAULT_V_MAX,
    SamplerConfig,
    SeedPlan,
)
from .shards import (
    MANIFEST_NAME,
    DatasetWriter,
    Manifest,
    file_checksum,
    read_manifest,
    read_shard_file,
    write_manifest,
)
from .walk import CatalogEntry, generate_dataset

WORKERS_ENV = "GEOWALK_WORKERS"
SEED_ENV = "GEOWALK_SEED"

_MODE_FLAGS = {"clamped": "ray_clamped", "literal": "literal"}
_FEATURE_FLAGS = {"vecdist": "vector_distance", "sdf": "sdf"}


def _err(message: str) -> None:
    print(message, file=sys.stderr)


def _emit(obj: dict) -> None:
    print(json.dumps(obj), file=sys.stdout)


def _resolve_workers(flag: int | None) -> int:
    if flag is not None:
        return max(1, flag)
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            _err(f"ignoring non-integer {WORKERS_ENV}={env!r}")
    return os.cpu_count() or 1


def _resolve_seed(flag: int | None) -> int:
    if flag is not None:
        return flag
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            return int(env)
        except ValueError:
            _err(f"ignoring non-integer {SEED_ENV}={env!r}")
    return 0


def _mesh_files(directory: Path) -> list[Path]:
    return sorted(p for p in directory.iterdir() if p.suffix.lower() in (".obj", ".stl"))


def cmd_normalize(args: argparse.Namespace) -> int:
    in_dir = Path(args.in_dir)
    out_dir = Path(args.out_dir)
    if not in_dir.is_dir():
        _err(f"input directory does not exist: {in_dir}")
        return 1
    files = _mesh_files(in_dir)
    if not files:
        _err(f"warning: no .obj or .stl files in {in_dir}")
        return 0
    out_dir.mkdir(parents=True, exist_ok=True)
    failures = 0
    for path in files:
        try:
            mesh = load_mesh_file(path, category=args.category)
            mesh, validation = validate_mesh(mesh)
            normalized, record = normalize_mesh(mesh, target_x_length=args.x_length)
            save_obj(normalized, out_dir / f"{path.stem}.obj")
            sidecar = {
                "geometry_id": normalized.source_id,
                "category": normalized.category,
                "x_length": args.x_length,
                "rotation": record.rotation.tolist(),
                "translation": record.translation.tolist(),
                "scale": record.scale,
                "validation": validation.to_dict(),
            }
            (out_dir / f"{path.stem}.norm.json").write_text(json.dumps(sidecar, indent=2) + "\n")
            _emit({"file": path.name, "status": "ok", **validation.to_dict()})
        except (GeowalkError, ValueError, OSError) as exc:
            failures += 1
            _err(f"failed to normalize {path.name}: {exc}")
            _emit({"file": path.name, "status": "error", "error": str(exc)})
    _err(f"normalized {len(files) - failures}/{len(files)} meshes into {out_dir}")
    return 1 if failures else 0


def _load_catalog(in_dir: Path) -> list[CatalogEntry]:
    entries = []
    for path in _mesh_files(in_dir):
        geometry_id = path.stem
        category = "other"
        sidecar = path.with_suffix(".norm.json")
        if sidecar.is_file():
            meta = json.loads(sidecar.read_text())
            geometry_id = meta.get("geometry_id", geometry_id)
            category = meta.get("category", category)
        if category not in CATEGORIES:
            category = "other"
        entries.append(CatalogEntry(geometry_id=geometry_id, category=category, path=path))
    return entries


def _parse_bbox(text: str) -> tuple[np.ndarray, np.ndarray]:
    parts = [float(v) for v in text.split(",")]
    if len(parts) != 6:
        raise ValueError("bbox needs 6 comma-separated numbers: x0,x1,y0,y1,z0,z1")
    lo = np.array([parts[0], parts[2], parts[4]])
    hi = np.array([parts[1], parts[3], parts[5]])
    return lo, hi


def cmd_generate(args: argparse.Namespace) -> int:
    in_dir = Path(args.in_dir)
    out_dir = Path(args.out_dir)
    if not in_dir.is_dir():
        _err(f"input directory does not exist: {in_dir}")
        return 1
    catalog = _load_catalog(in_dir)
    if not catalog:
        _err(f"no meshes found in {in_dir}")
        return 1
    bbox_min = bbox_max = None
    if args.bbox:
        try:
            bbox_min, bbox_max = _parse_bbox(args.bbox)
        except ValueError as exc:
            _err(f"bad --bbox: {exc}")
            return 2
    config = SamplerConfig(
        bbox_min=bbox_min,
        bbox_max=bbox_max,
        n_volume=args.n_volume,
        n_surface=args.n_surface,
        v_max=args.v_max,
        tau=args.tau,
        n_dyn=args.n_dyn,
    )
    seed = _resolve_seed(args.seed)
    workers = _resolve_workers(args.workers)
    plan = SeedPlan(seed)
    writer = DatasetWriter(out_dir)
    mode = _MODE_FLAGS[args.mode]
    feature_kind = _FEATURE_FLAGS[args.feature]

    _err(
        f"generating: {len(catalog)} geometries x {config.n_dyn} dynamics, "
        f"{config.n_points} points, tau={config.tau}, workers={workers}"
    )
    started = time.perf_counter()
    summary = generate_dataset(
        catalog, config, plan, writer,
        feature_kind=feature_kind, mode=mode, workers=workers,
    )
    elapsed = time.perf_counter() - started

    manifest = Manifest(
        dataset=args.dataset_name,
        master_seed=seed,
        config={
            "n_volume": config.n_volume,
            "n_surface": config.n_surface,
            "tau": config.tau,
            "v_max": config.v_max,
            "n_dyn": config.n_dyn,
            "mode": mode,
            "feature_kind": feature_kind,
            "bbox": None if bbox_min is None else [bbox_min.tolist(), bbox_max.tolist()],
        },
        category_counts=summary.per_category,
        total_samples=summary.total_samples,
        skipped=summary.skipped,
        shards=writer.infos,
    )
    write_manifest(manifest, out_dir / MANIFEST_NAME)

    points_done = summary.total_samples * config.n_points
    rate = points_done / elapsed if elapsed > 0 else float("inf")
    _err(
        f"wrote {summary.total_samples} samples ({points_done} points) in {elapsed:.2f}s "
        f"-> {rate:,.0f} points/sec; skipped {len(summary.skipped)} geometries"
    )
    _emit({"elapsed_sec": elapsed, "points_per_sec": rate, **summary.to_dict()})
    if summary.total_samples == 0:
        return 1
    return 0


def cmd_verify(args: argparse.Namespace) -> int:
    root = Path(args.data_dir)
    manifest_path = root / MANIFEST_NAME
    if not manifest_path.is_file():
        _err(f"missing manifest: {manifest_path}")
        return 1
    manifest = read_manifest(manifest_path)
    failures = 0
    rows = []
    for info in manifest.shards:
        path = root / info.path
        status = "PASS"
        reason = ""
        if not path.is_file():
            status, reason = "FAIL", "missing shard file"
        else:
            try:
                actual = file_checksum(path)
                if actual != info.checksum:
                    raise ShardError("file checksum mismatch against manifest")
                n_bytes = path.stat().st_size
                if n_bytes != info.n_bytes:
                    raise ShardError(
                        f"file is {n_bytes} bytes, manifest says {info.n_bytes}"
                    )
                record = read_shard_file(path)
                audit = audit_record(record)
                if not audit.passed:
                    raise ShardError("; ".join(audit.failures))
            except GeowalkError as exc:
                status, reason = "FAIL", str(exc)
        if status == "FAIL":
            failures += 1
        rows.append((info.path, status, reason))
        _emit({"shard": info.path, "status": status, "reason": reason})
    if manifest.total_samples != len(manifest.shards):
        failures += 1
        _err(
            f"manifest total {manifest.total_samples} != shard count {len(manifest.shards)}"
        )
    width = max((len(r[0]) for r in rows), default=10)
    _err(f"{'shard':<{width}}  result")
    for path, status, reason in rows:
        suffix = f"  {reason}" if reason else ""
        _err(f"{path:<{width}}  {status}{suffix}")
    _emit({"shards": len(rows), "failed": failures})
    _err(f"verified {len(rows)} shards: {len(rows) - failures} passed, {failures} failed")
    return 1 if failures else 0


def _load_points_file(path: Path) -> np.ndarray:
    if path.suffix.lower() == ".obj":
        mesh_points = []
        for lineno, line in enumerate(path.read_text().splitlines(), start=1):
            parts = line.split()
            if parts and parts[0] == "v":
                if len(parts) < 4:
                    raise ValueError(f"line {lineno}: vertex record needs 3 coordinates")
                mesh_points.append([float(parts[1]), float(parts[2]), float(parts[3])])
        return np.asarray(mesh_points, dtype=np.float64).reshape(-1, 3)
    return np.loadtxt(path, dtype=np.float64).reshape(-1, 3)


def _parse_condition_spec(text: str):
    fields: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        fields[key.strip()] = value.strip()
    kind = fields.pop("type", None)
    if kind is None:
        raise ValueError("missing field 'type' (aero, hydro, or crash)")
    regime = fields.pop("regime", None)

    def num(name: str, default: float | None = None) -> float:
        if name not in fields:
            if default is not None:
                return default
            raise ValueError(f"missing field {name!r}")
        try:
            return float(fields.pop(name))
        except ValueError:
            raise ValueError(f"field {name!r} is not a number") from None

    if kind == "aero":
        spec = conditions.AeroSpec(
            speed_norm=num("speed_norm"),
            aoa_deg=num("aoa_deg", 0.0),
            sideslip_deg=num("sideslip_deg", 0.0),
        )
    elif kind == "hydro":
        spec = conditions.HydroSpec(
            water_norm=num("water_norm"),
            air_norm=num("air_norm"),
            interface_height=num("interface_height"),
            yaw_deg=num("yaw_deg", 0.0),
        )
    elif kind == "crash":
        spec = conditions.CrashSpec(
            impact_point=(num("impact_x"), num("impact_y"), num("impact_z")),
            impact_angle_deg=num("impact_angle_deg"),
            max_norm=num("max_norm"),
            decay_radius=num("decay_radius", conditions.DEFAULT_DECAY_RADIUS),
        )
    else:
        raise ValueError(f"unknown condition type {kind!r}")
    if fields:
        raise ValueError(f"unknown field {sorted(fields)[0]!r}")
    return spec, regime


def cmd_condition(args: argparse.Namespace) -> int:
    spec_path = Path(args.spec)
    points_path = Path(args.points)
    try:
        spec, regime = _parse_condition_spec(spec_path.read_text())
    except (OSError, ValueError) as exc:
        _err(f"bad condition spec: {exc}")
        return 1
    try:
        points = _load_points_file(points_path)
    except (OSError, ValueError) as exc:
        _err(f"bad points file: {exc}")
        return 1
    if isinstance(spec, conditions.AeroSpec):
        condition = conditions.build_aero(spec, points)
    elif isinstance(spec, conditions.HydroSpec):
        condition = conditions.build_hydro(spec, points)
    else:
        condition = conditions.build_crash(spec, points)
    block = np.ascontiguousarray(condition.velocities.astype("<f4")).tobytes()
    Path(args.out).write_bytes(block)
    regime = regime or args.regime
    payload = {
        "points": condition.n_points,
        "out": str(args.out),
        "provenance": condition.provenance,
    }
    if regime:
        lo, hi = conditions.recommend_norm(regime)
        payload["recommended_norm_range"] = [lo, hi]
        _err(f"recommended velocity norm range for {regime}: [{lo}, {hi}]")
    _emit(payload)
    return 0


def cmd_stats(args: argparse.Namespace) -> int:
    root = Path(args.data_dir)
    manifest_path = root / MANIFEST_NAME
    if not manifest_path.is_file():
        _err(f"missing manifest: {manifest_path}")
        return 1
    manifest = read_manifest(manifest_path)
    stats = report.collect_stats(root, manifest)
    if stats.n_shards != manifest.total_samples:
        _err(
            f"warning: manifest total {manifest.total_samples} != shards read {stats.n_shards}"
        )
    _emit(stats.to_dict())
    if stats.stuck_fraction is not None:
        fractions = ", ".join(f"{v:.4f}" for v in stats.stuck_fraction)
        _err(f"stuck fraction by step: {fractions}")
    _err(
        f"{stats.n_shards} shards, {stats.n_points_total} points, "
        f"categories: {stats.per_category}"
    )
    if args.report_dir:
        out = Path(args.report_dir)
        out.mkdir(parents=True, exist_ok=True)
        report.write_stats_csv(stats, out / "stats.csv")
        figures = report.render_figures(stats, out)
        _err(f"report written to {out}: stats.csv + {len(figures)} figures")
    if args.dump_points:
        records = [read_shard_file(root / info.path) for info in manifest.shards]
        n = report.dump_point_cloud_obj(records, args.dump_points)
        _err(f"dumped {n} points to {args.dump_points}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="geowalk",
        description="Sticking-boundary transport dataset generator over triangle meshes",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_norm = sub.add_parser("normalize", help="validate and canonically normalize meshes")
    p_norm.add_argument("--in", dest="in_dir", required=True, help="directory of raw .obj/.stl meshes")
    p_norm.add_argument("--out", dest="out_dir", required=True, help="output directory")
    p_norm.add_argument("--x-length", type=float, default=DEFAULT_X_LENGTH)
    p_norm.add_argument("--category", choices=CATEGORIES, default="other")
    p_norm.set_defaults(func=cmd_normalize)

    p_gen = sub.add_parser("generate", help="generate supervision shards from normalized meshes")
    p_gen.add_argument("--in", dest="in_dir", required=True, help="directory of normalized meshes")
    p_gen.add_argument("--out", dest="out_dir", required=True, help="dataset output directory")
    p_gen.add_argument("--n-volume", type=int, default=DEFAULT_N_VOLUME)
    p_gen.add_argument("--n-surface", type=int, default=DEFAULT_N_SURFACE)
    p_gen.add_argument("--tau", type=int, default=DEFAULT_TAU)
    p_gen.add_argument("--v-max", type=float, default=DEFAULT_V_MAX)
    p_gen.add_argument("--n-dyn", type=int, default=DEFAULT_N_DYN)
    p_gen.add_argument("--seed", type=int, default=None, help=f"master seed (or {SEED_ENV})")
    p_gen.add_argument("--workers", type=int, default=None, help=f"worker threads (or {WORKERS_ENV})")
    p_gen.add_argument("--mode", choices=sorted(_MODE_FLAGS), default="clamped")
    p_gen.add_argument("--feature", choices=sorted(_FEATURE_FLAGS), default="vecdist")
    p_gen.add_argument("--bbox", default=None, help="x0,x1,y0,y1,z0,z1 sampling box override")
    p_gen.add_argument("--dataset-name", default="geowalk")
    p_gen.set_defaults(func=cmd_generate)

    p_ver = sub.add_parser("verify", help="checksum shards and run conservation audits")
    p_ver.add_argument("--data", dest="data_dir", required=True)
    p_ver.set_defaults(func=cmd_verify)

    p_cond = sub.add_parser("condition", help="build a task velocity block from a spec file")
    p_cond.add_argument("--spec", required=True, help="key=value spec file")
    p_cond.add_argument("--points", required=True, help=".obj or whitespace xyz point file")
    p_cond.add_argument("--out", required=True, help="output raw float32 velocity block")
    p_cond.add_argument("--regime", choices=sorted(conditions.NORM_RANGES), default=None)
    p_cond.set_defaults(func=cmd_condition)

    p_stats = sub.add_parser("stats", help="summarize a generated dataset")
    p_stats.add_argument("--data", dest="data_dir", required=True)
    p_stats.add_argument("--report-dir", default=None, help="write stats.csv and figures here")
    p_stats.add_argument("--dump-points", default=None, help="write positions as OBJ point records")
    p_stats.set_defaults(func=cmd_stats)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except GeowalkError as exc:
        _err(f"error: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
