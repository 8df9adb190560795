"""Sticking-boundary particle transport and trajectory-supervision assembly.

Particles fly with constant per-particle velocity, one unit of time per
step, and halt permanently at the geometry boundary. Each step first
evaluates the geometric feature at the current positions, then advances;
the trailing advance after the final evaluation is skipped.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import GeowalkError
from .mesh import TriangleMesh, load_mesh_file
from .sampling import (
    SamplerConfig,
    SeedPlan,
    category_balanced_order,
    quantize_velocities,
    sample_exterior_points,
    sample_surface_points,
    sample_velocities,
)
from .spatial import SpatialIndex, build_index

log = logging.getLogger(__name__)

FEATURE_CHANNELS = {"vector_distance": 3, "sdf": 1}
STICKING_MODES = ("ray_clamped", "literal")

#: Direction convention of the stored vector-distance feature.
VECTOR_CONVENTION = "query_to_surface"

#: stuck_step value for particles that never reach the boundary.
NEVER_STUCK = -1


@dataclass(frozen=True)
class TrackingEnsemble:
    """Particle state at step t: positions, constant velocities, stuck steps.

    stuck_step[i] is the step index at which particle i halted, or
    NEVER_STUCK. Velocities never change; a stuck particle's position is
    frozen at every later step.
    """

    positions: np.ndarray
    velocities: np.ndarray
    stuck_step: np.ndarray
    t: int = 0

    def __post_init__(self):
        p = np.ascontiguousarray(np.asarray(self.positions, dtype=np.float64))
        v = np.ascontiguousarray(np.asarray(self.velocities, dtype=np.float64))
        s = np.ascontiguousarray(np.asarray(self.stuck_step, dtype=np.int64))
        if p.ndim != 2 or p.shape[1] != 3 or v.shape != p.shape or s.shape != (len(p),):
            raise ValueError("positions (N,3), velocities (N,3), stuck_step (N,) required")
        for arr in (p, v, s):
            arr.flags.writeable = False
        object.__setattr__(self, "positions", p)
        object.__setattr__(self, "velocities", v)
        object.__setattr__(self, "stuck_step", s)

    @classmethod
    def fresh(cls, positions, velocities, stuck_step=None) -> "TrackingEnsemble":
        positions = np.asarray(positions, dtype=np.float64)
        if stuck_step is None:
            stuck_step = np.full(len(positions), NEVER_STUCK, dtype=np.int64)
        return cls(positions, velocities, stuck_step, t=0)

    @property
    def n_particles(self) -> int:
        return len(self.positions)


def evolve_step(
    index: SpatialIndex | None, ensemble: TrackingEnsemble, mode: str = "ray_clamped"
) -> TrackingEnsemble:
    """Advance every non-stuck particle by one step.

    index=None means free flight (no geometry anywhere). In literal mode a
    particle found inside or on the boundary freezes at its current step;
    in ray_clamped mode the step ray is cast and a hit sticks the particle
    just outside the surface at the arrival step.
    """
    if mode not in STICKING_MODES:
        raise ValueError(f"unknown sticking mode {mode!r}")
    pos = ensemble.positions.copy()
    stuck = ensemble.stuck_step.copy()
    vel = ensemble.velocities
    active = np.flatnonzero(stuck == NEVER_STUCK)

    if index is None or len(active) == 0:
        pos[active] += vel[active]
        return TrackingEnsemble(pos, vel, stuck, t=ensemble.t + 1)

    if mode == "literal":
        inside = index.contains_batch(pos[active])
        frozen = active[inside]
        moving = active[~inside]
        stuck[frozen] = ensemble.t
        pos[moving] += vel[moving]
    else:
        speeds = np.linalg.norm(vel[active], axis=1)
        movers = active[speeds > 0.0]
        speeds = speeds[speeds > 0.0]
        if len(movers):
            dirs = vel[movers] / speeds[:, None]
            t_hit, tri = index.ray_first_hit_batch(pos[movers], dirs, speeds)
            hit = tri >= 0
            landed = movers[hit]
            back = np.maximum(t_hit[hit] - index.surf_eps, 0.0)
            pos[landed] += back[:, None] * dirs[hit]
            stuck[landed] = ensemble.t + 1
            free = movers[~hit]
            pos[free] += vel[free]
    return TrackingEnsemble(pos, vel, stuck, t=ensemble.t + 1)


def _evaluate_feature(index: SpatialIndex, positions: np.ndarray, feature_kind: str) -> np.ndarray:
    if feature_kind == "vector_distance":
        return index.vector_distance_batch(positions)
    if feature_kind == "sdf":
        return index.signed_distance_batch(positions)[:, None]
    raise ValueError(f"unknown feature kind {feature_kind!r}")


def generate_trajectory(
    index: SpatialIndex,
    positions: np.ndarray,
    velocities: np.ndarray,
    tau: int,
    feature_kind: str = "vector_distance",
    mode: str = "ray_clamped",
    initial_stuck: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Feature trajectories over tau evolution steps.

    Returns (features (N, tau+1, C) float64, stuck_step (N,) int64). The
    feature is evaluated before each advance; tau=0 yields the static field.
    """
    if tau < 0:
        raise ValueError("tau must be non-negative")
    ens = TrackingEnsemble.fresh(positions, velocities, initial_stuck)
    n = ens.n_particles
    channels = FEATURE_CHANNELS[feature_kind]
    features = np.empty((n, tau + 1, channels))
    for t in range(tau + 1):
        features[:, t, :] = _evaluate_feature(index, ens.positions, feature_kind)
        if t < tau:
            ens = evolve_step(index, ens, mode)
    return features, ens.stuck_step


@dataclass(frozen=True)
class FeatureTrajectory:
    """Per-particle feature rows for steps 0..tau, (N, tau+1, C) float32."""

    features: np.ndarray
    feature_kind: str

    def __post_init__(self):
        f = np.ascontiguousarray(np.asarray(self.features, dtype=np.float32))
        if f.ndim != 3:
            raise ValueError("features must be (N, tau+1, C)")
        if self.feature_kind not in FEATURE_CHANNELS:
            raise ValueError(f"unknown feature kind {self.feature_kind!r}")
        if f.shape[2] != FEATURE_CHANNELS[self.feature_kind]:
            raise ValueError(
                f"{self.feature_kind} features need "
                f"{FEATURE_CHANNELS[self.feature_kind]} channels, got {f.shape[2]}"
            )
        f.flags.writeable = False
        object.__setattr__(self, "features", f)

    @property
    def n_steps(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class SampleRecord:
    """One (geometry, dynamics) supervision sample.

    Positions and velocities are float32 exactly as evolved (sampling
    quantizes before the walk), so every stored feature row can be
    reproduced bit-for-bit from the stored inputs.
    """

    geometry_id: str
    dynamics_index: int
    positions_0: np.ndarray
    velocities: np.ndarray
    feature_trajectory: FeatureTrajectory
    stuck_steps: np.ndarray
    tau: int
    v_max: float
    sticking_mode: str
    vector_convention: str = VECTOR_CONVENTION

    def __post_init__(self):
        p = np.ascontiguousarray(np.asarray(self.positions_0, dtype=np.float32))
        v = np.ascontiguousarray(np.asarray(self.velocities, dtype=np.float32))
        s = np.ascontiguousarray(np.asarray(self.stuck_steps, dtype=np.uint16))
        n = len(p)
        feats = self.feature_trajectory.features
        if v.shape != (n, 3) or p.shape != (n, 3) or s.shape != (n,):
            raise ValueError("record array lengths disagree")
        if feats.shape[0] != n or feats.shape[1] != self.tau + 1:
            raise ValueError("feature trajectory shape disagrees with tau or N")
        if self.sticking_mode not in STICKING_MODES:
            raise ValueError(f"unknown sticking mode {self.sticking_mode!r}")
        for arr in (p, v, s):
            arr.flags.writeable = False
        object.__setattr__(self, "positions_0", p)
        object.__setattr__(self, "velocities", v)
        object.__setattr__(self, "stuck_steps", s)

    @property
    def n_points(self) -> int:
        return len(self.positions_0)

    @property
    def feature_kind(self) -> str:
        return self.feature_trajectory.feature_kind


#: Shard encoding of "never stuck" (uint16 max).
STUCK_SENTINEL = 0xFFFF


def encode_stuck_steps(stuck: np.ndarray) -> np.ndarray:
    out = np.asarray(stuck, dtype=np.int64).copy()
    out[out == NEVER_STUCK] = STUCK_SENTINEL
    if out.max(initial=0) > STUCK_SENTINEL or out.min(initial=0) < 0:
        raise ValueError("stuck step out of uint16 range")
    return out.astype(np.uint16)


def decode_stuck_steps(stuck: np.ndarray) -> np.ndarray:
    out = np.asarray(stuck, dtype=np.int64).copy()
    out[out == STUCK_SENTINEL] = NEVER_STUCK
    return out


def generate_sample(
    mesh: TriangleMesh,
    config: SamplerConfig,
    seed_plan: SeedPlan,
    dynamics_index: int,
    feature_kind: str = "vector_distance",
    mode: str = "ray_clamped",
    index: SpatialIndex | None = None,
) -> SampleRecord:
    """Run the full per-sample pipeline: positions, velocities, trajectory.

    Positions are drawn once per geometry (shared across dynamics indices
    unless the config resamples them); velocities are drawn per dynamics
    index. Surface points start stuck unless surface_offset_eps lifts them
    off the boundary.
    """
    if dynamics_index < 0:
        raise ValueError("dynamics_index must be non-negative")
    if feature_kind not in FEATURE_CHANNELS:
        raise ValueError(f"unknown feature kind {feature_kind!r}")
    config = config.with_bbox_for(mesh)
    if index is None:
        index = build_index(mesh)
    gid = mesh.source_id
    pos_dyn = dynamics_index if config.resample_positions_per_dynamics else None

    volume = sample_exterior_points(
        index, config, seed_plan.stream(gid, "volume_positions", pos_dyn)
    )
    surface = sample_surface_points(
        mesh, config.n_surface, seed_plan.stream(gid, "surface_positions", pos_dyn)
    )
    surface = surface.astype(np.float32).astype(np.float64)
    n_surface = len(surface)
    if n_surface and config.surface_offset_eps > 0.0:
        centroid = mesh.vertices.mean(axis=0)
        outward = surface - centroid
        norms = np.linalg.norm(outward, axis=1)
        norms[norms == 0.0] = 1.0
        surface = surface + config.surface_offset_eps * outward / norms[:, None]
        surface = surface.astype(np.float32).astype(np.float64)
        initial_stuck = None
    else:
        initial_stuck = np.full(len(volume) + n_surface, NEVER_STUCK, dtype=np.int64)
        initial_stuck[len(volume):] = 0  # on-boundary points never move

    positions = np.concatenate([volume, surface]) if n_surface else volume
    n_points = len(positions)

    vel64 = sample_velocities(
        n_points, config.v_max, seed_plan.stream(gid, "velocities", dynamics_index)
    )
    vel32 = quantize_velocities(vel64, config.v_max)

    features, stuck = generate_trajectory(
        index,
        positions,
        vel32.astype(np.float64),
        config.tau,
        feature_kind=feature_kind,
        mode=mode,
        initial_stuck=initial_stuck,
    )
    return SampleRecord(
        geometry_id=gid,
        dynamics_index=dynamics_index,
        positions_0=positions.astype(np.float32),
        velocities=vel32,
        feature_trajectory=FeatureTrajectory(features.astype(np.float32), feature_kind),
        stuck_steps=encode_stuck_steps(stuck),
        tau=config.tau,
        v_max=config.v_max,
        sticking_mode=mode,
    )


@dataclass(frozen=True)
class CatalogEntry:
    geometry_id: str
    category: str = "other"
    path: Path | None = None
    mesh: TriangleMesh | None = None

    def load(self) -> TriangleMesh:
        if self.mesh is not None:
            return self.mesh
        if self.path is None:
            raise GeowalkError(f"catalog entry {self.geometry_id!r} has no mesh or path")
        return load_mesh_file(self.path, source_id=self.geometry_id, category=self.category)


@dataclass
class DatasetSummary:
    total_samples: int = 0
    per_category: dict = field(default_factory=dict)
    skipped: list = field(default_factory=list)
    n_geometries: int = 0

    def to_dict(self) -> dict:
        return {
            "total_samples": self.total_samples,
            "per_category": dict(self.per_category),
            "n_geometries": self.n_geometries,
            "skipped": list(self.skipped),
        }


def generate_dataset(
    catalog: Sequence[CatalogEntry],
    config: SamplerConfig,
    seed_plan: SeedPlan,
    sink: Callable[[SampleRecord], object],
    feature_kind: str = "vector_distance",
    mode: str = "ray_clamped",
    workers: int = 1,
) -> DatasetSummary:
    """Emit n_dyn samples per catalog geometry through the sink.

    Geometries run in category-balanced order; per-geometry failures are
    logged, skipped, and counted. The sink is called from worker threads for
    distinct records only, never twice for the same (geometry, dynamics).
    """
    if not catalog:
        raise ValueError("catalog is empty")
    if workers < 1:
        raise ValueError("workers must be >= 1")
    by_id = {entry.geometry_id: entry for entry in catalog}
    if len(by_id) != len(catalog):
        raise ValueError("catalog contains duplicate geometry ids")
    order = category_balanced_order(
        [(e.geometry_id, e.category) for e in catalog], epoch_seed=seed_plan.master_seed
    )

    def run_geometry(geometry_id: str):
        entry = by_id[geometry_id]
        try:
            mesh = entry.load()
            cfg = config.with_bbox_for(mesh)
            index = build_index(mesh)
            done = 0
            for d in range(cfg.n_dyn):
                record = generate_sample(
                    mesh, cfg, seed_plan, d, feature_kind=feature_kind, mode=mode, index=index
                )
                sink(record)
                done += 1
            return entry, done, None
        except Exception as exc:  # noqa: BLE001 - per-geometry isolation
            return entry, 0, exc

    if workers == 1:
        results = [run_geometry(gid) for gid in order]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_geometry, order))

    summary = DatasetSummary(n_geometries=len(catalog))
    for entry, done, exc in results:
        if exc is not None:
            log.warning("skipping geometry %s: %s", entry.geometry_id, exc)
            summary.skipped.append({"geometry_id": entry.geometry_id, "error": str(exc)})
            continue
        summary.total_samples += done
        summary.per_category[entry.category] = summary.per_category.get(entry.category, 0) + done
    return summary
