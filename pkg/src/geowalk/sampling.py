"""Deterministic, seeded sampling: volume points, surface points, velocity
balls, interior rejection, and category-balanced geometry ordering.

Every random draw comes from a substream derived by SeedPlan, so a given
(master seed, geometry id, dynamics index) always reproduces the same bits
regardless of worker count or host.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import EmptyMeshError, SamplingQuotaError
from .mesh import TriangleMesh
from .spatial import SpatialIndex

#: Per-category volume sampling boxes (normalized coordinates, x-length 5).
CATEGORY_BBOXES = {
    "car": ((-3.0, -1.5, 0.0), (4.2, 1.5, 2.5)),
    "airplane": ((-3.0, -2.8, 0.0), (4.5, 2.8, 2.5)),
    "watercraft": ((-4.0, -1.5, -1.0), (5.0, 1.5, 1.0)),
}

#: Axis inflation applied to a mesh bbox when no category box exists.
BBOX_INFLATION = 0.5

DEFAULT_N_VOLUME = 32768
DEFAULT_N_SURFACE = 4096
DEFAULT_V_MAX = 2.0
DEFAULT_TAU = 2
DEFAULT_N_DYN = 100

_MAX_REJECTION_ROUNDS = 100
_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class SamplerConfig:
    """Sampling configuration for one generation run.

    bbox_min/bbox_max may be left unset; resolve_bbox() then picks the
    category default or the inflated mesh bbox per geometry.
    """

    bbox_min: np.ndarray | None = None
    bbox_max: np.ndarray | None = None
    n_volume: int = DEFAULT_N_VOLUME
    n_surface: int = DEFAULT_N_SURFACE
    v_max: float = DEFAULT_V_MAX
    tau: int = DEFAULT_TAU
    n_dyn: int = DEFAULT_N_DYN
    surface_offset_eps: float = 0.0
    resample_positions_per_dynamics: bool = False

    def __post_init__(self):
        if (self.bbox_min is None) != (self.bbox_max is None):
            raise ValueError("bbox_min and bbox_max must be set together")
        if self.bbox_min is not None:
            lo = np.asarray(self.bbox_min, dtype=np.float64).reshape(3)
            hi = np.asarray(self.bbox_max, dtype=np.float64).reshape(3)
            if not (lo < hi).all():
                raise ValueError("bbox_min must be strictly below bbox_max componentwise")
            lo.flags.writeable = False
            hi.flags.writeable = False
            object.__setattr__(self, "bbox_min", lo)
            object.__setattr__(self, "bbox_max", hi)
        if self.n_volume < 0 or self.n_surface < 0:
            raise ValueError("point counts must be non-negative")
        if self.v_max <= 0:
            raise ValueError("v_max must be positive")
        if self.tau < 0:
            raise ValueError("tau must be non-negative")
        if self.n_dyn < 1:
            raise ValueError("n_dyn must be at least 1")
        if self.surface_offset_eps < 0:
            raise ValueError("surface_offset_eps must be non-negative")

    @property
    def n_points(self) -> int:
        return self.n_volume + self.n_surface

    def with_bbox_for(self, mesh: TriangleMesh) -> "SamplerConfig":
        """Return a copy with bbox resolved for the given mesh if unset."""
        if self.bbox_min is not None:
            return self
        lo, hi = resolve_bbox(mesh.category, mesh)
        return dataclasses.replace(self, bbox_min=lo, bbox_max=hi)


def resolve_bbox(category: str, mesh: TriangleMesh | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Category default box, or the mesh bbox inflated per axis (z floor kept)."""
    if category in CATEGORY_BBOXES:
        lo, hi = CATEGORY_BBOXES[category]
        return np.array(lo), np.array(hi)
    if mesh is None:
        raise ValueError(f"no default bbox for category {category!r} and no mesh given")
    lo, hi = mesh.bbox
    center = (lo + hi) / 2.0
    half = (hi - lo) / 2.0 * (1.0 + BBOX_INFLATION)
    out_lo = center - half
    out_hi = center + half
    out_lo[2] = min(lo[2], 0.0)
    out_hi[2] = hi[2] + (hi[2] - lo[2]) * BBOX_INFLATION
    if not (out_lo < out_hi).all():
        raise ValueError("mesh bbox is degenerate; cannot derive a sampling box")
    return out_lo, out_hi


def _hash_words(text: str) -> tuple[int, int]:
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return (
        int.from_bytes(digest[:8], "little"),
        int.from_bytes(digest[8:16], "little"),
    )


@dataclass(frozen=True)
class SeedPlan:
    """Counter-based derivation of independent substreams from one master seed.

    Streams are keyed by (geometry id, stream tag[, dynamics index]); distinct
    keys map to distinct SeedSequence entropy, so substreams never collide.
    """

    master_seed: int

    def stream(
        self, geometry_id: str, tag: str, dynamics_index: int | None = None
    ) -> np.random.Generator:
        entropy = [
            self.master_seed & _MASK64,
            *_hash_words(tag),
            *_hash_words(geometry_id),
        ]
        if dynamics_index is not None:
            if dynamics_index < 0:
                raise ValueError("dynamics_index must be non-negative")
            entropy.append(int(dynamics_index))
        return np.random.default_rng(np.random.SeedSequence(entropy))


def sample_volume_points(config: SamplerConfig, stream: np.random.Generator) -> np.ndarray:
    """n_volume points i.i.d. uniform in the config box, (N, 3) float64."""
    if config.bbox_min is None:
        raise ValueError("config bbox is unresolved; call with_bbox_for() first")
    return stream.uniform(config.bbox_min, config.bbox_max, size=(config.n_volume, 3))


def sample_surface_points(mesh: TriangleMesh, n: int, stream: np.random.Generator) -> np.ndarray:
    """Area-weighted triangle choice, barycentric-uniform within each triangle."""
    if mesh.n_triangles == 0:
        raise EmptyMeshError("cannot sample the surface of an empty mesh")
    if n == 0:
        return np.zeros((0, 3))
    areas = mesh.triangle_areas()
    total = areas.sum()
    if total <= 0:
        raise EmptyMeshError("mesh surface area is zero")
    tri = stream.choice(mesh.n_triangles, size=n, p=areas / total)
    u = stream.random(n)
    v = stream.random(n)
    over = u + v > 1.0
    u[over] = 1.0 - u[over]
    v[over] = 1.0 - v[over]
    a, b, c = mesh.triangle_corners()
    return a[tri] + u[:, None] * (b[tri] - a[tri]) + v[:, None] * (c[tri] - a[tri])


def reject_interior(index: SpatialIndex, points: np.ndarray) -> np.ndarray:
    """Keep only points with contains() false, preserving order."""
    points = np.asarray(points, dtype=np.float64)
    if len(points) == 0:
        return points.reshape(0, 3)
    return points[~index.contains_batch(points)]


def sample_exterior_points(
    index: SpatialIndex, config: SamplerConfig, stream: np.random.Generator
) -> np.ndarray:
    """Exactly n_volume exterior points: uniform draws with interior rejection,
    resampled in rounds until the quota is met.

    Draws are quantized to float32 before the rejection test so the retained
    coordinates are exactly what dataset shards later store.
    """
    quota = config.n_volume
    kept: list[np.ndarray] = []
    have = 0
    for _ in range(_MAX_REJECTION_ROUNDS):
        if have >= quota:
            break
        batch_cfg = dataclasses.replace(config, n_volume=quota - have)
        batch = sample_volume_points(batch_cfg, stream)
        batch = batch.astype(np.float32).astype(np.float64)
        survivors = reject_interior(index, batch)
        if len(survivors):
            kept.append(survivors)
            have += len(survivors)
    if have < quota:
        raise SamplingQuotaError(
            f"interior rejection kept {have}/{quota} points after "
            f"{_MAX_REJECTION_ROUNDS} rounds; the geometry may fill its sampling box"
        )
    if not kept:
        return np.zeros((0, 3))
    return np.concatenate(kept)[:quota]


def sample_velocities(n: int, v_max: float, stream: np.random.Generator) -> np.ndarray:
    """n i.i.d. vectors uniform by volume in the closed ball of radius v_max.

    Rejection-free: Gaussian direction times v_max * U^(1/3) radius. Norms are
    clamped so the v_max bound holds exactly despite rounding.
    """
    if v_max <= 0:
        raise ValueError("v_max must be positive")
    if n == 0:
        return np.zeros((0, 3))
    g = stream.standard_normal((n, 3))
    norms = np.linalg.norm(g, axis=1)
    zero = norms == 0.0
    if zero.any():
        g[zero] = (1.0, 0.0, 0.0)
        norms[zero] = 1.0
    radius = v_max * np.cbrt(stream.random(n))
    v = g * (radius / norms)[:, None]
    return _clamp_norms(v, v_max)


def _clamp_norms(v: np.ndarray, v_max: float) -> np.ndarray:
    norms = np.linalg.norm(v, axis=1)
    over = norms > v_max
    while over.any():
        v[over] *= (v_max / norms[over])[:, None] * (1.0 - 1e-12)
        norms[over] = np.linalg.norm(v[over], axis=1)
        over = norms > v_max
    return v


def quantize_velocities(v: np.ndarray, v_max: float) -> np.ndarray:
    """Round to float32 while keeping the promoted float64 norm within v_max."""
    v32 = np.asarray(v, dtype=np.float64).astype(np.float32)
    norms = np.linalg.norm(v32.astype(np.float64), axis=1)
    over = norms > v_max
    while over.any():
        scaled = v32[over].astype(np.float64) * ((v_max / norms[over]) * (1.0 - 1e-7))[:, None]
        v32[over] = scaled.astype(np.float32)
        norms[over] = np.linalg.norm(v32[over].astype(np.float64), axis=1)
        over = norms > v_max
    return v32


def category_balanced_order(
    catalog: Sequence[tuple[str, str]], epoch_seed: int
) -> list[str]:
    """Deterministic permutation of geometry ids interleaving categories.

    Round-robin over per-category shuffled queues; a category drops out of
    the cycle once its queue is exhausted, so while k categories remain
    active every window of k consecutive ids covers each of them once.
    """
    if not catalog:
        raise ValueError("catalog is empty")
    by_category: dict[str, list[str]] = {}
    for geometry_id, category in catalog:
        by_category.setdefault(category, []).append(geometry_id)
    rng = np.random.default_rng(
        np.random.SeedSequence([int(epoch_seed) & _MASK64, *_hash_words("category_order")])
    )
    queues = []
    for category in sorted(by_category):
        ids = by_category[category]
        perm = rng.permutation(len(ids))
        queues.append([ids[i] for i in perm])
    out: list[str] = []
    cursor = 0
    while queues:
        cursor %= len(queues)
        queue = queues[cursor]
        out.append(queue.pop(0))
        if queue:
            cursor += 1
        else:
            queues.pop(cursor)
    return out
